import numpy as np
import numpy.testing as npt
import pytest

from fracshrink import stability
from fracshrink.errors import ParameterError, StationarityError, SymmetrizationError
from fracshrink.kernel import DEFAULT_QUADRATURE, KernelParams, RadialSet
from fracshrink.shrinker import (ShrinkerSolution, ball_shrinker, cylinder_shrinker, find_annulus_shrinker,
                                 find_shrinker, residual_system)
from fracshrink.stability import (corner_derivative_check, finite_difference_jacobian, jacobian,
                                  shell_monotonicity_check, spectrum, stability_report)


@pytest.fixture(scope="module")
def stationary_annulus():
    return find_annulus_shrinker(KernelParams(2, 0.5))


@pytest.fixture(scope="module")
def line_annulus():
    return find_annulus_shrinker(KernelParams(1, 0.5))


def check_spectrum(sol):
    p = sol.params
    report = stability_report(p, sol)
    m = sol.set.m
    assert report.eigenvalues.shape == (m,)
    assert np.all(np.diff(report.eigenvalues) <= 0)
    assert report.radial_eigen_defect <= 1e-6
    assert report.symmetrization_defect <= 1e-6
    assert np.min(np.abs(report.eigenvalues - (p.s + 1))) <= 1e-6
    assert report.eigenvalues[0] > p.s + 1 + 1e-3
    assert report.morse_index >= 2
    npt.assert_allclose(np.linalg.norm(report.eigenvectors, axis=0), 1.0)
    npt.assert_allclose(np.linalg.norm(report.unstable_direction), 1.0)
    npt.assert_allclose(np.dot(report.unstable_direction, sol.radii), 0, atol=1e-12)
    off = ~np.eye(m, dtype=bool)
    signs = np.where(np.add.outer(np.arange(m), np.arange(m)) % 2 == 0, 1, -1)
    assert np.all((report.jacobian*signs)[off] > 0)
    return report


def test_annulus_spectrum(stationary_annulus):
    report = check_spectrum(stationary_annulus)
    assert report.morse_index == 2
    npt.assert_allclose(report.symmetrized, report.symmetrized.T)


def test_line_annulus_spectrum(line_annulus):
    report = check_spectrum(line_annulus)
    assert report.morse_index == 2
    npt.assert_allclose(report.jacobian, report.jacobian.T, rtol=1e-12)


@pytest.mark.parametrize("fixture", ["stationary_annulus", "line_annulus"])
def test_jacobian_matches_finite_differences(fixture, request):
    sol = request.getfixturevalue(fixture)
    analytic = jacobian(sol.params, sol)
    numeric = finite_difference_jacobian(sol.params, sol.set)
    npt.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-6)


def test_finite_differences_tighten_quadrature(line_annulus, monkeypatch):
    seen = []

    def recording(p, radial_set, q):
        seen.append(q)
        return residual_system(p, radial_set, q)

    monkeypatch.setattr(stability, "residual_system", recording)
    finite_difference_jacobian(line_annulus.params, line_annulus.set)
    assert {q.rel_tol for q in seen} == {DEFAULT_QUADRATURE.rel_tol/100}
    assert {q.abs_tol for q in seen} == {DEFAULT_QUADRATURE.abs_tol/100}
    seen.clear()
    finite_difference_jacobian(line_annulus.params, line_annulus.set, q=DEFAULT_QUADRATURE)
    assert {q.rel_tol for q in seen} == {DEFAULT_QUADRATURE.rel_tol}


def test_corner_derivative(stationary_annulus):
    corner, bound = corner_derivative_check(stationary_annulus.params, stationary_annulus)
    assert bound == 1.5
    assert corner > bound
    report = stability_report(stationary_annulus.params, stationary_annulus)
    assert report.symmetrized[-1, -1] > bound


def test_shell_monotonicity(stationary_annulus):
    check = shell_monotonicity_check(stationary_annulus.params, stationary_annulus)
    assert check.increasing and check.ordered
    assert check.worst_margin > 0
    assert bool(check)
    with pytest.raises(ParameterError):
        shell_monotonicity_check(stationary_annulus.params, stationary_annulus, grid_size=1)


def test_ball_spectrum():
    p = KernelParams(2, 0.5)
    sol = ball_shrinker(p)
    report = stability_report(p, sol)
    npt.assert_allclose(report.jacobian, [[1.5]])
    npt.assert_allclose(report.eigenvalues, [1.5])
    assert report.morse_index == 1
    assert report.unstable_direction is None
    with pytest.raises(ParameterError):
        corner_derivative_check(p, sol)


def test_non_stationary_rejected():
    p = KernelParams(2, 0.5)
    sol = ShrinkerSolution(params=p, set=RadialSet((0.4, 1.0)), residual_norm=1.0, family="annuli-only", N=1)
    with pytest.raises(StationarityError):
        jacobian(p, sol)


def test_asymmetric_matrix_rejected():
    with pytest.raises(SymmetrizationError) as info:
        spectrum([[1.0, 2.0], [0.0, 1.0]], [1.0, 2.0], KernelParams(2, 0.5))
    assert info.value.defect > 1e-6


def test_spectrum_of_symmetric_matrix():
    report = spectrum([[3.0, -1.0], [-1.0, 3.0]], [1.0, 2.0], KernelParams(1, 0.5))
    npt.assert_allclose(report.eigenvalues, [4.0, 2.0])
    assert report.morse_index == 2


@pytest.mark.slow
def test_two_annuli_spectrum():
    sol = find_shrinker(KernelParams(2, 0.5), 2)
    check_spectrum(sol)
    numeric = finite_difference_jacobian(sol.params, sol.set)
    npt.assert_allclose(jacobian(sol.params, sol), numeric, rtol=1e-4, atol=1e-6)
    corner, bound = corner_derivative_check(sol.params, sol)
    assert corner > bound
    assert shell_monotonicity_check(sol.params, sol)


def test_two_annuli_spectrum_one_dimension():
    sol = find_shrinker(KernelParams(1, 0.5), 2)
    check_spectrum(sol)
    numeric = finite_difference_jacobian(sol.params, sol.set)
    npt.assert_allclose(jacobian(sol.params, sol), numeric, rtol=1e-4, atol=1e-6)


def test_cylinder_spectrum_is_section_spectrum(line_annulus):
    cylinder = cylinder_shrinker(KernelParams(2, 0.5), 1)
    assert np.max(np.abs(cylinder.residual())) <= cylinder.scale*cylinder.tol
    npt.assert_allclose(cylinder.residual(), cylinder.scale*line_annulus.residual(), atol=1e-12)
    report = stability_report(cylinder.params, cylinder)
    section = stability_report(line_annulus.params, line_annulus)
    npt.assert_allclose(report.eigenvalues, section.eigenvalues, rtol=1e-8)
    assert report.morse_index == 2
