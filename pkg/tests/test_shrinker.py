import numpy as np
import numpy.testing as npt
import pytest
import scipy.integrate

import fracshrink.shrinker
from fracshrink.curvature import ball_curvature_constant
from fracshrink.errors import ConvergenceError, ParameterError
from fracshrink.kernel import KernelParams, RadialSet
from fracshrink.shrinker import (ShrinkerSolution, annulus_defect, ball_shrinker, cylinder_shrinker, fiber_factor,
                                 find_annulus_shrinker, find_shrinker, limit_study, natural_scale,
                                 normalized_defects, residual_jacobian, residual_system)
from fracshrink.stability import finite_difference_jacobian

GRID = [(n, s) for n in (1, 2, 3) for s in (0.25, 0.5, 0.75)]


@pytest.fixture(scope="module")
def stationary_annulus():
    return find_annulus_shrinker(KernelParams(2, 0.5))


def sign_changes(values):
    return int(np.count_nonzero(np.diff(np.sign(values)) != 0))


def test_annulus_shrinker(stationary_annulus):
    sol = stationary_annulus
    assert isinstance(sol, ShrinkerSolution)
    assert sol.residual_norm <= 1e-8
    assert np.max(np.abs(residual_system(sol.params, sol.set))) <= 1e-8
    assert sol.family == "annuli-only" and sol.N == 1
    assert not sol.set.contains_origin
    assert 0 < sol.radii[0] < sol.radii[1]
    npt.assert_allclose(sol.ratios, sol.radii/sol.radii[1])
    assert sol.solver_path[0].startswith("bisection")
    npt.assert_allclose(annulus_defect(sol.params, sol.ratios[0]), 0, atol=1e-8)


def test_annulus_defect_sign():
    p = KernelParams(2, 0.5)
    assert annulus_defect(p, 1e-3) < 0
    assert annulus_defect(p, 1 - 1e-3) > 0
    assert annulus_defect(p, 0.3) < annulus_defect(p, 0.6)
    with pytest.raises(ParameterError):
        annulus_defect(p, 1.0)


@pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
def test_annulus_defect_single_sign_change_one_dimension(s):
    p = KernelParams(1, s)
    values = [annulus_defect(p, r) for r in np.linspace(0.005, 0.995, 200)]
    assert sign_changes(values) == 1
    assert values[0] < 0 < values[-1]


@pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
def test_annulus_shrinker_one_dimension(s):
    sol = find_annulus_shrinker(KernelParams(1, s))
    assert sol.residual_norm <= 1e-8


@pytest.mark.slow
@pytest.mark.parametrize("n,s", GRID)
def test_annulus_shrinker_grid(n, s):
    p = KernelParams(n, s)
    values = [annulus_defect(p, r) for r in np.linspace(0.005, 0.995, 200)]
    assert sign_changes(values) == 1
    sol = find_annulus_shrinker(p)
    assert sol.residual_norm <= 1e-8


def test_ball_shrinker():
    p = KernelParams(2, 0.5)
    sol = ball_shrinker(p)
    k = ball_curvature_constant(p)
    npt.assert_allclose(sol.radii, [k**(1/1.5)], rtol=1e-14)
    assert sol.N == 0 and sol.set.contains_origin
    assert sol.residual_norm <= 1e-8
    npt.assert_allclose(residual_system(p, sol.set), 0, atol=1e-10)


def test_residual_scaling_law():
    p = KernelParams(2, 0.5)
    radial_set = RadialSet((0.4, 1.3))
    g = residual_system(p, radial_set)
    for lam in [0.5, 2.0]:
        expected = lam**-p.s*(g - radial_set.array) + lam*radial_set.array
        npt.assert_allclose(residual_system(p, radial_set.scaled(lam)), expected, rtol=1e-8)


def test_natural_scale():
    p = KernelParams(2, 0.5)
    radial_set = RadialSet((0.4, 1.0))
    scaled = natural_scale(p, radial_set)
    lam = scaled.radii[-1]
    npt.assert_allclose(scaled.ratios(), radial_set.ratios(), rtol=1e-14)
    g = residual_system(p, scaled)
    npt.assert_allclose(g[-1], 0, atol=1e-9)
    npt.assert_allclose(g[:-1], lam**-p.s*normalized_defects(p, radial_set), rtol=1e-8)


@pytest.mark.parametrize("n,radii,contains_origin", [
    (2, (0.4, 1.3), False),
    (1, (0.3, 0.8, 1.5), True),
    (1, (0.2, 0.5, 0.9, 1.4), False),
])
def test_jacobian_off_stationary(n, radii, contains_origin):
    p = KernelParams(n, 0.5)
    radial_set = RadialSet(radii, contains_origin)
    g = residual_system(p, radial_set)
    analytic = residual_jacobian(p, radial_set, residual=g)
    numeric = finite_difference_jacobian(p, radial_set)
    npt.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-6)


def test_find_shrinker_single_annulus(stationary_annulus):
    sol = find_shrinker(stationary_annulus.params, 1)
    npt.assert_allclose(sol.radii, stationary_annulus.radii, rtol=1e-12)
    assert sol.extras == ()


def test_find_shrinker_validation():
    p = KernelParams(1, 0.5)
    for kwargs in [dict(N=0), dict(N=1.5), dict(N=1, family="rings"), dict(N=1, strategy="guess")]:
        with pytest.raises(ParameterError):
            find_shrinker(p, **kwargs)


def test_two_annuli_one_dimension():
    p = KernelParams(1, 0.5)
    sol = find_shrinker(p, 2)
    single = find_annulus_shrinker(p)
    assert sol.set.m == 4 and not sol.set.contains_origin
    assert sol.residual_norm <= 1e-8
    assert np.all(np.diff(sol.radii) > 0)
    assert any(step.startswith("rung 2") for step in sol.solver_path)
    ratio = single.ratios[0]
    assert abs(sol.radii[2]/sol.radii[3] - ratio) > 1e-4
    assert abs(sol.radii[0]/sol.radii[1] - ratio) > 1e-4


def test_ball_plus_annulus_one_dimension():
    p = KernelParams(1, 0.5)
    sol = find_shrinker(p, 1, family="ball-plus-annuli")
    assert sol.set.m == 3 and sol.set.contains_origin
    assert sol.residual_norm <= 1e-8
    assert sol.family == "ball-plus-annuli"


def test_explore_one_dimension():
    p = KernelParams(1, 0.5)
    sol = find_shrinker(p, 2, explore=True)
    assert sol.residual_norm <= 1e-8
    for extra in sol.extras:
        assert extra.m == 4
        assert np.max(np.abs(extra.ratios() - sol.ratios)) > 1e-4
        assert np.max(np.abs(residual_system(p, extra))) <= 1e-8


@pytest.mark.slow
def test_two_annuli():
    sol = find_shrinker(KernelParams(2, 0.5), 2)
    assert sol.set.m == 4
    assert sol.residual_norm <= 1e-8
    assert np.all(np.diff(sol.radii) > 0)


@pytest.mark.slow
@pytest.mark.parametrize("N", [1, 2])
def test_ball_plus_annuli(N):
    sol = find_shrinker(KernelParams(2, 0.5), N, family="ball-plus-annuli")
    assert sol.set.m == 2*N + 1
    assert sol.residual_norm <= 1e-8
    assert np.all(np.diff(sol.radii) > 0)


@pytest.mark.parametrize("n,s", [(2, 0.3), (3, 0.5), (4, 0.7)])
def test_fiber_factor(n, s):
    one, _ = scipy.integrate.quad(lambda w: (1 + w*w)**(-(n + s)/2), -np.inf, np.inf, epsabs=0, epsrel=1e-12)
    npt.assert_allclose(fiber_factor(n, n - 1, s), one, rtol=1e-10)
    a = (n + s)/2
    if n > 2:
        npt.assert_allclose(fiber_factor(n, n - 2, s), np.pi/(a - 1), rtol=1e-12)
    npt.assert_allclose(fiber_factor(n, n, s), 1.0)


def test_cylinder_one_dimensional_section():
    s = 0.5
    section = find_annulus_shrinker(KernelParams(1, s))
    for n in [2, 3]:
        sol = cylinder_shrinker(KernelParams(n, s), 1)
        assert sol.ambient_n == n
        npt.assert_allclose(sol.ratios, section.ratios, rtol=1e-12)
        npt.assert_allclose(sol.radii, section.radii*fiber_factor(n, 1, s)**(1/(1 + s)), rtol=1e-12)
        npt.assert_allclose(sol.fiber_factor, fiber_factor(n, 1, s))
    with pytest.raises(ParameterError):
        cylinder_shrinker(KernelParams(2, s), 2)
    with pytest.raises(ParameterError):
        cylinder_shrinker(KernelParams(2, s), 0)


@pytest.mark.slow
def test_cylinder_two_dimensional_section(stationary_annulus):
    a = cylinder_shrinker(KernelParams(3, 0.5), 2)
    b = cylinder_shrinker(KernelParams(4, 0.5), 2)
    npt.assert_allclose(a.ratios, stationary_annulus.ratios, rtol=1e-8)
    npt.assert_allclose(b.ratios, a.ratios, rtol=1e-8)


def test_limit_study_one_dimension():
    rows = limit_study(1, [0.3, 0.5])
    assert [row.s for row in rows] == [0.3, 0.5]
    for row in rows:
        assert not row.failed
        assert 0 < row.ratio < 1
        npt.assert_allclose(row.scaled_ball_constant, (1 - row.s)*2**(1 - row.s)/row.s, rtol=1e-10)
        npt.assert_allclose(row.scaled_defect, (1 - row.s)*annulus_defect(KernelParams(1, row.s), 0.5),
                            rtol=1e-12)


def test_limit_study_keeps_failed_rows(monkeypatch):
    original = fracshrink.shrinker.find_annulus_shrinker

    def flaky(p, q, tol):
        if p.s == 0.5:
            raise ConvergenceError("no root", best=None)
        return original(p, q, tol)

    monkeypatch.setattr(fracshrink.shrinker, "find_annulus_shrinker", flaky)
    with pytest.warns(UserWarning, match="s=0.5"):
        rows = limit_study(1, [0.3, 0.5, 0.7])
    assert [row.failed for row in rows] == [False, True, False]
    assert np.isnan(rows[1].ratio)
    assert "no root" in rows[1].error


def test_limit_study_validation():
    with pytest.raises(ParameterError):
        limit_study(2, [0.5, 0.3])
    with pytest.raises(ParameterError):
        limit_study(2, [0.5, 1.0])


@pytest.mark.slow
def test_limit_study_ratio_increases():
    rows = limit_study(2, [0.3, 0.5, 0.7, 0.9])
    ratios = [row.ratio for row in rows]
    assert not any(row.failed for row in rows)
    assert np.all(np.diff(ratios) > 0)
