import numpy as np
import numpy.testing as npt
import pytest
import scipy.special

from fracshrink.curvature import (annulus, annulus_inner_curvature_asymptotic, ball_curvature_closed_form,
                                  ball_curvature_constant, classical_limit_constant, curvature_vector,
                                  fractional_curvature, lemtech_constant)
from fracshrink.errors import DegenerateConfigurationError, ParameterError
from fracshrink.kernel import (KernelParams, RadialSet, ball_kernel_integral, complement_kernel_integral,
                               paired_shell_integral)
from fracshrink.shrinker import annulus_defect
from fracshrink.util import unit_ball_volume


def brute_force_1d(radii, contains_origin, i, s):
    """Principal value on the real line, interval by interval."""
    x = radii[i]
    edges = [-np.inf] + sorted([-r for r in radii] + list(radii)) + [np.inf]
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        if np.isinf(lo):
            mid = hi - 1
        elif np.isinf(hi):
            mid = lo + 1
        else:
            mid = (lo + hi)/2
        crossings = sum(r < abs(mid) for r in radii)
        inside = (crossings % 2 == 0) == contains_origin
        sigma = -1.0 if inside else 1.0
        if lo == x or hi == x:
            far = abs((hi if lo == x else lo) - x)
            total += -sigma*far**-s/s
        else:
            near, far = sorted([abs(lo - x), abs(hi - x)])
            total += sigma*(near**-s - far**-s)/s
    return total


def random_radial_set(rng, max_radii=5):
    m = int(rng.integers(1, max_radii + 1))
    radii = rng.uniform(0.1, 1.0) + np.concatenate(([0.0], np.cumsum(rng.uniform(0.2, 1.0, size=m - 1))))
    return RadialSet(tuple(radii), contains_origin=(m % 2 == 1))


@pytest.mark.parametrize("s", np.round(np.arange(0.1, 1.0, 0.1), 1))
def test_ball_constant_one_dimension(s):
    p = KernelParams(1, s)
    npt.assert_allclose(ball_curvature_constant(p), 2**(1 - s)/s, rtol=1e-10)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
@pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
def test_ball_constant_matches_chord_formula(n, s):
    p = KernelParams(n, s)
    npt.assert_allclose(ball_curvature_constant(p), ball_curvature_closed_form(p), rtol=1e-8)


@pytest.mark.parametrize("n", [2, 3])
@pytest.mark.parametrize("s", [0.95, 0.97, 0.99])
def test_ball_constant_near_one(n, s):
    p = KernelParams(n, s)
    npt.assert_allclose(ball_curvature_constant(p), ball_curvature_closed_form(p), rtol=1e-7)


def test_chord_formula_three_dimensions():
    for s in [0.2, 0.5, 0.8]:
        npt.assert_allclose(ball_curvature_closed_form(KernelParams(3, s)), 2**(1 - s)*2*np.pi/(s*(1 - s)),
                            rtol=1e-12)


def test_ball_constant_full_output():
    value, error = ball_curvature_constant(KernelParams(2, 0.5), full_output=True)
    assert value > 0
    assert 0 <= error < 1e-6*value


@pytest.mark.parametrize("n", [2, 3, 4, 5])
@pytest.mark.parametrize("s", [0.1, 0.5, 0.9])
def test_lemtech_constant_methods_agree(n, s):
    p = KernelParams(n, s)
    npt.assert_allclose(lemtech_constant(p, "quadrature"), lemtech_constant(p, "beta"), rtol=1e-10)


def test_lemtech_constant_values():
    gamma = scipy.special.gamma
    npt.assert_allclose(lemtech_constant(KernelParams(2, 0.5)), gamma(0.5)*gamma(0.75)/gamma(1.25), rtol=1e-12)
    npt.assert_allclose(lemtech_constant(KernelParams(2, 0.5)), 2.39628, rtol=1e-5)
    for s in [0.25, 0.5, 0.75]:
        npt.assert_allclose(lemtech_constant(KernelParams(3, s)), 2*np.pi/(1 + s), rtol=1e-12)
    with pytest.raises(ParameterError):
        lemtech_constant(KernelParams(1, 0.5))
    with pytest.raises(ParameterError):
        lemtech_constant(KernelParams(2, 0.5), method="simpson")


def test_classical_limit_constant():
    npt.assert_allclose(classical_limit_constant(2), 2.0)
    npt.assert_allclose(classical_limit_constant(3), 2*np.pi)


def test_single_ball():
    p = KernelParams(2, 0.5)
    k = ball_curvature_constant(p)
    result = fractional_curvature(p, RadialSet((2.0,), contains_origin=True), 0)
    npt.assert_allclose(result.value, k/2**0.5, rtol=1e-15)
    assert [label for label, _ in result.decomposition] == ["ball-core"]
    assert float(result) == result.value


def test_decomposition():
    p = KernelParams(2, 0.5)
    radial_set = RadialSet((0.2, 0.4, 0.7, 1.0))
    result = fractional_curvature(p, radial_set, 1)
    labels = [label for label, _ in result.decomposition]
    assert labels == ["ball-core", "ball-correction(1)", "complement-correction(3)", "complement-correction(4)"]
    npt.assert_allclose(sum(value for _, value in result.decomposition), result.value, rtol=1e-14)
    npt.assert_allclose(result.decomposition[0][1], ball_curvature_constant(p)/0.4**0.5, rtol=1e-14)
    npt.assert_allclose(result.decomposition[1][1], 2*ball_kernel_integral(p, 0.4, 0.2), rtol=1e-12)
    npt.assert_allclose(result.decomposition[2][1], -2*complement_kernel_integral(p, 0.4, 0.7), rtol=1e-12)
    assert result.error_estimate >= 0


def test_annulus_inner_sphere():
    p = KernelParams(2, 0.5)
    result = fractional_curvature(p, annulus(0.4), 0)
    assert [label for label, _ in result.decomposition] == ["ball-core", "complement-correction(2)"]
    npt.assert_allclose(result.value, -ball_curvature_constant(p)/0.4**0.5 + 2*complement_kernel_integral(p, 0.4, 1.0),
                        rtol=1e-12)


@pytest.mark.parametrize("n", [2, 3])
def test_inner_curvature_matches_shell_pairing(n):
    """At the inner sphere of B_1∖B_r, r > 1/2, pair the hole against the ring."""
    p = KernelParams(n, 0.5)
    r = 0.8
    k = ball_curvature_constant(p)
    paired = k/r**p.s + 2*paired_shell_integral(p, r, 0.0, 1 - r) + 2*ball_kernel_integral(p, r, 2*r - 1)
    npt.assert_allclose(fractional_curvature(p, annulus(r), 0).value, paired, rtol=1e-8)


def test_one_dimensional_brute_force():
    rng = np.random.default_rng(1)
    for _ in range(50):
        radial_set = random_radial_set(rng)
        s = float(rng.uniform(0.1, 0.9))
        p = KernelParams(1, s)
        values, _ = curvature_vector(p, radial_set)
        expected = [brute_force_1d(radial_set.radii, radial_set.contains_origin, i, s) for i in range(radial_set.m)]
        npt.assert_allclose(values, expected, rtol=1e-10, atol=1e-10)


def test_scale_invariance_one_dimension():
    rng = np.random.default_rng(2)
    p = KernelParams(1, 0.5)
    for _ in range(100):
        radial_set = random_radial_set(rng)
        values, _ = curvature_vector(p, radial_set)
        for lam in [0.5, 2.0, 10.0]:
            scaled, _ = curvature_vector(p, radial_set.scaled(lam))
            npt.assert_allclose(scaled, lam**-p.s*values, rtol=1e-8, atol=1e-8)


def test_scale_invariance_two_dimensions():
    rng = np.random.default_rng(3)
    p = KernelParams(2, 0.5)
    for _ in range(3):
        radial_set = random_radial_set(rng, max_radii=3)
        values, _ = curvature_vector(p, radial_set)
        for lam in [0.5, 2.0, 10.0]:
            scaled, _ = curvature_vector(p, radial_set.scaled(lam))
            npt.assert_allclose(scaled, lam**-p.s*values, rtol=1e-8, atol=1e-8)


def test_annulus_monotonicity():
    p = KernelParams(2, 0.5)
    k = ball_curvature_constant(p)
    grid = [0.2, 0.4, 0.6, 0.8]
    values = np.array([curvature_vector(p, annulus(r))[0] for r in grid])
    inner, outer = values[:, 0], values[:, 1]
    assert np.all(np.diff(outer) > 0)
    assert np.all(outer > k)
    assert np.all(np.diff(inner) > 0)


def test_inner_curvature_unbounded_below():
    p = KernelParams(2, 0.5)
    values = [fractional_curvature(p, annulus(r), 0).value for r in [0.1, 0.01, 0.001]]
    assert values[0] > values[1] > values[2]
    assert values[2] < -10*ball_curvature_constant(p)


def test_asymptotic_model():
    p = KernelParams(2, 0.5)
    k = ball_curvature_constant(p)
    npt.assert_allclose(annulus_inner_curvature_asymptotic(p, 0.5), k*2**0.5, rtol=1e-12)
    misfit = []
    for r in [0.99, 0.999]:
        exact = fractional_curvature(p, annulus(r), 0).value
        misfit.append(abs(annulus_inner_curvature_asymptotic(p, r)/exact - 1))
    assert misfit[1] < misfit[0]
    assert misfit[1] < 0.05
    with pytest.raises(ParameterError):
        annulus_inner_curvature_asymptotic(KernelParams(1, 0.5), 0.9)
    with pytest.raises(ParameterError):
        annulus_inner_curvature_asymptotic(p, 1.5)


def test_errors():
    p = KernelParams(2, 0.5)
    with pytest.raises(IndexError):
        fractional_curvature(p, annulus(0.5), 2)
    with pytest.raises(DegenerateConfigurationError):
        fractional_curvature(p, RadialSet((1.0, 1.0 + 1e-8)), 0)


@pytest.mark.slow
def test_classical_limit():
    omega = unit_ball_volume(1)
    errors_k, errors_f = [], []
    for s in [0.9, 0.99]:
        p = KernelParams(2, s)
        errors_k.append(abs((1 - s)*ball_curvature_constant(p)/omega - 1))
        errors_f.append(abs((1 - s)*annulus_defect(p, 0.5)/omega + 1.5))
    assert errors_k[1] < 0.03
    assert errors_k[1] < errors_k[0]
    assert errors_f[1] < 0.08*1.5
    assert errors_f[1] < errors_f[0]
