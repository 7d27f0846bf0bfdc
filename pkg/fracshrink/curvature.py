"""Fractional mean curvature of radial sets at their boundary spheres."""
import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.integrate
import scipy.special

from .errors import ParameterError, ToleranceError
from .kernel import (DEFAULT_QUADRATURE, RadialSet, ball_kernel_integral,
                     complement_kernel_integral, paired_shell_integral)
from .util import DEGENERACY_GAP, parallel_map, unit_ball_volume

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CurvatureValue:
    """H_s at one boundary sphere, with its error estimate and the terms it was assembled from.

    `decomposition` is a tuple of (label, contribution) pairs whose sum is `value`.
    """
    value: float
    error_estimate: float
    decomposition: tuple = field(default=())

    def __float__(self):
        return float(self.value)


@lru_cache(maxsize=None)
def _ball_constant(p, q):
    c = q.pairing_cutoff
    paired, e1 = paired_shell_integral(p, 1.0, 0.0, c, q, full_output=True)
    inner, e2 = ball_kernel_integral(p, 1.0, 1.0 - c, q, full_output=True)
    outer, e3 = complement_kernel_integral(p, 1.0, 1.0 + c, q, full_output=True)
    value = outer - inner - paired
    logger.debug("k(%d, %g) = %.15g", p.n, p.s, value)
    return value, e1 + e2 + e3


def ball_curvature_constant(p, q=DEFAULT_QUADRATURE, full_output=False):
    """Fractional mean curvature k(n, s) of the unit ball at a boundary point.

    The shell of half-width `q.pairing_cutoff` around the unit sphere is
    integrated by principal-value pairing; the rest of the inside and the
    outside are plain ball and complement integrals.  Values are cached per
    (params, quadrature) pair.

    Parameters
    ----------
    p : KernelParams
    q : QuadratureConfig
    full_output : bool
        If True, also return the error estimate

    Returns
    -------
    float
        k(n, s) > 0; the ball of radius r has curvature k/r^s
    """
    value, error = _ball_constant(p, q)
    if not value > 0:
        raise ToleranceError(f"Computed k({p.n}, {p.s}) = {value} is not positive", estimate=error,
                             requested=q.rel_tol*abs(value))
    return (value, error) if full_output else value


def ball_curvature_closed_form(p):
    """k(n, s) from chord lengths.

    Pairing each ray from a boundary point with its opposite, a ray at angle
    φ to the inward normal stays in the ball for a length 2 cos φ, so
    k = (2^{1-s}/s) ∫ cos^-s φ over the inward hemisphere of directions.
    """
    if p.n == 1:
        return 2**(1 - p.s)/p.s
    hemisphere = (p.n - 1)*unit_ball_volume(p.n - 1)*0.5*scipy.special.beta((p.n - 1)/2, (1 - p.s)/2)
    return 2**(1 - p.s)/p.s*hemisphere


def lemtech_constant(p, method="beta"):
    """Constant c(n, s) in K(r, r+δ) ≈ c |δ|^-(1+s) as δ -> 0.

    c = (n-1) ω_{n-1} ∫_0^∞ ρ^{n-2} (1+ρ²)^{-(n+s)/2} dρ.  With method="beta"
    the integral is ½ B((n-1)/2, (s+1)/2); with method="quadrature" it is
    integrated in ρ = tan φ, where it becomes ∫_0^{π/2} sin^{n-2}φ cos^s φ dφ
    and the cos^s endpoint behaviour is handled by an algebraic weight.
    """
    if p.n < 2:
        raise ParameterError("c(n, s) is only defined for n >= 2")
    prefactor = (p.n - 1)*unit_ball_volume(p.n - 1)
    if method == "beta":
        return prefactor*0.5*scipy.special.beta((p.n - 1)/2, (p.s + 1)/2)
    if method == "quadrature":
        half_pi = np.pi/2

        def smooth_part(phi):
            # cos(φ) = (π/2-φ)·sinc((π/2-φ)/π); the (π/2-φ)^s factor is the weight
            return np.sin(phi)**(p.n - 2)*np.sinc((half_pi - phi)/np.pi)**p.s

        value, _ = scipy.integrate.quad(smooth_part, 0, half_pi, weight="alg", wvar=(0, p.s),
                                        epsabs=0, epsrel=1e-13, limit=200)
        return prefactor*value
    raise ParameterError(f"Unknown method {method!r}, use 'beta' or 'quadrature'")


def classical_limit_constant(n):
    """Limit of (1-s) k(n, s) as s -> 1, that is ω_{n-1}(n-1)."""
    return unit_ball_volume(n - 1)*(n - 1)


def _correction(p, radii, i, j, jump, q):
    r, rho = radii[i], radii[j]
    if j < i:
        value, error = ball_kernel_integral(p, r, rho, q, full_output=True)
        return f"ball-correction({j+1})", -jump*value, abs(jump)*error
    value, error = complement_kernel_integral(p, r, rho, q, full_output=True)
    return f"complement-correction({j+1})", jump*value, abs(jump)*error


def fractional_curvature(p, radial_set, i, q=DEFAULT_QUADRATURE):
    """Fractional mean curvature of a radial set at boundary sphere i.

    H_s is the principal value of ∫ (χ_{E^c} - χ_E)(y) |x-y|^-(n+s) dy.  Near
    sphere i the set looks like the ball B_{r_i} (outer boundary) or its
    complement (inner boundary), which contributes ±k(n,s)/r_i^s; every other
    boundary sphere j flips the sign of the integrand on one side of it and
    contributes a ball integral (j < i) or a complement integral (j > i).

    Parameters
    ----------
    p : KernelParams
    radial_set : RadialSet
    i : int
        0-based index of the boundary radius
    q : QuadratureConfig

    Returns
    -------
    CurvatureValue
        Value with labels "ball-core", "ball-correction(j)" and
        "complement-correction(j)" in its decomposition, j 1-based

    Raises
    ------
    IndexError
        If i is not a boundary index
    DegenerateConfigurationError
        If two adjacent radii are closer than the degeneracy guard
    """
    if not 0 <= i < radial_set.m:
        raise IndexError(f"Boundary index {i} out of range for {radial_set.m} radii")
    radial_set.check_separation(DEGENERACY_GAP)
    radii = radial_set.radii
    k, k_error = ball_curvature_constant(p, q, full_output=True)
    sign = radial_set.boundary_sign(i)
    core = sign*k/radii[i]**p.s
    others = [j for j in range(radial_set.m) if j != i]
    terms = parallel_map(lambda j: _correction(p, radii, i, j, radial_set.jump(j), q), others)
    decomposition = (("ball-core", core),) + tuple((label, value) for label, value, _ in terms)
    value = core + sum(value for _, value, _ in terms)
    error = k_error/radii[i]**p.s + sum(e for _, _, e in terms)
    return CurvatureValue(value=value, error_estimate=error, decomposition=decomposition)


def curvature_vector(p, radial_set, q=DEFAULT_QUADRATURE):
    """H_s at every boundary sphere, innermost first, as (values, error estimates)."""
    values = [fractional_curvature(p, radial_set, i, q) for i in range(radial_set.m)]
    return np.array([v.value for v in values]), np.array([v.error_estimate for v in values])


def annulus_inner_curvature_asymptotic(p, r, q=DEFAULT_QUADRATURE):
    """Model of H_s at the inner sphere of B_1∖B_r for r close to 1.

    Returns k/r^s + (2c/s)((1-r)^-s - r^-s), obtained by replacing the paired
    shell integrand between radii 1-r and r by its leading term c δ^-(1+s).
    """
    if p.n < 2:
        raise ParameterError("The asymptotic model needs n >= 2")
    if not 0 < r < 1:
        raise ParameterError(f"r must lie in (0, 1), got {r}")
    k = ball_curvature_constant(p, q)
    c = lemtech_constant(p)
    return k/r**p.s + 2*c/p.s*((1 - r)**-p.s - r**-p.s)


def annulus(r):
    """The annulus B_1∖B_r as a RadialSet."""
    return RadialSet((r, 1.0), contains_origin=False)
