"""Reduction of the kernel |x-y|^-(n+s) over spheres, balls and shells.

Every quantity here is an integral of the kernel seen from a point x_r with
|x_r| = r.  The basic object is the sphere integral

    K(r, t) = ∫_{∂B_t} |x_r - y|^-(n+s) dy,

and ball, complement and paired-shell integrals are radial integrals of K.
For n = 1 the sphere is two points and everything has a closed form.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.special

from .errors import DegenerateConfigurationError, ParameterError, SingularArgumentError
from .util import adaptive_quad, sphere_area, tanh_sinh, unit_ball_volume

logger = logging.getLogger(__name__)

# Cutoff beyond which complement integrals use the analytic tail
TAIL_MIN_FACTOR = 10.0
TAIL_MAX_FACTOR = 1e6
_TAIL_MAX_TERMS = 60
INNER_TOL_FLOOR = 1e-14
# Below this shell half-width the paired integrand times δ^s is constant to
# double precision; smaller δ would underflow δ².
PAIRED_DELTA_FLOOR = 1e-20


@dataclass(frozen=True)
class KernelParams:
    """Dimension n >= 1 and fractional order s in (0, 1) of the kernel |x-y|^-(n+s)."""
    n: int
    s: float

    def __post_init__(self):
        if isinstance(self.n, bool) or not float(self.n).is_integer() or self.n < 1:
            raise ParameterError(f"Dimension must be an integer >= 1, got {self.n!r}")
        if not 0 < self.s < 1:
            raise ParameterError(f"Fractional order must lie in (0, 1), got {self.s!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "s", float(self.s))

    @property
    def alpha(self):
        """Half the kernel exponent, (n+s)/2."""
        return (self.n + self.s)/2


@dataclass(frozen=True)
class QuadratureConfig:
    """Tolerances and budgets for every singular or improper integral.

    Parameters
    ----------
    rel_tol, abs_tol : float > 0
        Relative and absolute tolerances
    max_subdivisions : int >= 1
        Subinterval budget of the adaptive outer quadratures
    pairing_cutoff : float in (0, 1)
        Half-width, relative to the radius, of the shell region around a
        boundary sphere that is integrated by principal-value pairing
    """
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_subdivisions: int = 60
    pairing_cutoff: float = 0.5

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ParameterError("Quadrature tolerances must be positive")
        if int(self.max_subdivisions) != self.max_subdivisions or self.max_subdivisions < 1:
            raise ParameterError("max_subdivisions must be an integer >= 1")
        if not 0 < self.pairing_cutoff < 1:
            raise ParameterError("pairing_cutoff must lie in (0, 1)")

    def tighter(self, factor=10.0):
        """Copy with both tolerances divided by `factor`."""
        return QuadratureConfig(rel_tol=self.rel_tol/factor, abs_tol=self.abs_tol/factor,
                                max_subdivisions=self.max_subdivisions,
                                pairing_cutoff=self.pairing_cutoff)


DEFAULT_QUADRATURE = QuadratureConfig()


@dataclass(frozen=True)
class RadialSet:
    """A rotationally symmetric set given by its boundary radii.

    If `contains_origin` the set is B_{r_1} ∪ (B_{r_3}∖B_{r_2}) ∪ ..., otherwise
    (B_{r_2}∖B_{r_1}) ∪ (B_{r_4}∖B_{r_3}) ∪ ....  The outermost radius is
    always an outer boundary, so the radius count is odd exactly when the set
    contains the origin.
    """
    radii: tuple
    contains_origin: bool = False
    _array: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        radii = tuple(float(r) for r in np.atleast_1d(self.radii))
        if len(radii) == 0:
            raise ParameterError("A radial set needs at least one radius")
        arr = np.array(radii)
        if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
            raise ParameterError(f"Radii must be finite and positive, got {radii}")
        if np.any(np.diff(arr) <= 0):
            raise ParameterError(f"Radii must be strictly increasing, got {radii}")
        if (len(radii) % 2 == 1) != bool(self.contains_origin):
            raise ParameterError(f"{len(radii)} radii is inconsistent with contains_origin={self.contains_origin}: "
                                 "the outermost component must be bounded")
        arr.setflags(write=False)
        object.__setattr__(self, "radii", radii)
        object.__setattr__(self, "contains_origin", bool(self.contains_origin))
        object.__setattr__(self, "_array", arr)

    @property
    def m(self):
        return len(self.radii)

    @property
    def array(self):
        return self._array

    @property
    def family(self):
        return "ball-plus-annuli" if self.contains_origin else "annuli-only"

    def is_outer(self, i):
        """True if the set lies locally inside sphere i (0-based)."""
        return (i % 2 == 0) == self.contains_origin

    def boundary_sign(self, i):
        """ε_i: +1 at an outer boundary, -1 at an inner one."""
        return 1 if self.is_outer(i) else -1

    def jump(self, j):
        """σ just outside r_j minus σ just inside: +2 at outer, -2 at inner boundaries."""
        return 2*self.boundary_sign(j)

    def sign_at(self, t):
        """σ(t): +1 outside the set, -1 inside; undefined on a boundary sphere."""
        if t in self.radii:
            raise ParameterError(f"σ is undefined on the boundary radius {t}")
        below = int(np.searchsorted(self._array, t))
        return -1 if (below % 2 == 0) == self.contains_origin else 1

    def scaled(self, factor):
        return RadialSet(tuple(factor*r for r in self.radii), self.contains_origin)

    def normalized(self):
        """The same shape with outermost radius 1."""
        return self.scaled(1/self.radii[-1])

    def ratios(self):
        return self._array/self._array[-1]

    def relative_gaps(self):
        return np.diff(self._array)/self._array[1:]

    def check_separation(self, guard):
        """Raise DegenerateConfigurationError if adjacent radii are closer than `guard`."""
        gaps = self.relative_gaps()
        if len(gaps) and np.min(gaps) < guard:
            i = int(np.argmin(gaps))
            raise DegenerateConfigurationError(
                f"Radii {i+1} and {i+2} have relative gap {gaps[i]:.3g} < {guard:.1g}",
                pair=(i + 1, i + 2), gap=float(gaps[i]))


def _positive(name, value):
    if not (np.isfinite(value) and value > 0):
        raise ParameterError(f"{name} must be finite and positive, got {value!r}")


def _inner_tol(q):
    # Angular sums must sit well below the outer adaptive tolerance
    return max(1e-2*q.rel_tol, INNER_TOL_FLOOR)


def _sphere_kernel(p, r, t, q):
    """Vectorized K(r, t) for n >= 2 and t != r.

    The angular integral is written in v with θ = 2ε sinh v, ε = |r-t|/(2√(rt)),
    which spreads the near-singularity at θ = 0 over an O(1) range of v; the
    resulting smooth integrand goes to tanh-sinh quadrature.
    """
    t = np.asarray(t, dtype=float)
    gap2 = np.asarray((r - t)**2)
    eps = np.asarray(np.sqrt(gap2)/(2*np.sqrt(r*t)))
    vmax = np.arcsinh(np.pi/(2*eps))
    alpha = p.alpha

    def integrand(v):
        e = eps[..., None]
        theta = 2*e*np.sinh(v)
        body = (gap2[..., None] + 4*r*t[..., None]*np.sin(theta/2)**2)**-alpha
        if p.n > 2:
            body = body*np.sin(theta)**(p.n - 2)
        return body*2*e*np.cosh(v)

    integral, error = tanh_sinh(integrand, 0.0, vmax, _inner_tol(q))
    factor = (p.n - 1)*unit_ball_volume(p.n - 1)*t**(p.n - 1)
    return factor*integral, factor*error


def sphere_kernel_integral(p, r, t, q=DEFAULT_QUADRATURE, full_output=False):
    """Kernel mass of the sphere ∂B_t seen from a point at radius r.

    Parameters
    ----------
    p : KernelParams
    r, t : float > 0, r != t
        Radius of the evaluation point and of the sphere.  `t` may also be
        an array, in which case the result is an array.
    q : QuadratureConfig
    full_output : bool
        If True, also return the error estimate

    Returns
    -------
    float or ndarray
        K(r, t) = ∫_{∂B_t} |x_r - y|^-(n+s) dy
    """
    _positive("r", r)
    t_arr = np.asarray(t, dtype=float)
    if np.any(~np.isfinite(t_arr)) or np.any(t_arr <= 0):
        raise ParameterError(f"t must be finite and positive, got {t!r}")
    if np.any(t_arr == r):
        raise SingularArgumentError(f"K(r, t) diverges at r = t = {r}")
    if p.n == 1:
        value = np.abs(r - t_arr)**(-1 - p.s) + (r + t_arr)**(-1 - p.s)
        error = np.zeros_like(value)
    else:
        value, error = _sphere_kernel(p, r, t_arr, q)
    if np.ndim(t) == 0:
        value, error = float(value), float(error)
    return (value, error) if full_output else value


def sphere_kernel_hypergeometric(p, r, t):
    """K(r, t) from its Gauss hypergeometric closed form.

    K = |S^{n-1}| t^{n-1} M^-(n+s) 2F1((n+s)/2, (s+2)/2; n/2; (m/M)^2) with
    M = max(r, t), m = min(r, t).  Accurate away from r = t; used as an
    independent check of the quadrature path.
    """
    _positive("r", r)
    _positive("t", t)
    if r == t:
        raise SingularArgumentError(f"K(r, t) diverges at r = t = {r}")
    big, small = max(r, t), min(r, t)
    z = (small/big)**2
    return sphere_area(p.n)*t**(p.n - 1)*big**(-p.n - p.s)*scipy.special.hyp2f1(p.alpha, (p.s + 2)/2, p.n/2, z)


def _kernel_scalar(p, r, t, q):
    return _sphere_kernel(p, r, np.asarray(t), q)[0].item()


def ball_kernel_integral(p, r, rho, q=DEFAULT_QUADRATURE, full_output=False):
    """Kernel mass of the ball B_rho seen from radius r > rho.

    The radial integral ∫_0^rho K(r, t) dt is taken in w = log(r - t), which
    turns the (r - t)^-(1+s) growth near t = rho ≈ r into a smooth integrand.
    """
    _positive("r", r)
    _positive("rho", rho)
    if rho >= r:
        raise ParameterError(f"ball_kernel_integral needs rho < r, got rho={rho}, r={r}")
    s = p.s
    if p.n == 1:
        value = ((r - rho)**-s - (r + rho)**-s)/s
        return (value, 0.0) if full_output else value

    def integrand(w):
        d = np.exp(w)
        return _kernel_scalar(p, r, max(r - d, np.finfo(float).tiny), q)*d

    value, error = adaptive_quad(integrand, np.log(r - rho), np.log(r), q, "ball kernel integral")
    return (value, error + q.rel_tol*abs(value)) if full_output else value


def _tail_cutoff(p, rho, q):
    reach = rho*q.rel_tol**(-1/p.s)
    return max(TAIL_MIN_FACTOR*rho, min(reach, TAIL_MAX_FACTOR*rho))


def _complement_tail(p, r, cutoff, q):
    """∫_cutoff^∞ K(r, t) dt from the hypergeometric series in (r/t)^2."""
    a, b, c = p.alpha, (p.s + 2)/2, p.n/2
    z = (r/cutoff)**2
    coeff = 1.0
    total = 0.0
    term = 0.0
    for k in range(_TAIL_MAX_TERMS):
        term = coeff*z**k*cutoff**-p.s/(p.s + 2*k)
        total += term
        if abs(term) <= 0.01*q.rel_tol*abs(total):
            break
        coeff *= (a + k)*(b + k)/((c + k)*(k + 1))
    # The series terms decay at least geometrically with ratio ~ z.
    truncation = abs(term)*z/(1 - z)
    area = sphere_area(p.n)
    return area*total, area*truncation


def complement_kernel_integral(p, r, rho, q=DEFAULT_QUADRATURE, full_output=False):
    """Kernel mass of the exterior R^n∖B_rho seen from radius r < rho.

    Integrated in w = log(t - r) up to a cutoff T, then completed by the
    analytic tail beyond T; the tail's truncation error is part of the
    returned error estimate.
    """
    _positive("r", r)
    _positive("rho", rho)
    if rho <= r:
        raise ParameterError(f"complement_kernel_integral needs rho > r, got rho={rho}, r={r}")
    s = p.s
    if p.n == 1:
        value = ((rho - r)**-s + (rho + r)**-s)/s
        return (value, 0.0) if full_output else value
    cutoff = _tail_cutoff(p, rho, q)

    def integrand(w):
        d = np.exp(w)
        return _kernel_scalar(p, r, r + d, q)*d

    body, body_error = adaptive_quad(integrand, np.log(rho - r), np.log(cutoff - r), q,
                                     "complement kernel integral")
    tail, tail_error = _complement_tail(p, r, cutoff, q)
    value = body + tail
    error = body_error + tail_error + q.rel_tol*abs(value)
    return (value, error) if full_output else value


def _paired_difference(p, r, delta, q):
    """K(r, r-δ) - K(r, r+δ) for n >= 2, without cancellation.

    Both sphere integrands are evaluated at the same angle and their
    difference is formed as f₊·expm1(log f₋ - log f₊), with the log ratio
    built from log1p terms, so the result keeps full relative accuracy while
    each term alone is O(δ^-(1+s)).
    """
    n, alpha = p.n, p.alpha
    t_plus = r + delta
    eps = delta/(2*r)
    vmax = np.arcsinh(np.pi/(2*eps))
    with np.errstate(divide="ignore"):
        shrink = (n - 1)*(np.log1p(-delta/r) - np.log1p(delta/r))

    def integrand(v):
        theta = 2*eps*np.sinh(v)
        half2 = np.sin(theta/2)**2
        base = delta**2 + 4*r*t_plus*half2
        f_plus = t_plus**(n - 1)*base**-alpha
        log_ratio = shrink - alpha*np.log1p(-8*r*delta*half2/base)
        body = f_plus*np.expm1(log_ratio)
        if n > 2:
            body = body*np.sin(theta)**(n - 2)
        return body*2*eps*np.cosh(v)

    integral, _ = tanh_sinh(integrand, 0.0, vmax, _inner_tol(q), abs_tol=q.abs_tol*delta**-p.s)
    return (n - 1)*unit_ball_volume(n - 1)*integral


def paired_shell_integral(p, r, a, b, q=DEFAULT_QUADRATURE, full_output=False):
    """Principal-value shell pairing ∫_a^b [K(r, r-δ) - K(r, r+δ)] dδ.

    The leading δ^-(1+s) parts of the two sphere integrals cancel, leaving an
    O(δ^-s) integrand; the substitution δ = u^(1/(1-s)) makes it bounded so
    that `a` may be 0.  Below PAIRED_DELTA_FLOOR the bounded integrand is
    frozen at its value there; the next term of its expansion is O(δ^{1+s}).

    Parameters
    ----------
    p : KernelParams
    r : float > 0
    a, b : float, 0 <= a <= b <= r
    """
    _positive("r", r)
    if not (0 <= a <= b <= r):
        raise ParameterError(f"paired_shell_integral needs 0 <= a <= b <= r, got a={a}, b={b}, r={r}")
    s = p.s
    if a == b:
        return (0.0, 0.0) if full_output else 0.0
    if p.n == 1:
        def antiderivative(d):
            return ((2*r - d)**-s + (2*r + d)**-s)/s
        value = antiderivative(b) - antiderivative(a)
        return (value, 0.0) if full_output else value
    power = 1/(1 - s)

    def integrand(u):
        delta = min(max(u**power, PAIRED_DELTA_FLOOR*r), r)
        return _paired_difference(p, r, delta, q)*delta**s/(1 - s)

    value, error = adaptive_quad(integrand, a**(1 - s), b**(1 - s), q, "paired shell integral")
    return (value, error + q.rel_tol*abs(value)) if full_output else value
