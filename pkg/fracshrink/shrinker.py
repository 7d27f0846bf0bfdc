"""Stationary radial sets of the rescaled flow (homothetically shrinking solutions).

A radial set with radii r is stationary when every component of

    g_i(r) = -ε_i H_s(x_{r_i}) + r_i

vanishes, ε_i = +1 at outer and -1 at inner boundaries.  Since H_s is
homogeneous of degree -s, g(λr) = λ^-s f(r) at λ^{1+s} = H_s(x_{r_m}), where
f_i = r_i H_s(x_{r_m}) - ε_i H_s(x_{r_i}) is the system with the outermost
radius fixed at 1.  Annuli are found by bisection, multi-annulus sets by a
continuation ladder that inserts one annulus at a time near the origin.
"""
import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg
import scipy.optimize
import scipy.special

from .curvature import annulus, ball_curvature_constant, curvature_vector, fractional_curvature
from .errors import (BracketError, BudgetExhaustedError, ConvergenceError, DegenerateConfigurationError,
                     ParameterError, ToleranceError)
from .kernel import DEFAULT_QUADRATURE, KernelParams, RadialSet, sphere_kernel_integral
from .util import DEGENERACY_GAP, parallel_map, unit_ball_volume

logger = logging.getLogger(__name__)

FAMILIES = ("annuli-only", "ball-plus-annuli")
STRATEGIES = ("auto", "newton", "homotopy", "nested")
DEFAULT_TOL = 1e-9

# Where a new innermost annulus is placed, as fractions of the current innermost radius
INSERTION = (0.15, 0.45)
ALTERNATIVE_INSERTIONS = ((0.05, 0.25), (0.1, 0.6), (0.25, 0.5), (0.3, 0.7), (0.5, 0.85))
ARMIJO = 1e-4
DAMPING_FLOOR = 2.0**-20
MAX_NEWTON_STEPS = 60
HOMOTOPY_MIN_STEP = 1/64
NESTED_BUDGET = 5000
NESTED_GRID = np.geomspace(0.02, 0.98, 16)
DISTINCT_ROOTS = 1e-4


@dataclass(frozen=True)
class ShrinkerSolution:
    """Stationary radii of the rescaled flow together with how they were found.

    Attributes
    ----------
    params : KernelParams
        Kernel of the ambient space
    set : RadialSet
        Stationary set at its natural scale (g = 0, not normalized)
    residual_norm : float
        ‖g‖_∞ re-evaluated at a tighter quadrature tolerance
    family : str
        "annuli-only" or "ball-plus-annuli"
    N : int
        Number of annuli
    solver_path : tuple of str
        Steps taken by the solver, in order
    tol : float
        Tolerance the solution was certified against
    ambient_n : int or None
        Ambient dimension when the set is the cross-section of a cylinder
    fiber_factor : float
        Factor the fiber integration puts on the cross-section curvature
    extras : tuple of RadialSet
        Other stationary sets met on the way
    section_n : int or None
        Dimension of the cross-section of a cylinder.  The curvature of the
        cylinder is fiber_factor times that of the cross-section in
        dimension section_n, not the curvature of the radial set in R^n.
    """
    params: KernelParams
    set: RadialSet
    residual_norm: float
    family: str
    N: int
    solver_path: tuple = ()
    tol: float = DEFAULT_TOL
    ambient_n: int = None
    fiber_factor: float = 1.0
    extras: tuple = field(default=())
    section_n: int = None

    @property
    def radii(self):
        return self.set.array

    @property
    def ratios(self):
        return self.set.ratios()

    @property
    def scale(self):
        """C^{1/(1+s)}: size of the set relative to its cross-section at its own natural scale."""
        return self.fiber_factor**(1/(1 + self.params.s))

    def section(self):
        """The cross-section as a stationary set in its own dimension; self unless a cylinder.

        Both flows of the cylinder are those of the cross-section with radii
        multiplied by `scale`, at the same times, so the Jacobians agree.
        """
        if self.section_n is None:
            return self
        shrink = 1/self.scale
        return replace(self, params=KernelParams(self.section_n, self.params.s), set=self.set.scaled(shrink),
                       residual_norm=shrink*self.residual_norm, ambient_n=None, fiber_factor=1.0,
                       extras=tuple(x.scaled(shrink) for x in self.extras), section_n=None)

    def residual(self, q=DEFAULT_QUADRATURE):
        """Rescaled-flow velocity g at the stored radii, fiber factor included."""
        section = self.section()
        return self.scale*residual_system(section.params, section.set, q)


def residual_system(p, radial_set, q=DEFAULT_QUADRATURE):
    """Rescaled-flow velocity g_i = -ε_i H_s(x_{r_i}) + r_i at every radius."""
    values, _ = curvature_vector(p, radial_set, q)
    signs = np.array([radial_set.boundary_sign(i) for i in range(radial_set.m)])
    return -signs*values + radial_set.array


def normalized_defects(p, radial_set, q=DEFAULT_QUADRATURE):
    """f_i = r_i H_s(x_{r_m}) - ε_i H_s(x_{r_i}) for i < m, with the outermost radius scaled to 1."""
    normalized = radial_set.normalized()
    values, _ = curvature_vector(p, normalized, q)
    signs = np.array([normalized.boundary_sign(i) for i in range(normalized.m)])
    return (normalized.array*values[-1] - signs*values)[:-1]


def natural_scale(p, radial_set, q=DEFAULT_QUADRATURE):
    """Rescale so that the outermost component of g vanishes: λ^{1+s} = H_s(x_{r_m})."""
    normalized = radial_set.normalized()
    outer = fractional_curvature(p, normalized, normalized.m - 1, q).value
    if not outer > 0:
        raise ConvergenceError(f"Outer curvature {outer:.3g} is not positive; no shrinking scale exists",
                               best=normalized.array)
    return normalized.scaled(outer**(1/(1 + p.s)))


def residual_jacobian(p, radial_set, q=DEFAULT_QUADRATURE, residual=None):
    """Analytic Jacobian ∂g_i/∂r_j of the residual system.

    Off the diagonal ∂g_i/∂r_j = 2(-1)^{i-j} K(r_i, r_j).  The diagonal follows
    from Euler's relation for the degree -s homogeneous curvature,

        ∂g_i/∂r_i = s + 1 - s g_i/r_i - Σ_{j≠i} (r_j/r_i) ∂g_i/∂r_j,

    so `residual` (g at the same radii) is needed away from stationary
    points; None means g = 0.
    """
    radii = radial_set.array
    m = radial_set.m
    g = np.zeros(m) if residual is None else np.asarray(residual, dtype=float)

    def row(i):
        out = np.zeros(m)
        others = np.array([j for j in range(m) if j != i], dtype=int)
        if len(others):
            signs = np.where((i - others) % 2 == 0, 2.0, -2.0)
            out[others] = signs*np.atleast_1d(sphere_kernel_integral(p, radii[i], radii[others], q))
        out[i] = p.s + 1 - p.s*g[i]/radii[i] - np.dot(radii[others], out[others])/radii[i]
        return out

    return np.array(parallel_map(row, range(m)))


def annulus_defect(p, r, q=DEFAULT_QUADRATURE):
    """f_s(r) = H_s(x_r, A) + r H_s(x_1, A) for the annulus A = B_1∖B_r.

    Continuous and increasing on (0, 1), from -∞ to +∞; its zero is the
    stationary annulus ratio.
    """
    if not 0 < r < 1:
        raise ParameterError(f"The annulus ratio must lie in (0, 1), got {r}")
    values, _ = curvature_vector(p, annulus(r), q)
    return values[0] + r*values[1]


def _bracket_annulus(p, q):
    lo, hi = 0.1, 0.9
    floor = 10*DEGENERACY_GAP
    f_lo = annulus_defect(p, lo, q)
    while f_lo >= 0:
        if lo < floor:
            raise BracketError(f"annulus_defect stays nonnegative down to r = {lo:.3g}")
        lo /= 4
        f_lo = annulus_defect(p, lo, q)
    f_hi = annulus_defect(p, hi, q)
    while f_hi <= 0:
        if 1 - hi < floor:
            raise BracketError(f"annulus_defect stays nonpositive up to r = {hi:.12g}")
        hi = 1 - (1 - hi)/4
        f_hi = annulus_defect(p, hi, q)
    logger.debug("Annulus ratio bracketed in [%g, %g]", lo, hi)
    return lo, hi


def _certify(p, radial_set, q, tol):
    residual = residual_system(p, radial_set, q.tighter(10))
    return float(np.max(np.abs(residual))), residual


def find_annulus_shrinker(p, q=DEFAULT_QUADRATURE, tol=DEFAULT_TOL):
    """The unique stationary annulus B_R∖B_{rR}.

    The ratio r solves annulus_defect(r) = 0 and is found by bisection; the
    annulus is then scaled so that its outer residual vanishes.  A few Newton
    steps polish the result if the bracket width alone does not meet `tol`.

    Parameters
    ----------
    p : KernelParams
    q : QuadratureConfig
    tol : float
        Required bound on ‖g‖_∞

    Returns
    -------
    ShrinkerSolution
    """
    lo, hi = _bracket_annulus(p, q)
    ratio = scipy.optimize.bisect(lambda x: annulus_defect(p, x, q), lo, hi, xtol=1e-3*tol)
    path = [f"bisection ratio={ratio:.12g} bracket=[{lo:.3g}, {hi:.6g}]"]
    radial_set = natural_scale(p, annulus(ratio), q)
    residual_norm, _ = _certify(p, radial_set, q, tol)
    if residual_norm > tol:
        radial_set, _ = _damped_newton(p, radial_set, q, tol, path)
        residual_norm, _ = _certify(p, radial_set, q, tol)
    if residual_norm > tol:
        raise ConvergenceError(f"Annulus residual {residual_norm:.3g} exceeds {tol:.3g}",
                               best=radial_set.array, residual=residual_norm)
    logger.info("Stationary annulus for n=%d s=%g: ratio %.10g", p.n, p.s, radial_set.ratios()[0])
    return ShrinkerSolution(params=p, set=radial_set, residual_norm=residual_norm, family="annuli-only",
                            N=1, solver_path=tuple(path), tol=tol)


def ball_shrinker(p, q=DEFAULT_QUADRATURE, tol=DEFAULT_TOL):
    """The stationary ball, radius k(n,s)^{1/(1+s)}."""
    radius = ball_curvature_constant(p, q)**(1/(1 + p.s))
    radial_set = RadialSet((radius,), contains_origin=True)
    residual_norm, _ = _certify(p, radial_set, q, tol)
    return ShrinkerSolution(params=p, set=radial_set, residual_norm=residual_norm, family="ball-plus-annuli",
                            N=0, solver_path=("closed form",), tol=tol)


def _trial_residual(p, radii, contains_origin, q, offset):
    try:
        radial_set = RadialSet(tuple(radii), contains_origin)
        g = residual_system(p, radial_set, q) - offset
    except (ParameterError, DegenerateConfigurationError, ToleranceError) as e:
        logger.debug("Rejected trial radii: %s", e)
        return None, None
    return radial_set, g


def _damped_newton(p, radial_set, q, tol, path, offset=None, max_steps=MAX_NEWTON_STEPS):
    """Newton's method on g(r) - offset with Armijo backtracking on ‖g - offset‖².

    Steps that would leave the admissible region (unordered, nonpositive or
    colliding radii) are halved like steps that fail the Armijo test.
    """
    offset = np.zeros(radial_set.m) if offset is None else offset
    g = residual_system(p, radial_set, q) - offset
    for step in range(max_steps):
        norm = float(np.max(np.abs(g)))
        if norm <= tol:
            path.append(f"newton converged in {step} steps, |g|={norm:.3g}")
            return radial_set, norm
        jac = residual_jacobian(p, radial_set, q, residual=g + offset)
        try:
            direction = scipy.linalg.solve(jac, -g)
        except (scipy.linalg.LinAlgError, ValueError):
            direction = scipy.linalg.lstsq(jac, -g)[0]
        damping = 1.0
        sq = float(np.dot(g, g))
        while damping >= DAMPING_FLOOR:
            trial, g_trial = _trial_residual(p, radial_set.array + damping*direction,
                                             radial_set.contains_origin, q, offset)
            if trial is not None and np.dot(g_trial, g_trial) <= (1 - 2*ARMIJO*damping)*sq:
                break
            damping /= 2
        else:
            raise ConvergenceError(f"Newton damping reached the floor {DAMPING_FLOOR:.3g} at |g|={norm:.3g}",
                                   best=radial_set.array, residual=norm)
        logger.debug("Newton step %d: |g|=%.3g damping=%g", step, norm, damping)
        radial_set, g = trial, g_trial
    norm = float(np.max(np.abs(g)))
    if norm <= tol:
        path.append(f"newton converged in {max_steps} steps, |g|={norm:.3g}")
        return radial_set, norm
    raise BudgetExhaustedError(f"Newton did not converge in {max_steps} steps (|g|={norm:.3g})",
                               best=radial_set.array, residual=norm)


def _homotopy(p, seed, q, tol, path):
    """Follow g(r) = (1-τ) g(seed) from τ = 0 to τ = 1 with Newton corrections."""
    g0 = residual_system(p, seed, q)
    current = seed
    tau, dtau = 0.0, 0.25
    while tau < 1:
        target = min(1.0, tau + dtau)
        inner_tol = tol if target == 1 else max(tol, 1e-6*float(np.max(np.abs(g0))))
        try:
            current, _ = _damped_newton(p, current, q, inner_tol, [], offset=(1 - target)*g0)
        except ConvergenceError:
            dtau /= 2
            if dtau < HOMOTOPY_MIN_STEP:
                raise ConvergenceError(f"Homotopy stalled at τ={tau:.3g}", best=current.array)
            continue
        tau = target
        dtau = min(0.5, 1.5*dtau)
    path.append(f"homotopy reached τ=1 from seed {np.round(seed.array, 6).tolist()}")
    return current, float(np.max(np.abs(residual_system(p, current, q))))


class _NestedSolver:
    """Solve the normalized system one radius at a time, innermost first.

    With the radii above level i held fixed, the radii below i are solved
    recursively as functions of r_i, and r_i is the smallest root of f_i on
    (0, r_{i+1}), bracketed on a geometric grid and refined by brentq.
    """
    def __init__(self, p, m, contains_origin, q, budget):
        self.p = p
        self.m = m
        self.contains_origin = contains_origin
        self.q = q
        self.budget = budget
        self.evaluations = 0

    def defects(self, radii):
        self.evaluations += 1
        if self.evaluations > self.budget:
            raise BudgetExhaustedError(f"Nested bisection used its budget of {self.budget} evaluations",
                                       best=np.array(radii))
        return normalized_defects(self.p, RadialSet(tuple(radii), self.contains_origin), self.q)

    def lower(self, i, x, upper):
        """Radii below level i given r_i = x and the radii above it."""
        if i == 0:
            return ()
        return self.solve(i - 1, (x,) + upper)

    def phi(self, i, x, upper):
        below = self.lower(i, x, upper)
        return self.defects(below + (x,) + upper)[i], below

    def solve(self, i, upper):
        ceiling = upper[0]
        grid = ceiling*NESTED_GRID
        previous = None
        for x in grid:
            try:
                value, _ = self.phi(i, x, upper)
            except (BracketError, DegenerateConfigurationError, ParameterError, ToleranceError):
                previous = None
                continue
            if previous is not None and np.sign(value) != np.sign(previous[1]):
                root = scipy.optimize.brentq(lambda y: self.phi(i, y, upper)[0], previous[0], x,
                                             xtol=1e-13*ceiling)
                return self.lower(i, root, upper) + (root,)
            previous = (x, value)
        raise BracketError(f"No sign change of the level-{i} defect below {ceiling:.6g}")


def _nested(p, m, contains_origin, q, tol, path, budget=NESTED_BUDGET):
    solver = _NestedSolver(p, m, contains_origin, q, budget)
    radii = solver.solve(m - 2, (1.0,)) + (1.0,)
    path.append(f"nested bisection in {solver.evaluations} evaluations")
    radial_set = natural_scale(p, RadialSet(radii, contains_origin), q)
    return _damped_newton(p, radial_set, q, tol, path)


def _insert(radial_set, fractions):
    inner = radial_set.radii[0]
    return RadialSet((fractions[0]*inner, fractions[1]*inner) + radial_set.radii, radial_set.contains_origin)


def _seeds(p, radial_set, q):
    """Candidate starting sets for the next rung, default insertion first."""
    ranked = []
    for fractions in ALTERNATIVE_INSERTIONS:
        candidate = _insert(radial_set, fractions)
        try:
            score = float(np.max(np.abs(normalized_defects(p, candidate, q))))
        except (DegenerateConfigurationError, ToleranceError):
            continue
        ranked.append((score, fractions, candidate))
    ranked.sort(key=lambda item: item[0])
    first = _insert(radial_set, INSERTION)
    return [(INSERTION, first)] + [(fractions, candidate) for _, fractions, candidate in ranked]


def _solve_rung(p, seed, q, tol, strategy, path):
    seed = natural_scale(p, seed, q)
    if strategy in ("auto", "newton"):
        try:
            return _damped_newton(p, seed, q, tol, path)
        except ConvergenceError as e:
            path.append(f"newton failed: {e}")
            if strategy == "newton":
                raise
    if strategy in ("auto", "homotopy"):
        try:
            return _homotopy(p, seed, q, tol, path)
        except ConvergenceError as e:
            path.append(f"homotopy failed: {e}")
            if strategy == "homotopy":
                raise
    return _nested(p, seed.m, seed.contains_origin, q, tol, path)


def _distinct(a, b):
    if a.m != b.m:
        return True
    return float(np.max(np.abs(a.ratios() - b.ratios()))) > DISTINCT_ROOTS


def find_shrinker(p, N, family="annuli-only", q=DEFAULT_QUADRATURE, tol=DEFAULT_TOL, strategy="auto",
                  explore=False):
    """Stationary set made of N annuli, with or without a central ball.

    Solutions are built by continuation: start from the stationary annulus
    (or the ball), then repeatedly insert a new annulus near the origin and
    re-solve.  Each rung is solved by damped Newton, then by a Newton
    homotopy, then by nested bisection, as `strategy` allows.  The root
    reached from the default insertion is the one returned; roots reached from
    other insertions are reported in `extras` when `explore` is set.

    Parameters
    ----------
    p : KernelParams
    N : int >= 1
        Number of annuli
    family : str
        "annuli-only" (2N radii) or "ball-plus-annuli" (2N+1 radii)
    q : QuadratureConfig
    tol : float
        Required bound on ‖g‖_∞
    strategy : str
        "auto", "newton", "homotopy" or "nested"
    explore : bool
        Solve from every insertion seed on the last rung and keep distinct roots

    Returns
    -------
    ShrinkerSolution

    Raises
    ------
    ConvergenceError
        If no seed leads to a stationary set; carries the best iterate
    """
    if int(N) != N or N < 1:
        raise ParameterError(f"N must be an integer >= 1, got {N!r}")
    if family not in FAMILIES:
        raise ParameterError(f"family must be one of {FAMILIES}, got {family!r}")
    if strategy not in STRATEGIES:
        raise ParameterError(f"strategy must be one of {STRATEGIES}, got {strategy!r}")
    if family == "annuli-only":
        base = find_annulus_shrinker(p, q, tol)
        start = 1
    else:
        base = ball_shrinker(p, q, tol)
        start = 0
    path = list(base.solver_path)
    current = base.set
    extras = []
    for rung in range(start + 1, N + 1):
        last = rung == N
        solution = None
        failure = None
        for fractions, seed in _seeds(p, current, q):
            rung_path = [f"rung {rung}: insert at {fractions}"]
            try:
                found, _ = _solve_rung(p, seed, q, tol, strategy, rung_path)
            except (ConvergenceError, BracketError, DegenerateConfigurationError, ToleranceError) as e:
                failure = e
                path.extend(rung_path)
                continue
            if solution is None:
                solution = found
                path.extend(rung_path)
                if not (explore and last):
                    break
            elif _distinct(found, solution) and all(_distinct(found, x) for x in extras):
                extras.append(found)
        if solution is None:
            best = getattr(failure, "best", None)
            raise ConvergenceError(f"No stationary set with {rung} annuli found: {failure}", best=best,
                                   residual=getattr(failure, "residual", float("nan")))
        current = solution
    residual_norm, _ = _certify(p, current, q, tol)
    if residual_norm > tol:
        raise ConvergenceError(f"Residual {residual_norm:.3g} at tighter quadrature exceeds {tol:.3g}",
                               best=current.array, residual=residual_norm)
    if extras:
        warnings.warn(f"Found {len(extras)} further stationary set(s) with {N} annuli; "
                      "returning the one reached by continuation")
    return ShrinkerSolution(params=p, set=current, residual_norm=residual_norm, family=family, N=N,
                            solver_path=tuple(path), tol=tol, extras=tuple(extras))


def fiber_factor(n, k, s):
    """Factor C by which integrating out R^{n-k} scales the k-dimensional curvature.

    C = π^{(n-k)/2} Γ((k+s)/2) / Γ((n+s)/2).
    """
    return np.pi**((n - k)/2)*np.exp(scipy.special.gammaln((k + s)/2) - scipy.special.gammaln((n + s)/2))


def cylinder_shrinker(p, k, N=1, family="annuli-only", q=DEFAULT_QUADRATURE, tol=DEFAULT_TOL, **kwargs):
    """Stationary cylinder R^{n-k} × (cross-section) in R^n.

    The cross-section solves the k-dimensional problem with the same s; the
    fiber multiplies its curvature by `fiber_factor`, which only changes the
    scale, by C^{1/(1+s)}.  Radius ratios therefore depend on k, s and N only.

    Parameters
    ----------
    p : KernelParams
        Ambient dimension n and order s
    k : int
        Dimension of the cross-section, 1 <= k < n
    """
    if int(k) != k or not 1 <= k < p.n:
        raise ParameterError(f"Cross-section dimension must satisfy 1 <= k < n = {p.n}, got {k!r}")
    section = KernelParams(int(k), p.s)
    if family == "annuli-only" and N == 1 and not kwargs:
        base = find_annulus_shrinker(section, q, tol)
    else:
        base = find_shrinker(section, N, family, q, tol, **kwargs)
    factor = fiber_factor(p.n, k, p.s)
    scale = factor**(1/(1 + p.s))
    return ShrinkerSolution(params=p, set=base.set.scaled(scale), residual_norm=scale*base.residual_norm,
                            family=base.family, N=base.N,
                            solver_path=base.solver_path + (f"cylinder n={p.n} k={k} scale={scale:.12g}",),
                            tol=tol, ambient_n=p.n, fiber_factor=factor,
                            extras=tuple(x.scaled(scale) for x in base.extras), section_n=int(k))


@dataclass(frozen=True)
class LimitRow:
    """One s of a limit study; NaN entries and an `error` message mark a failed row."""
    s: float
    ratio: float
    scaled_ball_constant: float
    scaled_defect: float
    error: str = None

    @property
    def failed(self):
        return self.error is not None


def limit_study(n, s_grid, q=DEFAULT_QUADRATURE, r=0.5, tol=DEFAULT_TOL, progress=False):
    """Behaviour of the stationary annulus and the curvature as s -> 1.

    For each s the row holds the annulus ratio r(n, s), (1-s) k(n, s) / ω_{n-1}
    and (1-s) f_s(r) / ω_{n-1}.  The scaling by ω_{n-1} makes the classical
    limits n-1 and (n-1)(r - 1/r).  A row that fails is kept with its error
    and the study continues.

    Returns
    -------
    list of LimitRow
    """
    s_grid = [float(s) for s in s_grid]
    if any(not 0 < s < 1 for s in s_grid):
        raise ParameterError(f"Every s must lie in (0, 1), got {s_grid}")
    if any(b <= a for a, b in zip(s_grid, s_grid[1:])):
        raise ParameterError("s_grid must be strictly increasing")
    omega = unit_ball_volume(n - 1)

    def row(s):
        p = KernelParams(n, s)
        try:
            ratio = float(find_annulus_shrinker(p, q, tol).ratios[0])
            k = ball_curvature_constant(p, q)
            defect = annulus_defect(p, r, q)
        except (ConvergenceError, BracketError, ToleranceError, DegenerateConfigurationError) as e:
            warnings.warn(f"Limit study row s={s} failed: {e}")
            return LimitRow(s, np.nan, np.nan, np.nan, error=str(e))
        return LimitRow(s, ratio, (1 - s)*k/omega, (1 - s)*defect/omega)

    return parallel_map(row, s_grid, progress=progress)
