"""Evolution of radial sets by fractional mean curvature.

The original flow moves boundary sphere i with ṙ_i = -ε_i H_s(x_{r_i}); the
rescaled flow adds r_i, so its stationary points are the shrinking solutions.
Both are integrated with an embedded Runge-Kutta 5(4) pair until a horizon,
extinction, a collision of two spheres, or divergence.
"""
import logging
from dataclasses import dataclass, replace

import numpy as np
import scipy.integrate

from .curvature import ball_curvature_constant
from .errors import BudgetExhaustedError, DegenerateConfigurationError, ParameterError, ToleranceError
from .kernel import DEFAULT_QUADRATURE, RadialSet
from .shrinker import residual_system

logger = logging.getLogger(__name__)

EXTINCTION = "extinction"
TIME_BUDGET = "time_budget"
FLOWS = ("original", "rescaled")

DEFAULT_ODE_TOL = 1e-8
EXTINCTION_FRACTION = 1e-4
COMPLETION_FRACTION = 0.1
COMPLETION_DRIFT = 1e-6
COLLISION_GAP = 1e-4
DIVERGENCE_FACTOR = 1e6
COMPLETION_SAMPLES = 10
MAX_STEPS = 100000


def collision_tag(i, j):
    """Termination tag for spheres i and i+1 meeting (1-based; 0 is the origin)."""
    return f"collision({i},{j})"


def divergence_tag(threshold):
    return f"divergence({threshold:g})"


@dataclass(frozen=True)
class FlowState:
    """Radii of a radial set at one time; a dead state (after extinction) has zero radii."""
    time: float
    radii: tuple
    contains_origin: bool = False
    alive: bool = True

    def __post_init__(self):
        radii = tuple(float(r) for r in np.atleast_1d(self.radii))
        object.__setattr__(self, "radii", radii)
        if self.alive:
            # Validates ordering, positivity and parity
            RadialSet(radii, self.contains_origin)
        elif any(r != 0 for r in radii):
            raise ParameterError("A dead flow state has zero radii")

    @property
    def array(self):
        return np.array(self.radii)

    @property
    def radial_set(self):
        return RadialSet(self.radii, self.contains_origin)


@dataclass(frozen=True)
class FlowTrace:
    """Time-ordered flow states and why the integration stopped.

    `termination` is "extinction", "time_budget", "collision(i,i+1)" or
    "divergence(threshold)"; `extinction_time` is set for extinction only.
    """
    states: tuple
    termination: str
    termination_time: float
    which: str = "original"
    extinction_time: float = None

    @property
    def times(self):
        return np.array([state.time for state in self.states])

    @property
    def radii(self):
        """Radii as an array, one row per state."""
        return np.array([state.radii for state in self.states])

    def alive_states(self):
        return [state for state in self.states if state.alive]

    def scaled(self, factor):
        """Same trace with every radius multiplied by `factor`; dead states stay at zero."""
        states = tuple(replace(state, radii=tuple(factor*r for r in state.radii)) for state in self.states)
        return replace(self, states=states)


def original_rhs(p, state, q=DEFAULT_QUADRATURE):
    """ṙ_i = -ε_i H_s(x_{r_i}), i.e. the rescaled velocity minus r."""
    radial_set = state.radial_set
    return residual_system(p, radial_set, q) - radial_set.array


def rescaled_rhs(p, state, q=DEFAULT_QUADRATURE):
    """ṙ_i = -ε_i H_s(x_{r_i}) + r_i."""
    return residual_system(p, state.radial_set, q)


def _gaps(y):
    """Relative distances to the origin (first entry) and between neighbouring radii."""
    return np.concatenate(([y[0]/y[-1]], np.diff(y)/y[1:]))


def _closest_tag(y):
    k = int(np.argmin(_gaps(y)))
    return collision_tag(k, k + 1)


def _singular_tag(y, y0, completion_fraction):
    """Classify a failure of the right-hand side after the last accepted state y.

    A set that has shrunk below `completion_fraction` of its initial size
    with every relative gap at least half its initial value is vanishing as a
    whole; anything else is the closest pair meeting.
    """
    if y[-1] < completion_fraction*y0[-1] and np.min(_gaps(y)/_gaps(y0)) > 0.5:
        return EXTINCTION
    return _closest_tag(y)


def _event(y, initial_max, collision_gap, divergence_factor):
    if np.any(~np.isfinite(y)) or np.any(y <= 0) or np.any(np.diff(y) <= 0):
        return None
    gaps = _gaps(y)
    if np.min(gaps) < collision_gap:
        k = int(np.argmin(gaps))
        return collision_tag(k, k + 1)
    threshold = divergence_factor*initial_max
    if np.max(y) > threshold:
        return divergence_tag(divergence_factor)
    return None


def _completion(p, state, fun, samples, which):
    """Finish a self-similar shrinking by its closed form.

    For a fixed shape, w = r_m^{1+s} and h = r_m^s H_s(x_{r_m}) give
    w' = -(1+s)h under the original flow and w' = (1+s)(w - h) under the
    rescaled one.  Returns None unless the set is heading for extinction.
    """
    s = p.s
    y = state.array
    velocity = fun(state.time, y)[-1]
    curvature = -velocity if which == "original" else y[-1] - velocity
    w0 = y[-1]**(1 + s)
    h = y[-1]**s*curvature
    if which == "original":
        if not h > 0:
            return None
        remaining = w0/((1 + s)*h)

        def power(tau):
            return w0 - (1 + s)*h*tau
    else:
        if not h > w0:
            return None
        remaining = np.log(h/(h - w0))/(1 + s)

        def power(tau):
            return h + (w0 - h)*np.exp((1 + s)*tau)
    end = state.time + remaining
    states = []
    for k in range(1, samples):
        tau = k/samples*remaining
        scale = (power(tau)/w0)**(1/(1 + s))
        states.append(FlowState(state.time + tau, tuple(scale*y), state.contains_origin))
    states.append(FlowState(end, tuple(np.zeros_like(y)), state.contains_origin, alive=False))
    return states, end


def integrate(p, initial, which="original", horizon=1.0, q=DEFAULT_QUADRATURE, ode_tol=DEFAULT_ODE_TOL,
              max_steps=MAX_STEPS, extinction_fraction=EXTINCTION_FRACTION,
              completion_fraction=COMPLETION_FRACTION, completion_drift=COMPLETION_DRIFT,
              collision_gap=COLLISION_GAP, divergence_factor=DIVERGENCE_FACTOR,
              completion_samples=COMPLETION_SAMPLES):
    """Integrate the original or rescaled flow from a radial set.

    Parameters
    ----------
    p : KernelParams
    initial : FlowState
    which : str
        "original" or "rescaled"
    horizon : float
        Length of the time interval
    q : QuadratureConfig
        Quadrature inside the right-hand side
    ode_tol : float
        Relative local error tolerance of the Runge-Kutta pair
    max_steps : int
        Step budget
    extinction_fraction : float
        Extinction is declared when the outer radius falls below this
        fraction of its initial value
    completion_drift : float
        Once a step changes the radius ratios by less than `completion_drift`
        per e-fold of shrinking of the outer radius, and extinction falls
        inside the horizon, the rest of the evolution is completed in closed
        form
    completion_fraction : float
        If the right-hand side breaks down after the outer radius fell below
        this fraction of its initial value with every gap still at least half
        its initial relative size, the set is taken to be going extinct
    collision_gap : float
        Relative gap at which two spheres (or the innermost sphere and the
        origin) are declared to have collided
    divergence_factor : float
        Divergence is declared when a radius exceeds this multiple of the
        largest initial radius

    Returns
    -------
    FlowTrace
        Expected singular events end the trace with their tag instead of
        raising.
    """
    if which not in FLOWS:
        raise ParameterError(f"which must be one of {FLOWS}, got {which!r}")
    if not horizon > 0:
        raise ParameterError(f"horizon must be positive, got {horizon}")
    if not initial.alive:
        raise ParameterError("Cannot integrate from a dead state")
    rhs = original_rhs if which == "original" else rescaled_rhs
    contains_origin = initial.contains_origin

    def fun(t, y):
        return rhs(p, FlowState(t, tuple(y), contains_origin), q)

    y0 = initial.array
    outer0 = y0[-1]
    solver = scipy.integrate.RK45(fun, initial.time, y0, t_bound=initial.time + horizon, rtol=ode_tol,
                                  atol=1e-3*ode_tol*y0[0])
    states = [initial]
    ratios = y0/outer0

    def finish(tag, extra=(), extinction_time=None):
        trace_states = tuple(states) + tuple(extra)
        logger.info("%s flow stopped: %s at t=%.6g after %d steps", which, tag, trace_states[-1].time,
                    len(states) - 1)
        return FlowTrace(states=trace_states, termination=tag, termination_time=trace_states[-1].time,
                         which=which, extinction_time=extinction_time)

    def complete(state):
        try:
            return _completion(p, state, fun, completion_samples, which)
        except (ParameterError, DegenerateConfigurationError, ToleranceError) as e:
            logger.debug("No closed-form completion from t=%.6g: %s", state.time, e)
            return None

    def extinct(state, completion=None):
        completion = completion or complete(state)
        if completion is None:
            return finish(EXTINCTION, extinction_time=state.time)
        extra, end = completion
        logger.info("Closed-form completion from t=%.6g, extinction at %.10g", state.time, end)
        return finish(EXTINCTION, extra, end)

    def singular():
        last = states[-1]
        tag = _singular_tag(last.array, y0, completion_fraction)
        return extinct(last) if tag == EXTINCTION else finish(tag)

    for _ in range(max_steps):
        try:
            message = solver.step()
        except (ParameterError, DegenerateConfigurationError, ToleranceError) as e:
            logger.debug("Right-hand side failed near a singular event: %s", e)
            return singular()
        if solver.status == "failed":
            logger.debug("Integrator failed: %s", message)
            return singular()
        y = solver.y.copy()
        previous_outer = states[-1].radii[-1]
        tag = _event(y, np.max(y0), collision_gap, divergence_factor)
        try:
            state = FlowState(solver.t, tuple(y), contains_origin)
        except ParameterError:
            return singular()
        states.append(state)
        if tag is not None:
            return finish(tag)
        drift = float(np.max(np.abs(y/y[-1] - ratios)))
        ratios = y/y[-1]
        if y[-1] < previous_outer and drift < completion_drift*np.log(previous_outer/y[-1]):
            completion = complete(state)
            if completion is not None and completion[1] <= solver.t_bound:
                return extinct(state, completion)
        if y[-1] < extinction_fraction*outer0:
            return extinct(state)
        if solver.status == "finished":
            return finish(TIME_BUDGET)
    raise BudgetExhaustedError(f"Flow used its budget of {max_steps} steps before t={initial.time + horizon}",
                               best=states[-1].array)


def deviation(trace, reference, component="orthogonal"):
    """Norm of r(t) - reference, split along the reference direction.

    component is "orthogonal" (part orthogonal to the reference), "radial"
    (size of the part along it) or "full".
    """
    reference = np.asarray(reference, dtype=float)
    direction = reference/np.linalg.norm(reference)
    states = trace.alive_states()
    diff = np.array([state.radii for state in states]) - reference
    along = diff @ direction
    if component == "radial":
        values = np.abs(along)
    elif component == "orthogonal":
        values = np.linalg.norm(diff - along[:, None]*direction, axis=1)
    elif component == "full":
        values = np.linalg.norm(diff, axis=1)
    else:
        raise ParameterError(f"component must be 'orthogonal', 'radial' or 'full', got {component!r}")
    return np.array([state.time for state in states]), values


def growth_rate(trace, reference, window=(1e-4, 1e-2), component="orthogonal"):
    """Exponential growth rate of the deviation from `reference` while it lies in `window`.

    The rate is the slope of a least-squares line through log(deviation)
    against time.
    """
    times, values = deviation(trace, reference, component)
    mask = (values >= window[0]) & (values <= window[1])
    if np.count_nonzero(mask) < 3:
        raise ParameterError(f"Only {np.count_nonzero(mask)} states have deviation inside {window}")
    slope, _ = np.polyfit(times[mask], np.log(values[mask]), 1)
    return float(slope)


def ratio_drift(trace, until_fraction=COMPLETION_FRACTION):
    """Largest relative change of r_i/r_m from its initial value while r_m >= until_fraction·r_m(0)."""
    states = trace.alive_states()
    radii = np.array([state.radii for state in states])
    keep = radii[:, -1] >= until_fraction*radii[0, -1]
    ratios = radii[keep]/radii[keep, -1:]
    return float(np.max(np.abs(ratios/ratios[0] - 1)))


def extinction_law_residual(trace, s):
    """Relative misfit of a straight line through r_m(t)^{1+s}."""
    states = trace.alive_states()
    times = np.array([state.time for state in states])
    power = np.array([state.radii[-1] for state in states])**(1 + s)
    coeffs = np.polyfit(times, power, 1)
    return float(np.max(np.abs(np.polyval(coeffs, times) - power))/power[0])


def ball_extinction_time(p, radius, q=DEFAULT_QUADRATURE):
    """Lifetime r^{1+s} / ((1+s) k(n,s)) of a ball under the original flow."""
    return radius**(1 + p.s)/((1 + p.s)*ball_curvature_constant(p, q))
