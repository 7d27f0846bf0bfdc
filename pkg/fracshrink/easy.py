import logging
import warnings

import numpy as np

from .errors import ParameterError
from .flow import FlowState, growth_rate, integrate
from .kernel import DEFAULT_QUADRATURE, KernelParams
from .shrinker import ball_shrinker, cylinder_shrinker, find_annulus_shrinker, find_shrinker
from .stability import stability_report

logger = logging.getLogger(__name__)

PERTURBATIONS = ("none", "unstable", "radial", "random")


def stationary_set(n, s, N=1, family="annuli-only", cylinder_k=None, q=DEFAULT_QUADRATURE, tol=1e-9, **kwargs):
    """Find a stationary radial set in one call.

    This is a simplified interface to the solvers in `fracshrink.shrinker`,
    choosing bisection for a single annulus and the continuation solver
    otherwise.

    Parameters
    ----------
    n : int
        Ambient dimension
    s : float in (0,1)
        Fractional order
    N : int
        Number of annuli.  N = 0 with family "ball-plus-annuli" gives the ball.
    family : str
        "annuli-only" or "ball-plus-annuli"
    cylinder_k : int or None
        If given, find the cylinder R^{n-k} × (k-dimensional cross-section)
    q : QuadratureConfig
    tol : float
        Bound on the residual
    **kwargs
        Passed on to find_shrinker (strategy, explore)

    Returns
    -------
    ShrinkerSolution
    """
    p = KernelParams(n, s)
    if cylinder_k is not None:
        return cylinder_shrinker(p, cylinder_k, N, family, q, tol, **kwargs)
    if N == 0 and family == "ball-plus-annuli":
        return ball_shrinker(p, q, tol)
    if N == 1 and family == "annuli-only" and not kwargs:
        return find_annulus_shrinker(p, q, tol)
    return find_shrinker(p, N, family, q, tol, **kwargs)


def perturbed_state(sol, report=None, kind="unstable", amplitude=1e-4, seed=0):
    """Initial flow state near a stationary set.

    kind is "none", "unstable" (along the report's unstable direction),
    "radial" (scale by 1 + amplitude) or "random" (a seeded unit vector).
    """
    radii = sol.radii.copy()
    if kind == "unstable":
        if report is None or report.unstable_direction is None:
            warnings.warn("No unstable direction for a single radius; starting unperturbed")
        else:
            radii = radii + amplitude*report.unstable_direction
    elif kind == "radial":
        radii = radii*(1 + amplitude)
    elif kind == "random":
        direction = np.random.default_rng(seed).standard_normal(len(radii))
        radii = radii + amplitude*direction/np.linalg.norm(direction)
    elif kind != "none":
        raise ParameterError(f"Invalid perturbation {kind!r}, use one of {PERTURBATIONS}")
    return FlowState(0.0, tuple(radii), sol.set.contains_origin)


def flow_from_shrinker(sol, which="original", kind=None, amplitude=1e-4, seed=0, horizon=None,
                       q=DEFAULT_QUADRATURE, ode_tol=1e-8):
    """Evolve a stationary set, perturbed or not, and measure what the flow does.

    The original flow is started unperturbed by default and should go extinct
    at t = 1/(1+s); the rescaled flow is started along the unstable direction
    by default and the growth of the deviation is compared with the top
    eigenvalue of the Jacobian.  A cylinder is evolved through its
    cross-section, perturbed as the section would be, and the trace is scaled
    back by `sol.scale`.

    Returns
    -------
    trace : FlowTrace
    summary : dict
        termination, termination_time, extinction_time, and for the rescaled
        flow the measured growth_rate and the predicted eigenvalue
    """
    if sol.section_n is not None:
        trace, summary = flow_from_shrinker(sol.section(), which, kind, amplitude, seed, horizon, q, ode_tol)
        summary["cylinder_scale"] = sol.scale
        return trace.scaled(sol.scale), summary
    p = sol.params
    if kind is None:
        kind = "none" if which == "original" else "unstable"
    report = stability_report(p, sol, q) if (kind == "unstable" or which == "rescaled") else None
    initial = perturbed_state(sol, report, kind, amplitude, seed)
    if horizon is None:
        if which == "original":
            horizon = 1.5/(1 + p.s)
        else:
            # long enough for the deviation to leave the measurement window
            horizon = 1.5*np.log(1e-2/amplitude)/max(report.eigenvalues[0], 1e-3)
    trace = integrate(p, initial, which, horizon, q, ode_tol)
    summary = {"termination": trace.termination, "termination_time": trace.termination_time,
               "extinction_time": trace.extinction_time, "perturbation": kind, "amplitude": amplitude}
    if which == "original":
        summary["predicted_extinction_time"] = 1/(1 + p.s)
    else:
        component = "radial" if kind == "radial" else "orthogonal"
        predicted = p.s + 1 if kind == "radial" else float(report.eigenvalues[0])
        try:
            measured = growth_rate(trace, sol.radii, window=(2*amplitude, 1e-2), component=component)
        except ValueError as e:
            logger.warning("Growth rate not measured: %s", e)
            measured = None
        summary.update(growth_rate=measured, predicted_growth_rate=predicted, component=component)
    return trace, summary
