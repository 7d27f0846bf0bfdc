import logging
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from functools import lru_cache

import numpy as np
import scipy.integrate
import scipy.special
from tqdm import tqdm

from .errors import ToleranceError

logger = logging.getLogger(__name__)

# Minimum relative gap (r_{i+1}-r_i)/r_{i+1} below which curvature is refused
DEGENERACY_GAP = 1e-6
# Half-width of the truncated tanh-sinh parameter interval.  At |t| = 3.5 the
# weights are below 1e-20, so truncation is invisible for bounded integrands.
TANH_SINH_SPAN = 3.5
TANH_SINH_MIN_LEVEL = 3
TANH_SINH_MAX_LEVEL = 10
THREADS_ENV = "FRACSHRINK_THREADS"


def unit_ball_volume(k):
    """Volume of the unit ball in k dimensions (ω_k, with ω_0 = 1)."""
    return np.pi**(k/2)/scipy.special.gamma(k/2 + 1)


def sphere_area(n):
    """Surface measure of the unit sphere in R^n, i.e. n ω_n."""
    return n*unit_ball_volume(n)


@lru_cache(maxsize=None)
def _tanh_sinh_nodes(level, first_level):
    """Return the tanh-sinh nodes that are new at `level`.

    Nodes live on (0, 1) and are returned as the pair of complementary
    positions (p, 1-p) together with the weights without the step factor.
    At the first level every node is returned; at finer levels only the odd
    multiples of the step, so the sums nest.
    """
    h = 2.0**-level
    count = int(round(TANH_SINH_SPAN/h))
    j = np.arange(-count, count + 1)
    if level > first_level:
        j = j[j % 2 != 0]
    t = h*j
    u = np.pi/2*np.sinh(t)
    p = scipy.special.expit(2*u)
    q = scipy.special.expit(-2*u)
    w = np.pi*np.cosh(t)*p*q
    for arr in (p, q, w):
        arr.setflags(write=False)
    return p, q, w


def tanh_sinh(f, a, b, rel_tol, abs_tol=0.0, min_level=TANH_SINH_MIN_LEVEL, max_level=TANH_SINH_MAX_LEVEL):
    """Double-exponential quadrature of a vectorized function.

    Integrates f over [a, b], where a and b may be arrays describing a batch
    of intervals.  The node axis is appended as the last axis, so f receives
    an array of shape ``broadcast(a, b).shape + (nodes,)`` and must return
    an array of the same shape.  The step is halved until every integral in
    the batch changes by less than the tolerance.

    Parameters
    ----------
    f : callable
        Vectorized integrand
    a, b : float or ndarray
        Integration limits
    rel_tol, abs_tol : float
        Convergence is declared when |I_k - I_{k-1}| <= max(abs_tol, rel_tol |I_k|)
    min_level, max_level : int
        The step at level k is 2^-k

    Returns
    -------
    integral, error : float or ndarray
        The integral and the change between the last two levels

    Raises
    ------
    ToleranceError
        If max_level is reached without convergence
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a, b = np.broadcast_arrays(a, b)
    width = b - a
    total = np.zeros(a.shape)
    previous = None
    error = np.full(a.shape, np.inf)
    for level in range(min_level, max_level + 1):
        p, _, w = _tanh_sinh_nodes(level, min_level)
        x = a[..., None] + width[..., None]*p
        total = total + np.sum(w*f(x), axis=-1)
        estimate = total*width*2.0**-level
        if previous is not None:
            error = np.abs(estimate - previous)
            if np.all(error <= np.maximum(abs_tol, rel_tol*np.abs(estimate))):
                return estimate, error
        previous = estimate
    worst = float(np.max(error))
    raise ToleranceError(f"tanh-sinh quadrature did not converge by level {max_level} "
                         f"(error estimate {worst:.3g})", estimate=worst,
                         requested=float(np.max(np.maximum(abs_tol, rel_tol*np.abs(previous)))))


def adaptive_quad(f, a, b, config, what="integral"):
    """Adaptive Gauss-Kronrod quadrature with the tolerances of a QuadratureConfig.

    A QUADPACK warning is accepted only when the reported error estimate is
    still inside the requested tolerance; otherwise ToleranceError is raised.

    Returns
    -------
    value, error : float
    """
    result = scipy.integrate.quad(f, a, b, epsabs=config.abs_tol, epsrel=config.rel_tol,
                                  limit=config.max_subdivisions, full_output=1)
    value, error = result[0], result[1]
    requested = max(config.abs_tol, config.rel_tol*abs(value))
    if len(result) > 3:
        if not np.isfinite(value) or error > requested:
            raise ToleranceError(f"{what}: {result[3].strip()} (error estimate {error:.3g}, "
                                 f"requested {requested:.3g})", estimate=error, requested=requested)
        logger.debug("%s: QUADPACK flag with error %.3g inside tolerance %.3g", what, error, requested)
    return value, error


def thread_count():
    """Number of worker threads allowed by the FRACSHRINK_THREADS variable."""
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        warnings.warn(f"Ignoring non-integer {THREADS_ENV}={raw!r}")
        return 1


def parallel_map(fn, items, progress=False):
    """Map fn over items, optionally on a thread pool.

    Results always come back in the order of `items`, so sums taken over them
    are deterministic whatever the thread count.  With `progress` a tqdm bar
    counts finished items.
    """
    items = list(items)
    threads = min(thread_count(), len(items))
    if threads <= 1:
        return [fn(item) for item in tqdm(items, disable=not progress)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(tqdm(pool.map(fn, items), total=len(items), disable=not progress))
