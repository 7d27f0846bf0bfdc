"""Linear stability of stationary radial sets under the rescaled flow."""
import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ParameterError, StationarityError, SymmetrizationError
from .kernel import DEFAULT_QUADRATURE, RadialSet, sphere_kernel_integral
from .shrinker import residual_jacobian, residual_system

logger = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-6
FD_TIGHTENING = 100


@dataclass(frozen=True)
class StabilityReport:
    """Spectrum of the Jacobian Dg at a stationary set.

    Attributes
    ----------
    jacobian : ndarray (m, m)
    eigenvalues : ndarray (m,)
        Sorted descending
    eigenvectors : ndarray (m, m)
        Column k is the unit eigenvector of eigenvalue k
    morse_index : int
        Number of strictly positive eigenvalues
    radial_eigen_defect : float
        ‖Dg r̄ - (s+1) r̄‖ / ‖r̄‖
    unstable_direction : ndarray (m,) or None
        Top eigenvector made orthogonal to r̄; None for a single radius
    symmetrization_defect : float
        Relative asymmetry of the diagonally conjugated Jacobian
    symmetrized : ndarray (m, m)
        The conjugated Jacobian, symmetric part
    """
    jacobian: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    morse_index: int
    radial_eigen_defect: float
    unstable_direction: np.ndarray
    symmetrization_defect: float
    symmetrized: np.ndarray


def _reduced(p, sol):
    # A cylinder is analysed through its cross-section; radii differ by a common
    # factor, which leaves Dg unchanged.
    if sol.section_n is None:
        return p, sol
    section = sol.section()
    return section.params, section


def jacobian(p, sol, q=DEFAULT_QUADRATURE):
    """Dg at a stationary solution, with the diagonal in its stationary form.

    For a cylinder this is the Jacobian of its cross-section.

    Raises
    ------
    StationarityError
        If the solution's residual exceeds its tolerance
    """
    p, sol = _reduced(p, sol)
    if not sol.residual_norm <= sol.tol:
        raise StationarityError(f"Residual {sol.residual_norm:.3g} exceeds tolerance {sol.tol:.3g}; "
                                "the stationary Jacobian does not apply")
    return residual_jacobian(p, sol.set, q)


def finite_difference_jacobian(p, radial_set, q=None, step=1e-5):
    """Central differences of residual_system with steps step·r_j.

    Quadrature error is divided by the step, so the default tolerances are a
    hundred times tighter than DEFAULT_QUADRATURE.
    """
    q = DEFAULT_QUADRATURE.tighter(FD_TIGHTENING) if q is None else q
    radii = radial_set.array
    columns = []
    for j in range(radial_set.m):
        h = step*radii[j]
        up, down = radii.copy(), radii.copy()
        up[j] += h
        down[j] -= h
        g_up = residual_system(p, RadialSet(tuple(up), radial_set.contains_origin), q)
        g_down = residual_system(p, RadialSet(tuple(down), radial_set.contains_origin), q)
        columns.append((g_up - g_down)/(2*h))
    return np.column_stack(columns)


def spectrum(matrix, radii, p, symmetry_tol=SYMMETRY_TOL):
    """Eigen-decomposition of Dg through a diagonal similarity.

    Off-diagonal entries are 2(-1)^{i-j} K(r_i, r_j) and K(r_i, r_j) r_i^{n-1}
    is symmetric, so D Dg D^-1 with D = diag(r_i^{(n-1)/2}) is symmetric and
    has the same eigenvalues as Dg.  Eigenvectors are mapped back by D^-1.

    Parameters
    ----------
    matrix : ndarray (m, m)
        Jacobian at a stationary point
    radii : array-like (m,)
    p : KernelParams

    Returns
    -------
    StabilityReport

    Raises
    ------
    SymmetrizationError
        If the conjugated matrix is asymmetric beyond `symmetry_tol`, relative
    """
    matrix = np.asarray(matrix, dtype=float)
    radii = np.asarray(radii, dtype=float)
    scale = radii**((p.n - 1)/2)
    conjugated = scale[:, None]*matrix/scale[None, :]
    defect = float(np.max(np.abs(conjugated - conjugated.T))/np.max(np.abs(conjugated)))
    if defect > symmetry_tol:
        raise SymmetrizationError(f"Conjugated Jacobian asymmetric by {defect:.3g} (limit {symmetry_tol:.1g})",
                                  defect=defect)
    symmetric = (conjugated + conjugated.T)/2
    values, vectors = scipy.linalg.eigh(symmetric)
    order = np.argsort(values)[::-1]
    values = values[order]
    vectors = vectors[:, order]/scale[:, None]
    vectors /= np.linalg.norm(vectors, axis=0)
    radial_defect = float(np.linalg.norm(matrix @ radii - (p.s + 1)*radii)/np.linalg.norm(radii))
    unstable = None
    if len(radii) > 1:
        direction = radii/np.linalg.norm(radii)
        top = vectors[:, 0] - np.dot(vectors[:, 0], direction)*direction
        unstable = top/np.linalg.norm(top)
    morse = int(np.sum(values > 0))
    logger.info("Eigenvalues %s, Morse index %d", np.array2string(values, precision=6), morse)
    return StabilityReport(jacobian=matrix, eigenvalues=values, eigenvectors=vectors, morse_index=morse,
                           radial_eigen_defect=radial_defect, unstable_direction=unstable,
                           symmetrization_defect=defect, symmetrized=symmetric)


def stability_report(p, sol, q=DEFAULT_QUADRATURE):
    """jacobian followed by spectrum."""
    p, sol = _reduced(p, sol)
    return spectrum(jacobian(p, sol, q), sol.radii, p)


def corner_derivative_check(p, sol, q=DEFAULT_QUADRATURE):
    """(∂g_m/∂r_m, s+1) at the outermost radius; the first exceeds the second."""
    if sol.set.m < 2:
        raise ParameterError("The corner derivative check needs at least two radii")
    return float(jacobian(p, sol, q)[-1, -1]), p.s + 1


@dataclass(frozen=True)
class ShellMonotonicity:
    """Result of shell_monotonicity_check.

    `increasing` is whether h(t) = K(R, t) increases on the grid and
    `worst_margin` its smallest increment; `ordered` is whether r_i h(r_i)
    increases along the radii below R.
    """
    increasing: bool
    worst_margin: float
    ordered: bool

    def __bool__(self):
        return self.increasing and self.ordered


def shell_monotonicity_check(p, sol, grid_size=100, q=DEFAULT_QUADRATURE):
    """Sample h(t) = K(R, t) on (0, R), R the outermost radius."""
    if grid_size < 2:
        raise ParameterError(f"grid_size must be at least 2, got {grid_size}")
    p, sol = _reduced(p, sol)
    outer = sol.radii[-1]
    grid = outer*np.arange(1, grid_size + 1)/(grid_size + 1)
    h = np.atleast_1d(sphere_kernel_integral(p, outer, grid, q))
    increments = np.diff(h)
    inner = sol.radii[:-1]
    weighted = inner*np.atleast_1d(sphere_kernel_integral(p, outer, inner, q)) if len(inner) else np.zeros(0)
    return ShellMonotonicity(increasing=bool(np.all(increments > 0)), worst_margin=float(np.min(increments)),
                             ordered=bool(np.all(np.diff(weighted) > 0)))
