"""Control sensitivities and the derivative of ``Gamma: u -> gamma^u(0)``."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import simpson
from scipy.linalg import expm

from .errors import SingularMatrix, SingularMonodromy
from .flow import variational_flow
from .ode import DEFAULT_RTOL, TimeGrid
from .periodic import SINGULAR_COND, PeriodicSolution
from .system import BilinearSystem, ConstantControl, PeriodicControl


@dataclass
class DirectionalSensitivity:
    """``z(t) = dx/du(t; u, x0) du`` sampled on ``grid``; ``z[0] = 0``."""

    grid: TimeGrid
    z: np.ndarray
    direction: PeriodicControl


def directional_state_sensitivities(sys: BilinearSystem, u: PeriodicControl, x0,
                                    directions: Sequence[PeriodicControl],
                                    grid: Optional[TimeGrid] = None,
                                    tol: float = DEFAULT_RTOL) -> list:
    """Batch version of :func:`directional_state_sensitivity`, one integration."""
    flow = variational_flow(sys, u, x0, grid=grid, tol=tol, transfer=False,
                            directions=list(directions))
    return [DirectionalSensitivity(flow.grid, flow.sens[:, j], du)
            for j, du in enumerate(directions)]


def directional_state_sensitivity(sys: BilinearSystem, u: PeriodicControl, x0,
                                  du: PeriodicControl, grid: Optional[TimeGrid] = None,
                                  tol: float = DEFAULT_RTOL) -> DirectionalSensitivity:
    """Solve ``z' = J(x, u) z + (M(x) + Df(u)) du``, ``z(0) = 0``, along ``x(t; u, x0)``."""
    return directional_state_sensitivities(sys, u, x0, [du], grid, tol)[0]


def _newton_matrix(sol: PeriodicSolution) -> np.ndarray:
    if not sol.monodromy.nondegenerate:
        raise SingularMonodromy("monodromy matrix has an eigenvalue at 1")
    A = sol.monodromy.Phi_T - np.eye(sol.gamma0.size)
    if not np.linalg.cond(A) < SINGULAR_COND:
        raise SingularMonodromy("Phi(T;0) - I is numerically singular")
    return A


def dgamma_batch(sys: BilinearSystem, sol: PeriodicSolution,
                 directions: Sequence[PeriodicControl], tol: Optional[float] = None):
    """``dGamma(u) du`` for several directions; returns ``(values, sensitivities)``.

    ``values`` has shape ``(d, n)``; the sensitivities are the ``z`` curves
    along ``gamma^u`` reused by the first-order GOE.
    """
    A = _newton_matrix(sol)
    for du in directions:
        sys.check_perturbation(du)
    sens = directional_state_sensitivities(sys, sol.control, sol.gamma0, directions,
                                           tol=sol.tol if tol is None else tol)
    zT = np.array([s.z[-1] for s in sens]).reshape(len(directions), sys.n)
    return -np.linalg.solve(A, zT.T).T, sens


def dgamma_apply(sys: BilinearSystem, sol: PeriodicSolution, du: PeriodicControl) -> np.ndarray:
    """Frechet derivative of ``Gamma`` at ``sol.control`` applied to ``du``.

    Computed as ``-(Phi(T;0) - I)^{-1} z(T)`` with ``z`` from the variational
    equation along the periodic solution.
    """
    return dgamma_batch(sys, sol, [du])[0][0]


def dgamma_constant(sys: BilinearSystem, vbar, e, T: float, du: PeriodicControl,
                    equilibrium_tol: float = 1e-8) -> np.ndarray:
    """``dGamma`` at the constant control ``vbar`` from matrix exponentials.

    Evaluates ``-(exp(HT) - I)^{-1} int_0^T exp(H(T-s)) B du(s) ds`` with
    ``H = J(e, vbar)`` and ``B = M(e) + Df(vbar)``, using composite Simpson
    on the control's sample grid (``k`` must be even). The quadrature error
    is ``O((T/k)^4)``; stiff ``H`` needs a correspondingly fine grid.

    Raises
    ------
    ValueError
        ``e`` is not an equilibrium for ``vbar``, ``k`` is odd, or the periods differ.
    SingularMatrix
        ``exp(HT) - I`` is singular.
    """
    v = vbar.value if isinstance(vbar, ConstantControl) else np.asarray(vbar, dtype=float)
    e = np.asarray(e, dtype=float)
    resid = np.max(np.abs(sys.vector_field(e, v)))
    if resid > equilibrium_tol:
        raise ValueError(f"e is not an equilibrium for vbar (|f + M v| = {resid:.2e})")
    if du.period != T:
        raise ValueError("perturbation period differs from T")
    k = du.k
    if k % 2:
        raise ValueError("Simpson quadrature needs an even number of samples")
    n = e.size
    H = sys.J(e, v)
    B = sys.M(e) + sys.Df(v)
    A = expm(H * T) - np.eye(n)
    if not np.linalg.cond(A) < SINGULAR_COND:
        raise SingularMatrix("exp(HT) - I is singular")
    step = expm(H * (T / k))
    vals = du.nodal_values() @ B.T          # (k+1, n): B du(s_j)
    integrand = np.empty_like(vals)
    acc = np.eye(n)                          # exp(H (T - s_j)), built from s_k = T down
    for j in range(k, -1, -1):
        integrand[j] = acc @ vals[j]
        acc = step @ acc
    integral = simpson(integrand, dx=T / k, axis=0)
    return -np.linalg.solve(A, integral)
