"""Joint integration of a trajectory with its variational equations.

The state ``x``, the transfer matrix ``Phi(t; 0)`` and any number of
directional control sensitivities ``z_j(t)`` are packed into one vector and
advanced by the same integrator, so the Jacobians are always evaluated on the
exact reference trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import StateLeftDomain
from .ode import DEFAULT_RTOL, TimeGrid, integrate
from .system import BilinearSystem, PeriodicControl, eval_control


@dataclass
class Flow:
    grid: TimeGrid
    states: np.ndarray                      # (N, n)
    transfer: Optional[np.ndarray] = None   # (N, n, n), Phi(t_i; 0)
    sens: Optional[np.ndarray] = None       # (N, d, n), z_j(t_i)
    stats: dict = None
    derivs: Optional[np.ndarray] = None     # (N, n), x'(t_i) for Hermite dense output


def _domain_check(sys: BilinearSystem):
    if sys.state_check is None:
        return None
    n = sys.n

    def check(t, y):
        x = y[:n]
        if not sys.state_check(x):
            raise StateLeftDomain(f"state left the domain of {sys.name} at t={t:.6g}", t, x.copy())

    return check


def variational_flow(
    sys: BilinearSystem,
    u: PeriodicControl,
    x0,
    grid: Optional[TimeGrid] = None,
    tol: float = DEFAULT_RTOL,
    transfer: bool = True,
    directions: Sequence[PeriodicControl] = (),
    method: str = "dopri5",
    step: Optional[float] = None,
) -> Flow:
    """Integrate ``x``, optionally ``Phi(t;0)``, and ``z_j`` for each direction.

    ``z_j`` solves ``z' = J(x, u) z + (M(x) + Df(u)) du_j(t)``, ``z(0) = 0``.
    The default grid is the control's own sample grid over one period.
    """
    n = sys.n
    grid = u.grid() if grid is None else grid
    d = len(directions)
    nphi = n * n if transfer else 0
    x0 = np.asarray(x0, dtype=float).reshape(n)
    y0 = np.concatenate([x0, np.eye(n).ravel() if transfer else [], np.zeros(n * d)])

    def f(t, y):
        ut = eval_control(u, t)
        x = y[:n]
        dx = sys.f(ut) + sys.M(x) @ ut
        if not transfer and not d:
            return dx
        Jx = sys.J(x, ut)
        parts = [dx]
        if transfer:
            parts.append((Jx @ y[n:n + nphi].reshape(n, n)).ravel())
        if d:
            Z = y[n + nphi:].reshape(n, d)
            B = sys.M(x) + sys.Df(ut)
            DU = np.column_stack([eval_control(du, t) for du in directions])
            parts.append((Jx @ Z + B @ DU).ravel())
        return np.concatenate(parts)

    traj = integrate(f, y0, grid, tol, method=method, step=step, check=_domain_check(sys))
    Y = traj.states
    N = Y.shape[0]
    return Flow(
        grid=grid,
        states=Y[:, :n].copy(),
        transfer=Y[:, n:n + nphi].reshape(N, n, n).copy() if transfer else None,
        sens=Y[:, n + nphi:].reshape(N, n, d).transpose(0, 2, 1).copy() if d else None,
        stats=traj.stats,
        derivs=traj.derivs[:, :n].copy(),
    )
