"""Average outputs, gain of entrainment (GOE) and its first-order kernel.

For a T-periodic control ``u`` with periodic solution ``gamma^u`` the average
output is ``ybar(u) = (1/T) int_0^T h(u(t), gamma^u(t)) dt``. The GOE of a
perturbation ``du`` is ``ybar(u + du) - ybar(u)``. To first order it equals
``(1/T) int_0^T K(t) du(t) dt`` for a row-vector kernel ``K``.

All quadratures are composite Simpson on the control's sample grid.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import cumulative_simpson, simpson

from .errors import IllConditionedTransfer, SingularMatrix
from .flow import variational_flow
from .ode import DEFAULT_RTOL, TimeGrid
from .periodic import DEFAULT_NEWTON_TOL, SINGULAR_COND, PeriodicSolution, solve_periodic
from .sensitivity import _newton_matrix, dgamma_batch
from .system import BilinearSystem, ConstantControl, LINEAR, PeriodicControl

log = logging.getLogger(__name__)

TRANSFER_COND = 1e10


@dataclass
class GoeReport:
    ybar_base: float
    ybar_pert: float
    goe: float
    first_order_prediction: float
    residual: float
    du_norm: float

    def as_dict(self) -> dict:
        return {k: float(v) for k, v in self.__dict__.items()}


@dataclass
class KernelSamples:
    """``K(t_i)`` as rows of ``values`` (shape ``(N, m)``) on ``grid``."""

    grid: TimeGrid
    values: np.ndarray
    pinned: tuple = ()
    method: str = "sweep"
    stats: dict = field(default_factory=dict)

    @property
    def period(self) -> float:
        return self.grid.span

    def apply(self, du: PeriodicControl) -> float:
        """First-order GOE ``(1/T) int K(t) du(t) dt`` of a perturbation."""
        D = _values_on_grid(du, self.grid)
        return float(simpson(np.sum(self.values * D, axis=1), x=self.grid.nodes) / self.period)


def _values_on_grid(u: PeriodicControl, grid: TimeGrid) -> np.ndarray:
    if grid.uniform and len(grid) == u.k + 1 and grid.t0 == 0.0 and grid.t1 == u.period:
        return u.nodal_values()
    return u.values_on(grid.nodes)


def zero_mean(du: PeriodicControl) -> PeriodicControl:
    """Project a perturbation onto zero mean (exact on the sample grid)."""
    return du.zero_mean()


def _outputs(sys: BilinearSystem, u: PeriodicControl, grid: TimeGrid, states) -> np.ndarray:
    U = _values_on_grid(u, grid)
    return np.array([sys.h(U[i], states[i]) for i in range(len(grid))], dtype=float)


def average_output(sys: BilinearSystem, sol: PeriodicSolution) -> float:
    """``(1/T) int_0^T h(u(t), gamma^u(t)) dt`` by composite Simpson."""
    grid = sol.trajectory.grid
    y = _outputs(sys, sol.control, grid, sol.states)
    return float(simpson(y, x=grid.nodes) / sol.period)


def goe_first_order_batch(sys: BilinearSystem, sol: PeriodicSolution,
                          directions: Sequence[PeriodicControl]) -> np.ndarray:
    """First-order GOE for several perturbations with one sensitivity integration."""
    if not len(directions):
        return np.zeros(0)
    dg, sens = dgamma_batch(sys, sol, directions)
    grid = sol.trajectory.grid
    U = _values_on_grid(sol.control, grid)
    X = sol.states
    hu = np.array([sys.h_u(U[i], X[i]) for i in range(len(grid))])
    hx = np.array([sys.h_x(U[i], X[i]) for i in range(len(grid))])
    out = np.empty(len(directions))
    for j, du in enumerate(directions):
        D = _values_on_grid(du, grid)
        w = np.einsum("inm,m->in", sol.transfer, dg[j]) + sens[j].z
        integrand = np.sum(hu * D, axis=1) + np.sum(hx * w, axis=1)
        out[j] = simpson(integrand, x=grid.nodes) / sol.period
    return out


def goe_first_order(sys: BilinearSystem, sol: PeriodicSolution, du: PeriodicControl) -> float:
    """First-order GOE prediction at ``sol.control`` in the direction ``du``.

    ``(1/T) int h_u du + (1/T) int h_x (Phi(t;0) dGamma(u) du + z(t))``,
    with ``z`` the directional state sensitivity along ``gamma^u``.
    """
    return float(goe_first_order_batch(sys, sol, [du])[0])


def goe_exact(sys: BilinearSystem, u: PeriodicControl, du: PeriodicControl,
              newton_tol: float = DEFAULT_NEWTON_TOL, tol: float = DEFAULT_RTOL,
              base: Optional[PeriodicSolution] = None, first_order: bool = True,
              **solver_kw) -> GoeReport:
    """GOE of ``du`` about ``u`` from two independently converged periodic solutions.

    A precomputed ``base`` solution for ``u`` may be passed to save one solve.
    """
    sys.check_perturbation(du)
    if base is None:
        base = solve_periodic(sys, u, newton_tol=newton_tol, tol=tol, **solver_kw)
    pert = solve_periodic(sys, u + du, x_init=base.gamma0, newton_tol=newton_tol,
                          tol=tol, **solver_kw)
    y0 = average_output(sys, base)
    y1 = average_output(sys, pert)
    pred = goe_first_order(sys, base, du) if first_order else float("nan")
    goe = y1 - y0
    return GoeReport(y0, y1, goe, pred, goe - pred, sys.control_norm(du))


def cumulative_quad4(y, grid: TimeGrid) -> np.ndarray:
    """Running integrals ``int_{t_0}^{t_i} y`` along axis 0, ``O(h^4)`` accurate.

    On a uniform grid each interval is integrated with the cubic through the
    four nearest nodes (one-sided at the ends). Other grids fall back to
    cumulative Simpson.
    """
    y = np.asarray(y, dtype=float)
    N = y.shape[0]
    if not grid.uniform or N < 4:
        return cumulative_simpson(y, x=grid.nodes, axis=0, initial=0.0)
    h = grid.span / (N - 1)
    pieces = np.empty((N - 1,) + y.shape[1:])
    pieces[1:-1] = -y[:-3] + 13 * y[1:-2] + 13 * y[2:-1] - y[3:]
    pieces[0] = 9 * y[0] + 19 * y[1] - 5 * y[2] + y[3]
    pieces[-1] = 9 * y[-1] + 19 * y[-2] - 5 * y[-3] + y[-4]
    out = np.zeros_like(y)
    out[1:] = np.cumsum(pieces * (h / 24), axis=0)
    return out


def _kernel_sweep(sys, sol, U, X, B, hu, hx, lhs_row):
    grid = sol.trajectory.grid
    Phi = sol.transfer
    integrand = np.einsum("in,inm->im", hx, Phi)            # h_x(s) Phi(s;0)
    cum = cumulative_quad4(integrand, grid)
    Q = cum[-1] - cum                                          # int_t^T h_x Phi(s;0) ds
    K = np.empty_like(hu)
    for i in range(len(grid)):
        r = Q[i] - lhs_row
        # r Phi(t;0)^{-1} via a transposed solve
        K[i] = hu[i] + np.linalg.solve(Phi[i].T, r) @ B[i]
    return K


def _kernel_reintegrate(sys, sol, U, X, B, hu, hx, c_row_over_A, tol):
    grid = sol.trajectory.grid
    nodes = grid.nodes
    N = nodes.size
    n = sys.n
    K = np.empty_like(hu)
    for i in range(N):
        if i == N - 1:
            Qt, PhiTt = np.zeros(n), np.eye(n)
        else:
            # midpoints keep the Simpson interval count even on short tails
            sub = TimeGrid.linspace(nodes[i], nodes[-1], 2 * (N - 1 - i))
            fl = variational_flow(sys, sol.control, X[i], grid=sub, tol=tol)
            Us = sol.control.values_on(sub.nodes)
            hxs = np.array([sys.h_x(Us[j], fl.states[j]) for j in range(len(sub))])
            integrand = np.einsum("in,inm->im", hxs, fl.transfer)
            Qt = simpson(integrand, x=sub.nodes, axis=0)
            PhiTt = fl.transfer[-1]
        K[i] = hu[i] + (Qt - c_row_over_A @ PhiTt) @ B[i]
    return K


def goe_kernel(sys: BilinearSystem, sol: PeriodicSolution, method: str = "auto",
               tol: Optional[float] = None) -> KernelSamples:
    """Kernel ``K(t)`` with ``first-order GOE = (1/T) int K(t) du(t) dt``.

    ``K(t) = h_u(t) + [Q(t) - c (Phi_T - I)^{-1} Phi_T] Phi(t;0)^{-1} B(t)``
    where ``Q(t) = int_t^T h_x(s) Phi(s;0) ds``, ``c = Q(0)``,
    ``Phi_T = Phi(T;0)`` and ``B = M(x) + Df(u)``.

    Parameters
    ----------
    method : {"auto", "sweep", "reintegrate"}
        ``sweep`` reuses the stored ``Phi(t;0)`` with one backward cumulative
        quadrature. ``reintegrate`` integrates ``Phi(s;t)`` afresh from every
        node, which is ``O(N^2)`` but avoids inverting ``Phi(t;0)``. ``auto``
        sweeps unless some ``cond(Phi(t;0))`` exceeds ``1e10``.

    Raises
    ------
    SingularMonodromy
        If ``Phi_T - I`` is singular.
    IllConditionedTransfer
        With ``method="sweep"`` when the transfer matrices are too ill
        conditioned to invert.
    """
    if method not in ("auto", "sweep", "reintegrate"):
        raise ValueError(f"unknown kernel method {method!r}")
    A = _newton_matrix(sol)
    grid = sol.trajectory.grid
    N = len(grid)
    U = _values_on_grid(sol.control, grid)
    X = sol.states
    hu = np.array([sys.h_u(U[i], X[i]) for i in range(N)], dtype=float)
    hx = np.array([sys.h_x(U[i], X[i]) for i in range(N)], dtype=float)
    B = np.array([sys.M(X[i]) + sys.Df(U[i]) for i in range(N)])
    Phi_T = sol.transfer[-1]
    c = simpson(np.einsum("in,inm->im", hx, sol.transfer), x=grid.nodes, axis=0)
    a = np.linalg.solve(A.T, c)                              # c (Phi_T - I)^{-1}

    worst = max(np.linalg.cond(P) for P in sol.transfer)
    if method == "sweep" and not worst <= TRANSFER_COND:
        raise IllConditionedTransfer(f"max cond(Phi(t;0)) = {worst:.3e}")
    if method == "reintegrate" or (method == "auto" and not worst <= TRANSFER_COND):
        if method == "auto":
            log.warning("cond(Phi(t;0)) = %.3e; re-integrating from each node", worst)
        K = _kernel_reintegrate(sys, sol, U, X, B, hu, hx, a, sol.tol if tol is None else tol)
        used = "reintegrate"
    else:
        K = _kernel_sweep(sys, sol, U, X, B, hu, hx, a @ Phi_T)
        used = "sweep"
    K[:, list(sys.pinned)] = 0.0
    if not np.all(np.isfinite(K)):
        raise IllConditionedTransfer("kernel has non-finite values")
    return KernelSamples(grid, K, tuple(sorted(sys.pinned)), used, {"max_transfer_cond": float(worst)})


def optimal_direction_sign(kernel: KernelSamples) -> PeriodicControl:
    """Channelwise ``sgn K(t)`` on the control grid, with ``0 -> +1``.

    This maximizes the first-order gain over perturbations with
    ``|du_i(t)| <= 1``. Pinned channels are set to zero.
    """
    vals = np.asarray(kernel.values)
    if not np.all(np.isfinite(vals)):
        raise ValueError("kernel must be finite")
    S = np.where(vals < 0, -1.0, 1.0)
    S[:, list(kernel.pinned)] = 0.0
    grid = kernel.grid
    if grid.uniform and grid.t0 == 0.0:
        samples = S[:-1]
    else:
        keep = grid.nodes < grid.t1
        samples = S[keep]
    return PeriodicControl(kernel.period, samples, LINEAR)


def optimal_constant_direction(sys: BilinearSystem, vbar, e) -> np.ndarray:
    """Steepest first-order direction for constant perturbations of ``vbar``.

    Returns ``(h_u - h_x H^{-1} (M(e) + Df(vbar)))^T`` with ``H = J(e, vbar)``,
    the gradient of ``v -> h(v, e(v))`` at ``vbar``. Pinned channels are zero.

    Raises
    ------
    SingularMatrix
        If ``H`` is singular.
    """
    v = vbar.value if isinstance(vbar, ConstantControl) else np.asarray(vbar, dtype=float)
    e = np.asarray(e, dtype=float)
    H = sys.J(e, v)
    if not np.linalg.cond(H) < SINGULAR_COND:
        raise SingularMatrix("J(e, vbar) is singular")
    B = sys.M(e) + sys.Df(v)
    g = np.asarray(sys.h_u(v, e), float) - np.linalg.solve(H.T, np.asarray(sys.h_x(v, e), float)) @ B
    g[list(sys.pinned)] = 0.0
    return g
