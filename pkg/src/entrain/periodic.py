"""Periodic solutions as zeros of the Poincare-type map ``P(u, x0) = x(T) - x0``."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .errors import NoConvergence, SingularMonodromy, StateLeftDomain
from .flow import variational_flow
from .ode import DEFAULT_RTOL, Trajectory
from .system import BilinearSystem, PeriodicControl

log = logging.getLogger(__name__)

NONDEGENERACY_TOL = 1e-8
SINGULAR_COND = 1e12
DEFAULT_NEWTON_TOL = 1e-12


@dataclass
class MonodromyResult:
    Phi_T: np.ndarray
    eigenvalues: np.ndarray
    min_distance_to_one: float
    nondegenerate: bool

    @classmethod
    def from_matrix(cls, Phi_T, tol: float = NONDEGENERACY_TOL) -> "MonodromyResult":
        Phi_T = np.asarray(Phi_T, dtype=float)
        lam = np.linalg.eigvals(Phi_T)
        dist = float(np.min(np.abs(lam - 1.0)))
        return cls(Phi_T, lam, dist, dist > tol)

    @property
    def spectral_radius(self) -> float:
        return float(np.max(np.abs(self.eigenvalues)))


@dataclass
class PeriodicSolution:
    """Converged T-periodic solution ``gamma^u`` with its transfer matrices.

    ``transfer[i]`` is ``Phi(t_i; 0)`` along ``gamma^u`` on the control grid.
    """

    control: PeriodicControl
    gamma0: np.ndarray
    trajectory: Trajectory
    transfer: np.ndarray
    monodromy: MonodromyResult
    residual: float
    iterations: int = 0
    tol: float = DEFAULT_RTOL

    @property
    def period(self) -> float:
        return self.control.period

    @property
    def states(self) -> np.ndarray:
        return self.trajectory.states


def poincare(sys: BilinearSystem, u: PeriodicControl, x0, tol: float = DEFAULT_RTOL,
             nondegeneracy_tol: float = NONDEGENERACY_TOL):
    """Return ``(P(u, x0), monodromy)`` from one joint state/transfer integration."""
    flow = variational_flow(sys, u, x0, tol=tol)
    P = flow.states[-1] - np.asarray(x0, dtype=float)
    return P, MonodromyResult.from_matrix(flow.transfer[-1], nondegeneracy_tol)


def _norm(v) -> float:
    return float(np.max(np.abs(v)))


def solve_periodic(
    sys: BilinearSystem,
    u: PeriodicControl,
    x_init=None,
    max_iter: int = 50,
    newton_tol: float = DEFAULT_NEWTON_TOL,
    tol: float = DEFAULT_RTOL,
    nondegeneracy_tol: float = NONDEGENERACY_TOL,
    max_halvings: int = 10,
) -> PeriodicSolution:
    """Find ``Gamma(u)`` by Newton's method on the Poincare-type map.

    The Newton matrix ``Phi(T;0) - I`` comes for free from the transfer
    matrix integrated alongside the state. A step that increases ``|P|`` is
    halved; a step that leaves the model's state space is replaced by a
    Picard step ``x <- x(T; u, x)``, which converges whenever the system
    entrains.

    Only local convergence is certified; uniqueness of the periodic solution
    is an assumption on the model, not something this routine checks.

    Raises
    ------
    NoConvergence
        ``|P| > newton_tol`` after ``max_iter`` iterations.
    SingularMonodromy
        ``cond(Phi(T;0) - I) > 1e12`` at an iterate.
    """
    sys.check_admissible(u)
    x = np.array(sys.x_init if x_init is None else x_init, dtype=float)
    n = sys.n
    flow = variational_flow(sys, u, x, tol=tol)
    P = flow.states[-1] - x
    for it in range(max_iter + 1):
        r = _norm(P)
        log.debug("newton iter %d |P|=%.3e", it, r)
        if r <= newton_tol:
            mono = MonodromyResult.from_matrix(flow.transfer[-1], nondegeneracy_tol)
            traj = Trajectory(flow.grid, flow.states, flow.derivs, stats=flow.stats)
            return PeriodicSolution(u, x.copy(), traj, flow.transfer, mono, r, it, tol)
        if it == max_iter:
            break
        A = flow.transfer[-1] - np.eye(n)
        cond = np.linalg.cond(A)
        if not cond < SINGULAR_COND:
            raise SingularMonodromy(f"cond(Phi(T;0) - I) = {cond:.3e}")
        dx = -np.linalg.solve(A, P)
        lam, accepted = 1.0, False
        for _ in range(max_halvings + 1):
            xt = x + lam * dx
            if not sys.in_domain(xt):
                break
            try:
                ft = variational_flow(sys, u, xt, tol=tol)
            except StateLeftDomain:
                lam /= 2
                continue
            Pt = ft.states[-1] - xt
            if _norm(Pt) <= r:
                accepted = True
                break
            lam /= 2
        if not accepted:
            log.debug("newton step rejected, taking a Picard step")
            xt = flow.states[-1].copy()
            ft = variational_flow(sys, u, xt, tol=tol)
            Pt = ft.states[-1] - xt
        x, flow, P = xt, ft, Pt
    raise NoConvergence(f"|P| = {_norm(P):.3e} after {max_iter} iterations",
                        iterations=max_iter, residual=_norm(P))


def check_c3(sol: Union[PeriodicSolution, MonodromyResult],
             tol: float = NONDEGENERACY_TOL) -> tuple:
    """Non-degeneracy verdict: no monodromy eigenvalue within ``tol`` of 1.

    Returns ``(flag, report)``. The report includes the spectral radius; a
    value below 1 means the periodic solution is locally exponentially stable.
    """
    mono = sol.monodromy if isinstance(sol, PeriodicSolution) else sol
    dist = float(np.min(np.abs(mono.eigenvalues - 1.0)))
    rho = mono.spectral_radius
    flag = dist > tol
    report = {
        "nondegenerate": flag,
        "eigenvalues": mono.eigenvalues,
        "min_distance_to_one": dist,
        "spectral_radius": rho,
        "locally_stable": rho < 1.0,
    }
    return flag, report


def iterate_map(sys: BilinearSystem, u: PeriodicControl, x0, periods: int,
                tol: float = DEFAULT_RTOL, grid=None) -> np.ndarray:
    """States ``x(kT; u, x0)`` for ``k = 0..periods``."""
    out = [np.asarray(x0, dtype=float)]
    x = out[0]
    for _ in range(periods):
        x = variational_flow(sys, u, x, tol=tol, transfer=False, grid=grid).states[-1]
        out.append(x)
    return np.array(out)
