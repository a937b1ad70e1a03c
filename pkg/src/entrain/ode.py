"""Explicit Runge-Kutta integration sampled on a prescribed time grid.

Two integrators are provided:

* ``"dopri5"`` -- Dormand-Prince 5(4) with adaptive sub-stepping between grid
  nodes (the default).
* ``"rk4"`` -- classical fixed-step Runge-Kutta, for reproducibility runs and
  order studies.

Both march node to node, so every grid node is hit exactly and a control that
is only piecewise smooth with breakpoints on the grid never has a kink inside
a step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import NonFiniteState, StepSizeUnderflow

DEFAULT_RTOL = 1e-10
DEFAULT_ATOL = 1e-12

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array(_A[6] + [0.0])
# b - b_hat, used for the embedded error estimate
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])


@dataclass(frozen=True)
class TimeGrid:
    """Ordered sample times ``t0 = nodes[0] < ... < nodes[-1] = t1``."""

    nodes: np.ndarray
    uniform: bool = False

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise ValueError("a time grid needs at least two nodes")
        if not np.all(np.diff(nodes) > 0):
            raise ValueError("grid nodes must be strictly increasing")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def linspace(cls, t0: float, t1: float, intervals: int) -> "TimeGrid":
        nodes = t0 + (t1 - t0) * np.arange(intervals + 1) / intervals
        nodes[-1] = t1
        return cls(nodes, uniform=True)

    @property
    def t0(self) -> float:
        return float(self.nodes[0])

    @property
    def t1(self) -> float:
        return float(self.nodes[-1])

    @property
    def span(self) -> float:
        return self.t1 - self.t0

    def __len__(self) -> int:
        return self.nodes.size


@dataclass
class Trajectory:
    """States sampled at ``grid.nodes``; ``derivs`` holds the vector field there."""

    grid: TimeGrid
    states: np.ndarray
    derivs: Optional[np.ndarray] = None
    stats: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.grid)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def at(self, t: float) -> np.ndarray:
        """Dense output by cubic Hermite interpolation between nodes (O(h^4))."""
        nodes = self.grid.nodes
        if t <= nodes[0]:
            return self.states[0].copy()
        if t >= nodes[-1]:
            return self.states[-1].copy()
        i = int(np.searchsorted(nodes, t, side="right")) - 1
        if self.derivs is None:
            w = (t - nodes[i]) / (nodes[i + 1] - nodes[i])
            return (1 - w) * self.states[i] + w * self.states[i + 1]
        h = nodes[i + 1] - nodes[i]
        s = (t - nodes[i]) / h
        h00 = (1 + 2 * s) * (1 - s) ** 2
        h10 = s * (1 - s) ** 2
        h01 = s * s * (3 - 2 * s)
        h11 = s * s * (s - 1)
        return (h00 * self.states[i] + h10 * h * self.derivs[i]
                + h01 * self.states[i + 1] + h11 * h * self.derivs[i + 1])


def _rms(v: np.ndarray) -> float:
    return float(np.sqrt(np.mean(v * v))) if v.size else 0.0


def _check_finite(t, y):
    if not np.all(np.isfinite(y)):
        raise NonFiniteState(f"non-finite state at t={t!r}")


def _initial_step(rhs, t0, y0, f0, span, rtol, atol):
    sc = atol + rtol * np.abs(y0)
    d0, d1 = _rms(y0 / sc), _rms(f0 / sc)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, span)
    f1 = rhs(t0 + h0, y0 + h0 * f0)
    d2 = _rms((f1 - f0) / sc) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, span)


def integrate(
    rhs: Callable[[float, np.ndarray], np.ndarray],
    x0,
    grid: TimeGrid,
    tol: float = DEFAULT_RTOL,
    atol: Optional[float] = None,
    method: str = "dopri5",
    step: Optional[float] = None,
    check: Optional[Callable[[float, np.ndarray], None]] = None,
) -> Trajectory:
    """Integrate ``x' = rhs(t, x)`` from ``x0`` and sample at ``grid.nodes``.

    Parameters
    ----------
    rhs : callable
        Vector field ``rhs(t, x) -> dx/dt`` returning an array shaped like ``x``.
    x0 : array_like
        Initial state at ``grid.t0``.
    grid : TimeGrid
        Output times. Integration steps never straddle a node.
    tol : float
        Relative tolerance of the embedded error estimate (``dopri5`` only).
    atol : float, optional
        Absolute tolerance; defaults to ``tol / 100``.
    method : {"dopri5", "rk4"}
    step : float, optional
        Maximum step. For ``rk4`` this fixes the step; the default is one
        step per grid interval.
    check : callable, optional
        ``check(t, x)`` called at every node; may raise to abort.

    Raises
    ------
    StepSizeUnderflow
        The adaptive step dropped below ``1e-14 * (t1 - t0)``.
    NonFiniteState
        A state component became NaN or infinite.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    rtol = float(tol)
    atol = rtol * 1e-2 if atol is None else float(atol)
    y = np.array(x0, dtype=float)
    shape = y.shape
    y = y.ravel()
    nodes = grid.nodes
    span = grid.span

    def f(t, v):
        return np.asarray(rhs(t, v.reshape(shape)), dtype=float).ravel()

    states = np.empty((nodes.size, y.size))
    derivs = np.empty_like(states)
    _check_finite(nodes[0], y)
    k1 = f(nodes[0], y)
    _check_finite(nodes[0], k1)
    states[0], derivs[0] = y, k1
    if check is not None:
        check(nodes[0], y.reshape(shape))

    nsteps = nrejected = 0
    if method == "rk4":
        for i in range(nodes.size - 1):
            a, b = nodes[i], nodes[i + 1]
            nsub = 1 if step is None else max(1, math.ceil((b - a) / step - 1e-9))
            h = (b - a) / nsub
            for j in range(nsub):
                t = a + j * h
                s1 = k1 if j == 0 else f(t, y)
                s2 = f(t + h / 2, y + h / 2 * s1)
                s3 = f(t + h / 2, y + h / 2 * s2)
                s4 = f(t + h, y + h * s3)
                y = y + h / 6 * (s1 + 2 * s2 + 2 * s3 + s4)
                _check_finite(t + h, y)
                nsteps += 1
            k1 = f(b, y)
            states[i + 1], derivs[i + 1] = y, k1
            if check is not None:
                check(b, y.reshape(shape))
    elif method == "dopri5":
        h = _initial_step(f, nodes[0], y, k1, span, rtol, atol)
        hmin = 1e-14 * span
        K = np.empty((7, y.size))
        for i in range(nodes.size - 1):
            t, t_end = nodes[i], nodes[i + 1]
            while t < t_end:
                if step is not None:
                    h = min(h, step)
                last = t + h >= t_end - 1e-12 * span
                h_try = t_end - t if last else h
                K[0] = k1
                for s in range(1, 7):
                    K[s] = f(t + _C[s] * h_try, y + h_try * (np.asarray(_A[s]) @ K[:s]))
                y_new = y + h_try * (_B[:6] @ K[:6])
                sc = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
                err = _rms(h_try * (_E @ K) / sc)
                if not np.isfinite(err):
                    err = np.inf
                if err <= 1.0:
                    _check_finite(t_end if last else t + h_try, y_new)
                    t = t_end if last else t + h_try
                    y, k1 = y_new, K[6].copy()
                    nsteps += 1
                    fac = 5.0 if err == 0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
                    h = max(h_try * fac, h) if last else h_try * fac
                else:
                    nrejected += 1
                    fac = 0.2 if not np.isfinite(err) else max(0.2, 0.9 * err ** -0.2)
                    h = h_try * fac
                    if h < hmin:
                        raise StepSizeUnderflow(
                            f"step size {h:.3e} below {hmin:.3e} at t={t!r}")
            states[i + 1], derivs[i + 1] = y, k1
            if check is not None:
                check(t_end, y.reshape(shape))
    else:
        raise ValueError(f"unknown method {method!r}")

    states = states.reshape((nodes.size,) + shape)
    derivs = derivs.reshape((nodes.size,) + shape)
    return Trajectory(grid, states, derivs,
                      stats={"steps": nsteps, "rejected": nrejected, "method": method})


def integrate_with_transfer(
    jacobian: Callable[[float], np.ndarray],
    grid: TimeGrid,
    tol: float = DEFAULT_RTOL,
    **kwargs,
) -> np.ndarray:
    """Transfer matrices ``Phi(t; t0)`` of ``Phi' = J(t) Phi``, ``Phi(t0) = I``.

    Returns an array of shape ``(len(grid), n, n)``.
    """
    J0 = np.asarray(jacobian(grid.t0), dtype=float)
    n = J0.shape[0]

    def rhs(t, Phi):
        return np.asarray(jacobian(t), dtype=float) @ Phi

    return integrate(rhs, np.eye(n), grid, tol, **kwargs).states
