"""Matrix measures (logarithmic norms) and contraction scans along orbits."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .periodic import PeriodicSolution
from .system import BilinearSystem


@dataclass(frozen=True)
class MeasureKind:
    """Which induced norm the measure is taken with.

    ``kind`` is ``"l1"``, ``"linf"`` or ``"weighted-l1"``; the weighted norm is
    ``|x| = sum_i w_i |x_i|`` and needs strictly positive ``weights``.
    """

    kind: str = "l1"
    weights: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in ("l1", "linf", "weighted-l1"):
            raise ValueError(f"unknown measure kind {self.kind!r}")
        if self.kind == "weighted-l1":
            if self.weights is None:
                raise ValueError("weighted-l1 needs a weight vector")
            w = np.asarray(self.weights, dtype=float)
            if w.ndim != 1 or not np.all(w > 0) or not np.all(np.isfinite(w)):
                raise ValueError("weights must be finite and strictly positive")
            object.__setattr__(self, "weights", tuple(float(x) for x in w))

    @classmethod
    def weighted(cls, weights) -> "MeasureKind":
        return cls("weighted-l1", tuple(np.asarray(weights, dtype=float)))


def _as_kind(kind) -> MeasureKind:
    if isinstance(kind, MeasureKind):
        return kind
    return MeasureKind(kind)


def _mu_l1(A: np.ndarray) -> float:
    off = np.abs(A)
    np.fill_diagonal(off, 0.0)
    return float(np.max(np.diag(A) + off.sum(axis=0)))


def matrix_measure(A, kind: Union[str, MeasureKind] = "l1") -> float:
    """Matrix measure ``mu(A) = lim_{e->0+} (|I + eA| - 1) / e``.

    Closed forms: ``l1`` is the largest column value of
    ``A_jj + sum_{i != j} |A_ij|``, ``linf`` the same over rows, and
    ``weighted-l1`` is the ``l1`` measure of ``D A D^{-1}``, ``D = diag(w)``.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("A must be square")
    k = _as_kind(kind)
    if k.kind == "l1":
        return _mu_l1(A)
    if k.kind == "linf":
        return _mu_l1(A.T)
    w = np.asarray(k.weights)
    if w.size != A.shape[0]:
        raise ValueError("weight vector length does not match A")
    return _mu_l1(w[:, None] * A / w[None, :])


def contraction_scan(sys: BilinearSystem, sol: PeriodicSolution,
                     kind: Union[str, MeasureKind] = "l1", return_profile: bool = False,
                     jacobian: Optional[Callable] = None):
    """Largest ``mu(J(gamma^u(t), u(t)))`` over the solution's grid.

    A negative value certifies infinitesimal contraction along the orbit
    (not on the whole state space). With ``return_profile`` the per-node
    values are returned as well. ``jacobian(x, u)`` replaces ``sys.J``, e.g.
    to measure a master equation in probability coordinates.
    """
    grid = sol.trajectory.grid
    U = sol.control.values_on(grid.nodes)
    J = sys.J if jacobian is None else jacobian
    prof = np.array([matrix_measure(J(x, U[i]), kind) for i, x in enumerate(sol.states)])
    eta = float(prof.max())
    return (eta, prof) if return_profile else eta
