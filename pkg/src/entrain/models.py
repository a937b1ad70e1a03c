"""Built-in bilinear systems: the ribosome flow model, the master equation of a
finite Markov chain with periodic rates, and three small worked examples."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import NotHurwitz, NotIrreducible
from .system import BilinearSystem, augment_drift, make_system

DEFAULT_RATE_LOWER_BOUND = 1e-3
DOMAIN_SLACK = 1e-6


# ---------------------------------------------------------------------------
# Ribosome flow model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RfmSpec:
    n: int
    rate_lower_bound: float = DEFAULT_RATE_LOWER_BOUND

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("the RFM needs at least one site")
        if not self.rate_lower_bound > 0:
            raise ValueError("rate lower bound must be positive")


def rfm_matrix(x) -> np.ndarray:
    """The ``n x (n+1)`` matrix ``M(x)`` with ``x' = M(x) u`` for the RFM."""
    x = np.asarray(x, dtype=float)
    n = x.size
    prev = np.concatenate([[1.0], x[:-1]])
    nxt = np.concatenate([x[1:], [0.0]])
    M = np.zeros((n, n + 1))
    idx = np.arange(n)
    M[idx, idx] = prev * (1 - x)
    M[idx, idx + 1] = -x * (1 - nxt)
    return M


def rfm_jacobian(x, u) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    n = x.size
    prev = np.concatenate([[1.0], x[:-1]])
    nxt = np.concatenate([x[1:], [0.0]])
    J = np.zeros((n, n))
    idx = np.arange(n)
    J[idx, idx] = -u[:n] * prev - u[1:] * (1 - nxt)
    J[idx[1:], idx[:-1]] = u[1:n] * (1 - x[1:])
    J[idx[:-1], idx[1:]] = u[1:n] * x[:-1]
    return J


def rfm_steady_state(u, tol: float = 1e-14) -> np.ndarray:
    """Equilibrium of the RFM for constant rates ``u`` (length ``n + 1``).

    At steady state every flow equals the output ``R = u_n x_n``; sweeping
    backwards from ``x_n = R / u_n`` fixes all densities, and ``R`` is found
    by bisection on the inflow balance ``u_0 (1 - x_1) = R``.
    """
    u = np.asarray(u, dtype=float)
    n = u.size - 1

    def back(R):
        x = np.empty(n)
        x[-1] = R / u[n]
        for i in range(n - 2, -1, -1):
            denom = u[i + 1] * (1 - x[i + 1])
            if denom <= 0:
                return None
            x[i] = R / denom
        return x

    lo, hi = 0.0, min(u[0], u[n])
    while hi - lo > tol * max(hi, 1.0):
        R = 0.5 * (lo + hi)
        x = back(R)
        if x is None or np.any(x >= 1) or u[0] * (1 - x[0]) < R:
            hi = R
        else:
            lo = R
    return back(lo)


def build_rfm(spec) -> BilinearSystem:
    """RFM with ``n`` sites, controls ``(u_0, ..., u_n)`` and output ``u_n x_n``."""
    if isinstance(spec, int):
        spec = RfmSpec(spec)
    n = spec.n

    def h(u, x):
        return float(u[n] * x[n - 1])

    def h_u(u, x):
        g = np.zeros(n + 1)
        g[n] = x[n - 1]
        return g

    def h_x(u, x):
        g = np.zeros(n)
        g[n - 1] = u[n]
        return g

    def in_box(x):
        return bool(np.all(x >= -DOMAIN_SLACK) and np.all(x <= 1 + DOMAIN_SLACK))

    return make_system(
        n, n + 1, M=rfm_matrix, J=rfm_jacobian, h=h, h_u=h_u, h_x=h_x,
        lower=np.full(n + 1, spec.rate_lower_bound), x_init=np.full(n, 0.5),
        state_check=in_box, name=f"rfm{n}", meta={"model": "rfm", "n": n},
    )


# ---------------------------------------------------------------------------
# Master equation
# ---------------------------------------------------------------------------

def householder_basis(n: int) -> np.ndarray:
    """Orthonormal ``n x (n-1)`` basis of the hyperplane ``1^T w = 0``.

    Columns 1..n-1 of the reflector that swaps ``e_1`` and ``1/sqrt(n)``;
    fully deterministic so eigenvalues on the reduced space are reproducible.
    """
    v = -np.full(n, 1 / np.sqrt(n))
    v[0] += 1.0
    H = np.eye(n) - 2 * np.outer(v, v) / (v @ v)
    return H[:, 1:]


def channel(i: int, j: int, n: int) -> int:
    """Row-major index of rate ``u_{i,j}`` (transition ``i -> j``), 0-based."""
    return i * n + j


def rate_matrix(u, n: int) -> np.ndarray:
    """``A(u)`` with ``A[i, j] = u_{j,i}`` off the diagonal and zero column sums."""
    U = np.asarray(u, dtype=float).reshape(n, n).copy()
    np.fill_diagonal(U, 0.0)
    A = U.T.copy()
    A[np.diag_indices(n)] = -U.sum(axis=1)
    return A


def master_full_M(x, n: int) -> np.ndarray:
    """Unreduced ``n x n^2`` matrix with ``M(x) u = A(u) x``."""
    x = np.asarray(x, dtype=float)
    M = np.zeros((n, n * n))
    for a in range(n):
        for b in range(n):
            if a != b:
                col = channel(a, b, n)
                M[b, col] += x[a]
                M[a, col] -= x[a]
    return M


def master_full_f(u, n: int) -> np.ndarray:
    return rate_matrix(u, n) @ np.full(n, 1.0 / n)


def is_strongly_connected(n: int, pairs: Iterable) -> bool:
    adj = np.zeros((n, n))
    for i, j in pairs:
        adj[i, j] = 1.0
    ncomp, _ = connected_components(adj, directed=True, connection="strong")
    return ncomp == 1


@dataclass(frozen=True)
class MasterChainSpec:
    """Configurations ``0..n-1`` and allowed transitions ``Q`` (0-based pairs).

    ``reward`` selects the output ``p(u, z)``:

    * ``"activity"`` (default): ``sum_{(i,j) in Q} u_ij z_i``, the mean jump rate;
    * ``("flux", {(i, j): w})``: ``sum w_ij u_ij z_i``;
    * ``("occupancy", w)``: ``w^T z``;
    * ``(p, p_u, p_z)``: user callables of ``(u, z)``.
    """

    n: int
    Q: tuple = None
    rate_lower_bound: float = DEFAULT_RATE_LOWER_BOUND
    reward: object = "activity"

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("a master equation needs at least two configurations")
        Q = self.Q
        if Q is None:
            Q = [(i, j) for i in range(self.n) for j in range(self.n) if i != j]
        Q = tuple(sorted({(int(i), int(j)) for i, j in Q if i != j}))
        for i, j in Q:
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"transition {(i, j)} out of range")
        object.__setattr__(self, "Q", Q)


@dataclass(frozen=True)
class MasterSystem(BilinearSystem):
    """Master equation in reduced coordinates ``xi`` with ``z = V xi + 1/n``."""

    basis: np.ndarray = None
    pairs: tuple = ()
    configurations: int = 0

    def to_probability(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        return xi @ self.basis.T + 1.0 / self.configurations

    def from_probability(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return (z - 1.0 / self.configurations) @ self.basis

    def full_jacobian(self, xi, u) -> np.ndarray:
        """``A(u)``, the Jacobian in unreduced probability coordinates."""
        return rate_matrix(u, self.configurations)

    def rate_channels(self) -> list:
        return [channel(i, j, self.configurations) for i, j in self.pairs]


def _master_reward(spec: MasterChainSpec):
    n = spec.n
    reward = spec.reward
    if callable(reward):
        raise ValueError("pass a custom reward as a (p, p_u, p_z) triple")
    if isinstance(reward, tuple) and len(reward) == 3 and all(callable(r) for r in reward):
        return reward
    if reward == "activity":
        weights = {q: 1.0 for q in spec.Q}
        kind = "flux"
    else:
        kind, arg = reward
        weights = arg
    if kind == "flux":
        W = np.zeros((n, n))
        for (i, j), w in dict(weights).items():
            W[int(i), int(j)] = w

        def p(u, z):
            return float(z @ (W * u.reshape(n, n)).sum(axis=1))

        def p_u(u, z):
            return (W * z[:, None]).ravel()

        def p_z(u, z):
            return (W * u.reshape(n, n)).sum(axis=1)

        return p, p_u, p_z
    if kind == "occupancy":
        w = np.asarray(weights, dtype=float)
        return (lambda u, z: float(w @ z), lambda u, z: np.zeros(n * n), lambda u, z: w)
    raise ValueError(f"unknown reward {reward!r}")


def build_master(spec: MasterChainSpec) -> MasterSystem:
    """Shifted, reduced master equation as a bilinear system.

    States live in an orthonormal basis ``V`` of ``1^perp``; controls are the
    ``n^2`` rates in row-major order with channels outside ``Q`` pinned to 0.
    """
    n = spec.n
    if not is_strongly_connected(n, spec.Q):
        raise NotIrreducible("transition graph Q is not strongly connected")
    V = householder_basis(n)
    Vt = V.T.copy()
    q_channels = [channel(i, j, n) for i, j in spec.Q]
    m = n * n
    # unreduced Df is constant: column (a,b) is (e_b - e_a)/n
    Df_full = np.zeros((n, m))
    for a, b in spec.Q:
        Df_full[b, channel(a, b, n)] += 1.0 / n
        Df_full[a, channel(a, b, n)] -= 1.0 / n
    Df_red = Vt @ Df_full
    p, p_u, p_z = _master_reward(spec)

    def lift(xi):
        return V @ xi + 1.0 / n

    def f(u):
        return Df_red @ u

    def Df(u):
        return Df_red

    def M(xi):
        return Vt @ master_full_M(V @ xi, n)

    def J(xi, u):
        return Vt @ rate_matrix(u, n) @ V

    def h(u, xi):
        return p(u, lift(xi))

    def h_u(u, xi):
        return np.asarray(p_u(u, lift(xi)), dtype=float)

    def h_x(u, xi):
        return np.asarray(p_z(u, lift(xi)), dtype=float) @ V

    def nonnegative(xi):
        return bool(np.all(lift(xi) >= -DOMAIN_SLACK))

    lower = np.full(m, spec.rate_lower_bound)
    pinned = {c: 0.0 for c in range(m) if c not in q_channels}
    return MasterSystem(
        n=n - 1, m=m, f=f, Df=Df, M=M, J=J, h=h, h_u=h_u, h_x=h_x,
        lower=lower, pinned=pinned, x_init=np.zeros(n - 1), state_check=nonnegative,
        name=f"master{n}", meta={"model": "master", "n": n},
        basis=V, pairs=spec.Q, configurations=n,
    )


# ---------------------------------------------------------------------------
# Worked examples
# ---------------------------------------------------------------------------

def build_example_linear(A, b, c) -> BilinearSystem:
    """``x' = A x + b u``, ``y = c^T x`` with the drift ``A x`` absorbed into channel 0."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    b = np.asarray(b, dtype=float).reshape(n)
    c = np.asarray(c, dtype=float).reshape(n)
    if np.max(np.linalg.eigvals(A).real) >= 0:
        raise NotHurwitz("A must be Hurwitz")
    base = make_system(
        n, 1,
        f=lambda u: b * u[0], Df=lambda u: b[:, None].copy(),
        M=lambda x: np.zeros((n, 1)), J=lambda x, u: np.zeros((n, n)),
        h=lambda u, x: float(c @ x), h_u=lambda u, x: np.zeros(1), h_x=lambda u, x: c,
        name="linear", meta={"model": "linear", "A": A, "b": b, "c": c},
    )
    return augment_drift(lambda x: A @ x, lambda x: A, base)


def random_hurwitz(n: int, seed: int, margin: float = 0.5) -> np.ndarray:
    """Seeded Gaussian ``n x n`` matrix shifted so its spectral abscissa is ``-margin``."""
    G = np.random.default_rng(seed).normal(size=(n, n))
    return G - (np.max(np.linalg.eigvals(G).real) + margin) * np.eye(n)


def transfer_function(A, b, c, s: complex) -> complex:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    return complex(np.asarray(c).reshape(n) @ np.linalg.solve(s * np.eye(n) - A,
                                                              np.asarray(b).reshape(n)))


def build_example_pavlov() -> BilinearSystem:
    """``x1' = -x1 + x2^2``, ``x2' = -x2 + u``, ``y = x1``, drift-augmented."""
    base = make_system(
        2, 1,
        f=lambda u: np.array([0.0, u[0]]), Df=lambda u: np.array([[0.0], [1.0]]),
        M=lambda x: np.zeros((2, 1)), J=lambda x, u: np.zeros((2, 2)),
        h=lambda u, x: float(x[0]), h_u=lambda u, x: np.zeros(1),
        h_x=lambda u, x: np.array([1.0, 0.0]),
        name="pavlov", meta={"model": "pavlov"},
    )

    def g(x):
        return np.array([-x[0] + x[1] ** 2, -x[1]])

    def Dg(x):
        return np.array([[-1.0, 2 * x[1]], [0.0, -1.0]])

    return augment_drift(g, Dg, base)


def pavlov_periodic_output(t, a: float, omega: float):
    """Closed-form periodic output for ``u = a sin(omega t)``."""
    t = np.asarray(t, dtype=float)
    ph = 2 * t * omega - 2 * np.arctan(omega)
    num = 4 * a**2 * omega**2 + a**2 - 2 * a**2 * omega * np.sin(ph) - a**2 * np.cos(ph)
    return num / (2 * (4 * omega**4 + 5 * omega**2 + 1))


def pavlov_average_output(a: float, omega: float) -> float:
    return a**2 / (2 * (1 + omega**2))


def build_example_scalar(rate_lower_bound: float = DEFAULT_RATE_LOWER_BOUND) -> BilinearSystem:
    """``x' = -u x`` with output ``y = u x``.

    The output is a test fixture of our own; the dynamics have ``Gamma(u) = 0``
    for every admissible control.
    """
    return make_system(
        1, 1,
        M=lambda x: np.array([[-x[0]]]), J=lambda x, u: np.array([[-u[0]]]),
        h=lambda u, x: float(u[0] * x[0]), h_u=lambda u, x: np.array([x[0]]),
        h_x=lambda u, x: np.array([u[0]]),
        lower=np.array([rate_lower_bound]), x_init=np.array([1.0]),
        name="scalar", meta={"model": "scalar"},
    )


BUILTIN_MODELS = ("rfm", "master", "linear", "pavlov", "scalar")
