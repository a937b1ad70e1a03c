"""Bilinear control systems ``x' = f(u) + M(x) u`` and T-periodic controls."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Optional

import numpy as np

from .errors import InadmissibleControl
from .ode import TimeGrid

DEFAULT_SAMPLES = 256

LINEAR = "linear-periodic"
TRIG = "trigonometric"


class PeriodicControl:
    """T-periodic, vector-valued control stored as samples on a uniform grid.

    ``samples[j]`` is the value at ``t_j = j T / k`` for ``j = 0..k-1``.
    Between samples the control is either interpolated piecewise linearly
    (with a wraparound segment from ``t_{k-1}`` to ``T``) or evaluated as the
    truncated Fourier series through the samples.
    """

    def __init__(self, period: float, samples, interpolation: str = LINEAR):
        samples = np.array(samples, dtype=float)
        if samples.ndim == 1:
            samples = samples[:, None]
        if samples.ndim != 2:
            raise ValueError("samples must be a (k, m) array")
        if not period > 0:
            raise ValueError("period must be positive")
        if samples.shape[0] < 4:
            raise ValueError("at least 4 samples per period are required")
        if interpolation in ("linear", LINEAR):
            interpolation = LINEAR
        elif interpolation in ("trig", TRIG):
            interpolation = TRIG
        else:
            raise ValueError(f"unknown interpolation {interpolation!r}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("control samples must be finite")
        samples.setflags(write=False)
        self.period = float(period)
        self.samples = samples
        self.interpolation = interpolation
        self._h = self.period / samples.shape[0]
        if interpolation == TRIG:
            self._setup_fourier()

    def _setup_fourier(self):
        k = self.k
        coef = np.fft.rfft(self.samples, axis=0) / k
        # fold the conjugate half in; the Nyquist term (even k) is not doubled
        weights = np.full(coef.shape[0], 2.0)
        weights[0] = 1.0
        if k % 2 == 0:
            weights[-1] = 1.0
        coef = coef * weights[:, None]
        scale = max(np.abs(coef).max(), 1e-300)
        keep = np.nonzero(np.abs(coef).max(axis=1) > 1e-15 * scale)[0]
        keep = keep[keep > 0]
        self._mean = coef[0].real.copy()
        self._harmonics = keep.astype(float)
        self._coef = coef[keep]

    # -- construction helpers -------------------------------------------
    @classmethod
    def constant(cls, value, period: float, k: int = DEFAULT_SAMPLES,
                 interpolation: str = LINEAR) -> "PeriodicControl":
        value = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(period, np.tile(value, (k, 1)), interpolation)

    @classmethod
    def from_function(cls, fn: Callable[[float], np.ndarray], period: float,
                      k: int = DEFAULT_SAMPLES, interpolation: str = LINEAR) -> "PeriodicControl":
        """Sample ``fn`` (which must itself be T-periodic) at ``j T / k``."""
        times = period * np.arange(k) / k
        return cls(period, np.array([np.atleast_1d(fn(t)) for t in times]), interpolation)

    @classmethod
    def harmonic(cls, mean, amplitude, omega: float, phase=0.0,
                 k: int = DEFAULT_SAMPLES, period: Optional[float] = None) -> "PeriodicControl":
        """``mean_i + amplitude_i * sin(omega t + phase_i)``, trigonometric mode.

        The period defaults to ``2 pi / omega``; any integer multiple works too.
        """
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        amplitude = np.broadcast_to(np.asarray(amplitude, dtype=float), mean.shape)
        phase = np.broadcast_to(np.asarray(phase, dtype=float), mean.shape)
        period = 2 * np.pi / omega if period is None else period
        times = period * np.arange(k) / k
        samples = mean + amplitude * np.sin(omega * times[:, None] + phase)
        return cls(period, samples, TRIG)

    # -- basic properties ------------------------------------------------
    @property
    def k(self) -> int:
        return self.samples.shape[0]

    @property
    def m(self) -> int:
        return self.samples.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.period * np.arange(self.k) / self.k

    def grid(self) -> TimeGrid:
        """Uniform grid over ``[0, T]`` with one node per sample plus ``T``."""
        return TimeGrid.linspace(0.0, self.period, self.k)

    def __call__(self, t: float) -> np.ndarray:
        return eval_control(self, t)

    def values_on(self, times) -> np.ndarray:
        return np.array([eval_control(self, t) for t in np.atleast_1d(times)])

    def nodal_values(self) -> np.ndarray:
        """Values at the ``k + 1`` nodes of :meth:`grid` (last row repeats the first)."""
        return np.vstack([self.samples, self.samples[:1]])

    def mean(self) -> np.ndarray:
        """Exact period average (both interpolation modes average the samples)."""
        return self.samples.mean(axis=0)

    def zero_mean(self) -> "PeriodicControl":
        return self._like(self.samples - self.mean())

    def is_constant(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.abs(self.samples - self.samples[0]) <= tol))

    def resample(self, k: int) -> "PeriodicControl":
        """Same function on a ``k``-sample grid.

        Exact when ``k`` is a multiple of the current sample count (linear
        mode) or when the spectrum fits (trigonometric mode).
        """
        times = self.period * np.arange(k) / k
        return PeriodicControl(self.period, self.values_on(times), self.interpolation)

    def _like(self, samples) -> "PeriodicControl":
        return PeriodicControl(self.period, samples, self.interpolation)

    def _combined_mode(self, other: "PeriodicControl"):
        """Interpolation mode of a sum; constants take on the other operand's mode."""
        if not isinstance(other, PeriodicControl):
            return NotImplemented
        if other.samples.shape != self.samples.shape or other.period != self.period:
            raise ValueError("controls must share period, sample count and channel count")
        if self.interpolation == other.interpolation or other.is_constant():
            return self.interpolation
        if self.is_constant():
            return other.interpolation
        raise ValueError("cannot combine controls with different interpolation modes")

    def __add__(self, other):
        mode = self._combined_mode(other)
        if mode is NotImplemented:
            return NotImplemented
        return PeriodicControl(self.period, self.samples + other.samples, mode)

    def __sub__(self, other):
        mode = self._combined_mode(other)
        if mode is NotImplemented:
            return NotImplemented
        return PeriodicControl(self.period, self.samples - other.samples, mode)

    def __mul__(self, scalar):
        return self._like(self.samples * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return self._like(-self.samples)

    def __repr__(self):
        return (f"PeriodicControl(period={self.period:g}, k={self.k}, m={self.m}, "
                f"interpolation={self.interpolation!r})")


def eval_control(u: PeriodicControl, t: float) -> np.ndarray:
    """Value of the periodic extension of ``u`` at time ``t``."""
    tau = float(t) % u.period
    if u.interpolation == TRIG:
        if u._harmonics.size == 0:
            return u._mean.copy()
        phase = np.exp(2j * np.pi * tau / u.period * u._harmonics)
        return u._mean + (phase @ u._coef).real
    s = tau / u._h
    j = int(s)
    if j >= u.k:
        j = u.k - 1
    w = s - j
    a = u.samples[j]
    b = u.samples[j + 1] if j + 1 < u.k else u.samples[0]
    return a + w * (b - a)


def control_norm(u: PeriodicControl, channels=None) -> float:
    """Sup norm of ``u`` over its sample grid and the selected channels.

    This is a grid approximation of the max-over-channels, max-over-time
    norm; for Lipschitz controls the error is ``O(1/k)``. Exact for the
    linear-periodic mode.
    """
    vals = u.samples if channels is None else u.samples[:, list(channels)]
    return float(np.abs(vals).max()) if vals.size else 0.0


@dataclass(frozen=True)
class ConstantControl:
    value: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "value", np.atleast_1d(np.asarray(self.value, dtype=float)))

    def as_periodic(self, period: float, k: int = DEFAULT_SAMPLES,
                    interpolation: str = LINEAR) -> PeriodicControl:
        return PeriodicControl.constant(self.value, period, k, interpolation)


def _zeros_f(n, m):
    return (lambda u: np.zeros(n)), (lambda u: np.zeros((n, m)))


@dataclass(frozen=True)
class BilinearSystem:
    """The system ``x' = f(u) + M(x) u`` with scalar output ``y = h(u, x)``.

    Attributes
    ----------
    n, m : int
        State and control dimensions.
    f, Df : callables
        ``f(u) -> (n,)`` and its Jacobian ``Df(u) -> (n, m)``.
    M : callable
        ``M(x) -> (n, m)``.
    J : callable
        ``J(x, u) -> (n, n)``, the state Jacobian of ``M(x) u`` (linear in ``u``).
    h, h_u, h_x : callables
        Output ``h(u, x)`` and its gradients ``(m,)`` and ``(n,)``.
    lower, upper : arrays
        Per-channel admissible box. Controls must lie strictly inside it,
        except on pinned channels.
    pinned : mapping
        Channels held at a fixed value (e.g. the unit drift channel added by
        :func:`augment_drift`). Perturbations must vanish on them and they do
        not count towards the control norm.
    x_init : array
        Default initial guess for the periodic solver.
    state_check : callable, optional
        ``state_check(x) -> bool``; ``False`` means the state left the model's
        domain.
    """

    n: int
    m: int
    f: Callable
    Df: Callable
    M: Callable
    J: Callable
    h: Callable
    h_u: Callable
    h_x: Callable
    lower: np.ndarray = None
    upper: np.ndarray = None
    pinned: Mapping[int, float] = field(default_factory=dict)
    x_init: np.ndarray = None
    state_check: Optional[Callable] = None
    name: str = "bilinear"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        lower = np.full(self.m, -np.inf) if self.lower is None else np.asarray(self.lower, float)
        upper = np.full(self.m, np.inf) if self.upper is None else np.asarray(self.upper, float)
        for ch, val in self.pinned.items():
            lower = lower.copy()
            upper = upper.copy()
            lower[ch] = upper[ch] = val
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        x_init = np.zeros(self.n) if self.x_init is None else np.asarray(self.x_init, float)
        object.__setattr__(self, "x_init", x_init)
        object.__setattr__(self, "pinned", dict(self.pinned))

    @property
    def free_channels(self) -> list:
        return [c for c in range(self.m) if c not in self.pinned]

    def vector_field(self, x, u) -> np.ndarray:
        return self.f(u) + self.M(x) @ u

    def in_domain(self, x) -> bool:
        return True if self.state_check is None else bool(self.state_check(x))

    def embed(self, free_values) -> np.ndarray:
        """Place values for the free channels into a full control vector."""
        u = np.zeros(self.m)
        for ch, val in self.pinned.items():
            u[ch] = val
        u[self.free_channels] = np.asarray(free_values, float)
        return u

    def embed_control(self, u_free: PeriodicControl) -> PeriodicControl:
        """Full control from one supplied on the free channels only."""
        samples = np.zeros((u_free.k, self.m))
        for ch, val in self.pinned.items():
            samples[:, ch] = val
        samples[:, self.free_channels] = u_free.samples
        return PeriodicControl(u_free.period, samples, u_free.interpolation)

    def embed_perturbation(self, du_free: PeriodicControl) -> PeriodicControl:
        """Full perturbation from free channels; pinned channels stay zero."""
        samples = np.zeros((du_free.k, self.m))
        samples[:, self.free_channels] = du_free.samples
        return PeriodicControl(du_free.period, samples, du_free.interpolation)

    def control_norm(self, u: PeriodicControl) -> float:
        return control_norm(u, self.free_channels)

    def check_admissible(self, u: PeriodicControl):
        """Raise :class:`InadmissibleControl` unless ``u`` is strictly inside the box."""
        if u.m != self.m:
            raise InadmissibleControl(f"control has {u.m} channels, system expects {self.m}")
        vals = u.samples if u.interpolation == LINEAR else u.values_on(
            u.period * np.arange(4 * u.k) / (4 * u.k))
        free = self.free_channels
        v = vals[:, free]
        if np.any(v <= self.lower[free]) or np.any(v >= self.upper[free]):
            raise InadmissibleControl("control leaves the open admissible box")
        for ch, val in self.pinned.items():
            if not np.all(u.samples[:, ch] == val):
                raise InadmissibleControl(f"channel {ch} must be pinned to {val}")

    def check_perturbation(self, du: PeriodicControl):
        if du.m != self.m:
            raise ValueError(f"perturbation has {du.m} channels, system expects {self.m}")
        for ch in self.pinned:
            if np.any(du.samples[:, ch] != 0):
                raise ValueError(f"perturbation must vanish on pinned channel {ch}")


def rhs(sys: BilinearSystem, u: PeriodicControl, t: float, x) -> np.ndarray:
    """``f(u(t)) + M(x) u(t)``."""
    ut = eval_control(u, t)
    return sys.f(ut) + sys.M(np.asarray(x, float)) @ ut


def make_system(n, m, M, J, f=None, Df=None, h=None, h_u=None, h_x=None, **kwargs) -> BilinearSystem:
    """Build a :class:`BilinearSystem`, defaulting ``f`` and ``h`` to zero."""
    if f is None:
        f, Df = _zeros_f(n, m)
    if h is None:
        h = lambda u, x: 0.0  # noqa: E731
        h_u = lambda u, x: np.zeros(m)  # noqa: E731
        h_x = lambda u, x: np.zeros(n)  # noqa: E731
    return BilinearSystem(n=n, m=m, f=f, Df=Df, M=M, J=J, h=h, h_u=h_u, h_x=h_x, **kwargs)


def augment_drift(g: Callable, Dg: Callable, sys: BilinearSystem) -> BilinearSystem:
    """Absorb a state-dependent drift ``g(x)`` into the bilinear form.

    Returns a system with ``m + 1`` controls where channel 0 is pinned to 1,
    ``M_hat(x) = [g(x) | M(x)]`` and ``f_hat(u_hat) = f(u_hat[1:])``, so that
    ``x' = g(x) + f(u) + M(x) u`` for ``u_hat = (1, u)``.
    """
    n, m = sys.n, sys.m

    def f(uh):
        return sys.f(uh[1:])

    def Df(uh):
        return np.hstack([np.zeros((n, 1)), sys.Df(uh[1:])])

    def M(x):
        return np.hstack([np.asarray(g(x), float).reshape(n, 1), sys.M(x)])

    def J(x, uh):
        return uh[0] * np.asarray(Dg(x), float) + sys.J(x, uh[1:])

    def h(uh, x):
        return sys.h(uh[1:], x)

    def h_u(uh, x):
        return np.concatenate([[0.0], sys.h_u(uh[1:], x)])

    def h_x(uh, x):
        return sys.h_x(uh[1:], x)

    pinned = {0: 1.0}
    pinned.update({ch + 1: v for ch, v in sys.pinned.items()})
    return replace(
        sys, m=m + 1, f=f, Df=Df, M=M, J=J, h=h, h_u=h_u, h_x=h_x,
        lower=np.concatenate([[1.0], sys.lower]), upper=np.concatenate([[1.0], sys.upper]),
        pinned=pinned, name=f"{sys.name}+drift", meta=dict(sys.meta, drift=True),
    )
