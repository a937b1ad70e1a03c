import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from entrain import (PeriodicControl, dgamma_apply, dgamma_batch, dgamma_constant,
                     directional_state_sensitivities, directional_state_sensitivity,
                     make_system, solve_periodic, variational_flow)
from entrain.errors import SingularMatrix
from entrain.models import (MasterChainSpec, build_example_pavlov, build_example_scalar,
                            build_master, rfm_steady_state)

from conftest import MASTER3_RATES, trig_perturbation


def test_zero_direction_gives_zero(rfm3, rfm3_harmonic):
    du = PeriodicControl.constant(np.zeros(4), rfm3_harmonic.period, 128, "trig")
    s = directional_state_sensitivity(rfm3, rfm3_harmonic, np.full(3, 0.5), du)
    assert np.all(s.z == 0.0)


def test_scalar_constant_direction():
    sys = build_example_scalar()
    u = PeriodicControl.constant([1.0], 1.0, 8)
    delta = 0.3
    s = directional_state_sensitivity(sys, u, np.array([1.0]), PeriodicControl.constant([delta], 1.0, 8))
    assert np.array_equal(s.z[0], [0.0])
    assert abs(s.z[-1, 0] + delta * math.exp(-1)) < 1e-11


def test_state_sensitivity_matches_central_difference(rfm3, rfm3_harmonic):
    rng = np.random.default_rng(2)
    du = trig_perturbation(4, rfm3_harmonic.period, rng)
    x0 = np.array([0.3, 0.6, 0.4])
    z = directional_state_sensitivity(rfm3, rfm3_harmonic, x0, du, tol=1e-12).z[-1]
    eps = 1e-5
    xp = variational_flow(rfm3, rfm3_harmonic + eps * du, x0, tol=1e-12, transfer=False).states[-1]
    xm = variational_flow(rfm3, rfm3_harmonic - eps * du, x0, tol=1e-12, transfer=False).states[-1]
    fd = (xp - xm) / (2 * eps)
    assert np.linalg.norm(z - fd) <= 1e-5 * np.linalg.norm(fd)


def test_batch_matches_single(rfm3, rfm3_harmonic):
    rng = np.random.default_rng(3)
    dus = [trig_perturbation(4, rfm3_harmonic.period, rng) for _ in range(3)]
    batch = directional_state_sensitivities(rfm3, rfm3_harmonic, np.full(3, 0.5), dus)
    single = directional_state_sensitivity(rfm3, rfm3_harmonic, np.full(3, 0.5), dus[1])
    assert np.allclose(batch[1].z, single.z, atol=1e-9)


@pytest.mark.parametrize("u", [
    PeriodicControl.harmonic([1.0], [0.8], 2 * np.pi, k=32),
    PeriodicControl.harmonic([2.0], [1.5], 4 * np.pi, phase=1.0, k=32, period=1.0),
])
def test_scalar_example_dgamma_zero(u):
    sys = build_example_scalar()
    sol = solve_periodic(sys, u)
    du = PeriodicControl.harmonic([0.3], [0.7], 2 * np.pi, phase=0.2, k=32, period=1.0)
    assert np.max(np.abs(dgamma_apply(sys, sol, du))) <= 1e-10


def test_dgamma_zero_direction(rfm3, rfm3_solution):
    du = PeriodicControl.constant(np.zeros(4), rfm3_solution.period, 128, "trig")
    assert np.all(dgamma_apply(rfm3, rfm3_solution, du) == 0.0)


@pytest.mark.parametrize("a,omega", [(0.5, 1.0), (0.2, 2.0)])
def test_pavlov_dgamma(a, omega):
    sys = build_example_pavlov()
    u = sys.embed_control(PeriodicControl.constant([0.0], 2 * np.pi / omega, 128, "trig"))
    du = sys.embed_perturbation(PeriodicControl.harmonic([0.0], [a], omega, k=128))
    sol = solve_periodic(sys, u)
    d = dgamma_apply(sys, sol, du)
    # x1 is quadratic in the input, x2 linear: x2(0) = -a w / (1 + w^2)
    assert abs(d[0]) < 1e-12
    assert abs(d[1] + a * omega / (1 + omega**2)) < 1e-10
    eps = 1e-4
    gp = solve_periodic(sys, u + eps * du).gamma0
    gm = solve_periodic(sys, u - eps * du).gamma0
    fd = (gp - gm) / (2 * eps)
    assert np.linalg.norm(fd - d) <= 1e-4 * np.linalg.norm(d)


@settings(max_examples=5, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_dgamma_linearity(seed):
    from entrain.models import build_rfm
    sys = build_rfm(3)
    u = PeriodicControl.harmonic([1, 1.2, 0.8, 1.1], [0.3, 0.2, 0.1, 0.25], 1.0,
                                 phase=[0, 1, 2, 3], k=64)
    sol = solve_periodic(sys, u)
    rng = np.random.default_rng(seed)
    d1, d2 = (trig_perturbation(4, u.period, rng, k=64) for _ in range(2))
    a, b = rng.normal(size=2)
    vals, _ = dgamma_batch(sys, sol, [d1, d2, a * d1 + b * d2])
    assert np.max(np.abs(vals[2] - (a * vals[0] + b * vals[1]))) <= 1e-10


def test_first_order_residual_slope(rfm3, rfm3_harmonic, rfm3_solution):
    rng = np.random.default_rng(4)
    du = trig_perturbation(4, rfm3_harmonic.period, rng) * 0.2
    d = dgamma_apply(rfm3, rfm3_solution, du)
    eps = np.array([1e-1, 1e-2, 1e-3, 1e-4])
    res = []
    for e in eps:
        g = solve_periodic(rfm3, rfm3_harmonic + e * du, x_init=rfm3_solution.gamma0).gamma0
        res.append(np.linalg.norm(g - rfm3_solution.gamma0 - e * d))
    slope = np.polyfit(np.log(eps), np.log(res), 1)[0]
    assert slope >= 1.9


# -- constant-control formula ------------------------------------------------------

def _master_constant(sys, k=512):
    return PeriodicControl.constant(MASTER3_RATES.ravel(), 2.0, k, "trig")


def test_dgamma_constant_zero_and_constant_direction(master3):
    u = _master_constant(master3)
    sol = solve_periodic(master3, u)
    v, e = u.samples[0], sol.gamma0
    zero = PeriodicControl.constant(np.zeros(9), 2.0, 512, "trig")
    assert np.all(dgamma_constant(master3, v, e, 2.0, zero) == 0.0)
    w = np.where(np.eye(3).ravel() == 1, 0.0, np.linspace(0.1, 0.9, 9))
    d = dgamma_constant(master3, v, e, 2.0, PeriodicControl.constant(w, 2.0, 512, "trig"))
    H = master3.J(e, v)
    B = master3.M(e) + master3.Df(v)
    # Simpson error is O(h^4) with h = T/512
    assert np.allclose(d, -np.linalg.solve(H, B @ w), atol=1e-10)


def test_dgamma_constant_matches_apply_master(master3):
    u = _master_constant(master3)
    sol = solve_periodic(master3, u)
    rng = np.random.default_rng(8)
    chans = master3.free_channels
    for _ in range(3):
        du = trig_perturbation(9, 2.0, rng, k=512, channels=chans)
        a = dgamma_constant(master3, u.samples[0], sol.gamma0, 2.0, du)
        b = dgamma_apply(master3, sol, du)
        assert np.linalg.norm(a - b) <= 1e-8 * np.linalg.norm(b)


def test_dgamma_constant_matches_rfm_steady_state():
    from entrain.models import build_rfm
    sys = build_rfm(2)
    v = np.array([1.0, 0.7, 1.3])
    e = rfm_steady_state(v)
    du = PeriodicControl.harmonic(np.zeros(3), [0.2, 0.1, 0.3], 2 * np.pi, phase=[0, 1, 2],
                                  k=512, period=1.0)
    sol = solve_periodic(sys, PeriodicControl.constant(v, 1.0, 512, "trig"))
    a = dgamma_constant(sys, v, e, 1.0, du)
    b = dgamma_apply(sys, sol, du)
    assert np.linalg.norm(a - b) <= 1e-8 * np.linalg.norm(b)


def test_dgamma_constant_errors(master3):
    u = _master_constant(master3)
    sol = solve_periodic(master3, u)
    v = u.samples[0]
    du = PeriodicControl.constant(np.zeros(9), 2.0, 63, "trig")
    with pytest.raises(ValueError):
        dgamma_constant(master3, v, sol.gamma0, 2.0, du)               # odd k
    du = PeriodicControl.constant(np.zeros(9), 2.0, 512, "trig")
    with pytest.raises(ValueError):
        dgamma_constant(master3, v, sol.gamma0 + 0.1, 2.0, du)         # not an equilibrium
    zero = make_system(1, 1, M=lambda x: np.zeros((1, 1)), J=lambda x, u: np.zeros((1, 1)))
    with pytest.raises(SingularMatrix):
        dgamma_constant(zero, [1.0], [0.0], 1.0, PeriodicControl.constant([0.0], 1.0, 8))
