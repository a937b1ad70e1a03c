"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line."""

import numpy as np
import pytest

from conftest import ACCEPTANCE_RESULTS, MASTER3_RATES, trig_perturbation
from entrain import (PeriodicControl, TimeGrid, dgamma_apply, dgamma_constant, goe_exact,
                     goe_first_order, goe_kernel, integrate, iterate_map, rhs, solve_periodic)
from entrain.models import (MasterChainSpec, build_example_linear, build_example_pavlov,
                            build_example_scalar, build_master, build_rfm,
                            pavlov_periodic_output, random_hurwitz)

TWO_PI = 2 * np.pi


def report(n, ok, detail):
    ACCEPTANCE_RESULTS[n] = (bool(ok), detail)
    print(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
    assert ok, detail


def _pavlov_setup(a, omega, k=128):
    sys = build_example_pavlov()
    T = TWO_PI / omega
    u = sys.embed_control(PeriodicControl.constant([0.0], T, k, "trig"))
    du = sys.embed_perturbation(PeriodicControl.harmonic([0.0], [a], omega, k=k))
    return sys, u, du


def test_criterion_01_pavlov_goe():
    worst = 0.0
    for a, omega in [(0.5, 1.0), (0.2, 2.0), (1.0, 0.5)]:
        sys, u, du = _pavlov_setup(a, omega)
        rep = goe_exact(sys, u, du)
        exact = a * a / (2 * (1 + omega * omega))
        worst = max(worst, abs(rep.goe - exact) / exact)
    report(1, worst <= 1e-5, f"Pavlov GOE max relative error {worst:.2e} (<= 1e-5)")


def test_criterion_02_pavlov_time_domain():
    worst = 0.0
    for a, omega in [(0.5, 1.0), (0.2, 2.0), (1.0, 0.5)]:
        sys, u, du = _pavlov_setup(a, omega)
        sol = solve_periodic(sys, u + du)
        T = u.period
        for t in T * np.arange(32) / 32:
            y = sys.h((u + du)(t), sol.trajectory.at(t))
            worst = max(worst, abs(y - pavlov_periodic_output(t, a, omega)))
    report(2, worst <= 1e-6, f"Pavlov periodic output max abs error {worst:.2e} at 32 times (<= 1e-6)")


def test_criterion_03_linear_null():
    systems = [build_example_linear([[-1.0]], [1.0], [1.0])]
    A = random_hurwitz(3, seed=11)
    systems.append(build_example_linear(A, [1.0, -0.5, 2.0], [0.3, 1.0, -1.0]))
    worst = 0.0
    for sys in systems:
        for omega, amp, phase in [(1.0, 0.5, 0.0), (2.0, 0.3, 1.0), (0.5, 0.9, 2.5), (3.0, 1.2, -0.7)]:
            T = TWO_PI / omega
            u = sys.embed_control(PeriodicControl.constant([1.0], T, 128, "trig"))
            du = sys.embed_perturbation(PeriodicControl.harmonic([0.0], [amp], omega, phase, k=128))
            worst = max(worst, abs(goe_exact(sys, u, du).goe))
    report(3, worst <= 1e-8, f"linear GOE max |value| {worst:.2e} over 8 sinusoids (<= 1e-8)")


def test_criterion_04_dgamma_central_difference(rfm3, rfm3_harmonic, rfm3_solution):
    rng = np.random.default_rng(2024)
    eps = 1e-4
    worst = -np.inf
    for _ in range(5):
        du = trig_perturbation(4, rfm3_harmonic.period, rng) * 0.2
        d = dgamma_apply(rfm3, rfm3_solution, du)
        gp = solve_periodic(rfm3, rfm3_harmonic + eps * du, x_init=rfm3_solution.gamma0).gamma0
        gm = solve_periodic(rfm3, rfm3_harmonic - eps * du, x_init=rfm3_solution.gamma0).gamma0
        err = np.linalg.norm((gp - gm) / (2 * eps) - d)
        worst = max(worst, err - (1e-4 * np.linalg.norm(d) + 1e-8))
    report(4, worst <= 0, f"central difference vs dGamma: worst margin {worst:.2e} (<= 0)")


def _slope(sys, u, du):
    eps = np.array([1e-1, 3e-2, 1e-2, 3e-3, 1e-3])
    base = solve_periodic(sys, u)
    g = [goe_exact(sys, u, e * du, base=base, first_order=False).goe for e in eps]
    return np.polyfit(np.log(eps), np.log(np.abs(g)), 1)[0]


def test_criterion_05_goe_scaling():
    rng = np.random.default_rng(5)
    slopes = {}
    for n in (2, 3):
        sys = build_rfm(n)
        v = np.linspace(0.8, 1.4, n + 1)
        u = sys.embed_control(PeriodicControl.constant(v, 2.0, 128, "trig"))
        du = sys.embed_perturbation(trig_perturbation(n + 1, 2.0, rng) * 0.3)
        slopes[f"rfm{n}"] = _slope(sys, u, du.zero_mean())
    rates = {2: np.array([[0.0, 2.0], [1.0, 0.0]]), 3: MASTER3_RATES}
    for n in (2, 3):
        sys = build_master(MasterChainSpec(n))
        u = PeriodicControl.constant(rates[n].ravel(), 2.0, 128, "trig")
        du = trig_perturbation(n * n, 2.0, rng, channels=sys.free_channels) * 0.3
        # rates stay above the admissible lower bound for every epsilon used
        assert np.all((u + 0.1 * du).samples[:, sys.free_channels] > 0.2)
        slopes[f"master{n}"] = _slope(sys, u, du.zero_mean())
    lo = min(slopes.values())
    detail = ", ".join(f"{k} {v:.3f}" for k, v in slopes.items())
    report(5, lo >= 1.9, f"log-log GOE slopes {detail} (>= 1.9)")


def test_criterion_06_kernel_equivalence(rfm3):
    # the kernel is sampled on the control grid; its quadrature error is O((T/k)^4)
    k = 256
    u = PeriodicControl.harmonic([1, 1.2, 0.8, 1.1], [0.3, 0.2, 0.1, 0.25], 1.0,
                                 phase=[0, 1, 2, 3], k=k)
    sol = solve_periodic(rfm3, u)
    K = goe_kernel(rfm3, sol)
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(10):
        du = trig_perturbation(4, u.period, rng, k=k)
        worst = max(worst, abs(K.apply(du) - goe_first_order(rfm3, sol, du)))
    report(6, worst <= 1e-7, f"kernel vs first-order GOE max abs difference {worst:.2e} (<= 1e-7)")


def test_criterion_07_constant_formula(master3):
    k = 1024
    u = PeriodicControl.constant(MASTER3_RATES.ravel(), 2.0, k, "trig")
    sol = solve_periodic(master3, u)
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(3):
        du = trig_perturbation(9, 2.0, rng, k=k, channels=master3.free_channels)
        a = dgamma_constant(master3, u.samples[0], sol.gamma0, 2.0, du)
        b = dgamma_apply(master3, sol, du)
        worst = max(worst, np.linalg.norm(a - b) / np.linalg.norm(b))
    report(7, worst <= 1e-8, f"constant-control formula vs variational dGamma rel. diff {worst:.2e} (<= 1e-8)")


def test_criterion_08_scalar_exact():
    sys = build_example_scalar()
    rng = np.random.default_rng(8)
    newton_tol = 1e-12
    worst_g, worst_d = 0.0, 0.0
    controls = [
        PeriodicControl.harmonic([1.0], [0.5], 1.0, k=128),
        PeriodicControl.harmonic([2.0], [1.5], 3.0, 0.4, k=128),
        PeriodicControl(1.0, 1.0 + 0.5 * np.abs(np.sin(np.pi * np.arange(64) / 64))[:, None], "linear"),
    ]
    for u in controls:
        sol = solve_periodic(sys, u, newton_tol=newton_tol)
        worst_g = max(worst_g, float(np.max(np.abs(sol.gamma0))))
        du = trig_perturbation(1, u.period, rng, k=u.k)
        if u.interpolation == "linear":
            du = PeriodicControl(u.period, du.samples, "linear")
        worst_d = max(worst_d, float(np.max(np.abs(dgamma_apply(sys, sol, du)))))
    ok = worst_g <= newton_tol and worst_d <= 1e-10
    report(8, ok, f"scalar example |Gamma| {worst_g:.1e} (<= {newton_tol:g}), |dGamma| {worst_d:.1e} (<= 1e-10)")


def _random_master_rates(sys, rng, T, k=64):
    free = len(sys.free_channels)
    mean = rng.uniform(0.5, 2.0, free)
    amp = rng.uniform(0.0, 0.4, free) * mean
    phase = rng.uniform(0, TWO_PI, free)
    return sys.embed_control(PeriodicControl.harmonic(mean, amp, TWO_PI / T, phase, k=k, period=T))


def test_criterion_09_master_invariants():
    rng = np.random.default_rng(9)
    specs = [MasterChainSpec(3), MasterChainSpec(4, [(0, 1), (1, 2), (2, 3), (3, 0), (2, 0)])]
    worst_sum, worst_neg, worst_rho = 0.0, 0.0, 0.0
    for i in range(10):
        sys = build_master(specs[i % 2])
        T = float(rng.uniform(0.5, 3.0))
        u = _random_master_rates(sys, rng, T)
        z0 = rng.dirichlet(np.ones(sys.configurations))
        grid = TimeGrid.linspace(0.0, 3 * T, 96)
        tr = integrate(lambda t, x: rhs(sys, u, t % T, x), sys.from_probability(z0), grid)
        Z = sys.to_probability(tr.states)
        worst_sum = max(worst_sum, float(np.max(np.abs(Z.sum(axis=1) - 1))))
        worst_neg = max(worst_neg, float(-Z.min()))
        worst_rho = max(worst_rho, solve_periodic(sys, u).monodromy.spectral_radius)
    ok = worst_sum <= 1e-10 and worst_neg <= 1e-10 and worst_rho < 1
    report(9, ok, f"master |1'z - 1| {worst_sum:.1e}, min z {-worst_neg:.1e}, "
                  f"max spectral radius {worst_rho:.4f} (< 1)")


def test_criterion_10_rfm_invariance_and_entrainment(rfm3):
    # period 2: the dominant multiplier is well separated, so the decay is
    # governed by the spectral radius from the first period on
    rng = np.random.default_rng(10)
    T = 2.0
    u = PeriodicControl.harmonic([1.0, 1.2, 0.8, 1.1], [0.3, 0.2, 0.1, 0.25], TWO_PI / T,
                                 phase=[0, 1, 2, 3], k=64)
    sol = solve_periodic(rfm3, u)
    rho = sol.monodromy.spectral_radius
    lo, hi, worst_ratio = np.inf, -np.inf, 0.0
    for _ in range(10):
        x0 = rng.uniform(0, 1, 3)
        grid = TimeGrid.linspace(0.0, 5 * T, 320)
        tr = integrate(lambda t, x: rhs(rfm3, u, t % T, x), x0, grid)
        lo, hi = min(lo, tr.states.min()), max(hi, tr.states.max())
        X = iterate_map(rfm3, u, x0, 5)
        d = np.linalg.norm(X[1:] - sol.gamma0, axis=1)          # k = 1..5
        assert np.all(np.diff(d) < 0)
        ratio = np.exp(np.polyfit(np.arange(1, 6), np.log(d), 1)[0])   # fitted geometric rate
        worst_ratio = max(worst_ratio, abs(ratio - rho))
    ok = lo >= -1e-9 and hi <= 1 + 1e-9 and worst_ratio <= 0.1
    report(10, ok, f"RFM states in [{lo:.3f}, {hi:.3f}], fitted decay ratio within "
                   f"{worst_ratio:.3f} of spectral radius {rho:.3f} (<= 0.1)")


def _order(errs, steps):
    return np.polyfit(np.log(steps), np.log(errs), 1)[0]


def test_criterion_11_integrator_order():
    x0, grid = np.array([1.0]), TimeGrid.linspace(0.0, 1.0, 1)
    decay = lambda t, x: -x  # noqa: E731

    # fixed-step RK4, each step size against a run with a 10x smaller step
    hs = np.array([0.1, 0.05, 0.025])
    errs = [abs(integrate(decay, x0, grid, method="rk4", step=h).final[0]
                - integrate(decay, x0, grid, method="rk4", step=h / 10).final[0]) for h in hs]
    rk4 = _order(errs, hs)

    # adaptive DOPRI5 at three tolerances, each against a run at a 10x tighter tolerance
    errs, steps = [], []
    for tol in (1e-5, 1e-6, 1e-7):
        tr = integrate(decay, x0, grid, tol=tol, atol=tol * 1e-2)
        ref = integrate(decay, x0, grid, tol=tol / 10, atol=tol * 1e-3)
        errs.append(abs(tr.final[0] - ref.final[0]))
        steps.append(1.0 / tr.stats["steps"])
    dopri = _order(errs, steps)
    ok = rk4 >= 4 and dopri >= 4
    report(11, ok, f"observed order RK4 {rk4:.2f}, DOPRI5 {dopri:.2f} (>= 4)")
