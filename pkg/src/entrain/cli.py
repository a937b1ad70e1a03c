"""Command-line front end: ``entrain {periodic,goe,kernel,sweep,diagnose}``.

Exit codes: 0 success, 1 usage / I-O / schema error, 2 no convergence,
3 degenerate monodromy or singular matrix.
"""

from __future__ import annotations

import argparse
import io
import json
import logging
import os
import sys as _sys
from concurrent.futures import ProcessPoolExecutor
from typing import Optional

import numpy as np

from .config import (ConfigError, RunConfig, SolverConfig, build_control, build_model,
                     load_json_arg)
from .diagnostics import MeasureKind, contraction_scan
from .errors import (EntrainError, InadmissibleControl, NoConvergence, NonFiniteState,
                     SingularMatrix, SingularMonodromy, StateLeftDomain, StepSizeUnderflow)
from .goe import (goe_exact, goe_first_order, goe_kernel, optimal_constant_direction,
                  optimal_direction_sign)
from .models import MasterSystem
from .periodic import check_c3, solve_periodic

log = logging.getLogger("entrain")

EXIT_OK, EXIT_USAGE, EXIT_NOCONV, EXIT_DEGENERATE = 0, 1, 2, 3


def fmt(x) -> str:
    """17 significant digits, round-trip safe."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    return f"{float(x):.17g}"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(f"{float(obj):.17g}")
    return obj


class Table:
    """CSV body plus ``#`` footer lines, or the equivalent JSON object."""

    def __init__(self, header, rows=(), footer=None, extra=None):
        self.header = list(header)
        self.rows = [list(r) for r in rows]
        self.footer = footer or []
        self.extra = extra or {}

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(self.header) + "\n")
        for r in self.rows:
            buf.write(",".join(fmt(v) for v in r) + "\n")
        for key, vals in self.footer:
            vals = vals if isinstance(vals, (list, tuple, np.ndarray)) else [vals]
            buf.write("# " + ",".join([key] + [fmt(v) for v in vals]) + "\n")
        return buf.getvalue()

    def to_json(self) -> str:
        obj = {"columns": self.header, "rows": self.rows}
        obj.update({k: v for k, v in self.footer})
        obj.update(self.extra)
        return json.dumps(_jsonable(obj), indent=1, sort_keys=True) + "\n"


def _emit(table: Table, args):
    text = table.to_json() if args.format == "json" else table.to_csv()
    if args.out in (None, "-"):
        _sys.stdout.write(text)
        return
    tmp = args.out + ".part"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, args.out)


# -- configuration --------------------------------------------------------

def _run_config(args) -> RunConfig:
    if args.model is None:
        raise ConfigError("--model is required")
    base_dir = "."
    model = load_json_arg(args.model)
    control = load_json_arg(args.control) if args.control else None
    if args.control and os.path.exists(args.control):
        base_dir = os.path.dirname(os.path.abspath(args.control))
    pert = load_json_arg(args.perturb) if getattr(args, "perturb", None) else None
    solver = SolverConfig(newton_tol=args.newton_tol, max_iter=args.max_iter,
                          ode_tol=args.tol, grid_k=args.grid_k)
    return RunConfig(model, control, pert, bool(getattr(args, "zero_mean", False)),
                     args.seed, solver, base_dir)


def _controls(cfg: RunConfig, sys, need_perturbation: bool):
    if cfg.control is None:
        raise ConfigError("--control is required")
    k = cfg.solver.grid_k
    u = build_control(sys, cfg.control, k=k, seed=cfg.seed, base_dir=cfg.base_dir)
    du = None
    if cfg.perturbation is not None:
        du = build_control(sys, cfg.perturbation, period=u.period, k=u.k, seed=cfg.seed,
                           perturbation=True, base_dir=cfg.base_dir)
        if du.period != u.period:
            raise ConfigError("control and perturbation periods differ")
        if cfg.zero_mean:
            du = du.zero_mean()
    elif need_perturbation:
        raise ConfigError("--perturb is required")
    return u, du


def _solve(cfg, sys, u, x_init=None):
    s = cfg.solver
    return solve_periodic(sys, u, x_init=x_init, max_iter=s.max_iter,
                          newton_tol=s.newton_tol, tol=s.ode_tol)


# -- commands ---------------------------------------------------------------

def cmd_periodic(args) -> int:
    cfg = _run_config(args)
    sys = build_model(cfg.model)
    u, _ = _controls(cfg, sys, False)
    sol = _solve(cfg, sys, u)
    ok, rep = check_c3(sol)
    t = sol.trajectory.grid.nodes
    U = u.values_on(t)
    header = ["t"] + [f"x{i}" for i in range(sys.n)] + [f"u{j}" for j in range(sys.m)] + ["y"]
    cols = [t[:, None], sol.states, U,
            np.array([sys.h(U[i], sol.states[i]) for i in range(t.size)])[:, None]]
    if isinstance(sys, MasterSystem):
        header += [f"z{i}" for i in range(sys.configurations)]
        cols.append(sys.to_probability(sol.states))
    lam = rep["eigenvalues"]
    order = np.lexsort((lam.imag, lam.real))
    footer = [
        ("gamma0", sol.gamma0),
        ("eigenvalues_real", lam.real[order]),
        ("eigenvalues_imag", lam.imag[order]),
        ("min_distance_to_one", rep["min_distance_to_one"]),
        ("spectral_radius", rep["spectral_radius"]),
        ("nondegenerate", ok),
        ("residual", sol.residual),
        ("iterations", sol.iterations),
    ]
    _emit(Table(header, np.hstack(cols), footer), args)
    return EXIT_OK if ok else EXIT_DEGENERATE


def cmd_goe(args) -> int:
    cfg = _run_config(args)
    sys = build_model(cfg.model)
    u, du = _controls(cfg, sys, True)
    s = cfg.solver
    rep = goe_exact(sys, u, du, newton_tol=s.newton_tol, tol=s.ode_tol, max_iter=s.max_iter)
    d = rep.as_dict()
    header = list(d)
    footer = []
    if args.richardson:
        u2, du2 = u.resample(2 * u.k), du.resample(2 * u.k)
        rep2 = goe_exact(sys, u2, du2, newton_tol=s.newton_tol, tol=s.ode_tol,
                         max_iter=s.max_iter, first_order=False)
        footer.append(("richardson_goe_2k", rep2.goe))
        footer.append(("richardson_difference", rep2.goe - rep.goe))
    _emit(Table(header, [[d[h] for h in header]], footer), args)
    return EXIT_OK


def cmd_kernel(args) -> int:
    cfg = _run_config(args)
    sys = build_model(cfg.model)
    u, du = _controls(cfg, sys, False)
    sol = _solve(cfg, sys, u)
    K = goe_kernel(sys, sol)
    sgn = optimal_direction_sign(K)
    t = K.grid.nodes
    S = np.vstack([sgn.samples, sgn.samples[:1]])
    header = (["t"] + [f"K{j}" for j in range(sys.m)] + [f"sign{j}" for j in range(sys.m)])
    footer = [("kernel_method", 0.0 if K.method == "sweep" else 1.0)]
    if u.is_constant():
        vbar = u.samples[0]
        footer.append(("constant_direction", optimal_constant_direction(sys, vbar, sol.gamma0)))
    if du is not None:
        a, b = K.apply(du), goe_first_order(sys, sol, du)
        footer += [("kernel_first_order", a), ("direct_first_order", b),
                   ("fubini_difference", a - b)]
    _emit(Table(header, np.hstack([t[:, None], K.values, S]), footer), args)
    return EXIT_OK


def cmd_diagnose(args) -> int:
    cfg = _run_config(args)
    sys = build_model(cfg.model)
    u, _ = _controls(cfg, sys, False)
    sol = _solve(cfg, sys, u)
    if args.measure == "weighted-l1":
        if not args.weights:
            raise ConfigError("weighted-l1 needs --weights")
        kind = MeasureKind.weighted([float(w) for w in args.weights.split(",")])
    else:
        kind = MeasureKind(args.measure)
    jac = None
    if args.probability:
        if not isinstance(sys, MasterSystem):
            raise ConfigError("--probability applies to master-equation models only")
        jac = sys.full_jacobian
    eta, prof = contraction_scan(sys, sol, kind, return_profile=True, jacobian=jac)
    _, rep = check_c3(sol)
    t = sol.trajectory.grid.nodes
    footer = [("eta_hat", eta), ("spectral_radius", rep["spectral_radius"]),
              ("contractive_along_orbit", eta < 0)]
    _emit(Table(["t", "mu"], np.column_stack([t, prof]), footer), args)
    return EXIT_OK


def _parse_axis(text: Optional[str], name: str):
    if text is None:
        return None
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"--{name}: {exc}") from exc
    if not vals:
        raise ConfigError(f"--{name} is empty")
    return vals


def _sweep_point(task):
    """Worker: rebuild everything from plain data so it pickles cleanly."""
    cfg, point = task
    sys = build_model(cfg.model)
    ctrl = dict(cfg.control)
    pert = dict(cfg.perturbation)
    if "frequency" in point:
        w = point["frequency"]
        for c in (ctrl, pert):
            c["period"] = 2 * np.pi / w
            if c.get("kind") == "harmonic":
                c["omega"] = w
    if "amplitude" in point:
        if pert.get("kind") != "harmonic":
            raise ConfigError("an amplitude sweep needs a harmonic perturbation")
        pert["amplitude"] = point["amplitude"]
    cfg = RunConfig(cfg.model, ctrl, pert, cfg.zero_mean, cfg.seed, cfg.solver, cfg.base_dir)
    u, du = _controls(cfg, sys, True)
    if "epsilon" in point:
        du = du * point["epsilon"]
    s = cfg.solver
    rep = goe_exact(sys, u, du, newton_tol=s.newton_tol, tol=s.ode_tol, max_iter=s.max_iter)
    return rep.goe, rep.first_order_prediction, rep.residual


def loglog_slope(x, y) -> float:
    """Least-squares slope of ``log|y|`` against ``log x``; nan if undefined."""
    x, y = np.asarray(x, float), np.abs(np.asarray(y, float))
    ok = (x > 0) & (y > 0)
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])


def cmd_sweep(args) -> int:
    cfg = _run_config(args)
    axes = [(name, _parse_axis(getattr(args, name), name))
            for name in ("epsilon", "amplitude", "frequency")]
    axes = [(n, v) for n, v in axes if v is not None]
    if not axes:
        raise ConfigError("give at least one of --epsilon, --amplitude, --frequency")
    if cfg.perturbation is None:
        raise ConfigError("--perturb is required")
    build_model(cfg.model)                      # fail fast on schema errors
    grids = np.meshgrid(*[v for _, v in axes], indexing="ij")
    points = [dict(zip([n for n, _ in axes], (float(g.flat[i]) for g in grids)))
              for i in range(grids[0].size)]
    tasks = [(cfg, p) for p in points]
    if args.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_point, tasks))    # input order preserved
    else:
        results = [_sweep_point(t) for t in tasks]
    names = [n for n, _ in axes]
    rows = [[p[n] for n in names] + list(r) for p, r in zip(points, results)]
    slope = float("nan")
    if len(axes) == 1 and names[0] in ("epsilon", "amplitude"):
        slope = loglog_slope([p[names[0]] for p in points], [r[0] for r in results])
    table = Table(names + ["goe_exact", "goe_first_order", "residual"], rows,
                  [("slope", slope)])
    _emit(table, args)
    return EXIT_OK


# -- entry point ------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", help="model JSON file, inline JSON, or built-in name")
    common.add_argument("--control", help="base control JSON file or inline JSON")
    common.add_argument("--out", help="output path (default: standard output)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--tol", type=float, default=SolverConfig.ode_tol, help="ODE tolerance")
    common.add_argument("--newton-tol", type=float, default=SolverConfig.newton_tol)
    common.add_argument("--max-iter", type=int, default=SolverConfig.max_iter)
    common.add_argument("--grid-k", type=int, default=None, help="samples per period (even)")
    common.add_argument("--seed", type=int, default=None)

    pert = argparse.ArgumentParser(add_help=False)
    pert.add_argument("--perturb", help="perturbation JSON file or inline JSON")
    pert.add_argument("--zero-mean", action="store_true", help="project the perturbation to zero mean")

    p = argparse.ArgumentParser(prog="entrain", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("periodic", parents=[common], help="periodic solution and monodromy")
    g = sub.add_parser("goe", parents=[common, pert], help="exact and first-order GOE")
    g.add_argument("--richardson", action="store_true", help="repeat on a 2k grid and report the change")
    sub.add_parser("kernel", parents=[common, pert], help="GOE kernel and optimal directions")
    s = sub.add_parser("sweep", parents=[common, pert], help="GOE over parameter lists")
    s.add_argument("--epsilon", help="comma-separated perturbation scales")
    s.add_argument("--amplitude", help="comma-separated harmonic amplitudes")
    s.add_argument("--frequency", help="comma-separated angular frequencies")
    s.add_argument("--jobs", type=int, default=1)
    d = sub.add_parser("diagnose", parents=[common], help="contraction scan along the orbit")
    d.add_argument("--measure", choices=("l1", "linf", "weighted-l1"), default="l1")
    d.add_argument("--weights", help="comma-separated positive weights for weighted-l1")
    d.add_argument("--probability", action="store_true",
                   help="measure a master equation's A(u) instead of the reduced Jacobian")
    return p


COMMANDS = {"periodic": cmd_periodic, "goe": cmd_goe, "kernel": cmd_kernel,
            "sweep": cmd_sweep, "diagnose": cmd_diagnose}


def _setup_logging():
    level = os.environ.get("ENTRAIN_LOG", "error").upper()
    logging.basicConfig(level=getattr(logging, level, logging.ERROR), stream=_sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except (NoConvergence, StepSizeUnderflow, StateLeftDomain, NonFiniteState) as exc:
        print(f"entrain: no convergence: {exc}", file=_sys.stderr)
        return EXIT_NOCONV
    except (SingularMonodromy, SingularMatrix) as exc:
        print(f"entrain: degenerate: {exc}", file=_sys.stderr)
        return EXIT_DEGENERATE
    except (ConfigError, InadmissibleControl, OSError, ValueError, KeyError, TypeError) as exc:
        print(f"entrain: error: {exc}", file=_sys.stderr)
        return EXIT_USAGE
    except EntrainError as exc:
        print(f"entrain: {exc}", file=_sys.stderr)
        return EXIT_USAGE


def run():
    _sys.exit(main())


if __name__ == "__main__":
    run()
