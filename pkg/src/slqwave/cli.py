"""Command-line driver: single-path simulation, Monte Carlo optimization,
refinement studies and the oracle cross-check.  Every command writes CSV
artifacts that the plotting frontend consumes.

CSV schemas (floats with 17 significant digits, byte-identical re-runs):
    surface    t,x,value
    cost-decay iter,cost
    histogram  sample_index,value
    rates      h,tau,err2_control,err2_state   (trailing h=0 row = fitted slopes)
    residuals  iter,residual

Exit codes: 0 success, 2 configuration error, 3 tolerance breach in checks.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .descent import (
    GradientConfig,
    UnsupportedConfigurationError,
    lipschitz_bound,
    run_gradient_descent,
)
from .noise import RngConfig, TimeGrid, coarsen_path, sample_gaussian_path
from .oracle import build_tree, compare_with_descent
from .presets import (
    ConfigError,
    ExperimentConfig,
    build_problem,
    histogram_node_index,
    preset,
)

_REGIME_NAMES = {0.0: "zero", 0.1: "small", 1.0: "large"}

_INT_KEYS = {"N", "m_cells", "m_w", "iters", "samples", "seed", "workers"}
_FLOAT_KEYS = {"length", "T", "alpha", "beta", "noise_scale", "kappa", "residual_tol"}
_STR_KEYS = {"sigma_spec", "target_spec", "init_spec", "out_dir"}


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def parse_config_file(path: str) -> dict:
    """Flat key-value file: `key = value` per line, # comments allowed."""
    values = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line:
            key, _, value = line.partition("=")
        else:
            parts = line.split(None, 1)
            if len(parts) != 2:
                raise ConfigError(f"{path}:{lineno}: expected `key = value`, got {raw!r}")
            key, value = parts
        key, value = key.strip(), value.strip()
        try:
            if key in _INT_KEYS:
                values[key] = int(value)
            elif key in _FLOAT_KEYS:
                values[key] = float(value)
            elif key == "gamma":
                values[key] = tuple(float(v) for v in value.split(","))
            elif key in _STR_KEYS:
                values[key] = value
            else:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        except ValueError:
            raise ConfigError(f"{path}:{lineno}: cannot parse value {value!r} for {key!r}") from None
    return values


def resolve_config(args) -> ExperimentConfig:
    config = preset(args.preset) if args.preset else ExperimentConfig()
    overrides = parse_config_file(args.config) if args.config else {}
    for flag in ("seed", "samples", "iters", "workers"):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[flag] = value
    if getattr(args, "noise_scale", None) is not None:
        overrides["noise_scale"] = args.noise_scale
    if getattr(args, "out", None) is not None:
        overrides["out_dir"] = args.out
    return dataclasses.replace(config, **overrides)


def write_csv(path: Path, header: str, rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as f:
        f.write(header + "\n")
        for row in rows:
            f.write(",".join(fmt(v) if isinstance(v, float) else str(v) for v in row) + "\n")
    return path


def _surface_rows(grid: TimeGrid, space, values):
    """(t, x, value) rows over the full node set, boundary zeros included."""
    xs = space.mesh.nodes_with_boundary
    rows = []
    for n, t in enumerate(grid.times):
        padded = space.with_boundary(values[n])
        for x, v in zip(xs, padded):
            rows.append((float(t), float(x), float(v)))
    return rows


def _regime_suffix(config: ExperimentConfig, explicit: bool) -> str:
    if not explicit:
        return ""
    name = _REGIME_NAMES.get(config.noise_scale)
    return f"_{name}" if name else f"_scale{config.noise_scale:g}"


def _descent_config(config: ExperimentConfig) -> GradientConfig:
    return GradientConfig(
        kappa=config.kappa, max_iters=config.iters, residual_tol=config.residual_tol
    )


def cmd_simulate(args) -> int:
    config = resolve_config(args)
    problem = build_problem(config)
    _validate_kappa(config, problem)
    dW = sample_gaussian_path(RngConfig(config.seed, 0), problem.grid, config.m_w)
    result = run_gradient_descent(problem, dW, _descent_config(config))

    out = Path(config.out_dir)
    grid, space = problem.grid, problem.space
    # controls are step values at t_0..t_{N-1}; the surface repeats the last
    # step at t_N so all three surfaces share the (N+1) x (d_h+2) grid
    u_ext = np.vstack([result.control, result.control[-1:]])
    written = [
        write_csv(out / f"surface_control{_regime_suffix(config, args.noise_scale is not None)}.csv",
                  "t,x,value", _surface_rows(grid, space, u_ext)),
        write_csv(out / f"surface_displacement{_regime_suffix(config, args.noise_scale is not None)}.csv",
                  "t,x,value", _surface_rows(grid, space, result.state.x1)),
        write_csv(out / f"surface_velocity{_regime_suffix(config, args.noise_scale is not None)}.csv",
                  "t,x,value", _surface_rows(grid, space, result.state.x2)),
    ]
    for path in written:
        print(f"wrote {path}")
    return 0


_WORKER_CONFIG = None
_WORKER_PROBLEM = None


def _init_worker(config):
    global _WORKER_CONFIG, _WORKER_PROBLEM
    _WORKER_CONFIG = config
    _WORKER_PROBLEM = build_problem(config)


def _optimize_sample(sample_index: int):
    """One Monte Carlo sample; reported decay is the beta = 0 view of the cost."""
    config, problem = _WORKER_CONFIG, _WORKER_PROBLEM
    dW = sample_gaussian_path(RngConfig(config.seed, sample_index), problem.grid, config.m_w)
    result = run_gradient_descent(problem, dW, _descent_config(config))
    node = histogram_node_index(config)
    costs_beta0 = [0.5 * (b.tracking + b.control) for b in result.report.breakdowns]
    return costs_beta0, result.report.residuals, float(result.control[-1, node])


def cmd_optimize(args) -> int:
    config = resolve_config(args)
    problem = build_problem(config)
    _validate_kappa(config, problem)

    workers = config.workers if config.workers > 0 else (os.cpu_count() or 1)
    if workers > 1 and config.samples > 1:
        with ProcessPoolExecutor(
            max_workers=workers, initializer=_init_worker, initargs=(config,)
        ) as pool:
            results = list(pool.map(_optimize_sample, range(config.samples)))
    else:
        _init_worker(config)
        results = [_optimize_sample(i) for i in range(config.samples)]

    n_iters = min(len(r[0]) for r in results)
    cost_decay = [
        (it + 1, float(np.sum([r[0][it] for r in results]) / len(results)))
        for it in range(n_iters)
    ]
    residuals = [
        (it + 1, float(np.sum([r[1][it] for r in results]) / len(results)))
        for it in range(n_iters)
    ]
    histogram = [(i, r[2]) for i, r in enumerate(results)]

    out = Path(config.out_dir)
    written = [
        write_csv(out / "cost_decay.csv", "iter,cost", cost_decay),
        write_csv(out / "residuals.csv", "iter,residual", residuals),
        write_csv(out / "histogram.csv", "sample_index,value", histogram),
    ]
    for path in written:
        print(f"wrote {path}")
    print(f"J^M (beta=0 view) after {n_iters} iterations: {fmt(cost_decay[-1][1])}")
    return 0


def _optimize_sample(sample_index: int):
    config, problem = _WORKER_CONFIG, _WORKER_PROBLEM
    dW = sample_gaussian_path(RngConfig(config.seed, sample_index), problem.grid, config.m_w)
    result = run_gradient_descent(problem, dW, _descent_config(config))
    node = histogram_node_index(config)
    costs_beta0 = [0.5 * (b.tracking + b.control) for b in result.report.breakdowns]
    return costs_beta0, result.report.residuals, float(result.control[-1, node])


def _fit_slope(hs, errs):
    """Least-squares slope of log(err) against log(h)."""
    lx, ly = np.log(np.asarray(hs)), np.log(np.asarray(errs))
    return float(np.polyfit(lx, ly, 1)[0])


def _prolong(coarse, ratio):
    """P1 prolongation of interior coefficients onto a `ratio`-times finer mesh."""
    padded = np.concatenate(([0.0], coarse, [0.0]))
    fine_len = ratio * (len(coarse) + 1) + 1
    coarse_pos = np.arange(len(padded)) * ratio
    return np.interp(np.arange(fine_len), coarse_pos, padded)[1:-1]


def _converged_control(config, problem, dW):
    cfg = GradientConfig(kappa=config.kappa, max_iters=400, residual_tol=1e-11)
    result = run_gradient_descent(problem, dW, cfg)
    return result.control, result.state


def cmd_convergence(args) -> int:
    config = resolve_config(args)
    out = Path(config.out_dir)
    if args.study == "tau":
        rows, slope_c, slope_s = _tau_study(config, args.levels, args.reference)
        path = write_csv(out / "rates_tau.csv", "h,tau,err2_control,err2_state", rows)
        print(f"wrote {path}")
        print(f"tau study: control slope {slope_c:.3f}, state slope {slope_s:.3f}")
    elif args.study == "h":
        rows, slope_c, slope_s = _h_study(config, args.levels, args.reference)
        path = write_csv(out / "rates_h.csv", "h,tau,err2_control,err2_state", rows)
        print(f"wrote {path}")
        print(f"h study: control slope {slope_c:.3f}, state slope {slope_s:.3f}")
    else:
        rows, ratio = _ell_study(config)
        path = write_csv(out / "ell_decay.csv", "iter,residual", rows)
        print(f"wrote {path}")
        print(f"ell study: fitted squared-gap ratio {ratio:.5f} (target {1 - _alpha_over_kappa(config):.5f})")
    return 0


def _alpha_over_kappa(config):
    problem = build_problem(config)
    kappa = config.kappa if config.kappa is not None else 1.02 * lipschitz_bound(problem)
    return config.alpha / kappa


def _tau_study(config, levels, reference):
    if any(reference % n != 0 for n in levels):
        raise ConfigError(f"tau levels {levels} must divide the reference N={reference}")
    base = dataclasses.replace(config, N=reference)
    problem_ref = build_problem(base)
    level_problems = {n: build_problem(dataclasses.replace(config, N=n)) for n in levels}

    err_c = {n: 0.0 for n in levels}
    err_s = {n: 0.0 for n in levels}
    for sample in range(config.samples):
        dW_ref = sample_gaussian_path(
            RngConfig(config.seed, sample), problem_ref.grid, config.m_w
        )
        u_ref, state_ref = _converged_control(base, problem_ref, dW_ref)
        for n in levels:
            problem = level_problems[n]
            factor = reference // n
            u, state = _converged_control(config, problem, coarsen_path(dW_ref, factor))
            # step controls expanded to the fine grid: exact L2_{t,x} distance
            diff = np.repeat(u, factor, axis=0) - u_ref
            tau_ref = problem_ref.grid.tau
            err_c[n] += tau_ref * float(
                np.sum(diff * problem.space.mass_matvec(diff.T).T)
            )
            e1 = state.x1 - state_ref.x1[::factor]
            e2 = state.x2 - state_ref.x2[::factor]
            energies = [
                problem.space.h1_seminorm(a) ** 2 + problem.space.l2_norm(b) ** 2
                for a, b in zip(e1, e2)
            ]
            err_s[n] += float(np.max(energies))
    rows = []
    taus = []
    for n in levels:
        taus.append(config.T / n)
        rows.append(
            (
                problem_ref.space.mesh.h,
                config.T / n,
                err_c[n] / config.samples,
                err_s[n] / config.samples,
            )
        )
    slope_c = _fit_slope(taus, [r[2] for r in rows])
    slope_s = _fit_slope(taus, [r[3] for r in rows])
    rows.append((0.0, 0.0, slope_c, slope_s))
    return rows, slope_c, slope_s


def _h_study(config, levels, reference):
    if any(reference % m != 0 for m in levels):
        raise ConfigError(f"h levels {levels} must divide the reference M_cells={reference}")
    base = dataclasses.replace(config, m_cells=reference)
    problem_ref = build_problem(base)
    level_problems = {m: build_problem(dataclasses.replace(config, m_cells=m)) for m in levels}

    err_c = {m: 0.0 for m in levels}
    err_s = {m: 0.0 for m in levels}
    tau = problem_ref.grid.tau
    for sample in range(config.samples):
        dW = sample_gaussian_path(RngConfig(config.seed, sample), problem_ref.grid, config.m_w)
        u_ref, state_ref = _converged_control(base, problem_ref, dW)
        for m in levels:
            problem = level_problems[m]
            ratio = reference // m
            u, state = _converged_control(config, problem, dW)
            # nodal restriction of the fine reference onto the level's nodes
            restrict = slice(ratio - 1, None, ratio)
            du = u - u_ref[:, restrict]
            err_c[m] += tau * float(np.sum(du * problem.space.mass_matvec(du.T).T))
            e1 = state.x1 - state_ref.x1[:, restrict]
            e2 = state.x2 - state_ref.x2[:, restrict]
            energies = [
                problem.space.h1_seminorm(a) ** 2 + problem.space.l2_norm(b) ** 2
                for a, b in zip(e1, e2)
            ]
            err_s[m] += float(np.max(energies))
    rows = []
    hs = []
    for m in levels:
        h = config.length / m
        hs.append(h)
        rows.append((h, tau, err_c[m] / config.samples, err_s[m] / config.samples))
    slope_c = _fit_slope(hs, [r[2] for r in rows])
    slope_s = _fit_slope(hs, [r[3] for r in rows])
    rows.append((0.0, 0.0, slope_c, slope_s))
    return rows, slope_c, slope_s


def _ell_study(config):
    """Squared control gap to the converged iterate, per iteration."""
    problem = build_problem(config)
    dW = sample_gaussian_path(RngConfig(config.seed, 0), problem.grid, config.m_w)
    deep = GradientConfig(
        kappa=config.kappa, max_iters=max(8 * config.iters, 400), residual_tol=1e-13
    )
    u_inf = run_gradient_descent(problem, dW, deep).control

    cfg = GradientConfig(
        kappa=config.kappa, max_iters=config.iters, record_controls=True
    )
    result = run_gradient_descent(problem, dW, cfg)
    tau = problem.grid.tau
    gaps = []
    for u in result.report.controls:
        d = u - u_inf
        gaps.append(tau * float(np.sum(d * problem.space.mass_matvec(d.T).T)))
    rows = [(i + 1, g) for i, g in enumerate(gaps)]
    valid = [g for g in gaps if g > 1e-28]
    ratio = float(np.exp(np.mean(np.diff(np.log(valid))))) if len(valid) > 2 else float("nan")
    return rows, ratio


def cmd_oracle_check(args) -> int:
    config = resolve_config(args)
    if config.N * config.m_w > 14:
        raise ConfigError(
            f"oracle-check instance N*m_w = {config.N * config.m_w} exceeds the guard of 14"
        )
    problem = build_problem(config)
    _validate_kappa(config, problem)
    tree = build_tree(problem.grid, config.m_w)
    cfg = GradientConfig(
        kappa=config.kappa, max_iters=max(config.iters, 800), residual_tol=1e-12
    )
    report = compare_with_descent(problem, tree, cfg)
    out = Path(config.out_dir)
    rows = [
        (0, report.max_discrepancy),
        (1, report.first_order_residual),
        (2, report.adaptedness_spread),
    ]
    path = write_csv(out / "oracle_residuals.csv", "iter,residual", rows)
    print(f"wrote {path}")
    print(
        f"discrepancy {report.max_discrepancy:.3e}, first-order residual "
        f"{report.first_order_residual:.3e}, adaptedness spread {report.adaptedness_spread:.3e}"
    )
    tol = 1e-10 if config.noise_scale == 0.0 else 1e-8
    if report.max_discrepancy > tol or report.first_order_residual > 1e-10:
        print("oracle check FAILED tolerance", file=sys.stderr)
        return 3
    return 0


def _validate_kappa(config: ExperimentConfig, problem) -> None:
    if config.kappa is not None:
        bound = lipschitz_bound(problem)
        if config.kappa <= bound:
            raise ConfigError(
                f"kappa = {config.kappa} does not exceed the Lipschitz bound {bound:.6g}"
            )


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slqwave",
        description="Stochastic LQ control of the 1D stochastic wave equation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="flat key-value config file")
        p.add_argument("--preset", help="named preset (example1, tiny)")
        p.add_argument("--seed", type=int, help="base RNG seed")
        p.add_argument("--samples", type=int, help="Monte Carlo sample count")
        p.add_argument("--iters", type=int, help="gradient iterations")
        p.add_argument("--noise-scale", type=float, dest="noise_scale",
                       help="multiplier on the noise coefficients (0, 0.1, 1 = regimes)")
        p.add_argument("--out", help="artifact output directory")
        p.add_argument("--workers", type=int, help="worker processes (0 = machine parallelism)")

    p = sub.add_parser("simulate", help="one seeded path; writes the three surface CSVs")
    add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("optimize", help="Monte Carlo batch; cost decay, histogram, residuals")
    add_common(p)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("convergence", help="refinement rate study")
    add_common(p)
    p.add_argument("--study", choices=("tau", "h", "ell"), default="tau")
    p.add_argument("--levels", type=int, nargs="+",
                   help="level sizes (N for tau study, M_cells for h study)")
    p.add_argument("--reference", type=int, help="reference level size")
    p.set_defaults(func=cmd_convergence)

    p = sub.add_parser("oracle-check", help="descent vs exact scenario-tree optimum")
    add_common(p)
    p.set_defaults(func=cmd_oracle_check)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    if args.command == "convergence":
        if args.levels is None:
            args.levels = [8, 16, 32, 64] if args.study == "tau" else [8, 16, 32]
        if args.reference is None:
            args.reference = 256 if args.study == "tau" else 128
    if getattr(args, "preset", None) is None and getattr(args, "config", None) is None:
        if args.command in ("simulate", "optimize"):
            args.preset = "example1"
        elif args.command == "oracle-check":
            args.preset = "tiny"
        elif args.command == "convergence":
            args.preset = "rates"
    try:
        return args.func(args)
    except (ConfigError, UnsupportedConfigurationError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
