"""Command-line surface: the test on user data plus the benchmark experiments.

Every command writes a CSV (full round-trip precision) and a JSON manifest
alongside it capturing the resolved configuration, master seed, version and
timestamps, so outputs can be reproduced bit-identically by re-running with
the manifest's configuration.

Defaults are desk-scale (reps 50, widths <= 200); the flags accept the
published-scale values (reps 200, widths up to 1000) when more compute is
available.

Exit codes: 0 = completed (whatever the decision), 2 = configuration or
parse error, 3 = numerical abort.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .calibration import calibrate_c1
from .datagen import derive_rng, experiment_pair, load_csv_pair, sample_pair
from .errors import CpmmdError, NumericalAbortError
from .estimator import parse_regime
from .features import LinearMap, MlpMap
from .kernels import CompositeKernel, gaussian_unit
from .pipeline import TestConfig, permutation_test, run_cpmmd_test, stratified_split
from .selection import (DeepRegime, OptimizerConfig, bandwidth_grid_kernels,
                        grid_argmax_selector, median_heuristic, select_deep)

SEED_ENV_VAR = "CPMMD_SEED"


# ---------------------------------------------------------------------------
# plumbing


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise CpmmdError(f"{SEED_ENV_VAR} must be an integer, got {env!r}")
    return int.from_bytes(os.urandom(4), "little")


def _write_rows(path: str, header: list[str], rows: list[list]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _write_manifest(out_path: str, command: str, config: dict, seed: int,
                    started: float) -> None:
    manifest = {
        "command": command,
        "config": config,
        "master_seed": seed,
        "tool_version": __version__,
        "started_utc": datetime.datetime.fromtimestamp(
            started, tz=datetime.timezone.utc).isoformat(),
        "finished_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "outputs": [out_path],
    }
    with open(out_path + ".manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _parallel_map(fn, jobs: list, threads: int) -> list:
    if threads <= 1 or len(jobs) <= 1:
        return [fn(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, jobs))


def _optimizer_from(args) -> OptimizerConfig:
    return OptimizerConfig(steps=args.steps, learning_rate=args.lr,
                           clip_norm=args.clip)


def _add_optimizer_flags(p: argparse.ArgumentParser, steps: int = 100) -> None:
    p.add_argument("--steps", type=int, default=steps,
                   help=f"Adam ascent steps (default {steps})")
    p.add_argument("--lr", type=float, default=0.005,
                   help="Adam learning rate (default 0.005)")
    p.add_argument("--clip", type=float, default=5.0,
                   help="global gradient-clip norm (default 5.0)")


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None,
                   help=f"master seed (flag wins over ${SEED_ENV_VAR})")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                   help="worker processes for replicate loops")


# ---------------------------------------------------------------------------
# cpmmd test


def _cmd_test(args) -> int:
    seed = _resolve_seed(args)
    started = time.time()
    data = load_csv_pair(args.x, args.y)
    regime = parse_regime(args.regime, hidden_width=args.width)
    config = TestConfig(alpha=args.alpha, n_perm=args.n_perm, n_cal=args.n_cal,
                        seed=seed)
    report = run_cpmmd_test(data.X, data.Y, regime, config,
                            optimizer_config=_optimizer_from(args),
                            c1_override=args.c1)
    header = ["reject", "p_value", "statistic", "c_alpha", "c1_hat",
              "selected_kernel", "certificate_lhs", "certificate_rhs"]
    row = [int(report.reject), report.p_value, report.statistic,
           report.c_alpha, report.c1_hat, report.selected_kernel,
           report.certificate.lhs, report.certificate.rhs]
    _write_rows(args.out, header, [row])
    config_dict = {"x": args.x, "y": args.y, "regime": args.regime,
                   "alpha": args.alpha, "n_perm": args.n_perm,
                   "n_cal": args.n_cal, "c1": args.c1, "width": args.width,
                   "steps": args.steps, "lr": args.lr, "clip": args.clip,
                   "c1_injected": args.c1 is not None}
    _write_manifest(args.out, "test", config_dict, seed, started)
    return 0


# ---------------------------------------------------------------------------
# power sweep


def derive_seed(master: int, *keys) -> int:
    """Integer sub-seed derived the same way as derive_rng's streams."""
    return int(derive_rng(master, *keys).integers(0, 2 ** 31 - 1))


def _split_for_seed(data, seed: int):
    return stratified_split(data.X, data.Y, 0.5, derive_rng(seed, "split"))


def _sweep_replicate(job: dict) -> dict:
    """One (cell, method, replicate) power-sweep run; module-level for pickling."""
    seed = job["seed"]
    experiment = job["experiment"]
    method = job["method"]
    spec_p, spec_q = experiment_pair(experiment, **job["cell_params"])
    n = job["n_per_class"]
    data = sample_pair(spec_p, spec_q, n, n, seed, "sweep", job["cell_label"],
                       job["rep"])
    config = TestConfig(alpha=job["alpha"], n_perm=job["n_perm"],
                        n_cal=job["n_cal"],
                        seed=derive_seed(seed, job["cell_label"], job["rep"]))
    optimizer = OptimizerConfig(steps=job["steps"], learning_rate=job["lr"],
                                clip_norm=job["clip"])
    rep_seed = config.seed

    if method in ("cpmmd", "cpmmd_poly"):
        regime = parse_regime(job["regime"], hidden_width=job["width"])
        report = run_cpmmd_test(data.X, data.Y, regime, config,
                                optimizer_config=optimizer,
                                c1_override=job.get("c1"))
        reject = report.reject
    elif method == "median":
        train, test = _split_for_seed(data, rep_seed)
        sigma = median_heuristic(train)
        kernel = CompositeKernel(gaussian_unit(), LinearMap(sigma, train.dim))
        reject = permutation_test(kernel, test, job["n_perm"], job["alpha"],
                                  derive_rng(rep_seed, "perm")).reject
    elif method == "grid_argmax":
        train, test = _split_for_seed(data, rep_seed)
        kernels = bandwidth_grid_kernels(train, size=job["grid_b"],
                                         families=("gaussian", "laplacian"))
        picked = grid_argmax_selector(kernels, train, delta=job["alpha"])
        reject = permutation_test(kernels[picked.index], test, job["n_perm"],
                                  job["alpha"], derive_rng(rep_seed, "perm")).reject
    elif method in ("liu", "plain"):
        train, test = _split_for_seed(data, rep_seed)
        regime = DeepRegime(hidden_width=job["width"])
        mlp0 = MlpMap.initialize(regime.layer_widths(train.dim),
                                 derive_rng(rep_seed, "select-init"))
        mlp, _ = select_deep(train, mlp0, optimizer, criterion=method)
        kernel = CompositeKernel(gaussian_unit(), mlp)
        reject = permutation_test(kernel, test, job["n_perm"], job["alpha"],
                                  derive_rng(rep_seed, "perm")).reject
    else:
        raise CpmmdError(f"unknown method {method!r}")
    return {"cell": job["cell_label"], "method": method, "reject": bool(reject)}


_EXPERIMENT_METHODS = {
    "multiscale": ("cpmmd", "median"),
    "kurtosis": ("cpmmd_poly", "grid_argmax"),
    "hdgm": ("cpmmd", "liu", "plain"),
}
_EXPERIMENT_DEFAULT_N = {"multiscale": 200, "kurtosis": 500, "hdgm": 200}


def _parse_cells(experiment: str, grid: str, n_flag: int | None):
    cells = []
    for token in grid.split(","):
        token = token.strip()
        if not token:
            continue
        if experiment == "multiscale":
            cells.append({"label": f"delta={token}", "params": {"delta": float(token)},
                          "n": n_flag or _EXPERIMENT_DEFAULT_N[experiment]})
        elif experiment == "kurtosis":
            cells.append({"label": f"df={token}", "params": {"df": float(token)},
                          "n": n_flag or _EXPERIMENT_DEFAULT_N[experiment]})
        elif experiment == "hdgm":
            d_str, n_str = token.split(":")
            cells.append({"label": f"d={d_str},n={n_str}",
                          "params": {"dim": int(d_str), "delta": 0.5},
                          "n": int(n_str)})
        else:
            raise CpmmdError(f"unknown experiment {experiment!r}")
    if not cells:
        raise CpmmdError("empty grid")
    return cells


def _cmd_power_sweep(args) -> int:
    seed = _resolve_seed(args)
    started = time.time()
    if args.reps < 1:
        raise CpmmdError("--reps must be >= 1")
    cells = _parse_cells(args.experiment, args.grid, args.n)
    regime_token = {"multiscale": "linear", "kurtosis": "poly:4",
                    "hdgm": "deep"}[args.experiment]
    jobs = []
    for cell in cells:
        for method in _EXPERIMENT_METHODS[args.experiment]:
            for rep in range(args.reps):
                jobs.append({
                    "experiment": args.experiment, "method": method,
                    "cell_label": cell["label"], "cell_params": cell["params"],
                    "n_per_class": cell["n"], "rep": rep, "seed": seed,
                    "alpha": args.alpha, "n_perm": args.n_perm,
                    "n_cal": args.n_cal, "steps": args.steps, "lr": args.lr,
                    "clip": args.clip, "width": args.width,
                    "regime": regime_token, "grid_b": args.grid_b,
                    "c1": args.c1,
                })
    results = _parallel_map(_sweep_replicate, jobs, args.threads)

    rows = []
    for cell in cells:
        for method in _EXPERIMENT_METHODS[args.experiment]:
            hits = [r["reject"] for r in results
                    if r["cell"] == cell["label"] and r["method"] == method]
            power = sum(hits) / len(hits)
            se = (power * (1 - power) / len(hits)) ** 0.5
            rows.append([args.experiment, cell["label"], cell["n"], method,
                         power, se, len(hits)])
    _write_rows(args.out, ["experiment", "cell", "n_per_class", "method",
                           "power", "se", "reps"], rows)
    config_dict = {"experiment": args.experiment, "grid": args.grid,
                   "n": args.n, "reps": args.reps, "alpha": args.alpha,
                   "n_perm": args.n_perm, "n_cal": args.n_cal,
                   "width": args.width, "steps": args.steps, "lr": args.lr,
                   "clip": args.clip, "grid_b": args.grid_b, "c1": args.c1}
    _write_manifest(args.out, "power-sweep", config_dict, seed, started)
    return 0


# ---------------------------------------------------------------------------
# variance-collapse experiment


def _collapse_run(job: dict) -> dict:
    seed, width = job["seed"], job["width"]
    spec_p, spec_q = experiment_pair("h0", dim=job["dim"])
    data = sample_pair(spec_p, spec_q, job["n_per_class"], job["n_per_class"],
                       seed, "collapse", width, job["rep"])
    mlp0 = MlpMap.initialize(DeepRegime(hidden_width=width).layer_widths(job["dim"]),
                             derive_rng(seed, "collapse-init", width, job["rep"]))
    cfg = OptimizerConfig(steps=job["steps"], learning_rate=job["lr"],
                          clip_norm=job["clip"])
    _, traj = select_deep(data, mlp0, cfg, criterion="liu",
                          lambda_reg=job["lambda_reg"])
    fin = traj.final
    collapsed = fin.mmd < 0.01 and fin.tau < 0.001 and fin.criterion > 10
    j_cp_val = fin.mmd - job["c1"] * fin.proxy
    return {"width": width, "rep": job["rep"], "j_liu": fin.criterion,
            "mmd": fin.mmd, "tau": fin.tau, "proxy": fin.proxy,
            "j_cp": j_cp_val, "spectral_product": fin.lipschitz,
            "collapsed": collapsed}


def _cmd_collapse(args) -> int:
    seed = _resolve_seed(args)
    started = time.time()
    widths = [int(w) for w in args.widths.split(",") if w.strip()]
    if not widths or args.seeds < 1:
        raise CpmmdError("need at least one width and one seed")
    jobs = [{"seed": seed, "width": w, "rep": r, "dim": args.d,
             "n_per_class": args.n, "steps": args.steps, "lr": args.lr,
             "clip": args.clip, "lambda_reg": args.lambda_reg, "c1": args.c1}
            for w in widths for r in range(args.seeds)]
    results = _parallel_map(_collapse_run, jobs, args.threads)
    rows = [[r["width"], r["rep"], r["j_liu"], r["mmd"], r["tau"], r["proxy"],
             r["j_cp"], r["spectral_product"], int(r["collapsed"])]
            for r in results]
    _write_rows(args.out, ["width", "seed", "j_liu", "mmd", "tau", "proxy",
                           "j_cp", "spectral_product", "collapsed"], rows)
    config_dict = {"widths": args.widths, "seeds": args.seeds, "d": args.d,
                   "n": args.n, "steps": args.steps, "lr": args.lr,
                   "clip": args.clip, "lambda_reg": args.lambda_reg,
                   "c1": args.c1}
    _write_manifest(args.out, "collapse", config_dict, seed, started)
    return 0


# ---------------------------------------------------------------------------
# penalty-coefficient ablation


def _ablation_replicate(job: dict) -> dict:
    seed = job["seed"]
    spec_p, spec_q = experiment_pair("hdgm", dim=job["dim"], delta=job["delta"])
    data = sample_pair(spec_p, spec_q, job["n_per_class"], job["n_per_class"],
                       seed, "ablation", job["rep"])
    config = TestConfig(alpha=job["alpha"], n_perm=job["n_perm"],
                        seed=derive_seed(seed, "ablation", job["rep"]))
    optimizer = OptimizerConfig(steps=job["steps"], learning_rate=job["lr"],
                                clip_norm=job["clip"])
    report = run_cpmmd_test(data.X, data.Y,
                            DeepRegime(hidden_width=job["width"]), config,
                            optimizer_config=optimizer, c1_override=job["c1"])
    return {"c1": job["c1"], "reject": report.reject,
            "final_pi": report.trajectory.final.lipschitz}


def _cmd_c1_ablation(args) -> int:
    seed = _resolve_seed(args)
    started = time.time()
    c1_grid = [float(v) for v in args.c1_grid.split(",") if v.strip()]
    d_str, n_str, delta_str = args.cell.split(",")
    if not c1_grid or args.reps < 1:
        raise CpmmdError("need a c1 grid and reps >= 1")
    jobs = [{"seed": seed, "c1": c1, "rep": rep, "dim": int(d_str),
             "n_per_class": int(n_str), "delta": float(delta_str),
             "alpha": args.alpha, "n_perm": args.n_perm, "steps": args.steps,
             "lr": args.lr, "clip": args.clip, "width": args.width}
            for c1 in c1_grid for rep in range(args.reps)]
    results = _parallel_map(_ablation_replicate, jobs, args.threads)
    rows = []
    for c1 in c1_grid:
        sub = [r for r in results if r["c1"] == c1]
        power = sum(r["reject"] for r in sub) / len(sub)
        se = (power * (1 - power) / len(sub)) ** 0.5
        mean_pi = float(np.mean([r["final_pi"] for r in sub]))
        rows.append([c1, power, se, mean_pi, len(sub)])
    _write_rows(args.out, ["c1", "power", "se", "mean_final_spectral_product",
                           "reps"], rows)
    config_dict = {"c1_grid": args.c1_grid, "cell": args.cell,
                   "reps": args.reps, "alpha": args.alpha,
                   "n_perm": args.n_perm, "width": args.width,
                   "steps": args.steps, "lr": args.lr, "clip": args.clip}
    _write_manifest(args.out, "c1-ablation", config_dict, seed, started)
    return 0


# ---------------------------------------------------------------------------
# calibration


def _cmd_calibrate(args) -> int:
    seed = _resolve_seed(args)
    started = time.time()
    data = load_csv_pair(args.x, args.y)
    regime = parse_regime(args.regime, hidden_width=args.width)
    result = calibrate_c1(data, regime, n_cal=args.n_cal, alpha=args.alpha,
                          optimizer_config=_optimizer_from(args), seed=seed)
    rows = [[i, r] for i, r in enumerate(result.ratios)]
    rows.append(["c1_hat", result.c1_hat])
    rows.append(["convention", result.convention_used])
    rows.append(["degenerate", int(result.degenerate)])
    _write_rows(args.out, ["key", "value"], rows)
    config_dict = {"x": args.x, "y": args.y, "regime": args.regime,
                   "n_cal": args.n_cal, "alpha": args.alpha,
                   "width": args.width, "steps": args.steps, "lr": args.lr,
                   "clip": args.clip}
    _write_manifest(args.out, "calibrate", config_dict, seed, started)
    if result.degenerate:
        print("warning: degenerate calibration; see manifest and note column",
              file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cpmmd",
        description="Two-sample testing with complexity-penalized kernel selection")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("test", help="run the full test on two CSV samples")
    p.add_argument("--x", required=True, help="CSV of sample X (rows = points)")
    p.add_argument("--y", required=True, help="CSV of sample Y")
    p.add_argument("--regime", default="linear",
                   help="linear | poly:p | deep (default linear)")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--n-perm", type=int, default=200, dest="n_perm")
    p.add_argument("--n-cal", type=int, default=10, dest="n_cal")
    p.add_argument("--c1", type=float, default=None,
                   help="inject a precomputed penalty coefficient (skips calibration)")
    p.add_argument("--width", type=int, default=200, help="MLP hidden width")
    _add_optimizer_flags(p)
    _add_common_flags(p)
    p.set_defaults(func=_cmd_test)

    p = sub.add_parser("power-sweep", help="power/Type-I table for a benchmark")
    p.add_argument("--experiment", required=True,
                   choices=sorted(_EXPERIMENT_METHODS))
    p.add_argument("--grid", required=True,
                   help="comma list: deltas (multiscale), dfs (kurtosis), d:n cells (hdgm)")
    p.add_argument("--n", type=int, default=None,
                   help="per-class sample size (defaults per experiment)")
    p.add_argument("--reps", type=int, default=50,
                   help="replicates per cell (published scale: 100-200)")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--n-perm", type=int, default=200, dest="n_perm")
    p.add_argument("--n-cal", type=int, default=10, dest="n_cal")
    p.add_argument("--width", type=int, default=200,
                   help="MLP hidden width for the deep methods (default 200)")
    p.add_argument("--grid-b", type=int, default=10, dest="grid_b",
                   help="grid size for the finite-grid argmax baseline")
    p.add_argument("--c1", type=float, default=None,
                   help="inject a penalty coefficient instead of calibrating")
    _add_optimizer_flags(p)
    _add_common_flags(p)
    p.set_defaults(func=_cmd_power_sweep)

    p = sub.add_parser("collapse", help="ratio-criterion training diagnostics under H0")
    p.add_argument("--widths", default="10,50,200")
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--d", type=int, default=10)
    p.add_argument("--n", type=int, default=200, help="per-class sample size")
    p.add_argument("--lambda-reg", type=float, default=1e-8, dest="lambda_reg",
                   help="ratio denominator regularizer; smaller sharpens collapse")
    p.add_argument("--c1", type=float, default=0.2,
                   help="penalty coefficient for the reported penalized "
                        "criterion (default: representative calibrated value)")
    _add_optimizer_flags(p, steps=200)
    _add_common_flags(p)
    p.set_defaults(func=_cmd_collapse)

    p = sub.add_parser("c1-ablation",
                       help="power and spectral product across penalty values")
    p.add_argument("--c1-grid", required=True, dest="c1_grid",
                   help="comma list of penalty coefficients")
    p.add_argument("--cell", default="20,200,0.5",
                   help="d,n,delta of the mean-shift cell (default 20,200,0.5)")
    p.add_argument("--reps", type=int, default=25)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--n-perm", type=int, default=200, dest="n_perm")
    p.add_argument("--width", type=int, default=200)
    _add_optimizer_flags(p)
    _add_common_flags(p)
    p.set_defaults(func=_cmd_c1_ablation)

    p = sub.add_parser("calibrate",
                       help="calibrate the penalty coefficient on a training half")
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--regime", default="deep")
    p.add_argument("--n-cal", type=int, default=10, dest="n_cal")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--width", type=int, default=200)
    _add_optimizer_flags(p)
    _add_common_flags(p)
    p.set_defaults(func=_cmd_calibrate)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return args.func(args)
    except NumericalAbortError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return 3
    except CpmmdError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
