"""Command-line experiment harness.

Exit codes: 0 success, 1 invalid scenario or arguments, 2 pipeline failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from chirploc import io
from chirploc.baselines import matched_filter_detect, rssi_at, rssi_range, tdoa_difference
from chirploc.config import SWEEP_VARIABLES, ConfigError, Scenario, load_scenario, scene_with
from chirploc.locator import PipelineError, run_pipeline
from chirploc.phase import AmbiguityError
from chirploc.plotting import line_chart_svg
from chirploc.receiver import receive_analytic
from chirploc.signal import TWO_PI

EXIT_OK, EXIT_CONFIG, EXIT_PIPELINE = 0, 1, 2
BASELINES = ("rssi", "tdoa", "matched_filter")


class UsageError(ValueError):
    pass


def _fail(code: int, msg: str) -> int:
    print(f"chirploc: error: {msg}", file=sys.stderr)
    return code


def _out_dir(args, scenario: Scenario) -> Path:
    out = args.out or scenario.experiment.output_dir or "chirploc-out"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _workers(n_jobs: int) -> int:
    cap = os.environ.get("CHIRPLOC_THREADS")
    limit = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(limit, n_jobs))


def run_seed(master_seed: int, index: int) -> int:
    """Independent RNG seed for sweep point ``index`` under ``master_seed``."""
    return int(np.random.SeedSequence([master_seed, index]).generate_state(1)[0])


def _pair_rows(scene, result, method, value, seed) -> list:
    ids = [g.id for g in scene.gateways]
    rows = []
    for (a, b), est in result.pairwise.items():
        truth = scene.true_difference(ids.index(a), ids.index(b))
        rows.append({
            "method": method, "sweep_value": value, "seed": seed,
            "gw_a": a, "gw_b": b, "K": est.k, "d_hat": est.d_hat,
            "error_m": est.d_hat - truth, "peak": est.peak,
        })
    return rows


def cmd_simulate(scenario_path, args) -> int:
    try:
        scenario = load_scenario(scenario_path)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    opts = scenario.options(refine=args.refine_peak or None, keep_signals=args.dump_iq or args.dump_dps)
    opts = replace(opts, rng_seed=scenario.seeds[0])
    try:
        result = run_pipeline(scenario.scene, options=opts)
    except (PipelineError, AmbiguityError, ValueError) as exc:
        return _fail(EXIT_PIPELINE, str(exc))

    out = _out_dir(args, scenario)
    io.write_localization_csv(out / "result.csv", result)
    (out / "result.json").write_text(json.dumps(io.localization_to_dict(result), indent=2) + "\n")
    if args.dump_iq:
        (out / "iq").mkdir(exist_ok=True)
        for gid, trace in result.traces.items():
            io.write_iq(out / "iq" / gid, trace)
    if args.dump_dps:
        (out / "dps").mkdir(exist_ok=True)
        for gid, seq in result.sequences.items():
            io.write_dps_csv(out / "dps" / f"{gid}.csv", seq)

    scene = scenario.scene
    ids = [g.id for g in scene.gateways]
    for (a, b), est in result.pairwise.items():
        truth = scene.true_difference(ids.index(a), ids.index(b))
        print(f"{a}-{b}: K={est.k} d_hat={est.d_hat:.3f} m true={truth:.3f} m peak={est.peak:.4f}")
    if result.position is not None:
        x, y, z = result.position
        err = float(np.linalg.norm(result.position - np.asarray(scene.device_pos)))
        print(f"position: ({x:.3f}, {y:.3f}, {z:.3f}) m  error={err:.3f} m  "
              f"residual={result.residual_norm:.3g} m  converged={result.converged}")
    print(f"wrote {out / 'result.csv'}")
    return EXIT_OK


def sweep_values(args, scenario: Scenario) -> tuple:
    """Resolve the sweep variable and its points from the CLI or the scenario."""
    planned = scenario.experiment.sweep
    variable = args.var or (planned.variable if planned else None)
    if variable is None:
        raise UsageError("no sweep variable given (--var)")
    if variable not in SWEEP_VARIABLES:
        raise UsageError(f"unknown sweep variable {variable!r}; choose from {', '.join(SWEEP_VARIABLES)}")
    if args.values:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    elif args.from_ is not None or args.to is not None or args.steps is not None:
        if args.from_ is None or args.to is None or args.steps is None:
            raise UsageError("--from, --to and --steps go together")
        values = _linspace(args.from_, args.to, args.steps)
    elif planned is not None and planned.values:
        values = list(planned.values)
    elif planned is not None and planned.from_ is not None:
        if planned.to is None or planned.steps is None:
            raise UsageError("experiment.sweep needs from, to and steps")
        values = _linspace(planned.from_, planned.to, planned.steps)
    else:
        raise UsageError("no sweep range given (--from/--to/--steps or --values)")
    if not values:
        raise UsageError("empty sweep range")
    diffs = np.diff(values)
    if len(values) > 1 and not (np.all(diffs > 0) or np.all(diffs < 0)):
        raise UsageError("sweep range is not strictly monotone")
    return variable, values


def _linspace(a: float, b: float, steps: int) -> list:
    if steps < 1:
        raise UsageError("--steps must be at least 1")
    if steps > 1 and a == b:
        raise UsageError("sweep range is not strictly monotone (from == to)")
    return [float(v) for v in np.linspace(a, b, steps)]


def _parse_seeds(text, scenario: Scenario) -> list:
    if text:
        return [int(s) for s in text.split(",") if s.strip()]
    return scenario.seeds


def cmd_sweep(scenario_path, args) -> int:
    try:
        scenario = load_scenario(scenario_path)
        variable, values = sweep_values(args, scenario)
        seeds = _parse_seeds(args.seeds, scenario)
        scenes = [scene_with(scenario.scene, variable, v) for v in values]
    except (ConfigError, UsageError, ValueError) as exc:
        return _fail(EXIT_CONFIG, str(exc))
    bw = scenario.chirp.bw
    for scene in scenes:
        if not scene.receiver.f_s > bw:
            return _fail(EXIT_CONFIG, f"f_s {scene.receiver.f_s:g} Hz must exceed bw {bw:g} Hz (f_s > BW)")

    base = replace(scenario.options(refine=args.refine_peak or None), multilaterate=False)
    jobs = [(i, v, s) for i, v in enumerate(values) for s in seeds]

    def work(job):
        i, value, seed = job
        scene = scenes[i]
        res = run_pipeline(scene, options=replace(base, rng_seed=run_seed(seed, i)))
        return _pair_rows(scene, res, "phase", value, seed)

    try:
        with ThreadPoolExecutor(max_workers=_workers(len(jobs))) as pool:
            chunks = list(pool.map(work, jobs))
    except (PipelineError, AmbiguityError, ValueError) as exc:
        return _fail(EXIT_PIPELINE, str(exc))
    rows = [r for chunk in chunks for r in chunk]

    out = _out_dir(args, scenario)
    io.write_rows(out / "sweep.csv", rows)
    if args.plot or scenario.experiment.plot:
        series = {}
        for r in rows:
            series.setdefault(f"{r['gw_a']}-{r['gw_b']} seed {r['seed']}", []).append(
                (r["sweep_value"], abs(r["error_m"]))
            )
        svg = line_chart_svg(series, f"error vs {variable}", variable, "|d_hat - true| (m)")
        (out / "sweep.svg").write_text(svg)
    worst = max((abs(r["error_m"]) for r in rows), default=float("nan"))
    print(f"{len(jobs)} runs, {len(rows)} rows, max |error| {worst:.4g} m; wrote {out / 'sweep.csv'}")
    return EXIT_OK


def _rssi_rows(scenario: Scenario) -> list:
    model = scenario.path_loss()
    scene = scenario.scene
    dist = scene.distances()
    rows = []
    for seed in scenario.seeds:
        for trial in range(scenario.experiment.rssi.trials):
            for g, (gw, d) in enumerate(zip(scene.gateways, dist)):
                rss = rssi_at(model, d, rng_seed=[seed, trial, g])
                est = float(rssi_range(model, rss))
                rows.append({
                    "method": "rssi", "sweep_value": float(d), "seed": seed, "gw_a": gw.id,
                    "d_hat": est, "error_m": est - float(d),
                })
    return rows


def _tdoa_rows(scenario: Scenario) -> list:
    scene = scenario.scene
    res = scenario.experiment.tdoa.resolution_s
    if not res > 0:
        raise ConfigError("experiment.tdoa.resolution_s: must be positive")
    dist = scene.distances()
    v = scene.v
    rows = []
    for seed in scenario.seeds:
        rng = np.random.default_rng(seed)
        for _ in range(scenario.experiment.tdoa.trials):
            emit = float(rng.uniform(0.0, 1e-3))
            arrivals = [emit + d / v + g.clock_offset for g, d in zip(scene.gateways, dist)]
            for a in range(len(arrivals)):
                for b in range(a + 1, len(arrivals)):
                    est = float(tdoa_difference(arrivals[a], arrivals[b], res, v))
                    rows.append({
                        "method": "tdoa", "sweep_value": emit, "seed": seed,
                        "gw_a": scene.gateways[a].id, "gw_b": scene.gateways[b].id,
                        "d_hat": est, "error_m": est - float(dist[a] - dist[b]),
                    })
    return rows


def _matched_filter_rows(scenario: Scenario) -> list:
    scene = scenario.scene
    cfg = scene.chirp
    mf = scenario.experiment.matched_filter
    gw = scene.gateways[0]
    d = float(scene.distances()[0])
    delay = d / scene.v
    const = math.fmod(cfg.fc * (gw.clock_offset + delay), 1.0)
    span = delay + gw.clock_offset + 1.25 * cfg.duration
    rows = []
    for k in range(mf.grid_points):
        mismatch = TWO_PI * k / mf.grid_points
        # receiver phase that puts the received I/Q at template phase + mismatch
        theta_rx = math.fmod(cfg.theta_tx - TWO_PI * const - mf.template_theta_rad - mismatch, TWO_PI)
        rx = replace(scene.receiver, theta_rx=theta_rx, rx_freq_bias=0.0)
        trace = receive_analytic(cfg, scene.channel, rx, d, max(span, 1.25 * cfg.duration),
                                 clock_offset=gw.clock_offset)
        idx, peak = matched_filter_detect(trace, mf.template_theta_rad, cfg)
        rows.append({
            "method": "matched_filter", "sweep_value": mismatch, "seed": 0,
            "gw_a": gw.id, "K": idx, "peak": peak,
        })
    return rows


def cmd_baseline(scenario_path, which: str, args) -> int:
    if which not in BASELINES:
        return _fail(EXIT_CONFIG, f"unknown baseline {which!r}; choose from {', '.join(BASELINES)}")
    try:
        scenario = load_scenario(scenario_path)
        rows = {"rssi": _rssi_rows, "tdoa": _tdoa_rows, "matched_filter": _matched_filter_rows}[which](scenario)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    except ValueError as exc:
        return _fail(EXIT_PIPELINE, str(exc))
    out = _out_dir(args, scenario)
    path = out / f"baseline_{which}.csv"
    io.write_rows(path, rows)
    errs = [abs(r["error_m"]) for r in rows if r.get("error_m") is not None]
    if errs:
        print(f"{which}: {len(rows)} rows, max |error| {max(errs):.4g} m; wrote {path}")
    else:
        print(f"{which}: {len(rows)} rows; wrote {path}")
    return EXIT_OK


def _add_global_flags(p: argparse.ArgumentParser, default) -> None:
    p.add_argument("--out", default=default, help="output directory")
    p.add_argument("--dump-iq", action="store_true", default=default, help="write per-gateway I/Q dumps")
    p.add_argument("--dump-dps", action="store_true", default=default, help="write per-gateway DPS CSV")
    p.add_argument("--refine-peak", action="store_true", default=default,
                   help="parabolic sub-sample refinement of the correlation peak")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chirploc", description=__doc__.splitlines()[0])
    _add_global_flags(parser, None)
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    _add_global_flags(common, argparse.SUPPRESS)

    p = sub.add_parser("simulate", parents=[common], help="run the pipeline once")
    p.add_argument("scenario")

    p = sub.add_parser("sweep", parents=[common], help="sweep one variable")
    p.add_argument("scenario")
    p.add_argument("--var", help=f"one of {', '.join(SWEEP_VARIABLES)}")
    p.add_argument("--from", dest="from_", type=float)
    p.add_argument("--to", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--values", help="explicit comma-separated sweep points")
    p.add_argument("--seeds", help="comma-separated master seeds")
    p.add_argument("--plot", action="store_true", help="also write sweep.svg")

    p = sub.add_parser("baseline", parents=[common], help="run an RSSI/TDOA/matched-filter baseline")
    p.add_argument("scenario")
    p.add_argument("--which", required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.dump_iq = bool(args.dump_iq)
    args.dump_dps = bool(args.dump_dps)
    args.refine_peak = bool(args.refine_peak)
    if args.command == "simulate":
        return cmd_simulate(args.scenario, args)
    if args.command == "sweep":
        return cmd_sweep(args.scenario, args)
    return cmd_baseline(args.scenario, args.which, args)


if __name__ == "__main__":
    sys.exit(main())
