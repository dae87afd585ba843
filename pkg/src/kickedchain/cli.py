"""Command-line entry point: ``kickedchain {levelstats,dynamics,collapse,fit}``.

Exit codes: 0 success, 1 usage error, 2 numerical failure, 3 failed check.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    AlgebraicModel,
    CollapseError,
    GrowthFitError,
    LogPowerModel,
    ScalingDataset,
    TimeSeries,
    compare_models,
    default_window,
    fit_collapse,
    fit_log_power,
)
from .ensemble import SweepError, SweepPlan, run_sweep
from .dynamics import log_time_grid
from .hamiltonian import ChainConfig, DiagonalizationError, parse_exponent
from .spectral_stats import GAP_CONVENTION

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("kickedchain")

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_CHECK = 0, 1, 2, 3

LEVELSTATS_COLUMNS = ["L", "a", "b", "theta", "tau", "mean_r", "stderr_r", "samples", "excluded"]
DYNAMICS_COLUMNS = ["t", "mean_SvN", "stderr_SvN", "mean_imbalance", "stderr_imbalance", "samples"]
FORMAT_VERSION = 1

BIT_CONVENTION = "site i -> bit L-i (site 1 most significant); set bit = up, S^z=+1/2"

CONFIG_KEYS = {
    "L", "a", "b", "theta", "theta_over_pi", "tau", "J_x", "J_z", "pair_sum",
    "samples", "seed", "workers", "t_max", "n_times",
}


class UsageError(ValueError):
    pass


# --------------------------------------------------------------------------
# configuration


def _axis(value, name):
    if isinstance(value, dict):
        try:
            return list(np.linspace(float(value["start"]), float(value["stop"]), int(value["num"])))
        except KeyError as exc:
            raise UsageError(f"config field {name!r}: range needs start, stop, num") from exc
    return list(value) if isinstance(value, list) else [value]


def load_config(path) -> dict:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise UsageError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"config file {path}: {exc}") from exc
    unknown = set(raw) - CONFIG_KEYS
    if unknown:
        raise UsageError(f"unknown config field {sorted(unknown)[0]!r}")
    return raw


def build_plan(raw: dict, kind: str, overrides: argparse.Namespace) -> tuple[SweepPlan, int]:
    for required in ("L", "a", "tau"):
        if required not in raw:
            raise UsageError(f"missing config field {required!r}")
    if "theta" in raw and "theta_over_pi" in raw:
        raise UsageError("config field 'theta': give theta or theta_over_pi, not both")
    axes = {}
    try:
        axes["L"] = [int(v) for v in _axis(raw["L"], "L")]
        axes["a"] = [parse_exponent(v) for v in _axis(raw["a"], "a")]
        b = raw.get("b", "a")
        uniform = b == "a"
        if not uniform:
            axes["b"] = [parse_exponent(v) for v in _axis(b, "b")]
        if "theta_over_pi" in raw:
            axes["theta"] = [float(v) * math.pi for v in _axis(raw["theta_over_pi"], "theta_over_pi")]
        elif "theta" in raw:
            axes["theta"] = [float(v) for v in _axis(raw["theta"], "theta")]
        axes["tau"] = [float(v) for v in _axis(raw["tau"], "tau")]
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid config value: {exc}") from exc

    samples = overrides.samples if overrides.samples is not None else raw.get("samples", 100)
    seed = overrides.seed if overrides.seed is not None else raw.get("seed", 0)
    workers = overrides.workers if overrides.workers is not None else raw.get("workers", 1)
    for name, value in (("samples", samples), ("seed", seed), ("workers", workers)):
        if isinstance(value, bool) or not isinstance(value, int):
            raise UsageError(f"config field {name!r} must be an integer")
    if workers < 1:
        raise UsageError("config field 'workers' must be >= 1")

    times = ()
    if kind == "dynamics":
        t_max = overrides.t_max if overrides.t_max is not None else raw.get("t_max", 10**6)
        n_times = raw.get("n_times", 120)
        if any(len(v) != 1 for v in axes.values()):
            raise UsageError("dynamics config must describe a single parameter point")
        if axes["L"][0] % 2:
            raise UsageError("config field 'L' must be even for dynamics")
        times = tuple([0] + log_time_grid(int(t_max), int(n_times)).tolist())

    try:
        base = ChainConfig(
            L=axes["L"][0],
            a=axes["a"][0],
            b=axes["a"][0] if uniform else axes["b"][0],
            J_x=float(raw.get("J_x", 1.0)),
            J_z=float(raw.get("J_z", 1.0)),
            pair_sum=raw.get("pair_sum", "ordered"),
        )
        plan = SweepPlan(base, axes, int(samples), int(seed), kind, times, uniform)
        plan.grid()
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid config: {exc}") from exc
    return plan, workers


# --------------------------------------------------------------------------
# output


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def manifest_path(out: Path) -> Path:
    return out.with_name(out.stem + ".manifest.json")


def write_manifest(out: Path, command: str, config: dict, seed, timings: dict, started: float, extra=None):
    pair_sum = config.get("base", {}).get("pair_sum") if isinstance(config, dict) else None
    manifest = {
        "command": command,
        "artifact_version": __version__,
        "output": out.name,
        "config": config,
        "master_seed": seed,
        "conventions": {
            "pair_sum": pair_sum,
            "pair_sum_meaning": {"ordered": "sum over i != j (each bond twice)", "unordered": "sum over i < j"},
            "gap": GAP_CONVENTION,
            "bits": BIT_CONVENTION,
            "log": "natural",
        },
        "wall_clock_start": datetime.fromtimestamp(started, timezone.utc).isoformat(),
        "timings_s": timings,
    }
    if extra:
        manifest.update(extra)
    path = manifest_path(out)
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def write_csv(out: Path, kind: str, columns: list, rows: list):
    buf = io.StringIO()
    buf.write(f"# kickedchain-{kind} v{FORMAT_VERSION}; manifest={manifest_path(out).name}\n")
    buf.write(",".join(columns) + "\n")
    for row in rows:
        buf.write(",".join(fmt(v) for v in row) + "\n")
    out.write_text(buf.getvalue())


def read_csv(path, columns: list) -> dict:
    """Parse one of our CSV outputs into column arrays; errors name the line."""
    try:
        text = Path(path).read_text()
    except FileNotFoundError as exc:
        raise UsageError(f"input file not found: {path}") from exc
    header = None
    data = {c: [] for c in columns}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = next(csv.reader([line]))
        if header is None:
            if fields != columns:
                raise UsageError(f"{path}:{lineno}: expected header {','.join(columns)}")
            header = fields
            continue
        if len(fields) != len(columns):
            raise UsageError(f"{path}:{lineno}: expected {len(columns)} fields, got {len(fields)}")
        try:
            for c, v in zip(columns, fields):
                data[c].append(float(v))
        except ValueError as exc:
            raise UsageError(f"{path}:{lineno}: {exc}") from exc
    if header is None:
        raise UsageError(f"{path}: missing header line")
    return {c: np.array(v) for c, v in data.items()}


# --------------------------------------------------------------------------
# commands


def cmd_levelstats(args) -> int:
    started = time.time()
    plan, workers = build_plan(load_config(args.config), "levelstats", args)
    records = run_sweep(plan, workers=workers, checkpoint=args.checkpoint)
    t_sweep = time.time() - started
    grid = plan.grid()
    rows = []
    for rec in records:
        cfg = grid[rec.grid_index]
        rows.append([cfg.L, cfg.a, cfg.b, cfg.theta, cfg.tau, rec.mean, rec.stderr, rec.count, rec.excluded])
    out = Path(args.out)
    write_csv(out, "levelstats", LEVELSTATS_COLUMNS, rows)
    write_manifest(out, "levelstats", plan.to_dict(), plan.master_seed, {"sweep": t_sweep}, started)
    return EXIT_OK


def cmd_dynamics(args) -> int:
    started = time.time()
    plan, workers = build_plan(load_config(args.config), "dynamics", args)
    records = {r.observable: r for r in run_sweep(plan, workers=workers, checkpoint=args.checkpoint)}
    t_sweep = time.time() - started
    s, imb = records["SvN"], records["imbalance"]
    rows = [
        [t, s.mean[k], s.stderr[k], imb.mean[k], imb.stderr[k], s.count]
        for k, t in enumerate(plan.times)
    ]
    out = Path(args.out)
    write_csv(out, "dynamics", DYNAMICS_COLUMNS, rows)
    write_manifest(out, "dynamics", plan.to_dict(), plan.master_seed, {"sweep": t_sweep}, started)
    return EXIT_OK


def cmd_collapse(args) -> int:
    started = time.time()
    cols = read_csv(args.input, LEVELSTATS_COLUMNS)
    groups = {(a, b, th) for a, b, th in zip(cols["a"], cols["b"], cols["theta"])}
    if len(groups) != 1:
        raise UsageError(f"{args.input}: expected one (a, b, theta) combination, found {len(groups)}")
    try:
        data = ScalingDataset.from_arrays(cols["L"], cols["tau"], cols["mean_r"], cols["stderr_r"])
    except CollapseError as exc:
        raise UsageError(f"{args.input}: {exc}") from exc
    tau_range = tuple(args.tau_range) if args.tau_range else (float(cols["tau"].min()), float(cols["tau"].max()))
    result = fit_collapse(data, tau_range, tuple(args.nu_range))
    summary = result.summary()
    summary["input"] = str(args.input)
    summary["sizes"] = data.sizes
    _emit_json(args.out, summary, "collapse", started)
    if args.require_clean and not result.clean:
        log.error("collapse is not clean (boundary=%s, quality=%.3g)", result.on_boundary, result.quality)
        return EXIT_CHECK
    return EXIT_OK


def cmd_fit(args) -> int:
    started = time.time()
    cols = read_csv(args.input, DYNAMICS_COLUMNS)
    series = TimeSeries(cols["t"], cols["mean_SvN"], cols["stderr_SvN"])
    positive = series.t > 0
    series = TimeSeries(series.t[positive], series.values[positive], series.errors[positive])
    auto = default_window(series)
    window = (
        args.t_min if args.t_min is not None else auto[0],
        args.t_max if args.t_max is not None else auto[1],
    )
    comparison = compare_models(series, window, LogPowerModel(subleading=True), AlgebraicModel())
    plain = fit_log_power(series, window, subleading=False)
    report = {
        "input": str(args.input),
        "window": list(comparison.window),
        "log_power": comparison.first.to_dict(),
        "log_power_leading_only": plain.to_dict(),
        "algebraic": comparison.second.to_dict(),
        "residual_ratio": comparison.ratio,
        "preferred": comparison.preferred,
    }
    _emit_json(args.out, report, "fit", started)
    if args.expect and not comparison.preferred.startswith(args.expect):
        log.error("preferred model %s, expected %s", comparison.preferred, args.expect)
        return EXIT_CHECK
    return EXIT_OK


def _emit_json(out, payload: dict, command: str, started: float):
    if out:
        out = Path(out)
        payload["manifest"] = manifest_path(out).name
        out.write_text(json.dumps(payload, indent=2, default=_json_default) + "\n")
        write_manifest(out, command, {k: payload[k] for k in ("input",)}, None, {"total": time.time() - started}, started)
    else:
        json.dump(payload, sys.stdout, indent=2, default=_json_default)
        sys.stdout.write("\n")


def _json_default(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


# --------------------------------------------------------------------------


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kickedchain", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def sweep_flags(p):
        p.add_argument("--config", required=True, help="TOML configuration file")
        p.add_argument("--out", required=True, help="output CSV path")
        p.add_argument("--workers", type=int, help="maximum concurrent worker processes")
        p.add_argument("--seed", type=int, help="master seed (overrides config)")
        p.add_argument("--samples", type=int, help="disorder samples per grid point")
        p.add_argument("--checkpoint", help="JSON-lines checkpoint file for resuming")

    p = sub.add_parser("levelstats", help="mean gap ratio over a parameter grid")
    sweep_flags(p)
    p.set_defaults(func=cmd_levelstats, t_max=None)

    p = sub.add_parser("dynamics", help="Neel-state entanglement and imbalance versus kicks")
    sweep_flags(p)
    p.add_argument("--t-max", type=int, dest="t_max", help="largest kick count")
    p.set_defaults(func=cmd_dynamics)

    p = sub.add_parser("collapse", help="finite-size-scaling collapse of a levelstats CSV")
    p.add_argument("input")
    p.add_argument("--out", help="output JSON path (default stdout)")
    p.add_argument("--tau-range", nargs=2, type=float, metavar=("LO", "HI"))
    p.add_argument("--nu-range", nargs=2, type=float, metavar=("LO", "HI"), default=(0.3, 3.0))
    p.add_argument("--require-clean", action="store_true", help="exit 3 unless the collapse is clean")
    p.set_defaults(func=cmd_collapse)

    p = sub.add_parser("fit", help="growth-law fits of a dynamics CSV")
    p.add_argument("input")
    p.add_argument("--out", help="output JSON path (default stdout)")
    p.add_argument("--t-min", type=float, dest="t_min")
    p.add_argument("--t-max", type=float, dest="t_max")
    p.add_argument("--expect", choices=("log-power", "algebraic", "inconclusive"),
                   help="exit 3 unless this model is preferred")
    p.set_defaults(func=cmd_fit)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"kickedchain: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CollapseError, GrowthFitError, DiagonalizationError, SweepError, FloatingPointError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
