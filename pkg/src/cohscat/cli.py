"""Command-line interface: ``cohscat derive | simulate | sweep``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
``COHSCAT_WORKERS`` sets the number of worker processes used by ``sweep``.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import config as config_mod
from .config import ConfigError
from .lindblad import IntegrationError
from .params import DegenerateConfigError, derive
from .protocol import ProtocolResult, run_protocol
from .reduced import ConditioningError, FluxTrace

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
NUMERIC_ERRORS = (IntegrationError, ConditioningError, DegenerateConfigError, FloatingPointError,
                  np.linalg.LinAlgError)
TRACE_COLUMNS = ("t_s", "flux_per_s", "bound_lower_per_s", "bound_upper_per_s", "engine")
SWEEP_COLUMNS = ("parameter", "value", "engine", "verification_time_s", "effective_detuning_rad_s",
                 "n_windows", "first_window_onset_s", "first_recurrence_onset_s",
                 "last_window_end_s", "window_period_s", "conditioned_fidelity")


def fmt(x) -> str:
    """17 significant digits, locale independent."""
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return format(float(x), ".17g")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


# -- derive -------------------------------------------------------------------

_DERIVED_ROWS = (
    ("trap_frequency", "rad/s", True),
    ("mean_trap_frequency", "rad/s", True),
    ("mechanical_detuning", "rad/s", True),
    ("coupling", "rad/s", False),
    ("mean_coupling", "rad/s", False),
    ("mode_volume", "m^3", False),
    ("scattering_rate", "1/s", False),
    ("optical_spring", "rad/s", False),
    ("heating_rate", "1/s", False),
    ("cooling_rate", "1/s", False),
    ("net_damping", "1/s", False),
    ("mean_damping", "1/s", False),
    ("steady_occupation", "", False),
    ("effective_detuning", "rad/s", True),
    ("pair_damping", "1/s", False),
    ("verification_time", "s", False),
    ("detuning", "rad/s", True),
    ("cavity_linewidth", "rad/s", True),
)


def derived_table(values: dict) -> str:
    lines = [f"{'quantity':<22}{'value':<44}{'unit':<8}/2pi"]
    for name, unit, cyclic in _DERIVED_ROWS:
        v = values[name]
        arr = np.atleast_1d(np.asarray(v, dtype=float))
        text = ", ".join(f"{x:.6g}" for x in arr.ravel())
        extra = ", ".join(f"{x / (2 * math.pi):.6g} Hz" for x in arr.ravel()) if cyclic else ""
        lines.append(f"{name:<22}{text:<44}{unit:<8}{extra}")
    return "\n".join(lines) + "\n"


def cmd_derive(args) -> int:
    run = config_mod.load(args.config)
    values = derive(run.physical).as_dict()
    sys.stdout.write(dumps(values) if args.json else derived_table(values))
    return EXIT_OK


# -- simulate -----------------------------------------------------------------

def trace_csv(trace: FluxTrace) -> str:
    buf = io.StringIO()
    buf.write(",".join(TRACE_COLUMNS) + "\n")
    for row in zip(trace.times, trace.flux, trace.bound_lower, trace.bound_upper):
        buf.write(",".join(fmt(v) for v in row) + "," + trace.source + "\n")
    return buf.getvalue()


def trace_json(trace: FluxTrace) -> str:
    return dumps({
        "engine": trace.source,
        "t_s": trace.times, "flux_per_s": trace.flux,
        "bound_lower_per_s": trace.bound_lower, "bound_upper_per_s": trace.bound_upper,
    })


def summary_document(run: config_mod.RunConfig, result: ProtocolResult) -> dict:
    engines = {}
    for name, summary in result.summaries.items():
        entry = summary.as_dict()
        entry["windows"] = [{"start_s": w.start, "end_s": w.end, "side": w.side}
                            for w in result.traces[name].windows]
        engines[name] = entry
    return {"derived_readout": result.red.as_dict(), "engines": engines,
            "config": run.effective()}


def execute(run: config_mod.RunConfig) -> ProtocolResult:
    return run_protocol(run.physical, run.layout, run.engine, horizon=run.horizon,
                        n_points=run.grid_points, t0_over_kappa=run.t0_over_kappa,
                        rtol=run.rtol, atol=run.atol)


def write_outputs(run: config_mod.RunConfig, result: ProtocolResult, out_dir: Path) -> list[Path]:
    files = {}
    ext = run.output_format
    for name, trace in result.traces.items():
        files[f"trace_{name}.{ext}"] = trace_csv(trace) if ext == "csv" else trace_json(trace)
    files["summary.json"] = dumps(summary_document(run, result))
    files["config_effective.json"] = dumps(run.effective())
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    try:
        for fname, text in files.items():
            tmp = out_dir / (fname + ".part")
            with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
            written.append(tmp)
            final = out_dir / fname
            os.replace(tmp, final)
            written[-1] = final
    except OSError:
        for p in written:
            p.unlink(missing_ok=True)
        raise
    return written


def cmd_simulate(args) -> int:
    run = config_mod.load(args.config)
    out_dir = Path(args.out if args.out is not None else run.output_directory)
    try:
        result = execute(run)
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for path in write_outputs(run, result, out_dir):
        print(path)
    return EXIT_OK


# -- sweep --------------------------------------------------------------------

def window_period(trace: FluxTrace) -> float:
    """Mean spacing of midpoints of consecutive same-side windows that lie inside the grid."""
    t_lo, t_hi = trace.times[0], trace.times[-1]
    gaps = []
    for side in ("above", "below"):
        mids = [(w.start + w.end) / 2 for w in trace.windows
                if w.side == side and w.start > t_lo and w.end < t_hi]
        gaps += list(np.diff(mids))
    return float(np.mean(gaps)) if gaps else math.nan


def _sweep_rows(payload) -> list[list[str]]:
    doc, parameter, value = payload
    run = config_mod.parse(config_mod.with_parameter(doc, parameter, value))
    result = execute(run)
    rows = []
    for name, s in result.summaries.items():
        rows.append([parameter, fmt(value), name, fmt(s.verification_time),
                     fmt(s.effective_detuning), fmt(s.n_windows), fmt(s.first_window_onset),
                     fmt(s.first_recurrence_onset), fmt(s.last_window_end),
                     fmt(window_period(result.traces[name])), fmt(s.conditioned_fidelity)])
    return rows


def parse_values(values: str | None, range_: str | None) -> list[float]:
    if (values is None) == (range_ is None):
        raise ConfigError("sweep: give exactly one of --values or --range")
    try:
        if values is not None:
            return [float(v) for v in values.split(",") if v.strip()]
        start, stop, num = range_.split(":")
        return [float(v) for v in np.linspace(float(start), float(stop), int(num))]
    except ValueError as exc:
        raise ConfigError(f"sweep: cannot parse values ({exc})") from exc


def workers_from_env() -> int:
    raw = os.environ.get("COHSCAT_WORKERS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def cmd_sweep(args) -> int:
    doc = config_mod.load_document(args.config)
    config_mod.parse(doc)
    if args.param not in config_mod.SWEEPABLE:
        raise ConfigError(f"{args.param}: not a sweepable parameter "
                          f"(choose from {', '.join(config_mod.SWEEPABLE)})")
    values = parse_values(args.values, args.range)
    payloads = [(doc, args.param, v) for v in values]
    for p in payloads:
        config_mod.parse(config_mod.with_parameter(*p))
    try:
        workers = workers_from_env()
        if workers > 1 and len(payloads) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                blocks = list(pool.map(_sweep_rows, payloads))
        else:
            blocks = [_sweep_rows(p) for p in payloads]
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    text = ",".join(SWEEP_COLUMNS) + "\n" + "".join(
        ",".join(row) + "\n" for block in blocks for row in block)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cohscat", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("derive", help="print all derived rates for a configuration")
    p.add_argument("config", help="JSON config path, or 'fig2' for the bundled reference")
    p.add_argument("--json", action="store_true", help="emit a JSON document instead of a table")
    p.set_defaults(func=cmd_derive)

    p = sub.add_parser("simulate", help="run the protocol and write traces + summary")
    p.add_argument("config")
    p.add_argument("--out", help="output directory (overrides output.directory)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="one protocol summary row per parameter value")
    p.add_argument("config")
    p.add_argument("--param", required=True)
    p.add_argument("--values", help="comma-separated values")
    p.add_argument("--range", help="start:stop:num (linspace)")
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
