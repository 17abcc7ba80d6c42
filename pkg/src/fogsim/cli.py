"""Command line front end: ``fogsim <subcommand> [options]``.

Exit status is 0 on success, 1 on a configuration error and 2 when the
power allocation fails numerically. CSV files land in ``--out`` or, if that
is omitted, in ``$FOGSIM_OUTPUT_DIR`` (default: the working directory).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import tempfile
from pathlib import Path
from typing import Any, Optional, Sequence

from fogsim.config import POLICIES, PRESETS, ConfigError, SimulationConfig, preset
from fogsim.engine import MOTIVATING_POLICIES, default_jobs, run, run_motivating_example, sweep, trace_csv
from fogsim.metrics import SimulationResult, csv_text
from fogsim.pora import NumericalFailure
from fogsim.queueing import ContractViolation

OUTPUT_ENV = "FOGSIM_OUTPUT_DIR"

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2

DEFAULT_AXES = {
    "sweep-v": "1e9,1e10,1e11,2e11",
    "sweep-w": "0,5,10,20,30",
    "sweep-errors": "0:0,0.05:0.05,0.5:0.05,0.05:0.25,0.5:0.25",
    "sweep-policy": "pora,pora-4,pora-3,pora-2,pora-1,nol,o2cft,o2cloud,random",
}
AXIS_OF = {"sweep-v": "V", "sweep-w": "W", "sweep-errors": "errors", "sweep-policy": "policy"}

# flag name -> config field
FLAG_FIELDS = {"v": "V", "w": "W", "policy": "policy", "d": "d", "horizon": "horizon"}


class CliError(Exception):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="config file with [section] key = value entries")
    common.add_argument("--preset", choices=sorted(PRESETS), default="desk",
                        help="base parameter set, applied before --config (default: desk)")
    common.add_argument("--out", help="output CSV path")
    common.add_argument("--v", help="tradeoff weight V")
    common.add_argument("--w", help="prediction window size W in slots")
    common.add_argument("--policy", help=f"one of {', '.join(POLICIES)}")
    common.add_argument("--d", help="probed CFNs per EFN for pora-d")
    common.add_argument("--seed", help="base seed; topology, traffic and policy use seed, seed+1, seed+2")
    common.add_argument("--horizon", help="slots to simulate")
    common.add_argument("--save-config", help="also write the resolved config to this path")
    common.add_argument("-q", "--quiet", action="store_true")

    sweeps = argparse.ArgumentParser(add_help=False)
    sweeps.add_argument("--values", help="comma separated axis values (errors: p1:p2 pairs)")
    sweeps.add_argument("--replications", default="5", help="seeds per axis point (default 5)")
    sweeps.add_argument("--jobs", help="worker processes (default: available CPUs)")

    parser = argparse.ArgumentParser(prog="fogsim", description="Two-tier fog computing offloading simulator.")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", parents=[common], help="simulate one configuration")
    p_run.add_argument("--trace-out", help="per-slot CSV of total backlog and instant power")
    p_run.add_argument("--queues-out", help="per-slot, per-queue backlog CSV")
    for name, axis in AXIS_OF.items():
        sub.add_parser(name, parents=[common, sweeps], help=f"sweep over {axis}")
    sub.add_parser("motivating", help="print the two-node example for all four policy pairs")
    return parser


def _parse_int(key: str, raw: str) -> int:
    try:
        value = float(raw)
    except ValueError:
        raise CliError(key, f"cannot parse {raw!r} as an integer") from None
    if not value.is_integer():
        raise CliError(key, f"{raw!r} is not an integer")
    return int(value)


def _parse_float(key: str, raw: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise CliError(key, f"cannot parse {raw!r} as a number") from None


def resolve_config(args: argparse.Namespace) -> SimulationConfig:
    """Preset, then config file, then flags; every step is validated."""
    config = preset(args.preset)
    if args.config:
        config = SimulationConfig.load(args.config, base=config)
    overrides: dict[str, Any] = {}
    if args.v is not None:
        overrides["V"] = _parse_float("v", args.v)
    if args.w is not None:
        overrides["W"] = _parse_int("w", args.w)
    if args.d is not None:
        overrides["d"] = _parse_int("d", args.d)
    if args.horizon is not None:
        overrides["horizon"] = _parse_int("horizon", args.horizon)
    if args.policy is not None:
        name = args.policy.lower()
        if name.startswith("pora-") and name[5:].isdigit():
            overrides.update(policy="pora-d", d=int(name[5:]))
        else:
            overrides["policy"] = name
    if args.seed is not None:
        s = _parse_int("seed", args.seed)
        overrides.update(seed_topology=s, seed_traffic=s + 1, seed_policy=s + 2)
    try:
        return config.replace(**overrides)
    except ConfigError as exc:
        flag = next((f for f, name in FLAG_FIELDS.items() if name == exc.key), None)
        if flag is None:
            raise
        raise CliError(flag, str(exc).split(": ", 1)[1]) from None


def parse_axis(command: str, raw: str) -> list:
    items = [x.strip() for x in raw.split(",") if x.strip()]
    if not items:
        raise CliError("values", "sweep axis is empty")
    if command == "sweep-v":
        values = [_parse_float("values", x) for x in items]
        if any(v <= 0 for v in values):
            raise CliError("values", "V must be positive")
        return values
    if command == "sweep-w":
        values = [_parse_int("values", x) for x in items]
        if any(v < 0 for v in values):
            raise CliError("values", "W must be non-negative")
        return values
    if command == "sweep-errors":
        pairs = []
        for x in items:
            parts = x.split(":")
            if len(parts) != 2:
                raise CliError("values", f"expected p1:p2, got {x!r}")
            p1, p2 = (_parse_float("values", y) for y in parts)
            if not (0 <= p1 <= 1 and 0 <= p2 <= 1):
                raise CliError("values", f"probabilities out of range in {x!r}")
            pairs.append((p1, p2))
        return pairs
    return [x.lower() for x in items]


def header_line(config: SimulationConfig, extra: str = "") -> str:
    body = " ".join(f"{k}={v!r}" if isinstance(v, float) else f"{k}={v}" for k, v in config.as_dict().items())
    return f"fogsim config: {body}" + (f" {extra}" if extra else "")


def output_path(args: argparse.Namespace, default_name: str) -> Path:
    if args.out:
        return Path(args.out)
    return Path(os.environ.get(OUTPUT_ENV, ".")) / default_name


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _validate_sweep_points(base: SimulationConfig, axis: str, values: list) -> None:
    from fogsim.engine import axis_overrides

    for v in values:
        try:
            base.replace(**axis_overrides(axis, v))
        except ConfigError as exc:
            raise CliError("values", f"{v!r} gives an invalid config ({exc})") from None


def _cmd_motivating(args) -> int:
    print(f"{'EFN':<8} {'CFN':<8} {'power_mW':>9} {'latency_slots':>14}")
    for efn, cfn in MOTIVATING_POLICIES:
        power, latency = run_motivating_example(efn, cfn)
        print(f"{efn:<8} {cfn:<8} {float(power):>9g} {float(latency):>14g}")
    return EXIT_OK


def _report(results: Sequence[SimulationResult], quiet: bool) -> None:
    if quiet:
        return
    for r in results:
        print(r.summary_line())


def _cmd_run(args, config: SimulationConfig) -> int:
    path = output_path(args, "run.csv")
    result = run(config, record_queues=bool(args.queues_out))
    write_atomic(path, csv_text([result], header_line(config)))
    if args.trace_out:
        write_atomic(Path(args.trace_out), trace_csv(result))
    if args.queues_out:
        rows = ["slot,node,kind,backlog_bits"] + [f"{t},{n},{k},{b!r}" for t, n, k, b in result.trace["queues"]]
        write_atomic(Path(args.queues_out), "\n".join(rows) + "\n")
    _report([result], args.quiet)
    return EXIT_OK


def _cmd_sweep(args, config: SimulationConfig) -> int:
    values = parse_axis(args.command, args.values or DEFAULT_AXES[args.command])
    axis = AXIS_OF[args.command]
    _validate_sweep_points(config, axis, values)
    reps = _parse_int("replications", args.replications)
    if reps < 1:
        raise CliError("replications", "must be at least 1")
    jobs = default_jobs() if args.jobs is None else _parse_int("jobs", args.jobs)
    if jobs < 1:
        raise CliError("jobs", "must be at least 1")
    path = output_path(args, f"{args.command}.csv")
    outcome = sweep(config, axis, values, replications=reps, jobs=jobs)
    extra = f"sweep.axis={axis} sweep.values={','.join(map(str, values))} sweep.replications={reps}"
    write_atomic(path, csv_text(outcome.results, header_line(config, extra)))
    _report(outcome.results, args.quiet)
    for value, rep, err in outcome.failures:
        print(f"failed: {axis}={value} replication {rep}: {err}", file=sys.stderr)
    if outcome.failures:
        return EXIT_NUMERICAL
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse already printed the offending option
        return EXIT_CONFIG if exc.code else EXIT_OK
    if args.command == "motivating":
        return _cmd_motivating(args)
    try:
        config = resolve_config(args)
        if args.save_config:
            config.save(args.save_config)
        if args.command == "run":
            return _cmd_run(args, config)
        return _cmd_sweep(args, config)
    except (ConfigError, CliError) as exc:
        print(f"fogsim: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, ContractViolation) as exc:
        print(f"fogsim: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
