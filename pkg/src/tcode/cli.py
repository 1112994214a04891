"""Command-line front end.

Subcommands:
  analyze          closed-form gain curve, no simulation
  simulate         run one configuration and report merged metrics
  pair             uncoded vs coded arms on common arrivals
  sweep-load       paired runs across message rates
  sweep-rate       paired runs across redundancy levels
  validate-config  parse and echo a config, exit status says if it is usable

Exit codes: 0 success, 1 usage or configuration error, 2 infeasible model
parameters (saturation), 3 runtime failure.

Config files are line-oriented `key = value` under [section] headers; '#'
starts a comment.  Unknown sections or keys and duplicate keys are fatal: a
config that parses is a config that was fully understood.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import traceback

from . import __version__
from .analytics import gain_curve, optimal_redundancy
from .errors import ConfigurationError, ParameterError, SaturationError, TcodeError
from .harness import (
    ExperimentConfig,
    PairedResult,
    load_sweep,
    rate_sweep,
    run_paired,
    simulate_run,
)
from .metrics import merge

PAIRS_HEADER = (
    "rate_msgs_s,k,n,R,arm,replications,delay_mean_s,delay_var_s2,"
    "violation_prob,throughput_bps,throughput_info_bps,drops,unfinished,rho_est"
)
RATIOS_HEADER = (
    "rate_msgs_s,k,n,delay_gain,variance_ratio,violation_ratio,"
    "throughput_ratio,queue_growth"
)
GAINS_HEADER = (
    "n,R,gain_measured,gain_predicted,delay_uncoded_s,delay_coded_s,rho_est"
)
CURVE_HEADER = "n,R,uncoded_delay_s,coded_delay_s,gain,feasible"
MESSAGES_HEADER = (
    "replication,message_id,created_at_s,completed_at_s,delay_s,"
    "violated,failed,hops_of_kth"
)


# --- config file ------------------------------------------------------------

_INT = "int"
_FLOAT = "float"
_STR = "str"
_FLOATS = "floats"
_INTS = "ints"

# (section, key) -> (ExperimentConfig field, value type)
_SCHEMA = {
    ("topology", "rows"): ("rows", _INT),
    ("topology", "cols"): ("cols", _INT),
    ("topology", "removal_fraction"): ("removal_fraction", _FLOAT),
    ("topology", "file"): ("topology_file", _STR),
    ("link", "capacity_bps"): ("capacity_bps", _FLOAT),
    ("link", "mean_delay_s"): ("link_delay_s", _FLOAT),
    ("link", "service_mean_s"): ("service_mean_s", _FLOAT),
    ("traffic", "rates_msgs_s"): ("rates", _FLOATS),
    ("traffic", "packet_size_bits"): ("packet_size_bits", _FLOAT),
    ("traffic", "deadline_s"): ("deadline_s", _FLOAT),
    ("code", "k"): ("k", _INT),
    ("code", "n"): ("n", _INT),
    ("code", "n_values"): ("n_values", _INTS),
    ("run", "routing"): ("routing", _STR),
    ("run", "ttl"): ("ttl", _INT),
    ("run", "horizon_s"): ("horizon_s", _FLOAT),
    ("run", "warmup_fraction"): ("warmup_fraction", _FLOAT),
    ("run", "replications"): ("replications", _INT),
    ("run", "master_seed"): ("master_seed", _INT),
}
_SECTIONS = {section for section, _ in _SCHEMA}


def _convert(kind: str, text: str):
    if kind == _INT:
        return int(text)
    if kind == _FLOAT:
        return float(text)
    if kind == _FLOATS:
        return tuple(float(part) for part in text.split(","))
    if kind == _INTS:
        return tuple(int(part) for part in text.split(","))
    return text


def parse_config(path: str) -> ExperimentConfig:
    """Read and validate a config file; any surprise in it is fatal."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path!r}: {exc}") from None

    fields: dict[str, object] = {}
    seen: set[tuple[str, str]] = set()
    section = None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in _SECTIONS:
                raise ConfigurationError(f"{path}:{lineno}: unknown section [{section}]")
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigurationError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key = key.strip()
        value = value.strip()
        if section is None:
            raise ConfigurationError(f"{path}:{lineno}: key {key!r} outside any section")
        if (section, key) not in _SCHEMA:
            raise ConfigurationError(f"{path}:{lineno}: unknown key {key!r} in [{section}]")
        if (section, key) in seen:
            raise ConfigurationError(f"{path}:{lineno}: duplicate key {key!r} in [{section}]")
        seen.add((section, key))
        if not value:
            raise ConfigurationError(f"{path}:{lineno}: empty value for {key!r}")
        field, kind = _SCHEMA[(section, key)]
        try:
            fields[field] = _convert(kind, value)
        except ValueError:
            raise ConfigurationError(
                f"{path}:{lineno}: cannot parse {value!r} as {kind} for {key!r}"
            ) from None

    if "topology_file" in fields and not os.path.isabs(str(fields["topology_file"])):
        fields["topology_file"] = os.path.join(
            os.path.dirname(os.path.abspath(path)), str(fields["topology_file"])
        )
    config = ExperimentConfig(**fields)
    config.validate()
    if config.topology_file and not os.path.isfile(config.topology_file):
        raise ConfigurationError(f"topology.file: no such file {config.topology_file!r}")
    return config


# --- output helpers ---------------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return "nan"
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return "nan" if math.isnan(value) else format(value, ".9g")
    return str(value)


def _write_csv(path: str, header: str, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(_fmt(cell) for cell in row) + "\n")


def _write_manifest(out_dir: str, command: str, config: ExperimentConfig) -> None:
    path = os.path.join(out_dir, "manifest.txt")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"tcode {__version__}\n")
        fh.write(f"command = {command}\n")
        for key, value in config.resolved():
            fh.write(f"{key} = {value}\n")


def _arm_row(rate: float, k: int, arm_n: int, arm: str, agg) -> list:
    return [
        rate, k, arm_n, k / arm_n, arm, agg.replications,
        agg.delay_mean, agg.delay_variance, agg.violation_probability,
        agg.delivered_throughput_total, agg.delivered_throughput,
        agg.packets_dropped, agg.messages_unfinished, agg.rho_est,
    ]


def _ratio_row(pair: PairedResult) -> list:
    return [
        pair.rate_msgs_s, pair.k, pair.n,
        pair.delay_gain, pair.variance_ratio, pair.violation_ratio,
        pair.throughput_ratio, pair.queue_growth,
    ]


def _write_pair_outputs(out_dir: str, pairs: list[PairedResult]) -> None:
    rows = []
    for p in pairs:
        rows.append(_arm_row(p.rate_msgs_s, p.k, p.k, "uncoded", p.uncoded))
        rows.append(_arm_row(p.rate_msgs_s, p.k, p.n, "coded", p.coded))
    _write_csv(os.path.join(out_dir, "pairs.csv"), PAIRS_HEADER, rows)
    _write_csv(
        os.path.join(out_dir, "ratios.csv"), RATIOS_HEADER,
        [_ratio_row(p) for p in pairs],
    )


def _prepare_out(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def _say(args, text: str) -> None:
    if not args.quiet:
        print(text)


# --- subcommands ------------------------------------------------------------


def cmd_analyze(args) -> int:
    rows = gain_curve(args.rho, args.k, args.n_max, args.normalization)
    best_n, best_gain = optimal_redundancy(args.rho, args.k, args.n_max)
    out = _prepare_out(args.out)
    path = os.path.join(out, "gain_curve.csv")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(CURVE_HEADER + "\n")
        for r in rows:
            cells = [r.n, r.rate, r.uncoded_delay_s, r.coded_delay_s, r.gain, r.feasible]
            fh.write(",".join(_fmt(c) for c in cells) + "\n")
        fh.write(f"# optimal n = {best_n}, gain = {_fmt(best_gain)}\n")
    _say(args, f"optimal n = {best_n} (rate {args.k}/{best_n}), gain = {best_gain:.4f}")
    _say(args, f"wrote {path}")
    return 0


def _load_config(args) -> ExperimentConfig:
    config = parse_config(args.config)
    if args.seed is not None:
        config = config.with_overrides(master_seed=args.seed)
        config.validate()
    return config


def cmd_validate_config(args) -> int:
    config = _load_config(args)
    for key, value in config.resolved():
        print(f"{key} = {value}")
    return 0


def cmd_simulate(args) -> int:
    config = _load_config(args)
    out = _prepare_out(args.out)
    rate = config.single_rate
    keep = bool(args.messages)
    outputs = [
        simulate_run(config, rep, keep_records=keep)
        for rep in range(config.replications)
    ]
    agg = merge([o.metrics for o in outputs])
    arm = "coded" if config.n > config.k else "uncoded"
    _write_csv(
        os.path.join(out, "metrics.csv"), PAIRS_HEADER,
        [_arm_row(rate, config.k, config.n, arm, agg)],
    )
    if keep:
        rows = []
        for rep, o in enumerate(outputs):
            for rec in o.records:
                rows.append([
                    rep, rec.message_id, rec.created_at, rec.completed_at,
                    rec.delay, rec.violated, rec.failed, rec.hops_of_kth,
                ])
        _write_csv(os.path.join(out, "messages.csv"), MESSAGES_HEADER, rows)
    _write_manifest(out, "simulate", config)
    _say(args, f"{arm} n={config.n}: delay {_fmt(agg.delay_mean)} s, "
               f"violation {_fmt(agg.violation_probability)}, "
               f"throughput {_fmt(agg.delivered_throughput_total)} bps")
    _say(args, f"wrote {out}/metrics.csv")
    return 0


def cmd_pair(args) -> int:
    config = _load_config(args)
    out = _prepare_out(args.out)
    pair = run_paired(config)
    _write_pair_outputs(out, [pair])
    _write_manifest(out, "pair", config)
    _say(args, f"delay gain {_fmt(pair.delay_gain)}, "
               f"variance ratio {_fmt(pair.variance_ratio)}, "
               f"violation ratio {_fmt(pair.violation_ratio)}")
    _say(args, f"wrote {out}/pairs.csv, {out}/ratios.csv")
    return 0


def cmd_sweep_load(args) -> int:
    config = _load_config(args)
    out = _prepare_out(args.out)
    pairs = load_sweep(config)
    _write_pair_outputs(out, pairs)
    _write_manifest(out, "sweep-load", config)
    saturated = [p.rate_msgs_s for p in pairs if p.queue_growth]
    if saturated:
        _say(args, f"queue growth at rates: {', '.join(_fmt(r) for r in saturated)}")
    _say(args, f"wrote {out}/pairs.csv, {out}/ratios.csv ({len(pairs)} rates)")
    return 0


def cmd_sweep_rate(args) -> int:
    config = _load_config(args)
    out = _prepare_out(args.out)
    points = rate_sweep(config)
    gain_rows = []
    pair_rows = []
    ratio_rows = []
    for i, pt in enumerate(points):
        p = pt.paired
        gain_rows.append([
            pt.n, pt.code_rate, pt.measured_gain, pt.predicted_gain,
            p.uncoded.delay_mean, p.coded.delay_mean, p.uncoded.rho_est,
        ])
        if i == 0:
            pair_rows.append(_arm_row(p.rate_msgs_s, p.k, p.k, "uncoded", p.uncoded))
        if pt.n > p.k:
            pair_rows.append(_arm_row(p.rate_msgs_s, p.k, pt.n, "coded", p.coded))
        ratio_rows.append(_ratio_row(p))
    _write_csv(os.path.join(out, "gains.csv"), GAINS_HEADER, gain_rows)
    _write_csv(os.path.join(out, "pairs.csv"), PAIRS_HEADER, pair_rows)
    _write_csv(os.path.join(out, "ratios.csv"), RATIOS_HEADER, ratio_rows)
    _write_manifest(out, "sweep-rate", config)
    best = max(points, key=lambda pt: (pt.measured_gain, -pt.n))
    _say(args, f"best measured gain {_fmt(best.measured_gain)} at n = {best.n}")
    _say(args, f"wrote {out}/gains.csv, {out}/pairs.csv, {out}/ratios.csv")
    return 0


# --- entry point ------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits with code 2
        raise ConfigurationError(message)


def _add_run_args(sub) -> None:
    sub.add_argument("--config", required=True, help="path to a run config file")
    sub.add_argument("--out", default="out", help="output directory (default: out)")
    sub.add_argument("--seed", type=int, default=None, help="override run.master_seed")
    sub.add_argument("--quiet", action="store_true", help="suppress progress output")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tcode", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"tcode {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    analyze = subs.add_parser("analyze", help="closed-form gain curve")
    analyze.add_argument("--rho", type=float, required=True, help="channel load in [0, 1)")
    analyze.add_argument("--k", type=int, required=True, help="information packets per message")
    analyze.add_argument("--n-max", type=int, required=True, dest="n_max",
                         help="largest total packet count to evaluate")
    analyze.add_argument("--normalization", type=float, default=1000.0,
                         help="delay unit scale in 1/s (default 1000)")
    analyze.add_argument("--out", default="out")
    analyze.add_argument("--quiet", action="store_true")
    analyze.set_defaults(func=cmd_analyze)

    simulate = subs.add_parser("simulate", help="run one configuration")
    _add_run_args(simulate)
    simulate.add_argument("--messages", action="store_true",
                          help="also write a per-message messages.csv")
    simulate.set_defaults(func=cmd_simulate)

    pair = subs.add_parser("pair", help="uncoded vs coded on common arrivals")
    _add_run_args(pair)
    pair.set_defaults(func=cmd_pair)

    sweep_load = subs.add_parser("sweep-load", help="paired runs across message rates")
    _add_run_args(sweep_load)
    sweep_load.set_defaults(func=cmd_sweep_load)

    sweep_rate = subs.add_parser("sweep-rate", help="paired runs across redundancy levels")
    _add_run_args(sweep_rate)
    sweep_rate.set_defaults(func=cmd_sweep_rate)

    validate = subs.add_parser("validate-config", help="check a config file")
    validate.add_argument("--config", required=True)
    validate.add_argument("--seed", type=int, default=None)
    validate.set_defaults(func=cmd_validate_config)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ParameterError as exc:  # includes configuration and topology errors
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SaturationError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 2
    except TcodeError as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return 3
    except Exception:
        traceback.print_exc()
        return 3


if __name__ == "__main__":
    sys.exit(main())
