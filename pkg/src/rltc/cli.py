"""Command-line entry point: ``rltc run``, ``rltc sweep`` and ``rltc oracle``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from rltc.config import ConfigError, Settings, parse_config
from rltc.engine import FailureModel, Roster
from rltc.harness import RunResult, SweepResult, aggregate, run_configs
from rltc.oracle import MAX_NODES, constant_schedule, expected_success_curve
from rltc.policy import PolicyKind, initial_trust
from rltc.topology import TopologyError, build_custom, build_grid

log = logging.getLogger("rltc")


@dataclass
class OutputRow:
    config_id: str
    grid_dim: int | str
    n_agents: int
    frac_reliable: float
    noise: float
    failure_model: str
    policy: str
    seed: int | str
    success_rate_mean: float
    success_rate_std: float
    avg_trust_rate_mean: float
    mutual_trust_rate_mean: float
    trust_accuracy_mean: float
    avg_reward_mean: float

    def formatted(self) -> list[str]:
        return [f"{v:.6f}" if isinstance(v, float) else str(v) for v in (getattr(self, f.name) for f in fields(self))]


COLUMNS = [f.name for f in fields(OutputRow)]


def _row(result: RunResult, seed: int | str, mean, std) -> OutputRow:
    c = result.config
    return OutputRow(
        config_id=c.config_id,
        grid_dim=c.grid_dim if c.topology is None else "",
        n_agents=c.n_agents,
        frac_reliable=float(c.frac_reliable),
        noise=float(c.noise),
        failure_model=c.failure_model.value,
        policy=c.policy.value,
        seed=seed,
        success_rate_mean=mean.success_rate,
        success_rate_std=std.success_rate,
        avg_trust_rate_mean=mean.avg_trust_rate,
        mutual_trust_rate_mean=mean.mutual_trust_rate,
        trust_accuracy_mean=mean.avg_trust_accuracy,
        avg_reward_mean=mean.avg_reward,
    )


def build_rows(sweep: SweepResult) -> list[OutputRow]:
    """Per-seed rows (std across eval episodes) then one ``all`` row per config (std across seeds)."""
    rows = []
    for group in sweep.by_config().values():
        for r in group:
            rows.append(_row(r, r.seed, r.eval_mean, r.eval_std))
        mean, std = aggregate(group)
        rows.append(_row(group[0], "all", mean, std))
    return rows


def render_csv(rows: Sequence[OutputRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    writer.writerows(r.formatted() for r in rows)
    return buf.getvalue()


def write_outputs(rows: Sequence[OutputRow], out: str | Path, json_path: str | Path | None = None) -> None:
    Path(out).write_text(render_csv(rows))
    if json_path:
        records = [dict(zip(COLUMNS, r.formatted())) for r in rows]
        Path(json_path).write_text(json.dumps(records, indent=2) + "\n")


def write_training_curves(sweep: SweepResult, path: str | Path) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["config_id", "seed", "episode", "mean_reward"])
    for r in sweep.results:
        if r.train_rewards is None:
            continue
        for ep, reward in enumerate(r.train_rewards):
            writer.writerow([r.config.config_id, r.seed, ep, f"{reward:.6f}"])
    Path(path).write_text(buf.getvalue())


def _overrides(args: argparse.Namespace) -> dict:
    keys = ("grid_dim", "frac_reliable", "noise", "failure_model", "policy", "horizon",
            "train_episodes", "eval_episodes", "alpha", "gamma", "epsilon0", "decay_r",
            "decay_granularity", "workers", "out")
    over = {k: getattr(args, k) for k in keys}
    if args.seeds is not None:
        over["seeds"] = args.seeds
    elif args.seed_master is not None:
        over["seeds"] = {"master": args.seed_master, "count": args.seed_count}
    return over


def _execute(settings: Settings, configs, args: argparse.Namespace) -> int:
    sweep = run_configs(configs, workers=settings.workers, record_training=bool(args.train_curve))
    rows = build_rows(sweep)
    write_outputs(rows, settings.out, args.json)
    if args.train_curve:
        write_training_curves(sweep, args.train_curve)
    log.info("wrote %d rows to %s", len(rows), settings.out)
    for f in sweep.failures:
        print(f"error: config {f.config.config_id} seed {f.seed}: {f.error}", file=sys.stderr)
    return 1 if sweep.failures else 0


def cmd_run(args: argparse.Namespace) -> int:
    settings = parse_config(args.config, _overrides(args))
    return _execute(settings, [settings.single()], args)


def cmd_sweep(args: argparse.Namespace) -> int:
    settings = parse_config(args.config, _overrides(args))
    return _execute(settings, settings.axes().configs(settings.base()), args)


def _parse_edges(text: str) -> list[tuple[int, int]]:
    edges = []
    for part in text.split(","):
        a, _, b = part.strip().partition("-")
        edges.append((int(a), int(b)))
    return edges


def cmd_oracle(args: argparse.Namespace) -> int:
    if args.edges:
        if args.nodes is None:
            raise ConfigError("nodes", "--nodes is required with --edges")
        topology = build_custom(_parse_edges(args.edges), args.nodes)
    else:
        topology = build_grid(args.grid_dim)
    if topology.node_count > MAX_NODES:
        raise ConfigError("nodes", f"exact oracle supports at most {MAX_NODES} nodes")
    roster = Roster.from_unreliable(topology, args.unreliable or [])
    failure = FailureModel(args.failure_model)
    if args.schedule_file:
        raw = json.loads(Path(args.schedule_file).read_text())
        schedule = [_schedule_step(step, topology, roster) for step in raw]
    else:
        schedule = constant_schedule(initial_trust(PolicyKind(args.schedule), topology, roster), args.horizon)
    curve = expected_success_curve(topology, roster, 1.0 - args.noise, failure, schedule, args.horizon)
    lines = [f"{t}\t{v:.10g}" for t, v in enumerate(curve, start=1)]
    print("\n".join(lines))
    if args.out:
        text = "timestep,expected_success_rate\n" + "".join(f"{t},{v:.10f}\n" for t, v in enumerate(curve, start=1))
        Path(args.out).write_text(text)
    return 0


def _schedule_step(step: dict, topology, roster) -> np.ndarray:
    """One timestep of a JSON schedule: ``{"<node id>": [bits...]}`` for every reliable node."""
    trusts = np.zeros((roster.reliable_count, topology.max_degree), dtype=np.uint8)
    for r, i in enumerate(roster.reliable_ids):
        bits = step[str(int(i))]
        if len(bits) != topology.degree(int(i)):
            raise ConfigError("schedule", f"node {i} needs {topology.degree(int(i))} trust bits")
        trusts[r, : len(bits)] = bits
    return trusts


def _add_experiment_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("-c", "--config", help="YAML config file")
    p.add_argument("--grid-dim", dest="grid_dim", type=int, nargs="+")
    p.add_argument("--frac-reliable", dest="frac_reliable", type=float, nargs="+")
    p.add_argument("--noise", type=float, nargs="+")
    p.add_argument("--failure-model", dest="failure_model", nargs="+", choices=[m.value for m in FailureModel])
    p.add_argument("--policy", nargs="+", choices=[m.value for m in PolicyKind])
    p.add_argument("--horizon", type=int)
    p.add_argument("--train-episodes", dest="train_episodes", type=int)
    p.add_argument("--eval-episodes", dest="eval_episodes", type=int)
    p.add_argument("--alpha", type=float, nargs="+")
    p.add_argument("--gamma", type=float, nargs="+")
    p.add_argument("--epsilon0", type=float, nargs="+")
    p.add_argument("--decay-r", dest="decay_r", type=float, nargs="+")
    p.add_argument("--decay-granularity", dest="decay_granularity", nargs="+", choices=["timestep", "episode"])
    seeds = p.add_mutually_exclusive_group()
    seeds.add_argument("--seeds", type=int, nargs="+")
    seeds.add_argument("--seed-master", type=int, help="derive --seed-count seeds from one master seed")
    p.add_argument("--seed-count", type=int, default=30)
    p.add_argument("--workers", type=int)
    p.add_argument("-o", "--out", help="CSV output path")
    p.add_argument("--json", help="also write a JSON mirror of the CSV")
    p.add_argument("--train-curve", help="write per-episode training reward CSV")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rltc", description="Trust-learning consensus simulations")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one configuration over its seeds")
    _add_experiment_flags(run)
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="run the Cartesian product of list-valued keys")
    _add_experiment_flags(sweep)
    sweep.set_defaults(func=cmd_sweep)

    oracle = sub.add_parser("oracle", help="print the exact expected success curve of a small instance")
    oracle.add_argument("--grid-dim", dest="grid_dim", type=int, default=3)
    oracle.add_argument("--edges", help="custom graph as '1-2,2-3'")
    oracle.add_argument("--nodes", type=int)
    oracle.add_argument("--unreliable", type=int, nargs="*", help="unreliable node IDs")
    oracle.add_argument("--failure-model", dest="failure_model", default="always-zero",
                        choices=[m.value for m in FailureModel])
    oracle.add_argument("--noise", type=float, default=0.0)
    oracle.add_argument("--horizon", type=int, default=30)
    oracle.add_argument("--schedule", default="trust-all", choices=["trust-all", "oracle"])
    oracle.add_argument("--schedule-file", help="JSON list of per-timestep {node: bits} maps")
    oracle.add_argument("-o", "--out", help="CSV output path")
    oracle.set_defaults(func=cmd_oracle)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, TopologyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
