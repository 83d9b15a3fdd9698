"""Repetitions (train then evaluate), parameter sweeps and cross-seed aggregation."""

from __future__ import annotations

import hashlib
import itertools
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from rltc.engine import FailureModel, assign_roster, reliable_count_for, run_episode
from rltc.learning import DecayGranularity, LearnerConfig, QTable, epsilon_at
from rltc.metrics import METRIC_NAMES, MetricSample
from rltc.policy import PolicyKind
from rltc.topology import Topology, build_grid, edge_list

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExperimentConfig:
    grid_dim: int = 4
    frac_reliable: float = 0.75
    noise: float = 0.0
    failure_model: FailureModel = FailureModel.ALWAYS_ZERO
    policy: PolicyKind = PolicyKind.RLTC
    horizon: int = 30
    train_episodes: int = 20_000
    eval_episodes: int = 2_000
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    seeds: tuple[int, ...] = tuple(range(30))
    # library-only override (tests, oracle fixtures); experiments use grid_dim
    topology: Topology | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "failure_model", FailureModel(self.failure_model))
        object.__setattr__(self, "policy", PolicyKind(self.policy))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not 0 < self.frac_reliable <= 1:
            raise ValueError(f"frac_reliable must be in (0, 1], got {self.frac_reliable}")
        if not 0 <= self.noise <= 1:
            raise ValueError(f"noise must be in [0, 1], got {self.noise}")
        if self.topology is None and self.grid_dim < 2:
            raise ValueError(f"grid_dim must be >= 2, got {self.grid_dim}")
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        if self.train_episodes < 0 or self.eval_episodes < 1:
            raise ValueError("need train_episodes >= 0 and eval_episodes >= 1")

    @property
    def p(self) -> float:
        return 1.0 - self.noise

    def build_topology(self) -> Topology:
        return self.topology if self.topology is not None else build_grid(self.grid_dim)

    @property
    def n_agents(self) -> int:
        return self.build_topology().node_count

    @property
    def config_id(self) -> str:
        """Stable short hash of everything except the seed list."""
        learner = asdict(self.learner)
        learner["decay_granularity"] = self.learner.decay_granularity.value
        key = {
            "grid_dim": self.grid_dim,
            "edges": None if self.topology is None else edge_list(self.topology),
            "node_count": self.n_agents,
            "frac_reliable": self.frac_reliable,
            "noise": self.noise,
            "failure_model": self.failure_model.value,
            "policy": self.policy.value,
            "horizon": self.horizon,
            "train_episodes": self.train_episodes,
            "eval_episodes": self.eval_episodes,
            "learner": learner,
        }
        return hashlib.sha1(json.dumps(key, sort_keys=True).encode()).hexdigest()[:10]


def derive_seeds(master: int, count: int) -> tuple[int, ...]:
    """``count`` seeds split from one master seed via numpy's SeedSequence.spawn."""
    children = np.random.SeedSequence(master).spawn(count)
    return tuple(int(c.generate_state(1, dtype=np.uint32)[0]) for c in children)


@dataclass
class RunResult:
    config: ExperimentConfig
    seed: int
    reliable: np.ndarray
    eval_mean: MetricSample
    eval_std: MetricSample
    train_rewards: np.ndarray | None = None

    def same_numbers(self, other: RunResult) -> bool:
        return (
            self.seed == other.seed
            and np.array_equal(self.reliable, other.reliable)
            and self.eval_mean == other.eval_mean
            and self.eval_std == other.eval_std
        )


def _epsilons(cfg: LearnerConfig, episode: int, global_step: int, horizon: int) -> np.ndarray:
    if cfg.decay_granularity is DecayGranularity.EPISODE:
        return np.full(horizon, epsilon_at(episode, cfg))
    return cfg.epsilon0 * cfg.decay_r ** np.arange(global_step, global_step + horizon, dtype=np.float64)


def run_repetition(config: ExperimentConfig, seed: int, record_training: bool = False) -> RunResult:
    """One seeded unit: place agents, train (RLTC only), then evaluate greedily."""
    if config.frac_reliable <= 0:
        raise ValueError("frac_reliable must be > 0")
    rng = np.random.default_rng(seed)
    topology = config.build_topology()
    if reliable_count_for(config.frac_reliable, topology.node_count) < 1:
        raise ValueError(f"frac_reliable={config.frac_reliable} leaves no reliable agents on {topology.node_count} nodes")
    roster = assign_roster(topology, config.frac_reliable, rng)

    qtable = None
    train_rewards = None
    if config.policy is PolicyKind.RLTC:
        qtable = QTable.zeros(topology, roster)
        train_rewards = np.empty(config.train_episodes)
        for ep in range(config.train_episodes):
            eps = _epsilons(config.learner, ep, ep * config.horizon, config.horizon)
            res = run_episode(
                topology, roster, config.failure_model, config.policy, rng,
                horizon=config.horizon, p=config.p, qtable=qtable, learner=config.learner, epsilon=eps,
            )
            train_rewards[ep] = res.metrics.mean.avg_reward

    episode_means = np.empty((config.eval_episodes, len(METRIC_NAMES)))
    for ep in range(config.eval_episodes):
        res = run_episode(
            topology, roster, config.failure_model, config.policy, rng,
            horizon=config.horizon, p=config.p, qtable=qtable,
        )
        episode_means[ep] = res.metrics.samples.mean(axis=0)

    mean, std = _mean_std(episode_means)
    return RunResult(
        config=config,
        seed=seed,
        reliable=roster.reliable.copy(),
        eval_mean=MetricSample.from_array(mean),
        eval_std=MetricSample.from_array(std),
        train_rewards=train_rewards if record_training else None,
    )


def _mean_std(rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = rows.mean(axis=0)
    std = rows.std(axis=0, ddof=1) if len(rows) > 1 else np.zeros(rows.shape[1])
    return mean, std


def aggregate(results: Sequence[RunResult]) -> tuple[MetricSample, MetricSample]:
    """Sample mean and standard deviation (n-1) of per-seed evaluation means."""
    if not results:
        raise ValueError("aggregate needs at least one result")
    mean, std = _mean_std(np.array([r.eval_mean.as_array() for r in results]))
    return MetricSample.from_array(mean), MetricSample.from_array(std)


@dataclass(frozen=True)
class SweepAxes:
    frac_reliable: Sequence[float] | None = None
    noise: Sequence[float] | None = None
    grid_dim: Sequence[int] | None = None
    failure_model: Sequence[FailureModel] | None = None
    policy: Sequence[PolicyKind] | None = None
    learner: Sequence[LearnerConfig] | None = None
    seeds: Sequence[int] | None = None

    def configs(self, base: ExperimentConfig) -> list[ExperimentConfig]:
        names = ("grid_dim", "frac_reliable", "noise", "failure_model", "policy", "learner")
        values = [getattr(self, n) if getattr(self, n) is not None else [getattr(base, n)] for n in names]
        if any(len(v) == 0 for v in values):
            raise ValueError("sweep axes must be non-empty")
        seeds = tuple(self.seeds) if self.seeds is not None else base.seeds
        if not seeds:
            raise ValueError("sweep needs at least one seed")
        return [replace(base, seeds=seeds, **dict(zip(names, combo))) for combo in itertools.product(*values)]


def learner_grid(
    alpha: Iterable[float], gamma: Iterable[float], epsilon0: Iterable[float], decay_r: Iterable[float],
    decay_granularity: DecayGranularity = DecayGranularity.GLOBAL_TIMESTEP,
) -> list[LearnerConfig]:
    return [
        LearnerConfig(a, g, e, r, decay_granularity)
        for a, g, e, r in itertools.product(alpha, gamma, epsilon0, decay_r)
    ]


@dataclass
class RunFailure:
    config: ExperimentConfig
    seed: int
    error: str


@dataclass
class SweepResult:
    results: list[RunResult]
    failures: list[RunFailure]

    def by_config(self) -> dict[str, list[RunResult]]:
        groups: dict[str, list[RunResult]] = {}
        for r in self.results:
            groups.setdefault(r.config.config_id, []).append(r)
        return groups


def _run_safe(args: tuple[ExperimentConfig, int, bool]) -> RunResult | RunFailure:
    config, seed, record = args
    try:
        return run_repetition(config, seed, record)
    except Exception as exc:  # reported per run; the rest of the sweep continues
        return RunFailure(config, seed, f"{type(exc).__name__}: {exc}")


def run_configs(
    configs: Sequence[ExperimentConfig], workers: int = 1, record_training: bool = False
) -> SweepResult:
    """Run every (config, seed) pair; output order never depends on ``workers``."""
    jobs = [(c, s, record_training) for c in configs for s in c.seeds]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_safe, jobs))
    else:
        outcomes = [_run_safe(j) for j in jobs]
    results = [o for o in outcomes if isinstance(o, RunResult)]
    failures = [o for o in outcomes if isinstance(o, RunFailure)]
    for f in failures:
        log.error("run failed: config %s seed %d: %s", f.config.config_id, f.seed, f.error)
    return SweepResult(results, failures)


def run_sweep(
    base: ExperimentConfig, axes: SweepAxes, workers: int = 1, record_training: bool = False
) -> SweepResult:
    return run_configs(axes.configs(base), workers, record_training)
