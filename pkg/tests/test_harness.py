import math

import numpy as np
import pytest

from rltc.engine import FailureModel
from rltc.harness import (
    ExperimentConfig,
    SweepAxes,
    aggregate,
    derive_seeds,
    learner_grid,
    run_configs,
    run_repetition,
    run_sweep,
)
from rltc.metrics import MetricSample
from rltc.policy import PolicyKind
from rltc.topology import build_custom

SMALL = dict(grid_dim=3, horizon=30, train_episodes=60, eval_episodes=40)


def test_default_config_values():
    c = ExperimentConfig()
    assert (c.horizon, c.train_episodes, c.eval_episodes, len(c.seeds)) == (30, 20_000, 2_000, 30)


@pytest.mark.parametrize("kwargs", [dict(frac_reliable=0.0), dict(grid_dim=1), dict(noise=1.5), dict(horizon=0)])
def test_config_rejects_invalid(kwargs):
    with pytest.raises(ValueError):
        ExperimentConfig(**kwargs)


def test_trust_all_full_reliability_is_exact():
    c = ExperimentConfig(policy="trust-all", frac_reliable=1.0, noise=0.0, **SMALL)
    r = run_repetition(c, 5)
    assert r.eval_mean.success_rate == 1.0
    assert r.eval_mean.avg_trust_rate == 1.0
    assert r.train_rewards is None


def test_oracle_on_two_node_fixture():
    c = ExperimentConfig(policy="oracle", frac_reliable=0.5, noise=0.0, topology=build_custom([(1, 2)], 2), **SMALL)
    assert run_repetition(c, 3).eval_mean.success_rate == 1.0


def test_repetition_is_deterministic():
    c = ExperimentConfig(policy="rltc", frac_reliable=0.75, noise=0.2, **SMALL)
    a, b = run_repetition(c, 17), run_repetition(c, 17)
    assert a.same_numbers(b)
    assert not a.same_numbers(run_repetition(c, 18))


def test_rltc_eval_trust_is_deterministic():
    c = ExperimentConfig(policy="rltc", frac_reliable=0.75, noise=0.2, **SMALL)
    r = run_repetition(c, 2, record_training=True)
    # identical trust trajectories in every eval episode: zero spread up to rounding
    assert r.eval_std.avg_trust_rate < 1e-12
    assert r.eval_std.mutual_trust_rate < 1e-12
    assert r.eval_std.avg_trust_accuracy < 1e-12
    assert len(r.train_rewards) == 60


def test_unplaceable_fraction_rejected():
    c = ExperimentConfig(frac_reliable=0.05, **SMALL)
    with pytest.raises(ValueError):
        run_repetition(c, 0)


def test_sweep_product_sizes():
    base = ExperimentConfig(**SMALL)
    axes = SweepAxes(frac_reliable=[0.25, 0.5, 0.75, 1.0], noise=[0, 0.1, 0.2, 0.3],
                     policy=list(PolicyKind), seeds=range(30))
    configs = axes.configs(base)
    assert sum(len(c.seeds) for c in configs) == 1440
    assert len(SweepAxes().configs(base)) == 1
    assert len(learner_grid([0.03, 0.01, 0.1], [0.999, 0.95], [0.1, 0.3], [0.9996, 1.0])) == 24
    with pytest.raises(ValueError):
        SweepAxes(noise=[]).configs(base)


def test_sweep_grids_from_the_experiments():
    base = ExperimentConfig(**SMALL)
    main = SweepAxes(frac_reliable=[0.25, 0.5, 0.75, 1.0], noise=[0, 0.1, 0.2, 0.3], grid_dim=[3, 4])
    scal = SweepAxes(grid_dim=list(range(5, 11)), frac_reliable=[0.75], noise=[0.3])
    fine = SweepAxes(frac_reliable=[0.75, 0.8, 0.85, 0.9, 0.95, 1.0])
    assert [len(a.configs(base)) for a in (main, scal, fine)] == [32, 6, 6]


def test_config_ids_distinguish_configs():
    a = ExperimentConfig(noise=0.1, **SMALL)
    assert a.config_id == ExperimentConfig(noise=0.1, **SMALL).config_id
    assert a.config_id != ExperimentConfig(noise=0.2, **SMALL).config_id
    assert a.config_id == ExperimentConfig(noise=0.1, seeds=(1,), **SMALL).config_id


def test_sweep_failures_are_isolated():
    base = ExperimentConfig(policy="trust-all", **SMALL)
    out = run_sweep(base, SweepAxes(frac_reliable=[0.05, 1.0], seeds=[0, 1]))
    assert len(out.results) == 2 and len(out.failures) == 2
    assert all(f.config.frac_reliable == 0.05 for f in out.failures)
    assert "no reliable agents" in out.failures[0].error


def test_worker_count_does_not_change_results():
    base = ExperimentConfig(**SMALL)
    configs = SweepAxes(policy=["rltc", "trust-all"], failure_model=list(FailureModel), seeds=[4, 5]).configs(base)
    serial = run_configs(configs, workers=1)
    parallel = run_configs(configs, workers=2)
    assert len(serial.results) == len(parallel.results) == 8
    assert all(a.same_numbers(b) and a.config == b.config for a, b in zip(serial.results, parallel.results))


def _fake(value):
    from rltc.harness import RunResult

    s = MetricSample(value, 1, 1, 1, 0)
    return RunResult(ExperimentConfig(**SMALL), 0, np.ones(9, bool), s, s)


def test_aggregate():
    mean, std = aggregate([_fake(1.0)] * 3)
    assert (mean.success_rate, std.success_rate) == (1.0, 0.0)
    mean, std = aggregate([_fake(0.4), _fake(0.6)])
    assert mean.success_rate == pytest.approx(0.5)
    assert std.success_rate == pytest.approx(math.sqrt(0.02))
    assert std.success_rate == pytest.approx(0.1414, abs=1e-4)
    assert aggregate([_fake(0.3)])[1].success_rate == 0.0
    with pytest.raises(ValueError):
        aggregate([])


def test_derive_seeds_is_stable():
    assert derive_seeds(7, 5) == derive_seeds(7, 5)
    assert len(set(derive_seeds(7, 30))) == 30
    assert derive_seeds(7, 3) == derive_seeds(7, 5)[:3]
