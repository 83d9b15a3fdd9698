import numpy as np
import pytest
from hypothesis import given, strategies as st

from rltc.engine import Roster, SimState
from rltc.metrics import (
    MetricSample,
    avg_trust_accuracy,
    avg_trust_rate,
    episode_mean,
    mutual_trust_rate,
    success_rate,
)
from rltc.policy import PolicyKind, initial_trust
from rltc.topology import build_custom, build_grid


def state_for(roster, values, trusts=None):
    if trusts is None:
        trusts = initial_trust(PolicyKind.TRUST_ALL, roster.topology, roster)
    return SimState(np.asarray(values, dtype=np.int8), np.asarray(trusts, dtype=np.uint8))


def test_success_rate_counts_reliable_only():
    t = build_grid(4)
    roster = Roster.from_unreliable(t, [1, 6, 11, 16])
    values = np.zeros(16, dtype=np.int8)
    values[roster.agent_nodes[:9]] = 1
    assert success_rate(state_for(roster, values), roster) == 0.75
    values[[0, 5]] = 1  # unreliable nodes do not count
    assert success_rate(state_for(roster, values), roster) == 0.75


def test_success_rate_extremes():
    t = build_grid(3)
    roster = Roster(t, np.ones(9, dtype=bool))
    assert success_rate(state_for(roster, np.ones(9)), roster) == 1.0
    assert success_rate(state_for(roster, np.zeros(9)), roster) == 0.0


def test_empty_reliable_set_rejected():
    t = build_custom([(1, 2)], 2)
    roster = Roster(t, np.zeros(2, dtype=bool))
    state = SimState(np.zeros(2, dtype=np.int8), np.zeros((0, 1), dtype=np.uint8))
    with pytest.raises(ValueError):
        success_rate(state, roster)
    with pytest.raises(ValueError):
        avg_trust_rate(state, t, roster)


def test_avg_trust_rate_hand_case():
    # 4-cycle; agents 1 and 2 both have degree 2
    t = build_custom([(1, 2), (2, 3), (3, 4), (4, 1)], 4)
    roster = Roster.from_unreliable(t, [3, 4])
    state = state_for(roster, np.ones(4), [[1, 0], [1, 1]])
    assert avg_trust_rate(state, t, roster) == 0.75
    assert avg_trust_rate(state_for(roster, np.ones(4), [[0, 0], [0, 0]]), t, roster) == 0.0


def test_mutual_trust():
    t = build_custom([(1, 2)], 2)
    both = Roster(t, np.ones(2, dtype=bool))
    assert mutual_trust_rate(state_for(both, [1, 1], [[1], [0]]), t, both) == 0.0
    assert mutual_trust_rate(state_for(both, [1, 1]), t, both) == 1.0
    # reliable agents 1 and 3 on a path are never adjacent
    path = build_custom([(1, 2), (2, 3)], 3)
    apart = Roster.from_unreliable(path, [2])
    assert mutual_trust_rate(state_for(apart, [1, 0, 1]), path, apart) == 0.0


def test_trust_accuracy():
    t = build_custom([(1, 2), (1, 3)], 3)
    roster = Roster.from_unreliable(t, [3])
    # node 1 trusts reliable 2 and unreliable 3; node 2 trusts reliable 1
    state = state_for(roster, np.ones(3), [[1, 1], [1, 0]])
    per_agent = [0.5, 1.0]
    assert avg_trust_accuracy(state, t, roster) == pytest.approx(np.mean(per_agent))
    oracle = state_for(roster, np.ones(3), initial_trust(PolicyKind.ORACLE, t, roster))
    assert avg_trust_accuracy(oracle, t, roster) == 1.0
    full = Roster(t, np.ones(3, dtype=bool))
    assert avg_trust_accuracy(state_for(full, np.ones(3)), t, full) == 1.0


def test_episode_mean():
    s = MetricSample(0.25, 0.5, 0.75, 1.0, -1.0)
    assert episode_mean([s, s, s]) == s
    geo = [MetricSample(0.5**t, 1, 1, 1, -1) for t in range(1, 31)]
    assert episode_mean(geo).success_rate == pytest.approx((1 - 2.0**-30) / 30, abs=1e-15)
    assert episode_mean([MetricSample(0, 0, 0, 0), MetricSample(1, 1, 1, 1)]).success_rate == 0.5
    with pytest.raises(ValueError):
        episode_mean([])


@given(st.data())
def test_rates_in_unit_interval(data):
    d = data.draw(st.integers(2, 5))
    t = build_grid(d)
    flags = np.array(data.draw(st.lists(st.booleans(), min_size=d * d, max_size=d * d)))
    if not flags.any():
        flags[0] = True
    roster = Roster(t, flags)
    values = np.array(data.draw(st.lists(st.integers(0, 1), min_size=d * d, max_size=d * d)))
    trusts = initial_trust(PolicyKind.TRUST_ALL, t, roster)
    noise = np.array(data.draw(st.lists(st.integers(0, 1), min_size=trusts.size, max_size=trusts.size)))
    trusts = trusts & noise.reshape(trusts.shape).astype(np.uint8)
    state = state_for(roster, values, trusts)
    rates = [success_rate(state, roster), avg_trust_rate(state, t, roster),
             mutual_trust_rate(state, t, roster), avg_trust_accuracy(state, t, roster)]
    assert all(0.0 <= r <= 1.0 for r in rates)
    # success ignores unreliable values
    flipped = values.copy()
    flipped[~flags] ^= 1
    assert success_rate(state_for(roster, flipped, trusts), roster) == rates[0]


@given(st.integers(2, 6), st.randoms(use_true_random=False))
def test_full_trust_identities(d, rnd):
    t = build_grid(d)
    flags = np.array([rnd.random() < 0.7 for _ in range(d * d)])
    flags[0] = True
    roster = Roster(t, flags)
    state = state_for(roster, np.ones(d * d))
    assert avg_trust_rate(state, t, roster) == 1.0
    expected = 1.0 if len(roster.rr_edges) else 0.0
    assert mutual_trust_rate(state, t, roster) == expected
