"""Exact expected success curves for small graphs.

The joint value vector is tracked as a full distribution over ``{0,1}^N``
(bit ``i - 1`` of the configuration index is node ``i``'s value). Given the
previous configuration, nodes update independently, so each step builds the
product distribution per source configuration instead of a dense
``2^N x 2^N`` transition matrix.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from rltc.engine import FailureModel, Roster, trust_mask_kernel
from rltc.learning import QTable, select_kernel
from rltc.policy import PolicyKind, initial_trust
from rltc.topology import Topology

MAX_NODES = 14
_CHUNK_CELLS = 1 << 22

# A trust schedule is a sequence of length T; element t-1 holds the trust
# array in force during timestep t, shape (R, max_degree) like SimState.trusts.
TrustSchedule = Sequence[np.ndarray]


def _check_size(topology: Topology) -> None:
    if topology.node_count > MAX_NODES:
        raise ValueError(f"exact oracle supports at most {MAX_NODES} nodes, got {topology.node_count}")


def _configs(n: int) -> np.ndarray:
    """(2^n, n) bit matrix of every configuration."""
    idx = np.arange(1 << n)
    return ((idx[:, None] >> np.arange(n)[None, :]) & 1).astype(np.float64)


def _product(q: np.ndarray) -> np.ndarray:
    """Rows of independent Bernoulli(q) products, shape (C, 2^n)."""
    out = np.ones((q.shape[0], 1))
    for i in range(q.shape[1]):
        qi = q[:, i : i + 1]
        out = np.concatenate([out * (1.0 - qi), out * qi], axis=1)
    return out


def initial_distribution(topology: Topology, roster: Roster, p: float, failure: FailureModel) -> np.ndarray:
    _check_size(topology)
    if not 0 <= p <= 1:
        raise ValueError(f"p must be in [0, 1], got {p}")
    q = np.where(roster.reliable, p, _unreliable_prob(failure))
    return _product(q[None, :])[0]


def _unreliable_prob(failure: FailureModel) -> float:
    return 0.0 if FailureModel(failure) is FailureModel.ALWAYS_ZERO else 0.5


def _one_probs(configs: np.ndarray, topology: Topology, roster: Roster, failure: FailureModel, trusts: np.ndarray) -> np.ndarray:
    """Per source configuration, the probability each node holds 1 next step."""
    q = np.full(configs.shape, _unreliable_prob(failure))
    for r, node in enumerate(roster.agent_nodes):
        deg = roster.agent_degrees[r]
        trusted = topology.neighbor_array[node, :deg][trusts[r, :deg] == 1]
        q[:, node] = (configs[:, node] + configs[:, trusted].sum(axis=1)) / (1 + len(trusted))
    return q


def step_distribution(
    dist: np.ndarray, topology: Topology, roster: Roster, failure: FailureModel, trusts: np.ndarray
) -> np.ndarray:
    """Advance the joint value distribution by one lock-step round."""
    n = topology.node_count
    _check_size(topology)
    support = np.flatnonzero(dist)
    out = np.zeros_like(dist)
    chunk = max(1, _CHUNK_CELLS >> n)
    for start in range(0, len(support), chunk):
        src = support[start : start + chunk]
        configs = ((src[:, None] >> np.arange(n)[None, :]) & 1).astype(np.float64)
        q = _one_probs(configs, topology, roster, failure, trusts)
        out += dist[src] @ _product(q)
    return out


def marginals(dist: np.ndarray, n: int) -> np.ndarray:
    """P(v_i = 1) for each node."""
    return dist @ _configs(n)


def expected_success_curve(
    topology: Topology,
    roster: Roster,
    p: float,
    failure: FailureModel,
    schedule: TrustSchedule,
    horizon: int,
) -> np.ndarray:
    """E[success rate] at timesteps 1..horizon under a fixed trust schedule."""
    _check_size(topology)
    if len(schedule) < horizon:
        raise ValueError(f"schedule covers {len(schedule)} timesteps, need {horizon}")
    if roster.reliable_count < 1:
        raise ValueError("success rate needs at least one reliable agent")
    n = topology.node_count
    configs = _configs(n)
    dist = initial_distribution(topology, roster, p, failure)
    curve = np.empty(horizon)
    for t in range(horizon):
        dist = step_distribution(dist, topology, roster, failure, np.asarray(schedule[t]))
        curve[t] = (dist @ configs[:, roster.agent_nodes]).mean()
    return curve


def constant_schedule(trusts: np.ndarray, horizon: int) -> list[np.ndarray]:
    return [trusts] * horizon


def greedy_schedule(
    topology: Topology, roster: Roster, policy: PolicyKind, qtable: QTable | None, horizon: int
) -> list[np.ndarray]:
    """Trust arrays in force at timesteps 1..horizon under a frozen greedy policy.

    Greedy actions depend only on the trust state, so the trajectory is the
    same in every evaluation episode.
    """
    policy = PolicyKind(policy)
    trust = initial_trust(policy, topology, roster)
    schedule = []
    for _ in range(horizon):
        schedule.append(trust.copy())
        if policy is not PolicyKind.RLTC:
            continue
        for r, deg in enumerate(roster.agent_degrees):
            s = trust_mask_kernel(trust[r], deg)
            a = select_kernel(qtable.values[r], s, deg + 1, 0.0, 1.0, 1.0)
            if a:
                trust[r, a - 1] ^= 1
    return schedule
