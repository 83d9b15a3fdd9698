"""Per-timestep performance metrics, computed over reliable agents only."""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import TYPE_CHECKING, Sequence

import numpy as np
from numba import njit

if TYPE_CHECKING:
    from rltc.engine import Roster, SimState
    from rltc.topology import Topology

METRIC_NAMES = ("success_rate", "avg_trust_rate", "mutual_trust_rate", "avg_trust_accuracy", "avg_reward")
TRUE_VALUE = 1


@dataclass(frozen=True)
class MetricSample:
    success_rate: float
    avg_trust_rate: float
    mutual_trust_rate: float
    avg_trust_accuracy: float
    avg_reward: float = 0.0

    @classmethod
    def from_array(cls, arr: Sequence[float]) -> MetricSample:
        return cls(*(float(x) for x in arr))

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, f.name) for f in fields(self)])


@dataclass(frozen=True)
class EpisodeMetrics:
    samples: np.ndarray  # (T, 5), columns in METRIC_NAMES order
    mean: MetricSample

    @classmethod
    def from_samples(cls, samples: np.ndarray) -> EpisodeMetrics:
        if len(samples) == 0:
            raise ValueError("an episode needs at least one metric sample")
        return cls(samples, MetricSample.from_array(samples.mean(axis=0)))


def _require_agents(roster: Roster) -> None:
    if roster.reliable_count < 1:
        raise ValueError("metrics need at least one reliable agent")


@njit(cache=True)
def success_kernel(values, agent_nodes):
    hits = 0
    for r in range(agent_nodes.shape[0]):
        if values[agent_nodes[r]] == 1:
            hits += 1
    return hits / agent_nodes.shape[0]


@njit(cache=True)
def trust_rate_kernel(trust, agent_deg):
    total = 0.0
    for r in range(agent_deg.shape[0]):
        k = 0
        for c in range(agent_deg[r]):
            k += trust[r, c]
        total += k / agent_deg[r]
    return total / agent_deg.shape[0]


@njit(cache=True)
def mutual_kernel(trust, rr_edges):
    n = rr_edges.shape[0]
    if n == 0:
        return 0.0
    hits = 0
    for e in range(n):
        if trust[rr_edges[e, 0], rr_edges[e, 1]] == 1 and trust[rr_edges[e, 2], rr_edges[e, 3]] == 1:
            hits += 1
    return hits / n


@njit(cache=True)
def accuracy_kernel(trust, agent_deg, nbr_reliable):
    total = 0.0
    for r in range(agent_deg.shape[0]):
        k = 0
        for c in range(agent_deg[r]):
            if trust[r, c] == nbr_reliable[r, c]:
                k += 1
        total += k / agent_deg[r]
    return total / agent_deg.shape[0]


@njit(cache=True)
def sample_kernel(values, trust, agent_nodes, agent_deg, nbr_reliable, rr_edges, rewards, out):
    out[0] = success_kernel(values, agent_nodes)
    out[1] = trust_rate_kernel(trust, agent_deg)
    out[2] = mutual_kernel(trust, rr_edges)
    out[3] = accuracy_kernel(trust, agent_deg, nbr_reliable)
    out[4] = rewards.sum() / rewards.shape[0]


def success_rate(state: SimState, roster: Roster) -> float:
    """Fraction of reliable agents currently holding the true value 1."""
    _require_agents(roster)
    return float(success_kernel(state.values, roster.agent_nodes))


def avg_trust_rate(state: SimState, topology: Topology, roster: Roster) -> float:
    _require_agents(roster)
    return float(trust_rate_kernel(state.trusts, roster.agent_degrees))


def mutual_trust_rate(state: SimState, topology: Topology, roster: Roster) -> float:
    """Share of reliable-reliable edges trusted in both directions (0 if none)."""
    return float(mutual_kernel(state.trusts, roster.rr_edges))


def avg_trust_accuracy(state: SimState, topology: Topology, roster: Roster) -> float:
    _require_agents(roster)
    return float(accuracy_kernel(state.trusts, roster.agent_degrees, roster.neighbor_reliable))


def episode_mean(samples: Sequence[MetricSample]) -> MetricSample:
    if not samples:
        raise ValueError("episode_mean needs at least one sample")
    return MetricSample.from_array(np.mean([s.as_array() for s in samples], axis=0))
