"""Episode execution for the trust-filtered voter-model consensus protocol.

Each timestep runs, in order: receive from trusted neighbors, simultaneous
value update, reward, action selection, trust toggle, optional Q-update, and
metric recording.

Random draws are consumed in a fixed layout so that runs are bit-exact given
the generator state:

* initialization: one uniform per node, ascending node ID;
* value update: one uniform per node per timestep, ascending node ID
  (AlwaysZero nodes draw and discard theirs);
* action selection: for RLTC with epsilon > 0 at that timestep, two uniforms
  per reliable agent (explore test, random action), ascending agent ID.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np
from numba import njit

from rltc.learning import LearnerConfig, QTable, q_update_kernel, select_kernel
from rltc.metrics import EpisodeMetrics, sample_kernel
from rltc.policy import PolicyKind, action_to_index, index_to_action, initial_trust
from rltc.topology import Topology


class FailureModel(str, enum.Enum):
    ALWAYS_ZERO = "always-zero"
    RANDOM_FLIP = "random-flip"


def round_half_up(x: float) -> int:
    return int(Decimal(repr(x)).quantize(Decimal(1), rounding=ROUND_HALF_UP))


def reliable_count_for(f: float, n: int) -> int:
    return round_half_up(float(Decimal(repr(f)) * n))


@dataclass(frozen=True, eq=False)
class Roster:
    """Reliability flag per node, bound to the topology it was drawn for."""

    topology: Topology
    reliable: np.ndarray  # (N,) bool

    def __post_init__(self) -> None:
        flags = np.asarray(self.reliable, dtype=bool)
        if flags.shape != (self.topology.node_count,):
            raise ValueError("need exactly one reliability flag per node")
        object.__setattr__(self, "reliable", flags)

    @classmethod
    def from_unreliable(cls, topology: Topology, unreliable: Sequence[int]) -> Roster:
        flags = np.ones(topology.node_count, dtype=bool)
        flags[np.asarray(list(unreliable), dtype=np.int64) - 1] = False
        return cls(topology, flags)

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, Roster)
            and self.topology == other.topology
            and np.array_equal(self.reliable, other.reliable)
        )

    @property
    def reliable_count(self) -> int:
        return int(self.reliable.sum())

    def is_reliable(self, i: int) -> bool:
        return bool(self.reliable[i - 1])

    @cached_property
    def reliable_ids(self) -> np.ndarray:
        """1-based IDs of reliable nodes, ascending."""
        return np.flatnonzero(self.reliable) + 1

    @cached_property
    def agent_nodes(self) -> np.ndarray:
        return self.reliable_ids - 1

    @cached_property
    def agent_index(self) -> np.ndarray:
        """Node (0-based) to agent row, or -1 for unreliable nodes."""
        idx = np.full(self.topology.node_count, -1, dtype=np.int64)
        idx[self.agent_nodes] = np.arange(len(self.agent_nodes))
        return idx

    @cached_property
    def agent_degrees(self) -> np.ndarray:
        return self.topology.degrees[self.agent_nodes]

    @cached_property
    def neighbor_reliable(self) -> np.ndarray:
        nbr = self.topology.neighbor_array[self.agent_nodes]
        flags = np.where(nbr >= 0, self.reliable[np.maximum(nbr, 0)], False)
        return flags.astype(np.uint8)

    @cached_property
    def rr_edges(self) -> np.ndarray:
        """Reliable-reliable edges as rows (r_i, pos of j in i, r_j, pos of i in j)."""
        rows = []
        for i in self.reliable_ids:
            for k, j in enumerate(self.topology.ne(int(i))):
                if i < j and self.reliable[j - 1]:
                    rows.append((self.agent_index[i - 1], k, self.agent_index[j - 1], self.topology.ne(j).index(i)))
        return np.array(rows, dtype=np.int64).reshape(-1, 4)


@dataclass
class SimState:
    values: np.ndarray  # (N,) int8, one bit per node
    trusts: np.ndarray  # (R, max_degree) uint8, row r for the r-th reliable agent
    timestep: int = 0

    def copy(self) -> SimState:
        return SimState(self.values.copy(), self.trusts.copy(), self.timestep)

    def trust_bits(self, roster: Roster, i: int) -> tuple[int, ...]:
        r = roster.agent_index[i - 1]
        if r < 0:
            raise ValueError(f"node {i} is unreliable and has no trust array")
        return tuple(int(b) for b in self.trusts[r, : roster.topology.degree(i)])

    def trust_mask(self, roster: Roster, i: int) -> int:
        return bits_to_mask(self.trust_bits(roster, i))


def bits_to_mask(bits: Sequence[int]) -> int:
    return sum(int(b) << k for k, b in enumerate(bits))


def mask_to_bits(mask: int, degree: int) -> tuple[int, ...]:
    return tuple((mask >> k) & 1 for k in range(degree))


# --- kernels shared by the step-wise API and the compiled episode loop ---


@njit(cache=True)
def failure_value(always_zero, u):
    if always_zero:
        return 0
    return 1 if u < 0.5 else 0


@njit(cache=True)
def init_values_kernel(values, is_reliable, always_zero, p, draws):
    for i in range(values.shape[0]):
        if is_reliable[i]:
            values[i] = 1 if draws[i] < p else 0
        else:
            values[i] = failure_value(always_zero, draws[i])


@njit(cache=True)
def gather_buffer(values, nbr_row, deg, trust_row, out):
    k = 0
    for c in range(deg):
        if trust_row[c] == 1:
            out[k] = values[nbr_row[c]]
            k += 1
    return k


@njit(cache=True)
def sample_multiset(own, buf, k, u):
    # slot 0 is the agent's own value, slots 1..k the trusted neighbors
    idx = int(u * (k + 1))
    if idx > k:
        idx = k
    return own if idx == 0 else buf[idx - 1]


@njit(cache=True)
def reward_kernel(values, node, nbr_row, deg):
    if values[node] != 1:
        return -1.0
    for c in range(deg):
        if values[nbr_row[c]] != 1:
            return -1.0
    return 1.0


@njit(cache=True)
def trust_mask_kernel(trust_row, deg):
    s = 0
    for c in range(deg):
        s |= trust_row[c] << c
    return s


@njit(cache=True)
def episode_kernel(
    nbr, is_reliable, agent_nodes, agent_index, agent_deg, nbr_reliable, rr_edges,
    always_zero, p, values, trust, q, rltc, learn, eps, alpha, gamma, draws, samples,
):
    n = values.shape[0]
    n_agents = agent_nodes.shape[0]
    horizon = eps.shape[0]
    snapshot = np.empty_like(values)
    buf = np.empty(nbr.shape[1], dtype=values.dtype)
    rewards = np.empty(n_agents)
    states = np.empty(n_agents, dtype=np.int64)
    actions = np.empty(n_agents, dtype=np.int64)

    init_values_kernel(values, is_reliable, always_zero, p, draws[:n])
    cursor = n
    for t in range(horizon):
        snapshot[:] = values
        for i in range(n):
            u = draws[cursor]
            cursor += 1
            if is_reliable[i]:
                r = agent_index[i]
                k = gather_buffer(snapshot, nbr[i], agent_deg[r], trust[r], buf)
                values[i] = sample_multiset(snapshot[i], buf, k, u)
            else:
                values[i] = failure_value(always_zero, u)

        for r in range(n_agents):
            rewards[r] = reward_kernel(values, agent_nodes[r], nbr[agent_nodes[r]], agent_deg[r])

        explore = rltc and eps[t] > 0.0
        for r in range(n_agents):
            states[r] = trust_mask_kernel(trust[r], agent_deg[r])
            if rltc:
                u_explore = 1.0
                u_action = 1.0
                if explore:
                    u_explore = draws[cursor]
                    u_action = draws[cursor + 1]
                    cursor += 2
                actions[r] = select_kernel(q[r], states[r], agent_deg[r] + 1, eps[t], u_explore, u_action)
            else:
                actions[r] = 0

        for r in range(n_agents):
            if actions[r] > 0:
                trust[r, actions[r] - 1] ^= 1

        if learn:
            for r in range(n_agents):
                s_next = trust_mask_kernel(trust[r], agent_deg[r])
                q_update_kernel(q[r], states[r], actions[r], rewards[r], s_next, agent_deg[r] + 1, alpha, gamma)

        sample_kernel(values, trust, agent_nodes, agent_deg, nbr_reliable, rr_edges, rewards, samples[t])
    return cursor


# --- public step-wise API ---


def assign_roster(topology: Topology, f: float, rng: np.random.Generator) -> Roster:
    """Place ``round_half_up(f * N)`` reliable nodes uniformly at random."""
    if not 0 <= f <= 1:
        raise ValueError(f"reliable fraction must be in [0, 1], got {f}")
    n = topology.node_count
    chosen = rng.choice(n, size=reliable_count_for(f, n), replace=False)
    flags = np.zeros(n, dtype=bool)
    flags[chosen] = True
    return Roster(topology, flags)


def init_episode(
    topology: Topology,
    roster: Roster,
    p: float,
    failure: FailureModel,
    rng: np.random.Generator,
    policy: PolicyKind = PolicyKind.TRUST_ALL,
) -> SimState:
    if not 0 <= p <= 1:
        raise ValueError(f"p must be in [0, 1], got {p}")
    values = np.empty(topology.node_count, dtype=np.int8)
    init_values_kernel(values, roster.reliable, FailureModel(failure) is FailureModel.ALWAYS_ZERO, p, rng.random(topology.node_count))
    return SimState(values, initial_trust(policy, topology, roster), 0)


def receive_phase(state: SimState, topology: Topology, roster: Roster) -> dict[int, list[int]]:
    """Values each reliable agent hears from its trusted neighbors this round."""
    nbr = topology.neighbor_array
    buffers = {}
    buf = np.empty(max(topology.max_degree, 1), dtype=state.values.dtype)
    for r, node in enumerate(roster.agent_nodes):
        k = gather_buffer(state.values, nbr[node], roster.agent_degrees[r], state.trusts[r], buf)
        buffers[int(node) + 1] = [int(v) for v in buf[:k]]
    return buffers


def value_update_phase(
    state: SimState,
    buffers: Mapping[int, Sequence[int]],
    roster: Roster,
    failure: FailureModel,
    rng: np.random.Generator,
) -> np.ndarray:
    """New value vector; every node samples against the same pre-phase snapshot."""
    always_zero = FailureModel(failure) is FailureModel.ALWAYS_ZERO
    draws = rng.random(len(state.values))
    new = np.empty_like(state.values)
    for i in range(len(state.values)):
        if roster.reliable[i]:
            buf = np.asarray(buffers.get(i + 1, ()), dtype=state.values.dtype)
            new[i] = sample_multiset(state.values[i], buf, len(buf), draws[i])
        else:
            new[i] = failure_value(always_zero, draws[i])
    return new


def compute_reward(state: SimState, topology: Topology, roster: Roster, i: int) -> int:
    """+1 if ``i`` and every graph neighbor hold 1, else -1."""
    if not roster.is_reliable(i):
        raise ValueError(f"node {i} is unreliable and receives no reward")
    return int(reward_kernel(state.values, i - 1, topology.neighbor_array[i - 1], topology.degree(i)))


def trust_update_phase(
    state: SimState, topology: Topology, roster: Roster, actions: Mapping[int, int | None]
) -> np.ndarray:
    """Apply one toggle (or no-op) per agent; returns the new trust array."""
    trusts = state.trusts.copy()
    for i, action in actions.items():
        r = roster.agent_index[i - 1]
        if r < 0:
            raise ValueError(f"node {i} is unreliable and cannot act")
        idx = action_to_index(topology, i, action)
        if idx:
            trusts[r, idx - 1] ^= 1
    return trusts


@dataclass
class EpisodeResult:
    metrics: EpisodeMetrics
    state: SimState
    draws_used: int = field(default=0, repr=False)


def run_episode(
    topology: Topology,
    roster: Roster,
    failure: FailureModel,
    policy: PolicyKind,
    rng: np.random.Generator,
    *,
    horizon: int = 30,
    p: float = 1.0,
    qtable: QTable | None = None,
    learner: LearnerConfig | None = None,
    epsilon: float | Sequence[float] = 0.0,
) -> EpisodeResult:
    """Run one episode of ``horizon`` timesteps.

    ``epsilon`` is either a constant or one value per timestep. Passing a
    ``learner`` enables in-place Q-updates on ``qtable``.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if not 0 <= p <= 1:
        raise ValueError(f"p must be in [0, 1], got {p}")
    if roster.reliable_count < 1:
        raise ValueError("an episode needs at least one reliable agent")
    policy = PolicyKind(policy)
    rltc = policy is PolicyKind.RLTC
    if rltc and qtable is None:
        raise ValueError("RLTC episodes need a Q-table")
    if learner is not None and not rltc:
        raise ValueError("only RLTC agents learn")

    eps = np.broadcast_to(np.asarray(epsilon, dtype=np.float64), (horizon,)).copy()
    n = topology.node_count
    n_agents = roster.reliable_count
    n_draws = n + horizon * n + (2 * n_agents * int(np.count_nonzero(eps > 0)) if rltc else 0)
    draws = rng.random(n_draws)

    values = np.empty(n, dtype=np.int8)
    trust = initial_trust(policy, topology, roster)
    q = qtable.values if rltc else np.zeros((n_agents, 1, 1))
    samples = np.empty((horizon, 5))
    used = episode_kernel(
        topology.neighbor_array, roster.reliable, roster.agent_nodes, roster.agent_index,
        roster.agent_degrees, roster.neighbor_reliable, roster.rr_edges,
        FailureModel(failure) is FailureModel.ALWAYS_ZERO, float(p), values, trust, q,
        rltc, learner is not None, eps,
        learner.alpha if learner else 0.0, learner.gamma if learner else 0.0,
        draws, samples,
    )
    return EpisodeResult(EpisodeMetrics.from_samples(samples), SimState(values, trust, horizon), used)
