"""Independent tabular Q-learning over trust-array states."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np
from numba import njit

if TYPE_CHECKING:
    from rltc.engine import Roster
    from rltc.topology import Topology


class DecayGranularity(str, enum.Enum):
    GLOBAL_TIMESTEP = "timestep"
    EPISODE = "episode"


@dataclass(frozen=True)
class LearnerConfig:
    alpha: float = 0.03
    gamma: float = 0.999
    epsilon0: float = 0.3
    decay_r: float = 0.9996
    decay_granularity: DecayGranularity = DecayGranularity.GLOBAL_TIMESTEP

    def __post_init__(self) -> None:
        if not self.alpha > 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if not 0 <= self.gamma < 1:
            raise ValueError(f"gamma must be in [0, 1), got {self.gamma}")
        if not 0 <= self.epsilon0 <= 1:
            raise ValueError(f"epsilon0 must be in [0, 1], got {self.epsilon0}")
        if not 0 < self.decay_r <= 1:
            raise ValueError(f"decay_r must be in (0, 1], got {self.decay_r}")
        object.__setattr__(self, "decay_granularity", DecayGranularity(self.decay_granularity))


class QTable:
    """Per-agent action-value tables indexed by trust bitmask.

    ``values[r, s, a]`` holds Q for the r-th reliable agent (ascending node ID),
    state bitmask ``s`` (bit k = trust toward the k-th neighbor) and action
    index ``a`` (0 is no-op, ``k + 1`` toggles the k-th neighbor). Cells with
    ``s >= 2**deg`` or ``a > deg`` are padding and never read.
    """

    def __init__(self, agent_ids: np.ndarray, degrees: np.ndarray, values: np.ndarray | None = None):
        self.agent_ids = np.asarray(agent_ids, dtype=np.int64)
        self.degrees = np.asarray(degrees, dtype=np.int64)
        max_deg = int(self.degrees.max()) if len(self.degrees) else 0
        shape = (len(self.agent_ids), 1 << max_deg, max_deg + 1)
        if values is None:
            values = np.zeros(shape)
        elif values.shape != shape:
            raise ValueError(f"values shape {values.shape} does not match {shape}")
        self.values = values
        self._row = {int(i): r for r, i in enumerate(self.agent_ids)}

    @classmethod
    def zeros(cls, topology: Topology, roster: Roster) -> QTable:
        ids = roster.reliable_ids
        return cls(ids, topology.degrees[ids - 1])

    def row(self, i: int) -> int:
        try:
            return self._row[i]
        except KeyError:
            raise KeyError(f"node {i} has no Q-table (not a reliable agent)") from None

    def n_actions(self, i: int) -> int:
        return int(self.degrees[self.row(i)]) + 1

    def get(self, i: int, s: int) -> np.ndarray:
        r = self.row(i)
        deg = int(self.degrees[r])
        _check_state(s, deg)
        return self.values[r, s, : deg + 1]

    def greedy_actions(self) -> dict[tuple[int, int], int]:
        return {
            (int(i), s): int(np.argmax(self.get(int(i), s)))
            for i, deg in zip(self.agent_ids, self.degrees)
            for s in range(1 << int(deg))
        }

    def copy(self) -> QTable:
        return QTable(self.agent_ids, self.degrees, self.values.copy())

    def save(self, path: str | Path) -> None:
        """Write one tab-separated record per (agent, state)."""
        lines = ["agent\tstate\tvalues"]
        for r, (i, deg) in enumerate(zip(self.agent_ids, self.degrees)):
            for s in range(1 << int(deg)):
                vals = "\t".join(f"{v:.17g}" for v in self.values[r, s, : deg + 1])
                lines.append(f"{i}\t{s}\t{vals}")
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> QTable:
        records: dict[int, dict[int, list[float]]] = {}
        for line in Path(path).read_text().splitlines()[1:]:
            if not line.strip():
                continue
            agent, state, *vals = line.split("\t")
            records.setdefault(int(agent), {})[int(state)] = [float(v) for v in vals]
        ids = np.array(sorted(records), dtype=np.int64)
        degrees = np.array([len(next(iter(records[i].values()))) - 1 for i in ids], dtype=np.int64)
        table = cls(ids, degrees)
        for r, i in enumerate(ids):
            for s, vals in records[int(i)].items():
                table.values[r, s, : len(vals)] = vals
        return table


def _check_state(s: int, deg: int) -> None:
    if not 0 <= s < (1 << deg):
        raise ValueError(f"state bitmask {s} out of range for degree {deg}")


@njit(cache=True)
def q_update_kernel(q, s, a, reward, s_next, n_actions, alpha, gamma):
    best = q[s_next, 0]
    for b in range(1, n_actions):
        if q[s_next, b] > best:
            best = q[s_next, b]
    q[s, a] += alpha * (reward + gamma * best - q[s, a])


@njit(cache=True)
def select_kernel(q, s, n_actions, epsilon, u_explore, u_action):
    if epsilon > 0.0 and u_explore < epsilon:
        a = int(u_action * n_actions)
        return a if a < n_actions else n_actions - 1
    # first maximum wins: no-op before toggles, lower neighbor IDs first
    best = 0
    for b in range(1, n_actions):
        if q[s, b] > q[s, best]:
            best = b
    return best


def q_update(
    table: QTable, i: int, s_t: int, a_t: int, reward: float, s_next: int, cfg: LearnerConfig
) -> QTable:
    """Apply one Q-learning step to agent ``i``'s table in place and return it."""
    r = table.row(i)
    deg = int(table.degrees[r])
    if not 0 <= a_t <= deg:
        raise ValueError(f"action index {a_t} out of range for agent {i} with {deg + 1} actions")
    _check_state(s_t, deg)
    _check_state(s_next, deg)
    q_update_kernel(table.values[r], s_t, a_t, float(reward), s_next, deg + 1, cfg.alpha, cfg.gamma)
    return table


def epsilon_at(step: int, cfg: LearnerConfig) -> float:
    if step < 0:
        raise ValueError("step must be nonnegative")
    return cfg.epsilon0 * cfg.decay_r**step


def select_action(
    table: QTable, i: int, s: int, epsilon: float, rng: np.random.Generator
) -> int:
    """Epsilon-greedy action index for agent ``i`` in state ``s``.

    Two uniforms are drawn (explore test, then random action) whenever
    ``epsilon > 0``; a greedy call consumes nothing from ``rng``.
    """
    r = table.row(i)
    deg = int(table.degrees[r])
    _check_state(s, deg)
    if epsilon > 0:
        u_explore, u_action = rng.random(2)
    else:
        u_explore = u_action = 1.0
    return int(select_kernel(table.values[r], s, deg + 1, float(epsilon), u_explore, u_action))
