"""The three agent behaviors: learned trust (RLTC) and the two fixed baselines.

Baselines are a trust-array override plus a constant no-op policy, so one
episode loop serves every condition.
"""

from __future__ import annotations

import enum
from typing import TYPE_CHECKING

import numpy as np

from rltc.learning import QTable, select_action

if TYPE_CHECKING:
    from rltc.engine import Roster
    from rltc.topology import Topology


class PolicyKind(str, enum.Enum):
    RLTC = "rltc"
    TRUST_ALL = "trust-all"
    ORACLE = "oracle"


def initial_trust(kind: PolicyKind, topology: Topology, roster: Roster) -> np.ndarray:
    """Trust arrays at t=0, one row per reliable agent, padded with zeros."""
    kind = PolicyKind(kind)
    deg = roster.agent_degrees
    width = topology.max_degree
    mask = (np.arange(width)[None, :] < deg[:, None]).astype(np.uint8)
    if kind is PolicyKind.ORACLE:
        return mask & roster.neighbor_reliable
    return mask


def action_to_index(topology: Topology, i: int, action: int | None) -> int:
    if action is None:
        return 0
    try:
        return topology.ne(i).index(action) + 1
    except ValueError:
        raise ValueError(f"node {action} is not a neighbor of {i}") from None


def index_to_action(topology: Topology, i: int, index: int) -> int | None:
    return None if index == 0 else topology.ne(i)[index - 1]


def act(
    kind: PolicyKind,
    topology: Topology,
    qtable: QTable | None,
    i: int,
    s: int,
    epsilon: float,
    rng: np.random.Generator,
) -> int | None:
    """Neighbor ID to toggle, or ``None`` for the no-op."""
    kind = PolicyKind(kind)
    if kind is not PolicyKind.RLTC:
        return None
    if qtable is None:
        raise ValueError("RLTC policy needs a Q-table")
    return index_to_action(topology, i, select_action(qtable, i, s, epsilon, rng))
