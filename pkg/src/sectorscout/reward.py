"""Per-agent reward for one synchronous decision epoch.

r = r_o + 0.3 * r_h + r_t + r_f, with r_o the agent's observable pre-move
frontiers from its arrival pose, r_h the cosine alignment between the
arrival heading and the path toward the nearest frontier, r_t the team
union of observed frontiers (shared by all agents) and r_f a +10 bonus
the epoch the summed node utility reaches zero.  r_o and r_t are
normalized by the sector-footprint cell count and clamped to 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import frontier as frontier_mod
from .world import AgentPose, Belief, SensorSpec

HEADING_WEIGHT = 0.3
COMPLETION_BONUS = 10.0


@dataclass(frozen=True)
class RewardBreakdown:
    r_o: float
    r_h: float
    r_t: float
    r_f: float
    total: float

    @classmethod
    def build(cls, r_o: float, r_h: float, r_t: float, r_f: float) -> "RewardBreakdown":
        return cls(r_o, r_h, r_t, r_f, r_o + HEADING_WEIGHT * r_h + r_t + r_f)


def heading_alignment(heading: float, path_points: list[tuple[float, float]] | None) -> float:
    """cos(angle between heading and the first path segment); 0 without a path."""
    if not path_points or len(path_points) < 2:
        return 0.0
    dx = path_points[1][0] - path_points[0][0]
    dy = path_points[1][1] - path_points[0][1]
    d = math.hypot(dx, dy)
    if d == 0.0:
        return 0.0
    return (math.cos(heading) * dx + math.sin(heading) * dy) / d


def compute_reward(pre_belief: Belief, pre_frontiers: np.ndarray,
                   agent_arrival: AgentPose, team_arrivals: list[AgentPose],
                   guidepost_path: list[tuple[float, float]] | None,
                   sensor: SensorSpec, utility_exhausted: bool) -> RewardBreakdown:
    """Reward for one agent given every agent's arrival pose this epoch.

    pre_belief/pre_frontiers are the belief state when the epoch started;
    guidepost_path is the point sequence of the agent's A* path toward its
    nearest frontier (ending at the frontier cell center) or None.
    """
    n_max = frontier_mod.max_observable(sensor, pre_belief.resolution)
    own = frontier_mod.observable_frontier_cells(
        pre_belief, pre_frontiers, (agent_arrival.x, agent_arrival.y),
        agent_arrival.heading, sensor)
    r_o = min(own.size / n_max, 1.0)

    team: set[int] = set()
    for pose in team_arrivals:
        seen = frontier_mod.observable_frontier_cells(
            pre_belief, pre_frontiers, (pose.x, pose.y), pose.heading, sensor)
        team.update(int(c) for c in seen)
    r_t = min(len(team) / n_max, 1.0)

    r_h = heading_alignment(agent_arrival.heading, guidepost_path)
    r_f = COMPLETION_BONUS if utility_exhausted else 0.0
    return RewardBreakdown.build(r_o, r_h, r_t, r_f)
