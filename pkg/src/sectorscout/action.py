"""Information-driven action construction, conflict rerouting and motion.

An action pairs a neighboring graph node with a heading drawn from the 36
bin centers.  Per neighbor, the x highest observable-frontier headings are
kept (x = 3); neighbors with no observable frontiers anywhere fall back to
a single heading derived from the agent's current path to its nearest
frontier.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import geometry
from .graph import ViewGraph

PRUNE_X = 3
LINEAR_SPEED = 1.0            # m/s
MAX_YAW_RATE = math.radians(35.0)  # rad/s
MOTION_TICK = 0.1             # s


class ActionSpaceError(RuntimeError):
    pass


@dataclass(frozen=True)
class ActionPair:
    """Joint (next viewpoint, heading) action."""

    target_node: int
    heading: float
    heading_bin: int = -1  # -1 for continuous (baseline) headings


@dataclass
class MotionState:
    x: float
    y: float
    heading: float
    linear_speed: float = LINEAR_SPEED
    max_yaw_rate: float = MAX_YAW_RATE


def _direction_bin(dx: float, dy: float) -> int:
    """Nearest 10-degree bin to the direction of (dx, dy); (0,0) -> bin 0."""
    if dx == 0.0 and dy == 0.0:
        return 0
    return geometry.nearest_bin(math.atan2(dy, dx))


def _fallback_bin(graph: ViewGraph, v: int, path: list[int],
                  goal_xy: tuple[float, float] | None) -> int:
    """Path-derived heading when a neighbor observes no frontiers at all."""
    vx, vy = graph.nodes[v]
    if path:
        if v in path:
            k = path.index(v)
            if k + 1 < len(path):
                nx, ny = graph.nodes[path[k + 1]]
            elif goal_xy is not None:
                nx, ny = goal_xy
            else:
                return 0
            return _direction_bin(nx - vx, ny - vy)
        pts = graph.nodes[path]
        d = np.hypot(pts[:, 0] - vx, pts[:, 1] - vy)
        nx, ny = pts[int(np.argmin(d))]
        return _direction_bin(nx - vx, ny - vy)
    if goal_xy is not None:
        return _direction_bin(goal_xy[0] - vx, goal_xy[1] - vy)
    return 0


def enumerate_actions(graph: ViewGraph, agent_node: int, path: list[int],
                      goal_xy: tuple[float, float] | None,
                      x: int = PRUNE_X) -> list[ActionPair]:
    """Pruned action pairs for the agent, neighbor-major, best heading first.

    Requires the graph's per-node frontier caches to be current.  path is
    the agent's A* node path toward its nearest frontier (may be empty)
    and goal_xy the frontier cell center it leads to.
    """
    neighbors = graph.adj[agent_node]
    if not neighbors:
        raise ActionSpaceError(f"node {agent_node} is isolated (graph construction bug)")
    pairs: list[ActionPair] = []
    for v in neighbors:
        counts = graph.counts[v]
        if counts.max() == 0:
            b = _fallback_bin(graph, v, path, goal_xy)
            pairs.append(ActionPair(v, float(geometry.BIN_CENTERS[b]), b))
            continue
        # Top-x by count, ties toward the smaller bin index.
        order = np.lexsort((np.arange(geometry.N_BINS), -counts))
        for b in order[:x]:
            pairs.append(ActionPair(v, float(geometry.BIN_CENTERS[b]), int(b)))
    return pairs


def resolve_conflicts(choices: list[ActionPair], agent_nodes: list[int],
                      pairs_per_agent: list[list[ActionPair]],
                      graph: ViewGraph) -> list[ActionPair]:
    """Reroute agents that picked an already-claimed viewpoint.

    Agents are processed in index order; the first claimant keeps the node.
    A displaced agent moves to its nearest (Euclidean) unclaimed neighbor
    with the best pruned heading for that node, or stays put when every
    neighbor is claimed.
    """
    final: list[ActionPair] = []
    claimed: set[int] = set()
    for i, choice in enumerate(choices):
        if choice.target_node not in claimed:
            final.append(choice)
            claimed.add(choice.target_node)
            continue
        cur = agent_nodes[i]
        best_for = {}
        for p in pairs_per_agent[i]:
            best_for.setdefault(p.target_node, p)  # first entry = best heading
        alts = [v for v in graph.adj[cur] if v not in claimed and v in best_for]
        if not alts:
            stay_bin = int(graph.h_bin[cur]) if graph.util[cur] > 0 else 0
            final.append(ActionPair(cur, float(geometry.BIN_CENTERS[stay_bin]), stay_bin))
            continue
        cx, cy = graph.nodes[cur]
        alts.sort(key=lambda v: ((graph.nodes[v][0] - cx) ** 2
                                 + (graph.nodes[v][1] - cy) ** 2, v))
        pick = best_for[alts[0]]
        final.append(pick)
        claimed.add(pick.target_node)
    return final


def motion_step(state: MotionState, target_xy: tuple[float, float],
                goal_heading: float, tick: float = MOTION_TICK,
                arrive_radius: float = 0.25) -> tuple[MotionState, bool]:
    """Advance one tick: 1 m/s along the edge, <= 35 deg/s toward the heading.

    Arrival triggers within half a cell of the target and snaps onto it;
    whatever heading was achieved by then stands (the goal adjusts to it).
    """
    if tick <= 0:
        raise ValueError("tick must be > 0")
    dx = target_xy[0] - state.x
    dy = target_xy[1] - state.y
    dist = math.hypot(dx, dy)
    turn = geometry.wrap_to_pi(goal_heading - state.heading)
    max_turn = state.max_yaw_rate * tick
    turn = max(-max_turn, min(max_turn, turn))
    heading = geometry.wrap_angle(state.heading + turn)

    if dist <= arrive_radius:
        return MotionState(target_xy[0], target_xy[1], state.heading,
                           state.linear_speed, state.max_yaw_rate), True
    step = min(state.linear_speed * tick, dist)
    nx = state.x + dx / dist * step
    ny = state.y + dy / dist * step
    if dist - step <= arrive_radius:
        return MotionState(target_xy[0], target_xy[1], heading,
                           state.linear_speed, state.max_yaw_rate), True
    return MotionState(nx, ny, heading, state.linear_speed, state.max_yaw_rate), False
