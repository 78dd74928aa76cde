"""Synchronous multi-agent episode engine.

One epoch: every agent picks a (neighbor node, heading) action, conflicts
are rerouted, then all agents travel their straight edges at 1 m/s with
0.1 s ticks, sensing the sector footprint at every tick, until the last
agent arrives.  Afterwards frontiers, the viewpoint graph, per-agent
guidepost paths, pruned action sets and rewards are refreshed.

The engine keeps one shared belief (the problem assumes perfect
communication) and, when privileged mode is on, a ground-truth twin of the
graph whose utilities use true occupancy for line of sight - the critic's
input during training.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import frontier as frontier_mod
from . import geometry
from .action import (ActionPair, ActionSpaceError, MAX_YAW_RATE, MOTION_TICK,
                     MotionState, enumerate_actions, motion_step, resolve_conflicts)
from .graph import ViewGraph, GuidepostInfo, assemble_features, guidepost_info
from .reward import RewardBreakdown, compute_reward
from .world import (FREE, OCCUPIED, UNKNOWN, AgentPose, Belief, OccupancyGrid,
                    SensorSpec, update_belief_inplace)

MAX_EPOCHS = 128
COMPLETION_RHO = 0.99
ARRIVE_RADIUS = 0.25


def fov_membership_matrix(fov_deg: float) -> np.ndarray:
    """membership[q, b] = 1 iff bin b's center lies in the FoV centered on bin q."""
    q = np.arange(36)
    diff = np.minimum((q[:, None] - q[None, :]) % 36, (q[None, :] - q[:, None]) % 36)
    return (diff * 10.0 <= fov_deg / 2.0).astype(np.float32)


@dataclass
class AgentState:
    pose: MotionState
    node: int
    gt_node: int = -1
    cum_dist: float = 0.0


@dataclass
class EpochResult:
    epoch: int
    rewards: list[RewardBreakdown]
    distances: list[float]
    rho: float
    done: bool
    reason: str  # "", "success", "stalled", "truncated"
    utility_exhausted: bool
    seen_once: int
    seen_multi: int


@dataclass
class PolicyObs:
    feats: np.ndarray        # (n, 9) f32
    bins: np.ndarray         # (n, 36) f32
    edges: np.ndarray        # (E, 2) i32, i < j
    cur: int
    pair_nodes: np.ndarray   # (k,) i32
    pair_bins: np.ndarray    # (k,) i16 (-1 for fallback/continuous)
    pair_feats: np.ndarray   # (k, 72) f32


@dataclass
class CriticObs:
    feats: np.ndarray
    bins: np.ndarray
    edges: np.ndarray
    cur: int
    pair_nodes: np.ndarray   # pairs mapped into ground-truth node indices
    pair_feats: np.ndarray
    others: np.ndarray       # (2*(m-1),) i32: cur/next gt nodes, filled post-step


class GroundTruthView:
    """Truth-occupancy twin graph used by the privileged critic."""

    def __init__(self, grid: OccupancyGrid, sensor: SensorSpec):
        self.grid = grid
        self.graph = ViewGraph(grid.cells.shape, grid.resolution, sensor)
        self._free = grid.cells == FREE
        self._occ = grid.cells == OCCUPIED
        self._blocked = np.ascontiguousarray(self._occ, dtype=np.uint8)

    def init(self, frontiers: np.ndarray) -> None:
        self.graph.extend(self._free, self._occ, self._blocked, frontiers)

    def ensure_node(self, x: float, y: float) -> int:
        """Index of the node at (x, y); force-adds when truth clearance failed."""
        idx = self.graph.node_at(x, y)
        if idx is not None:
            return idx
        g = self.graph
        rc = (int(math.floor(y / g.resolution)), int(math.floor(x / g.resolution)))
        g._rejected_cells.discard(rc)
        idx = len(g.adj)
        g.node_cell[rc] = idx
        g.adj.append([])
        g.nodes = np.vstack([g.nodes, [g._cell_center(*rc)]])
        for arr_name in ("counts", "bins"):
            arr = getattr(g, arr_name)
            setattr(g, arr_name, np.vstack([arr, np.zeros((1, geometry.N_BINS), arr.dtype)]))
        g.util = np.concatenate([g.util, [0]])
        g.h_bin = np.concatenate([g.h_bin, [0]])
        a = g.nodes[idx]
        for j in list(g._lattice_neighbors(idx)):
            if j is None:
                continue
            clear = geometry.segments_clear(
                np.ascontiguousarray(~self._free, dtype=np.uint8), g.resolution,
                np.array([a[0]]), np.array([a[1]]),
                np.array([g.nodes[j][0]]), np.array([g.nodes[j][1]]))
            if clear[0]:
                g.adj[idx].append(j)
                g.adj[j].append(idx)
                g.adj[j].sort()
        g.adj[idx].sort()
        return idx

    def refresh(self, frontiers: np.ndarray, changed: np.ndarray | None) -> None:
        self.graph.extend(self._free, self._occ, self._blocked, frontiers, changed)


class Simulator:
    """One episode on one map.  Deterministic given (map, actions)."""

    def __init__(self, grid: OccupancyGrid, sensor: SensorSpec, n_agents: int,
                 privileged: bool = False, max_epochs: int = MAX_EPOCHS,
                 prune_x: int = 3):
        if n_agents < 1:
            raise ValueError("need at least one agent")
        self.grid = grid
        self.sensor = sensor
        self.n_agents = n_agents
        self.max_epochs = max_epochs
        self.prune_x = prune_x
        self.res = grid.resolution
        h, w = grid.cells.shape
        self.half_extent = max(h, w) * self.res / 2.0
        self.n_max = frontier_mod.max_observable(sensor, self.res)
        self.fov_membership = fov_membership_matrix(sensor.fov_deg)
        self._occ_u8 = grid.occupied_mask()
        self._free_truth = int((grid.cells == FREE).sum())

        self.belief = Belief.unknown_like(grid)
        self.graph = ViewGraph(grid.cells.shape, self.res, sensor)
        self.gt: GroundTruthView | None = GroundTruthView(grid, sensor) if privileged else None

        self.agents = [AgentState(MotionState(x, y, 0.0), -1)
                       for x, y in self._spawn_points()]
        self.explored: dict[int, np.ndarray] = {}  # node -> previously covered bins
        self.epoch = 0
        self.done = False
        self.reason = ""
        self.rho_series: list[float] = []
        self.epoch_costs: list[float] = []

        # Initial 360-degree scan so the local graph exists and is connected.
        scan = SensorSpec(sensor.range_m, 360.0)
        for a in self.agents:
            self._sense(a.pose, fov_override=scan)
        self.frontiers = frontier_mod.extract_frontiers(self.belief)
        self.graph.extend(self.belief.cells == FREE, self.belief.cells == OCCUPIED,
                          self.belief.cells != FREE, self.frontiers)
        if self.gt:
            self.gt.init(self.frontiers)
        for a in self.agents:
            node = self.graph.node_at(a.pose.x, a.pose.y)
            if node is None:
                raise ActionSpaceError("agent spawn is not on a graph node")
            a.node = node
            self._mark_explored(node, full=True)
            if self.gt:
                a.gt_node = self.gt.ensure_node(a.pose.x, a.pose.y)
        self.rho = self._rho()
        self.rho_series.append(self.rho)
        self.guideposts: list[GuidepostInfo] = []
        self.paths_xy: list[list[tuple[float, float]] | None] = []
        self.pairs: list[list[ActionPair]] = []
        self._refresh_agent_state()
        if self.rho >= COMPLETION_RHO:
            self.done, self.reason = True, "success"

    # -- setup helpers -------------------------------------------------------

    def _spawn_points(self) -> list[tuple[float, float]]:
        g = self.grid
        if g.start_region is None:
            x0, y0 = 0.0, 0.0
            wr, hr = g.extent
        else:
            x0, y0, wr, hr = g.start_region
        probe = ViewGraph(g.cells.shape, self.res, self.sensor)
        probe.extend(g.cells == FREE, g.cells == OCCUPIED, g.cells != FREE,
                     np.empty(0, dtype=np.int64))
        pts = [(float(x), float(y)) for x, y in probe.nodes
               if x0 <= x <= x0 + wr and y0 <= y <= y0 + hr]
        pts.sort(key=lambda p: (p[1], p[0]))
        if len(pts) < self.n_agents:
            raise ActionSpaceError(
                f"start region holds {len(pts)} viewpoints < {self.n_agents} agents")
        return pts[: self.n_agents]

    def _rho(self) -> float:
        return float((self.belief.cells == FREE).sum()) / self._free_truth

    def _sense(self, pose: MotionState, fov_override: SensorSpec | None = None,
               seen: np.ndarray | None = None) -> None:
        s = fov_override or self.sensor
        mask = geometry.sector_visible(self._occ_u8, self.res, pose.x, pose.y,
                                       math.cos(pose.heading), math.sin(pose.heading),
                                       s.cos_half_fov, s.range_m)
        m = mask.view(bool)
        self.belief.cells[m] = self.grid.cells[m]
        if seen is not None:
            seen |= m

    def _mark_explored(self, node: int, heading: float = 0.0, full: bool = False) -> None:
        rec = self.explored.setdefault(node, np.zeros(36, dtype=np.uint8))
        if full:
            rec[:] = 1
            return
        diff = np.abs([geometry.wrap_to_pi(heading - c) for c in geometry.BIN_CENTERS])
        rec[np.degrees(diff) <= self.sensor.fov_deg / 2.0] = 1

    def _refresh_agent_state(self) -> None:
        """Recompute guideposts, path points and pruned actions for all agents."""
        w = self.belief.cells.shape[1]
        self.guideposts, self.paths_xy, self.pairs = [], [], []
        for a in self.agents:
            info = guidepost_info(self.graph, a.node, self.frontiers, w)
            self.guideposts.append(info)
            if info.frontier_cell >= 0:
                pts = [tuple(self.graph.nodes[n]) for n in info.path]
                fr, fc = divmod(info.frontier_cell, w)
                pts.append(((fc + 0.5) * self.res, (fr + 0.5) * self.res))
                self.paths_xy.append(pts)
            else:
                self.paths_xy.append(None)
            goal = self.paths_xy[-1][-1] if self.paths_xy[-1] else None
            self.pairs.append(enumerate_actions(self.graph, a.node, info.path,
                                                goal, x=self.prune_x))

    # -- acting ---------------------------------------------------------------

    def resolve(self, choices: list[ActionPair]) -> list[ActionPair]:
        return resolve_conflicts(choices, [a.node for a in self.agents],
                                 self.pairs, self.graph)

    def step(self, choices: list[ActionPair]) -> EpochResult:
        """Execute one synchronized epoch with already-resolved choices."""
        if self.done:
            raise RuntimeError("episode is finished")
        self.epoch += 1
        pre_belief = self.belief.copy()
        pre_frontiers = self.frontiers
        pre_known = self.belief.cells != UNKNOWN
        pre_util = self.graph.total_utility()

        seen = [np.zeros(self.belief.cells.shape, dtype=bool) for _ in self.agents]
        targets = [tuple(self.graph.nodes[c.target_node]) for c in choices]
        staying = [c.target_node == a.node for a, c in zip(self.agents, choices)]
        dists = [0.0 if stay else self.graph.edge_length(a.node, c.target_node)
                 for a, c, stay in zip(self.agents, choices, staying)]
        arrived = [False] * self.n_agents
        max_turn = MAX_YAW_RATE * MOTION_TICK
        for _ in range(400):
            if all(arrived):
                break
            for i, a in enumerate(self.agents):
                if arrived[i]:
                    continue
                if staying[i]:
                    # Re-orientation in place, still yaw-rate limited.
                    diff = geometry.wrap_to_pi(choices[i].heading - a.pose.heading)
                    if abs(diff) <= max_turn:
                        a.pose = MotionState(a.pose.x, a.pose.y,
                                             geometry.wrap_angle(choices[i].heading))
                        arrived[i] = True
                    else:
                        turn = max_turn if diff > 0 else -max_turn
                        a.pose = MotionState(a.pose.x, a.pose.y,
                                             geometry.wrap_angle(a.pose.heading + turn))
                else:
                    a.pose, arrived[i] = motion_step(a.pose, targets[i], choices[i].heading,
                                                     MOTION_TICK, ARRIVE_RADIUS)
                self._sense(a.pose, seen=seen[i])
        for i, a in enumerate(self.agents):
            self._sense(a.pose, seen=seen[i])  # arrival pose always observed
            a.node = choices[i].target_node
            a.cum_dist += dists[i]
            self._mark_explored(a.node, a.pose.heading)
            if self.gt:
                a.gt_node = self.gt.ensure_node(a.pose.x, a.pose.y)

        changed = np.flatnonzero(~pre_known.ravel()
                                 & (self.belief.cells != UNKNOWN).ravel())
        self.frontiers = frontier_mod.extract_frontiers(self.belief)
        self.graph.extend(self.belief.cells == FREE, self.belief.cells == OCCUPIED,
                          self.belief.cells != FREE, self.frontiers, changed)
        if self.gt:
            self.gt.refresh(self.frontiers, changed)
        self._refresh_agent_state()

        post_util = self.graph.total_utility()
        utility_exhausted = post_util == 0 and pre_util > 0
        rewards = []
        for i, a in enumerate(self.agents):
            pose = AgentPose(a.pose.x, a.pose.y, a.pose.heading)
            team = [AgentPose(b.pose.x, b.pose.y, b.pose.heading) for b in self.agents]
            rewards.append(compute_reward(pre_belief, pre_frontiers, pose, team,
                                          self.paths_xy[i], self.sensor,
                                          utility_exhausted))

        self.rho = self._rho()
        self.rho_series.append(self.rho)
        self.epoch_costs.append(max(dists) if dists else 0.0)
        union = np.zeros_like(seen[0], dtype=np.int16)
        for s in seen:
            union += s
        seen_once = int((union >= 1).sum())
        seen_multi = int((union >= 2).sum())

        if self.rho >= COMPLETION_RHO:
            self.done, self.reason = True, "success"
        elif post_util == 0 or self.frontiers.size == 0:
            self.done, self.reason = True, "stalled"
        elif self.epoch >= self.max_epochs:
            self.done, self.reason = True, "truncated"
        return EpochResult(self.epoch, rewards, dists, self.rho, self.done,
                           self.reason if self.done else "", utility_exhausted,
                           seen_once, seen_multi)

    # -- observations ---------------------------------------------------------

    def _edges_array(self, g: ViewGraph) -> np.ndarray:
        out = [(i, j) for i, nbrs in enumerate(g.adj) for j in nbrs if i < j]
        return np.array(out, dtype=np.int32).reshape(-1, 2)

    def _pair_feats(self, pairs: list[ActionPair]) -> np.ndarray:
        out = np.zeros((len(pairs), 72), dtype=np.float32)
        for k, p in enumerate(pairs):
            b = p.heading_bin if p.heading_bin >= 0 else geometry.nearest_bin(p.heading)
            out[k, :36] = self.fov_membership[b]
            rec = self.explored.get(p.target_node)
            if rec is not None:
                out[k, 36:] = rec
        return out

    def policy_obs(self, i: int) -> PolicyObs:
        a = self.agents[i]
        feats, _ = assemble_features(self.graph, [b.node for b in self.agents], i,
                                     self.half_extent, self.n_max,
                                     self.guideposts[i].mask)
        pairs = self.pairs[i]
        return PolicyObs(
            feats=feats,
            bins=self.graph.bins.astype(np.float32),
            edges=self._edges_array(self.graph),
            cur=a.node,
            pair_nodes=np.array([p.target_node for p in pairs], dtype=np.int32),
            pair_bins=np.array([p.heading_bin for p in pairs], dtype=np.int16),
            pair_feats=self._pair_feats(pairs))

    def ensure_gt_pairs(self) -> None:
        """Force every agent's candidate targets into the ground-truth graph.

        Call before snapshotting critic observations: later growth would
        leave stored node indices pointing past the snapshot.
        """
        assert self.gt is not None
        for pairs in self.pairs:
            for p in pairs:
                self.gt.ensure_node(*self.graph.nodes[p.target_node])

    def critic_obs(self, i: int) -> CriticObs:
        assert self.gt is not None, "privileged mode is off"
        g = self.gt.graph
        w = self.belief.cells.shape[1]
        pairs = self.pairs[i]
        # Mapping action pairs may force-add nodes; grow before snapshotting.
        gt_pair = np.array([self.gt.ensure_node(*self.graph.nodes[p.target_node])
                            for p in pairs], dtype=np.int32)
        info = guidepost_info(g, self.agents[i].gt_node, self.frontiers, w)
        feats, _ = assemble_features(g, [b.gt_node for b in self.agents], i,
                                     self.half_extent, self.n_max, info.mask)
        return CriticObs(
            feats=feats,
            bins=g.bins.astype(np.float32),
            edges=self._edges_array(g),
            cur=self.agents[i].gt_node,
            pair_nodes=gt_pair,
            pair_feats=self._pair_feats(pairs),
            others=np.full(2 * (self.n_agents - 1), -1, dtype=np.int32))

    def graph_snapshot(self) -> dict:
        """JSON-friendly dump of the current graph (verbose traces)."""
        return {
            "nodes": [[round(float(x), 3), round(float(y), 3)] for x, y in self.graph.nodes],
            "edges": self._edges_array(self.graph).tolist(),
            "utility": self.graph.util.tolist(),
            "heading_bin": self.graph.h_bin.tolist(),
        }
