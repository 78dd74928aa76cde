import math

import numpy as np
import pytest

import oracles
from conftest import random_grid
from sectorscout.action import (ActionPair, ActionSpaceError, MotionState,
                                enumerate_actions, motion_step, resolve_conflicts)
from sectorscout.frontier import extract_frontiers
from sectorscout.geometry import BIN_CENTERS
from sectorscout.graph import ViewGraph, guidepost_info
from sectorscout.world import (FREE, OCCUPIED, Belief, MapGenParams,
                               OccupancyGrid, SensorSpec, generate_map)

SENSOR = SensorSpec(10.0, 120.0)


def known_belief(grid):
    b = Belief.unknown_like(grid)
    b.cells[:] = grid.cells
    return b


def graph_for(belief):
    g = ViewGraph(belief.cells.shape, belief.resolution, SENSOR)
    g.extend(belief.cells == FREE, belief.cells == OCCUPIED,
             belief.cells != FREE, extract_frontiers(belief))
    return g


class TestEnumerate:
    def test_top3_simple_counts(self):
        grid = generate_map(1, MapGenParams(16, 16, room_density=0))
        b = known_belief(grid)
        g = graph_for(b)
        # Override one neighbor's cache with a crafted distribution.
        v = g.adj[0][0]
        g.counts[v] = 0
        g.counts[v, 0], g.counts[v, 1], g.counts[v, 2] = 5, 4, 3
        g.util[v] = 5
        pairs = [p for p in enumerate_actions(g, 0, [], None) if p.target_node == v]
        assert [p.heading_bin for p in pairs] == [0, 1, 2]
        assert pairs[0].heading == 0.0

    def test_tie_break_smaller_bin(self):
        grid = generate_map(1, MapGenParams(16, 16, room_density=0))
        g = graph_for(known_belief(grid))
        v = g.adj[0][0]
        g.counts[v] = 2  # all equal
        g.util[v] = 2
        pairs = [p for p in enumerate_actions(g, 0, [], None) if p.target_node == v]
        assert [p.heading_bin for p in pairs] == [0, 1, 2]

    def test_fallback_path_aligned(self):
        # All-zero counts, neighbor on the path: heading along the path.
        grid = generate_map(1, MapGenParams(16, 16, room_density=0))
        g = graph_for(known_belief(grid))
        g.counts[:] = 0
        g.util[:] = 0
        start = 0
        v = g.adj[start][0]
        nxt = [u for u in g.adj[v] if u != start][0]
        path = [start, v, nxt]
        pairs = [p for p in enumerate_actions(g, start, path, None)
                 if p.target_node == v]
        assert len(pairs) == 1
        want = math.atan2(g.nodes[nxt][1] - g.nodes[v][1],
                          g.nodes[nxt][0] - g.nodes[v][0]) % (2 * math.pi)
        diff = abs((pairs[0].heading - want + math.pi) % (2 * math.pi) - math.pi)
        assert diff <= math.radians(5.0) + 1e-9  # snapped to nearest bin center

    def test_fallback_points_toward_path(self):
        grid = generate_map(1, MapGenParams(16, 16, room_density=0))
        g = graph_for(known_belief(grid))
        g.counts[:] = 0
        g.util[:] = 0
        start = 0
        off_path = [v for v in g.adj[start] if v != g.adj[start][0]][0]
        path_node = g.adj[start][0]
        pairs = [p for p in enumerate_actions(g, start, [start, path_node], None)
                 if p.target_node == off_path]
        assert len(pairs) == 1

    def test_isolated_node_raises(self):
        g = ViewGraph((20, 20), 0.5, SENSOR)
        g.nodes = np.array([[2.25, 2.25]])
        g.adj = [[]]
        g.counts = np.zeros((1, 36), dtype=np.int64)
        g.util = np.zeros(1, dtype=np.int64)
        g.h_bin = np.zeros(1, dtype=np.int64)
        with pytest.raises(ActionSpaceError):
            enumerate_actions(g, 0, [], None)

    def test_random_states_match_brute_force_top3(self, rng):
        # Selected headings equal the exhaustive top-3 (ties by bin index)
        # over the true observable-frontier counts at every neighbor.
        for trial in range(4):
            grid = random_grid(rng, 24, 24, p_occ=0.15)
            b = known_belief(grid)
            from sectorscout.world import update_belief, raycast_sector, AgentPose
            part = Belief.unknown_like(grid)
            free = np.flatnonzero((grid.cells == FREE).ravel())
            pose_cell = int(free[rng.integers(free.size)])
            pose = AgentPose((pose_cell % 24 + 0.5) * 0.5,
                             (pose_cell // 24 + 0.5) * 0.5, 0.0)
            part = update_belief(part, raycast_sector(grid, pose, SensorSpec(10, 360)), grid)
            g = graph_for(part)
            if len(g.adj) == 0:
                continue
            agent = g.node_at(pose.x, pose.y)
            if agent is None or not g.adj[agent]:
                continue
            fr = extract_frontiers(part)
            info = guidepost_info(g, agent, fr, 24)
            pairs = enumerate_actions(g, agent, info.path, None)
            fr_set = set(int(f) for f in fr)
            by_node = {}
            for p in pairs:
                by_node.setdefault(p.target_node, []).append(p.heading_bin)
            for v, bins in by_node.items():
                counts = [oracles.observable_frontier_count(
                    part.cells.tolist(), fr_set, tuple(g.nodes[v]),
                    float(BIN_CENTERS[k]), 120.0, 10.0, 0.5) for k in range(36)]
                if max(counts) == 0:
                    assert len(bins) == 1  # fallback heading
                else:
                    want = sorted(range(36), key=lambda k: (-counts[k], k))[:3]
                    assert bins == want

    def test_action_count_bounds(self, rng):
        grid = generate_map(3, MapGenParams(20, 20))
        b = known_belief(grid)
        g = graph_for(b)
        agent = 0
        fr = extract_frontiers(b)
        info = guidepost_info(g, agent, fr, b.cells.shape[1])
        pairs = enumerate_actions(g, agent, info.path, None)
        assert 1 <= len(pairs) <= 3 * len(g.adj[agent])


class TestConflicts:
    def _mini_graph(self):
        grid = generate_map(1, MapGenParams(16, 16, room_density=0))
        g = graph_for(known_belief(grid))
        return g

    def _pairs_for(self, g, node):
        return [ActionPair(v, 0.0, 0) for v in g.adj[node]]

    def test_distinct_targets_identity(self):
        g = self._mini_graph()
        choices = [ActionPair(g.adj[0][0], 0.0, 0), ActionPair(g.adj[3][-1], 1.0, 6)]
        out = resolve_conflicts(choices, [0, 3], [self._pairs_for(g, 0),
                                                  self._pairs_for(g, 3)], g)
        assert out == choices

    def test_lower_index_keeps_contested_node(self):
        g = self._mini_graph()
        n = sorted(set(g.adj[0]) & set(g.adj[1]))[0]  # adjacent to both agents
        choices = [ActionPair(n, 0.0, 0), ActionPair(n, 0.0, 0)]
        out = resolve_conflicts(choices, [0, 1], [self._pairs_for(g, 0),
                                                  self._pairs_for(g, 1)], g)
        assert out[0].target_node == n
        assert out[1].target_node != n
        # Rerouted to its nearest unclaimed neighbor.
        cx, cy = g.nodes[1]
        cands = [v for v in g.adj[1] if v != n]
        best = min(cands, key=lambda v: ((g.nodes[v][0] - cx) ** 2
                                         + (g.nodes[v][1] - cy) ** 2, v))
        assert out[1].target_node == best

    def test_exhausted_alternatives_stay(self):
        g = ViewGraph((20, 20), 0.5, SENSOR)
        g.nodes = np.array([[1.25, 1.25], [3.25, 1.25], [5.25, 1.25]])
        g.adj = [[1], [0, 2], [1]]
        g.counts = np.zeros((3, 36), dtype=np.int64)
        g.util = np.zeros(3, dtype=np.int64)
        g.h_bin = np.zeros(3, dtype=np.int64)
        # Agents at 0, 2, 1; everyone wants node 1; agent 2's only
        # alternatives both get claimed, so it stays at node 1... its node.
        choices = [ActionPair(1, 0.0, 0), ActionPair(1, 0.0, 0), ActionPair(1, 0.0, 0)]
        pairs = [[ActionPair(1, 0.0, 0)],
                 [ActionPair(1, 0.0, 0)],
                 [ActionPair(0, 0.0, 0), ActionPair(2, 0.0, 0)]]
        out = resolve_conflicts(choices, [0, 2, 1], pairs, g)
        assert out[0].target_node == 1          # lowest index keeps it
        assert out[1].target_node == 1 or True  # rerouted below
        # Agent 1 (at node 2) reroutes to an unclaimed pruned neighbor: none
        # in its list except node 1 -> stays at its current node 2.
        assert out[1].target_node == 2
        # Agent 2 (at node 1) reroutes to nearest unclaimed of {0, 2}: 2 is
        # taken by the stay above? No: claimed = {1, 2}; it takes 0.
        assert out[2].target_node == 0

    def test_distinct_after_resolution(self, rng):
        g = self._mini_graph()
        agents = [0, 1, 4, 5]
        pairs = [self._pairs_for(g, a) for a in agents]
        common = set(g.adj[0]) & set(g.adj[1])
        tgt = common.pop() if common else g.adj[0][0]
        choices = [ActionPair(tgt, 0.0, 0) if tgt in g.adj[a] else pairs[k][0]
                   for k, a in enumerate(agents)]
        out = resolve_conflicts(choices, agents, pairs, g)
        moved = [p.target_node for k, p in enumerate(out)
                 if p.target_node != agents[k]]
        assert len(moved) == len(set(moved))


class TestMotion:
    def test_aligned_heading_arrival(self):
        s = MotionState(1.0, 1.0, 0.0)
        out, arrived = motion_step(s, (3.0, 1.0), 0.0, tick=2.0)
        assert arrived
        assert out.heading == 0.0
        assert (out.x, out.y) == (3.0, 1.0)

    def test_yaw_rate_clamp_over_short_edge(self):
        # 180 degree turn requested over a 1 m edge (1 s): only 35 degrees.
        s = MotionState(0.0, 0.0, 0.0)
        out, arrived = motion_step(s, (1.0, 0.0), math.pi, tick=1.0)
        assert arrived
        assert out.heading == pytest.approx(math.radians(35.0))

    def test_constant_speed_arrival_time(self):
        s = MotionState(0.0, 0.0, 0.0)
        target = (2.0, 0.0)
        ticks = 0
        arrived = False
        while not arrived:
            s, arrived = motion_step(s, target, 0.0, tick=0.1)
            ticks += 1
            assert ticks < 100
        # 2 m at 1 m/s with half-cell arrival snap: within [1.75s, 2.0s].
        assert 17 <= ticks <= 20
        assert (s.x, s.y) == target

    def test_heading_rate_bounded_every_tick(self):
        s = MotionState(0.0, 0.0, 0.0)
        goal = 3.0
        for _ in range(40):
            prev = s.heading
            s, arrived = motion_step(s, (4.0, 0.0), goal, tick=0.1)
            step = abs((s.heading - prev + math.pi) % (2 * math.pi) - math.pi)
            assert step <= math.radians(35.0) * 0.1 + 1e-12
            if arrived:
                break

    def test_rejects_nonpositive_tick(self):
        with pytest.raises(ValueError):
            motion_step(MotionState(0, 0, 0), (1, 0), 0.0, tick=0.0)
