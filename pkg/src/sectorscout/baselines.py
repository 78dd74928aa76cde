"""Comparison planners sharing one interface: observation in, actions out.

Every planner emits one (target node, heading) per agent; the episode
engine reroutes viewpoint conflicts and runs the motion model, so all
planners (including the learned policy) face identical dynamics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .action import ActionPair
from .episode import Simulator
from .graph import astar
from .world import OCCUPIED, UNKNOWN


def _travel_pair(sim: Simulator, i: int, nxt: int) -> ActionPair:
    """Move to nxt facing the direction of travel."""
    a = sim.agents[i]
    x, y = sim.graph.nodes[nxt]
    if nxt == a.node:
        return ActionPair(nxt, a.pose.heading)
    return ActionPair(nxt, geometry.wrap_angle(math.atan2(y - a.pose.y, x - a.pose.x)))


def _stay(sim: Simulator, i: int) -> ActionPair:
    a = sim.agents[i]
    return ActionPair(a.node, a.pose.heading)


def _face_cell(sim: Simulator, i: int, cell: int) -> ActionPair:
    a = sim.agents[i]
    w = sim.belief.cells.shape[1]
    fx = (cell % w + 0.5) * sim.res
    fy = (cell // w + 0.5) * sim.res
    return ActionPair(a.node, geometry.wrap_angle(math.atan2(fy - a.pose.y, fx - a.pose.x)))


class _GoalSeeker:
    """Shared frontier-chasing machinery with per-agent stare memory.

    An agent drives to a frontier's closest reachable node and faces the
    frontier for one epoch.  A frontier that survives a stare is retried
    from the next nearest vantage node (different angles crack occluded
    pockets, and patches revealed through doorways often have only
    unreachable island nodes nearby, so the rank is not capped).
    """

    def __init__(self):
        self._stared: list[set[tuple[int, int]]] = []
        self._commit: list[tuple[int, int] | None] = []

    def _ensure(self, sim: Simulator) -> None:
        if not self._stared:
            self._stared = [set() for _ in sim.agents]
            self._commit = [None for _ in sim.agents]
        live = set(int(f) for f in sim.frontiers)
        for s in self._stared:
            dead = {pair for pair in s if pair[1] not in live}
            s -= dead

    def _step_or_stare(self, sim: Simulator, i: int, cell: int, v: int) -> ActionPair | None:
        a = sim.agents[i]
        if v == a.node:
            self._stared[i].add((v, cell))
            self._commit[i] = None
            return _face_cell(sim, i, cell)
        self._commit[i] = (cell, v)
        path = astar(sim.graph, a.node, v)
        if len(path) > 1:
            return _travel_pair(sim, i, path[1])
        self._commit[i] = None
        return None

    def committed(self, sim: Simulator, i: int) -> ActionPair | None:
        """Keep walking to the committed vantage until the goal resolves.

        Without commitment, goal re-selection every epoch can dither: two
        goals whose preference order flips between adjacent nodes leave the
        agent ping-ponging forever.
        """
        c = self._commit[i]
        if c is None:
            return None
        cell, v = c
        live = cell in set(int(f) for f in sim.frontiers)
        if (not live or (v, cell) in self._stared[i]
                or not np.isfinite(sim.guideposts[i].dist[v])):
            self._commit[i] = None
            return None
        return self._step_or_stare(sim, i, cell, v)

    def seek(self, sim: Simulator, i: int, cells: np.ndarray) -> ActionPair | None:
        """One edge toward (or one stare at) the nearest viable vantage.

        Vantages for a frontier cell are every node ordered by distance to
        the cell; a stare from one vantage that fails moves on to the next,
        so occluded pockets get approached from different angles.
        """
        a = sim.agents[i]
        stared = self._stared[i]
        cand = np.array(sorted(set(int(c) for c in cells)), dtype=np.int64)
        if cand.size == 0:
            return None
        g = sim.graph
        res = sim.res
        w = sim.belief.cells.shape[1]
        cx = (cand % w + 0.5) * res
        cy = (cand // w + 0.5) * res
        d2 = ((g.nodes[:, 0:1] - cx[None, :]) ** 2
              + (g.nodes[:, 1:2] - cy[None, :]) ** 2)
        order = np.argsort(d2, axis=0, kind="stable")
        agent_dist = sim.guideposts[i].dist
        best = None  # (path_dist, cell, vantage_node)
        for k, cell in enumerate(cand):
            for v in order[:, k]:
                v = int(v)
                if (v, int(cell)) in stared:
                    continue
                dv = agent_dist[v]
                if not np.isfinite(dv):
                    continue
                if best is None or (dv, int(cell)) < best[:2]:
                    best = (float(dv), int(cell), v)
                break
        if best is None:
            return None
        return self._step_or_stare(sim, i, best[1], best[2])


class NearestPlanner(_GoalSeeker):
    """Head for the path-nearest frontier on the merged map, one edge per epoch."""

    name = "nearest"

    def plan(self, sim: Simulator, rng: np.random.Generator) -> list[ActionPair]:
        self._ensure(sim)
        return [self.committed(sim, i) or self.seek(sim, i, sim.frontiers)
                or _stay(sim, i) for i in range(sim.n_agents)]


class GreedyPlanner:
    """Utility-greedy surrogate: best neighbor by u minus travel and revisit
    penalties (the revisit term breaks oscillation between two viewpoints
    whose best headings the yaw limit cannot reach in one hop)."""

    name = "greedy"

    def __init__(self, travel_weight: float = 1.0, revisit_penalty: float = 30.0):
        self.travel_weight = travel_weight
        self.revisit_penalty = revisit_penalty
        self._nearest = NearestPlanner()
        self._visits: list[dict[int, int]] = []

    def plan(self, sim: Simulator, rng: np.random.Generator) -> list[ActionPair]:
        if not self._visits:
            self._visits = [{} for _ in sim.agents]
        fallback = None
        out = []
        for i, a in enumerate(sim.agents):
            self._visits[i][a.node] = self._visits[i].get(a.node, 0) + 1
            nbrs = sim.graph.adj[a.node]
            utils = sim.graph.util[nbrs]
            scores = [(-(u - self.travel_weight * sim.graph.edge_length(a.node, v)
                         - self.revisit_penalty * self._visits[i].get(v, 0)),
                       sim.graph.edge_length(a.node, v), v)
                      for u, v in zip(utils, nbrs)]
            scores.sort()
            score, _, v = scores[0]
            if utils.max(initial=0) == 0 or -score <= 0:
                if fallback is None:
                    fallback = self._nearest.plan(sim, rng)
                out.append(fallback[i])
                continue
            best = next(p for p in sim.pairs[i] if p.target_node == v)
            out.append(best)
        return out


class MMPFPlanner(_GoalSeeker):
    """Potential-field planner over frontier clusters (reimplementation).

    Potential of cluster c for agent i = path distance + resistance from
    every other agent that is closer to c (weight * max(0, radius - d_j)),
    so the nearest agent keeps the cluster and the rest get pushed off.
    Clusters this agent has exhausted (all cells stared) are skipped.
    """

    name = "mmpf"

    def __init__(self, resistance_weight: float = 3.0, resistance_radius: float = 20.0):
        super().__init__()
        self.resistance_weight = resistance_weight
        self.resistance_radius = resistance_radius

    def plan(self, sim: Simulator, rng: np.random.Generator) -> list[ActionPair]:
        self._ensure(sim)
        w = sim.belief.cells.shape[1]
        clusters = _cluster_frontiers(sim.frontiers, sim.belief.cells.shape)
        if not clusters:
            return [_stay(sim, i) for i in range(sim.n_agents)]
        reps = [c["rep"] for c in clusters]
        rep_nodes = sim.graph.nearest_node_to_cells(np.array(reps, dtype=np.int64), w)
        dist = np.stack([sim.guideposts[i].dist[rep_nodes] for i in range(sim.n_agents)])
        out = []
        for i in range(sim.n_agents):
            pot = dist[i].copy()
            for j in range(sim.n_agents):
                if j == i:
                    continue
                closer = (dist[j] < dist[i]) | ((dist[j] == dist[i]) & (j < i))
                pot += np.where(closer,
                                self.resistance_weight
                                * np.maximum(0.0, self.resistance_radius - dist[j]),
                                0.0)
            pot[~np.isfinite(dist[i])] = np.inf
            act = self.committed(sim, i)
            # Infinite-potential clusters (rep node unreachable so far) are
            # still tried last: their cells may have reachable vantages.
            if act is None:
                for c in np.argsort(pot, kind="stable"):
                    act = self.seek(sim, i, np.array(clusters[int(c)]["cells"]))
                    if act is not None:
                        break
            out.append(act or _stay(sim, i))
        return out


def _cluster_frontiers(frontiers: np.ndarray, shape: tuple[int, int]) -> list[dict]:
    """8-adjacency connected components; rep = member nearest the centroid."""
    if frontiers.size == 0:
        return []
    h, w = shape
    fset = set(int(f) for f in frontiers)
    seen: set[int] = set()
    clusters = []
    for f in sorted(fset):
        if f in seen:
            continue
        comp = [f]
        seen.add(f)
        stack = [f]
        while stack:
            cur = stack.pop()
            r, c = divmod(cur, w)
            for dr in (-1, 0, 1):
                for dc in (-1, 0, 1):
                    nb = (r + dr) * w + (c + dc)
                    if dr == dc == 0 or not (0 <= r + dr < h and 0 <= c + dc < w):
                        continue
                    if nb in fset and nb not in seen:
                        seen.add(nb)
                        comp.append(nb)
                        stack.append(nb)
        comp.sort()
        arr = np.array(comp)
        rows, cols = arr // w, arr % w
        cr, cc = rows.mean(), cols.mean()
        rep = comp[int(np.argmin((rows - cr) ** 2 + (cols - cc) ** 2))]
        clusters.append({"cells": comp, "rep": rep})
    return clusters


class NBVPPlanner:
    """Receding-horizon sampling: random branches scored by discounted
    expected newly observed cells, executing only the first edge.  When
    every sampled branch has zero gain the agent relocates toward the
    nearest frontier instead of idling."""

    name = "nbvp"

    def __init__(self, branches: int = 15, depth: int = 4, decay_per_m: float = 0.25):
        self.branches = branches
        self.depth = depth
        self.decay_per_m = decay_per_m
        self._nearest = NearestPlanner()

    def plan(self, sim: Simulator, rng: np.random.Generator) -> list[ActionPair]:
        gain_cache: dict[int, float] = {}
        fallback = None
        out = []
        for i, a in enumerate(sim.agents):
            best_score, best_path = 0.0, None
            for _ in range(self.branches):
                path = [a.node]
                score, dist = 0.0, 0.0
                prev = -1
                for _ in range(self.depth):
                    nbrs = [v for v in sim.graph.adj[path[-1]] if v != prev]
                    if not nbrs:
                        nbrs = sim.graph.adj[path[-1]]
                    if not nbrs:
                        break
                    nxt = int(nbrs[rng.integers(len(nbrs))])
                    dist += sim.graph.edge_length(path[-1], nxt)
                    prev = path[-1]
                    path.append(nxt)
                    score += self._gain(sim, nxt, gain_cache) * math.exp(-self.decay_per_m * dist)
                if score > best_score and len(path) > 1:
                    best_score, best_path = score, path
            if best_path is None:
                if fallback is None:
                    fallback = self._nearest.plan(sim, rng)
                out.append(fallback[i])
                continue
            nxt = best_path[1]
            h = float(geometry.BIN_CENTERS[sim.graph.h_bin[nxt]])
            out.append(ActionPair(nxt, h, int(sim.graph.h_bin[nxt])))
        return out

    def _gain(self, sim: Simulator, node: int, cache: dict[int, float]) -> float:
        """Best-heading count of unknown cells visible through known space."""
        if node in cache:
            return cache[node]
        res = sim.res
        x, y = sim.graph.nodes[node]
        h, w = sim.belief.cells.shape
        rad = int(math.ceil(sim.sensor.range_m / res)) + 1
        r0, r1 = max(0, int(y / res) - rad), min(h, int(y / res) + rad + 1)
        c0, c1 = max(0, int(x / res) - rad), min(w, int(x / res) + rad + 1)
        box = sim.belief.cells[r0:r1, c0:c1]
        rr, cc = np.nonzero(box == UNKNOWN)
        if rr.size == 0:
            cache[node] = 0.0
            return 0.0
        blocked = np.ascontiguousarray(sim.belief.cells == OCCUPIED, dtype=np.uint8)
        flags, dxs, dys, dss, same = geometry.visible_targets(
            blocked, res, x, y, (rr + r0).astype(np.int64), (cc + c0).astype(np.int64),
            sim.sensor.range_m)
        counts = geometry.bin_counts(flags, dxs, dys, dss, same,
                                     geometry.BIN_UX, geometry.BIN_UY,
                                     sim.sensor.cos_half_fov)
        cache[node] = float(counts.max())
        return cache[node]


class RandomPlanner:
    """Uniform choice over the pruned action pairs (the efficacy baseline)."""

    name = "random"

    def plan(self, sim: Simulator, rng: np.random.Generator) -> list[ActionPair]:
        return [pairs[rng.integers(len(pairs))] for pairs in sim.pairs]


class PolicyPlanner:
    """Greedy decoding of a trained graph-attention policy checkpoint."""

    name = "policy"

    def __init__(self, checkpoint: str, stochastic: bool = False):
        from .neural import load_policy
        self.net, self.meta = load_policy(checkpoint)
        self.stochastic = stochastic

    def plan(self, sim: Simulator, rng: np.random.Generator) -> list[ActionPair]:
        import torch

        from .training import obs_to_tensors

        out = []
        with torch.no_grad():
            for i in range(sim.n_agents):
                obs = sim.policy_obs(i)
                logp = self.net(*obs_to_tensors(obs)).squeeze(0)
                if self.stochastic:
                    probs = logp.exp().numpy().astype(np.float64)
                    probs /= probs.sum()
                    k = int(rng.choice(len(probs), p=probs))
                else:
                    k = int(torch.argmax(logp))
                out.append(sim.pairs[i][k])
        return out


def make_planner(name: str, params: dict | None = None):
    params = dict(params or {})
    table = {
        "nearest": NearestPlanner,
        "greedy": GreedyPlanner,
        "mmpf": MMPFPlanner,
        "nbvp": NBVPPlanner,
        "random": RandomPlanner,
        "policy": PolicyPlanner,
    }
    if name not in table:
        raise ValueError(f"unknown planner '{name}' (choose from {sorted(table)})")
    return table[name](**params)
