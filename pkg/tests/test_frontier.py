import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from conftest import random_grid
from sectorscout.frontier import (extract_frontiers, frontier_bin_counts,
                                  frontier_distribution, informative_heading,
                                  max_observable, observable_frontiers,
                                  sector_cell_count)
from sectorscout.geometry import BIN_CENTERS
from sectorscout.world import (FREE, OCCUPIED, UNKNOWN, Belief, OccupancyGrid,
                               SensorSpec, update_belief)


def belief_from(grid, visible):
    return update_belief(Belief.unknown_like(grid), np.asarray(visible), grid)


class TestExtract:
    def test_fully_known_has_none(self, rng):
        grid = random_grid(rng)
        b = belief_from(grid, np.arange(grid.cells.size))
        assert extract_frontiers(b).size == 0

    def test_all_unknown_has_none(self, rng):
        grid = random_grid(rng)
        assert extract_frontiers(Belief.unknown_like(grid)).size == 0

    def test_half_revealed_room_vertical_split(self):
        cells = np.full((10, 10), FREE, dtype=np.int8)
        grid = OccupancyGrid(cells, 0.5)
        left = [r * 10 + c for r in range(10) for c in range(5)]
        b = belief_from(grid, left)
        fr = extract_frontiers(b)
        # Exactly the free column adjacent to the unknown half.
        assert set(fr) == {r * 10 + 4 for r in range(10)}

    @given(st.integers(0, 2 ** 31 - 1))
    @settings(max_examples=15, deadline=None)
    def test_matches_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        grid = random_grid(rng, 15, 15)
        b = belief_from(grid, rng.integers(grid.cells.size, size=60))
        got = set(int(f) for f in extract_frontiers(b))
        assert got == oracles.frontier_cells(b.cells.tolist())


class TestNormalizer:
    def test_full_disk_count(self):
        # 360 degree sector of radius 20 cells: cells with center distance <= 20.
        n = sector_cell_count(10.0, 360.0, 0.5)
        brute = sum(1 for dr in range(-21, 22) for dc in range(-21, 22)
                    if (dr * 0.5) ** 2 + (dc * 0.5) ** 2 <= 100.0)
        assert n == brute

    def test_sector_fraction(self):
        disk = sector_cell_count(10.0, 360.0, 0.5)
        third = sector_cell_count(10.0, 120.0, 0.5)
        assert 0.30 * disk < third < 0.37 * disk


class TestObservable:
    def test_no_frontiers_zero(self, rng):
        grid = random_grid(rng)
        b = belief_from(grid, np.arange(grid.cells.size))
        sensor = SensorSpec(10, 120)
        n = observable_frontiers(b, extract_frontiers(b), (5.0, 5.0), 0.0, sensor)
        assert n == 0

    def test_single_frontier_ahead(self):
        cells = np.full((20, 20), FREE, dtype=np.int8)
        grid = OccupancyGrid(cells, 0.5)
        # Known strip along row 10; one unknown neighbor makes one frontier.
        vis = [10 * 20 + c for c in range(20)]
        b = belief_from(grid, vis)
        fr = extract_frontiers(b)
        sensor = SensorSpec(10.0, 120.0)
        node = (0.75, 5.25)  # on the strip, facing +x
        n = observable_frontiers(b, fr, node, 0.0, sensor)
        assert n >= 1

    def test_all_36_headings_match_oracle(self, rng):
        for _ in range(3):
            grid = random_grid(rng, 20, 20, p_occ=0.2)
            b = belief_from(grid, rng.integers(grid.cells.size, size=150))
            fr = extract_frontiers(b)
            free_known = np.flatnonzero((b.cells == FREE).ravel())
            if free_known.size == 0 or fr.size == 0:
                continue
            cell = int(free_known[rng.integers(free_known.size)])
            node = ((cell % 20 + 0.5) * 0.5, (cell // 20 + 0.5) * 0.5)
            sensor = SensorSpec(7.0, 120.0)
            counts = frontier_bin_counts(b, fr, node, sensor)
            for b_idx in range(36):
                want = oracles.observable_frontier_count(
                    b.cells.tolist(), set(int(f) for f in fr), node,
                    float(BIN_CENTERS[b_idx]), 120.0, 7.0, 0.5)
                assert counts[b_idx] == want, f"bin {b_idx}"

    def test_monotone_in_fov_and_range(self, rng):
        grid = random_grid(rng, 25, 25, p_occ=0.15)
        b = belief_from(grid, rng.integers(grid.cells.size, size=250))
        fr = extract_frontiers(b)
        free_known = np.flatnonzero((b.cells == FREE).ravel())
        cell = int(free_known[0])
        node = ((cell % 25 + 0.5) * 0.5, (cell // 25 + 0.5) * 0.5)
        base = observable_frontiers(b, fr, node, 1.0, SensorSpec(6.0, 90.0))
        wider = observable_frontiers(b, fr, node, 1.0, SensorSpec(6.0, 180.0))
        farther = observable_frontiers(b, fr, node, 1.0, SensorSpec(9.0, 90.0))
        assert wider >= base and farther >= base

    def test_360_heading_invariant(self, rng):
        grid = random_grid(rng, 25, 25, p_occ=0.15)
        b = belief_from(grid, rng.integers(grid.cells.size, size=250))
        fr = extract_frontiers(b)
        free_known = np.flatnonzero((b.cells == FREE).ravel())
        cell = int(free_known[-1])
        node = ((cell % 25 + 0.5) * 0.5, (cell // 25 + 0.5) * 0.5)
        sensor = SensorSpec(8.0, 360.0)
        vals = {observable_frontiers(b, fr, node, h, sensor)
                for h in (0.0, 1.0, 2.5, 4.0)}
        assert len(vals) == 1


class TestDistribution:
    def test_no_frontiers_all_zero(self, rng):
        grid = random_grid(rng)
        b = belief_from(grid, np.arange(grid.cells.size))
        d = frontier_distribution(b, extract_frontiers(b), (5.0, 5.0), SensorSpec(10, 120))
        assert (d == 0).all()

    def test_symmetric_ring_uniform_at_360(self):
        # A frontier ring around the node with a 360 sensor: all bins equal.
        cells = np.full((21, 21), FREE, dtype=np.int8)
        grid = OccupancyGrid(cells, 0.5)
        vis = [r * 21 + c for r in range(21) for c in range(21)
               if (r - 10) ** 2 + (c - 10) ** 2 <= 36]
        b = belief_from(grid, vis)
        fr = extract_frontiers(b)
        node = (10.5 * 0.5, 10.5 * 0.5)
        d = frontier_distribution(b, fr, node, SensorSpec(10.0, 360.0))
        assert len(set(d.tolist())) == 1 and d[0] > 0

    def test_values_in_unit_interval(self, rng):
        grid = random_grid(rng, 30, 30)
        b = belief_from(grid, rng.integers(grid.cells.size, size=400))
        fr = extract_frontiers(b)
        d = frontier_distribution(b, fr, (7.25, 7.25), SensorSpec(10, 120))
        assert d.shape == (36,)
        assert (d >= 0).all() and (d <= 1).all()


class TestInformativeHeading:
    def test_all_zero_ties_to_bin_zero(self):
        assert informative_heading(np.zeros(36)) == 0.0

    def test_single_bin(self):
        d = np.zeros(36)
        d[9] = 0.4
        assert informative_heading(d) == pytest.approx(math.pi / 2)

    def test_tie_break_smaller_index(self):
        d = np.zeros(36)
        d[4] = d[30] = 0.7
        assert informative_heading(d) == pytest.approx(float(BIN_CENTERS[4]))

    @given(st.lists(st.floats(0, 1), min_size=36, max_size=36),
           st.floats(0.1, 5.0))
    @settings(max_examples=50, deadline=None)
    def test_argmax_and_scale_invariance(self, bins, scale):
        d = np.array(bins)
        h = informative_heading(d)
        idx = int(np.argmax(d))
        assert h == float(BIN_CENTERS[idx])
        assert d[idx] == d.max()
        assert informative_heading(d * scale) == h
