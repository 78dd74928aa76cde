"""Frontier extraction and orientation-dependent information measures.

A frontier is a known-free cell with at least one unknown 4-neighbor.
Observability is evaluated against a belief: both occupied and unknown
cells block line of sight (a sensor gets no credit for seeing through
space it has not mapped).  Counts are normalized by the number of cells
a sector footprint covers on an empty map, so one normalizer serves the
utility u, the 36-bin frontier distribution and the rewards.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from . import geometry
from .geometry import BIN_CENTERS, BIN_UX, BIN_UY, N_BINS
from .world import FREE, OCCUPIED, UNKNOWN, Belief, SensorSpec


def extract_frontiers(belief: Belief) -> np.ndarray:
    """Sorted flat indices of free belief cells 4-adjacent to an unknown cell."""
    cells = belief.cells
    free = cells == FREE
    unknown = cells == UNKNOWN
    near_unknown = np.zeros_like(free)
    near_unknown[1:, :] |= unknown[:-1, :]
    near_unknown[:-1, :] |= unknown[1:, :]
    near_unknown[:, 1:] |= unknown[:, :-1]
    near_unknown[:, :-1] |= unknown[:, 1:]
    return np.flatnonzero(free & near_unknown)


@lru_cache(maxsize=32)
def sector_cell_count(range_m: float, fov_deg: float, resolution: float) -> int:
    """Cells in one sector footprint on an empty map (the normalizer N_max).

    Counted from a cell-center pose at heading 0; the pose's own cell is
    included (it bypasses the angle test, as everywhere else).
    """
    cos_half = geometry.cos_half_fov(fov_deg)
    rad = int(math.ceil(range_m / resolution)) + 1
    n = 0
    for dr in range(-rad, rad + 1):
        for dc in range(-rad, rad + 1):
            dx = dc * resolution
            dy = dr * resolution
            d2 = dx * dx + dy * dy
            if d2 > range_m * range_m:
                continue
            if dr == 0 and dc == 0:
                n += 1
                continue
            if dx >= cos_half * math.sqrt(d2):
                n += 1
    return n


def max_observable(sensor: SensorSpec, resolution: float) -> int:
    return sector_cell_count(sensor.range_m, sensor.fov_deg, resolution)


def _targets_rc(belief: Belief, frontiers: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    w = belief.cells.shape[1]
    return (frontiers // w).astype(np.int64), (frontiers % w).astype(np.int64)


def _los_flags(belief: Belief, frontiers: np.ndarray, node: tuple[float, float],
               sensor: SensorSpec, blocked: np.ndarray | None = None):
    if blocked is None:
        blocked = (belief.cells != FREE).astype(np.uint8)
    t_r, t_c = _targets_rc(belief, frontiers)
    return geometry.visible_targets(blocked, belief.resolution, node[0], node[1],
                                    t_r, t_c, sensor.range_m)


def observable_frontier_cells(belief: Belief, frontiers: np.ndarray,
                              node: tuple[float, float], heading: float,
                              sensor: SensorSpec,
                              blocked: np.ndarray | None = None) -> np.ndarray:
    """Frontier cells visible from node within the sector facing `heading`."""
    if frontiers.size == 0:
        return frontiers[:0]
    flags, dxs, dys, dss, same = _los_flags(belief, frontiers, node, sensor, blocked)
    inside = geometry.heading_counts(flags, dxs, dys, dss, same,
                                     math.cos(heading), math.sin(heading),
                                     sensor.cos_half_fov)
    return frontiers[inside.astype(bool)]


def observable_frontiers(belief: Belief, frontiers: np.ndarray,
                         node: tuple[float, float], heading: float,
                         sensor: SensorSpec) -> int:
    """Number of frontier cells observable from node at the given heading."""
    return int(observable_frontier_cells(belief, frontiers, node, heading, sensor).size)


def frontier_bin_counts(belief: Belief, frontiers: np.ndarray,
                        node: tuple[float, float], sensor: SensorSpec,
                        blocked: np.ndarray | None = None) -> np.ndarray:
    """Observable-frontier counts for all 36 heading bins (raw, unnormalized)."""
    if frontiers.size == 0:
        return np.zeros(N_BINS, dtype=np.int64)
    flags, dxs, dys, dss, same = _los_flags(belief, frontiers, node, sensor, blocked)
    return geometry.bin_counts(flags, dxs, dys, dss, same, BIN_UX, BIN_UY,
                               sensor.cos_half_fov)


def frontier_distribution(belief: Belief, frontiers: np.ndarray,
                          node: tuple[float, float], sensor: SensorSpec) -> np.ndarray:
    """36-bin normalized frontier distribution F at a node, clamped to [0, 1]."""
    counts = frontier_bin_counts(belief, frontiers, node, sensor)
    n_max = max_observable(sensor, belief.resolution)
    return np.minimum(counts.astype(np.float64) / n_max, 1.0)


def informative_heading(dist: np.ndarray) -> float:
    """Center heading of the argmax bin; ties go to the smallest bin index."""
    return float(BIN_CENTERS[int(np.argmax(dist))])
