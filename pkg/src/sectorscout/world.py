"""Ground-truth grids, per-agent beliefs, sector sensing and map files.

Cell labels: UNKNOWN=0 (beliefs only), FREE=1, OCCUPIED=2.  Beliefs are
noise-free: a known cell always carries the ground-truth label, so known
regions of different agents can never disagree.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import geometry

UNKNOWN = 0
FREE = 1
OCCUPIED = 2

DEFAULT_RESOLUTION = 0.5  # meters per cell


class MapGenerationError(RuntimeError):
    pass


class MapParseError(ValueError):
    pass


@dataclass
class OccupancyGrid:
    """Ground-truth raster; every cell is FREE or OCCUPIED."""

    cells: np.ndarray  # int8 (H, W)
    resolution: float = DEFAULT_RESOLUTION
    start_region: tuple[float, float, float, float] | None = None  # (x, y, w, h) meters

    def __post_init__(self):
        self.cells = np.ascontiguousarray(self.cells, dtype=np.int8)
        if self.resolution <= 0:
            raise ValueError("resolution must be > 0")
        bad = ~np.isin(self.cells, (FREE, OCCUPIED))
        if bad.any():
            raise ValueError("occupancy grid cells must be FREE or OCCUPIED")

    @property
    def height_cells(self) -> int:
        return self.cells.shape[0]

    @property
    def width_cells(self) -> int:
        return self.cells.shape[1]

    @property
    def extent(self) -> tuple[float, float]:
        return (self.width_cells * self.resolution, self.height_cells * self.resolution)

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        return (int(math.floor(y / self.resolution)), int(math.floor(x / self.resolution)))

    def occupied_mask(self) -> np.ndarray:
        return (self.cells == OCCUPIED).astype(np.uint8)

    def __eq__(self, other) -> bool:
        return (isinstance(other, OccupancyGrid)
                and self.resolution == other.resolution
                and np.array_equal(self.cells, other.cells))


@dataclass
class Belief:
    """Per-agent (or merged) belief raster over the same geometry as the map."""

    cells: np.ndarray  # int8 (H, W), UNKNOWN/FREE/OCCUPIED
    resolution: float = DEFAULT_RESOLUTION

    def __post_init__(self):
        self.cells = np.ascontiguousarray(self.cells, dtype=np.int8)

    @classmethod
    def unknown_like(cls, grid: OccupancyGrid) -> "Belief":
        return cls(np.zeros_like(grid.cells), grid.resolution)

    def copy(self) -> "Belief":
        return Belief(self.cells.copy(), self.resolution)

    def known_count(self) -> int:
        return int((self.cells != UNKNOWN).sum())

    def counts(self) -> tuple[int, int, int]:
        """(free, occupied, unknown) cell counts."""
        free = int((self.cells == FREE).sum())
        occ = int((self.cells == OCCUPIED).sum())
        unk = int((self.cells == UNKNOWN).sum())
        return free, occ, unk


@dataclass(frozen=True)
class SensorSpec:
    """2D sector footprint: range d_s, field of view, ray density."""

    range_m: float = 10.0
    fov_deg: float = 120.0
    ray_count: int = 0  # 0 -> one ray per degree of fov

    def __post_init__(self):
        if self.range_m <= 0:
            raise ValueError("sensor range must be > 0")
        if not (0.0 < self.fov_deg <= 360.0):
            raise ValueError("fov must be in (0, 360] degrees")
        if self.ray_count == 0:
            object.__setattr__(self, "ray_count", int(math.ceil(self.fov_deg)))
        if self.ray_count < math.ceil(self.fov_deg):
            raise ValueError("ray_count must be >= ceil(fov_deg) (one ray per degree)")

    @property
    def cos_half_fov(self) -> float:
        return geometry.cos_half_fov(self.fov_deg)


@dataclass
class AgentPose:
    x: float
    y: float
    heading: float = 0.0

    def __post_init__(self):
        self.heading = geometry.wrap_angle(self.heading)


def raycast_sector(grid: OccupancyGrid, pose: AgentPose, sensor: SensorSpec) -> np.ndarray:
    """Flat indices of cells visible from pose through the sector sensor.

    A cell is visible iff its center lies within the sector (range and
    angular window; the pose's own cell always qualifies) and the exact
    segment from the pose to the center crosses no occupied cell other
    than the target itself.
    """
    mask = geometry.sector_visible(
        grid.occupied_mask(), grid.resolution, pose.x, pose.y,
        math.cos(pose.heading), math.sin(pose.heading),
        sensor.cos_half_fov, sensor.range_m)
    return np.flatnonzero(mask.ravel())


def update_belief(belief: Belief, visible: np.ndarray, grid: OccupancyGrid) -> Belief:
    """New belief with each visible cell set to its ground-truth label."""
    out = belief.copy()
    update_belief_inplace(out, visible, grid)
    return out


def update_belief_inplace(belief: Belief, visible: np.ndarray, grid: OccupancyGrid) -> None:
    flat_b = belief.cells.ravel()
    flat_g = grid.cells.ravel()
    flat_b[visible] = flat_g[visible]


def merge_beliefs(beliefs: list[Belief]) -> Belief:
    """Union of known areas; known labels agree because both mirror the truth."""
    if not beliefs:
        raise ValueError("merge_beliefs needs at least one belief")
    first = beliefs[0]
    out = first.cells.copy()
    for b in beliefs[1:]:
        if b.cells.shape != first.cells.shape or b.resolution != first.resolution:
            raise ValueError("belief geometry mismatch")
        np.maximum(out, b.cells, out=out)
    return Belief(out, first.resolution)


def exploration_rate(belief: Belief, grid: OccupancyGrid) -> float:
    """|belief free| / |ground-truth free| (the completion metric, threshold 0.99)."""
    if belief.cells.shape != grid.cells.shape:
        raise ValueError("belief/grid geometry mismatch")
    total_free = int((grid.cells == FREE).sum())
    if total_free == 0:
        raise ValueError("map has no free cells")
    return float((belief.cells == FREE).sum()) / total_free


# ---------------------------------------------------------------------------
# Map generation: rooms connected by L-shaped corridors, carved out of rock.

@dataclass(frozen=True)
class MapGenParams:
    width_m: float = 30.0
    height_m: float = 30.0
    resolution: float = DEFAULT_RESOLUTION
    room_density: float = 1.0      # target rooms per 100 m^2
    room_min_m: float = 3.5
    room_max_m: float = 9.0
    corridor_w_m: float = 3.0      # wide enough for the 2 m viewpoint lattice
    start_size_m: float = 6.0
    max_retries: int = 25

    def __post_init__(self):
        if self.width_m <= 0 or self.height_m <= 0 or self.resolution <= 0:
            raise ValueError("map extent and resolution must be positive")
        if self.corridor_w_m / self.resolution < 3.0 - 1e-9:
            raise ValueError("corridor width must be at least 3 cells")
        if self.room_density < 0:
            raise ValueError("room density must be >= 0")


def _carve(cells: np.ndarray, r0: int, c0: int, r1: int, c1: int) -> None:
    h, w = cells.shape
    r0 = max(1, r0)
    c0 = max(1, c0)
    r1 = min(h - 2, r1)
    c1 = min(w - 2, c1)
    if r1 >= r0 and c1 >= c0:
        cells[r0:r1 + 1, c0:c1 + 1] = FREE


def _fill_slivers(cells: np.ndarray) -> None:
    """Refill free runs thinner than 3 cells (3x3 morphological opening).

    Carved rooms can end up a cell or two apart, leaving slit passages no
    viewpoint can be placed in or see down; those are walls, not rooms.
    """
    free = cells == FREE
    padded = np.zeros((free.shape[0] + 2, free.shape[1] + 2), dtype=bool)
    padded[1:-1, 1:-1] = free
    eroded = np.ones_like(free)
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            eroded &= padded[1 + dr:padded.shape[0] - 1 + dr,
                             1 + dc:padded.shape[1] - 1 + dc]
    opened = np.zeros_like(free)
    er_pad = np.zeros_like(padded)
    er_pad[1:-1, 1:-1] = eroded
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            opened |= er_pad[1 + dr:padded.shape[0] - 1 + dr,
                             1 + dc:padded.shape[1] - 1 + dc]
    cells[free & ~opened] = OCCUPIED


def _flood_free(cells: np.ndarray, seed_rc: tuple[int, int]) -> np.ndarray:
    """4-connected free component containing seed (bool mask)."""
    h, w = cells.shape
    seen = np.zeros((h, w), dtype=bool)
    stack = [seed_rc]
    if cells[seed_rc] != FREE:
        return seen
    seen[seed_rc] = True
    while stack:
        r, c = stack.pop()
        for nr, nc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
            if 0 <= nr < h and 0 <= nc < w and not seen[nr, nc] and cells[nr, nc] == FREE:
                seen[nr, nc] = True
                stack.append((nr, nc))
    return seen


def generate_map(seed: int, params: MapGenParams = MapGenParams()) -> OccupancyGrid:
    """Deterministic rooms-and-corridors map with a connected free region.

    room_density == 0 degenerates to an open box (boundary walls only).
    Retries with a derived seed when carving leaves the free space
    disconnected; raises MapGenerationError when retries are exhausted.
    """
    res = params.resolution
    w = int(round(params.width_m / res))
    h = int(round(params.height_m / res))
    if w < 8 or h < 8:
        raise ValueError("map too small to generate")

    start_cells = max(4, int(round(params.start_size_m / res)))
    sr0 = h // 2 - start_cells // 2
    sc0 = w // 2 - start_cells // 2
    start_region = (sc0 * res, sr0 * res, start_cells * res, start_cells * res)

    if params.room_density == 0:
        cells = np.full((h, w), FREE, dtype=np.int8)
        cells[0, :] = OCCUPIED
        cells[-1, :] = OCCUPIED
        cells[:, 0] = OCCUPIED
        cells[:, -1] = OCCUPIED
        return OccupancyGrid(cells, res, start_region)

    n_rooms = max(1, int(round(params.room_density * params.width_m * params.height_m / 100.0)))
    cw = max(3, int(round(params.corridor_w_m / res)))

    for attempt in range(params.max_retries):
        rng = np.random.default_rng(np.random.SeedSequence((int(seed), attempt)))
        cells = np.full((h, w), OCCUPIED, dtype=np.int8)

        # Start room, centered; all corridors grow out of connected rooms.
        _carve(cells, sr0, sc0, sr0 + start_cells - 1, sc0 + start_cells - 1)
        centers = [(sr0 + start_cells // 2, sc0 + start_cells // 2)]

        for _ in range(n_rooms):
            rw = int(rng.integers(round(params.room_min_m / res), round(params.room_max_m / res) + 1))
            rh = int(rng.integers(round(params.room_min_m / res), round(params.room_max_m / res) + 1))
            r0 = int(rng.integers(1, max(2, h - rh - 1)))
            c0 = int(rng.integers(1, max(2, w - rw - 1)))
            _carve(cells, r0, c0, r0 + rh - 1, c0 + rw - 1)
            cr, cc = r0 + rh // 2, c0 + rw // 2

            # L corridor to the nearest already-placed room center.
            near = min(centers, key=lambda p: (p[0] - cr) ** 2 + (p[1] - cc) ** 2)
            half = cw // 2
            if rng.integers(2) == 0:
                _carve(cells, cr - half, min(cc, near[1]) - half, cr - half + cw - 1, max(cc, near[1]) + half)
                _carve(cells, min(cr, near[0]) - half, near[1] - half, max(cr, near[0]) + half, near[1] - half + cw - 1)
            else:
                _carve(cells, min(cr, near[0]) - half, cc - half, max(cr, near[0]) + half, cc - half + cw - 1)
                _carve(cells, near[0] - half, min(cc, near[1]) - half, near[0] - half + cw - 1, max(cc, near[1]) + half)
            centers.append((cr, cc))

        _fill_slivers(cells)
        comp = _flood_free(cells, centers[0])
        if comp.sum() == (cells == FREE).sum() and comp.sum() > 0:
            return OccupancyGrid(cells, res, start_region)

    raise MapGenerationError(f"no connected free space after {params.max_retries} attempts (seed={seed})")


# ---------------------------------------------------------------------------
# PGM (P2, ASCII) map files with a JSON sidecar for resolution/start region.

def _sidecar_path(path: Path) -> Path:
    return path.with_suffix(".json")


def save_map(grid: OccupancyGrid, path: str | Path) -> None:
    """Write PGM-P2 (255=free, 0=occupied, top row = max y) plus sidecar JSON."""
    path = Path(path)
    lines = ["P2", f"{grid.width_cells} {grid.height_cells}", "255"]
    for r in range(grid.height_cells - 1, -1, -1):
        row = grid.cells[r]
        lines.append(" ".join("255" if v == FREE else "0" for v in row))
    path.write_text("\n".join(lines) + "\n")
    sidecar = {"resolution": grid.resolution,
               "start_region": list(grid.start_region) if grid.start_region else None}
    _sidecar_path(path).write_text(json.dumps(sidecar, indent=2) + "\n")


def load_map(path: str | Path) -> OccupancyGrid:
    """Parse a PGM-P2 map; pixel >= 128 is free.  Errors name line numbers."""
    path = Path(path)
    tokens: list[tuple[str, int]] = []  # (token, line_no)
    for ln, line in enumerate(path.read_text().splitlines(), start=1):
        body = line.split("#", 1)[0]
        for tok in body.split():
            tokens.append((tok, ln))
    if not tokens or tokens[0][0] != "P2":
        raise MapParseError(f"{path}: line 1: expected PGM magic 'P2'")
    if len(tokens) < 4:
        raise MapParseError(f"{path}: truncated header")

    def _int_at(i: int, what: str) -> int:
        tok, ln = tokens[i]
        try:
            return int(tok)
        except ValueError:
            raise MapParseError(f"{path}: line {ln}: {what} is not an integer: {tok!r}") from None

    w = _int_at(1, "width")
    h = _int_at(2, "height")
    maxval = _int_at(3, "maxval")
    if w <= 0 or h <= 0:
        raise MapParseError(f"{path}: line {tokens[1][1]}: non-positive dimensions {w}x{h}")
    if maxval <= 0 or maxval > 65535:
        raise MapParseError(f"{path}: line {tokens[3][1]}: bad maxval {maxval}")
    n_pix = len(tokens) - 4
    if n_pix != w * h:
        raise MapParseError(
            f"{path}: pixel count {n_pix} does not match header {w}x{h} (offset {n_pix})")
    cells = np.empty((h, w), dtype=np.int8)
    for i in range(w * h):
        tok, ln = tokens[4 + i]
        try:
            v = int(tok)
        except ValueError:
            raise MapParseError(f"{path}: line {ln}: pixel {i} is not an integer: {tok!r}") from None
        if v < 0 or v > maxval:
            raise MapParseError(f"{path}: line {ln}: pixel {i} value {v} outside [0, {maxval}]")
        r = h - 1 - (i // w)
        cells[r, i % w] = FREE if v >= 128 else OCCUPIED

    resolution = DEFAULT_RESOLUTION
    start_region = None
    sidecar = _sidecar_path(path)
    if sidecar.exists():
        meta = json.loads(sidecar.read_text())
        resolution = float(meta.get("resolution", DEFAULT_RESOLUTION))
        sr = meta.get("start_region")
        start_region = tuple(float(v) for v in sr) if sr else None
    return OccupancyGrid(cells, resolution, start_region)
