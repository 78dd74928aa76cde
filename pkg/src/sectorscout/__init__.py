"""Deterministic 2D multi-robot exploration with sector field-of-view sensors.

Library layout mirrors the pipeline: world (grids/sensing/maps), frontier
(information measures), graph (viewpoint graph), action (pruning, motion),
reward, neural (attention policy/critic), training (discrete SAC),
baselines (nearest/MMPF/NBVP/greedy), bench (metrics, reports) and
configio (YAML configs, seed streams).
"""

__version__ = "0.1.0"
