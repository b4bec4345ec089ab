"""Top-down rasterizer: fixed role colors, 2x supersampling, 1/255 quantization.

Frames are float arrays in [0, 1] whose values lie exactly on the uint8 grid,
so dataset round-trips through raw bytes are lossless.
"""

from __future__ import annotations

import numpy as np

from gvf.sim2d import geometry as geo
from gvf.sim2d.world import SimConfig, SimState

TABLE_COLOR = np.array([0.93, 0.91, 0.86])
TOOL_COLOR = np.array([0.16, 0.38, 0.82])
DEBRIS_COLOR = np.array([0.86, 0.26, 0.10])
GRIPPER_LOW = np.array([0.05, 0.28, 0.10])
GRIPPER_HIGH = np.array([0.58, 0.82, 0.60])
GRIPPER_CLOSED_DOT = np.array([0.97, 0.97, 0.97])

_SS = 2  # supersampling factor


def _grid(cfg: SimConfig):
    n = cfg.image_size * _SS
    # pixel centers in world units; row == y, col == x
    coords = (np.arange(n) + 0.5) * (cfg.workspace / n)
    xs, ys = np.meshgrid(coords, coords)  # [n, n]
    return xs, ys


def _fill_disk(img, xs, ys, center, radius, color):
    mask = (xs - center[0]) ** 2 + (ys - center[1]) ** 2 <= radius * radius
    img[mask] = color


def _fill_poly(img, xs, ys, poly, color):
    mask = np.ones(xs.shape, dtype=bool)
    v2 = np.roll(poly, -1, axis=0)
    for (x1, y1), (x2, y2) in zip(poly, v2):
        cross = (x2 - x1) * (ys - y1) - (y2 - y1) * (xs - x1)
        mask &= cross >= 0
    img[mask] = color


def render(state: SimState, cfg: SimConfig) -> np.ndarray:
    """Rasterize to [H, W, 3] float64 in [0, 1] (values on the 1/255 grid)."""
    xs, ys = _grid(cfg)
    img = np.empty((*xs.shape, 3))
    img[:] = TABLE_COLOR
    for tool in state.tool_objects():
        for part in tool.world_parts():
            _fill_poly(img, xs, ys, part, TOOL_COLOR)
    for d in state.debris_objects():
        _fill_disk(img, xs, ys, d.xy, d.radius, DEBRIS_COLOR)
    eef = state.eef
    t = np.clip(eef.z / cfg.z_max, 0.0, 1.0)
    gcol = GRIPPER_LOW * (1 - t) + GRIPPER_HIGH * t
    _fill_disk(img, xs, ys, eef.xy, cfg.gripper_radius, gcol)
    if eef.closed:
        _fill_disk(img, xs, ys, eef.xy, cfg.gripper_radius * 0.38, GRIPPER_CLOSED_DOT)
    # average the supersampled grid down to the target resolution
    h = cfg.image_size
    img = img.reshape(h, _SS, h, _SS, 3).mean(axis=(1, 3))
    return np.round(img * 255.0) / 255.0


def render_to_u8(state: SimState, cfg: SimConfig) -> np.ndarray:
    return np.round(render(state, cfg) * 255.0).astype(np.uint8)


def frame_from_u8(u8: np.ndarray) -> np.ndarray:
    return u8.astype(np.float64) / 255.0
