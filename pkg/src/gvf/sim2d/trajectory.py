"""Trajectory container: aligned frames, end-effector states, and actions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SOURCE_TAGS = ("demo", "random", "on_policy")


@dataclass
class Trajectory:
    frames_u8: np.ndarray   # [T+1, H, W, 3] uint8
    states: np.ndarray      # [T+1, 5] float64: x, y, z, yaw, gripper_closed
    actions: np.ndarray     # [T, 4] float64: dx, dy, dz, dyaw
    source: str

    def __post_init__(self):
        if self.source not in SOURCE_TAGS:
            raise ValueError(f"unknown source tag {self.source!r}")
        if len(self.frames_u8) != len(self.states):
            raise ValueError("frames and states must align")
        if len(self.actions) != len(self.frames_u8) - 1:
            raise ValueError("actions must be one shorter than frames")

    def __len__(self) -> int:
        return len(self.actions)

    def frames(self) -> np.ndarray:
        """Frames as float64 in [0, 1]."""
        return self.frames_u8.astype(np.float64) / 255.0
