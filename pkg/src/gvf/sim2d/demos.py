"""Scripted waypoint demonstrator: grasp the tool, sweep debris to the goal.

Phases: hover over the grasp point, descend (the reflex closes and the tool
attaches), lift, move and rotate so the tool face sits behind the pile facing
the goal, lower, sweep through the pile to the goal region, retreat. Each
waypoint is jittered with seeded Gaussian noise for diversity. The waypoints
themselves are never exposed to learners; only (frames, states, actions) are
recorded.
"""

from __future__ import annotations

import math

import numpy as np

from gvf.sim2d.render import render_to_u8
from gvf.sim2d.trajectory import Trajectory
from gvf.sim2d.world import (
    _TOOL_DEFS,
    Action,
    SimConfig,
    SimState,
    step,
    wrap_angle,
)

DEMO_MIN_STEPS = 24
DEMO_MAX_STEPS = 30


class _Episode:
    def __init__(self, state: SimState, cfg: SimConfig):
        self.cfg = cfg
        self.state = state
        self.frames = [render_to_u8(state, cfg)]
        self.states = [state.eef.as_array()]
        self.actions: list[np.ndarray] = []

    def __len__(self):
        return len(self.actions)

    def act(self, action: Action):
        self.state = step(self.state, action, self.cfg)
        self.frames.append(render_to_u8(self.state, self.cfg))
        self.states.append(self.state.eef.as_array())
        self.actions.append(action.clipped(self.cfg).as_array())

    def move_to(self, xy=None, z=None, yaw=None, tol=0.012, budget=12) -> bool:
        lim = self.cfg.limit_xy
        for _ in range(budget):
            if len(self) >= DEMO_MAX_STEPS:
                return False
            eef = self.state.eef
            ex = (xy[0] - eef.x) if xy is not None else 0.0
            ey = (xy[1] - eef.y) if xy is not None else 0.0
            ez = (z - eef.z) if z is not None else 0.0
            eyaw = wrap_angle(yaw - eef.yaw) if yaw is not None else 0.0
            if max(abs(ex), abs(ey), abs(ez)) < tol and abs(eyaw) < 0.05:
                return True
            # scale xy jointly so clipping preserves the straight-line path
            scale = min(1.0, lim / max(abs(ex), abs(ey), 1e-12))
            self.act(Action(ex * scale, ey * scale, ez, eyaw))
        eef = self.state.eef
        ex = (xy[0] - eef.x) if xy is not None else 0.0
        ey = (xy[1] - eef.y) if xy is not None else 0.0
        ez = (z - eef.z) if z is not None else 0.0
        eyaw = wrap_angle(yaw - eef.yaw) if yaw is not None else 0.0
        return max(abs(ex), abs(ey), abs(ez)) < tol and abs(eyaw) < 0.05


def _eef_target_for_anchor(anchor_target, eef_yaw, attach_rel, shape: str):
    """End-effector position that puts the held tool's sweep anchor at a point."""
    rx, ry, rth = attach_rel
    tool_theta = eef_yaw + rth
    a = np.array(_TOOL_DEFS[shape]["anchor"])
    ca, sa = math.cos(tool_theta), math.sin(tool_theta)
    anchor_off = np.array([ca * a[0] - sa * a[1], sa * a[0] + ca * a[1]])
    ce, se = math.cos(eef_yaw), math.sin(eef_yaw)
    rel_off = np.array([ce * rx - se * ry, se * rx + ce * ry])
    return np.asarray(anchor_target) - anchor_off - rel_off


def scripted_demo(state: SimState, goal_center, goal_radius: float, seed: int,
                  cfg: SimConfig) -> Trajectory | None:
    """Run the demonstrator; None when grasping fails after bounded retries."""
    tools = state.tool_objects()
    debris = state.debris_objects()
    if not tools or not debris:
        raise ValueError("scripted_demo requires a tool and at least one debris")
    tool = tools[0]
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xDE30)))
    ep = _Episode(state, cfg)

    z_sweep = 0.6 * cfg.z_grasp
    z_carry = cfg.z_contact + 0.05
    grasp_xy = tool.world_grasp_point()

    attached = False
    for _retry in range(3):
        target = grasp_xy + rng.normal(0.0, 0.010, size=2)
        ep.move_to(xy=target, z=cfg.hover_z, budget=10)
        ep.move_to(xy=target, z=z_sweep, budget=5)
        if ep.state.attached is not None:
            attached = True
            break
        ep.move_to(z=cfg.hover_z, budget=4)
        if len(ep) >= DEMO_MAX_STEPS - 8:
            break
    if not attached:
        return None

    pile = np.mean([d.xy for d in ep.state.debris_objects()], axis=0)
    spread = max(float(np.linalg.norm(d.xy - pile)) + d.radius
                 for d in ep.state.debris_objects())
    goal = np.asarray(goal_center, dtype=float)
    direction = goal - pile
    direction = direction / max(np.linalg.norm(direction), 1e-9)

    info = _TOOL_DEFS[tool.shape]
    face_angle = math.atan2(info["face"][1], info["face"][0])
    tool_theta_target = math.atan2(direction[1], direction[0]) - face_angle
    eef_yaw_target = wrap_angle(tool_theta_target - ep.state.attach_rel[2])

    standoff = spread + info["reach"] + 0.035
    behind = pile - direction * standoff + rng.normal(0.0, 0.010, size=2)
    sweep_end = goal - direction * 0.02 + rng.normal(0.0, 0.012, size=2)

    ep.move_to(z=z_carry, budget=3)
    xy_behind = _eef_target_for_anchor(behind, eef_yaw_target, ep.state.attach_rel, tool.shape)
    ep.move_to(xy=xy_behind, z=z_carry, yaw=eef_yaw_target, budget=12)
    ep.move_to(xy=xy_behind, z=z_sweep, yaw=eef_yaw_target, budget=3)
    xy_end = _eef_target_for_anchor(sweep_end, eef_yaw_target, ep.state.attach_rel, tool.shape)
    ep.move_to(xy=xy_end, z=z_sweep, yaw=eef_yaw_target, budget=10)
    ep.move_to(z=z_carry, budget=2)

    while len(ep) < DEMO_MIN_STEPS:
        ep.act(Action())
    return Trajectory(
        frames_u8=np.stack(ep.frames),
        states=np.stack(ep.states),
        actions=np.stack(ep.actions) if ep.actions else np.zeros((0, 4)),
        source="demo",
    )
