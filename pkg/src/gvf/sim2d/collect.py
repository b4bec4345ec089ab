"""Random-action and policy-rollout data collection."""

from __future__ import annotations

import numpy as np

from gvf.sim2d.render import render_to_u8
from gvf.sim2d.trajectory import Trajectory
from gvf.sim2d.world import Action, SimConfig, SimState, TaskSpec, sample_scene, step


def rollout_actions(state: SimState, actions: np.ndarray, cfg: SimConfig,
                    source: str = "random") -> Trajectory:
    """Execute a fixed [T, 4] action array from a state, recording everything."""
    frames = [render_to_u8(state, cfg)]
    states = [state.eef.as_array()]
    executed = []
    for a in actions:
        act = Action.from_array(a).clipped(cfg)
        state = step(state, act, cfg)
        frames.append(render_to_u8(state, cfg))
        states.append(state.eef.as_array())
        executed.append(act.as_array())
    return Trajectory(np.stack(frames), np.stack(states),
                      np.stack(executed) if executed else np.zeros((0, 4)), source)


def random_actions(rng: np.random.Generator, length: int, cfg: SimConfig,
                   sigma_scale: float = 0.45) -> np.ndarray:
    """Gaussian actions with a per-trajectory Gaussian drift in xy.

    The drift keeps exploration ballistic rather than diffusive; the marginal
    action distribution stays Gaussian.
    """
    sig = np.array([cfg.limit_xy, cfg.limit_xy, 0.7 * cfg.limit_z, cfg.limit_yaw]) * sigma_scale
    drift = np.zeros(4)
    drift[:2] = rng.normal(0.0, 0.45 * cfg.limit_xy, size=2)
    acts = drift + rng.normal(0.0, 1.0, size=(length, 4)) * sig
    lim = np.array([cfg.limit_xy, cfg.limit_xy, cfg.limit_z, cfg.limit_yaw])
    return np.clip(acts, -lim, lim)


def _random_start(state: SimState, rng: np.random.Generator, cfg: SimConfig) -> SimState:
    """Random-collection episodes start near the table, where contact happens.

    Half the episodes also spawn the gripper near the tool: the desk-scale
    workspace is far sparser than a cluttered robot bin, and without this the
    incidental-grasp rate collapses.
    """
    from dataclasses import replace

    z0 = float(rng.uniform(0.02, 0.45 * cfg.z_max))
    eef = replace(state.eef, z=z0)
    tools = state.tool_objects()
    if tools and rng.uniform() < 0.5:
        pos = tools[0].world_grasp_point() + rng.normal(0.0, 0.09, size=2)
        pos = np.clip(pos, 0.05, cfg.workspace - 0.05)
        eef = replace(eef, x=float(pos[0]), y=float(pos[1]))
    return replace(state, eef=eef)


def _episode_setup(child, spec: TaskSpec, cfg: SimConfig, length: int):
    rng = np.random.default_rng(child)
    scene_seed = int(rng.integers(0, 2 ** 31))
    state = _random_start(sample_scene(scene_seed, spec, cfg), rng, cfg)
    return state, random_actions(rng, length, cfg)


def collect_random(spec: TaskSpec, n: int, seed: int, cfg: SimConfig,
                   length: int = 30) -> list[Trajectory]:
    """n random-Gaussian-action trajectories with the grasp reflex active."""
    if n < 1:
        raise ValueError("n must be >= 1")
    out = []
    root = np.random.SeedSequence((seed, 0xC011))
    for child in root.spawn(n):
        state, actions = _episode_setup(child, spec, cfg, length)
        out.append(rollout_actions(state, actions, cfg, "random"))
    return out


def random_attach_fraction(spec: TaskSpec, n: int, seed: int, cfg: SimConfig,
                           length: int = 30) -> float:
    """Fraction of collect_random episodes that end with a tool attached.

    Runs the exact episode distribution of collect_random, skipping rendering.
    """
    root = np.random.SeedSequence((seed, 0xC011))
    attached = 0
    for child in root.spawn(n):
        state, actions = _episode_setup(child, spec, cfg, length)
        for a in actions:
            state = step(state, Action.from_array(a), cfg)
        attached += state.attached is not None
    return attached / n
