"""Deterministic 2D top-down tabletop simulator.

A gripper with height, rigid tool objects (stick / L-hook / T-sweeper),
small debris disks, quasi-static pushing, a grasp reflex that closes the
gripper near the table, rasterized RGB rendering, a scripted waypoint
demonstrator, and random-action data collection.
"""

from gvf.sim2d.world import (
    Action,
    EefState,
    PlacementError,
    RigidObject,
    SimConfig,
    SimState,
    TaskInstance,
    TaskSpec,
    make_task,
    max_overlap,
    sample_scene,
    step,
)
from gvf.sim2d.render import render, render_to_u8
from gvf.sim2d.trajectory import Trajectory
from gvf.sim2d.demos import scripted_demo
from gvf.sim2d.collect import (
    collect_random,
    random_attach_fraction,
    rollout_actions,
)

__all__ = [
    "Action",
    "EefState",
    "PlacementError",
    "RigidObject",
    "SimConfig",
    "SimState",
    "TaskInstance",
    "TaskSpec",
    "Trajectory",
    "collect_random",
    "make_task",
    "max_overlap",
    "random_attach_fraction",
    "render",
    "render_to_u8",
    "rollout_actions",
    "sample_scene",
    "scripted_demo",
    "step",
]
