"""World state, scene sampling, and the quasi-static step rule.

Pushing is positional: the gripper (when low) and an attached tool (when
low) are immovable within a step; debris disks overlapping them are
projected out along the contact normal, then debris-debris and
debris-static-tool overlaps are relaxed over a fixed number of passes.
No velocities or friction are modeled; determinism is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from gvf.sim2d import geometry as geo


@dataclass(frozen=True)
class SimConfig:
    image_size: int = 48
    workspace: float = 1.0
    z_max: float = 0.3
    z_grasp: float = 0.06       # reflex: gripper closes below this height
    z_contact: float = 0.12     # below this, gripper/held tool touch the table plane
    hover_z: float = 0.24
    gripper_radius: float = 0.042
    grasp_radius: float = 0.08
    limit_xy: float = 0.08      # per-step action limits
    limit_z: float = 0.08
    limit_yaw: float = 0.3
    contact_slack: float = 2e-4
    push_passes: int = 16
    overlap_tol: float = 1e-3
    reflex_enabled: bool = True


@dataclass(frozen=True)
class EefState:
    x: float
    y: float
    z: float
    yaw: float
    closed: bool = False

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z, self.yaw, float(self.closed)])

    @staticmethod
    def from_array(a) -> "EefState":
        return EefState(float(a[0]), float(a[1]), float(a[2]), float(a[3]), bool(a[4] > 0.5))


@dataclass(frozen=True)
class Action:
    dx: float = 0.0
    dy: float = 0.0
    dz: float = 0.0
    dyaw: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.dx, self.dy, self.dz, self.dyaw])

    @staticmethod
    def from_array(a) -> "Action":
        return Action(float(a[0]), float(a[1]), float(a[2]), float(a[3]))

    def clipped(self, cfg: SimConfig) -> "Action":
        return Action(
            float(np.clip(self.dx, -cfg.limit_xy, cfg.limit_xy)),
            float(np.clip(self.dy, -cfg.limit_xy, cfg.limit_xy)),
            float(np.clip(self.dz, -cfg.limit_z, cfg.limit_z)),
            float(np.clip(self.dyaw, -cfg.limit_yaw, cfg.limit_yaw)),
        )


# body-frame tool geometry: convex parts, grasp point, sweep anchor (center of
# the pushing face) and the body-frame direction the face pushes along
_TOOL_DEFS = {
    "stick": dict(
        parts=(geo.rect(0.015, 0.0, 0.110, 0.020),),
        grasp=(-0.080, 0.0), anchor=(0.040, 0.0), face=(0.0, 1.0), reach=0.020,
    ),
    "l_hook": dict(
        parts=(geo.rect(0.010, 0.0, 0.105, 0.018),
               geo.rect(0.097, 0.045, 0.018, 0.055)),
        grasp=(-0.080, 0.0), anchor=(0.030, 0.0), face=(0.0, 1.0), reach=0.018,
    ),
    "t_sweeper": dict(
        parts=(geo.rect(-0.020, 0.0, 0.080, 0.015),
               geo.rect(0.075, 0.0, 0.018, 0.105)),
        grasp=(-0.085, 0.0), anchor=(0.075, 0.0), face=(1.0, 0.0), reach=0.018,
    ),
}

TOOL_FAMILIES = tuple(sorted(_TOOL_DEFS))


@dataclass(frozen=True)
class RigidObject:
    id: int
    kind: str                       # tool | debris
    shape: str                      # disk | stick | l_hook | t_sweeper
    pose: tuple                     # (x, y, theta)
    radius: float = 0.0             # debris only
    grasp_point: tuple | None = None

    @property
    def xy(self) -> np.ndarray:
        return np.array(self.pose[:2])

    @property
    def theta(self) -> float:
        return self.pose[2]

    def body_parts(self):
        return _TOOL_DEFS[self.shape]["parts"]

    def world_parts(self):
        x, y, th = self.pose
        return [geo.transform_pts(p, x, y, th) for p in self.body_parts()]

    def world_grasp_point(self) -> np.ndarray:
        x, y, th = self.pose
        return geo.transform_pts(np.array([self.grasp_point]), x, y, th)[0]

    def world_anchor(self) -> np.ndarray:
        x, y, th = self.pose
        a = np.array([_TOOL_DEFS[self.shape]["anchor"]])
        return geo.transform_pts(a, x, y, th)[0]

    def bound_radius(self) -> float:
        if self.kind == "debris":
            return self.radius
        return float(max(np.linalg.norm(np.vstack(self.body_parts()), axis=1))) + 1e-6


@dataclass(frozen=True)
class SimState:
    eef: EefState
    objects: tuple
    attached: int | None = None
    attach_rel: tuple | None = None   # (rx, ry, rtheta) tool pose in eef frame
    rng_seed: int = 0

    def tool_objects(self):
        return [o for o in self.objects if o.kind == "tool"]

    def debris_objects(self):
        return [o for o in self.objects if o.kind == "debris"]

    def get(self, oid: int) -> RigidObject:
        for o in self.objects:
            if o.id == oid:
                return o
        raise KeyError(oid)


def wrap_angle(a: float) -> float:
    return (a + math.pi) % (2 * math.pi) - math.pi


def compose_pose(eef: EefState, rel: tuple) -> tuple:
    c, s = math.cos(eef.yaw), math.sin(eef.yaw)
    rx, ry, rth = rel
    return (eef.x + c * rx - s * ry, eef.y + s * rx + c * ry, eef.yaw + rth)


def relative_pose(eef: EefState, pose: tuple) -> tuple:
    dx, dy = pose[0] - eef.x, pose[1] - eef.y
    c, s = math.cos(-eef.yaw), math.sin(-eef.yaw)
    return (c * dx - s * dy, s * dx + c * dy, pose[2] - eef.yaw)


# ---------------------------------------------------------------------------
# step


def _active_mover_parts(state: SimState, cfg: SimConfig):
    """World-frame shapes that push debris this step."""
    movers = []
    if state.eef.z < cfg.z_contact:
        movers.append(("disk", state.eef.xy, cfg.gripper_radius))
        if state.attached is not None:
            for part in state.get(state.attached).world_parts():
                movers.append(("poly", part, 0.0))
    return movers


def _resolve_debris(positions, radii, movers, static_parts, cfg: SimConfig):
    """Project debris out of movers / statics / each other. Mutates positions."""
    n = len(positions)
    lo = np.array([0.0, 0.0])
    hi = np.array([cfg.workspace, cfg.workspace])

    def clamp(i):
        positions[i] = np.clip(positions[i], lo + radii[i], hi - radii[i])

    def resolve_against_shape(i, shape) -> bool:
        kind, a, b = shape
        if kind == "disk":
            pen = geo.disk_disk_penetration(a, b, positions[i], radii[i])
        else:
            pen = geo.disk_poly_penetration(positions[i], radii[i], a)
        if pen is None:
            return False
        depth, normal = pen
        positions[i] = positions[i] + normal * (depth + cfg.contact_slack)
        clamp(i)
        return True

    for _ in range(cfg.push_passes):
        moved = False
        for i in range(n):
            for shape in movers:
                moved |= resolve_against_shape(i, shape)
            for part in static_parts:
                moved |= resolve_against_shape(i, ("poly", part, 0.0))
            for j in range(n):
                if j == i:
                    continue
                pen = geo.disk_disk_penetration(positions[i], radii[i], positions[j], radii[j])
                if pen is not None:
                    depth, normal = pen
                    shift = normal * (0.5 * depth + 0.5 * cfg.contact_slack)
                    positions[j] = positions[j] + shift
                    positions[i] = positions[i] - shift
                    clamp(i)
                    clamp(j)
                    moved = True
        if not moved:
            break

    # wall-press fallback: normal projection undone by the workspace clamp;
    # slide tangentially along the blocking face instead
    for i in range(n):
        for shape in movers + [("poly", p, 0.0) for p in static_parts]:
            kind, a, b = shape
            if kind == "disk":
                pen = geo.disk_disk_penetration(a, b, positions[i], radii[i])
                if pen is None:
                    continue
                depth, normal = pen
            else:
                pen = geo.disk_poly_penetration(positions[i], radii[i], a)
                if pen is None:
                    continue
                depth, normal = pen
            if depth <= cfg.overlap_tol:
                continue
            tangent = np.array([-normal[1], normal[0]])
            best = None
            for d in (tangent, -tangent):
                if kind == "disk":
                    # |p - c + t d| = r1 + r2, smallest positive root
                    rel = positions[i] - a
                    bq = float(np.dot(d, rel))
                    cq = float(np.dot(rel, rel)) - (b + radii[i]) ** 2
                    disc = bq * bq - cq
                    off = -bq + math.sqrt(disc) if disc >= 0 else None
                    if off is not None and off < 0:
                        off = None
                else:
                    off = geo.separation_offset_along(positions[i], radii[i], a, d, 0.4)
                if off is not None and (best is None or off < best[0]):
                    best = (off, d)
            if best is not None:
                positions[i] = positions[i] + (best[0] + cfg.contact_slack) * best[1]
                clamp(i)


def _substep(state: SimState, eef: EefState, cfg: SimConfig) -> SimState:
    """Teleport the eef to a nearby pose, then run reflex/attach/pushing."""
    if cfg.reflex_enabled and not eef.closed and eef.z < cfg.z_grasp:
        eef = replace(eef, closed=True)

    attached = state.attached
    attach_rel = state.attach_rel
    if attached is None and eef.closed and eef.z < cfg.z_grasp:
        for tool in state.tool_objects():
            if np.linalg.norm(tool.world_grasp_point() - eef.xy) <= cfg.grasp_radius:
                attached = tool.id
                attach_rel = relative_pose(eef, tool.pose)
                break

    objects = list(state.objects)
    if attached is not None:
        pose = compose_pose(eef, attach_rel)
        # the table edge stops the arm: keep the held tool's origin on the table
        cx = float(np.clip(pose[0], 0.0, cfg.workspace))
        cy = float(np.clip(pose[1], 0.0, cfg.workspace))
        if cx != pose[0] or cy != pose[1]:
            eef = replace(eef, x=eef.x + (cx - pose[0]), y=eef.y + (cy - pose[1]))
            pose = compose_pose(eef, attach_rel)
            pose = (float(np.clip(pose[0], 0.0, cfg.workspace)),
                    float(np.clip(pose[1], 0.0, cfg.workspace)), pose[2])
        idx = next(k for k, o in enumerate(objects) if o.id == attached)
        objects[idx] = replace(objects[idx], pose=pose)

    mid = SimState(eef, tuple(objects), attached, attach_rel, state.rng_seed)
    movers = _active_mover_parts(mid, cfg)
    static_parts = [p for o in mid.tool_objects() if o.id != attached for p in o.world_parts()]

    debris = mid.debris_objects()
    positions = [o.xy for o in debris]
    radii = [o.radius for o in debris]
    _resolve_debris(positions, radii, movers, static_parts, cfg)
    by_id = {d.id: pos for d, pos in zip(debris, positions)}
    objects = [
        replace(o, pose=(float(by_id[o.id][0]), float(by_id[o.id][1]), o.pose[2]))
        if o.kind == "debris" else o
        for o in mid.objects
    ]
    return SimState(eef, tuple(objects), attached, attach_rel, state.rng_seed)


# farthest point a held tool can extend from the eef; bounds rotation sweep
_MAX_TOOL_REACH = 0.25
# largest mover travel per substep; must stay below the thinnest tool face
# half-thickness plus debris radius, or debris could tunnel through
_SUBSTEP_TRAVEL = 0.012


def step(state: SimState, action: Action, cfg: SimConfig) -> SimState:
    """Advance one control step; inputs are clipped, never rejected."""
    a = action.clipped(cfg)
    eef = state.eef
    travel = max(abs(a.dx), abs(a.dy)) + abs(a.dyaw) * _MAX_TOOL_REACH
    n_sub = min(16, max(1, int(math.ceil(travel / _SUBSTEP_TRAVEL))))
    for k in range(1, n_sub + 1):
        f = k / n_sub
        sub_eef = EefState(
            x=float(np.clip(eef.x + f * a.dx, 0.0, cfg.workspace)),
            y=float(np.clip(eef.y + f * a.dy, 0.0, cfg.workspace)),
            z=float(np.clip(eef.z + f * a.dz, 0.0, cfg.z_max)),
            yaw=eef.yaw + f * a.dyaw,
            closed=state.eef.closed,
        )
        state = _substep(state, sub_eef, cfg)
    return state


def max_overlap(state: SimState, cfg: SimConfig, include_gripper: bool = True) -> float:
    """Deepest pairwise penetration among objects (and gripper when low)."""
    worst = 0.0
    debris = state.debris_objects()
    for i, d in enumerate(debris):
        for e in debris[i + 1:]:
            pen = geo.disk_disk_penetration(d.xy, d.radius, e.xy, e.radius)
            if pen:
                worst = max(worst, pen[0])
        for tool in state.tool_objects():
            for part in tool.world_parts():
                pen = geo.disk_poly_penetration(d.xy, d.radius, part)
                if pen:
                    worst = max(worst, pen[0])
        if include_gripper and state.eef.z < cfg.z_contact:
            pen = geo.disk_disk_penetration(state.eef.xy, cfg.gripper_radius, d.xy, d.radius)
            if pen:
                worst = max(worst, pen[0])
    return worst


# ---------------------------------------------------------------------------
# scene sampling


@dataclass(frozen=True)
class TaskSpec:
    name: str = "sweep"
    tool: str = "random"            # stick | l_hook | t_sweeper | random | none
    debris_count: int = 3
    debris_radius: float = 0.028
    cluster_radius: float = 0.05
    goal_distance: tuple = (0.22, 0.34)
    goal_radius: float = 0.11
    margin: float = 0.14


@dataclass(frozen=True)
class TaskInstance:
    state: SimState
    goal_center: tuple
    goal_radius: float
    pile_center: tuple
    seed: int


class PlacementError(RuntimeError):
    """Scene constraints unsatisfiable after bounded rejection sampling."""


def _make_tool(rng, spec: TaskSpec, cfg: SimConfig, oid: int) -> RigidObject:
    shape = spec.tool
    if shape == "random":
        shape = TOOL_FAMILIES[rng.integers(len(TOOL_FAMILIES))]
    info = _TOOL_DEFS[shape]
    for _ in range(200):
        x = rng.uniform(spec.margin, cfg.workspace - spec.margin)
        y = rng.uniform(spec.margin, cfg.workspace - spec.margin)
        th = rng.uniform(-math.pi, math.pi)
        obj = RigidObject(oid, "tool", shape, (x, y, th), grasp_point=tuple(info["grasp"]))
        lo, hi = geo.poly_bounds(obj.world_parts())
        if lo.min() >= 0.04 and hi.max() <= cfg.workspace - 0.04:
            return obj
    raise PlacementError("could not place tool")


def sample_scene(seed: int, spec: TaskSpec, cfg: SimConfig) -> SimState:
    """Deterministic scene for (seed, spec); raises PlacementError if stuck."""
    rng = np.random.default_rng(seed)
    for _attempt in range(60):
        objects = []
        tool = None
        if spec.tool != "none":
            tool = _make_tool(rng, spec, cfg, oid=0)
            objects.append(tool)
        pile = np.array([
            rng.uniform(0.30, cfg.workspace - 0.30),
            rng.uniform(0.30, cfg.workspace - 0.30),
        ])
        placed = []
        ok = True
        for k in range(spec.debris_count):
            for _ in range(120):
                p = pile + rng.uniform(-spec.cluster_radius, spec.cluster_radius, size=2)
                cand = RigidObject(1 + k, "debris", "disk",
                                   (float(p[0]), float(p[1]), 0.0), radius=spec.debris_radius)
                if any(geo.disk_disk_penetration(q.xy, q.radius + 0.006, cand.xy, cand.radius)
                       for q in placed):
                    continue
                if tool is not None:
                    clear = 2 * cfg.gripper_radius
                    if any(geo.disk_poly_penetration(cand.xy, cand.radius + clear, part)
                           for part in tool.world_parts()):
                        continue
                placed.append(cand)
                break
            else:
                ok = False
                break
        if not ok:
            continue
        objects.extend(placed)
        # spawn the gripper clear of the grasp point so attachments are earned
        for _ in range(100):
            ex = rng.uniform(0.08, cfg.workspace - 0.08)
            ey = rng.uniform(0.08, cfg.workspace - 0.08)
            if tool is not None and np.linalg.norm(tool.world_grasp_point() - [ex, ey]) < 0.09:
                continue
            if any(np.linalg.norm(d.xy - [ex, ey]) < 0.10 for d in placed):
                continue
            break
        else:
            continue
        eef = EefState(float(ex), float(ey), cfg.hover_z, 0.0, closed=False)
        return SimState(eef, tuple(objects), rng_seed=seed)
    raise PlacementError(f"unsatisfiable scene for seed {seed}")


def make_task(seed: int, spec: TaskSpec, cfg: SimConfig) -> TaskInstance:
    """Scene plus a goal region the pile should be swept into."""
    state = sample_scene(seed, spec, cfg)
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0x60A1)))
    debris = state.debris_objects()
    pile = (np.mean([d.xy for d in debris], axis=0) if debris
            else np.array([cfg.workspace / 2] * 2))
    for _ in range(300):
        ang = rng.uniform(-math.pi, math.pi)
        dist = rng.uniform(*spec.goal_distance)
        center = pile + dist * np.array([math.cos(ang), math.sin(ang)])
        if np.any(center < spec.margin) or np.any(center > cfg.workspace - spec.margin):
            continue
        tools = state.tool_objects()
        if tools and np.linalg.norm(tools[0].xy - center) < 0.20:
            continue
        behind = pile - 0.22 * np.array([math.cos(ang), math.sin(ang)])
        if np.any(behind < 0.06) or np.any(behind > cfg.workspace - 0.06):
            continue
        return TaskInstance(state, (float(center[0]), float(center[1])),
                            spec.goal_radius, (float(pile[0]), float(pile[1])), seed)
    raise PlacementError(f"no valid goal region for seed {seed}")
