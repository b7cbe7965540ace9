"""Deterministic fixed-timestep physics for a planar robot base that carries a
front-mounted scoop and a back-mounted tray.

The robot is a 5-DOF kinematic base: planar body velocity, yaw rate, scoop
height, and scoop pitch, each tracked toward its action target by a clamped
proportional law. Objects move through the phase graph
Ground -> Carried -> Ballistic -> {Ground, Loaded}; Loaded is absorbing.
Stepping a world with a fixed seed, geometry, and action sequence is
bit-reproducible.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

import numpy as np

TWO_PI = 2.0 * math.pi

# Event kinds, in the order they can legally occur for one object.
CAPTURE = "Capture"
RELEASE = "Release"
APEX = "Apex"
TRAY_ENTER = "TrayEnter"
GROUND_HIT = "GroundHit"


class IntegrationFault(RuntimeError):
    """Stepping produced (or was given) a non-finite state."""


class Phase(str, Enum):
    GROUND = "Ground"
    CARRIED = "Carried"
    BALLISTIC = "Ballistic"
    LOADED = "Loaded"


class ShapeClass(str, Enum):
    BOX = "Box"
    ROUND = "Round"
    HANDLED = "Handled"


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    a = math.fmod(a, TWO_PI)
    if a <= -math.pi:
        a += TWO_PI
    elif a > math.pi:
        a -= TWO_PI
    return a


def _clamp(x: float, lo: float, hi: float) -> float:
    return lo if x < lo else hi if x > hi else x


@dataclass(frozen=True)
class ScoopGeom:
    """Open-top basin on the front-right mount; dimensions in meters."""

    basin_half_width_x: float = 0.0675
    basin_half_width_y: float = 0.0825
    wall_height: float = 0.075
    mass: float = 0.2
    mount_offset: tuple[float, float] = (0.25, -0.12)
    release_lever: float = 0.15

    def __post_init__(self):
        if min(self.basin_half_width_x, self.basin_half_width_y,
               self.wall_height, self.mass, self.release_lever) <= 0.0:
            raise ValueError("scoop extents must be strictly positive")


@dataclass(frozen=True)
class TrayGeom:
    """Collection box riding on the back of the base."""

    center_offset: tuple[float, float] = (-0.20, 0.0)
    half_extents: tuple[float, float] = (0.145, 0.145)
    wall_height: float = 0.07
    floor_height: float = 0.35
    mass: float = 0.4

    def __post_init__(self):
        if min(self.half_extents[0], self.half_extents[1],
               self.wall_height, self.mass) <= 0.0:
            raise ValueError("tray extents must be strictly positive")
        if self.floor_height <= 0.0:
            raise ValueError("tray floor must sit above the ground")


@dataclass(frozen=True)
class SimParams:
    """Actuation limits, contact thresholds, and carry/release constants."""

    k_p: float = 10.0                 # proportional tracking gain, 1/s
    # forward-biased gait: fast ahead, slow in reverse and sideways
    v_limit: float = 1.5              # forward target cap, m/s
    v_limit_reverse: float = 0.4      # m/s
    v_limit_lateral: float = 0.6      # m/s
    yaw_rate_limit: float = 3.0       # rad/s
    base_accel_limit: float = 2.0     # m/s^2
    yaw_accel_limit: float = 6.0      # rad/s^2
    height_rate_limit: float = 4.0    # m/s
    pitch_rate_limit: float = 12.0    # rad/s
    height_accel_limit: float = 20.0  # m/s^2; release needs |a_z| > g
    pitch_accel_limit: float = 40.0   # rad/s^2
    height_range: tuple[float, float] = (0.0, 0.8)
    # the scoop rests against the leg: it cannot pitch under, only up/back
    pitch_range: tuple[float, float] = (-0.25, math.pi / 2)

    capture_radius: float = 0.06      # basin center to object center, m
    capture_max_height: float = 0.05
    capture_max_pitch: float = 0.3
    capture_max_speed: float = 1.5    # relative horizontal speed, m/s
    snag_cone: float = 0.6            # rad, handled objects only
    snag_kick: float = 0.4            # m/s lateral, deterministic

    carry_friction: float = 0.6       # friction cone for carried objects
    tilt_release: float = 0.9         # rad
    flick_ref_mass: float = 0.096     # impulse-like flick scales by sqrt(ref/m)

    ground_friction: float = 5.0      # 1/s exponential decay of sliding speed
    bounce_friction: float = 0.7      # horizontal speed multiplier per impact
    rest_speed: float = 0.05          # below this, a bounced object settles
    tray_enter_max_vz: float = 0.1    # containment requires near-zero/down vz


class ActionVector(NamedTuple):
    """Per-DOF targets; velocities for the base, positions for the scoop."""

    target_vx: float = 0.0
    target_vy: float = 0.0
    target_yaw_rate: float = 0.0
    target_scoop_height: float = 0.0
    target_scoop_pitch: float = 0.0


@dataclass(slots=True)
class RobotState:
    x: float = 0.0
    y: float = 0.0
    yaw: float = 0.0
    vx: float = 0.0                   # body frame, forward
    vy: float = 0.0                   # body frame, left
    yaw_rate: float = 0.0
    ax: float = 0.0                   # body frame accelerations
    ay: float = 0.0
    scoop_height: float = 0.0
    scoop_pitch: float = 0.0
    scoop_height_rate: float = 0.0
    scoop_pitch_rate: float = 0.0
    dof_accel: tuple[float, float, float, float, float] = (0.0,) * 5

    def copy(self) -> "RobotState":
        return RobotState(self.x, self.y, self.yaw, self.vx, self.vy,
                          self.yaw_rate, self.ax, self.ay, self.scoop_height,
                          self.scoop_pitch, self.scoop_height_rate,
                          self.scoop_pitch_rate, self.dof_accel)


@dataclass(slots=True)
class ObjectState:
    x: float = 0.0
    y: float = 0.0
    z: float = 0.02
    vx: float = 0.0
    vy: float = 0.0
    vz: float = 0.0
    mass: float = 0.096
    radius: float = 0.02
    shape_class: ShapeClass = ShapeClass.BOX
    restitution: float = 0.2
    phase: Phase = Phase.GROUND
    max_height: float = 0.0
    handle_yaw: float = 0.0
    # base-frame attachment point, set when the object enters the tray
    attach_x: float = 0.0
    attach_y: float = 0.0
    attach_z: float = 0.0

    @property
    def position(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.z)

    @property
    def velocity(self) -> tuple[float, float, float]:
        return (self.vx, self.vy, self.vz)


def make_cube(x: float = 0.0, y: float = 0.0) -> ObjectState:
    """Default training object: 4 cm cube, 96 g."""
    return ObjectState(x=x, y=y, z=0.02, mass=0.096, radius=0.02,
                       shape_class=ShapeClass.BOX, restitution=0.2,
                       max_height=0.02)


@dataclass
class World:
    robot: RobotState
    objects: list[ObjectState]
    scoop: ScoopGeom
    tray: TrayGeom
    params: SimParams
    time: float = 0.0
    dt: float = 0.02
    gravity: float = 9.81
    rng: np.random.Generator = field(default_factory=np.random.default_rng)
    event_log: list[tuple[float, str, int]] = field(default_factory=list)
    # basin world-frame kinematics held consistent with the robot state
    basin_vel: tuple[float, float, float] = (0.0, 0.0, 0.0)
    basin_accel: tuple[float, float, float] = (0.0, 0.0, 0.0)
    effort: tuple[float, float, float, float, float] = (0.0,) * 5


def make_world(objects: list[ObjectState] | None = None, *,
               scoop: ScoopGeom | None = None, tray: TrayGeom | None = None,
               params: SimParams | None = None, dt: float = 0.02,
               gravity: float = 9.81, seed: int | np.random.SeedSequence = 0,
               robot: RobotState | None = None) -> World:
    w = World(robot=robot if robot is not None else RobotState(),
              objects=list(objects) if objects else [],
              scoop=scoop or ScoopGeom(), tray=tray or TrayGeom(),
              params=params or SimParams(), dt=dt, gravity=gravity,
              rng=np.random.default_rng(seed))
    refresh_basin_state(w)
    return w


def basin_position(world: World) -> tuple[float, float, float]:
    """World position of the scoop basin center; z is the basin floor.

    Association matches step()'s internal computation bit-for-bit, so a
    carried object's position compares exactly equal to this.
    """
    r = world.robot
    mx, my = world.scoop.mount_offset
    c, s = math.cos(r.yaw), math.sin(r.yaw)
    ox, oy = c * mx - s * my, s * mx + c * my
    return (r.x + ox, r.y + oy, r.scoop_height)


def scoop_tip_position(world: World) -> tuple[float, float]:
    """World xy of the basin's front edge midpoint."""
    r = world.robot
    mx, my = world.scoop.mount_offset
    tx = mx + world.scoop.basin_half_width_x
    c, s = math.cos(r.yaw), math.sin(r.yaw)
    return (r.x + c * tx - s * my, r.y + s * tx + c * my)


def tray_floor_center(world: World) -> tuple[float, float, float]:
    r = world.robot
    cx, cy = world.tray.center_offset
    c, s = math.cos(r.yaw), math.sin(r.yaw)
    return (r.x + c * cx - s * cy, r.y + s * cx + c * cy,
            world.tray.floor_height)


def _basin_world_velocity(robot: RobotState, scoop: ScoopGeom
                          ) -> tuple[float, float, float]:
    mx, my = scoop.mount_offset
    c, s = math.cos(robot.yaw), math.sin(robot.yaw)
    ox, oy = c * mx - s * my, s * mx + c * my
    vwx = c * robot.vx - s * robot.vy - robot.yaw_rate * oy
    vwy = s * robot.vx + c * robot.vy + robot.yaw_rate * ox
    return (vwx, vwy, robot.scoop_height_rate)


def refresh_basin_state(world: World) -> None:
    """Re-derive basin kinematics from the robot state (accel resets to 0)."""
    world.basin_vel = _basin_world_velocity(world.robot, world.scoop)
    world.basin_accel = (0.0, 0.0, 0.0)


def to_base_frame(world: World, x: float, y: float) -> tuple[float, float]:
    r = world.robot
    dx, dy = x - r.x, y - r.y
    c, s = math.cos(r.yaw), math.sin(r.yaw)
    return (c * dx + s * dy, -s * dx + c * dy)


def capture_check(world: World, obj_index: int) -> bool:
    """True iff a ground object can transition to Carried this step.

    For handled objects an approach inside the snag cone instead deflects the
    object with a fixed lateral kick (a deterministic side effect) and the
    check fails.
    """
    obj = world.objects[obj_index]
    if obj.phase is not Phase.GROUND:
        return False
    prm = world.params
    r = world.robot
    bx, by, _ = basin_position(world)
    if math.hypot(obj.x - bx, obj.y - by) >= prm.capture_radius:
        return False
    if r.scoop_height >= prm.capture_max_height:
        return False
    if abs(r.scoop_pitch) >= prm.capture_max_pitch:
        return False
    rvx = world.basin_vel[0] - obj.vx
    rvy = world.basin_vel[1] - obj.vy
    rel_speed = math.hypot(rvx, rvy)
    if rel_speed >= prm.capture_max_speed:
        return False
    if obj.shape_class is ShapeClass.HANDLED and rel_speed > 1e-6:
        approach = math.atan2(rvy, rvx)
        if abs(wrap_angle(approach - obj.handle_yaw)) <= prm.snag_cone:
            obj.vx = -prm.snag_kick * math.sin(approach)
            obj.vy = prm.snag_kick * math.cos(approach)
            return False
    return True


def release_check(world: World, obj_index: int) -> bool:
    """True iff the carried object loses scoop support this step.

    Fires when the required support force vanishes (a_z + g <= 0), the
    horizontal basin acceleration leaves the friction cone, or the scoop is
    tilted past the spill angle.
    """
    obj = world.objects[obj_index]
    if obj.phase is not Phase.CARRIED:
        return False
    ax, ay, az = world.basin_accel
    support = az + world.gravity
    if support <= 0.0:
        return True
    if math.hypot(ax, ay) > world.params.carry_friction * support:
        return True
    return abs(world.robot.scoop_pitch) > world.params.tilt_release


def integrate_ballistic(obj: ObjectState, dt: float, g: float,
                        events: list[str] | None = None) -> ObjectState:
    """Symplectic-Euler free flight with restitution bounce at the ground.

    Mutates and returns ``obj``. Appends ``Apex``/``GroundHit`` kind strings
    to ``events`` when provided.
    """
    vz_prev = obj.vz
    obj.vz -= g * dt
    obj.x += obj.vx * dt
    obj.y += obj.vy * dt
    obj.z += obj.vz * dt
    if vz_prev > 0.0 >= obj.vz and events is not None:
        events.append(APEX)
    if obj.z < obj.radius:
        obj.z = obj.radius
        obj.vz = -obj.restitution * obj.vz
        obj.vx *= 0.7
        obj.vy *= 0.7
        if events is not None:
            events.append(GROUND_HIT)
        if math.sqrt(obj.vx * obj.vx + obj.vy * obj.vy + obj.vz * obj.vz) < 0.05:
            obj.vx = obj.vy = obj.vz = 0.0
            obj.phase = Phase.GROUND
    if obj.z > obj.max_height:
        obj.max_height = obj.z
    return obj


def tray_containment(world: World, obj_index: int) -> bool:
    """True iff the object center lies inside the tray interior box."""
    obj = world.objects[obj_index]
    tray = world.tray
    bx, by = to_base_frame(world, obj.x, obj.y)
    cx, cy = tray.center_offset
    if abs(bx - cx) > tray.half_extents[0]:
        return False
    if abs(by - cy) > tray.half_extents[1]:
        return False
    return tray.floor_height <= obj.z <= tray.floor_height + tray.wall_height


def step(world: World, action: ActionVector) -> World:
    """Advance the world by one control period. Mutates and returns ``world``."""
    r = world.robot
    prm = world.params
    dt = world.dt
    if not all(map(math.isfinite, action)):
        raise IntegrationFault(f"non-finite action at t={world.time:.3f}")

    tvx = _clamp(action[0], -prm.v_limit_reverse, prm.v_limit)
    tvy = _clamp(action[1], -prm.v_limit_lateral, prm.v_limit_lateral)
    tyr = _clamp(action[2], -prm.yaw_rate_limit, prm.yaw_rate_limit)
    th = _clamp(action[3], prm.height_range[0], prm.height_range[1])
    tp = _clamp(action[4], prm.pitch_range[0], prm.pitch_range[1])

    kp = prm.k_p
    ax_cmd = _clamp(kp * (tvx - r.vx), -prm.base_accel_limit, prm.base_accel_limit)
    ay_cmd = _clamp(kp * (tvy - r.vy), -prm.base_accel_limit, prm.base_accel_limit)
    ayaw_cmd = _clamp(kp * (tyr - r.yaw_rate), -prm.yaw_accel_limit, prm.yaw_accel_limit)
    h_rate = _clamp(kp * (th - r.scoop_height), -prm.height_rate_limit, prm.height_rate_limit)
    p_rate = _clamp(kp * (tp - r.scoop_pitch), -prm.pitch_rate_limit, prm.pitch_rate_limit)
    # scoop actuators slew toward the commanded rate with bounded acceleration
    da_max = prm.height_accel_limit * dt
    h_rate = _clamp(h_rate, r.scoop_height_rate - da_max,
                    r.scoop_height_rate + da_max)
    da_max = prm.pitch_accel_limit * dt
    p_rate = _clamp(p_rate, r.scoop_pitch_rate - da_max,
                    r.scoop_pitch_rate + da_max)

    new_vx = r.vx + ax_cmd * dt
    new_vy = r.vy + ay_cmd * dt
    new_yaw_rate = r.yaw_rate + ayaw_cmd * dt
    new_h = _clamp(r.scoop_height + h_rate * dt, prm.height_range[0], prm.height_range[1])
    new_p = _clamp(r.scoop_pitch + p_rate * dt, prm.pitch_range[0], prm.pitch_range[1])
    h_rate_eff = (new_h - r.scoop_height) / dt
    p_rate_eff = (new_p - r.scoop_pitch) / dt

    dof_accel = (ax_cmd, ay_cmd, ayaw_cmd,
                 (h_rate_eff - r.scoop_height_rate) / dt,
                 (p_rate_eff - r.scoop_pitch_rate) / dt)
    world.effort = (ax_cmd, ay_cmd, ayaw_cmd, h_rate, p_rate)

    new_yaw = wrap_angle(r.yaw + new_yaw_rate * dt)
    c, s = math.cos(new_yaw), math.sin(new_yaw)
    new_x = r.x + (c * new_vx - s * new_vy) * dt
    new_y = r.y + (s * new_vx + c * new_vy) * dt
    if not (math.isfinite(new_x) and math.isfinite(new_y)
            and math.isfinite(new_h) and math.isfinite(new_p)):
        raise IntegrationFault(f"non-finite robot state at t={world.time:.3f}")

    r.x, r.y, r.yaw = new_x, new_y, new_yaw
    r.ax, r.ay = ax_cmd, ay_cmd
    r.vx, r.vy, r.yaw_rate = new_vx, new_vy, new_yaw_rate
    r.scoop_height, r.scoop_pitch = new_h, new_p
    r.scoop_height_rate, r.scoop_pitch_rate = h_rate_eff, p_rate_eff
    r.dof_accel = dof_accel

    prev_bv = world.basin_vel
    mx, my = world.scoop.mount_offset
    ox, oy = c * mx - s * my, s * mx + c * my
    basin_x, basin_y = new_x + ox, new_y + oy
    bvx = c * new_vx - s * new_vy - new_yaw_rate * oy
    bvy = s * new_vx + c * new_vy + new_yaw_rate * ox
    bvz = h_rate_eff
    world.basin_vel = (bvx, bvy, bvz)
    world.basin_accel = ((bvx - prev_bv[0]) / dt, (bvy - prev_bv[1]) / dt,
                         (bvz - prev_bv[2]) / dt)

    t_new = world.time + dt
    log = world.event_log
    decay = math.exp(-prm.ground_friction * dt)

    for i, obj in enumerate(world.objects):
        phase = obj.phase
        if phase is Phase.CARRIED:
            if release_check(world, i):
                scale = math.sqrt(prm.flick_ref_mass / obj.mass)
                vt = r.scoop_pitch_rate * world.scoop.release_lever * scale
                tx = -math.sin(r.scoop_pitch)
                tz = math.cos(r.scoop_pitch)
                obj.vx += vt * tx * c
                obj.vy += vt * tx * s
                obj.vz += vt * tz
                obj.phase = Phase.BALLISTIC
                log.append((t_new, RELEASE, i))
            else:
                obj.x, obj.y, obj.z = basin_x, basin_y, new_h + obj.radius
                obj.vx, obj.vy, obj.vz = bvx, bvy, bvz
                if obj.z > obj.max_height:
                    obj.max_height = obj.z
        elif phase is Phase.BALLISTIC:
            kinds: list[str] = []
            integrate_ballistic(obj, dt, world.gravity, kinds)
            for kind in kinds:
                log.append((t_new, kind, i))
            if (obj.phase is Phase.BALLISTIC and obj.vz <= prm.tray_enter_max_vz
                    and tray_containment(world, i)):
                obj.phase = Phase.LOADED
                bx, by = to_base_frame(world, obj.x, obj.y)
                obj.attach_x, obj.attach_y = bx, by
                obj.attach_z = world.tray.floor_height + obj.radius
                obj.z = obj.attach_z
                obj.vx = obj.vy = obj.vz = 0.0
                log.append((t_new, TRAY_ENTER, i))
        elif phase is Phase.GROUND:
            if obj.vx != 0.0 or obj.vy != 0.0:
                obj.x += obj.vx * dt
                obj.y += obj.vy * dt
                obj.vx *= decay
                obj.vy *= decay
                if math.hypot(obj.vx, obj.vy) < 1e-3:
                    obj.vx = obj.vy = 0.0
            if capture_check(world, i):
                obj.phase = Phase.CARRIED
                obj.x, obj.y, obj.z = basin_x, basin_y, new_h + obj.radius
                obj.vx, obj.vy, obj.vz = bvx, bvy, bvz
                if obj.z > obj.max_height:
                    obj.max_height = obj.z
                log.append((t_new, CAPTURE, i))
        else:  # LOADED: rigidly attached to the tray
            obj.x = new_x + c * obj.attach_x - s * obj.attach_y
            obj.y = new_y + s * obj.attach_x + c * obj.attach_y
            obj.z = obj.attach_z

    world.time = t_new
    return world
