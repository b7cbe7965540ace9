"""Episode orchestration for the three training tasks.

Modes: single-object scoop-toss (curriculum-driven spawn radius and time
limit), approach-to-target (5 m disc, no physical object), and multi-object
collection (several cubes, nearest-uncollected targeting). Provides
observation construction, stage-event classification with enforced ordering,
termination, and gym-style vectorized wrappers used by the trainer.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import rewards as rw
from . import sim
from .sim import (ObjectState, Phase, RobotState, ShapeClass, World,
                  basin_position, make_world, scoop_tip_position,
                  tray_floor_center, wrap_angle)

OBS_SEGMENTS: list[tuple[str, int]] = [
    ("projected_gravity", 3),
    ("base_angular_velocity", 3),
    ("base_acceleration", 3),
    ("dof_positions", 5),
    ("dof_velocities", 5),
    ("previous_action", 5),
    ("object_rel_pos", 3),
    ("scoop_object_distance", 1),
]
OBS_DIM = sum(n for _, n in OBS_SEGMENTS)
ACT_DIM = 5

APPROACHED_RADIUS = 0.10
RETAIN_SECONDS = 5.0
HARD_TIMEOUT = 20.0


class Mode(str, Enum):
    SCOOP_TOSS = "scoop_toss"
    APPROACH = "approach"
    META = "meta"


class Outcome(str, Enum):
    CONTINUE = "Continue"
    SUCCESS_LOAD = "SuccessLoad"
    TIME_LIMIT_FAIL = "TimeLimitFail"
    TIMEOUT_20S = "Timeout20s"
    APPROACH_SUCCESS = "ApproachSuccess"


class NoTargetError(RuntimeError):
    """All objects are loaded; the episode should already have ended."""


@dataclass(frozen=True)
class ObjectSpec:
    name: str
    mass: float
    shape_class: ShapeClass
    restitution: float
    radius: float

    def make(self, x: float, y: float, handle_yaw: float = 0.0) -> ObjectState:
        return ObjectState(x=x, y=y, z=self.radius, mass=self.mass,
                           radius=self.radius, shape_class=self.shape_class,
                           restitution=self.restitution, max_height=self.radius,
                           handle_yaw=handle_yaw)


OBJECT_PRESETS: dict[str, ObjectSpec] = {
    "cube": ObjectSpec("cube", 0.096, ShapeClass.BOX, 0.2, 0.02),
    "bucket": ObjectSpec("bucket", 0.080, ShapeClass.ROUND, 0.35, 0.03),
    "mug": ObjectSpec("mug", 0.080, ShapeClass.HANDLED, 0.3, 0.025),
    "foam_brick": ObjectSpec("foam_brick", 0.030, ShapeClass.BOX, 0.5, 0.025),
    "potted_meat_can": ObjectSpec("potted_meat_can", 0.220, ShapeClass.BOX,
                                  0.15, 0.025),
}


@dataclass
class Curriculum:
    """Spawn-radius and time-limit schedule driven by recent success rate."""

    radius: float = 0.05
    time_limit: float = 1.0
    level: int = 0
    window_size: int = 50
    min_episodes: int = 10
    radius_step: float = 0.05
    radius_cap: float = 1.5
    time_step: float = 0.5
    time_start: float = 1.0
    time_cap: float = 20.0
    window: deque = None  # type: ignore[assignment]

    def __post_init__(self):
        if self.window is None:
            self.window = deque(maxlen=self.window_size)


def curriculum_update(cur: Curriculum, success: bool) -> Curriculum:
    """Record an episode outcome; promote on >80% success over >=10 episodes."""
    cur.window.append(bool(success))
    n = len(cur.window)
    if n >= cur.min_episodes and sum(cur.window) / n > 0.80:
        cur.radius = min(cur.radius + cur.radius_step, cur.radius_cap)
        cur.time_limit = min(cur.time_limit + cur.time_step, cur.time_cap)
        cur.level += 1
        cur.window.clear()
    return cur


@dataclass(slots=True)
class StageFlags:
    approached: bool = False
    scooped: bool = False
    tossed: bool = False
    loaded: bool = False
    capture_seen: bool = False


@dataclass
class EpisodeState:
    world: World
    mode: Mode
    target_index: int = 0
    approach_target: tuple[float, float, float] | None = None
    stage_flags: list[StageFlags] = field(default_factory=list)
    n_loaded: int = 0
    retain_timer: float = 0.0
    elapsed: float = 0.0
    time_limit: float = 1.0           # snapshot of the curriculum limit
    meta_time_limit: float = 60.0
    prev_action: np.ndarray = field(default_factory=lambda: np.zeros(ACT_DIM))
    reg: rw.RegularizationInputs | None = None
    load_events: int = 0              # tray entries on the current step
    last_heading_err: float = 0.0
    event_cursor: int = 0


def _disc_sample(rng: np.random.Generator, cx: float, cy: float,
                 radius: float) -> tuple[float, float]:
    r = radius * math.sqrt(rng.random())
    th = 2.0 * math.pi * rng.random()
    return (cx + r * math.cos(th), cy + r * math.sin(th))


def reset(mode: Mode, curriculum: Curriculum | None, rng: np.random.Generator,
          *, params: sim.SimParams | None = None,
          object_spec: ObjectSpec | None = None,
          n_objects: int = 5, meta_time_limit: float = 60.0,
          robot: RobotState | None = None, dt: float = 0.02,
          gravity: float = 9.81) -> EpisodeState:
    """Build a fresh episode. ``robot`` overrides the default rest pose
    (used for cross-initialized fine-tuning)."""
    world = make_world(params=params, dt=dt, gravity=gravity, robot=robot)
    world.rng = rng
    spec = object_spec or OBJECT_PRESETS["cube"]
    ep = EpisodeState(world=world, mode=mode, meta_time_limit=meta_time_limit)

    if mode is Mode.SCOOP_TOSS:
        cur = curriculum or Curriculum()
        tx, ty = scoop_tip_position(world)
        yaw = world.robot.yaw
        cx = tx + 0.05 * math.cos(yaw)
        cy = ty + 0.05 * math.sin(yaw)
        x, y = _disc_sample(rng, cx, cy, cur.radius)
        handle = rng.uniform(-math.pi, math.pi)
        world.objects.append(spec.make(x, y, handle_yaw=handle))
        ep.time_limit = cur.time_limit
    elif mode is Mode.APPROACH:
        x, y = _disc_sample(rng, world.robot.x, world.robot.y, 5.0)
        ep.approach_target = (x, y, 0.0)
    else:  # META
        for _ in range(n_objects):
            x, y = _disc_sample(rng, world.robot.x, world.robot.y, 5.0)
            handle = rng.uniform(-math.pi, math.pi)
            world.objects.append(spec.make(x, y, handle_yaw=handle))

    ep.stage_flags = [StageFlags() for _ in world.objects]
    if mode is Mode.META:
        ep.target_index = nearest_uncollected(ep)
    return ep


def target_position(ep: EpisodeState) -> tuple[float, float, float]:
    if ep.mode is Mode.APPROACH:
        assert ep.approach_target is not None
        return ep.approach_target
    obj = ep.world.objects[ep.target_index]
    return (obj.x, obj.y, obj.z)


def scoop_target_distance(ep: EpisodeState) -> float:
    bx, by, bz = basin_position(ep.world)
    tx, ty, tz = target_position(ep)
    return math.sqrt((tx - bx) ** 2 + (ty - by) ** 2 + (tz - bz) ** 2)


def build_observation(ep: EpisodeState, out: np.ndarray | None = None
                      ) -> np.ndarray:
    """Fill the 28-dim observation. All segments are body-frame quantities,
    so the policy input is invariant to the robot's world pose."""
    if out is None:
        out = np.empty(OBS_DIM)
    r = ep.world.robot
    out[0] = 0.0
    out[1] = 0.0
    out[2] = -1.0
    out[3] = 0.0
    out[4] = 0.0
    out[5] = r.yaw_rate
    out[6] = r.ax
    out[7] = r.ay
    out[8] = 0.0
    # actuated-coordinate values: what each action slot targets
    out[9] = r.vx
    out[10] = r.vy
    out[11] = r.yaw_rate
    out[12] = r.scoop_height
    out[13] = r.scoop_pitch
    # their per-step rates of change
    da = r.dof_accel
    out[14] = da[0]
    out[15] = da[1]
    out[16] = da[2]
    out[17] = r.scoop_height_rate
    out[18] = r.scoop_pitch_rate
    out[19:24] = ep.prev_action
    tx, ty, tz = target_position(ep)
    dx, dy = tx - r.x, ty - r.y
    c, s = math.cos(r.yaw), math.sin(r.yaw)
    out[24] = c * dx + s * dy
    out[25] = -s * dx + c * dy
    out[26] = tz
    out[27] = scoop_target_distance(ep)
    return out


def classify_stage_events(ep: EpisodeState) -> None:
    """Update per-object stage flags from the post-step world.

    Flags are monotone and strictly ordered: a later stage can only set once
    every earlier stage holds. Also refreshes ``n_loaded`` and the per-step
    tray-entry count used by the load bonuses.
    """
    world = ep.world
    log = world.event_log
    new_loads = 0
    for t, kind, idx in log[ep.event_cursor:]:
        if kind == sim.CAPTURE:
            ep.stage_flags[idx].capture_seen = True
        elif kind == sim.TRAY_ENTER:
            new_loads += 1
    ep.event_cursor = len(log)
    ep.load_events = new_loads

    bx, by, bz = basin_position(world)
    floor_z = world.tray.floor_height
    for obj, fl in zip(world.objects, ep.stage_flags):
        if not fl.approached:
            d = math.sqrt((obj.x - bx) ** 2 + (obj.y - by) ** 2
                          + (obj.z - bz) ** 2)
            if d < APPROACHED_RADIUS:
                fl.approached = True
        if fl.approached and not fl.scooped and fl.capture_seen:
            fl.scooped = True
        if fl.scooped and not fl.tossed and obj.max_height > floor_z:
            fl.tossed = True
        if fl.tossed and not fl.loaded and obj.phase is Phase.LOADED:
            fl.loaded = True
    ep.n_loaded = sum(1 for o in world.objects if o.phase is Phase.LOADED)


def check_termination(ep: EpisodeState) -> Outcome:
    """Exactly one terminal outcome per episode; Continue otherwise."""
    if ep.mode is Mode.SCOOP_TOSS:
        loaded = ep.stage_flags[ep.target_index].loaded
        if loaded and ep.retain_timer >= RETAIN_SECONDS:
            return Outcome.SUCCESS_LOAD
        if not loaded and ep.elapsed >= ep.time_limit:
            return Outcome.TIME_LIMIT_FAIL
        if ep.elapsed >= HARD_TIMEOUT:
            return Outcome.TIMEOUT_20S
    elif ep.mode is Mode.APPROACH:
        if scoop_target_distance(ep) <= APPROACHED_RADIUS:
            return Outcome.APPROACH_SUCCESS
        if ep.elapsed >= HARD_TIMEOUT:
            return Outcome.TIMEOUT_20S
    else:
        if ep.n_loaded == len(ep.world.objects):
            return Outcome.SUCCESS_LOAD
        if ep.elapsed >= ep.meta_time_limit:
            return Outcome.TIMEOUT_20S
    return Outcome.CONTINUE


def nearest_uncollected(ep: EpisodeState) -> int:
    """Index of the closest non-loaded object (base-to-object, horizontal);
    ties break to the lowest index."""
    r = ep.world.robot
    best = -1
    best_d = math.inf
    for i, obj in enumerate(ep.world.objects):
        if obj.phase is Phase.LOADED:
            continue
        d = math.hypot(obj.x - r.x, obj.y - r.y)
        if d < best_d:
            best_d = d
            best = i
    if best < 0:
        raise NoTargetError("every object is already loaded")
    return best


class TaskEnv:
    """Single-episode environment with auto-carried state across steps.

    Actions are raw policy outputs (5 floats); the sim clamps them. The
    previous raw action is fed back through the observation and the action
    smoothness regularizer.
    """

    def __init__(self, mode: Mode, *, seed, curriculum: Curriculum | None = None,
                 weights: rw.RewardWeights | None = None,
                 params: sim.SimParams | None = None,
                 object_spec: ObjectSpec | None = None,
                 n_objects: int = 5, meta_time_limit: float = 60.0,
                 sti_sampler=None, dt: float = 0.02, gravity: float = 9.81):
        self.mode = mode
        self.rng = np.random.default_rng(seed)
        self.curriculum = curriculum
        self.weights = weights or rw.RewardWeights()
        self.params = params
        self.object_spec = object_spec
        self.n_objects = n_objects
        self.meta_time_limit = meta_time_limit
        self.sti_sampler = sti_sampler
        self.dt = dt
        self.gravity = gravity
        self.ep: EpisodeState | None = None
        self._obs = np.zeros(OBS_DIM)

    def reset(self) -> np.ndarray:
        robot = None
        if self.sti_sampler is not None:
            robot = self.sti_sampler(self.rng)
        self.ep = reset(self.mode, self.curriculum, self.rng,
                        params=self.params, object_spec=self.object_spec,
                        n_objects=self.n_objects,
                        meta_time_limit=self.meta_time_limit, robot=robot,
                        dt=self.dt, gravity=self.gravity)
        return build_observation(self.ep, self._obs)

    def step(self, action) -> tuple[np.ndarray, float, bool, Outcome]:
        ep = self.ep
        assert ep is not None, "reset() before step()"
        raw = np.asarray(action, dtype=float)
        act = sim.ActionVector(float(raw[0]), float(raw[1]), float(raw[2]),
                               float(raw[3]), float(raw[4]))
        world = ep.world
        sim.step(world, act)
        ep.elapsed += world.dt
        classify_stage_events(ep)

        ep.reg = rw.RegularizationInputs(
            dof_accel=world.robot.dof_accel,
            action_delta=ep.prev_action - raw,
            effort=world.effort)
        if self.mode is Mode.SCOOP_TOSS:
            if ep.stage_flags[ep.target_index].loaded:
                ep.retain_timer += world.dt
            reward = rw.scoop_toss_reward(ep, self.weights)
        elif self.mode is Mode.APPROACH:
            reward = rw.approach_reward(ep, self.weights)
        else:
            reward = rw.meta_reward(ep, self.weights)
            target = world.objects[ep.target_index]
            if target.phase is Phase.LOADED and ep.n_loaded < len(world.objects):
                ep.target_index = nearest_uncollected(ep)

        ep.prev_action = raw
        outcome = check_termination(ep)
        obs = build_observation(ep, self._obs)
        return obs, reward, outcome is not Outcome.CONTINUE, outcome


class VecEnv:
    """Fixed set of independent TaskEnvs stepped in lockstep.

    Episodes auto-reset on termination; infos carry (outcome, terminal_obs)
    so the trainer can bootstrap truncated episodes and track success rates.
    A shared curriculum, when present, is updated on every scoop-toss episode
    end before the replacement episode is sampled.
    """

    def __init__(self, envs: list[TaskEnv], curriculum: Curriculum | None = None):
        self.envs = envs
        self.curriculum = curriculum
        self.n = len(envs)

    def reset_all(self) -> np.ndarray:
        return np.stack([env.reset() for env in self.envs])

    def step(self, actions) -> tuple[np.ndarray, np.ndarray, np.ndarray, list]:
        obs = np.empty((self.n, OBS_DIM))
        rewards_ = np.empty(self.n)
        dones = np.zeros(self.n, dtype=bool)
        infos: list[tuple[Outcome, np.ndarray, int] | None] = [None] * self.n
        for i, env in enumerate(self.envs):
            o, rew, done, outcome = env.step(actions[i])
            rewards_[i] = rew
            if done:
                dones[i] = True
                infos[i] = (outcome, o.copy(), env.ep.n_loaded)
                if self.curriculum is not None and env.mode is Mode.SCOOP_TOSS:
                    curriculum_update(self.curriculum,
                                      outcome is Outcome.SUCCESS_LOAD)
                o = env.reset()
            obs[i] = o
        return obs, rewards_, dones, infos
