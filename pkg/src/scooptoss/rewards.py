"""Reward terms for scoop-toss, approach, and multi-object collection.

All functions are pure in their inputs and safe to call from any number of
concurrent episode workers. Weight defaults are the tuned constants used
throughout; ablation variants switch off exactly one ingredient.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .errors import ConfigError
from .sim import basin_position, tray_floor_center, wrap_angle

ABLATION_VARIANTS = ("NoHeight", "NoExpDist", "NoLoadBonus", "NoExtraBonus")


@dataclass(frozen=True)
class RewardWeights:
    w1: float = 30.0                  # toss: height gain
    w2: float = 4.0                   # toss: distance decay
    b_load: float = 100.0             # single-object load bonus
    w3: float = 3.5                   # approach: velocity tracking
    w4: float = 1.0                   # approach: heading alignment
    w5: float = 1.0                   # approach: alignment decay
    v_des: float = 0.3                # m/s, velocity-term clip
    reg_scoop: tuple[float, float, float] = (-1e-3, -1e-4, -3e-5)
    reg_approach: tuple[float, float, float] = (-1e-2, -3e-3, -1e-5)
    meta_bonus_unit: float = 100.0    # paid times the running load count
    # ablation switches (see ``ablate``)
    drop_height_factor: bool = False
    drop_distance_factor: bool = False
    flat_meta_bonus: bool = False

    def __post_init__(self):
        if (min(self.w1, self.w2, self.w3, self.w4, self.w5, self.v_des,
                self.meta_bonus_unit) <= 0 or self.b_load < 0):
            raise ConfigError("reward gains must be positive")
        if max(*self.reg_scoop, *self.reg_approach) >= 0:
            raise ConfigError("regularization weights must be negative")


@dataclass(frozen=True, slots=True)
class RegularizationInputs:
    dof_accel: tuple        # per-DOF rate change over dt
    action_delta: object    # previous raw action minus current, length 5
    effort: tuple           # clamped actuation commands (effort proxy)


def ablate(w: RewardWeights, variant: str) -> RewardWeights:
    """Return a copy of ``w`` with one reward ingredient removed."""
    if variant == "NoHeight":
        return replace(w, drop_height_factor=True)
    if variant == "NoExpDist":
        return replace(w, drop_distance_factor=True)
    if variant == "NoLoadBonus":
        return replace(w, b_load=0.0)
    if variant == "NoExtraBonus":
        return replace(w, flat_meta_bonus=True)
    raise ConfigError(f"unknown ablation variant {variant!r}; "
                      f"expected one of {ABLATION_VARIANTS}")


def toss_reward(h_obj: float, d_obj: float, w: RewardWeights) -> float:
    """w1 * h * exp(-w2 * d): lift the object and aim it at the tray center."""
    if w.drop_height_factor:
        return w.w1 * math.exp(-w.w2 * d_obj)
    if w.drop_distance_factor:
        return w.w1 * h_obj
    return w.w1 * h_obj * math.exp(-w.w2 * d_obj)


def load_bonus(loaded_event: bool, w: RewardWeights) -> float:
    return w.b_load if loaded_event else 0.0


def _sq5(v) -> float:
    return float(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]
                 + v[3] * v[3] + v[4] * v[4])


def regularization(inp: RegularizationInputs,
                   weights: tuple[float, float, float]) -> float:
    """Weighted squared norms of DOF acceleration, action delta, and effort;
    never positive."""
    w6, w7, w8 = weights
    return (w6 * _sq5(inp.dof_accel) + w7 * _sq5(inp.action_delta)
            + w8 * _sq5(inp.effort))


def _target_toss_term(ep, w: RewardWeights) -> float:
    obj = ep.world.objects[ep.target_index]
    tx, ty, tz = tray_floor_center(ep.world)
    d = math.sqrt((obj.x - tx) ** 2 + (obj.y - ty) ** 2 + (obj.z - tz) ** 2)
    return toss_reward(obj.z, d, w)


def scoop_toss_reward(ep, w: RewardWeights) -> float:
    return (_target_toss_term(ep, w)
            + load_bonus(ep.load_events > 0, w)
            + regularization(ep.reg, w.reg_scoop))


def approach_reward(ep, w: RewardWeights) -> float:
    """Velocity tracking toward the target plus heading alignment.

    The velocity term is the world-frame base velocity projected on the unit
    scoop-to-target direction, clipped at ``v_des``; the alignment term decays
    with the wrapped yaw error to that direction.
    """
    r = ep.world.robot
    bx, by, _ = basin_position(ep.world)
    tx, ty, _ = ep.approach_target
    dx, dy = tx - bx, ty - by
    dist = math.hypot(dx, dy)
    if dist < 1e-6:
        proj = 0.0
        y_err = ep.last_heading_err
    else:
        c, s = math.cos(r.yaw), math.sin(r.yaw)
        vwx = c * r.vx - s * r.vy
        vwy = s * r.vx + c * r.vy
        proj = (vwx * dx + vwy * dy) / dist
        y_err = wrap_angle(math.atan2(dy, dx) - r.yaw)
        ep.last_heading_err = y_err
    return (w.w3 * min(proj, w.v_des)
            + w.w4 * math.exp(-w.w5 * abs(y_err))
            + regularization(ep.reg, w.reg_approach))


def meta_reward(ep, w: RewardWeights) -> float:
    """Toss shaping for the current target plus an escalating load bonus:
    the k-th tray entry of the episode pays ``meta_bonus_unit * k``."""
    bonus = 0.0
    if ep.load_events:
        if w.flat_meta_bonus:
            bonus = w.meta_bonus_unit * ep.load_events
        else:
            first = ep.n_loaded - ep.load_events + 1
            for k in range(first, ep.n_loaded + 1):
                bonus += w.meta_bonus_unit * k
    return (_target_toss_term(ep, w) + bonus
            + regularization(ep.reg, w.reg_scoop))
