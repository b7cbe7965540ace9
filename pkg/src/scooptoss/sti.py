"""Cross-initialization buffers for expert fine-tuning.

Robot states (and only robot states) are snapshotted at random time points of
one trained expert's rollouts; fine-tuning the *other* expert then draws its
episode initial states uniformly from the buffer while goals are re-sampled by
that mode's ordinary reset. Buffers persist as versioned little-endian
binaries next to the checkpoints.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .envs import Curriculum, Mode, TaskEnv
from .errors import CheckpointError, ConfigError
from .sim import RobotState

CAPACITY = 10_000
STATE_DIM = 17

_MAGIC = b"STSB"
_VERSION = 1


class CollectionFault(RuntimeError):
    """The source policy produced a non-finite action during collection."""


def robot_to_vec(r: RobotState) -> np.ndarray:
    return np.array([r.x, r.y, r.yaw, r.vx, r.vy, r.yaw_rate, r.ax, r.ay,
                     r.scoop_height, r.scoop_pitch, r.scoop_height_rate,
                     r.scoop_pitch_rate, *r.dof_accel])


def vec_to_robot(v) -> RobotState:
    return RobotState(x=float(v[0]), y=float(v[1]), yaw=float(v[2]),
                      vx=float(v[3]), vy=float(v[4]), yaw_rate=float(v[5]),
                      ax=float(v[6]), ay=float(v[7]),
                      scoop_height=float(v[8]), scoop_pitch=float(v[9]),
                      scoop_height_rate=float(v[10]),
                      scoop_pitch_rate=float(v[11]),
                      dof_accel=tuple(float(x) for x in v[12:17]))


class StiBuffer:
    def __init__(self, source_tag: str, capacity: int = CAPACITY):
        self.source_tag = source_tag
        self.capacity = capacity
        self._states = np.zeros((capacity, STATE_DIM))
        self.size = 0

    def add(self, robot: RobotState) -> None:
        if self.size >= self.capacity:
            raise ConfigError(f"STI buffer already holds {self.capacity} states")
        self._states[self.size] = robot_to_vec(robot)
        self.size += 1

    def sample(self, rng: np.random.Generator) -> RobotState:
        if self.size == 0:
            raise ConfigError("cannot sample from an empty STI buffer")
        return vec_to_robot(self._states[rng.integers(self.size)])

    def sampler(self):
        return self.sample

    def save(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        manifest = json.dumps({"tag": self.source_tag, "count": self.size,
                               "capacity": self.capacity}).encode()
        with open(path, "wb") as f:
            f.write(_MAGIC)
            f.write(struct.pack("<II", _VERSION, len(manifest)))
            f.write(manifest)
            f.write(np.ascontiguousarray(self._states[:self.size],
                                         dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "StiBuffer":
        path = Path(path)
        raw = path.read_bytes()
        if raw[:4] != _MAGIC:
            raise CheckpointError(f"{path} is not an STI buffer")
        version, blob_len = struct.unpack("<II", raw[4:12])
        if version != _VERSION:
            raise CheckpointError(f"{path}: unsupported buffer version {version}")
        manifest = json.loads(raw[12:12 + blob_len].decode())
        buf = cls(manifest["tag"], capacity=manifest["capacity"])
        n = manifest["count"]
        data = np.frombuffer(raw, dtype="<f8", count=n * STATE_DIM,
                             offset=12 + blob_len)
        buf._states[:n] = data.reshape(n, STATE_DIM)
        buf.size = n
        return buf


def collect(policy, mode: Mode, n: int, *, seed: int = 0,
            curriculum: Curriculum | None = None, weights=None,
            sim_params=None, n_envs: int = 16, segment: int = 50) -> StiBuffer:
    """Fill a buffer with ``n`` robot states from stochastic rollouts of
    ``policy`` in its own training environment.

    One snapshot candidate is drawn per ``segment``-step window of each
    episode stream, uniformly within the window, to avoid early-step bias.
    """
    if n > CAPACITY:
        raise ConfigError(f"requested {n} states, capacity is {CAPACITY}")
    buf = StiBuffer(mode.value)
    if n == 0:
        return buf
    if mode is Mode.SCOOP_TOSS and curriculum is None:
        curriculum = Curriculum(radius=1.5, time_limit=20.0, level=29)
    children = np.random.SeedSequence(seed).spawn(n_envs + 2)
    act_rng = np.random.default_rng(children[0])
    snap_rng = np.random.default_rng(children[1])
    envs = [TaskEnv(mode, seed=s, curriculum=curriculum, weights=weights,
                    params=sim_params) for s in children[2:]]
    obs = np.stack([env.reset() for env in envs])
    next_snap = snap_rng.integers(0, segment, size=n_envs)
    t = 0
    while buf.size < n:
        acts, _, _ = policy.sample(obs.astype(policy.dtype), act_rng)
        if not np.all(np.isfinite(acts)):
            raise CollectionFault("source policy emitted a non-finite action")
        for i, env in enumerate(envs):
            if t % segment == next_snap[i] and buf.size < n:
                buf.add(env.ep.world.robot.copy())
            o, _, done, _ = env.step(acts[i])
            obs[i] = env.reset() if done else o
        t += 1
        if t % segment == 0:
            next_snap = snap_rng.integers(0, segment, size=n_envs)
    return buf
