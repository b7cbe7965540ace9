"""Live teleoperation: joystick messages steer the approach expert toward a
projected target; a held trigger near an object hands control to the
scoop-toss expert. Runs the sim at real-time rate, streams world state to
every client at 30 Hz, and logs the session as a replayable trace.

One controlling client at a time; later connections observe. A controller
disconnect zeroes the command and leaves a 30-second reconnect window before
the arena resets.
"""
from __future__ import annotations

import asyncio
import json
import math
import time
from pathlib import Path

import numpy as np

from . import netws, sim
from .envs import (EpisodeState, Mode, OBJECT_PRESETS, StageFlags,
                   build_observation, classify_stage_events,
                   nearest_uncollected, NoTargetError)
from .nets import load_checkpoint
from .sim import Phase, make_world
from .traces import TraceWriter

BROADCAST_HZ = 30.0
TRIGGER_RANGE = 1.5
RECONNECT_GRACE = 30.0


def project_target(base_pos, yaw: float, direction, distance: float = 2.0,
                   frame: str = "world") -> tuple[float, float, float]:
    """Ground-level goal a fixed distance along the input direction.

    ``direction`` must be non-zero; it is normalized here. With the body
    frame convention the direction rotates with the robot's heading.
    """
    dx, dy = float(direction[0]), float(direction[1])
    norm = math.hypot(dx, dy)
    if norm < 1e-9:
        raise ValueError("direction must be non-zero; hold the previous target")
    dx, dy = dx / norm, dy / norm
    if frame == "body":
        c, s = math.cos(yaw), math.sin(yaw)
        dx, dy = c * dx - s * dy, s * dx + c * dy
    return (base_pos[0] + distance * dx, base_pos[1] + distance * dy, 0.0)


class TeleopServer:
    def __init__(self, scoop_path, approach_path, *, host: str = "127.0.0.1",
                 port: int = 8765, project_distance: float = 2.0,
                 input_frame: str = "world", n_objects: int = 6,
                 spawn_radius: float = 3.0, time_scale: float = 1.0,
                 seed: int = 0, trace_path=None):
        self.scoop_policy, _ = load_checkpoint(scoop_path)
        self.approach_policy, _ = load_checkpoint(approach_path)
        self.host, self.port = host, port
        self.project_distance = project_distance
        self.input_frame = input_frame
        self.n_objects = n_objects
        self.spawn_radius = spawn_radius
        self.time_scale = time_scale
        self.seed = seed
        self.trace_path = trace_path

        self.clients: dict[netws.WebSocket, str] = {}
        self.controller: netws.WebSocket | None = None
        self.controller_lost_at: float | None = None
        self.malformed_count = 0
        self.direction: tuple[float, float] | None = None
        self.trigger = False
        self.held_target: tuple[float, float, float] | None = None
        self.active_expert = "idle"
        self._stop = asyncio.Event()
        self._reset_world()

    def _reset_world(self) -> None:
        rng = np.random.default_rng(self.seed)
        world = make_world(seed=self.seed)
        spec = OBJECT_PRESETS["cube"]
        for _ in range(self.n_objects):
            r = self.spawn_radius * math.sqrt(rng.random())
            th = 2 * math.pi * rng.random()
            world.objects.append(spec.make(r * math.cos(th), r * math.sin(th)))
        self.ep = EpisodeState(world=world, mode=Mode.APPROACH,
                               approach_target=(0.0, 0.0, 0.0))
        self.ep.stage_flags = [StageFlags() for _ in world.objects]
        self.held_target = None

    # --- input ----------------------------------------------------------------
    def handle_message(self, text: str) -> bool:
        """Apply one client message; False (and a counter bump) if malformed."""
        try:
            msg = json.loads(text)
            if msg.get("type") != "joystick":
                raise ValueError("unknown message type")
            d = msg.get("dir", [0.0, 0.0])
            dx, dy = float(d[0]), float(d[1])
            trigger = bool(msg.get("trigger", False))
        except (ValueError, TypeError, KeyError, IndexError):
            self.malformed_count += 1
            return False
        norm = math.hypot(dx, dy)
        self.direction = (dx / norm, dy / norm) if norm > 1e-9 else None
        self.trigger = trigger
        return True

    # --- one control step -------------------------------------------------------
    def control_step(self) -> None:
        ep = self.ep
        world = ep.world
        robot = world.robot
        action = np.zeros(5)
        expert = "idle"

        target_idx = None
        if self.trigger:
            try:
                idx = nearest_uncollected(ep)
                obj = world.objects[idx]
                if math.hypot(obj.x - robot.x, obj.y - robot.y) <= TRIGGER_RANGE:
                    target_idx = idx
            except NoTargetError:
                target_idx = None
        if target_idx is not None:
            ep.mode = Mode.META
            ep.target_index = target_idx
            obs = build_observation(ep)
            action = self.scoop_policy.mean_action(
                obs[None].astype(self.scoop_policy.dtype))[0]
            expert = "scoop_toss"
        else:
            if self.direction is not None:
                self.held_target = project_target(
                    (robot.x, robot.y), robot.yaw, self.direction,
                    self.project_distance, self.input_frame)
            if self.direction is not None and self.held_target is not None:
                ep.mode = Mode.APPROACH
                ep.approach_target = self.held_target
                obs = build_observation(ep)
                action = self.approach_policy.mean_action(
                    obs[None].astype(self.approach_policy.dtype))[0]
                expert = "approach"
        self.active_expert = expert
        sim.step(world, sim.ActionVector(*map(float, action)))
        ep.elapsed += world.dt
        ep.prev_action = np.asarray(action, dtype=float)
        classify_stage_events(ep)

    def state_message(self) -> str:
        r = self.ep.world.robot
        return json.dumps({
            "type": "state",
            "time": round(self.ep.world.time, 4),
            "robot": {"pos": [round(r.x, 4), round(r.y, 4)],
                      "yaw": round(r.yaw, 4),
                      "vel": [round(r.vx, 4), round(r.vy, 4)],
                      "yaw_rate": round(r.yaw_rate, 4),
                      "scoop_height": round(r.scoop_height, 4),
                      "scoop_pitch": round(r.scoop_pitch, 4)},
            "objects": [{"position": [round(o.x, 4), round(o.y, 4),
                                      round(o.z, 4)],
                         "phase": o.phase.value}
                        for o in self.ep.world.objects],
            "n_loaded": self.ep.n_loaded,
            "active_expert": self.active_expert,
            "malformed": self.malformed_count,
        })

    # --- asyncio plumbing --------------------------------------------------------
    async def _client_handler(self, ws: netws.WebSocket) -> None:
        if self.controller is None:
            self.controller = ws
            self.controller_lost_at = None
            role = "controller"
        else:
            role = "observer"
        self.clients[ws] = role
        await ws.send_text(json.dumps({"type": "role", "role": role}))
        try:
            while True:
                text = await ws.recv_text()
                if text is None:
                    break
                if self.clients.get(ws) == "controller":
                    self.handle_message(text)
                # observer input is ignored but counted as handled
        finally:
            self.clients.pop(ws, None)
            if self.controller is ws:
                self.controller = None
                self.controller_lost_at = time.monotonic()
                self.direction = None
                self.trigger = False
                # promote the oldest observer, if any
                for other, role in self.clients.items():
                    self.controller = other
                    self.clients[other] = "controller"
                    self.controller_lost_at = None
                    await other.send_text(json.dumps(
                        {"type": "role", "role": "controller"}))
                    break

    async def _sim_loop(self) -> None:
        dt_wall = self.ep.world.dt / self.time_scale
        send_every = 1.0 / BROADCAST_HZ
        next_tick = time.monotonic()
        next_send = next_tick
        writer = None
        if self.trace_path is not None:
            writer = TraceWriter(self.trace_path, self.ep.world,
                                 metadata={"session": "teleop"})
        try:
            while not self._stop.is_set():
                now = time.monotonic()
                if now < next_tick:
                    await asyncio.sleep(next_tick - now)
                next_tick += dt_wall
                if (self.controller is None
                        and self.controller_lost_at is not None
                        and time.monotonic() - self.controller_lost_at
                        > RECONNECT_GRACE):
                    self._reset_world()
                    self.controller_lost_at = None
                    if writer is not None:
                        writer.close()
                        writer = None
                self.control_step()
                if writer is not None:
                    writer.record(self.ep.world)
                if time.monotonic() >= next_send:
                    next_send += send_every
                    msg = self.state_message()
                    for ws in list(self.clients):
                        await ws.send_text(msg)
        finally:
            if writer is not None:
                writer.close()

    async def serve_forever(self) -> None:
        if self.trace_path is None:
            self.trace_path = Path("runs/teleop") / \
                f"session_{int(time.time())}.jsonl"
        server = await netws.serve(self._client_handler, self.host, self.port)
        loop_task = asyncio.create_task(self._sim_loop())
        try:
            await self._stop.wait()
        finally:
            loop_task.cancel()
            server.close()
            await server.wait_closed()

    def stop(self) -> None:
        self._stop.set()
