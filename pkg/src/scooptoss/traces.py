"""Newline-delimited trajectory traces.

One JSON text per line: a self-describing header, then one record per sim
step carrying time, the robot pose/DOFs, per-object position and phase, and
the events that fired on that step. Traces round-trip losslessly enough to
re-render the event log, drive the replay view, and feed the browser client.
"""
from __future__ import annotations

import json
from pathlib import Path

from .errors import ConfigError
from .sim import World

FORMAT_NAME = "scooptoss-trace"
VERSION = 1

HEADER_FIELDS = {
    "robot": ["x", "y", "yaw", "vx", "vy", "yaw_rate", "scoop_height",
              "scoop_pitch", "scoop_height_rate", "scoop_pitch_rate"],
    "objects": ["x", "y", "z", "phase"],
    "events": ["kind", "object_index"],
}


def robot_row(world: World) -> list[float]:
    r = world.robot
    return [r.x, r.y, r.yaw, r.vx, r.vy, r.yaw_rate, r.scoop_height,
            r.scoop_pitch, r.scoop_height_rate, r.scoop_pitch_rate]


class TraceWriter:
    """Appends one record per ``record()`` call; tracks the event cursor so
    each step logs exactly the events it produced."""

    def __init__(self, path, world: World, metadata: dict | None = None):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._f = open(self.path, "w")
        self._cursor = len(world.event_log)
        header = {"format": FORMAT_NAME, "version": VERSION, "dt": world.dt,
                  "gravity": world.gravity, "fields": HEADER_FIELDS,
                  "n_objects": len(world.objects),
                  "metadata": metadata or {}}
        self._f.write(json.dumps(header) + "\n")

    def record(self, world: World) -> None:
        events = [[k, i] for _, k, i in world.event_log[self._cursor:]]
        self._cursor = len(world.event_log)
        rec = {
            "t": round(world.time, 9),
            "robot": [round(v, 9) for v in robot_row(world)],
            "objects": [[round(o.x, 9), round(o.y, 9), round(o.z, 9),
                         o.phase.value] for o in world.objects],
            "events": events,
        }
        self._f.write(json.dumps(rec) + "\n")

    def close(self) -> None:
        if not self._f.closed:
            self._f.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_trace(path) -> tuple[dict, list[dict]]:
    path = Path(path)
    with open(path) as f:
        first = f.readline()
        try:
            header = json.loads(first)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path} is not a trace file: {exc}") from exc
        if header.get("format") != FORMAT_NAME:
            raise ConfigError(f"{path} is not a {FORMAT_NAME} file")
        if header.get("version") != VERSION:
            raise ConfigError(f"{path}: unsupported trace version "
                              f"{header.get('version')}")
        records = [json.loads(line) for line in f if line.strip()]
    return header, records


def render_event_log(records: list[dict]) -> list[tuple[float, str, int]]:
    """Reconstruct the ordered (time, kind, object) event log from records."""
    out = []
    for rec in records:
        for kind, idx in rec["events"]:
            out.append((rec["t"], kind, idx))
    return out
