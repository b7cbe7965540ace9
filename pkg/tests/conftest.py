import math

import numpy as np
import pytest

from scooptoss import sim


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_carried_world(obj=None):
    """World with one object already in the Carried phase, robot at rest."""
    obj = obj or sim.make_cube()
    w = sim.make_world([obj])
    bx, by, bz = sim.basin_position(w)
    obj.phase = sim.Phase.CARRIED
    obj.x, obj.y, obj.z = bx, by, bz + obj.radius
    obj.vx = obj.vy = obj.vz = 0.0
    w.event_log.append((w.time, sim.CAPTURE, 0))
    return w


def random_action(rng, scale=1.0):
    a = rng.uniform(-1, 1, size=5)
    return sim.ActionVector(1.5 * scale * a[0], 1.5 * scale * a[1],
                            3.0 * scale * a[2],
                            0.8 * abs(a[3]) * scale,
                            1.5 * a[4] * scale)


def scripted_toss_action(world):
    """Hand policy that captures the cube ahead, pops it backward, and drives
    the tray underneath; loads well inside the level-0 time limit."""
    obj = world.objects[0]
    if obj.phase is sim.Phase.GROUND:
        return sim.ActionVector(0.3, 0, 0, 0, 0)
    if obj.phase is sim.Phase.CARRIED:
        return sim.ActionVector(1.3, 0, 0, 0.3, 1.0)
    return sim.ActionVector(1.3, 0, 0, 0, 0)
