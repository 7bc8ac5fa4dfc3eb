"""Shared rigs: a tiny radio environment with hand-forced link states so that
received powers in tests are exact, closed-form quantities."""
import pytest

from coexsim.engine import Engine, RngStreams
from coexsim.radio import (
    AntennaArray,
    Device,
    Emission,
    LinkState,
    Position,
    RadioEnvironment,
)

OMNI = AntennaArray(rows=1, cols=1, element_gain_dbi=0.0)


class Rig:
    def __init__(self, seed: int = 1):
        self.engine = Engine()
        self.streams = RngStreams(seed)
        self.env = RadioEnvironment(self.engine, self.streams)

    def place(self, dev_id, x, y=0.0, z=1.5, operator="A", role="sta", array=OMNI):
        dev = Device(dev_id, operator, role, Position(x, y, z), array)
        self.env.add_device(dev)
        return dev

    def force_link(self, a, b, los=True, shadowing_db=0.0):
        """Pin the LOS flag and shadowing so pathloss is deterministic."""
        self.env._links[frozenset((a.id, b.id))] = LinkState(
            los,
            shadowing_db,
            a.position.distance_3d(b.position),
            a.position.distance_2d(b.position),
        )

    def emit(self, source, tx_power_dbm, duration_ns, rat="nru", beam_target=None,
             capture=False):
        now = self.engine.now
        em = Emission(source, tx_power_dbm, beam_target, now, now + duration_ns, rat)
        return em, self.env.add_emission(em, capture=capture)


class FixedRng:
    """randint stub returning a scripted sequence (last value repeats)."""

    def __init__(self, *values):
        self.values = list(values)

    def randint(self, a, b):
        v = self.values.pop(0) if len(self.values) > 1 else self.values[0]
        assert a <= v <= b, f"scripted draw {v} outside [{a}, {b}]"
        return v


@pytest.fixture
def rig():
    return Rig()
