import cmath
import math

import pytest
from hypothesis import given, strategies as st

from coexsim.radio import (
    AntennaArray,
    Position,
    _dirichlet,
    beam_gain_db,
    db_to_lin,
    element_gain_db,
    los_probability,
    noise_power_dbm,
    pathloss_db,
)

SITE = AntennaArray(rows=8, cols=8)
USER = AntennaArray(rows=4, cols=4)


# -- pathloss ---------------------------------------------------------------

def test_pathloss_los_hand_values():
    # 32.4 + 17.3*log10(d) + 20*log10(fc)
    assert pathloss_db(10.0, 58.0, los=True) == pytest.approx(84.9686, abs=1e-3)
    assert pathloss_db(1.0, 58.0, los=True) == pytest.approx(67.6686, abs=1e-3)


def test_pathloss_nlos_hand_value_and_floor():
    # max(LOS, 17.3 + 38.3*log10(d) + 24.9*log10(fc))
    assert pathloss_db(10.0, 58.0, los=False) == pytest.approx(99.5094, abs=1e-3)
    # At short range the NLOS formula dips under LOS and the max() kicks in.
    assert pathloss_db(1.0, 58.0, los=False) == pathloss_db(1.0, 58.0, los=True)


def test_pathloss_clamps_below_one_metre():
    assert pathloss_db(0.2, 58.0, True) == pathloss_db(1.0, 58.0, True)


@given(st.floats(min_value=1.0, max_value=100.0), st.floats(min_value=1.0, max_value=99.0))
def test_nlos_never_below_los(d, fc):
    assert pathloss_db(d, fc, False) >= pathloss_db(d, fc, True) - 1e-9


def test_los_probability_piecewise():
    assert los_probability(0.0) == 1.0
    assert los_probability(5.0) == 1.0
    assert los_probability(25.0) == pytest.approx(0.75382, abs=1e-4)
    assert los_probability(60.0) == pytest.approx(0.51266, abs=1e-4)
    with pytest.raises(ValueError):
        los_probability(-1.0)


@given(st.floats(min_value=0.0, max_value=200.0))
def test_los_probability_in_unit_interval(d):
    assert 0.0 <= los_probability(d) <= 1.0


# -- noise ------------------------------------------------------------------

def test_noise_power_hand_value():
    assert noise_power_dbm(2.16e9, 7.0) == pytest.approx(-73.655, abs=5e-3)
    with pytest.raises(ValueError):
        noise_power_dbm(0.0, 7.0)


# -- arrays -----------------------------------------------------------------

@given(
    st.integers(min_value=1, max_value=8),
    st.floats(min_value=-2.0, max_value=2.0),
)
def test_dirichlet_matches_direct_phasor_sum(n, u):
    direct = abs(sum(cmath.exp(1j * math.pi * u * i) for i in range(n)))
    assert _dirichlet(n, u) == pytest.approx(direct, abs=1e-9)


def test_boresight_gain_is_array_peak_plus_element_peak():
    for array, peak in ((SITE, 10 * math.log10(64)), (USER, 10 * math.log10(16))):
        g = beam_gain_db(array, (1.0, 0.0, 0.0), (1.0, 0.0, 0.0))
        assert g == pytest.approx(peak + array.element_gain_dbi, abs=1e-9)


def test_gain_never_exceeds_boresight():
    s = (1.0, 0.0, 0.0)
    peak = beam_gain_db(SITE, s, s)
    for az_deg in range(0, 181, 5):
        a = math.radians(az_deg)
        t = (math.cos(a), math.sin(a), 0.0)
        assert beam_gain_db(SITE, s, t) <= peak + 1e-9


def test_gain_is_azimuth_symmetric():
    s = (1.0, 0.0, 0.0)
    for az_deg in (10, 30, 60, 120):
        a = math.radians(az_deg)
        left = beam_gain_db(SITE, s, (math.cos(a), math.sin(a), 0.0))
        right = beam_gain_db(SITE, s, (math.cos(a), -math.sin(a), 0.0))
        assert left == pytest.approx(right, abs=1e-9)


def test_element_pattern_parabolic_and_floored():
    arr = SITE
    assert element_gain_db(arr, 0.0, 0.0) == 8.0
    # Half-power beamwidth: 3 dB down at 32.5 degrees off in one plane.
    assert element_gain_db(arr, 32.5, 0.0) == pytest.approx(8.0 - 3.0, abs=1e-9)
    assert element_gain_db(arr, 180.0, 0.0) == 8.0 - 30.0
    assert element_gain_db(arr, 180.0, 90.0) == 8.0 - 30.0


def test_steering_up_does_not_blow_up():
    g = beam_gain_db(SITE, (0.0, 0.0, 1.0), (0.0, 0.0, 1.0))
    assert g == pytest.approx(10 * math.log10(64) + 8.0, abs=1e-9)


# -- environment ------------------------------------------------------------

def test_link_pathloss_is_reciprocal_and_cached(rig):
    a = rig.place("a", 0.0, 0.0)
    b = rig.place("b", 10.0, 0.0)
    assert rig.env.link_pathloss_db(a, b) == rig.env.link_pathloss_db(b, a)
    assert rig.env.link(a, b) is rig.env.link(b, a)


def test_forced_link_gives_closed_form_rx_power(rig):
    a = rig.place("a", 0.0, 0.0, z=1.5)
    b = rig.place("b", 10.0, 0.0, z=1.5)
    rig.force_link(a, b)
    em, _ = rig.emit(a, 17.0, 1000)
    p = rig.env.rx_power_dbm(em, b)
    assert p == pytest.approx(17.0 - 84.9686, abs=1e-3)


def test_sensing_window_half_open(rig):
    a = rig.place("a", 0.0, 0.0)
    b = rig.place("b", 1.0, 0.0)
    rig.force_link(a, b)
    rig.emit(a, 17.0, 10_000)  # rx at b: 17 - 67.67 = -50.7 dBm
    rig.engine.run_until(50_000)
    env = rig.env
    assert env.max_sensed_power_dbm(b, 0, 10_000) == pytest.approx(-50.67, abs=0.01)
    # Emission occupies [0, 10000); a window starting at its end is clean.
    assert env.max_sensed_power_dbm(b, 10_000, 20_000) == -math.inf
    # A window ending at its start is clean too (half-open on both sides).
    em2_start = 50_000
    rig.emit(a, 17.0, 5_000)
    assert env.max_sensed_power_dbm(b, em2_start - 1_000, em2_start) == -math.inf


def test_aggregate_sensing_sums_linear_powers(rig):
    a = rig.place("a", 0.0, 0.0)
    b = rig.place("b", 1.0, 0.0)
    c = rig.place("c", 2.0)
    rig.force_link(a, c)
    rig.force_link(b, c)
    rig.emit(a, 10.0, 1000)
    rig.emit(b, 10.0, 1000)
    pa = rig.env.rx_power_dbm(rig.env.active[0], c)
    pb = rig.env.rx_power_dbm(rig.env.active[1], c)
    expect = 10 * math.log10(db_to_lin(pa) + db_to_lin(pb))
    assert rig.env.sensed_power_dbm(c) == pytest.approx(expect, abs=1e-9)


def test_effective_sinr_piecewise_average(rig):
    tx = rig.place("tx", 0.0, 0.0)
    rx = rig.place("rx", 1.0, 0.0)
    jam = rig.place("jam", 2.0)  # also 1 m from rx, so it arrives at power s
    rig.force_link(tx, rx)
    rig.force_link(jam, rx)
    _, cap = rig.emit(tx, 17.0, 1000, capture=True)
    # Interferer covers only the second half of the signal.
    rig.engine.schedule(lambda: rig.emit(jam, 17.0, 600), 500)
    rig.engine.run_until(2000)
    env = rig.env
    s = db_to_lin(17.0 - pathloss_db(1.0, 58.0, True))
    n = env.noise_lin
    expect = 10 * math.log10(0.5 * (s / n) + 0.5 * (s / (n + s)))
    got = env.effective_sinr_db(cap, rx)
    assert got == pytest.approx(expect, abs=1e-6)


def test_capture_includes_later_overlapping_emission(rig):
    tx = rig.place("tx", 0.0, 0.0)
    rx = rig.place("rx", 1.0, 0.0)
    rig.force_link(tx, rx)
    _, cap = rig.emit(tx, 17.0, 1000, capture=True)
    late = rig.place("late", 0.0, 2.0)
    rig.force_link(late, rx)
    rig.engine.schedule(lambda: rig.emit(late, 17.0, 100), 900)
    rig.engine.run_until(2000)
    assert any(e.source is late for e in cap.interferers)


def test_receiver_own_emission_excluded_from_sinr(rig):
    tx = rig.place("tx", 0.0, 0.0)
    rx = rig.place("rx", 1.0, 0.0)
    rig.force_link(tx, rx)
    _, cap = rig.emit(tx, 17.0, 1000, capture=True)
    rig.emit(rx, 17.0, 1000)  # full-duplex artefact must not self-jam
    clean = 17.0 - 67.6686 - rig.env.noise_dbm
    assert rig.env.effective_sinr_db(cap, rx) == pytest.approx(clean, abs=1e-3)


def test_position_distances():
    p = Position(0.0, 3.0, 0.0)
    q = Position(4.0, 0.0, 12.0)
    assert p.distance_2d(q) == 5.0
    assert p.distance_3d(q) == 13.0
