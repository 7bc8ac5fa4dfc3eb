"""Indoor-hotspot propagation, planar-array beamforming and SINR accounting.

The channel is a single geometric line-of-sight ray per link with a
log-normal shadowing term drawn once per (run, link). Pathloss follows the
3GPP indoor-hotspot formulas; antenna gains combine a parabolic element
pattern with the uniform-planar-array factor for conjugate steering.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

from .engine import Engine, RngStreams

SHADOW_SIGMA_LOS_DB = 3.0
SHADOW_SIGMA_NLOS_DB = 8.03
NOISE_PSD_DBM_HZ = -174.0


def db_to_lin(db: float) -> float:
    return 10.0 ** (db / 10.0)


def lin_to_db(lin: float) -> float:
    return 10.0 * math.log10(lin)


@dataclass(frozen=True)
class Position:
    x: float
    y: float
    z: float

    def distance_3d(self, other: "Position") -> float:
        return math.dist((self.x, self.y, self.z), (other.x, other.y, other.z))

    def distance_2d(self, other: "Position") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


def los_probability(d2d: float) -> float:
    """Indoor-hotspot LOS probability, piecewise in 2D distance."""
    if d2d < 0:
        raise ValueError(f"negative distance {d2d}")
    if d2d <= 5.0:
        return 1.0
    if d2d <= 49.0:
        return math.exp(-(d2d - 5.0) / 70.8)
    return 0.54 * math.exp(-(d2d - 49.0) / 211.7)


def pathloss_db(d3d: float, fc_ghz: float, los: bool) -> float:
    """Indoor-hotspot pathloss; d3d below 1 m is clamped to 1 m."""
    d = max(d3d, 1.0)
    pl_los = 32.4 + 17.3 * math.log10(d) + 20.0 * math.log10(fc_ghz)
    if los:
        return pl_los
    pl_nlos = 17.3 + 38.3 * math.log10(d) + 24.9 * math.log10(fc_ghz)
    return max(pl_los, pl_nlos)


def noise_power_dbm(bandwidth_hz: float, noise_figure_db: float) -> float:
    if bandwidth_hz <= 0:
        raise ValueError("bandwidth must be positive")
    return NOISE_PSD_DBM_HZ + 10.0 * math.log10(bandwidth_hz) + noise_figure_db


@dataclass(frozen=True)
class AntennaArray:
    rows: int
    cols: int
    element_gain_dbi: float = 8.0
    hpbw_deg: float = 65.0
    front_back_db: float = 30.0

    @property
    def peak_factor_db(self) -> float:
        return 10.0 * math.log10(self.rows * self.cols)


def _azel(v: tuple[float, float, float]) -> tuple[float, float]:
    az = math.degrees(math.atan2(v[1], v[0]))
    el = math.degrees(math.asin(max(-1.0, min(1.0, v[2]))))
    return az, el


def element_gain_db(array: AntennaArray, d_az_deg: float, d_el_deg: float) -> float:
    """Parabolic element pattern with a hard front-to-back floor."""
    a_az = min(12.0 * (d_az_deg / array.hpbw_deg) ** 2, array.front_back_db)
    a_el = min(12.0 * (d_el_deg / array.hpbw_deg) ** 2, array.front_back_db)
    return array.element_gain_dbi - min(a_az + a_el, array.front_back_db)


def _dirichlet(n: int, u: float) -> float:
    """|sum_{i<n} exp(j*pi*i*u)| for half-wavelength element spacing."""
    x = math.pi * u / 2.0
    s = math.sin(x)
    if abs(s) < 1e-12:
        return float(n)
    return abs(math.sin(n * x) / s)


def beam_gain_db(
    array: AntennaArray,
    steering: tuple[float, float, float],
    target: tuple[float, float, float],
) -> float:
    """Array-factor plus element gain toward `target` when steered to `steering`.

    The element boresight follows the steering direction, so the gain depends
    only on the angular offset between the two unit vectors. Peak array factor
    is 10*log10(rows*cols) over a single element.
    """
    sx, sy, sz = steering
    # Local frame: x along steering, z' the global-vertical component
    # orthogonal to it, y' completing the right-handed set.
    zx, zy, zz = -sz * sx, -sz * sy, 1.0 - sz * sz
    norm = math.sqrt(zx * zx + zy * zy + zz * zz)
    if norm < 1e-9:  # steering straight up/down: pick global x as reference
        zx, zy, zz, norm = 1.0, 0.0, 0.0, 1.0
    zx, zy, zz = zx / norm, zy / norm, zz / norm
    yx = zy * sz - zz * sy
    yy = zz * sx - zx * sz
    yz = zx * sy - zy * sx

    tx, ty, tz = target
    a = tx * yx + ty * yy + tz * yz  # horizontal direction cosine offset
    b = tx * zx + ty * zy + tz * zz  # vertical direction cosine offset
    af_lin = (_dirichlet(array.cols, a) * _dirichlet(array.rows, b)) ** 2
    af_db = 10.0 * math.log10(max(af_lin / (array.rows * array.cols), 1e-30))

    s_az, s_el = _azel(steering)
    t_az, t_el = _azel(target)
    d_az = (t_az - s_az + 180.0) % 360.0 - 180.0
    d_el = t_el - s_el
    return af_db + element_gain_db(array, d_az, d_el)


@dataclass
class Device:
    id: str
    operator: str
    role: str  # gnb | ue | ap | sta
    position: Position
    array: AntennaArray
    serving: Optional[str] = None  # site id for ue/sta


@dataclass
class LinkState:
    los: bool
    shadowing_db: float
    distance_3d: float
    distance_2d: float


@dataclass
class Emission:
    source: Device
    tx_power_dbm: float
    beam_target: Optional[Device]  # None transmits with 0 dB gain
    start: int
    end: int
    rat: str  # "nru" | "wigig"
    payload: object = None
    eid: int = -1


class Capture:
    """Decode context for one emission: the signal plus every overlapping one."""

    __slots__ = ("signal", "interferers")

    def __init__(self, signal: Emission, interferers: list[Emission]):
        self.signal = signal
        self.interferers = interferers


class RadioEnvironment:
    """Static geometry plus the set of emissions currently on the air.

    Link states (LOS flag, shadowing) are drawn lazily, once per undirected
    link per run, from the "link" RNG stream, which makes pathloss reciprocal
    by construction.
    """

    # Emissions that ended longer ago than this are pruned from the recent
    # list; Cat2 only ever looks back 25 us.
    RETAIN_NS = 200_000

    def __init__(
        self,
        engine: Engine,
        streams: RngStreams,
        fc_ghz: float = 58.0,
        bandwidth_hz: float = 2.16e9,
        noise_figure_db: float = 7.0,
        tx_power_dbm: float = 17.0,
    ) -> None:
        self.engine = engine
        self.streams = streams
        self.fc_ghz = fc_ghz
        self.bandwidth_hz = bandwidth_hz
        self.tx_power_dbm = tx_power_dbm
        self.noise_dbm = noise_power_dbm(bandwidth_hz, noise_figure_db)
        self.noise_lin = db_to_lin(self.noise_dbm)
        self.devices: dict[str, Device] = {}
        self._links: dict[frozenset, LinkState] = {}
        self._gain_cache: dict[tuple, float] = {}
        self._rx_cache: dict[tuple, float] = {}
        self._dirs: dict[tuple[str, str], tuple[float, float, float]] = {}
        self.active: dict[int, Emission] = {}
        self._recent: list[Emission] = []
        self._open_captures: list[Capture] = []
        self._listeners: list = []  # objects with .medium_changed()
        self.emission_observers: list[Callable[[Emission], None]] = []
        self.emission_log: Optional[list[Emission]] = None  # set to [] to record
        self._next_eid = 0

    # -- geometry ---------------------------------------------------------

    def add_device(self, dev: Device) -> None:
        self.devices[dev.id] = dev

    def link(self, a: Device, b: Device) -> LinkState:
        key = frozenset((a.id, b.id))
        st = self._links.get(key)
        if st is None:
            d2 = a.position.distance_2d(b.position)
            d3 = a.position.distance_3d(b.position)
            rng = self.streams.stream("link", "|".join(sorted((a.id, b.id))))
            los = rng.random() < los_probability(d2)
            sigma = SHADOW_SIGMA_LOS_DB if los else SHADOW_SIGMA_NLOS_DB
            st = LinkState(los, rng.gauss(0.0, sigma), d3, d2)
            self._links[key] = st
        return st

    def link_pathloss_db(self, a: Device, b: Device) -> float:
        st = self.link(a, b)
        return pathloss_db(st.distance_3d, self.fc_ghz, st.los) + st.shadowing_db

    def direction(self, src: Device, dst: Device) -> tuple[float, float, float]:
        key = (src.id, dst.id)
        d = self._dirs.get(key)
        if d is None:
            dx = dst.position.x - src.position.x
            dy = dst.position.y - src.position.y
            dz = dst.position.z - src.position.z
            r = math.sqrt(dx * dx + dy * dy + dz * dz)
            d = (dx / r, dy / r, dz / r) if r > 0 else (1.0, 0.0, 0.0)
            self._dirs[key] = d
        return d

    def gain_db(self, owner: Device, toward: Device, observed: Device) -> float:
        """Gain of `owner`'s array steered toward `toward`, seen from `observed`."""
        key = (owner.id, toward.id, observed.id)
        g = self._gain_cache.get(key)
        if g is None:
            g = beam_gain_db(
                owner.array,
                self.direction(owner, toward),
                self.direction(owner, observed),
            )
            self._gain_cache[key] = g
        return g

    def rx_power_dbm(
        self,
        em: Emission,
        receiver: Device,
        rx_beam_toward: Optional[Device] = None,
    ) -> float:
        """Received power; rx_beam_toward=None means 0 dB (omni) reception."""
        key = (
            em.source.id,
            em.beam_target.id if em.beam_target else None,
            receiver.id,
            rx_beam_toward.id if rx_beam_toward else None,
            em.tx_power_dbm,
        )
        p = self._rx_cache.get(key)
        if p is None:
            tx_gain = (
                self.gain_db(em.source, em.beam_target, receiver)
                if em.beam_target is not None
                else 0.0
            )
            rx_gain = (
                self.gain_db(receiver, rx_beam_toward, em.source)
                if rx_beam_toward is not None
                else 0.0
            )
            p = em.tx_power_dbm + tx_gain + rx_gain - self.link_pathloss_db(
                em.source, receiver
            )
            self._rx_cache[key] = p
        return p

    # -- emissions --------------------------------------------------------

    def add_emission(self, em: Emission, capture: bool = False) -> Optional[Capture]:
        """Register an emission starting now; schedules its removal at end."""
        assert em.end > em.start
        em.eid = self._next_eid
        self._next_eid += 1
        self.active[em.eid] = em
        self._recent.append(em)
        if self.emission_log is not None:
            self.emission_log.append(em)
        for obs in self.emission_observers:
            obs(em)
        for open_cap in self._open_captures:
            open_cap.interferers.append(em)
        cap = None
        if capture:
            cap = Capture(em, [e for e in self.active.values() if e is not em])
            self._open_captures.append(cap)
        self.engine.schedule(lambda: self._end_emission(em, cap), em.end)
        self._notify()
        return cap

    def _end_emission(self, em: Emission, cap: Optional[Capture]) -> None:
        self.active.pop(em.eid, None)
        if cap is not None:
            self._open_captures.remove(cap)
        horizon = self.engine.now - self.RETAIN_NS
        if self._recent and self._recent[0].end < horizon:
            self._recent = [e for e in self._recent if e.end >= horizon]
        self._notify()

    def add_listener(self, obj) -> None:
        if obj not in self._listeners:
            self._listeners.append(obj)

    def remove_listener(self, obj) -> None:
        if obj in self._listeners:
            self._listeners.remove(obj)

    def _notify(self) -> None:
        for obj in list(self._listeners):
            obj.medium_changed()

    # -- sensing & SINR ---------------------------------------------------

    def received_now(
        self, device: Device, rx_beam_toward: Optional[Device] = None
    ) -> list[tuple[Emission, float]]:
        """(emission, rx dBm) for every active emission not sourced by device."""
        return [
            (em, self.rx_power_dbm(em, device, rx_beam_toward))
            for em in self.active.values()
            if em.source is not device
        ]

    def sensed_power_dbm(
        self, device: Device, rx_beam_toward: Optional[Device] = None
    ) -> float:
        total = 0.0
        for _em, p in self.received_now(device, rx_beam_toward):
            total += db_to_lin(p)
        return lin_to_db(total) if total > 0 else -math.inf

    def max_sensed_power_dbm(
        self,
        device: Device,
        w_start: int,
        w_end: int,
        rx_beam_toward: Optional[Device] = None,
    ) -> float:
        """Max aggregate power over the half-open window [w_start, w_end)."""
        ems = [
            em
            for em in self._recent
            if em.start < w_end and em.end > w_start and em.source is not device
        ]
        if not ems:
            return -math.inf
        points = sorted(
            {max(em.start, w_start) for em in ems}
        )
        best = 0.0
        for t in points:
            total = 0.0
            for em in ems:
                if em.start <= t < em.end:
                    total += db_to_lin(self.rx_power_dbm(em, device, rx_beam_toward))
            best = max(best, total)
        return lin_to_db(best) if best > 0 else -math.inf

    def effective_sinr_db(
        self,
        cap: Capture,
        receiver: Device,
        rx_beam_toward: Optional[Device] = None,
    ) -> float:
        """Duration-weighted linear-mean SINR over the signal's lifetime.

        Interference is piecewise constant, so integrating per overlap
        segment is exact.
        """
        sig = cap.signal
        s_lin = db_to_lin(self.rx_power_dbm(sig, receiver, rx_beam_toward))
        infs = [
            em
            for em in cap.interferers
            if em.source is not receiver and em.end > sig.start and em.start < sig.end
        ]
        if not infs:
            return lin_to_db(s_lin / self.noise_lin)
        points = sorted(
            {sig.start, sig.end}
            | {max(em.start, sig.start) for em in infs}
            | {min(em.end, sig.end) for em in infs}
        )
        acc = 0.0
        for t0, t1 in zip(points, points[1:]):
            if t1 <= t0:
                continue
            i_lin = sum(
                db_to_lin(self.rx_power_dbm(em, receiver, rx_beam_toward))
                for em in infs
                if em.start <= t0 and em.end >= t1
            )
            acc += (t1 - t0) * s_lin / (self.noise_lin + i_lin)
        return lin_to_db(acc / (sig.end - sig.start))
