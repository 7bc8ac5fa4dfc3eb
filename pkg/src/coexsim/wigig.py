"""WiGig MAC: CSMA/CA with exponential backoff, dual detection thresholds
(preamble vs. raw energy), per-frame durations from adaptive MCS, and
non-combining retransmissions.

Frame durations are whatever the payload takes at the selected rate; they are
deliberately not quantized to the NR-U symbol grid.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from .engine import MS, US, Engine
from .radio import Device, Emission, RadioEnvironment, db_to_lin
from .traffic import PacketRecord

# (decode threshold dB, PHY rate bit/s), single-carrier 802.11ad-like set.
WIGIG_MCS: list[tuple[float, float]] = [
    (1.0, 385e6), (4.0, 770e6), (7.0, 1155e6),
    (12.0, 1925e6), (17.0, 3080e6), (22.0, 4620e6),
]

PREAMBLE_NS = 1900
PROBE_BYTES = 20


def frame_duration_ns(payload_bytes: int, rate_bps: float) -> int:
    if payload_bytes <= 0:
        raise ValueError("payload must be positive")
    return PREAMBLE_NS + math.ceil(payload_bytes * 8 * 1e9 / rate_bps)


def select_wigig_mcs(sinr_db: float, margin_db: float = 1.0) -> int:
    budget = sinr_db - margin_db
    chosen = 0
    for i, (thr, _rate) in enumerate(WIGIG_MCS):
        if thr <= budget:
            chosen = i
    return chosen


@dataclass
class WigigConfig:
    tx_power_dbm: float = 17.0
    ed_threshold_dbm: float = -79.0
    preamble_threshold_dbm: float = -89.0
    cca_slot_ns: int = 5 * US
    defer_ns: int = 8 * US
    cws_min: int = 15
    cws_max: int = 1023
    retry_limit: int = 7
    sifs_ns: int = 3 * US
    ack_ns: int = 1 * US
    ack_timeout_ns: int = 10 * US
    ack_threshold_db: float = 1.0
    mcs_margin_db: float = 1.0
    assoc_attempts: int = 5
    assoc_spacing_ns: int = 2 * MS


@dataclass
class WigigFrame:
    sta_id: str
    packet: PacketRecord
    mcs: int = 0
    failures: int = 0


class WigigAp:
    """One access point: a DCF transmit queue serving its associated STAs."""

    IDLE, WAIT_IDLE, DEFER, COUNT, TX, WAIT_ACK = range(6)

    def __init__(
        self,
        device: Device,
        env: RadioEnvironment,
        engine: Engine,
        cfg: WigigConfig,
        rng,
        frame_trace: Optional[list] = None,
    ) -> None:
        self.device = device
        self.env = env
        self.engine = engine
        self.cfg = cfg
        self.rng = rng
        self.frame_trace = frame_trace
        self.stas: dict[str, "WigigSta"] = {}
        self.queue: deque[WigigFrame] = deque()
        self.cws = cfg.cws_min
        self.counter = 0
        self.state = self.IDLE
        self._timer = None
        self._ack_timer = None
        self._current: Optional[WigigFrame] = None
        self._ack_ok = False
        self.drops = 0

    def add_sta(self, sta: "WigigSta") -> None:
        self.stas[sta.device.id] = sta

    # -- sensing ------------------------------------------------------------

    def medium_busy(self, device: Optional[Device] = None) -> bool:
        """Busy on same-technology preamble detection or on aggregate energy."""
        device = device or self.device
        total = 0.0
        for em, p in self.env.received_now(device):
            if em.rat == "wigig" and p >= self.cfg.preamble_threshold_dbm:
                return True
            total += db_to_lin(p)
        return total >= db_to_lin(self.cfg.ed_threshold_dbm)

    # -- queueing -----------------------------------------------------------

    def offer_packet(self, sta_id: str, pkt: PacketRecord) -> None:
        sta = self.stas[sta_id]
        if sta.association == "failed":
            pkt.lost = True
            return
        if sta.association == "pending":
            sta.holding.append(pkt)
            return
        self._enqueue(WigigFrame(sta_id, pkt))

    def _enqueue(self, frame: WigigFrame) -> None:
        self.queue.append(frame)
        if self.state == self.IDLE:
            self._start_access()

    def flush_holding(self, sta: "WigigSta") -> None:
        for pkt in sta.holding:
            if sta.association == "associated":
                self._enqueue(WigigFrame(sta.device.id, pkt))
            else:
                pkt.lost = True
        sta.holding.clear()

    # -- DCF state machine ----------------------------------------------------

    def _start_access(self) -> None:
        self._current = self.queue.popleft()
        sta = self.stas[self._current.sta_id]
        self._current.mcs = select_wigig_mcs(sta.last_sinr_db, self.cfg.mcs_margin_db)
        self.counter = self.rng.randint(0, self.cws)
        self.env.add_listener(self)
        if self.medium_busy():
            self.state = self.WAIT_IDLE
        else:
            self._start_defer()

    def medium_changed(self) -> None:
        if self.state in (self.IDLE, self.TX, self.WAIT_ACK):
            return
        busy = self.medium_busy()
        if self.state == self.WAIT_IDLE and not busy:
            self._start_defer()
        elif self.state in (self.DEFER, self.COUNT) and busy:
            if self._timer is not None:
                self.engine.cancel(self._timer)
                self._timer = None
            self.state = self.WAIT_IDLE

    def _start_defer(self) -> None:
        self.state = self.DEFER
        self._timer = self.engine.schedule_in(self._defer_done, self.cfg.defer_ns)

    def _defer_done(self) -> None:
        self._timer = None
        if self.counter == 0:
            self._transmit()
        else:
            self.state = self.COUNT
            self._timer = self.engine.schedule_in(self._slot_done, self.cfg.cca_slot_ns)

    def _slot_done(self) -> None:
        self._timer = None
        self.counter -= 1
        if self.counter == 0:
            self._transmit()
        else:
            self._timer = self.engine.schedule_in(self._slot_done, self.cfg.cca_slot_ns)

    def _transmit(self) -> None:
        self.state = self.TX
        self.env.remove_listener(self)
        frame = self._current
        sta = self.stas[frame.sta_id]
        dur = frame_duration_ns(frame.packet.size_bytes, WIGIG_MCS[frame.mcs][1])
        end = self.engine.now + dur
        em = Emission(
            self.device, self.cfg.tx_power_dbm, sta.device,
            self.engine.now, end, "wigig", payload=frame,
        )
        cap = self.env.add_emission(em, capture=True)
        self._ack_ok = False
        self.engine.schedule(lambda: sta.receive_frame(frame, cap, end), end)
        self.state = self.WAIT_ACK
        self._ack_timer = self.engine.schedule(
            lambda: self._settle(frame), end + self.cfg.ack_timeout_ns
        )

    def ack_received(self, frame: WigigFrame, measured_sinr_db: float) -> None:
        if frame is self._current:
            self._ack_ok = True
            self.stas[frame.sta_id].last_sinr_db = measured_sinr_db
            self.engine.cancel(self._ack_timer)
            self._settle(frame)

    def _settle(self, frame: WigigFrame) -> None:
        outcome: str
        if self._ack_ok:
            self.cws = self.cfg.cws_min
            outcome = "done"
        else:
            frame.failures += 1
            self.cws = min(2 * self.cws + 1, self.cfg.cws_max)
            if frame.failures >= self.cfg.retry_limit:
                frame.packet.lost = True
                self.drops += 1
                self.cws = self.cfg.cws_min
                outcome = "drop"
            else:
                self.queue.appendleft(frame)
                outcome = "retry"
        if self.frame_trace is not None:
            self.frame_trace.append(
                (self.engine.now, self.device.id, frame.sta_id,
                 frame.packet.size_bytes, frame.mcs, frame.failures, outcome)
            )
        self._current = None
        if self.queue:
            self._start_access()
        else:
            self.state = self.IDLE


class WigigSta:
    """Station: decodes downlink frames, replies with SIFS-spaced ACKs, and
    runs the startup association handshake."""

    def __init__(
        self,
        device: Device,
        ap: WigigAp,
        engine: Engine,
        rng,
        t0_offset: int = 0,
    ) -> None:
        self.device = device
        self.ap = ap
        self.engine = engine
        self.rng = rng
        self.association = "pending"  # pending | associated | failed
        self.holding: list[PacketRecord] = []
        self.last_sinr_db = 0.0
        self._assoc_tries = 0
        self._t0 = t0_offset
        ap.add_sta(self)

    @property
    def env(self) -> RadioEnvironment:
        return self.ap.env

    @property
    def cfg(self) -> WigigConfig:
        return self.ap.cfg

    def start(self) -> None:
        self.last_sinr_db = self._clean_snr_db()
        self.engine.schedule(self._associate_attempt, self._t0)

    def _clean_snr_db(self) -> float:
        env, ap = self.env, self.ap.device
        p = self.cfg.tx_power_dbm
        p += env.gain_db(ap, self.device, self.device)
        p += env.gain_db(self.device, ap, ap)
        p -= env.link_pathloss_db(ap, self.device)
        return p - env.noise_dbm

    # -- data path ------------------------------------------------------------

    def receive_frame(self, frame: WigigFrame, cap, frame_end: int) -> None:
        sinr = self.env.effective_sinr_db(cap, self.device, rx_beam_toward=self.ap.device)
        if sinr < WIGIG_MCS[frame.mcs][0]:
            return  # undecodable; AP times out
        frame.packet.credit(frame.packet.size_bytes, frame_end)
        self.engine.schedule(
            lambda: self._send_ack(frame, sinr), frame_end + self.cfg.sifs_ns
        )

    def _send_ack(self, frame: WigigFrame, measured_sinr_db: float) -> None:
        end = self.engine.now + self.cfg.ack_ns
        em = Emission(
            self.device, self.cfg.tx_power_dbm, self.ap.device,
            self.engine.now, end, "wigig", payload=("ack", frame),
        )
        cap = self.env.add_emission(em, capture=True)
        self.engine.schedule(
            lambda: self._deliver_ack(frame, cap, measured_sinr_db), end
        )

    def _deliver_ack(self, frame: WigigFrame, cap, measured_sinr_db: float) -> None:
        # Quasi-omnidirectional reception at the AP in the uplink.
        sinr = self.env.effective_sinr_db(cap, self.ap.device, rx_beam_toward=None)
        if sinr >= self.cfg.ack_threshold_db:
            self.ap.ack_received(frame, measured_sinr_db)

    # -- association ------------------------------------------------------------

    def _associate_attempt(self) -> None:
        if self.association != "pending":
            return
        if self.ap.medium_busy(self.device):
            # Busy medium: poll again shortly; count a missed attempt only
            # after the attempt window (half the spacing) is exhausted.
            self._busy_waits = getattr(self, "_busy_waits", 0) + 1
            if self._busy_waits * 100 * US >= self.cfg.assoc_spacing_ns // 2:
                self._busy_waits = 0
                self._attempt_failed()
            else:
                self.engine.schedule_in(self._associate_attempt, 100 * US)
            return
        self._busy_waits = 0
        rate = WIGIG_MCS[0][1]
        end = self.engine.now + frame_duration_ns(PROBE_BYTES, rate)
        em = Emission(
            self.device, self.cfg.tx_power_dbm, self.ap.device,
            self.engine.now, end, "wigig", payload="probe",
        )
        cap = self.env.add_emission(em, capture=True)
        self.engine.schedule(lambda: self._probe_at_ap(cap), end)

    def _probe_at_ap(self, cap) -> None:
        sinr = self.env.effective_sinr_db(cap, self.ap.device, rx_beam_toward=None)
        if sinr < self.cfg.ack_threshold_db:
            self._attempt_failed()
            return
        self.engine.schedule_in(self._probe_response, self.cfg.sifs_ns)

    def _probe_response(self) -> None:
        rate = WIGIG_MCS[0][1]
        end = self.engine.now + frame_duration_ns(PROBE_BYTES, rate)
        em = Emission(
            self.ap.device, self.cfg.tx_power_dbm, self.device,
            self.engine.now, end, "wigig", payload="probe_resp",
        )
        cap = self.env.add_emission(em, capture=True)
        self.engine.schedule(lambda: self._response_at_sta(cap), end)

    def _response_at_sta(self, cap) -> None:
        sinr = self.env.effective_sinr_db(cap, self.device, rx_beam_toward=self.ap.device)
        if sinr < self.cfg.ack_threshold_db:
            self._attempt_failed()
            return
        self.association = "associated"
        self.ap.flush_holding(self)

    def _attempt_failed(self) -> None:
        self._assoc_tries += 1
        if self._assoc_tries >= self.cfg.assoc_attempts:
            self._assoc_fail()
        else:
            self.engine.schedule_in(self._associate_attempt, self.cfg.assoc_spacing_ns)

    def _assoc_fail(self) -> None:
        self.association = "failed"
        self.ap.flush_holding(self)
