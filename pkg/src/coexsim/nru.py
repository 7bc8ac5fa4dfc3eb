"""NR-U slotted MAC: TDMA beam-based symbol allocation, MAC-ahead scheduling
with LBT performed after the allocation is built, adaptive MCS, and HARQ with
Chase combining.

Downlink data only; uplink carries one-symbol HARQ feedback emissions subject
to the UE's own channel access manager.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from .channel_access import CAT1, CAT2, CAT3, CAT4, ONOFF, AlwaysOnCam, Cam, Cat2Cam, LbtCam, OnOffCam
from .engine import Engine
from .radio import Device, Emission, RadioEnvironment, db_to_lin, lin_to_db
from .traffic import PacketRecord

# 120 kHz subcarrier spacing: 8.92 us symbols, 14 per slot. The slot is taken
# as exactly 14 symbols (124.88 us) so whole-symbol occupancy stays exact in
# the integer nanosecond time base.
SYMBOL_NS = 8920
SYMBOLS_PER_SLOT = 14
SLOT_NS = SYMBOL_NS * SYMBOLS_PER_SLOT

# (decode threshold dB, spectral efficiency bit/s/Hz), QPSK-low to 64QAM-high.
MCS_TABLE: list[tuple[float, float]] = [
    (-2.0, 0.2), (0.0, 0.5), (2.0, 0.8), (4.0, 1.2), (7.0, 1.7), (10.0, 2.3),
    (13.0, 3.0), (16.0, 3.6), (19.0, 4.2), (22.0, 4.7), (25.0, 5.1), (28.0, 5.5),
]


@dataclass(frozen=True)
class McsChoice:
    index: int
    spectral_efficiency: float
    outage: bool = False


def select_mcs(effective_sinr_db: float, margin_db: float = 1.0) -> McsChoice:
    """Highest MCS whose threshold is at most sinr - margin; ties go up."""
    if not math.isfinite(effective_sinr_db):
        raise ValueError("SINR must be finite")
    budget = effective_sinr_db - margin_db
    chosen = -1
    for i, (thr, _se) in enumerate(MCS_TABLE):
        if thr <= budget:
            chosen = i
    if chosen < 0:
        return McsChoice(0, MCS_TABLE[0][1], outage=True)
    return McsChoice(chosen, MCS_TABLE[chosen][1])


def symbol_capacity_bytes(se: float, bandwidth_hz: float, overhead: float = 0.75) -> int:
    return int(se * bandwidth_hz * overhead * SYMBOL_NS * 1e-9 / 8)


@dataclass
class NruConfig:
    bandwidth_hz: float = 2.16e9
    tx_power_dbm: float = 17.0
    mac_lead_slots: int = 2
    harq_max_tx: int = 4
    overhead: float = 0.75
    mcs_margin_db: float = 1.0
    fb_delay_slots: int = 4
    fb_batch_slots: int = 4  # feedback slots land on this grid, merging batches
    fb_gap_symbols: int = 3  # Cat2's 25 us deferral fits in 3 empty symbols
    fb_decode_threshold_db: float = -2.0


@dataclass
class TransportBlock:
    pid: int
    ue_id: str
    total_bytes: int
    segments: list[tuple[PacketRecord, int]]
    mcs: int
    n_symbols: int
    tx_count: int = 0
    cot_id: int = -1


@dataclass
class FeedbackBatch:
    ue_id: str
    items: list[tuple[int, bool, Optional[float]]]  # (pid, ack, measured sinr)


class NruUe:
    """Receiver side: decode with Chase combining, queue HARQ feedback."""

    def __init__(self, device: Device, cam: Cam, gnb: "NruGnb") -> None:
        self.device = device
        self.cam = cam
        self.gnb = gnb
        cam.sense_toward = gnb.device  # dir-LBT along the transmit beam
        self.acc_sinr_lin: dict[int, float] = {}
        self.fb_pending: dict[int, tuple[bool, Optional[float]]] = {}

    def receive_tb(self, tb: TransportBlock, cap) -> None:
        env = self.gnb.env
        sinr_db = env.effective_sinr_db(cap, self.device, rx_beam_toward=self.gnb.device)
        acc = self.acc_sinr_lin.get(tb.pid, 0.0) + db_to_lin(sinr_db)
        self.acc_sinr_lin[tb.pid] = acc
        combined_db = lin_to_db(acc)
        ack = combined_db >= MCS_TABLE[tb.mcs][0]
        if ack:
            now = self.gnb.engine.now
            for pkt, n_bytes in tb.segments:
                pkt.credit(n_bytes, now)
            self.acc_sinr_lin.pop(tb.pid, None)
        self.fb_pending[tb.pid] = (ack, sinr_db)

    def drop_process(self, pid: int) -> None:
        self.acc_sinr_lin.pop(pid, None)

    def send_feedback(self, pids: list[int]) -> None:
        """Attempt the one-symbol uplink feedback emission at the reserved
        symbol; a failed CAM attempt drops the feedback (gNB times out)."""
        engine = self.gnb.engine
        items = [
            (pid, *self.fb_pending.pop(pid))
            for pid in pids
            if pid in self.fb_pending
        ]
        if not items:
            return
        t_end = engine.now + SYMBOL_NS
        grant = self._responder_grant()
        if grant is None or not grant.covers(t_end):
            return
        batch = FeedbackBatch(self.device.id, items)
        em = Emission(
            self.device,
            self.gnb.cfg.tx_power_dbm,
            self.gnb.device,
            engine.now,
            t_end,
            "nru",
            payload=batch,
        )
        cap = self.gnb.env.add_emission(em, capture=True)
        engine.schedule(lambda: self.gnb.receive_feedback(batch, cap, self), t_end)

    def _responder_grant(self):
        gnb_grant = self.gnb.current_grant_if_active()
        deadline = gnb_grant.cot_deadline if gnb_grant else None
        if isinstance(self.cam, AlwaysOnCam):
            return self.cam.responder_grant(deadline)
        if isinstance(self.cam, Cat2Cam):
            return self.cam.attempt(deadline=deadline)
        if isinstance(self.cam, OnOffCam):
            return self.cam.attempt()
        raise RuntimeError(f"unsupported uplink CAM {self.cam.config.category}")


class NruGnb:
    """Scheduler, channel-access glue and HARQ bookkeeping for one cell."""

    def __init__(
        self,
        device: Device,
        cam: Cam,
        env: RadioEnvironment,
        engine: Engine,
        cfg: NruConfig,
        t_end: int,
        mac_trace: Optional[list] = None,
    ) -> None:
        self.device = device
        self.cam = cam
        self.env = env
        self.engine = engine
        self.cfg = cfg
        self.t_end = t_end
        self.mac_trace = mac_trace
        self.ues: list[NruUe] = []
        self.buffers: dict[str, deque] = {}  # ue_id -> deque of [pkt, remaining]
        self.buffered_bytes: dict[str, int] = {}
        self.retx: deque[TransportBlock] = deque()
        self.processes: dict[int, TransportBlock] = {}
        self.fb_reservations: dict[int, list[tuple[NruUe, list[int]]]] = {}
        self._resolved: set[int] = set()
        self._next_pid = 0
        self._rr = 0
        self.current_grant = None
        self.cot_id = 0
        self._cws_fed_cots: set[int] = set()

    # -- wiring -------------------------------------------------------------

    def add_ue(self, ue: NruUe) -> None:
        self.ues.append(ue)
        self.buffers[ue.device.id] = deque()
        self.buffered_bytes[ue.device.id] = 0

    def ue_by_id(self, ue_id: str) -> NruUe:
        return next(u for u in self.ues if u.device.id == ue_id)

    def offer_packet(self, ue_id: str, pkt: PacketRecord) -> None:
        self.buffers[ue_id].append([pkt, pkt.size_bytes])
        self.buffered_bytes[ue_id] += pkt.size_bytes

    def start(self) -> None:
        lead = self.cfg.mac_lead_slots
        self.engine.schedule(lambda: self._plan(lead), 0)

    # -- link adaptation ------------------------------------------------------

    def _clean_snr_db(self, ue: NruUe) -> float:
        p = self.cfg.tx_power_dbm
        p += self.env.gain_db(self.device, ue.device, ue.device)
        p += self.env.gain_db(ue.device, self.device, self.device)
        p -= self.env.link_pathloss_db(self.device, ue.device)
        return p - self.env.noise_dbm

    def last_sinr_db(self, ue: NruUe) -> float:
        if not hasattr(ue, "_last_sinr_db"):
            ue._last_sinr_db = self._clean_snr_db(ue)
        return ue._last_sinr_db

    # -- scheduling -----------------------------------------------------------

    def _plan(self, slot: int) -> None:
        t_slot = slot * SLOT_NS
        if t_slot < self.t_end:
            self.engine.schedule(lambda: self._plan(slot + 1), self.engine.now + SLOT_NS)
        fb_entries = self.fb_reservations.pop(slot, [])
        n_fb = len(fb_entries)
        budget = SYMBOLS_PER_SLOT - n_fb - (self.cfg.fb_gap_symbols if n_fb else 0)
        alloc: list[tuple[NruUe, int, TransportBlock]] = []  # (ue, n_sym, tb)
        used = 0

        while self.retx and budget - used >= self.retx[0].n_symbols:
            tb = self.retx.popleft()
            alloc.append((self.ue_by_id(tb.ue_id), tb.n_symbols, tb))
            used += tb.n_symbols

        n = len(self.ues)
        for k in range(n):
            if used >= budget:
                break
            ue = self.ues[(self._rr + k) % n]
            buf = self.buffered_bytes[ue.device.id]
            if buf <= 0:
                continue
            choice = select_mcs(self.last_sinr_db(ue), self.cfg.mcs_margin_db)
            cap = symbol_capacity_bytes(choice.spectral_efficiency, self.cfg.bandwidth_hz, self.cfg.overhead)
            n_sym = min(-(-buf // cap), budget - used)
            tb_bytes = min(buf, n_sym * cap)
            segments = self._take_bytes(ue.device.id, tb_bytes)
            tb = TransportBlock(self._next_pid, ue.device.id, tb_bytes, segments, choice.index, n_sym)
            self._next_pid += 1
            alloc.append((ue, n_sym, tb))
            used += n_sym
        self._rr = (self._rr + 1) % max(n, 1)

        if alloc and isinstance(self.cam, LbtCam):
            self._ensure_lbt()
        self.engine.schedule(lambda: self._commit(slot, alloc, fb_entries, n_fb), t_slot)

    def _take_bytes(self, ue_id: str, n_bytes: int) -> list[tuple[PacketRecord, int]]:
        buf = self.buffers[ue_id]
        segments: list[tuple[PacketRecord, int]] = []
        left = n_bytes
        while left > 0 and buf:
            pkt, remaining = buf[0]
            take = min(left, remaining)
            segments.append((pkt, take))
            if take == remaining:
                buf.popleft()
            else:
                buf[0][1] -= take
            left -= take
        self.buffered_bytes[ue_id] -= n_bytes - left
        return segments

    def _return_segments(self, tb: TransportBlock) -> None:
        buf = self.buffers[tb.ue_id]
        for pkt, n_bytes in reversed(tb.segments):
            if buf and buf[0][0] is pkt:
                buf[0][1] += n_bytes
            else:
                buf.appendleft([pkt, n_bytes])
        self.buffered_bytes[tb.ue_id] += tb.total_bytes

    # -- channel access ---------------------------------------------------------

    def current_grant_if_active(self):
        g = self.current_grant
        if g is None:
            return None
        if g.cot_deadline is not None and self.engine.now >= g.cot_deadline:
            self.current_grant = None
            return None
        return g

    def _ensure_lbt(self) -> None:
        if self.current_grant_if_active() is not None:
            return
        if not self.cam.busy:
            self.cam.request(self._on_grant)

    def _on_grant(self, grant) -> None:
        self.current_grant = grant
        self.cot_id += 1

    def _access_ok(self, emissions_end: int) -> bool:
        cat = self.cam.config.category
        if cat == CAT1:
            self.cam.request(self._on_grant)
            return True
        if cat == ONOFF:
            g = self.cam.attempt()
            if g is not None and g.covers(emissions_end):
                self.current_grant = g
                self.cot_id += 1
                return True
            return False
        g = self.current_grant_if_active()
        return g is not None and g.covers(emissions_end)

    # -- per-slot execution -------------------------------------------------------

    def _commit(self, slot: int, alloc, fb_entries, n_fb: int) -> None:
        t_slot = self.engine.now
        if alloc:
            total_sym = sum(n for _ue, n, _tb in alloc)
            emissions_end = t_slot + total_sym * SYMBOL_NS
            if self._access_ok(emissions_end):
                offset = 0
                fb_by_ue: dict[str, list[int]] = {}
                for ue, n_sym, tb in alloc:
                    start = t_slot + offset * SYMBOL_NS
                    end = start + n_sym * SYMBOL_NS
                    offset += n_sym
                    tb.tx_count += 1
                    tb.cot_id = self.cot_id
                    self.processes[tb.pid] = tb
                    self.engine.schedule(
                        lambda ue=ue, tb=tb, end=end: self._air_tb(ue, tb, end), start
                    )
                    fb_by_ue.setdefault(ue.device.id, []).append(tb.pid)
                    if self.mac_trace is not None:
                        self.mac_trace.append(
                            (t_slot, ue.device.id, n_sym, tb.mcs, tb.total_bytes, "tx")
                        )
                fb_slot = slot + self.cfg.fb_delay_slots
                fb_slot += (-fb_slot) % max(self.cfg.fb_batch_slots, 1)
                res = self.fb_reservations.setdefault(fb_slot, [])
                for ue_id, pids in fb_by_ue.items():
                    for entry in res:
                        if entry[0].device.id == ue_id:
                            entry[1].extend(pids)
                            break
                    else:
                        res.append((self.ue_by_id(ue_id), pids))
            else:
                for _ue, _n, tb in alloc:
                    if tb.tx_count == 0:
                        self._return_segments(tb)
                    else:
                        self.retx.appendleft(tb)
                if self.mac_trace is not None:
                    self.mac_trace.append((t_slot, "*", 0, -1, 0, "no_grant"))
                if isinstance(self.cam, LbtCam):
                    self._ensure_lbt()

        if fb_entries:
            for k, (ue, pids) in enumerate(fb_entries):
                t_sym = t_slot + (SYMBOLS_PER_SLOT - n_fb + k) * SYMBOL_NS
                self.engine.schedule(lambda ue=ue, pids=pids: ue.send_feedback(pids), t_sym)
            all_pids = [pid for _ue, pids in fb_entries for pid in pids]
            self.engine.schedule(
                lambda pids=all_pids: self._feedback_timeout(pids), t_slot + SLOT_NS
            )

    def _air_tb(self, ue: NruUe, tb: TransportBlock, end: int) -> None:
        em = Emission(
            self.device, self.cfg.tx_power_dbm, ue.device, self.engine.now, end, "nru", payload=tb
        )
        cap = self.env.add_emission(em, capture=True)
        self.engine.schedule(lambda: ue.receive_tb(tb, cap), end)

    # -- HARQ resolution -----------------------------------------------------------

    def receive_feedback(self, batch: FeedbackBatch, cap, ue: NruUe) -> None:
        sinr = self.env.effective_sinr_db(cap, self.device, rx_beam_toward=ue.device)
        if sinr < self.cfg.fb_decode_threshold_db:
            return  # undecodable; the slot-end timeout turns this into NACKs
        nacks: list[bool] = []
        cot = None
        for pid, ack, measured in batch.items:
            if pid in self._resolved:
                continue
            self._resolved.add(pid)
            nacks.append(not ack)
            tb = self.processes.get(pid)
            if tb is not None:
                cot = tb.cot_id if cot is None else cot
                if measured is not None and tb.tx_count == 1:
                    self.ue_by_id(tb.ue_id)._last_sinr_db = measured
            self._settle(pid, ack, ue)
        self._feed_cws(nacks, cot)

    def _feedback_timeout(self, pids: list[int]) -> None:
        nacks: list[bool] = []
        cot = None
        for pid in pids:
            if pid in self._resolved:
                continue
            self._resolved.add(pid)
            tb = self.processes.get(pid)
            if tb is None:
                continue
            cot = tb.cot_id if cot is None else cot
            nacks.append(True)
            self._settle(pid, ack=False, ue=self.ue_by_id(tb.ue_id))
        if nacks:
            self._feed_cws(nacks, cot)

    def _settle(self, pid: int, ack: bool, ue: NruUe) -> None:
        tb = self.processes.pop(pid, None)
        if tb is None:
            return
        if ack:
            return
        if tb.tx_count < self.cfg.harq_max_tx:
            self.retx.append(tb)
        else:
            for pkt, _n in tb.segments:
                pkt.lost = True
            ue.drop_process(pid)

    def _feed_cws(self, nacks: list[bool], cot_id: Optional[int]) -> None:
        """First feedback batch seen for each COT drives the Cat4 window."""
        if not isinstance(self.cam, LbtCam) or self.cam.config.category != CAT4:
            return
        if not nacks or cot_id is None or cot_id in self._cws_fed_cots:
            return
        self._cws_fed_cots.add(cot_id)
        self.cam.update_cws(nacks)
