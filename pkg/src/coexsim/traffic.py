"""Open-loop CBR traffic sources and per-packet bookkeeping."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from .engine import SEC, Engine


@dataclass
class PacketRecord:
    flow_id: str
    seq: int
    size_bytes: int
    created_at: int
    delivered_at: Optional[int] = None
    delivered_bytes: int = 0  # NR-U segments packets across transport blocks
    lost: bool = False

    @property
    def delivered(self) -> bool:
        return self.delivered_at is not None

    def credit(self, n_bytes: int, t: int) -> None:
        """Mark n_bytes of this packet delivered; completes the packet when
        the cumulative count reaches its size."""
        self.delivered_bytes += n_bytes
        if self.delivered_bytes >= self.size_bytes and self.delivered_at is None:
            self.delivered_at = t


class CbrFlow:
    """Constant-bit-rate source: one packet every packet_bits/rate seconds.

    At the 1500 B / 50 Mbps defaults the inter-arrival time is exactly
    240 us, which is representable in integer nanoseconds.
    """

    def __init__(
        self,
        flow_id: str,
        destination: str,
        rate_bps: float,
        packet_bytes: int,
        engine: Engine,
        sink: Callable[[PacketRecord], None],
        t_end: int,
    ) -> None:
        self.flow_id = flow_id
        self.destination = destination
        self.packet_bytes = packet_bytes
        self.interarrival_ns = round(packet_bytes * 8 * SEC / rate_bps)
        self.engine = engine
        self.sink = sink
        self.t_end = t_end
        self.records: list[PacketRecord] = []

    def start(self, t0: int = 0) -> None:
        self.engine.schedule(self._arrive, t0)

    def _arrive(self) -> None:
        pkt = PacketRecord(
            self.flow_id, len(self.records), self.packet_bytes, self.engine.now
        )
        self.records.append(pkt)
        self.sink(pkt)
        nxt = self.engine.now + self.interarrival_ns
        if nxt < self.t_end:
            self.engine.schedule(self._arrive, nxt)
