"""Figures of merit: channel occupancy, end-to-end latency, goodput.

Occupancy is tracked as a per-operator union of emission intervals, so
simultaneous emissions by devices of one operator count once.
"""
from __future__ import annotations

import bisect
import statistics
from dataclasses import dataclass
from typing import Iterable, Sequence

from .engine import SEC
from .traffic import CbrFlow


class OccupancyLedger:
    """Per-key sorted union of half-open [start, end) intervals."""

    def __init__(self) -> None:
        self._intervals: dict[str, list[tuple[int, int]]] = {}

    def record(self, key: str, start: int, end: int) -> None:
        if end <= start:
            raise ValueError("interval end must exceed start")
        ivs = self._intervals.setdefault(key, [])
        i = bisect.bisect_left(ivs, (start, start))
        # Merge with a predecessor that reaches into [start, end).
        if i > 0 and ivs[i - 1][1] >= start:
            i -= 1
            start = min(start, ivs[i][0])
        j = i
        while j < len(ivs) and ivs[j][0] <= end:
            end = max(end, ivs[j][1])
            j += 1
        ivs[i:j] = [(start, end)]

    def intervals(self, key: str) -> list[tuple[int, int]]:
        return list(self._intervals.get(key, []))

    def total(self, key: str) -> int:
        return sum(e - s for s, e in self._intervals.get(key, []))

    def fraction(self, key: str, t_end: int) -> float:
        return self.total(key) / t_end if t_end > 0 else 0.0

    def occupied_within(self, key: str, w_start: int, w_end: int) -> int:
        """Occupied time clipped to [w_start, w_end)."""
        return sum(
            max(0, min(e, w_end) - max(s, w_start))
            for s, e in self._intervals.get(key, [])
        )


@dataclass(frozen=True)
class BoxStats:
    min: float
    p5: float
    p50: float
    p95: float
    max: float


def _rank(sorted_samples: Sequence[float], q: float) -> float:
    """Nearest-rank percentile: the ceil(q*n)-th smallest sample."""
    import math

    n = len(sorted_samples)
    idx = max(1, math.ceil(q * n))
    return sorted_samples[min(idx, n) - 1]


def box_stats(samples: Iterable[float]) -> BoxStats:
    data = sorted(samples)
    if not data:
        raise ValueError("box_stats needs at least one sample")
    return BoxStats(data[0], _rank(data, 0.05), _rank(data, 0.50), _rank(data, 0.95), data[-1])


def latency_samples_ns(flows: Iterable[CbrFlow]) -> dict[str, list[int]]:
    """Delivered-packet delays per destination device; losses excluded."""
    out: dict[str, list[int]] = {}
    for flow in flows:
        dest = out.setdefault(flow.destination, [])
        for pkt in flow.records:
            if pkt.delivered:
                dest.append(pkt.delivered_at - pkt.created_at)
    return out


def goodput_per_device_bps(flows: Iterable[CbrFlow], t_end: int) -> dict[str, float]:
    out: dict[str, float] = {}
    for flow in flows:
        delivered_bits = sum(p.size_bytes * 8 for p in flow.records if p.delivered)
        out[flow.destination] = out.get(flow.destination, 0.0) + delivered_bits * SEC / t_end
    return out


def packet_conservation(flow: CbrFlow) -> tuple[int, int, int, int]:
    """(generated, delivered, lost, in_flight) for one flow."""
    generated = len(flow.records)
    delivered = sum(1 for p in flow.records if p.delivered)
    lost = sum(1 for p in flow.records if p.lost and not p.delivered)
    return generated, delivered, lost, generated - delivered - lost
