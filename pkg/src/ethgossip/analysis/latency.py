"""Broadcast-latency measurement from committed propagation records.

For each transaction, the earliest forward time across peers is the
reference; every peer's lag behind it lands in that peer's diff set.
Per-peer means are averaged (unweighted) into the global broadcast
latency.  Transactions observed by fewer than two peers contribute only
the trivial zero lag and are excluded by default.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional

from ..collector import TxMsgPool, build_tx_msg_set


@dataclass
class LatencyReport:
    per_peer_mean_ms: Dict[int, float] = field(default_factory=dict)
    per_peer_samples: Dict[int, int] = field(default_factory=dict)
    global_mean_ms: float = 0.0
    tx_count: int = 0


def broadcast_latency(
    pool: TxMsgPool,
    eligible_tx: Optional[Iterable[str]] = None,
    min_observers: int = 2,
) -> LatencyReport:
    """Steps: per tx take minTime over its record set, push each record's
    (forward_time - minTime) into the sender's diff set, average per peer,
    then average the per-peer means."""
    hashes = list(eligible_tx) if eligible_tx is not None else pool.tx_hashes()
    diff_sets: Dict[int, List[int]] = {}
    used = 0
    for h in hashes:
        records = build_tx_msg_set(pool, h)
        if len(records) < min_observers:
            continue
        used += 1
        min_time = min(r.forward_time_us for r in records)
        for r in records:
            diff_sets.setdefault(r.peer_id, []).append(r.forward_time_us - min_time)
    report = LatencyReport(tx_count=used)
    for peer in sorted(diff_sets):
        diffs = diff_sets[peer]
        report.per_peer_mean_ms[peer] = sum(diffs) / len(diffs) / 1000.0
        report.per_peer_samples[peer] = len(diffs)
    if report.per_peer_mean_ms:
        vals = report.per_peer_mean_ms.values()
        report.global_mean_ms = sum(vals) / len(vals)
    return report
