"""Observer-side measurement plane.

The observer records one raw row per transaction (or hash) per received
packet, estimates the one-way delay to each peer, filters the raw rows
(admission-floor gas and single-element packets only) and commits the
survivors as delay-corrected propagation records.  Per-peer packet and
element counters feed the degree estimator.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple

from .errors import ConfigError, DataError
from .params import ProtocolParams
from .rng import STREAM_PING, RandomSource
from .topology import Topology

GAS_FLOOR_GWEI = 18

FILTERED_GAS = "gas"
FILTERED_BATCHED = "batched"


@dataclass(frozen=True)
class TempTxMsg:
    peer_id: int
    tx_hash: str
    time_stamp_us: int
    gas_price_gwei: int
    packet_size: int
    is_hash: bool = False


@dataclass(frozen=True)
class TxMsg:
    peer_id: int
    tx_hash: str
    forward_time_us: int


@dataclass
class PeerPacketMsg:
    peer_id: int
    tx_hash_packet_count: int = 0
    tx_packet_count: int = 0
    start_time_us: int = -1
    current_time_us: int = -1
    # Element-resolution counters (not part of the pinned wire schema).
    tx_hash_element_count: int = 0
    tx_element_count: int = 0
    block_packet_count: int = 0
    block_hash_packet_count: int = 0

    def counts(self, mode: str = "element") -> Tuple[int, int]:
        """(tx, hash) counters in the requested resolution."""
        if mode == "packet":
            return self.tx_packet_count, self.tx_hash_packet_count
        if mode == "element":
            return self.tx_element_count, self.tx_hash_element_count
        raise ConfigError(f"unknown counting mode {mode!r}")


class TxMsgPool:
    """Append-only store of raw and committed propagation records."""

    def __init__(self):
        self.temp: List[TempTxMsg] = []
        self.committed: List[TxMsg] = []
        self.peer_counts: Dict[int, PeerPacketMsg] = {}
        self._by_hash: Dict[str, List[int]] = {}
        self._by_peer: Dict[int, List[int]] = {}

    def add_temp(self, rec: TempTxMsg) -> None:
        self.temp.append(rec)

    def commit(self, rec: TxMsg) -> None:
        idx = len(self.committed)
        self.committed.append(rec)
        self._by_hash.setdefault(rec.tx_hash, []).append(idx)
        self._by_peer.setdefault(rec.peer_id, []).append(idx)

    def records_for_hash(self, tx_hash: str) -> List[TxMsg]:
        return [self.committed[i] for i in self._by_hash.get(tx_hash, [])]

    def records_for_peer(self, peer_id: int) -> List[TxMsg]:
        return [self.committed[i] for i in self._by_peer.get(peer_id, [])]

    def tx_hashes(self) -> List[str]:
        return list(self._by_hash)


def record_packet(
    pool: TxMsgPool,
    peer_id: int,
    items: Iterable[Tuple[str, int]],  # (tx_hash, gas_price_gwei)
    at_us: int,
    is_hash: bool = False,
) -> List[TempTxMsg]:
    """Record one received packet: one raw row per contained element.

    Packet counters count packets; element counters count contained
    elements.  The first packet from a peer pins its start time.
    """
    items = list(items)
    if not items:
        return []
    pc = pool.peer_counts.get(peer_id)
    if pc is None:
        pc = PeerPacketMsg(peer_id=peer_id)
        pool.peer_counts[peer_id] = pc
    if pc.start_time_us < 0:
        pc.start_time_us = at_us
    pc.current_time_us = at_us
    if is_hash:
        pc.tx_hash_packet_count += 1
        pc.tx_hash_element_count += len(items)
    else:
        pc.tx_packet_count += 1
        pc.tx_element_count += len(items)
    out = []
    for tx_hash, gas in items:
        rec = TempTxMsg(peer_id, tx_hash, at_us, gas, len(items), is_hash)
        pool.add_temp(rec)
        out.append(rec)
    return out


def estimate_peer_delay(
    topology: Topology,
    observer: int,
    peer: int,
    mode: str = "true-delay",
    *,
    seed: int = 0,
    ping_count: int = 100,
    jitter_us: int = 0,
) -> int:
    """One-way delay estimate in microseconds.

    ``true-delay`` returns the exact edge delay (ground-truth mode);
    ``icmp-ping-sim`` measures ping_count round trips (each leg optionally
    jittered by +-jitter_us) and returns half the mean, floored to an
    integer microsecond.
    """
    edge = topology.delay(observer, peer)  # raises if not adjacent
    if mode == "true-delay":
        return edge
    if mode != "icmp-ping-sim":
        raise ConfigError(f"unknown delay mode {mode!r}")
    if ping_count < 1:
        raise ConfigError("ping_count must be >= 1")
    rng = RandomSource(seed, STREAM_PING)
    # Distinct substream per peer so estimates don't depend on call order.
    rng = RandomSource(rng.next_u64() ^ peer, STREAM_PING)
    total = 0
    for _ in range(ping_count):
        rtt = 2 * edge
        if jitter_us > 0:
            rtt += rng.randint(-jitter_us, jitter_us)
            rtt += rng.randint(-jitter_us, jitter_us)
        total += max(2, rtt)
    return total // (2 * ping_count)


def filter_and_commit(
    pool: TxMsgPool,
    rec: TempTxMsg,
    delay_us: int,
    gas_floor_gwei: int = GAS_FLOOR_GWEI,
) -> Tuple[Optional[TxMsg], Optional[str]]:
    """Apply both §-criteria and commit the survivor.

    Returns (TxMsg, None) on success or (None, reason) when filtered:
    gas below the floor, or a batched packet (size != 1).
    """
    if rec.gas_price_gwei < gas_floor_gwei:
        return None, FILTERED_GAS
    if rec.packet_size != 1:
        return None, FILTERED_BATCHED
    msg = TxMsg(rec.peer_id, rec.tx_hash, rec.time_stamp_us - delay_us)
    pool.commit(msg)
    return msg, None


def build_tx_msg_set(pool: TxMsgPool, tx_hash: str) -> List[TxMsg]:
    """All committed records for one transaction, ordered by forward time."""
    recs = pool.records_for_hash(tx_hash)
    return sorted(recs, key=lambda r: (r.forward_time_us, r.peer_id))


def commit_all(
    pool: TxMsgPool,
    delays: Dict[int, int],
    gas_floor_gwei: int = GAS_FLOOR_GWEI,
) -> Dict[str, int]:
    """Filter + commit every raw record; returns filter-reason counts."""
    stats = {FILTERED_GAS: 0, FILTERED_BATCHED: 0, "committed": 0}
    for rec in pool.temp:
        delay = delays.get(rec.peer_id)
        if delay is None:
            raise ConfigError(f"no delay estimate for peer {rec.peer_id}")
        msg, reason = filter_and_commit(pool, rec, delay, gas_floor_gwei)
        if msg is None:
            stats[reason] += 1
        else:
            stats["committed"] += 1
    return stats


# ---------------------------------------------------------------------------
# persistence: line-delimited JSON with pinned field orders


def save_tx_msgs(pool: TxMsgPool, path) -> None:
    with open(path, "w") as fh:
        for rec in pool.committed:
            fh.write(
                json.dumps(
                    {
                        "peer_id": rec.peer_id,
                        "tx_hash": rec.tx_hash,
                        "forward_time_us": rec.forward_time_us,
                    }
                )
                + "\n"
            )


def save_peer_counts(pool: TxMsgPool, path) -> None:
    with open(path, "w") as fh:
        for peer in sorted(pool.peer_counts):
            pc = pool.peer_counts[peer]
            fh.write(
                json.dumps(
                    {
                        "peer_id": pc.peer_id,
                        "tx_hash_packet_count": pc.tx_hash_packet_count,
                        "tx_packet_count": pc.tx_packet_count,
                        "start_time_us": pc.start_time_us,
                        "current_time_us": pc.current_time_us,
                    }
                )
                + "\n"
            )


def save_peer_element_counts(pool: TxMsgPool, path) -> None:
    """Sidecar with element-resolution counters (same keying)."""
    with open(path, "w") as fh:
        for peer in sorted(pool.peer_counts):
            pc = pool.peer_counts[peer]
            fh.write(
                json.dumps(
                    {
                        "peer_id": pc.peer_id,
                        "tx_hash_element_count": pc.tx_hash_element_count,
                        "tx_element_count": pc.tx_element_count,
                    }
                )
                + "\n"
            )


def _load_jsonl(path, required_fields) -> List[dict]:
    out = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid record: {exc}") from None
            missing = [f for f in required_fields if f not in obj]
            if missing:
                raise DataError(f"{path}:{lineno}: missing fields {missing}")
            out.append(obj)
    return out


def load_tx_msgs(path) -> List[TxMsg]:
    rows = _load_jsonl(path, ("peer_id", "tx_hash", "forward_time_us"))
    return [TxMsg(r["peer_id"], r["tx_hash"], r["forward_time_us"]) for r in rows]


def load_peer_counts(path, element_path=None) -> Dict[int, PeerPacketMsg]:
    rows = _load_jsonl(
        path,
        (
            "peer_id",
            "tx_hash_packet_count",
            "tx_packet_count",
            "start_time_us",
            "current_time_us",
        ),
    )
    out: Dict[int, PeerPacketMsg] = {}
    for r in rows:
        out[r["peer_id"]] = PeerPacketMsg(
            peer_id=r["peer_id"],
            tx_hash_packet_count=r["tx_hash_packet_count"],
            tx_packet_count=r["tx_packet_count"],
            start_time_us=r["start_time_us"],
            current_time_us=r["current_time_us"],
        )
    if element_path is not None:
        for r in _load_jsonl(
            element_path, ("peer_id", "tx_hash_element_count", "tx_element_count")
        ):
            pc = out.get(r["peer_id"])
            if pc is not None:
                pc.tx_hash_element_count = r["tx_hash_element_count"]
                pc.tx_element_count = r["tx_element_count"]
    return out


def pool_from_engine(records, peer_counters, tx_hashes: List[str]) -> TxMsgPool:
    """Build a TxMsgPool from an engine run's raw observer columns."""
    pool = TxMsgPool()
    for peer, pc in sorted(peer_counters.items()):
        pool.peer_counts[peer] = PeerPacketMsg(
            peer_id=peer,
            tx_hash_packet_count=pc.hash_packets,
            tx_packet_count=pc.tx_packets,
            start_time_us=pc.start_time_us,
            current_time_us=pc.current_time_us,
            tx_hash_element_count=pc.hash_elements,
            tx_element_count=pc.tx_elements,
            block_packet_count=pc.block_packets,
            block_hash_packet_count=pc.block_hash_packets,
        )
    n = len(records.peer)
    for i in range(n):
        pool.add_temp(
            TempTxMsg(
                peer_id=int(records.peer[i]),
                tx_hash=tx_hashes[int(records.tx_id[i])],
                time_stamp_us=int(records.t_us[i]),
                gas_price_gwei=int(records.gas[i]),
                packet_size=int(records.packet_size[i]),
                is_hash=bool(records.is_hash[i]),
            )
        )
    return pool
