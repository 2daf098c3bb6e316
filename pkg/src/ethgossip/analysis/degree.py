"""Node-degree estimation from per-peer packet counters.

An eth65 peer pushes the full transaction to floor(sqrt(N)) of its N
downstream peers and the hash to the rest, so the fraction of full
transactions seen from a peer converges to sqrt(N)/N.  Inverting:

    N = ((tx_count + hash_count) / tx_count)^2,    degree ≈ N + 1

where the +1 accounts for the upstream peer the transaction came from.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List

from ..collector import PeerPacketMsg
from ..errors import EstimatorError

STABLE_PACKET_THRESHOLD = 1000  # packets needed for a stable connection


@dataclass
class DegreeEstimate:
    peer_id: int
    n_downstream: float
    degree: float  # n_downstream + 1
    sample_packets: int
    mode: str


def estimate_degree(
    counts: PeerPacketMsg,
    mode: str = "element",
    stable_threshold: int = STABLE_PACKET_THRESHOLD,
) -> DegreeEstimate:
    """Invert the forwarding ratio for one peer.

    mode selects packet- or element-resolution counters (identical when
    every packet carries a single element).  Raises EstimatorError when the
    peer sent no full transactions (ratio undefined) or when the sample is
    below the stable-connection threshold.
    """
    tx, hashes = counts.counts(mode)
    total = tx + hashes
    if tx <= 0:
        raise EstimatorError(f"peer {counts.peer_id}: zero tx packets, estimator undefined")
    if total < stable_threshold:
        raise EstimatorError(
            f"peer {counts.peer_id}: {total} packets below stable threshold {stable_threshold}"
        )
    n = (total / tx) ** 2
    return DegreeEstimate(counts.peer_id, n, n + 1.0, total, mode)


def estimate_all_degrees(
    peer_counts: Dict[int, PeerPacketMsg],
    mode: str = "element",
    stable_threshold: int = STABLE_PACKET_THRESHOLD,
) -> tuple[List[DegreeEstimate], List[tuple[int, str]]]:
    """Estimate every eligible peer; returns (estimates, skipped-with-reason)."""
    estimates: List[DegreeEstimate] = []
    skipped: List[tuple[int, str]] = []
    for peer in sorted(peer_counts):
        try:
            estimates.append(estimate_degree(peer_counts[peer], mode, stable_threshold))
        except EstimatorError as exc:
            skipped.append((peer, str(exc)))
    return estimates, skipped
