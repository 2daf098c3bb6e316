"""Deterministic random source shared by every part of the simulator.

The generator is splitmix64: a tiny, well-studied 64-bit mixer.  It is
implemented by hand (rather than using ``random.Random``) because the
compiled event-loop kernel carries an identical C implementation and the
two backends must draw bit-identical sequences.  Streams are derived from
a master seed plus a stream id, so every node (and every infrastructure
concern such as topology generation) owns an independent substream.
"""

from __future__ import annotations

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15

# Reserved stream ids; node streams start at STREAM_NODE_BASE + node_id.
STREAM_TOPOLOGY = 0
STREAM_DELAYS = 1
STREAM_VERSIONS = 2
STREAM_WORKLOAD = 3
STREAM_PING = 4
STREAM_NODE_BASE = 16


def mix64(x: int) -> int:
    """splitmix64 finalizer: bijective avalanche mix of a 64-bit word."""
    x &= MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def stream_state(seed: int, stream_id: int) -> int:
    """Initial splitmix64 state for stream ``stream_id`` under ``seed``."""
    return mix64((seed + _GOLDEN * (stream_id + 1)) & MASK64)


class RandomSource:
    """One splitmix64 stream.

    ``RandomSource(seed, stream_id)`` is deterministic: the same pair always
    produces the same sequence, on any platform and in both backends.
    """

    __slots__ = ("seed", "stream_id", "state")

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = seed & MASK64
        self.stream_id = stream_id
        self.state = stream_state(self.seed, stream_id)

    def next_u64(self) -> int:
        self.state = (self.state + _GOLDEN) & MASK64
        return mix64(self.state)

    def randbelow(self, n: int) -> int:
        """Uniform integer in [0, n) via Lemire's multiply-shift."""
        if n <= 0:
            raise ValueError("randbelow() requires n >= 1")
        return (self.next_u64() * n) >> 64

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi] inclusive."""
        if hi < lo:
            raise ValueError("empty range")
        return lo + self.randbelow(hi - lo + 1)

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * (2.0**-53)

    def shuffle_prefix(self, items: list, k: int) -> None:
        """Partial Fisher-Yates: after the call, items[:k] is a uniform
        sample without replacement, items[k:] is the remainder.

        Draws exactly k values so both backends stay in lockstep.
        """
        n = len(items)
        for i in range(k):
            j = i + self.randbelow(n - i)
            items[i], items[j] = items[j], items[i]

    def sample(self, items: list, k: int) -> list:
        """Uniform sample of k distinct elements (order = selection order)."""
        pool = list(items)
        self.shuffle_prefix(pool, k)
        return pool[:k]

    def fork(self, stream_id: int) -> "RandomSource":
        """Independent stream derived from the same master seed."""
        return RandomSource(self.seed, stream_id)

    def __repr__(self) -> str:  # pragma: no cover
        return f"RandomSource(seed={self.seed}, stream_id={self.stream_id})"
