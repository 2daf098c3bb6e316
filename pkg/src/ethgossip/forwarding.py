"""Downstream target selection for gossip forwarding.

An eth65 node pushes the full payload to floor(sqrt(N)) of its N
downstream peers (at least one) and announces the hash to the rest.  An
eth64 node pushes the full payload to m peers, where m is sqrt(N) for
N > 16, the constant 4 for 4 <= N <= 16, and all N below that.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Sequence

from .errors import ConfigError
from .rng import RandomSource


@dataclass
class ForwardDecision:
    direct_targets: List[int]    # receive the full payload, selection order
    announce_targets: List[int]  # receive the hash only

    def __post_init__(self):
        overlap = set(self.direct_targets) & set(self.announce_targets)
        if overlap:
            raise ConfigError(f"direct/announce overlap: {overlap}")


def direct_count_eth65(n: int) -> int:
    return max(1, math.isqrt(n))


def direct_count_eth64(n: int) -> int:
    if n > 16:
        return math.isqrt(n)
    if n >= 4:
        return 4
    return n


def _select(downstream: Sequence[int], k: int, rng: RandomSource) -> ForwardDecision:
    pool = list(downstream)
    rng.shuffle_prefix(pool, k)
    return ForwardDecision(direct_targets=pool[:k], announce_targets=pool[k:])


def select_targets_eth65(downstream: Sequence[int], rng: RandomSource) -> ForwardDecision:
    """Uniform sample of floor(sqrt(N)) direct targets, remainder announced."""
    n = len(downstream)
    if n == 0:
        raise ConfigError("select_targets_eth65: empty downstream")
    return _select(downstream, direct_count_eth65(n), rng)


def select_targets_eth64(downstream: Sequence[int], rng: RandomSource) -> ForwardDecision:
    """Uniform sample of m direct targets under the piecewise eth64 rule."""
    n = len(downstream)
    if n == 0:
        raise ConfigError("select_targets_eth64: empty downstream")
    return _select(downstream, direct_count_eth64(n), rng)
