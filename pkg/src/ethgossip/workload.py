"""Transaction/block registries and injection schedules.

Everything injected during a run is registered up front so both event-loop
backends see identical identities.  Auto-filled block contents are resolved
at fire time from the origin node's pool (deterministically), but the block
identities themselves are fixed here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .errors import ConfigError
from .params import OBSERVER
from .rng import STREAM_WORKLOAD, RandomSource
from .txpool import Block, Transaction, block_hash, tx_hash

INJECT_TX = 0
INJECT_BLOCK = 1


@dataclass
class TxRegistry:
    txs: List[Transaction] = field(default_factory=list)
    by_hash: Dict[str, int] = field(default_factory=dict)
    by_account_nonce: Dict[Tuple[int, int], int] = field(default_factory=dict)

    def add(self, account: int, nonce: int, gas_price_gwei: int) -> int:
        key = (account, nonce)
        if key in self.by_account_nonce:
            raise ConfigError(f"duplicate transaction identity {key}")
        h = tx_hash(account, nonce)
        tx = Transaction(h, account, nonce, gas_price_gwei)
        tx_id = len(self.txs)
        self.txs.append(tx)
        self.by_hash[h] = tx_id
        self.by_account_nonce[key] = tx_id
        return tx_id

    def __len__(self) -> int:
        return len(self.txs)


@dataclass
class BlockSpec:
    block_id: int
    height: int
    origin: int
    hash: str
    parent: str
    # Explicit content (tx ids) or None for fill-from-origin-pool.
    tx_ids: Optional[List[int]] = None
    auto_fill: int = 0  # max txs to pull from the origin's pending


@dataclass
class BlockRegistry:
    blocks: List[BlockSpec] = field(default_factory=list)
    by_hash: Dict[str, int] = field(default_factory=dict)

    def add(
        self,
        height: int,
        origin: int,
        tx_ids: Optional[List[int]],
        auto_fill: int = 0,
        parent: str = "",
        salt: int = 0,
    ) -> int:
        h = block_hash(height, origin, salt)
        if h in self.by_hash:
            raise ConfigError(f"duplicate block identity at height {height}")
        blk = BlockSpec(len(self.blocks), height, origin, h, parent, tx_ids, auto_fill)
        self.by_hash[h] = blk.block_id
        self.blocks.append(blk)
        return blk.block_id

    def as_block(self, block_id: int, resolved_tx_hashes: Tuple[str, ...]) -> Block:
        spec = self.blocks[block_id]
        return Block(spec.hash, spec.height, spec.parent, resolved_tx_hashes)

    def __len__(self) -> int:
        return len(self.blocks)


@dataclass
class Injection:
    t_us: int
    kind: int  # INJECT_TX | INJECT_BLOCK
    origin: int
    ref: int   # tx_id or block_id


@dataclass
class Workload:
    txs: TxRegistry = field(default_factory=TxRegistry)
    blocks: BlockRegistry = field(default_factory=BlockRegistry)
    injections: List[Injection] = field(default_factory=list)

    def sorted_injections(self) -> List[Injection]:
        return sorted(self.injections, key=lambda i: (i.t_us, i.kind, i.ref))


def build_workload(
    seed: int,
    node_count: int,
    observer_node: Optional[int],
    *,
    tx_count: int = 0,
    tx_interval_us: int = 10_000,
    tx_start_us: int = 0,
    account_count: Optional[int] = None,
    gas_gwei: int = 20,
    gas_low_fraction: float = 0.0,
    gas_low_gwei: int = 1,
    block_interval_us: int = 0,
    block_txs: int = 64,
    block_count: int = 0,
    fork_every: int = 0,
    fork_offset_us: int = 1_000,
) -> Workload:
    """Deterministic background workload.

    Transactions are assigned round-robin to ``account_count`` accounts
    (default: one account per transaction), so per-account nonces increase
    in injection order.  Origins are uniform over non-observer nodes.
    Blocks fill themselves from the origin's pending pool at fire time.
    """
    if tx_count < 0 or tx_interval_us <= 0:
        raise ConfigError("tx workload needs tx_count >= 0 and a positive interval")
    if not (0.0 <= gas_low_fraction <= 1.0):
        raise ConfigError("gas_low_fraction must be in [0,1]")
    rng = RandomSource(seed, STREAM_WORKLOAD)
    wl = Workload()
    eligible = [n for n in range(node_count) if n != observer_node]
    if (tx_count or block_count) and not eligible:
        raise ConfigError("no non-observer nodes to inject at")

    accounts = account_count if account_count else max(1, tx_count)
    for i in range(tx_count):
        account = i % accounts
        nonce = i // accounts
        gas = gas_gwei
        if gas_low_fraction > 0.0 and rng.random() < gas_low_fraction:
            gas = gas_low_gwei
        tx_id = wl.txs.add(account, nonce, gas)
        origin = eligible[rng.randbelow(len(eligible))]
        wl.injections.append(
            Injection(tx_start_us + i * tx_interval_us, INJECT_TX, origin, tx_id)
        )

    if block_interval_us > 0 and block_count > 0:
        parent = "genesis"
        for b in range(block_count):
            t = (b + 1) * block_interval_us
            origin = eligible[rng.randbelow(len(eligible))]
            height = b + 1
            blk_id = wl.blocks.add(height, origin, None, auto_fill=block_txs, parent=parent)
            wl.injections.append(Injection(t, INJECT_BLOCK, origin, blk_id))
            if fork_every > 0 and (b + 1) % fork_every == 0:
                sib_origin = eligible[rng.randbelow(len(eligible))]
                sib_id = wl.blocks.add(
                    height, sib_origin, None, auto_fill=block_txs, parent=parent, salt=1
                )
                wl.injections.append(
                    Injection(t + fork_offset_us, INJECT_BLOCK, sib_origin, sib_id)
                )
            parent = wl.blocks.blocks[blk_id].hash
    return wl
