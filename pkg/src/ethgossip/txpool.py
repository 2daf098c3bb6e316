"""Unconfirmed-transaction pool with pending/queued split and block resets.

Pending holds, per account, a nonce-contiguous run starting at the
account's executable nonce (at most 16 entries); queued holds future
nonces waiting for a gap to fill (at most 64).  A new block removes the
transactions it contains; when a sibling block replaces one at the same
height, the displaced transactions are re-added and become forwardable as
a batch.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .params import PENDING_PER_ACCOUNT, QUEUED_PER_ACCOUNT


def tx_hash(account: int, nonce: int) -> str:
    """Deterministic 32-byte identity for an (account, nonce) pair."""
    return hashlib.sha256(f"tx:{account}:{nonce}".encode()).hexdigest()


def block_hash(height: int, origin: int, salt: int = 0) -> str:
    return hashlib.sha256(f"blk:{height}:{origin}:{salt}".encode()).hexdigest()


@dataclass(frozen=True)
class Transaction:
    tx_hash: str
    account: int
    nonce: int
    gas_price_gwei: int


@dataclass(frozen=True)
class Block:
    block_hash: str
    height: int
    parent: str
    tx_list: Tuple[str, ...]  # ordered, no duplicates


# txpool_add outcomes
ENTERED_PENDING = "entered-pending"
ENTERED_QUEUED = "entered-queued"
REJECTED = "rejected"

# rejection reasons
GAS_TOO_LOW = "gas-too-low"
KNOWN = "known"
POOL_FULL = "pool-full"
STALE = "stale"
BLOCKED = "blocked"


@dataclass
class AddResult:
    outcome: str
    reason: Optional[str] = None
    # On ENTERED_PENDING: the added tx followed by any queued transactions
    # promoted by it, in promotion order.  Every entry is forwardable.
    promoted: List[Transaction] = field(default_factory=list)


@dataclass
class ResetResult:
    removed: List[str] = field(default_factory=list)   # tx hashes dropped
    readded: List[Transaction] = field(default_factory=list)
    block_duration_us: int = 0


class TxPool:
    """Single node's pool; all mutation goes through add() and reset()."""

    def __init__(
        self,
        min_gas_price_gwei: int = 18,
        pending_cap: int = PENDING_PER_ACCOUNT,
        queued_cap: int = QUEUED_PER_ACCOUNT,
    ):
        self.min_gas_price_gwei = min_gas_price_gwei
        self.pending_cap = pending_cap
        self.queued_cap = queued_cap
        # account -> executable (chain) nonce; pending run starts here
        self.exec_nonce: Dict[int, int] = {}
        # account -> list of pending txs, index i holds nonce exec_nonce+i
        self.pending: Dict[int, List[Transaction]] = {}
        # account -> nonce -> queued tx (future nonces)
        self.queued: Dict[int, Dict[int, Transaction]] = {}
        # hashes ever admitted or mined; duplicates are rejected
        self.known_hashes: set = set()

    # -- queries ------------------------------------------------------------

    def contains(self, h: str) -> bool:
        return h in self.known_hashes

    def pending_count(self) -> int:
        return sum(len(v) for v in self.pending.values())

    def queued_count(self) -> int:
        return sum(len(v) for v in self.queued.values())

    def account_exec_nonce(self, account: int) -> int:
        return self.exec_nonce.get(account, 0)

    def pending_nonces(self, account: int) -> List[int]:
        base = self.account_exec_nonce(account)
        return [base + i for i in range(len(self.pending.get(account, [])))]

    def queued_nonces(self, account: int) -> List[int]:
        return sorted(self.queued.get(account, {}))

    # -- mutation -----------------------------------------------------------

    def add(self, tx: Transaction) -> AddResult:
        """Admit one transaction; returns where it went and any promotions."""
        if tx.gas_price_gwei < self.min_gas_price_gwei:
            return AddResult(REJECTED, GAS_TOO_LOW)
        if tx.tx_hash in self.known_hashes:
            return AddResult(REJECTED, KNOWN)
        exec_nonce = self.exec_nonce.get(tx.account, 0)
        pend = self.pending.get(tx.account, [])
        next_nonce = exec_nonce + len(pend)
        if tx.nonce < exec_nonce:
            self.known_hashes.add(tx.tx_hash)
            return AddResult(REJECTED, STALE)
        if tx.nonce == next_nonce:
            if len(pend) >= self.pending_cap:
                return AddResult(REJECTED, POOL_FULL)
            self.pending.setdefault(tx.account, pend).append(tx)
            if tx.account not in self.exec_nonce:
                self.exec_nonce[tx.account] = exec_nonce
            self.known_hashes.add(tx.tx_hash)
            promoted = [tx] + self._promote(tx.account)
            return AddResult(ENTERED_PENDING, promoted=promoted)
        if tx.nonce < next_nonce:
            # Same (account, nonce) means the same transaction identity.
            return AddResult(REJECTED, KNOWN)
        q = self.queued.setdefault(tx.account, {})
        if tx.nonce in q:
            return AddResult(REJECTED, KNOWN)
        if len(q) >= self.queued_cap:
            if not q:
                del self.queued[tx.account]
            return AddResult(REJECTED, POOL_FULL)
        q[tx.nonce] = tx
        self.known_hashes.add(tx.tx_hash)
        return AddResult(ENTERED_QUEUED)

    def _promote(self, account: int) -> List[Transaction]:
        """Move queued txs whose nonces became contiguous into pending."""
        out: List[Transaction] = []
        q = self.queued.get(account)
        if not q:
            return out
        pend = self.pending.setdefault(account, [])
        nxt = self.exec_nonce.get(account, 0) + len(pend)
        while nxt in q and len(pend) < self.pending_cap:
            tx = q.pop(nxt)
            pend.append(tx)
            out.append(tx)
            nxt += 1
        if not q:
            del self.queued[account]
        return out

    def reset(
        self,
        new_block: Block,
        block_txs: Dict[str, Transaction],
        fork_sibling: Optional[Block] = None,
        block_duration_us: int = 0,
    ) -> ResetResult:
        """Reconcile the pool with a newly accepted block.

        ``block_txs`` maps hash -> transaction for every hash in the block
        (and the sibling).  Transactions included in ``new_block`` are
        dropped wherever they sit and marked known; in the fork case the
        sibling's transactions missing from ``new_block`` are re-added and
        the returned ``readded`` list is forwardable as one batch.
        """
        res = ResetResult(block_duration_us=block_duration_us)
        for h in new_block.tx_list:
            tx = block_txs[h]
            self._remove_mined(tx, res)
            self.known_hashes.add(h)
        if fork_sibling is not None:
            new_set = set(new_block.tx_list)
            for h in fork_sibling.tx_list:
                if h in new_set:
                    continue
                tx = block_txs[h]
                # The replaced block's state is gone: rewind the executable
                # nonce so the displaced transaction can re-enter.
                self._rewind_exec(tx.account, tx.nonce, res)
                self.known_hashes.discard(h)
                r = self.add(tx)
                if r.outcome == ENTERED_PENDING:
                    res.readded.extend(r.promoted)
                elif r.outcome == ENTERED_QUEUED:
                    pass  # re-added but not yet forwardable
        return res

    def _rewind_exec(self, account: int, new_exec: int, res: ResetResult) -> None:
        """Lower an account's executable nonce, spilling any surviving
        pending run into queued so the pending-starts-at-exec invariant
        holds while the displaced transaction is re-added."""
        cur = self.exec_nonce.get(account, 0)
        if cur <= new_exec:
            return
        pend = self.pending.pop(account, [])
        if pend:
            q = self.queued.setdefault(account, {})
            for tx in pend:
                if len(q) >= self.queued_cap:
                    res.removed.append(tx.tx_hash)
                    self.known_hashes.discard(tx.tx_hash)
                else:
                    q[tx.nonce] = tx
            if not q:
                del self.queued[account]
        self.exec_nonce[account] = new_exec

    def _remove_mined(self, tx: Transaction, res: ResetResult) -> None:
        """Advance the account past a mined nonce, dropping stale entries."""
        account, mined_nonce = tx.account, tx.nonce
        exec_nonce = self.exec_nonce.get(account, 0)
        new_exec = max(exec_nonce, mined_nonce + 1)
        pend = self.pending.get(account, [])
        drop = min(len(pend), new_exec - exec_nonce)
        for t in pend[:drop]:
            res.removed.append(t.tx_hash)
        if drop:
            self.pending[account] = pend[drop:]
            if not self.pending[account]:
                del self.pending[account]
        self.exec_nonce[account] = new_exec
        q = self.queued.get(account)
        if q:
            for nonce in [n for n in q if n < new_exec]:
                res.removed.append(q.pop(nonce).tx_hash)
            if not q:
                del self.queued[account]
        # Filling a gap may make queued entries contiguous again.
        self._promote_after_reset(account, res)

    def _promote_after_reset(self, account: int, res: ResetResult) -> None:
        promoted = self._promote(account)
        if promoted:
            res.readded.extend(promoted)

    # -- invariant check (used heavily by tests) ----------------------------

    def check_invariants(self) -> None:
        for account, pend in self.pending.items():
            base = self.exec_nonce.get(account, 0)
            assert len(pend) <= self.pending_cap, "pending cap exceeded"
            for i, tx in enumerate(pend):
                assert tx.nonce == base + i, "pending nonces not contiguous"
                assert tx.gas_price_gwei >= self.min_gas_price_gwei
        for account, q in self.queued.items():
            assert len(q) <= self.queued_cap, "queued cap exceeded"
            base = self.exec_nonce.get(account, 0)
            nxt = base + len(self.pending.get(account, []))
            for nonce, tx in q.items():
                # nonce == nxt is only possible when pending is at capacity
                assert nonce >= nxt, "queued overlaps pending"
                if nonce == nxt:
                    assert len(self.pending.get(account, [])) >= self.pending_cap
                assert tx.gas_price_gwei >= self.min_gas_price_gwei
            pend_set = set(self.pending_nonces(account))
            assert not (pend_set & set(q)), "nonce in both pending and queued"
