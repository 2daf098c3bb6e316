import pytest

from ethgossip.rng import RandomSource
from ethgossip.txpool import (
    ENTERED_PENDING,
    ENTERED_QUEUED,
    GAS_TOO_LOW,
    KNOWN,
    POOL_FULL,
    REJECTED,
    STALE,
    Block,
    Transaction,
    TxPool,
    block_hash,
    tx_hash,
)


def mktx(account, nonce, gas=20):
    return Transaction(tx_hash(account, nonce), account, nonce, gas)


def mkblock(height, txs, salt=0):
    return Block(block_hash(height, 0, salt), height, "parent", tuple(t.tx_hash for t in txs))


def test_first_tx_enters_pending():
    pool = TxPool()
    res = pool.add(mktx(1, 0))
    assert res.outcome == ENTERED_PENDING
    assert [t.nonce for t in res.promoted] == [0]
    pool.check_invariants()


def test_gap_goes_to_queued_then_promotes():
    pool = TxPool()
    assert pool.add(mktx(7, 0)).outcome == ENTERED_PENDING
    assert pool.add(mktx(7, 2)).outcome == ENTERED_QUEUED
    res = pool.add(mktx(7, 1))
    assert res.outcome == ENTERED_PENDING
    assert [t.nonce for t in res.promoted] == [1, 2]
    assert pool.pending_nonces(7) == [0, 1, 2]
    assert pool.queued_nonces(7) == []
    pool.check_invariants()


def test_gas_floor_rejection():
    pool = TxPool(min_gas_price_gwei=18)
    res = pool.add(mktx(1, 0, gas=17))
    assert res.outcome == REJECTED and res.reason == GAS_TOO_LOW
    assert pool.add(mktx(1, 0, gas=18)).outcome == ENTERED_PENDING


def test_duplicate_rejected_known():
    pool = TxPool()
    pool.add(mktx(1, 0))
    res = pool.add(mktx(1, 0))
    assert res.outcome == REJECTED and res.reason == KNOWN


def test_pending_capacity_16():
    pool = TxPool()
    for nonce in range(16):
        assert pool.add(mktx(1, nonce)).outcome == ENTERED_PENDING
    res = pool.add(mktx(1, 16))
    assert res.outcome == REJECTED and res.reason == POOL_FULL
    pool.check_invariants()


def test_queued_capacity_64():
    pool = TxPool()
    for nonce in range(1, 65):
        assert pool.add(mktx(1, nonce)).outcome == ENTERED_QUEUED
    res = pool.add(mktx(1, 65))
    assert res.outcome == REJECTED and res.reason == POOL_FULL
    pool.check_invariants()


def test_promotion_stops_at_pending_cap():
    pool = TxPool()
    for nonce in range(1, 30):
        pool.add(mktx(1, nonce))
    res = pool.add(mktx(1, 0))
    assert res.outcome == ENTERED_PENDING
    assert len(res.promoted) == 16  # nonce 0 plus 15 promotions
    pool.check_invariants()


def test_reset_removes_included():
    pool = TxPool()
    t0, t1 = mktx(1, 0), mktx(1, 1)
    pool.add(t0)
    pool.add(t1)
    res = pool.reset(mkblock(1, [t0, t1]), {t0.tx_hash: t0, t1.tx_hash: t1})
    assert sorted(res.removed) == sorted([t0.tx_hash, t1.tx_hash])
    assert pool.pending_count() == 0
    assert pool.account_exec_nonce(1) == 2
    pool.check_invariants()


def test_reset_marks_unknown_included_as_known():
    pool = TxPool()
    t0 = mktx(3, 0)
    res = pool.reset(mkblock(1, [t0]), {t0.tx_hash: t0})
    assert res.removed == []
    assert pool.contains(t0.tx_hash)
    # A late gossip copy is now rejected.
    after = pool.add(t0)
    assert after.outcome == REJECTED and after.reason in (KNOWN, STALE)


def test_fork_readds_displaced():
    # Former mined {t1, t2}; After mined {t2}: t1 must come back.
    pool = TxPool()
    t1, t2 = mktx(1, 0), mktx(2, 0)
    txmap = {t1.tx_hash: t1, t2.tx_hash: t2}
    former = mkblock(5, [t1, t2])
    pool.reset(former, txmap)
    after = mkblock(5, [t2], salt=1)
    res = pool.reset(after, txmap, fork_sibling=former)
    assert [t.tx_hash for t in res.readded] == [t1.tx_hash]
    assert pool.pending_nonces(1) == [0]
    pool.check_invariants()


def test_fork_rewind_keeps_contiguity():
    # Pool saw nonces 0..2 mined, then 3,4 pending; a fork re-adds nonce 2.
    pool = TxPool()
    mined = [mktx(1, n) for n in range(3)]
    txmap = {t.tx_hash: t for t in mined}
    former = mkblock(9, mined)
    pool.reset(former, txmap)
    pool.add(mktx(1, 3))
    pool.add(mktx(1, 4))
    after = mkblock(9, mined[:2], salt=1)  # drops nonce 2
    res = pool.reset(after, txmap, fork_sibling=former)
    readded = [t.nonce for t in res.readded]
    assert readded == [2, 3, 4]  # displaced tx plus re-promoted survivors
    assert pool.pending_nonces(1) == [2, 3, 4]
    pool.check_invariants()


def test_stale_nonce_rejected():
    pool = TxPool()
    t0 = mktx(1, 0)
    pool.reset(mkblock(1, [t0]), {t0.tx_hash: t0})
    res = pool.add(mktx(1, 0))
    assert res.outcome == REJECTED


def test_block_duration_echoed():
    pool = TxPool()
    t0 = mktx(1, 0)
    res = pool.reset(mkblock(1, [t0]), {t0.tx_hash: t0}, block_duration_us=200_000)
    assert res.block_duration_us == 200_000


def random_pool_exercise(seed, steps=60):
    """Random add/reset sequence; invariants must hold after every step."""
    rng = RandomSource(seed)
    pool = TxPool()
    height = 1
    last_block = None
    last_txmap = None
    for _ in range(steps):
        op = rng.randbelow(10)
        if op < 7:
            account = rng.randbelow(4)
            nonce = rng.randbelow(12)
            gas = 15 + rng.randbelow(10)
            pool.add(Transaction(tx_hash(account, nonce), account, nonce, gas))
        else:
            txs = []
            for account in range(4):
                base = pool.account_exec_nonce(account)
                for k in range(rng.randbelow(3)):
                    t = Transaction(tx_hash(account, base + k), account, base + k, 20)
                    txs.append(t)
            txmap = {t.tx_hash: t for t in txs}
            blk = Block(block_hash(height, 0, rng.randbelow(1 << 30)), height, "p",
                        tuple(t.tx_hash for t in txs))
            if op == 9 and last_block is not None and last_block.height == height:
                merged = dict(last_txmap)
                merged.update(txmap)
                pool.reset(blk, merged, fork_sibling=last_block)
            else:
                pool.reset(blk, txmap)
                height += 1
            last_block, last_txmap = blk, txmap
        pool.check_invariants()


def test_random_sequences_small():
    for seed in range(200):
        random_pool_exercise(seed)
