# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
# distutils: language = c++
"""Compiled event-loop kernel.

Semantics mirror ethgossip.engine.Engine exactly (same random streams,
same decision points, same tie-breaking); tests compare observable
outputs of both backends on randomized scenarios.  The kernel exists for
scale: large broadcast experiments process 10^8-10^9 events.
"""

import hashlib

import numpy as np

from libc.stdint cimport (int8_t, int16_t, int32_t, int64_t, uint8_t,
                          uint32_t, uint64_t)
from libcpp.vector cimport vector
from libcpp.unordered_map cimport unordered_map
from libcpp.unordered_set cimport unordered_set

cdef extern from *:
    # opaque alias so Lemire's multiply-shift can use the full 128-bit product
    ctypedef unsigned long long uint128_t "unsigned __int128"

# splitmix64 constants assembled from 32-bit halves (> INT64_MAX literals)
cdef uint64_t GOLDEN = (<uint64_t>0x9E3779B9 << 32) | <uint64_t>0x7F4A7C15
cdef uint64_t MIX1 = (<uint64_t>0xBF58476D << 32) | <uint64_t>0x1CE4E5B9
cdef uint64_t MIX2 = (<uint64_t>0x94D049BB << 32) | <uint64_t>0x133111EB

# event kinds (kernel-internal; parity with the python engine is checked
# on outputs, not on event encodings)
DEF K_INJECT_TX = 0
DEF K_INJECT_BLOCK = 1
DEF K_DELIVER_TX = 2
DEF K_DELIVER_TX_MULTI = 3
DEF K_DELIVER_HASH = 4
DEF K_DELIVER_HASH_MULTI = 5
DEF K_DELIVER_BLOCK = 6
DEF K_DELIVER_BLOCK_HASH = 7
DEF K_GET_TX = 8
DEF K_GET_HEADER = 9
DEF K_GET_BODY = 10
DEF K_HEADER_RESP = 11
DEF K_BODY_RESP = 12
DEF K_TIMER_TX_FETCH = 13
DEF K_TIMER_BLK_HEADER = 14
DEF K_TIMER_BLK_BODY = 15
DEF K_VALIDATED = 16
DEF K_VALIDATED_MULTI = 17
DEF K_BLK_HEADER_DONE = 18
DEF K_BLK_PROCESSED = 19
DEF K_FLUSH = 20

# per-(node, tx) status bits
DEF ST_HAS_FULL = 1
DEF ST_TIMER = 2
DEF ST_MINED = 4
DEF ST_POOL_KNOWN = 8

# block fetch states
DEF BF_IDLE = 0
DEF BF_WAIT_HEADER = 1
DEF BF_WAIT_HEADER_RESP = 2
DEF BF_WAIT_BODY = 3
DEF BF_WAIT_BODY_RESP = 4
DEF BF_DONE = 5

DEF V_ETH64 = 0
DEF V_ETH65 = 1
DEF V_OBSERVER = 2

DEF SEND_TX = 0
DEF SEND_HASH = 1

DEF DIGEST_CHUNK = 65536


cdef struct Event:
    int64_t t
    int64_t seq
    int32_t tgt
    int32_t frm
    int32_t a
    int32_t b
    int32_t c
    uint8_t kind


cdef inline uint64_t _mix64(uint64_t x) nogil:
    x = (x ^ (x >> 30)) * MIX1
    x = (x ^ (x >> 27)) * MIX2
    return x ^ (x >> 31)


cdef inline uint64_t _stream_state(uint64_t seed, uint64_t sid) nogil:
    return _mix64(seed + GOLDEN * (sid + 1))


cdef inline int64_t np_isqrt(int64_t n) nogil:
    # integer floor sqrt; n is a node degree, so tiny
    cdef int64_t r = 0
    while (r + 1) * (r + 1) <= n:
        r += 1
    return r


cdef inline int _ev_less(const Event& a, const Event& b) nogil:
    if a.t != b.t:
        return a.t < b.t
    return a.seq < b.seq


cdef class Sim:
    # --- topology
    cdef int64_t[::1] off
    cdef int32_t[::1] nbr
    cdef int64_t[::1] edelay
    cdef int32_t[::1] rslot
    cdef uint8_t[::1] version
    cdef int n_nodes, observer
    cdef int64_t E2
    # --- registries
    cdef int64_t[::1] tx_account, tx_nonce, tx_gas
    cdef int n_txs, n_blocks, n_accounts
    cdef int64_t[::1] acct_ptr, acct_nonces
    cdef int32_t[::1] acct_txids
    cdef int64_t[::1] blk_height, blk_auto
    cdef int8_t[::1] blk_explicit
    cdef int64_t[::1] blk_content_off
    cdef int32_t[::1] blk_content_ids
    # --- params
    cdef int64_t t_header_wait, t_body_wait, t_tx_wait
    cdef int64_t t_validate, t_hvalidate, t_process
    cdef int64_t flush_delay, jitter
    cdef int pending_cap, queued_cap
    cdef int64_t[::1] gas_floor
    cdef int keep_full
    # --- dynamic state
    cdef uint64_t[::1] rng_state
    cdef uint8_t[::1] status
    cdef uint8_t[::1] hops8
    cdef uint64_t[::1] known
    cdef uint64_t[::1] recv
    cdef int64_t words_tx, words_blk
    cdef uint64_t[::1] b_known
    cdef uint64_t[::1] b_recv
    cdef uint8_t[::1] b_flags
    cdef uint8_t[::1] b_hops
    cdef uint8_t[::1] b_fetch
    cdef int32_t[::1] pool_exec
    cdef int16_t[::1] pool_pend
    cdef unordered_map[int64_t, vector[int32_t]] queued
    cdef unordered_map[int64_t, int32_t] first_processed
    cdef vector[vector[int32_t]] b_announce
    cdef vector[vector[int32_t]] deferred
    cdef int64_t[::1] blocked_until
    cdef vector[vector[int32_t]] scratch        # per node: slot,kind,tx,hops
    cdef uint8_t[::1] flush_scheduled
    cdef vector[vector[int32_t]] packets
    cdef vector[int32_t] free_pk
    cdef vector[vector[int32_t]] block_content
    cdef uint8_t[::1] content_resolved
    # --- heap
    cdef vector[Event] heap
    cdef int64_t seq, now
    # --- outputs
    cdef int64_t[::1] tr_reached, tr_min, tr_max, tr_sum, tr_sumh, tr_maxh
    cdef vector[int64_t] tr_full
    cdef object hasher
    cdef vector[uint8_t] hbuf
    cdef vector[int32_t] obs_peer, obs_tx, obs_ps
    cdef vector[int8_t] obs_hash
    cdef vector[int64_t] obs_t, obs_gas
    cdef int64_t[:, ::1] pc  # per peer: txp, hashp, txe, hashe, blkp, blkhp, start, cur
    cdef uint8_t[::1] pc_seen
    cdef int64_t c_events, c_txp, c_hashp, c_blk, c_blkh
    cdef int64_t c_gettx, c_gethdr, c_getbody
    cdef int64_t c_rej_gas, c_rej_known, c_rej_full, c_rej_stale
    cdef int64_t c_deferred, c_resets, c_forks
    # scratch vectors reused across events
    cdef vector[int32_t] v_downstream, v_new_tx, v_new_hops, v_entered, v_providers
    cdef vector[int64_t] v_keys

    # ------------------------------------------------------------------

    def __init__(self, off, nbr, edelay, rslot, version,
                 tx_account, tx_nonce, tx_gas,
                 acct_ptr, acct_nonces, acct_txids, n_accounts,
                 blk_height, blk_auto, blk_explicit,
                 blk_content_off, blk_content_ids,
                 seed,
                 t_header_wait, t_body_wait, t_tx_wait,
                 t_validate, t_hvalidate, t_process,
                 gas_floor, flush_delay, jitter,
                 pending_cap, queued_cap, keep_full):
        self.off = off
        self.nbr = nbr
        self.edelay = edelay
        self.rslot = rslot
        self.version = version
        self.n_nodes = version.shape[0]
        self.E2 = off[self.n_nodes]
        self.observer = -1
        cdef int i
        for i in range(self.n_nodes):
            if version[i] == V_OBSERVER:
                self.observer = i
        self.tx_account = tx_account
        self.tx_nonce = tx_nonce
        self.tx_gas = tx_gas
        self.n_txs = tx_account.shape[0]
        self.acct_ptr = acct_ptr
        self.acct_nonces = acct_nonces
        self.acct_txids = acct_txids
        self.n_accounts = n_accounts
        self.blk_height = blk_height
        self.blk_auto = blk_auto
        self.blk_explicit = blk_explicit
        self.blk_content_off = blk_content_off
        self.blk_content_ids = blk_content_ids
        self.n_blocks = blk_height.shape[0]
        self.t_header_wait = t_header_wait
        self.t_body_wait = t_body_wait
        self.t_tx_wait = t_tx_wait
        self.t_validate = t_validate
        self.t_hvalidate = t_hvalidate
        self.t_process = t_process
        self.gas_floor = gas_floor
        self.flush_delay = flush_delay
        self.jitter = jitter
        self.pending_cap = pending_cap
        self.queued_cap = queued_cap
        self.keep_full = keep_full

        cdef int64_t n = self.n_nodes
        if n * <int64_t>max(1, self.n_accounts) > (1 << 26) * 4:
            raise MemoryError(
                "node x account table too large; lower account_count "
                f"({n} nodes x {self.n_accounts} accounts)"
            )

        rng = np.empty(n, dtype=np.uint64)
        self.rng_state = rng
        for i in range(self.n_nodes):
            self.rng_state[i] = _stream_state(<uint64_t>seed, <uint64_t>(16 + i))

        self.status = np.zeros(n * max(1, self.n_txs), dtype=np.uint8)
        self.hops8 = np.zeros(n * max(1, self.n_txs), dtype=np.uint8)
        self.words_tx = (self.E2 + 63) >> 6
        self.known = np.zeros(max(1, self.n_txs * self.words_tx), dtype=np.uint64)
        self.recv = np.zeros(max(1, self.n_txs * self.words_tx), dtype=np.uint64)
        self.words_blk = self.words_tx
        self.b_known = np.zeros(max(1, self.n_blocks * self.words_blk), dtype=np.uint64)
        self.b_recv = np.zeros(max(1, self.n_blocks * self.words_blk), dtype=np.uint64)
        self.b_flags = np.zeros(max(1, n * self.n_blocks), dtype=np.uint8)
        self.b_hops = np.zeros(max(1, n * self.n_blocks), dtype=np.uint8)
        self.b_fetch = np.zeros(max(1, n * self.n_blocks), dtype=np.uint8)
        self.pool_exec = np.zeros(max(1, n * max(1, self.n_accounts)), dtype=np.int32)
        self.pool_pend = np.zeros(max(1, n * max(1, self.n_accounts)), dtype=np.int16)
        self.blocked_until = np.zeros(n, dtype=np.int64)
        self.flush_scheduled = np.zeros(n, dtype=np.uint8)
        self.scratch.resize(n)
        self.deferred.resize(n)
        self.b_announce.resize(max(1, n * self.n_blocks))
        self.block_content.resize(max(1, self.n_blocks))
        self.content_resolved = np.zeros(max(1, self.n_blocks), dtype=np.uint8)

        cdef int64_t n_msgs = self.n_txs + self.n_blocks
        self.tr_reached = np.zeros(max(1, n_msgs), dtype=np.int64)
        self.tr_min = np.full(max(1, n_msgs), -1, dtype=np.int64)
        self.tr_max = np.full(max(1, n_msgs), -1, dtype=np.int64)
        self.tr_sum = np.zeros(max(1, n_msgs), dtype=np.int64)
        self.tr_sumh = np.zeros(max(1, n_msgs), dtype=np.int64)
        self.tr_maxh = np.zeros(max(1, n_msgs), dtype=np.int64)
        self.hasher = hashlib.sha256()
        self.hbuf.reserve(DIGEST_CHUNK + 32)

        self.pc = np.zeros((n, 8), dtype=np.int64)
        cdef int j
        for i in range(self.n_nodes):
            self.pc[i, 6] = -1
            self.pc[i, 7] = -1
        self.pc_seen = np.zeros(n, dtype=np.uint8)
        self.seq = 0
        self.now = 0
        self.heap.reserve(1 << 16)

    # ------------------------------------------------------------ rng

    cdef inline uint64_t _next(self, int node) nogil:
        self.rng_state[node] = self.rng_state[node] + <uint64_t>GOLDEN
        return _mix64(self.rng_state[node])

    cdef inline int64_t _randbelow(self, int node, int64_t n) nogil:
        return <int64_t>((<uint128_t>self._next(node) * <uint128_t>n) >> 64)

    cdef inline int64_t _randint(self, int node, int64_t lo, int64_t hi) nogil:
        return lo + self._randbelow(node, hi - lo + 1)

    cdef inline void _shuffle_prefix(self, int node, vector[int32_t]& items, int64_t k) nogil:
        cdef int64_t n = <int64_t>items.size()
        cdef int64_t i, j
        cdef int32_t tmp
        for i in range(k):
            j = i + self._randbelow(node, n - i)
            tmp = items[i]; items[i] = items[j]; items[j] = tmp

    # ------------------------------------------------------------ heap

    cdef void _push(self, int64_t t, uint8_t kind, int32_t tgt, int32_t frm,
                    int32_t a, int32_t b, int32_t c):
        cdef Event ev
        ev.t = t
        self.seq += 1
        ev.seq = self.seq
        ev.kind = kind
        ev.tgt = tgt
        ev.frm = frm
        ev.a = a
        ev.b = b
        ev.c = c
        # 4-ary heap: shallower than binary, friendlier to the cache
        self.heap.push_back(ev)
        cdef size_t i = self.heap.size() - 1
        cdef size_t parent
        while i > 0:
            parent = (i - 1) >> 2
            if _ev_less(self.heap[i], self.heap[parent]):
                self.heap[i] = self.heap[parent]
                self.heap[parent] = ev
                i = parent
            else:
                break

    cdef Event _pop(self):
        cdef Event top = self.heap[0]
        cdef Event last = self.heap.back()
        self.heap.pop_back()
        cdef size_t n = self.heap.size()
        if n == 0:
            return top
        cdef size_t i = 0, child, c, best, stop
        while True:
            child = 4 * i + 1
            if child >= n:
                break
            best = child
            stop = child + 4
            if stop > n:
                stop = n
            c = child + 1
            while c < stop:
                if _ev_less(self.heap[c], self.heap[best]):
                    best = c
                c += 1
            if _ev_less(self.heap[best], last):
                self.heap[i] = self.heap[best]
                i = best
            else:
                break
        self.heap[i] = last
        return top

    # ------------------------------------------------------------ bits

    cdef inline void _mark_known(self, int32_t tx, int node, int32_t slot) nogil:
        cdef int64_t bit = self.off[node] + slot
        self.known[tx * self.words_tx + (bit >> 6)] |= (<uint64_t>1) << (bit & 63)

    cdef inline void _mark_recv(self, int32_t tx, int node, int32_t slot) nogil:
        cdef int64_t bit = self.off[node] + slot
        self.recv[tx * self.words_tx + (bit >> 6)] |= (<uint64_t>1) << (bit & 63)

    cdef inline int _is_known(self, int32_t tx, int node, int32_t slot) nogil:
        cdef int64_t bit = self.off[node] + slot
        return (self.known[tx * self.words_tx + (bit >> 6)] >> (bit & 63)) & 1

    cdef inline int _is_recv(self, int32_t tx, int node, int32_t slot) nogil:
        cdef int64_t bit = self.off[node] + slot
        return (self.recv[tx * self.words_tx + (bit >> 6)] >> (bit & 63)) & 1

    cdef inline void _bmark_known(self, int32_t blk, int node, int32_t slot) nogil:
        cdef int64_t bit = self.off[node] + slot
        self.b_known[blk * self.words_blk + (bit >> 6)] |= (<uint64_t>1) << (bit & 63)

    cdef inline void _bmark_recv(self, int32_t blk, int node, int32_t slot) nogil:
        cdef int64_t bit = self.off[node] + slot
        self.b_recv[blk * self.words_blk + (bit >> 6)] |= (<uint64_t>1) << (bit & 63)

    cdef inline int _b_is_known(self, int32_t blk, int node, int32_t slot) nogil:
        cdef int64_t bit = self.off[node] + slot
        return (self.b_known[blk * self.words_blk + (bit >> 6)] >> (bit & 63)) & 1

    cdef inline int _b_is_recv(self, int32_t blk, int node, int32_t slot) nogil:
        cdef int64_t bit = self.off[node] + slot
        return (self.b_recv[blk * self.words_blk + (bit >> 6)] >> (bit & 63)) & 1

    cdef inline int32_t _slot_of(self, int node, int32_t peer) nogil:
        # binary search in the sorted neighbor list
        cdef int64_t lo = self.off[node], hi = self.off[node + 1] - 1, mid
        while lo <= hi:
            mid = (lo + hi) >> 1
            if self.nbr[mid] == peer:
                return <int32_t>(mid - self.off[node])
            if self.nbr[mid] < peer:
                lo = mid + 1
            else:
                hi = mid - 1
        return -1

    # ------------------------------------------------------------ traces

    cdef void _trace(self, int64_t msg, int32_t node, int64_t t, int32_t hops):
        self.tr_reached[msg] += 1
        if self.tr_min[msg] < 0 or t < self.tr_min[msg]:
            self.tr_min[msg] = t
        if t > self.tr_max[msg]:
            self.tr_max[msg] = t
        self.tr_sum[msg] += t
        self.tr_sumh[msg] += hops
        if hops > self.tr_maxh[msg]:
            self.tr_maxh[msg] = hops
        # struct.pack('<iiqi', msg, node, t, hops) byte-compatible record
        cdef int k
        cdef uint64_t ut = <uint64_t>t
        cdef uint32_t um = <uint32_t>(<int32_t>msg)
        cdef uint32_t un = <uint32_t>node
        cdef uint32_t uh = <uint32_t>hops
        for k in range(4):
            self.hbuf.push_back(<uint8_t>((um >> (8 * k)) & 0xFF))
        for k in range(4):
            self.hbuf.push_back(<uint8_t>((un >> (8 * k)) & 0xFF))
        for k in range(8):
            self.hbuf.push_back(<uint8_t>((ut >> (8 * k)) & 0xFF))
        for k in range(4):
            self.hbuf.push_back(<uint8_t>((uh >> (8 * k)) & 0xFF))
        if self.hbuf.size() >= DIGEST_CHUNK:
            self._flush_digest()
        if self.keep_full:
            self.tr_full.push_back(msg)
            self.tr_full.push_back(node)
            self.tr_full.push_back(t)
            self.tr_full.push_back(hops)

    cdef void _flush_digest(self):
        if self.hbuf.size() == 0:
            return
        cdef uint8_t* data = self.hbuf.data()
        self.hasher.update(bytes(<uint8_t[:self.hbuf.size()]>data))
        self.hbuf.clear()

    # ------------------------------------------------------------ observer

    cdef void _observe_items(self, int32_t peer, vector[int32_t]& txs, int is_hash):
        cdef int64_t nitems = <int64_t>txs.size()
        if self.pc_seen[peer] == 0 or self.pc[peer, 6] < 0:
            self.pc[peer, 6] = self.now
        self.pc_seen[peer] = 1
        self.pc[peer, 7] = self.now
        if is_hash:
            self.pc[peer, 1] += 1
            self.pc[peer, 3] += nitems
        else:
            self.pc[peer, 0] += 1
            self.pc[peer, 2] += nitems
        cdef size_t i
        cdef int32_t tx
        for i in range(txs.size()):
            tx = txs[i]
            self.obs_peer.push_back(peer)
            self.obs_tx.push_back(tx)
            self.obs_t.push_back(self.now)
            self.obs_gas.push_back(self.tx_gas[tx])
            self.obs_ps.push_back(<int32_t>nitems)
            self.obs_hash.push_back(<int8_t>is_hash)

    cdef void _observe_block(self, int32_t peer, int is_hash):
        if self.pc_seen[peer] == 0 or self.pc[peer, 6] < 0:
            self.pc[peer, 6] = self.now
        self.pc_seen[peer] = 1
        self.pc[peer, 7] = self.now
        if is_hash:
            self.pc[peer, 5] += 1
        else:
            self.pc[peer, 4] += 1

    # ------------------------------------------------------------ sends

    cdef inline int64_t _send_delay(self, int node, int32_t slot):
        cdef int64_t d = self.edelay[self.off[node] + slot]
        if self.jitter > 0:
            d += self._randint(node, -self.jitter, self.jitter)
        if d < 1:
            d = 1
        return d

    cdef int32_t _new_packet(self):
        cdef int32_t idx
        if self.free_pk.size() > 0:
            idx = self.free_pk.back()
            self.free_pk.pop_back()
            self.packets[idx].clear()
            return idx
        self.packets.push_back(vector[int32_t]())
        return <int32_t>(self.packets.size() - 1)

    cdef void _free_packet(self, int32_t idx):
        self.free_pk.push_back(idx)

    cdef void _flush_node(self, int node):
        cdef vector[int32_t]* sc = &self.scratch[node]
        cdef size_t n_items = sc.size() // 4
        if n_items == 0:
            return
        # distinct (slot, kind) keys in sorted order
        cdef vector[int64_t]* keys = &self.v_keys
        keys.clear()
        cdef size_t i, j
        cdef int64_t key
        cdef int found
        for i in range(n_items):
            key = (<int64_t>sc[0][4 * i]) * 2 + sc[0][4 * i + 1]
            found = 0
            for j in range(keys.size()):
                if keys[0][j] == key:
                    found = 1
                    break
            if not found:
                keys.push_back(key)
        # insertion sort (key count is tiny)
        cdef int64_t tmpk
        for i in range(1, keys.size()):
            j = i
            while j > 0 and keys[0][j] < keys[0][j - 1]:
                tmpk = keys[0][j]; keys[0][j] = keys[0][j - 1]; keys[0][j - 1] = tmpk
                j -= 1
        cdef int32_t slot, kind, pk, first_tx, first_hops
        cdef int64_t count, delay_us
        cdef uint8_t ev_kind
        for j in range(keys.size()):
            key = keys[0][j]
            slot = <int32_t>(key >> 1)
            kind = <int32_t>(key & 1)
            count = 0
            for i in range(n_items):
                if sc[0][4 * i] == slot and sc[0][4 * i + 1] == kind:
                    count += 1
                    first_tx = sc[0][4 * i + 2]
                    first_hops = sc[0][4 * i + 3]
            if kind == SEND_TX:
                self.c_txp += 1
            else:
                self.c_hashp += 1
            delay_us = self._send_delay(node, slot)
            if count == 1:
                ev_kind = K_DELIVER_TX if kind == SEND_TX else K_DELIVER_HASH
                self._push(self.now + delay_us, ev_kind,
                           self.nbr[self.off[node] + slot], node,
                           first_tx, first_hops, self.rslot[self.off[node] + slot])
            else:
                pk = self._new_packet()
                for i in range(n_items):
                    if sc[0][4 * i] == slot and sc[0][4 * i + 1] == kind:
                        self.packets[pk].push_back(sc[0][4 * i + 2])
                        self.packets[pk].push_back(sc[0][4 * i + 3])
                ev_kind = K_DELIVER_TX_MULTI if kind == SEND_TX else K_DELIVER_HASH_MULTI
                self._push(self.now + delay_us, ev_kind,
                           self.nbr[self.off[node] + slot], node,
                           pk, 0, self.rslot[self.off[node] + slot])
        sc.clear()

    # ------------------------------------------------------------ tx plane

    cdef void _forward_tx(self, int node, int32_t tx):
        cdef int64_t base = self.off[node]
        cdef int64_t deg = self.off[node + 1] - base
        cdef vector[int32_t]* ds = &self.v_downstream
        ds.clear()
        cdef int32_t s
        for s in range(<int32_t>deg):
            if not self._is_known(tx, node, s):
                ds.push_back(s)
        cdef int64_t n = <int64_t>ds.size()
        if n == 0:
            return
        cdef int32_t hops_out = <int32_t>self.hops8[
            <int64_t>node * self.n_txs + tx] + 1
        cdef int64_t k
        cdef size_t i
        cdef int peer_version
        if self.version[node] == V_ETH65 or self.version[node] == V_OBSERVER:
            k = <int64_t>(np_isqrt(n))
            if k < 1:
                k = 1
            self._shuffle_prefix(node, ds[0], k)
            for i in range(<size_t>k):
                s = ds[0][i]
                self.scratch[node].push_back(s)
                self.scratch[node].push_back(SEND_TX)
                self.scratch[node].push_back(tx)
                self.scratch[node].push_back(hops_out)
                self._mark_known(tx, node, s)
            for i in range(<size_t>k, ds.size()):
                s = ds[0][i]
                peer_version = self.version[self.nbr[base + s]]
                self.scratch[node].push_back(s)
                if peer_version == V_ETH64:
                    self.scratch[node].push_back(SEND_TX)
                    self.scratch[node].push_back(tx)
                    self.scratch[node].push_back(hops_out)
                else:
                    self.scratch[node].push_back(SEND_HASH)
                    self.scratch[node].push_back(tx)
                    self.scratch[node].push_back(0)
                self._mark_known(tx, node, s)
        else:
            if n > 16:
                k = <int64_t>np_isqrt(n)
            elif n >= 4:
                k = 4
            else:
                k = n
            self._shuffle_prefix(node, ds[0], k)
            for i in range(<size_t>k):
                s = ds[0][i]
                self.scratch[node].push_back(s)
                self.scratch[node].push_back(SEND_TX)
                self.scratch[node].push_back(tx)
                self.scratch[node].push_back(hops_out)
                self._mark_known(tx, node, s)

    cdef inline int32_t _find_tx(self, int64_t account, int64_t nonce) nogil:
        cdef int64_t lo = self.acct_ptr[account], hi = self.acct_ptr[account + 1] - 1, mid
        while lo <= hi:
            mid = (lo + hi) >> 1
            if self.acct_nonces[mid] == nonce:
                return self.acct_txids[mid]
            if self.acct_nonces[mid] < nonce:
                lo = mid + 1
            else:
                hi = mid - 1
        return -1

    cdef void _pool_add(self, int node, int32_t tx, vector[int32_t]* entered):
        """Mirror of TxPool.add; appends newly-pending tx ids to `entered`."""
        cdef int64_t account = self.tx_account[tx]
        cdef int64_t st_idx = <int64_t>node * self.n_txs + tx
        if self.tx_gas[tx] < self.gas_floor[node]:
            self.c_rej_gas += 1
            return
        if self.status[st_idx] & ST_POOL_KNOWN:
            self.c_rej_known += 1
            return
        cdef int64_t pa = <int64_t>node * self.n_accounts + account
        cdef int64_t exec_n = self.pool_exec[pa]
        cdef int64_t pend = self.pool_pend[pa]
        cdef int64_t nonce = self.tx_nonce[tx]
        cdef int64_t qkey = (<int64_t>node << 32) | account
        cdef vector[int32_t]* q
        cdef size_t i
        cdef int32_t promoted_tx
        if nonce < exec_n:
            self.status[st_idx] |= ST_POOL_KNOWN
            self.c_rej_stale += 1
            return
        if nonce == exec_n + pend:
            if pend >= self.pending_cap:
                self.c_rej_full += 1
                return
            self.pool_pend[pa] = <int16_t>(pend + 1)
            self.status[st_idx] |= ST_POOL_KNOWN
            entered.push_back(tx)
            # promotions from the queued spill
            if self.queued.count(qkey):
                q = &self.queued[qkey]
                pend = self.pool_pend[pa]
                while pend < self.pending_cap:
                    promoted_tx = self._queued_take(q, exec_n + pend)
                    if promoted_tx < 0:
                        break
                    self.pool_pend[pa] = <int16_t>(pend + 1)
                    entered.push_back(promoted_tx)
                    pend += 1
                if q.size() == 0:
                    self.queued.erase(qkey)
            return
        if nonce < exec_n + pend:
            self.c_rej_known += 1
            return
        # future nonce: queued
        if self.queued.count(qkey) == 0:
            self.queued[qkey] = vector[int32_t]()
        q = &self.queued[qkey]
        for i in range(q.size()):
            if self.tx_nonce[q[0][i]] == nonce:
                self.c_rej_known += 1
                return
        if <int64_t>q.size() >= self.queued_cap:
            if q.size() == 0:
                self.queued.erase(qkey)
            self.c_rej_full += 1
            return
        self._queued_insert(q, tx)
        self.status[st_idx] |= ST_POOL_KNOWN

    cdef void _queued_insert(self, vector[int32_t]* q, int32_t tx):
        # keep ascending nonce order
        cdef int64_t nonce = self.tx_nonce[tx]
        cdef size_t i = 0
        while i < q.size() and self.tx_nonce[q[0][i]] < nonce:
            i += 1
        q.insert(q.begin() + i, tx)

    cdef int32_t _queued_take(self, vector[int32_t]* q, int64_t nonce):
        cdef size_t i
        cdef int32_t tx
        for i in range(q.size()):
            if self.tx_nonce[q[0][i]] == nonce:
                tx = q[0][i]
                q.erase(q.begin() + i)
                return tx
            if self.tx_nonce[q[0][i]] > nonce:
                return -1
        return -1

    cdef void _pool_add_and_forward(self, int node, vector[int32_t]& txs):
        cdef vector[int32_t]* entered = &self.v_entered
        cdef size_t i, j
        for i in range(txs.size()):
            entered.clear()
            self._pool_add(node, txs[i], entered)
            for j in range(entered.size()):
                self._forward_tx(node, entered[0][j])

    # ------------------------------------------------------------ handlers

    cdef void _on_inject_tx(self, int origin, int32_t tx):
        cdef int64_t st_idx = <int64_t>origin * self.n_txs + tx
        if self.status[st_idx] & ST_HAS_FULL:
            return
        self.status[st_idx] |= ST_HAS_FULL
        self.hops8[st_idx] = 0
        self._trace(tx, origin, self.now, 0)
        self._push(self.now + self.t_validate, K_VALIDATED, origin, -1, tx, 0, 0)

    cdef void _on_deliver_tx(self, int node, int32_t frm, int32_t rslot,
                             vector[int32_t]& txs, vector[int32_t]& hops):
        cdef size_t i
        cdef int32_t tx
        cdef int64_t st_idx
        for i in range(txs.size()):
            self._mark_known(txs[i], node, rslot)
            self._mark_recv(txs[i], node, rslot)
        if self.version[node] == V_OBSERVER:
            self._observe_items(frm, txs, 0)
            return
        cdef vector[int32_t]* new_tx = &self.v_new_tx
        new_tx.clear()
        for i in range(txs.size()):
            tx = txs[i]
            st_idx = <int64_t>node * self.n_txs + tx
            if self.status[st_idx] & ST_HAS_FULL:
                continue
            self.status[st_idx] |= ST_HAS_FULL
            if hops[i] > 255:
                raise OverflowError("hop counter exceeded 255")
            self.hops8[st_idx] = <uint8_t>hops[i]
            self._trace(tx, node, self.now, hops[i])
            new_tx.push_back(tx)
        cdef int32_t pk
        if new_tx.size() == 1:
            self._push(self.now + self.t_validate, K_VALIDATED, node, -1,
                       new_tx[0][0], 0, 0)
        elif new_tx.size() > 1:
            pk = self._new_packet()
            for i in range(new_tx.size()):
                self.packets[pk].push_back(new_tx[0][i])
            self._push(self.now + self.t_validate, K_VALIDATED_MULTI, node, -1,
                       pk, 0, 0)

    cdef void _on_deliver_hash(self, int node, int32_t frm, int32_t rslot,
                               vector[int32_t]& txs):
        cdef size_t i
        cdef int32_t tx
        cdef int64_t st_idx
        for i in range(txs.size()):
            self._mark_known(txs[i], node, rslot)
            self._mark_recv(txs[i], node, rslot)
        if self.version[node] == V_OBSERVER:
            self._observe_items(frm, txs, 1)
            return
        if self.version[node] == V_ETH64:
            raise RuntimeError("eth64 node received a tx-hash announcement")
        for i in range(txs.size()):
            tx = txs[i]
            st_idx = <int64_t>node * self.n_txs + tx
            if self.status[st_idx] & (ST_HAS_FULL | ST_TIMER):
                continue
            self.status[st_idx] |= ST_TIMER
            self._push(self.now + self.t_tx_wait, K_TIMER_TX_FETCH, node, -1, tx, 0, 0)

    cdef void _on_tx_fetch_timer(self, int node, int32_t tx):
        cdef int64_t st_idx = <int64_t>node * self.n_txs + tx
        self.status[st_idx] &= ~<uint8_t>ST_TIMER
        if self.status[st_idx] & ST_HAS_FULL:
            return
        cdef vector[int32_t]* prov = &self.v_providers
        prov.clear()
        cdef int64_t deg = self.off[node + 1] - self.off[node]
        cdef int32_t s
        for s in range(<int32_t>deg):
            if self._is_recv(tx, node, s):
                prov.push_back(s)
        if prov.size() == 0:
            return
        s = prov[0][self._randbelow(node, <int64_t>prov.size())]
        self.c_gettx += 1
        self._push(self.now + self._send_delay(node, s), K_GET_TX,
                   self.nbr[self.off[node] + s], node, tx, 0, 0)

    cdef void _on_get_tx(self, int provider, int32_t requester, int32_t tx):
        cdef int64_t st_idx = <int64_t>provider * self.n_txs + tx
        if not (self.status[st_idx] & ST_HAS_FULL):
            raise RuntimeError("GetTx sent to a provider without the payload")
        cdef int32_t slot = self._slot_of(provider, requester)
        self._mark_known(tx, provider, slot)
        self.c_txp += 1
        self._push(self.now + self._send_delay(provider, slot), K_DELIVER_TX,
                   requester, provider, tx,
                   <int32_t>self.hops8[st_idx] + 1,
                   self.rslot[self.off[provider] + slot])

    cdef void _on_validated(self, int node, vector[int32_t]& txs):
        cdef size_t i
        if self.now < self.blocked_until[node]:
            for i in range(txs.size()):
                self.deferred[node].push_back(txs[i])
            self.c_deferred += <int64_t>txs.size()
            return
        self._pool_add_and_forward(node, txs)

    # ------------------------------------------------------------ blocks

    cdef void _resolve_content(self, int origin, int32_t blk):
        cdef vector[int32_t]* out = &self.block_content[blk]
        cdef int64_t i
        if self.content_resolved[blk]:
            return
        self.content_resolved[blk] = 1
        if self.blk_explicit[blk]:
            for i in range(self.blk_content_off[blk], self.blk_content_off[blk + 1]):
                out.push_back(self.blk_content_ids[i])
            return
        cdef int64_t auto_fill = self.blk_auto[blk]
        cdef int64_t account, k, pa
        cdef int32_t tx
        for account in range(self.n_accounts):
            pa = <int64_t>origin * self.n_accounts + account
            if self.pool_pend[pa] == 0:
                continue
            for k in range(self.pool_pend[pa]):
                if <int64_t>out.size() >= auto_fill:
                    return
                tx = self._find_tx(account, self.pool_exec[pa] + k)
                if tx >= 0:
                    out.push_back(tx)

    cdef void _on_inject_block(self, int origin, int32_t blk):
        cdef int64_t bi = <int64_t>origin * self.n_blocks + blk
        if self.b_flags[bi] & ST_HAS_FULL:
            return
        self._resolve_content(origin, blk)
        self.b_flags[bi] |= ST_HAS_FULL
        self.b_hops[bi] = 0
        self._trace(self.n_txs + blk, origin, self.now, 0)
        self._push(self.now + self.t_hvalidate, K_BLK_HEADER_DONE, origin, -1, blk, 0, 0)

    cdef void _on_deliver_block(self, int node, int32_t frm, int32_t blk, int32_t hops):
        cdef int32_t slot = self._slot_of(node, frm)
        self._bmark_known(blk, node, slot)
        self._bmark_recv(blk, node, slot)
        if self.version[node] == V_OBSERVER:
            self._observe_block(frm, 0)
            return
        cdef int64_t bi = <int64_t>node * self.n_blocks + blk
        if self.b_flags[bi] & ST_HAS_FULL:
            return
        self.b_flags[bi] |= ST_HAS_FULL
        if hops > 255:
            raise OverflowError("hop counter exceeded 255")
        self.b_hops[bi] = <uint8_t>hops
        self.b_fetch[bi] = BF_DONE
        self._trace(self.n_txs + blk, node, self.now, hops)
        self._push(self.now + self.t_hvalidate, K_BLK_HEADER_DONE, node, -1, blk, 0, 0)

    cdef void _on_deliver_block_hash(self, int node, int32_t frm, int32_t blk):
        cdef int32_t slot = self._slot_of(node, frm)
        self._bmark_known(blk, node, slot)
        self._bmark_recv(blk, node, slot)
        if self.version[node] == V_OBSERVER:
            self._observe_block(frm, 1)
            return
        cdef int64_t bi = <int64_t>node * self.n_blocks + blk
        if self.b_flags[bi] & ST_HAS_FULL:
            return
        if self.b_fetch[bi] != BF_IDLE:
            return
        self.b_fetch[bi] = BF_WAIT_HEADER
        self._push(self.now + self.t_header_wait, K_TIMER_BLK_HEADER, node, -1, blk, 0, 0)

    cdef int32_t _pick_provider(self, int node, int32_t blk):
        cdef vector[int32_t]* prov = &self.v_providers
        prov.clear()
        cdef int64_t deg = self.off[node + 1] - self.off[node]
        cdef int32_t s
        for s in range(<int32_t>deg):
            if self._b_is_recv(blk, node, s):
                prov.push_back(s)
        if prov.size() == 0:
            return -1
        return prov[0][self._randbelow(node, <int64_t>prov.size())]

    cdef void _on_blk_header_timer(self, int node, int32_t blk):
        cdef int64_t bi = <int64_t>node * self.n_blocks + blk
        if self.b_flags[bi] & ST_HAS_FULL:
            self.b_fetch[bi] = BF_DONE
            return
        cdef int32_t s = self._pick_provider(node, blk)
        if s < 0:
            self.b_fetch[bi] = BF_IDLE
            return
        self.b_fetch[bi] = BF_WAIT_HEADER_RESP
        self.c_gethdr += 1
        self._push(self.now + self._send_delay(node, s), K_GET_HEADER,
                   self.nbr[self.off[node] + s], node, blk, 0, 0)

    cdef void _on_get_header(self, int provider, int32_t requester, int32_t blk):
        cdef int64_t bi = <int64_t>provider * self.n_blocks + blk
        if not (self.b_flags[bi] & ST_HAS_FULL):
            raise RuntimeError("GetHeader sent to a provider without the block")
        cdef int32_t slot = self._slot_of(provider, requester)
        self._push(self.now + self._send_delay(provider, slot), K_HEADER_RESP,
                   requester, provider, blk, 0, 0)

    cdef void _on_header_resp(self, int node, int32_t frm, int32_t blk):
        cdef int64_t bi = <int64_t>node * self.n_blocks + blk
        if self.b_flags[bi] & ST_HAS_FULL:
            self.b_fetch[bi] = BF_DONE
            return
        if self.b_fetch[bi] != BF_WAIT_HEADER_RESP:
            return
        self.b_fetch[bi] = BF_WAIT_BODY
        self._push(self.now + self.t_body_wait, K_TIMER_BLK_BODY, node, -1, blk, 0, 0)

    cdef void _on_blk_body_timer(self, int node, int32_t blk):
        cdef int64_t bi = <int64_t>node * self.n_blocks + blk
        if self.b_flags[bi] & ST_HAS_FULL:
            self.b_fetch[bi] = BF_DONE
            return
        cdef int32_t s = self._pick_provider(node, blk)
        if s < 0:
            self.b_fetch[bi] = BF_IDLE
            return
        self.b_fetch[bi] = BF_WAIT_BODY_RESP
        self.c_getbody += 1
        self._push(self.now + self._send_delay(node, s), K_GET_BODY,
                   self.nbr[self.off[node] + s], node, blk, 0, 0)

    cdef void _on_get_body(self, int provider, int32_t requester, int32_t blk):
        cdef int64_t bi = <int64_t>provider * self.n_blocks + blk
        if not (self.b_flags[bi] & ST_HAS_FULL):
            raise RuntimeError("GetBody sent to a provider without the block")
        cdef int32_t slot = self._slot_of(provider, requester)
        self._bmark_known(blk, provider, slot)
        self._push(self.now + self._send_delay(provider, slot), K_BODY_RESP,
                   requester, provider, blk, <int32_t>self.b_hops[bi] + 1, 0)

    cdef void _on_body_resp(self, int node, int32_t frm, int32_t blk, int32_t hops):
        cdef int64_t bi = <int64_t>node * self.n_blocks + blk
        if self.b_flags[bi] & ST_HAS_FULL:
            self.b_fetch[bi] = BF_DONE
            return
        self.b_fetch[bi] = BF_DONE
        self.b_flags[bi] |= ST_HAS_FULL
        if hops > 255:
            raise OverflowError("hop counter exceeded 255")
        self.b_hops[bi] = <uint8_t>hops
        self._trace(self.n_txs + blk, node, self.now, hops)
        self._push(self.now + self.t_hvalidate, K_BLK_HEADER_DONE, node, -1, blk, 0, 0)

    cdef void _on_blk_header_done(self, int node, int32_t blk):
        cdef int64_t bi = <int64_t>node * self.n_blocks + blk
        cdef int64_t base = self.off[node]
        cdef int64_t deg = self.off[node + 1] - base
        cdef vector[int32_t]* ds = &self.v_downstream
        ds.clear()
        cdef int32_t s
        for s in range(<int32_t>deg):
            if not self._b_is_known(blk, node, s):
                ds.push_back(s)
        cdef int64_t n = <int64_t>ds.size()
        cdef int64_t k
        cdef size_t i
        cdef int32_t hops_out = <int32_t>self.b_hops[bi] + 1
        cdef vector[int32_t]* ann = &self.b_announce[bi]
        ann.clear()
        if n > 0:
            if self.version[node] == V_ETH65 or self.version[node] == V_OBSERVER:
                k = <int64_t>np_isqrt(n)
                if k < 1:
                    k = 1
            else:
                if n > 16:
                    k = <int64_t>np_isqrt(n)
                elif n >= 4:
                    k = 4
                else:
                    k = n
            self._shuffle_prefix(node, ds[0], k)
            for i in range(<size_t>k):
                s = ds[0][i]
                self._bmark_known(blk, node, s)
                self.c_blk += 1
                self._push(self.now + self._send_delay(node, s), K_DELIVER_BLOCK,
                           self.nbr[base + s], node, blk, hops_out, 0)
            for i in range(<size_t>k, ds.size()):
                ann.push_back(ds[0][i])
        if self.now + self.t_process > self.blocked_until[node]:
            self.blocked_until[node] = self.now + self.t_process
        self._push(self.now + self.t_process, K_BLK_PROCESSED, node, -1, blk, 0, 0)

    cdef void _on_blk_processed(self, int node, int32_t blk):
        cdef int64_t bi = <int64_t>node * self.n_blocks + blk
        cdef vector[int32_t]* ann = &self.b_announce[bi]
        cdef size_t i
        cdef int32_t s
        for i in range(ann.size()):
            s = ann[0][i]
            if self._b_is_known(blk, node, s):
                continue
            self._bmark_known(blk, node, s)
            self.c_blkh += 1
            self._push(self.now + self._send_delay(node, s), K_DELIVER_BLOCK_HASH,
                       self.nbr[self.off[node] + s], node, blk, 0, 0)
        ann.clear()

        # pool reset (normal or fork)
        cdef int64_t height = self.blk_height[blk]
        cdef int64_t fp_key = (<int64_t>node << 24) | height
        cdef int32_t prev = -1
        if self.first_processed.count(fp_key):
            prev = self.first_processed[fp_key]
        cdef vector[int32_t] readded
        self.c_resets += 1
        if prev < 0:
            self.first_processed[fp_key] = blk
            self._reset_pool(node, blk, -1, readded)
        elif prev != blk:
            self.c_forks += 1
            self._reset_pool(node, blk, prev, readded)
        else:
            self._reset_pool(node, blk, -1, readded)

        # mined transactions are possessed and never re-gossiped
        cdef vector[int32_t]* content = &self.block_content[blk]
        cdef int64_t st_idx
        for i in range(content.size()):
            st_idx = <int64_t>node * self.n_txs + content[0][i]
            self.status[st_idx] |= ST_HAS_FULL | ST_MINED
        for i in range(readded.size()):
            st_idx = <int64_t>node * self.n_txs + readded[i]
            self.status[st_idx] |= ST_HAS_FULL
            self._forward_tx(node, readded[i])
        cdef vector[int32_t] pending_defer
        if self.deferred[node].size() > 0 and self.now >= self.blocked_until[node]:
            pending_defer.swap(self.deferred[node])
            self._pool_add_and_forward(node, pending_defer)

    cdef void _reset_pool(self, int node, int32_t blk, int32_t sibling,
                          vector[int32_t]& readded):
        cdef vector[int32_t]* content = &self.block_content[blk]
        cdef size_t i
        cdef int32_t tx
        for i in range(content.size()):
            tx = content[0][i]
            self._remove_mined(node, tx, readded)
            self.status[<int64_t>node * self.n_txs + tx] |= ST_POOL_KNOWN
        if sibling < 0:
            return
        cdef unordered_set[int32_t] new_set
        for i in range(content.size()):
            new_set.insert(content[0][i])
        cdef vector[int32_t]* old = &self.block_content[sibling]
        cdef vector[int32_t] entered
        cdef int64_t st_idx
        cdef size_t j
        for i in range(old.size()):
            tx = old[0][i]
            if new_set.count(tx):
                continue
            self._rewind_exec(node, self.tx_account[tx], self.tx_nonce[tx])
            st_idx = <int64_t>node * self.n_txs + tx
            self.status[st_idx] &= ~<uint8_t>ST_POOL_KNOWN
            entered.clear()
            self._pool_add(node, tx, &entered)
            for j in range(entered.size()):
                readded.push_back(entered[j])

    cdef void _remove_mined(self, int node, int32_t tx, vector[int32_t]& readded):
        cdef int64_t account = self.tx_account[tx]
        cdef int64_t pa = <int64_t>node * self.n_accounts + account
        cdef int64_t exec_n = self.pool_exec[pa]
        cdef int64_t pend = self.pool_pend[pa]
        cdef int64_t new_exec = self.tx_nonce[tx] + 1
        cdef int64_t drop
        cdef int64_t qkey = (<int64_t>node << 32) | account
        cdef vector[int32_t]* q
        cdef size_t i
        cdef int32_t taken
        if new_exec < exec_n:
            new_exec = exec_n
        drop = new_exec - exec_n
        if drop > pend:
            drop = pend
        self.pool_exec[pa] = <int32_t>new_exec
        self.pool_pend[pa] = <int16_t>(pend - drop)
        if self.queued.count(qkey):
            q = &self.queued[qkey]
            i = 0
            while i < q.size():
                if self.tx_nonce[q[0][i]] < new_exec:
                    q.erase(q.begin() + i)
                else:
                    i += 1
            # a mined nonce can close a gap: promote newly contiguous txs
            pend = self.pool_pend[pa]
            while pend < self.pending_cap:
                taken = self._queued_take(q, new_exec + pend)
                if taken < 0:
                    break
                self.pool_pend[pa] = <int16_t>(pend + 1)
                readded.push_back(taken)
                pend += 1
            if q.size() == 0:
                self.queued.erase(qkey)

    cdef void _rewind_exec(self, int node, int64_t account, int64_t new_exec):
        cdef int64_t pa = <int64_t>node * self.n_accounts + account
        cdef int64_t exec_n = self.pool_exec[pa]
        if exec_n <= new_exec:
            return
        cdef int64_t pend = self.pool_pend[pa]
        cdef int64_t qkey = (<int64_t>node << 32) | account
        cdef vector[int32_t]* q
        cdef int64_t k
        cdef int32_t tx
        cdef int64_t st_idx
        if pend > 0:
            if self.queued.count(qkey) == 0:
                self.queued[qkey] = vector[int32_t]()
            q = &self.queued[qkey]
            for k in range(pend):
                tx = self._find_tx(account, exec_n + k)
                if <int64_t>q.size() >= self.queued_cap:
                    st_idx = <int64_t>node * self.n_txs + tx
                    self.status[st_idx] &= ~<uint8_t>ST_POOL_KNOWN
                else:
                    self._queued_insert(q, tx)
            if q.size() == 0:
                self.queued.erase(qkey)
        self.pool_exec[pa] = <int32_t>new_exec
        self.pool_pend[pa] = 0

    # ------------------------------------------------------------ loop

    def run(self, injections_t, injections_kind, injections_origin,
            injections_ref, end_us):
        cdef int64_t[::1] it = injections_t
        cdef int8_t[::1] ik = injections_kind
        cdef int32_t[::1] io = injections_origin
        cdef int32_t[::1] ir = injections_ref
        cdef Py_ssize_t i
        for i in range(it.shape[0]):
            if ik[i] == 0:
                self._push(it[i], K_INJECT_TX, io[i], -1, ir[i], 0, 0)
            else:
                self._push(it[i], K_INJECT_BLOCK, io[i], -1, ir[i], 0, 0)

        cdef int64_t end = end_us
        cdef Event ev
        cdef vector[int32_t] txs_v, hops_v
        cdef vector[int32_t]* pk
        cdef size_t k
        cdef int node
        while self.heap.size() > 0:
            if end >= 0 and self.heap[0].t > end:
                break
            ev = self._pop()
            if ev.t < self.now:
                raise RuntimeError("causality violation in event queue")
            self.now = ev.t
            self.c_events += 1

            if ev.kind == K_DELIVER_TX:
                txs_v.clear(); hops_v.clear()
                txs_v.push_back(ev.a); hops_v.push_back(ev.b)
                self._on_deliver_tx(ev.tgt, ev.frm, ev.c, txs_v, hops_v)
            elif ev.kind == K_DELIVER_TX_MULTI:
                pk = &self.packets[ev.a]
                txs_v.clear(); hops_v.clear()
                for k in range(0, pk.size(), 2):
                    txs_v.push_back(pk[0][k]); hops_v.push_back(pk[0][k + 1])
                self._free_packet(ev.a)
                self._on_deliver_tx(ev.tgt, ev.frm, ev.c, txs_v, hops_v)
            elif ev.kind == K_DELIVER_HASH:
                txs_v.clear()
                txs_v.push_back(ev.a)
                self._on_deliver_hash(ev.tgt, ev.frm, ev.c, txs_v)
            elif ev.kind == K_DELIVER_HASH_MULTI:
                pk = &self.packets[ev.a]
                txs_v.clear()
                for k in range(0, pk.size(), 2):
                    txs_v.push_back(pk[0][k])
                self._free_packet(ev.a)
                self._on_deliver_hash(ev.tgt, ev.frm, ev.c, txs_v)
            elif ev.kind == K_VALIDATED:
                txs_v.clear()
                txs_v.push_back(ev.a)
                self._on_validated(ev.tgt, txs_v)
            elif ev.kind == K_VALIDATED_MULTI:
                pk = &self.packets[ev.a]
                txs_v.clear()
                for k in range(pk.size()):
                    txs_v.push_back(pk[0][k])
                self._free_packet(ev.a)
                self._on_validated(ev.tgt, txs_v)
            elif ev.kind == K_TIMER_TX_FETCH:
                self._on_tx_fetch_timer(ev.tgt, ev.a)
            elif ev.kind == K_GET_TX:
                self._on_get_tx(ev.tgt, ev.frm, ev.a)
            elif ev.kind == K_INJECT_TX:
                self._on_inject_tx(ev.tgt, ev.a)
            elif ev.kind == K_INJECT_BLOCK:
                self._on_inject_block(ev.tgt, ev.a)
            elif ev.kind == K_DELIVER_BLOCK:
                self._on_deliver_block(ev.tgt, ev.frm, ev.a, ev.b)
            elif ev.kind == K_DELIVER_BLOCK_HASH:
                self._on_deliver_block_hash(ev.tgt, ev.frm, ev.a)
            elif ev.kind == K_TIMER_BLK_HEADER:
                self._on_blk_header_timer(ev.tgt, ev.a)
            elif ev.kind == K_GET_HEADER:
                self._on_get_header(ev.tgt, ev.frm, ev.a)
            elif ev.kind == K_HEADER_RESP:
                self._on_header_resp(ev.tgt, ev.frm, ev.a)
            elif ev.kind == K_TIMER_BLK_BODY:
                self._on_blk_body_timer(ev.tgt, ev.a)
            elif ev.kind == K_GET_BODY:
                self._on_get_body(ev.tgt, ev.frm, ev.a)
            elif ev.kind == K_BODY_RESP:
                self._on_body_resp(ev.tgt, ev.frm, ev.a, ev.b)
            elif ev.kind == K_BLK_HEADER_DONE:
                self._on_blk_header_done(ev.tgt, ev.a)
            elif ev.kind == K_BLK_PROCESSED:
                self._on_blk_processed(ev.tgt, ev.a)
            elif ev.kind == K_FLUSH:
                self.flush_scheduled[ev.tgt] = 0
                self._flush_node(ev.tgt)
            else:
                raise RuntimeError(f"unknown event kind {ev.kind}")

            node = ev.tgt
            if self.scratch[node].size() > 0 and not self.flush_scheduled[node]:
                if self.flush_delay == 0:
                    self._flush_node(node)
                else:
                    self.flush_scheduled[node] = 1
                    self._push(self.now + self.flush_delay, K_FLUSH, node, -1, 0, 0, 0)

        if end >= 0 and end > self.now:
            self.now = end
        self._flush_digest()
        return self._package()

    # ------------------------------------------------------------ output

    def _package(self):
        cdef Py_ssize_t i
        n_msgs = self.n_txs + self.n_blocks
        out = {
            "now": int(self.now),
            "trace_reached": np.asarray(self.tr_reached)[:n_msgs].copy(),
            "trace_min_t": np.asarray(self.tr_min)[:n_msgs].copy(),
            "trace_max_t": np.asarray(self.tr_max)[:n_msgs].copy(),
            "trace_sum_t": np.asarray(self.tr_sum)[:n_msgs].copy(),
            "trace_sum_hops": np.asarray(self.tr_sumh)[:n_msgs].copy(),
            "trace_max_hops": np.asarray(self.tr_maxh)[:n_msgs].copy(),
            "trace_digest": self.hasher.hexdigest(),
        }
        if self.keep_full:
            full = np.empty(self.tr_full.size(), dtype=np.int64)
            for i in range(<Py_ssize_t>self.tr_full.size()):
                full[i] = self.tr_full[i]
            out["trace_full"] = full.reshape(-1, 4)
        else:
            out["trace_full"] = None

        cdef Py_ssize_t n_obs = <Py_ssize_t>self.obs_peer.size()
        obs = {
            "peer": np.empty(n_obs, dtype=np.int64),
            "tx_id": np.empty(n_obs, dtype=np.int64),
            "t_us": np.empty(n_obs, dtype=np.int64),
            "gas": np.empty(n_obs, dtype=np.int64),
            "packet_size": np.empty(n_obs, dtype=np.int64),
            "is_hash": np.empty(n_obs, dtype=np.int64),
        }
        cdef int64_t[::1] vpeer = obs["peer"]
        cdef int64_t[::1] vtx = obs["tx_id"]
        cdef int64_t[::1] vt = obs["t_us"]
        cdef int64_t[::1] vgas = obs["gas"]
        cdef int64_t[::1] vps = obs["packet_size"]
        cdef int64_t[::1] vh = obs["is_hash"]
        for i in range(n_obs):
            vpeer[i] = self.obs_peer[i]
            vtx[i] = self.obs_tx[i]
            vt[i] = self.obs_t[i]
            vgas[i] = self.obs_gas[i]
            vps[i] = self.obs_ps[i]
            vh[i] = self.obs_hash[i]
        out["observer"] = obs

        rows = []
        for i in range(self.n_nodes):
            if self.pc_seen[i]:
                rows.append([
                    i, self.pc[i, 0], self.pc[i, 1], self.pc[i, 2],
                    self.pc[i, 3], self.pc[i, 4], self.pc[i, 5],
                    self.pc[i, 6], self.pc[i, 7],
                ])
        out["peer_counters"] = rows
        out["counters"] = {
            "events": int(self.c_events),
            "tx_packets_sent": int(self.c_txp),
            "hash_packets_sent": int(self.c_hashp),
            "block_sends": int(self.c_blk),
            "block_hash_sends": int(self.c_blkh),
            "get_tx": int(self.c_gettx),
            "get_header": int(self.c_gethdr),
            "get_body": int(self.c_getbody),
            "rejected_gas": int(self.c_rej_gas),
            "rejected_known": int(self.c_rej_known),
            "rejected_full": int(self.c_rej_full),
            "rejected_stale": int(self.c_rej_stale),
            "deferred_adds": int(self.c_deferred),
            "resets": int(self.c_resets),
            "fork_resets": int(self.c_forks),
        }
        content = []
        for b in range(self.n_blocks):
            if self.content_resolved[b]:
                content.append([self.block_content[b][j]
                                for j in range(self.block_content[b].size())])
            else:
                content.append(None)
        out["block_content"] = content
        return out


def run(off, nbr, delay, rslot, version,
        tx_account, tx_nonce, tx_gas,
        blk_height, blk_auto, blk_explicit, blk_content_off, blk_content_ids,
        inj_t, inj_kind, inj_origin, inj_ref,
        seed,
        get_header_wait_us, get_body_wait_us, get_tx_wait_us,
        tx_validate_delay_us, header_validate_delay_us, block_process_us,
        gas_floor, flush_delay_us, packet_jitter_us,
        pending_cap, queued_cap, end_us, keep_full):
    """Entry point used by ethgossip.backend."""
    n_accounts = 0
    if len(tx_account):
        n_accounts = int(tx_account.max()) + 1
    order = np.lexsort((tx_nonce, tx_account)) if len(tx_account) else np.array([], dtype=np.int64)
    acct_ptr = np.zeros(n_accounts + 1, dtype=np.int64)
    acct_nonces = np.zeros(max(1, len(order)), dtype=np.int64)
    acct_txids = np.zeros(max(1, len(order)), dtype=np.int32)
    for pos in range(len(order)):
        t = int(order[pos])
        acct_nonces[pos] = tx_nonce[t]
        acct_txids[pos] = t
        acct_ptr[int(tx_account[t]) + 1] += 1
    acct_ptr = np.cumsum(acct_ptr).astype(np.int64)

    sim = Sim(
        np.ascontiguousarray(off, dtype=np.int64),
        np.ascontiguousarray(nbr, dtype=np.int32),
        np.ascontiguousarray(delay, dtype=np.int64),
        np.ascontiguousarray(rslot, dtype=np.int32),
        np.ascontiguousarray(version, dtype=np.uint8),
        np.ascontiguousarray(tx_account, dtype=np.int64),
        np.ascontiguousarray(tx_nonce, dtype=np.int64),
        np.ascontiguousarray(tx_gas, dtype=np.int64),
        np.ascontiguousarray(acct_ptr, dtype=np.int64),
        np.ascontiguousarray(acct_nonces, dtype=np.int64),
        np.ascontiguousarray(acct_txids, dtype=np.int32),
        n_accounts,
        np.ascontiguousarray(blk_height, dtype=np.int64),
        np.ascontiguousarray(blk_auto, dtype=np.int64),
        np.ascontiguousarray(blk_explicit, dtype=np.int8),
        np.ascontiguousarray(blk_content_off, dtype=np.int64),
        np.ascontiguousarray(blk_content_ids, dtype=np.int32),
        seed,
        get_header_wait_us, get_body_wait_us, get_tx_wait_us,
        tx_validate_delay_us, header_validate_delay_us, block_process_us,
        np.ascontiguousarray(gas_floor, dtype=np.int64),
        flush_delay_us, packet_jitter_us,
        pending_cap, queued_cap, keep_full,
    )
    return sim.run(
        np.ascontiguousarray(inj_t, dtype=np.int64),
        np.ascontiguousarray(inj_kind, dtype=np.int8),
        np.ascontiguousarray(inj_origin, dtype=np.int32),
        np.ascontiguousarray(inj_ref, dtype=np.int32),
        int(end_us),
    )
