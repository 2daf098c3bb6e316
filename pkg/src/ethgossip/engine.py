"""Pure-Python discrete-event engine for the gossip protocol.

This is the reference implementation: readable, assert-heavy, and the
semantic oracle for the compiled kernel (`ethgossip._kernel`), which
re-implements the same event loop with C data structures.  The two
backends share preprocessing (topology CSR, registries, injections) and
must produce identical observable outputs; tests enforce that on random
scenarios.

Time is integer microseconds.  Ties are broken by a global sequence
number assigned at scheduling, so runs are reproducible event-for-event.
"""

from __future__ import annotations

import hashlib
import heapq
import struct
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .errors import InvariantError, SchedulingError
from .forwarding import direct_count_eth64, direct_count_eth65
from .params import ETH64, ETH65, OBSERVER, ProtocolParams
from .rng import STREAM_NODE_BASE, RandomSource
from .topology import Topology
from .txpool import ENTERED_PENDING, Block, Transaction, TxPool
from .workload import INJECT_BLOCK, INJECT_TX, Workload

# Event kinds
EV_INJECT_TX = 0
EV_INJECT_BLOCK = 1
EV_DELIVER_TX = 2          # payload: list of (tx_id, hops)
EV_DELIVER_TX_HASH = 3     # payload: list of (tx_id, 0)
EV_DELIVER_BLOCK = 4       # a=block_id, b=hops
EV_DELIVER_BLOCK_HASH = 5  # a=block_id
EV_DELIVER_GET_TX = 6      # target=provider, frm=requester, a=tx_id
EV_DELIVER_GET_HEADER = 7
EV_DELIVER_GET_BODY = 8
EV_DELIVER_HEADER_RESP = 9
EV_DELIVER_BODY_RESP = 10  # b=hops
EV_TIMER_TX_FETCH = 11
EV_TIMER_BLOCK_HEADER = 12
EV_TIMER_BLOCK_BODY = 13
EV_TX_VALIDATED = 14       # payload: list of tx_id
EV_BLOCK_HEADER_DONE = 15
EV_BLOCK_PROCESSED = 16
EV_FLUSH = 17

KIND_NAMES = {
    EV_INJECT_TX: "InjectTransaction",
    EV_INJECT_BLOCK: "InjectBlock",
    EV_DELIVER_TX: "DeliverTxPacket",
    EV_DELIVER_TX_HASH: "DeliverTxHashPacket",
    EV_DELIVER_BLOCK: "DeliverBlockPacket",
    EV_DELIVER_BLOCK_HASH: "DeliverBlockHashPacket",
    EV_DELIVER_GET_TX: "DeliverGetTx",
    EV_DELIVER_GET_HEADER: "DeliverGetHeader",
    EV_DELIVER_GET_BODY: "DeliverGetBody",
    EV_DELIVER_HEADER_RESP: "DeliverResponse(header)",
    EV_DELIVER_BODY_RESP: "DeliverResponse(body)",
    EV_TIMER_TX_FETCH: "TimerExpired(tx-fetch)",
    EV_TIMER_BLOCK_HEADER: "TimerExpired(get-header)",
    EV_TIMER_BLOCK_BODY: "TimerExpired(get-body)",
    EV_TX_VALIDATED: "TimerExpired(tx-validated)",
    EV_BLOCK_HEADER_DONE: "TimerExpired(header-validated)",
    EV_BLOCK_PROCESSED: "TimerExpired(block-processed)",
    EV_FLUSH: "TimerExpired(flush)",
}

# tx-plane send kinds inside flush queues
SEND_TX = 0
SEND_HASH = 1

# per-(node, tx) status bits
ST_HAS_FULL = 1
ST_TIMER = 2
ST_MINED = 4

# block fetch states
BF_IDLE = 0
BF_WAIT_HEADER = 1
BF_WAIT_HEADER_RESP = 2
BF_WAIT_BODY = 3
BF_WAIT_BODY_RESP = 4
BF_DONE = 5

TRACE_RECORD = struct.Struct("<iiqi")  # msg_id, node, t_us, hops


@dataclass
class ObserverRecord:
    """Raw capture column store at the observer (tempTxMsg rows)."""

    peer: List[int] = field(default_factory=list)
    tx_id: List[int] = field(default_factory=list)
    t_us: List[int] = field(default_factory=list)
    gas: List[int] = field(default_factory=list)
    packet_size: List[int] = field(default_factory=list)
    is_hash: List[int] = field(default_factory=list)


@dataclass
class PeerCounters:
    tx_packets: int = 0
    hash_packets: int = 0
    tx_elements: int = 0
    hash_elements: int = 0
    block_packets: int = 0
    block_hash_packets: int = 0
    start_time_us: int = -1
    current_time_us: int = -1


@dataclass
class TraceTables:
    """Ground-truth first-arrival traces, aggregated and optionally full."""

    n_msgs: int = 0
    reached: List[int] = field(default_factory=list)
    min_t: List[int] = field(default_factory=list)
    max_t: List[int] = field(default_factory=list)
    sum_t: List[int] = field(default_factory=list)
    sum_hops: List[int] = field(default_factory=list)
    max_hops: List[int] = field(default_factory=list)
    keep_full: bool = True
    full: List[Tuple[int, int, int, int]] = field(default_factory=list)
    digest: str = ""

    def init(self, n_msgs: int, keep_full: bool) -> None:
        self.n_msgs = n_msgs
        self.keep_full = keep_full
        self.reached = [0] * n_msgs
        self.min_t = [-1] * n_msgs
        self.max_t = [-1] * n_msgs
        self.sum_t = [0] * n_msgs
        self.sum_hops = [0] * n_msgs
        self.max_hops = [0] * n_msgs
        self.full = []


@dataclass
class RunCounters:
    events: int = 0
    tx_packets_sent: int = 0
    hash_packets_sent: int = 0
    block_sends: int = 0
    block_hash_sends: int = 0
    get_tx: int = 0
    get_header: int = 0
    get_body: int = 0
    rejected_gas: int = 0
    rejected_known: int = 0
    rejected_full: int = 0
    rejected_stale: int = 0
    deferred_adds: int = 0
    resets: int = 0
    fork_resets: int = 0


class _NodeState:
    __slots__ = (
        "node_id", "version", "nbrs", "delays", "rslots", "slot_of",
        "pool", "blocked_until", "deferred",
        "known", "recv", "status", "hops",
        "b_known", "b_recv", "b_flags", "b_hops", "b_fetch", "b_announce",
        "first_processed", "scratch", "flush_scheduled", "rng",
    )

    def __init__(self, node_id: int, version: int, nbrs: List[int],
                 delays: List[int], rslots: List[int], pool: TxPool,
                 rng: RandomSource):
        self.node_id = node_id
        self.version = version
        self.nbrs = nbrs
        self.delays = delays
        self.rslots = rslots
        self.slot_of = {n: i for i, n in enumerate(nbrs)}
        self.pool = pool
        self.blocked_until = 0
        self.deferred: List[int] = []
        self.known: Dict[int, int] = {}
        self.recv: Dict[int, int] = {}
        self.status: Dict[int, int] = {}
        self.hops: Dict[int, int] = {}
        self.b_known: Dict[int, int] = {}
        self.b_recv: Dict[int, int] = {}
        self.b_flags: Dict[int, int] = {}
        self.b_hops: Dict[int, int] = {}
        self.b_fetch: Dict[int, int] = {}
        self.b_announce: Dict[int, List[int]] = {}
        self.first_processed: Dict[int, int] = {}
        self.scratch: List[Tuple[int, int, int, int]] = []  # slot, kind, tx, hops
        self.flush_scheduled = False
        self.rng = rng


class Engine:
    """Single-threaded deterministic event loop over one topology."""

    def __init__(
        self,
        topology: Topology,
        params: ProtocolParams | None = None,
        workload: Workload | None = None,
        seed: int = 0,
        keep_full_traces: bool = True,
        hash_event_trace: bool = False,
    ):
        self.topology = topology
        self.params = params or ProtocolParams()
        self.params.validate()
        self.workload = workload or Workload()
        self.seed = seed
        self.now = 0
        self._seq = 0
        self._heap: List[tuple] = []
        self.counters = RunCounters()
        self.observer_node = topology.observer()
        self.observer_records = ObserverRecord()
        self.peer_counters: Dict[int, PeerCounters] = {}
        self.traces = TraceTables()
        self._trace_hasher = hashlib.sha256()
        self._event_hasher = hashlib.sha256() if hash_event_trace else None
        self._event_hash_hex = ""

        n_txs = len(self.workload.txs)
        n_blocks = len(self.workload.blocks)
        self._n_txs = n_txs
        self.traces.init(n_txs + n_blocks, keep_full_traces)
        # Resolved block contents (tx id lists), fixed at injection time.
        self.block_content: List[Optional[List[int]]] = [None] * n_blocks

        adj: Dict[int, List[int]] = {n: [] for n in range(topology.node_count)}
        for (u, v) in topology.edges:
            adj[u].append(v)
            adj[v].append(u)
        nbr_sorted = {n: sorted(adj[n]) for n in adj}
        self.nodes: List[_NodeState] = []
        for n in range(topology.node_count):
            nbrs = nbr_sorted[n]
            delays = [topology.delay(n, m) for m in nbrs]
            rslots = [nbr_sorted[m].index(n) for m in nbrs]
            pool = TxPool(
                min_gas_price_gwei=self.params.gas_floor(n),
                pending_cap=self.params.pending_per_account,
                queued_cap=self.params.queued_per_account,
            )
            rng = RandomSource(seed, STREAM_NODE_BASE + n)
            self.nodes.append(
                _NodeState(n, topology.version.get(n, ETH65), nbrs, delays, rslots, pool, rng)
            )

        for inj in self.workload.sorted_injections():
            kind = EV_INJECT_TX if inj.kind == INJECT_TX else EV_INJECT_BLOCK
            self.schedule(inj.t_us, kind, inj.origin, a=inj.ref)

    # ------------------------------------------------------------------
    # scheduling

    def schedule(self, t: int, kind: int, target: int, frm: int = -1,
                 a: int = 0, b: int = 0, payload=None) -> None:
        if t < self.now:
            raise SchedulingError(
                f"cannot schedule {KIND_NAMES.get(kind, kind)} at {t} < now {self.now}"
            )
        self._seq += 1
        heapq.heappush(self._heap, (t, self._seq, kind, target, frm, a, b, payload))

    def _send_delay(self, node: _NodeState, slot: int) -> int:
        d = node.delays[slot]
        j = self.params.packet_jitter_us
        if j > 0:
            d += node.rng.randint(-j, j)
        return max(1, d)

    # ------------------------------------------------------------------
    # run loop

    def run_until(self, end: Optional[int] = None):
        heap = self._heap
        while heap:
            if end is not None and heap[0][0] > end:
                break
            t, seq, kind, target, frm, a, b, payload = heapq.heappop(heap)
            if t < self.now:
                raise InvariantError("causality violation in event queue")
            self.now = t
            self.counters.events += 1
            if self._event_hasher is not None:
                self._event_hasher.update(
                    struct.pack("<qqiiiii", t, seq, kind, target, frm, a, b)
                )
            self._dispatch(kind, target, frm, a, b, payload)
            node = self.nodes[target]
            if node.scratch and not node.flush_scheduled:
                if self.params.flush_delay_us == 0:
                    self._flush(node)
                else:
                    node.flush_scheduled = True
                    self.schedule(t + self.params.flush_delay_us, EV_FLUSH, target)
        if end is not None and end > self.now:
            self.now = end
        if self._event_hasher is not None:
            self._event_hash_hex = self._event_hasher.hexdigest()
        self.traces.digest = self._trace_hasher.hexdigest()
        return self

    def _dispatch(self, kind, target, frm, a, b, payload):
        if kind == EV_DELIVER_TX:
            self._on_tx_packet(target, frm, b, payload)
        elif kind == EV_DELIVER_TX_HASH:
            self._on_tx_hash_packet(target, frm, b, payload)
        elif kind == EV_TX_VALIDATED:
            self._on_tx_validated(target, payload)
        elif kind == EV_TIMER_TX_FETCH:
            self._on_tx_fetch_timer(target, a)
        elif kind == EV_DELIVER_GET_TX:
            self._on_get_tx(target, frm, a)
        elif kind == EV_INJECT_TX:
            self._on_inject_tx(target, a)
        elif kind == EV_INJECT_BLOCK:
            self._on_inject_block(target, a)
        elif kind == EV_DELIVER_BLOCK:
            self._on_block_packet(target, frm, a, b)
        elif kind == EV_DELIVER_BLOCK_HASH:
            self._on_block_hash_packet(target, frm, a)
        elif kind == EV_TIMER_BLOCK_HEADER:
            self._on_block_header_timer(target, a)
        elif kind == EV_DELIVER_GET_HEADER:
            self._on_get_header(target, frm, a)
        elif kind == EV_DELIVER_HEADER_RESP:
            self._on_header_resp(target, frm, a)
        elif kind == EV_TIMER_BLOCK_BODY:
            self._on_block_body_timer(target, a)
        elif kind == EV_DELIVER_GET_BODY:
            self._on_get_body(target, frm, a)
        elif kind == EV_DELIVER_BODY_RESP:
            self._on_body_resp(target, frm, a, b)
        elif kind == EV_BLOCK_HEADER_DONE:
            self._on_block_header_done(target, a)
        elif kind == EV_BLOCK_PROCESSED:
            self._on_block_processed(target, a)
        elif kind == EV_FLUSH:
            node = self.nodes[target]
            node.flush_scheduled = False
            self._flush(node)
        else:
            raise InvariantError(f"unknown event kind {kind}")

    # ------------------------------------------------------------------
    # traces / collector

    def _trace_arrival(self, msg_id: int, node: int, t: int, hops: int) -> None:
        tr = self.traces
        tr.reached[msg_id] += 1
        if tr.min_t[msg_id] < 0 or t < tr.min_t[msg_id]:
            tr.min_t[msg_id] = t
        if t > tr.max_t[msg_id]:
            tr.max_t[msg_id] = t
        tr.sum_t[msg_id] += t
        tr.sum_hops[msg_id] += hops
        if hops > tr.max_hops[msg_id]:
            tr.max_hops[msg_id] = hops
        self._trace_hasher.update(TRACE_RECORD.pack(msg_id, node, t, hops))
        if tr.keep_full:
            tr.full.append((msg_id, node, t, hops))

    def _peer_counter(self, peer: int) -> PeerCounters:
        pc = self.peer_counters.get(peer)
        if pc is None:
            pc = PeerCounters()
            self.peer_counters[peer] = pc
        return pc

    def _observe_tx_packet(self, peer: int, items, is_hash: bool) -> None:
        pc = self._peer_counter(peer)
        if pc.start_time_us < 0:
            pc.start_time_us = self.now
        pc.current_time_us = self.now
        n = len(items)
        if is_hash:
            pc.hash_packets += 1
            pc.hash_elements += n
        else:
            pc.tx_packets += 1
            pc.tx_elements += n
        rec = self.observer_records
        txs = self.workload.txs.txs
        for (tx_id, _hops) in items:
            rec.peer.append(peer)
            rec.tx_id.append(tx_id)
            rec.t_us.append(self.now)
            rec.gas.append(txs[tx_id].gas_price_gwei)
            rec.packet_size.append(n)
            rec.is_hash.append(1 if is_hash else 0)

    def _observe_block_packet(self, peer: int, is_hash: bool) -> None:
        pc = self._peer_counter(peer)
        if pc.start_time_us < 0:
            pc.start_time_us = self.now
        pc.current_time_us = self.now
        if is_hash:
            pc.block_hash_packets += 1
        else:
            pc.block_packets += 1

    # ------------------------------------------------------------------
    # tx plane

    def _on_inject_tx(self, origin: int, tx_id: int) -> None:
        node = self.nodes[origin]
        if node.version == OBSERVER:
            raise InvariantError("cannot inject at the observer")
        if node.status.get(tx_id, 0) & ST_HAS_FULL:
            return
        node.status[tx_id] = node.status.get(tx_id, 0) | ST_HAS_FULL
        node.hops[tx_id] = 0
        self._trace_arrival(tx_id, origin, self.now, 0)
        self.schedule(
            self.now + self.params.tx_validate_delay_us,
            EV_TX_VALIDATED, origin, payload=[tx_id],
        )

    def _on_tx_packet(self, target: int, frm: int, rslot: int, items) -> None:
        node = self.nodes[target]
        for (tx_id, _h) in items:
            node.known[tx_id] = node.known.get(tx_id, 0) | (1 << rslot)
            node.recv[tx_id] = node.recv.get(tx_id, 0) | (1 << rslot)
        if node.version == OBSERVER:
            self._observe_tx_packet(frm, items, is_hash=False)
            return
        new_ids = []
        for (tx_id, hops) in items:
            st = node.status.get(tx_id, 0)
            if st & ST_HAS_FULL:
                continue
            node.status[tx_id] = st | ST_HAS_FULL
            node.hops[tx_id] = hops
            self._trace_arrival(tx_id, target, self.now, hops)
            new_ids.append(tx_id)
        if new_ids:
            self.schedule(
                self.now + self.params.tx_validate_delay_us,
                EV_TX_VALIDATED, target, payload=new_ids,
            )

    def _on_tx_hash_packet(self, target: int, frm: int, rslot: int, items) -> None:
        node = self.nodes[target]
        for (tx_id, _h) in items:
            node.known[tx_id] = node.known.get(tx_id, 0) | (1 << rslot)
            node.recv[tx_id] = node.recv.get(tx_id, 0) | (1 << rslot)
        if node.version == OBSERVER:
            self._observe_tx_packet(frm, items, is_hash=True)
            return
        if node.version == ETH64:
            raise InvariantError("eth64 node received a tx-hash announcement")
        for (tx_id, _h) in items:
            st = node.status.get(tx_id, 0)
            if st & (ST_HAS_FULL | ST_TIMER):
                continue
            node.status[tx_id] = st | ST_TIMER
            self.schedule(
                self.now + self.params.get_tx_wait_us,
                EV_TIMER_TX_FETCH, target, a=tx_id,
            )

    def _on_tx_fetch_timer(self, target: int, tx_id: int) -> None:
        node = self.nodes[target]
        node.status[tx_id] = node.status.get(tx_id, 0) & ~ST_TIMER
        if node.status.get(tx_id, 0) & ST_HAS_FULL:
            return  # full payload arrived first: request canceled
        mask = node.recv.get(tx_id, 0)
        if mask == 0:
            return  # no provider: request dropped
        providers = [s for s in range(len(node.nbrs)) if mask & (1 << s)]
        slot = providers[node.rng.randbelow(len(providers))]
        self.counters.get_tx += 1
        self.schedule(
            self.now + self._send_delay(node, slot),
            EV_DELIVER_GET_TX, node.nbrs[slot], frm=target, a=tx_id,
        )

    def _on_get_tx(self, provider: int, requester: int, tx_id: int) -> None:
        node = self.nodes[provider]
        if not node.status.get(tx_id, 0) & ST_HAS_FULL:
            raise InvariantError("GetTx sent to a provider without the payload")
        slot = node.slot_of[requester]
        node.known[tx_id] = node.known.get(tx_id, 0) | (1 << slot)
        self.counters.tx_packets_sent += 1
        self.schedule(
            self.now + self._send_delay(node, slot),
            EV_DELIVER_TX, requester, frm=provider, b=node.rslots[slot],
            payload=[(tx_id, node.hops.get(tx_id, 0) + 1)],
        )

    def _on_tx_validated(self, target: int, tx_ids) -> None:
        node = self.nodes[target]
        if self.now < node.blocked_until:
            node.deferred.extend(tx_ids)
            self.counters.deferred_adds += len(tx_ids)
            return
        self._pool_add_and_forward(node, tx_ids)

    def _pool_add_and_forward(self, node: _NodeState, tx_ids) -> None:
        txs = self.workload.txs
        c = self.counters
        for tx_id in tx_ids:
            res = node.pool.add(txs.txs[tx_id])
            if res.outcome == ENTERED_PENDING:
                for tx in res.promoted:
                    self._forward_tx(node, txs.by_hash[tx.tx_hash])
            elif res.reason == "gas-too-low":
                c.rejected_gas += 1
            elif res.reason == "known":
                c.rejected_known += 1
            elif res.reason == "pool-full":
                c.rejected_full += 1
            elif res.reason == "stale":
                c.rejected_stale += 1

    def _forward_tx(self, node: _NodeState, tx_id: int) -> None:
        known = node.known.get(tx_id, 0)
        downstream = [s for s in range(len(node.nbrs)) if not known & (1 << s)]
        n = len(downstream)
        if n == 0:
            return
        hops_out = node.hops.get(tx_id, 0) + 1
        if node.version == ETH65:
            k = direct_count_eth65(n)
            node.rng.shuffle_prefix(downstream, k)
            mark = known
            for s in downstream[:k]:
                node.scratch.append((s, SEND_TX, tx_id, hops_out))
                mark |= 1 << s
            versions = self.topology.version
            for s in downstream[k:]:
                peer_version = versions.get(node.nbrs[s], ETH65)
                if peer_version == ETH64:
                    node.scratch.append((s, SEND_TX, tx_id, hops_out))
                else:
                    node.scratch.append((s, SEND_HASH, tx_id, 0))
                mark |= 1 << s
            node.known[tx_id] = mark
        else:  # eth64 sender: full payload to m peers, nothing to the rest
            m = direct_count_eth64(n)
            node.rng.shuffle_prefix(downstream, m)
            mark = known
            for s in downstream[:m]:
                node.scratch.append((s, SEND_TX, tx_id, hops_out))
                mark |= 1 << s
            node.known[tx_id] = mark

    def _flush(self, node: _NodeState) -> None:
        """Emit queued tx/hash items as one packet per (peer, kind)."""
        groups: Dict[Tuple[int, int], List[Tuple[int, int]]] = {}
        for (slot, kind, tx_id, hops) in node.scratch:
            groups.setdefault((slot, kind), []).append((tx_id, hops))
        node.scratch.clear()
        for (slot, kind) in sorted(groups):
            items = groups[(slot, kind)]
            ev = EV_DELIVER_TX if kind == SEND_TX else EV_DELIVER_TX_HASH
            if kind == SEND_TX:
                self.counters.tx_packets_sent += 1
            else:
                self.counters.hash_packets_sent += 1
            self.schedule(
                self.now + self._send_delay(node, slot),
                ev, node.nbrs[slot], frm=node.node_id, b=node.rslots[slot],
                payload=items,
            )

    # ------------------------------------------------------------------
    # block plane

    def _resolve_block_content(self, node: _NodeState, block_id: int) -> List[int]:
        spec = self.workload.blocks.blocks[block_id]
        if spec.tx_ids is not None:
            return list(spec.tx_ids)
        # Fill from the origin's pending pool: accounts ascending, nonces
        # ascending, up to auto_fill transactions.
        out: List[int] = []
        by_an = self.workload.txs.by_account_nonce
        for account in sorted(node.pool.pending):
            base = node.pool.exec_nonce.get(account, 0)
            for i in range(len(node.pool.pending[account])):
                if len(out) >= spec.auto_fill:
                    return out
                out.append(by_an[(account, base + i)])
        return out

    def _on_inject_block(self, origin: int, block_id: int) -> None:
        node = self.nodes[origin]
        if node.version == OBSERVER:
            raise InvariantError("cannot inject at the observer")
        if node.b_flags.get(block_id, 0) & ST_HAS_FULL:
            return
        if self.block_content[block_id] is None:
            self.block_content[block_id] = self._resolve_block_content(node, block_id)
        node.b_flags[block_id] = node.b_flags.get(block_id, 0) | ST_HAS_FULL
        node.b_hops[block_id] = 0
        self._trace_arrival(self._n_txs + block_id, origin, self.now, 0)
        self.schedule(
            self.now + self.params.header_validate_delay_us,
            EV_BLOCK_HEADER_DONE, origin, a=block_id,
        )

    def _on_block_packet(self, target: int, frm: int, block_id: int, hops: int) -> None:
        node = self.nodes[target]
        slot = node.slot_of[frm]
        node.b_known[block_id] = node.b_known.get(block_id, 0) | (1 << slot)
        node.b_recv[block_id] = node.b_recv.get(block_id, 0) | (1 << slot)
        if node.version == OBSERVER:
            self._observe_block_packet(frm, is_hash=False)
            return
        if node.b_flags.get(block_id, 0) & ST_HAS_FULL:
            return
        node.b_flags[block_id] = node.b_flags.get(block_id, 0) | ST_HAS_FULL
        node.b_hops[block_id] = hops
        node.b_fetch[block_id] = BF_DONE  # abort any hash-fetch sequence
        self._trace_arrival(self._n_txs + block_id, target, self.now, hops)
        self.schedule(
            self.now + self.params.header_validate_delay_us,
            EV_BLOCK_HEADER_DONE, target, a=block_id,
        )

    def _on_block_hash_packet(self, target: int, frm: int, block_id: int) -> None:
        node = self.nodes[target]
        slot = node.slot_of[frm]
        node.b_known[block_id] = node.b_known.get(block_id, 0) | (1 << slot)
        node.b_recv[block_id] = node.b_recv.get(block_id, 0) | (1 << slot)
        if node.version == OBSERVER:
            self._observe_block_packet(frm, is_hash=True)
            return
        if node.b_flags.get(block_id, 0) & ST_HAS_FULL:
            return
        if node.b_fetch.get(block_id, BF_IDLE) != BF_IDLE:
            return
        node.b_fetch[block_id] = BF_WAIT_HEADER
        self.schedule(
            self.now + self.params.get_header_wait_us,
            EV_TIMER_BLOCK_HEADER, target, a=block_id,
        )

    def _pick_block_provider(self, node: _NodeState, block_id: int) -> Optional[int]:
        mask = node.b_recv.get(block_id, 0)
        if mask == 0:
            return None
        providers = [s for s in range(len(node.nbrs)) if mask & (1 << s)]
        return providers[node.rng.randbelow(len(providers))]

    def _on_block_header_timer(self, target: int, block_id: int) -> None:
        node = self.nodes[target]
        if node.b_flags.get(block_id, 0) & ST_HAS_FULL:
            node.b_fetch[block_id] = BF_DONE
            return
        slot = self._pick_block_provider(node, block_id)
        if slot is None:
            node.b_fetch[block_id] = BF_IDLE
            return
        node.b_fetch[block_id] = BF_WAIT_HEADER_RESP
        self.counters.get_header += 1
        self.schedule(
            self.now + self._send_delay(node, slot),
            EV_DELIVER_GET_HEADER, node.nbrs[slot], frm=target, a=block_id,
        )

    def _on_get_header(self, provider: int, requester: int, block_id: int) -> None:
        node = self.nodes[provider]
        if not node.b_flags.get(block_id, 0) & ST_HAS_FULL:
            raise InvariantError("GetHeader sent to a provider without the block")
        slot = node.slot_of[requester]
        # Serving a header does not count as sending the block itself.
        self.schedule(
            self.now + self._send_delay(node, slot),
            EV_DELIVER_HEADER_RESP, requester, frm=provider, a=block_id,
        )

    def _on_header_resp(self, target: int, frm: int, block_id: int) -> None:
        node = self.nodes[target]
        if node.b_flags.get(block_id, 0) & ST_HAS_FULL:
            node.b_fetch[block_id] = BF_DONE
            return
        if node.b_fetch.get(block_id, BF_IDLE) != BF_WAIT_HEADER_RESP:
            return
        node.b_fetch[block_id] = BF_WAIT_BODY
        self.schedule(
            self.now + self.params.get_body_wait_us,
            EV_TIMER_BLOCK_BODY, target, a=block_id,
        )

    def _on_block_body_timer(self, target: int, block_id: int) -> None:
        node = self.nodes[target]
        if node.b_flags.get(block_id, 0) & ST_HAS_FULL:
            node.b_fetch[block_id] = BF_DONE
            return
        slot = self._pick_block_provider(node, block_id)
        if slot is None:
            node.b_fetch[block_id] = BF_IDLE
            return
        node.b_fetch[block_id] = BF_WAIT_BODY_RESP
        self.counters.get_body += 1
        self.schedule(
            self.now + self._send_delay(node, slot),
            EV_DELIVER_GET_BODY, node.nbrs[slot], frm=target, a=block_id,
        )

    def _on_get_body(self, provider: int, requester: int, block_id: int) -> None:
        node = self.nodes[provider]
        if not node.b_flags.get(block_id, 0) & ST_HAS_FULL:
            raise InvariantError("GetBody sent to a provider without the block")
        slot = node.slot_of[requester]
        node.b_known[block_id] = node.b_known.get(block_id, 0) | (1 << slot)
        self.schedule(
            self.now + self._send_delay(node, slot),
            EV_DELIVER_BODY_RESP, requester, frm=provider, a=block_id,
            b=node.b_hops.get(block_id, 0) + 1,
        )

    def _on_body_resp(self, target: int, frm: int, block_id: int, hops: int) -> None:
        node = self.nodes[target]
        if node.b_flags.get(block_id, 0) & ST_HAS_FULL:
            node.b_fetch[block_id] = BF_DONE
            return
        node.b_fetch[block_id] = BF_DONE
        node.b_flags[block_id] = node.b_flags.get(block_id, 0) | ST_HAS_FULL
        node.b_hops[block_id] = hops
        self._trace_arrival(self._n_txs + block_id, target, self.now, hops)
        self.schedule(
            self.now + self.params.header_validate_delay_us,
            EV_BLOCK_HEADER_DONE, target, a=block_id,
        )

    def _on_block_header_done(self, target: int, block_id: int) -> None:
        node = self.nodes[target]
        known = node.b_known.get(block_id, 0)
        downstream = [s for s in range(len(node.nbrs)) if not known & (1 << s)]
        n = len(downstream)
        if n > 0:
            if node.version == ETH65:
                k = direct_count_eth65(n)
            else:
                k = direct_count_eth64(n)
            node.rng.shuffle_prefix(downstream, k)
            hops_out = node.b_hops.get(block_id, 0) + 1
            mark = known
            for s in downstream[:k]:
                mark |= 1 << s
                self.counters.block_sends += 1
                self.schedule(
                    self.now + self._send_delay(node, s),
                    EV_DELIVER_BLOCK, node.nbrs[s], frm=target,
                    a=block_id, b=hops_out,
                )
            node.b_known[block_id] = mark
            node.b_announce[block_id] = downstream[k:]
        else:
            node.b_announce[block_id] = []
        node.blocked_until = max(node.blocked_until, self.now + self.params.block_process_us)
        self.schedule(
            self.now + self.params.block_process_us,
            EV_BLOCK_PROCESSED, target, a=block_id,
        )

    def _on_block_processed(self, target: int, block_id: int) -> None:
        node = self.nodes[target]
        # Announce the hash to the undelivered remainder of the decision.
        known = node.b_known.get(block_id, 0)
        for s in node.b_announce.pop(block_id, []):
            if known & (1 << s):
                continue
            known |= 1 << s
            self.counters.block_hash_sends += 1
            self.schedule(
                self.now + self._send_delay(node, s),
                EV_DELIVER_BLOCK_HASH, node.nbrs[s], frm=target, a=block_id,
            )
        node.b_known[block_id] = known

        # Pool reset (normal or fork) followed by deferred re-adds.
        blocks = self.workload.blocks
        spec = blocks.blocks[block_id]
        content = self.block_content[block_id]
        if content is None:
            content = []
        txs = self.workload.txs
        tx_hashes = tuple(txs.txs[i].tx_hash for i in content)
        block_obj = blocks.as_block(block_id, tx_hashes)
        block_txs = {txs.txs[i].tx_hash: txs.txs[i] for i in content}
        sibling = None
        prev = node.first_processed.get(spec.height)
        if prev is None:
            node.first_processed[spec.height] = block_id
        elif prev != block_id:
            prev_content = self.block_content[prev] or []
            prev_spec = blocks.blocks[prev]
            prev_hashes = tuple(txs.txs[i].tx_hash for i in prev_content)
            sibling = blocks.as_block(prev, prev_hashes)
            for i in prev_content:
                block_txs[txs.txs[i].tx_hash] = txs.txs[i]
            self.counters.fork_resets += 1
        self.counters.resets += 1
        res = node.pool.reset(
            block_obj, block_txs, fork_sibling=sibling,
            block_duration_us=self.params.block_process_us,
        )
        # Mined transactions are now possessed (arrived inside a block body):
        # they are never re-fetched, re-validated or gossip-forwarded.
        for h in block_obj.tx_list:
            tx_id = txs.by_hash[h]
            node.status[tx_id] = node.status.get(tx_id, 0) | ST_HAS_FULL | ST_MINED
        for tx in res.readded:
            tx_id = txs.by_hash[tx.tx_hash]
            node.status[tx_id] = node.status.get(tx_id, 0) | ST_HAS_FULL
            self._forward_tx(node, tx_id)
        if node.deferred and self.now >= node.blocked_until:
            pending = node.deferred
            node.deferred = []
            self._pool_add_and_forward(node, pending)

    # ------------------------------------------------------------------
    # white-box helpers for scripted tests

    def mark_known(self, node_id: int, peer: int, tx_id: int, full: bool = True) -> None:
        """Pretend `peer` already holds tx (testing aid for scripted runs)."""
        node = self.nodes[node_id]
        slot = node.slot_of[peer]
        node.known[tx_id] = node.known.get(tx_id, 0) | (1 << slot)

    def give_tx(self, node_id: int, tx_id: int, hops: int = 0) -> None:
        """Hand a node the full payload without tracing or forwarding."""
        node = self.nodes[node_id]
        node.status[tx_id] = node.status.get(tx_id, 0) | ST_HAS_FULL
        node.hops[tx_id] = hops

    def give_block(self, node_id: int, block_id: int, hops: int = 0) -> None:
        node = self.nodes[node_id]
        node.b_flags[block_id] = node.b_flags.get(block_id, 0) | ST_HAS_FULL
        node.b_hops[block_id] = hops
        if self.block_content[block_id] is None:
            spec = self.workload.blocks.blocks[block_id]
            self.block_content[block_id] = list(spec.tx_ids or [])

    @property
    def event_trace_hash(self) -> str:
        return self._event_hash_hex
