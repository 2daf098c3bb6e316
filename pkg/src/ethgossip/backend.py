"""Backend selection and the common simulation entry point.

Two interchangeable event loops exist: the pure-Python reference engine
(`ethgossip.engine`) and the compiled kernel (`ethgossip._kernel`, Cython).
The kernel is used when importable unless ETHGOSSIP_PURE=1 is set.  Both
consume the same preprocessed arrays and must produce identical outputs;
`SimulationReport.parity_signature()` condenses a run for comparison.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .collector import TxMsgPool, pool_from_engine
from .engine import Engine, PeerCounters, RunCounters
from .errors import ConfigError
from .params import ETH64, ETH65, OBSERVER, ProtocolParams
from .topology import Topology
from .workload import INJECT_BLOCK, INJECT_TX, Workload

try:  # pragma: no cover - absence exercised via env toggle
    from . import _kernel  # type: ignore
    HAVE_KERNEL = True
except ImportError:  # pragma: no cover
    _kernel = None
    HAVE_KERNEL = False


def active_backend(requested: str = "auto") -> str:
    if requested not in ("auto", "python", "kernel"):
        raise ConfigError(f"unknown backend {requested!r}")
    if requested == "python":
        return "python"
    if requested == "kernel":
        if not HAVE_KERNEL:
            raise ConfigError("compiled kernel is not available")
        return "kernel"
    if os.environ.get("ETHGOSSIP_PURE") == "1":
        return "python"
    return "kernel" if HAVE_KERNEL else "python"


@dataclass
class TraceView:
    n_msgs: int
    reached: np.ndarray
    min_t: np.ndarray
    max_t: np.ndarray
    sum_t: np.ndarray
    sum_hops: np.ndarray
    max_hops: np.ndarray
    full: Optional[np.ndarray]  # (N,4) int64: msg, node, t, hops
    digest: str


@dataclass
class SimulationReport:
    backend: str
    seed: int
    n_nodes: int
    n_txs: int
    n_blocks: int
    horizon_us: int
    traces: TraceView
    observer_node: Optional[int]
    peer_counters: Dict[int, PeerCounters]
    observer_columns: dict
    counters: RunCounters
    block_content: List[Optional[List[int]]]
    tx_hashes: List[str] = field(default_factory=list)
    block_hashes: List[str] = field(default_factory=list)

    def tx_msg_pool(self) -> TxMsgPool:
        class _Cols:
            pass

        cols = _Cols()
        for name in ("peer", "tx_id", "t_us", "gas", "packet_size", "is_hash"):
            setattr(cols, name, self.observer_columns[name])
        return pool_from_engine(cols, self.peer_counters, self.tx_hashes)

    def parity_signature(self) -> dict:
        obs = self.observer_columns
        h = hashlib.sha256()
        for name in ("peer", "tx_id", "t_us", "gas", "packet_size", "is_hash"):
            h.update(np.asarray(obs[name], dtype=np.int64).tobytes())
        pc_h = hashlib.sha256()
        for peer in sorted(self.peer_counters):
            pc = self.peer_counters[peer]
            pc_h.update(
                np.array(
                    [
                        peer,
                        pc.tx_packets,
                        pc.hash_packets,
                        pc.tx_elements,
                        pc.hash_elements,
                        pc.block_packets,
                        pc.block_hash_packets,
                        pc.start_time_us,
                        pc.current_time_us,
                    ],
                    dtype=np.int64,
                ).tobytes()
            )
        c = self.counters
        return {
            "trace_digest": self.traces.digest,
            "observer_digest": h.hexdigest(),
            "peer_counter_digest": pc_h.hexdigest(),
            "events": c.events,
            "tx_packets_sent": c.tx_packets_sent,
            "hash_packets_sent": c.hash_packets_sent,
            "block_sends": c.block_sends,
            "block_hash_sends": c.block_hash_sends,
            "get_tx": c.get_tx,
            "get_header": c.get_header,
            "get_body": c.get_body,
            "resets": c.resets,
            "fork_resets": c.fork_resets,
            "block_content": [list(b) if b else [] for b in self.block_content],
        }


def _csr(topology: Topology):
    n = topology.node_count
    adj: List[List[int]] = [[] for _ in range(n)]
    for (u, v) in topology.edges:
        adj[u].append(v)
        adj[v].append(u)
    for lst in adj:
        lst.sort()
    off = np.zeros(n + 1, dtype=np.int64)
    for i in range(n):
        off[i + 1] = off[i] + len(adj[i])
    nbr = np.zeros(off[-1], dtype=np.int32)
    delay = np.zeros(off[-1], dtype=np.int64)
    rslot = np.zeros(off[-1], dtype=np.int32)
    for i in range(n):
        base = off[i]
        for s, j in enumerate(adj[i]):
            nbr[base + s] = j
            delay[base + s] = topology.delay(i, j)
            rslot[base + s] = adj[j].index(i)
    version = np.zeros(n, dtype=np.uint8)
    for i in range(n):
        version[i] = topology.version.get(i, ETH65)
    return off, nbr, delay, rslot, version


def run_simulation(
    topology: Topology,
    workload: Workload,
    params: Optional[ProtocolParams] = None,
    seed: int = 0,
    end_us: Optional[int] = None,
    backend: str = "auto",
    keep_full_traces: bool = True,
) -> SimulationReport:
    """Run one simulation on the selected backend and package the outputs."""
    params = params or ProtocolParams()
    params.validate()
    topology.validate()
    chosen = active_backend(backend)
    if chosen == "python":
        return _run_python(topology, workload, params, seed, end_us, keep_full_traces)
    return _run_kernel(topology, workload, params, seed, end_us, keep_full_traces)


def _report_common(topology, workload, seed, chosen, horizon):
    return dict(
        backend=chosen,
        seed=seed,
        n_nodes=topology.node_count,
        n_txs=len(workload.txs),
        n_blocks=len(workload.blocks),
        horizon_us=horizon,
        observer_node=topology.observer(),
        tx_hashes=[t.tx_hash for t in workload.txs.txs],
        block_hashes=[b.hash for b in workload.blocks.blocks],
    )


def _run_python(topology, workload, params, seed, end_us, keep_full_traces):
    eng = Engine(
        topology, params, workload, seed=seed, keep_full_traces=keep_full_traces
    )
    eng.run_until(end_us)
    tr = eng.traces
    full = None
    if keep_full_traces:
        full = np.array(tr.full, dtype=np.int64).reshape(-1, 4)
    traces = TraceView(
        n_msgs=tr.n_msgs,
        reached=np.array(tr.reached, dtype=np.int64),
        min_t=np.array(tr.min_t, dtype=np.int64),
        max_t=np.array(tr.max_t, dtype=np.int64),
        sum_t=np.array(tr.sum_t, dtype=np.int64),
        sum_hops=np.array(tr.sum_hops, dtype=np.int64),
        max_hops=np.array(tr.max_hops, dtype=np.int64),
        full=full,
        digest=tr.digest,
    )
    rec = eng.observer_records
    observer_columns = {
        "peer": np.array(rec.peer, dtype=np.int64),
        "tx_id": np.array(rec.tx_id, dtype=np.int64),
        "t_us": np.array(rec.t_us, dtype=np.int64),
        "gas": np.array(rec.gas, dtype=np.int64),
        "packet_size": np.array(rec.packet_size, dtype=np.int64),
        "is_hash": np.array(rec.is_hash, dtype=np.int64),
    }
    return SimulationReport(
        traces=traces,
        peer_counters=dict(eng.peer_counters),
        observer_columns=observer_columns,
        counters=eng.counters,
        block_content=list(eng.block_content),
        **_report_common(topology, workload, seed, "python", eng.now),
    )


def _run_kernel(topology, workload, params, seed, end_us, keep_full_traces):
    off, nbr, delay, rslot, version = _csr(topology)
    txs = workload.txs
    n_txs = len(txs)
    tx_account = np.array([t.account for t in txs.txs], dtype=np.int64)
    tx_nonce = np.array([t.nonce for t in txs.txs], dtype=np.int64)
    tx_gas = np.array([t.gas_price_gwei for t in txs.txs], dtype=np.int64)

    blocks = workload.blocks.blocks
    blk_height = np.array([b.height for b in blocks], dtype=np.int64)
    blk_auto = np.array([b.auto_fill for b in blocks], dtype=np.int64)
    blk_content_off = [0]
    blk_content_ids: List[int] = []
    blk_explicit = np.zeros(len(blocks), dtype=np.int8)
    for i, b in enumerate(blocks):
        if b.tx_ids is not None:
            blk_explicit[i] = 1
            blk_content_ids.extend(b.tx_ids)
        blk_content_off.append(len(blk_content_ids))

    inj = workload.sorted_injections()
    inj_t = np.array([i.t_us for i in inj], dtype=np.int64)
    inj_kind = np.array(
        [0 if i.kind == INJECT_TX else 1 for i in inj], dtype=np.int8
    )
    inj_origin = np.array([i.origin for i in inj], dtype=np.int32)
    inj_ref = np.array([i.ref for i in inj], dtype=np.int32)

    gas_floor = np.array(
        [params.gas_floor(n) for n in range(topology.node_count)], dtype=np.int64
    )

    out = _kernel.run(
        off, nbr, delay, rslot, version,
        tx_account, tx_nonce, tx_gas,
        blk_height, blk_auto, blk_explicit,
        np.array(blk_content_off, dtype=np.int64),
        np.array(blk_content_ids, dtype=np.int32),
        inj_t, inj_kind, inj_origin, inj_ref,
        int(seed),
        int(params.get_header_wait_us), int(params.get_body_wait_us),
        int(params.get_tx_wait_us), int(params.tx_validate_delay_us),
        int(params.header_validate_delay_us), int(params.block_process_us),
        gas_floor,
        int(params.flush_delay_us), int(params.packet_jitter_us),
        int(params.pending_per_account), int(params.queued_per_account),
        -1 if end_us is None else int(end_us),
        1 if keep_full_traces else 0,
    )

    traces = TraceView(
        n_msgs=n_txs + len(blocks),
        reached=out["trace_reached"],
        min_t=out["trace_min_t"],
        max_t=out["trace_max_t"],
        sum_t=out["trace_sum_t"],
        sum_hops=out["trace_sum_hops"],
        max_hops=out["trace_max_hops"],
        full=out.get("trace_full"),
        digest=out["trace_digest"],
    )
    peer_counters: Dict[int, PeerCounters] = {}
    for row in out["peer_counters"]:
        pc = PeerCounters(
            tx_packets=int(row[1]),
            hash_packets=int(row[2]),
            tx_elements=int(row[3]),
            hash_elements=int(row[4]),
            block_packets=int(row[5]),
            block_hash_packets=int(row[6]),
            start_time_us=int(row[7]),
            current_time_us=int(row[8]),
        )
        peer_counters[int(row[0])] = pc
    counters = RunCounters(**out["counters"])
    observer_columns = {
        k: out["observer"][k]
        for k in ("peer", "tx_id", "t_us", "gas", "packet_size", "is_hash")
    }
    return SimulationReport(
        traces=traces,
        peer_counters=peer_counters,
        observer_columns=observer_columns,
        counters=counters,
        block_content=out["block_content"],
        **_report_common(topology, workload, seed, "kernel", out["now"]),
    )
