"""Why the degree estimator is restricted to eth65 peers and transaction
counts: eth64 senders and block-plane counters both break its premises."""

import pytest

from ethgossip.analysis import estimate_degree
from ethgossip.backend import run_simulation
from ethgossip.collector import PeerPacketMsg
from ethgossip.errors import EstimatorError
from ethgossip.params import ETH64, ETH65, OBSERVER, ProtocolParams
from ethgossip.topology import Topology
from ethgossip.workload import INJECT_TX, Injection, Workload


def star_with_version(version, n_leaves, seed, tx_count=3000):
    # feeder(0) -> hub(1) -> leaves; observer is leaf 2.
    edges = [(0, 1)] + [(1, leaf) for leaf in range(2, 2 + n_leaves)]
    vers = {i: ETH65 for i in range(2 + n_leaves)}
    vers[1] = version
    vers[2] = OBSERVER
    topo = Topology(2 + n_leaves, sorted(edges),
                    {tuple(sorted(e)): 20_000 for e in edges}, vers)
    topo.validate()
    wl = Workload()
    for i in range(tx_count):
        tx = wl.txs.add(i, 0, 20)
        wl.injections.append(Injection(i * 1_000, INJECT_TX, 0, tx))
    rep = run_simulation(topo, wl, ProtocolParams(), seed=seed, backend="python")
    return rep.peer_counters[1]


def test_eth64_sender_defeats_the_estimator():
    # An eth64 hub sends only full transactions (m of N, never a hash), so
    # the packet ratio carries no degree information: the estimate
    # collapses to ~2 whatever the true downstream size.
    estimates = []
    for n_leaves in (5, 9, 16):
        pc = star_with_version(ETH64, n_leaves, seed=3)
        assert pc.hash_elements == 0  # never announces
        est = estimate_degree(
            PeerPacketMsg(peer_id=1,
                          tx_packet_count=pc.tx_packets,
                          tx_hash_packet_count=pc.hash_packets,
                          tx_element_count=pc.tx_elements,
                          tx_hash_element_count=pc.hash_elements),
            stable_threshold=1,
        )
        estimates.append(est.degree)
    # true degrees were 6, 10, 17 (leaves + feeder) but all estimates agree
    assert estimates == [2.0, 2.0, 2.0]


def test_eth65_sender_same_setup_recovers_degree():
    pc = star_with_version(ETH65, 16, seed=3)
    est = estimate_degree(
        PeerPacketMsg(peer_id=1,
                      tx_packet_count=pc.tx_packets,
                      tx_hash_packet_count=pc.hash_packets,
                      tx_element_count=pc.tx_elements,
                      tx_hash_element_count=pc.hash_elements),
        stable_threshold=1,
    )
    assert abs(est.degree - 17.0) <= 2.0


def test_block_counters_too_sparse_for_estimation():
    # Block and block-hash packets arrive orders of magnitude less often
    # than transaction packets: at a realistic block interval the sample
    # never clears the stable-connection threshold.
    from ethgossip.config import parse_config

    cfg = parse_config(
        "seed = 4\n"
        "topology_kind = erdos-renyi\n"
        "node_count = 40\n"
        "avg_degree = 6\n"
        "observer_degree = 10\n"
        "tx_count = 4000\n"
        "tx_interval_us = 2000\n"
        "account_count = 0\n"
        "block_count = 10\n"
        "block_interval_us = 150000\n"
        "delay_const_us = 20000\n"
    )
    topo = cfg.build_topology()
    wl = cfg.build_workload()
    rep = run_simulation(topo, wl, cfg.protocol_params(), seed=cfg.seed,
                         backend="python")
    tx_samples = []
    block_samples = []
    for peer, pc in rep.peer_counters.items():
        tx_samples.append(pc.tx_packets + pc.hash_packets)
        block_samples.append(pc.block_packets + pc.block_hash_packets)
    assert max(block_samples) < 1000 <= max(tx_samples)
    # and the estimator refuses the sparse block-plane counters
    with pytest.raises(EstimatorError, match="below stable threshold"):
        estimate_degree(
            PeerPacketMsg(peer_id=0,
                          tx_packet_count=max(1, block_samples[0]),
                          tx_hash_packet_count=0,
                          tx_element_count=max(1, block_samples[0]),
                          tx_hash_element_count=0),
        )
