#!/usr/bin/env python3
"""Benchmark the compiled kernel against the pure-Python event loop.

Runs identical broadcast scenarios on both backends, checks that their
outputs match, and reports event throughput.

    python3 benchmarks/compare_backends.py [--large]
"""

import argparse
import time

from ethgossip.backend import HAVE_KERNEL, run_simulation
from ethgossip.params import ProtocolParams
from ethgossip.rng import RandomSource
from ethgossip.topology import assign_versions, generate_topology
from ethgossip.workload import build_workload


def scenario(n_nodes, tx_count, seed=1, blocks=False):
    topo = generate_topology(
        "preferential-attachment", n_nodes,
        {"m": 4, "seed": seed, "delay_dist": "uniform",
         "low_us": 20_000, "high_us": 150_000},
        RandomSource(seed, 0),
    )
    assign_versions(topo, 1.0, seed, observer_node=0)
    wl = build_workload(
        seed, topo.node_count, 0,
        tx_count=tx_count, tx_interval_us=4_000,
        block_count=5 if blocks else 0,
        block_interval_us=400_000 if blocks else 0,
    )
    return topo, wl


def run_one(topo, wl, backend):
    t0 = time.time()
    rep = run_simulation(topo, wl, ProtocolParams(), seed=1, backend=backend,
                         keep_full_traces=False)
    return rep, time.time() - t0


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--large", action="store_true",
                    help="add a kernel-only large case")
    args = ap.parse_args()
    if not HAVE_KERNEL:
        print("compiled kernel not available; build with: pip install -e .")
        return

    cases = [
        ("100 nodes / 200 txs", *scenario(100, 200)),
        ("300 nodes / 500 txs + blocks", *scenario(300, 500, blocks=True)),
    ]
    print(f"{'case':34} {'backend':8} {'events':>12} {'wall':>8} {'Mev/s':>8} {'speedup':>8}")
    for (name, topo, wl) in cases:
        results = {}
        for backend in ("python", "kernel"):
            rep, dt = run_one(topo, wl, backend)
            results[backend] = (rep, dt)
            rate = rep.counters.events / dt / 1e6
            speedup = (results["python"][1] / dt) if backend == "kernel" else 1.0
            print(f"{name:34} {backend:8} {rep.counters.events:>12,} "
                  f"{dt:>7.2f}s {rate:>8.2f} {speedup:>7.1f}x")
        sig_a = results["python"][0].parity_signature()
        sig_b = results["kernel"][0].parity_signature()
        assert sig_a == sig_b, "backend outputs diverged!"
        print(f"{'':34} outputs identical: trace digest "
              f"{sig_a['trace_digest'][:16]}…")

    if args.large:
        name = "1000 nodes / 5000 txs (kernel)"
        topo, wl = scenario(1000, 5000)
        rep, dt = run_one(topo, wl, "kernel")
        print(f"{name:34} {'kernel':8} {rep.counters.events:>12,} "
              f"{dt:>7.2f}s {rep.counters.events / dt / 1e6:>8.2f}")


if __name__ == "__main__":
    main()
