"""Differential tests: the compiled kernel must reproduce the pure-Python
engine's observable outputs exactly (traces, observer records, counters)
on randomized scenarios covering every protocol path."""

import pytest

from ethgossip.backend import HAVE_KERNEL, run_simulation
from ethgossip.params import ETH64, ETH65, OBSERVER, ProtocolParams
from ethgossip.rng import RandomSource
from ethgossip.topology import Topology, assign_versions, generate_topology
from ethgossip.workload import build_workload

pytestmark = pytest.mark.skipif(not HAVE_KERNEL, reason="compiled kernel unavailable")


def both(topology, workload, params, seed, end=None):
    a = run_simulation(topology, workload, params, seed=seed, end_us=end,
                       backend="python")
    b = run_simulation(topology, workload, params, seed=seed, end_us=end,
                       backend="kernel")
    return a, b


def assert_parity(a, b):
    sa, sb = a.parity_signature(), b.parity_signature()
    for key in sa:
        assert sa[key] == sb[key], f"parity mismatch on {key}"
    if a.traces.full is not None and b.traces.full is not None:
        assert a.traces.full.shape == b.traces.full.shape
        assert (a.traces.full == b.traces.full).all()


def scenario(seed, *, eth65_fraction=1.0, observer=True, blocks=False,
             forks=False, jitter=0, flush_delay=0, gas_low=0.0,
             accounts=None, kind="erdos-renyi", n=24):
    params = {"seed": seed}
    if kind == "erdos-renyi":
        params["avg_degree"] = 5.0
    elif kind == "preferential-attachment":
        params["m"] = 3
    elif kind == "random-regular":
        params["degree"] = 4
    params["delay_dist"] = "uniform"
    params["low_us"] = 5_000
    params["high_us"] = 120_000
    topo = generate_topology(kind, n, params, RandomSource(seed, 0))
    observer_node = None
    if observer:
        observer_node = 0
    assign_versions(topo, eth65_fraction, seed, observer_node=observer_node)
    wl = build_workload(
        seed,
        topo.node_count,
        observer_node,
        tx_count=60,
        tx_interval_us=7_000,
        account_count=accounts,
        gas_gwei=25,
        gas_low_fraction=gas_low,
        gas_low_gwei=3,
        block_interval_us=120_000 if blocks else 0,
        block_count=4 if blocks else 0,
        block_txs=20,
        fork_every=2 if forks else 0,
    )
    proto = ProtocolParams(packet_jitter_us=jitter, flush_delay_us=flush_delay)
    return topo, wl, proto


CASES = [
    dict(),                                    # all-eth65 with observer
    dict(eth65_fraction=0.5),                  # mixed versions
    dict(eth65_fraction=0.0, observer=False),  # all-eth64, no observer
    dict(blocks=True),                         # block propagation + resets
    dict(blocks=True, forks=True, accounts=6), # forks and shared accounts
    dict(jitter=2_000),                        # per-packet jitter draws
    dict(flush_delay=5_000),                   # delayed batch flushing
    dict(gas_low=0.3),                         # admission-floor rejections
    dict(accounts=5),                          # nonce gaps and promotions
    dict(kind="preferential-attachment"),
    dict(kind="random-regular", blocks=True),
]


@pytest.mark.parametrize("case", range(len(CASES)))
def test_backend_parity_scenarios(case):
    kw = CASES[case]
    topo, wl, proto = scenario(seed=100 + case, **kw)
    a, b = both(topo, wl, proto, seed=100 + case)
    assert_parity(a, b)


@pytest.mark.parametrize("seed", range(6))
def test_backend_parity_random_seeds(seed):
    topo, wl, proto = scenario(seed=seed, eth65_fraction=0.7, blocks=True,
                               accounts=8)
    a, b = both(topo, wl, proto, seed=seed)
    assert_parity(a, b)


def test_parity_with_horizon():
    topo, wl, proto = scenario(seed=42, blocks=True)
    a, b = both(topo, wl, proto, seed=42, end=200_000)
    assert a.horizon_us == b.horizon_us == 200_000
    assert_parity(a, b)


def test_kernel_determinism_repeated():
    topo, wl, proto = scenario(seed=9, blocks=True, forks=True, accounts=4)
    r1 = run_simulation(topo, wl, proto, seed=9, backend="kernel")
    r2 = run_simulation(topo, wl, proto, seed=9, backend="kernel")
    assert r1.parity_signature() == r2.parity_signature()


def test_line_topology_exact_on_kernel():
    # The 2-node delivery contract holds on the compiled backend too.
    topo = Topology(2, [(0, 1)], {(0, 1): 50_000}, {0: ETH65, 1: ETH65})
    from ethgossip.workload import Workload, Injection, INJECT_TX

    wl = Workload()
    tx = wl.txs.add(1, 0, 20)
    wl.injections.append(Injection(1_000, INJECT_TX, 0, tx))
    params = ProtocolParams(tx_validate_delay_us=0, header_validate_delay_us=0)
    rep = run_simulation(topo, wl, params, seed=0, backend="kernel")
    assert rep.traces.full.tolist() == [[0, 0, 1_000, 0], [0, 1, 51_000, 1]]
