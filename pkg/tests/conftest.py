import pytest

from ethgossip.params import ETH64, ETH65, OBSERVER, ProtocolParams
from ethgossip.topology import Topology
from ethgossip.workload import Injection, INJECT_BLOCK, INJECT_TX, Workload

MS = 1000


def make_topology(edges, versions=None, delay_us=50 * MS, node_count=None):
    """Explicit topology with a constant delay unless (u,v)->d given."""
    if isinstance(edges, dict):
        edge_list = sorted(tuple(sorted(e)) for e in edges)
        delays = {tuple(sorted(e)): d for e, d in edges.items()}
    else:
        edge_list = sorted(tuple(sorted(e)) for e in edges)
        delays = {e: delay_us for e in edge_list}
    n = node_count or (max(max(e) for e in edge_list) + 1)
    version = {i: ETH65 for i in range(n)}
    for node, v in (versions or {}).items():
        version[node] = v
    topo = Topology(n, edge_list, delays, version)
    topo.validate()
    return topo


def quick_params(**kw):
    """Zeroed validation delays for round-number scripted assertions."""
    base = dict(tx_validate_delay_us=0, header_validate_delay_us=0)
    base.update(kw)
    return ProtocolParams(**base)


def tx_workload(specs):
    """specs: list of (t_us, origin, account, nonce, gas)."""
    wl = Workload()
    for (t, origin, account, nonce, gas) in specs:
        tx_id = wl.txs.add(account, nonce, gas)
        wl.injections.append(Injection(t, INJECT_TX, origin, tx_id))
    return wl


def add_block(wl, t_us, origin, height, tx_ids, salt=0, parent="genesis"):
    blk = wl.blocks.add(height, origin, list(tx_ids), parent=parent, salt=salt)
    wl.injections.append(Injection(t_us, INJECT_BLOCK, origin, blk))
    return blk
