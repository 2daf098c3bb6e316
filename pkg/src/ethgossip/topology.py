"""Peer graph construction, repair and on-disk format.

A topology is the ground truth the estimators are validated against: an
undirected graph with one fixed one-way latency per edge and a protocol
version per node (eth64, eth65 or observer).  Generated graphs are made
connected by deterministic smallest-id bridging so broadcasts can reach
every node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Set, Tuple

from .errors import ConfigError, DataError
from .params import ETH64, ETH65, OBSERVER, VERSION_CODES, VERSION_NAMES
from .rng import STREAM_DELAYS, STREAM_TOPOLOGY, STREAM_VERSIONS, RandomSource

Edge = Tuple[int, int]


@dataclass
class Topology:
    node_count: int
    edges: List[Edge] = field(default_factory=list)  # (u, v) with u < v
    edge_delay_us: Dict[Edge, int] = field(default_factory=dict)
    version: Dict[int, int] = field(default_factory=dict)  # node -> ETH64/ETH65/OBSERVER
    repaired_edges: List[Edge] = field(default_factory=list)

    def validate(self) -> None:
        seen: Set[Edge] = set()
        for (u, v) in self.edges:
            if u == v:
                raise ConfigError(f"self-loop at node {u}")
            if not (0 <= u < self.node_count and 0 <= v < self.node_count):
                raise ConfigError(f"edge ({u},{v}) out of range")
            if u > v:
                raise ConfigError(f"edge ({u},{v}) not normalized (u < v)")
            if (u, v) in seen:
                raise ConfigError(f"duplicate edge ({u},{v})")
            seen.add((u, v))
            if self.edge_delay_us.get((u, v), 0) <= 0:
                raise ConfigError(f"edge ({u},{v}) needs a positive delay")
        observers = [n for n, v in self.version.items() if v == OBSERVER]
        if len(observers) > 1:
            raise ConfigError("at most one observer node is allowed")
        if not self.is_connected():
            raise ConfigError("topology is not connected")

    def degree(self, node: int) -> int:
        return sum(1 for (u, v) in self.edges if u == node or v == node)

    def degrees(self) -> List[int]:
        deg = [0] * self.node_count
        for (u, v) in self.edges:
            deg[u] += 1
            deg[v] += 1
        return deg

    def neighbors(self, node: int) -> List[int]:
        out = []
        for (u, v) in self.edges:
            if u == node:
                out.append(v)
            elif v == node:
                out.append(u)
        return sorted(out)

    def observer(self) -> int | None:
        for n, v in self.version.items():
            if v == OBSERVER:
                return n
        return None

    def is_connected(self) -> bool:
        if self.node_count == 0:
            return False
        return len(_components(self.node_count, self.edges)) == 1

    def delay(self, u: int, v: int) -> int:
        key = (u, v) if u < v else (v, u)
        try:
            return self.edge_delay_us[key]
        except KeyError:
            raise ConfigError(f"nodes {u} and {v} are not adjacent") from None


def _components(n: int, edges: Sequence[Edge]) -> List[List[int]]:
    adj: List[List[int]] = [[] for _ in range(n)]
    for (u, v) in edges:
        adj[u].append(v)
        adj[v].append(u)
    seen = [False] * n
    comps = []
    for start in range(n):
        if seen[start]:
            continue
        stack = [start]
        seen[start] = True
        comp = []
        while stack:
            x = stack.pop()
            comp.append(x)
            for y in adj[x]:
                if not seen[y]:
                    seen[y] = True
                    stack.append(y)
        comps.append(sorted(comp))
    return comps


def _repair_connectivity(n: int, edges: List[Edge]) -> List[Edge]:
    """Bridge disconnected components to the component of the smallest id.

    Returns the list of added edges (deterministic: each later component's
    smallest node is wired to the globally smallest node's component root).
    """
    comps = _components(n, edges)
    if len(comps) <= 1:
        return []
    comps.sort(key=lambda c: c[0])
    root = comps[0][0]
    added = []
    for comp in comps[1:]:
        u, v = sorted((root, comp[0]))
        edges.append((u, v))
        added.append((u, v))
    return added


# ---------------------------------------------------------------------------
# Edge delay sampling


def sample_edge_delays(
    edges: Sequence[Edge],
    rng: RandomSource,
    dist: str = "constant",
    *,
    constant_us: int = 50_000,
    low_us: int = 10_000,
    high_us: int = 100_000,
    mu: float = 10.0,
    sigma: float = 0.5,
) -> Dict[Edge, int]:
    """One fixed one-way delay per edge, sampled once at construction.

    ``dist`` is one of constant | uniform | lognormal.  The lognormal draw
    uses Box-Muller on top of the integer stream; delays are clamped to at
    least 1 microsecond.
    """
    out: Dict[Edge, int] = {}
    for edge in sorted(edges):
        if dist == "constant":
            d = constant_us
        elif dist == "uniform":
            if high_us < low_us:
                raise ConfigError("uniform delay needs low <= high")
            d = rng.randint(low_us, high_us)
        elif dist == "lognormal":
            u1 = rng.random()
            u2 = rng.random()
            z = math.sqrt(-2.0 * math.log(1.0 - u1)) * math.cos(2.0 * math.pi * u2)
            d = int(round(math.exp(mu + sigma * z)))
        else:
            raise ConfigError(f"unknown delay distribution {dist!r}")
        out[edge] = max(1, int(d))
    return out


# ---------------------------------------------------------------------------
# Generators


def generate_topology(
    kind: str,
    node_count: int,
    params: dict | None = None,
    rng: RandomSource | None = None,
) -> Topology:
    """Build a connected peer graph.

    kind: random-regular | erdos-renyi | preferential-attachment |
    explicit-edge-list.  Generator parameters are passed in ``params``;
    delays default to a 50 ms constant unless delay keys are given.
    Disconnected results are repaired by smallest-id bridging and the added
    edges are reported on the returned topology.
    """
    params = dict(params or {})
    if node_count < 2 and kind != "explicit-edge-list":
        raise ConfigError("node_count must be >= 2")
    if rng is None:
        rng = RandomSource(params.pop("seed", 0), STREAM_TOPOLOGY)

    if kind == "explicit-edge-list":
        edges = [tuple(sorted(e)) for e in params.get("edges", [])]
        node_count = max(node_count, max((v for _, v in edges), default=-1) + 1)
    elif kind == "random-regular":
        edges = _random_regular(node_count, int(params.get("degree", 8)), rng)
    elif kind == "erdos-renyi":
        if "edge_prob" in params:
            p = float(params["edge_prob"])
        else:
            p = float(params.get("avg_degree", 8.0)) / max(1, node_count - 1)
        if not (0.0 <= p <= 1.0):
            raise ConfigError("edge_prob must be in [0,1]")
        edges = _erdos_renyi(node_count, p, rng)
    elif kind == "preferential-attachment":
        edges = _preferential_attachment(node_count, int(params.get("m", 4)), rng)
    else:
        raise ConfigError(f"unknown topology kind {kind!r}")

    edges = sorted(set(edges))
    repaired = _repair_connectivity(node_count, edges)
    edges.sort()

    delay_rng = RandomSource(rng.seed, STREAM_DELAYS)
    delay_kwargs = {
        k: params[k]
        for k in ("constant_us", "low_us", "high_us", "mu", "sigma")
        if k in params
    }
    delays = params.get("edge_delay_us")
    if delays is None:
        delays = sample_edge_delays(
            edges, delay_rng, params.get("delay_dist", "constant"), **delay_kwargs
        )

    topo = Topology(
        node_count=node_count,
        edges=edges,
        edge_delay_us=dict(delays),
        version={n: ETH65 for n in range(node_count)},
        repaired_edges=repaired,
    )
    topo.validate()
    return topo


def _random_regular(n: int, d: int, rng: RandomSource) -> List[Edge]:
    if d < 1 or d >= n:
        raise ConfigError("regular degree must satisfy 1 <= d < n")
    if (n * d) % 2 != 0:
        raise ConfigError("n*d must be even for a regular graph")
    # Pairing model: repeatedly shuffle the unmatched stubs and keep the
    # clash-free pairs; restart outright if a round makes no progress.
    for _ in range(100):
        pairs: Set[Edge] = set()
        stubs = [v for v in range(n) for _ in range(d)]
        stuck = False
        while stubs and not stuck:
            rng.shuffle_prefix(stubs, len(stubs))
            leftover: List[int] = []
            progress = False
            for i in range(0, len(stubs), 2):
                u, v = stubs[i], stubs[i + 1]
                key = (min(u, v), max(u, v))
                if u == v or key in pairs:
                    leftover.extend((u, v))
                else:
                    pairs.add(key)
                    progress = True
            if not progress:
                stuck = True
            stubs = leftover
        if not stubs:
            return sorted(pairs)
    raise ConfigError(f"could not realize a {d}-regular graph on {n} nodes")


def _erdos_renyi(n: int, p: float, rng: RandomSource) -> List[Edge]:
    edges: List[Edge] = []
    if p <= 0.0:
        return edges
    if p >= 1.0:
        return [(u, v) for u in range(n) for v in range(u + 1, n)]
    # Geometric skipping within each row of the upper-triangular pair grid.
    log_q = math.log(1.0 - p)
    for u in range(n):
        v = u
        while True:
            r = rng.random()
            skip = int(math.log(1.0 - r) / log_q) if r > 0.0 else 0
            v += 1 + skip
            if v >= n:
                break
            edges.append((u, v))
    return edges


def _preferential_attachment(n: int, m: int, rng: RandomSource) -> List[Edge]:
    if m < 1 or m >= n:
        raise ConfigError("attachment count m must satisfy 1 <= m < n")
    # Classic Barabasi-Albert growth over an initial (m+1)-clique, with
    # degree-proportional choice via the repeated-endpoints list.
    edges: List[Edge] = []
    endpoints: List[int] = []
    for u in range(m + 1):
        for v in range(u + 1, m + 1):
            edges.append((u, v))
            endpoints.extend((u, v))
    for new in range(m + 1, n):
        chosen: Set[int] = set()
        while len(chosen) < m:
            t = endpoints[rng.randbelow(len(endpoints))]
            chosen.add(t)
        for t in sorted(chosen):
            edges.append((t, new))
            endpoints.extend((t, new))
    return edges


def assign_versions(
    topo: Topology,
    eth65_fraction: float,
    seed: int,
    observer_node: int | None = None,
) -> None:
    """Random eth64/eth65 split (observer node excluded from the draw)."""
    if not (0.0 <= eth65_fraction <= 1.0):
        raise ConfigError("eth65_fraction must be in [0,1]")
    rng = RandomSource(seed, STREAM_VERSIONS)
    for node in range(topo.node_count):
        if observer_node is not None and node == observer_node:
            topo.version[node] = OBSERVER
            continue
        topo.version[node] = ETH65 if rng.random() < eth65_fraction else ETH64


# ---------------------------------------------------------------------------
# On-disk format: `nodes N` header, one `version u <name>` line per node,
# one `u v delay_us` line per edge.  Writing then reading is bit-exact.


def write_topology(topo: Topology, path) -> None:
    lines = [f"nodes {topo.node_count}"]
    for node in range(topo.node_count):
        name = VERSION_NAMES[topo.version.get(node, ETH65)]
        lines.append(f"version {node} {name}")
    for (u, v) in sorted(topo.edges):
        lines.append(f"{u} {v} {topo.edge_delay_us[(u, v)]}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_topology(path) -> Topology:
    edges: List[Edge] = []
    delays: Dict[Edge, int] = {}
    version: Dict[int, int] = {}
    node_count = None
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            try:
                if parts[0] == "nodes":
                    node_count = int(parts[1])
                elif parts[0] == "version":
                    version[int(parts[1])] = VERSION_CODES[parts[2]]
                else:
                    u, v, d = int(parts[0]), int(parts[1]), int(parts[2])
                    if u > v:
                        u, v = v, u
                    edges.append((u, v))
                    delays[(u, v)] = d
            except (IndexError, ValueError, KeyError) as exc:
                raise DataError(f"{path}:{lineno}: bad topology line {line!r}") from exc
    if node_count is None:
        raise DataError(f"{path}: missing 'nodes N' header")
    topo = Topology(
        node_count=node_count,
        edges=sorted(edges),
        edge_delay_us=delays,
        version=version or {n: ETH65 for n in range(node_count)},
    )
    topo.validate()
    return topo
