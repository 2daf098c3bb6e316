"""Experiment configuration: a flat, typed key=value text file.

Unknown keys are hard errors so a typo cannot silently change an
experiment.  Durations carry a _us suffix (integer microseconds), gas is
Gwei, fractions live in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Optional

from .errors import ConfigError
from .params import ProtocolParams
from .rng import RandomSource
from .topology import (
    Topology,
    assign_versions,
    generate_topology,
    read_topology,
    sample_edge_delays,
)
from .workload import Workload, build_workload

STREAM_OBSERVER_ATTACH = 5


def _bool(s: str) -> bool:
    if s.lower() in ("true", "1", "yes", "on"):
        return True
    if s.lower() in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


@dataclass
class ExperimentConfig:
    seed: int = 0
    # topology
    topology_kind: str = "preferential-attachment"
    node_count: int = 100
    regular_degree: int = 8
    edge_prob: float = 0.0
    avg_degree: float = 8.0
    pa_m: int = 4
    edge_list_path: str = ""
    delay_dist: str = "constant"
    delay_const_us: int = 50_000
    delay_low_us: int = 10_000
    delay_high_us: int = 100_000
    delay_mu: float = 10.0
    delay_sigma: float = 0.5
    eth65_fraction: float = 1.0
    observer_enabled: bool = True
    observer_degree: int = 25  # 0 attaches the observer to every node
    # workload
    tx_count: int = 100
    tx_interval_us: int = 10_000
    tx_start_us: int = 0
    account_count: int = 0  # 0: one account per transaction
    gas_gwei: int = 20
    gas_low_fraction: float = 0.0
    gas_low_gwei: int = 1
    block_count: int = 0
    block_interval_us: int = 0
    block_txs: int = 64
    fork_every: int = 0
    fork_offset_us: int = 1_000
    scenario_path: str = ""
    # protocol
    min_gas_price_gwei: int = 18
    tx_validate_delay_us: int = 1_000
    header_validate_delay_us: int = 1_000
    block_process_us: int = 200_000
    get_header_wait_us: int = 400_000
    get_body_wait_us: int = 100_000
    get_tx_wait_us: int = 500_000
    flush_delay_us: int = 0
    packet_jitter_us: int = 0
    # run/analysis
    horizon_us: int = 0  # 0: run until the queue drains
    trace_mode: str = "full"  # full | summary
    ping_mode: str = "true-delay"  # true-delay | icmp-ping-sim
    ping_count: int = 100
    counting_mode: str = "element"  # element | packet
    stable_packet_threshold: int = 1000
    filter_gas_floor_gwei: int = 18  # collector-side admission filter

    def validate(self) -> None:
        if self.trace_mode not in ("full", "summary"):
            raise ConfigError(f"trace_mode must be full|summary, got {self.trace_mode!r}")
        if self.ping_mode not in ("true-delay", "icmp-ping-sim"):
            raise ConfigError(f"bad ping_mode {self.ping_mode!r}")
        if self.counting_mode not in ("element", "packet"):
            raise ConfigError(f"bad counting_mode {self.counting_mode!r}")
        if not (0.0 <= self.eth65_fraction <= 1.0):
            raise ConfigError("eth65_fraction must be in [0,1]")
        if self.node_count < 2:
            raise ConfigError("node_count must be >= 2")

    # -- builders ----------------------------------------------------------

    def protocol_params(self) -> ProtocolParams:
        return ProtocolParams(
            get_header_wait_us=self.get_header_wait_us,
            get_body_wait_us=self.get_body_wait_us,
            get_tx_wait_us=self.get_tx_wait_us,
            tx_validate_delay_us=self.tx_validate_delay_us,
            header_validate_delay_us=self.header_validate_delay_us,
            block_process_us=self.block_process_us,
            min_gas_price_gwei=self.min_gas_price_gwei,
            flush_delay_us=self.flush_delay_us,
            packet_jitter_us=self.packet_jitter_us,
        )

    def build_topology(self) -> Topology:
        delay_params = {
            "delay_dist": self.delay_dist,
            "constant_us": self.delay_const_us,
            "low_us": self.delay_low_us,
            "high_us": self.delay_high_us,
            "mu": self.delay_mu,
            "sigma": self.delay_sigma,
        }
        kind = self.topology_kind
        if kind == "explicit-edge-list":
            if not self.edge_list_path:
                raise ConfigError("explicit-edge-list needs edge_list_path")
            topo = read_topology(self.edge_list_path)
        else:
            params = dict(delay_params)
            if kind == "random-regular":
                params["degree"] = self.regular_degree
            elif kind == "erdos-renyi":
                if self.edge_prob > 0:
                    params["edge_prob"] = self.edge_prob
                else:
                    params["avg_degree"] = self.avg_degree
            elif kind == "preferential-attachment":
                params["m"] = self.pa_m
            else:
                raise ConfigError(f"unknown topology_kind {kind!r}")
            params["seed"] = self.seed
            topo = generate_topology(kind, self.node_count, params,
                                     RandomSource(self.seed, 0))

        observer = None
        if self.observer_enabled:
            observer = topo.node_count
            base_n = topo.node_count
            rng = RandomSource(self.seed, STREAM_OBSERVER_ATTACH)
            if self.observer_degree <= 0 or self.observer_degree >= base_n:
                targets = list(range(base_n))
            else:
                pool = list(range(base_n))
                rng.shuffle_prefix(pool, self.observer_degree)
                targets = sorted(pool[: self.observer_degree])
            new_edges = [(t, observer) for t in targets]
            delays = sample_edge_delays(
                new_edges, rng, self.delay_dist,
                constant_us=self.delay_const_us, low_us=self.delay_low_us,
                high_us=self.delay_high_us, mu=self.delay_mu, sigma=self.delay_sigma,
            )
            topo.node_count = base_n + 1
            topo.edges.extend(sorted(new_edges))
            topo.edges.sort()
            topo.edge_delay_us.update(delays)
        assign_versions(topo, self.eth65_fraction, self.seed, observer_node=observer)
        topo.validate()
        return topo

    def build_workload(self) -> Workload:
        if self.scenario_path:
            from .scenario import load_scenario

            return load_scenario(self.scenario_path)
        observer = self.node_count if self.observer_enabled else None
        return build_workload(
            self.seed,
            self.node_count + (1 if self.observer_enabled else 0),
            observer,
            tx_count=self.tx_count,
            tx_interval_us=self.tx_interval_us,
            tx_start_us=self.tx_start_us,
            account_count=self.account_count or None,
            gas_gwei=self.gas_gwei,
            gas_low_fraction=self.gas_low_fraction,
            gas_low_gwei=self.gas_low_gwei,
            block_interval_us=self.block_interval_us,
            block_txs=self.block_txs,
            block_count=self.block_count,
            fork_every=self.fork_every,
            fork_offset_us=self.fork_offset_us,
        )

    def snapshot(self) -> str:
        lines = []
        for f in fields(self):
            lines.append(f"{f.name} = {getattr(self, f.name)}")
        return "\n".join(lines) + "\n"


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    cfg = ExperimentConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        ftype = _FIELD_TYPES[key]
        try:
            if ftype in ("int", int):
                parsed = int(value)
            elif ftype in ("float", float):
                parsed = float(value)
            elif ftype in ("bool", bool):
                parsed = _bool(value)
            else:
                parsed = value
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from None
        setattr(cfg, key, parsed)
    cfg.validate()
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, source=str(path))
