import json
from pathlib import Path

import pytest

from ethgossip.cli import main
from ethgossip.config import load_config, parse_config
from ethgossip.errors import ConfigError, DataError
from ethgossip.manifest import file_sha256
from ethgossip.scenario import parse_scenario
from ethgossip.txpool import tx_hash
from ethgossip.workload import INJECT_BLOCK, INJECT_TX


# ---------------------------------------------------------------- scenario

def test_scenario_parse_tx_and_block():
    wl = parse_scenario(
        "# demo\n"
        "inject_tx 1000 7 0 20 3\n"
        "inject_block 5000 1 2 7:0 9:1:25\n"
    )
    assert len(wl.txs) == 2
    assert len(wl.blocks) == 1
    kinds = [i.kind for i in wl.sorted_injections()]
    assert kinds == [INJECT_TX, INJECT_BLOCK]
    blk = wl.blocks.blocks[0]
    assert blk.tx_ids == [0, 1]
    assert wl.txs.txs[1].gas_price_gwei == 25


def test_scenario_hash_reference():
    h = tx_hash(7, 0)
    wl = parse_scenario(f"inject_tx 0 7 0 20 1\ninject_block 10 1 0 {h}\n")
    assert wl.blocks.blocks[0].tx_ids == [0]


def test_scenario_errors_carry_line_numbers():
    with pytest.raises(DataError, match=":2"):
        parse_scenario("inject_tx 0 1 0 20 0\nbogus_directive 3\n")
    with pytest.raises(DataError, match=":1"):
        parse_scenario("inject_tx 1 2 3\n")
    with pytest.raises(DataError, match=":1"):
        parse_scenario("inject_tx a b c d e\n")
    with pytest.raises(DataError, match="unknown tx hash"):
        parse_scenario(f"inject_block 0 1 0 {'ab' * 32}\n")
    with pytest.raises(DataError, match=":2"):
        parse_scenario("inject_tx 0 1 0 20 0\ninject_tx 5 1 0 20 0\n")  # dup identity


def test_scenario_same_height_blocks_get_distinct_hashes():
    wl = parse_scenario("inject_block 0 5 0\ninject_block 10 5 1\n")
    a, b = wl.blocks.blocks
    assert a.hash != b.hash
    assert a.height == b.height == 5


# ---------------------------------------------------------------- config

def test_config_defaults_and_parse():
    cfg = parse_config("seed = 9\nnode_count = 50\ntx_count = 10\n")
    assert cfg.seed == 9
    assert cfg.node_count == 50
    assert cfg.min_gas_price_gwei == 18


def test_config_unknown_key_is_hard_error():
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config("definitely_not_a_key = 5\n")


def test_config_bad_value_reports_line():
    with pytest.raises(ConfigError, match=":2"):
        parse_config("seed = 1\nnode_count = pony\n")


def test_config_validation():
    with pytest.raises(ConfigError):
        parse_config("trace_mode = fancy\n")
    with pytest.raises(ConfigError):
        parse_config("eth65_fraction = 1.5\n")


def test_config_topology_with_observer():
    cfg = parse_config(
        "topology_kind = random-regular\nnode_count = 20\nregular_degree = 4\n"
        "observer_enabled = true\nobserver_degree = 5\nseed = 3\n"
    )
    topo = cfg.build_topology()
    assert topo.node_count == 21
    assert topo.observer() == 20
    assert topo.degree(20) == 5


def test_config_observer_attach_all():
    cfg = parse_config(
        "topology_kind = random-regular\nnode_count = 10\nregular_degree = 4\n"
        "observer_degree = 0\nseed = 3\n"
    )
    topo = cfg.build_topology()
    assert topo.degree(10) == 10


# ---------------------------------------------------------------- CLI

CFG = """
seed = 5
topology_kind = random-regular
node_count = 12
regular_degree = 4
delay_dist = constant
delay_const_us = 20000
observer_enabled = true
observer_degree = 4
tx_count = 40
tx_interval_us = 5000
tx_validate_delay_us = 0
header_validate_delay_us = 0
stable_packet_threshold = 1
"""


def run_cli(*argv):
    return main(list(argv))


def test_cli_simulate_minimal(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(CFG)
    out = tmp_path / "out"
    rc = run_cli("simulate", "--config", str(cfg), "--out-dir", str(out),
                 "--backend", "python")
    assert rc == 0
    for name in ("topology.edges", "injected.jsonl", "txmsg.jsonl",
                 "peer_counts.jsonl", "peer_element_counts.jsonl",
                 "traces.csv", "traces_summary.csv", "manifest.json"):
        assert (out / name).exists(), name
    # at least one committed propagation record
    assert (out / "txmsg.jsonl").read_text().strip()


def test_cli_simulate_deterministic_checksums(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(CFG)
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert run_cli("--quiet", "simulate", "--config", str(cfg),
                       "--out-dir", str(out), "--backend", "python") == 0
        manifest = json.loads((out / "manifest.json").read_text())
        outs.append(manifest["files"])
    assert outs[0] == outs[1]


def test_cli_analyze_and_validate(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(CFG)
    out = tmp_path / "out"
    assert run_cli("--quiet", "simulate", "--config", str(cfg),
                   "--out-dir", str(out), "--backend", "python") == 0
    assert run_cli("--quiet", "analyze", "--run-dir", str(out), "--which", "all",
                   "--bootstrap", "50") == 0
    summary = json.loads((out / "summary.json").read_text())
    assert "hops" in summary and 3.4 <= summary["hops"]["x_hops"] <= 3.8
    assert "latency" in summary
    assert (out / "degree_estimates.csv").exists()
    assert (out / "latency_per_peer.csv").exists()
    assert run_cli("--quiet", "validate", "--run-dir", str(out)) == 0
    validation = json.loads((out / "validation.json").read_text())
    assert validation["peers"] >= 1
    assert "mean_absolute_error" in validation


def test_cli_validate_manifest_mismatch(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(CFG)
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert run_cli("--quiet", "simulate", "--config", str(cfg),
                   "--out-dir", str(out_a), "--backend", "python") == 0
    cfg.write_text(CFG + "seed = 6\n")
    assert run_cli("--quiet", "simulate", "--config", str(cfg),
                   "--out-dir", str(out_b), "--backend", "python") == 0
    rc = run_cli("--quiet", "validate", "--run-dir", str(out_a),
                 "--truth", str(out_b))
    assert rc == 2


def test_cli_exit_codes(tmp_path):
    assert run_cli("simulate", "--config", str(tmp_path / "nope.cfg"),
                   "--out-dir", str(tmp_path / "x")) in (1, 2)
    bad = tmp_path / "bad.cfg"
    bad.write_text("unknown_thing = 1\n")
    assert run_cli("simulate", "--config", str(bad),
                   "--out-dir", str(tmp_path / "y")) == 1
    assert run_cli("analyze", "--run-dir", str(tmp_path / "missing")) == 2
    assert run_cli("bogus-subcommand") == 1


def test_cli_analyze_latency_empty_pool(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(CFG.replace("tx_count = 40", "tx_count = 0"))
    out = tmp_path / "out"
    assert run_cli("--quiet", "simulate", "--config", str(cfg),
                   "--out-dir", str(out), "--backend", "python") == 0
    rc = run_cli("--quiet", "analyze", "--run-dir", str(out), "--which", "latency")
    assert rc == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["latency"]["tx_count"] == 0


def test_cli_topology_generate_inspect(tmp_path, capsys):
    out = tmp_path / "t.edges"
    rc = run_cli("topology", "generate", "--kind", "preferential-attachment",
                 "--nodes", "50", "--m", "3", "--seed", "2", "--out", str(out))
    assert rc == 0
    rc = run_cli("topology", "inspect", str(out))
    assert rc == 0
    captured = capsys.readouterr()
    assert "nodes: 50" in captured.out


def test_simulate_config_error_missing_file(tmp_path):
    rc = run_cli("simulate", "--config", str(tmp_path / "none.cfg"),
                 "--out-dir", str(tmp_path / "o"))
    assert rc in (1, 2)
