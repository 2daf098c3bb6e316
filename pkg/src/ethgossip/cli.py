"""Command-line harness: simulate, analyze, validate, topology.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 internal
invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

from . import __version__
from .analysis import (
    HopModelParams,
    broadcast_latency,
    estimate_all_degrees,
    fit_power_law,
    solve_hop_model,
)
from .backend import active_backend, run_simulation
from .collector import (
    TxMsgPool,
    commit_all,
    estimate_peer_delay,
    load_peer_counts,
    load_tx_msgs,
    save_peer_counts,
    save_peer_element_counts,
    save_tx_msgs,
)
from .config import load_config
from .errors import (
    ConfigError,
    DataError,
    EstimatorError,
    EthgossipError,
    InvariantError,
)
from .manifest import check_same_run, file_sha256, load_manifest, write_manifest
from .rng import RandomSource
from .topology import generate_topology, read_topology, write_topology
from .traces import write_trace_csv, write_trace_summary_csv


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # map argparse usage errors to exit code 1
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ethgossip", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--quiet", action="store_true", help="suppress progress output")
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a configured simulation")
    sim.add_argument("--config", required=True)
    sim.add_argument("--seed", type=int, default=None, help="override config seed")
    sim.add_argument("--out-dir", required=True)
    sim.add_argument("--backend", choices=("auto", "python", "kernel"), default="auto")

    ana = sub.add_parser("analyze", help="run estimators over a simulation's outputs")
    ana.add_argument("--run-dir", required=True)
    ana.add_argument("--which", default="all",
                     choices=("degrees", "latency", "powerlaw", "hops", "all"))
    ana.add_argument("--out-dir", default=None, help="default: the run dir")
    ana.add_argument("--counting-mode", choices=("element", "packet"), default=None)
    ana.add_argument("--stable-threshold", type=int, default=None)
    ana.add_argument("--bootstrap", type=int, default=1000)
    ana.add_argument("--fit-seed", type=int, default=0)
    ana.add_argument("--tx-delay-ms", type=float, default=200.0)
    ana.add_argument("--block-delay-ms", type=float, default=477.0)
    ana.add_argument("--get-header-ms", type=float, default=400.0)
    ana.add_argument("--get-body-ms", type=float, default=100.0)
    ana.add_argument("--get-hash-ms", type=float, default=500.0)
    ana.add_argument("--process-ms", type=float, default=200.0)
    ana.add_argument("--p-eth65", type=float, default=0.4)
    ana.add_argument("--p-hash-block", type=float, default=0.135)
    ana.add_argument("--p-hash-tx", type=float, default=0.135)

    val = sub.add_parser("validate", help="compare degree estimates with ground truth")
    val.add_argument("--run-dir", required=True)
    val.add_argument("--truth", default=None, help="dir holding topology.edges (default: run dir)")
    val.add_argument("--out-dir", default=None)
    val.add_argument("--counting-mode", choices=("element", "packet"), default=None)
    val.add_argument("--stable-threshold", type=int, default=None)

    topo = sub.add_parser("topology", help="generate or inspect topology files")
    tsub = topo.add_subparsers(dest="topology_command", required=True)
    gen = tsub.add_parser("generate")
    gen.add_argument("--kind", required=True,
                     choices=("random-regular", "erdos-renyi",
                              "preferential-attachment", "explicit-edge-list"))
    gen.add_argument("--nodes", type=int, required=True)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--degree", type=int, default=8)
    gen.add_argument("--edge-prob", type=float, default=0.0)
    gen.add_argument("--avg-degree", type=float, default=8.0)
    gen.add_argument("--m", type=int, default=4)
    gen.add_argument("--delay-dist", choices=("constant", "uniform", "lognormal"),
                     default="constant")
    gen.add_argument("--delay-const-us", type=int, default=50_000)
    gen.add_argument("--delay-low-us", type=int, default=10_000)
    gen.add_argument("--delay-high-us", type=int, default=100_000)
    gen.add_argument("--out", required=True)
    ins = tsub.add_parser("inspect")
    ins.add_argument("path")
    return p


def _say(args, msg):
    if not args.quiet:
        print(msg)


# ---------------------------------------------------------------- simulate

def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    topo = cfg.build_topology()
    workload = cfg.build_workload()
    params = cfg.protocol_params()
    t0 = time.time()
    report = run_simulation(
        topo,
        workload,
        params,
        seed=cfg.seed,
        end_us=cfg.horizon_us or None,
        backend=args.backend,
        keep_full_traces=(cfg.trace_mode == "full"),
    )
    _say(args, f"backend={report.backend} events={report.counters.events} "
               f"wall={time.time() - t0:.1f}s")

    files = {}

    def emit(name, writer):
        path = out_dir / name
        writer(path)
        files[name] = file_sha256(path)
        _say(args, f"wrote {name} sha256={files[name][:16]}…")

    emit("topology.edges", lambda p: write_topology(topo, p))
    emit("injected.jsonl", lambda p: _write_injected(workload, p))

    pool = report.tx_msg_pool()
    observer = topo.observer()
    delays = {}
    if observer is not None:
        for peer in topo.neighbors(observer):
            delays[peer] = estimate_peer_delay(
                topo, observer, peer, cfg.ping_mode,
                seed=cfg.seed, ping_count=cfg.ping_count,
                jitter_us=cfg.packet_jitter_us,
            )
        commit_all(pool, delays, cfg.filter_gas_floor_gwei)
    emit("txmsg.jsonl", lambda p: save_tx_msgs(pool, p))
    emit("peer_counts.jsonl", lambda p: save_peer_counts(pool, p))
    emit("peer_element_counts.jsonl", lambda p: save_peer_element_counts(pool, p))

    if cfg.trace_mode == "full":
        emit("traces.csv", lambda p: write_trace_csv(report, p))
    emit("traces_summary.csv", lambda p: write_trace_summary_csv(report, p))

    write_manifest(
        out_dir,
        cfg.snapshot(),
        cfg.seed,
        files,
        time.time() - t0,
        extra={
            "backend": report.backend,
            "events": report.counters.events,
            "trace_digest": report.traces.digest,
            "observer": observer,
        },
    )
    _say(args, f"manifest written to {out_dir / 'manifest.json'}")
    return 0


def _write_injected(workload, path):
    from .workload import INJECT_TX

    origins = {}
    times = {}
    for inj in workload.injections:
        if inj.kind == INJECT_TX:
            origins[inj.ref] = inj.origin
            times[inj.ref] = inj.t_us
    with open(path, "w") as fh:
        for tx_id, tx in enumerate(workload.txs.txs):
            rec = {
                "tx_hash": tx.tx_hash,
                "account": tx.account,
                "nonce": tx.nonce,
                "gas_gwei": tx.gas_price_gwei,
                "origin": origins.get(tx_id, -1),
                "t_us": times.get(tx_id, -1),
            }
            fh.write(json.dumps(rec) + "\n")


# ---------------------------------------------------------------- analyze

def _load_run(run_dir):
    run_dir = Path(run_dir)
    manifest = load_manifest(run_dir)
    cfg_defaults = {}
    for line in manifest.get("config", "").splitlines():
        if "=" in line:
            k, _, v = line.partition("=")
            cfg_defaults[k.strip()] = v.strip()
    return run_dir, manifest, cfg_defaults


def cmd_analyze(args) -> int:
    run_dir, manifest, cfg_defaults = _load_run(args.run_dir)
    out_dir = Path(args.out_dir) if args.out_dir else run_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    which = args.which
    mode = args.counting_mode or cfg_defaults.get("counting_mode", "element")
    threshold = args.stable_threshold
    if threshold is None:
        threshold = int(cfg_defaults.get("stable_packet_threshold", 1000))
    summary = {"run_id": manifest.get("run_id"), "which": which}

    estimates = skipped = None
    if which in ("degrees", "powerlaw", "all"):
        element_path = run_dir / "peer_element_counts.jsonl"
        counts = load_peer_counts(
            run_dir / "peer_counts.jsonl",
            element_path if element_path.exists() else None,
        )
        estimates, skipped = estimate_all_degrees(counts, mode, threshold)
        for peer, reason in skipped:
            _say(args, f"degrees: skipped peer {peer}: {reason}")
        with open(out_dir / "degree_estimates.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["peer_id", "n_downstream", "degree", "sample_packets", "mode"])
            for e in estimates:
                w.writerow([e.peer_id, f"{e.n_downstream:.6f}", f"{e.degree:.6f}",
                            e.sample_packets, e.mode])
        summary["degrees"] = {
            "estimated_peers": len(estimates),
            "skipped_peers": len(skipped),
            "skip_reasons": [f"{p}: {r}" for (p, r) in skipped],
            "mode": mode,
            "stable_threshold": threshold,
        }

    if which in ("latency", "all"):
        pool = TxMsgPool()
        for msg in load_tx_msgs(run_dir / "txmsg.jsonl"):
            pool.commit(msg)
        eligible = None
        injected_path = run_dir / "injected.jsonl"
        if injected_path.exists():
            eligible = []
            with open(injected_path) as fh:
                for line in fh:
                    if line.strip():
                        eligible.append(json.loads(line)["tx_hash"])
        rep = broadcast_latency(pool, eligible_tx=eligible)
        with open(out_dir / "latency_per_peer.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["peer_id", "mean_diff_ms", "samples"])
            for peer in sorted(rep.per_peer_mean_ms):
                w.writerow([peer, f"{rep.per_peer_mean_ms[peer]:.3f}",
                            rep.per_peer_samples[peer]])
        summary["latency"] = {
            "global_mean_ms": rep.global_mean_ms,
            "tx_count": rep.tx_count,
            "peers": len(rep.per_peer_mean_ms),
        }
        if rep.tx_count == 0:
            _say(args, "latency: empty pool, nothing to analyze")

    if which in ("powerlaw", "all"):
        if estimates is not None and len(estimates) >= 50:
            degs = [max(1, round(e.degree)) for e in estimates]
            fit = fit_power_law(degs, b_replicates=args.bootstrap, seed=args.fit_seed)
            summary["powerlaw"] = {
                "gamma": fit.gamma,
                "x_min": fit.x_min,
                "ks_statistic": fit.ks_statistic,
                "p_value": fit.p_value,
                "n_tail": fit.n_tail,
                "replicates": fit.replicates,
            }
        else:
            have = 0 if estimates is None else len(estimates)
            summary["powerlaw"] = {"error": f"needs >= 50 degree estimates, have {have}"}
            _say(args, f"powerlaw: {summary['powerlaw']['error']}")

    if which in ("hops", "all"):
        params = HopModelParams(
            t_tx_delay_ms=args.tx_delay_ms,
            t_block_delay_ms=args.block_delay_ms,
            t_get_header_ms=args.get_header_ms,
            t_get_body_ms=args.get_body_ms,
            t_get_hash_ms=args.get_hash_ms,
            t_process_ms=args.process_ms,
            p_eth65=args.p_eth65,
            p_hash_block=args.p_hash_block,
            p_hash_tx=args.p_hash_tx,
        )
        try:
            sol = solve_hop_model(params)
            summary["hops"] = {
                "x_hops": sol.x_hops,
                "y_per_hop_ms": sol.y_per_hop_ms,
                "residual_block_ms": sol.residuals[0],
                "residual_tx_ms": sol.residuals[1],
            }
            _say(args, f"hops: x={sol.x_hops:.4f} y={sol.y_per_hop_ms:.4f} ms "
                       f"residuals={sol.residuals}")
        except EthgossipError as exc:
            summary["hops"] = {"error": str(exc)}
            _say(args, f"hops: {exc}")

    with open(out_dir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _say(args, f"analysis summary written to {out_dir / 'summary.json'}")
    return 0


# ---------------------------------------------------------------- validate

def cmd_validate(args) -> int:
    run_dir, manifest, cfg_defaults = _load_run(args.run_dir)
    truth_dir = Path(args.truth) if args.truth else run_dir
    if truth_dir != run_dir:
        check_same_run(manifest, load_manifest(truth_dir))
    out_dir = Path(args.out_dir) if args.out_dir else run_dir
    out_dir.mkdir(parents=True, exist_ok=True)

    topo = read_topology(truth_dir / "topology.edges")
    observer = topo.observer()
    if observer is None:
        raise DataError("truth topology has no observer node")
    true_degree = {}
    deg = topo.degrees()
    for peer in topo.neighbors(observer):
        true_degree[peer] = deg[peer]

    mode = args.counting_mode or cfg_defaults.get("counting_mode", "element")
    threshold = args.stable_threshold
    if threshold is None:
        threshold = int(cfg_defaults.get("stable_packet_threshold", 1000))
    element_path = run_dir / "peer_element_counts.jsonl"
    counts = load_peer_counts(
        run_dir / "peer_counts.jsonl",
        element_path if element_path.exists() else None,
    )
    estimates, skipped = estimate_all_degrees(counts, mode, threshold)

    rows = []
    for e in estimates:
        if e.peer_id not in true_degree:
            continue
        truth = true_degree[e.peer_id]
        rows.append((e.peer_id, truth, e.degree, e.degree - truth))
    if not rows:
        raise DataError("no overlapping peers between estimates and ground truth")

    with open(out_dir / "validation.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["peer_id", "true_degree", "estimated_degree", "error"])
        for (peer, truth, est, err) in rows:
            w.writerow([peer, truth, f"{est:.6f}", f"{err:.6f}"])

    errors = [abs(err) for (_, _, _, err) in rows]
    mae = sum(errors) / len(errors)
    hist = {}
    for err in errors:
        bucket = int(err)
        hist[bucket] = hist.get(bucket, 0) + 1
    result = {
        "peers": len(rows),
        "skipped": len(skipped),
        "mean_absolute_error": mae,
        "max_absolute_error": max(errors),
        "error_histogram": {str(k): hist[k] for k in sorted(hist)},
    }
    with open(out_dir / "validation.json", "w") as fh:
        json.dump(result, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _say(args, f"validated {len(rows)} peers: MAE={mae:.3f} "
               f"max={max(errors):.3f} (skipped {len(skipped)})")
    return 0


# ---------------------------------------------------------------- topology

def cmd_topology(args) -> int:
    if args.topology_command == "generate":
        params = {
            "seed": args.seed,
            "delay_dist": args.delay_dist,
            "constant_us": args.delay_const_us,
            "low_us": args.delay_low_us,
            "high_us": args.delay_high_us,
        }
        if args.kind == "random-regular":
            params["degree"] = args.degree
        elif args.kind == "erdos-renyi":
            if args.edge_prob > 0:
                params["edge_prob"] = args.edge_prob
            else:
                params["avg_degree"] = args.avg_degree
        elif args.kind == "preferential-attachment":
            params["m"] = args.m
        topo = generate_topology(args.kind, args.nodes,
                                 params, RandomSource(args.seed, 0))
        write_topology(topo, args.out)
        if topo.repaired_edges:
            _say(args, f"connectivity repair added edges: {topo.repaired_edges}")
        _say(args, f"wrote {args.out}: {topo.node_count} nodes, {len(topo.edges)} edges")
        return 0
    topo = read_topology(args.path)
    degs = topo.degrees()
    degs_sorted = sorted(degs)
    mid = degs_sorted[len(degs) // 2]
    print(f"nodes: {topo.node_count}")
    print(f"edges: {len(topo.edges)}")
    print(f"degree min/median/max: {min(degs)}/{mid}/{max(degs)}")
    print(f"observer: {topo.observer()}")
    delays = sorted(topo.edge_delay_us.values())
    print(f"delay min/median/max (us): {delays[0]}/{delays[len(delays)//2]}/{delays[-1]}")
    return 0


# ---------------------------------------------------------------- main

def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "simulate":
            return cmd_simulate(args)
        if args.command == "analyze":
            return cmd_analyze(args)
        if args.command == "validate":
            return cmd_validate(args)
        if args.command == "topology":
            return cmd_topology(args)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except InvariantError as exc:
        print(f"internal invariant violation: {exc}", file=sys.stderr)
        return 3
    except EstimatorError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
