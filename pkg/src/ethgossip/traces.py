"""Ground-truth trace files.

Full format (one row per message per reached node):

    msg_id,node_id,first_arrival_us,hops

Summary format (one row per message, integer aggregates so files are
byte-stable):

    msg_id,reached,min_us,max_us,sum_us,sum_hops,max_hops
"""

from __future__ import annotations

import csv
from typing import Dict, List, Tuple

from .backend import SimulationReport
from .errors import DataError


def _msg_names(report: SimulationReport) -> List[str]:
    return list(report.tx_hashes) + list(report.block_hashes)


def write_trace_csv(report: SimulationReport, path) -> None:
    if report.traces.full is None:
        raise DataError("run was executed without full traces (trace_mode=summary)")
    names = _msg_names(report)
    rows = sorted(map(tuple, report.traces.full.tolist()))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["msg_id", "node_id", "first_arrival_us", "hops"])
        for (msg, node, t, hops) in rows:
            w.writerow([names[msg], node, t, hops])


def write_trace_summary_csv(report: SimulationReport, path) -> None:
    names = _msg_names(report)
    tr = report.traces
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["msg_id", "reached", "min_us", "max_us", "sum_us", "sum_hops", "max_hops"])
        for i in range(tr.n_msgs):
            w.writerow([
                names[i], int(tr.reached[i]), int(tr.min_t[i]), int(tr.max_t[i]),
                int(tr.sum_t[i]), int(tr.sum_hops[i]), int(tr.max_hops[i]),
            ])


def load_trace_csv(path) -> Dict[str, List[Tuple[int, int, int]]]:
    """msg_id -> [(node, first_arrival_us, hops)]."""
    out: Dict[str, List[Tuple[int, int, int]]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["msg_id", "node_id", "first_arrival_us", "hops"]:
            raise DataError(f"{path}: not a full trace file")
        for lineno, row in enumerate(reader, start=2):
            try:
                msg, node, t, hops = row[0], int(row[1]), int(row[2]), int(row[3])
            except (IndexError, ValueError):
                raise DataError(f"{path}:{lineno}: malformed trace row") from None
            out.setdefault(msg, []).append((node, t, hops))
    return out
