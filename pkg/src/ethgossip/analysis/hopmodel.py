"""Two-equation broadcast model in hops (x) and per-hop delay (y).

Block side: a fraction p_hash_block of receptions go through the
hash/header/body detour, costing the header wait + body wait + processing
plus five message legs per hop; the rest cost one leg per hop:

    T_block = p_hb * x * (T_hdr + T_body + T_proc + 5y) + (1 - p_hb) * x * y

Transaction side: eth65 peers announced a hash (probability p_eth65 *
p_hash_tx) wait out the fetch timer plus three legs; the rest cost a leg:

    T_tx = q * x * (T_fetch + 3y) + (1 - q) * x * y,   q = p_eth65 * p_hash_tx

Both equations are linear in x and z = x*y, so the system is solved
exactly by 2x2 elimination and y recovered as z / x.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

from ..errors import ConfigError, InconsistentSolutionError, SingularSystemError


@dataclass
class HopModelParams:
    t_tx_delay_ms: float = 200.0
    t_block_delay_ms: float = 477.0
    t_get_header_ms: float = 400.0
    t_get_body_ms: float = 100.0
    t_get_hash_ms: float = 500.0
    t_process_ms: float = 200.0
    p_eth65: float = 0.4
    p_hash_block: float = 0.135
    p_hash_tx: float = 0.135

    def validate(self) -> None:
        for name in (
            "t_tx_delay_ms",
            "t_block_delay_ms",
            "t_get_header_ms",
            "t_get_body_ms",
            "t_get_hash_ms",
            "t_process_ms",
        ):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0")
        for name in ("p_eth65", "p_hash_block", "p_hash_tx"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ConfigError(f"{name} must be in [0,1]")


@dataclass
class HopSolution:
    x_hops: float
    y_per_hop_ms: float
    residuals: Tuple[float, float]  # forward-evaluation minus targets


def forward_delays(params: HopModelParams, x: float, y: float) -> Tuple[float, float]:
    """(block delay, tx delay) implied by a candidate (x, y)."""
    p_hb = params.p_hash_block
    q = params.p_eth65 * params.p_hash_tx
    t_block = p_hb * x * (
        params.t_get_header_ms + params.t_get_body_ms + params.t_process_ms + 5.0 * y
    ) + (1.0 - p_hb) * x * y
    t_tx = q * x * (params.t_get_hash_ms + 3.0 * y) + (1.0 - q) * x * y
    return t_block, t_tx


def solve_hop_model(params: HopModelParams) -> HopSolution:
    """Exact algebraic solve; raises on singular or non-positive solutions."""
    params.validate()
    p_hb = params.p_hash_block
    q = params.p_eth65 * params.p_hash_tx
    # Coefficients of [x, z] with z = x*y.
    a11 = p_hb * (params.t_get_header_ms + params.t_get_body_ms + params.t_process_ms)
    a12 = 1.0 + 4.0 * p_hb
    a21 = q * params.t_get_hash_ms
    a22 = 1.0 + 2.0 * q
    b1 = params.t_block_delay_ms
    b2 = params.t_tx_delay_ms
    det = a11 * a22 - a12 * a21
    scale = max(abs(a11), abs(a12), abs(a21), abs(a22))
    if abs(det) <= 1e-12 * scale * scale:
        raise SingularSystemError(
            "hop-model system is singular (hash probabilities make x unidentifiable)"
        )
    x = (b1 * a22 - a12 * b2) / det
    z = (a11 * b2 - b1 * a21) / det
    if x <= 0.0 or z <= 0.0:
        raise InconsistentSolutionError(
            f"non-positive solution x={x:.6g}, x*y={z:.6g}: parameters inconsistent"
        )
    y = z / x
    fb, ft = forward_delays(params, x, y)
    return HopSolution(x, y, (fb - b1, ft - b2))
