"""Protocol timing/behaviour knobs.

All durations are integer microseconds so timer arithmetic is exact and
runs reproduce bit-for-bit.  Defaults follow the reference client's
behaviour for the historical eth64/eth65 era: the 400 ms header wait,
100 ms body wait, 500 ms transaction fetch wait, ~200 ms block processing,
~1 ms transaction validation and an 18 Gwei admission floor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

MS = 1000  # microseconds per millisecond
SECOND = 1_000_000

# Per-account pool capacities of the reference client.
PENDING_PER_ACCOUNT = 16
QUEUED_PER_ACCOUNT = 64

ETH64 = 0
ETH65 = 1
OBSERVER = 2

VERSION_NAMES = {ETH64: "eth64", ETH65: "eth65", OBSERVER: "observer"}
VERSION_CODES = {v: k for k, v in VERSION_NAMES.items()}


@dataclass
class ProtocolParams:
    """Per-run protocol constants (microseconds / Gwei)."""

    get_header_wait_us: int = 400 * MS
    get_body_wait_us: int = 100 * MS
    get_tx_wait_us: int = 500 * MS
    tx_validate_delay_us: int = 1 * MS
    header_validate_delay_us: int = 1 * MS
    block_process_us: int = 200 * MS
    min_gas_price_gwei: int = 18
    flush_delay_us: int = 0
    packet_jitter_us: int = 0
    pending_per_account: int = PENDING_PER_ACCOUNT
    queued_per_account: int = QUEUED_PER_ACCOUNT
    # Per-node admission floor overrides (node id -> Gwei).
    gas_floor_overrides: dict = field(default_factory=dict)

    def validate(self) -> None:
        from .errors import ConfigError

        for name in (
            "get_header_wait_us",
            "get_body_wait_us",
            "get_tx_wait_us",
            "tx_validate_delay_us",
            "header_validate_delay_us",
            "block_process_us",
        ):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.min_gas_price_gwei < 0:
            raise ConfigError("min_gas_price_gwei must be >= 0")
        if self.packet_jitter_us < 0 or self.flush_delay_us < 0:
            raise ConfigError("jitter/flush delays must be >= 0")

    def gas_floor(self, node: int) -> int:
        return self.gas_floor_overrides.get(node, self.min_gas_price_gwei)
