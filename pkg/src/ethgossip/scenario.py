"""Timed scenario scripts.

Text format, one directive per line (# comments allowed):

    inject_tx <time_us> <account> <nonce> <gas_price_gwei> <origin_node>
    inject_block <time_us> <height> <origin_node> [tx ...]

Block transactions are referenced either by the 64-hex transaction hash of
a transaction defined earlier in the script, or defined inline as
``account:nonce[:gas_gwei]`` (gas defaults to 20); inline definitions also
cover transactions that only ever travel inside block bodies.  Parse
errors carry the line number.
"""

from __future__ import annotations

import re
from typing import List

from .errors import DataError
from .workload import INJECT_BLOCK, INJECT_TX, Injection, Workload

_HASH_RE = re.compile(r"^[0-9a-f]{64}$")


def parse_scenario(text: str, source: str = "<scenario>") -> Workload:
    wl = Workload()
    heights_seen: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        where = f"{source}:{lineno}"
        if parts[0] == "inject_tx":
            if len(parts) != 6:
                raise DataError(f"{where}: inject_tx needs 5 arguments")
            try:
                t, account, nonce, gas, origin = (int(p) for p in parts[1:])
            except ValueError:
                raise DataError(f"{where}: inject_tx arguments must be integers") from None
            if t < 0 or nonce < 0 or gas < 0 or origin < 0:
                raise DataError(f"{where}: negative values are not allowed")
            try:
                tx_id = wl.txs.add(account, nonce, gas)
            except Exception as exc:
                raise DataError(f"{where}: {exc}") from None
            wl.injections.append(Injection(t, INJECT_TX, origin, tx_id))
        elif parts[0] == "inject_block":
            if len(parts) < 4:
                raise DataError(f"{where}: inject_block needs at least 3 arguments")
            try:
                t, height, origin = int(parts[1]), int(parts[2]), int(parts[3])
            except ValueError:
                raise DataError(f"{where}: inject_block header must be integers") from None
            tx_ids: List[int] = []
            for token in parts[4:]:
                tx_ids.append(_resolve_tx(wl, token, where))
            salt = heights_seen.get(height, 0)
            heights_seen[height] = salt + 1
            blk = wl.blocks.add(height, origin, tx_ids, parent="scripted", salt=salt)
            wl.injections.append(Injection(t, INJECT_BLOCK, origin, blk))
        else:
            raise DataError(f"{where}: unknown directive {parts[0]!r}")
    return wl


def _resolve_tx(wl: Workload, token: str, where: str) -> int:
    if _HASH_RE.match(token):
        tx_id = wl.txs.by_hash.get(token)
        if tx_id is None:
            raise DataError(f"{where}: unknown tx hash {token[:16]}…")
        return tx_id
    bits = token.split(":")
    if len(bits) not in (2, 3):
        raise DataError(f"{where}: bad tx reference {token!r}")
    try:
        account, nonce = int(bits[0]), int(bits[1])
        gas = int(bits[2]) if len(bits) == 3 else 20
    except ValueError:
        raise DataError(f"{where}: bad tx reference {token!r}") from None
    existing = wl.txs.by_account_nonce.get((account, nonce))
    if existing is not None:
        return existing
    return wl.txs.add(account, nonce, gas)


def load_scenario(path) -> Workload:
    with open(path) as fh:
        return parse_scenario(fh.read(), source=str(path))
