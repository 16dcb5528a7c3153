"""Bit-level storage accounting for the Gaze tables.

Region tags are a fixed 36 bits and hashed PCs 12 bits; offset fields are
log2(blocks per region) wide and LRU fields log2(ways). The AT carries one
valid bit on top of its listed fields. The 3-bit dense counter is reported
but left out of the total.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Dict

from gazesim.gaze.config import PC_HASH_BITS, GazeConfig

REGION_TAG_BITS = 36


def _lru_bits(ways: int) -> int:
    return (ways - 1).bit_length()


@dataclass(frozen=True)
class TableStorage:
    entries: int
    bits_per_entry: int

    @property
    def bits(self) -> int:
        return self.entries * self.bits_per_entry

    @property
    def bytes(self) -> int:
        return math.ceil(self.bits / 8)


def entry_bits(config: GazeConfig) -> Dict[str, int]:
    off = config.offset_bits
    bpr = config.blocks_per_region
    return {
        "FT": REGION_TAG_BITS + _lru_bits(config.ft_ways) + PC_HASH_BITS + off,
        "AT": REGION_TAG_BITS + _lru_bits(config.at_ways) + PC_HASH_BITS + 1 + 4 * off + bpr + 1,
        "PHT": off + _lru_bits(config.pht_ways) + bpr,
        "DPCT": PC_HASH_BITS + _lru_bits(config.dpct_entries),
        "PB": REGION_TAG_BITS + _lru_bits(config.pb_ways) + 2 * bpr,
    }


def storage_report(config: GazeConfig = GazeConfig()) -> Dict[str, object]:
    bits = entry_bits(config)
    entries = {
        "FT": config.ft_entries,
        "AT": config.at_entries,
        "PHT": config.pht_entries,
        "DPCT": config.dpct_entries,
        "PB": config.pb_entries,
    }
    tables = {name: TableStorage(entries[name], bits[name]) for name in entries}
    total = sum(t.bytes for t in tables.values())
    return {
        "region_size": config.region_size,
        "tables": {
            name: {"entries": t.entries, "bits_per_entry": t.bits_per_entry, "bytes": t.bytes}
            for name, t in tables.items()
        },
        "dc_bits": config.dc_bits,
        "total_bytes": total,
        "total_kib": round(total / 1024, 2),
    }


def storage_json(config: GazeConfig = GazeConfig()) -> str:
    return json.dumps(storage_report(config), indent=2)
