"""Comparison prefetchers speaking the same ``observe`` contract as Gaze."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

from gazesim.gaze.config import GazeConfig
from gazesim.gaze.tables import PrefetchBuffer, PrefetchState, SetAssocTable
from gazesim.memsys import Level, PrefetchRequest


class NextLinePrefetcher:
    name = "next-line"

    def __init__(self, region_size: int = 4096, block_size: int = 64):
        self.region_size = region_size
        self.block_size = block_size

    def observe(self, access, outcome=None) -> List[PrefetchRequest]:
        block_addr = access.vaddr - access.vaddr % self.block_size
        nxt = block_addr + self.block_size
        if nxt // self.region_size != block_addr // self.region_size:
            return []
        return [PrefetchRequest(nxt, Level.L1D)]


@dataclass
class IpStrideEntry:
    last_block: int
    stride: Optional[int] = None
    confidence: int = 0


class IpStridePrefetcher:
    """Per-PC stride detection with a 2-bit confidence counter.

    A new stride seeds confidence 1, a repeat raises it and a mismatch lowers
    it, with the stride replaced once confidence drops to 0. Zero strides are
    ignored. At confidence >= ``threshold`` it prefetches ``degree`` strides
    ahead into the L1D, never leaving the current region.
    """

    name = "ip-stride"
    MAX_CONFIDENCE = 3

    def __init__(self, entries: int = 64, degree: int = 2, threshold: int = 2, region_size: int = 4096,
                 block_size: int = 64):
        self.table: SetAssocTable[int, IpStrideEntry] = SetAssocTable(entries, entries, index=lambda key: 0)
        self.degree = degree
        self.threshold = threshold
        self.region_size = region_size
        self.block_size = block_size

    def observe(self, access, outcome=None) -> List[PrefetchRequest]:
        block = access.vaddr // self.block_size
        entry = self.table.get(access.pc)
        if entry is None:
            self.table.insert(access.pc, IpStrideEntry(block))
            return []
        delta = block - entry.last_block
        if delta == 0:
            return []
        if entry.stride is None:
            entry.stride, entry.confidence = delta, 1
        elif delta == entry.stride:
            entry.confidence = min(entry.confidence + 1, self.MAX_CONFIDENCE)
        else:
            entry.confidence = max(entry.confidence - 1, 0)
            if entry.confidence == 0:
                entry.stride = delta
        entry.last_block = block
        if entry.confidence < self.threshold:
            return []
        blocks_per_region = self.region_size // self.block_size
        region = block // blocks_per_region
        out = []
        for k in range(1, self.degree + 1):
            target = block + k * entry.stride
            if target < 0 or target // blocks_per_region != region:
                break
            out.append(PrefetchRequest(target * self.block_size, Level.L1D))
        return out


@dataclass
class _Tracked:
    region: int
    order: List[int]
    footprint: int


class NAccessTablePrefetcher:
    """Spatial footprints keyed by the ordered offsets of a region's first N
    distinct accesses.

    Region tracking, the prefetch buffer and its drain order are the same as
    Gaze's. ``n == 1`` predicts on the trigger access from a direct-mapped
    table with one entry per offset; larger ``n`` use a fully associative
    table unless ``table_ways`` asks for sets indexed by the trigger offset.
    """

    def __init__(self, n: int, config: Optional[GazeConfig] = None, table_entries: Optional[int] = None,
                 table_ways: Optional[int] = None):
        if not 1 <= n <= 4:
            raise ValueError("N must be between 1 and 4")
        self.n = n
        self.config = cfg = config or GazeConfig()
        self.bpr = cfg.blocks_per_region
        if n == 1:
            entries, ways = self.bpr, 1
        else:
            entries = table_entries or 256
            ways = table_ways or entries
        self.table: SetAssocTable[Tuple[int, ...], int] = SetAssocTable(entries, ways, index=lambda key: key[0])
        self.ft: SetAssocTable[int, _Tracked] = SetAssocTable(cfg.ft_entries, cfg.ft_ways)
        self.at: SetAssocTable[int, _Tracked] = SetAssocTable(cfg.at_entries, cfg.at_ways)
        self.pb = PrefetchBuffer(cfg.pb_entries, cfg.pb_ways, self.bpr)
        self.predictions = 0
        self.lookups = 0

    @property
    def name(self) -> str:
        return "offset-table" if self.n == 1 else f"n-access:{self.n}"

    def _lookup(self, region: int, key: Tuple[int, ...]) -> None:
        self.lookups += 1
        footprint = self.table.get(key)
        if footprint is None:
            return
        self.predictions += 1
        pattern = {off: PrefetchState.L1D for off in range(self.bpr) if footprint >> off & 1 and off not in key}
        if pattern:
            self.pb.merge(region, pattern)

    def _train(self, tracked: _Tracked) -> None:
        if len(tracked.order) >= self.n:
            self.table.insert(tuple(tracked.order[: self.n]), tracked.footprint)

    def observe(self, access, outcome=None) -> List[PrefetchRequest]:
        region, offset = self.config.region_and_offset(access.vaddr)
        tracked = self.at.get(region)
        if tracked is not None:
            tracked.footprint |= 1 << offset
            if offset not in tracked.order and len(tracked.order) < self.n:
                tracked.order.append(offset)
                if len(tracked.order) == self.n:
                    self._lookup(region, tuple(tracked.order))
        else:
            first = self.ft.get(region)
            if first is None:
                self.ft.insert(region, _Tracked(region, [offset], 1 << offset))
                if self.n == 1:
                    self._lookup(region, (offset,))
            elif first.order[0] != offset:
                self.ft.pop(region)
                tracked = _Tracked(region, [first.order[0], offset], first.footprint | 1 << offset)
                victim = self.at.insert(region, tracked)
                if victim is not None:
                    self._train(victim[1])
                if self.n == 2:
                    self._lookup(region, tuple(tracked.order))
        out = []
        for reg, off, state, _ in self.pb.drain(self.config.pb_drain_rate):
            level = Level.L1D if state == PrefetchState.L1D else Level.L2C
            out.append(PrefetchRequest(self.config.block_addr(reg, off), level))
        return out

    def finish(self) -> None:
        for _, tracked in self.at.clear():
            self._train(tracked)
