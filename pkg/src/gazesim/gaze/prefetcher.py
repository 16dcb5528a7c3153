"""The Gaze spatial prefetcher.

Regions are characterized by the offsets of their first two distinct
accesses. A region touched once sits in the filter table; its second
distinct access moves it to the accumulation table and asks the pattern
history module for a prediction. Regions whose first two accesses are
blocks 0 and 1 are routed to the streaming module (dense PC table plus
dense counter); everything else goes through the pattern history table,
which only answers on an exact (trigger, second) match.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

from gazesim.gaze.config import GazeConfig, hashed_pc
from gazesim.gaze.tables import (
    AtEntry,
    DenseCounter,
    DensePcTable,
    FtEntry,
    PatternHistoryTable,
    PrefetchBuffer,
    PrefetchState,
    SetAssocTable,
)
from gazesim.memsys import Level, PrefetchRequest


STREAM_KEY = (0, 1)


class PredictionKind(Enum):
    STREAMING_HEAD = "streaming-head"
    STREAMING_PROBE = "streaming-probe"
    PHT_HIT = "pht-hit"
    NO_MATCH = "no-match"


@dataclass(frozen=True)
class Prediction:
    kind: PredictionKind
    pattern: Dict[int, int] = field(default_factory=dict)

    @property
    def sets_stride_flag(self) -> bool:
        return self.kind is not PredictionKind.PHT_HIT


NO_MATCH = Prediction(PredictionKind.NO_MATCH)


class GazePrefetcher:
    """Gaze, plus the two ablations.

    ``config.streaming=False`` gives the PHT-only variant: (0, 1)-triggered
    regions are learned by the PHT like any other and there is no stride
    logic. ``config.pht=False`` gives the streaming-module-only variant.
    """

    def __init__(self, config: Optional[GazeConfig] = None, record: bool = False):
        self.config = cfg = config or GazeConfig()
        self.bpr = cfg.blocks_per_region
        self.ft: SetAssocTable[int, FtEntry] = SetAssocTable(cfg.ft_entries, cfg.ft_ways)
        self.at: SetAssocTable[int, AtEntry] = SetAssocTable(cfg.at_entries, cfg.at_ways)
        self.pht = PatternHistoryTable(cfg.pht_sets, cfg.pht_ways)
        self.dpct = DensePcTable(cfg.dpct_entries)
        self.dc = DenseCounter(cfg.dc_bits, cfg.dc_half, cfg.dc_fast_floor)
        self.pb = PrefetchBuffer(cfg.pb_entries, cfg.pb_ways, self.bpr)
        self.stats: Counter = Counter()
        self.requests_by_source: Counter = Counter()
        self.trained_pairs: set = set()
        self.prediction_log: Optional[List[Tuple[int, int, int, Prediction]]] = [] if record else None

    @property
    def name(self) -> str:
        if not self.config.streaming:
            return "gaze-pht-only"
        if not self.config.pht:
            return "gaze-sm-only"
        return "gaze"

    # -- prediction ------------------------------------------------------

    def _streaming_pattern(self, head_state: int, tail_state: int) -> Dict[int, int]:
        head = self.config.stage1_head
        pattern = {off: head_state for off in range(head)}
        if tail_state:
            pattern.update({off: tail_state for off in range(head, self.bpr)})
        return pattern

    def predict(self, trigger: int, second: int, hpc: int) -> Prediction:
        if trigger == second:
            raise ValueError("trigger and second offsets must differ")
        cfg = self.config
        if cfg.streaming and (trigger, second) == STREAM_KEY:
            if hpc in self.dpct or self.dc.saturated:
                return Prediction(
                    PredictionKind.STREAMING_HEAD, self._streaming_pattern(PrefetchState.L1D, PrefetchState.L2C)
                )
            if self.dc.half_saturated:
                return Prediction(PredictionKind.STREAMING_PROBE, self._streaming_pattern(PrefetchState.L2C, 0))
            return NO_MATCH
        if not cfg.pht:
            return NO_MATCH
        footprint = self.pht.lookup(trigger, second)
        if footprint is None:
            return NO_MATCH
        if (trigger, second) not in self.trained_pairs:
            self.stats["untrained_pht_hits"] += 1
        pattern = {off: PrefetchState.L1D for off in range(self.bpr) if footprint >> off & 1}
        return Prediction(PredictionKind.PHT_HIT, pattern)

    # -- learning --------------------------------------------------------

    def train(self, victim: AtEntry) -> None:
        cfg = self.config
        key = (victim.trigger, victim.second)
        if cfg.streaming and key == STREAM_KEY:
            if bin(victim.footprint).count("1") == self.bpr:
                self.dpct.insert(victim.hashed_pc)
                self.dc.increment()
                self.stats["dense_regions"] += 1
            else:
                self.dc.decrement()
        elif cfg.pht:
            self.pht.store(victim.trigger, victim.second, victim.footprint)
            self.trained_pairs.add(key)

    def stage2_check(self, entry: AtEntry, offset: int) -> Optional[Dict[int, int]]:
        """Unit-stride promotion or region-stride backup pattern, if the last
        two strides (penultimate -> last -> ``offset``) agree."""
        s1 = entry.last - entry.penultimate
        s2 = offset - entry.last
        if s1 != s2 or s1 == 0:
            return None
        pattern = {}
        for k in range(1, self.config.stage2_degree + 1):
            target = offset + k * s1
            if not 0 <= target < self.bpr:
                break
            pattern[target] = PrefetchState.L1D
        return pattern or None

    # -- access flow -----------------------------------------------------

    def observe(self, access, outcome=None) -> List[PrefetchRequest]:
        cfg = self.config
        region, offset = cfg.region_and_offset(access.vaddr)
        entry = self.at.get(region)
        if entry is not None:
            if offset != entry.last:
                entry.footprint |= 1 << offset
                if entry.stride_flag and cfg.streaming:
                    promo = self.stage2_check(entry, offset)
                    if promo:
                        source = "promotion" if offset - entry.last == 1 else "backup"
                        self.stats[source] += 1
                        self.pb.merge(region, promo, source)
                entry.penultimate, entry.last = entry.last, offset
        else:
            ft_entry = self.ft.get(region)
            if ft_entry is None:
                self.ft.insert(region, FtEntry(region, hashed_pc(access.pc), offset))
            elif ft_entry.trigger != offset:
                self._activate(ft_entry, offset)
        return self._drain()

    def _activate(self, ft_entry: FtEntry, second: int) -> None:
        region = ft_entry.region
        self.ft.pop(region)
        entry = AtEntry.from_filter(ft_entry, second)
        victim = self.at.insert(region, entry)
        if victim is not None:
            self.train(victim[1])
        trigger = ft_entry.trigger
        pred = self.predict(trigger, second, ft_entry.hashed_pc)
        self.stats[pred.kind.value] += 1
        if self.prediction_log is not None:
            self.prediction_log.append((region, trigger, second, pred))
        entry.stride_flag = pred.sets_stride_flag
        pattern = {off: st for off, st in pred.pattern.items() if off != trigger and off != second}
        if pattern:
            self.pb.merge(region, pattern, pred.kind.value)

    def _drain(self) -> List[PrefetchRequest]:
        out = []
        for region, offset, state, source in self.pb.drain(self.config.pb_drain_rate):
            level = Level.L1D if state == PrefetchState.L1D else Level.L2C
            out.append(PrefetchRequest(self.config.block_addr(region, offset), level))
            self.requests_by_source[source] += 1
        return out

    def finish(self) -> None:
        """Deactivate every tracked region (end of trace) so it is learned."""
        for _, entry in self.at.clear():
            self.train(entry)
