"""Three-level cache hierarchy with prefetch queueing and a cycle-proxy clock.

The model is deliberately simple: one demand load at a time, strict LRU in
every cache, no bandwidth or DRAM modeling. Each demand advances the clock by
the instructions elapsed since the previous load (at least 1, base CPI 1)
plus whatever latency it pays beyond an L1D hit.

Prefetches go through a bounded FIFO queue and then an in-flight set bounded
like the L1D MSHRs. A prefetched block carries a tag at its fill level until
it is first demanded (useful) or evicted/flushed (useless).
"""

from __future__ import annotations

from collections import OrderedDict, deque
from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import Dict, List, Optional, Protocol, Sequence, Tuple

from gazesim.metrics import PrefetchCounters
from gazesim.trace import MemoryAccess


class Level(IntEnum):
    L1D = 0
    L2C = 1
    LLC = 2
    MEM = 3


class HitKind(Enum):
    DEMAND_HIT = "demand-hit"
    PREFETCH_HIT = "prefetch-hit"
    LATE_PREFETCH_HIT = "late-prefetch-hit"
    MISS = "miss"


class IssueResult(Enum):
    ISSUED = "issued"
    DROPPED_REDUNDANT = "dropped-redundant"
    DROPPED_QUEUE_FULL = "dropped-queue-full"


@dataclass(frozen=True)
class PrefetchRequest:
    addr: int
    level: Level = Level.L1D

    def __post_init__(self):
        level = Level(self.level)
        if level not in (Level.L1D, Level.L2C):
            raise ValueError(f"prefetches may only fill L1D or L2C, not {level.name}")
        object.__setattr__(self, "level", level)


@dataclass(frozen=True)
class AccessOutcome:
    level: Level
    latency: int
    kind: HitKind


@dataclass(frozen=True)
class CacheConfig:
    capacity: int
    associativity: int
    hit_latency: int
    block_size: int = 64

    def __post_init__(self):
        if self.block_size <= 0 or self.block_size & (self.block_size - 1):
            raise ValueError("block size must be a power of two")
        if self.associativity <= 0 or self.capacity % (self.associativity * self.block_size):
            raise ValueError("capacity must be a multiple of associativity * block size")

    @property
    def sets(self) -> int:
        return self.capacity // (self.associativity * self.block_size)


@dataclass(frozen=True)
class HierarchyConfig:
    l1d: CacheConfig = CacheConfig(48 * 1024, 12, 5)
    l2c: CacheConfig = CacheConfig(512 * 1024, 8, 10)
    llc: CacheConfig = CacheConfig(2 * 1024 * 1024, 16, 20)
    memory_latency: int = 200
    pq_depth: int = 32
    drain_rate: int = 2
    max_inflight: int = 16

    def __post_init__(self):
        sizes = {self.l1d.block_size, self.l2c.block_size, self.llc.block_size}
        if len(sizes) != 1:
            raise ValueError("all cache levels must share one block size")
        if self.pq_depth < 1 or self.drain_rate < 1 or self.max_inflight < 1:
            raise ValueError("queue depth, drain rate and in-flight bound must be positive")

    @property
    def block_size(self) -> int:
        return self.l1d.block_size


class Cache:
    """Set-associative LRU cache of block numbers.

    Each resident block maps to a flag that is True while the block is an
    as-yet-undemanded prefetch fill at this level.
    """

    def __init__(self, config: CacheConfig, name: str = ""):
        self.config = config
        self.name = name
        self.num_sets = config.sets
        self.ways = config.associativity
        self.sets: List["OrderedDict[int, bool]"] = [OrderedDict() for _ in range(self.num_sets)]

    def _set(self, block: int) -> "OrderedDict[int, bool]":
        return self.sets[block % self.num_sets]

    def __contains__(self, block: int) -> bool:
        return block in self._set(block)

    def touch(self, block: int) -> bool:
        """Mark ``block`` most recently used, clearing and returning its prefetch tag."""
        s = self._set(block)
        s.move_to_end(block)
        tagged = s[block]
        s[block] = False
        return tagged

    def insert(self, block: int, prefetched: bool = False) -> Optional[Tuple[int, bool]]:
        """Install ``block`` as MRU; returns the evicted ``(block, tag)`` if any."""
        s = self._set(block)
        if block in s:
            s.move_to_end(block)
            return None
        victim = None
        if len(s) >= self.ways:
            victim = s.popitem(last=False)
        s[block] = prefetched
        return victim

    def clear_tag(self, block: int) -> bool:
        """Drop the prefetch tag of a resident block without touching LRU."""
        s = self._set(block)
        tagged = s.get(block, False)
        if tagged:
            s[block] = False
        return tagged

    def tagged_blocks(self) -> List[int]:
        return [b for s in self.sets for b, tag in s.items() if tag]

    def occupancy(self) -> List[int]:
        return [len(s) for s in self.sets]


class Prefetcher(Protocol):
    name: str

    def observe(self, access: MemoryAccess, outcome: AccessOutcome) -> Sequence[PrefetchRequest]:
        ...


class NullPrefetcher:
    name = "none"

    def observe(self, access, outcome):
        return ()


@dataclass
class _InFlight:
    completion: int
    level: Level
    source: Level


class Hierarchy:
    def __init__(self, config: Optional[HierarchyConfig] = None, prefetcher: Optional[Prefetcher] = None):
        self.config = config or HierarchyConfig()
        cfg = self.config
        self.caches = [Cache(cfg.l1d, "L1D"), Cache(cfg.l2c, "L2C"), Cache(cfg.llc, "LLC")]
        self.latencies = [cfg.l1d.hit_latency, cfg.l2c.hit_latency, cfg.llc.hit_latency]
        self.block_size = cfg.block_size
        self.cycle = 0
        self.accesses = 0
        self.counters = PrefetchCounters()
        self.inflight: Dict[int, _InFlight] = {}
        self.queue: deque = deque()
        self._queued: set = set()
        # blocks brought from memory by a prefetch and not yet demanded
        self._pending_cover: set = set()
        self._last_instr: Optional[int] = None
        self._finished = False
        self.request_log: Optional[List[PrefetchRequest]] = None
        self.prefetcher: Prefetcher = NullPrefetcher()
        if prefetcher is not None:
            self.attach_prefetcher(prefetcher)

    def attach_prefetcher(self, prefetcher: Optional[Prefetcher]) -> None:
        self.prefetcher = prefetcher if prefetcher is not None else NullPrefetcher()

    # -- helpers ---------------------------------------------------------

    def _resident_at_or_above(self, block: int, level: Level) -> bool:
        return any(block in self.caches[lvl] for lvl in range(level + 1))

    def _resident_anywhere(self, block: int) -> bool:
        return any(block in c for c in self.caches)

    def _install(self, level: int, block: int, prefetched: bool = False) -> None:
        victim = self.caches[level].insert(block, prefetched)
        if victim is None:
            return
        vblock, tagged = victim
        if tagged:
            if level == Level.L1D:
                self.counters.n_b += 1
            else:
                self.counters.m_b += 1
        if vblock in self._pending_cover and not self._resident_anywhere(vblock):
            self._pending_cover.discard(vblock)

    def _complete_until(self, now: int) -> None:
        done = [(e.completion, b) for b, e in self.inflight.items() if e.completion <= now]
        for _, block in sorted(done):
            e = self.inflight.pop(block)
            for lvl in range(min(e.source, Level.LLC + 1) - 1, e.level, -1):
                self._install(lvl, block)
            self._install(e.level, block, prefetched=True)

    # -- demand path -----------------------------------------------------

    def demand_access(self, access: MemoryAccess) -> AccessOutcome:
        if self._finished:
            raise RuntimeError("hierarchy already finalized")
        block = access.vaddr // self.block_size
        now = self.cycle
        self._complete_until(now)
        l1_lat = self.latencies[0]
        c = self.counters

        if block in self.caches[0]:
            if self.caches[0].touch(block):
                c.n_a += 1
                c.timely_useful += 1
                kind = HitKind.PREFETCH_HIT
            else:
                kind = HitKind.DEMAND_HIT
            outcome = AccessOutcome(Level.L1D, l1_lat, kind)
        elif block in self.inflight:
            e = self.inflight.pop(block)
            c.late_useful += 1
            if e.level == Level.L1D:
                c.n_a += 1
            else:
                c.m_a += 1
            for lvl in range(min(e.source, Level.LLC + 1) - 1, -1, -1):
                self._install(lvl, block)
            outcome = AccessOutcome(e.level, max(e.completion - now, l1_lat), HitKind.LATE_PREFETCH_HIT)
        else:
            latency = l1_lat
            serviced = Level.MEM
            kind = HitKind.MISS
            for lvl in (Level.L2C, Level.LLC):
                latency += self.latencies[lvl]
                cache = self.caches[lvl]
                if block in cache:
                    if cache.touch(block):
                        c.m_a += 1
                        c.timely_useful += 1
                        kind = HitKind.PREFETCH_HIT
                    serviced = lvl
                    break
            if serviced == Level.MEM:
                latency += self.config.memory_latency
                c.llc_demand_misses += 1
            for lvl in range(min(serviced, Level.LLC + 1) - 1, -1, -1):
                self._install(lvl, block)
            outcome = AccessOutcome(serviced, latency, kind)

        if block in self._pending_cover:
            self._pending_cover.discard(block)
            c.llc_prefetch_hits += 1

        gap = 1 if self._last_instr is None else max(1, access.instr_id - self._last_instr)
        self._last_instr = access.instr_id
        self.cycle += gap + outcome.latency - l1_lat
        self.accesses += 1

        for req in self.prefetcher.observe(access, outcome):
            if self.request_log is not None:
                self.request_log.append(req)
            self.issue_prefetch(req)
        self._drain()
        return outcome

    # -- prefetch path ---------------------------------------------------

    def issue_prefetch(self, req: PrefetchRequest) -> IssueResult:
        if req.addr % self.block_size:
            raise ValueError(f"prefetch address {req.addr:#x} is not block aligned")
        block = req.addr // self.block_size
        if block in self.inflight or block in self._queued or self._resident_at_or_above(block, req.level):
            self.counters.dropped_redundant += 1
            return IssueResult.DROPPED_REDUNDANT
        if len(self.queue) >= self.config.pq_depth:
            self.counters.dropped_queue_full += 1
            return IssueResult.DROPPED_QUEUE_FULL
        self.queue.append((block, req.level))
        self._queued.add(block)
        self.counters.issued += 1
        return IssueResult.ISSUED

    def _drain(self) -> None:
        sent = 0
        cfg = self.config
        while self.queue and sent < cfg.drain_rate and len(self.inflight) < cfg.max_inflight:
            block, level = self.queue.popleft()
            self._queued.discard(block)
            if block in self.inflight or self._resident_at_or_above(block, level):
                self.counters.dropped_after_issue += 1
                continue
            latency = 0
            source = Level.MEM
            for lvl in range(level, Level.LLC + 1):
                latency += self.latencies[lvl]
                if lvl > level and block in self.caches[lvl]:
                    source = Level(lvl)
                    break
            if source == Level.L2C and self.caches[Level.L2C].clear_tag(block):
                # an L1D prefetch takes over an undemanded L2C prefetch fill
                self.counters.promoted += 1
            if source == Level.MEM:
                latency += cfg.memory_latency
                self._pending_cover.add(block)
            self.inflight[block] = _InFlight(self.cycle + latency, level, source)
            sent += 1

    def finalize(self) -> PrefetchCounters:
        """Settle outstanding prefetch state at the end of a run.

        Completed fills are installed, never-demanded prefetched blocks are
        counted useless, and queued or still-flying requests are tallied so
        the conservation identity in :meth:`PrefetchCounters.check` holds.
        """
        if self._finished:
            return self.counters
        self._complete_until(self.cycle)
        c = self.counters
        c.inflight_at_end += len(self.inflight)
        c.dropped_after_issue += len(self.queue)
        self.queue.clear()
        self._queued.clear()
        c.n_b += len(self.caches[Level.L1D].tagged_blocks())
        c.m_b += len(self.caches[Level.L2C].tagged_blocks())
        finish = getattr(self.prefetcher, "finish", None)
        if finish is not None:
            finish()
        self._finished = True
        return c
