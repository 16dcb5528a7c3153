"""Hardware tables used by Gaze and the pattern-table baselines.

All tables replace in LRU order within a set. LRU bits, tag widths and the
like only matter for storage accounting (see :mod:`gazesim.gaze.storage`);
here entries are keyed by full region numbers so that no aliasing occurs.
"""

from __future__ import annotations

import itertools
from collections import OrderedDict
from dataclasses import dataclass
from enum import IntEnum
from typing import Callable, Dict, Generic, Hashable, Iterator, List, Optional, Tuple, TypeVar

K = TypeVar("K", bound=Hashable)
V = TypeVar("V")


class SetAssocTable(Generic[K, V]):
    """A keyed set-associative table with per-set LRU replacement.

    ``index`` maps a key to its set; the default is ``key % sets``.
    """

    def __init__(self, entries: int, ways: int, index: Optional[Callable[[K], int]] = None):
        if ways <= 0 or entries % ways:
            raise ValueError(f"{entries} entries cannot be split into {ways}-way sets")
        self.ways = ways
        self.num_sets = entries // ways
        self._index = index or (lambda key: key % self.num_sets)
        self._sets: List["OrderedDict[K, V]"] = [OrderedDict() for _ in range(self.num_sets)]

    def _set(self, key: K) -> "OrderedDict[K, V]":
        return self._sets[self._index(key) % self.num_sets]

    def __contains__(self, key: K) -> bool:
        return key in self._set(key)

    def __len__(self) -> int:
        return sum(len(s) for s in self._sets)

    def get(self, key: K, touch: bool = True) -> Optional[V]:
        s = self._set(key)
        value = s.get(key)
        if value is not None and touch:
            s.move_to_end(key)
        return value

    def insert(self, key: K, value: V) -> Optional[Tuple[K, V]]:
        """Store ``value`` as MRU, returning the evicted ``(key, value)`` if any."""
        s = self._set(key)
        if key in s:
            s[key] = value
            s.move_to_end(key)
            return None
        victim = s.popitem(last=False) if len(s) >= self.ways else None
        s[key] = value
        return victim

    def pop(self, key: K) -> Optional[V]:
        return self._set(key).pop(key, None)

    def items(self) -> Iterator[Tuple[K, V]]:
        for s in self._sets:
            yield from s.items()

    def set_contents(self, index: int) -> List[Tuple[K, V]]:
        """Entries of one set, LRU first."""
        return list(self._sets[index].items())

    def clear(self) -> List[Tuple[K, V]]:
        out = list(self.items())
        for s in self._sets:
            s.clear()
        return out


@dataclass
class FtEntry:
    region: int
    hashed_pc: int
    trigger: int


@dataclass
class AtEntry:
    region: int
    hashed_pc: int
    trigger: int
    second: int
    last: int
    penultimate: int
    footprint: int
    stride_flag: bool = False
    valid: bool = True

    @classmethod
    def from_filter(cls, ft: FtEntry, second: int) -> "AtEntry":
        return cls(
            region=ft.region,
            hashed_pc=ft.hashed_pc,
            trigger=ft.trigger,
            second=second,
            last=second,
            penultimate=ft.trigger,
            footprint=(1 << ft.trigger) | (1 << second),
        )


class PatternHistoryTable:
    """Footprints indexed by trigger offset and tagged by second offset.

    Lookups are strict: a footprint stored under another tag in the same set
    is never returned.
    """

    def __init__(self, sets: int, ways: int):
        self.table: SetAssocTable[Tuple[int, int], int] = SetAssocTable(sets * ways, ways, index=lambda key: key[0])

    def lookup(self, trigger: int, second: int) -> Optional[int]:
        return self.table.get((trigger, second))

    def store(self, trigger: int, second: int, footprint: int) -> None:
        self.table.insert((trigger, second), footprint)

    def ways_of(self, trigger: int) -> Dict[int, int]:
        return {second: fp for (_, second), fp in self.table.set_contents(trigger)}


class DensePcTable:
    def __init__(self, entries: int):
        self.table: SetAssocTable[int, bool] = SetAssocTable(entries, entries, index=lambda key: 0)

    def __contains__(self, hpc: int) -> bool:
        return self.table.get(hpc, touch=False) is not None

    def __len__(self) -> int:
        return len(self.table)

    def insert(self, hpc: int) -> None:
        self.table.insert(hpc, True)


class DenseCounter:
    """Saturating counter of recent fully dense (0, 1)-triggered regions.

    Decrements are fast (by 2) while the value is at or above ``fast_floor``.
    """

    def __init__(self, bits: int = 3, half: int = 4, fast_floor: int = 6, value: int = 0):
        self.max = (1 << bits) - 1
        self.half = half
        self.fast_floor = fast_floor
        if not 0 <= value <= self.max:
            raise ValueError(f"counter value {value} outside [0, {self.max}]")
        self.value = value

    def increment(self) -> None:
        self.value = min(self.value + 1, self.max)

    def decrement(self) -> None:
        step = 2 if self.value >= self.fast_floor else 1
        self.value = max(self.value - step, 0)

    @property
    def saturated(self) -> bool:
        return self.value == self.max

    @property
    def half_saturated(self) -> bool:
        return self.value >= self.half


class PrefetchState(IntEnum):
    NONE = 0
    L1D = 1
    L2C = 2
    LLC = 3  # reserved by the encoding, never produced


URGENCY = {PrefetchState.NONE: 0, PrefetchState.L2C: 1, PrefetchState.L1D: 2}


@dataclass
class PbEntry:
    region: int
    states: List[int]
    # most urgent state already drained per offset; blocks needless re-issue
    issued: List[int]
    sources: List[Optional[str]]
    stamp: int = 0

    def pending(self) -> int:
        return sum(1 for s in self.states if s)


class PrefetchBuffer:
    """Per-region pending prefetch patterns with rate-limited draining.

    A merge keeps the more urgent state per offset (L1D over L2C over none)
    and ignores offsets that were already drained at the same or a more
    urgent level. Draining walks entries from the most recently merged one
    and emits lowest offsets first.
    """

    def __init__(self, entries: int, ways: int, blocks_per_region: int):
        self.table: SetAssocTable[int, PbEntry] = SetAssocTable(entries, ways)
        self.bpr = blocks_per_region
        self._clock = itertools.count(1)
        self.discarded = 0

    def get(self, region: int) -> Optional[PbEntry]:
        return self.table.get(region, touch=False)

    def merge(self, region: int, pattern: Dict[int, int], source: Optional[str] = None) -> None:
        entry = self.table.get(region)
        if entry is None:
            entry = PbEntry(region, [0] * self.bpr, [0] * self.bpr, [None] * self.bpr)
            victim = self.table.insert(region, entry)
            if victim is not None:
                self.discarded += victim[1].pending()
        entry.stamp = next(self._clock)
        for off, state in pattern.items():
            urg = URGENCY[state]
            if urg > URGENCY[entry.states[off]] and urg > URGENCY[entry.issued[off]]:
                entry.states[off] = state
                entry.sources[off] = source

    def drain(self, n: int) -> List[Tuple[int, int, int, Optional[str]]]:
        """Pop up to ``n`` pending ``(region, offset, state, source)`` tuples."""
        out: List[Tuple[int, int, int, Optional[str]]] = []
        if n <= 0:
            return out
        for entry in sorted((e for _, e in self.table.items()), key=lambda e: -e.stamp):
            for off, state in enumerate(entry.states):
                if not state:
                    continue
                out.append((entry.region, off, state, entry.sources[off]))
                entry.states[off] = PrefetchState.NONE
                if URGENCY[state] > URGENCY[entry.issued[off]]:
                    entry.issued[off] = state
                if len(out) == n:
                    return out
        return out
