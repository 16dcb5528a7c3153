"""Prefetch counters, derived metrics and run report serialization.

Ratios with a zero denominator are *undefined* and returned as ``None``;
they serialize as JSON ``null`` and never silently become 0.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, Iterable, List, Optional


@dataclass
class PrefetchCounters:
    """Raw event counts collected by the memory hierarchy.

    ``n_a``/``n_b`` are useful/useless prefetched blocks filled into the L1D,
    ``m_a``/``m_b`` the same for the L2C. A useful prefetch is either timely
    (resident when first demanded) or late (still in flight).
    """

    n_a: int = 0
    n_b: int = 0
    m_a: int = 0
    m_b: int = 0
    late_useful: int = 0
    timely_useful: int = 0
    llc_prefetch_hits: int = 0
    llc_demand_misses: int = 0
    issued: int = 0
    dropped_redundant: int = 0
    dropped_queue_full: int = 0
    # accounting for the conservation identity
    dropped_after_issue: int = 0
    inflight_at_end: int = 0
    # L2C prefetch fills handed over to a later L1D prefetch of the same block
    promoted: int = 0

    def check(self) -> None:
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise AssertionError(f"counter {f.name} went negative")
        if self.late_useful + self.timely_useful != self.n_a + self.m_a:
            raise AssertionError("late + timely useful prefetches != n_a + m_a")
        settled = (
            self.n_a + self.n_b + self.m_a + self.m_b + self.inflight_at_end + self.dropped_after_issue + self.promoted
        )
        if self.issued != settled:
            raise AssertionError(f"issued={self.issued} but {settled} prefetches accounted for")

    def __add__(self, other: "PrefetchCounters") -> "PrefetchCounters":
        return PrefetchCounters(**{f.name: getattr(self, f.name) + getattr(other, f.name) for f in fields(self)})


def _ratio(num: int, den: int) -> Optional[float]:
    return None if den == 0 else num / den


def overall_accuracy(c: PrefetchCounters) -> Optional[float]:
    """Useful prefetches at L1D and L2C over all prefetches filled at both."""
    return _ratio(c.n_a + c.m_a, c.n_a + c.n_b + c.m_a + c.m_b)


def llc_coverage(c: PrefetchCounters) -> Optional[float]:
    """Fraction of would-be LLC misses that prefetching removed.

    In-flight hits count as covered.
    """
    return _ratio(c.llc_prefetch_hits, c.llc_prefetch_hits + c.llc_demand_misses)


def late_fraction(c: PrefetchCounters) -> Optional[float]:
    return _ratio(c.late_useful, c.late_useful + c.timely_useful)


def speedup(cycles_pf: int, cycles_nopf: int) -> float:
    """IPC ratio with vs. without prefetching; with a fixed instruction
    count this is the inverse cycle ratio."""
    if cycles_pf <= 0:
        raise ValueError("cycle count must be positive")
    return cycles_nopf / cycles_pf


def aggregate(counters: Iterable[PrefetchCounters]) -> PrefetchCounters:
    total = PrefetchCounters()
    for c in counters:
        total = total + c
    return total


@dataclass
class RunReport:
    prefetcher: str
    counters: PrefetchCounters
    cycles: int
    accesses: int
    baseline_cycles: Optional[int] = None
    config: Dict[str, Any] = field(default_factory=dict)

    @property
    def accuracy(self) -> Optional[float]:
        return overall_accuracy(self.counters)

    @property
    def coverage(self) -> Optional[float]:
        return llc_coverage(self.counters)

    @property
    def late(self) -> Optional[float]:
        return late_fraction(self.counters)

    @property
    def speedup(self) -> Optional[float]:
        if self.baseline_cycles is None:
            return None
        return speedup(self.cycles, self.baseline_cycles)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "prefetcher": self.prefetcher,
            "accesses": self.accesses,
            "cycles": self.cycles,
            "baseline_cycles": self.baseline_cycles,
            "accuracy": self.accuracy,
            "coverage": self.coverage,
            "late_fraction": self.late,
            "speedup": self.speedup,
            "counters": asdict(self.counters),
            "config": self.config,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_text(self) -> str:
        rows = [
            ("prefetcher", self.prefetcher),
            ("accesses", self.accesses),
            ("cycles", self.cycles),
            ("baseline cycles", self.baseline_cycles),
            ("accuracy", self.accuracy),
            ("llc coverage", self.coverage),
            ("late fraction", self.late),
            ("speedup", self.speedup),
        ]
        rows += [(k.replace("_", " "), v) for k, v in asdict(self.counters).items()]
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{width}}  {format_value(v)}" for k, v in rows) + "\n"

    CSV_COLUMNS = ("prefetcher", "accesses", "cycles", "accuracy", "coverage", "late_fraction", "speedup")

    def csv_row(self) -> Dict[str, Any]:
        d = self.to_dict()
        return {k: d[k] for k in self.CSV_COLUMNS}


def format_value(v: Any) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.4f}"
    return str(v)


def to_csv(rows: List[Dict[str, Any]], columns: Iterable[str]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: ("" if v is None else v) for k, v in row.items()})
    return buf.getvalue()


def text_table(rows: List[Dict[str, Any]], columns: Iterable[str]) -> str:
    columns = list(columns)
    cells = [[format_value(r.get(c)) for c in columns] for r in rows]
    widths = [max([len(c)] + [len(row[i]) for row in cells]) for i, c in enumerate(columns)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(columns, widths))]
    lines += ["  ".join(v.ljust(w) for v, w in zip(row, widths)) for row in cells]
    return "\n".join(line.rstrip() for line in lines) + "\n"
