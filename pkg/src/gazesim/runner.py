"""Build a prefetcher by name and run a trace through the hierarchy."""

from __future__ import annotations

import dataclasses
from typing import Iterable, Optional, Sequence

from gazesim.baselines import IpStridePrefetcher, NAccessTablePrefetcher, NextLinePrefetcher
from gazesim.gaze import GazeConfig, GazePrefetcher
from gazesim.memsys import Hierarchy, HierarchyConfig, NullPrefetcher
from gazesim.metrics import RunReport
from gazesim.trace import MemoryAccess

PREFETCHERS = (
    "none", "next-line", "ip-stride", "offset-table", "n-access:<N>", "gaze", "gaze-pht-only", "gaze-sm-only",
)


def make_prefetcher(name: str, gaze_config: Optional[GazeConfig] = None):
    cfg = gaze_config or GazeConfig()
    if name == "none":
        return NullPrefetcher()
    if name == "next-line":
        return NextLinePrefetcher(cfg.region_size, cfg.block_size)
    if name == "ip-stride":
        return IpStridePrefetcher(region_size=cfg.region_size, block_size=cfg.block_size)
    if name == "offset-table":
        return NAccessTablePrefetcher(1, cfg)
    if name.startswith("n-access:"):
        try:
            n = int(name.split(":", 1)[1])
        except ValueError:
            raise ValueError(f"bad prefetcher name {name!r}") from None
        return NAccessTablePrefetcher(n, cfg)
    if name == "gaze":
        return GazePrefetcher(cfg)
    if name == "gaze-pht-only":
        return GazePrefetcher(dataclasses.replace(cfg, streaming=False))
    if name == "gaze-sm-only":
        return GazePrefetcher(dataclasses.replace(cfg, pht=False))
    raise ValueError(f"unknown prefetcher {name!r}; choose from {', '.join(PREFETCHERS)}")


def simulate(
    trace: Iterable[MemoryAccess],
    prefetcher="none",
    hierarchy: Optional[HierarchyConfig] = None,
    gaze_config: Optional[GazeConfig] = None,
    baseline_cycles: Optional[int] = None,
) -> RunReport:
    pf = make_prefetcher(prefetcher, gaze_config) if isinstance(prefetcher, str) else prefetcher
    h = Hierarchy(hierarchy, pf)
    for access in trace:
        h.demand_access(access)
    counters = h.finalize()
    counters.check()
    return RunReport(
        prefetcher=getattr(pf, "name", type(pf).__name__),
        counters=counters,
        cycles=h.cycle,
        accesses=h.accesses,
        baseline_cycles=baseline_cycles,
    )


def compare(
    trace: Sequence[MemoryAccess],
    prefetchers: Sequence[str],
    hierarchy: Optional[HierarchyConfig] = None,
    gaze_config: Optional[GazeConfig] = None,
):
    """Run every prefetcher plus a null baseline; speedups are relative to it."""
    base = simulate(trace, "none", hierarchy, gaze_config)
    base.baseline_cycles = base.cycles
    reports = [base]
    for name in prefetchers:
        if name == "none":
            continue
        reports.append(simulate(trace, name, hierarchy, gaze_config, baseline_cycles=base.cycles))
    return reports
