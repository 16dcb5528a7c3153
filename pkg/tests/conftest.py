import random
from typing import List

import pytest

from gazesim.trace import MemoryAccess

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")


def pytest_runtest_logreport(report):
    marker = getattr(report, "criterion", None)
    if marker is None:
        return
    number, title = marker
    failed = report.failed
    previous = _CRITERIA.get(number, (title, False))
    if report.when == "call" or failed:
        _CRITERIA[number] = (title, previous[1] or failed)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        outcome.get_result().criterion = tuple(marker.args)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, failed = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'FAIL' if failed else 'PASS'}  {title}")


def mixed_trace(seed: int, length: int = 1000, region_size: int = 4096) -> List[MemoryAccess]:
    """Random interleaving of dense scans, replayed patterns, strides and noise,
    mostly in fresh regions, so every Gaze path gets exercised."""
    rng = random.Random(seed)
    bpr = region_size // 64
    library = [rng.sample(range(bpr), rng.randint(2, 6)) for _ in range(4)]
    library += [[0, 1] + rng.sample(range(2, bpr), 3)]
    fresh = iter(range(1 << 30))
    recent: List[int] = []
    pcs = [0x400000 + 0x40 * i for i in range(6)]
    out: List[MemoryAccess] = []
    base = 0x100 + 1000 * seed

    def emit(pc, region, off):
        if len(out) < length:
            out.append(MemoryAccess(len(out), pc, (base + region) * region_size + off * 64))

    while len(out) < length:
        if recent and rng.random() < 0.2:
            region = rng.choice(recent[-80:])
        else:
            region = next(fresh)
            recent.append(region)
        r = rng.random()
        pc = rng.choice(pcs)
        if r < 0.12:
            for off in range(bpr):
                emit(pcs[0], region, off)
        elif r < 0.7:
            for off in rng.choice(library):
                emit(pc, region, off)
        elif r < 0.85:
            d = rng.choice([-3, -2, -1, 1, 2, 3, 5])
            off = rng.randrange(bpr)
            for _ in range(rng.randint(3, 8)):
                if 0 <= off < bpr:
                    emit(pc, region, off)
                off += d
        else:
            for _ in range(rng.randint(1, 6)):
                emit(pc, rng.choice(recent[-80:]), rng.randrange(bpr))
    return out
