"""Deliberately naive Gaze model used as a differential oracle.

Every table is a flat list of dicts searched linearly, with LRU tracked by
timestamps. It shares no code with the package's table classes and only
the module pieces that are pure functions (PC hashing) are reused.
"""

from __future__ import annotations

from typing import Dict, List, Optional, Tuple

from gazesim.gaze.config import hashed_pc

L1D, L2C = 1, 2
RANK = {0: 0, L2C: 1, L1D: 2}


class _Lru:
    """Set-associative table: list of rows {"set", "key", "val", "t"}."""

    def __init__(self, entries: int, ways: int, set_of):
        self.sets = entries // ways
        self.ways = ways
        self.set_of = set_of
        self.rows: List[dict] = []
        self.t = 0

    def _tick(self) -> int:
        self.t += 1
        return self.t

    def find(self, key, touch=True) -> Optional[dict]:
        for row in self.rows:
            if row["key"] == key:
                if touch:
                    row["t"] = self._tick()
                return row
        return None

    def put(self, key, val) -> Optional[dict]:
        row = self.find(key)
        if row is not None:
            row["val"] = val
            return None
        s = self.set_of(key) % self.sets
        members = [r for r in self.rows if r["set"] == s]
        victim = None
        if len(members) >= self.ways:
            victim = min(members, key=lambda r: r["t"])
            self.rows.remove(victim)
        self.rows.append({"set": s, "key": key, "val": val, "t": self._tick()})
        return victim

    def remove(self, key) -> None:
        self.rows = [r for r in self.rows if r["key"] != key]


class ReferenceGaze:
    def __init__(self, region_size=4096, block_size=64, streaming=True, pht=True):
        self.rshift = region_size.bit_length() - 1
        self.bshift = block_size.bit_length() - 1
        self.n = region_size // block_size
        self.streaming, self.use_pht = streaming, pht
        self.ft = _Lru(64, 8, lambda r: r)
        self.at = _Lru(64, 8, lambda r: r)
        self.pht = _Lru(self.n * 4, 4, lambda k: k[0])
        self.dpct = _Lru(8, 8, lambda h: 0)
        self.dc = 0
        # region -> {"pend": {off: state}, "done": {off: state}, "t": stamp}
        self.pb = _Lru(32, 8, lambda r: r)
        self.stamp = 0

    def _train(self, e: dict) -> None:
        if self.streaming and (e["trig"], e["sec"]) == (0, 1):
            if all(e["fp"] >> i & 1 for i in range(self.n)):
                self.dpct.put(e["hpc"], True)
                self.dc = min(self.dc + 1, 7)
            else:
                self.dc = max(self.dc - (2 if self.dc >= 6 else 1), 0)
        elif self.use_pht:
            self.pht.put((e["trig"], e["sec"]), e["fp"])

    def _queue(self, region: int, pattern: Dict[int, int]) -> None:
        row = self.pb.find(region)
        if row is None:
            self.pb.put(region, {"pend": {}, "done": {}})
            row = self.pb.find(region)
        self.stamp += 1
        row["val"]["t"] = self.stamp
        pend, done = row["val"]["pend"], row["val"]["done"]
        for off, st in pattern.items():
            if RANK[st] > RANK[pend.get(off, 0)] and RANK[st] > RANK[done.get(off, 0)]:
                pend[off] = st

    def _predict(self, trig: int, sec: int, hpc: int) -> Tuple[Dict[int, int], bool]:
        head = self.n // 4
        if self.streaming and (trig, sec) == (0, 1):
            if self.dpct.find(hpc, touch=False) is not None or self.dc == 7:
                return {i: (L1D if i < head else L2C) for i in range(self.n)}, True
            if self.dc >= 4:
                return {i: L2C for i in range(head)}, True
            return {}, True
        if not self.use_pht:
            return {}, True
        row = self.pht.find((trig, sec))
        if row is None:
            return {}, True
        return {i: L1D for i in range(self.n) if row["val"] >> i & 1}, False

    def observe(self, pc: int, vaddr: int) -> List[Tuple[int, int]]:
        region = vaddr >> self.rshift
        off = (vaddr >> self.bshift) & (self.n - 1)
        at = self.at.find(region)
        if at is not None:
            e = at["val"]
            if off != e["last"]:
                e["fp"] |= 1 << off
                if e["flag"] and self.streaming:
                    d = off - e["last"]
                    if d != 0 and e["last"] - e["pen"] == d:
                        pat = {}
                        for k in range(1, 5):
                            tgt = off + k * d
                            if tgt < 0 or tgt >= self.n:
                                break
                            pat[tgt] = L1D
                        if pat:
                            self._queue(region, pat)
                e["pen"], e["last"] = e["last"], off
        else:
            ft = self.ft.find(region)
            if ft is None:
                self.ft.put(region, {"hpc": hashed_pc(pc), "trig": off})
            elif ft["val"]["trig"] != off:
                f = ft["val"]
                self.ft.remove(region)
                e = {"hpc": f["hpc"], "trig": f["trig"], "sec": off, "last": off, "pen": f["trig"],
                     "fp": (1 << f["trig"]) | (1 << off), "flag": False}
                victim = self.at.put(region, e)
                if victim is not None:
                    self._train(victim["val"])
                pat, flag = self._predict(f["trig"], off, f["hpc"])
                e["flag"] = flag
                pat = {o: s for o, s in pat.items() if o not in (f["trig"], off)}
                if pat:
                    self._queue(region, pat)
        return self._drain(2)

    def _drain(self, budget: int) -> List[Tuple[int, int]]:
        out = []
        for row in sorted(self.pb.rows, key=lambda r: r["val"]["t"], reverse=True):
            pend, done = row["val"]["pend"], row["val"]["done"]
            for o in sorted(pend):
                if len(out) == budget:
                    return out
                st = pend.pop(o)
                if RANK[st] > RANK[done.get(o, 0)]:
                    done[o] = st
                out.append(((row["key"] << self.rshift) | (o << self.bshift), st))
        return out
