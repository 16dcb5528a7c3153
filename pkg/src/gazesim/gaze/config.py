from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Tuple

PC_HASH_BITS = 12
_PC_FOLD_LO, _PC_FOLD_HI = 2, 50


def hashed_pc(pc: int) -> int:
    """Fold PC bits [2, 50) into 12 bits by XOR-ing successive 12-bit chunks."""
    x = (pc >> _PC_FOLD_LO) & ((1 << (_PC_FOLD_HI - _PC_FOLD_LO)) - 1)
    h = 0
    mask = (1 << PC_HASH_BITS) - 1
    while x:
        h ^= x & mask
        x >>= PC_HASH_BITS
    return h


@dataclass(frozen=True)
class GazeConfig:
    """Table geometries and thresholds.

    Defaults reproduce the 4KB-region design point. ``stage1_head`` must be a
    quarter of the region's blocks, and the PHT always has one set per
    trigger offset, so its entry count follows from ``pht_ways``.
    """

    region_size: int = 4096
    block_size: int = 64
    ft_entries: int = 64
    ft_ways: int = 8
    at_entries: int = 64
    at_ways: int = 8
    pht_ways: int = 4
    dpct_entries: int = 8
    dc_bits: int = 3
    pb_entries: int = 32
    pb_ways: int = 8
    stage1_head: int = 16
    stage2_degree: int = 4
    pb_drain_rate: int = 2
    dc_half: int = 4
    dc_fast_floor: int = 6
    # feature switches for the ablation variants
    streaming: bool = True
    pht: bool = True

    def __post_init__(self):
        bs, rs = self.block_size, self.region_size
        if bs <= 0 or bs & (bs - 1) or rs & (rs - 1) or rs % bs:
            raise ValueError("block and region sizes must be powers of two, block dividing region")
        if rs // bs < 8:
            raise ValueError("a region must hold at least 8 blocks")
        if self.stage1_head * 4 != rs // bs:
            raise ValueError(f"stage1_head must be blocks_per_region/4 = {rs // bs // 4}")
        for n, w in ((self.ft_entries, self.ft_ways), (self.at_entries, self.at_ways), (self.pb_entries, self.pb_ways)):
            if w <= 0 or n % w:
                raise ValueError(f"{n} entries cannot be split into {w}-way sets")
        if self.pht_ways <= 0 or self.dpct_entries <= 0:
            raise ValueError("PHT ways and DPCT entries must be positive")
        if self.stage2_degree < 1 or self.pb_drain_rate < 1:
            raise ValueError("stage2_degree and pb_drain_rate must be positive")
        if not 0 < self.dc_half <= self.dc_max or not 0 < self.dc_fast_floor <= self.dc_max:
            raise ValueError("dense counter thresholds must lie within the counter range")

    @classmethod
    def from_dict(cls, d: dict) -> "GazeConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown gaze parameters: {sorted(unknown)}")
        return cls(**d)

    @property
    def blocks_per_region(self) -> int:
        return self.region_size // self.block_size

    @property
    def offset_bits(self) -> int:
        return (self.blocks_per_region - 1).bit_length()

    @property
    def pht_sets(self) -> int:
        return self.blocks_per_region

    @property
    def pht_entries(self) -> int:
        return self.pht_sets * self.pht_ways

    @property
    def dc_max(self) -> int:
        return (1 << self.dc_bits) - 1

    @property
    def region_shift(self) -> int:
        return self.region_size.bit_length() - 1

    @property
    def block_shift(self) -> int:
        return self.block_size.bit_length() - 1

    def region_and_offset(self, vaddr: int) -> Tuple[int, int]:
        return vaddr >> self.region_shift, (vaddr >> self.block_shift) % self.blocks_per_region

    def block_addr(self, region: int, offset: int) -> int:
        return (region << self.region_shift) | (offset << self.block_shift)


DEFAULT_CONFIG = GazeConfig()


def region_and_offset(vaddr: int, config: GazeConfig = DEFAULT_CONFIG) -> Tuple[int, int]:
    return config.region_and_offset(vaddr)
