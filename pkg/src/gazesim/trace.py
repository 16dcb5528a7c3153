"""Memory access records, trace file formats and synthetic trace generators.

Two on-disk formats are supported:

* text: one record per line, ``<instr_id> <pc-hex> <vaddr-hex> <L|S>``.
  Blank lines and lines starting with ``#`` are ignored.
* binary: the 4-byte magic ``GZTR`` and a little-endian u32 version (1),
  followed by 25-byte records ``{u64 instr_id, u64 pc, u64 vaddr, u8 kind}``.

Only loads are simulated. Stores are parsed and dropped, and the reader keeps
a count of how many it skipped.
"""

from __future__ import annotations

import io
import random
import struct
from dataclasses import dataclass, field
from enum import Enum
from typing import IO, Iterable, Iterator, List, Optional, Sequence, Union

MAGIC = b"GZTR"
VERSION = 1
HEADER = struct.Struct("<4sI")
RECORD = struct.Struct("<QQQB")

U64_MAX = (1 << 64) - 1
BLOCK_SIZE = 64
REGION_SIZE = 4096


class TraceError(ValueError):
    """Base class for trace problems."""


class TraceParseError(TraceError):
    """A line or record does not conform to its format."""

    def __init__(self, message: str, line: Optional[int] = None, offset: Optional[int] = None):
        where = ""
        if line is not None:
            where = f"line {line}: "
        elif offset is not None:
            where = f"byte offset {offset}: "
        super().__init__(where + message)
        self.line = line
        self.offset = offset


class TraceValidationError(TraceError):
    """Records parse but break a trace invariant (instr_id ordering)."""


class AccessKind(Enum):
    LOAD = "L"
    STORE = "S"


_KIND_CODE = {AccessKind.LOAD: 0, AccessKind.STORE: 1}
_CODE_KIND = {v: k for k, v in _KIND_CODE.items()}


@dataclass(frozen=True)
class MemoryAccess:
    instr_id: int
    pc: int
    vaddr: int
    kind: AccessKind = AccessKind.LOAD

    def __post_init__(self):
        for name in ("instr_id", "pc", "vaddr"):
            value = getattr(self, name)
            if not 0 <= value <= U64_MAX:
                raise TraceValidationError(f"{name}={value:#x} does not fit in 64 bits")


class TraceFormat(str, Enum):
    TEXT = "text"
    BINARY = "binary"


# ---------------------------------------------------------------------------
# reading / writing
# ---------------------------------------------------------------------------


def detect_format(head: bytes) -> TraceFormat:
    return TraceFormat.BINARY if head[:4] == MAGIC else TraceFormat.TEXT


class TraceReader:
    """Iterate over the loads of a trace stream.

    Stores are skipped and tallied in ``dropped_stores``. Iteration raises
    :class:`TraceParseError` on malformed input and
    :class:`TraceValidationError` when ``instr_id`` decreases.
    """

    def __init__(self, source: Union[bytes, IO[bytes]], fmt: Union[TraceFormat, str] = TraceFormat.TEXT):
        if isinstance(source, (bytes, bytearray)):
            source = io.BytesIO(bytes(source))
        self._source = source
        self.format = TraceFormat(fmt)
        self.dropped_stores = 0
        self.records = 0

    def __iter__(self) -> Iterator[MemoryAccess]:
        raw = self._text_records() if self.format is TraceFormat.TEXT else self._binary_records()
        last_id = -1
        for where, access in raw:
            if access.instr_id < last_id:
                raise TraceValidationError(
                    f"{where}: instr_id {access.instr_id} follows {last_id} (must be nondecreasing)"
                )
            last_id = access.instr_id
            self.records += 1
            if access.kind is AccessKind.STORE:
                self.dropped_stores += 1
                continue
            yield access

    def _text_records(self):
        for lineno, raw in enumerate(self._source, start=1):
            line = raw.decode("ascii", errors="replace").strip() if isinstance(raw, bytes) else raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 4:
                raise TraceParseError(f"expected 4 fields, got {len(parts)}", line=lineno)
            try:
                instr_id = int(parts[0], 10)
                pc = int(parts[1], 16)
                vaddr = int(parts[2], 16)
                kind = AccessKind(parts[3].upper())
            except ValueError as exc:
                raise TraceParseError(str(exc), line=lineno) from None
            try:
                access = MemoryAccess(instr_id, pc, vaddr, kind)
            except TraceValidationError as exc:
                raise TraceParseError(str(exc), line=lineno) from None
            yield f"line {lineno}", access

    def _binary_records(self):
        header = self._source.read(HEADER.size)
        if len(header) != HEADER.size:
            raise TraceParseError("truncated header", offset=0)
        magic, version = HEADER.unpack(header)
        if magic != MAGIC:
            raise TraceParseError(f"bad magic {magic!r}", offset=0)
        if version != VERSION:
            raise TraceParseError(f"unsupported version {version}", offset=4)
        offset = HEADER.size
        while True:
            chunk = self._source.read(RECORD.size)
            if not chunk:
                return
            if len(chunk) != RECORD.size:
                raise TraceParseError(f"truncated record ({len(chunk)} of {RECORD.size} bytes)", offset=offset)
            instr_id, pc, vaddr, code = RECORD.unpack(chunk)
            if code not in _CODE_KIND:
                raise TraceParseError(f"unknown access kind {code}", offset=offset)
            yield f"byte offset {offset}", MemoryAccess(instr_id, pc, vaddr, _CODE_KIND[code])
            offset += RECORD.size


def read_trace(source: Union[bytes, IO[bytes]], fmt: Union[TraceFormat, str] = TraceFormat.TEXT) -> List[MemoryAccess]:
    return list(TraceReader(source, fmt))


def load_trace_file(path) -> List[MemoryAccess]:
    """Read a trace file, picking the format from its first bytes."""
    with open(path, "rb") as fh:
        fmt = detect_format(fh.read(4))
        fh.seek(0)
        return read_trace(fh, fmt)


def write_trace(accesses: Iterable[MemoryAccess], fmt: Union[TraceFormat, str] = TraceFormat.TEXT) -> bytes:
    fmt = TraceFormat(fmt)
    if fmt is TraceFormat.TEXT:
        lines = [f"{a.instr_id} {a.pc:#x} {a.vaddr:#x} {a.kind.value}\n" for a in accesses]
        return "".join(lines).encode("ascii")
    out = bytearray(HEADER.pack(MAGIC, VERSION))
    for a in accesses:
        out += RECORD.pack(a.instr_id, a.pc, a.vaddr, _KIND_CODE[a.kind])
    return bytes(out)


# ---------------------------------------------------------------------------
# synthetic generators
# ---------------------------------------------------------------------------


class GeneratorKind(str, Enum):
    STREAMING = "streaming"
    STRIDED = "strided"
    PATTERN_REPLAY = "pattern-replay"
    IRREGULAR = "irregular"
    BFS_MIXED = "bfs-mixed"


@dataclass(frozen=True)
class TraceSpec:
    """Everything needed to regenerate a synthetic trace bit for bit.

    ``params`` holds generator-specific knobs; see :func:`generate` for the
    ones each kind understands. Unknown knobs are rejected.
    """

    kind: GeneratorKind
    length: int
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "kind", GeneratorKind(self.kind))


_COMMON = {"instr_step", "block_size", "region_size", "pc", "start"}
_PARAMS = {
    GeneratorKind.STREAMING: _COMMON,
    GeneratorKind.STRIDED: _COMMON | {"stride"},
    GeneratorKind.PATTERN_REPLAY: _COMMON | {"patterns", "schedule", "fillers", "filler_pair", "noise"},
    GeneratorKind.IRREGULAR: _COMMON | {"pages"},
    GeneratorKind.BFS_MIXED: _COMMON | {"frontier_density", "sparse_blocks", "neighbor_reads", "pages"},
}


def generator_params(kind: Union[GeneratorKind, str]) -> frozenset:
    """Parameter names the generator of ``kind`` accepts."""
    return frozenset(_PARAMS[GeneratorKind(kind)])


class _Emitter:
    def __init__(self, length: int, instr_step: int, block_size: int):
        self.length = length
        self.step = instr_step
        self.block_size = block_size
        self.out: List[MemoryAccess] = []
        self._instr = 0

    @property
    def full(self) -> bool:
        return len(self.out) >= self.length

    def emit(self, pc: int, block: int):
        if self.full:
            return
        self.out.append(MemoryAccess(self._instr, pc & U64_MAX, (block * self.block_size) & U64_MAX))
        self._instr += self.step


def generate(spec: TraceSpec) -> List[MemoryAccess]:
    """Build the access sequence described by ``spec``.

    Common params: ``instr_step`` (1), ``block_size`` (64), ``region_size``
    (4096), ``pc`` (base trigger PC), ``start`` (base byte address).

    streaming
        consecutive blocks from ``start``.
    strided
        every ``stride``-th block from ``start``.
    pattern-replay
        successive fresh regions, each replaying one offset order from
        ``patterns`` (a list of offset lists, defaulting to a seeded
        :func:`conflict_library`). ``schedule`` fixes which pattern
        each region uses; otherwise patterns are drawn uniformly. ``fillers``
        two-access regions (offsets ``filler_pair``) follow every replayed
        region so that older regions age out of the tracking tables, and
        ``noise`` is the probability of a random off-pattern block after each
        replayed access.
    irregular
        uniformly random blocks across ``pages`` regions.
    bfs-mixed
        a frontier array scanned region by region; a ``frontier_density``
        fraction of regions is scanned densely end to end, the rest touch
        offsets 0 and 1 and then ``sparse_blocks`` scattered blocks from a
        different PC. Each
        frontier access is followed by ``neighbor_reads`` random reads into a
        vertex array of ``pages`` regions.
    """
    kind = spec.kind
    if spec.length <= 0:
        raise ValueError("trace length must be positive")
    unknown = set(spec.params) - _PARAMS[kind]
    if unknown:
        raise ValueError(f"unknown {kind.value} parameters: {sorted(unknown)}")
    p = spec.params
    block_size = int(p.get("block_size", BLOCK_SIZE))
    region_size = int(p.get("region_size", REGION_SIZE))
    if region_size % block_size or block_size & (block_size - 1):
        raise ValueError("block size must be a power of two dividing the region size")
    bpr = region_size // block_size
    step = int(p.get("instr_step", 1))
    if step < 0:
        raise ValueError("instr_step must be nonnegative")
    em = _Emitter(spec.length, step, block_size)
    rng = random.Random(spec.seed)
    start_block = int(p.get("start", 0x10000)) // block_size
    pc = int(p.get("pc", 0x400100))

    if kind is GeneratorKind.STREAMING:
        for i in range(spec.length):
            em.emit(pc, start_block + i)
    elif kind is GeneratorKind.STRIDED:
        stride = int(p.get("stride", 1))
        if stride == 0:
            raise ValueError("stride must be nonzero")
        for i in range(spec.length):
            em.emit(pc, start_block + i * stride)
    elif kind is GeneratorKind.PATTERN_REPLAY:
        _pattern_replay(em, rng, p, bpr, start_block, pc)
    elif kind is GeneratorKind.IRREGULAR:
        pages = int(p.get("pages", 4096))
        first = (start_block // bpr) * bpr
        for _ in range(spec.length):
            em.emit(pc, first + rng.randrange(pages * bpr))
    elif kind is GeneratorKind.BFS_MIXED:
        _bfs_mixed(em, rng, p, bpr, start_block, pc)
    return em.out


def conflict_library(rng: random.Random, blocks_per_region: int = 64, groups: int = 4, core: int = 10,
                     short_lengths: Sequence[int] = (3, 4, 5), per_length: int = 4) -> List[List[int]]:
    """A pattern library in which longer access keys trade coverage for accuracy.

    Each of ``groups`` trigger offsets owns four patterns that share a
    ``core`` of blocks but whose first four accesses diverge after one, two
    and three shared offsets, so a key of N accesses still confuses some of
    them for N < 4. Short patterns of ``short_lengths`` accesses have unique
    triggers and end before a long key is complete. After the trigger, long
    patterns visit their offsets in ascending order.
    """
    bpr = blocks_per_region
    triggers_needed = groups + per_length * len(short_lengths)
    if bpr < max(triggers_needed, core + 10, max(short_lengths, default=1)):
        raise ValueError(f"{bpr} blocks per region is too few for the conflict library")
    triggers = rng.sample(range(bpr), triggers_needed)
    library: List[List[int]] = []
    for t in triggers[:groups]:
        body = sorted(rng.sample([o for o in range(bpr) if o != t], 9 + core))
        a, b, c, d, e, f, g, h, i = body[:9]
        shared = body[9:]
        for prefix in ([a, b, c], [a, b, d], [a, e, f], [g, h, i]):
            library.append([t] + prefix + shared)
    short_triggers = iter(triggers[groups:])
    for length in short_lengths:
        for _ in range(per_length):
            t = next(short_triggers)
            library.append([t] + rng.sample([o for o in range(bpr) if o != t], length - 1))
    return library


def _pattern_replay(em: _Emitter, rng: random.Random, p: dict, bpr: int, start_block: int, pc: int):
    patterns: Sequence[Sequence[int]] = p.get("patterns") or conflict_library(rng, bpr)
    for pat in patterns:
        if not pat or len(set(pat)) != len(pat) or any(not 0 <= o < bpr for o in pat):
            raise ValueError(f"pattern {list(pat)} must list distinct offsets in [0, {bpr})")
    schedule = p.get("schedule")
    fillers = int(p.get("fillers", 0))
    filler_pair = tuple(p.get("filler_pair", (bpr - 1, bpr - 2)))
    noise = float(p.get("noise", 0.0))
    region = start_block // bpr
    noise_base = region + (1 << 24)
    i = 0
    while not em.full:
        if schedule is not None:
            if i >= len(schedule):
                break
            idx = schedule[i]
        else:
            idx = rng.randrange(len(patterns))
        base = region * bpr
        for off in patterns[idx]:
            em.emit(pc + 4 * idx, base + off)
            if noise and rng.random() < noise:
                em.emit(pc + 0x800, noise_base * bpr + rng.randrange(1 << 20))
        region += 1
        for _ in range(fillers):
            for off in filler_pair:
                em.emit(pc + 0x400, region * bpr + off)
            region += 1
        i += 1


def _bfs_mixed(em: _Emitter, rng: random.Random, p: dict, bpr: int, start_block: int, pc: int):
    density = float(p.get("frontier_density", 0.5))
    sparse_blocks = int(p.get("sparse_blocks", 4))
    neighbor_reads = int(p.get("neighbor_reads", 1))
    pages = int(p.get("pages", 4096))
    # dense and sparse frontier processing are separate code paths
    scan_pc, sparse_pc, vertex_pc = pc, pc + 0x80, pc + 0x40
    frontier_region = start_block // bpr
    vertex_first = (frontier_region + (1 << 20)) * bpr
    while not em.full:
        base = frontier_region * bpr
        if rng.random() < density:
            offsets, frontier_pc = list(range(bpr)), scan_pc
        else:
            rest = sorted(rng.sample(range(2, bpr), min(sparse_blocks, bpr - 2)))
            offsets, frontier_pc = [0, 1] + rest, sparse_pc
        for off in offsets:
            em.emit(frontier_pc, base + off)
            for _ in range(neighbor_reads):
                em.emit(vertex_pc, vertex_first + rng.randrange(pages * bpr))
        frontier_region += 1
