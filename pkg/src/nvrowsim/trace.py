"""Trace file ingestion and seeded synthetic trace generation.

Trace files are text, one record per line: `<gap>,<R|W>,0x<hex address>`
where gap is the instruction count since the previous record. `#` starts a
comment line. Files ending in .gz are read/written through gzip.
"""

from __future__ import annotations

import gzip
import random
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator, Optional


class Op(Enum):
    READ = "R"
    WRITE = "W"


@dataclass(frozen=True)
class TraceRecord:
    gap: int  # instructions since the previous record
    op: Op
    address: int


class TraceError(Exception):
    def __init__(self, message: str, line: int, column: int = 1):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


def parse_trace(lines: Iterable[str],
                max_address: Optional[int] = None) -> Iterator[TraceRecord]:
    """Yield records in file order, raising TraceError with the location."""
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n")
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise TraceError(f"expected 3 comma-separated fields, got {len(parts)}",
                             lineno)
        gap_text, op_text, addr_text = (p.strip() for p in parts)
        col_op = len(parts[0]) + 2
        col_addr = len(parts[0]) + len(parts[1]) + 3
        try:
            gap = int(gap_text)
        except ValueError:
            raise TraceError(f"bad gap {gap_text!r}", lineno) from None
        if gap < 0:
            raise TraceError(f"negative gap {gap}", lineno)
        try:
            op = Op(op_text)
        except ValueError:
            raise TraceError(f"bad op {op_text!r}, expected R or W",
                             lineno, col_op) from None
        if not addr_text.lower().startswith("0x"):
            raise TraceError(f"address {addr_text!r} must start with 0x",
                             lineno, col_addr)
        try:
            address = int(addr_text, 16)
        except ValueError:
            raise TraceError(f"bad address {addr_text!r}", lineno, col_addr) from None
        if max_address is not None and address >= max_address:
            raise TraceError(f"address {addr_text} beyond physical space "
                             f"{max_address:#x}", lineno, col_addr)
        yield TraceRecord(gap, op, address)


def format_record(rec: TraceRecord) -> str:
    return f"{rec.gap},{rec.op.value},{rec.address:#x}"


def serialize_trace(records: Iterable[TraceRecord]) -> str:
    return "".join(format_record(r) + "\n" for r in records)


def open_trace(path: str, mode: str = "rt"):
    """Open a trace file, transparently handling .gz."""
    if path.endswith(".gz"):
        return gzip.open(path, mode, encoding="utf-8", newline="")
    return open(path, mode, encoding="utf-8", newline="")


def load_trace(path: str, max_address: Optional[int] = None) -> list[TraceRecord]:
    with open_trace(path) as fh:
        return list(parse_trace(fh, max_address=max_address))


def save_trace(records: Iterable[TraceRecord], path: str) -> None:
    with open_trace(path, "wt") as fh:
        fh.write(serialize_trace(records))


GENERATOR_KINDS = ("stream", "random", "strided", "mixed")
BLOCK = 64


@dataclass(frozen=True)
class GeneratorSpec:
    """Parameters of one synthetic trace. Same spec + seed, same sequence."""

    kind: str
    length: int
    footprint_bytes: int
    gap_mean: int = 0
    seed: int = 0
    stride: Optional[int] = None  # strided only, in bytes
    read_fraction: float = 1.0
    base: int = 0  # byte offset of the footprint window

    def __post_init__(self):
        if self.kind not in GENERATOR_KINDS:
            raise ValueError(f"unknown generator kind {self.kind!r}")
        if self.length < 1:
            raise ValueError("length must be at least 1")
        if self.footprint_bytes < BLOCK:
            raise ValueError(f"footprint must be at least {BLOCK} bytes")
        if self.footprint_bytes % BLOCK:
            raise ValueError("footprint must be a multiple of the block size")
        if self.kind == "strided":
            if not self.stride or self.stride % BLOCK:
                raise ValueError("stride must be a positive multiple of 64")
        if not 0.0 <= self.read_fraction <= 1.0:
            raise ValueError("read_fraction must be within [0, 1]")
        if self.gap_mean < 0:
            raise ValueError("gap_mean must be non-negative")
        if self.base % BLOCK:
            raise ValueError("base must be block aligned")


def generate(spec: GeneratorSpec) -> list[TraceRecord]:
    """Produce a deterministic synthetic trace from a generator spec."""
    rng = random.Random(spec.seed)
    blocks = spec.footprint_bytes // BLOCK
    records = []
    for i in range(spec.length):
        if spec.kind == "stream":
            addr = (i * BLOCK) % spec.footprint_bytes
        elif spec.kind == "strided":
            addr = (i * spec.stride) % spec.footprint_bytes
        else:  # random, mixed
            addr = rng.randrange(blocks) * BLOCK
        gap = rng.randint(0, 2 * spec.gap_mean) if spec.gap_mean else 0
        op = Op.READ if rng.random() < spec.read_fraction else Op.WRITE
        records.append(TraceRecord(gap, op, spec.base + addr))
    return records
