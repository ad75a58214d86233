"""Histogram packing: invertible dense remap of a sparse symbol alphabet.

A component that uses only K of the 65536 possible 16-bit values is remapped
onto the contiguous range [0, K-1] by indexing into the sorted list of
occurring values.  The remap is strictly order preserving and leaves the
histogram counts untouched; the coding gain appears downstream, where the
predictor sees small dense indices instead of widely spaced raw values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CorruptStreamError, IntegrityError, ParseError


@dataclass(frozen=True, eq=False)
class PackTable:
    """Sorted list of the distinct 16-bit values occurring in a component."""

    symbols: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.symbols, dtype=np.uint16)
        if arr.ndim != 1 or arr.size < 1 or arr.size > 65536:
            raise IntegrityError(f"pack table must hold 1..65536 symbols, got {arr.size}")
        if arr.size > 1 and not (arr[1:] > arr[:-1]).all():
            raise IntegrityError("pack table symbols must be strictly increasing")
        arr.setflags(write=False)
        object.__setattr__(self, "symbols", arr)

    @property
    def count(self) -> int:
        return self.symbols.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, PackTable):
            return NotImplemented
        return bool(np.array_equal(self.symbols, other.symbols))


def build_table(component: np.ndarray) -> PackTable:
    """Table of the distinct values of ``component``, sorted ascending."""
    arr = np.asarray(component, dtype=np.uint16)
    if arr.size == 0:
        raise IntegrityError("cannot build a pack table from an empty component")
    return PackTable(np.unique(arr))


def pack(component: np.ndarray, table: PackTable) -> np.ndarray:
    """Replace each sample by its index in the table (uint16, in [0, K-1])."""
    arr = np.asarray(component, dtype=np.uint16)
    idx = np.searchsorted(table.symbols, arr)
    idx_clamped = np.minimum(idx, table.count - 1)
    if not (table.symbols[idx_clamped] == arr).all():
        raise IntegrityError("component contains values absent from the pack table")
    return idx.astype(np.uint16)


def unpack(packed: np.ndarray, table: PackTable) -> np.ndarray:
    """Inverse of :func:`pack`: replace each index by its table symbol."""
    arr = np.asarray(packed, dtype=np.uint16)
    if arr.size and int(arr.max()) >= table.count:
        raise CorruptStreamError(
            f"packed index {int(arr.max())} outside table of {table.count} symbols"
        )
    return table.symbols[arr]


def serialize_table(table: PackTable) -> bytes:
    """K as u32 LE, then per symbol the gap to its predecessor minus one as a
    LEB128 varint (the first symbol's predecessor is taken to be -1)."""
    symbols = table.symbols.astype(np.int64)
    gaps = np.diff(symbols, prepend=-1) - 1
    out = bytearray(int(table.count).to_bytes(4, "little"))
    for g in gaps.tolist():
        while g >= 0x80:
            out.append((g & 0x7F) | 0x80)
            g >>= 7
        out.append(g)
    return bytes(out)


def parse_table(data: bytes) -> PackTable:
    """Exact inverse of :func:`serialize_table`; rejects trailing bytes."""
    table, pos = read_table(data, 0)
    if pos != len(data):
        raise ParseError(f"{len(data) - pos} trailing bytes after pack table", offset=pos)
    return table


def read_table(data: bytes, pos: int) -> tuple[PackTable, int]:
    """Parse one serialized table starting at ``pos``; returns (table, end)."""
    if len(data) - pos < 4:
        raise ParseError("truncated pack table header", offset=pos)
    count = int.from_bytes(data[pos : pos + 4], "little")
    pos += 4
    if count == 0 or count > 65536:
        raise ParseError(f"pack table symbol count {count} out of range", offset=pos - 4)
    gaps = np.empty(count, dtype=np.int64)
    for i in range(count):
        value = 0
        shift = 0
        while True:
            if pos >= len(data):
                raise ParseError("truncated pack table varint", offset=pos)
            byte = data[pos]
            pos += 1
            value |= (byte & 0x7F) << shift
            if byte < 0x80:
                break
            shift += 7
            if shift > 21:
                raise ParseError("oversized pack table varint", offset=pos)
        gaps[i] = value
    symbols = np.cumsum(gaps + 1) - 1
    if symbols[-1] > 0xFFFF:
        raise ParseError("pack table symbol exceeds 16-bit range", offset=pos)
    return PackTable(symbols.astype(np.uint16)), pos
