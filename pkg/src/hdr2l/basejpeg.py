"""Baseline sequential JPEG for the base layer, plus the refinement LSB plane.

The encoder emits a plain JFIF stream that third-party baseline decoders can
read: BT.601 full-range YCbCr, 4:4:4 sampling, orthonormal 8x8 DCT, quality
scaled quantization tables, the standard Huffman tables, and edge-replicated
padding.  The decoder only has to parse streams produced here, but it parses
them defensively and reports byte offsets on corruption.

The refinement plane carries the low bits of a deeper tone-mapped image when
the extra-precision mode is on: the top 8 bits travel as the JPEG, the R
least significant bits travel as a losslessly coded plane per channel, and
merging uses the decoded base so the pair behaves exactly like the plain
8-bit path followed by a correction.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ParseError
from .imagio import LdrImage
from .rescodec import code_plane, decode_plane

# Zig-zag scan: natural (row-major) index of each scan position.
ZIGZAG = np.array([
    0, 1, 8, 16, 9, 2, 3, 10, 17, 24, 32, 25, 18, 11, 4, 5,
    12, 19, 26, 33, 40, 48, 41, 34, 27, 20, 13, 6, 7, 14, 21, 28,
    35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51,
    58, 59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63,
], dtype=np.int64)
_UNZIGZAG = np.argsort(ZIGZAG)

BASE_LUMA_QUANT = np.array([
    16, 11, 10, 16, 24, 40, 51, 61,
    12, 12, 14, 19, 26, 58, 60, 55,
    14, 13, 16, 24, 40, 57, 69, 56,
    14, 17, 22, 29, 51, 87, 80, 62,
    18, 22, 37, 56, 68, 109, 103, 77,
    24, 35, 55, 64, 81, 104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101,
    72, 92, 95, 98, 112, 100, 103, 99,
], dtype=np.int64)

BASE_CHROMA_QUANT = np.array([
    17, 18, 24, 47, 99, 99, 99, 99,
    18, 21, 26, 66, 99, 99, 99, 99,
    24, 26, 56, 99, 99, 99, 99, 99,
    47, 66, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
], dtype=np.int64)

# Standard Huffman tables: (codes per length 1..16, symbol values).
DC_LUMA_BITS = (0, 1, 5, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0)
DC_LUMA_VALUES = tuple(range(12))
DC_CHROMA_BITS = (0, 3, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0)
DC_CHROMA_VALUES = tuple(range(12))

AC_LUMA_BITS = (0, 2, 1, 3, 3, 2, 4, 3, 5, 5, 4, 4, 0, 0, 1, 0x7D)
AC_LUMA_VALUES = (
    0x01, 0x02, 0x03, 0x00, 0x04, 0x11, 0x05, 0x12,
    0x21, 0x31, 0x41, 0x06, 0x13, 0x51, 0x61, 0x07,
    0x22, 0x71, 0x14, 0x32, 0x81, 0x91, 0xA1, 0x08,
    0x23, 0x42, 0xB1, 0xC1, 0x15, 0x52, 0xD1, 0xF0,
    0x24, 0x33, 0x62, 0x72, 0x82, 0x09, 0x0A, 0x16,
    0x17, 0x18, 0x19, 0x1A, 0x25, 0x26, 0x27, 0x28,
    0x29, 0x2A, 0x34, 0x35, 0x36, 0x37, 0x38, 0x39,
    0x3A, 0x43, 0x44, 0x45, 0x46, 0x47, 0x48, 0x49,
    0x4A, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58, 0x59,
    0x5A, 0x63, 0x64, 0x65, 0x66, 0x67, 0x68, 0x69,
    0x6A, 0x73, 0x74, 0x75, 0x76, 0x77, 0x78, 0x79,
    0x7A, 0x83, 0x84, 0x85, 0x86, 0x87, 0x88, 0x89,
    0x8A, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97, 0x98,
    0x99, 0x9A, 0xA2, 0xA3, 0xA4, 0xA5, 0xA6, 0xA7,
    0xA8, 0xA9, 0xAA, 0xB2, 0xB3, 0xB4, 0xB5, 0xB6,
    0xB7, 0xB8, 0xB9, 0xBA, 0xC2, 0xC3, 0xC4, 0xC5,
    0xC6, 0xC7, 0xC8, 0xC9, 0xCA, 0xD2, 0xD3, 0xD4,
    0xD5, 0xD6, 0xD7, 0xD8, 0xD9, 0xDA, 0xE1, 0xE2,
    0xE3, 0xE4, 0xE5, 0xE6, 0xE7, 0xE8, 0xE9, 0xEA,
    0xF1, 0xF2, 0xF3, 0xF4, 0xF5, 0xF6, 0xF7, 0xF8,
    0xF9, 0xFA,
)

AC_CHROMA_BITS = (0, 2, 1, 2, 4, 4, 3, 4, 7, 5, 4, 4, 0, 1, 2, 0x77)
AC_CHROMA_VALUES = (
    0x00, 0x01, 0x02, 0x03, 0x11, 0x04, 0x05, 0x21,
    0x31, 0x06, 0x12, 0x41, 0x51, 0x07, 0x61, 0x71,
    0x13, 0x22, 0x32, 0x81, 0x08, 0x14, 0x42, 0x91,
    0xA1, 0xB1, 0xC1, 0x09, 0x23, 0x33, 0x52, 0xF0,
    0x15, 0x62, 0x72, 0xD1, 0x0A, 0x16, 0x24, 0x34,
    0xE1, 0x25, 0xF1, 0x17, 0x18, 0x19, 0x1A, 0x26,
    0x27, 0x28, 0x29, 0x2A, 0x35, 0x36, 0x37, 0x38,
    0x39, 0x3A, 0x43, 0x44, 0x45, 0x46, 0x47, 0x48,
    0x49, 0x4A, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58,
    0x59, 0x5A, 0x63, 0x64, 0x65, 0x66, 0x67, 0x68,
    0x69, 0x6A, 0x73, 0x74, 0x75, 0x76, 0x77, 0x78,
    0x79, 0x7A, 0x82, 0x83, 0x84, 0x85, 0x86, 0x87,
    0x88, 0x89, 0x8A, 0x92, 0x93, 0x94, 0x95, 0x96,
    0x97, 0x98, 0x99, 0x9A, 0xA2, 0xA3, 0xA4, 0xA5,
    0xA6, 0xA7, 0xA8, 0xA9, 0xAA, 0xB2, 0xB3, 0xB4,
    0xB5, 0xB6, 0xB7, 0xB8, 0xB9, 0xBA, 0xC2, 0xC3,
    0xC4, 0xC5, 0xC6, 0xC7, 0xC8, 0xC9, 0xCA, 0xD2,
    0xD3, 0xD4, 0xD5, 0xD6, 0xD7, 0xD8, 0xD9, 0xDA,
    0xE2, 0xE3, 0xE4, 0xE5, 0xE6, 0xE7, 0xE8, 0xE9,
    0xEA, 0xF2, 0xF3, 0xF4, 0xF5, 0xF6, 0xF7, 0xF8,
    0xF9, 0xFA,
)


def _dct_matrix() -> np.ndarray:
    k = np.arange(8).reshape(8, 1)
    n = np.arange(8).reshape(1, 8)
    mat = np.cos((2 * n + 1) * k * np.pi / 16.0)
    mat[0] *= 1.0 / np.sqrt(2.0)
    return mat * 0.5


_DCT = _dct_matrix()


def forward_dct_blocks(blocks: np.ndarray) -> np.ndarray:
    """Orthonormal type-II DCT of a stack of 8x8 blocks, float64."""
    return np.einsum("ij,bjk,lk->bil", _DCT, blocks, _DCT, optimize=True)


def inverse_dct_blocks(coeffs: np.ndarray) -> np.ndarray:
    """Exact transpose pair of :func:`forward_dct_blocks`."""
    return np.einsum("ji,bjk,kl->bil", _DCT, coeffs, _DCT, optimize=True)


# Scaled-integer inverse DCT, the classic accurate baseline-decoder algorithm
# (13-bit constants, two passes).  Using it keeps decoded samples within one
# step of widespread JPEG decoders.
_CONST_BITS = 13
_PASS1_BITS = 2
_F_0_298631336 = 2446
_F_0_390180644 = 3196
_F_0_541196100 = 4433
_F_0_765366865 = 6270
_F_0_899976223 = 7373
_F_1_175875602 = 9633
_F_1_501321110 = 12299
_F_1_847759065 = 15137
_F_1_961570560 = 16069
_F_2_053119869 = 16819
_F_2_562915447 = 20995
_F_3_072711026 = 25172


def _descale(x: np.ndarray, n: int) -> np.ndarray:
    return (x + (1 << (n - 1))) >> n


def _islow_1d(c0, c1, c2, c3, c4, c5, c6, c7, shift: int):
    z1 = (c2 + c6) * _F_0_541196100
    even2 = z1 - c6 * _F_1_847759065
    even3 = z1 + c2 * _F_0_765366865
    even0 = (c0 + c4) << _CONST_BITS
    even1 = (c0 - c4) << _CONST_BITS
    t10, t13 = even0 + even3, even0 - even3
    t11, t12 = even1 + even2, even1 - even2

    o0, o1, o2, o3 = c7, c5, c3, c1
    z1 = o0 + o3
    z2 = o1 + o2
    z3 = o0 + o2
    z4 = o1 + o3
    z5 = (z3 + z4) * _F_1_175875602
    o0 = o0 * _F_0_298631336
    o1 = o1 * _F_2_053119869
    o2 = o2 * _F_3_072711026
    o3 = o3 * _F_1_501321110
    z1 = -z1 * _F_0_899976223
    z2 = -z2 * _F_2_562915447
    z3 = z5 - z3 * _F_1_961570560
    z4 = z5 - z4 * _F_0_390180644
    o0 += z1 + z3
    o1 += z2 + z4
    o2 += z2 + z3
    o3 += z1 + z4
    return (
        _descale(t10 + o3, shift), _descale(t11 + o2, shift),
        _descale(t12 + o1, shift), _descale(t13 + o0, shift),
        _descale(t13 - o0, shift), _descale(t12 - o1, shift),
        _descale(t11 - o2, shift), _descale(t10 - o3, shift),
    )


def idct_islow_blocks(coeffs: np.ndarray, qtab: np.ndarray) -> np.ndarray:
    """Dequantize and inverse transform with the scaled-integer algorithm.

    Input: (n, 8, 8) quantized coefficients, natural order.  Output: (n, 8, 8)
    int64 samples already level-shifted back to [0, 255].
    """
    d = coeffs.astype(np.int64) * qtab.astype(np.int64)
    ws = _islow_1d(*(d[:, r, :] for r in range(8)), _CONST_BITS - _PASS1_BITS)
    out = np.empty_like(d)
    for r in range(8):
        row = _islow_1d(*(ws[r][:, c] for c in range(8)), _CONST_BITS + _PASS1_BITS + 3)
        for c in range(8):
            out[:, r, c] = row[c]
    return np.clip(out + 128, 0, 255)


@dataclass(frozen=True)
class QuantTables:
    """Quality-scaled quantization tables in zig-zag order, entries in [1, 255]."""

    luma: tuple[int, ...]
    chroma: tuple[int, ...]

    def natural(self, chroma: bool) -> np.ndarray:
        zz = np.array(self.chroma if chroma else self.luma, dtype=np.int64)
        out = np.empty(64, dtype=np.int64)
        out[ZIGZAG] = zz
        return out.reshape(8, 8)


def quality_to_tables(q: int) -> QuantTables:
    """Scale the base tables by the conventional quality rule."""
    qi = int(q)
    if not 1 <= qi <= 100:
        raise ParameterError(f"quality must lie in [1, 100], got {q}")
    scale = 5000 // qi if qi < 50 else 200 - 2 * qi
    def scaled(base: np.ndarray) -> tuple[int, ...]:
        entries = np.clip((base * scale + 50) // 100, 1, 255)
        return tuple(int(v) for v in entries[ZIGZAG])
    return QuantTables(luma=scaled(BASE_LUMA_QUANT), chroma=scaled(BASE_CHROMA_QUANT))


# ---------------------------------------------------------------------------
# Color conversion (BT.601 full range, rounded)


def rgb_to_ycbcr(rgb: np.ndarray) -> np.ndarray:
    r, g, b = (rgb[i].astype(np.float64) for i in range(3))
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = -0.168736 * r - 0.331264 * g + 0.5 * b + 128.0
    cr = 0.5 * r - 0.418688 * g - 0.081312 * b + 128.0
    out = np.stack([y, cb, cr])
    return np.clip(np.rint(out), 0, 255).astype(np.int64)


def _build_ycc_tables():
    # Fixed-point (16-bit scaled) chroma contribution tables, the classic
    # baseline-decoder arithmetic; keeps this decoder bit-compatible with
    # widespread JPEG implementations.
    i = np.arange(256, dtype=np.int64) - 128
    half = 1 << 15
    crr = (91881 * i + half) >> 16            # 1.40200
    cbb = (116130 * i + half) >> 16           # 1.77200
    crg = -46802 * i                          # 0.71414
    cbg = -22554 * i + half                   # 0.34414
    return crr, cbb, crg, cbg


_CRR, _CBB, _CRG, _CBG = _build_ycc_tables()


def ycbcr_to_rgb(ycc: np.ndarray) -> np.ndarray:
    y = ycc[0].astype(np.int64)
    cb = ycc[1].astype(np.int64)
    cr = ycc[2].astype(np.int64)
    r = y + _CRR[cr]
    g = y + ((_CBG[cb] + _CRG[cr]) >> 16)
    b = y + _CBB[cb]
    return np.clip(np.stack([r, g, b]), 0, 255).astype(np.uint16)


def _to_blocks(plane: np.ndarray) -> tuple[np.ndarray, int, int]:
    """Edge-pad a plane to multiples of 8 and split into (n, 8, 8) blocks."""
    h, w = plane.shape
    ph = (-h) % 8
    pw = (-w) % 8
    padded = np.pad(plane, ((0, ph), (0, pw)), mode="edge")
    bh, bw = padded.shape[0] // 8, padded.shape[1] // 8
    blocks = padded.reshape(bh, 8, bw, 8).transpose(0, 2, 1, 3).reshape(-1, 8, 8)
    return blocks, bh, bw


def _from_blocks(blocks: np.ndarray, bh: int, bw: int, h: int, w: int) -> np.ndarray:
    full = blocks.reshape(bh, bw, 8, 8).transpose(0, 2, 1, 3).reshape(bh * 8, bw * 8)
    return full[:h, :w]


# ---------------------------------------------------------------------------
# Huffman coding


def _build_encode_table(bits, values) -> dict[int, tuple[int, int]]:
    table = {}
    code = 0
    i = 0
    for length in range(1, 17):
        for _ in range(bits[length - 1]):
            table[values[i]] = (code, length)
            code += 1
            i += 1
        code <<= 1
    return table

def _build_decode_table(bits, values) -> dict[tuple[int, int], int]:
    table = {}
    code = 0
    i = 0
    for length in range(1, 17):
        for _ in range(bits[length - 1]):
            table[(length, code)] = values[i]
            code += 1
            i += 1
        code <<= 1
    return table


_DC_ENC = (_build_encode_table(DC_LUMA_BITS, DC_LUMA_VALUES),
           _build_encode_table(DC_CHROMA_BITS, DC_CHROMA_VALUES))
_AC_ENC = (_build_encode_table(AC_LUMA_BITS, AC_LUMA_VALUES),
           _build_encode_table(AC_CHROMA_BITS, AC_CHROMA_VALUES))


class _JpegBitWriter:
    """MSB-first bit writer with 0xFF byte stuffing and one-fill padding."""

    def __init__(self):
        self._out = bytearray()
        self._acc = 0
        self._nbits = 0

    def write(self, value: int, nbits: int) -> None:
        if nbits == 0:
            return
        self._acc = (self._acc << nbits) | (value & ((1 << nbits) - 1))
        self._nbits += nbits
        while self._nbits >= 8:
            self._nbits -= 8
            byte = (self._acc >> self._nbits) & 0xFF
            self._out.append(byte)
            if byte == 0xFF:
                self._out.append(0x00)
        self._acc &= (1 << self._nbits) - 1

    def getvalue(self) -> bytes:
        if self._nbits:
            pad = 8 - self._nbits
            byte = ((self._acc << pad) | ((1 << pad) - 1)) & 0xFF
            self._out.append(byte)
            if byte == 0xFF:
                self._out.append(0x00)
            self._acc = 0
            self._nbits = 0
        return bytes(self._out)


def _magnitude_bits(value: int) -> tuple[int, int]:
    """(size, bits) of a DC/AC level: ones'-complement form for negatives."""
    if value == 0:
        return 0, 0
    size = abs(value).bit_length()
    bits = value if value > 0 else value + (1 << size) - 1
    return size, bits


def _encode_block(coeffs, pred_dc: int, table_id: int, writer: _JpegBitWriter) -> int:
    dc_table = _DC_ENC[table_id]
    ac_table = _AC_ENC[table_id]
    dc = coeffs[0]
    size, bits = _magnitude_bits(dc - pred_dc)
    code, length = dc_table[size]
    writer.write(code, length)
    if size:
        writer.write(bits, size)
    run = 0
    for k in range(1, 64):
        v = coeffs[k]
        if v == 0:
            run += 1
            continue
        while run > 15:
            code, length = ac_table[0xF0]
            writer.write(code, length)
            run -= 16
        size, bits = _magnitude_bits(v)
        code, length = ac_table[(run << 4) | size]
        writer.write(code, length)
        writer.write(bits, size)
        run = 0
    if run:
        code, length = ac_table[0x00]
        writer.write(code, length)
    return dc


def encode_base(image: LdrImage, q: int) -> bytes:
    """Encode an 8-bit image as a baseline sequential JFIF stream."""
    if image.bit_depth != 8:
        raise ParameterError(f"base layer must be 8-bit, got {image.bit_depth}-bit")
    if not (1 <= image.width <= 65535 and 1 <= image.height <= 65535):
        raise ParameterError(f"unencodable dimensions {image.width}x{image.height}")
    tables = quality_to_tables(q)
    ycc = rgb_to_ycbcr(image.samples)

    quantized = []
    bh = bw = 0
    for comp in range(3):
        blocks, bh, bw = _to_blocks(ycc[comp].astype(np.float64) - 128.0)
        coeffs = forward_dct_blocks(blocks)
        qtab = tables.natural(chroma=comp > 0)
        quantized.append(np.rint(coeffs / qtab).astype(np.int64).reshape(-1, 64)[:, ZIGZAG])

    writer = _JpegBitWriter()
    pred = [0, 0, 0]
    for block_index in range(bh * bw):
        for comp in range(3):
            coeffs = quantized[comp][block_index].tolist()
            pred[comp] = _encode_block(coeffs, pred[comp], min(comp, 1), writer)
    entropy = writer.getvalue()

    out = bytearray()
    out += b"\xFF\xD8"  # SOI
    out += _segment(0xE0, b"JFIF\x00" + bytes([1, 1, 0]) + struct.pack(">HH", 1, 1) + b"\x00\x00")
    out += _segment(0xDB, bytes([0x00]) + bytes(tables.luma) + bytes([0x01]) + bytes(tables.chroma))
    sof = struct.pack(">BHHB", 8, image.height, image.width, 3)
    for comp_id, qid in ((1, 0), (2, 1), (3, 1)):
        sof += bytes([comp_id, 0x11, qid])
    out += _segment(0xC0, sof)
    dht = b""
    for table_class, dest, bits, values in (
        (0, 0, DC_LUMA_BITS, DC_LUMA_VALUES),
        (1, 0, AC_LUMA_BITS, AC_LUMA_VALUES),
        (0, 1, DC_CHROMA_BITS, DC_CHROMA_VALUES),
        (1, 1, AC_CHROMA_BITS, AC_CHROMA_VALUES),
    ):
        dht += bytes([(table_class << 4) | dest]) + bytes(bits) + bytes(values)
    out += _segment(0xC4, dht)
    sos = bytes([3])
    for comp_id, tid in ((1, 0x00), (2, 0x11), (3, 0x11)):
        sos += bytes([comp_id, tid])
    sos += bytes([0, 63, 0])
    out += _segment(0xDA, sos)
    out += entropy
    out += b"\xFF\xD9"  # EOI
    return bytes(out)


def _segment(marker: int, payload: bytes) -> bytes:
    return bytes([0xFF, marker]) + struct.pack(">H", len(payload) + 2) + payload


# ---------------------------------------------------------------------------
# Decoder


class _JpegBitReader:
    """MSB-first reader over entropy-coded data with 0xFF00 unstuffing."""

    def __init__(self, data: bytes, pos: int):
        self._data = data
        self._pos = pos
        self._acc = 0
        self._nbits = 0

    def read1(self) -> int:
        if self._nbits == 0:
            if self._pos >= len(self._data):
                raise ParseError("entropy data exhausted", offset=self._pos)
            byte = self._data[self._pos]
            self._pos += 1
            if byte == 0xFF:
                if self._pos >= len(self._data):
                    raise ParseError("dangling 0xFF in entropy data", offset=self._pos)
                stuffed = self._data[self._pos]
                if stuffed != 0x00:
                    raise ParseError(
                        f"unexpected marker 0xFF{stuffed:02X} inside scan", offset=self._pos
                    )
                self._pos += 1
            self._acc = byte
            self._nbits = 8
        self._nbits -= 1
        return (self._acc >> self._nbits) & 1

    def read(self, nbits: int) -> int:
        value = 0
        for _ in range(nbits):
            value = (value << 1) | self.read1()
        return value

    def end_position(self) -> int:
        return self._pos


def _read_huffman(reader: _JpegBitReader, table: dict[tuple[int, int], int]) -> int:
    code = 0
    for length in range(1, 17):
        code = (code << 1) | reader.read1()
        symbol = table.get((length, code))
        if symbol is not None:
            return symbol
    raise ParseError("invalid Huffman code in scan", offset=reader.end_position())


def _extend(bits: int, size: int) -> int:
    if size == 0:
        return 0
    if bits < (1 << (size - 1)):
        return bits - (1 << size) + 1
    return bits


def decode_base(stream: bytes) -> LdrImage:
    """Decode a stream produced by :func:`encode_base`."""
    if len(stream) < 4 or stream[:2] != b"\xFF\xD8":
        raise ParseError("missing SOI marker", offset=0)
    pos = 2
    qtables: dict[int, np.ndarray] = {}
    htables: dict[tuple[int, int], dict[tuple[int, int], int]] = {}
    width = height = 0
    comp_q: list[int] = []
    scan_tables: list[tuple[int, int]] = []

    while True:
        if pos + 4 > len(stream):
            raise ParseError("truncated marker segment", offset=pos)
        if stream[pos] != 0xFF:
            raise ParseError(f"expected marker, got 0x{stream[pos]:02X}", offset=pos)
        marker = stream[pos + 1]
        length = struct.unpack_from(">H", stream, pos + 2)[0]
        payload = stream[pos + 4 : pos + 2 + length]
        if len(payload) != length - 2:
            raise ParseError("truncated segment payload", offset=pos)
        body_pos = pos + 4
        pos += 2 + length

        if marker == 0xE0:
            continue
        if marker == 0xDB:
            off = 0
            while off < len(payload):
                pq_tq = payload[off]
                if pq_tq >> 4 != 0:
                    raise ParseError("only 8-bit quantization tables supported", offset=body_pos + off)
                entries = np.frombuffer(payload, dtype=np.uint8, count=64, offset=off + 1)
                natural = np.empty(64, dtype=np.int64)
                natural[ZIGZAG] = entries
                qtables[pq_tq & 0x0F] = natural.reshape(8, 8)
                off += 65
            continue
        if marker == 0xC0:
            precision, height, width, ncomp = struct.unpack_from(">BHHB", payload, 0)
            if precision != 8 or ncomp != 3:
                raise ParseError("only 8-bit 3-component frames supported", offset=body_pos)
            for ci in range(3):
                comp_id, sampling, qid = payload[6 + 3 * ci : 9 + 3 * ci]
                if sampling != 0x11:
                    raise ParseError("only 4:4:4 sampling supported", offset=body_pos)
                comp_q.append(qid)
            continue
        if marker == 0xC4:
            off = 0
            while off < len(payload):
                tc_th = payload[off]
                bits = tuple(payload[off + 1 : off + 17])
                total = sum(bits)
                values = tuple(payload[off + 17 : off + 17 + total])
                htables[(tc_th >> 4, tc_th & 0x0F)] = _build_decode_table(bits, values)
                off += 17 + total
            continue
        if marker == 0xDA:
            ncomp = payload[0]
            if ncomp != 3:
                raise ParseError("only 3-component scans supported", offset=body_pos)
            for ci in range(3):
                tid = payload[2 + 2 * ci]
                scan_tables.append((tid >> 4, tid & 0x0F))
            scan_start = pos
            break
        raise ParseError(f"unsupported marker 0xFF{marker:02X}", offset=pos - length - 2)

    if not width or not qtables or not htables:
        raise ParseError("scan started before frame was fully described", offset=scan_start)

    bh = (height + 7) // 8
    bw = (width + 7) // 8
    reader = _JpegBitReader(stream, scan_start)
    coeff_planes = [np.zeros((bh * bw, 64), dtype=np.int64) for _ in range(3)]
    pred = [0, 0, 0]
    for block_index in range(bh * bw):
        for comp in range(3):
            dc_tbl = htables[(0, scan_tables[comp][0])]
            ac_tbl = htables[(1, scan_tables[comp][1])]
            block = coeff_planes[comp][block_index]
            size = _read_huffman(reader, dc_tbl)
            pred[comp] += _extend(reader.read(size), size)
            block[0] = pred[comp]
            k = 1
            while k < 64:
                symbol = _read_huffman(reader, ac_tbl)
                if symbol == 0x00:
                    break
                run = symbol >> 4
                size = symbol & 0x0F
                if size == 0:
                    if run != 15:
                        raise ParseError("bad AC run/size symbol", offset=reader.end_position())
                    k += 16
                    continue
                k += run
                if k > 63:
                    raise ParseError("AC coefficient index overflow", offset=reader.end_position())
                block[k] = _extend(reader.read(size), size)
                k += 1

    tail = reader.end_position()
    if stream[tail : tail + 2] != b"\xFF\xD9":
        # Allow padding bits in the final byte; the writer one-fills them.
        raise ParseError("missing EOI marker after scan", offset=tail)

    planes = []
    for comp in range(3):
        dezz = np.zeros((bh * bw, 64), dtype=np.int64)
        dezz[:, ZIGZAG] = coeff_planes[comp]
        qtab = qtables[comp_q[comp]]
        spatial = idct_islow_blocks(dezz.reshape(-1, 8, 8), qtab)
        planes.append(_from_blocks(spatial, bh, bw, height, width))
    rgb = ycbcr_to_rgb(np.stack(planes))
    return LdrImage(rgb, bit_depth=8)


# ---------------------------------------------------------------------------
# Refinement plane


@dataclass(frozen=True)
class RefinementPlane:
    """Losslessly coded plane of the R least significant sample bits."""

    refine_bits: int
    payloads: tuple[bytes, ...]
    width: int
    height: int

    def __post_init__(self):
        if self.refine_bits not in (0, 4):
            raise ParameterError(f"refinement bits must be 0 or 4, got {self.refine_bits}")
        if self.refine_bits == 0 and self.payloads:
            raise ParameterError("refinement payload must be absent when R == 0")
        if self.refine_bits and len(self.payloads) != 3:
            raise ParameterError("refinement requires one payload per channel")


def split_refinement(image: LdrImage) -> tuple[LdrImage, RefinementPlane]:
    """Split an (8+R)-bit image into its 8-bit top and a coded R-bit plane."""
    refine_bits = image.bit_depth - 8
    if refine_bits not in (0, 4):
        raise ParameterError(f"bit depth {image.bit_depth} is not 8 or 12")
    if refine_bits == 0:
        return image, RefinementPlane(0, (), image.width, image.height)
    top = LdrImage(image.samples >> refine_bits, bit_depth=8)
    mask = (1 << refine_bits) - 1
    payloads = tuple(code_plane(image.samples[c] & mask) for c in range(3))
    return top, RefinementPlane(refine_bits, payloads, image.width, image.height)


def merge_refinement(base: LdrImage, plane: RefinementPlane) -> LdrImage:
    """Recombine a decoded 8-bit base with the refinement LSBs."""
    if base.bit_depth != 8:
        raise ParameterError(f"refinement merge needs an 8-bit base, got {base.bit_depth}-bit")
    if plane.refine_bits == 0:
        return base
    if (base.width, base.height) != (plane.width, plane.height):
        raise ParameterError("refinement plane dimensions disagree with the base image")
    lsbs = np.stack(
        [decode_plane(p, plane.width, plane.height) for p in plane.payloads]
    )
    merged = (base.samples.astype(np.uint16) << plane.refine_bits) | lsbs
    return LdrImage(merged, bit_depth=8 + plane.refine_bits)
