"""Two-layer container: base JPEG + refinement + residual, with CRC framing.

Stream layout (little-endian):

========  =====================================================
bytes     field
========  =====================================================
4         magic ``H2L1``
1         format version (1)
1         coder mode (0 = HP, 1 = XT)
1         base quality q
1         refinement bits R
1         residual refinement bits rR (always 0)
4 + 4     width, height (u32 each)
73        tone-mapping parameter block
4 + n     base JPEG length + bytes
3*(4+n)   refinement payloads (only when R > 0)
4 + n     residual block length + bytes
4         CRC-32 of all preceding bytes
========  =====================================================

The embedded JPEG is byte-identical to a standalone base-layer encode of the
same tone-mapped image, so extracting it yields an ordinary JPEG file.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from enum import IntEnum

from . import basejpeg, rescodec, tmo
from .errors import FormatError, Hdr2lError, ParameterError
from .imagio import HdrImage, luminance

MAGIC = b"H2L1"
VERSION = 1
_HEADER = struct.Struct("<4sBBBBBII")


class CoderMode(IntEnum):
    HP = 0  # histogram-packed residual, no refinement scan
    XT = 1  # plain residual, optional refinement scan


MODE_NAMES = {CoderMode.HP: "hp", CoderMode.XT: "xt"}
MODE_BY_NAME = {name: mode for mode, name in MODE_NAMES.items()}


@dataclass(frozen=True)
class CodecParams:
    """Everything the encoder needs besides the image itself."""

    mode: CoderMode
    tmo: tmo.TmoParams
    q: int = 80
    refine_bits: int = 0
    residual_refine_bits: int = 0

    def __post_init__(self):
        if not isinstance(self.mode, CoderMode):
            object.__setattr__(self, "mode", CoderMode(self.mode))
        if not 1 <= int(self.q) <= 100:
            raise ParameterError(f"quality must lie in [1, 100], got {self.q}")
        if self.refine_bits not in (0, 4):
            raise ParameterError(f"refinement bits must be 0 or 4, got {self.refine_bits}")
        if self.mode == CoderMode.HP and self.refine_bits != 0:
            raise ParameterError("the HP coder never carries a refinement scan (R must be 0)")
        if self.residual_refine_bits != 0:
            raise ParameterError("residual refinement bits are fixed to 0 in this codec")
        object.__setattr__(self, "q", int(self.q))


@dataclass(frozen=True)
class SizeReport:
    """Byte accounting of one stream; section sizes sum to the total."""

    total_bytes: int
    pixels: int
    base: int
    refinement: int
    tables: int
    residual_payload: int
    overhead: int

    @property
    def bits_per_pixel(self) -> float:
        return 8.0 * self.total_bytes / self.pixels

    def sections(self) -> dict[str, int]:
        return {
            "base": self.base,
            "refinement": self.refinement,
            "tables": self.tables,
            "residual_payload": self.residual_payload,
            "overhead": self.overhead,
        }


@dataclass(frozen=True)
class _Parsed:
    mode: CoderMode
    q: int
    refine_bits: int
    width: int
    height: int
    tmo_params: tmo.TmoParams
    base: bytes
    refinement_payloads: tuple[bytes, ...]
    residual: bytes
    total_bytes: int


def _stage(name: str, fn, *args):
    """Run one pipeline stage, tagging any codec error with the stage name."""
    try:
        return fn(*args)
    except Hdr2lError as exc:
        if exc.args and isinstance(exc.args[0], str):
            exc.args = (f"[{name}] {exc.args[0]}",) + exc.args[1:]
        raise


def encode(hdr: HdrImage, params: CodecParams) -> bytes:
    """Losslessly encode an HDR image; identical inputs give identical bytes."""
    lum = _stage("luminance", luminance, hdr)
    bound = _stage("bind-stats", tmo.bind_image_stats, params.tmo, lum)
    ldr_hr = _stage("tonemap", tmo.tonemap, hdr, bound, params.refine_bits)
    ldr8, refinement = _stage("split-refinement", basejpeg.split_refinement, ldr_hr)
    base = _stage("encode-base", basejpeg.encode_base, ldr8, params.q)
    base_dec = _stage("decode-base", basejpeg.decode_base, base)
    merged = _stage("merge-refinement", basejpeg.merge_refinement, base_dec, refinement)
    prediction = _stage("predict", tmo.predict_hdr, merged, bound)
    residual = _stage("residual", rescodec.compute_residual, hdr, prediction)
    res_bytes = _stage(
        "encode-residual", rescodec.encode_residual, residual, params.mode == CoderMode.HP
    )

    out = bytearray()
    out += _HEADER.pack(
        MAGIC, VERSION, int(params.mode), params.q, params.refine_bits, 0,
        hdr.width, hdr.height,
    )
    out += tmo.serialize_tmo_params(bound)
    out += struct.pack("<I", len(base)) + base
    for payload in refinement.payloads:
        out += struct.pack("<I", len(payload)) + payload
    out += struct.pack("<I", len(res_bytes)) + res_bytes
    out += struct.pack("<I", zlib.crc32(out))
    return bytes(out)


def _parse(data: bytes) -> _Parsed:
    if len(data) < _HEADER.size + tmo.TMO_PARAMS_SIZE + 12:
        raise FormatError(f"stream too short ({len(data)} bytes)")
    magic, version, mode_v, q, refine_bits, r_residual, width, height = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    (crc_stored,) = struct.unpack_from("<I", data, len(data) - 4)
    if zlib.crc32(data[:-4]) != crc_stored:
        raise FormatError("CRC-32 mismatch")
    try:
        mode = CoderMode(mode_v)
    except ValueError:
        raise FormatError(f"unknown coder mode {mode_v}") from None
    if refine_bits not in (0, 4) or (mode == CoderMode.HP and refine_bits != 0):
        raise FormatError(f"invalid refinement bits {refine_bits} for mode {mode.name}")
    if r_residual != 0:
        raise FormatError(f"nonzero residual refinement bits {r_residual}")

    pos = _HEADER.size
    tmo_params = tmo.parse_tmo_params(data[pos : pos + tmo.TMO_PARAMS_SIZE])
    pos += tmo.TMO_PARAMS_SIZE

    def take_block(name: str) -> bytes:
        nonlocal pos
        if len(data) - 4 - pos < 4:
            raise FormatError(f"truncated {name} length")
        (n,) = struct.unpack_from("<I", data, pos)
        pos += 4
        if len(data) - 4 - pos < n:
            raise FormatError(f"truncated {name} block")
        block = data[pos : pos + n]
        pos += n
        return block

    base = take_block("base layer")
    payloads = tuple(take_block("refinement") for _ in range(3)) if refine_bits else ()
    residual = take_block("residual")
    if pos != len(data) - 4:
        raise FormatError(f"{len(data) - 4 - pos} unaccounted bytes in stream")
    return _Parsed(
        mode=mode, q=q, refine_bits=refine_bits, width=width, height=height,
        tmo_params=tmo_params, base=base, refinement_payloads=payloads,
        residual=residual, total_bytes=len(data),
    )


def decode(data: bytes) -> HdrImage:
    """Bit-exact inverse of :func:`encode`."""
    parsed = _parse(data)
    base_dec = _stage("decode-base", basejpeg.decode_base, parsed.base)
    plane = basejpeg.RefinementPlane(
        parsed.refine_bits, parsed.refinement_payloads, parsed.width, parsed.height
    )
    merged = _stage("merge-refinement", basejpeg.merge_refinement, base_dec, plane)
    prediction = _stage("predict", tmo.predict_hdr, merged, parsed.tmo_params)
    residual = _stage(
        "decode-residual", rescodec.decode_residual, parsed.residual, parsed.width, parsed.height
    )
    return _stage("reconstruct", rescodec.apply_residual, prediction, residual)


def extract_ldr(data: bytes) -> bytes:
    """Return the embedded backward-compatible JPEG bytes unmodified."""
    return _parse(data).base


def measure(data: bytes) -> SizeReport:
    """Per-section byte breakdown and total bits per pixel of a valid stream."""
    parsed = _parse(data)
    res_sections = rescodec.split_residual_sections(parsed.residual)
    refinement = sum(len(p) for p in parsed.refinement_payloads)
    accounted = (
        len(parsed.base)
        + refinement
        + res_sections["tables"]
        + res_sections["payloads"]
    )
    return SizeReport(
        total_bytes=parsed.total_bytes,
        pixels=parsed.width * parsed.height,
        base=len(parsed.base),
        refinement=refinement,
        tables=res_sections["tables"],
        residual_payload=res_sections["payloads"],
        overhead=parsed.total_bytes - accounted,
    )
