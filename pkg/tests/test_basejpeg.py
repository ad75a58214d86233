from __future__ import annotations

import numpy as np
import pytest

from hdr2l.basejpeg import (
    BASE_CHROMA_QUANT,
    BASE_LUMA_QUANT,
    RefinementPlane,
    ZIGZAG,
    decode_base,
    encode_base,
    forward_dct_blocks,
    inverse_dct_blocks,
    merge_refinement,
    quality_to_tables,
    rgb_to_ycbcr,
    split_refinement,
    ycbcr_to_rgb,
)
from hdr2l.errors import ParameterError, ParseError
from hdr2l.imagio import LdrImage


def _dct_oracle_matrix() -> np.ndarray:
    """Direct 64x64 DCT-II operator built from the definition."""
    mat = np.zeros((64, 64))
    for u in range(8):
        for v in range(8):
            cu = 1.0 / np.sqrt(2.0) if u == 0 else 1.0
            cv = 1.0 / np.sqrt(2.0) if v == 0 else 1.0
            for x in range(8):
                for y in range(8):
                    mat[u * 8 + v, x * 8 + y] = (
                        0.25 * cu * cv
                        * np.cos((2 * x + 1) * u * np.pi / 16.0)
                        * np.cos((2 * y + 1) * v * np.pi / 16.0)
                    )
    return mat


def test_forward_dct_matches_matrix_oracle(rng):
    oracle = _dct_oracle_matrix()
    blocks = rng.uniform(-128.0, 127.0, size=(100, 8, 8))
    ours = forward_dct_blocks(blocks)
    direct = (oracle @ blocks.reshape(-1, 64).T).T.reshape(-1, 8, 8)
    assert float(np.abs(ours - direct).max()) < 1e-9


def test_dct_pair_is_isometry(rng):
    blocks = rng.uniform(-128.0, 127.0, size=(50, 8, 8))
    back = inverse_dct_blocks(forward_dct_blocks(blocks))
    assert float(np.abs(back - blocks).max()) < 1e-9
    # Parseval: coefficient energy equals sample energy.
    coeffs = forward_dct_blocks(blocks)
    assert np.allclose((coeffs**2).sum(), (blocks**2).sum(), rtol=1e-12)


def test_uniform_block_has_dc_only():
    block = np.full((1, 8, 8), 200.0 - 128.0)
    coeffs = forward_dct_blocks(block)[0]
    quantized = np.rint(coeffs / quality_to_tables(80).natural(chroma=False))
    assert quantized[0, 0] != 0
    assert (quantized.ravel()[1:] == 0).all()


# ---------------------------------------------------------------------------
# quantization tables


def test_quality_50_returns_base_tables():
    t = quality_to_tables(50)
    assert list(t.luma) == [int(v) for v in BASE_LUMA_QUANT[ZIGZAG]]
    assert list(t.chroma) == [int(v) for v in BASE_CHROMA_QUANT[ZIGZAG]]


def test_quality_100_all_ones():
    t = quality_to_tables(100)
    assert set(t.luma) == {1} and set(t.chroma) == {1}


def test_quality_80_luma_dc():
    # base DC entry 16, scale 200 - 160 = 40: floor((16*40 + 50)/100) = 6
    assert quality_to_tables(80).luma[0] == 6


def test_quality_monotone_non_increasing():
    prev = quality_to_tables(1)
    for q in range(2, 101):
        cur = quality_to_tables(q)
        assert all(c <= p for c, p in zip(cur.luma, prev.luma))
        assert all(c <= p for c, p in zip(cur.chroma, prev.chroma))
        prev = cur


def test_quality_range_errors():
    for q in (0, 101, -5):
        with pytest.raises(ParameterError):
            quality_to_tables(q)


# ---------------------------------------------------------------------------
# encode / decode


def _gradient_ldr(width: int, height: int) -> LdrImage:
    xx = np.linspace(0, 255, width)[None, :]
    yy = np.linspace(0, 255, height)[:, None]
    r = np.clip(np.rint(0.5 * (xx + yy)), 0, 255)
    g = np.clip(np.rint(xx * np.ones_like(yy)), 0, 255)
    b = np.clip(np.rint(yy * np.ones_like(xx)), 0, 255)
    return LdrImage(np.stack([r, g, b]).astype(np.uint16), bit_depth=8)


def test_encode_markers_and_stuffing():
    stream = encode_base(_gradient_ldr(24, 16), 80)
    assert stream[:2] == b"\xFF\xD8"
    assert stream[-2:] == b"\xFF\xD9"
    # within the entropy-coded data every 0xFF is followed by 0x00
    sos = stream.index(b"\xFF\xDA")
    scan_start = sos + 2 + int.from_bytes(stream[sos + 2 : sos + 4], "big")
    body = stream[scan_start:-2]
    i = 0
    while i < len(body):
        if body[i] == 0xFF:
            assert body[i + 1] == 0x00
            i += 2
        else:
            i += 1


def test_encode_decode_all_zero_image():
    img = LdrImage(np.zeros((3, 16, 16), dtype=np.uint16), bit_depth=8)
    assert decode_base(encode_base(img, 80)) == img


def test_decode_deterministic():
    stream = encode_base(_gradient_ldr(17, 9), 90)
    assert decode_base(stream) == decode_base(stream)


def test_q100_smooth_gray_gradient_error_bound():
    ramp = np.clip(np.rint(np.linspace(0, 255, 32))[None, :] * np.ones((32, 1)), 0, 255)
    img = LdrImage(np.stack([ramp, ramp, ramp]).astype(np.uint16), bit_depth=8)
    decoded = decode_base(encode_base(img, 100))
    err = np.abs(decoded.samples.astype(np.int64) - img.samples.astype(np.int64))
    assert int(err.max()) <= 2


def test_q100_smooth_color_gradient_error_regression():
    # Chroma rounding adds up to two more steps; bound measured once, frozen.
    img = _gradient_ldr(32, 32)
    decoded = decode_base(encode_base(img, 100))
    err = np.abs(decoded.samples.astype(np.int64) - img.samples.astype(np.int64))
    assert int(err.max()) <= 3


def test_encode_rejects_bad_inputs():
    with pytest.raises(ParameterError):
        encode_base(LdrImage(np.zeros((3, 2, 2), dtype=np.uint16), bit_depth=12), 80)
    with pytest.raises(ParameterError):
        encode_base(_gradient_ldr(4, 4), 0)


def test_decode_rejects_corruption():
    stream = encode_base(_gradient_ldr(16, 16), 80)
    with pytest.raises(ParseError):
        decode_base(stream[:20])
    with pytest.raises(ParseError):
        decode_base(b"\x00\x01" + stream[2:])
    with pytest.raises(ParseError) as err:
        decode_base(stream[:-10])  # chop EOI and tail
    assert err.value.offset is not None


def test_color_conversion_round_trip_is_close(rng):
    rgb = rng.integers(0, 256, size=(3, 8, 8)).astype(np.int64)
    back = ycbcr_to_rgb(rgb_to_ycbcr(rgb))
    assert int(np.abs(back.astype(np.int64) - rgb).max()) <= 2


def test_non_multiple_of_8_dimensions_round_trip():
    img = _gradient_ldr(13, 21)
    decoded = decode_base(encode_base(img, 95))
    assert (decoded.width, decoded.height) == (13, 21)
    err = np.abs(decoded.samples.astype(np.int64) - img.samples.astype(np.int64))
    assert int(err.max()) <= 12  # mild quantization error, no structural damage


# ---------------------------------------------------------------------------
# refinement plane


def test_split_refinement_identity_at_zero_bits():
    img = _gradient_ldr(8, 8)
    top, plane = split_refinement(img)
    assert top == img
    assert plane.refine_bits == 0 and plane.payloads == ()
    assert merge_refinement(top, plane) == img


def test_split_refinement_bit_example():
    samples = np.full((3, 1, 1), 0x0FF3, dtype=np.uint16)
    img = LdrImage(samples, bit_depth=12)
    top, plane = split_refinement(img)
    assert int(top.samples[0, 0, 0]) == 0xFF
    merged = merge_refinement(top, plane)
    assert int(merged.samples[0, 0, 0]) == 0x0FF3


def test_split_merge_round_trip_random_12_bit(rng):
    samples = rng.integers(0, 4096, size=(3, 16, 16)).astype(np.uint16)
    img = LdrImage(samples, bit_depth=12)
    top, plane = split_refinement(img)
    assert merge_refinement(top, plane) == img


def test_merge_uses_decoded_base():
    # Distorting the 8-bit base shifts the merged top bits but keeps the LSBs.
    samples = rng_samples = np.full((3, 2, 2), 0x0AB5, dtype=np.uint16)
    img = LdrImage(samples, bit_depth=12)
    top, plane = split_refinement(img)
    bumped = LdrImage(top.samples + 1, bit_depth=8)
    merged = merge_refinement(bumped, plane)
    assert int(merged.samples[0, 0, 0]) == ((0xAB + 1) << 4) | 0x5


def test_refinement_plane_validation():
    with pytest.raises(ParameterError):
        RefinementPlane(2, (), 4, 4)
    with pytest.raises(ParameterError):
        RefinementPlane(0, (b"x",), 4, 4)
    with pytest.raises(ParameterError):
        RefinementPlane(4, (b"x",), 4, 4)
