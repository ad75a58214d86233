from __future__ import annotations

import numpy as np
import pytest

from hdr2l import basejpeg, tmo
from hdr2l.container import (
    CodecParams,
    CoderMode,
    decode,
    encode,
    extract_ldr,
    measure,
)
from hdr2l.errors import FormatError, ParameterError
from hdr2l.imagio import HdrImage, luminance
from conftest import sparse_hdr_image, smooth_hdr_image


def _params(mode=CoderMode.HP, kind=tmo.TmoKind.DEFAULT, q=80, refine=0):
    return CodecParams(mode=mode, tmo=tmo.TmoParams(kind=kind), q=q, refine_bits=refine)


def test_single_black_pixel_round_trip():
    img = HdrImage(np.zeros((3, 1, 1), dtype=np.uint16))
    stream = encode(img, _params())
    assert decode(stream) == img


def test_hp_mode_rejects_refinement():
    with pytest.raises(ParameterError):
        CodecParams(mode=CoderMode.HP, tmo=tmo.TmoParams(kind=tmo.TmoKind.DEFAULT), refine_bits=4)


def test_residual_refinement_fixed_to_zero():
    with pytest.raises(ParameterError):
        CodecParams(
            mode=CoderMode.XT, tmo=tmo.TmoParams(kind=tmo.TmoKind.DEFAULT),
            residual_refine_bits=1,
        )


def test_full_grid_round_trip_small_image():
    img = sparse_hdr_image(16, 16, seed=3, levels=12)
    for kind in tmo.TmoKind:
        for q in (80, 90):
            for mode, refine in ((CoderMode.HP, 0), (CoderMode.XT, 0), (CoderMode.XT, 4)):
                stream = encode(img, _params(mode, kind, q, refine))
                assert decode(stream) == img, (kind, q, mode, refine)


def test_encode_deterministic(rng):
    img = sparse_hdr_image(32, 32, seed=9)
    params = _params(kind=tmo.TmoKind.DRAGO)
    assert encode(img, params) == encode(img, params)


def test_extract_ldr_is_jpeg_and_layer_independent():
    img = smooth_hdr_image(24, 24)
    params = _params(mode=CoderMode.XT, refine=4, q=85)
    stream = encode(img, params)
    jpeg = extract_ldr(stream)
    assert jpeg[:2] == b"\xFF\xD8"
    # byte-identical to a standalone base encode of the same tone-mapped image
    bound = tmo.bind_image_stats(params.tmo, luminance(img))
    ldr8, _ = basejpeg.split_refinement(tmo.tonemap(img, bound, 4))
    assert jpeg == basejpeg.encode_base(ldr8, 85)


def test_tampering_detected(rng):
    img = sparse_hdr_image(16, 16, seed=5)
    stream = bytearray(encode(img, _params()))
    for _ in range(12):
        pos = int(rng.integers(0, len(stream)))
        flipped = bytearray(stream)
        flipped[pos] ^= 0x40
        with pytest.raises(FormatError):
            decode(bytes(flipped))


def test_format_errors():
    img = sparse_hdr_image(8, 8)
    stream = encode(img, _params())
    with pytest.raises(FormatError):
        decode(b"XXXX" + stream[4:])
    with pytest.raises(FormatError):
        decode(stream[:10])
    version_bumped = bytearray(stream)
    version_bumped[4] = 2
    with pytest.raises(FormatError):
        decode(bytes(version_bumped))


def test_measure_sections_sum_to_total():
    img = sparse_hdr_image(20, 12, seed=7)
    for mode, refine in ((CoderMode.HP, 0), (CoderMode.XT, 4)):
        stream = encode(img, _params(mode=mode, refine=refine))
        report = measure(stream)
        assert report.total_bytes == len(stream)
        assert sum(report.sections().values()) == report.total_bytes
        assert report.pixels == 240
        if refine:
            assert report.refinement > 0


def test_measure_bpp_formula():
    img = sparse_hdr_image(10, 10)
    stream = encode(img, _params())
    report = measure(stream)
    assert report.bits_per_pixel == pytest.approx(8.0 * len(stream) / 100.0)


def test_hp_not_larger_than_xt_on_sparse_image():
    from hdr2l.bench import synthetic_corpus

    _, img = synthetic_corpus(2, size=96, seed=2)[1]  # exposure-patch scene
    hp = len(encode(img, _params(mode=CoderMode.HP)))
    xt = len(encode(img, _params(mode=CoderMode.XT)))
    assert hp < xt


def test_decoded_params_round_trip_via_stream():
    img = sparse_hdr_image(8, 8)
    stream = encode(img, _params(kind=tmo.TmoKind.REINHARD_LOCAL, q=90))
    assert decode(stream) == img
