from __future__ import annotations

import math

import numpy as np
import pytest

from hdr2l.errors import ParameterError, ParseError
from hdr2l.imagio import HdrImage, half_decode_array, half_encode, half_encode_array, luminance
from hdr2l.tmo import (
    TMO_PARAMS_SIZE,
    TmoKind,
    TmoParams,
    bind_image_stats,
    display_luminance,
    log_average_luminance,
    parse_tmo_params,
    predict_hdr,
    serialize_tmo_params,
    tonemap,
)
from conftest import smooth_hdr_image


def _uniform_image(value: float, size: int = 4) -> HdrImage:
    code = half_encode(value)
    return HdrImage(np.full((3, size, size), code, dtype=np.uint16))


def _gray_image(lums: np.ndarray) -> HdrImage:
    codes = half_encode_array(np.stack([lums, lums, lums]))
    return HdrImage(codes)


# ---------------------------------------------------------------------------
# log-average luminance


def test_log_average_uniform_one():
    assert log_average_luminance(np.ones((4, 4))) == pytest.approx(1.0, abs=1e-5)


def test_log_average_constant_map_exact():
    v = 0.5
    res = log_average_luminance(np.full((3, 3), v))
    assert res == pytest.approx(v + 1e-6, rel=1e-9)


def test_log_average_two_pixel_geometric_mean():
    lum = np.array([[1.0, math.e**2]])
    assert log_average_luminance(lum) == pytest.approx(math.e, rel=1e-5)


def test_log_average_empty_rejected():
    with pytest.raises(ParameterError):
        log_average_luminance(np.zeros((0,)))


# ---------------------------------------------------------------------------
# parameter plumbing


def test_params_validation():
    with pytest.raises(ParameterError):
        TmoParams(kind=TmoKind.DEFAULT, key_a=0.0)
    with pytest.raises(ParameterError):
        TmoParams(kind=TmoKind.DRAGO, bias=1.5)
    with pytest.raises(ParameterError):
        TmoParams(kind=TmoKind.DEFAULT, gamma=-1.0)
    with pytest.raises(ParameterError):
        TmoParams(kind=TmoKind.REINHARD_LOCAL, local_scales=0)


def test_params_serialization_round_trip():
    params = TmoParams(
        kind=TmoKind.DRAGO, key_a=0.25, l_white=math.inf, bias=0.7,
        ldmax=80.0, local_scales=6, local_threshold=0.02,
        log_avg=0.125, l_max=512.0, gamma=2.4,
    )
    data = serialize_tmo_params(params)
    assert len(data) == TMO_PARAMS_SIZE
    assert parse_tmo_params(data) == params


def test_params_serialize_requires_bound_stats():
    with pytest.raises(ParameterError):
        serialize_tmo_params(TmoParams(kind=TmoKind.DEFAULT))


def test_parse_params_rejects_bad_kind():
    params = bind_image_stats(TmoParams(kind=TmoKind.DEFAULT), np.ones((2, 2)))
    data = bytearray(serialize_tmo_params(params))
    data[0] = 99
    with pytest.raises(ParseError):
        parse_tmo_params(bytes(data))


def test_bind_image_stats():
    img = _uniform_image(2.0)
    params = bind_image_stats(TmoParams(kind=TmoKind.DEFAULT), luminance(img))
    assert params.log_avg == pytest.approx(2.0, rel=1e-5)
    assert params.l_max == pytest.approx(2.0, rel=1e-3)


# ---------------------------------------------------------------------------
# display curves


def test_reinhard_global_curve_at_unit_scaled_luminance():
    # key * L / log_avg == 1 maps to display luminance 0.5 with burn-out off.
    params = TmoParams(kind=TmoKind.REINHARD_GLOBAL, key_a=0.18, log_avg=0.18, l_max=1.0)
    ld = display_luminance(np.array([[1.0]]), params)
    assert ld[0, 0] == pytest.approx(0.5, abs=1e-12)


def test_reinhard_global_burn_out_boosts_highlights():
    params_off = TmoParams(kind=TmoKind.REINHARD_GLOBAL, log_avg=0.18, l_max=1.0)
    params_on = TmoParams(kind=TmoKind.REINHARD_GLOBAL, l_white=2.0, log_avg=0.18, l_max=1.0)
    lum = np.array([[4.0]])
    assert display_luminance(lum, params_on) > display_luminance(lum, params_off)


def test_drago_curve_endpoints():
    params = TmoParams(kind=TmoKind.DRAGO, log_avg=1.0, l_max=100.0)
    lum = np.array([[0.0, 100.0]])
    ld = display_luminance(lum, params)
    assert ld[0, 0] == 0.0
    assert ld[0, 1] == pytest.approx(params.ldmax / 100.0, rel=1e-12)


def test_default_kind_ignores_key_override():
    # The default operator pins the photographic key at 0.18.
    base = TmoParams(kind=TmoKind.DEFAULT, log_avg=0.18, l_max=1.0)
    tweaked = TmoParams(kind=TmoKind.DEFAULT, key_a=0.5, log_avg=0.18, l_max=1.0)
    lum = np.array([[1.0]])
    assert np.array_equal(display_luminance(lum, base), display_luminance(lum, tweaked))


# ---------------------------------------------------------------------------
# tonemap


def test_tonemap_uniform_gray_default_scalar_oracle():
    value = 0.25
    img = _uniform_image(value, size=8)
    params = bind_image_stats(TmoParams(kind=TmoKind.DEFAULT), luminance(img))
    out = tonemap(img, params, 0)
    # scalar pipeline oracle
    lum = 0.2126 * value + 0.7152 * value + 0.0722 * value
    scaled = 0.18 * lum / params.log_avg
    ld = scaled / (1.0 + scaled)
    expected = int(np.clip(np.rint((1.0 * ld) ** (1.0 / 2.2) * 255.0), 0, 255))
    assert ld == pytest.approx(0.15254, abs=2e-4)
    assert (out.samples == expected).all()


def test_tonemap_zero_luminance_maps_to_zero():
    img = HdrImage(np.zeros((3, 4, 4), dtype=np.uint16))
    params = bind_image_stats(TmoParams(kind=TmoKind.DRAGO), luminance(img))
    for kind in TmoKind:
        out = tonemap(img, TmoParams(kind=kind, log_avg=params.log_avg, l_max=params.l_max), 0)
        assert (out.samples == 0).all()


def test_tonemap_output_depth_and_range(rng):
    img = _gray_image(np.exp(rng.uniform(-3, 6, size=(8, 8))))
    params = bind_image_stats(TmoParams(kind=TmoKind.REINHARD_GLOBAL), luminance(img))
    for refine in (0, 4):
        out = tonemap(img, params, refine)
        assert out.bit_depth == 8 + refine
        assert int(out.samples.max()) <= (1 << (8 + refine)) - 1


def test_tonemap_rejects_bad_refine_and_unbound_params():
    img = _uniform_image(1.0)
    params = bind_image_stats(TmoParams(kind=TmoKind.DEFAULT), luminance(img))
    with pytest.raises(ParameterError):
        tonemap(img, params, 2)
    with pytest.raises(ParameterError):
        tonemap(img, TmoParams(kind=TmoKind.DEFAULT), 0)


def test_tonemap_monotone_in_luminance_for_global_kinds():
    lums = np.sort(np.exp(np.linspace(-4, 5, 64))).reshape(1, 64)
    img = _gray_image(lums)
    stats = bind_image_stats(TmoParams(kind=TmoKind.DEFAULT), luminance(img))
    for kind in (TmoKind.DEFAULT, TmoKind.REINHARD_GLOBAL, TmoKind.DRAGO):
        params = TmoParams(kind=kind, log_avg=stats.log_avg, l_max=stats.l_max)
        out = tonemap(img, params, 0)
        for channel in out.samples:
            assert (np.diff(channel[0].astype(np.int64)) >= 0).all()


def test_tonemap_reinhard_local_runs_and_stays_in_range():
    img = smooth_hdr_image(32, 32)
    params = bind_image_stats(TmoParams(kind=TmoKind.REINHARD_LOCAL), luminance(img))
    out = tonemap(img, params, 0)
    assert out.bit_depth == 8
    assert int(out.samples.max()) <= 255


# ---------------------------------------------------------------------------
# prediction


def test_predict_hdr_zero_base_is_zero():
    from hdr2l.imagio import LdrImage

    base = LdrImage(np.zeros((3, 4, 4), dtype=np.uint16), bit_depth=8)
    params = TmoParams(kind=TmoKind.DEFAULT, log_avg=0.5, l_max=10.0)
    assert (predict_hdr(base, params).samples == 0).all()


def test_predict_hdr_deterministic(rng):
    from hdr2l.imagio import LdrImage

    base = LdrImage(rng.integers(0, 256, size=(3, 8, 8)).astype(np.uint16), bit_depth=8)
    for kind in TmoKind:
        params = TmoParams(kind=kind, log_avg=0.37, l_max=613.0)
        a = predict_hdr(base, params)
        b = predict_hdr(base, params)
        assert a == b


def test_predict_hdr_requires_bound_stats():
    from hdr2l.imagio import LdrImage

    base = LdrImage(np.zeros((3, 2, 2), dtype=np.uint16), bit_depth=8)
    with pytest.raises(ParameterError):
        predict_hdr(base, TmoParams(kind=TmoKind.DEFAULT))


def test_predict_hdr_round_trip_residual_is_small():
    # Tone map then invert: the prediction should sit within a few percent of
    # the original for a midtone image, so residual magnitudes stay small.
    img = _uniform_image(0.8, size=8)
    params = bind_image_stats(TmoParams(kind=TmoKind.DEFAULT), luminance(img))
    pred = predict_hdr(tonemap(img, params, 0), params)
    rel = np.abs(half_decode_array(pred.samples) - 0.8) / 0.8
    assert float(rel.max()) < 0.05


def test_predict_hdr_drago_inverts_its_own_curve():
    img = _gray_image(np.exp(np.linspace(-3, 5, 64)).reshape(8, 8))
    params = bind_image_stats(TmoParams(kind=TmoKind.DRAGO), luminance(img))
    pred = predict_hdr(tonemap(img, params, 0), params)
    orig = half_decode_array(img.samples)
    approx = half_decode_array(pred.samples)
    mask = orig > 1e-3
    rel = np.abs(approx[mask] - orig[mask]) / orig[mask]
    assert float(np.median(rel)) < 0.05
