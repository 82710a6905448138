"""HU windowing, downsampling and slice-plan rules."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from livertumorseg.errors import EmptyTargetError, OddDimensionError
from livertumorseg.preprocess import (
    LIVER_WINDOW,
    TUMOR_WINDOWS,
    HuWindow,
    downsample_slice,
    liver_model_input,
    plan_slices,
    stack_tumor_channels,
    target_slice,
    window_and_normalize,
)
from livertumorseg.volumes import CtVolume, LabelVolume


def _labels(data):
    return LabelVolume(data=np.asarray(data, dtype=np.int64), spacing=(1, 1, 1), id="t")


def test_window_bounds_and_midpoint():
    w = HuWindow(*LIVER_WINDOW)
    vals = window_and_normalize(np.array([-250.0, -100.0, 100.0, 300.0, 900.0]), w)
    np.testing.assert_allclose(vals, [0.0, 0.0, 0.5, 1.0, 1.0])


def test_tumor_window_values_at_100_hu():
    slice_100 = np.full((2, 2), 100.0, dtype=np.float32)
    expected = [1.0, 200.0 / 300.0, 0.4]
    for window, want in zip(TUMOR_WINDOWS, expected):
        got = window_and_normalize(slice_100, HuWindow(*window))
        np.testing.assert_allclose(got, want, rtol=1e-6)


def test_invalid_window_rejected():
    with pytest.raises(ValueError):
        HuWindow(10.0, 10.0)


@given(
    st.lists(st.floats(-2000, 3000), min_size=2, max_size=30).map(np.array),
)
def test_windowing_is_monotone_and_bounded(values):
    w = HuWindow(-100.0, 400.0)
    out = window_and_normalize(values, w)
    assert np.all(out >= 0.0) and np.all(out <= 1.0)
    order = np.argsort(values, kind="stable")
    assert np.all(np.diff(out[order]) >= -1e-6)


def test_checkerboard_downsamples_to_half():
    board = np.indices((4, 4)).sum(axis=0) % 2
    out = downsample_slice(board.astype(np.float32))
    np.testing.assert_allclose(out, np.full((2, 2), 0.5))


def test_downsample_is_block_mean():
    rng = np.random.default_rng(0)
    img = rng.normal(size=(6, 8)).astype(np.float32)
    out = downsample_slice(img)
    assert out.shape == (3, 4)
    np.testing.assert_allclose(out[1, 2], img[2:4, 4:6].mean(), rtol=1e-6)


def test_downsample_rejects_odd_dimensions():
    with pytest.raises(OddDimensionError):
        downsample_slice(np.zeros((5, 4), dtype=np.float32))


def test_liver_model_input_is_single_channel_half_resolution():
    vol = CtVolume(data=np.full((4, 8, 12), 100.0), spacing=(1, 1, 1), id="v")
    x = liver_model_input(vol, 2)
    assert x.shape == (1, 4, 6)
    np.testing.assert_allclose(x, 0.5)  # 100 HU at the (-100,300) window
    with pytest.raises(IndexError):
        liver_model_input(vol, 4)


def test_tumor_channels_stack_three_windows():
    vol = CtVolume(data=np.full((2, 4, 4), 100.0), spacing=(1, 1, 1), id="v")
    x = stack_tumor_channels(vol, 0)
    assert x.shape == (3, 4, 4)
    np.testing.assert_allclose(x[0], 1.0)
    np.testing.assert_allclose(x[1], 200.0 / 300.0, rtol=1e-6)
    np.testing.assert_allclose(x[2], 0.4, rtol=1e-6)


def test_liver_plan_pads_hull_by_ten_slices():
    data = np.zeros((100, 4, 4), dtype=np.int64)
    data[30:61, 1, 1] = 1
    plan = plan_slices(_labels(data), "liver")
    assert plan.indices == tuple(range(20, 71))


def test_liver_plan_clips_at_volume_edges():
    data = np.zeros((20, 4, 4), dtype=np.int64)
    data[3:18, 1, 1] = 1
    plan = plan_slices(_labels(data), "liver")
    assert plan.indices == tuple(range(0, 20))


def test_liver_plan_spans_gaps_in_the_hull():
    data = np.zeros((60, 4, 4), dtype=np.int64)
    data[20, 1, 1] = 1
    data[40, 1, 1] = 1  # nothing between: plan still covers the hull
    plan = plan_slices(_labels(data), "liver")
    assert plan.indices == tuple(range(10, 51))


def test_tumor_plan_is_union_of_per_slice_pads():
    data = np.zeros((50, 4, 4), dtype=np.int64)
    data[0, 1, 1] = 2
    data[3, 1, 1] = 2
    plan = plan_slices(_labels(data), "tumor")
    assert plan.indices == tuple(range(0, 9))
    data2 = np.zeros((50, 4, 4), dtype=np.int64)
    data2[10, 1, 1] = 2
    data2[30, 1, 1] = 2  # far apart: two disjoint windows
    plan2 = plan_slices(_labels(data2), "tumor")
    assert plan2.indices == tuple(range(5, 16)) + tuple(range(25, 36))


def test_plans_raise_when_target_absent():
    empty = _labels(np.zeros((20, 4, 4), dtype=np.int64))
    with pytest.raises(EmptyTargetError):
        plan_slices(empty, "liver")
    liver_only = np.zeros((20, 4, 4), dtype=np.int64)
    liver_only[5:10, 1, 1] = 1
    with pytest.raises(EmptyTargetError):
        plan_slices(_labels(liver_only), "tumor")
    with pytest.raises(ValueError):
        plan_slices(_labels(liver_only), "lesion")


def test_target_slice_binarization():
    data = np.zeros((1, 2, 3), dtype=np.int64)
    data[0, 0, :] = (0, 1, 2)
    lab = _labels(data)
    np.testing.assert_array_equal(target_slice(lab, 0, "liver")[0], [0, 1, 1])
    np.testing.assert_array_equal(target_slice(lab, 0, "tumor")[0], [0, 0, 1])
    assert target_slice(lab, 0, "liver").dtype == np.uint8
