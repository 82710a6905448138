"""Two-stage inference wiring, independent of model quality."""

import numpy as np
import pytest

from livertumorseg.cascade import (
    DEFAULT_Z_MARGIN,
    localize,
    predict_case,
    predict_liver,
    predict_tumor,
)
from livertumorseg.errors import ModelInputMismatchError
from livertumorseg.postprocess import mask_tumor_by_liver


def test_localize_expands_and_clips():
    mask = np.zeros((50, 4, 4), dtype=bool)
    mask[10:41, 1, 1] = True
    assert localize(mask, margin=2) == (8, 42)
    assert localize(mask, margin=0) == (10, 40)
    edge = np.zeros((12, 4, 4), dtype=bool)
    edge[0, 1, 1] = True
    edge[11, 2, 2] = True
    assert localize(edge, margin=3) == (0, 11)
    assert localize(np.zeros((5, 4, 4), dtype=bool)) is None
    assert DEFAULT_Z_MARGIN == 2


def test_stage_models_are_validated(phantom_volume, tiny_models):
    vol, _ = phantom_volume
    liver_model, tumor_model = tiny_models
    with pytest.raises(ModelInputMismatchError):
        predict_liver(vol, tumor_model)
    with pytest.raises(ModelInputMismatchError):
        predict_tumor(vol, (0, 3), liver_model)


def test_tumor_stage_without_liver_is_empty(phantom_volume, tiny_models):
    vol, _ = phantom_volume
    _, tumor_model = tiny_models
    out = predict_tumor(vol, None, tumor_model)
    assert out.shape == vol.shape
    assert not out.any()


def test_tumor_stage_only_touches_requested_slices(phantom_volume, tiny_models):
    vol, _ = phantom_volume
    _, tumor_model = tiny_models
    out = predict_tumor(vol, (5, 9), tumor_model)
    assert not out[:5].any() and not out[10:].any()


def test_liver_stage_batch_size_does_not_change_results(phantom_volume, tiny_models):
    vol, _ = phantom_volume
    liver_model, _ = tiny_models
    a = predict_liver(vol, liver_model, batch_size=3)
    b = predict_liver(vol, liver_model, batch_size=8)
    np.testing.assert_array_equal(a, b)


def test_predict_case_contract(phantom_volume, tiny_models, predict_and_check):
    vol, _ = phantom_volume
    liver_model, tumor_model = tiny_models
    pred = predict_and_check(vol, liver_model, tumor_model)
    assert pred.labels.shape == vol.shape
    assert pred.labels.id == vol.id
    assert pred.labels.spacing == vol.spacing
    assert set(np.unique(pred.labels.data)) <= {0, 1, 2}
    np.testing.assert_array_equal(pred.labels.data >= 1, pred.liver_mask_post | pred.tumor_mask_final)
    np.testing.assert_array_equal(pred.labels.data == 2, pred.tumor_mask_final)
    assert set(pred.timing) == {"liver", "postprocess", "tumor"}


def test_predict_case_is_deterministic(phantom_volume, tiny_models, predict_and_check):
    vol, _ = phantom_volume
    liver_model, tumor_model = tiny_models
    a = predict_and_check(vol, liver_model, tumor_model)
    b = predict_and_check(vol, liver_model, tumor_model)
    np.testing.assert_array_equal(a.labels.data, b.labels.data)


def test_localized_prediction_equals_full_sweep_after_masking(
    phantom_volume, tiny_models, predict_and_check
):
    """Restricting the tumor stage to the liver slab must not change the
    final mask: outside the slab the liver is empty, so those slices are
    masked away regardless."""
    vol, _ = phantom_volume
    liver_model, tumor_model = tiny_models
    pred = predict_and_check(vol, liver_model, tumor_model)
    full_sweep = predict_tumor(vol, (0, vol.shape[0] - 1), tumor_model)
    np.testing.assert_array_equal(
        mask_tumor_by_liver(full_sweep, pred.liver_mask_post), pred.tumor_mask_final
    )


def test_margin_zero_still_contains_tumor(phantom_volume, tiny_models):
    vol, _ = phantom_volume
    liver_model, tumor_model = tiny_models
    pred = predict_case(vol, liver_model, tumor_model, margin=0)
    assert not np.any(pred.tumor_mask_final & ~pred.liver_mask_post)
