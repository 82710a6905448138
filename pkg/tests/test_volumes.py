"""Volume types, file round trips, dataset splits and the phantom generator."""

import numpy as np
import pytest

from livertumorseg.errors import InvalidShapeError
from livertumorseg.volumes import (
    LIVER,
    TUMOR,
    CtVolume,
    DatasetSplit,
    LabelVolume,
    case_id_from_path,
    generate_phantom,
    load_labels,
    load_split,
    load_volume,
    save_labels,
    save_split,
    save_volume,
)
from oracles import flood_fill_components


def test_ct_volume_validation():
    with pytest.raises(ValueError):
        CtVolume(data=np.zeros((4, 4)), spacing=(1, 1, 1))
    with pytest.raises(ValueError):
        CtVolume(data=np.full((4, 4, 4), np.nan), spacing=(1, 1, 1))
    with pytest.raises(ValueError):
        CtVolume(data=np.zeros((4, 4, 4)), spacing=(1.0, 0.0, 1.0))
    vol = CtVolume(data=np.zeros((4, 4, 4), dtype=np.int16), spacing=(2, 1, 1))
    assert vol.data.dtype == np.float32
    assert vol.spacing == (2.0, 1.0, 1.0)


def test_label_volume_validation_and_regions():
    with pytest.raises(ValueError):
        LabelVolume(data=np.full((3, 3, 3), 3), spacing=(1, 1, 1))
    with pytest.raises(ValueError):
        LabelVolume(data=np.zeros((3, 3, 3), dtype=np.float32), spacing=(1, 1, 1))
    data = np.zeros((3, 3, 3), dtype=np.int64)
    data[0, 0, 0] = LIVER
    data[1, 1, 1] = TUMOR
    lab = LabelVolume(data=data, spacing=(1, 1, 1))
    assert lab.data.dtype == np.uint8
    assert lab.liver_region().sum() == 2  # tumor voxels lie inside the liver extent
    assert lab.tumor_region().sum() == 1


def test_volume_round_trip_through_files(tmp_path):
    vol, lab = generate_phantom(seed=5, shape=(16, 32, 32), n_tumors=1)
    vpath = tmp_path / "case.nii.gz"
    lpath = tmp_path / "case_labels.nii.gz"
    save_volume(vol, vpath)
    save_labels(lab, lpath)
    vol2 = load_volume(vpath)
    lab2 = load_labels(lpath)
    np.testing.assert_array_equal(vol2.data, vol.data)
    np.testing.assert_array_equal(lab2.data, lab.data)
    assert vol2.spacing == vol.spacing
    assert lab2.spacing == lab.spacing
    assert vol2.id == "case"
    assert lab2.id == "case_labels"


def test_case_id_from_path():
    assert case_id_from_path("/a/b/phantom_00001.nii.gz") == "phantom_00001"
    assert case_id_from_path("x.nii") == "x"


def test_split_round_trip_and_overlap_check(tmp_path):
    split = DatasetSplit(train=["a", "b"], validation=["c"], test=["d"])
    path = tmp_path / "split.json"
    save_split(split, path)
    assert load_split(path) == split
    with pytest.raises(ValueError):
        DatasetSplit(train=["a"], validation=["a"], test=[])


def test_phantom_is_deterministic_per_seed():
    v1, l1 = generate_phantom(seed=9, shape=(16, 32, 32), n_tumors=1)
    v2, l2 = generate_phantom(seed=9, shape=(16, 32, 32), n_tumors=1)
    v3, _ = generate_phantom(seed=10, shape=(16, 32, 32), n_tumors=1)
    np.testing.assert_array_equal(v1.data, v2.data)
    np.testing.assert_array_equal(l1.data, l2.data)
    assert not np.array_equal(v1.data, v3.data)
    assert v1.id == "phantom_00009"


def test_phantom_anatomy_is_plausible():
    vol, lab = generate_phantom(seed=4, shape=(24, 64, 64), n_tumors=2)
    liver = lab.data >= LIVER
    tumor = lab.data == TUMOR
    assert 50.0 <= vol.data[lab.data == LIVER].mean() <= 70.0
    assert vol.data[tumor].mean() < vol.data[lab.data == LIVER].mean()
    # requested number of distinct lesions, strictly inside the liver
    _, n = flood_fill_components(tumor, 26)
    assert n == 2
    assert not np.any(tumor & ~liver)
    # air background well outside any soft-tissue window
    assert vol.data[~liver & (vol.data < -500)].size > 0


def test_phantom_rejects_tiny_shapes():
    with pytest.raises(InvalidShapeError):
        generate_phantom(seed=0, shape=(8, 32, 32), n_tumors=1)


def test_phantom_rejects_impossible_tumor_count():
    with pytest.raises(InvalidShapeError):
        generate_phantom(seed=0, shape=(16, 16, 16), n_tumors=60)
