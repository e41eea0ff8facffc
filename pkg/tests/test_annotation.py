import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fusseg import BACKGROUND, DOWNWARD, UPWARD
from fusseg.annotation import (AnnotationParams, annotate, binarize, build_ternary,
                               downsample_coverage, split_by_direction)
from fusseg.io import DirectionMasks


def test_split_by_direction_example():
    V = np.array([[0.3, -0.2], [0.0, 0.06]])
    d, u = split_by_direction(V, 0.0)
    np.testing.assert_array_equal(d, [[1, 0], [0, 1]])
    np.testing.assert_array_equal(u, [[0, 1], [0, 0]])


def test_split_all_zero():
    d, u = split_by_direction(np.zeros((4, 4)))
    assert not d.any() and not u.any()


def test_split_dead_zone():
    d, _ = split_by_direction(np.array([[0.06]]), v_eps=0.1)
    assert d[0, 0] == 0


def test_split_rejects_nan():
    with pytest.raises(ValueError):
        split_by_direction(np.array([[np.nan]]))


def test_downsample_columns_example():
    ch = np.zeros((8, 8))
    ch[:, :2] = 1
    np.testing.assert_allclose(downsample_coverage(ch, (2, 2)), [[0.5, 0.0], [0.5, 0.0]])


def test_downsample_all_ones():
    np.testing.assert_array_equal(downsample_coverage(np.ones((12, 9)), (4, 3)), np.ones((4, 3)))


def test_downsample_single_pixel_in_large_block():
    # 3038 = 62 x 49 high-res pixels per fUS pixel
    ch = np.zeros((62, 49))
    ch[10, 10] = 1
    cov = downsample_coverage(ch, (1, 1))
    assert cov[0, 0] == pytest.approx(1 / 3038)
    assert binarize(cov, 0.05)[0, 0] == 0


def test_downsample_target_larger_than_source():
    with pytest.raises(ValueError):
        downsample_coverage(np.ones((4, 4)), (8, 4))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.integers(1, 7), st.integers(1, 7), st.integers(0, 2 ** 31 - 1))
def test_downsample_preserves_mass(H, W, extra_h, extra_w, seed):
    """sum(low-res) * block area == number of high-res ones, padding included."""
    rng = np.random.default_rng(seed)
    Hs, Ws = H * 3 + extra_h % 3, W * 2 + extra_w % 2
    ch = (rng.random((Hs, Ws)) < 0.3).astype(np.uint8)
    cov = downsample_coverage(ch, (H, W))
    bh, bw = -(-Hs // H), -(-Ws // W)
    assert cov.sum() * bh * bw == pytest.approx(ch.sum(), abs=1e-9)


def test_binarize_examples():
    assert binarize(np.array([0.5]), 0.05)[0] == 1
    assert binarize(np.array([0.0003]), 0.05)[0] == 0
    assert binarize(np.array([0.05]), 0.05)[0] == 1  # inclusive boundary


def _masks(d, u):
    return DirectionMasks(np.array([[d]]), np.array([[u]]))


def test_build_ternary_cases():
    z = np.zeros((1, 1))
    assert build_ternary(_masks(1, 0), (z, z)).labels[0, 0] == DOWNWARD
    assert build_ternary(_masks(0, 0), (z, z)).labels[0, 0] == BACKGROUND
    mixed = build_ternary(_masks(1, 1), (np.array([[0.3]]), np.array([[0.6]])))
    assert mixed.labels[0, 0] == UPWARD
    tie = build_ternary(_masks(1, 1), (np.array([[0.4]]), np.array([[0.4]])))
    assert tie.labels[0, 0] == DOWNWARD
    pref = build_ternary(_masks(1, 1), (np.array([[0.3]]), np.array([[0.6]])), "prefer_downward")
    assert pref.labels[0, 0] == DOWNWARD


def test_annotate_all_zero():
    masks, labels = annotate(np.zeros((40, 40)), AnnotationParams(target_shape=(8, 8)))
    assert not labels.labels.any()
    assert masks.mixed_fraction == 0


def test_annotate_wide_vessel_footprint():
    V = np.zeros((80, 80))
    V[:, 20:40] = 0.4  # covers fUS columns 2 and 3 exactly (10x10 blocks)
    masks, labels = annotate(V, AnnotationParams(target_shape=(8, 8)))
    expected = np.zeros((8, 8), dtype=np.uint8)
    expected[:, 2:4] = 1
    np.testing.assert_array_equal(masks.downward, expected)
    np.testing.assert_array_equal(labels.labels, expected * DOWNWARD)


def test_annotate_mirror_symmetry(rng):
    V = np.zeros((60, 60))
    V[5:50, 10:16] = 0.5
    V[0:40, 33:45] = 0.2
    m1, _ = annotate(V, AnnotationParams(target_shape=(6, 6)))
    m2, _ = annotate(-V, AnnotationParams(target_shape=(6, 6)))
    np.testing.assert_array_equal(m1.downward, m2.upward)
    np.testing.assert_array_equal(m1.upward, m2.downward)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_threshold_monotonicity(seed):
    rng = np.random.default_rng(seed)
    V = rng.normal(size=(48, 48)) * (rng.random((48, 48)) < 0.1)
    prev = None
    for tau in (0.02, 0.05, 0.1, 0.3):
        m, lab = annotate(V, AnnotationParams(tau=tau, target_shape=(8, 8)))
        np.testing.assert_array_equal(lab.one_hot().sum(axis=0), 1)
        if prev is not None:
            assert np.all(m.downward <= prev.downward) and np.all(m.upward <= prev.upward)
        prev = m


def test_bilinear_and_velocity_threshold_options():
    V = np.zeros((80, 80))
    V[:, 20:40] = 0.4
    _, lab = annotate(V, AnnotationParams(target_shape=(8, 8), resize="bilinear"))
    assert (lab.labels == DOWNWARD).any()
    _, lab2 = annotate(V * 0.01, AnnotationParams(target_shape=(8, 8), threshold_on="velocity"))
    assert not lab2.labels.any()  # |v| = 0.004 below tau


def test_params_validation():
    with pytest.raises(ValueError):
        AnnotationParams(tau=0.0)
    with pytest.raises(ValueError):
        AnnotationParams(v_eps=-1)
