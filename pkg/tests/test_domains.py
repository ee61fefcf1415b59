import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.distance import pdist

from midlab.domains import (
    DomainSpec,
    LabeledDataset,
    concat,
    dataset_from_csv,
    dataset_to_csv,
    sample_domain,
    sample_noise,
    transform_dataset,
    transform_points,
)

TWO_GAUSS = dict(means=[[-2.0, 0.0], [2.0, 0.0]], std=1.0)


def test_gaussian_class_means_within_three_sigma():
    n = 100
    data = sample_domain(DomainSpec(**TWO_GAUSS), n, seed=7)
    assert len(data) == 2 * n
    assert list(data.class_counts()) == [n, n]
    for k, mu in enumerate([(-2, 0), (2, 0)]):
        m = data.of_class(k).points.mean(axis=0)
        assert np.all(np.abs(m - mu) < 3.0 / np.sqrt(n))


def test_gaussian_sample_means_are_calibrated():
    # over many seeds the standardized class-mean errors should be ~N(0, 1)
    spec = DomainSpec(**TWO_GAUSS)
    n = 200
    z = np.array(
        [
            [(sample_domain(spec, n, s).of_class(k).points.mean(0) - mu) * np.sqrt(n)
             for k, mu in enumerate([(-2, 0), (2, 0)])]
            for s in range(200)
        ]
    ).reshape(-1)
    assert abs(z.mean()) < 4 / np.sqrt(z.size)
    assert 0.85 < z.std() < 1.15


def test_rotation_180_negates_same_seed():
    base = sample_domain(DomainSpec(**TWO_GAUSS), 50, seed=7)
    rot = sample_domain(DomainSpec(**TWO_GAUSS, rotation_degrees=180.0), 50, seed=7)
    np.testing.assert_array_equal(rot.points, -base.points)
    np.testing.assert_array_equal(rot.labels, base.labels)


def test_rotation_zero_is_no_transform():
    a = sample_domain(DomainSpec(**TWO_GAUSS), 30, seed=1)
    b = sample_domain(DomainSpec(**TWO_GAUSS, rotation_degrees=0.0), 30, seed=1)
    assert a.points.tobytes() == b.points.tobytes()


def test_same_seed_bit_identical_and_different_seed_differs():
    spec = DomainSpec(family="two_moons", noise=0.2)
    a, b = sample_domain(spec, 100, 3), sample_domain(spec, 100, 3)
    assert a.points.tobytes() == b.points.tobytes()
    c = sample_domain(spec, 100, 4)
    assert a.points.tobytes() != c.points.tobytes()


def test_different_seeds_agree_statistically():
    spec = DomainSpec(**TWO_GAUSS)
    a, b = sample_domain(spec, 500, 1), sample_domain(spec, 500, 2)
    for k in range(2):
        diff = a.of_class(k).points.mean(0) - b.of_class(k).points.mean(0)
        # difference of two means of n=500 unit-variance samples: sd = sqrt(2/500)
        assert np.all(np.abs(diff) < 4 * np.sqrt(2 / 500))


def test_degenerate_covariance_rejected():
    with pytest.raises(ValueError, match="degenerate"):
        DomainSpec(means=[[0.0, 0.0]], class_count=1, covariances=[[[1.0, 1.0], [1.0, 1.0]]])


def test_rotation_out_of_range_rejected():
    with pytest.raises(ValueError):
        DomainSpec(**TWO_GAUSS, rotation_degrees=360.0)


def test_sample_domain_needs_points():
    with pytest.raises(ValueError):
        sample_domain(DomainSpec(**TWO_GAUSS), 0, 1)


def test_ring_and_moons_shapes():
    ring = sample_domain(DomainSpec(family="ring", class_count=3, radii=[1, 2, 3], noise=0.01), 200, 0)
    for k, r in enumerate([1, 2, 3]):
        radii = np.linalg.norm(ring.of_class(k).points, axis=1)
        assert abs(radii.mean() - r) < 0.01
    moons = sample_domain(DomainSpec(family="two_moons", noise=0.0), 200, 0)
    # moons are centered so the pair's bounding box straddles the origin
    assert np.all(moons.points.min(0) < 0) and np.all(moons.points.max(0) > 0)
    with pytest.raises(ValueError):
        DomainSpec(family="two_moons", class_count=3)


def test_transform_preserves_labels_and_tag():
    data = sample_domain(DomainSpec(**TWO_GAUSS), 10, 0, "target")
    out = transform_dataset(data, 33.0, [1.0, -1.0])
    assert out.domain == "target"
    np.testing.assert_array_equal(out.labels, data.labels)


def test_rotate_360_is_identity():
    pts = np.random.default_rng(0).normal(size=(20, 2))
    np.testing.assert_allclose(transform_points(pts, 360.0), pts, atol=1e-9, rtol=0)


def test_rotate_180_twice_is_identity():
    pts = np.random.default_rng(1).normal(size=(20, 2))
    np.testing.assert_allclose(transform_points(transform_points(pts, 180.0), 180.0), pts, atol=1e-9, rtol=0)


def test_rotate_90_maps_x_axis_to_y_axis():
    np.testing.assert_allclose(transform_points(np.array([[1.0, 0.0]]), 90.0), [[0.0, 1.0]], atol=1e-12, rtol=0)


def test_rotate_then_shift_order():
    out = transform_points(np.array([[1.0, 0.0]]), 90.0, [5.0, 0.0])
    np.testing.assert_allclose(out, [[5.0, 1.0]], atol=1e-12)


def test_one_dimensional_rotation():
    pts = np.array([[1.5], [-2.0]])
    np.testing.assert_array_equal(transform_points(pts, 180.0), -pts)
    with pytest.raises(ValueError):
        transform_points(pts, 30.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(-720, 720, allow_nan=False), st.integers(0, 10_000))
def test_rotation_preserves_pairwise_distances(deg, seed):
    pts = np.random.default_rng(seed).normal(scale=3.0, size=(25, 2))
    out = transform_points(pts, deg, [0.3, -0.7])
    assert np.max(np.abs(pdist(out) - pdist(pts))) < 1e-9


def test_dataset_invariants():
    with pytest.raises(ValueError):
        LabeledDataset(np.zeros((2, 2)), [0, 2], "source", 2)
    with pytest.raises(ValueError):
        LabeledDataset(np.array([[np.nan, 0.0]]), [0], "source", 1)
    with pytest.raises(ValueError):
        LabeledDataset(np.zeros((1, 2)), [0], "elsewhere", 1)
    with pytest.raises(ValueError):
        LabeledDataset(np.zeros((0, 2)), [], "source", 1)


def test_concat_keeps_every_point():
    a = sample_domain(DomainSpec(**TWO_GAUSS), 5, 0)
    b = sample_domain(DomainSpec(**TWO_GAUSS), 7, 1, "target")
    c = concat([a, b])
    assert len(c) == 24 and c.domain == "source"


def test_csv_round_trip_nine_significant_digits():
    data = sample_domain(DomainSpec(**TWO_GAUSS), 20, 5, "target")
    text = dataset_to_csv(data)
    lines = text.splitlines()
    assert lines[0] == "x0,x1,label,domain"
    assert lines[1].endswith(",target")
    back = dataset_from_csv(text, class_count=2)
    np.testing.assert_allclose(back.points, data.points, rtol=5e-9, atol=0)
    np.testing.assert_array_equal(back.labels, data.labels)
    assert back.domain == "target"


def test_csv_rejects_bad_header():
    with pytest.raises(ValueError):
        dataset_from_csv("a,b,label,domain\n1,2,0,source\n")


def test_noise_dimension_validated():
    rng = np.random.default_rng(0)
    assert sample_noise(3, 2, rng).shape == (3, 2)
    with pytest.raises(ValueError):
        sample_noise(3, 0, rng)
