import itertools
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from geofda.errors import ValidationError
from geofda.spatial import DuplicateLocationWarning, LocationSet, bin_pairs, pairwise_distances


def test_single_point():
    D = pairwise_distances(LocationSet([[1.0, 2.0]]))
    assert D.shape == (1, 1) and D[0, 0] == 0.0


def test_three_four_five():
    D = pairwise_distances(LocationSet([[0, 0], [3, 4]]))
    assert D[0, 1] == D[1, 0] == 5.0


def test_symmetric_triangle_inequality(rng):
    D = pairwise_distances(LocationSet(rng.uniform(0, 10, (5, 2))))
    assert np.array_equal(D, D.T)
    for i, j, k in itertools.product(range(5), repeat=3):
        assert D[i, k] <= D[i, j] + D[j, k] + 1e-12


def test_collinear_bins():
    b = bin_pairs(pairwise_distances(LocationSet([[0, 0], [1, 0], [2, 0]])), m=2, max_fraction=1.0)
    assert b.counts.tolist() == [2, 1]
    assert np.allclose(b.edges, [0, 1, 2])


def test_two_points():
    b = bin_pairs(pairwise_distances(LocationSet([[0, 0], [1, 1]])), m=4, max_fraction=1.0)
    assert b.counts.sum() == 1


def test_first_bin_counts_adjacent_pairs():
    locs = LocationSet.grid(23, 23, 5.0)
    assert locs.n == 529
    b = bin_pairs(pairwise_distances(locs), m=15, max_fraction=0.5)
    pts = locs.points
    brute = sum(
        1
        for i in range(529)
        for j in range(i + 1, 529)
        if 0 < np.hypot(*(pts[i] - pts[j])) <= b.edges[1]
    )
    adjacent = 2 * 23 * 22
    assert b.counts[0] == brute == adjacent
    assert np.allclose(b.mean_distance[0], 5.0)


def test_zero_distances_excluded():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DuplicateLocationWarning)
        locs = LocationSet([[0, 0], [0, 0], [1, 0]])
    b = bin_pairs(pairwise_distances(locs), m=1, max_fraction=1.0)
    assert b.counts.tolist() == [2]
    assert b.n_excluded == 1


def test_all_coincident_rejected():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DuplicateLocationWarning)
        D = pairwise_distances(LocationSet([[1, 1], [1, 1]]))
    with pytest.raises(ValidationError):
        bin_pairs(D)


def test_duplicate_warning_and_pairs():
    with pytest.warns(DuplicateLocationWarning):
        locs = LocationSet([[0, 0], [1, 1], [0, 0]])
    assert locs.duplicate_pairs() == [(0, 2)]


def test_invalid_arguments():
    D = pairwise_distances(LocationSet([[0, 0], [1, 0]]))
    with pytest.raises(ValidationError):
        bin_pairs(D, m=0)
    with pytest.raises(ValidationError):
        bin_pairs(D, max_fraction=1.5)
    with pytest.raises(ValidationError):
        LocationSet([[np.nan, 0.0]])


@given(arrays(float, (8, 2), elements=st.floats(0, 100)), st.integers(1, 10), st.floats(0.1, 1.0))
@settings(max_examples=40, deadline=None)
def test_bins_partition_retained_pairs(pts, m, frac):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DuplicateLocationWarning)
        locs = LocationSet(pts)
    D = pairwise_distances(locs)
    if D.max() == 0:
        return
    b = bin_pairs(D, m, frac)
    assert b.counts.sum() + b.n_excluded == 28
    for j, pairs in enumerate(b.pairs):
        d = D[pairs[:, 0], pairs[:, 1]] if len(pairs) else np.zeros(0)
        assert np.all(d > b.edges[j]) and np.all(d <= b.edges[j + 1] + 1e-12)
