import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qnmf.patches import (
    PatchGroupSpec,
    aggregate_groups,
    all_patches,
    block_match,
    extract_group,
    extract_groups,
    match_all,
    reference_grid,
)


def test_spec_validation():
    with pytest.raises(ValueError):
        PatchGroupSpec(1, 5)
    with pytest.raises(ValueError):
        PatchGroupSpec(4, 0)
    with pytest.raises(ValueError):
        PatchGroupSpec(6, 5, search_window=5)
    with pytest.raises(ValueError):
        PatchGroupSpec(4, 5, stride=0)


def test_column_major_vectorization():
    img = np.zeros((3, 3, 4))
    img[..., 1] = np.arange(9).reshape(3, 3)
    g = extract_group(img, [[0, 0]], 2)
    # Column-major: (0,0), (1,0), (0,1), (1,1).
    np.testing.assert_array_equal(g[:, 0, 1], [0, 3, 1, 4])
    assert all_patches(img, 2).shape == (2, 2, 4, 4)


def test_constant_image_returns_scan_order():
    img = np.ones((12, 12, 4))
    spec = PatchGroupSpec(3, 6, search_window=5)
    pos = block_match(img, (4, 4), spec)
    # Window rows/cols 2..6; the reference is forced first, then row-major.
    expected = [(4, 4), (2, 2), (2, 3), (2, 4), (2, 5), (2, 6)]
    assert [tuple(p) for p in pos] == expected


def test_duplicate_patch_ranks_second():
    rng = np.random.default_rng(0)
    img = rng.standard_normal((20, 20, 4))
    img[9:13, 11:15] = img[3:7, 4:8]
    pos = block_match(img, (3, 4), PatchGroupSpec(4, 5, search_window=17))
    assert tuple(pos[0]) == (3, 4)
    assert tuple(pos[1]) == (9, 11)


def test_corner_reference_clamps_window():
    img = np.random.default_rng(1).standard_normal((16, 16, 4))
    spec = PatchGroupSpec(4, 20, search_window=8)
    for ref in [(0, 0), (12, 12), (0, 12)]:
        pos = block_match(img, ref, spec)
        assert tuple(pos[0]) == ref
        assert len(pos) == 20 and len({tuple(p) for p in pos}) == 20
        assert np.all(pos >= 0) and np.all(pos <= 12)


def test_block_match_errors():
    img = np.zeros((10, 10, 4))
    with pytest.raises(ValueError):
        block_match(img, (8, 0), PatchGroupSpec(4, 2, 6))
    with pytest.raises(ValueError):
        block_match(img, (0, 0), PatchGroupSpec(4, 50, 6))


def test_block_match_minimizes_distance():
    rng = np.random.default_rng(2)
    img = rng.standard_normal((14, 14, 4))
    spec = PatchGroupSpec(3, 7, search_window=14)
    ref = (5, 6)
    pos = block_match(img, ref, spec)
    p = img[5:8, 6:9]
    dist = {
        (r, c): np.sum((img[r : r + 3, c : c + 3] - p) ** 2) for r in range(12) for c in range(12) if (r, c) != ref
    }
    best = sorted(dist.values())[:6]
    got = [dist[tuple(q)] for q in pos[1:]]
    np.testing.assert_allclose(sorted(got), best)


def test_reference_grid_covers_borders():
    refs = reference_grid((13, 11), 4, 4)
    assert set(refs[:, 0]) == {0, 4, 8, 9}
    assert set(refs[:, 1]) == {0, 4, 7}


def test_round_trip_restores_pixels():
    rng = np.random.default_rng(3)
    img = rng.standard_normal((15, 13, 4))
    spec = PatchGroupSpec(4, 8, search_window=10, stride=3)
    refs = reference_grid(img.shape, 4, 3)
    pos = match_all(img, refs, spec)
    out, w = aggregate_groups(extract_groups(img, pos, 4), pos, img.shape, return_weights=True)
    assert np.all(w > 0)
    np.testing.assert_allclose(out, img, atol=1e-14)


def test_non_overlapping_placement_and_mean():
    g = np.zeros((4, 2, 4))
    g[:, 0, 1] = 10
    g[:, 1, 1] = 20
    out, w = aggregate_groups(g, [[0, 0], [2, 2]], (4, 4), return_weights=True)
    assert np.all(out[:2, :2, 1] == 10) and np.all(out[2:, 2:, 1] == 20)
    assert np.all(out[:2, 2:] == 0) and np.all(w[:2, 2:] == 0)
    out = aggregate_groups(g, [[0, 0], [0, 0]], (3, 3))
    assert np.all(out[:2, :2, 1] == 15)


def test_aggregate_rejects_bad_rows():
    with pytest.raises(ValueError):
        aggregate_groups(np.zeros((5, 1, 4)), [[0, 0]], (4, 4))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_aggregation_is_a_convex_combination(seed):
    rng = np.random.default_rng(seed)
    shape = (9, 9, 4)
    refs = reference_grid(shape, 3, 2)
    pos = match_all(rng.standard_normal(shape), refs, PatchGroupSpec(3, 4, 6, 2))
    groups = rng.uniform(-5, 5, (len(refs), 9, 4, 4))
    out, w = aggregate_groups(groups, pos, shape, return_weights=True)
    assert np.all(w > 0)
    assert out.max() <= groups.max() + 1e-12 and out.min() >= groups.min() - 1e-12
