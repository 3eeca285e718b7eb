import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from metamks import geometry as g
from metamks.errors import ArgumentError, GenerationStallError

binary_cells = arrays(np.uint8, st.tuples(st.integers(1, 9), st.integers(1, 9)), elements=st.integers(0, 1))


def test_field_is_deterministic():
    a = g.sample_gaussian_field(7, 48, 48, 8)
    b = g.sample_gaussian_field(7, 48, 48, 8)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, g.sample_gaussian_field(8, 48, 48, 8))


def test_field_moments_over_seeds():
    for seed in range(100):
        f = g.sample_gaussian_field(seed, 64, 64, 10)
        assert abs(f.mean()) <= 0.15
        assert 0.7 <= f.std() <= 1.3


def test_field_is_periodic_and_smooth():
    # neighbouring pixels across the wrap correlate like interior neighbours
    f = g.sample_gaussian_field(3, 48, 48, 8)
    wrap = np.corrcoef(f[0], f[-1])[0, 1]
    assert wrap > 0.8


@pytest.mark.parametrize("w,h,l", [(1, 4, 2.0), (4, 1, 2.0), (4, 4, 0.0)])
def test_field_rejects_bad_arguments(w, h, l):
    with pytest.raises(ArgumentError):
        g.sample_gaussian_field(0, w, h, l)


def test_binarize_rules():
    f = np.array([[-1.0, 0.0], [1.0, 2.0]])
    assert np.array_equal(g.binarize(f, 0.5), [[0, 0], [1, 1]])
    assert g.binarize(f, -5).all()
    assert not g.binarize(f, 5).any()
    # tie goes to solid
    assert g.binarize(f, 1.0)[1, 0] == 1


def test_boundary_connectivity_examples():
    assert g.boundary_connectivity_ok(np.ones((4, 4), np.uint8), 0.1, True)
    assert not g.boundary_connectivity_ok(np.zeros((4, 4), np.uint8), 0.1, True)
    interior = np.zeros((4, 4), np.uint8)
    interior[1:3, 1:3] = 1
    assert not g.boundary_connectivity_ok(interior, 0.1, False)


def test_periodic_connectivity_uses_wrap():
    cell = np.zeros((6, 6), np.uint8)
    cell[:, 0] = 1
    cell[:, 5] = 1
    # two columns that touch only through the periodic wrap
    assert g.count_solid_components(cell) == 1
    cell[:, 5] = 0
    cell[:, 3] = 1
    assert g.count_solid_components(cell) == 2
    assert not g.boundary_connectivity_ok(cell, 0.0, True)


def test_mirror_examples():
    assert np.array_equal(g.mirror_periodic(np.array([[1]])), np.ones((2, 2)))
    out = g.mirror_periodic(np.array([[1, 0], [0, 0]]))
    expected = [[1, 0, 0, 1], [0, 0, 0, 0], [0, 0, 0, 0], [1, 0, 0, 1]]
    assert np.array_equal(out, expected)


@given(binary_cells)
def test_mirror_quadrants_and_fraction(tile):
    h, w = tile.shape
    out = g.mirror_periodic(tile)
    assert out.shape == (2 * h, 2 * w)
    assert np.array_equal(out[:h, :w], tile)
    assert np.array_equal(out[:h, w:], tile[:, ::-1])
    assert np.array_equal(out[h:, :w], tile[::-1, :])
    assert np.array_equal(out[h:, w:], tile[::-1, ::-1])
    assert np.array_equal(out, out[::-1, :])
    assert np.array_equal(out, out[:, ::-1])
    assert g.volume_fraction(out) == g.volume_fraction(tile)


def test_volume_fraction():
    assert g.volume_fraction(np.ones((3, 5), np.uint8)) == 1.0
    assert g.volume_fraction(np.zeros((3, 5), np.uint8)) == 0.0
    assert g.volume_fraction(np.array([[1, 0], [0, 1]])) == 0.5
    with pytest.raises(ArgumentError):
        g.volume_fraction(np.array([[2, 0]]))


def test_interface_examples():
    assert not g.extract_interface(np.ones((5, 5), np.uint8)).any()
    assert not g.extract_interface(np.zeros((5, 5), np.uint8)).any()
    cell = np.zeros((5, 5), np.uint8)
    cell[2, 2] = 1
    got = {tuple(p) for p in np.argwhere(g.extract_interface(cell))}
    assert got == {(1, 2), (3, 2), (2, 1), (2, 3)}


def test_interface_wraps_periodically():
    cell = np.zeros((5, 5), np.uint8)
    cell[0, 0] = 1
    got = {tuple(p) for p in np.argwhere(g.extract_interface(cell))}
    assert got == {(4, 0), (1, 0), (0, 4), (0, 1)}


@given(binary_cells)
def test_interface_disjoint_from_solid(cell):
    m2 = g.extract_interface(cell)
    assert not (m2 & cell).any()
    # brute force: void pixel with a solid von Neumann neighbour
    h, w = cell.shape
    for i in range(h):
        for j in range(w):
            nb = [cell[(i + 1) % h, j], cell[(i - 1) % h, j], cell[i, (j + 1) % w], cell[i, (j - 1) % w]]
            assert m2[i, j] == int(cell[i, j] == 0 and any(nb))


def test_generate_dataset_contract():
    cfg = g.GenConfig()
    a = g.generate_dataset(5, 1, cfg)
    b = g.generate_dataset(5, 1, cfg)
    assert len(a) == 5
    for x, y in zip(a, b):
        assert np.array_equal(x, y)
    lo, hi = cfg.density_band
    for cell in a:
        assert cell.shape == (96, 96)
        assert g.boundary_connectivity_ok(cell, cfg.min_boundary_fraction, cfg.require_connected)
        assert lo <= g.volume_fraction(cell) <= hi


def test_generate_dataset_prefix_stable():
    # accepted cells are kept in trial order, so a longer run extends a shorter one
    short = g.generate_dataset(3, 5)
    long = g.generate_dataset(6, 5)
    for x, y in zip(short, long):
        assert np.array_equal(x, y)


def test_generate_stall():
    cfg = g.GenConfig(min_boundary_fraction=1.0, trial_budget=50, min_acceptance=0.5)
    with pytest.raises(GenerationStallError, match="min_boundary_fraction=1.0"):
        g.generate_dataset(2, 0, cfg)


def test_diversity_identical_and_complementary():
    cell = g.generate_dataset(1, 2)[0]
    rep = g.diversity_stats([cell, cell, cell], k=1, seed=0)
    assert rep.mean_pairwise_distance == 0.0
    assert rep.normalized_score == 0.0
    a = np.zeros((96, 96), np.uint8)
    rep = g.diversity_stats([a, 1 - a], k=2, seed=0)
    assert rep.mean_pairwise_distance == pytest.approx(96.0)
    assert rep.normalized_score == pytest.approx(1.0)
    assert rep.kmeans_cluster_size_cv == 0.0


def test_diversity_subsampled_matches_exact():
    rng = np.random.default_rng(0)
    cells = [rng.integers(0, 2, (8, 8)).astype(np.uint8) for _ in range(40)]
    exact = g.diversity_stats(cells, k=4, seed=1)
    sub = g.diversity_stats(cells, k=4, seed=1, max_pairs=50_000 // 100)
    brute = np.mean([np.sqrt(np.sum(cells[i] != cells[j])) for i in range(40) for j in range(i + 1, 40)])
    assert exact.mean_pairwise_distance == pytest.approx(brute, rel=1e-12)
    assert sub.mean_pairwise_distance == pytest.approx(brute, rel=0.05)
    assert exact.normalized_score == pytest.approx(exact.mean_pairwise_distance / 8)


def test_diversity_k_too_large():
    cells = [np.zeros((4, 4), np.uint8)] * 3
    with pytest.raises(ArgumentError):
        g.diversity_stats(cells, k=4)
