"""Spatial pyramid layout, partitioning and full grid encoding."""

import numpy as np
import pytest

from dspyramid import (DescriptorGrid, GmmFitConfig, NormalizationMode, Region,
                       ValidationError, build_layout, dsp_encode, gmm_fit,
                       partition)


def brute_force_regions(h, w):
    """Independent region rule: explicit cell membership predicates.

    Returns, in layout order, the set of (row, col) cells of each region
    of the two-level pyramid.
    """
    r = -(-h // 2)   # ceil
    c = -(-w // 2)
    cr, cc = h // 4, w // 4
    cells = [(i, j) for i in range(h) for j in range(w)]
    full = set(cells)
    nw = {(i, j) for i, j in cells if i < r and j < c}
    ne = {(i, j) for i, j in cells if i < r and j >= c}
    sw = {(i, j) for i, j in cells if i >= r and j < c}
    se = {(i, j) for i, j in cells if i >= r and j >= c}
    center = {(i, j) for i, j in cells
              if cr <= i < cr + r and cc <= j < cc + c}
    return [full, nw, ne, sw, se, center]


def region_cells(region):
    return {(i, j)
            for i in range(region.row_start, region.row_end)
            for j in range(region.col_start, region.col_end)}


def index_grid(h, w):
    """Grid whose descriptor [0] entry encodes the cell's (row, col)."""
    vals = np.zeros((h, w, 2))
    for i in range(h):
        for j in range(w):
            vals[i, j] = [i, j]
    return DescriptorGrid(values=vals)


class TestRegion:
    def test_n_cells(self):
        assert Region(1, 4, 2, 5).n_cells == 9

    def test_contains_half_open(self):
        r = Region(1, 3, 0, 2)
        assert r.contains(1, 0) and r.contains(2, 1)
        assert not r.contains(3, 0) and not r.contains(0, 0)
        assert not r.contains(1, 2)

    def test_rejects_empty(self):
        with pytest.raises(ValidationError):
            Region(2, 2, 0, 1)


class TestBuildLayout:
    def test_seven_by_seven(self):
        """The canonical 7x7 grid: frozen expected bounds."""
        layout = build_layout(7, 7)
        assert layout.m == 6
        want = [
            Region(0, 7, 0, 7),
            Region(0, 4, 0, 4),
            Region(0, 4, 4, 7),
            Region(4, 7, 0, 4),
            Region(4, 7, 4, 7),
            Region(1, 5, 1, 5),
        ]
        assert list(layout.regions) == want

    def test_matches_membership_oracle(self):
        for h in range(2, 10):
            for w in range(2, 10):
                layout = build_layout(h, w)
                oracle = brute_force_regions(h, w)
                for region, cells in zip(layout.regions, oracle):
                    assert region_cells(region) == cells, (h, w, region)

    def test_quadrants_disjoint_union(self):
        for h in range(2, 10):
            for w in range(2, 10):
                layout = build_layout(h, w)
                quads = [region_cells(r) for r in layout.regions[1:5]]
                assert sum(len(q) for q in quads) == h * w
                union = set().union(*quads)
                assert union == region_cells(layout.regions[0])

    def test_centerpiece_size(self):
        for h in range(2, 12):
            for w in range(2, 12):
                layout = build_layout(h, w)
                want = (-(-h // 2)) * (-(-w // 2))
                assert layout.regions[5].n_cells == want

    def test_single_level(self):
        layout = build_layout(5, 3, levels=1)
        assert layout.m == 1
        assert layout.regions[0] == Region(0, 5, 0, 3)

    def test_single_level_accepts_one_by_one(self):
        assert build_layout(1, 1, levels=1).m == 1

    def test_two_level_needs_two_by_two(self):
        with pytest.raises(ValidationError):
            build_layout(1, 5, levels=2)
        with pytest.raises(ValidationError):
            build_layout(5, 1, levels=2)

    def test_rejects_bad_levels(self):
        with pytest.raises(ValidationError):
            build_layout(4, 4, levels=3)


class TestPartition:
    def test_cells_in_row_major_order(self):
        g = index_grid(5, 4)
        layout = build_layout(5, 4)
        for region, block in zip(layout.regions, partition(g, layout)):
            want = [[i, j]
                    for i in range(region.row_start, region.row_end)
                    for j in range(region.col_start, region.col_end)]
            np.testing.assert_array_equal(block, want)

    def test_sizes_match_regions(self):
        rng = np.random.default_rng(0)
        g = DescriptorGrid(values=rng.normal(size=(6, 9, 3)))
        layout = build_layout(6, 9)
        for region, block in zip(layout.regions, partition(g, layout)):
            assert block.shape == (region.n_cells, 3)

    def test_layout_mismatch(self):
        g = index_grid(4, 4)
        with pytest.raises(ValidationError):
            partition(g, build_layout(5, 4))


@pytest.fixture(scope="module")
def model():
    rng = np.random.default_rng(40)
    return gmm_fit(rng.normal(size=(300, 6)), GmmFitConfig(n_components=2,
                                                           seed=0))


class TestDspEncode:
    def test_dimensionality_and_unit_norm(self, model):
        rng = np.random.default_rng(41)
        g = DescriptorGrid(values=rng.normal(size=(7, 7, 6)))
        out = dsp_encode(g, model, build_layout(7, 7))
        assert out.shape == (2 * 6 * 2 * 6,)
        assert np.linalg.norm(out) == pytest.approx(1.0, rel=1e-12)

    def test_global_scale_invariance(self, model):
        rng = np.random.default_rng(42)
        g = DescriptorGrid(values=rng.normal(size=(5, 5, 6)))
        layout = build_layout(5, 5)
        base = dsp_encode(g, model, layout)
        for c in (0.1, 10.0):
            scaled = DescriptorGrid(values=c * g.values)
            out = dsp_encode(scaled, model, layout)
            assert np.max(np.abs(out - base)) <= 1e-9

    def test_single_level(self, model):
        rng = np.random.default_rng(43)
        g = DescriptorGrid(values=rng.normal(size=(4, 4, 6)))
        out = dsp_encode(g, model, build_layout(4, 4, levels=1))
        assert out.shape == (2 * 6 * 2,)

    def test_zero_region_contributes_zero_block(self, model):
        rng = np.random.default_rng(44)
        vals = rng.normal(size=(4, 4, 6))
        vals[0:2, 0:2] = 0.0  # NW quadrant all zero
        g = DescriptorGrid(values=vals)
        out = dsp_encode(g, model, build_layout(4, 4),
                         mode=NormalizationMode.NONE)
        block = 2 * 6 * 2
        nw = out[block:2 * block]
        assert np.all(nw == 0.0)
        assert np.any(out[:block] != 0.0)

    def test_all_zero_grid_without_normalization(self, model):
        g = DescriptorGrid(values=np.zeros((4, 4, 6)))
        out = dsp_encode(g, model, build_layout(4, 4),
                         mode=NormalizationMode.NONE)
        assert np.all(out == 0.0)

    def test_deterministic(self, model):
        rng = np.random.default_rng(45)
        g = DescriptorGrid(values=rng.normal(size=(6, 5, 6)))
        layout = build_layout(6, 5)
        a = dsp_encode(g, model, layout)
        b = dsp_encode(g, model, layout)
        assert np.array_equal(a, b)

    def test_dimension_mismatch(self, model):
        g = DescriptorGrid(values=np.zeros((4, 4, 3)))
        with pytest.raises(ValidationError):
            dsp_encode(g, model, build_layout(4, 4))
