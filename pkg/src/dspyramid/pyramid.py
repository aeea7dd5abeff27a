"""Two-level spatial pyramids over descriptor grids.

Level 0 covers the whole grid. Level 1 splits it into the four
quadrants plus one half-height by half-width centerpiece that overlaps
them, giving m = 6 regions in total. Each region is encoded as an
improved Fisher Vector and the concatenation is l2-normalized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ValidationError
from .fisher import improved_fv, l2_normalize
from .gmm import GmmModel
from .grid import DescriptorGrid, NormalizationMode, normalize
from .validation import check_count


@dataclass(frozen=True)
class Region:
    """A rectangular block of grid cells, half-open and 0-based."""

    row_start: int
    row_end: int
    col_start: int
    col_end: int

    def __post_init__(self):
        if not (0 <= self.row_start < self.row_end
                and 0 <= self.col_start < self.col_end):
            raise ValidationError(f"empty or negative region {self}")

    @property
    def n_cells(self) -> int:
        return (self.row_end - self.row_start) * (self.col_end - self.col_start)

    def contains(self, row: int, col: int) -> bool:
        return (self.row_start <= row < self.row_end
                and self.col_start <= col < self.col_end)


@dataclass(frozen=True)
class PyramidLayout:
    """The ordered regions of a pyramid built for an h x w grid.

    Region order is fixed: full grid first, then NW, NE, SW, SE
    quadrants, then the centerpiece.
    """

    h: int
    w: int
    levels: int
    regions: tuple[Region, ...]

    @property
    def m(self) -> int:
        return len(self.regions)


def build_layout(h: int, w: int, levels: int = 2) -> PyramidLayout:
    """Construct the region layout for an h x w grid.

    With two levels the quadrants split at ceil(h/2) and ceil(w/2); the
    centerpiece spans rows [floor(h/4), floor(h/4) + ceil(h/2)) and the
    analogous columns, clamped to the grid.
    """
    h = check_count(h, "h")
    w = check_count(w, "w")
    if levels not in (1, 2):
        raise ValidationError(f"levels must be 1 or 2, got {levels}")
    full = Region(0, h, 0, w)
    if levels == 1:
        return PyramidLayout(h=h, w=w, levels=1, regions=(full,))
    if h < 2 or w < 2:
        raise ValidationError(
            f"a two-level pyramid needs a grid of at least 2x2 cells, got {h}x{w}")
    r = (h + 1) // 2
    c = (w + 1) // 2
    cr = h // 4
    cc = w // 4
    regions = (
        full,
        Region(0, r, 0, c),        # NW
        Region(0, r, c, w),        # NE
        Region(r, h, 0, c),        # SW
        Region(r, h, c, w),        # SE
        Region(cr, min(cr + r, h), cc, min(cc + c, w)),  # centerpiece
    )
    return PyramidLayout(h=h, w=w, levels=2, regions=regions)


def partition(grid: DescriptorGrid, layout: PyramidLayout) -> list[np.ndarray]:
    """Per-region descriptor sets, row-major within each region."""
    if (grid.h, grid.w) != (layout.h, layout.w):
        raise ValidationError(
            f"layout built for {layout.h}x{layout.w} cannot partition a "
            f"{grid.h}x{grid.w} grid")
    sets = []
    for region in layout.regions:
        block = grid.values[region.row_start:region.row_end,
                            region.col_start:region.col_end]
        sets.append(block.reshape(-1, grid.d))
    return sets


def dsp_encode(grid: DescriptorGrid, model: GmmModel, layout: PyramidLayout,
               mode: NormalizationMode = NormalizationMode.L2_MATRIX) -> np.ndarray:
    """Full pyramid encoding of one grid.

    Normalizes the grid, encodes every region as an improved Fisher
    Vector, concatenates the blocks in layout order and l2-normalizes
    the result (length 2 * m * d * K). A region whose descriptors are
    all zero contributes a zero block.
    """
    if grid.d != model.d:
        raise ValidationError(
            f"grid dimensionality {grid.d} does not match model ({model.d})")
    normalized = normalize(grid, mode)
    block_len = 2 * model.d * model.n_components
    blocks = []
    for region_set in partition(normalized, layout):
        if not np.any(region_set):
            blocks.append(np.zeros(block_len))
        else:
            blocks.append(improved_fv(model, region_set))
    return l2_normalize(np.concatenate(blocks))
