"""Patch lattice, the four scan directions, and wavefront index helpers.

Every recurrence in the package is defined relative to this module: a
`Direction` names the corner a scan starts from and fixes the two
predecessor offsets of each cell. Cells on a common anti-diagonal (with
respect to a given scan) are mutually independent, which is what the
wavefront helpers below exploit.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

SENTINEL_UNLABELED = -1


class Direction(Enum):
    """Scan direction, named by the corner the scan starts from.

    The enum value is the sign pair (row predecessor offset, column
    predecessor offset): TL cells depend on the cell above and the cell
    to the left, BR cells on the cell below and the cell to the right.
    """

    TL = (-1, -1)
    TR = (-1, +1)
    BL = (+1, -1)
    BR = (+1, +1)

    @property
    def offsets(self) -> tuple[tuple[int, int], tuple[int, int]]:
        di, dj = self.value
        return ((di, 0), (0, dj))

    @property
    def flips_rows(self) -> bool:
        return self.value[0] > 0

    @property
    def flips_cols(self) -> bool:
        return self.value[1] > 0


DIRECTIONS = (Direction.TL, Direction.TR, Direction.BL, Direction.BR)


def scan_order(d: Direction, height: int, width: int) -> list[tuple[int, int]]:
    """Total processing order for direction `d`: every cell appears after
    both of its predecessors. TL is plain row-major, the others mirror it."""
    if height < 1 or width < 1:
        raise ValueError(f"grid must be at least 1x1, got {height}x{width}")
    rows = range(height) if not d.flips_rows else range(height - 1, -1, -1)
    cols = list(range(width)) if not d.flips_cols else list(range(width - 1, -1, -1))
    return [(i, j) for i in rows for j in cols]


def predecessors(d: Direction, i: int, j: int, height: int, width: int) -> list[tuple[int, int]]:
    """In-bounds predecessor cells of (i, j) under direction `d`.

    Out-of-bounds predecessors are omitted; downstream they contribute
    the zero hidden state.
    """
    if not (0 <= i < height and 0 <= j < width):
        raise ValueError(f"cell ({i}, {j}) outside {height}x{width} grid")
    cells = []
    for di, dj in d.offsets:
        pi, pj = i + di, j + dj
        if 0 <= pi < height and 0 <= pj < width:
            cells.append((pi, pj))
    return cells


def flip_to_scan(d: Direction, arr: np.ndarray) -> np.ndarray:
    """Reorient an (H, W, ...) array so direction `d` becomes a TL scan.

    Involution: applying it twice restores the original orientation.
    """
    if d.flips_rows:
        arr = arr[::-1]
    if d.flips_cols:
        arr = arr[:, ::-1]
    return arr


@lru_cache(maxsize=None)
def diagonal_index(height: int, width: int) -> tuple[tuple[np.ndarray, np.ndarray], ...]:
    """Anti-diagonal wavefront (ii, jj) index arrays for a TL scan.

    Diagonal k holds the cells with i + j == k; all predecessors of a
    cell sit on diagonal k - 1.
    """
    diags = []
    for k in range(height + width - 1):
        lo = max(0, k - width + 1)
        hi = min(height - 1, k)
        ii = np.arange(lo, hi + 1)
        jj = k - ii
        ii.setflags(write=False)
        jj.setflags(write=False)
        diags.append((ii, jj))
    return tuple(diags)


@dataclass(frozen=True)
class PatchGrid:
    """H x W lattice of per-patch feature vectors for one modality.

    `labels` holds a class index in [0, num_classes) or
    SENTINEL_UNLABELED; `valid` is false exactly on unlabeled cells.
    Instances are treated as immutable after construction.
    """

    features: np.ndarray  # (H, W, D) float64
    labels: np.ndarray    # (H, W) int
    valid: np.ndarray     # (H, W) bool
    num_classes: int

    def __post_init__(self):
        f, lab, val = self.features, self.labels, self.valid
        if f.ndim != 3:
            raise ValueError(f"features must be (H, W, D), got shape {f.shape}")
        if lab.shape != f.shape[:2] or val.shape != f.shape[:2]:
            raise ValueError(
                f"labels {lab.shape} / valid {val.shape} do not match grid {f.shape[:2]}"
            )
        if self.num_classes < 2:
            raise ValueError(f"need at least 2 classes, got {self.num_classes}")
        if not np.array_equal(val, lab != SENTINEL_UNLABELED):
            raise ValueError("valid mask must be false exactly on unlabeled cells")
        if lab.max(initial=SENTINEL_UNLABELED) >= self.num_classes:
            raise ValueError("label out of range")
        if not np.isfinite(f).all():
            raise ValueError("features must be finite")

    @classmethod
    def create(cls, features: np.ndarray, labels: np.ndarray, num_classes: int) -> "PatchGrid":
        """Build a grid, deriving the validity mask from the labels."""
        features = np.ascontiguousarray(features, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.int64)
        return cls(features, labels, labels != SENTINEL_UNLABELED, num_classes)

    @property
    def height(self) -> int:
        return self.features.shape[0]

    @property
    def width(self) -> int:
        return self.features.shape[1]

    @property
    def feat_dim(self) -> int:
        return self.features.shape[2]


def check_pair(g_c: PatchGrid, g_d: PatchGrid) -> None:
    """Require two modality grids to share geometry, mask and class count."""
    if (g_c.height, g_c.width) != (g_d.height, g_d.width):
        raise ValueError(
            f"modality grids disagree on size: {g_c.height}x{g_c.width} vs {g_d.height}x{g_d.width}"
        )
    if g_c.num_classes != g_d.num_classes:
        raise ValueError("modality grids disagree on class count")
    if not np.array_equal(g_c.valid, g_d.valid):
        raise ValueError("modality grids must share the validity mask")
