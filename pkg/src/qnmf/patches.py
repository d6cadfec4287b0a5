"""Patch grouping for non-local self-similarity.

A patch group is a quaternion matrix whose columns are similar ``m x m``
patches, each vectorized in column-major order.  Positions are the top-left
corners ``(row, col)`` of patches.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .quaternion import _check_qmatrix


@dataclass(frozen=True)
class PatchGroupSpec:
    patch_side: int
    group_size: int
    search_window: int = 30
    stride: int = 4

    def __post_init__(self):
        if self.patch_side < 2:
            raise ValueError("patch_side must be at least 2")
        if self.group_size < 1:
            raise ValueError("group_size must be at least 1")
        if self.search_window < self.patch_side:
            raise ValueError("search_window must be at least patch_side")
        if self.stride < 1:
            raise ValueError("stride must be positive")


def all_patches(img, m: int) -> np.ndarray:
    """Every ``m x m`` patch as a column-major vector: shape ``(H-m+1, W-m+1, m*m, 4)``."""
    img = _check_qmatrix(img, "image")
    h, w = img.shape[:2]
    if h < m or w < m:
        raise ValueError(f"image {h}x{w} is smaller than the {m}x{m} patch")
    view = sliding_window_view(img, (m, m), axis=(0, 1))  # (H', W', 4, m, m)
    # (H', W', 4, col, row) -> vector index col * m + row
    return np.ascontiguousarray(view.transpose(0, 1, 4, 3, 2)).reshape(h - m + 1, w - m + 1, m * m, 4)


def reference_grid(shape, m: int, stride: int) -> np.ndarray:
    """Reference positions on a stride grid, always including the last row/column."""
    h, w = shape[:2]

    def axis(n):
        ticks = list(range(0, n - m + 1, stride))
        if ticks[-1] != n - m:
            ticks.append(n - m)
        return np.array(ticks)

    r, c = np.meshgrid(axis(h), axis(w), indexing="ij")
    return np.stack([r.ravel(), c.ravel()], axis=1)


def _window(ref: int, n_pos: int, side: int) -> tuple[int, int]:
    # Clamped inward so the window keeps its full size near borders.
    if n_pos <= side:
        return 0, n_pos
    lo = min(max(ref - side // 2, 0), n_pos - side)
    return lo, lo + side


def _match(patches: np.ndarray, ref, spec: PatchGroupSpec) -> np.ndarray:
    hp, wp = patches.shape[:2]
    r, c = int(ref[0]), int(ref[1])
    r0, r1 = _window(r, hp, spec.search_window)
    c0, c1 = _window(c, wp, spec.search_window)
    cand = patches[r0:r1, c0:c1]
    d = np.sum((cand - patches[r, c]) ** 2, axis=(-2, -1)).ravel()
    if spec.group_size > d.size:
        raise ValueError(f"search window holds {d.size} patches, fewer than group_size {spec.group_size}")
    d[(r - r0) * (c1 - c0) + (c - c0)] = -1.0
    order = np.argsort(d, kind="stable")[: spec.group_size]
    rows, cols = np.divmod(order, c1 - c0)
    return np.stack([rows + r0, cols + c0], axis=1)


def block_match(img, ref, spec: PatchGroupSpec) -> np.ndarray:
    """Positions of the ``group_size`` patches closest to the reference patch.

    The reference itself is always first; ties are broken by row-major scan
    order within the search window.
    """
    img = _check_qmatrix(img, "image")
    m = spec.patch_side
    h, w = img.shape[:2]
    if not (0 <= ref[0] <= h - m and 0 <= ref[1] <= w - m):
        raise ValueError(f"reference patch at {tuple(ref)} is not inside the image")
    return _match(all_patches(img, m), ref, spec)


def match_all(img, refs, spec: PatchGroupSpec) -> np.ndarray:
    """Block matching for many references; returns ``(len(refs), group_size, 2)``."""
    patches = all_patches(img, spec.patch_side)
    return np.stack([_match(patches, ref, spec) for ref in refs])


def extract_group(img, positions, m: int) -> np.ndarray:
    """Stack the patches at ``positions`` as columns of an ``(m*m, n)`` quaternion matrix."""
    return extract_groups(img, np.asarray(positions)[None], m)[0]


def extract_groups(img, positions, m: int, patches=None) -> np.ndarray:
    """Batched :func:`extract_group`; ``positions`` has shape ``(g, n, 2)``."""
    patches = all_patches(img, m) if patches is None else patches
    positions = np.asarray(positions)
    g = patches[positions[..., 0], positions[..., 1]]  # (g, n, m*m, 4)
    return np.swapaxes(g, -3, -2)


def _pixel_index(positions, m: int, width: int) -> np.ndarray:
    # Flat pixel index of every group entry, laid out like the group (g, m*m, n).
    k = np.arange(m * m)
    dr, dc = k % m, k // m  # column-major: row varies fastest
    rows = positions[..., 0][:, None, :] + dr[None, :, None]
    cols = positions[..., 1][:, None, :] + dc[None, :, None]
    return rows * width + cols


def aggregate_groups(groups, positions, shape, m: int | None = None, return_weights: bool = False):
    """Average overlapping patch estimates back into an image.

    ``groups`` is ``(g, m*m, n, 4)`` (or a single group), ``positions`` the
    matching ``(g, n, 2)``.  Pixels never written are zero; their weight is
    zero in the optional second return value.
    """
    groups = np.asarray(groups, dtype=float)
    positions = np.asarray(positions)
    if groups.ndim == 3:
        groups, positions = groups[None], positions[None]
    if m is None:
        m = int(round(np.sqrt(groups.shape[1])))
    if m * m != groups.shape[1]:
        raise ValueError("group rows must equal patch_side squared")
    h, w = shape[:2]
    idx = _pixel_index(positions, m, w).ravel()
    weights = np.bincount(idx, minlength=h * w).astype(float)
    acc = np.stack(
        [np.bincount(idx, weights=groups[..., c].ravel(), minlength=h * w) for c in range(4)], axis=-1
    )
    out = np.zeros((h * w, 4))
    hit = weights > 0
    out[hit] = acc[hit] / weights[hit, None]
    out = out.reshape(h, w, 4)
    if return_weights:
        return out, weights.reshape(h, w)
    return out
