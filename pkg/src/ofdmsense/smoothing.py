"""Sliding-window sub-observation extraction for coherent-source decorrelation.

A window of shape ``(sub_antennas, sub_subcarriers, sub_symbols)`` slides
over the observation cube; every placement is one snapshot column. Axes
that are not kept in the column layout use window length 1, so each of
their indices contributes a separate snapshot.

Snapshot enumeration is fixed: antenna offset outermost, then subcarrier,
then symbol offset, with offsets counted in snapshot-count strides. Column
entries follow the observation flattening order restricted to the kept
axes, in the requested kept order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

from .scenario import SmoothingConfig, SystemConfig
from .signal_model import Observation

AXIS_LABELS = ("antenna", "subcarrier", "symbol")

# Largest D*S (entries) for which the snapshot matrix is materialized whole;
# beyond this, covariance accumulation streams the windows.
MATERIALIZE_LIMIT = 1 << 23


class SmoothingError(ValueError):
    pass


def _axis_index(label: str) -> int:
    try:
        return AXIS_LABELS.index(label)
    except ValueError:
        raise SmoothingError(f"unknown axis {label!r}; expected one of {AXIS_LABELS}")


@dataclass
class SnapshotMatrix:
    """Windowed sub-observations of a cube, one snapshot per column.

    ``data`` materializes the (D x S) matrix on first access; callers that
    only need covariance should go through ``ofdmsense.subspace.covariance``,
    which streams when the matrix is large.
    """

    cube: np.ndarray                 # source cube, (L, N, M)
    kept_axes: tuple[int, ...]       # cube-axis indices in column layout order
    windows: tuple[int, int, int]    # per-axis window length (1 on pure snapshot axes)
    source_config: SystemConfig
    _data: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def kept_dims(self) -> tuple[str, ...]:
        return tuple(AXIS_LABELS[a] for a in self.kept_axes)

    @property
    def sub_sizes(self) -> tuple[int, ...]:
        return tuple(self.windows[a] for a in self.kept_axes)

    @property
    def dim(self) -> int:
        out = 1
        for a in self.kept_axes:
            out *= self.windows[a]
        return out

    @property
    def snapshot_counts(self) -> tuple[int, int, int]:
        return tuple(n - w + 1 for n, w in zip(self.cube.shape, self.windows))

    @property
    def n_snapshots(self) -> int:
        return int(np.prod(self.snapshot_counts))

    @property
    def n_entries(self) -> int:
        return self.dim * self.n_snapshots

    @property
    def fits_budget(self) -> bool:
        return self.n_entries <= MATERIALIZE_LIMIT

    def _window_view(self) -> np.ndarray:
        # shape (Sa, Sf, St, w_l, w_n, w_m), zero copy
        return np.lib.stride_tricks.sliding_window_view(self.cube, self.windows)

    @property
    def data(self) -> np.ndarray:
        if self._data is None:
            view = self._window_view()
            kept = [3 + a for a in self.kept_axes]
            rest = [3 + a for a in range(3) if a not in self.kept_axes]
            arr = view.transpose(kept + rest + [0, 1, 2])
            self._data = np.ascontiguousarray(arr).reshape(self.dim, self.n_snapshots)
        return self._data

    def iter_blocks(self, block_cols: int = 2048) -> Iterator[np.ndarray]:
        """Yield consecutive column blocks without keeping the whole matrix."""
        view = self._window_view()
        kept = [a for a in self.kept_axes]
        rest = [a for a in range(3) if a not in self.kept_axes]
        total = self.n_snapshots
        counts = self.snapshot_counts
        for start in range(0, total, block_cols):
            stop = min(start + block_cols, total)
            offs = np.unravel_index(np.arange(start, stop), counts)
            block = view[offs[0], offs[1], offs[2]]        # (b, w_l, w_n, w_m)
            block = block.transpose([0] + [1 + a for a in kept] + [1 + a for a in rest])
            yield np.ascontiguousarray(block.reshape(stop - start, self.dim)).T


def _check_window(size: int, window: int, label: str) -> None:
    if not 1 <= window <= size:
        raise SmoothingError(
            f"window {window} over the {label} axis must lie in [1, {size}]")


def smooth_3d(obs: Observation, cfg: SmoothingConfig) -> SnapshotMatrix:
    """Full 3D smoothing: window over every axis, all axes kept."""
    for label, size, window in zip(AXIS_LABELS, obs.dims, cfg.sub_dims):
        _check_window(size, window, label)
    return SnapshotMatrix(cube=obs.data, kept_axes=(0, 1, 2),
                          windows=cfg.sub_dims, source_config=obs.config)


def smooth_1d(obs: Observation, axis: str, sub_size: int) -> SnapshotMatrix:
    """Window one axis; the other two axes are used whole as snapshots."""
    ax = _axis_index(axis)
    _check_window(obs.dims[ax], sub_size, axis)
    windows = [1, 1, 1]
    windows[ax] = sub_size
    return SnapshotMatrix(cube=obs.data, kept_axes=(ax,),
                          windows=tuple(windows), source_config=obs.config)


def smooth_2d(obs: Observation, kept_axes: tuple[str, str],
              sub_sizes: tuple[int, int]) -> SnapshotMatrix:
    """Window two axes (kept in the given order); the third is pure snapshots.

    Column layout is Kronecker order with the first kept axis outermost.
    """
    ax_a, ax_b = (_axis_index(a) for a in kept_axes)
    if ax_a == ax_b:
        raise SmoothingError("kept axes must be distinct")
    windows = [1, 1, 1]
    for ax, sub, label in ((ax_a, sub_sizes[0], kept_axes[0]),
                           (ax_b, sub_sizes[1], kept_axes[1])):
        _check_window(obs.dims[ax], sub, label)
        windows[ax] = sub
    return SnapshotMatrix(cube=obs.data, kept_axes=(ax_a, ax_b),
                          windows=tuple(windows), source_config=obs.config)
