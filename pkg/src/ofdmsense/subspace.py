"""Sample covariance, signal/noise subspace split and subspace augmentation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .smoothing import SnapshotMatrix

# Relative spectral gap below which the U-th/(U+1)-th eigenvalue split is
# flagged as swap-prone.
DEGENERATE_GAP = 1e-9

_ANNIHILATED_TOL = 1e-8


class SubspaceError(RuntimeError):
    pass


@dataclass(frozen=True)
class SubspacePair:
    """Signal and noise eigenvector bases with the full spectrum.

    ``eigenvalues`` is non-increasing; ``e_s`` spans the top ``U``
    eigenvectors. ``degenerate_split`` marks a near-degenerate spectral gap
    at the split (subspace swap risk under tiny perturbations).
    """

    e_s: np.ndarray
    e_n: np.ndarray
    eigenvalues: np.ndarray
    degenerate_split: bool = False

    @property
    def n_signals(self) -> int:
        return self.e_s.shape[1]


def _hermitize(r: np.ndarray) -> np.ndarray:
    return 0.5 * (r + r.conj().T)


def _window_sum(arr: np.ndarray, window: int, axis: int = -1) -> np.ndarray:
    """Sums over every length-``window`` run along ``axis`` (via cumsum)."""
    cs = np.cumsum(arr, axis=axis)
    lead = np.take(cs, np.arange(window - 1, arr.shape[axis]), axis=axis)
    if arr.shape[axis] == window:
        return lead
    tail = np.take(cs, np.arange(0, arr.shape[axis] - window), axis=axis)
    out = lead.copy()
    sl = [slice(None)] * arr.ndim
    sl[axis] = slice(1, None)
    out[tuple(sl)] -= tail
    return out


def _covariance_dense(data: np.ndarray) -> np.ndarray:
    d, s = data.shape
    return _hermitize(data @ data.conj().T) / s


def _covariance_streamed(snap: SnapshotMatrix) -> np.ndarray:
    acc = np.zeros((snap.dim, snap.dim), dtype=complex)
    for block in snap.iter_blocks():
        acc += block @ block.conj().T
    return _hermitize(acc) / snap.n_snapshots


def _covariance_windowed_1d(snap: SnapshotMatrix) -> np.ndarray:
    """Lag-grouped accumulation for a single windowed axis.

    Reorders the snapshot outer-product sum by lag: entry (p, p+da) is the
    windowed sum of elementwise products with shift ``da`` along the
    windowed axis, summed over the full axes.
    """
    ax = snap.kept_axes[0]
    w = snap.windows[ax]
    cube = np.moveaxis(snap.cube, ax, -1)
    flat = cube.reshape(-1, cube.shape[-1])
    n = flat.shape[1]
    s_count = n - w + 1
    r = np.zeros((w, w), dtype=complex)
    for da in range(w):
        prod = (flat[:, : n - da] * flat[:, da:].conj()).sum(axis=0)
        vals = _window_sum(prod, s_count)
        idx = np.arange(w - da)
        if da == 0:
            r[idx, idx] = vals
        else:
            r[idx, idx + da] = vals
    r = r + np.triu(r, 1).conj().T
    return _hermitize(r) / snap.n_snapshots


def _covariance_windowed_2d(snap: SnapshotMatrix) -> np.ndarray:
    """Lag-grouped accumulation for an ordered pair of windowed axes.

    For each antenna-style lag ``da`` along the first kept axis, a batched
    product ``U[a, b, c] = sum_t conj(Y[t, a, b]) Y[t, a+da, c]`` collapses
    the pure snapshot axis; windowed diagonal sums then produce every
    covariance entry whose first-axis lag is ``da``.
    """
    ax_a, ax_b = snap.kept_axes
    wa = snap.windows[ax_a]
    wb = snap.windows[ax_b]
    other = next(a for a in range(3) if a not in (ax_a, ax_b))
    y = snap.cube.transpose(other, ax_a, ax_b)
    na, nb = y.shape[1], y.shape[2]
    sa, sb = na - wa + 1, nb - wb + 1
    diag4 = np.zeros((wa, wb, wa, wb), dtype=complex)
    upper4 = np.zeros((wa, wb, wa, wb), dtype=complex)
    for da in range(wa):
        x1 = y[:, : na - da, :]
        x2 = y[:, da:, :]
        u = np.matmul(x1.transpose(1, 2, 0), x2.conj().transpose(1, 0, 2))
        dest = diag4 if da == 0 else upper4
        p_idx = np.arange(wa - da)[:, None]
        for db in range(-(wb - 1), wb):
            diag = np.diagonal(u, offset=db, axis1=1, axis2=2)  # (na-da, nb-|db|)
            v = _window_sum(diag, sb, axis=1)
            vals = _window_sum(v, sa, axis=0)                   # (wa-da, wb-|db|)
            q_idx = np.arange(wb - abs(db))[None, :] + max(0, -db)
            dest[p_idx, q_idx, p_idx + da, q_idx + db] = vals
    d = wa * wb
    upper = upper4.reshape(d, d)
    r = diag4.reshape(d, d) + upper + upper.conj().T
    return _hermitize(r) / snap.n_snapshots


def covariance(snapshots) -> np.ndarray:
    """Sample covariance ``(1/S) sum_s b_s b_s^H`` of the snapshot columns.

    Accepts a plain (D x S) array or a :class:`SnapshotMatrix`. Large
    windowed snapshot sets are accumulated without materializing the
    matrix; all paths compute the same sum (reassociated) and return an
    exactly Hermitian result.
    """
    if isinstance(snapshots, np.ndarray):
        if snapshots.ndim != 2 or snapshots.shape[1] < 1:
            raise SubspaceError("snapshot array must be (D, S) with S >= 1")
        return _covariance_dense(snapshots)
    snap: SnapshotMatrix = snapshots
    if snap.fits_budget:
        return _covariance_dense(snap.data)
    if len(snap.kept_axes) == 1:
        return _covariance_windowed_1d(snap)
    if len(snap.kept_axes) == 2:
        return _covariance_windowed_2d(snap)
    return _covariance_streamed(snap)


def eig_split(r: np.ndarray, n_signals: int) -> SubspacePair:
    """Partition the covariance eigenbasis into signal and noise subspaces."""
    d = r.shape[0]
    if not 1 <= n_signals < d:
        raise SubspaceError(f"need 1 <= U < D, got U={n_signals}, D={d}")
    try:
        w, v = np.linalg.eigh(r)
    except np.linalg.LinAlgError as exc:
        raise SubspaceError(f"eigendecomposition failed: {exc}") from exc
    w = w[::-1].copy()
    v = v[:, ::-1].copy()
    trace = float(np.trace(r).real)
    if trace > 0:
        tiny = (w < 0) & (w >= -1e-12 * trace)
        w[tiny] = 0.0
    scale = max(abs(w[0]), np.finfo(float).tiny)
    degenerate = (w[n_signals - 1] - w[n_signals]) <= DEGENERATE_GAP * scale
    return SubspacePair(e_s=v[:, :n_signals], e_n=v[:, n_signals:],
                        eigenvalues=w, degenerate_split=degenerate)


def augment_noise_subspace(e_n: np.ndarray, a_est: np.ndarray) -> np.ndarray:
    """Append the normalized out-of-subspace part of an estimated steering.

    Raises ``SubspaceError`` when the steering already lies in the span of
    ``e_n`` (projection residual below tolerance), which signals a
    duplicate or failed estimate.
    """
    a_est = np.asarray(a_est, dtype=complex).reshape(-1)
    if e_n.shape[1] == 0:
        v = a_est.copy()
    else:
        v = a_est - e_n @ (e_n.conj().T @ a_est)
        v -= e_n @ (e_n.conj().T @ v)  # second pass keeps orthonormality tight
    norm = np.linalg.norm(v)
    if norm < _ANNIHILATED_TOL * np.linalg.norm(a_est):
        raise SubspaceError("estimated steering already annihilated by the subspace")
    return np.hstack([e_n, (v / norm)[:, None]])
