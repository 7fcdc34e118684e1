"""End-to-end estimators: the parallel-slice subspace pipeline, a 3D-DFT
baseline and an exhaustive grid-search oracle for verification.

The main estimator runs the 1D initialization, refines on the three 2D
slices (azimuth/velocity, azimuth/range, range/velocity) and re-associates
the slice pairs into parameter triples by a minimum-distance rule, with
each final value the mean of its two slice estimates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from .init1d import InitError, phase_to_param, principal_phase, run_init3d
from .music2d import LmSettings, Pair2DEstimates, run_isu2dmusic
from .scenario import SmoothingConfig
from .signal_model import Observation
from .smoothing import smooth_3d
from .subspace import covariance, eig_split

_TIE_ABS = 1e-12
_GRID_POINT_GUARD = 10_000_000
_DFT_PAD = 4


class PipelineError(RuntimeError):
    pass


@dataclass
class EstimateSet:
    """Final per-target triples with association provenance.

    ``provenance[i]`` records which index of each slice sequence produced
    target ``i``. ``diagnostics`` carries per-slice detail (content depends
    on the estimator).
    """

    estimates: tuple[tuple[float, float, float], ...]
    provenance: tuple[tuple[int, int, int], ...]
    diagnostics: dict = field(default_factory=dict)
    ambiguous: bool = False

    @property
    def n_targets(self) -> int:
        return len(self.estimates)

    def as_array(self) -> np.ndarray:
        return np.array(self.estimates, dtype=float)


def _argmin_unused(costs: np.ndarray, used: set) -> tuple[int, bool]:
    """Smallest-cost unused index; flags ties within the absolute tolerance."""
    order = np.argsort(costs, kind="stable")
    free = [int(j) for j in order if int(j) not in used]
    if not free:
        raise PipelineError("no unused slice index left to match")
    best = free[0]
    tie = any(abs(costs[j] - costs[best]) <= _TIE_ABS for j in free[1:])
    return best, tie


def rematch(pairs_tv: Pair2DEstimates, pairs_tr: Pair2DEstimates,
            pairs_rv: Pair2DEstimates) -> EstimateSet:
    """Associate the three slice sequences into parameter triples.

    For the i-th (azimuth, velocity) pair: the (azimuth, range) entry with
    the nearest azimuth gives the range, then the (range, velocity) entry
    nearest in combined range/velocity distance completes the triple. Each
    final parameter averages its two slice estimates; when only one of the
    two was produced by a converged descent, that one is used alone. Index
    reuse is prevented; distance ties fall back to the smallest index and
    set the ambiguity flag.
    """
    u = len(pairs_tv.pairs)
    if not (len(pairs_tr.pairs) == len(pairs_rv.pairs) == u):
        raise PipelineError("slice estimate counts differ")
    tv = np.array(pairs_tv.pairs, dtype=float)
    tr = np.array(pairs_tr.pairs, dtype=float)
    rv = np.array(pairs_rv.pairs, dtype=float)
    conv_tv = [d.converged for d in pairs_tv.diagnostics]
    conv_tr = [d.converged for d in pairs_tr.diagnostics]
    conv_rv = [d.converged for d in pairs_rv.diagnostics]

    def fuse(a: float, a_ok: bool, b: float, b_ok: bool) -> float:
        if a_ok and not b_ok:
            return a
        if b_ok and not a_ok:
            return b
        return 0.5 * (a + b)

    estimates = []
    provenance = []
    ambiguous = False
    used_tr: set = set()
    used_rv: set = set()
    for i in range(u):
        theta_i, v_i = tv[i]
        j, tie_j = _argmin_unused(np.abs(theta_i - tr[:, 0]), used_tr)
        used_tr.add(j)
        k, tie_k = _argmin_unused(np.abs(tr[j, 1] - rv[:, 0]) + np.abs(v_i - rv[:, 1]),
                                  used_rv)
        used_rv.add(k)
        ambiguous = ambiguous or tie_j or tie_k
        theta = fuse(theta_i, conv_tv[i], tr[j, 0], conv_tr[j])
        rng = fuse(tr[j, 1], conv_tr[j], rv[k, 0], conv_rv[k])
        vel = fuse(v_i, conv_tv[i], rv[k, 1], conv_rv[k])
        estimates.append((theta, rng, vel))
        provenance.append((i, int(j), int(k)))
    return EstimateSet(estimates=tuple(estimates), provenance=tuple(provenance),
                       ambiguous=ambiguous,
                       diagnostics={"tv": pairs_tv, "tr": pairs_tr, "rv": pairs_rv})


def run_pi2dmusic(obs: Observation, n_targets: int, smoothing: SmoothingConfig,
                  lm_settings: Optional[LmSettings] = None,
                  use_subspace_update: bool = True) -> EstimateSet:
    """Full pipeline: initialization, three 2D slices, re-association."""
    init = run_init3d(obs, n_targets, smoothing)
    slices = {}
    for dims in (("azimuth", "velocity"), ("azimuth", "range"), ("range", "velocity")):
        try:
            slices[dims] = run_isu2dmusic(obs, n_targets, dims, smoothing, init,
                                          lm_settings,
                                          use_subspace_update=use_subspace_update)
        except Exception as exc:
            err = PipelineError(f"slice {dims} failed: {exc}")
            err.partial_diagnostics = {"init": init, "slices": dict(slices)}
            raise err from exc
    result = rematch(slices[("azimuth", "velocity")],
                     slices[("azimuth", "range")],
                     slices[("range", "velocity")])
    result.diagnostics["init"] = init
    return result


def _parabolic_offset(left: float, mid: float, right: float) -> float:
    denom = left - 2.0 * mid + right
    if denom >= 0:  # not a local max in log power; keep the bin center
        return 0.0
    delta = 0.5 * (left - right) / denom
    return float(np.clip(delta, -0.5, 0.5))


def estimate_3d_dft(obs: Observation, n_targets: int) -> EstimateSet:
    """Zero-padded periodogram baseline with per-axis parabolic refinement.

    Picks the ``n_targets`` largest well-separated power peaks (circular
    suppression of one unpadded bin around each) and maps the interpolated
    bin phases back to parameters.
    """
    config = obs.config
    sizes = tuple(_DFT_PAD * n for n in config.dims)
    power = np.abs(np.fft.fftn(obs.data, s=sizes)) ** 2
    log_power = np.log(np.maximum(power, np.finfo(float).tiny))
    mask = np.zeros(sizes, dtype=bool)
    suppress = [np.arange(-_DFT_PAD, _DFT_PAD + 1)] * 3

    estimates = []
    provenance = []
    peaks = []
    for i in range(n_targets):
        search = np.where(mask, -np.inf, power)
        flat_idx = int(np.argmax(search))
        if not np.isfinite(search.flat[flat_idx]):
            raise PipelineError(
                f"fewer than {n_targets} separated spectral peaks (found {i})")
        peak = np.unravel_index(flat_idx, sizes)
        block = np.ix_(*[(p + s) % n for p, s, n in zip(peak, suppress, sizes)])
        mask[block] = True
        phases = []
        for axis, (p, n) in enumerate(zip(peak, sizes)):
            sl = list(peak)
            sl[axis] = (p - 1) % n
            left = log_power[tuple(sl)]
            sl[axis] = (p + 1) % n
            right = log_power[tuple(sl)]
            delta = _parabolic_offset(left, log_power[peak], right)
            phases.append(principal_phase(2.0 * math.pi * (p + delta) / n))
        theta_phase, r_phase, v_phase = phases
        lam = config.wavelength_m
        x = lam * theta_phase / (2.0 * math.pi * config.antenna_spacing_m)
        theta = math.degrees(math.asin(min(1.0, max(-1.0, x))))
        estimates.append((theta,
                          phase_to_param("range", r_phase, config),
                          phase_to_param("velocity", v_phase, config)))
        provenance.append((i, i, i))
        peaks.append({"bin": tuple(int(p) for p in peak),
                      "power": float(power[peak])})
    return EstimateSet(estimates=tuple(estimates), provenance=tuple(provenance),
                       diagnostics={"peaks": peaks, "pad": _DFT_PAD})


def _grid_phases(dim: str, values: np.ndarray, config) -> np.ndarray:
    from .init1d import param_to_phase
    return np.array([param_to_phase(dim, float(v), config) for v in values])


def grid_music_oracle(obs: Observation, n_targets: int,
                      grids: Sequence[np.ndarray], smoothing: SmoothingConfig,
                      n_peaks: Optional[int] = None) -> EstimateSet:
    """Exhaustive null-spectrum search over a 3D product grid (test oracle).

    ``grids`` holds the azimuth (deg), range (m) and velocity (m/s) points.
    The spectrum is the reciprocal null-spectrum of the 3D-smoothed
    subspace; peaks are local maxima under non-maximum suppression, ranked
    by value. Estimates snap to grid points (no interpolation). Guarded to
    at most 1e7 grid points.
    """
    g_theta, g_r, g_v = [np.asarray(g, dtype=float) for g in grids]
    total = g_theta.size * g_r.size * g_v.size
    if total > _GRID_POINT_GUARD:
        raise PipelineError(f"grid of {total} points exceeds guard {_GRID_POINT_GUARD}")
    n_peaks = n_targets if n_peaks is None else n_peaks
    snap = smooth_3d(obs, smoothing)
    pair = eig_split(covariance(snap), n_targets)
    config = obs.config
    sub = smoothing.sub_dims
    ramps = []
    for dim, grid, size in (("azimuth", g_theta, sub[0]), ("range", g_r, sub[1]),
                            ("velocity", g_v, sub[2])):
        phases = _grid_phases(dim, grid, config)
        ramps.append(np.exp(1j * np.outer(np.arange(size), phases)))
    # ||E_s^H a||^2 on the separable grid; G = D - that, since the bases
    # jointly span the whole space and ||a||^2 = D.
    es = pair.e_s.reshape(sub[0], sub[1], sub[2], n_targets)
    t = np.einsum("lt,lnmu->tnmu", ramps[0].conj(), es, optimize=True)
    t = np.einsum("nr,tnmu->trmu", ramps[1].conj(), t, optimize=True)
    t = np.einsum("mv,trmu->trvu", ramps[2].conj(), t, optimize=True)
    sig_power = np.sum(np.abs(t) ** 2, axis=-1)
    null = np.maximum(float(np.prod(sub)) - sig_power, np.finfo(float).tiny)
    spectrum = 1.0 / null

    local_max = spectrum >= ndimage.maximum_filter(spectrum, size=3, mode="nearest")
    cand = np.argwhere(local_max)
    if cand.shape[0] < n_peaks:
        raise PipelineError(f"only {cand.shape[0]} spectrum peaks, need {n_peaks}")
    values = spectrum[tuple(cand.T)]
    order = np.argsort(values, kind="stable")[::-1]
    estimates = []
    provenance = []
    for rank in range(n_peaks):
        it, ir, iv = cand[order[rank]]
        estimates.append((float(g_theta[it]), float(g_r[ir]), float(g_v[iv])))
        provenance.append((int(it), int(ir), int(iv)))
    return EstimateSet(estimates=tuple(estimates), provenance=tuple(provenance),
                       diagnostics={"spectrum_max": float(values[order[0]]),
                                    "grid_sizes": (g_theta.size, g_r.size, g_v.size)})
