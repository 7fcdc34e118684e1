"""Per-dimension root estimation and 3D pairing for initial parameter triples.

Each dimension is estimated on its own: snapshots from the other two axes
self-compensate the phases those parameters cause, so a 1D noise subspace
per axis suffices. Roots of the null-spectrum polynomial on the unit
circle give the per-axis parameters; a maximum-likelihood fit over all
``(U!)^2`` assignments then pairs them into triples.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .scenario import SPEED_OF_LIGHT, SmoothingConfig, SystemConfig
from .signal_model import Observation, flatten
from .smoothing import smooth_1d
from .subspace import covariance, eig_split

DIM_LABELS = ("azimuth", "range", "velocity")
_DIM_TO_AXIS = {"azimuth": "antenna", "range": "subcarrier", "velocity": "symbol"}

MAX_PAIRED_TARGETS = 6  # (U!)^2 enumeration guard

_GRAM_COND_LIMIT = 1e12
_TIE_REL = 1e-12


class InitError(RuntimeError):
    pass


def principal_phase(phi):
    """Wrap to the principal interval (-pi, pi]."""
    out = np.mod(np.asarray(phi) + np.pi, 2.0 * np.pi) - np.pi
    out = np.where(out == -np.pi, np.pi, out)
    return out if out.ndim else float(out)


def param_to_phase(dim: str, value: float, config: SystemConfig) -> float:
    """Per-index phase step caused by one parameter value."""
    if dim == "azimuth":
        return 2.0 * math.pi * config.antenna_spacing_m \
            * math.sin(math.radians(value)) / config.wavelength_m
    if dim == "range":
        return -4.0 * math.pi * value * config.subcarrier_spacing_hz / SPEED_OF_LIGHT
    if dim == "velocity":
        return 4.0 * math.pi * value * config.carrier_freq_hz \
            * config.symbol_period_s / SPEED_OF_LIGHT
    raise InitError(f"unknown dimension {dim!r}")


def phase_to_param(dim: str, phase: float, config: SystemConfig) -> float:
    """Inverse of :func:`param_to_phase` on the principal interval."""
    if dim == "azimuth":
        x = config.wavelength_m * phase / (2.0 * math.pi * config.antenna_spacing_m)
        if abs(x) > 1.0 + 1e-9:
            raise InitError(f"non-physical root: sin(azimuth) = {x:.6g}")
        return math.degrees(math.asin(min(1.0, max(-1.0, x))))
    if dim == "range":
        return -phase * SPEED_OF_LIGHT / (4.0 * math.pi * config.subcarrier_spacing_hz)
    if dim == "velocity":
        return phase * SPEED_OF_LIGHT / (4.0 * math.pi * config.carrier_freq_hz
                                         * config.symbol_period_s)
    raise InitError(f"unknown dimension {dim!r}")


@dataclass(frozen=True)
class RootPolynomial:
    """Null-spectrum polynomial of one dimension.

    Coefficients are ascending in the unit-circle variable; conjugate
    symmetry around the center coefficient pairs every root with its
    conjugate reciprocal.
    """

    coeffs: np.ndarray
    dim_label: str
    dim_size: int

    @property
    def is_degenerate(self) -> bool:
        """Constant spectrum on the circle: no information in the roots."""
        center = abs(self.coeffs[self.dim_size - 1])
        rest = np.abs(np.delete(self.coeffs, self.dim_size - 1))
        return bool(np.all(rest <= 1e-12 * max(center, 1.0)))

    def roots(self) -> np.ndarray:
        return np.roots(self.coeffs[::-1])

    def null_value(self, phase):
        """Real null-spectrum value a^H(kappa) E_n E_n^H a(kappa) on the circle."""
        orders = np.arange(len(self.coeffs)) - (self.dim_size - 1)
        phases = np.atleast_1d(np.asarray(phase, dtype=float))
        vals = (np.exp(1j * np.outer(phases, orders)) @ self.coeffs).real
        return vals if np.ndim(phase) else float(vals[0])


def build_root_polynomial(e_n: np.ndarray, dim_label: str) -> RootPolynomial:
    """Coefficients of the rooted null-spectrum for a 1D noise subspace.

    The k-th ascending coefficient is the sum of the (k - (D-1))-th
    diagonal of ``E_n E_n^H``.
    """
    d = e_n.shape[0]
    c = e_n @ e_n.conj().T
    coeffs = np.array([np.diagonal(c, offset=k - (d - 1)).sum()
                       for k in range(2 * d - 1)])
    return RootPolynomial(coeffs=coeffs, dim_label=dim_label, dim_size=d)


def roots_to_params(poly: RootPolynomial, n_targets: int, dim: str,
                    config: SystemConfig) -> np.ndarray:
    """Map the ``n_targets`` best unit-circle roots to physical parameters.

    Candidate roots are those inside the closed unit disk; the ones with
    magnitude nearest 1 win, ties broken by larger magnitude then smaller
    angle.
    """
    if n_targets >= poly.dim_size:
        raise InitError(f"need U < D, got U={n_targets}, D={poly.dim_size}")
    roots = poly.roots()
    inside = roots[np.abs(roots) <= 1.0]
    if inside.size < n_targets:
        raise InitError(
            f"only {inside.size} candidate roots inside the unit disk, "
            f"need {n_targets}")
    ang = np.angle(inside)
    order = np.lexsort((ang, np.abs(ang), 1.0 - np.abs(inside)))
    chosen = inside[order[:n_targets]]
    return np.array([phase_to_param(dim, a, config) for a in np.angle(chosen)])


@dataclass(frozen=True)
class InitialTriplets:
    """Paired (azimuth, range, velocity) starting points with diagnostics."""

    triplets: tuple[tuple[float, float, float], ...]
    alpha_hat: np.ndarray
    residual: float
    ambiguous: bool = False
    polynomials: Optional[dict] = None

    @property
    def n_targets(self) -> int:
        return len(self.triplets)


def _factor_matrix(dim: str, values: Sequence[float], length: int,
                   config: SystemConfig) -> np.ndarray:
    phases = np.array([param_to_phase(dim, v, config) for v in values])
    return np.exp(1j * np.outer(np.arange(length), phases))


def pair_mle(obs_flat: np.ndarray, thetas: Sequence[float], ranges: Sequence[float],
             velocities: Sequence[float], config: SystemConfig) -> InitialTriplets:
    """Assign per-dimension estimates to targets by residual minimization.

    Every range/velocity permutation against the fixed azimuth order is
    scored by the least-squares backscatter fit; the assignment with the
    smallest reconstruction residual wins. Residual ties are broken by
    enumeration order and flagged ambiguous.
    """
    u = len(thetas)
    if not (len(ranges) == len(velocities) == u):
        raise InitError("per-dimension estimate lists must share one length")
    if u > MAX_PAIRED_TARGETS:
        raise InitError(f"pairing enumeration guard: U={u} exceeds {MAX_PAIRED_TARGETS}")
    l_ant, n_sub, m_sym = config.dims
    cube = np.asarray(obs_flat).reshape(config.dims)
    a_th = _factor_matrix("azimuth", thetas, l_ant, config)
    a_r = _factor_matrix("range", ranges, n_sub, config)
    a_v = _factor_matrix("velocity", velocities, m_sym, config)
    g_th = a_th.conj().T @ a_th
    g_r = a_r.conj().T @ a_r
    g_v = a_v.conj().T @ a_v
    # c[i, j, k] = (a_th_i (x) a_r_j (x) a_v_k)^H z, all combinations at once
    part = np.einsum("lu,lnm->unm", a_th.conj(), cube, optimize=True)
    part = np.einsum("nv,unm->uvm", a_r.conj(), part, optimize=True)
    proj = np.einsum("mw,uvm->uvw", a_v.conj(), part, optimize=True)
    z_norm2 = float(np.vdot(obs_flat, obs_flat).real)

    slots = np.arange(u)
    best = None
    ambiguous = False
    skipped = 0
    for perm_r in itertools.permutations(range(u)):
        pr = np.array(perm_r)
        g_rp = g_r[np.ix_(pr, pr)]
        for perm_v in itertools.permutations(range(u)):
            pv = np.array(perm_v)
            gram = g_th * g_rp * g_v[np.ix_(pv, pv)]
            if np.linalg.cond(gram) > _GRAM_COND_LIMIT:
                skipped += 1
                continue
            rhs = proj[slots, pr, pv]
            alpha = np.linalg.solve(gram, rhs)
            res = z_norm2 - 2.0 * np.vdot(alpha, rhs).real \
                + np.vdot(alpha, gram @ alpha).real
            res = max(res, 0.0)
            if best is None or res < best[0] - _TIE_REL * max(z_norm2, 1.0):
                best = (res, pr, pv, alpha)
            elif abs(res - best[0]) <= _TIE_REL * max(z_norm2, 1.0):
                ambiguous = True
    if best is None:
        raise InitError("manifold collinear for every candidate pairing")
    res, pr, pv, alpha = best
    triplets = tuple((float(thetas[i]), float(ranges[pr[i]]), float(velocities[pv[i]]))
                     for i in range(u))
    return InitialTriplets(triplets=triplets, alpha_hat=alpha, residual=float(res),
                           ambiguous=ambiguous)


def run_init3d(obs: Observation, n_targets: int, smoothing: SmoothingConfig,
               snapshot_stride: int = 1) -> InitialTriplets:
    """Three independent 1D root estimations followed by MLE/MMSE pairing.

    ``snapshot_stride`` optionally subsamples snapshot columns of the 1D
    covariances (speed knob; default uses every snapshot).
    """
    windows = dict(zip(DIM_LABELS, smoothing.sub_dims))
    estimates = {}
    polynomials = {}
    for dim in DIM_LABELS:
        window = windows[dim]
        if window <= n_targets:
            raise InitError(
                f"{dim} smoothing window {window} must exceed target count {n_targets}")
        snap = smooth_1d(obs, _DIM_TO_AXIS[dim], window)
        if snapshot_stride > 1:
            r = covariance(np.ascontiguousarray(snap.data[:, ::snapshot_stride]))
        else:
            r = covariance(snap)
        pair = eig_split(r, n_targets)
        poly = build_root_polynomial(pair.e_n, dim)
        estimates[dim] = roots_to_params(poly, n_targets, dim, obs.config)
        polynomials[dim] = poly
    paired = pair_mle(flatten(obs), estimates["azimuth"], estimates["range"],
                      estimates["velocity"], obs.config)
    return InitialTriplets(triplets=paired.triplets, alpha_hat=paired.alpha_hat,
                           residual=paired.residual, ambiguous=paired.ambiguous,
                           polynomials=polynomials)
