"""Joint two-parameter estimation on a smoothed 2D slice.

The null spectrum of the slice's noise subspace is minimized per target
with a damped Gauss-Newton (Levenberg-Marquardt) iteration over the two
real steering phases. Targets are processed strongest echo first, and each
finished estimate is folded into the noise subspace so weaker targets see
less interference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .init1d import (InitialTriplets, RootPolynomial, param_to_phase,
                     phase_to_param, principal_phase)
from .scenario import SmoothingConfig, SystemConfig
from .signal_model import Observation
from .smoothing import smooth_2d
from .subspace import SubspaceError, augment_noise_subspace, covariance, eig_split

_DIM_TO_AXIS = {"azimuth": "antenna", "range": "subcarrier", "velocity": "symbol"}


class Music2dError(RuntimeError):
    pass


@dataclass(frozen=True)
class LmSettings:
    """Levenberg-Marquardt iteration controls."""

    q_max: int = 100
    eps1: float = 1e-10   # infinity-norm gradient tolerance
    eps2: float = 1e-10   # relative step-size tolerance
    tau: float = 1e-3     # initial damping scale

    def __post_init__(self):
        if self.q_max <= 0 or self.eps1 <= 0 or self.eps2 <= 0 or self.tau <= 0:
            raise ValueError("all LM settings must be positive")


@dataclass(frozen=True)
class Kappa2D:
    """Unit-circle pair for the two active dimensions, stored as phases."""

    phases: tuple[float, float]

    @property
    def kappa(self) -> tuple[complex, complex]:
        return (complex(np.exp(1j * self.phases[0])),
                complex(np.exp(1j * self.phases[1])))

    @property
    def norm(self) -> float:
        return math.sqrt(2.0)  # both components stay on the unit circle


@dataclass(frozen=True)
class LmDiagnostics:
    iterations: int
    converged: bool
    final_value: float
    grad_inf: float
    accepted_values: tuple[float, ...]  # G after every accepted step


@dataclass(frozen=True)
class PairDiagnostics:
    source_index: int          # index into the initial triplets
    iterations: int
    final_value: float
    converged: bool
    subspace_augmented: bool


@dataclass(frozen=True)
class Pair2DEstimates:
    dims: tuple[str, str]
    pairs: tuple[tuple[float, float], ...]          # estimation order
    diagnostics: tuple[PairDiagnostics, ...]


def steering_2d(phases: Sequence[float], dims: tuple[int, int]) -> np.ndarray:
    """Kronecker steering vector for the two active dimensions."""
    ramp_a = np.exp(1j * phases[0] * np.arange(dims[0]))
    ramp_b = np.exp(1j * phases[1] * np.arange(dims[1]))
    return np.kron(ramp_a, ramp_b)


def _steering_derivatives(phases, dims):
    ka = np.repeat(np.arange(dims[0]), dims[1])
    kb = np.tile(np.arange(dims[1]), dims[0])
    a = steering_2d(phases, dims)
    return a, 1j * ka * a, 1j * kb * a


def null_spectrum(e_n: np.ndarray, kappa: Kappa2D, dims: tuple[int, int]) -> float:
    """Projection power of the steering vector onto the noise subspace."""
    if dims[0] * dims[1] != e_n.shape[0]:
        raise Music2dError(f"dims {dims} do not match subspace rows {e_n.shape[0]}")
    proj = e_n.conj().T @ steering_2d(kappa.phases, dims)
    return float(np.vdot(proj, proj).real)


def jacobian(e_n: np.ndarray, kappa: Kappa2D, dims: tuple[int, int]) -> np.ndarray:
    """Derivative of the residual vector w.r.t. the two steering phases."""
    _, da, db = _steering_derivatives(kappa.phases, dims)
    return math.sqrt(2.0) * np.stack([e_n.conj().T @ da, e_n.conj().T @ db], axis=1)


def _residual_and_jacobian(e_n, phases, dims):
    a, da, db = _steering_derivatives(phases, dims)
    g = math.sqrt(2.0) * (e_n.conj().T @ a)
    jac = math.sqrt(2.0) * np.stack([e_n.conj().T @ da, e_n.conj().T @ db], axis=1)
    value = 0.5 * float(np.vdot(g, g).real)
    grad = (jac.conj().T @ g).real
    hess = (jac.conj().T @ jac).real
    return value, grad, hess


def lm_minimize(e_n: np.ndarray, kappa0: Kappa2D, settings: LmSettings,
                dims: tuple[int, int]) -> tuple[Kappa2D, LmDiagnostics]:
    """Damped Gauss-Newton descent of the null spectrum from one start point.

    The step solves ``(H + mu I) h = -grad`` with ``H = Re(J^H J)``; the
    gain ratio of actual to predicted decrease drives the damping update.
    Accepted steps never increase the objective.
    """
    phases = np.array(kappa0.phases, dtype=float)
    value, grad, hess = _residual_and_jacobian(e_n, phases, dims)
    if not (np.isfinite(value) and np.all(np.isfinite(grad)) and np.all(np.isfinite(hess))):
        raise Music2dError("non-finite objective at the start point")
    found = np.max(np.abs(grad)) <= settings.eps1
    mu = settings.tau * float(np.max(np.diag(hess)))
    nu = 2.0
    iterations = 0
    accepted = []
    while not found and iterations < settings.q_max:
        iterations += 1
        try:
            step = np.linalg.solve(hess + mu * np.eye(2), -grad)
        except np.linalg.LinAlgError as exc:
            raise Music2dError(f"damped system singular (mu={mu}): {exc}") from exc
        if np.linalg.norm(step) <= settings.eps2 * (kappa0.norm + settings.eps2):
            found = True
            continue
        new_phases = phases + step
        new_value, new_grad, new_hess = _residual_and_jacobian(e_n, new_phases, dims)
        predicted = 0.5 * float(step @ (mu * step - grad))
        rho = (value - new_value) / predicted if predicted > 0 else -np.inf
        if rho > 0:
            phases, value, grad, hess = new_phases, new_value, new_grad, new_hess
            accepted.append(value)
            found = np.max(np.abs(grad)) <= settings.eps1
            mu *= max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3)
            nu = 2.0
        else:
            mu *= nu
            nu *= 2.0
    result = Kappa2D(phases=(float(phases[0]), float(phases[1])))
    diag = LmDiagnostics(iterations=iterations, converged=bool(found),
                         final_value=value, grad_inf=float(np.max(np.abs(grad))),
                         accepted_values=tuple(accepted))
    return result, diag


def order_targets(init: InitialTriplets,
                  polys: tuple[RootPolynomial, RootPolynomial],
                  config: SystemConfig) -> np.ndarray:
    """Estimation order: ascending averaged 1D null-spectrum value.

    Smaller values mean stronger echoes; each dimension's contribution is
    weighted by the reciprocal squared length of its rotation vector. Ties
    keep the input order.
    """
    dim_index = {"azimuth": 0, "range": 1, "velocity": 2}
    scores = np.empty(init.n_targets)
    for i, triplet in enumerate(init.triplets):
        total = 0.0
        for poly in polys:
            value = triplet[dim_index[poly.dim_label]]
            phase = param_to_phase(poly.dim_label, value, config)
            total += poly.null_value(phase) / poly.dim_size ** 2
        scores[i] = total
    return np.argsort(scores, kind="stable")


def run_isu2dmusic(obs: Observation, n_targets: int, active_dims: tuple[str, str],
                   smoothing: SmoothingConfig, init: InitialTriplets,
                   settings: Optional[LmSettings] = None,
                   use_subspace_update: bool = True) -> Pair2DEstimates:
    """Estimate one 2D slice for every target.

    Pipeline: slice covariance, eigensplit, strongest-first ordering, then
    per target an optional noise-subspace augmentation with the previous
    estimate's steering followed by the LM descent. A failed augmentation
    (steering already annihilated) falls back to the unaugmented subspace
    for that target and is flagged in the diagnostics.
    """
    settings = settings or LmSettings()
    if init.polynomials is None:
        raise Music2dError("initial triplets carry no root polynomials")
    dim_a, dim_b = active_dims
    windows = dict(zip(("azimuth", "range", "velocity"), smoothing.sub_dims))
    dims_ab = (windows[dim_a], windows[dim_b])
    snap = smooth_2d(obs, (_DIM_TO_AXIS[dim_a], _DIM_TO_AXIS[dim_b]), dims_ab)
    pair = eig_split(covariance(snap), n_targets)
    e_n = pair.e_n

    order = order_targets(init, (init.polynomials[dim_a], init.polynomials[dim_b]),
                          obs.config)
    dim_index = {"azimuth": 0, "range": 1, "velocity": 2}
    results = []
    clean_e_n = e_n
    prev_steering = None
    for rank, idx in enumerate(order):
        augmented = False
        if rank > 0 and use_subspace_update:
            try:
                e_n = augment_noise_subspace(e_n, prev_steering)
                augmented = True
            except SubspaceError:
                augmented = False
        triplet = init.triplets[int(idx)]
        start = Kappa2D(phases=(
            param_to_phase(dim_a, triplet[dim_index[dim_a]], obs.config),
            param_to_phase(dim_b, triplet[dim_index[dim_b]], obs.config)))
        kappa, lm_diag = lm_minimize(e_n, start, settings, dims_ab)
        iterations = lm_diag.iterations
        if augmented:
            # The augmented objective steers the descent away from already
            # estimated targets but its minimum is displaced by the penalty
            # term; a second descent on the clean subspace removes that bias.
            kappa, polish = lm_minimize(clean_e_n, kappa, settings, dims_ab)
            iterations += polish.iterations
            lm_diag = polish
        prev_steering = steering_2d(kappa.phases, dims_ab)
        params = (phase_to_param(dim_a, principal_phase(kappa.phases[0]), obs.config),
                  phase_to_param(dim_b, principal_phase(kappa.phases[1]), obs.config))
        results.append((params, PairDiagnostics(
            source_index=int(idx), iterations=iterations,
            final_value=lm_diag.final_value, converged=lm_diag.converged,
            subspace_augmented=augmented)))
    return Pair2DEstimates(
        dims=active_dims,
        pairs=tuple(p for p, _ in results),
        diagnostics=tuple(d for _, d in results),
    )
