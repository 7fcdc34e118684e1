"""Estimation variance lower bounds for the azimuth/range/velocity problem.

Two equivalent routes are provided: the projector form operating on the
manifold derivative, and the Fisher-information block form eliminated by a
Schur complement. A closed form covers the single-target case.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scenario import SPEED_OF_LIGHT, Scenario, SystemConfig, Target, require_valid
from .signal_model import manifold

_COND_LIMIT = 1e10


class CrbError(RuntimeError):
    pass


@dataclass(frozen=True)
class CrbResult:
    """Bound matrix plus per-target diagonal readouts.

    ``crb_matrix`` is ordered (all azimuths, all ranges, all velocities) in
    rad^2, m^2 and (m/s)^2; ``per_target`` collects the matching diagonal
    triples and ``rcrb`` their square roots.
    """

    crb_matrix: np.ndarray
    per_target: tuple[tuple[float, float, float], ...]

    @property
    def rcrb(self) -> tuple[tuple[float, float, float], ...]:
        return tuple(tuple(math.sqrt(max(v, 0.0)) for v in row) for row in self.per_target)


def _phase_slopes(config: SystemConfig, target: Target) -> tuple[float, float, float]:
    """Signed derivatives of the per-index phase steps w.r.t. the parameters."""
    d_theta = 2.0 * math.pi * config.antenna_spacing_m \
        * math.cos(math.radians(target.azimuth_deg)) / config.wavelength_m
    d_r = -4.0 * math.pi * config.subcarrier_spacing_hz / SPEED_OF_LIGHT
    d_v = 4.0 * math.pi * config.carrier_freq_hz * config.symbol_period_s / SPEED_OF_LIGHT
    return d_theta, d_r, d_v


def _alphas(scenario: Scenario) -> np.ndarray:
    """Backscatter coefficients for bound evaluation; unset ones read as 1."""
    return np.array([1.0 + 0.0j if t.backscatter is None else complex(t.backscatter)
                     for t in scenario.targets])


def manifold_derivative(scenario: Scenario) -> np.ndarray:
    """Stacked per-parameter manifold derivatives, shape (L*N*M, 3U).

    Column blocks are the azimuth, range and velocity derivatives of each
    target's steering vector: an imaginary index ramp along the matching
    axis times the signed phase slope.
    """
    config = scenario.config
    l_ant, n_sub, m_sym = config.dims
    ramp_l = np.repeat(np.arange(l_ant), n_sub * m_sym)
    ramp_n = np.tile(np.repeat(np.arange(n_sub), m_sym), l_ant)
    ramp_m = np.tile(np.arange(m_sym), l_ant * n_sub)
    man = manifold(config, scenario.targets)
    u = scenario.n_targets
    out = np.empty((l_ant * n_sub * m_sym, 3 * u), dtype=complex)
    for i, target in enumerate(scenario.targets):
        if abs(math.cos(math.radians(target.azimuth_deg))) < 1e-12:
            raise CrbError(f"target {i}: azimuth at +-90 deg has no azimuth sensitivity")
        d_theta, d_r, d_v = _phase_slopes(config, target)
        col = man.a_matrix[:, i]
        out[:, i] = 1j * d_theta * ramp_l * col
        out[:, u + i] = 1j * d_r * ramp_n * col
        out[:, 2 * u + i] = 1j * d_v * ramp_m * col
    return out


def _sigma_matrix(alphas: np.ndarray) -> np.ndarray:
    return np.kron(np.eye(3), np.diag(alphas))


def _check_manifold_rank(a_matrix: np.ndarray) -> np.ndarray:
    gram = a_matrix.conj().T @ a_matrix
    if math.sqrt(np.linalg.cond(gram)) > _COND_LIMIT:
        raise CrbError("targets unresolvable at this geometry (manifold near rank "
                       "deficient)")
    return gram


def _per_target_diagonals(crb: np.ndarray, u: int):
    return tuple((float(crb[i, i]), float(crb[u + i, u + i]),
                  float(crb[2 * u + i, 2 * u + i])) for i in range(u))


def crb_multi_target(scenario: Scenario) -> CrbResult:
    """Bound matrix via the orthogonal-projector form.

    ``(sigma^2/2) * Re{Sigma^H dA^H P_A_perp dA Sigma}^{-1}`` with the
    noise power taken from the scenario SNR.
    """
    require_valid(scenario)
    config = scenario.config
    man = manifold(config, scenario.targets)
    gram = _check_manifold_rank(man.a_matrix)
    d_a = manifold_derivative(scenario)
    # P_A_perp @ dA without forming the LNM x LNM projector
    coeff = np.linalg.solve(gram, man.a_matrix.conj().T @ d_a)
    proj_da = d_a - man.a_matrix @ coeff
    sigma = _sigma_matrix(_alphas(scenario))
    core = (sigma.conj().T @ (d_a.conj().T @ proj_da) @ sigma).real
    sigma2 = scenario.noise_power
    try:
        crb = (sigma2 / 2.0) * np.linalg.inv(core)
    except np.linalg.LinAlgError as exc:
        raise CrbError(f"information matrix singular: {exc}") from exc
    u = scenario.n_targets
    return CrbResult(crb_matrix=crb, per_target=_per_target_diagonals(crb, u))


def fisher_blocks(scenario: Scenario) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Fisher information blocks for (parameters; backscatter re/im parts)."""
    require_valid(scenario)
    man = manifold(scenario.config, scenario.targets)
    d_a = manifold_derivative(scenario)
    sigma = _sigma_matrix(_alphas(scenario))
    sigma2 = scenario.noise_power
    scale = 2.0 / sigma2
    da_da = sigma.conj().T @ (d_a.conj().T @ d_a) @ sigma
    da_a = sigma.conj().T @ (d_a.conj().T @ man.a_matrix)
    gram = man.a_matrix.conj().T @ man.a_matrix
    f11 = scale * da_da.real
    f12 = scale * np.hstack([da_a.real, -da_a.imag])
    f22 = scale * np.block([[gram.real, -gram.imag], [gram.imag, gram.real]])
    return f11, f12, f22


def crb_from_fisher(scenario: Scenario) -> CrbResult:
    """Bound matrix via Schur-complement elimination of the nuisance block."""
    f11, f12, f22 = fisher_blocks(scenario)
    try:
        reduced = f11 - f12 @ np.linalg.solve(f22, f12.T)
        crb = np.linalg.inv(reduced)
    except np.linalg.LinAlgError as exc:
        raise CrbError(f"Fisher matrix singular: {exc}") from exc
    u = scenario.n_targets
    return CrbResult(crb_matrix=crb, per_target=_per_target_diagonals(crb, u))


def crb_single_closed_form(config: SystemConfig, target: Target,
                           snr_linear: float) -> tuple[float, float, float]:
    """Closed-form single-target bounds (rad^2, m^2, (m/s)^2).

    Each bound is inversely proportional to the SNR, the snapshot count of
    the other two dimensions and the cubic of the own dimension's size.
    """
    l_ant, n_sub, m_sym = config.dims
    d_theta, d_r, d_v = _phase_slopes(config, target)
    crb_theta = 6.0 / (n_sub * m_sym * snr_linear * l_ant * (l_ant ** 2 - 1) * d_theta ** 2)
    crb_r = 6.0 / (l_ant * m_sym * snr_linear * n_sub * (n_sub ** 2 - 1) * d_r ** 2)
    crb_v = 6.0 / (l_ant * n_sub * snr_linear * m_sym * (m_sym ** 2 - 1) * d_v ** 2)
    return crb_theta, crb_r, crb_v
