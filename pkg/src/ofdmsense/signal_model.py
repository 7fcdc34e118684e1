"""Synthesis of the frequency-domain observation cube and steering structures.

The observation is the per-antenna, per-subcarrier, per-symbol complex
sample left after DFT and known-symbol equalization: a sum of target
returns ``alpha_i * exp(j*(l*phi_theta + n*phi_r + m*phi_v))`` plus
circularly-symmetric complex Gaussian noise.

Flattening convention: antenna-major, then subcarrier, then symbol. The
full steering vector is the matching Kronecker product
``a_theta (x) a_r (x) a_v``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Union

import numpy as np

from .scenario import Scenario, SystemConfig, Target, phase_increments, require_valid

SeedLike = Union[int, np.random.SeedSequence, np.random.Generator]

_HEADER = struct.Struct("<3Q4d")  # L, N, M, f_c, delta_f, symbol period, spacing


class SignalError(ValueError):
    pass


@dataclass(frozen=True)
class Observation:
    """Complex data cube of shape ``(L, N, M)`` with its configuration."""

    data: np.ndarray
    config: SystemConfig

    def __post_init__(self):
        if self.data.shape != self.config.dims:
            raise SignalError(
                f"observation shape {self.data.shape} does not match config dims "
                f"{self.config.dims}")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.config.dims


@dataclass(frozen=True)
class SteeringSet:
    """Per-dimension unit-modulus rotation vectors for one parameter triple."""

    a_theta: np.ndarray
    a_r: np.ndarray
    a_v: np.ndarray

    @property
    def a_full(self) -> np.ndarray:
        return np.kron(np.kron(self.a_theta, self.a_r), self.a_v)


@dataclass(frozen=True)
class Manifold:
    """Column-stacked steering vectors of every target."""

    a_matrix: np.ndarray  # (L'*N'*M', U)
    a_theta: np.ndarray   # (L', U)
    a_r: np.ndarray       # (N', U)
    a_v: np.ndarray       # (M', U)


def _ramp_vector(phi: float, length: int) -> np.ndarray:
    return np.exp(1j * phi * np.arange(length))


def steering(config: SystemConfig, theta_deg: float, range_m: float,
             velocity_mps: float,
             dims: Optional[tuple[int, int, int]] = None) -> SteeringSet:
    """Rotation vectors for one parameter triple, optionally truncated.

    ``dims`` selects the leading ``(L', N', M')`` entries of each vector,
    as used on spatially-smoothed sub-observations; defaults to the full
    sizes.
    """
    if dims is None:
        dims = config.dims
    for want, have in zip(dims, config.dims):
        if not 1 <= want <= have:
            raise SignalError(f"requested steering dims {dims} outside {config.dims}")
    target = Target(theta_deg, range_m, velocity_mps)
    phi_theta, phi_r, phi_v = phase_increments(config, target)
    return SteeringSet(
        a_theta=_ramp_vector(phi_theta, dims[0]),
        a_r=_ramp_vector(phi_r, dims[1]),
        a_v=_ramp_vector(phi_v, dims[2]),
    )


def manifold(config: SystemConfig, targets: Sequence[Target],
             dims: Optional[tuple[int, int, int]] = None) -> Manifold:
    """Khatri-Rao manifold of all targets (columnwise Kronecker products)."""
    sets = [steering(config, t.azimuth_deg, t.range_m, t.velocity_mps, dims)
            for t in targets]
    a_theta = np.stack([s.a_theta for s in sets], axis=1)
    a_r = np.stack([s.a_r for s in sets], axis=1)
    a_v = np.stack([s.a_v for s in sets], axis=1)
    full = np.stack([s.a_full for s in sets], axis=1)
    return Manifold(a_matrix=full, a_theta=a_theta, a_r=a_r, a_v=a_v)


def trial_seed(master_seed: int, trial_index: int) -> np.random.SeedSequence:
    """Independent, order-free substream for one Monte-Carlo trial."""
    return np.random.SeedSequence(entropy=master_seed, spawn_key=(trial_index,))


def _as_generator(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def resolve_backscatter(scenario: Scenario, rng: np.random.Generator) -> np.ndarray:
    """Backscatter coefficients for one trial.

    Explicit coefficients are taken as-is; unset ones get unit magnitude
    and a phase drawn uniformly from the trial stream.
    """
    alphas = np.empty(scenario.n_targets, dtype=complex)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=scenario.n_targets)
    for i, target in enumerate(scenario.targets):
        if target.backscatter is None:
            alphas[i] = np.exp(1j * phases[i])
        else:
            alphas[i] = target.backscatter
    return alphas


def synthesize(scenario: Scenario, seed: SeedLike) -> Observation:
    """Generate one noisy observation cube, deterministically from ``seed``."""
    require_valid(scenario)
    rng = _as_generator(seed)
    config = scenario.config
    alphas = resolve_backscatter(scenario, rng)
    man = manifold(config, scenario.targets)
    cube = np.einsum("lu,nu,mu,u->lnm", man.a_theta, man.a_r, man.a_v, alphas,
                     optimize=True)
    sigma2 = scenario.noise_power
    if sigma2 > 0.0:
        gauss = rng.standard_normal(size=(2,) + config.dims)
        cube = cube + np.sqrt(sigma2 / 2.0) * (gauss[0] + 1j * gauss[1])
    cube = np.ascontiguousarray(cube, dtype=np.complex128)
    return Observation(data=cube, config=replace(config, noise_power=sigma2))


def flatten(obs: Observation) -> np.ndarray:
    """Column vector in antenna-major, subcarrier, symbol order."""
    return obs.data.reshape(-1)


def unflatten(vec: np.ndarray, config: SystemConfig) -> Observation:
    """Inverse of :func:`flatten`; bit-exact round trip."""
    expected = int(np.prod(config.dims))
    if vec.size != expected:
        raise SignalError(f"vector length {vec.size} does not match dims {config.dims}")
    return Observation(data=vec.reshape(config.dims).copy(), config=config)


def save_observation(obs: Observation, path) -> None:
    """Write the binary interchange format.

    Header: little-endian ``L, N, M`` (uint64) then ``f_c, delta_f,
    symbol period, antenna spacing`` (float64); payload: interleaved
    real/imag float64 pairs in flattening order.
    """
    config = obs.config
    header = _HEADER.pack(*config.dims, config.carrier_freq_hz,
                          config.subcarrier_spacing_hz, config.symbol_period_s,
                          config.antenna_spacing_m)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(flatten(obs), dtype="<c16").tobytes())


def load_observation(path) -> Observation:
    """Read the binary interchange format written by :func:`save_observation`.

    Noise power is not part of the header and is restored as 0.
    """
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
        if len(raw) != _HEADER.size:
            raise SignalError(f"{path}: truncated header")
        antennas, subcarriers, symbols, fc, df, tbar, spacing = _HEADER.unpack(raw)
        payload = fh.read()
    count = antennas * subcarriers * symbols
    data = np.frombuffer(payload, dtype="<c16", count=count)
    if data.size != count:
        raise SignalError(f"{path}: expected {count} samples, found {data.size}")
    config = SystemConfig(
        carrier_freq_hz=fc,
        subcarrier_spacing_hz=df,
        n_antennas=int(antennas),
        n_subcarriers=int(subcarriers),
        n_symbols=int(symbols),
        data_duration_s=1.0 / df,
        cp_duration_s=tbar - 1.0 / df,
        antenna_spacing_m=spacing,
    )
    return Observation(data=data.astype(np.complex128).reshape(config.dims), config=config)
