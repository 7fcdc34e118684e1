"""Waveform/array configuration, ground-truth targets and validation.

All quantities are SI (Hz, s, m, m/s) except azimuth angles, which are
degrees at the API surface and radians internally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import yaml

SPEED_OF_LIGHT = 3.0e8  # m/s, propagation constant used throughout

# Doppler phase drift across one symbol above this value voids the
# constant-phase-per-symbol approximation; reported as a warning only.
DOPPLER_DRIFT_WARN = 0.01


class ScenarioError(ValueError):
    """Raised when an operation receives an invalid scenario."""


@dataclass(frozen=True)
class SystemConfig:
    """OFDM waveform and receive-array constants.

    ``antenna_spacing_m`` defaults to half a carrier wavelength when not
    given. ``noise_power`` is the complex noise variance (both quadratures
    together).
    """

    carrier_freq_hz: float
    subcarrier_spacing_hz: float
    n_antennas: int
    n_subcarriers: int
    n_symbols: int
    cp_duration_s: float = 0.0
    data_duration_s: Optional[float] = None
    antenna_spacing_m: Optional[float] = None
    noise_power: float = 0.0

    def __post_init__(self):
        if self.data_duration_s is None:
            object.__setattr__(self, "data_duration_s", 1.0 / self.subcarrier_spacing_hz)
        if self.antenna_spacing_m is None:
            object.__setattr__(self, "antenna_spacing_m", self.wavelength_m / 2.0)

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_freq_hz

    @property
    def symbol_period_s(self) -> float:
        """Overall symbol period: data duration plus cyclic prefix."""
        return self.data_duration_s + self.cp_duration_s

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.n_antennas, self.n_subcarriers, self.n_symbols)

    @property
    def unambiguous_range_m(self) -> float:
        return SPEED_OF_LIGHT / (2.0 * self.subcarrier_spacing_hz)

    @property
    def unambiguous_velocity_mps(self) -> float:
        return SPEED_OF_LIGHT / (4.0 * self.carrier_freq_hz * self.symbol_period_s)


@dataclass(frozen=True)
class Target:
    """Ground-truth reflector parameters.

    ``backscatter`` is the complex reflection coefficient. ``None`` means
    unit magnitude with a phase drawn per trial by the synthesizer.
    """

    azimuth_deg: float
    range_m: float
    velocity_mps: float
    backscatter: Optional[complex] = None


@dataclass(frozen=True)
class SmoothingConfig:
    """Sliding-window sizes per dimension for spatial smoothing."""

    sub_antennas: int
    sub_subcarriers: int
    sub_symbols: int

    @property
    def sub_dims(self) -> tuple[int, int, int]:
        return (self.sub_antennas, self.sub_subcarriers, self.sub_symbols)

    def snapshot_counts(self, config: SystemConfig) -> tuple[int, int, int]:
        return tuple(n - k + 1 for n, k in zip(config.dims, self.sub_dims))

    @classmethod
    def from_ratios(cls, config: SystemConfig) -> "SmoothingConfig":
        """Timing preset: windows at fixed fractions of the full sizes."""
        return cls(
            sub_antennas=max(1, round(3 * config.n_antennas / 4)),
            sub_subcarriers=max(1, round(config.n_subcarriers / 10)),
            sub_symbols=max(1, round(3 * config.n_symbols / 8)),
        )


@dataclass(frozen=True)
class Scenario:
    """A system configuration plus targets and an operating SNR."""

    config: SystemConfig
    targets: tuple[Target, ...]
    snr_db: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(self.targets))

    @property
    def n_targets(self) -> int:
        return len(self.targets)

    @property
    def noise_power(self) -> float:
        """Noise variance for unit-magnitude backscatter at ``snr_db``."""
        return 10.0 ** (-self.snr_db / 10.0)


@dataclass(frozen=True)
class Violation:
    code: str
    message: str


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)
    warnings: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def codes(self) -> list[str]:
        return [v.code for v in self.violations]

    def add(self, code: str, message: str) -> None:
        self.violations.append(Violation(code, message))

    def warn(self, code: str, message: str) -> None:
        self.warnings.append(Violation(code, message))


def rayleigh_widths(config: SystemConfig) -> tuple[float, float, float]:
    """Classical resolution cells (deg, m, m/s) of the full observation.

    Azimuth: one beamwidth ``lambda / (L d)`` of the array aperture;
    range: ``c / (2 B)`` over the occupied bandwidth; velocity:
    ``c / (2 f_c M T_sym)`` over the dwell.
    """
    theta = math.degrees(config.wavelength_m
                         / (config.n_antennas * config.antenna_spacing_m))
    rng = SPEED_OF_LIGHT / (2.0 * config.n_subcarriers * config.subcarrier_spacing_hz)
    vel = SPEED_OF_LIGHT / (2.0 * config.carrier_freq_hz * config.n_symbols
                            * config.symbol_period_s)
    return (theta, rng, vel)


def phase_increments(config: SystemConfig, target: Target) -> tuple[float, float, float]:
    """Per-index phase steps across antennas, subcarriers and symbols.

    Returns ``(phi_theta, phi_r, phi_v)`` in radians: the phase advance
    between adjacent antennas, adjacent subcarriers and adjacent symbols
    produced by the target's azimuth, range and velocity respectively.
    """
    lam = config.wavelength_m
    phi_theta = 2.0 * math.pi * config.antenna_spacing_m * math.sin(
        math.radians(target.azimuth_deg)) / lam
    phi_r = -2.0 * math.pi * 2.0 * target.range_m * config.subcarrier_spacing_hz / SPEED_OF_LIGHT
    phi_v = 2.0 * math.pi * 2.0 * target.velocity_mps * config.carrier_freq_hz \
        * config.symbol_period_s / SPEED_OF_LIGHT
    return (phi_theta, phi_r, phi_v)


def _validate_config(config: SystemConfig, report: ValidationReport) -> None:
    if config.n_antennas < 2 or config.n_subcarriers < 2 or config.n_symbols < 2:
        report.add("bad-array-dims",
                   f"need at least 2 antennas/subcarriers/symbols, got {config.dims}")
    if config.antenna_spacing_m <= 0:
        report.add("bad-antenna-spacing", "antenna spacing must be positive")
    if config.noise_power < 0:
        report.add("bad-noise-power", "noise power must be non-negative")
    if config.subcarrier_spacing_hz <= 0:
        report.add("bad-subcarrier-spacing", "subcarrier spacing must be positive")
        return
    expected_t = 1.0 / config.subcarrier_spacing_hz
    if abs(config.data_duration_s - expected_t) > 1e-9 * expected_t:
        report.add("data-duration-mismatch",
                   f"data duration {config.data_duration_s} is not the reciprocal "
                   f"of the subcarrier spacing ({expected_t})")
    if config.carrier_freq_hz <= 10.0 * config.n_subcarriers * config.subcarrier_spacing_hz:
        report.add("carrier-too-low",
                   "carrier frequency must exceed 10x the occupied bandwidth")
    if config.cp_duration_s < 0:
        report.add("bad-cp-duration", "cyclic prefix duration must be non-negative")


def _validate_target(config: SystemConfig, target: Target, idx: int,
                     report: ValidationReport) -> None:
    tag = f"target {idx}"
    if not abs(target.azimuth_deg) < 90.0:
        report.add("azimuth-out-of-sector",
                   f"{tag}: azimuth {target.azimuth_deg} deg outside the +-90 deg sector")
    r_max = config.unambiguous_range_m
    if not 0.0 < target.range_m < r_max:
        report.add("range-out-of-unambiguous",
                   f"{tag}: range {target.range_m} m exceeds unambiguous limit ({r_max:g} m)")
    v_max = config.unambiguous_velocity_mps
    if not abs(target.velocity_mps) < v_max:
        report.add("velocity-out-of-unambiguous",
                   f"{tag}: velocity {target.velocity_mps} m/s exceeds unambiguous "
                   f"limit ({v_max:g} m/s)")
    doppler_drift = 2.0 * abs(target.velocity_mps) * config.carrier_freq_hz \
        / SPEED_OF_LIGHT * config.symbol_period_s
    if doppler_drift >= DOPPLER_DRIFT_WARN:
        report.warn("doppler-phase-drift",
                    f"{tag}: Doppler phase drift across one symbol is {doppler_drift:.2e}; "
                    "the constant-phase-per-symbol model degrades")


def validate(scenario: Scenario, smoothing: Optional[SmoothingConfig] = None) -> ValidationReport:
    """Check every scenario invariant and return a machine-readable report.

    Never raises and never mutates the input; an empty ``violations`` list
    means the scenario (and smoothing, when given) is usable.
    """
    report = ValidationReport()
    config = scenario.config
    _validate_config(config, report)
    if scenario.n_targets < 1:
        report.add("no-targets", "at least one target is required")
    for i, t in enumerate(scenario.targets):
        _validate_target(config, t, i, report)
    params = [(t.azimuth_deg, t.range_m, t.velocity_mps) for t in scenario.targets]
    if len(set(params)) != len(params):
        report.add("duplicate-targets",
                   "two targets share identical azimuth, range and velocity")
    if smoothing is not None:
        _validate_smoothing(scenario, smoothing, report)
    return report


def _validate_smoothing(scenario: Scenario, smoothing: SmoothingConfig,
                        report: ValidationReport) -> None:
    dims = scenario.config.dims
    names = ("antennas", "subcarriers", "symbols")
    for name, full, sub in zip(names, dims, smoothing.sub_dims):
        if sub < 1:
            report.add("smoothing-window-nonpositive",
                       f"smoothing window over {name} must be at least 1")
        elif sub > full:
            report.add("smoothing-window-exceeds-array",
                       f"smoothing window {sub} exceeds the {full} available {name}")
    if report.violations:
        return
    u = scenario.n_targets
    la, nu, mu = smoothing.sub_dims
    pair_products = (la * nu, la * mu, nu * mu)
    if u >= min(pair_products):
        report.add("too-many-targets",
                   f"{u} targets cannot be resolved with smoothed pair products "
                   f"{pair_products}")
    for name, sub in zip(names, smoothing.sub_dims):
        if sub <= u:
            report.add("smoothing-window-too-small",
                       f"smoothing window over {name} must exceed the target count {u}")


def require_valid(scenario: Scenario, smoothing: Optional[SmoothingConfig] = None) -> None:
    """Raise ``ScenarioError`` listing violation codes if the scenario is bad."""
    report = validate(scenario, smoothing)
    if not report.ok:
        detail = "; ".join(f"{v.code}: {v.message}" for v in report.violations)
        raise ScenarioError(f"invalid scenario: {detail}")


def _target_from_mapping(entry: dict) -> Target:
    backscatter = entry.get("backscatter")
    if backscatter is not None and not isinstance(backscatter, complex):
        backscatter = complex(backscatter)
    return Target(
        azimuth_deg=float(entry["azimuth_deg"]),
        range_m=float(entry["range_m"]),
        velocity_mps=float(entry["velocity_mps"]),
        backscatter=backscatter,
    )


def load_scenario(path) -> Scenario:
    """Read a scenario from a YAML file (see scenarios/ for the schema)."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict) or "system" not in raw or "targets" not in raw:
        raise ScenarioError(f"{path}: expected 'system' and 'targets' sections")
    sys_raw = dict(raw["system"])
    known = {"carrier_freq_hz", "subcarrier_spacing_hz", "n_antennas", "n_subcarriers",
             "n_symbols", "cp_duration_s", "data_duration_s", "antenna_spacing_m",
             "noise_power"}
    unknown = set(sys_raw) - known
    if unknown:
        raise ScenarioError(f"{path}: unknown system keys {sorted(unknown)}")
    for key in ("n_antennas", "n_subcarriers", "n_symbols"):
        sys_raw[key] = int(sys_raw[key])
    for key in known - {"n_antennas", "n_subcarriers", "n_symbols"}:
        if sys_raw.get(key) is not None:
            sys_raw[key] = float(sys_raw[key])
    config = SystemConfig(**sys_raw)
    targets = tuple(_target_from_mapping(t) for t in raw["targets"])
    return Scenario(config=config, targets=targets, snr_db=float(raw.get("snr_db", 0.0)))


def save_scenario(scenario: Scenario, path) -> None:
    """Write a scenario to the YAML schema read by ``load_scenario``."""
    doc = {
        "system": {
            "carrier_freq_hz": scenario.config.carrier_freq_hz,
            "subcarrier_spacing_hz": scenario.config.subcarrier_spacing_hz,
            "data_duration_s": scenario.config.data_duration_s,
            "cp_duration_s": scenario.config.cp_duration_s,
            "n_antennas": scenario.config.n_antennas,
            "n_subcarriers": scenario.config.n_subcarriers,
            "n_symbols": scenario.config.n_symbols,
            "antenna_spacing_m": scenario.config.antenna_spacing_m,
        },
        "snr_db": scenario.snr_db,
        "targets": [
            {
                "azimuth_deg": t.azimuth_deg,
                "range_m": t.range_m,
                "velocity_mps": t.velocity_mps,
                **({"backscatter": str(t.backscatter)} if t.backscatter is not None else {}),
            }
            for t in scenario.targets
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(doc, fh, sort_keys=False)


def with_snr(scenario: Scenario, snr_db: float) -> Scenario:
    return replace(scenario, snr_db=snr_db)
