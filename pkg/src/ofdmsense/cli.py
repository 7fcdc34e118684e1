"""Command-line front end: sweep, timing, crb and synth subcommands.

Exit codes: 0 on success, 2 for configuration problems (bad flags or an
invalid scenario), 3 when an estimator's failure count crosses the
threshold during a sweep.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

from . import bench
from .crb import crb_multi_target, crb_single_closed_form
from .music2d import LmSettings
from .scenario import (Scenario, ScenarioError, SmoothingConfig, load_scenario,
                       validate, with_snr)
from .signal_model import save_observation, synthesize

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_FAILURES = 3

FAILURE_FRACTION = 0.5

FIXED_PRESET = SmoothingConfig(sub_antennas=6, sub_subcarriers=40, sub_symbols=25)


class CliError(Exception):
    pass


def parse_snr_grid(text: str) -> tuple[float, ...]:
    """Either a comma list '-10,0,10' or a range 'start:step:stop'."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise CliError(f"bad SNR range {text!r}; expected start:step:stop")
        start, step, stop = (float(p) for p in parts)
        if step <= 0:
            raise CliError("SNR range step must be positive")
        values = []
        v = start
        while v <= stop + 1e-9:
            values.append(round(v, 9))
            v += step
        return tuple(values)
    return tuple(sorted(float(p) for p in text.split(",")))


def parse_smoothing(text: str, scenario: Scenario) -> SmoothingConfig:
    if text == "fixed":
        return FIXED_PRESET
    if text == "ratios":
        return SmoothingConfig.from_ratios(scenario.config)
    parts = text.split(",")
    if len(parts) != 3:
        raise CliError(f"bad smoothing {text!r}; expected 'fixed', 'ratios' or 'L,N,M'")
    return SmoothingConfig(*(int(p) for p in parts))


def parse_dims_grid(text: str) -> list[tuple[int, int, int]]:
    """Semicolon-separated L,N,M triples: '16,128,80;8,88,48'."""
    out = []
    for chunk in text.split(";"):
        parts = chunk.split(",")
        if len(parts) != 3:
            raise CliError(f"bad dims {chunk!r}; expected L,N,M")
        out.append(tuple(int(p) for p in parts))
    return out


def _load(path: str) -> Scenario:
    scenario = load_scenario(path)
    report = validate(scenario)
    if not report.ok:
        raise CliError("invalid scenario: "
                       + "; ".join(f"{v.code}: {v.message}" for v in report.violations))
    return scenario


def _lm_from_args(args) -> LmSettings:
    return LmSettings(q_max=args.lm_qmax, eps1=args.lm_eps1, eps2=args.lm_eps2,
                      tau=args.lm_tau)


def _add_lm_flags(parser) -> None:
    parser.add_argument("--lm-qmax", type=int, default=LmSettings.q_max)
    parser.add_argument("--lm-eps1", type=float, default=LmSettings.eps1)
    parser.add_argument("--lm-eps2", type=float, default=LmSettings.eps2)
    parser.add_argument("--lm-tau", type=float, default=LmSettings.tau)


def _cmd_sweep(args) -> int:
    scenario = _load(args.scenario)
    smoothing = parse_smoothing(args.smoothing, scenario)
    spec = bench.RunSpec(
        scenario=scenario,
        snr_grid_db=parse_snr_grid(args.snr),
        smoothing=smoothing,
        trials=args.trials,
        master_seed=args.seed,
        estimators=tuple(args.estimators.split(",")),
        lm=_lm_from_args(args),
        measure_time=not args.no_timing,
    )
    rows = bench.run_sweep(spec, workers=args.workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    bench.emit_csv(rows, out / "rmse.csv")
    bench.emit_dat(rows, out / "rmse.dat")
    for row in rows:
        print(f"{row.estimator:>11s}  snr={row.snr_db:+6.1f} dB  "
              f"rmse=({row.rmse_theta_deg:.4g} deg, {row.rmse_range_m:.4g} m, "
              f"{row.rmse_velocity_mps:.4g} m/s)  failures={row.failures}")
    print(f"wrote {out / 'rmse.csv'}")
    threshold = FAILURE_FRACTION * spec.trials
    if any(row.failures > threshold for row in rows):
        print("estimator failure threshold exceeded", file=sys.stderr)
        return EXIT_FAILURES
    return EXIT_OK


def _cmd_timing(args) -> int:
    scenario = _load(args.scenario)
    spec = bench.RunSpec(
        scenario=scenario,
        snr_grid_db=(scenario.snr_db,),
        smoothing=SmoothingConfig.from_ratios(scenario.config),
        trials=1,
        master_seed=args.seed,
        estimators=tuple(args.estimators.split(",")),
        lm=_lm_from_args(args),
    )
    rows = bench.run_timing(spec, parse_dims_grid(args.dims), repeats=args.repeats)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    bench.emit_timing_csv(rows, out / "timing.csv")
    for row in rows:
        print(f"dims={row.dims}  {row.estimator:>11s}  "
              f"median={row.median_wall_time_s:.3f} s  "
              f"ratio={row.ratio_vs_pi2dmusic:.2f}  {row.status}")
    print(f"wrote {out / 'timing.csv'}")
    return EXIT_OK


def _cmd_crb(args) -> int:
    scenario = _load(args.scenario)
    for snr in parse_snr_grid(args.snr):
        scen = with_snr(scenario, snr)
        result = crb_multi_target(scen)
        gamma = 10.0 ** (snr / 10.0)
        print(f"snr={snr:+.1f} dB")
        for i, target in enumerate(scen.targets):
            multi = result.per_target[i]
            single = crb_single_closed_form(scen.config, target, gamma)
            print(f"  target {i}: rcrb=({math.degrees(math.sqrt(multi[0])):.4g} deg, "
                  f"{math.sqrt(multi[1]):.4g} m, {math.sqrt(multi[2]):.4g} m/s)  "
                  f"single-target=({math.degrees(math.sqrt(single[0])):.4g} deg, "
                  f"{math.sqrt(single[1]):.4g} m, {math.sqrt(single[2]):.4g} m/s)")
    return EXIT_OK


def _cmd_synth(args) -> int:
    scenario = _load(args.scenario)
    obs = synthesize(scenario, args.seed)
    save_observation(obs, args.out)
    print(f"wrote {args.out} ({obs.data.size} samples, dims {obs.dims})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ofdmsense",
        description="Joint azimuth/range/velocity estimation benchmarks for "
                    "monostatic OFDM sensing.")
    sub = parser.add_subparsers(dest="command", required=True)

    sweep = sub.add_parser("sweep", help="Monte-Carlo RMSE versus SNR")
    sweep.add_argument("--scenario", required=True)
    sweep.add_argument("--snr", required=True, help="'a,b,c' or 'start:step:stop' in dB")
    sweep.add_argument("--trials", type=int, default=200)
    sweep.add_argument("--seed", type=int, default=0)
    sweep.add_argument("--estimators", default="pi2dmusic",
                       help=f"comma list from {bench.ESTIMATORS}")
    sweep.add_argument("--smoothing", required=True,
                       help="'fixed', 'ratios' or explicit 'L,N,M' windows")
    sweep.add_argument("--out", default="out")
    sweep.add_argument("--workers", type=int, default=1)
    sweep.add_argument("--no-timing", action="store_true",
                       help="emit nan wall times for byte-reproducible output")
    _add_lm_flags(sweep)
    sweep.set_defaults(func=_cmd_sweep)

    timing = sub.add_parser("timing", help="median wall time per estimator")
    timing.add_argument("--scenario", required=True)
    timing.add_argument("--dims", required=True, help="'L,N,M;L,N,M;...'")
    timing.add_argument("--estimators", default="pi2dmusic,grid_oracle")
    timing.add_argument("--repeats", type=int, default=5)
    timing.add_argument("--seed", type=int, default=0)
    timing.add_argument("--out", default="out")
    _add_lm_flags(timing)
    timing.set_defaults(func=_cmd_timing)

    crb = sub.add_parser("crb", help="print bounds for a scenario")
    crb.add_argument("--scenario", required=True)
    crb.add_argument("--snr", default="0")
    crb.set_defaults(func=_cmd_crb)

    synth = sub.add_parser("synth", help="write one observation to a binary file")
    synth.add_argument("--scenario", required=True)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--out", required=True)
    synth.set_defaults(func=_cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ScenarioError, bench.BenchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
