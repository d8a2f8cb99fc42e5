"""Command-line entry point ``singtime``.

Exit status: 0 on success (a blow-up is a result, not an error), 2 on usage
or configuration errors, 3 when a hard invariant is violated.

Output directory precedence: ``--out``, then ``$SINGTIME_OUT``, then the
current directory.  Flags given with ``--set key=value`` override keys of the
config file.  All randomness derives from ``--seed``: realization ``r`` uses
``SeedSequence(seed, spawn_key=(r, stream))`` with stream 0 for Brownian
increments and 1 for random initial data.
"""
from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from fractions import Fraction
from pathlib import Path
from typing import List, Optional, Sequence

from . import criticality as crit
from . import experiments as ex
from . import fractal
from . import noise as noise_mod
from . import spde

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INVARIANT = 3

log = logging.getLogger("singtime")


class ConfigError(Exception):
    pass


class InvariantError(Exception):
    pass


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------

def _floats(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from exc


def _term(text: str) -> crit.NonlinearityTerm:
    parts = text.split(",")
    if len(parts) != 2:
        raise ConfigError(f"--term expects rho,beta, got {text!r}")
    try:
        return crit.NonlinearityTerm(crit.as_rational(parts[0].strip()), crit.as_rational(parts[1].strip()))
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(str(exc)) from exc


def _out_dir(args) -> Path:
    out = args.out or os.environ.get("SINGTIME_OUT") or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _emit(args, lines: Sequence[str]) -> None:
    if not args.quiet:
        sys.stdout.write("\n".join(lines) + "\n")


def _write(path: Path, text: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _provenance(args, extra: Sequence[str] = ()) -> List[str]:
    lines = [f"# command = {args.command}", f"# seed = {args.seed}"]
    return lines + [f"# {line}" for line in extra]


def _load_sim_config(args) -> spde.SimConfig:
    try:
        cfg = spde.load_config(args.config) if args.config else spde.SimConfig()
        overrides = {}
        for item in args.set or []:
            if "=" not in item:
                raise ConfigError(f"--set expects key=value, got {item!r}")
            k, v = item.split("=", 1)
            overrides[k.strip()] = v.strip()
        if args.seed is not None:
            overrides.setdefault("seed", args.seed)
        cfg = spde.config_from_mapping(overrides, cfg)
        cfg.noise_field()
        return cfg
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {exc.filename}") from exc
    except (spde.SolverError, noise_mod.NoiseError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _setting_from_args(args) -> crit.Setting:
    terms = args.term or [crit.NonlinearityTerm(1, Fraction(3, 4))]
    try:
        return crit.Setting(
            crit.as_rational(args.p), crit.as_rational(args.alpha), tuple(terms), crit.as_rational(args.ell),
            args.mode, args.strict,
        )
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(str(exc)) from exc


def _add_setting_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--p", default="4", help="time integrability p (default 4)")
    p.add_argument("--alpha", default="0", help="time weight exponent alpha (default 0)")
    p.add_argument("--ell", default="2", help="parabolic scaling ell (default 2)")
    p.add_argument("--term", action="append", type=_term_arg, help="nonlinearity term rho,beta (repeatable)")
    p.add_argument("--mode", choices=[crit.COUPLED, crit.ADDITIVE], default=crit.COUPLED)
    p.add_argument("--strict", action="store_true", help="enforce the roughness window on beta")


def _term_arg(text: str) -> crit.NonlinearityTerm:
    try:
        return _term(text)
    except ConfigError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_criticality(args) -> int:
    setting = _setting_from_args(args)
    rep = crit.excess(setting)
    _emit(args, rep.lines() + [f"note: {n}" for n in rep.notes])
    return EXIT_OK


def cmd_serrin(args) -> int:
    try:
        res = crit.serrin_delta(crit.as_rational(args.p0), crit.as_rational(args.q0), crit.as_rational(args.gamma0))
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(str(exc)) from exc
    _emit(args, [f"serrin_sum = {res.serrin_sum}", f"delta0 = {res.delta0}", f"regime = {res.regime}"])
    return EXIT_OK


def cmd_nse_table(args) -> int:
    _emit(args, crit.nse_table())
    return EXIT_OK


def _scales(args) -> List[float]:
    if args.etas:
        return _floats(args.etas)
    if args.scheme == "dyadic-thirds":
        return [3.0**-k / 2 for k in range(1, args.levels + 1)]
    return [2.0**-k / 2 for k in range(1, args.levels + 1)]


def _read_set(path: str) -> fractal.FractalSet:
    try:
        return fractal.read_point_set(path)
    except FileNotFoundError as exc:
        raise ConfigError(f"point-set file not found: {path}") from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_dimension(args) -> int:
    A = _read_set(args.file)
    try:
        fit = fractal.dimension_fit(A, _scales(args))
    except fractal.FractalParameterError as exc:
        raise ConfigError(str(exc)) from exc
    lines = [f"components = {len(A)}", f"scheme = {args.scheme}"]
    lines += [f"eta = {e!r} N = {n}" for e, n in zip(fit.scales, fit.counts)]
    lines += [f"dimension = {fit.dimension:.6f}", f"r_squared = {fit.r_squared:.6f}"]
    _emit(args, lines)
    return EXIT_OK


def cmd_premeasure(args) -> int:
    A = _read_set(args.file)
    try:
        est = fractal.hausdorff_premeasure(A, args.s, args.eta)
    except fractal.FractalParameterError as exc:
        raise ConfigError(str(exc)) from exc
    _emit(args, [f"s = {est.s!r}", f"eta = {est.eta!r}", f"premeasure = {est.value!r}", f"pieces = {len(est.cover)}"])
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _load_sim_config(args)
    out = _out_dir(args)
    try:
        res = spde.simulate(cfg)
    except spde.SolverError as exc:
        raise InvariantError(str(exc)) from exc
    header = _provenance(args, spde.dump_config(cfg).splitlines())
    _write(out / "timeseries.csv", res.to_csv())
    if args.snapshot:
        spde.write_snapshot(res.final_state, out / "final_state.bin")
    rows = res.ledger.rows
    summary = header + [
        f"steps_recorded = {len(rows)}",
        f"t_final = {rows[-1][1]!r}",
        f"E_final = {rows[-1][2]!r}",
        f"residual_final = {rows[-1][6]!r}",
        f"max_divergence = {res.max_divergence!r}",
        f"blowup = {'none' if res.blowup is None else str(res.blowup)}",
    ]
    _write(out / "simulate_report.txt", "\n".join(summary) + "\n")
    _emit(args, summary)
    return EXIT_OK


def _lifetime_runner(args):
    if args.surrogate is not None:
        runner = ex.SurrogateRunner(args.surrogate, args.dt, args.t_end, args.sigma, args.seed or 0)
        desc = [f"surrogate x0 = {args.surrogate!r}", f"sigma = {args.sigma!r}", f"dt = {args.dt!r}",
                f"t_end = {args.t_end!r}"]
        return runner, desc
    cfg = _load_sim_config(args)
    return ex.SolverRunner(cfg), spde.dump_config(cfg).splitlines()


def cmd_lifetime(args) -> int:
    runner, desc = _lifetime_runner(args)
    out = _out_dir(args)
    thresholds = _floats(args.threshold)
    horizons = _floats(args.horizons)
    try:
        ests = ex.monte_carlo_tail(runner, args.ensemble, thresholds, horizons, C0=args.C0,
                                   jobs=args.jobs, seed=args.seed or 0)
    except ex.ExperimentError as exc:
        raise ConfigError(str(exc)) from exc
    except spde.SolverError as exc:
        raise InvariantError(str(exc)) from exc
    lines = _provenance(args, desc + [f"ensemble = {args.ensemble}"])
    for i, est in enumerate(ests):
        _write(out / f"lifetime_{i}.csv", est.to_csv())
        _write(out / f"lifetime_{i}_samples.csv", est.samples_csv())
        lines += [f"[threshold {i}]"] + est.lines()
    _write(out / "lifetime_report.txt", "\n".join(lines) + "\n")
    _emit(args, lines)
    return EXIT_OK


def cmd_singular(args) -> int:
    out = _out_dir(args)
    if args.fixture is not None:
        times, norms = ex.cantor_fixture(args.fixture, args.ensemble, args.background, args.seed or 0)
        norm_spec = "fixture"
        desc = [f"fixture = cantor level {args.fixture}", f"background = {args.background!r}"]
        scales = [3.0**-k / 2 for k in range(1, args.fixture + 1)]
    else:
        cfg = _load_sim_config(args)
        runner = ex.SolverRunner(cfg)
        try:
            trajs = ex.run_ensemble(runner, args.ensemble, args.jobs)
        except spde.SolverError as exc:
            raise InvariantError(str(exc)) from exc
        norm_spec = runner.norm_spec
        times, norms = ex.ensemble_norms(trajs, norm_spec)
        desc = spde.dump_config(cfg).splitlines()
        scales = None
    try:
        rep = ex.singular_proxy(times, norms, args.threshold_K, args.epsilon, scales, norm_spec=norm_spec)
    except ex.ExperimentError as exc:
        raise ConfigError(str(exc)) from exc
    lines = _provenance(args, desc + [f"ensemble = {args.ensemble}"]) + rep.lines()
    _write(out / "singular_flagged.csv", rep.to_csv())
    _write(out / "singular_report.txt", "\n".join(lines) + "\n")
    _emit(args, lines)
    return EXIT_OK


def cmd_tail_check(args) -> int:
    try:
        samples = ex.read_samples(args.samples)
    except FileNotFoundError as exc:
        raise ConfigError(f"samples file not found: {args.samples}") from exc
    except (ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc
    setting = _setting_from_args(args)
    window = tuple(_floats(args.window)) if args.window else None
    if window is not None and len(window) != 2:
        raise ConfigError("--window expects lo,hi")
    horizons = _floats(args.horizons) if args.horizons else []
    try:
        est = ex.estimate_from_samples(samples, math.nan, horizons, "file", window, args.seed or 0)
    except ex.ExperimentError as exc:
        raise ConfigError(str(exc)) from exc
    check = ex.tail_exponent_check(est, setting)
    _emit(args, _provenance(args, [f"samples = {args.samples}"]) + [
        line for line in est.lines()[2:] if not line.startswith(("fitted_exponent", "ci95"))
    ] + check.lines())
    return EXIT_OK


def cmd_validate_noise(args) -> int:
    try:
        field = noise_mod.build_kraichnan(args.d, args.k_max, args.gamma, args.amplitude, args.seed or 0)
        if args.lie:
            field = noise_mod.build_lie(field)
    except noise_mod.NoiseError as exc:
        raise ConfigError(str(exc)) from exc
    try:
        rep = noise_mod.validate(field, args.grid_n)
    except noise_mod.NoiseError as exc:
        raise InvariantError(str(exc)) from exc
    lines = [f"fields = {len(field)}", f"label = {field.label or 'none'}"] + rep.lines()
    _emit(args, lines)
    return EXIT_OK if rep.within_bound else EXIT_INVARIANT


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed (default: config value or 0)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for ensembles")
    common.add_argument("--out", default=None, help="output directory (fallback $SINGTIME_OUT, then .)")
    common.add_argument("--quiet", action="store_true", help="suppress the summary on stdout")

    parser = argparse.ArgumentParser(prog="singtime", description="Singular-time laboratory for stochastic PDEs.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("criticality", parents=[common], help="excess from criticality and dimension bound")
    _add_setting_flags(p)
    p.set_defaults(func=cmd_criticality)

    p = sub.add_parser("serrin", parents=[common], help="dimension bound under a Serrin-type condition")
    p.add_argument("--p0", required=True)
    p.add_argument("--q0", required=True)
    p.add_argument("--gamma0", default="0")
    p.set_defaults(func=cmd_serrin)

    p = sub.add_parser("nse-table", parents=[common], help="3D NSE dimension-bound table")
    p.set_defaults(func=cmd_nse_table)

    for name, func in (("dimension", cmd_dimension), ("premeasure", cmd_premeasure)):
        p = sub.add_parser(name, parents=[common])
        p.add_argument("file", help="point-set file (one point or 'lo hi' per line)")
        if name == "dimension":
            p.add_argument("--scheme", choices=["dyadic-thirds", "dyadic"], default="dyadic")
            p.add_argument("--levels", type=int, default=12)
            p.add_argument("--etas", default=None, help="explicit comma-separated decreasing radii")
        else:
            p.add_argument("--s", type=float, required=True)
            p.add_argument("--eta", type=float, required=True)
        p.set_defaults(func=func)

    def sim_flags(p):
        p.add_argument("config", nargs="?", default=None, help="flat key = value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")

    p = sub.add_parser("simulate", parents=[common], help="run the stochastic solver")
    sim_flags(p)
    p.add_argument("--snapshot", action="store_true", help="also write final_state.bin")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("lifetime", parents=[common], help="Monte Carlo lifetime tail")
    sim_flags(p)
    p.add_argument("--ensemble", type=int, default=16)
    p.add_argument("--threshold", required=True, help="comma-separated norm thresholds k")
    p.add_argument("--horizons", required=True, help="comma-separated horizons T")
    p.add_argument("--C0", type=float, default=1.0)
    p.add_argument("--surrogate", type=float, default=None, metavar="X0", help="use the 0-D surrogate")
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--t-end", type=float, default=2.0)
    p.set_defaults(func=cmd_lifetime)

    p = sub.add_parser("singular", parents=[common], help="singular-time proxy report")
    sim_flags(p)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--threshold-K", type=float, required=True)
    p.add_argument("--ensemble", type=int, default=8)
    p.add_argument("--fixture", type=int, default=None, metavar="LEVEL", help="Cantor fixture instead of the solver")
    p.add_argument("--background", type=float, default=0.0)
    p.set_defaults(func=cmd_singular)

    p = sub.add_parser("tail-check", parents=[common], help="compare a fitted tail exponent with p*Exc")
    p.add_argument("samples", help="CSV with a 'tau' column")
    p.add_argument("--window", default=None, help="fit window lo,hi")
    p.add_argument("--horizons", default=None)
    _add_setting_flags(p)
    p.set_defaults(func=cmd_tail_check)

    p = sub.add_parser("validate-noise", parents=[common], help="build and check a Kraichnan family")
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--k-max", type=int, default=2)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--amplitude", type=float, default=1.0)
    p.add_argument("--lie", action="store_true")
    p.add_argument("--grid-n", type=int, default=32)
    p.set_defaults(func=cmd_validate_noise)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        sys.stderr.write(f"singtime: configuration error: {exc}\n")
        return EXIT_CONFIG
    except InvariantError as exc:
        sys.stderr.write(f"singtime: invariant violated: {exc}\n")
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
