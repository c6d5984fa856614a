"""Command line interface: ``ftsreg simulate|locreg|mean|autocov|run|ingest``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 too many
failed replications.
"""

from __future__ import annotations

import argparse
import dataclasses
import configparser
import csv
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .autocov import gamma_hat_adaptive
from .core import default_bandwidth_grid
from .errors import ConfigError, DataError, RunFailedError
from .harness import (
    ExperimentSpec,
    _parse_floats,
    emit_reports,
    ingest_common_csv,
    parse_pairs,
    run_experiment,
    sim_config_from_dict,
)
from .io import read_sample_csv, write_long_csv, write_wide_csv
from .locreg import DEFAULT_GAMMA, estimate_alpha
from .mean import mu_hat_adaptive
from .simulate import simulate_sample

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_RUN_FAILED = 0, 2, 3, 4

LOCREG_HEADER = ("t", "delta", "H_hat", "L2_hat", "alpha_hat", "raw_H", "flags")
MEAN_HEADER = (
    "t", "value", "h_star", "P_N", "ci_lo", "ci_hi", "regime_flag",
    "Sigma_hat", "S_mu_hat", "H_hat", "L2_hat", "sigma2_hat",
)
QQ_HEADER = ("qq_h", "qq_value", "qq_scale")
AUTOCOV_HEADER = ("s", "t", "lag", "gamma", "Gamma", "h_star", "P_N_ell")
MEAN_RISK_HEADER = ("h", "bias", "stochastic", "penalty", "total", "P_N")
GAMMA_RISK_HEADER = (
    "h", "bias_s", "bias_t", "noise_s", "noise_t", "noise_cross", "penalty", "total", "P_N_ell",
)


def _cell(v):
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return ""
    return v


class _Output:
    """CSV writer to a file, or to stdout when no path is given."""

    def __init__(self, path: Optional[str]):
        self.path = path

    def __enter__(self):
        if self.path:
            Path(self.path).parent.mkdir(parents=True, exist_ok=True)
            self.fh = open(self.path, "w", newline="", encoding="utf-8")
        else:
            self.fh = sys.stdout
        self.writer = csv.writer(self.fh, lineterminator="\n")
        return self

    def row(self, values):
        self.writer.writerow([_cell(v) for v in values])

    def __exit__(self, *exc):
        if self.fh is not sys.stdout:
            self.fh.close()
        return False


def _read_config_sections(path) -> dict:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None
    return {s: dict(cp[s]) for s in cp.sections()}


def _points(text: str):
    pts = _parse_floats(text, "--points")
    if not pts:
        raise ConfigError("--points must list at least one value")
    return pts


def _grid(sample, count: int):
    return default_bandwidth_grid(sample.n_curves, sample.lambda_hat, sample.domain, count=count)


def _write_risk(directory, name, header, rows):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    with _Output(str(d / name)) as out:
        out.row(header)
        for r in rows:
            out.row(r)


# ----------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> int:
    sections = _read_config_sections(args.config)
    if "sim" not in sections:
        raise ConfigError("config needs a [sim] section")
    cfg = sim_config_from_dict(sections["sim"])
    if args.seed is not None:
        cfg = cfg.with_(seed=args.seed)
    sample, paths = simulate_sample(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_long_csv(sample, out / "sample.csv")
    write_wide_csv(paths.grid, paths.paths, out / "truth.csv")
    return EXIT_OK


def cmd_locreg(args) -> int:
    points = _points(args.points)
    sample = read_sample_csv(args.input)
    with _Output(args.out) as out:
        out.row(LOCREG_HEADER)
        for t in points:
            r = estimate_alpha(sample, t, args.gamma, args.max_order, seed=args.seed or 0)
            flags = ";".join(f for f, on in (("shifted", r.shifted), ("saturated", r.saturated)) if on)
            out.row((r.t, r.delta_window, r.H_hat, r.L2_hat, r.alpha_hat, r.raw_H, flags))
    return EXIT_OK


def cmd_mean(args) -> int:
    points = _points(args.points)
    sample = read_sample_csv(args.input)
    grid = _grid(sample, args.grid_count)
    header = MEAN_HEADER + (QQ_HEADER if args.qq else ())
    with _Output(args.out) as out:
        out.row(header)
        for t in points:
            m = mu_hat_adaptive(
                sample, t, None, grid, args.ci_level, args.common_design or None,
                full_lags=args.full_lags, qq=args.qq, seed=args.seed or 0,
            )
            row = [m.t, m.value, m.h_star, m.P_N, m.ci_lo, m.ci_hi, m.regime or "na",
                   m.Sigma_hat, m.S_mu_hat, m.regularity.H_hat, m.regularity.L2_hat, m.sigma2_hat]
            if args.qq:
                row += [m.qq_h, m.qq_value, m.qq_scale]
            out.row(row)
            if args.risk_dir:
                _write_risk(args.risk_dir, f"risk_mean_t{t!r}.csv", MEAN_RISK_HEADER, m.profile.rows())
    return EXIT_OK


def cmd_autocov(args) -> int:
    pairs = parse_pairs(args.pairs, "--pairs")
    if not pairs:
        raise ConfigError("--pairs must list at least one s:t pair")
    sample = read_sample_csv(args.input)
    grid = _grid(sample, args.grid_count)
    with _Output(args.out) as out:
        out.row(AUTOCOV_HEADER)
        for s, t in pairs:
            e = gamma_hat_adaptive(
                sample, s, t, args.lag, grid, common_design=args.common_design or None,
                full_lags=args.full_lags, verbatim=args.verbatim, seed=args.seed or 0,
            )
            out.row((e.s, e.t, e.lag, e.gamma_value, e.Gamma_value, e.h_star, e.P_N_ell))
            if args.risk_dir:
                _write_risk(args.risk_dir, f"risk_gamma_s{s!r}_t{t!r}_lag{args.lag}.csv",
                            GAMMA_RISK_HEADER, e.profile.rows())
    return EXIT_OK


def cmd_run(args) -> int:
    spec = ExperimentSpec.from_file(args.config, seed=args.seed)
    if args.replications is not None:
        spec = dataclasses.replace(spec, replications=args.replications)
    result = run_experiment(spec, workers=args.threads)
    out = args.out or spec.output_dir
    emit_reports(result, out)
    if result.failed:
        raise RunFailedError(f"more than 10% of replications failed for some target; see {out}")
    return EXIT_OK


def cmd_ingest(args) -> int:
    sample, report = ingest_common_csv(args.input, args.schema, args.normalize_domain)
    for note in report.warnings:
        print(f"warning: {note}", file=sys.stderr)
    write_long_csv(sample, args.out)
    return EXIT_OK


# ----------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ftsreg", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_required=False):
        sp.add_argument("--seed", type=int, default=None, help="random seed")
        sp.add_argument("--out", required=out_required, help="output path")
        sp.add_argument("--threads", type=int, default=1, help="worker processes")

    sp = sub.add_parser("simulate", help="simulate a sample and its latent paths")
    sp.add_argument("--config", required=True, help="INI file with a [sim] section")
    common(sp, out_required=True)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("locreg", help="local regularity at given points")
    sp.add_argument("--input", required=True, help="sample CSV (long or wide)")
    sp.add_argument("--points", required=True, help="comma-separated t values")
    sp.add_argument("--gamma", type=float, default=DEFAULT_GAMMA)
    sp.add_argument("--max-order", type=int, default=3)
    common(sp)
    sp.set_defaults(func=cmd_locreg)

    def smoothing(sp):
        sp.add_argument("--input", required=True, help="sample CSV (long or wide)")
        sp.add_argument("--grid-count", type=int, default=51)
        sp.add_argument("--common-design", action="store_true",
                        help="force the common-design risk (default: from the input)")
        sp.add_argument("--full-lags", action="store_true",
                        help="use every lag in the dependence term")
        sp.add_argument("--risk-dir", default=None, help="directory for risk-profile CSVs")
        common(sp)

    sp = sub.add_parser("mean", help="adaptive mean estimates")
    smoothing(sp)
    sp.add_argument("--points", required=True, help="comma-separated t values")
    sp.add_argument("--ci-level", type=float, default=0.95)
    sp.add_argument("--qq", action="store_true", help="add undersmoothed values for Q-Q data")
    sp.set_defaults(func=cmd_mean)

    sp = sub.add_parser("autocov", help="adaptive lag-l autocovariance estimates")
    smoothing(sp)
    sp.add_argument("--pairs", required=True, help="comma-separated s:t pairs")
    sp.add_argument("--lag", type=int, default=1)
    sp.add_argument("--verbatim", action="store_true",
                    help="weight the lag-0 variance term by the t-windows")
    sp.set_defaults(func=cmd_autocov)

    sp = sub.add_parser("run", help="run a Monte Carlo experiment")
    sp.add_argument("--config", required=True, help="experiment INI file")
    sp.add_argument("--replications", type=int, default=None, help="override R")
    common(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("ingest", help="convert a common-design file to a long sample CSV")
    sp.add_argument("--input", required=True)
    sp.add_argument("--schema", choices=("long", "wide", "rows"), default=None)
    sp.add_argument("--normalize-domain", action=argparse.BooleanOptionalAction, default=True)
    common(sp, out_required=True)
    sp.set_defaults(func=cmd_ingest)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except RunFailedError as exc:
        print(f"ftsreg: run failed: {exc}", file=sys.stderr)
        return EXIT_RUN_FAILED
    except DataError as exc:
        print(f"ftsreg: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ConfigError as exc:
        print(f"ftsreg: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"ftsreg: I/O error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
