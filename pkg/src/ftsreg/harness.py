"""Monte Carlo experiments, truth oracles, real-data ingestion and report files.

An experiment is described by a flat INI file with three sections::

    [experiment]
    name = table1
    replications = 100
    seed = 20240611
    points = 0.2, 0.7
    pairs = 0.2:0.4
    lag = 1
    tasks = mean, locreg

    [sim]
    N = 150
    lam = 40
    model = far1_mfbm_logistic_h
    mean = sine

    [estimation]
    full_lags = true

Every replication ``r`` draws its sample from the stream ``(seed, r)`` only,
so results do not depend on the number of worker processes.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import io
import json
import math
import os
import platform
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy
from scipy import stats

from . import __version__
from .autocov import gamma_hat_adaptive
from .core import Design, DomainInterval, FunctionalSample, default_bandwidth_grid
from .errors import ConfigError, DataError, FtsregError
from .locreg import DEFAULT_GAMMA, estimate_alpha, estimate_regularity
from .mean import mu_hat_adaptive
from .simulate import (
    HurstFunction,
    MeanFunction,
    Model,
    SimConfig,
    _interpolate,
    far1_stream,
    latent_grid,
    LatentPaths,
    make_rng,
    simulate_sample,
)

__all__ = [
    "ExperimentSpec",
    "ReportRow",
    "ReportTable",
    "ExperimentResult",
    "IngestReport",
    "run_experiment",
    "run_replication",
    "gamma_truth_oracle",
    "ingest_common_csv",
    "emit_reports",
    "summarize",
    "TASKS",
]

TASKS = ("locreg", "mean", "autocov", "clt")
FAILURE_CAP = 0.10


# ----------------------------------------------------------------------------
# configuration


def _parse_bool(value: str, key: str) -> bool:
    v = str(value).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {value!r}")


def _parse_floats(value: str, key: str) -> tuple:
    items = [x for x in (s.strip() for s in str(value).split(",")) if x]
    try:
        return tuple(float(x) for x in items)
    except ValueError:
        raise ConfigError(f"{key}: expected comma-separated numbers, got {value!r}") from None


def parse_pairs(value: str, key: str = "pairs") -> tuple:
    out = []
    for item in (s.strip() for s in str(value).split(",")):
        if not item:
            continue
        parts = item.split(":")
        if len(parts) != 2:
            raise ConfigError(f"{key}: pairs are written s:t, got {item!r}")
        try:
            out.append((float(parts[0]), float(parts[1])))
        except ValueError:
            raise ConfigError(f"{key}: bad pair {item!r}") from None
    return tuple(out)


def _format_hurst(h: HurstFunction) -> str:
    if h.kind == "constant":
        return f"constant:{h.value!r}"
    return f"logistic:{h.lo!r},{h.hi!r},{h.k!r},{h.t0!r}"


def _parse_hurst(value: str) -> HurstFunction:
    kind, _, params = str(value).partition(":")
    kind = kind.strip()
    nums = _parse_floats(params, "hurst") if params else ()
    try:
        if kind == "constant":
            return HurstFunction.constant(*nums)
        if kind == "logistic":
            return HurstFunction.logistic(*nums)
    except TypeError:
        raise ConfigError(f"hurst: wrong number of parameters in {value!r}") from None
    raise ConfigError(f"hurst: unknown kind {kind!r}")


def _format_mean(m: MeanFunction) -> str:
    return f"constant:{m.value!r}" if m.kind == "constant" else m.kind


def _parse_mean(value: str) -> MeanFunction:
    kind, _, param = str(value).partition(":")
    kind = kind.strip()
    if kind == "constant":
        return MeanFunction("constant", float(param or 0.0))
    return MeanFunction(kind)


@dataclass(frozen=True)
class ExperimentSpec:
    """A Monte Carlo experiment: simulation setup, targets, tasks and estimation options."""

    sim: SimConfig
    replications: int = 100
    points: tuple = (0.2,)
    pairs: tuple = ()
    lag: int = 1
    tasks: tuple = ("mean",)
    output_dir: str = "out"
    seed: int = 0
    name: str = "experiment"
    gamma: float = DEFAULT_GAMMA
    max_order: int = 0
    grid_count: int = 51
    ci_level: float = 0.95
    full_lags: bool = False
    lag_cap: Optional[int] = None
    centered_increments: bool = True
    nu2_centered: bool = False
    verbatim_gamma: bool = False
    gamma_truth_n: int = 20000

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(float(p) for p in self.points))
        object.__setattr__(self, "pairs", tuple((float(a), float(b)) for a, b in self.pairs))
        object.__setattr__(self, "tasks", tuple(self.tasks))
        if self.replications < 1:
            raise ConfigError("replications must be at least 1")
        if not self.tasks:
            raise ConfigError("tasks must not be empty")
        bad = [t for t in self.tasks if t not in TASKS]
        if bad:
            raise ConfigError(f"unknown task(s) {bad}; choose from {TASKS}")
        needs_points = any(t in self.tasks for t in ("locreg", "mean", "clt"))
        if needs_points and not self.points:
            raise ConfigError("tasks locreg/mean/clt need at least one point")
        if "autocov" in self.tasks and not self.pairs:
            raise ConfigError("task autocov needs at least one pair")
        if not (self.points or self.pairs):
            raise ConfigError("targets must not be empty")
        if self.lag < 1 or self.lag >= self.sim.N:
            raise ConfigError("lag must satisfy 1 <= lag < N")

    # --- serialisation -----------------------------------------------------

    def to_dict(self) -> dict:
        s = self.sim
        return {
            "experiment": {
                "name": self.name,
                "replications": str(self.replications),
                "seed": str(self.seed),
                "points": ", ".join(repr(p) for p in self.points),
                "pairs": ", ".join(f"{a!r}:{b!r}" for a, b in self.pairs),
                "lag": str(self.lag),
                "tasks": ", ".join(self.tasks),
                "output_dir": self.output_dir,
            },
            "sim": {
                "N": str(s.N),
                "lam": str(s.lam),
                "model": s.model.value,
                "mean": _format_mean(s.mu),
                "psi_norm": repr(s.psi_norm),
                "L": repr(s.L),
                "sigma": repr(s.sigma),
                "burn_in": str(s.burn_in),
                "eval_grid_size": str(s.eval_grid_size),
                "operator_norm": s.operator_norm,
                "design": s.design.value,
                "hurst": _format_hurst(s.hurst),
            },
            "estimation": {
                "gamma": repr(self.gamma),
                "max_order": str(self.max_order),
                "grid_count": str(self.grid_count),
                "ci_level": repr(self.ci_level),
                "full_lags": str(self.full_lags).lower(),
                "lag_cap": "" if self.lag_cap is None else str(self.lag_cap),
                "centered_increments": str(self.centered_increments).lower(),
                "nu2_centered": str(self.nu2_centered).lower(),
                "verbatim_gamma": str(self.verbatim_gamma).lower(),
                "gamma_truth_n": str(self.gamma_truth_n),
            },
        }

    def to_ini(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        cp.read_dict(self.to_dict())
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_dict(cls, data: dict, seed: Optional[int] = None) -> "ExperimentSpec":
        exp = dict(data.get("experiment", {}))
        sim = dict(data.get("sim", {}))
        est = dict(data.get("estimation", {}))
        try:
            known_sim = {"N", "lam", "model", "mean", "psi_norm", "L", "sigma", "burn_in",
                         "eval_grid_size", "operator_norm", "design", "hurst", "seed"}
            unknown = set(sim) - known_sim
            if unknown:
                raise ConfigError(f"[sim]: unknown key(s) {sorted(unknown)}")
            if "N" not in sim or "lam" not in sim:
                raise ConfigError("[sim] needs N and lam")
            model = Model(sim.get("model", Model.FAR1_MFBM_LOGISTIC_H.value))
            sim_cfg = SimConfig(
                N=int(sim["N"]),
                lam=int(sim["lam"]),
                model=model,
                mu=_parse_mean(sim.get("mean", "sine")),
                psi_norm=float(sim.get("psi_norm", 0.5)),
                L=float(sim.get("L", 2.0)),
                sigma=float(sim.get("sigma", 0.25)),
                burn_in=int(sim.get("burn_in", 100)),
                eval_grid_size=int(sim.get("eval_grid_size", 1024)),
                operator_norm=sim.get("operator_norm", "spectral"),
                design=Design(sim.get("design", "independent")),
                hurst=_parse_hurst(sim["hurst"]) if sim.get("hurst") else None,
            )
            known_exp = {"name", "replications", "seed", "points", "pairs", "lag", "tasks", "output_dir"}
            unknown = set(exp) - known_exp
            if unknown:
                raise ConfigError(f"[experiment]: unknown key(s) {sorted(unknown)}")
            known_est = {"gamma", "max_order", "grid_count", "ci_level", "full_lags", "lag_cap",
                         "centered_increments", "nu2_centered", "verbatim_gamma", "gamma_truth_n"}
            unknown = set(est) - known_est
            if unknown:
                raise ConfigError(f"[estimation]: unknown key(s) {sorted(unknown)}")
            tasks = tuple(t.strip() for t in exp.get("tasks", "mean").split(",") if t.strip())
            lag_cap = est.get("lag_cap", "")
            return cls(
                sim=sim_cfg,
                replications=int(exp.get("replications", 100)),
                points=_parse_floats(exp.get("points", ""), "points"),
                pairs=parse_pairs(exp.get("pairs", "")),
                lag=int(exp.get("lag", 1)),
                tasks=tasks,
                output_dir=exp.get("output_dir", "out"),
                seed=int(exp.get("seed", 0)) if seed is None else int(seed),
                name=exp.get("name", "experiment"),
                gamma=float(est.get("gamma", DEFAULT_GAMMA)),
                max_order=int(est.get("max_order", 0)),
                grid_count=int(est.get("grid_count", 51)),
                ci_level=float(est.get("ci_level", 0.95)),
                full_lags=_parse_bool(est.get("full_lags", "false"), "full_lags"),
                lag_cap=int(lag_cap) if str(lag_cap).strip() else None,
                centered_increments=_parse_bool(est.get("centered_increments", "true"), "centered_increments"),
                nu2_centered=_parse_bool(est.get("nu2_centered", "false"), "nu2_centered"),
                verbatim_gamma=_parse_bool(est.get("verbatim_gamma", "false"), "verbatim_gamma"),
                gamma_truth_n=int(est.get("gamma_truth_n", 20000)),
            )
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_ini(cls, text: str, seed: Optional[int] = None) -> "ExperimentSpec":
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse config: {exc}") from None
        return cls.from_dict({s: dict(cp[s]) for s in cp.sections()}, seed)

    @classmethod
    def from_file(cls, path, seed: Optional[int] = None) -> "ExperimentSpec":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_ini(text, seed)

    @property
    def build_id(self) -> str:
        digest = hashlib.sha1(self.to_ini().encode("utf-8")).hexdigest()[:10]
        return f"{__version__}+{digest}"

    def bandwidth_grid(self):
        """Fixed grid from the nominal ``(N, lam)`` so profiles align across replications."""
        return default_bandwidth_grid(self.sim.N, float(self.sim.lam), count=self.grid_count)


def sim_config_from_dict(data: dict, seed: Optional[int] = None) -> SimConfig:
    """``SimConfig`` from a ``[sim]`` section alone (used by the ``simulate`` command)."""
    spec = ExperimentSpec.from_dict(
        {"sim": data, "experiment": {"points": "0.5", "tasks": "mean"}}, seed
    )
    return spec.sim


# ----------------------------------------------------------------------------
# truth oracle for cross-products


def _cache_dir(cache_dir=None) -> Path:
    if cache_dir is not None:
        return Path(cache_dir)
    env = os.environ.get("FTSREG_CACHE")
    return Path(env) if env else Path.home() / ".cache" / "ftsreg"


def gamma_truth_oracle(
    cfg: SimConfig,
    grid_pairs: Sequence,
    lag: int = 1,
    N_big: int = 20000,
    seed: int = 20240611,
    cache_dir=None,
    use_cache: bool = True,
) -> dict:
    """Long-run noiseless approximation of the lag-``l`` autocovariance ``Gamma_l(s, t)``.

    The FAR(1) series is simulated with zero mean, interpolated at ``s`` and
    ``t`` exactly as observations are, and ``X_n(s) X_{n+l}(t)`` is averaged.
    Returns ``{(s, t): (value, standard_error)}``; the naive standard error
    ignores serial dependence of the products.  Results are cached on disk
    keyed by every input that affects them.
    """
    pairs = [(float(s), float(t)) for s, t in grid_pairs]
    base = cfg.with_(mu=MeanFunction("zero"), sigma=0.0, N=max(cfg.N, 2))
    key_src = json.dumps(
        {
            "model": base.model.value, "psi_norm": base.psi_norm, "L": base.L,
            "burn_in": base.burn_in, "G": base.eval_grid_size, "norm": base.operator_norm,
            "hurst": _format_hurst(base.hurst), "pairs": pairs, "lag": int(lag),
            "N_big": int(N_big), "seed": int(seed), "version": 1,
        },
        sort_keys=True,
    )
    key = hashlib.sha1(key_src.encode()).hexdigest()[:16]
    path = _cache_dir(cache_dir) / f"gamma_truth_{key}.json"
    if use_cache and path.exists():
        try:
            stored = json.loads(path.read_text())
            return {(a, b): (v, se) for a, b, v, se in stored["values"]}
        except (OSError, ValueError, KeyError):
            pass
    grid = latent_grid(base.eval_grid_size)
    s_pts = np.array([p[0] for p in pairs])
    t_pts = np.array([p[1] for p in pairs])
    xs_all, xt_all = [], []
    for block in far1_stream(base, make_rng(np.random.SeedSequence([seed, 0xA5])), N_big):
        paths = LatentPaths(grid, block)
        rows = np.arange(block.shape[0])
        xs_all.append(np.stack([_interpolate(paths, rows, np.full(rows.size, s)) for s in s_pts], axis=1))
        xt_all.append(np.stack([_interpolate(paths, rows, np.full(rows.size, t)) for t in t_pts], axis=1))
    xs = np.vstack(xs_all)
    xt = np.vstack(xt_all)
    prods = xs[: xs.shape[0] - lag] * xt[lag:]
    means = prods.mean(axis=0)
    ses = prods.std(axis=0, ddof=1) / math.sqrt(prods.shape[0])
    out = {p: (float(m), float(e)) for p, m, e in zip(pairs, means, ses)}
    if use_cache:
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(".tmp")
            tmp.write_text(json.dumps({"key": key_src, "values": [[a, b, v, e] for (a, b), (v, e) in out.items()]}))
            tmp.replace(path)
        except OSError:
            pass
    return out


# ----------------------------------------------------------------------------
# replications


def _record(rep, task, target, estimate=math.nan, truth=math.nan, h_star=math.nan,
            ci_lo=math.nan, ci_hi=math.nan, error="", **extra):
    return {
        "replication": rep, "task": task, "target": target, "estimate": float(estimate),
        "truth": float(truth), "h_star": float(h_star), "ci_lo": float(ci_lo),
        "ci_hi": float(ci_hi), "error": error, "extra": extra,
    }


def _fmt_target(x) -> str:
    if isinstance(x, tuple):
        return f"{x[0]!r}:{x[1]!r}"
    return repr(float(x))


def _error_tag(exc: BaseException) -> str:
    return f"{type(exc).__name__}: {exc}"


def run_replication(spec: ExperimentSpec, rep: int, truths: Optional[dict] = None) -> list:
    """All task results of replication ``rep`` as a list of record dicts.

    Failures are caught per target and recorded with an error tag, so one
    failing target never affects the others.
    """
    cfg = spec.sim
    records = []
    try:
        sample, _ = simulate_sample(cfg, [spec.seed, rep])
    except Exception as exc:  # noqa: BLE001 - isolation boundary
        tag = _error_tag(exc)
        for t in spec.points:
            for task in spec.tasks:
                if task != "autocov":
                    records.append(_record(rep, task, _fmt_target(t), error=tag))
        for pair in spec.pairs if "autocov" in spec.tasks else ():
            records.append(_record(rep, "autocov", _fmt_target(pair), error=tag))
        return records
    grid = spec.bandwidth_grid()
    regs, means = {}, {}

    def reg_at(t):
        if t not in regs:
            if spec.max_order > 0:
                regs[t] = estimate_alpha(sample, t, spec.gamma, spec.max_order, seed=rep,
                                         centered=spec.centered_increments)
            else:
                regs[t] = estimate_regularity(sample, t, spec.gamma, seed=rep,
                                              centered=spec.centered_increments)
        return regs[t]

    def mean_at(t, qq=False):
        key = (t, qq)
        if key not in means:
            means[key] = mu_hat_adaptive(
                sample, t, reg_at(t), grid, spec.ci_level, lag_cap=spec.lag_cap,
                full_lags=spec.full_lags, qq=qq, seed=rep,
            )
        return means[key]

    want_qq = "clt" in spec.tasks
    for t in spec.points:
        target = _fmt_target(t)
        if "locreg" in spec.tasks:
            try:
                r = reg_at(t)
                records.append(_record(
                    rep, "locreg", target, r.H_hat, float(cfg.hurst(t)), r.presmoothing_bandwidth,
                    L2_hat=r.L2_hat, L2_truth=cfg.L**2, delta_order=r.delta_order, raw_H=r.raw_H,
                ))
            except Exception as exc:  # noqa: BLE001
                records.append(_record(rep, "locreg", target, error=_error_tag(exc)))
        if "mean" in spec.tasks or want_qq:
            try:
                m = mean_at(t, want_qq)
                truth = float(cfg.mu(t))
                if "mean" in spec.tasks:
                    pr = m.profile
                    records.append(_record(
                        rep, "mean", target, m.value, truth, m.h_star, m.ci_lo, m.ci_hi,
                        P_N=m.P_N, Sigma_hat=m.Sigma_hat, S_mu_hat=m.S_mu_hat,
                        risk=[pr.h.tolist(), pr.bias.tolist(), pr.stochastic.tolist(),
                              pr.penalty.tolist(), pr.total.tolist()],
                    ))
                if want_qq:
                    z = (m.qq_value - truth) / m.qq_scale if m.qq_scale > 0 else math.nan
                    records.append(_record(rep, "clt", target, z, 0.0, m.qq_h))
            except Exception as exc:  # noqa: BLE001
                tag = _error_tag(exc)
                if "mean" in spec.tasks:
                    records.append(_record(rep, "mean", target, error=tag))
                if want_qq:
                    records.append(_record(rep, "clt", target, error=tag))
    if "autocov" in spec.tasks:
        for s, t in spec.pairs:
            target = _fmt_target((s, t))
            try:
                e = gamma_hat_adaptive(
                    sample, s, t, spec.lag, grid, reg_at(s), reg_at(t),
                    mean_s=mean_at(s, False) if (s, False) in means else None,
                    mean_t=mean_at(t, False) if (t, False) in means else None,
                    nu2_centered=spec.nu2_centered, verbatim=spec.verbatim_gamma,
                    lag_cap=spec.lag_cap, full_lags=spec.full_lags, seed=rep,
                )
                big_truth = truths.get((s, t), (math.nan, math.nan))[0] if truths else math.nan
                gamma_truth = big_truth + float(cfg.mu(s)) * float(cfg.mu(t))
                records.append(_record(
                    rep, "autocov", target, e.gamma_value, gamma_truth, e.h_star,
                    Gamma=e.Gamma_value, Gamma_truth=big_truth, P_N_ell=e.P_N_ell,
                ))
            except Exception as exc:  # noqa: BLE001
                records.append(_record(rep, "autocov", target, error=_error_tag(exc)))
    return records


def _run_chunk(args):
    spec, reps, truths = args
    return [run_replication(spec, r, truths) for r in reps]


# ----------------------------------------------------------------------------
# aggregation


REPORT_COLUMNS = (
    "N", "lam", "task", "target", "truth", "bias", "sd", "rmse", "coverage",
    "median_h_star", "n_ok", "n_failed", "ks",
)


@dataclass(frozen=True)
class ReportRow:
    N: int
    lam: int
    task: str
    target: str
    truth: float
    bias: float
    sd: float
    rmse: float
    coverage: float
    median_h_star: float
    n_ok: int
    n_failed: int
    ks: float = math.nan

    def as_list(self):
        return [getattr(self, c) for c in REPORT_COLUMNS]


def summarize(estimates, truth) -> tuple:
    """``(bias, sd, rmse)`` with the ``R - 1`` denominator for ``sd``.

    ``rmse^2 = bias^2 + sd^2 (R - 1) / R``; a single value gives ``sd = 0``.
    """
    est = np.asarray(estimates, dtype=float)
    r = est.size
    if r == 0:
        return math.nan, math.nan, math.nan
    bias = float(np.mean(est - truth))
    sd = float(np.std(est, ddof=1)) if r > 1 else 0.0
    rmse = math.sqrt(bias * bias + sd * sd * (r - 1) / r)
    return bias, sd, rmse


@dataclass(frozen=True, eq=False)
class ReportTable:
    rows: tuple = ()
    metadata: dict = field(default_factory=dict)

    def find(self, task: str, target) -> ReportRow:
        key = target if isinstance(target, str) else _fmt_target(target)
        for row in self.rows:
            if row.task == task and row.target == key:
                return row
        raise KeyError((task, key))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for row in self.rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row.as_list()])
        return buf.getvalue()


@dataclass(frozen=True, eq=False)
class ExperimentResult:
    spec: ExperimentSpec
    table: ReportTable
    records: tuple
    failed: bool

    def values(self, task: str, target, key: str = "estimate") -> np.ndarray:
        """Per-replication values (successful ones only, replication order)."""
        tgt = target if isinstance(target, str) else _fmt_target(target)
        out = []
        for rec in self.records:
            if rec["task"] == task and rec["target"] == tgt and not rec["error"]:
                out.append(rec[key] if key in rec else rec["extra"][key])
        return np.array(out, dtype=float)


def _aggregate(spec: ExperimentSpec, records: list) -> tuple:
    groups: dict = {}
    for rec in records:
        groups.setdefault((rec["task"], rec["target"]), []).append(rec)
    rows = []
    failed = False
    order = {t: i for i, t in enumerate(TASKS)}
    for (task, target), recs in sorted(groups.items(), key=lambda kv: (order[kv[0][0]], kv[0][1])):
        ok = [r for r in recs if not r["error"]]
        n_failed = len(recs) - len(ok)
        if n_failed > FAILURE_CAP * len(recs):
            failed = True
        est = np.array([r["estimate"] for r in ok], dtype=float)
        truth = ok[0]["truth"] if ok else math.nan
        ks = math.nan
        if task == "clt":
            finite = est[np.isfinite(est)]
            bias, sd, rmse = summarize(finite, 0.0)
            if finite.size:
                ks = float(stats.kstest(finite, "norm").statistic)
        else:
            bias, sd, rmse = summarize(est, truth)
        coverage = math.nan
        if task == "mean" and ok:
            lo = np.array([r["ci_lo"] for r in ok])
            hi = np.array([r["ci_hi"] for r in ok])
            coverage = float(np.mean((lo <= truth) & (truth <= hi)))
        hstar = np.array([r["h_star"] for r in ok], dtype=float)
        med_h = float(np.median(hstar)) if hstar.size else math.nan
        rows.append(ReportRow(spec.sim.N, spec.sim.lam, task, target, float(truth), bias, sd, rmse,
                              coverage, med_h, len(ok), n_failed, ks))
        if task == "locreg" and ok:
            l2 = np.array([r["extra"]["L2_hat"] for r in ok])
            l2_truth = ok[0]["extra"]["L2_truth"]
            b, s, m = summarize(l2, l2_truth)
            rows.append(ReportRow(spec.sim.N, spec.sim.lam, "locreg_L2", target, float(l2_truth), b, s, m,
                                  math.nan, med_h, len(ok), n_failed))
        if task == "autocov" and ok:
            g = np.array([r["extra"]["Gamma"] for r in ok])
            gt = ok[0]["extra"]["Gamma_truth"]
            b, s, m = summarize(g, gt)
            rows.append(ReportRow(spec.sim.N, spec.sim.lam, "autocov_Gamma", target, float(gt), b, s, m,
                                  math.nan, med_h, len(ok), n_failed))
    return rows, failed


def run_experiment(spec: ExperimentSpec, workers: int = 1, truths: Optional[dict] = None,
                   cache_dir=None) -> ExperimentResult:
    """Run every replication, aggregate, and flag the run failed above 10% failures per row.

    ``workers > 1`` distributes replications over processes; the output is
    identical for any number of workers.
    """
    if "autocov" in spec.tasks and truths is None:
        truths = gamma_truth_oracle(spec.sim, spec.pairs, spec.lag, spec.gamma_truth_n, cache_dir=cache_dir)
    reps = list(range(spec.replications))
    workers = max(1, int(workers))
    if workers == 1:
        per_rep = [run_replication(spec, r, truths) for r in reps]
    else:
        chunks = [reps[i::workers] for i in range(workers)]
        chunks = [c for c in chunks if c]
        per_rep_map = {}
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for chunk, res in zip(chunks, pool.map(_run_chunk, [(spec, c, truths) for c in chunks])):
                per_rep_map.update(zip(chunk, res))
        per_rep = [per_rep_map[r] for r in reps]
    records = [rec for recs in per_rep for rec in recs]
    rows, failed = _aggregate(spec, records)
    metadata = {"name": spec.name, "build_id": spec.build_id, "seed": spec.seed, "R": spec.replications}
    return ExperimentResult(spec, ReportTable(tuple(rows), metadata), tuple(records), failed)


# ----------------------------------------------------------------------------
# report files


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def emit_reports(result: ExperimentResult, directory) -> dict:
    """Write the report files and return their paths keyed by kind.

    * ``bias_sd.csv``: one row per (task, target);
    * ``estimates.csv``: every replication's estimate, truth, bandwidth and error tag;
    * ``boxplot.csv``: per-replication ``H_hat`` and ``L2_hat``;
    * ``qq.csv``: standardised mean residuals;
    * ``risk_profiles.csv``: mean risk components over replications, one row per (t, h);
    * ``manifest.json``: configuration, build id, seed and library versions.
    """
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    spec = result.spec
    paths = {k: out / f for k, f in (
        ("bias_sd", "bias_sd.csv"), ("estimates", "estimates.csv"), ("boxplot", "boxplot.csv"),
        ("qq", "qq.csv"), ("risk_profiles", "risk_profiles.csv"), ("manifest", "manifest.json"),
    )}
    paths["bias_sd"].write_text(result.table.to_csv(), encoding="utf-8")
    _write_csv(paths["estimates"],
               ("replication", "task", "target", "estimate", "truth", "h_star", "ci_lo", "ci_hi", "error"),
               ([r["replication"], r["task"], r["target"], r["estimate"], r["truth"], r["h_star"],
                 r["ci_lo"], r["ci_hi"], r["error"]] for r in result.records))
    _write_csv(paths["boxplot"], ("replication", "t", "H_hat", "L2_hat", "delta_order"),
               ([r["replication"], r["target"], r["estimate"], r["extra"]["L2_hat"], r["extra"]["delta_order"]]
                for r in result.records if r["task"] == "locreg" and not r["error"]))
    _write_csv(paths["qq"], ("replication", "t", "z"),
               ([r["replication"], r["target"], r["estimate"]]
                for r in result.records if r["task"] == "clt" and not r["error"]))
    profile_rows = []
    by_target: dict = {}
    for r in result.records:
        if r["task"] == "mean" and not r["error"]:
            by_target.setdefault(r["target"], []).append(r["extra"]["risk"])
    for target in sorted(by_target):
        arr = np.array(by_target[target], dtype=float)  # reps x 5 x grid
        arr[~np.isfinite(arr)] = np.nan
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            avg = np.nanmean(arr, axis=0)
        for j in range(avg.shape[1]):
            profile_rows.append([target, *[float(v) for v in avg[:, j]]])
    _write_csv(paths["risk_profiles"], ("t", "h", "bias", "stochastic", "penalty", "total"), profile_rows)
    manifest = {
        "name": spec.name,
        "build_id": spec.build_id,
        "seed": spec.seed,
        "replications": spec.replications,
        "failed": result.failed,
        "config": spec.to_dict(),
        "versions": {
            "ftsreg": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
    }
    paths["manifest"].write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return paths


# ----------------------------------------------------------------------------
# ingestion of common-design files


MISSING_TOKENS = {"", "na", "nan", "null", "?", "none"}


@dataclass(frozen=True)
class IngestReport:
    n_read: int
    n_kept: int
    dropped: tuple = ()
    filled: int = 0
    warnings: tuple = ()


def _cell(value: str, where: str) -> float:
    v = value.strip()
    if v.lower() in MISSING_TOKENS:
        return math.nan
    try:
        return float(v)
    except ValueError:
        raise DataError(f"cannot parse {value!r} at {where}") from None


def _read_rows(path) -> list:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            return [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None


def _matrix_long(rows) -> tuple:
    header = [c.strip() for c in rows[0]]
    if header != ["curve_index", "t", "y"]:
        raise DataError("long schema needs header curve_index,t,y")
    data: dict = {}
    times = set()
    for k, row in enumerate(rows[1:], start=2):
        if len(row) != 3:
            raise DataError(f"line {k}: expected 3 fields, got {len(row)}")
        try:
            n = int(row[0])
        except ValueError:
            raise DataError(f"line {k}: bad curve index {row[0]!r}") from None
        t = _cell(row[1], f"line {k}")
        if math.isnan(t):
            raise DataError(f"line {k}: missing time value")
        data.setdefault(n, {})[t] = _cell(row[2], f"line {k}")
        times.add(t)
    grid = np.array(sorted(times))
    ids = sorted(data)
    mat = np.full((len(ids), grid.size), np.nan)
    pos = {t: j for j, t in enumerate(grid.tolist())}
    for i, n in enumerate(ids):
        for t, y in data[n].items():
            mat[i, pos[t]] = y
    return grid, mat


def _matrix_wide(rows) -> tuple:
    width = len(rows[0])
    times, cols = [], []
    for k, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise DataError(f"line {k}: expected {width} fields, got {len(row)}")
        t = _cell(row[0], f"line {k}")
        if math.isnan(t):
            raise DataError(f"line {k}: missing time value")
        times.append(t)
        cols.append([_cell(v, f"line {k}") for v in row[1:]])
    t = np.array(times)
    if np.any(np.diff(t) <= 0):
        raise DataError("time column must be strictly increasing")
    return t, np.array(cols, dtype=float).T


def _matrix_rows(rows) -> tuple:
    header = [c.strip() for c in rows[0]]
    skip = 0
    try:
        float(header[0])
    except ValueError:
        if header[0].lower() in ("curve", "curve_index", "id", "date", "day"):
            skip = 1
    labels = header[skip:]
    width = len(header)
    data = []
    for k, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise DataError(f"line {k}: expected {width} fields, got {len(row)}")
        data.append([_cell(v, f"line {k}") for v in row[skip:]])
    try:
        t = np.array([float(x) for x in labels])
        if np.any(np.diff(t) <= 0):
            raise DataError("time labels must be strictly increasing")
    except ValueError:
        t = np.arange(1, len(labels) + 1, dtype=float)
    return t, np.array(data, dtype=float)


def ingest_common_csv(
    path,
    schema: Optional[str] = None,
    normalize_domain: bool = True,
    missing_threshold: float = 0.05,
) -> tuple:
    """Read a common-design file into a ``FunctionalSample``.

    ``schema`` is ``"long"`` (``curve_index,t,y``), ``"wide"`` (a ``t``
    column then one column per curve) or ``"rows"`` (one curve per row, one
    column per time point, e.g. 1440 minutes per day); ``None`` detects it
    from the header.  Curves missing more than ``missing_threshold`` of their
    points are dropped with a warning; the others are filled by linear
    interpolation (nearest value at the ends).  With ``normalize_domain`` the
    ``M`` design points become ``i / M``, ``i = 1..M``.

    Returns ``(sample, IngestReport)``.
    """
    rows = _read_rows(path)
    if len(rows) < 2:
        raise DataError(f"{path}: no data rows")
    head = [c.strip() for c in rows[0]]
    if schema is None:
        if head == ["curve_index", "t", "y"]:
            schema = "long"
        elif head[0] == "t":
            schema = "wide"
        else:
            schema = "rows"
    if schema == "long":
        t, mat = _matrix_long(rows)
    elif schema == "wide":
        if head[0] != "t":
            raise DataError("wide schema needs a leading 't' column")
        t, mat = _matrix_wide(rows)
    elif schema == "rows":
        t, mat = _matrix_rows(rows)
    else:
        raise ConfigError(f"unknown schema {schema!r}")
    if t.size < 2:
        raise DataError("need at least two design points")
    n_read = mat.shape[0]
    keep, dropped, notes = [], [], []
    filled = 0
    idx = np.arange(t.size)
    for i, row in enumerate(mat):
        miss = np.isnan(row)
        frac = miss.mean()
        if frac > missing_threshold or miss.all():
            dropped.append(i)
            notes.append(f"curve {i} dropped: {frac:.1%} of points missing")
            continue
        if miss.any():
            row = row.copy()
            row[miss] = np.interp(idx[miss], idx[~miss], row[~miss])
            filled += int(miss.sum())
        keep.append(row)
    for note in notes:
        warnings.warn(note, RuntimeWarning, stacklevel=2)
    if len(keep) < 2:
        raise DataError("fewer than two usable curves after dropping incomplete ones")
    if normalize_domain:
        times = np.arange(1, t.size + 1, dtype=float) / t.size
        domain = DomainInterval()
    else:
        times = t
        lo = min(0.0, float(t[0]) - (float(t[1]) - float(t[0])))
        domain = DomainInterval(lo, float(t[-1]))
    sample = FunctionalSample.from_arrays([times] * len(keep), keep, Design.COMMON, domain)
    return sample, IngestReport(n_read, len(keep), tuple(dropped), filled, tuple(notes))
