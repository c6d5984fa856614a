import dataclasses
import json
import math
import warnings

import numpy as np
import pytest

from ftsreg import harness
from ftsreg.errors import ConfigError, DataError
from ftsreg.harness import (
    ExperimentSpec,
    emit_reports,
    gamma_truth_oracle,
    ingest_common_csv,
    parse_pairs,
    run_experiment,
    summarize,
)
from ftsreg.simulate import HurstFunction, SimConfig


def small_spec(**kw):
    cfg = SimConfig(N=40, lam=30, burn_in=20, eval_grid_size=128, seed=0)
    base = dict(replications=3, points=(0.3, 0.7), pairs=((0.3, 0.7),),
                tasks=("locreg", "mean", "autocov", "clt"), gamma_truth_n=2000)
    base.update(kw)
    base.setdefault("sim", cfg)
    return ExperimentSpec(**base)


# --- summaries ------------------------------------------------------------------------


def test_summarize_single_replication():
    assert summarize([1.5], 1.0) == (0.5, 0.0, 0.5)


def test_summarize_hand_case():
    bias, sd, rmse = summarize([1.0, 2.0, 3.0], 1.0)
    assert bias == 1.0 and sd == 1.0
    assert rmse == pytest.approx(math.sqrt(1 + 2 / 3))


def test_summarize_empty():
    assert all(math.isnan(v) for v in summarize([], 0.0))


# --- configuration ----------------------------------------------------------------------


def test_ini_round_trip():
    spec = small_spec(lag_cap=7, full_lags=True, sim=SimConfig(
        N=50, lam=20, hurst=HurstFunction.logistic(0.2, 0.7, 12.0, 0.4), design="common"))
    again = ExperimentSpec.from_ini(spec.to_ini())
    assert again.to_ini() == spec.to_ini() and again.build_id == spec.build_id


def test_seed_override_changes_build_id():
    spec = small_spec()
    other = ExperimentSpec.from_ini(spec.to_ini(), seed=5)
    assert other.seed == 5 and other.build_id != spec.build_id


@pytest.mark.parametrize("text", [
    "[sim]\nN=10\n",
    "[sim]\nN=10\nlam=5\nfoo=1\n[experiment]\npoints=0.5\n",
    "[sim]\nN=10\nlam=5\n[experiment]\npoints=0.5\ntasks=nope\n",
    "[sim]\nN=10\nlam=5\n[experiment]\ntasks=autocov\n",
    "[sim]\nN=10\nlam=5\n[experiment]\npoints=0.5\nlag=10\n",
    "[sim]\nN=10\nlam=5\n[experiment]\npoints=0.5\n[estimation]\nfull_lags=maybe\n",
    "[sim]\nN=ten\nlam=5\n[experiment]\npoints=0.5\n",
    "not an ini file",
])
def test_bad_configs(text):
    with pytest.raises(ConfigError):
        ExperimentSpec.from_ini(text)


def test_parse_pairs():
    assert parse_pairs("0.2:0.4, 0.5:0.5") == ((0.2, 0.4), (0.5, 0.5))
    with pytest.raises(ConfigError):
        parse_pairs("0.2-0.4")


# --- truth oracle -------------------------------------------------------------------------------


def test_gamma_oracle_zero_operator_is_zero(tmp_path):
    cfg = SimConfig(N=10, lam=10, psi_norm=0.0, burn_in=5, eval_grid_size=64)
    out = gamma_truth_oracle(cfg, [(0.3, 0.7), (0.5, 0.5)], N_big=4000, cache_dir=tmp_path)
    for value, se in out.values():
        assert abs(value) < 4 * se


def test_gamma_oracle_cache(tmp_path):
    cfg = SimConfig(N=10, lam=10, burn_in=5, eval_grid_size=64)
    a = gamma_truth_oracle(cfg, [(0.3, 0.7)], N_big=500, cache_dir=tmp_path)
    assert len(list(tmp_path.glob("gamma_truth_*.json"))) == 1
    b = gamma_truth_oracle(cfg, [(0.3, 0.7)], N_big=500, cache_dir=tmp_path)
    assert a == b
    assert gamma_truth_oracle(cfg, [(0.3, 0.7)], N_big=500, use_cache=False) == a


# --- experiments ------------------------------------------------------------------------------------


def test_run_rows_and_reports(tmp_path):
    result = run_experiment(small_spec())
    assert not result.failed
    tasks = {(r.task, r.target) for r in result.table.rows}
    assert ("locreg_L2", "0.3") in tasks and ("autocov_Gamma", "0.3:0.7") in tasks
    mean = result.table.find("mean", 0.3)
    assert mean.n_ok == 3 and 0 <= mean.coverage <= 1
    assert not math.isnan(result.table.find("clt", 0.7).ks)
    paths = emit_reports(result, tmp_path)
    for p in paths.values():
        assert p.exists()
    manifest = json.loads(paths["manifest"].read_text())
    assert manifest["build_id"] == result.spec.build_id
    assert ExperimentSpec.from_dict(manifest["config"]).to_ini() == result.spec.to_ini()
    header = paths["risk_profiles"].read_text().splitlines()[0]
    assert header == "t,h,bias,stochastic,penalty,total"


def test_single_replication_has_zero_sd():
    result = run_experiment(small_spec(replications=1, tasks=("mean",)))
    assert result.table.find("mean", 0.3).sd == 0.0


def test_deterministic_across_workers(tmp_path):
    spec = small_spec(replications=4)
    one = emit_reports(run_experiment(spec, workers=1), tmp_path / "a")
    two = emit_reports(run_experiment(spec, workers=2), tmp_path / "b")
    for key in ("bias_sd", "estimates", "boxplot", "qq", "risk_profiles", "manifest"):
        assert one[key].read_bytes() == two[key].read_bytes()


def test_failure_isolation(monkeypatch):
    real = harness.mu_hat_adaptive

    def flaky(sample, t, *args, **kwargs):
        if t == 0.7:
            raise RuntimeError("boom")
        return real(sample, t, *args, **kwargs)

    monkeypatch.setattr(harness, "mu_hat_adaptive", flaky)
    result = run_experiment(small_spec(tasks=("locreg", "mean")))
    assert result.failed
    bad = result.table.find("mean", 0.7)
    assert bad.n_failed == 3 and bad.n_ok == 0
    assert result.table.find("mean", 0.3).n_failed == 0
    assert result.table.find("locreg", 0.7).n_ok == 3
    tags = {r["error"] for r in result.records if r["error"]}
    assert tags == {"RuntimeError: boom"}


def test_failures_within_cap_do_not_fail_run(monkeypatch):
    real = harness.mu_hat_adaptive

    def flaky(sample, t, *args, seed=0, **kwargs):
        if seed == 0:
            raise RuntimeError("first replication only")
        return real(sample, t, *args, seed=seed, **kwargs)

    monkeypatch.setattr(harness, "mu_hat_adaptive", flaky)
    result = run_experiment(small_spec(replications=11, tasks=("mean",), points=(0.5,)))
    row = result.table.find("mean", 0.5)
    assert row.n_failed == 1 and not result.failed


def test_empty_records_give_header_only_csvs(tmp_path):
    spec = small_spec(tasks=("mean",))
    result = harness.ExperimentResult(spec, harness.ReportTable(), (), False)
    paths = emit_reports(result, tmp_path)
    for key in ("bias_sd", "estimates", "boxplot", "qq", "risk_profiles"):
        assert len(paths[key].read_text().splitlines()) == 1


def test_fixed_grid_aligns_profiles():
    result = run_experiment(small_spec(tasks=("mean",)))
    grids = [tuple(r["extra"]["risk"][0]) for r in result.records]
    assert len(set(grids)) == 1


# --- ingestion --------------------------------------------------------------------------------------


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_ingest_wide(tmp_path):
    p = write(tmp_path, "w.csv", "t,a,b,c\n1,1,2,3\n2,4,5,6\n3,7,8,9\n4,1,1,1\n")
    sample, report = ingest_common_csv(p)
    assert sample.n_curves == 3 and report.n_kept == 3 and not report.dropped
    np.testing.assert_array_equal(sample.curves[0].times, [0.25, 0.5, 0.75, 1.0])
    np.testing.assert_array_equal(sample.curves[1].values, [2, 5, 8, 1])


def test_ingest_keeps_times_without_normalisation(tmp_path):
    p = write(tmp_path, "w.csv", "t,a,b\n1,1,2\n2,4,5\n3,7,8\n")
    sample, _ = ingest_common_csv(p, normalize_domain=False)
    np.testing.assert_array_equal(sample.curves[0].times, [1, 2, 3])


def test_ingest_drops_all_missing_curve(tmp_path):
    p = write(tmp_path, "w.csv", "t,a,b,c\n1,1,NA,3\n2,4,NA,6\n3,7,NA,9\n")
    with pytest.warns(RuntimeWarning, match="curve 1 dropped"):
        sample, report = ingest_common_csv(p)
    assert report.dropped == (1,) and sample.n_curves == 2


def test_ingest_fills_sparse_gaps(tmp_path):
    m = 40
    rows = ",".join(str(k) for k in range(1, m + 1))
    a = ",".join("NA" if k == 10 else str(float(k)) for k in range(m))
    b = ",".join(str(2.0 * k) for k in range(m))
    p = write(tmp_path, "r.csv", f"{rows}\n{a}\n{b}\n")
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        sample, report = ingest_common_csv(p, schema="rows")
    assert report.filled == 1 and sample.curves[0].values[10] == 10.0


def test_ingest_rows_1440(tmp_path):
    header = "day," + ",".join(str(k) for k in range(1, 1441))
    rng = np.random.default_rng(0)
    lines = [header] + [f"d{i}," + ",".join(f"{v:.4f}" for v in rng.normal(size=1440)) for i in range(3)]
    sample, report = ingest_common_csv(write(tmp_path, "days.csv", "\n".join(lines) + "\n"))
    assert sample.n_curves == 3 and sample.curves[0].times.size == 1440
    assert sample.curves[0].times[-1] == 1.0


def test_ingest_long(tmp_path):
    p = write(tmp_path, "l.csv", "curve_index,t,y\n0,1,5\n0,2,6\n1,1,7\n1,2,8\n")
    sample, _ = ingest_common_csv(p)
    np.testing.assert_array_equal(sample.curves[1].values, [7, 8])


@pytest.mark.parametrize("text", [
    "t,a,b\n2,1,2\n1,4,5\n",
    "t,a,b\n1,1,x\n2,4,5\n",
    "t,a,b\n1,1\n2,4,5\n",
    "t,a\n1,1\n2,4\n",
])
def test_ingest_errors(tmp_path, text):
    with pytest.raises(DataError):
        ingest_common_csv(write(tmp_path, "bad.csv", text))


def test_ingest_unknown_schema(tmp_path):
    with pytest.raises(ConfigError):
        ingest_common_csv(write(tmp_path, "w.csv", "t,a,b\n1,1,2\n2,3,4\n"), schema="json")
