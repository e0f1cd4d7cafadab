import copy

import pandas as pd
import pytest

from robust_sco.errors import InvalidArgumentError, UnsupportedFamilyError
from robust_sco.tools.bench import (
    RECORD_COLUMNS,
    TIMING_COLUMN,
    load_experiment_spec,
    read_records_csv,
    run_experiment,
    spec_from_dict,
    threads_from_env,
    validate_pairings,
    write_records_csv,
)

BASE = {
    "experiment": {"name": "quad_small", "algorithm": "robust_pgd", "trials": 20, "base_seed": 7},
    "distribution": {"family": "quadratic", "w_star": [0.3], "D": 2.0},
    "adversary": {"kind": "mean_shift", "magnitude": 50.0},
    "grid": {"d": [2, 3], "n": [200], "epsilon": [0.0, 0.1], "sigma": [1.0]},
    "optimizer": {"T": 20},
}

TOML = """
[experiment]
name = "toml_small"
algorithm = "robust_net_pgd"
trials = 2

[distribution]
family = "quadratic"
D = 2.0

[adversary]
kind = "worst_direction"

[grid]
d = [2]
n = [100]
epsilon = [0.05, 0.1]
sigma = [0.5]
"""


def _doc(**changes):
    doc = copy.deepcopy(BASE)
    for path, value in changes.items():
        table, key = path.split("__")
        doc[table][key] = value
    return doc


def test_cells_follow_grid_order():
    spec = spec_from_dict(BASE)
    cells = spec.cells()
    assert [(c.d, c.epsilon) for c in cells] == [(2, 0.0), (2, 0.1), (3, 0.0), (3, 0.1)]
    assert [c.index for c in cells] == [0, 1, 2, 3]


def test_run_produces_one_record_per_cell_and_trial():
    records = run_experiment(spec_from_dict(BASE), threads=1)
    assert len(records) == 80
    assert [(r.cell, r.trial) for r in records[:3]] == [(0, 0), (0, 1), (0, 2)]
    assert all(r.n_corrupted == (20 if r.epsilon == 0.1 else 0) for r in records)
    assert all(r.T == 20 for r in records)
    assert all(r.excess_risk >= -1e-12 for r in records)


def test_noise_free_uncorrupted_cell_has_zero_excess():
    doc = _doc(grid__sigma=[0.0], grid__epsilon=[0.0], grid__d=[3], experiment__trials=2)
    records = run_experiment(spec_from_dict(doc), threads=1)
    assert all(r.excess_risk == pytest.approx(0.0, abs=1e-15) for r in records)


def test_csv_is_byte_identical_across_runs_and_threads(tmp_path):
    doc = _doc(experiment__trials=3)
    spec = spec_from_dict(doc)
    run_experiment(spec, out=tmp_path / "a.csv", threads=1)
    run_experiment(spec, out=tmp_path / "b.csv", threads=1)
    run_experiment(spec, out=tmp_path / "c.csv", threads=4)
    a = (tmp_path / "a.csv").read_bytes()
    assert a == (tmp_path / "b.csv").read_bytes()
    assert a == (tmp_path / "c.csv").read_bytes()


def test_csv_columns(tmp_path):
    records = run_experiment(spec_from_dict(_doc(experiment__trials=1)), threads=1)
    plain = pd.read_csv(write_records_csv(records, tmp_path / "plain.csv"))
    assert list(plain.columns) == RECORD_COLUMNS
    timed = read_records_csv(write_records_csv(records, tmp_path / "timed.csv", include_timing=True))
    assert list(timed.columns) == RECORD_COLUMNS + [TIMING_COLUMN]
    assert (timed[TIMING_COLUMN] > 0).all()


def test_read_records_rejects_foreign_csv(tmp_path):
    path = tmp_path / "other.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(InvalidArgumentError):
        read_records_csv(path)
    with pytest.raises(InvalidArgumentError):
        read_records_csv(tmp_path / "missing.csv")


def test_tv_swap_needs_spike_distribution():
    doc = _doc(adversary__kind="tv_swap")
    with pytest.raises(InvalidArgumentError):
        validate_pairings(spec_from_dict(doc))


def test_net_pgd_rejects_nonsmooth_family():
    doc = _doc(experiment__algorithm="robust_net_pgd")
    doc["distribution"] = {"family": "abs_loss", "spread": 0.5}
    with pytest.raises(UnsupportedFamilyError):
        validate_pairings(spec_from_dict(doc))


@pytest.mark.parametrize("changes", [
    {"grid__epsilon": [0.6]},
    {"grid__n": [1]},
    {"experiment__algorithm": "sgd"},
    {"distribution__radius": 2.0},
    {"adversary__kind": "teleport"},
])
def test_schema_rejects_bad_configs(changes):
    with pytest.raises(InvalidArgumentError):
        spec_from_dict(_doc(**changes))


def test_load_toml_config(tmp_path):
    path = tmp_path / "exp.toml"
    path.write_text(TOML)
    spec = load_experiment_spec(path)
    assert spec.name == "toml_small"
    assert spec.tau == 0.05
    records = run_experiment(spec, threads=1)
    assert len(records) == 4
    assert all(r.filter_calls >= 1 for r in records)


def test_load_reports_missing_and_malformed_files(tmp_path):
    with pytest.raises(InvalidArgumentError):
        load_experiment_spec(tmp_path / "nope.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("[experiment\nname = ")
    with pytest.raises(InvalidArgumentError):
        load_experiment_spec(bad)


def test_shipped_configs_are_valid(repo_root):
    paths = sorted((repo_root / "configs").glob("*.toml"))
    assert paths
    for path in paths:
        validate_pairings(load_experiment_spec(path))


def test_thread_count_from_environment(monkeypatch):
    monkeypatch.delenv("ROBUST_SCO_THREADS", raising=False)
    assert threads_from_env() == 1
    monkeypatch.setenv("ROBUST_SCO_THREADS", "3")
    assert threads_from_env() == 3
    for raw in ("zero", "0"):
        monkeypatch.setenv("ROBUST_SCO_THREADS", raw)
        with pytest.raises(InvalidArgumentError):
            threads_from_env()


def test_records_carry_filter_diagnostics():
    records = run_experiment(spec_from_dict(_doc(experiment__trials=2)), threads=1)
    for r in records:
        assert 0.0 < r.filter_mass <= 1.0 + 1e-12
        assert r.filter_top_eig >= 0.0
    naive = run_experiment(spec_from_dict(_doc(experiment__trials=1, experiment__algorithm="naive_mean_pgd")),
                           threads=1)
    assert all(r.filter_calls == 0 for r in naive)
    assert all(pd.isna(r.filter_mass) and pd.isna(r.filter_top_eig) for r in naive)


def test_trace_dir_gets_pgd_and_filter_traces(tmp_path):
    doc = _doc(experiment__trials=1, grid__d=[2], grid__epsilon=[0.1])
    run_experiment(spec_from_dict(doc), threads=1, trace_dir=tmp_path / "traces")
    pgd = pd.read_csv(tmp_path / "traces" / "quad_small_cell0_trial0_pgd.csv")
    assert list(pgd.columns) == ["t", "grad_norm", "risk", "dist_to_opt"]
    assert len(pgd) == 20
    assert pgd["risk"].notna().all()
    filt = pd.read_csv(tmp_path / "traces" / "quad_small_cell0_trial0_filter.csv")
    assert list(filt.columns) == ["iter", "mass", "top_eig", "t", "m", "removed"]
    assert len(filt) >= 1
