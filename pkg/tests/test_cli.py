import json
import math

import numpy as np
import pytest

from ordcausal.cli import main
from ordcausal.estimators import estimate_all_four
from ordcausal.panel import load_csv, to_csv
from ordcausal.simulate import SIMULATION_ROLES, ScenarioConfig, simulate_dataset

SCENARIO = """
n_subjects = 60
confounded = false
gamma_d = 0.2
gamma_z = 1.0
seed = 17
"""

ROLES = """
exposure = exposure
confounders = k1,k2,k3
monitoring = exposure,mediator
n_categories = 3
"""


@pytest.fixture
def scenario_file(tmp_path):
    path = tmp_path / "scenario.cfg"
    path.write_text(SCENARIO, encoding="utf-8")
    return path


@pytest.fixture
def dataset_file(tmp_path):
    config = ScenarioConfig(n_subjects=100, confounded=True, gamma_d=0.2, gamma_z=1.0, seed=23)
    data = simulate_dataset(config, replicate_seed=0)
    path = tmp_path / "panel.csv"
    to_csv(data, path)
    return path


@pytest.fixture
def roles_file(tmp_path):
    path = tmp_path / "roles.cfg"
    path.write_text(ROLES, encoding="utf-8")
    return path


def read(path):
    return path.read_bytes()


def test_simulate_writes_outputs_and_is_reproducible(scenario_file, tmp_path, capsys):
    out1 = tmp_path / "run1"
    out2 = tmp_path / "run2"
    args = ["simulate", "--config", str(scenario_file), "--reps", "4", "--target", "-1.4"]
    assert main(args + ["--out", str(out1)]) == 0
    assert main(args + ["--out", str(out2)]) == 0
    for name in ("summary.json", "replicates.csv", "manifest.json"):
        assert (out1 / name).is_file()
    assert read(out1 / "summary.json") == read(out2 / "summary.json")
    assert read(out1 / "replicates.csv") == read(out2 / "replicates.csv")
    # manifests differ only in timing fields
    m1 = json.loads((out1 / "manifest.json").read_text())
    m2 = json.loads((out2 / "manifest.json").read_text())
    for m in (m1, m2):
        m.pop("duration_seconds")
        m.pop("started_at")
        m["outputs"] = [p.rsplit("/", 2)[-1] for p in m["outputs"]]
    assert m1 == m2
    summary = json.loads((out1 / "summary.json").read_text())
    assert set(summary["estimators"]) == {"pom", "iptp", "iivp", "iptmp"}
    assert summary["scenario"]["n_subjects"] == 60


def test_simulate_set_override_and_seed(scenario_file, tmp_path):
    out = tmp_path / "o"
    rc = main(
        ["simulate", "--config", str(scenario_file), "--reps", "3", "--target", "-1.4",
         "--set", "n_subjects=30", "--seed", "99", "--out", str(out)]
    )
    assert rc == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["scenario"]["n_subjects"] == 30
    assert summary["scenario"]["seed"] == 99


def test_simulate_rejects_zero_reps(scenario_file, tmp_path, capsys):
    rc = main(["simulate", "--config", str(scenario_file), "--reps", "0",
               "--target", "-1.4", "--out", str(tmp_path / "x")])
    assert rc == 1
    assert "reps" in capsys.readouterr().err


def test_simulate_bad_config_key(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("n_subjects = 10\nconfounded = 0\ngamma_d = 0\ngamma_z = 0\nwat = 1\n")
    rc = main(["simulate", "--config", str(bad), "--reps", "2",
               "--target", "-1.4", "--out", str(tmp_path / "x")])
    assert rc == 1
    assert "unknown scenario keys" in capsys.readouterr().err


def test_simulate_missing_config_file(tmp_path):
    rc = main(["simulate", "--config", str(tmp_path / "nope.cfg"), "--reps", "2",
               "--target", "-1.4", "--out", str(tmp_path / "x")])
    assert rc == 1


def test_target_prints_both_directions_and_se(tmp_path, capsys):
    out = tmp_path / "tgt"
    rc = main(["target", "--n", "300", "--reps", "6", "--seed", "5", "--out", str(out)])
    assert rc == 0
    captured = capsys.readouterr().out
    payload = json.loads(captured.strip().splitlines()[-1])
    assert payload["log_or_leq"] == -payload["log_or_higher"]
    # the reported Monte Carlo standard error is sd/sqrt(reps)
    from ordcausal.simulate import target_estimates

    estimates = target_estimates(300, 6, seed=5)
    assert payload["log_or_higher"] == pytest.approx(float(np.mean(estimates)), abs=1e-12)
    assert payload["monte_carlo_se"] == pytest.approx(
        float(np.std(estimates) / math.sqrt(6)), abs=1e-12
    )
    disk = json.loads((out / "target.json").read_text())
    assert disk == payload


def test_target_determinism(capsys):
    assert main(["target", "--n", "200", "--reps", "4", "--seed", "9"]) == 0
    first = capsys.readouterr().out
    assert main(["target", "--n", "200", "--reps", "4", "--seed", "9"]) == 0
    assert capsys.readouterr().out == first


def test_estimate_matches_in_process_results(dataset_file, roles_file, tmp_path, capsys):
    out = tmp_path / "est"
    rc = main(["estimate", "--data", str(dataset_file), "--roles", str(roles_file),
               "--out", str(out)])
    assert rc == 0
    payload = json.loads((out / "estimates.json").read_text())

    data = load_csv(dataset_file, n_categories=3)
    expected = estimate_all_four(data, SIMULATION_ROLES)
    for name, res in expected.items():
        assert payload[name]["log_or_higher"] == res.log_or_higher
        assert payload[name]["log_or_leq"] == -res.log_or_higher
        assert payload[name]["n_records"] == res.n_records

    for name in ("rate_ratios.csv", "or_table.csv", "probability_curves.csv", "manifest.json"):
        assert (out / name).is_file()


def test_estimate_or_table_exponentiation(dataset_file, roles_file, tmp_path):
    out = tmp_path / "est"
    assert main(["estimate", "--data", str(dataset_file), "--roles", str(roles_file),
                 "--or-units", "1,3", "--out", str(out)]) == 0
    rows = (out / "or_table.csv").read_text().strip().splitlines()[1:]
    table = {}
    for line in rows:
        name, delta, or_leq, or_higher, *_ = line.split(",")
        table[(name, float(delta))] = (float(or_leq), float(or_higher))
    for name in ("pom", "iptp", "iivp", "iptmp"):
        one = table[(name, 1.0)]
        three = table[(name, 3.0)]
        assert three[1] == one[1] ** 3
        assert three[0] == one[0] ** 3


def test_estimate_curves_monotone_threshold(dataset_file, roles_file, tmp_path):
    out = tmp_path / "est"
    assert main(["estimate", "--data", str(dataset_file), "--roles", str(roles_file),
                 "--curve-points", "7", "--out", str(out)]) == 0
    lines = (out / "probability_curves.csv").read_text().strip().splitlines()[1:]
    probs = {}
    for line in lines:
        name, threshold, x, p = line.split(",")
        probs.setdefault((name, x), {})[int(threshold)] = float(p)
    for (_, _), by_thr in probs.items():
        assert by_thr[3] <= by_thr[2] + 1e-12  # P(Y>=3) <= P(Y>=2)


def test_estimate_with_bootstrap_outputs(dataset_file, roles_file, tmp_path):
    out = tmp_path / "est"
    rc = main(["estimate", "--data", str(dataset_file), "--roles", str(roles_file),
               "--bootstrap", "8", "--level", "0.9", "--seed", "2", "--out", str(out)])
    assert rc == 0
    payload = json.loads((out / "estimates.json").read_text())
    for name in payload:
        ci = payload[name]["bootstrap"]["log_or_higher_ci"]
        assert ci[0] <= ci[1]
    boot = (out / "bootstrap.csv").read_text().strip().splitlines()
    assert boot[0] == "estimator,replicate,log_or_higher"
    assert len(boot) == 1 + 4 * 8


def test_estimate_binned_route(dataset_file, roles_file, tmp_path):
    out = tmp_path / "est"
    rc = main(["estimate", "--data", str(dataset_file), "--roles", str(roles_file),
               "--ipt", "binned", "--bins", "4", "--out", str(out)])
    assert rc == 0


def test_estimate_log2_requires_nonnegative(dataset_file, roles_file, tmp_path, capsys):
    rc = main(["estimate", "--data", str(dataset_file), "--roles", str(roles_file),
               "--log2-exposure", "--out", str(tmp_path / "x")])
    assert rc == 1
    assert "nonnegative" in capsys.readouterr().err


def test_estimate_log2_path(tmp_path, roles_file):
    config = ScenarioConfig(n_subjects=120, confounded=False, gamma_d=0.1, gamma_z=0.5, seed=31)
    data = simulate_dataset(config, replicate_seed=0)
    shifted = type(data)(
        subject_ids=data.subject_ids,
        times=data.times,
        at_risk=data.at_risk,
        visit=data.visit,
        exposure=np.exp(data.exposure),  # positive, skewed
        covariates=data.covariates,
        covariate_names=data.covariate_names,
        outcome=data.outcome,
        n_categories=data.n_categories,
        tau=data.tau,
    )
    path = tmp_path / "skewed.csv"
    to_csv(shifted, path)
    out = tmp_path / "est"
    rc = main(["estimate", "--data", str(path), "--roles", str(roles_file),
               "--log2-exposure", "--out", str(out)])
    assert rc == 0


def test_estimate_unknown_role_column(dataset_file, tmp_path, capsys):
    roles = tmp_path / "roles.cfg"
    roles.write_text("exposure = exposure\nconfounders = nope\nmonitoring = exposure\n")
    rc = main(["estimate", "--data", str(dataset_file), "--roles", str(roles),
               "--out", str(tmp_path / "x")])
    assert rc == 1
    assert "not found" in capsys.readouterr().err


def test_estimate_runtime_error_exit_code(tmp_path, roles_file, capsys):
    # perfectly separated outcome at tiny exposure scale: outcome stage fails
    rows = ["id,time,at_risk,visit,exposure,outcome,k1,k2,k3,mediator"]
    for k, (e, y) in enumerate([(-0.10, 1), (-0.05, 1), (0.05, 3), (0.10, 3)]):
        rows.append(f"s{k},0.5,1,1,{e},{y},0.0,0.0,0.0,0.0")
    path = tmp_path / "sep.csv"
    path.write_text("\n".join(rows) + "\n")
    rc = main(["estimate", "--data", str(path), "--roles", str(roles_file),
               "--out", str(tmp_path / "x")])
    assert rc == 2
    assert "stage=" in capsys.readouterr().err


def test_report_aggregates_two_studies(scenario_file, tmp_path):
    studies = tmp_path / "studies"
    args = ["simulate", "--config", str(scenario_file), "--reps", "3", "--target", "-1.4"]
    assert main(args + ["--out", str(studies / "a")]) == 0
    assert main(args + ["--set", "gamma_d=0.0", "--set", "gamma_z=0.0",
                        "--out", str(studies / "b")]) == 0
    out = tmp_path / "report"
    assert main(["report", str(studies), "--out", str(out)]) == 0

    combined = (out / "combined.csv").read_text().strip().splitlines()
    assert len(combined) == 1 + 2 * 4  # two scenarios x four estimators
    long_rows = (out / "boxplot_long.csv").read_text().strip().splitlines()
    assert long_rows[0] == "scenario,replicate,estimator,log_or_higher"
    assert len(long_rows) == 1 + 2 * 3 * 4

    # aggregates in combined.csv reproduce from the per-replicate files
    summary = json.loads((studies / "a" / "summary.json").read_text())
    reps = {}
    for line in (studies / "a" / "replicates.csv").read_text().strip().splitlines()[1:]:
        _, est, value = line.split(",")
        reps.setdefault(est, []).append(float(value))
    for line in combined[1:]:
        fields = line.split(",")
        if fields[0] != "a":
            continue
        est, bias, variance = fields[1], float(fields[2]), float(fields[3])
        values = np.array(reps[est])
        assert bias == pytest.approx(abs(values.mean() - (-1.4)), abs=1e-12)
        assert variance == pytest.approx(values.var(), abs=1e-12)
        assert float(fields[4]) == pytest.approx(bias**2 + variance, abs=1e-12)


def test_report_empty_directory(tmp_path, capsys):
    empty = tmp_path / "none"
    empty.mkdir()
    rc = main(["report", str(empty), "--out", str(tmp_path / "r")])
    assert rc == 1
    assert "no summary.json" in capsys.readouterr().err


def test_unknown_command_exit_one(capsys):
    assert main(["frobnicate"]) == 1


def test_version_flag_exits_zero(capsys):
    assert main(["--version"]) == 0


def test_estimate_zero_gamma_makes_iptmp_equal_iptp(tmp_path):
    # a constant monitoring covariate pins the intensity coefficient at zero,
    # so the doubly-weighted fit coincides with the IPT-only fit
    rng = np.random.default_rng(44)
    rows = ["id,time,at_risk,visit,exposure,outcome,k1,const"]
    for sid in range(30):
        for t in (0.2, 0.5, 0.8):
            visit = int(rng.random() < 0.7)
            outcome = str(int(rng.integers(1, 4))) if visit else ""
            rows.append(
                f"s{sid},{t},1,{visit},{rng.normal():.6f},{outcome},{rng.normal():.6f},1.0"
            )
    path = tmp_path / "flat.csv"
    path.write_text("\n".join(rows) + "\n")
    roles = tmp_path / "roles.cfg"
    roles.write_text("exposure = exposure\nconfounders = k1\nmonitoring = const\nn_categories = 3\n")
    out = tmp_path / "est"
    assert main(["estimate", "--data", str(path), "--roles", str(roles), "--out", str(out)]) == 0
    payload = json.loads((out / "estimates.json").read_text())
    assert payload["iptmp"]["log_or_higher"] == payload["iptp"]["log_or_higher"]
    assert payload["iivp"]["log_or_higher"] == payload["pom"]["log_or_higher"]


def test_worker_count_environment_contract(monkeypatch):
    from ordcausal._parallel import map_indexed, worker_count

    monkeypatch.delenv("ORDCAUSAL_THREADS", raising=False)
    assert worker_count() == 1
    monkeypatch.setenv("ORDCAUSAL_THREADS", "4")
    assert worker_count() == 4
    monkeypatch.setenv("ORDCAUSAL_THREADS", "zero")
    with pytest.raises(ValueError):
        worker_count()
    monkeypatch.setenv("ORDCAUSAL_THREADS", "2")
    serial = map_indexed(_square, 7, workers=1)
    parallel = map_indexed(_square, 7)
    assert serial == parallel == [k * k for k in range(7)]


def _square(k):
    return k * k
