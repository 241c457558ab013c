import numpy as np
import pytest

from ordcausal.errors import DomainError, EstimationStageError
from ordcausal.estimators import (
    ESTIMATOR_ORDER,
    CovariateRoles,
    EstimatorSpec,
    combined_weights,
    estimate,
    estimate_all_four,
)
from ordcausal.panel import visit_records
from ordcausal.pom import fit_pom
from ordcausal.simulate import (
    SIMULATION_ROLES,
    ScenarioConfig,
    simulate_dataset,
    target_estimates,
)

from conftest import build_panel


def test_combined_weights_trivial():
    assert np.array_equal(combined_weights(np.ones(3), np.ones(3)), np.ones(3))
    assert np.array_equal(combined_weights(np.array([2.0]), np.array([4.0])), np.array([0.5]))


def test_combined_weights_errors():
    with pytest.raises(ValueError):
        combined_weights(np.ones(2), np.ones(3))
    with pytest.raises(DomainError):
        combined_weights(np.ones(2), np.array([1.0, 0.0]))


def test_spec_validates_ipt_kind():
    with pytest.raises(ValueError):
        EstimatorSpec(use_ipt=True, use_iiv=False, ipt_kind="nope")


def unconfounded_data(seed=0, n=300, gamma=(0.0, 0.0)):
    config = ScenarioConfig(
        n_subjects=n, confounded=False, gamma_d=gamma[0], gamma_z=gamma[1], seed=seed
    )
    return simulate_dataset(config, replicate_seed=0)


def test_log_or_directions_exact_negation():
    data = unconfounded_data()
    result = estimate(data, SIMULATION_ROLES.spec(False, False))
    assert result.log_or_leq == -result.log_or_higher
    assert result.n_records == visit_records(data).n_records


def test_unit_weight_pipeline_equals_direct_fit():
    data = unconfounded_data(seed=3)
    vis = visit_records(data)
    direct = fit_pom(vis.exposure[:, None], vis.outcome.astype(int), n_categories=3)
    result = estimate(data, SIMULATION_ROLES.spec(False, False))
    assert result.log_or_higher == float(direct.beta[0])
    assert np.array_equal(result.pom_fit.alphas, direct.alphas)
    assert result.weight_summary.minimum == result.weight_summary.maximum == 1.0


def test_degenerate_weight_equivalence_bitwise():
    # constant monitoring covariate pins gamma-hat at 0 exactly; an empty
    # confounder set makes the two exposure models identical, so e = 1
    rows = []
    rng = np.random.default_rng(8)
    for sid in range(12):
        for k, t in enumerate((0.2, 0.5, 0.8)):
            visit = bool(rng.random() < 0.8)
            outcome = int(rng.integers(1, 4)) if visit else None
            rows.append((f"s{sid}", t, True, visit, float(rng.normal()), [1.0], outcome))
    data = build_panel(rows, covariate_names=("const",), n_categories=3)
    roles = CovariateRoles(exposure="exposure", confounders=(), monitoring=("const",))
    plain = estimate(data, roles.spec(False, False))
    doubly = estimate(data, roles.spec(True, True))
    assert doubly.log_or_higher == plain.log_or_higher
    assert np.array_equal(doubly.pom_fit.alphas, plain.pom_fit.alphas)
    assert doubly.weight_summary.minimum == pytest.approx(1.0, abs=1e-12)
    assert doubly.weight_summary.maximum == pytest.approx(1.0, abs=1e-12)


def test_weight_component_isolation():
    data = unconfounded_data(seed=5, n=250, gamma=(0.3, 0.5))
    roles = SIMULATION_ROLES
    pom_only = estimate(data, roles.spec(False, False))
    ipt_only = estimate(data, roles.spec(True, False))
    iiv_only = estimate(data, roles.spec(False, True))
    both = estimate_all_four(data, roles)
    assert both["pom"].log_or_higher == pom_only.log_or_higher
    assert both["iptp"].log_or_higher == ipt_only.log_or_higher
    assert both["iivp"].log_or_higher == iiv_only.log_or_higher
    assert set(both) == set(ESTIMATOR_ORDER)


def test_all_four_deterministic():
    data = unconfounded_data(seed=6, n=200, gamma=(0.2, 1.0))
    a = estimate_all_four(data, SIMULATION_ROLES)
    b = estimate_all_four(data, SIMULATION_ROLES)
    for name in ESTIMATOR_ORDER:
        assert a[name].log_or_higher == b[name].log_or_higher


def test_iivp_and_iptmp_agree_without_confounding():
    data = unconfounded_data(seed=7, n=1000, gamma=(0.2, 1.0))
    results = estimate_all_four(data, SIMULATION_ROLES)
    assert results["iivp"].log_or_higher == pytest.approx(
        results["iptmp"].log_or_higher, abs=0.05
    )


def test_null_scenario_all_four_near_truth():
    # no confounding and uninformative visiting: every estimator targets the
    # same marginal value; check against an independent Monte Carlo truth
    truth = float(np.mean(target_estimates(3000, 30, seed=909)))
    data = unconfounded_data(seed=8, n=2000, gamma=(0.0, 0.0))
    results = estimate_all_four(data, SIMULATION_ROLES)
    for name in ESTIMATOR_ORDER:
        assert results[name].log_or_higher == pytest.approx(truth, abs=0.12)


def test_estimate_consistency_large_unconfounded():
    truth = float(np.mean(target_estimates(3000, 30, seed=909)))
    data = unconfounded_data(seed=9, n=6000, gamma=(0.0, 0.0))
    result = estimate(data, SIMULATION_ROLES.spec(False, False))
    assert result.log_or_higher == pytest.approx(truth, abs=0.05)


def test_weight_summary_finite_positive():
    data = unconfounded_data(seed=10, n=300, gamma=(0.2, 1.0))
    result = estimate(data, SIMULATION_ROLES.spec(True, True))
    ws = result.weight_summary
    assert 0 < ws.minimum <= ws.mean <= ws.maximum < np.inf


def test_empty_visit_records_rejected():
    data = build_panel([("a", 0.1, True, False, 0.0, [0.0, 0.0, 0.0, 0.0], None)],
                       covariate_names=("k1", "k2", "k3", "mediator"))
    with pytest.raises(DomainError):
        estimate(data, SIMULATION_ROLES.spec(False, False))


def test_intensity_stage_error_tagged():
    rows = [
        ("a", 0.2, True, True, 0.1, [0.5, 1.0], 1),
        ("a", 0.6, True, True, -0.2, [0.5, 1.0], 2),
        ("b", 0.5, True, True, 0.3, [0.1, 0.0], 3),  # first row after a's first event
    ]
    data = build_panel(rows, covariate_names=("k", "m"), n_categories=3)
    roles = CovariateRoles(exposure="exposure", confounders=("k",), monitoring=("m",))
    with pytest.raises(EstimationStageError, match="stage=intensity") as info:
        estimate(data, roles.spec(False, True))
    assert info.value.stage == "intensity"


def test_exposure_model_stage_error_tagged():
    rows = [
        ("a", 0.2, True, True, 1.0, [0.5], 1),
        ("a", 0.6, True, True, 1.0, [0.4], 2),
        ("b", 0.2, True, True, 1.0, [0.1], 3),
    ]
    data = build_panel(rows, covariate_names=("k",), n_categories=3)
    roles = CovariateRoles(exposure="exposure", confounders=("k",), monitoring=("k",))
    with pytest.raises(EstimationStageError, match="stage=exposure-model"):
        estimate(data, roles.spec(True, False))


def test_outcome_stage_error_tagged():
    rows = [
        ("a", 0.2, True, True, -0.10, [0.5], 1),
        ("a", 0.6, True, True, -0.05, [0.4], 1),
        ("b", 0.2, True, True, 0.05, [0.1], 2),
        ("b", 0.6, True, True, 0.10, [0.1], 2),
    ]
    data = build_panel(rows, covariate_names=("k",), n_categories=2)
    roles = CovariateRoles(exposure="exposure", confounders=("k",), monitoring=("k",))
    with pytest.raises(EstimationStageError, match="stage=outcome-model"):
        estimate(data, roles.spec(False, False))


def test_gps_on_all_at_risk_records_flag(monkeypatch):
    data = unconfounded_data(seed=11, n=200, gamma=(0.3, 0.3))
    on_visits = estimate(data, SIMULATION_ROLES.spec(True, False))
    roles_all = CovariateRoles(
        exposure="exposure",
        confounders=("k1", "k2", "k3"),
        monitoring=("exposure", "mediator"),
        gps_on_visit_records=False,
    )
    on_all = estimate(data, roles_all.spec(True, False))
    # both run; they fit the exposure models on different record sets
    assert np.isfinite(on_visits.log_or_higher) and np.isfinite(on_all.log_or_higher)
    assert on_visits.log_or_higher != on_all.log_or_higher


def test_binned_ipt_through_pipeline():
    data = unconfounded_data(seed=12, n=400, gamma=(0.0, 0.0))
    roles = CovariateRoles(
        exposure="exposure",
        confounders=("k1", "k2", "k3"),
        monitoring=("exposure", "mediator"),
        ipt_kind="binned",
        bins=4,
    )
    result = estimate(data, roles.spec(True, False))
    assert np.isfinite(result.log_or_higher)
    assert result.weight_summary.minimum > 0
