"""Data-generating process and replicated estimator studies.

Per subject: three baseline confounders (K1 ~ N(1,1), K2 ~ Bernoulli(0.55),
K3 ~ N(0,1)) and a gamma frailty with mean 1. Per grid time: a continuous
exposure whose mean depends on the confounders when ``confounded`` is set
(-0.5 + 0.5 K1 + 1 K2 - 0.05 K3) and is -0.5 otherwise; a binary mediator
with P=0.3 when the exposure exceeds 0.5 and P=0.8 otherwise; a visit drawn
Bernoulli with probability min(1, 0.01 * frailty * exp(gamma_d D + gamma_z M));
and an ordinal outcome obtained by thresholding a latent value
(coefficients' dot product with (D, M, K1, K2, K3)) plus standard logistic
noise. Outcomes are attached to visit rows only; all subjects stay at risk
through tau.

Randomness comes from counter-based Philox streams keyed by
(seed, replicate, variable), so each replicate is a pure function of the
configuration and its index, independent of scheduling or worker count.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field, fields
from functools import partial

import numpy as np

from ._parallel import map_indexed
from ._rng import stream
from .errors import StudyError
from .estimators import ESTIMATOR_ORDER, CovariateRoles, estimate_all_four
from .panel import PanelDataset, visit_records
from .pom import fit_pom

_BASE_RATE = 0.01
_EXPOSURE_INTERCEPT = -0.5
_EXPOSURE_SLOPES = (0.5, 1.0, -0.05)
_MEDIATOR_P_HIGH = 0.3  # exposure above 0.5
_MEDIATOR_P_LOW = 0.8
_CLAMP_WARN_RATE = 0.01

# one Philox stream per simulated variable
_TAG_K1, _TAG_K2, _TAG_K3 = 1, 2, 3
_TAG_EXPOSURE, _TAG_MEDIATOR = 4, 5
_TAG_FRAILTY, _TAG_VISIT, _TAG_LATENT = 6, 7, 8

SIMULATION_COVARIATES = ("k1", "k2", "k3", "mediator")
SIMULATION_ROLES = CovariateRoles(
    exposure="exposure",
    confounders=("k1", "k2", "k3"),
    monitoring=("exposure", "mediator"),
)


@dataclass(frozen=True)
class ScenarioConfig:
    n_subjects: int
    confounded: bool
    gamma_d: float
    gamma_z: float
    tau: float = 2.0
    grid_step: float = 0.01
    outcome_thresholds: tuple = (5.0, 8.0)
    outcome_coefficients: tuple = (-2.0, 5.0, 0.4, 0.05, -0.6)
    exposure_sd: float = 0.5
    frailty_variance: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.n_subjects < 1:
            raise ValueError("n_subjects must be positive")
        if self.grid_step <= 0:
            raise ValueError("grid_step must be positive")
        steps = self.tau / self.grid_step
        if self.tau <= 0 or abs(steps - round(steps)) > 1e-9:
            raise ValueError("tau must be a positive multiple of grid_step")
        if len(self.outcome_thresholds) < 1 or np.any(np.diff(self.outcome_thresholds) <= 0):
            raise ValueError("outcome_thresholds must be strictly increasing")
        if len(self.outcome_coefficients) != 5:
            raise ValueError("outcome_coefficients must have 5 entries (D, M, K1, K2, K3)")

    @property
    def n_grid(self) -> int:
        return int(round(self.tau / self.grid_step))

    @property
    def n_categories(self) -> int:
        return len(self.outcome_thresholds) + 1


def simulate_dataset(config: ScenarioConfig, replicate_seed: int) -> PanelDataset:
    """One simulated panel; bitwise reproducible from (config, replicate_seed)."""
    n, n_grid = config.n_subjects, config.n_grid
    seed, rep = config.seed, replicate_seed

    k1 = stream(seed, rep, _TAG_K1).normal(1.0, 1.0, size=n)
    k2 = (stream(seed, rep, _TAG_K2).random(n) < 0.55).astype(float)
    k3 = stream(seed, rep, _TAG_K3).normal(0.0, 1.0, size=n)

    if config.confounded:
        mean = (
            _EXPOSURE_INTERCEPT
            + _EXPOSURE_SLOPES[0] * k1
            + _EXPOSURE_SLOPES[1] * k2
            + _EXPOSURE_SLOPES[2] * k3
        )[:, np.newaxis]
    else:
        mean = _EXPOSURE_INTERCEPT
    exposure = mean + config.exposure_sd * stream(seed, rep, _TAG_EXPOSURE).standard_normal(
        (n, n_grid)
    )

    p_mediator = np.where(exposure > 0.5, _MEDIATOR_P_HIGH, _MEDIATOR_P_LOW)
    mediator = (stream(seed, rep, _TAG_MEDIATOR).random((n, n_grid)) < p_mediator).astype(float)

    if config.frailty_variance > 0:
        shape = 1.0 / config.frailty_variance
        frailty = stream(seed, rep, _TAG_FRAILTY).gamma(shape, config.frailty_variance, size=n)
    else:
        frailty = np.ones(n)

    raw_intensity = (
        _BASE_RATE
        * frailty[:, np.newaxis]
        * np.exp(config.gamma_d * exposure + config.gamma_z * mediator)
    )
    clamp_rate = float(np.mean(raw_intensity > 1.0))
    visit = stream(seed, rep, _TAG_VISIT).random((n, n_grid)) < np.minimum(raw_intensity, 1.0)

    c = config.outcome_coefficients
    latent = (
        c[0] * exposure
        + c[1] * mediator
        + (c[2] * k1 + c[3] * k2 + c[4] * k3)[:, np.newaxis]
        + stream(seed, rep, _TAG_LATENT).logistic(0.0, 1.0, size=(n, n_grid))
    )
    category = np.ones((n, n_grid))
    for threshold in config.outcome_thresholds:
        category += latent > threshold
    outcome = np.where(visit, category, np.nan)

    if clamp_rate > _CLAMP_WARN_RATE:
        warnings.warn(
            f"visit intensity clamped at 1 for {clamp_rate:.1%} of subject-times",
            RuntimeWarning,
            stacklevel=2,
        )

    grid_times = np.linspace(config.grid_step, config.tau, n_grid)
    covariates = np.column_stack(
        [
            np.repeat(k1, n_grid),
            np.repeat(k2, n_grid),
            np.repeat(k3, n_grid),
            mediator.ravel(),
        ]
    )
    return PanelDataset(
        subject_ids=np.repeat(np.arange(n), n_grid),
        times=np.tile(grid_times, n),
        at_risk=np.ones(n * n_grid, dtype=bool),
        visit=visit.ravel(),
        exposure=exposure.ravel(),
        covariates=covariates,
        covariate_names=SIMULATION_COVARIATES,
        outcome=outcome.ravel(),
        n_categories=config.n_categories,
        tau=config.tau,
        meta={"clamp_rate": clamp_rate},
    )


@dataclass(frozen=True)
class EstimatorMetrics:
    mean: float
    bias: float  # |mean - target|
    variance: float  # population variance over replicates
    mse: float  # mean squared deviation from the target


@dataclass(frozen=True)
class ScenarioSummary:
    estimators: dict
    visits_mean: float
    visits_min: int
    visits_max: int
    n_replicates: int
    n_failed: int
    target: float
    replicate_indices: np.ndarray = field(repr=False)
    replicate_estimates: dict = field(repr=False)


def _study_replicate(r: int, config: ScenarioConfig):
    data = simulate_dataset(config, r)
    visits = data.visits_per_subject()
    try:
        results = estimate_all_four(data, SIMULATION_ROLES)
        estimates = [results[name].log_or_higher for name in ESTIMATOR_ORDER]
        error = None
    except Exception as exc:
        estimates = [math.nan] * len(ESTIMATOR_ORDER)
        error = f"{type(exc).__name__}: {exc}"
    return estimates, float(visits.mean()), int(visits.min()), int(visits.max()), error


def run_study(config: ScenarioConfig, n_replicates: int, target: float) -> ScenarioSummary:
    """Replicated four-estimator comparison against a known target log-OR.

    Replicates failing to fit are dropped and counted; a failure rate above 5%
    aborts with :class:`StudyError`. Bias/variance/MSE are computed on the
    higher-category log odds ratio so that MSE = bias^2 + variance holds
    exactly on the replicate set.
    """
    if n_replicates < 2:
        raise ValueError("n_replicates must be at least 2")
    rows = map_indexed(partial(_study_replicate, config=config), n_replicates)

    kept = [r for r, row in enumerate(rows) if row[4] is None]
    failures = [(r, rows[r][4]) for r in range(n_replicates) if rows[r][4] is not None]
    if len(failures) > 0.05 * n_replicates:
        examples = "; ".join(msg for _, msg in failures[:3])
        raise StudyError(
            f"{len(failures)}/{n_replicates} replicates failed (first: {examples})"
        )

    matrix = np.array([rows[r][0] for r in kept])  # (n_ok, 4)
    metrics = {}
    estimates = {}
    for j, name in enumerate(ESTIMATOR_ORDER):
        col = matrix[:, j]
        mean = float(np.mean(col))
        bias = abs(mean - target)
        variance = float(np.var(col))
        mse = float(np.mean((col - target) ** 2))  # equals bias^2 + variance
        metrics[name] = EstimatorMetrics(mean, bias, variance, mse)
        estimates[name] = col
    return ScenarioSummary(
        estimators=metrics,
        visits_mean=float(np.mean([rows[r][1] for r in range(n_replicates)])),
        visits_min=int(min(rows[r][2] for r in range(n_replicates))),
        visits_max=int(max(rows[r][3] for r in range(n_replicates))),
        n_replicates=n_replicates,
        n_failed=len(failures),
        target=target,
        replicate_indices=np.array(kept, dtype=int),
        replicate_estimates=estimates,
    )


def _target_replicate(r: int, config: ScenarioConfig) -> float:
    data = simulate_dataset(config, r)
    vis = visit_records(data)
    fit = fit_pom(
        vis.exposure[:, np.newaxis],
        vis.outcome.astype(int),
        n_categories=config.n_categories,
    )
    return float(fit.beta[0])


def target_estimates(n_patients: int, n_replicates: int, seed: int) -> np.ndarray:
    """Per-replicate unweighted log-OR (higher direction) with no confounding
    and uninformative visiting."""
    if n_patients < 1 or n_replicates < 1:
        raise ValueError("counts must be positive")
    config = ScenarioConfig(
        n_subjects=n_patients, confounded=False, gamma_d=0.0, gamma_z=0.0, seed=seed
    )
    return np.array(map_indexed(partial(_target_replicate, config=config), n_replicates))


def monte_carlo_target(n_patients: int, n_replicates: int, seed: int) -> float:
    """Marginal log-OR (higher-category direction) in the unconfounded,
    uninformatively monitored population, by plain Monte Carlo."""
    return float(np.mean(target_estimates(n_patients, n_replicates, seed)))


# --- scenario files and study exports ---------------------------------------

_BOOL_FIELDS = {"confounded"}
_INT_FIELDS = {"n_subjects", "seed"}
_TUPLE_FIELDS = {"outcome_thresholds", "outcome_coefficients"}


def parse_scenario_value(name: str, raw: str):
    raw = raw.strip()
    if name in _BOOL_FIELDS:
        lowered = raw.lower()
        if lowered in ("1", "true", "yes"):
            return True
        if lowered in ("0", "false", "no"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {raw!r}")
    if name in _INT_FIELDS:
        return int(raw)
    if name in _TUPLE_FIELDS:
        return tuple(float(part) for part in raw.split(","))
    return float(raw)


def scenario_from_items(items: dict) -> ScenarioConfig:
    """Build a config from string key-value pairs (file contents, overrides)."""
    known = {f.name for f in fields(ScenarioConfig)}
    unknown = set(items) - known
    if unknown:
        raise ValueError(f"unknown scenario keys: {sorted(unknown)}")
    kwargs = {name: parse_scenario_value(name, raw) for name, raw in items.items()}
    missing = {"n_subjects", "confounded", "gamma_d", "gamma_z"} - set(kwargs)
    if missing:
        raise ValueError(f"scenario is missing required keys: {sorted(missing)}")
    return ScenarioConfig(**kwargs)


def read_key_value_file(path) -> dict:
    """Flat ``key = value`` file with # comments; later keys win."""
    items = {}
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {stripped!r}")
            key, _, value = stripped.partition("=")
            items[key.strip()] = value.strip()
    return items


def load_scenario(path) -> ScenarioConfig:
    return scenario_from_items(read_key_value_file(path))


def summary_to_dict(summary: ScenarioSummary, config: ScenarioConfig | None = None) -> dict:
    payload = {
        "target": summary.target,
        "n_replicates": summary.n_replicates,
        "n_failed": summary.n_failed,
        "visits": {
            "mean": summary.visits_mean,
            "min": summary.visits_min,
            "max": summary.visits_max,
        },
        "estimators": {
            name: {
                "mean": m.mean,
                "bias": m.bias,
                "variance": m.variance,
                "mse": m.mse,
            }
            for name, m in summary.estimators.items()
        },
    }
    if config is not None:
        payload["scenario"] = asdict(config)
    return payload


def write_summary_json(summary: ScenarioSummary, path, config: ScenarioConfig | None = None):
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(summary_to_dict(summary, config), handle, indent=2, sort_keys=True)
        handle.write("\n")


def write_replicates_csv(summary: ScenarioSummary, path):
    """Long-format per-replicate estimates: replicate, estimator, log_or_higher."""
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("replicate,estimator,log_or_higher\n")
        for pos, replicate in enumerate(summary.replicate_indices):
            for name in ESTIMATOR_ORDER:
                value = summary.replicate_estimates[name][pos]
                handle.write(f"{int(replicate)},{name},{value:.17g}\n")
