"""The four marginal-effect estimators: plain, IPT-, IIV-, and doubly-weighted.

Each estimator is a weighted proportional-odds fit of the outcome on the
exposure alone, over visit records. Adjustment happens entirely through the
record weights e / phi: ``e`` is the stabilized continuous (or binned)
exposure weight and ``phi`` the covariate part of the visit intensity.
Toggling a component off sets its factor to 1. Exposure models are fitted on
visit records by default (where outcome, exposure and confounders are jointly
observed); ``gps_on_visit_records=False`` fits them on all at-risk rows
instead, for panels that carry full covariate paths.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, EstimationStageError
from .gps import fit_binned_gps, fit_exposure_models, ipt_weight_binned, ipt_weight_continuous
from .intensity import fit_proportional_intensity, from_panel, iiv_weight
from .panel import PanelDataset, visit_records
from .pom import POMFit, fit_pom

ESTIMATOR_ORDER = ("pom", "iptp", "iivp", "iptmp")


@dataclass(frozen=True)
class EstimatorSpec:
    """Which weights to apply and which columns play which role."""

    use_ipt: bool
    use_iiv: bool
    exposure_name: str = "exposure"
    confounder_names: tuple = ()
    monitoring_covariate_names: tuple = ()
    ipt_kind: str = "continuous"  # or "binned"
    bins: object = 5  # bin count or explicit edges, for ipt_kind="binned"
    gps_on_visit_records: bool = True

    def __post_init__(self):
        if self.ipt_kind not in ("continuous", "binned"):
            raise ValueError(f"unknown ipt_kind {self.ipt_kind!r}")


@dataclass(frozen=True)
class WeightSummary:
    minimum: float
    mean: float
    maximum: float


@dataclass(frozen=True)
class EstimatorResult:
    pom_fit: POMFit
    log_or_leq: float
    log_or_higher: float
    weight_summary: WeightSummary
    n_records: int


def combined_weights(e, phi) -> np.ndarray:
    """Elementwise e / phi; phi must be strictly positive."""
    e = np.asarray(e, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if e.shape != phi.shape:
        raise ValueError(f"weight vectors differ in shape: {e.shape} vs {phi.shape}")
    if np.any(phi <= 0):
        raise DomainError("visit-intensity weights must be strictly positive")
    return e / phi


def _design(data: PanelDataset, names, exposure_name: str) -> np.ndarray:
    cols = []
    for name in names:
        if name == exposure_name:
            cols.append(data.exposure)
        else:
            cols.append(data.covariate_column(name))
    return np.column_stack(cols) if cols else np.empty((data.n_records, 0))


def _visit_phi(data: PanelDataset, vis: PanelDataset, spec: EstimatorSpec) -> np.ndarray:
    try:
        cp = from_panel(data, spec.monitoring_covariate_names, spec.exposure_name)
        fit = fit_proportional_intensity(cp)
    except Exception as exc:
        raise EstimationStageError("intensity", str(exc)) from exc
    z = _design(vis, spec.monitoring_covariate_names, spec.exposure_name)
    return iiv_weight(fit, z)


def _visit_ipt(data: PanelDataset, vis: PanelDataset, spec: EstimatorSpec) -> np.ndarray:
    source = vis if spec.gps_on_visit_records else _at_risk_records(data)
    k_src = _design(source, spec.confounder_names, exposure_name="")
    d_src = source.exposure
    k_vis = _design(vis, spec.confounder_names, exposure_name="")
    try:
        if spec.ipt_kind == "continuous":
            fit = fit_exposure_models(k_src, d_src)
            return ipt_weight_continuous(fit, vis.exposure, k_vis)
        fit = fit_binned_gps(k_src, d_src, spec.bins)
        return ipt_weight_binned(fit, vis.exposure, k_vis)
    except Exception as exc:
        raise EstimationStageError("exposure-model", str(exc)) from exc


def _at_risk_records(data: PanelDataset) -> PanelDataset:
    mask = data.at_risk
    return PanelDataset(
        subject_ids=data.subject_ids[mask],
        times=data.times[mask],
        at_risk=data.at_risk[mask],
        visit=data.visit[mask],
        exposure=data.exposure[mask],
        covariates=data.covariates[mask],
        covariate_names=data.covariate_names,
        outcome=data.outcome[mask],
        n_categories=data.n_categories,
        tau=data.tau,
    )


def _marginal_fit(vis: PanelDataset, weights: np.ndarray) -> EstimatorResult:
    x = vis.exposure[:, np.newaxis]
    y = vis.outcome.astype(int)
    try:
        fit = fit_pom(x, y, weights, n_categories=vis.n_categories)
    except Exception as exc:
        raise EstimationStageError("outcome-model", str(exc)) from exc
    beta = float(fit.beta[0])
    return EstimatorResult(
        pom_fit=fit,
        log_or_leq=-beta,
        log_or_higher=beta,
        weight_summary=WeightSummary(
            float(np.min(weights)), float(np.mean(weights)), float(np.max(weights))
        ),
        n_records=vis.n_records,
    )


def estimate(data: PanelDataset, spec: EstimatorSpec) -> EstimatorResult:
    """Run the weighting pipeline for one estimator specification."""
    vis = visit_records(data)
    if vis.n_records == 0:
        raise DomainError("no visit records with observed outcomes")
    phi = _visit_phi(data, vis, spec) if spec.use_iiv else np.ones(vis.n_records)
    e = _visit_ipt(data, vis, spec) if spec.use_ipt else np.ones(vis.n_records)
    return _marginal_fit(vis, combined_weights(e, phi))


@dataclass(frozen=True)
class CovariateRoles:
    """Column-role assignment shared by the four estimators."""

    exposure: str = "exposure"
    confounders: tuple = ()
    monitoring: tuple = ()
    ipt_kind: str = "continuous"
    bins: object = 5
    gps_on_visit_records: bool = True

    def spec(self, use_ipt: bool, use_iiv: bool) -> EstimatorSpec:
        return EstimatorSpec(
            use_ipt=use_ipt,
            use_iiv=use_iiv,
            exposure_name=self.exposure,
            confounder_names=tuple(self.confounders),
            monitoring_covariate_names=tuple(self.monitoring),
            ipt_kind=self.ipt_kind,
            bins=self.bins,
            gps_on_visit_records=self.gps_on_visit_records,
        )


def estimate_all_four(data: PanelDataset, roles: CovariateRoles) -> dict:
    """All four estimators with the intensity and exposure models fitted once.

    Returns {"pom", "iptp", "iivp", "iptmp"} -> :class:`EstimatorResult`.
    Deterministic: repeated calls on the same input give identical results.
    """
    vis = visit_records(data)
    if vis.n_records == 0:
        raise DomainError("no visit records with observed outcomes")
    ones = np.ones(vis.n_records)
    phi = _visit_phi(data, vis, roles.spec(False, True))
    e = _visit_ipt(data, vis, roles.spec(True, False))
    return {
        "pom": _marginal_fit(vis, combined_weights(ones, ones)),
        "iptp": _marginal_fit(vis, combined_weights(e, ones)),
        "iivp": _marginal_fit(vis, combined_weights(ones, phi)),
        "iptmp": _marginal_fit(vis, combined_weights(e, phi)),
    }
