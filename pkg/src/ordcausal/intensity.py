"""Proportional visit-intensity model and inverse-intensity weights.

Visits are recurrent events on the time-since-entry axis, so the baseline
rate is common across subjects at any event time and cancels out of the
partial likelihood; only the covariate part exp(gamma'z) is ever estimated
or used as a weight. Tied event times (ubiquitous with grid-time data) share
one risk-set denominator (Breslow handling).

Risk-set convention: covariates and the at-risk flag are step functions,
carried forward from each subject's most recent row at or before the
evaluation time, including past the subject's last row up to tau. Every
subject is presumed at risk from entry (time 0), so a subject whose first
row postdates a global event time has no usable covariate value there and
triggers :class:`CoverageError`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, CoverageError, DomainError, SeparationError
from .optim import ObjectiveEvaluation, SolverResult, newton_maximize
from .panel import PanelDataset

_SEPARATION_BOUND = 50.0


@dataclass(frozen=True)
class CountingProcessData:
    """Per-subject event times, covariate step functions, and at-risk flags."""

    subject_ids: list
    times: list  # per subject: (T_k,) row times
    covariates: list  # per subject: (T_k, p) covariate path values
    at_risk: list  # per subject: (T_k,) bool flags
    event_subject: np.ndarray  # (E,) subject position index
    event_times: np.ndarray  # (E,) times, ascending within subject
    covariate_names: tuple

    @property
    def n_subjects(self) -> int:
        return len(self.subject_ids)

    @property
    def n_events(self) -> int:
        return self.event_times.size


@dataclass(frozen=True)
class IntensityFit:
    gamma: np.ndarray
    loglik: float
    solver: SolverResult
    covariate_names: tuple = ()


def from_panel(data: PanelDataset, covariate_names=None, exposure_name="exposure") -> CountingProcessData:
    """Build counting-process structures from a panel.

    ``covariate_names`` selects and orders the monitoring covariates; the
    name given by ``exposure_name`` draws from the exposure column. Defaults
    to all panel covariates.
    """
    if covariate_names is None:
        covariate_names = data.covariate_names
    columns = []
    for name in covariate_names:
        if name == exposure_name:
            columns.append(data.exposure)
        else:
            columns.append(data.covariate_column(name))
    design = np.column_stack(columns) if columns else np.empty((data.n_records, 0))

    ids, times, covs, risks = [], [], [], []
    ev_subject, ev_times = [], []
    for k, (sid, sl) in enumerate(data.subject_slices()):
        ids.append(sid)
        times.append(data.times[sl])
        covs.append(design[sl])
        risks.append(data.at_risk[sl])
        visit_mask = data.visit[sl]
        for t in data.times[sl][visit_mask]:
            ev_subject.append(k)
            ev_times.append(t)
    return CountingProcessData(
        subject_ids=ids,
        times=times,
        covariates=covs,
        at_risk=risks,
        event_subject=np.array(ev_subject, dtype=int),
        event_times=np.array(ev_times, dtype=float),
        covariate_names=tuple(covariate_names),
    )


def _risk_structures(cp: CountingProcessData):
    """Distinct event times with multiplicities, plus the (subject, time)
    covariate tensor and at-risk mask over all distinct event times."""
    distinct, counts = np.unique(cp.event_times, return_counts=True)
    n, E = cp.n_subjects, distinct.size
    p = len(cp.covariate_names)
    z = np.zeros((n, E, p))
    at_risk = np.zeros((n, E), dtype=bool)
    for k in range(n):
        idx = np.searchsorted(cp.times[k], distinct, side="right") - 1
        uncovered = idx < 0
        if np.any(uncovered):
            t_bad = distinct[int(np.flatnonzero(uncovered)[0])]
            raise CoverageError(
                f"subject {cp.subject_ids[k]!r} has no covariate row at or before "
                f"event time {t_bad:g}"
            )
        z[k] = cp.covariates[k][idx]
        at_risk[k] = cp.at_risk[k][idx]

    # each event's own covariate value, from its subject's row at that time
    ev_z = np.empty((cp.n_events, p))
    for e in range(cp.n_events):
        k = cp.event_subject[e]
        idx = np.searchsorted(cp.times[k], cp.event_times[e], side="right") - 1
        ev_z[e] = cp.covariates[k][idx]
    return distinct, counts.astype(float), z, at_risk, ev_z


def _partial_loglik_objective(gamma, counts, z, at_risk, event_z_sum) -> ObjectiveEvaluation:
    with np.errstate(over="ignore", invalid="ignore"):
        scores = z @ gamma  # (n, E)
        expsc = np.where(at_risk, np.exp(scores), 0.0)
        s0 = expsc.sum(axis=0)  # (E,)
        s1 = np.einsum("ke,kep->ep", expsc, z)
        s2 = np.einsum("ke,kep,keq->epq", expsc, z, z)
        if np.any(s0 <= 0):
            raise DomainError("empty risk set at an event time")
        value = float(gamma @ event_z_sum - counts @ np.log(s0))
        m = s1 / s0[:, np.newaxis]
        gradient = event_z_sum - counts @ m
        hess = -(
            np.einsum("e,epq->pq", counts, s2 / s0[:, np.newaxis, np.newaxis])
            - np.einsum("e,ep,eq->pq", counts, m, m)
        )
        hess = 0.5 * (hess + hess.T)
    if not np.isfinite(value) or not np.all(np.isfinite(gradient)) or not np.all(np.isfinite(hess)):
        # overflowed risk sums: signal an unusable trial point to the caller
        p = gamma.size
        return ObjectiveEvaluation(-np.inf, np.zeros(p), np.eye(p))
    return ObjectiveEvaluation(value, gradient, hess)


def fit_proportional_intensity(
    cp: CountingProcessData, tol: float = 1e-8, max_iter: int = 100
) -> IntensityFit:
    """Maximize the Breslow partial likelihood of the visit process from gamma = 0."""
    if cp.n_events == 0:
        raise DomainError("no events: the intensity model cannot be fitted")
    distinct, counts, z, at_risk, ev_z = _risk_structures(cp)
    event_z_sum = ev_z.sum(axis=0)
    n_events = float(cp.n_events)

    def guard(gamma):
        if np.max(np.abs(gamma)) > _SEPARATION_BOUND:
            raise SeparationError(
                f"intensity coefficient magnitude exceeded {_SEPARATION_BOUND:g}"
            )

    # per-event scaling keeps the gradient tolerance sample-size free
    def scaled_objective(gamma):
        ev = _partial_loglik_objective(gamma, counts, z, at_risk, event_z_sum)
        return ObjectiveEvaluation(ev.value / n_events, ev.gradient / n_events, ev.hessian / n_events)

    result = newton_maximize(
        scaled_objective,
        np.zeros(len(cp.covariate_names)),
        tol=tol,
        max_iter=max_iter,
        iterate_guard=guard,
    )
    if not result.converged:
        raise ConvergenceError(
            f"intensity fit stopped after {result.iterations} iterations with "
            f"gradient norm {result.final_gradient_norm:.3e}"
        )
    return IntensityFit(result.argmax, float(result.value) * n_events, result, cp.covariate_names)


def iiv_weight(fit: IntensityFit, z) -> float | np.ndarray:
    """exp(gamma'z): the covariate part of the visit rate; strictly positive.

    Accepts a single covariate vector or an (n, p) matrix of them.
    """
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        if z.size != fit.gamma.size:
            raise DomainError(f"covariate vector length {z.size} != {fit.gamma.size}")
        return float(np.exp(z @ fit.gamma))
    if z.shape[1] != fit.gamma.size:
        raise DomainError(f"covariate matrix width {z.shape[1]} != {fit.gamma.size}")
    return np.exp(z @ fit.gamma)
