"""Cluster (per-subject) nonparametric bootstrap.

Whole subjects are resampled with replacement, so within-subject correlation
survives resampling, and the entire estimation pipeline (intensity model,
exposure models, outcome model) is refitted on every replicate so the
interval reflects the variability of all fitted coefficients. Intervals are
percentile bounds taken as order statistics of the replicate vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import partial

import numpy as np

from ._parallel import map_indexed
from ._rng import stream
from .errors import BootstrapError
from .estimators import EstimatorSpec, estimate
from .panel import PanelDataset

_TAG_RESAMPLE = 101
DEFAULT_REPLICATES = 500


@dataclass(frozen=True)
class BootstrapResult:
    point: float
    replicates: np.ndarray
    ci_lower: float
    ci_upper: float
    level: float
    n_failed: int


def cluster_resample(data: PanelDataset, seed: int) -> PanelDataset:
    """Resample whole subject clusters with replacement, to the original count.

    Drawn clusters keep their records intact and receive synthetic ids
    ``"<original>~<draw index>"`` so provenance stays checkable.
    """
    slices = data.subject_slices()
    n = len(slices)
    draws = stream(seed, _TAG_RESAMPLE).integers(0, n, size=n)

    index_parts = []
    cluster_ids = np.empty(n, dtype=object)
    lengths = np.empty(n, dtype=int)
    for position, drawn in enumerate(draws):
        sid, sl = slices[drawn]
        index_parts.append(np.arange(sl.start, sl.stop))
        cluster_ids[position] = f"{sid}~{position}"
        lengths[position] = sl.stop - sl.start
    order = np.concatenate(index_parts) if index_parts else np.array([], dtype=int)
    return PanelDataset(
        subject_ids=np.repeat(cluster_ids, lengths),
        times=data.times[order],
        at_risk=data.at_risk[order],
        visit=data.visit[order],
        exposure=data.exposure[order],
        covariates=data.covariates[order],
        covariate_names=data.covariate_names,
        outcome=data.outcome[order],
        n_categories=data.n_categories,
        tau=data.tau,
    )


def percentile_bound(sorted_replicates: np.ndarray, q: float) -> float:
    """Empirical q-quantile as an order statistic (the ceil(q*m)-th smallest).

    The index is computed with a small guard so that q*m landing on an
    integer up to float rounding (e.g. (1-0.95)/2 * 40) selects the intended
    order statistic.
    """
    m = sorted_replicates.size
    idx = min(m - 1, max(0, math.ceil(q * m - 1e-9) - 1))
    return float(sorted_replicates[idx])


def _bootstrap_replicate(r: int, data: PanelDataset, spec: EstimatorSpec, seed: int):
    replicate_seed = int(np.random.SeedSequence((seed, r)).generate_state(1)[0])
    resampled = cluster_resample(data, replicate_seed)
    try:
        return float(estimate(resampled, spec).log_or_higher)
    except Exception as exc:
        return f"{type(exc).__name__}: {exc}"


def bootstrap_ci(
    data: PanelDataset,
    spec: EstimatorSpec,
    B: int = DEFAULT_REPLICATES,
    level: float = 0.95,
    seed: int = 0,
) -> BootstrapResult:
    """Percentile confidence interval for the higher-direction log odds ratio.

    Each replicate refits the full pipeline on a cluster resample. Failed
    replicates are dropped and counted; more than 10% failures aborts.
    """
    if B < 2:
        raise ValueError("B must be at least 2")
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0, 1)")
    point = float(estimate(data, spec).log_or_higher)
    rows = map_indexed(partial(_bootstrap_replicate, data=data, spec=spec, seed=seed), B)
    values = np.array([v for v in rows if isinstance(v, float)])
    n_failed = B - values.size
    if n_failed > 0.10 * B:
        first = next(v for v in rows if isinstance(v, str))
        raise BootstrapError(f"{n_failed}/{B} bootstrap replicates failed (first: {first})")
    ordered = np.sort(values)
    alpha = (1.0 - level) / 2.0
    return BootstrapResult(
        point=point,
        replicates=values,
        ci_lower=percentile_bound(ordered, alpha),
        ci_upper=percentile_bound(ordered, 1.0 - alpha),
        level=level,
        n_failed=n_failed,
    )
