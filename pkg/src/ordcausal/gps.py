"""Stabilized inverse-probability weights for a continuous exposure.

Two routes are provided. The Normal-density route fits two linear exposure
models by least squares (one on the confounders, one intercept-only) and
weights each record by the ratio of Normal densities of the observed
exposure, with the intercept-only (stabilizing) model in the numerator:

    weight = N(d; marginal mean, marginal variance)
             / N(d; confounder-conditional mean, conditional variance)

so weights average to about 1 and break the exposure-confounder association.
Residual variances use the maximum-likelihood divisor n, i.e. the empirical
variance of the residuals.

The binned route categorizes the exposure (quantile bins by default, or
explicit edges), fits a proportional-odds model of bin membership on the
confounders, and weights by marginal bin frequency over conditional bin
probability. It is the recommended fallback when the exposure is far from
normally distributed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import BinningError, CollinearityError, DegeneracyError, DomainError
from .pom import POMFit, expit, fit_pom

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


@dataclass(frozen=True)
class LinearFit:
    """Least-squares exposure model with ML (divide-by-n) residual variance."""

    intercept: float
    slopes: np.ndarray
    residual_variance: float

    def predict(self, k) -> np.ndarray:
        k = np.atleast_2d(np.asarray(k, dtype=float))
        if self.slopes.size == 0:
            return np.full(k.shape[0], self.intercept)
        return self.intercept + k @ self.slopes


@dataclass(frozen=True)
class GPSFit:
    conditional: LinearFit  # exposure on confounders
    marginal: LinearFit  # intercept only


@dataclass(frozen=True)
class BinnedGPSFit:
    bin_edges: np.ndarray  # ascending, length n_bins + 1
    category_model: POMFit | None  # None when there is a single bin
    marginal_frequencies: np.ndarray

    @property
    def n_bins(self) -> int:
        return self.marginal_frequencies.size


def _ols(X: np.ndarray, d: np.ndarray, w: np.ndarray) -> tuple:
    sw = np.sqrt(w)
    coef, _, rank, _ = np.linalg.lstsq(X * sw[:, np.newaxis], d * sw, rcond=None)
    if rank < X.shape[1]:
        raise CollinearityError("exposure-model design matrix is rank deficient")
    resid = d - X @ coef
    variance = float(np.sum(w * resid**2) / np.sum(w))
    return coef, variance


def fit_exposure_models(K, d, weights=None) -> GPSFit:
    """Fit the confounder-conditional and intercept-only exposure models."""
    d = np.asarray(d, dtype=float)
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if K.shape[0] != d.size:
        K = K.T
    w = np.ones(d.size) if weights is None else np.asarray(weights, dtype=float)
    if np.unique(d).size < 2:
        raise DegeneracyError("need at least two distinct exposure values")

    X1 = np.column_stack([np.ones(d.size), K])
    coef1, var1 = _ols(X1, d, w)
    coef2, var2 = _ols(np.ones((d.size, 1)), d, w)
    scale = max(1.0, float(np.mean(d**2)))
    if var1 <= 1e-12 * scale or var2 <= 1e-12 * scale:
        raise DegeneracyError("exposure model residual variance is (near) zero")
    return GPSFit(
        conditional=LinearFit(float(coef1[0]), coef1[1:], var1),
        marginal=LinearFit(float(coef2[0]), np.empty(0), var2),
    )


def _log_normal_pdf(x, mean, variance):
    return -_LOG_SQRT_2PI - 0.5 * np.log(variance) - (x - mean) ** 2 / (2.0 * variance)


def ipt_weight_continuous(fit: GPSFit, d, k):
    """Stabilized weight: marginal over conditional Normal density of ``d``.

    Accepts scalars or aligned arrays; always strictly positive.
    """
    d = np.asarray(d, dtype=float)
    scalar = d.ndim == 0
    d = np.atleast_1d(d)
    k = np.atleast_2d(np.asarray(k, dtype=float))
    if k.shape[0] != d.size:
        k = k.T
    if k.shape != (d.size, fit.conditional.slopes.size):
        raise DomainError(
            f"confounder block shape {k.shape} does not match "
            f"({d.size}, {fit.conditional.slopes.size})"
        )
    log_num = _log_normal_pdf(d, fit.marginal.intercept, fit.marginal.residual_variance)
    log_den = _log_normal_pdf(d, fit.conditional.predict(k), fit.conditional.residual_variance)
    weight = np.exp(log_num - log_den)
    return float(weight[0]) if scalar else weight


def quantile_bin_edges(d, n_bins: int) -> np.ndarray:
    """Equal-frequency bin edges spanning the observed exposure range."""
    if n_bins < 1:
        raise BinningError("need at least one bin")
    edges = np.quantile(np.asarray(d, dtype=float), np.linspace(0.0, 1.0, n_bins + 1))
    if np.any(np.diff(edges) <= 0):
        raise BinningError(
            "quantile bin edges are not strictly increasing; "
            "pass explicit edges for point-mass exposures"
        )
    return edges


def assign_bins(edges: np.ndarray, d) -> np.ndarray:
    """0-based bin index; lowest bin closed on both sides, others left-open."""
    d = np.asarray(d, dtype=float)
    if np.any(d < edges[0]) or np.any(d > edges[-1]):
        raise DomainError("exposure value outside the binnable range")
    idx = np.searchsorted(edges[1:-1], d, side="left")
    return idx.astype(int)


def fit_binned_gps(K, d, bins=5) -> BinnedGPSFit:
    """Quantile-binned categorical exposure model on the confounders.

    ``bins`` is either a bin count (quantile edges) or explicit ascending
    edges covering the observed exposure range. Every bin must be nonempty.
    """
    d = np.asarray(d, dtype=float)
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if K.shape[0] != d.size:
        K = K.T
    if np.ndim(bins) == 0:
        edges = quantile_bin_edges(d, int(bins))
    else:
        edges = np.asarray(bins, dtype=float)
        if edges.size < 2 or np.any(np.diff(edges) <= 0):
            raise BinningError("explicit bin edges must be ascending with length >= 2")
        if d.min() < edges[0] or d.max() > edges[-1]:
            raise BinningError("explicit bin edges do not cover the observed exposure range")
    idx = assign_bins(edges, d)
    n_bins = edges.size - 1
    counts = np.bincount(idx, minlength=n_bins)
    if np.any(counts == 0):
        empty = int(np.flatnonzero(counts == 0)[0])
        raise BinningError(f"bin {empty} (edges {edges[empty]:g}..{edges[empty + 1]:g}) is empty")
    frequencies = counts / d.size
    model = fit_pom(K, idx + 1, n_categories=n_bins) if n_bins > 1 else None
    return BinnedGPSFit(edges, model, frequencies)


def _bin_probability(fit: BinnedGPSFit, bin_idx: np.ndarray, k: np.ndarray) -> np.ndarray:
    model = fit.category_model
    eta = k @ model.beta
    upper = np.where(
        bin_idx + 1 == fit.n_bins, 1.0, expit(model.alphas[np.minimum(bin_idx, fit.n_bins - 2)] - eta)
    )
    lower = np.where(bin_idx == 0, 0.0, expit(model.alphas[np.maximum(bin_idx - 1, 0)] - eta))
    return upper - lower


def ipt_weight_binned(fit: BinnedGPSFit, d, k):
    """Stabilized weight for the binned route: marginal bin frequency over the
    conditional bin probability. Conditional probabilities below 1e-12 emit a
    positivity warning; the weight is still returned."""
    d = np.asarray(d, dtype=float)
    scalar = d.ndim == 0
    d = np.atleast_1d(d)
    k = np.atleast_2d(np.asarray(k, dtype=float))
    if k.shape[0] != d.size:
        k = k.T
    idx = assign_bins(fit.bin_edges, d)
    if fit.category_model is None:
        weight = np.ones(d.size)
    else:
        prob = _bin_probability(fit, idx, k)
        tiny = prob < 1e-12
        if np.any(tiny):
            warnings.warn(
                f"{int(np.sum(tiny))} record(s) with conditional bin probability below 1e-12; "
                "positivity is suspect",
                RuntimeWarning,
                stacklevel=2,
            )
            prob = np.maximum(prob, np.finfo(float).tiny)
        weight = fit.marginal_frequencies[idx] / prob
    return float(weight[0]) if scalar else weight
