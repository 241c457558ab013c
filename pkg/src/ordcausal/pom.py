"""Weighted proportional-odds regression for ordinal outcomes.

Cumulative probabilities follow P(Y <= j | x) = expit(alpha_j - beta'x), so a
positive slope shifts probability mass toward higher categories: per
delta-unit increase in regressor k, the odds of {Y <= j} are multiplied by
exp(-beta_k * delta) and the odds of landing in a higher category by
exp(beta_k * delta). Both directions are reported explicitly
(``OddsRatioPair``) because either may be the quantity of substantive
interest.

Intercepts are kept strictly increasing by optimizing over
(alpha_1, log increments, beta), which leaves the Newton solver
unconstrained. All likelihood code is weighted; zero-weight rows are accepted
and contribute nothing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DomainError, SeparationError
from .optim import ObjectiveEvaluation, SolverResult, newton_maximize

_SEPARATION_BOUND = 50.0


def expit(x):
    """Overflow-safe inverse logit."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


def _log1pexp(x):
    # log(1 + e^x) without overflow
    return np.logaddexp(0.0, x)


def _log1mexp(t):
    # log(1 - e^t) for t < 0, split at -ln 2 for accuracy; t == 0 gives -inf
    t = np.asarray(t, dtype=float)
    out = np.empty_like(t)
    small = t < -np.log(2.0)
    with np.errstate(divide="ignore"):
        out[small] = np.log1p(-np.exp(t[small]))
        out[~small] = np.log(-np.expm1(t[~small]))
    return out


@dataclass(frozen=True)
class POMFit:
    """Fitted proportional-odds model."""

    alphas: np.ndarray
    beta: np.ndarray
    n_categories: int
    loglik: float
    solver: SolverResult
    warnings: tuple = ()


@dataclass(frozen=True)
class OddsRatioPair:
    """Odds ratios in both reporting directions for one regressor increment."""

    or_leq: float
    or_higher: float


def unpack_params(params, n_categories: int):
    """Split a packed vector into (alphas, beta); alphas rebuilt from log increments."""
    params = np.asarray(params, dtype=float)
    n_alpha = n_categories - 1
    alphas = np.empty(n_alpha)
    alphas[0] = params[0]
    for j in range(1, n_alpha):
        alphas[j] = alphas[j - 1] + np.exp(params[j])
    return alphas, params[n_alpha:].copy()


def pack_params(alphas, beta) -> np.ndarray:
    """Inverse of :func:`unpack_params`; intercepts must be strictly increasing."""
    alphas = np.asarray(alphas, dtype=float)
    beta = np.asarray(beta, dtype=float)
    increments = np.diff(alphas)
    if np.any(increments <= 0):
        raise DomainError("intercepts must be strictly increasing")
    return np.concatenate(([alphas[0]], np.log(increments), beta))


def pom_objective(params, X, y, w) -> ObjectiveEvaluation:
    """Weighted proportional-odds log-likelihood with analytic derivatives.

    ``params`` packs (alpha_1, log alpha-increments, beta); the category count
    is implied by ``len(params) - X.shape[1] + 1``. Derivatives are returned in
    the packed coordinates. Probabilities are evaluated in log space, so near
    separation the value degrades to a large negative number rather than -inf.
    """
    params = np.asarray(params, dtype=float)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y)
    w = np.asarray(w, dtype=float)
    n_cat = params.size - X.shape[1] + 1
    if n_cat < 2:
        raise DomainError("packed parameter vector too short for the design")
    if np.any(w < 0):
        raise DomainError("weights must be nonnegative")

    active = w > 0
    if not np.any(active):
        raise DomainError("all weights are zero")
    Xa, ya, wa = X[active], y[active].astype(int), w[active]
    if ya.min() < 1 or ya.max() > n_cat:
        raise DomainError(f"outcome categories must lie in 1..{n_cat}")

    alphas, beta = unpack_params(params, n_cat)
    n_alpha = n_cat - 1
    p = Xa.shape[1]
    eta = alphas[np.newaxis, :] - (Xa @ beta)[:, np.newaxis]  # (n, J-1)

    upper = ya - 1  # column of the upper split, valid when y < J
    lower = ya - 2  # column of the lower split, valid when y > 1
    has_upper = ya < n_cat
    has_lower = ya > 1

    rows = np.arange(ya.size)
    eta_u = np.where(has_upper, eta[rows, np.minimum(upper, n_alpha - 1)], 0.0)
    eta_l = np.where(has_lower, eta[rows, np.maximum(lower, 0)], 0.0)
    lpe_u = _log1pexp(eta_u)
    lpe_l = _log1pexp(eta_l)

    # log P(Y = y) per observation
    logp = np.empty(ya.size)
    only_upper = has_upper & ~has_lower  # y == 1
    only_lower = has_lower & ~has_upper  # y == J
    interior = has_upper & has_lower
    logp[only_upper] = (eta_u - lpe_u)[only_upper]
    logp[only_lower] = -lpe_l[only_lower]
    if np.any(interior):
        logp[interior] = (
            eta_u[interior]
            + _log1mexp(eta_l[interior] - eta_u[interior])
            - lpe_u[interior]
            - lpe_l[interior]
        )
    value = float(np.dot(wa, logp))
    if not np.isfinite(value):
        raise DomainError("proportional-odds log-likelihood is not finite")

    # ratios r = sigma'(eta)/P, via logs for stability; overflow to inf is
    # meaningful here (vanishing category probability) and handled by callers
    log_sprime_u = eta_u - 2.0 * lpe_u
    log_sprime_l = eta_l - 2.0 * lpe_l
    with np.errstate(over="ignore"):
        r_u = np.where(has_upper, np.exp(log_sprime_u - logp), 0.0)
        r_l = np.where(has_lower, np.exp(log_sprime_l - logp), 0.0)
    s_u = expit(eta_u)
    s_l = expit(eta_l)

    A = np.where(has_upper, r_u * (1.0 - 2.0 * s_u) - r_u**2, 0.0)
    B = np.where(has_lower, -r_l * (1.0 - 2.0 * s_l) - r_l**2, 0.0)
    C = r_u * r_l  # zero at either boundary

    # gradient and Hessian in the natural (alphas, beta) coordinates
    g_alpha = np.zeros(n_alpha)
    np.add.at(g_alpha, upper[has_upper], (wa * r_u)[has_upper])
    np.add.at(g_alpha, lower[has_lower], -(wa * r_l)[has_lower])
    g_beta = -Xa.T @ (wa * (r_u - r_l))

    H_aa = np.zeros((n_alpha, n_alpha))
    np.add.at(H_aa, (upper[has_upper], upper[has_upper]), (wa * A)[has_upper])
    np.add.at(H_aa, (lower[has_lower], lower[has_lower]), (wa * B)[has_lower])
    if np.any(interior):
        iu, il = upper[interior], lower[interior]
        np.add.at(H_aa, (iu, il), (wa * C)[interior])
        np.add.at(H_aa, (il, iu), (wa * C)[interior])

    H_ab = np.zeros((n_alpha, p))
    coef_u = np.where(has_upper, wa * (A + C), 0.0)
    coef_l = np.where(has_lower, wa * (B + C), 0.0)
    for j in range(n_alpha):
        mu = has_upper & (upper == j)
        ml = has_lower & (lower == j)
        if np.any(mu):
            H_ab[j] -= coef_u[mu] @ Xa[mu]
        if np.any(ml):
            H_ab[j] -= coef_l[ml] @ Xa[ml]

    H_bb = Xa.T @ (Xa * (wa * (A + B + 2.0 * C))[:, np.newaxis])

    # chain rule to the packed coordinates: alphas = T(alpha_1, d_1..d_{J-2})
    M = np.zeros((n_alpha, n_alpha))
    M[:, 0] = 1.0
    for c in range(1, n_alpha):
        M[c:, c] = np.exp(params[c])
    g_packed_alpha = M.T @ g_alpha
    H_pa = M.T @ H_aa @ M
    for c in range(1, n_alpha):
        H_pa[c, c] += np.exp(params[c]) * np.sum(g_alpha[c:])

    gradient = np.concatenate([g_packed_alpha, g_beta])
    hessian = np.zeros((n_alpha + p, n_alpha + p))
    hessian[:n_alpha, :n_alpha] = H_pa
    hessian[:n_alpha, n_alpha:] = M.T @ H_ab
    hessian[n_alpha:, :n_alpha] = hessian[:n_alpha, n_alpha:].T
    hessian[n_alpha:, n_alpha:] = H_bb
    hessian = 0.5 * (hessian + hessian.T)
    return ObjectiveEvaluation(value, gradient, hessian)


def _initial_params(X, y, w, n_cat: int) -> np.ndarray:
    # intercepts from the weighted empirical cumulative frequencies, slopes at zero
    cum = np.zeros(n_cat - 1)
    total = float(np.sum(w))
    for j in range(1, n_cat):
        cum[j - 1] = float(np.sum(w[y <= j])) / total
    cum = np.clip(cum, 0.01, 0.99)
    alphas = np.log(cum / (1.0 - cum))
    increments = np.maximum(np.diff(alphas), 1e-3)  # ties from empty categories
    return np.concatenate(([alphas[0]], np.log(increments), np.zeros(X.shape[1])))


def fit_pom(X, y, w=None, n_categories: int | None = None, tol: float = 1e-8, max_iter: int = 100) -> POMFit:
    """Fit a weighted proportional-odds model by Newton maximization.

    ``n_categories`` defaults to ``max(y)``; categories must be consecutive
    integers starting at 1 and both extreme categories must carry positive
    weight. A slope exceeding 50 in absolute value during iteration raises
    :class:`SeparationError`.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] == 1 and np.asarray(y).size != 1:
        X = X.T
    y = np.asarray(y).astype(int)
    w = np.ones(y.size) if w is None else np.asarray(w, dtype=float)
    if np.any(w < 0):
        raise DomainError("weights must be nonnegative")
    n_cat = int(n_categories) if n_categories is not None else int(y.max())
    active = w > 0
    ya = y[active]
    if ya.size == 0:
        raise DomainError("no observations with positive weight")
    if ya.min() < 1 or ya.max() > n_cat:
        raise DomainError(f"outcome categories must lie in 1..{n_cat}")
    if not np.any(ya == 1) or not np.any(ya == n_cat):
        raise DomainError("both extreme categories need at least one positively weighted observation")
    warnings_: list[str] = []
    for j in range(2, n_cat):
        if not np.any(ya == j):
            warnings_.append(f"interior category {j} unobserved")

    n_alpha = n_cat - 1

    def guard(packed):
        beta = packed[n_alpha:]
        if beta.size and np.max(np.abs(beta)) > _SEPARATION_BOUND:
            raise SeparationError(
                f"slope magnitude exceeded {_SEPARATION_BOUND:g}; data may be separated"
            )

    # maximize the per-unit-weight objective: same argmax, but the value stays
    # O(1) so the gradient tolerance is sample-size and weight-scale free
    total_weight = float(np.sum(w))

    n_params = (n_cat - 1) + X.shape[1]

    def scaled_objective(params):
        try:
            ev = pom_objective(params, X, y, w)
        except DomainError:
            # impossible configuration at a trial point (e.g. an intercept
            # increment underflowed to zero): reject the step, don't abort
            return ObjectiveEvaluation(-np.inf, np.zeros(n_params), np.eye(n_params))
        return ObjectiveEvaluation(
            ev.value / total_weight, ev.gradient / total_weight, ev.hessian / total_weight
        )

    init = _initial_params(X, y, w, n_cat)
    result = newton_maximize(
        scaled_objective, init, tol=tol, max_iter=max_iter, iterate_guard=guard
    )
    if not result.converged:
        raise ConvergenceError(
            f"proportional-odds fit stopped after {result.iterations} iterations "
            f"with gradient norm {result.final_gradient_norm:.3e}"
        )
    alphas, beta = unpack_params(result.argmax, n_cat)
    return POMFit(alphas, beta, n_cat, float(result.value) * total_weight, result, tuple(warnings_))


def cumulative_prob(fit: POMFit, x, j: int) -> float:
    """P(Y <= j | x) under the fitted model; exactly 1 for the top category."""
    if not 1 <= j <= fit.n_categories:
        raise DomainError(f"category {j} outside 1..{fit.n_categories}")
    if j == fit.n_categories:
        return 1.0
    x = np.asarray(x, dtype=float)
    return float(expit(fit.alphas[j - 1] - float(x @ fit.beta)))


def marginal_or(fit: POMFit, regressor: int = 0, delta: float = 1.0) -> OddsRatioPair:
    """Odds ratios per ``delta``-unit increase in one regressor, both directions.

    Computed as powers of the one-unit ratio so that the k-unit OR equals the
    one-unit OR raised to k exactly.
    """
    if not 0 <= regressor < fit.beta.size:
        raise DomainError(f"regressor index {regressor} out of range")
    one_unit = float(np.exp(fit.beta[regressor]))
    return OddsRatioPair(or_leq=(1.0 / one_unit) ** delta, or_higher=one_unit**delta)


def probability_curve(fit: POMFit, regressor: int, grid, threshold: int, reference=None) -> np.ndarray:
    """P(Y >= threshold) along a grid of values of one regressor.

    Remaining regressors are held at ``reference`` (zeros by default).
    """
    if not 2 <= threshold <= fit.n_categories:
        raise DomainError(f"threshold {threshold} outside 2..{fit.n_categories}")
    if not 0 <= regressor < fit.beta.size:
        raise DomainError(f"regressor index {regressor} out of range")
    grid = np.asarray(grid, dtype=float)
    ref = np.zeros(fit.beta.size) if reference is None else np.asarray(reference, dtype=float)
    Xg = np.tile(ref, (grid.size, 1))
    Xg[:, regressor] = grid
    return expit(Xg @ fit.beta - fit.alphas[threshold - 2])
