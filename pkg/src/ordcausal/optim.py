"""Newton maximization with analytic derivatives, plus finite-difference oracles.

The solver backtracks by step halving and accepts any non-decrease of the
objective; singular Hessians get one ridge retry before failing. Finite
differences are kept value-only so they stay independent of the analytic
derivatives they are used to check.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, SingularHessianError

_MAX_HALVINGS = 30
_RIDGE = 1e-8
_HESSIAN_SYMMETRY_RTOL = 1e-10


@dataclass(frozen=True)
class ObjectiveEvaluation:
    """Value, gradient and Hessian of a smooth objective at one point."""

    value: float
    gradient: np.ndarray
    hessian: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.gradient, dtype=float)
        h = np.asarray(self.hessian, dtype=float)
        if h.shape != (g.size, g.size):
            raise ValueError(f"hessian shape {h.shape} does not match gradient length {g.size}")
        scale = 1.0 + float(np.max(np.abs(h))) if h.size else 1.0
        if h.size and np.max(np.abs(h - h.T)) > _HESSIAN_SYMMETRY_RTOL * scale:
            raise ValueError("hessian is not symmetric")
        object.__setattr__(self, "gradient", g)
        object.__setattr__(self, "hessian", h)


@dataclass(frozen=True)
class SolverResult:
    argmax: np.ndarray
    value: float
    iterations: int
    converged: bool
    final_gradient_norm: float


def _newton_step(hessian: np.ndarray, gradient: np.ndarray) -> np.ndarray:
    """Solve H s = -g, retrying once with a ridge on the diagonal."""
    try:
        step = np.linalg.solve(hessian, -gradient)
        if np.all(np.isfinite(step)):
            return step
    except np.linalg.LinAlgError:
        pass
    ridged = hessian.copy()
    idx = np.diag_indices_from(ridged)
    ridged[idx] -= _RIDGE * (1.0 + np.abs(np.diag(hessian)))
    try:
        step = np.linalg.solve(ridged, -gradient)
    except np.linalg.LinAlgError as exc:
        raise SingularHessianError("hessian singular after ridge retry") from exc
    if not np.all(np.isfinite(step)):
        raise SingularHessianError("hessian solve produced non-finite step after ridge retry")
    return step


def newton_maximize(
    objective: Callable[[np.ndarray], ObjectiveEvaluation],
    init: Sequence[float],
    tol: float = 1e-8,
    max_iter: int = 100,
    iterate_guard: Callable[[np.ndarray], None] | None = None,
) -> SolverResult:
    """Maximize a twice-differentiable objective by damped Newton ascent.

    Each iteration tries the full Newton step, halving it until the objective
    does not decrease (at most 30 halvings). Iteration stops when the gradient
    infinity norm falls to ``tol``, when ``max_iter`` accepted steps have been
    taken, or when no step length makes progress. ``iterate_guard``, if given,
    is called with each accepted iterate and may raise to abort (used by the
    fitters for separation checks).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    x = np.array(init, dtype=float)
    ev = objective(x)
    if not np.isfinite(ev.value) or not np.all(np.isfinite(ev.gradient)):
        raise DomainError("objective or gradient not finite at the initial point")

    iterations = 0
    while iterations < max_iter:
        gnorm = float(np.max(np.abs(ev.gradient))) if ev.gradient.size else 0.0
        if gnorm <= tol:
            return SolverResult(x, float(ev.value), iterations, True, gnorm)
        step = _newton_step(ev.hessian, ev.gradient)
        accepted = None
        scale = 1.0
        for _ in range(_MAX_HALVINGS + 1):
            candidate = x + scale * step
            cand_ev = objective(candidate)
            if np.isfinite(cand_ev.value) and cand_ev.value >= ev.value:
                accepted = (candidate, cand_ev)
                break
            scale *= 0.5
        if accepted is None:
            break
        x, ev = accepted
        iterations += 1
        if iterate_guard is not None:
            iterate_guard(x)

    gnorm = float(np.max(np.abs(ev.gradient))) if ev.gradient.size else 0.0
    return SolverResult(x, float(ev.value), iterations, gnorm <= tol, gnorm)


def finite_diff_gradient(
    objective: Callable[[np.ndarray], float],
    point: Sequence[float],
    h: float = 1e-6,
) -> np.ndarray:
    """Central-difference gradient of a value-only objective."""
    if h <= 0:
        raise ValueError("h must be positive")
    x = np.array(point, dtype=float)
    grad = np.empty_like(x)
    for k in range(x.size):
        shift = np.zeros_like(x)
        shift[k] = h
        hi = float(objective(x + shift))
        lo = float(objective(x - shift))
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise DomainError(f"objective not finite near coordinate {k}")
        grad[k] = (hi - lo) / (2.0 * h)
    return grad


def finite_diff_hessian(
    objective: Callable[[np.ndarray], float],
    point: Sequence[float],
    h: float = 1e-4,
) -> np.ndarray:
    """Central-difference Hessian of a value-only objective, symmetrized."""
    if h <= 0:
        raise ValueError("h must be positive")
    x = np.array(point, dtype=float)
    n = x.size
    hess = np.empty((n, n))
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = h
        for j in range(i, n):
            ej = np.zeros(n)
            ej[j] = h
            fpp = float(objective(x + ei + ej))
            fpm = float(objective(x + ei - ej))
            fmp = float(objective(x - ei + ej))
            fmm = float(objective(x - ei - ej))
            if not all(np.isfinite(v) for v in (fpp, fpm, fmp, fmm)):
                raise DomainError(f"objective not finite near coordinates ({i}, {j})")
            hess[i, j] = hess[j, i] = (fpp - fpm - fmp + fmm) / (4.0 * h * h)
    return hess
