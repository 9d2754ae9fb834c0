"""Damped-Newton root finder for estimating equations.

Solves G(theta) = 0 for square systems. The Jacobian of G comes from
forward differences. Each iteration first tries the undamped Newton step;
on rejection (residual norm did not decrease, or the step left the domain)
Levenberg damping engages at ``damping`` and escalates tenfold per further
rejection, with plain step-halving as a last resort. Non-convergence is not
an error: the best iterate seen is returned, flagged.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .exceptions import NonFiniteError, PropfitError, SingularError

_JAC_STEP = float(np.sqrt(np.finfo(float).eps))
_LAMBDA_MAX = 1e10
_MAX_HALVINGS = 15

Residual = Callable[[np.ndarray], np.ndarray]


@dataclass
class SolveResult:
    theta: np.ndarray
    iterations: int
    converged: bool
    residual_norm: float
    tolerance: float


def _norm(r: np.ndarray) -> float:
    return float(np.max(np.abs(r))) if r.size else 0.0


def _try_residual(residual: Residual, theta: np.ndarray) -> tuple[np.ndarray | None, float]:
    """Evaluate a trial point; domain violations count as an infinitely bad step."""
    try:
        r = np.asarray(residual(theta), dtype=float)
    except PropfitError:
        return None, np.inf
    if not np.all(np.isfinite(r)):
        return None, np.inf
    return r, _norm(r)


def _fd_jacobian(residual: Residual, theta: np.ndarray, r0: np.ndarray) -> np.ndarray:
    p = theta.size
    A = np.empty((r0.size, p))
    for j in range(p):
        h = _JAC_STEP * max(1.0, abs(theta[j]))
        tp = theta.copy()
        tp[j] += h
        rj, _ = _try_residual(residual, tp)
        if rj is None:
            # Step into invalid territory: difference backwards instead.
            tp[j] = theta[j] - h
            rj, _ = _try_residual(residual, tp)
            if rj is None:
                raise SingularError("cannot difference the estimating equation near the iterate")
            A[:, j] = (r0 - rj) / (theta[j] - tp[j])
        else:
            A[:, j] = (rj - r0) / (tp[j] - theta[j])
    return A


def _lm_step(A: np.ndarray, r: np.ndarray, lam: float) -> np.ndarray | None:
    """One Newton (lam == 0) or Levenberg-damped step; None if unsolvable."""
    try:
        if lam == 0.0:
            return np.linalg.solve(A, -r)
        AtA = A.T @ A
        diag = np.diag(AtA).copy()
        floor = max(float(np.max(diag)), 1.0) * 1e-14
        return np.linalg.solve(AtA + lam * np.diag(np.maximum(diag, floor)), -(A.T @ r))
    except np.linalg.LinAlgError:
        return None


def solve_newton(
    residual: Residual,
    theta0: np.ndarray,
    *,
    tol_relative: float = 1e-8,
    tol_absolute: float = 1e-10,
    max_iter: int = 100,
    damping: float = 1e-3,
    step_residual_factory: Callable[[np.ndarray], Residual] | None = None,
) -> SolveResult:
    """Drive G(theta) to zero.

    ``step_residual_factory``, when given, supplies a per-iterate surrogate
    of G used only to build the Jacobian and the Newton step (the profiled
    maximum-likelihood equation freezes its scale estimate this way); step
    acceptance and convergence always measure the true ``residual``.
    """
    theta = np.asarray(theta0, dtype=float).copy()
    r = np.asarray(residual(theta), dtype=float)
    if not np.all(np.isfinite(r)):
        raise NonFiniteError("estimating equation is non-finite at the starting point")
    rnorm = _norm(r)
    tol = max(tol_absolute, tol_relative * rnorm)

    best_theta, best_norm = theta.copy(), rnorm
    lam = 0.0  # pure Newton until a step gets rejected

    for it in range(1, max_iter + 1):
        if rnorm <= tol:
            return SolveResult(theta, it - 1, True, rnorm, tol)

        step_residual = residual if step_residual_factory is None else step_residual_factory(theta)
        A = _fd_jacobian(step_residual, theta, r)

        accepted = False
        trial_lam = lam
        last_delta = None
        while trial_lam <= _LAMBDA_MAX:
            delta = _lm_step(A, r, trial_lam)
            if delta is not None:
                last_delta = delta
                r_new, norm_new = _try_residual(residual, theta + delta)
                if r_new is not None and norm_new < rnorm:
                    theta = theta + delta
                    r, rnorm = r_new, norm_new
                    lam = 0.0 if trial_lam == 0.0 else trial_lam / 10.0
                    if lam < 1e-12:
                        lam = 0.0
                    accepted = True
                    break
            trial_lam = damping if trial_lam == 0.0 else trial_lam * 10.0

        if not accepted and last_delta is not None:
            scale = 0.5
            for _ in range(_MAX_HALVINGS):
                r_new, norm_new = _try_residual(residual, theta + scale * last_delta)
                if r_new is not None and norm_new < rnorm:
                    theta = theta + scale * last_delta
                    r, rnorm = r_new, norm_new
                    accepted = True
                    break
                scale *= 0.5
        if not accepted and last_delta is None:
            raise SingularError("Newton matrix singular and damping escalation failed")

        if rnorm < best_norm:
            best_theta, best_norm = theta.copy(), rnorm
        if not accepted:
            return SolveResult(best_theta, it, best_norm <= tol, best_norm, tol)

    if rnorm < best_norm:
        best_theta, best_norm = theta.copy(), rnorm
    return SolveResult(best_theta, max_iter, best_norm <= tol, best_norm, tol)
