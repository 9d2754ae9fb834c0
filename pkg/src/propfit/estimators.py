"""The four estimators for proportional-error regression.

Each estimator is the root of an estimating equation in theta:

* ``ml``   - profiled normal maximum likelihood: the relative-error scale
  ``sigma^2`` is re-estimated as ``mean(((y-f)/f)^2)`` at each iterate and
  substituted back into the score.
* ``ql``   - quasi likelihood: ``sum (y-f)/f^2 * grad f = 0``.
* ``wls``  - weighted least squares with fitted weights ``1/f^2``, which
  adds the term ``sum (y-f)^2/f^3 * grad f``.
* ``dwls`` - data-weighted least squares: weights ``1/y^2`` fixed by the
  observed responses, ``sum (y-f)/y^2 * grad f = 0``.

QL, WLS and DWLS estimates never depend on how (or whether) sigma is
estimated; their sigma is reported from the unbiased rule afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._newton import SolveResult, solve_newton
from .exceptions import DegenerateError, DomainError, ZeroMeanError, ZeroResponseError
from .models import Array, Dataset, ModelFunction

METHODS = ("ml", "ql", "wls", "dwls")


def _check_method(method: str) -> str:
    m = method.lower()
    if m not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    return m


@dataclass(frozen=True)
class FitOptions:
    """Solver controls.

    ``tol_residual`` is relative to the estimating-equation norm at the
    starting point; ``tol_absolute`` is the floor. ``start`` is either a
    parameter vector or ``"auto"``, which runs an unweighted least-squares
    pre-fit from the model's data-driven hint.
    """

    tol_residual: float = 1e-8
    tol_absolute: float = 1e-10
    max_iter: int = 100
    damping: float = 1e-3
    start: object = "auto"

    def __post_init__(self):
        if self.tol_residual <= 0 or self.tol_absolute <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass(frozen=True)
class FitResult:
    method: str
    theta_hat: Array
    sigma_hat: float
    iterations: int
    converged: bool
    residual_norm: float
    tolerance: float


# ---------------------------------------------------------------------------
# Estimating equations
# ---------------------------------------------------------------------------

def _parts(model: ModelFunction, data: Dataset, theta, need_f_nonzero: bool):
    # Hot path: validate once, then hit the raw eval/grad callables.
    theta = model.check_theta(theta)
    if model.domain_guard is not None and not model.domain_guard(data.x, theta):
        raise DomainError(f"model {model.name!r} is undefined at the requested point")
    f = np.asarray(model.eval_fn(data.x, theta), dtype=float)
    if need_f_nonzero and not np.all(f != 0.0):
        raise ZeroMeanError("mean response is zero at an observation")
    if model.grad_fn is not None:
        G = np.asarray(model.grad_fn(data.x, theta), dtype=float)
    else:
        G = model._fd_grad(data.x, theta)
    return f, G, data.y - f


def equation_residual(method: str, model: ModelFunction, data: Dataset, theta,
                      sigma: float | None = None) -> Array:
    """Left-hand side of the method's estimating equation at ``theta``.

    For ``ml`` the optional ``sigma`` freezes the scale factor; when omitted
    the profiled value ``sqrt(mean(((y-f)/f)^2))`` at ``theta`` is used.
    """
    method = _check_method(method)
    if method == "dwls":
        if np.any(data.y == 0.0):
            raise ZeroResponseError("data-weighted least squares requires all y != 0")
        f, G, r = _parts(model, data, theta, need_f_nonzero=False)
        return G.T @ (r / data.y**2)

    f, G, r = _parts(model, data, theta, need_f_nonzero=True)
    rel = r / f
    if method == "ql":
        return G.T @ (r / f**2)
    if method == "wls":
        return G.T @ ((r + rel * r) / f**2)
    # ml
    s2 = float(np.mean(rel**2)) if sigma is None else float(sigma) ** 2
    return s2 * (G.T @ (1.0 / f)) - G.T @ ((r + rel * r) / f**2)


# ---------------------------------------------------------------------------
# Sigma estimates
# ---------------------------------------------------------------------------

def _rel_residuals(model: ModelFunction, data: Dataset, theta_hat) -> Array:
    f = np.asarray(model.eval(data.x, theta_hat), dtype=float)
    if np.any(f == 0.0):
        raise ZeroMeanError("mean response is zero at an observation")
    return (data.y - f) / f


def estimate_sigma_ml(model: ModelFunction, data: Dataset, theta_hat) -> float:
    """Maximum-likelihood scale: sqrt(mean of squared relative residuals)."""
    rel = _rel_residuals(model, data, theta_hat)
    return float(np.sqrt(np.mean(rel**2)))


def estimate_sigma_unbiased(model: ModelFunction, data: Dataset, theta_hat,
                            p: int | None = None) -> float:
    """Degrees-of-freedom corrected scale: divisor n - p instead of n."""
    p = model.p if p is None else int(p)
    if data.n <= p:
        raise ValueError(f"need n > p, got n={data.n}, p={p}")
    rel = _rel_residuals(model, data, theta_hat)
    return float(np.sqrt(np.sum(rel**2) / (data.n - p)))


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------

def _gauss_newton_phase(model: ModelFunction, data: Dataset, weighting: str, theta: Array,
                        max_steps: int = 10) -> Array:
    """Damped Gauss-Newton approach phase before the Newton solve.

    Saturating dose-response curves have near-degenerate ridges where raw
    Newton steps on the estimating equation overshoot; a few scoring steps
    (``weighting``: "ols" for unit weights, "rel" for 1/f^2, "data" for the
    fixed 1/y^2) land within O(sigma^2) of every method's root, where damped
    Newton then converges quadratically. Any trouble here just returns the
    best point so far and lets the Newton phase cope.
    """
    from .exceptions import PropfitError  # local: avoids import cycle at module load

    def weights(f):
        if weighting == "data":
            return 1.0 / data.y**2
        if weighting == "rel":
            return 1.0 / f**2
        return np.ones_like(f)

    for _ in range(max_steps):
        try:
            f, G, r = _parts(model, data, theta, need_f_nonzero=weighting == "rel")
            sw = np.sqrt(weights(f))
            delta, *_ = np.linalg.lstsq(G * sw[:, None], r * sw, rcond=None)
        except (PropfitError, np.linalg.LinAlgError):
            return theta
        if not np.all(np.isfinite(delta)):
            return theta
        merit = float(np.sum((sw * r) ** 2))
        scale = 1.0
        accepted = False
        for _ in range(12):
            trial = theta + scale * delta
            try:
                f_t, _, r_t = _parts(model, data, trial, need_f_nonzero=weighting == "rel")
            except PropfitError:
                scale *= 0.5
                continue
            if float(np.sum((np.sqrt(weights(f_t)) * r_t) ** 2)) <= merit:
                accepted = True
                break
            scale *= 0.5
        if not accepted:
            return theta
        theta = theta + scale * delta
        if float(np.max(np.abs(scale * delta) / np.maximum(1.0, np.abs(theta)))) < 1e-12:
            break
    return theta


def _resolve_start(model: ModelFunction, data: Dataset, opts: FitOptions) -> Array:
    if not isinstance(opts.start, str):
        return model.check_theta(np.asarray(opts.start, dtype=float))
    if opts.start != "auto":
        raise ValueError(f"unknown start spec {opts.start!r}")
    if model.start_hint is not None:
        hint = model.check_theta(model.start_hint(data.x, data.y))
    else:
        hint = np.ones(model.p)
    # Unweighted least-squares pre-fit sharpens the hint before the real
    # (weighted) equations see it.
    return _gauss_newton_phase(model, data, "ols", hint, max_steps=40)


def _finish(method: str, model: ModelFunction, data: Dataset, sol: SolveResult,
            sigma_hat: float) -> FitResult:
    return FitResult(method=method, theta_hat=sol.theta, sigma_hat=sigma_hat,
                     iterations=sol.iterations, converged=sol.converged,
                     residual_norm=sol.residual_norm, tolerance=sol.tolerance)


def fit(model: ModelFunction, data: Dataset, method: str,
        opts: FitOptions | None = None) -> FitResult:
    """Fit one estimator; see the per-method wrappers for the contracts."""
    method = _check_method(method)
    opts = opts or FitOptions()
    if data.n <= model.p:
        raise ValueError(f"need n > p observations, got n={data.n}, p={model.p}")
    if method == "dwls" and np.any(data.y <= 0.0):
        raise ZeroResponseError("data-weighted least squares requires all y > 0")

    theta0 = _resolve_start(model, data, opts)
    theta0 = _gauss_newton_phase(model, data, "data" if method == "dwls" else "rel", theta0)

    if method == "ml":
        def profiled(theta):
            return equation_residual("ml", model, data, theta)

        def frozen_factory(theta):
            s = estimate_sigma_ml(model, data, theta)
            return lambda th: equation_residual("ml", model, data, th, sigma=s)

        sol = solve_newton(profiled, theta0,
                           tol_relative=opts.tol_residual, tol_absolute=opts.tol_absolute,
                           max_iter=opts.max_iter, damping=opts.damping,
                           step_residual_factory=frozen_factory)
        sigma_hat = estimate_sigma_ml(model, data, sol.theta)
        if sigma_hat == 0.0:
            f = np.asarray(model.eval(data.x, sol.theta), dtype=float)
            if np.any(data.y != f):
                raise DegenerateError("scale estimate collapsed to zero on non-interpolating data")
        return _finish(method, model, data, sol, sigma_hat)

    def residual(theta):
        return equation_residual(method, model, data, theta)

    sol = solve_newton(residual, theta0,
                       tol_relative=opts.tol_residual, tol_absolute=opts.tol_absolute,
                       max_iter=opts.max_iter, damping=opts.damping)
    sigma_hat = estimate_sigma_unbiased(model, data, sol.theta)
    return _finish(method, model, data, sol, sigma_hat)


def fit_ml(model: ModelFunction, data: Dataset, opts: FitOptions | None = None) -> FitResult:
    """Profiled normal maximum likelihood (two-part sigma/theta iteration)."""
    return fit(model, data, "ml", opts)


def fit_ql(model: ModelFunction, data: Dataset, opts: FitOptions | None = None) -> FitResult:
    """Quasi-likelihood estimator with variance function f^2."""
    return fit(model, data, "ql", opts)


def fit_wls(model: ModelFunction, data: Dataset, opts: FitOptions | None = None) -> FitResult:
    """Weighted least squares with fitted 1/f^2 weights."""
    return fit(model, data, "wls", opts)


def fit_dwls(model: ModelFunction, data: Dataset, opts: FitOptions | None = None) -> FitResult:
    """Data-weighted least squares with fixed 1/y^2 weights; requires y > 0."""
    return fit(model, data, "dwls", opts)
