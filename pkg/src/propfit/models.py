"""Mean functions and datasets for proportional-error regression.

A model is a mean function ``f(x, theta)`` with vectorized evaluation over
the covariate, optional analytic first and second parameter derivatives
(finite differences fill in when they are absent), a domain guard, and a
data-driven starting-value hook used by the fitters.

Built-in models cover the shapes the bias formulae distinguish: a constant
mean, a fixed shape scaled by a single parameter, a two-parameter
exponential decay, and the three-parameter saturating exponential used for
thermoluminescence dose-response curves.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.typing import NDArray

from .exceptions import DomainError, NonFiniteError

Array = NDArray[np.float64]

# Central-difference step scale for first derivatives; second derivatives
# nest the same scheme and are symmetrized afterwards.
_FD_STEP = float(np.cbrt(np.finfo(float).eps))


def _as_1d(x) -> Array:
    return np.atleast_1d(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class Dataset:
    """Paired observations (x, y) for a single curve.

    Both arrays are 1-D, equal length, and finite.  ``x`` is the covariate
    (dose, in the dating application), ``y`` the observed response.
    """

    x: Array
    y: Array

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.ndim != 1 or y.ndim != 1:
            raise ValueError("x and y must be 1-D arrays")
        if x.shape != y.shape:
            raise ValueError(f"x and y must match in length, got {x.shape} vs {y.shape}")
        if x.size < 1:
            raise ValueError("dataset must contain at least one observation")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("observations must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.x.size


@dataclass(frozen=True)
class ModelFunction:
    """A mean function with derivative and domain contracts.

    Parameters
    ----------
    name : str
        Registry name.
    p : int
        Number of parameters.
    param_names : tuple of str
        Labels for the parameter vector components, used in reports.
    eval_fn : callable
        ``(x(n,), theta(p,)) -> f(n,)``, vectorized over x.
    grad_fn : callable, optional
        ``(x, theta) -> (n, p)`` analytic parameter gradient.  When absent,
        central finite differences with step ``cbrt(eps) * max(1, |theta_j|)``
        are used.
    hess_fn : callable, optional
        ``(x, theta) -> (n, p, p)`` analytic parameter Hessian.  When absent,
        nested central differences of the gradient, symmetrized.
    dx_fn : callable, optional
        ``(x, theta) -> (n,)`` derivative in the covariate (used by the
        curve-intersection machinery).  Finite differences when absent.
    domain_guard : callable, optional
        ``(x, theta) -> bool``; False marks invalid evaluation points.
    start_hint : callable, optional
        ``(x, y) -> theta`` rough data-driven starting values.
    """

    name: str
    p: int
    param_names: tuple[str, ...]
    eval_fn: Callable[[Array, Array], Array]
    grad_fn: Callable[[Array, Array], Array] | None = None
    hess_fn: Callable[[Array, Array], Array] | None = None
    dx_fn: Callable[[Array, Array], Array] | None = None
    domain_guard: Callable[[Array, Array], bool] | None = None
    start_hint: Callable[[Array, Array], Array] | None = None

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("model must have at least one parameter")
        if len(self.param_names) != self.p:
            raise ValueError("param_names length must equal p")

    # -- validation ---------------------------------------------------

    def check_theta(self, theta) -> Array:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.p,):
            raise ValueError(f"theta must have shape ({self.p},), got {theta.shape}")
        if not np.all(np.isfinite(theta)):
            raise DomainError("parameter vector contains non-finite entries")
        return theta

    def guard(self, x, theta) -> None:
        theta = self.check_theta(theta)
        if self.domain_guard is not None and not self.domain_guard(_as_1d(x), theta):
            raise DomainError(f"model {self.name!r} is undefined at the requested point")

    @property
    def has_analytic_grad(self) -> bool:
        return self.grad_fn is not None

    @property
    def has_analytic_hess(self) -> bool:
        return self.hess_fn is not None

    # -- evaluation ---------------------------------------------------

    def eval(self, x, theta) -> Array | float:
        """Mean response f(x, theta); scalar in, scalar out."""
        scalar = np.isscalar(x) or np.ndim(x) == 0
        xv = _as_1d(x)
        theta = self.check_theta(theta)
        self.guard(xv, theta)
        f = np.asarray(self.eval_fn(xv, theta), dtype=float)
        if not np.all(np.isfinite(f)):
            raise NonFiniteError(f"model {self.name!r} evaluated non-finite")
        return float(f[0]) if scalar else f

    def grad(self, x, theta) -> Array:
        """Parameter gradient; shape (p,) for scalar x, else (n, p)."""
        scalar = np.isscalar(x) or np.ndim(x) == 0
        xv = _as_1d(x)
        theta = self.check_theta(theta)
        self.guard(xv, theta)
        if self.grad_fn is not None:
            g = np.asarray(self.grad_fn(xv, theta), dtype=float)
        else:
            g = self._fd_grad(xv, theta)
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"gradient of model {self.name!r} is non-finite")
        return g[0] if scalar else g

    def hess(self, x, theta) -> Array:
        """Parameter Hessian; shape (p, p) for scalar x, else (n, p, p)."""
        scalar = np.isscalar(x) or np.ndim(x) == 0
        xv = _as_1d(x)
        theta = self.check_theta(theta)
        self.guard(xv, theta)
        if self.hess_fn is not None:
            h = np.asarray(self.hess_fn(xv, theta), dtype=float)
        else:
            h = self._fd_hess(xv, theta)
            h = 0.5 * (h + np.transpose(h, (0, 2, 1)))
        if not np.all(np.isfinite(h)):
            raise NonFiniteError(f"Hessian of model {self.name!r} is non-finite")
        return h[0] if scalar else h

    def dx(self, x, theta) -> Array | float:
        """Derivative of the mean in the covariate."""
        scalar = np.isscalar(x) or np.ndim(x) == 0
        xv = _as_1d(x)
        theta = self.check_theta(theta)
        self.guard(xv, theta)
        if self.dx_fn is not None:
            d = np.asarray(self.dx_fn(xv, theta), dtype=float)
        else:
            span = np.max(np.abs(xv)) if xv.size else 1.0
            h = _FD_STEP * max(1.0, span)
            d = (self.eval_fn(xv + h, theta) - self.eval_fn(xv - h, theta)) / (2.0 * h)
        return float(d[0]) if scalar else d

    # -- finite differences --------------------------------------------

    def _steps(self, theta: Array) -> Array:
        return _FD_STEP * np.maximum(1.0, np.abs(theta))

    def _fd_grad(self, x: Array, theta: Array) -> Array:
        h = self._steps(theta)
        g = np.empty((x.size, self.p))
        for j in range(self.p):
            tp, tm = theta.copy(), theta.copy()
            tp[j] += h[j]
            tm[j] -= h[j]
            # Divide by the step actually representable in floats.
            g[:, j] = (self.eval_fn(x, tp) - self.eval_fn(x, tm)) / (tp[j] - tm[j])
        return g

    def _fd_hess(self, x: Array, theta: Array) -> Array:
        # Central difference of the (possibly analytic) gradient.
        h = self._steps(theta)
        grad = self.grad_fn if self.grad_fn is not None else lambda xs, t: self._fd_grad(xs, t)
        hess = np.empty((x.size, self.p, self.p))
        for k in range(self.p):
            tp, tm = theta.copy(), theta.copy()
            tp[k] += h[k]
            tm[k] -= h[k]
            hess[:, :, k] = (np.asarray(grad(x, tp)) - np.asarray(grad(x, tm))) / (tp[k] - tm[k])
        return hess


# ---------------------------------------------------------------------------
# Derivative checking
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FdCheckReport:
    """Outcome of comparing analytic derivatives against central differences."""

    model: str
    grad_max_rel_err: float
    hess_max_rel_err: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.grad_max_rel_err <= self.tol and self.hess_max_rel_err <= self.tol


def fd_check(model: ModelFunction, theta, xs, tol: float = 1e-5) -> FdCheckReport:
    """Compare a model's analytic derivatives against finite differences.

    Requires at least one analytic derivative to be supplied; the report
    flags (never raises on) discrepancies above ``tol`` relative error.
    """
    if model.grad_fn is None and model.hess_fn is None:
        raise ValueError("fd_check requires analytic derivatives to compare against")
    xv = _as_1d(xs)
    theta = model.check_theta(theta)

    def rel_gap(a: Array, b: Array) -> float:
        scale = max(float(np.max(np.abs(a))), float(np.max(np.abs(b))), 1e-300)
        return float(np.max(np.abs(a - b))) / scale

    grad_err = 0.0
    if model.grad_fn is not None:
        grad_err = rel_gap(np.asarray(model.grad_fn(xv, theta)), model._fd_grad(xv, theta))

    hess_err = 0.0
    if model.hess_fn is not None:
        fd = model._fd_hess(xv, theta)
        fd = 0.5 * (fd + np.transpose(fd, (0, 2, 1)))
        hess_err = rel_gap(np.asarray(model.hess_fn(xv, theta)), fd)

    return FdCheckReport(model=model.name, grad_max_rel_err=grad_err,
                         hess_max_rel_err=hess_err, tol=tol)


# ---------------------------------------------------------------------------
# Built-in models
# ---------------------------------------------------------------------------

def constant_model() -> ModelFunction:
    """Constant mean f = theta1."""

    def ev(x, t):
        return np.full(x.size, t[0])

    def gr(x, t):
        return np.ones((x.size, 1))

    def he(x, t):
        return np.zeros((x.size, 1, 1))

    return ModelFunction(
        name="constant",
        p=1,
        param_names=("theta1",),
        eval_fn=ev,
        grad_fn=gr,
        hess_fn=he,
        dx_fn=lambda x, t: np.zeros(x.size),
        start_hint=lambda x, y: np.array([float(np.mean(y))]),
    )


def scaled_shape_model(g: Callable[[Array], Array], name: str = "scaled_shape") -> ModelFunction:
    """Fixed shape scaled by one parameter: f = theta1 * g(x)."""

    def ev(x, t):
        return t[0] * np.asarray(g(x), dtype=float)

    def gr(x, t):
        return np.asarray(g(x), dtype=float).reshape(-1, 1)

    def he(x, t):
        return np.zeros((x.size, 1, 1))

    def hint(x, y):
        gx = np.asarray(g(x), dtype=float)
        denom = float(gx @ gx)
        return np.array([float(y @ gx) / denom if denom > 0 else 1.0])

    return ModelFunction(
        name=name,
        p=1,
        param_names=("theta1",),
        eval_fn=ev,
        grad_fn=gr,
        hess_fn=he,
        start_hint=hint,
    )


def exponential_decay_model() -> ModelFunction:
    """Two-parameter exponential decay f = theta1 * exp(-x / theta2)."""

    def ev(x, t):
        return t[0] * np.exp(-x / t[1])

    def gr(x, t):
        e = np.exp(-x / t[1])
        return np.stack([e, t[0] * x / t[1] ** 2 * e], axis=1)

    def he(x, t):
        e = np.exp(-x / t[1])
        n = x.size
        h = np.zeros((n, 2, 2))
        d12 = x / t[1] ** 2 * e
        h[:, 0, 1] = h[:, 1, 0] = d12
        h[:, 1, 1] = t[0] * x * e * (x - 2.0 * t[1]) / t[1] ** 4
        return h

    def dx(x, t):
        return -t[0] / t[1] * np.exp(-x / t[1])

    def hint(x, y):
        pos = y > 0
        if pos.sum() >= 2 and np.ptp(x[pos]) > 0:
            slope, intercept = np.polyfit(x[pos], np.log(y[pos]), 1)
            if slope < 0:
                return np.array([float(np.exp(intercept)), -1.0 / slope])
        span = float(np.ptp(x)) or 1.0
        return np.array([float(np.max(np.abs(y))) or 1.0, span])

    return ModelFunction(
        name="exponential",
        p=2,
        param_names=("theta1", "theta2"),
        eval_fn=ev,
        grad_fn=gr,
        hess_fn=he,
        dx_fn=dx,
        domain_guard=lambda x, t: t[1] != 0.0,
        start_hint=hint,
    )


def saturating_exponential_model() -> ModelFunction:
    """Saturating exponential f = a1 * (1 - exp(-(x + a2) / a3)).

    The dose-response shape for thermoluminescence curves: ``a1`` is the
    saturation level, ``a2`` shifts the dose axis, ``a3`` sets the
    saturation rate.
    """

    def _e(x, t):
        return np.exp(-(x + t[1]) / t[2])

    def ev(x, t):
        return t[0] * (1.0 - _e(x, t))

    def gr(x, t):
        e = _e(x, t)
        return np.stack([
            1.0 - e,
            t[0] * e / t[2],
            -t[0] * (x + t[1]) / t[2] ** 2 * e,
        ], axis=1)

    def he(x, t):
        a1, a2, a3 = t
        e = _e(x, t)
        u = x + a2
        n = x.size
        h = np.zeros((n, 3, 3))
        h[:, 0, 1] = h[:, 1, 0] = e / a3
        h[:, 0, 2] = h[:, 2, 0] = -u / a3 ** 2 * e
        h[:, 1, 1] = -a1 * e / a3 ** 2
        h[:, 1, 2] = h[:, 2, 1] = a1 * e * (u - a3) / a3 ** 3
        h[:, 2, 2] = a1 * e * u * (2.0 * a3 - u) / a3 ** 4
        return h

    def dx(x, t):
        return t[0] / t[2] * _e(x, t)

    def hint(x, y):
        a1 = 1.05 * float(np.max(y))
        if a1 <= 0:
            a1 = 1.0
        a3 = float(np.ptp(x)) or 1.0
        x_med = float(np.median(x))
        y_med = float(np.median(y))
        frac = y_med / a1
        if 0.0 < frac < 1.0:
            a2 = -x_med - a3 * np.log(1.0 - frac)
        else:
            a2 = 0.1 * a3
        return np.array([a1, a2, a3])

    return ModelFunction(
        name="saturating_exponential",
        p=3,
        param_names=("alpha1", "alpha2", "alpha3"),
        eval_fn=ev,
        grad_fn=gr,
        hess_fn=he,
        dx_fn=dx,
        domain_guard=lambda x, t: t[2] != 0.0,
        start_hint=hint,
    )


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------

MODEL_REGISTRY: dict[str, Callable[..., ModelFunction]] = {
    "constant": constant_model,
    "exponential": exponential_decay_model,
    "saturating_exponential": saturating_exponential_model,
}


def register_model(name: str, factory: Callable[..., ModelFunction]) -> None:
    """Register a user model factory under ``name``."""
    MODEL_REGISTRY[name] = factory


def get_model(name: str, **options) -> ModelFunction:
    """Instantiate a registered model by name."""
    try:
        factory = MODEL_REGISTRY[name]
    except KeyError:
        known = ", ".join(sorted(MODEL_REGISTRY))
        raise KeyError(f"unknown model {name!r}; registered models: {known}") from None
    return factory(**options)
