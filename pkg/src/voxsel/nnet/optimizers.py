"""Full-batch optimizers over a flat parameter vector.

Each optimizer takes an objective exposing ``value_grad(w) -> (mse, grad)``;
Levenberg-Marquardt additionally needs ``residual_jac(w) -> (r, J)`` with
``mse = r @ r / len(r)``.  An optimizer runs one update per epoch and
returns an :class:`OptimResult` whose ``trace`` holds the MSE of the current
iterate, starting with the initial point.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg
from scipy.optimize import line_search

STOP_REASONS = ("max_epochs", "goal", "min_gradient", "mu_overflow", "line_search_fail")


class TrainingError(RuntimeError):
    """Parameters became non-finite; ``last_finite`` holds the prior iterate."""

    def __init__(self, message: str, last_finite: np.ndarray, epoch: int):
        super().__init__(f"{message} (epoch {epoch})")
        self.last_finite = last_finite
        self.epoch = epoch


@dataclass
class OptimResult:
    w: np.ndarray
    trace: list[float]
    stop_reason: str
    epochs: int
    info: dict = field(default_factory=dict)


class _Loop:
    """Shared bookkeeping: stop tests, trace and non-finite detection."""

    def __init__(self, obj, w0, max_epochs: int, goal_mse: float, min_gradient: float):
        self.obj = obj
        self.w = np.array(w0, dtype=float)
        self.max_epochs = max_epochs
        self.goal = goal_mse
        self.min_gradient = min_gradient
        self.f, self.g = obj.value_grad(self.w)
        self.trace = [float(self.f)]
        self.epoch = 0

    def stop(self) -> str | None:
        if self.f <= self.goal:
            return "goal"
        if np.max(np.abs(self.g)) < self.min_gradient:
            return "min_gradient"
        if self.epoch >= self.max_epochs:
            return "max_epochs"
        return None

    def accept(self, w_new, f_new=None, g_new=None) -> None:
        if not np.all(np.isfinite(w_new)):
            raise TrainingError("non-finite parameters", self.w.copy(), self.epoch)
        if f_new is None or g_new is None:
            f_new, g_new = self.obj.value_grad(w_new)
        if not np.isfinite(f_new):
            raise TrainingError("non-finite loss", self.w.copy(), self.epoch)
        self.w, self.f, self.g = np.array(w_new, dtype=float), float(f_new), g_new

    def end_epoch(self) -> None:
        self.epoch += 1
        self.trace.append(float(self.f))

    def result(self, reason: str, **info) -> OptimResult:
        return OptimResult(self.w, self.trace, reason, self.epoch, info)


# -- first-order methods ---------------------------------------------------


def gd(obj, w0, *, lr=0.01, max_epochs=1000, goal_mse=0.0, min_gradient=1e-7):
    L = _Loop(obj, w0, max_epochs, goal_mse, min_gradient)
    while (reason := L.stop()) is None:
        L.accept(L.w - lr * L.g)
        L.end_epoch()
    return L.result(reason)


def gdm(obj, w0, *, lr=0.01, momentum=0.9, max_epochs=1000, goal_mse=0.0, min_gradient=1e-7):
    L = _Loop(obj, w0, max_epochs, goal_mse, min_gradient)
    v = np.zeros_like(L.w)
    while (reason := L.stop()) is None:
        v = momentum * v - lr * L.g
        L.accept(L.w + v)
        L.end_epoch()
    return L.result(reason)


def gdx(
    obj,
    w0,
    *,
    lr=0.01,
    momentum=0.9,
    lr_inc=1.05,
    lr_dec=0.7,
    max_perf_inc=1.04,
    max_epochs=1000,
    goal_mse=0.0,
    min_gradient=1e-7,
):
    """Momentum descent with an adaptive rate; steps that raise the loss by
    more than ``max_perf_inc`` are rejected."""
    L = _Loop(obj, w0, max_epochs, goal_mse, min_gradient)
    v = np.zeros_like(L.w)
    rejected = 0
    while (reason := L.stop()) is None:
        v_new = momentum * v - lr * L.g
        w_new = L.w + v_new
        f_new, g_new = obj.value_grad(w_new)
        if not np.isfinite(f_new) or f_new > max_perf_inc * L.f:
            lr *= lr_dec
            v = np.zeros_like(v)
            rejected += 1
        else:
            if f_new < L.f:
                lr *= lr_inc
            v = v_new
            L.accept(w_new, f_new, g_new)
        L.end_epoch()
    return L.result(reason, final_lr=lr, rejected=rejected)


def rprop(
    obj,
    w0,
    *,
    delta0=0.07,
    eta_plus=1.2,
    eta_minus=0.5,
    delta_min=1e-6,
    delta_max=50.0,
    max_epochs=1000,
    goal_mse=0.0,
    min_gradient=1e-7,
):
    """iRprop-: sign-based steps; a sign change shrinks the step and zeroes
    the stored gradient so the next epoch takes no step on that weight."""
    L = _Loop(obj, w0, max_epochs, goal_mse, min_gradient)
    delta = np.full_like(L.w, delta0)
    g_prev = np.zeros_like(L.w)
    while (reason := L.stop()) is None:
        g = L.g.copy()
        prod = g * g_prev
        delta = np.where(prod > 0, np.minimum(delta * eta_plus, delta_max), delta)
        delta = np.where(prod < 0, np.maximum(delta * eta_minus, delta_min), delta)
        g[prod < 0] = 0.0
        L.accept(L.w - np.sign(g) * delta)
        g_prev = g
        L.end_epoch()
    return L.result(reason)


# -- line-search methods ---------------------------------------------------


class _Cached:
    """Memoize value_grad on the last point so scipy's separate f / f'
    calls share one evaluation."""

    def __init__(self, obj):
        self.obj = obj
        self.x = None
        self.fg = None

    def _eval(self, x):
        if self.x is None or not np.array_equal(x, self.x):
            self.x = np.array(x, copy=True)
            self.fg = self.obj.value_grad(self.x)
        return self.fg

    def f(self, x):
        return self._eval(x)[0]

    def g(self, x):
        return self._eval(x)[1]


def _wolfe(cache: _Cached, w, d, f, g, f_prev, c1, c2):
    with warnings.catch_warnings():
        # scipy warns on every failed search; failure is reported via alpha=None
        warnings.simplefilter("ignore")
        alpha, _, _, f_new, _, _ = line_search(
            cache.f, cache.g, w, d, gfk=g, old_fval=f, old_old_fval=f_prev, c1=c1, c2=c2, maxiter=20
        )
    if alpha is None or f_new is None or not np.isfinite(f_new) or f_new > f:
        return None
    return alpha


def _conjugate_gradient(obj, w0, beta_rule, *, c1, c2, beale, max_epochs, goal_mse, min_gradient):
    L = _Loop(obj, w0, max_epochs, goal_mse, min_gradient)
    cache = _Cached(obj)
    n = L.w.size
    d = -L.g
    f_prev = L.f + np.linalg.norm(L.g) / 2
    since_restart = 0
    steps = []
    while (reason := L.stop()) is None:
        slope = L.g @ d
        if slope >= 0:
            d, slope, since_restart = -L.g, -(L.g @ L.g), 0
        alpha = _wolfe(cache, L.w, d, L.f, L.g, f_prev, c1, c2)
        if alpha is None and since_restart > 0:
            d, slope, since_restart = -L.g, -(L.g @ L.g), 0
            alpha = _wolfe(cache, L.w, d, L.f, L.g, f_prev, c1, c2)
        if alpha is None:
            reason = "line_search_fail"
            break
        g_old = L.g
        f_prev = L.f
        w_new = L.w + alpha * d
        f_new, g_new = cache._eval(w_new)
        steps.append((float(alpha), float(L.f), float(slope), float(f_new)))
        L.accept(w_new, f_new, g_new)
        g = L.g
        since_restart += 1
        restart = since_restart >= n
        if beale and abs(g @ g_old) >= beale * (g @ g):
            restart = True
        if restart:
            d, since_restart = -g, 0
        else:
            d = -g + beta_rule(g, g_old) * d
        L.end_epoch()
    return L.result(reason, steps=steps)


def _beta_fr(g, g_old):
    return (g @ g) / (g_old @ g_old)


def _beta_pr(g, g_old):
    return (g @ (g - g_old)) / (g_old @ g_old)


def _beta_pr_plus(g, g_old):
    return max(0.0, _beta_pr(g, g_old))


def cgf(obj, w0, *, c1=1e-4, c2=0.1, max_epochs=1000, goal_mse=0.0, min_gradient=1e-7):
    """Fletcher-Reeves conjugate gradient."""
    return _conjugate_gradient(obj, w0, _beta_fr, c1=c1, c2=c2, beale=None,
                               max_epochs=max_epochs, goal_mse=goal_mse, min_gradient=min_gradient)


def cgp(obj, w0, *, c1=1e-4, c2=0.1, max_epochs=1000, goal_mse=0.0, min_gradient=1e-7):
    """Polak-Ribiere conjugate gradient; a negative beta restarts."""
    return _conjugate_gradient(obj, w0, _beta_pr_plus, c1=c1, c2=c2, beale=None,
                               max_epochs=max_epochs, goal_mse=goal_mse, min_gradient=min_gradient)


def cgb(obj, w0, *, c1=1e-4, c2=0.1, beale_threshold=0.2, max_epochs=1000, goal_mse=0.0,
        min_gradient=1e-7):
    """Conjugate gradient with Powell-Beale restarts: restart along the
    negative gradient once successive gradients lose orthogonality."""
    return _conjugate_gradient(obj, w0, _beta_pr, c1=c1, c2=c2, beale=beale_threshold,
                               max_epochs=max_epochs, goal_mse=goal_mse, min_gradient=min_gradient)


def bfgs(obj, w0, *, c1=1e-4, c2=0.1, max_epochs=1000, goal_mse=0.0, min_gradient=1e-7):
    """Dense inverse-Hessian BFGS; memory is quadratic in parameter count."""
    L = _Loop(obj, w0, max_epochs, goal_mse, min_gradient)
    cache = _Cached(obj)
    n = L.w.size
    H = np.eye(n)
    f_prev = L.f + np.linalg.norm(L.g) / 2
    skipped = 0
    steps = []
    while (reason := L.stop()) is None:
        d = -H @ L.g
        if L.g @ d >= 0:
            H = np.eye(n)
            d = -L.g
        alpha = _wolfe(cache, L.w, d, L.f, L.g, f_prev, c1, c2)
        if alpha is None and not np.array_equal(d, -L.g):
            H = np.eye(n)
            d = -L.g
            alpha = _wolfe(cache, L.w, d, L.f, L.g, f_prev, c1, c2)
        if alpha is None:
            reason = "line_search_fail"
            break
        s = alpha * d
        f_prev = L.f
        g_old = L.g
        f_new, g_new = cache._eval(L.w + s)
        steps.append((float(alpha), float(L.f), float(g_old @ d), float(f_new)))
        L.accept(L.w + s, f_new, g_new)
        yv = L.g - g_old
        sy = s @ yv
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(yv):
            rho = 1.0 / sy
            Hy = H @ yv
            H = H + ((sy + yv @ Hy) * rho * rho) * np.outer(s, s) - rho * (np.outer(Hy, s) + np.outer(s, Hy))
        else:
            skipped += 1
        L.end_epoch()
    return L.result(reason, steps=steps, skipped_updates=skipped)


def scg(obj, w0, *, sigma=5e-5, lambda0=5e-7, max_epochs=1000, goal_mse=0.0, min_gradient=1e-7):
    """Moller's scaled conjugate gradient (no line search).

    One epoch is one pass of the main loop, successful or not; the iterate
    only moves when the comparison parameter is non-negative, so the loss
    never rises.
    """
    L = _Loop(obj, w0, max_epochs, goal_mse, min_gradient)
    n = L.w.size
    lam, lam_bar = lambda0, 0.0
    r = -L.g
    p = r.copy()
    success = True
    delta = 0.0
    k = 0
    while (reason := L.stop()) is None:
        pp = p @ p
        if pp == 0.0:
            reason = "min_gradient"
            break
        if success:
            sig = sigma / np.sqrt(pp)
            _, g_sig = obj.value_grad(L.w + sig * p)
            s = (g_sig - L.g) / sig
            delta = p @ s
        delta = delta + (lam - lam_bar) * pp
        if delta <= 0:
            lam_bar = 2.0 * (lam - delta / pp)
            delta = -delta + lam * pp
            lam = lam_bar
        mu = p @ r
        alpha = mu / delta
        w_new = L.w + alpha * p
        f_new, g_new = obj.value_grad(w_new)
        comparison = 2.0 * delta * (L.f - f_new) / (mu * mu) if np.isfinite(f_new) else -np.inf
        if comparison >= 0:
            k += 1
            L.accept(w_new, f_new, g_new)
            r_new = -L.g
            lam_bar = 0.0
            success = True
            if k % n == 0:
                p = r_new.copy()
            else:
                beta = (r_new @ r_new - r_new @ r) / mu
                p = r_new + beta * p
            r = r_new
            if comparison >= 0.75:
                lam = lam / 4.0
        else:
            lam_bar = lam
            success = False
        if comparison < 0.25:
            lam = lam + delta * (1.0 - comparison) / pp
        if not np.isfinite(lam) or lam > 1e100:
            reason = "mu_overflow"
            L.end_epoch()
            break
        L.end_epoch()
    return L.result(reason)


# -- Levenberg-Marquardt ---------------------------------------------------


def lm_step(J: np.ndarray, r: np.ndarray, mu: float, gram: np.ndarray | None = None) -> np.ndarray:
    """Solve (J^T J + mu I) delta = -J^T r.

    With fewer residuals than parameters the push-through identity
    delta = -J^T (J J^T + mu I)^-1 r keeps the system at n x n.  ``gram`` is
    the matching Gram matrix (J J^T or J^T J) when the caller reuses it.
    """
    n, P = J.shape
    wide = n < P
    if gram is None:
        gram = J @ J.T if wide else J.T @ J
    A = gram + mu * np.eye(gram.shape[0])
    rhs = r if wide else J.T @ r
    try:
        c = scipy.linalg.cho_factor(A, check_finite=False)
        sol = scipy.linalg.cho_solve(c, rhs, check_finite=False)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        sol = np.linalg.lstsq(A, rhs, rcond=None)[0]
    return -(J.T @ sol) if wide else -sol


def levenberg_marquardt(
    residual_jac: Callable,
    w0,
    *,
    mu0=1e-3,
    mu_dec=0.1,
    mu_inc=10.0,
    mu_max=1e10,
    max_epochs=1000,
    goal_mse=0.0,
    min_gradient=1e-7,
):
    """Damped Gauss-Newton on ``sum(r**2)``.

    Within an epoch mu is raised until a step lowers the SSE; the step is
    then taken and mu lowered.  Exceeding ``mu_max`` ends training.
    """
    w = np.array(w0, dtype=float)
    r, J = residual_jac(w)
    n = r.size
    sse = float(r @ r)
    trace = [sse / n]
    mu = mu0
    epoch = 0
    reason = None
    while True:
        g = (2.0 / n) * (J.T @ r)
        if sse / n <= goal_mse:
            reason = "goal"
        elif np.max(np.abs(g)) < min_gradient:
            reason = "min_gradient"
        elif epoch >= max_epochs:
            reason = "max_epochs"
        if reason:
            break
        gram = J @ J.T if n < J.shape[1] else J.T @ J
        while True:
            step = lm_step(J, r, mu, gram)
            w_new = w + step
            if not np.all(np.isfinite(w_new)):
                raise TrainingError("non-finite parameters", w.copy(), epoch)
            r_new, J_new = residual_jac(w_new)
            sse_new = float(r_new @ r_new)
            if np.isfinite(sse_new) and sse_new < sse:
                w, r, J, sse = w_new, r_new, J_new, sse_new
                mu = max(mu * mu_dec, 1e-20)
                break
            mu *= mu_inc
            if mu > mu_max:
                reason = "mu_overflow"
                break
        epoch += 1
        trace.append(sse / n)
        if reason:
            break
    return OptimResult(w, trace, reason, epoch, {"final_mu": mu})


def lm(obj, w0, **kw):
    return levenberg_marquardt(obj.residual_jac, w0, **kw)


ALGORITHMS: dict[str, Callable] = {
    "LM": lm,
    "RP": rprop,
    "BFG": bfgs,
    "SCG": scg,
    "CGB": cgb,
    "CGF": cgf,
    "CGP": cgp,
    "GD": gd,
    "GDX": gdx,
    "GDM": gdm,
}
