"""Limited-memory quasi-Newton minimizer over flat coordinate vectors.

Two-loop recursion with a strong-Wolfe line search (bracket + zoom with
quadratic/cubic interpolation). Deterministic: identical inputs produce
bitwise-identical iterate sequences. Line-search failure is reported as a
soft status, not an exception, so multi-level drivers can continue.
"""

from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from .errors import ConfigError

STATUS_CONVERGED_GRAD = "converged_grad"
STATUS_CONVERGED_F = "converged_f"
STATUS_MAX_ITERS = "max_iters"
STATUS_LINE_SEARCH_FAILED = "line_search_failed"


@dataclass
class OptimConfig:
    """Optimizer settings.

    grad_tol is relative: iteration stops when the gradient sup-norm falls
    below ``grad_tol * max(1, initial sup-norm)``. rel_f_tol stops when an
    accepted step decreases the value by less than ``rel_f_tol`` relative
    to ``max(|f|, |f_new|, 1)``.
    """
    memory: int = 10
    max_iters: int = 500
    grad_tol: float = 1e-8
    rel_f_tol: float = 1e-6
    wolfe_c1: float = 1e-4
    wolfe_c2: float = 0.9

    def __post_init__(self):
        if self.memory < 1:
            raise ConfigError("memory must be a positive integer")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be a positive integer")
        if not self.grad_tol > 0.0 or not self.rel_f_tol > 0.0:
            raise ConfigError("tolerances must be positive")
        if not (0.0 < self.wolfe_c1 < self.wolfe_c2 < 1.0):
            raise ConfigError("need 0 < wolfe_c1 < wolfe_c2 < 1")


@dataclass
class OptimReport:
    iterations: int
    final_value: float
    final_grad_norm: float
    status: str
    trace: List[Tuple[float, float]] = field(default_factory=list)


def _interp_quadratic(phi0, dphi0, a, phi_a):
    """Minimizer of the quadratic through (0, phi0) with slope dphi0 and
    value phi_a at a."""
    denom = 2.0 * (phi_a - phi0 - dphi0 * a)
    if denom <= 0.0:
        return None
    return -dphi0 * a * a / denom

def _interp_cubic(a, fa, da, b, fb, db):
    """Minimizer of the cubic matching values and slopes at a and b
    (Nocedal & Wright eq. 3.59); None if ill-conditioned."""
    d1 = da + db - 3.0 * (fa - fb) / (a - b)
    disc = d1 * d1 - da * db
    if disc < 0.0:
        return None
    d2 = np.sign(b - a) * np.sqrt(disc)
    denom = db - da + 2.0 * d2
    if denom == 0.0:
        return None
    t = b - (b - a) * (db + d2 - d1) / denom
    return t


class _LineSearchFailed(Exception):
    pass


def _strong_wolfe(evaluate, f0, dphi0, c1, c2, alpha_init, max_evals=30):
    """Strong-Wolfe line search on phi(a) = f(x + a d).

    ``evaluate(a)`` returns (phi, dphi) and caches the full gradient of the
    best point externally. Returns the accepted step. Raises
    _LineSearchFailed when no acceptable step is found.
    """

    def zoom(lo, phi_lo, dphi_lo, hi, phi_hi, dphi_hi, evals_left):
        for _ in range(evals_left):
            if abs(hi - lo) < 1e-16 * max(1.0, abs(lo)):
                raise _LineSearchFailed
            a = _interp_cubic(lo, phi_lo, dphi_lo, hi, phi_hi, dphi_hi)
            width = abs(hi - lo)
            lo_, hi_ = min(lo, hi), max(lo, hi)
            if a is None or not (lo_ + 0.05 * width <= a <= hi_ - 0.05 * width):
                a = 0.5 * (lo + hi)
            phi, dphi = evaluate(a)
            if phi > f0 + c1 * a * dphi0 or phi >= phi_lo:
                hi, phi_hi, dphi_hi = a, phi, dphi
            else:
                if abs(dphi) <= -c2 * dphi0:
                    return a, phi, dphi
                if dphi * (hi - lo) >= 0.0:
                    hi, phi_hi, dphi_hi = lo, phi_lo, dphi_lo
                lo, phi_lo, dphi_lo = a, phi, dphi
        raise _LineSearchFailed

    alpha_max = 1e10
    a_prev, phi_prev, dphi_prev = 0.0, f0, dphi0
    a = alpha_init
    for i in range(max_evals):
        phi, dphi = evaluate(a)
        if not np.isfinite(phi):
            return zoom(a_prev, phi_prev, dphi_prev, a, np.inf, 0.0,
                        max_evals - i - 1)
        if phi > f0 + c1 * a * dphi0 or (i > 0 and phi >= phi_prev):
            return zoom(a_prev, phi_prev, dphi_prev, a, phi, dphi,
                        max_evals - i - 1)
        if abs(dphi) <= -c2 * dphi0:
            # optional one-step polish toward the exact 1-d minimizer; on
            # quadratic objectives this makes the step exact, which gives
            # finite termination on quadratics
            if abs(dphi) > 0.1 * abs(dphi0):
                a_hat = _interp_quadratic(f0, dphi0, a, phi)
                if a_hat is not None and 0.0 < a_hat < alpha_max:
                    phi_hat, dphi_hat = evaluate(a_hat)
                    if (phi_hat <= phi
                            and phi_hat <= f0 + c1 * a_hat * dphi0
                            and abs(dphi_hat) <= -c2 * dphi0):
                        return a_hat, phi_hat, dphi_hat
                    # fall through with the original acceptable step
            return a, phi, dphi
        if dphi >= 0.0:
            return zoom(a, phi, dphi, a_prev, phi_prev, dphi_prev,
                        max_evals - i - 1)
        a_prev, phi_prev, dphi_prev = a, phi, dphi
        a = min(2.0 * a, alpha_max)
    raise _LineSearchFailed


def minimize(objective, x0, cfg=None):
    """Minimize ``objective(x) -> (value, gradient)`` starting from ``x0``.

    Returns ``(x_star, OptimReport)``. Every accepted step satisfies the
    Armijo sufficient-decrease condition, so the trace of accepted values is
    strictly decreasing.
    """
    if cfg is None:
        cfg = OptimConfig()
    x = np.array(x0, dtype=np.float64).ravel()
    f, g = objective(x)
    f = float(f)
    g = np.asarray(g, dtype=np.float64).ravel()
    if not np.isfinite(f) or not np.isfinite(g).all():
        raise ValueError("objective or gradient not finite at x0")

    sup0 = float(np.abs(g).max()) if g.size else 0.0
    grad_stop = cfg.grad_tol * max(1.0, sup0)
    trace = [(f, sup0)]
    s_hist, y_hist, rho_hist = [], [], []

    status = STATUS_MAX_ITERS
    iters = 0
    for _ in range(cfg.max_iters):
        sup = float(np.abs(g).max()) if g.size else 0.0
        if sup <= grad_stop:
            status = STATUS_CONVERGED_GRAD
            break

        # two-loop recursion
        q = g.copy()
        alphas = []
        for s, y, rho in zip(reversed(s_hist), reversed(y_hist),
                             reversed(rho_hist)):
            a = rho * (s @ q)
            alphas.append(a)
            q -= a * y
        if y_hist:
            gamma = (s_hist[-1] @ y_hist[-1]) / (y_hist[-1] @ y_hist[-1])
            q *= gamma
        for (s, y, rho), a in zip(zip(s_hist, y_hist, rho_hist),
                                  reversed(alphas)):
            q += (a - rho * (y @ q)) * s
        d = -q

        dphi0 = float(g @ d)
        if dphi0 >= 0.0:
            # not a descent direction (numerically); restart from steepest
            s_hist.clear()
            y_hist.clear()
            rho_hist.clear()
            d = -g
            dphi0 = float(g @ d)
            if dphi0 >= 0.0:
                status = STATUS_CONVERGED_GRAD
                break

        cache = {}

        def evaluate(a):
            fa, ga = objective(x + a * d)
            cache[a] = (float(fa), ga)
            return float(fa), float(ga @ d)

        alpha_init = 1.0 if s_hist else min(1.0, 1.0 / max(sup, 1e-30))
        try:
            a_acc, f_new, _ = _strong_wolfe(
                evaluate, f, dphi0, cfg.wolfe_c1, cfg.wolfe_c2, alpha_init)
        except _LineSearchFailed:
            status = STATUS_LINE_SEARCH_FAILED
            break

        g_new = np.asarray(cache[a_acc][1], dtype=np.float64).ravel()
        x_new = x + a_acc * d
        s = x_new - x
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-10 * float(np.linalg.norm(s)) * float(np.linalg.norm(y)):
            s_hist.append(s)
            y_hist.append(y)
            rho_hist.append(1.0 / sy)
            if len(s_hist) > cfg.memory:
                s_hist.pop(0)
                y_hist.pop(0)
                rho_hist.pop(0)

        f_prev = f
        x, f, g = x_new, f_new, g_new
        iters += 1
        trace.append((f, float(np.abs(g).max()) if g.size else 0.0))
        if f_prev - f <= cfg.rel_f_tol * max(abs(f_prev), abs(f), 1.0):
            status = STATUS_CONVERGED_F
            break

    final_sup = float(np.abs(g).max()) if g.size else 0.0
    report = OptimReport(iterations=iters, final_value=f,
                         final_grad_norm=final_sup, status=status,
                         trace=trace)
    return x, report
