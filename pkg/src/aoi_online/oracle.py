"""Known-distribution solver for the optimal threshold policy.

With the delay law known, the optimal policy waits ``(beta - d)^+`` after a
delay ``d``.  ``beta = gamma* + nu*`` where ``gamma*`` is the optimal
average AoI minus the mean delay and ``nu*`` is the multiplier of the
sampling-frequency constraint.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .delay_models import DelayModel

DEFAULT_TOL = 1e-10
MAX_ITER = 200
MAX_EXPANSIONS = 6


class OracleError(RuntimeError):
    pass


class BracketError(OracleError):
    pass


class InfeasibleError(OracleError):
    pass


@dataclass(frozen=True)
class GammaBounds:
    gamma_lb: float
    gamma_ub: float


@dataclass(frozen=True)
class OracleSolution:
    gamma_star: float
    nu_star: float
    beta: float
    mean_cycle_length: float
    aoi_star: float
    f_max: float = math.inf

    def to_dict(self) -> dict:
        d = asdict(self)
        d["f_max"] = None if math.isinf(self.f_max) else self.f_max
        return d


def g_bar(model: DelayModel, gamma: float) -> float:
    """E[1/2 max{gamma, D}^2] - gamma E[max{gamma, D}]; nonincreasing in gamma."""
    e_max, e_half_sq = model.threshold_integrals(gamma)
    return e_half_sq - gamma * e_max


def gamma_bounds(D_lb: float, D_ub: float, M_lb: float, M_ub: float,
                 f_max: float = math.inf) -> GammaBounds:
    """Bracket for gamma* from moment bounds alone."""
    if not (0 < D_lb <= D_ub):
        raise ValueError(f"need 0 < D_lb <= D_ub, got {D_lb}, {D_ub}")
    if not (0 < M_lb <= M_ub):
        raise ValueError(f"need 0 < M_lb <= M_ub, got {M_lb}, {M_ub}")
    if f_max is None or not f_max > 0:
        raise ValueError(f"f_max must be > 0 or infinite, got {f_max}")
    if math.isinf(f_max):
        ub = 0.5 * M_ub / D_lb
    else:
        inv = 1.0 / f_max
        ub = (0.5 * M_ub + D_ub * inv + 0.5 * inv * inv) / (D_lb + inv)
    return GammaBounds(0.5 * D_lb, ub)


def exact_gamma_bounds(model: DelayModel, f_max: float = math.inf) -> GammaBounds:
    m = model.moments()
    return gamma_bounds(m.mean, m.mean, m.second_moment, m.second_moment, f_max)


def _bisect(f, lo: float, hi: float, tol: float) -> float:
    """Root of a nonincreasing f on [lo, hi] with f(lo) >= 0 >= f(hi)."""
    for _ in range(MAX_ITER):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if f(mid) >= 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def solve_unconstrained(model: DelayModel, tol: float = DEFAULT_TOL,
                        bounds: GammaBounds | None = None) -> float:
    """Bisection for the root of g_bar, starting from the moment bracket.

    A bracket that fails to straddle the root (loose user-supplied bounds)
    is widened geometrically, up to 2**6 on each side, before giving up.
    """
    if not tol > 0:
        raise ValueError("tol must be > 0")
    if bounds is None:
        bounds = exact_gamma_bounds(model)
    lo, hi = bounds.gamma_lb, bounds.gamma_ub
    g_lo, g_hi = g_bar(model, lo), g_bar(model, hi)
    for _ in range(MAX_EXPANSIONS):
        if g_lo >= 0 and g_hi <= 0:
            break
        if g_lo < 0:
            hi, g_hi = lo, g_lo
            lo /= 2
            g_lo = g_bar(model, lo)
        else:
            lo, g_lo = hi, g_hi
            hi *= 2
            g_hi = g_bar(model, hi)
    if not (g_lo >= 0 and g_hi <= 0):
        raise BracketError(
            f"g_bar does not change sign on [{lo:.6g}, {hi:.6g}]: "
            f"g_bar(lo)={g_lo:.3e} ({'+' if g_lo >= 0 else '-'}), "
            f"g_bar(hi)={g_hi:.3e} ({'+' if g_hi >= 0 else '-'})")
    return _bisect(lambda g: g_bar(model, g), lo, hi, tol)


def _search_cap(model: DelayModel, inv_f_max: float, gamma_ub: float) -> float:
    upper = model.upper_support
    if math.isinf(upper):
        upper = model.quantile(1.0 - 1e-12)
    return gamma_ub + inv_f_max + upper


def solve_constrained(model: DelayModel, f_max: float = math.inf,
                      tol: float = DEFAULT_TOL) -> OracleSolution:
    """Optimal (gamma*, nu*, beta) under mean cycle length >= 1/f_max."""
    if f_max is None or not f_max > 0:
        raise ValueError(f"f_max must be > 0 or infinite, got {f_max}")
    mean = model.moments().mean
    gamma_u = solve_unconstrained(model, tol)
    e_max = model.threshold_integrals(gamma_u)[0]
    if math.isinf(f_max) or e_max >= 1.0 / f_max:
        return OracleSolution(gamma_u, 0.0, gamma_u, e_max, gamma_u + mean, f_max)

    target = 1.0 / f_max
    cap = _search_cap(model, target, exact_gamma_bounds(model, f_max).gamma_ub)
    if model.threshold_integrals(cap)[0] < target:
        raise InfeasibleError("frequency constraint unattainable within wait cap")
    beta = _bisect(lambda b: target - model.threshold_integrals(b)[0], gamma_u, cap, tol)
    e_max, e_half_sq = model.threshold_integrals(beta)
    gamma_star = e_half_sq / e_max
    return OracleSolution(gamma_star, beta - gamma_star, beta, e_max, gamma_star + mean, f_max)


def stationary_policy_aoi(model: DelayModel, beta: float) -> float:
    """Long-run average AoI of the fixed threshold policy wait = (beta - d)^+."""
    e_max, e_half_sq = model.threshold_integrals(beta)
    return e_half_sq / e_max + model.moments().mean


def aoi_curve(model: DelayModel, betas) -> np.ndarray:
    return np.array([stationary_policy_aoi(model, b) for b in betas])


def constant_wait_aoi(model: DelayModel, wait: float) -> float:
    """Average AoI of waiting a fixed ``wait`` after every delivery."""
    m = model.moments()
    e_len = m.mean + wait
    e_half_sq = 0.5 * (m.second_moment + 2 * wait * m.mean + wait * wait)
    return e_half_sq / e_len + m.mean

