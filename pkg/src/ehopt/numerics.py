"""Special functions, root finders and closed-form channel expectations.

All channel expectations assume Rayleigh fading, i.e. the power gain
``|h|^2`` is Exp(1), and a water-filling action clipped by the energy
available in the current slot::

    p = min{(w - 1/|h|^2)^+, c},   c = e / tau

Rates are in nats/s/Hz (natural logarithm), which is what makes the
closed forms come out in terms of the exponential integral E1.
"""

from __future__ import annotations

import math
from typing import Callable, NamedTuple

import numpy as np
from scipy.optimize import brentq

__all__ = [
    "EULER_GAMMA",
    "DomainError",
    "BracketError",
    "InfeasibleError",
    "exp_integral_e1",
    "exp_integral_e1_scaled",
    "e1_array",
    "solve_root_1d",
    "solve_x_of_alpha",
    "solve_e_threshold",
    "expected_rate_F",
    "expected_power_G",
    "constant_power_rate",
    "SteadyState",
    "solve_steady_state",
]

EULER_GAMMA = 0.57721566490153286

_EPS = 1e-16
_TINY = 1e-300


class DomainError(ValueError):
    """Argument outside the domain of a function."""


class BracketError(ValueError):
    """Root bracket does not contain a sign change."""


class InfeasibleError(ValueError):
    """Model parameters for which no stable operating point exists."""


def _e1_series(x: float) -> float:
    # E1(x) = -gamma - ln x + sum_{k>=1} (-1)^(k+1) x^k / (k k!)
    total = 0.0
    term = 1.0
    for k in range(1, 60):
        term *= -x / k
        contrib = -term / k
        total += contrib
        if abs(contrib) < _EPS * abs(total):
            break
    return -EULER_GAMMA - math.log(x) + total


def _e1_scaled_cf(x: float) -> float:
    # exp(x) E1(x) by modified Lentz on 1/(x+1- 1/(x+3- 4/(x+5- ...)))
    b = x + 1.0
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, 500):
        an = -float(i * i)
        b += 2.0
        d = 1.0 / (an * d + b)
        c = b + an / c
        delta = c * d
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return h


def exp_integral_e1(x: float) -> float:
    """Exponential integral ``E1(x) = int_1^inf exp(-t x) / t dt``.

    Power series below 1, continued fraction above.  Raises
    :class:`DomainError` for ``x <= 0`` where the integral diverges.
    """
    x = float(x)
    if not x > 0.0:
        raise DomainError(f"E1 requires x > 0, got {x!r}")
    if math.isinf(x):
        return 0.0
    if x < 1.0:
        return _e1_series(x)
    if x > 745.0:
        return 0.0
    return _e1_scaled_cf(x) * math.exp(-x)


def exp_integral_e1_scaled(x: float) -> float:
    """``exp(x) * E1(x)``, finite for every ``x > 0`` (tends to 1/x)."""
    x = float(x)
    if not x > 0.0:
        raise DomainError(f"E1 requires x > 0, got {x!r}")
    if math.isinf(x):
        return 0.0
    if x < 1.0:
        return math.exp(x) * _e1_series(x)
    return _e1_scaled_cf(x)


e1_array = np.vectorize(exp_integral_e1, otypes=[float])


def solve_root_1d(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    tol: float = 1e-10,
    maxiter: int = 500,
) -> float:
    """Root of a continuous ``f`` on ``[lo, hi]`` with ``f(lo) f(hi) <= 0``.

    Brent's method (bisection safeguarded), so the result is
    deterministic.  ``tol`` is the absolute bracket width at termination.
    """
    flo = f(lo)
    fhi = f(hi)
    if flo == 0.0:
        return float(lo)
    if fhi == 0.0:
        return float(hi)
    if not (math.isfinite(flo) and math.isfinite(fhi)) or flo * fhi > 0.0:
        raise BracketError(
            f"no sign change on [{lo!r}, {hi!r}]: f(lo)={flo!r}, f(hi)={fhi!r}"
        )
    return float(brentq(f, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps,
                        maxiter=maxiter))


def _unclipped_power(w: float) -> float:
    # w exp(-1/w) - E1(1/w), written to avoid cancellation for large w
    if w == 0.0:
        return 0.0
    a = 1.0 / w
    # true value is positive but below round-off for small w
    return max(w + w * math.expm1(-a) - exp_integral_e1(a), 0.0)


def solve_x_of_alpha(alpha_bar: float) -> float:
    """Water level ``x`` whose unclipped mean power equals ``alpha_bar``.

    Solves ``x exp(-1/x) - E1(1/x) = alpha_bar``; the left side is
    increasing in ``x`` and vanishes as ``x -> 0+``.
    """
    if not alpha_bar > 0.0:
        raise DomainError(f"alpha_bar must be positive, got {alpha_bar!r}")
    lo = 1e-3
    hi = alpha_bar + 2.0
    while _unclipped_power(hi) < alpha_bar:
        hi *= 2.0
    x = solve_root_1d(lambda v: _unclipped_power(v) - alpha_bar, lo, hi,
                      tol=1e-14 * hi)
    return x


def solve_e_threshold(lambda_bar: float, tau: float) -> float:
    """Energy level ``e_th`` solving ``E1(tau / e_th) = lambda_bar``.

    ``E1(tau/e)`` is increasing in ``e``, so the root is unique; it is
    found in ``log(e / tau)`` with the bracket widened until it holds.
    """
    if not lambda_bar > 0.0:
        raise DomainError(f"lambda_bar must be positive, got {lambda_bar!r}")
    if not tau > 0.0:
        raise DomainError(f"tau must be positive, got {tau!r}")

    def g(t: float) -> float:
        return exp_integral_e1(math.exp(-t)) - lambda_bar

    lo, hi = -8.0, 8.0
    while g(lo) > 0.0:
        lo *= 2.0
        if lo < -700.0:
            raise BracketError(f"e_th below representable range for {lambda_bar!r}")
    while g(hi) < 0.0:
        hi *= 2.0
        if hi > 700.0:
            raise BracketError(
                f"e_th exceeds exp(700) * tau for lambda_bar={lambda_bar!r}"
            )
    t = solve_root_1d(g, lo, hi, tol=1e-13)
    return tau * math.exp(t)


def _check_nonneg(w: float, c: float) -> None:
    if w < 0.0 or c < 0.0 or math.isnan(w) or math.isnan(c):
        raise DomainError(f"water level and e/tau must be >= 0, got ({w!r}, {c!r})")


def expected_rate_F(w: float, e_over_tau: float) -> float:
    """``E[log(1 + |h|^2 p)]`` for ``p = min{(w - 1/|h|^2)^+, e/tau}``.

    ``w`` may be ``inf`` (always spend ``e/tau``).
    """
    c = float(e_over_tau)
    w = float(w)
    _check_nonneg(w, c)
    if w == 0.0 or c == 0.0:
        return 0.0
    if math.isinf(w):
        return exp_integral_e1_scaled(1.0 / c)
    a = 1.0 / w
    if w <= c:
        return exp_integral_e1(a)
    b = 1.0 / (w - c)
    z = w / (c * (w - c))
    # exp(1/c) E1(z) = exp(-b) * [exp(z) E1(z)] because z - 1/c = b
    return exp_integral_e1(a) - exp_integral_e1(b) + math.exp(-b) * exp_integral_e1_scaled(z)


def expected_power_G(w: float, e_over_tau: float) -> float:
    """``E[p]`` for ``p = min{(w - 1/|h|^2)^+, e/tau}``; lies in ``[0, e/tau]``."""
    c = float(e_over_tau)
    w = float(w)
    _check_nonneg(w, c)
    if w == 0.0 or c == 0.0:
        return 0.0
    if math.isinf(w):
        return c
    if w <= c:
        return _unclipped_power(w)
    a = 1.0 / w
    d = w - c
    b = 1.0 / d
    # w e^{-a} - d e^{-b} = c + w expm1(-a) - d expm1(-b)
    val = (c + w * math.expm1(-a) - d * math.expm1(-b)
           - exp_integral_e1(a) + exp_integral_e1(b))
    return min(max(val, 0.0), c)


def constant_power_rate(p: float) -> float:
    """``E[log(1 + |h|^2 p)] = exp(1/p) E1(1/p)`` for a fixed power ``p``."""
    if p < 0.0:
        raise DomainError(f"power must be >= 0, got {p!r}")
    if p == 0.0:
        return 0.0
    return exp_integral_e1_scaled(1.0 / p)


class SteadyState(NamedTuple):
    water_level: float
    e_star: float
    interior: bool


def solve_steady_state(lambda_bar: float, alpha_bar: float, tau: float) -> SteadyState:
    """Fluid steady state ``(w_s, e*)`` of the coupled queues.

    With ``c = e/tau`` the balance equations are ``lambda_bar = F(w, c)``
    and ``alpha_bar = G(w, c)``.  For ``lambda_bar <= E1(1/alpha_bar)``
    the greedy point ``e* = alpha_bar * tau`` is returned directly.
    Otherwise the pair is found by nested root finding: for each cap
    ``c`` in ``(alpha_bar, x)`` the power balance fixes ``w(c)``, and
    ``F(w(c), c)`` increases from ``exp(1/alpha_bar) E1(1/alpha_bar)`` to
    ``E1(1/x)`` along that curve.

    If ``lambda_bar`` is at most the lower end, the power balance can only
    hold at ``c = alpha_bar`` with a non-binding rate balance, and the
    greedy point is returned with ``interior=False``.  Above ``E1(1/x)``,
    the largest throughput any policy reaches at mean power
    ``alpha_bar``, :class:`InfeasibleError` is raised.
    """
    if not (lambda_bar > 0.0 and alpha_bar > 0.0 and tau > 0.0):
        raise DomainError("lambda_bar, alpha_bar and tau must be positive")
    x = solve_x_of_alpha(alpha_bar)
    bound = exp_integral_e1_scaled(1.0 / x)
    if lambda_bar >= bound:
        raise InfeasibleError(
            f"existence condition lambda_bar < exp(1/x) E1(1/x) = {bound:.6g} "
            f"violated (lambda_bar={lambda_bar:.6g}, alpha_bar={alpha_bar:.6g}, x={x:.6g})"
        )
    if lambda_bar <= exp_integral_e1(1.0 / alpha_bar):
        return SteadyState(math.inf, alpha_bar * tau, False)

    greedy_rate = exp_integral_e1_scaled(1.0 / alpha_bar)
    wf_rate = exp_integral_e1(1.0 / x)
    if lambda_bar <= greedy_rate:
        return SteadyState(math.inf, alpha_bar * tau, False)
    if lambda_bar >= wf_rate:
        raise InfeasibleError(
            f"no fluid steady state: lambda_bar={lambda_bar:.6g} is at or above "
            f"E1(1/x)={wf_rate:.6g}, the water-filling throughput at mean power "
            f"alpha_bar={alpha_bar:.6g}"
        )

    def water_for_cap(c: float) -> float:
        # G(c + exp(s), c) increases in s from G(c, c) < alpha_bar to c > alpha_bar
        def gs(s: float) -> float:
            return expected_power_G(c + math.exp(s), c) - alpha_bar

        lo, hi = -4.0, 4.0
        while gs(hi) < 0.0:
            hi *= 2.0
            if hi > 700.0:
                return math.inf
        while gs(lo) > 0.0:
            lo *= 2.0
            if lo < -700.0:
                return c
        s = solve_root_1d(gs, lo, hi, tol=1e-13)
        return c + math.exp(s)

    def rate_gap(c: float) -> float:
        return expected_rate_F(water_for_cap(c), c) - lambda_bar

    span = x - alpha_bar
    lo_c = alpha_bar + 1e-9 * span
    hi_c = x - 1e-9 * span
    c_star = solve_root_1d(rate_gap, lo_c, hi_c, tol=1e-14 * x)
    w_star = water_for_cap(c_star)
    return SteadyState(w_star, c_star * tau, True)
