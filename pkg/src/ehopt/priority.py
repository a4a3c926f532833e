"""Regime classification and closed-form priority functions.

The priority function ``V(q, e)`` plays the role of a relative value
function.  Its partial derivatives fix the water level ``-V_q / V_e`` that
the per-slot water-filling policy compares against the inverse channel
gain.  Three asymptotic regimes have closed forms:

* large data arrivals, sufficient energy (``alpha_bar >= alpha_th``),
* small data arrivals, limited energy (``alpha_bar < alpha_th``),
* small data arrivals, sufficient energy (``lambda_bar <= E1(1/alpha_bar)``),

and above the threshold ``e_th`` (``E1(tau/e_th) = lambda_bar``) the
priority depends on ``q`` only, so the whole battery is spent.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

from .numerics import (
    EULER_GAMMA,
    DomainError,
    InfeasibleError,
    constant_power_rate,
    exp_integral_e1,
    exp_integral_e1_scaled,
    solve_e_threshold,
    solve_steady_state,
    solve_x_of_alpha,
)
from .params import DiscreteDistribution, SystemParams

__all__ = [
    "Regime",
    "PriorityEval",
    "RegimeThresholds",
    "StabilityReport",
    "regime_thresholds",
    "classify_regime",
    "priority_value",
    "water_level",
    "stability_check",
]


class Regime(enum.Enum):
    LargeArrivalEnergySufficient = "LargeArrivalEnergySufficient"
    SmallArrivalEnergyLimited = "SmallArrivalEnergyLimited"
    SmallArrivalEnergySufficient = "SmallArrivalEnergySufficient"
    Infeasible = "Infeasible"


@dataclass(frozen=True)
class RegimeThresholds:
    """Scalar thresholds that decide the regime of ``(lambda_bar, alpha_bar)``."""

    x: float
    small_arrival_bound: float  # E1(1/alpha_bar)
    existence_bound: float  # exp(1/x) E1(1/x)


@dataclass(frozen=True)
class PriorityEval:
    """Priority value, its gradient and the induced water level at a point."""

    v: float
    v_q: float
    v_e: float
    water_level: float
    regime: Regime
    e_th: float


@lru_cache(maxsize=256)
def _thresholds(alpha_bar: float) -> RegimeThresholds:
    x = solve_x_of_alpha(alpha_bar)
    return RegimeThresholds(
        x=x,
        small_arrival_bound=exp_integral_e1(1.0 / alpha_bar),
        existence_bound=exp_integral_e1_scaled(1.0 / x),
    )


def regime_thresholds(params: SystemParams) -> RegimeThresholds:
    return _thresholds(float(params.alpha_bar))


def classify_regime(params: SystemParams) -> Regime:
    """Asymptotic regime of ``(lambda_bar, alpha_bar)``.

    Small-arrival/sufficient when ``lambda_bar <= E1(1/alpha_bar)``,
    infeasible when ``lambda_bar >= exp(1/x) E1(1/x)``, and otherwise
    split by ``alpha_th``.
    """
    th = regime_thresholds(params)
    lam = params.lambda_bar
    if lam >= th.existence_bound:
        return Regime.Infeasible
    if lam <= th.small_arrival_bound:
        return Regime.SmallArrivalEnergySufficient
    if params.alpha_bar >= params.alpha_th:
        return Regime.LargeArrivalEnergySufficient
    return Regime.SmallArrivalEnergyLimited


@lru_cache(maxsize=256)
def _e_threshold(lambda_bar: float, tau: float) -> float:
    return solve_e_threshold(lambda_bar, tau)


def _ratio(num: float, den: float) -> float:
    # -V_q / V_e with the (.)^+ folded in: negative -> 0, 0 denominator -> inf
    if num == 0.0:
        return 0.0
    if den == 0.0:
        return math.inf
    r = num / den
    return r if r > 0.0 else 0.0


def _regime1(q: float, e: float, lam: float, a: float, tau: float):
    k = 1.0 + 2.0 * EULER_GAMMA + 2.0 * lam
    c1 = tau / (4.0 * lam) * (k - 2.0 * math.log(a))
    if e == 0.0:
        return c1, 0.0, -q / (lam * a * tau)
    log_e = math.log(e / tau)
    v = e * e / (4.0 * lam * a * a * tau) * (k - 2.0 * log_e) - e * q / (lam * a * tau) + c1
    v_q = -e / (lam * a * tau)
    v_e = e * (EULER_GAMMA + lam - log_e) / (lam * a * a * tau) - q / (lam * a * tau)
    return v, v_q, v_e


def _regime2(q: float, e: float, lam: float, a: float, tau: float):
    c2 = tau / 2.0 - a * tau / (3.0 * lam)
    v = (-e ** 3 / (3.0 * lam * a * a * tau * tau) + e * e / (2.0 * a * a * tau)
         - q * e / (lam * a * tau) + c2)
    v_q = -e / (lam * a * tau)
    v_e = -e * e / (lam * a * a * tau * tau) + e / (a * a * tau) - q / (lam * a * tau)
    return v, v_q, v_e


def _regime3(q: float, e: float, lam: float, a: float, tau: float):
    # e^2/(2a^2 tau) - eq/(lam a tau) - (q - lam e/a)^2/(2 lam^2 tau) collapses
    # to -q^2/(2 lam^2 tau); using the collapsed form keeps V_e = 0 exact
    v = -q * q / (2.0 * lam * lam * tau)
    return v, -q / (lam * lam * tau), 0.0


_FORMS = {
    Regime.LargeArrivalEnergySufficient: _regime1,
    Regime.SmallArrivalEnergyLimited: _regime2,
    Regime.SmallArrivalEnergySufficient: _regime3,
}


def _check_point(q: float, e: float, params: SystemParams) -> None:
    if not (q >= 0.0 and math.isfinite(q)):
        raise DomainError(f"q must be finite and >= 0, got {q!r}")
    if not (0.0 <= e <= params.N_E):
        raise DomainError(f"e must lie in [0, N_E={params.N_E!r}], got {e!r}")
    if params.lambda_bar <= 0.0:
        raise DomainError("priority functions need lambda_bar > 0")


def priority_value(q: float, e: float, params: SystemParams,
                   regime: Optional[Regime] = None) -> PriorityEval:
    """Closed-form ``V(q, e)``, its gradient and the water level.

    For ``e >= e_th`` the value is frozen at ``V(q, e_th)`` (continuity),
    ``V_e = 0`` and the water level is infinite.

    Parameters
    ----------
    regime : Regime, optional
        Force a regime formula; defaults to :func:`classify_regime`.

    Raises
    ------
    InfeasibleError
        If the parameters are infeasible and no regime is forced.
    """
    q = float(q)
    e = float(e)
    _check_point(q, e, params)
    if regime is None:
        regime = classify_regime(params)
    if regime is Regime.Infeasible:
        th = regime_thresholds(params)
        raise InfeasibleError(
            f"no closed form: lambda_bar={params.lambda_bar:.6g} violates "
            f"lambda_bar < exp(1/x) E1(1/x) = {th.existence_bound:.6g}"
        )
    lam, a, tau = params.lambda_bar, params.alpha_bar, params.tau
    e_th = _e_threshold(lam, tau)
    form = _FORMS[regime]
    if e >= e_th:
        v, v_q, _ = form(q, e_th, lam, a, tau)
        return PriorityEval(v, v_q, 0.0, math.inf, regime, e_th)
    v, v_q, v_e = form(q, e, lam, a, tau)
    if regime is Regime.SmallArrivalEnergySufficient:
        level = math.inf
    else:
        level = _ratio(-v_q, v_e)
    return PriorityEval(v, v_q, v_e, level, regime, e_th)


def water_level(q: float, e: float, params: SystemParams,
                regime: Optional[Regime] = None) -> float:
    """Water level ``-V_q/V_e`` from its simplified closed form.

    Regime 1: ``a e / (e (gamma + lam - log(e/tau)) - a q)``.
    Regime 2: ``a tau e / (-e^2 + lam tau e - a tau q)``.
    Negative values map to 0, a zero denominator to ``inf``.
    """
    q = float(q)
    e = float(e)
    _check_point(q, e, params)
    if regime is None:
        regime = classify_regime(params)
    if regime is Regime.Infeasible:
        raise InfeasibleError("no closed-form water level for infeasible parameters")
    lam, a, tau = params.lambda_bar, params.alpha_bar, params.tau
    if regime is Regime.SmallArrivalEnergySufficient:
        return math.inf
    if e >= _e_threshold(lam, tau):
        return math.inf
    if e == 0.0:
        return 0.0
    if regime is Regime.LargeArrivalEnergySufficient:
        return _ratio(a * e, e * (EULER_GAMMA + lam - math.log(e / tau)) - a * q)
    return _ratio(a * tau * e, -e * e + lam * tau * e - a * tau * q)


@dataclass(frozen=True)
class StabilityReport:
    """Outcome of the two sufficient conditions for a stable data queue.

    ``rate_margin = E[exp(1/alpha) E1(1/alpha)] - lambda_bar`` must be
    positive; ``storage_margin = N_E - N e*`` must be nonnegative.
    ``e_star`` is ``None`` when no steady state exists.
    """

    rate_ok: bool
    rate_margin: float
    storage_ok: bool
    storage_margin: Optional[float]
    e_star: Optional[float]
    note: str = ""

    @property
    def ok(self) -> bool:
        return self.rate_ok and self.storage_ok


def stability_check(params: SystemParams,
                    alpha_distribution: Optional[DiscreteDistribution] = None
                    ) -> StabilityReport:
    """Evaluate ``lambda_bar < E[exp(1/alpha) E1(1/alpha)]`` and ``N_E >= N e*``.

    ``alpha_distribution`` defaults to the point mass at ``alpha_bar``.
    """
    dist = alpha_distribution or DiscreteDistribution.point(params.alpha_bar)
    capacity = dist.expect(constant_power_rate)
    rate_margin = capacity - params.lambda_bar
    rate_ok = rate_margin > 0.0
    if params.lambda_bar == 0.0:
        return StabilityReport(rate_ok, rate_margin, True, params.N_E, 0.0,
                               "no data arrivals")
    try:
        ss = solve_steady_state(params.lambda_bar, params.alpha_bar, params.tau)
    except InfeasibleError as exc:
        return StabilityReport(rate_ok, rate_margin, False, None, None, str(exc))
    storage_margin = params.N_E - params.N * ss.e_star
    note = "" if ss.interior else "e* = alpha_bar * tau (greedy steady state)"
    return StabilityReport(rate_ok, rate_margin, storage_margin >= 0.0,
                           storage_margin, ss.e_star, note)
