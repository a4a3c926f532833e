"""Per-slot power control: closed-form water-filling and three baselines.

Every policy maps the slot observation ``(h2, Q, E)`` to a transmit power
``p`` with ``0 <= p`` and ``p * tau <= E``.  The scalar ``power_*``
functions follow the textbook formulas; the ``*Policy`` classes wrap them
with precomputed constants for the simulator's inner loop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Protocol

import numpy as np

from .numerics import EULER_GAMMA, InfeasibleError
from .params import ConfigError, SystemParams
from .priority import (
    Regime,
    _e_threshold,
    classify_regime,
    regime_thresholds,
    water_level,
)

__all__ = [
    "SystemState",
    "DualState",
    "POLICY_NAMES",
    "is_feasible",
    "power_closed_form",
    "power_greedy",
    "power_csi_wf",
    "power_qwwf",
    "update_multiplier",
    "Policy",
    "ClosedFormPolicy",
    "GreedyPolicy",
    "CsiWaterFillingPolicy",
    "QueueWeightedWaterFillingPolicy",
    "TablePolicy",
    "make_policy",
]

POLICY_NAMES = ("closed_form", "greedy", "csi_wf", "qwwf", "mdp_table")

# p * tau may exceed E by round-off when p = E / tau
_FEAS_RTOL = 1e-12


@dataclass(frozen=True)
class SystemState:
    """Slot observation: channel gain ``h2 = |h|^2``, data queue, energy queue."""

    h2: float
    Q: float
    E: float

    def __post_init__(self) -> None:
        if self.h2 < 0 or self.Q < 0 or self.E < 0:
            raise ValueError(f"state components must be >= 0, got {self}")


@dataclass(frozen=True)
class DualState:
    """Lagrange multiplier of the mean-power constraint and its step schedule."""

    gamma: float
    t: int = 0
    epsilon: float = 0.0
    a0: float = 0.1

    @classmethod
    def initial(cls, alpha_bar: float, epsilon: Optional[float] = None,
                a0: float = 0.1) -> "DualState":
        eps = 0.05 * alpha_bar if epsilon is None else epsilon
        return cls(gamma=1.0 / alpha_bar, t=0, epsilon=eps, a0=a0)


def is_feasible(p: float, E: float, tau: float) -> bool:
    """``p >= 0`` and ``p * tau <= E`` up to floating-point round-off."""
    return p >= 0.0 and p * tau <= E * (1.0 + _FEAS_RTOL)


def _clip(level: float, h2: float, cap: float) -> float:
    # min{(level - 1/h2)^+, cap} with 1/0 = inf
    if h2 <= 0.0 or cap <= 0.0 or level <= 0.0:
        return 0.0
    if math.isinf(level):
        return cap
    p = level - 1.0 / h2
    if p <= 0.0:
        return 0.0
    return p if p < cap else cap


def power_closed_form(state: SystemState, params: SystemParams) -> float:
    """``min{(W - 1/h2)^+, E/tau}`` with ``W`` the closed-form water level."""
    if state.E == 0.0:
        return 0.0
    w = water_level(state.Q, min(state.E, params.N_E), params)
    return _clip(w, state.h2, state.E / params.tau)


def power_greedy(state: SystemState, params: SystemParams,
                 epsilon: Optional[float] = None) -> float:
    """``min{alpha_bar - epsilon, E/tau}``."""
    eps = 0.05 * params.alpha_bar if epsilon is None else epsilon
    if not 0.0 < eps < params.alpha_bar:
        raise ConfigError(f"greedy needs 0 < epsilon < alpha_bar, got {eps!r}")
    return min(params.alpha_bar - eps, state.E / params.tau)


def _dual_level(gamma: float) -> float:
    return math.inf if gamma == 0.0 else 1.0 / gamma


def power_csi_wf(state: SystemState, dual: DualState, params: SystemParams) -> float:
    """``min{(1/gamma - 1/h2)^+, E/tau}``; ``gamma = 0`` means an infinite level."""
    return _clip(_dual_level(dual.gamma), state.h2, state.E / params.tau)


def power_qwwf(state: SystemState, dual: DualState, params: SystemParams) -> float:
    """``min{(Q/gamma - 1/h2)^+, E/tau}``."""
    if state.Q == 0.0:
        return 0.0
    return _clip(state.Q * _dual_level(dual.gamma), state.h2, state.E / params.tau)


def update_multiplier(dual: DualState, p_used: float, alpha_bar: float) -> DualState:
    """Projected subgradient step ``gamma <- [gamma + a_t (p - alpha_bar + eps)]^+``.

    Step size ``a_t = a0 / (t + 1)``.
    """
    a_t = dual.a0 / (dual.t + 1)
    g = dual.gamma + a_t * (p_used - alpha_bar + dual.epsilon)
    return replace(dual, gamma=g if g > 0.0 else 0.0, t=dual.t + 1)


class Policy(Protocol):
    name: str

    def power(self, h2: float, q: float, e: float) -> float: ...

    def observe(self, p: float) -> None: ...

    def freeze(self) -> None: ...


class _Stateless:
    name = ""

    def observe(self, p: float) -> None:
        pass

    def freeze(self) -> None:
        pass


class ClosedFormPolicy(_Stateless):
    """Closed-form multi-level water-filling with constants hoisted.

    Gives the same powers as :func:`power_closed_form` (up to round-off
    in the water level) at a fraction of the call overhead.
    """

    name = "closed_form"

    def __init__(self, params: SystemParams, regime: Optional[Regime] = None):
        self.params = params
        self.regime = classify_regime(params) if regime is None else regime
        if self.regime is Regime.Infeasible:
            th = regime_thresholds(params)
            raise InfeasibleError(
                f"closed-form policy undefined: lambda_bar={params.lambda_bar:.6g} "
                f">= exp(1/x) E1(1/x) = {th.existence_bound:.6g}"
            )
        self.tau = params.tau
        self.e_th = (_e_threshold(params.lambda_bar, params.tau)
                     if params.lambda_bar > 0 else 0.0)
        self._k = EULER_GAMMA + params.lambda_bar

    def level(self, q: float, e: float) -> float:
        if e <= 0.0:
            return 0.0
        if self.regime is Regime.SmallArrivalEnergySufficient or e >= self.e_th:
            return math.inf
        a, tau, lam = self.params.alpha_bar, self.tau, self.params.lambda_bar
        if self.regime is Regime.LargeArrivalEnergySufficient:
            num = a * e
            den = e * (self._k - math.log(e / tau)) - a * q
        else:
            num = a * tau * e
            den = -e * e + lam * tau * e - a * tau * q
        if den == 0.0:
            return math.inf
        r = num / den
        return r if r > 0.0 else 0.0

    def power(self, h2: float, q: float, e: float) -> float:
        if e <= 0.0 or h2 <= 0.0:
            return 0.0
        return _clip(self.level(q, e), h2, e / self.tau)


class GreedyPolicy(_Stateless):
    name = "greedy"

    def __init__(self, params: SystemParams, epsilon: Optional[float] = None):
        eps = 0.05 * params.alpha_bar if epsilon is None else epsilon
        if not 0.0 < eps < params.alpha_bar:
            raise ConfigError(f"greedy needs 0 < epsilon < alpha_bar, got {eps!r}")
        self.target = params.alpha_bar - eps
        self.tau = params.tau

    def power(self, h2: float, q: float, e: float) -> float:
        cap = e / self.tau
        return self.target if self.target < cap else cap


class _DualPolicy:
    """Water-filling baseline whose multiplier learns online until frozen."""

    name = ""

    def __init__(self, params: SystemParams, epsilon: Optional[float] = None,
                 a0: float = 0.1, gamma0: Optional[float] = None):
        self.params = params
        self.tau = params.tau
        self.dual = DualState.initial(params.alpha_bar, epsilon, a0)
        if gamma0 is not None:
            self.dual = replace(self.dual, gamma=gamma0)
        self.learning = True

    def observe(self, p: float) -> None:
        if self.learning:
            self.dual = update_multiplier(self.dual, p, self.params.alpha_bar)

    def freeze(self) -> None:
        self.learning = False


class CsiWaterFillingPolicy(_DualPolicy):
    name = "csi_wf"

    def power(self, h2: float, q: float, e: float) -> float:
        return _clip(_dual_level(self.dual.gamma), h2, e / self.tau)


class QueueWeightedWaterFillingPolicy(_DualPolicy):
    name = "qwwf"

    def power(self, h2: float, q: float, e: float) -> float:
        if q <= 0.0:
            return 0.0
        return _clip(q * _dual_level(self.dual.gamma), h2, e / self.tau)


class TablePolicy(_Stateless):
    """Lookup-table policy over a ``(h, q, e)`` grid.

    ``h`` maps to its quantization bin through ``h_edges``, ``q`` to the
    nearest grid level (clamped), and ``e`` to the largest grid level not
    above ``E``, so a tabulated power feasible at the grid point stays
    feasible for the true battery level.

    Parameters
    ----------
    power_table : ndarray, shape (n_h, n_q, n_e)
    q_grid, e_grid : ndarray
        Increasing grids.
    h_edges : ndarray, shape (n_h + 1,)
        Bin edges of the channel quantizer (last edge ``inf``).
    """

    name = "mdp_table"

    def __init__(self, power_table: np.ndarray, q_grid: np.ndarray,
                 e_grid: np.ndarray, h_edges: np.ndarray, tau: float):
        self.table = np.asarray(power_table, dtype=float)
        self.q_grid = np.asarray(q_grid, dtype=float)
        self.e_grid = np.asarray(e_grid, dtype=float)
        self.h_edges = np.asarray(h_edges, dtype=float)
        self.tau = tau
        n_h, n_q, n_e = self.table.shape
        if (n_q, n_e, n_h + 1) != (self.q_grid.size, self.e_grid.size, self.h_edges.size):
            raise ConfigError("table shape does not match grids")
        self._rows = self.table.tolist()
        self._dq = float(self.q_grid[1] - self.q_grid[0]) if n_q > 1 else 1.0
        self._de = float(self.e_grid[1] - self.e_grid[0]) if n_e > 1 else 1.0
        self._inner_edges = self.h_edges[1:-1].tolist()

    def power(self, h2: float, q: float, e: float) -> float:
        n_q, n_e = self.q_grid.size, self.e_grid.size
        ih = int(np.searchsorted(self._inner_edges, h2, side="right"))
        iq = min(int(q / self._dq + 0.5), n_q - 1)
        ie = min(int(e / self._de * (1.0 + 1e-12)), n_e - 1)
        p = self._rows[ih][iq][ie]
        cap = e / self.tau
        return p if p < cap else cap


def make_policy(name: str, params: SystemParams, **options) -> Policy:
    """Instantiate a policy by its config name.

    ``mdp_table`` requires a ``table`` option holding a :class:`TablePolicy`.
    """
    if name == "closed_form":
        return ClosedFormPolicy(params)
    if name == "greedy":
        return GreedyPolicy(params, options.get("epsilon"))
    if name == "csi_wf":
        return CsiWaterFillingPolicy(params, options.get("epsilon"),
                                     options.get("a0", 0.1))
    if name == "qwwf":
        return QueueWeightedWaterFillingPolicy(params, options.get("epsilon"),
                                               options.get("a0", 0.1))
    if name == "mdp_table":
        table = options.get("table")
        if table is None:
            raise ConfigError("mdp_table policy needs a solved table")
        return table
    raise ConfigError(f"unknown policy {name!r}; choose from {', '.join(POLICY_NAMES)}")
