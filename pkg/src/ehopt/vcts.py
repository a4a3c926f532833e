"""Fluid (virtual continuous-time) model of the two queues with reflection.

::

    dq = (lambda_bar - E[R | q, e]) tau dt + dL
    de = (alpha_bar  - E[p | q, e]) tau dt - dU

``L`` keeps ``q >= 0`` and ``U`` keeps ``e <= N_E``; both are the minimal
nondecreasing processes that do so.  The integrator takes an explicit
Euler step and then projects back onto the domain, charging the overshoot
to ``L`` or ``U`` (a discrete Skorokhod map).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np

from .numerics import constant_power_rate, expected_power_G, expected_rate_F
from .params import ConfigError, SystemParams
from .policies import ClosedFormPolicy

__all__ = [
    "FluidPolicy",
    "WaterLevelFluidPolicy",
    "ConstantPowerFluidPolicy",
    "ThresholdFluidPolicy",
    "closed_form_fluid_policy",
    "VctsTrajectory",
    "integrate_vcts",
    "total_cost",
]

FluidPolicy = Callable[[float, float], Tuple[float, float]]


class WaterLevelFluidPolicy:
    """Expected ``(rate, power)`` of water-filling at level ``level(q, e)``.

    Uses the closed forms ``F`` and ``G`` for ``|h|^2 ~ Exp(1)`` with the
    per-slot cap ``e / tau``.
    """

    def __init__(self, level: Callable[[float, float], float], tau: float):
        self.level = level
        self.tau = tau

    def __call__(self, q: float, e: float):
        c = e / self.tau
        w = self.level(q, e)
        return expected_rate_F(w, c), expected_power_G(w, c)


def closed_form_fluid_policy(params: SystemParams) -> WaterLevelFluidPolicy:
    return WaterLevelFluidPolicy(ClosedFormPolicy(params).level, params.tau)


class ConstantPowerFluidPolicy:
    """Fixed power ``p`` whatever the channel, capped at ``e / tau``."""

    def __init__(self, p: float, tau: float):
        if p < 0:
            raise ConfigError("power must be >= 0")
        self.p = p
        self.tau = tau

    def __call__(self, q: float, e: float):
        p = min(self.p, e / self.tau)
        return constant_power_rate(p), p


class ThresholdFluidPolicy:
    """Hysteresis switch: off below ``e_low``, on at ``p_on`` above ``e_high``.

    Between the thresholds the previous mode is kept; the switch starts off.
    """

    def __init__(self, e_low: float, e_high: float, p_on: float, tau: float):
        if not 0 <= e_low <= e_high:
            raise ConfigError("need 0 <= e_low <= e_high")
        self.e_low, self.e_high = e_low, e_high
        self.p_on = p_on
        self.tau = tau
        self.on = False
        self._rate = constant_power_rate(p_on)

    def reset(self) -> None:
        self.on = False

    def __call__(self, q: float, e: float):
        if e < self.e_low:
            self.on = False
        elif e > self.e_high:
            self.on = True
        if not self.on:
            return 0.0, 0.0
        p = min(self.p_on, e / self.tau)
        rate = self._rate if p == self.p_on else constant_power_rate(p)
        return rate, p


@dataclass
class VctsTrajectory:
    """Sampled fluid trajectory; ``dL``/``dU`` are per-step reflection increments."""

    times: np.ndarray
    q: np.ndarray
    e: np.ndarray
    L: np.ndarray
    U: np.ndarray
    dL: np.ndarray
    dU: np.ndarray

    def to_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "q", "e", "L", "U"])
            for row in zip(self.times, self.q, self.e, self.L, self.U):
                w.writerow([repr(float(v)) for v in row])


def integrate_vcts(params: SystemParams, policy: FluidPolicy, q0: float, e0: float,
                   T: float, dt: float = None) -> VctsTrajectory:
    """Euler integration with per-step projection onto ``q >= 0, e <= N_E``.

    Parameters
    ----------
    policy : callable
        ``policy(q, e) -> (expected_rate, expected_power)``; the power must
        not exceed ``e / tau``.
    dt : float, optional
        Step size, ``tau / 10`` by default.
    """
    if dt is None:
        dt = params.tau / 10.0
    if not dt > 0 or dt >= T:
        raise ConfigError(f"need 0 < dt < T, got dt={dt!r}, T={T!r}")
    if q0 < 0 or not 0 <= e0 <= params.N_E:
        raise ConfigError("initial state must satisfy q0 >= 0 and 0 <= e0 <= N_E")
    if hasattr(policy, "reset"):
        policy.reset()
    n = int(math.ceil(T / dt - 1e-9))
    tau, lam, alpha, cap = params.tau, params.lambda_bar, params.alpha_bar, params.N_E
    times = np.empty(n + 1)
    qs = np.empty(n + 1)
    es = np.empty(n + 1)
    dL = np.zeros(n + 1)
    dU = np.zeros(n + 1)
    times[0], qs[0], es[0] = 0.0, q0, e0
    q, e = float(q0), float(e0)
    for k in range(1, n + 1):
        h = min(dt, T - (k - 1) * dt)
        rate, power = policy(q, e)
        q_t = q + (lam - rate) * tau * h
        e_t = e + (alpha - power) * tau * h
        if q_t < 0.0:
            dL[k] = -q_t
            q_t = 0.0
        if e_t > cap:
            dU[k] = e_t - cap
            e_t = cap
        if e_t < 0.0:
            # power <= e/tau keeps e_t >= e (1 - h) >= 0 for h <= 1
            if e_t < -1e-12 * max(1.0, cap):
                raise ConfigError(f"energy went negative ({e_t!r}); step too large or "
                                  "policy violates p <= e/tau")
            e_t = 0.0
        q, e = q_t, e_t
        times[k] = times[k - 1] + h
        qs[k], es[k] = q, e
    return VctsTrajectory(times, qs, es, np.cumsum(dL), np.cumsum(dU), dL, dU)


def total_cost(trajectory: VctsTrajectory) -> float:
    """Trapezoidal ``integral of q(t) dt`` over the sampled horizon."""
    return float(np.trapezoid(trajectory.q, trajectory.times))
