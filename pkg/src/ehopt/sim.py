"""Slot-level simulator of the energy-harvesting link.

Per slot ``n`` with observation ``(h2, Q, E)`` and power ``p``::

    R  = log(1 + h2 * p)
    Q' = max(Q - R * tau, 0) + lambda_n * tau
    E' = min(E - p * tau + alpha_n * tau, N_E)

Data arrivals are a compound Poisson amount per slot (Poisson packet
count, Exp(1) packet sizes); harvested power is constant within blocks of
``N`` slots and i.i.d. across blocks.  Channel, data and energy draws come
from three independent streams spawned from one seed, so runs with the
same seed see identical randomness whatever the policy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Union

import numpy as np

from .params import ConfigError, DiscreteDistribution, SystemParams, poisson_energy_pmf
from .policies import Policy, SystemState, is_feasible, make_policy

__all__ = [
    "AvailabilityError",
    "SimConfig",
    "Metrics",
    "StabilityProbe",
    "make_streams",
    "sample_channel",
    "sample_arrivals",
    "step",
    "run_simulation",
    "run_with_probe",
    "stability_probe",
]


class AvailabilityError(RuntimeError):
    """A policy asked for more energy than the battery holds."""


@dataclass
class SimConfig:
    """One simulation run.

    Parameters
    ----------
    policy : str or Policy
        Policy name (see ``policies.POLICY_NAMES``) or a ready instance.
    warmup : int, optional
        Slots excluded from metrics; defaults to 20% of ``horizon``.  Online
        baselines learn their multiplier during warmup only.
    energy_scale, energy_truncate : float
        Per-block harvested power is ``energy_scale * Poisson`` truncated at
        ``energy_truncate * alpha_bar`` (see ``poisson_energy_pmf``).  The
        scale defaults to ``alpha_bar / 10`` (a Poisson count of mean 10).
    energy_pmf : DiscreteDistribution, optional
        Overrides the Poisson block law.
    """

    params: SystemParams
    policy: Union[str, Policy] = "closed_form"
    policy_options: Dict = field(default_factory=dict)
    horizon: int = 100_000
    warmup: Optional[int] = None
    seed: int = 0
    q0: float = 0.0
    e0: float = 0.0
    energy_scale: Optional[float] = None
    energy_truncate: float = 4.0
    energy_pmf: Optional[DiscreteDistribution] = None
    record_trace: bool = False

    def __post_init__(self) -> None:
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if self.warmup is None:
            self.warmup = int(0.2 * self.horizon)
        if not 0 <= self.warmup < self.horizon:
            raise ConfigError(f"need 0 <= warmup < horizon, got {self.warmup}/{self.horizon}")
        if self.q0 < 0 or not 0 <= self.e0 <= self.params.N_E:
            raise ConfigError("initial state outside q >= 0, 0 <= e <= N_E")

    def energy_distribution(self) -> DiscreteDistribution:
        if self.energy_pmf is not None:
            return self.energy_pmf
        scale = self.energy_scale or self.params.alpha_bar / 10.0
        return poisson_energy_pmf(self.params.alpha_bar, scale, self.energy_truncate)

    def build_policy(self) -> Policy:
        if isinstance(self.policy, str):
            return make_policy(self.policy, self.params, **self.policy_options)
        return self.policy

    @property
    def policy_name(self) -> str:
        return self.policy if isinstance(self.policy, str) else self.policy.name


@dataclass
class Metrics:
    """Time averages over the measured (post-warmup) slots."""

    avg_queue: float
    avg_delay: float
    avg_power: float
    avg_rate: float
    cap_events: int
    q2_mean: float
    slots: int
    trace: Optional[Dict[str, np.ndarray]] = field(default=None, repr=False)


def make_streams(seed: int):
    """Independent (channel, data, energy) generators for ``seed``."""
    children = np.random.SeedSequence(seed).spawn(3)
    return tuple(np.random.Generator(np.random.Philox(s)) for s in children)


def sample_channel(rng: np.random.Generator, size=None):
    """Rayleigh power gain ``|h|^2 ~ Exp(1)``."""
    return rng.standard_exponential(size)


def _compound_poisson(rng: np.random.Generator, mean_count: float, n: int) -> np.ndarray:
    counts = rng.poisson(mean_count, n)
    # sum of k Exp(1) sizes is Gamma(k, 1); zero counts give zero
    out = np.zeros(n)
    pos = counts > 0
    out[pos] = rng.standard_gamma(counts[pos])
    return out


def sample_arrivals(data_rng: np.random.Generator, energy_rng: np.random.Generator,
                    params: SystemParams, energy_pmf: DiscreteDistribution,
                    n_slots: int):
    """Per-slot data arrival rate and harvested power.

    Returns
    -------
    lam : ndarray
        ``lam[n] * tau`` packet-units arrive in slot ``n``; mean ``lambda_bar``.
    alpha : ndarray
        Harvested power, constant over each block of ``N`` slots.
    """
    tau = params.tau
    if params.lambda_bar > 0:
        lam = _compound_poisson(data_rng, params.lambda_bar * tau, n_slots) / tau
    else:
        lam = np.zeros(n_slots)
    n_blocks = -(-n_slots // params.N)
    per_block = energy_rng.choice(energy_pmf.values, size=n_blocks, p=energy_pmf.probs)
    alpha = np.repeat(per_block, params.N)[:n_slots]
    return lam, alpha


def step(state: SystemState, p: float, lambda_n: float, alpha_n: float,
         params: SystemParams, policy_name: str = "policy") -> SystemState:
    """Apply one slot of the queue recursions.

    Raises
    ------
    AvailabilityError
        If ``p * tau > E``; nothing is clipped silently.
    """
    if not is_feasible(p, state.E, params.tau):
        raise AvailabilityError(
            f"{policy_name} requested p={p!r} with E={state.E!r}, tau={params.tau!r}"
        )
    tau = params.tau
    r = math.log1p(state.h2 * p)
    q = max(state.Q - r * tau, 0.0) + lambda_n * tau
    # the max only absorbs round-off admitted by is_feasible
    e = min(max(state.E - p * tau, 0.0) + alpha_n * tau, params.N_E)
    return SystemState(state.h2, q, e)


def _simulate(config: SimConfig, checkpoints: Sequence[int] = ()):
    params = config.params
    tau, n_e_cap, lam_bar = params.tau, params.N_E, params.lambda_bar
    horizon, warmup = config.horizon, config.warmup
    policy = config.build_policy()
    name = config.policy_name
    ch_rng, data_rng, en_rng = make_streams(config.seed)
    h2s = sample_channel(ch_rng, horizon)
    lam, alpha = sample_arrivals(data_rng, en_rng, params, config.energy_distribution(),
                                 horizon)
    h2l, laml, all_ = h2s.tolist(), lam.tolist(), alpha.tolist()

    rec = config.record_trace
    if rec:
        tq = np.empty(horizon)
        te = np.empty(horizon)
        tp = np.empty(horizon)
    cps = sorted(set(int(c) for c in checkpoints))
    cp_vals = []
    cp_i = 0
    q2_run = 0.0

    power = policy.power
    observe = policy.observe
    log1p = math.log1p
    q, e = float(config.q0), float(config.e0)
    sum_q = sum_q2 = sum_p = sum_r = 0.0
    caps = 0
    for n in range(horizon):
        if n == warmup:
            policy.freeze()
        h = h2l[n]
        p = power(h, q, e)
        if p < 0.0 or p * tau > e * (1.0 + 1e-12):
            raise AvailabilityError(
                f"{name} requested p={p!r} with E={e!r}, tau={tau!r} at slot {n}"
            )
        observe(p)
        r = log1p(h * p)
        if rec:
            tq[n] = q
            te[n] = e
            tp[n] = p
        if n >= warmup:
            sum_q += q
            sum_q2 += q * q
            sum_p += p
            sum_r += r
        if cps:
            q2_run += q * q
            if cp_i < len(cps) and n + 1 == cps[cp_i]:
                cp_vals.append(q2_run / (n + 1))
                cp_i += 1
        q = q - r * tau
        if q < 0.0:
            q = 0.0
        q += laml[n] * tau
        e = e - p * tau
        if e < 0.0:
            e = 0.0
        e += all_[n] * tau
        if e > n_e_cap:
            e = n_e_cap
            caps += 1

    m = horizon - warmup
    avg_q = sum_q / m
    trace = None
    if rec:
        trace = {
            "slot": np.arange(horizon),
            "h2": h2s,
            "Q": tq,
            "E": te,
            "p": tp,
            "lambda": lam,
            "alpha": alpha,
        }
    metrics = Metrics(
        avg_queue=avg_q,
        avg_delay=avg_q / lam_bar if lam_bar > 0 else 0.0,
        avg_power=sum_p / m,
        avg_rate=sum_r / m,
        cap_events=caps,
        q2_mean=sum_q2 / m,
        slots=m,
        trace=trace,
    )
    return metrics, np.array(cp_vals)


def run_simulation(config: SimConfig) -> Metrics:
    """Simulate ``config.horizon`` slots and average over the post-warmup part.

    ``avg_delay = avg_queue / lambda_bar`` (0 when ``lambda_bar = 0``).
    Deterministic for a fixed seed.
    """
    return _simulate(config)[0]


@dataclass
class StabilityProbe:
    """Running mean of ``Q^2`` from slot 0 at each checkpoint.

    ``slope`` is the relative growth of the running mean over the last
    window, ``(M_k - M_{k-1}) / M_k``.
    """

    checkpoints: np.ndarray
    q2_running_mean: np.ndarray
    slope: float
    threshold: float

    @property
    def verdict(self) -> str:
        return "plateau" if self.slope < self.threshold else "diverging"


def _checkpoints(config: SimConfig, checkpoints) -> np.ndarray:
    if checkpoints is None:
        checkpoints = np.linspace(config.horizon / 10, config.horizon, 10).astype(int)
    cps = np.array(sorted(set(int(c) for c in checkpoints)))
    if cps.size < 2 or cps[0] < 1 or cps[-1] > config.horizon:
        raise ConfigError("need at least two checkpoints inside the horizon")
    return cps


def run_with_probe(config: SimConfig, checkpoints: Optional[Sequence[int]] = None,
                   threshold: float = 0.01):
    """One pass returning both ``Metrics`` and a :class:`StabilityProbe`."""
    cps = _checkpoints(config, checkpoints)
    metrics, vals = _simulate(config, cps)
    last, prev = vals[-1], vals[-2]
    slope = 0.0 if last == 0.0 else (last - prev) / last
    return metrics, StabilityProbe(cps, vals, float(slope), threshold)


def stability_probe(config: SimConfig, checkpoints: Optional[Sequence[int]] = None,
                    threshold: float = 0.01) -> StabilityProbe:
    """Classify the data queue as ``plateau`` or ``diverging``.

    Checkpoints default to ten evenly spaced slots ending at the horizon.
    """
    return run_with_probe(config, checkpoints, threshold)[1]
