"""Model constants and small discrete distributions shared by every module."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

__all__ = ["ConfigError", "SystemParams", "DiscreteDistribution", "poisson_energy_pmf"]


class ConfigError(ValueError):
    """Invalid model or experiment configuration."""


@dataclass(frozen=True)
class SystemParams:
    """Constants of the energy-harvesting link.

    Parameters
    ----------
    tau : float
        Slot length in seconds.
    lambda_bar : float
        Mean data arrival rate in packet-units per second.  One packet-unit
        is one nat/s/Hz sustained for one second, so ``R * tau`` packets
        leave the queue in a slot served at rate ``R``.
    alpha_bar : float
        Mean harvested power in W.
    N_E : float
        Battery capacity in J.
    N : int
        Slots per energy block (harvested power is constant in a block).
    zeta : float
        Modulation constant.  Closed forms assume 1.
    alpha_th : float
        Energy-arrival threshold splitting the two non-trivial regimes.
    """

    tau: float = 0.1
    lambda_bar: float = 1.8
    alpha_bar: float = 10.0
    N_E: float = 600.0
    N: int = 1
    zeta: float = 1.0
    alpha_th: float = 3.6

    def __post_init__(self) -> None:
        for name in ("tau", "alpha_bar", "zeta", "alpha_th"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be a positive finite number, got {v!r}")
        if not (math.isfinite(self.lambda_bar) and self.lambda_bar >= 0):
            raise ConfigError(f"lambda_bar must be >= 0, got {self.lambda_bar!r}")
        if not (math.isfinite(self.N_E) and self.N_E >= 0):
            raise ConfigError(f"N_E must be >= 0, got {self.N_E!r}")
        if int(self.N) != self.N or self.N < 1:
            raise ConfigError(f"N must be an integer >= 1, got {self.N!r}")
        object.__setattr__(self, "N", int(self.N))

    def with_(self, **changes) -> "SystemParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class DiscreteDistribution:
    """Finite-support distribution given by ``values`` and ``probs``."""

    values: np.ndarray
    probs: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        v = np.atleast_1d(np.asarray(self.values, dtype=float))
        p = np.atleast_1d(np.asarray(self.probs, dtype=float))
        if v.shape != p.shape or v.ndim != 1 or v.size == 0:
            raise ConfigError("values and probs must be equal-length 1-d arrays")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ConfigError(f"probs must be nonnegative and sum to 1, sum={p.sum()!r}")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "probs", p)

    @classmethod
    def point(cls, value: float) -> "DiscreteDistribution":
        return cls(np.array([float(value)]), np.array([1.0]))

    @property
    def mean(self) -> float:
        return float(self.values @ self.probs)

    def expect(self, fn) -> float:
        return float(sum(pk * fn(vk) for vk, pk in zip(self.values, self.probs)))


def poisson_energy_pmf(
    alpha_bar: float, scale: float = 1.0, truncate: float = 4.0
) -> DiscreteDistribution:
    """Scaled Poisson law for the harvested power of one block.

    ``alpha = scale * K`` with ``K ~ Poisson(alpha_bar / scale)``, support
    truncated at ``truncate * alpha_bar`` and renormalized.  Values are then
    rescaled so the mean is exactly ``alpha_bar``.
    """
    if alpha_bar <= 0 or scale <= 0 or truncate < 1:
        raise ConfigError("alpha_bar and scale must be positive and truncate >= 1")
    kmax = int(math.floor(truncate * alpha_bar / scale))
    k = np.arange(kmax + 1)
    p = stats.poisson.pmf(k, alpha_bar / scale)
    p = p / p.sum()
    vals = scale * k.astype(float)
    mean = float(vals @ p)
    if mean <= 0:
        return DiscreteDistribution.point(alpha_bar)
    vals *= alpha_bar / mean
    keep = p > 0
    return DiscreteDistribution(vals[keep], p[keep] / p[keep].sum())
