"""Discretized average-cost MDP used as a numerical oracle.

State ``(q, e)`` lives on uniform grids over ``[0, q_max] x [0, N_E]``;
the channel gain is i.i.d. and quantized into ``n_h`` equiprobable bins.
A slot is split into a deterministic post-decision move and a random
arrival::

    s = max(q - log(1 + h p) tau, 0),   u = e - p tau        (decision)
    q' = s + A,   e' = min(u + alpha tau, N_E)               (arrivals)

Off-grid post-decision points are split between neighbouring grid points
with linear weights, and arrival amounts are projected onto multiples of
the grid spacing the same way, so every projection preserves the mean.
The expected continuation value is then ``A_q @ V @ B_e.T`` followed by
bilinear interpolation, where ``A_q`` and ``B_e`` are banded arrival
matrices clamped at the top of each grid.
"""

from __future__ import annotations

import csv
import json
import math
import os
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy import integrate
from scipy.sparse.linalg import LinearOperator, gmres
from scipy.special import i1e

from .params import ConfigError, DiscreteDistribution, SystemParams, poisson_energy_pmf
from .policies import TablePolicy

__all__ = [
    "ConvergenceError",
    "ReducibleChainError",
    "GridSpec",
    "Kernel",
    "MdpSolution",
    "PolicyEvaluation",
    "project_to_lattice",
    "compound_poisson_lattice",
    "channel_bins",
    "build_kernel",
    "bellman_operator",
    "relative_value_iteration",
    "evaluate_policy_on_grid",
    "policy_bias",
    "read_solution_csv",
]


class ConvergenceError(RuntimeError):
    """Value iteration stopped at its iteration cap."""

    def __init__(self, message: str, span: float, iterations: int):
        super().__init__(message)
        self.span = span
        self.iterations = iterations


class ReducibleChainError(RuntimeError):
    """The induced chain has more than one recurrent class."""


@dataclass(frozen=True)
class GridSpec:
    """Discretization of the MDP.

    Parameters
    ----------
    q_max : float
        Top of the data-queue grid (packet-units).
    n_q, n_e, n_h, n_p : int
        Grid sizes; ``n_p`` positive power levels per state plus zero.
    arrival_pmf : DiscreteDistribution, optional
        Law of the per-slot arrival rate ``lambda``; the default is the
        compound Poisson amount with mean ``lambda_bar * tau``.
    energy_pmf : DiscreteDistribution, optional
        Law of the harvested power ``alpha``; defaults to the simulator's
        per-block law, applied i.i.d. per slot.
    p_min_frac : float
        Smallest positive power as a fraction of ``e / tau``.
    """

    q_max: float
    n_q: int = 120
    n_e: int = 80
    n_h: int = 8
    n_p: int = 12
    arrival_pmf: Optional[DiscreteDistribution] = None
    energy_pmf: Optional[DiscreteDistribution] = None
    p_min_frac: float = 0.02

    def __post_init__(self) -> None:
        for name in ("n_q", "n_e", "n_h"):
            if getattr(self, name) < 2:
                raise ConfigError(f"{name} must be >= 2")
        if self.n_p < 1:
            raise ConfigError("n_p must be >= 1")
        if not self.q_max > 0:
            raise ConfigError("q_max must be positive")
        if not 0 < self.p_min_frac <= 1:
            raise ConfigError("p_min_frac must lie in (0, 1]")


def project_to_lattice(values, probs, delta: float) -> np.ndarray:
    """Mean-preserving projection of a law on ``[0, inf)`` onto ``k * delta``.

    Mass at ``x`` is split between ``floor(x/delta)`` and the next point in
    proportion to proximity.  Returns the pmf indexed by ``k``.
    """
    values = np.asarray(values, dtype=float)
    probs = np.asarray(probs, dtype=float)
    if np.any(values < 0):
        raise ConfigError("lattice projection needs nonnegative support")
    pos = values / delta
    lo = np.floor(pos).astype(int)
    w = pos - lo
    out = np.zeros(lo.max() + 2)
    np.add.at(out, lo, probs * (1 - w))
    np.add.at(out, lo + 1, probs * w)
    return np.trim_zeros(out, "b")


def _compound_density(x: float, mu: float) -> float:
    # density of a Poisson(mu) sum of Exp(1) variables on x > 0
    z = 2.0 * math.sqrt(mu * x)
    return math.exp(-mu - x + z) * math.sqrt(mu / x) * i1e(z)


def compound_poisson_lattice(mu: float, delta: float, tail: float = 1e-13) -> np.ndarray:
    """Hat-function projection of the compound Poisson(``mu``)/Exp(1) amount.

    The atom at zero has mass ``exp(-mu)``; the continuous part is
    integrated against the lattice hat functions interval by interval until
    the neglected mass falls below ``tail``.
    """
    if mu < 0 or delta <= 0:
        raise ConfigError("need mu >= 0 and delta > 0")
    if mu == 0:
        return np.array([1.0])
    cont_total = -math.expm1(-mu)
    out = [math.exp(-mu), 0.0]
    seen = 0.0
    k = 0
    while cont_total - seen > tail and k < 100_000:
        a, b = k * delta, (k + 1) * delta
        m_lo = integrate.quad(lambda x: _compound_density(x, mu) * (b - x) / delta,
                              a, b, epsabs=1e-15, epsrel=1e-12)[0]
        m_hi = integrate.quad(lambda x: _compound_density(x, mu) * (x - a) / delta,
                              a, b, epsabs=1e-15, epsrel=1e-12)[0]
        out[k] += m_lo
        out[k + 1] += m_hi
        out.append(0.0)
        seen += m_lo + m_hi
        k += 1
    pmf = np.array(out)
    pmf = np.trim_zeros(pmf, "b")
    return pmf / pmf.sum()


def channel_bins(n_h: int):
    """Equiprobable bins of ``Exp(1)``: edges, conditional means, probabilities."""
    k = np.arange(n_h + 1)
    with np.errstate(divide="ignore"):
        edges = -np.log1p(-k / n_h)
    edges[-1] = np.inf
    a, b = edges[:-1], edges[1:]
    eb = np.where(np.isinf(b), 0.0, (b + 1) * np.exp(-np.where(np.isinf(b), 0, b)))
    reps = ((a + 1) * np.exp(-a) - eb) * n_h
    return edges, reps, np.full(n_h, 1.0 / n_h)


def _shift_matrix(pmf: np.ndarray, n: int) -> np.ndarray:
    # M[i, i'] = P(min(i + K, n - 1) = i') for K ~ pmf
    m = np.zeros((n, n))
    for i in range(n):
        top = n - 1 - i
        head = pmf[: top]
        m[i, i: i + head.size] = head
        m[i, n - 1] += pmf[top:].sum() if pmf.size > top else 0.0
    return m


@dataclass
class Kernel:
    """Precomputed transition structure for a grid and parameter set."""

    params: SystemParams
    grid: GridSpec
    q_grid: np.ndarray
    e_grid: np.ndarray
    h_edges: np.ndarray
    h_reps: np.ndarray
    h_probs: np.ndarray
    powers: np.ndarray  # (n_e, n_a)
    A_q: np.ndarray  # (n_q, n_q)
    B_e: np.ndarray  # (n_e, n_e)
    data_pmf: np.ndarray
    energy_lattice_pmf: np.ndarray
    cost: np.ndarray  # (n_q, n_e)
    _s_idx0: np.ndarray = field(repr=False)
    _s_idx1: np.ndarray = field(repr=False)
    _s_w: np.ndarray = field(repr=False)
    _u_lo: np.ndarray = field(repr=False)
    _u_w: np.ndarray = field(repr=False)

    @property
    def n_actions(self) -> int:
        return self.powers.shape[1]

    @property
    def dq(self) -> float:
        return float(self.q_grid[1] - self.q_grid[0])

    @property
    def de(self) -> float:
        return float(self.e_grid[1] - self.e_grid[0])

    def post_decision(self, powers: np.ndarray):
        """Bilinear post-decision weights for a power table ``(n_h, n_q, n_e)``.

        Returns lattice coordinates ``(s_pos, u_pos)`` in grid units.
        """
        tau = self.params.tau
        p = np.asarray(powers, dtype=float)
        h = self.h_reps[:, None, None]
        s = np.maximum(self.q_grid[None, :, None] - np.log1p(h * p) * tau, 0.0)
        u = np.maximum(self.e_grid[None, None, :] - p * tau, 0.0)
        return s / self.dq, u / self.de

    def transition_row(self, i: int, j: int, h: int, a: int) -> np.ndarray:
        """Next-state distribution ``(n_q, n_e)`` for state ``(i, j)``, bin ``h``, action ``a``."""
        p = self.powers[j, a]
        n_q, n_e = self.grid.n_q, self.grid.n_e
        tau = self.params.tau
        s = max(self.q_grid[i] - math.log1p(self.h_reps[h] * p) * tau, 0.0) / self.dq
        u = max(self.e_grid[j] - p * tau, 0.0) / self.de
        post = np.zeros((n_q, n_e))
        s_lo, u_lo = min(int(s), n_q - 1), min(int(u), n_e - 1)
        sw, uw = s - s_lo, u - u_lo
        for di, wi in ((0, 1 - sw), (1, sw)):
            for dj, wj in ((0, 1 - uw), (1, uw)):
                if wi * wj > 0:
                    post[s_lo + di, u_lo + dj] += wi * wj
        return self.A_q.T @ post @ self.B_e


def build_kernel(grid: GridSpec, params: SystemParams) -> Kernel:
    """Assemble grids, arrival matrices and post-decision interpolation tables."""
    if params.N_E <= 0:
        raise ConfigError("the MDP grid needs N_E > 0")
    tau = params.tau
    q_grid = np.linspace(0.0, grid.q_max, grid.n_q)
    e_grid = np.linspace(0.0, params.N_E, grid.n_e)
    dq, de = q_grid[1], e_grid[1]
    edges, reps, hp = channel_bins(grid.n_h)

    fr = np.geomspace(grid.p_min_frac, 1.0, grid.n_p)
    fr[-1] = 1.0
    fracs = np.concatenate([[0.0], fr])
    powers = e_grid[:, None] / tau * fracs[None, :]

    if grid.arrival_pmf is not None:
        data_pmf = project_to_lattice(grid.arrival_pmf.values * tau,
                                      grid.arrival_pmf.probs, dq)
    else:
        data_pmf = compound_poisson_lattice(params.lambda_bar * tau, dq)
    epmf = grid.energy_pmf or poisson_energy_pmf(params.alpha_bar, params.alpha_bar / 10)
    en_pmf = project_to_lattice(epmf.values * tau, epmf.probs, de)
    A_q = _shift_matrix(data_pmf, grid.n_q)
    B_e = _shift_matrix(en_pmf, grid.n_e)

    n_q, n_e, n_h, n_a = grid.n_q, grid.n_e, grid.n_h, fracs.size
    # energy after decision: e_j (1 - f) in grid units, exact in index space
    u_pos = np.arange(n_e)[:, None] * (1.0 - fracs[None, :])
    u_lo = np.minimum(np.floor(u_pos).astype(np.int64), n_e - 1)
    u_w = u_pos - u_lo
    u_lo_c = np.minimum(u_lo, n_e - 2)
    u_w = np.where(u_lo == n_e - 1, 1.0, u_w)

    rate = np.log1p(reps[:, None, None] * powers[None, :, :]) * tau  # (h, e, a)
    s = np.maximum(q_grid[:, None, None, None] - rate[None, :, :, :].transpose(0, 2, 1, 3), 0.0)
    # s has shape (q, e, h, a)
    s_pos = s / dq
    s_lo = np.minimum(np.floor(s_pos).astype(np.int64), n_q - 1)
    s_w = s_pos - s_lo
    s_lo_c = np.minimum(s_lo, n_q - 2)
    s_w = np.where(s_lo == n_q - 1, 1.0, s_w)
    j_idx = np.arange(n_e)[None, :, None, None]
    a_idx = np.arange(n_a)[None, None, None, :]
    idx0 = (s_lo_c * n_e + j_idx) * n_a + a_idx
    idx1 = idx0 + n_e * n_a

    cost = np.repeat((q_grid / params.lambda_bar if params.lambda_bar > 0
                      else q_grid * 0.0)[:, None], n_e, axis=1)
    return Kernel(params, grid, q_grid, e_grid, edges, reps, hp, powers, A_q, B_e,
                  data_pmf, en_pmf, cost, idx0, idx1, s_w, u_lo_c, u_w)


def _action_values(kernel: Kernel, V: np.ndarray) -> np.ndarray:
    # expected next value for every (q, e, h, a)
    Z = kernel.A_q @ V @ kernel.B_e.T
    lo, w = kernel._u_lo, kernel._u_w
    Ze = Z[:, lo] * (1.0 - w) + Z[:, lo + 1] * w  # (n_q, n_e, n_a)
    flat = Ze.ravel()
    sw = kernel._s_w
    return flat[kernel._s_idx0] * (1.0 - sw) + flat[kernel._s_idx1] * sw


def bellman_operator(kernel: Kernel, V: np.ndarray):
    """``(TV, argmin)``: one Bellman backup and the minimizing action indices.

    ``argmin`` has shape ``(n_q, n_e, n_h)``.
    """
    qa = _action_values(kernel, V)
    best = qa.argmin(axis=3)
    vmin = np.take_along_axis(qa, best[..., None], axis=3)[..., 0]
    tv = kernel.cost + vmin @ kernel.h_probs
    return tv, best


@dataclass
class MdpSolution:
    """Output of relative value iteration.

    ``policy_table[h, i, j]`` is the power chosen in bin ``h`` at
    ``(q_grid[i], e_grid[j])``; ``action_table`` holds the action indices.
    """

    theta_star: float
    v_star: np.ndarray
    policy_table: np.ndarray
    action_table: np.ndarray
    iterations: int
    span: float
    q_grid: np.ndarray
    e_grid: np.ndarray
    h_edges: np.ndarray
    tau: float
    meta: dict = field(default_factory=dict)

    def table_policy(self) -> TablePolicy:
        return TablePolicy(self.policy_table, self.q_grid, self.e_grid, self.h_edges,
                           self.tau)

    def to_csv(self, path: str) -> None:
        """Write ``q_index, e_index, h_index, power, value`` plus a JSON sidecar."""
        n_h, n_q, n_e = self.policy_table.shape
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["q_index", "e_index", "h_index", "power", "value"])
            for i in range(n_q):
                for j in range(n_e):
                    v = repr(float(self.v_star[i, j]))
                    for h in range(n_h):
                        w.writerow([i, j, h, repr(float(self.policy_table[h, i, j])), v])
        meta = dict(self.meta)
        meta.update(theta_star=self.theta_star, iterations=self.iterations,
                    span=self.span, q_max=float(self.q_grid[-1]),
                    N_E=float(self.e_grid[-1]), n_q=n_q, n_e=n_e, n_h=n_h, tau=self.tau)
        with open(_sidecar(path), "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)


def _sidecar(path: str) -> str:
    return os.path.splitext(path)[0] + ".json"


def read_solution_csv(path: str) -> MdpSolution:
    """Load a table written by :meth:`MdpSolution.to_csv`."""
    with open(_sidecar(path)) as fh:
        meta = json.load(fh)
    n_q, n_e, n_h = meta["n_q"], meta["n_e"], meta["n_h"]
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[0] != n_q * n_e * n_h:
        raise ConfigError(f"{path}: expected {n_q * n_e * n_h} rows, got {data.shape[0]}")
    qi, ej, hk = (data[:, c].astype(int) for c in range(3))
    table = np.zeros((n_h, n_q, n_e))
    table[hk, qi, ej] = data[:, 3]
    v = np.zeros((n_q, n_e))
    v[qi, ej] = data[:, 4]
    edges, _, _ = channel_bins(n_h)
    return MdpSolution(
        theta_star=meta["theta_star"], v_star=v, policy_table=table,
        action_table=np.zeros((n_q, n_e, n_h), dtype=int),
        iterations=meta["iterations"], span=meta["span"],
        q_grid=np.linspace(0, meta["q_max"], n_q), e_grid=np.linspace(0, meta["N_E"], n_e),
        h_edges=edges, tau=meta["tau"], meta=meta,
    )


def relative_value_iteration(
    kernel: Kernel,
    tol: float = 1e-6,
    max_iter: int = 100_000,
    v0: Optional[np.ndarray] = None,
    ref: tuple = (0, 0),
    bias_every: Optional[int] = None,
    raise_on_cap: bool = True,
) -> MdpSolution:
    """Average-cost relative value iteration with per-slot cost ``q / lambda_bar``.

    Iterates ``V <- TV - TV[ref]`` until ``span(TV - V) <= tol``; the
    average cost is the midpoint of ``TV - V``, which brackets both the
    optimal cost and the cost of the greedy policy.

    Parameters
    ----------
    bias_every : int, optional
        Every ``bias_every`` sweeps, replace ``V`` by the exact bias of the
        current greedy policy (one Krylov solve).  This only changes the
        starting point of later sweeps; the stopping rule and the returned
        fixed point are those of plain value iteration.  Useful when the
        chain mixes slowly on a coarse queue grid.

    Raises
    ------
    ConvergenceError
        At the iteration cap (unless ``raise_on_cap`` is false), carrying
        the final span.
    """
    n_q, n_e = kernel.grid.n_q, kernel.grid.n_e
    V = np.zeros((n_q, n_e)) if v0 is None else np.array(v0, dtype=float)
    V = V - V[ref]
    span = math.inf
    it = 0
    hi = lo = 0.0
    for it in range(1, max_iter + 1):
        tv, best = bellman_operator(kernel, V)
        d = tv - V
        hi, lo = d.max(), d.min()
        span = hi - lo
        if span <= tol:
            V = tv - tv[ref]
            break
        if bias_every and it % bias_every == 0:
            try:
                _, V = policy_bias(kernel, _greedy_table(kernel, best), ref, guess=tv)
                continue
            except ReducibleChainError:
                pass
        V = tv - tv[ref]
    else:
        if raise_on_cap:
            raise ConvergenceError(
                f"relative value iteration hit {max_iter} iterations with span {span:.3e}",
                span, it)
    theta = 0.5 * (hi + lo)
    _, best = bellman_operator(kernel, V)
    meta = {
        "lambda_bar": kernel.params.lambda_bar,
        "alpha_bar": kernel.params.alpha_bar,
        "N_E": kernel.params.N_E,
        "n_p": kernel.grid.n_p,
        "converged": bool(span <= tol),
    }
    return MdpSolution(theta, V, _greedy_table(kernel, best), best, it, float(span),
                       kernel.q_grid, kernel.e_grid, kernel.h_edges, kernel.params.tau,
                       meta)


def _greedy_table(kernel: Kernel, best: np.ndarray) -> np.ndarray:
    # action indices (q, e, h) -> powers (h, q, e)
    n_e = kernel.grid.n_e
    return kernel.powers[np.arange(n_e)[None, None, :], best.transpose(2, 0, 1)]


@dataclass
class PolicyEvaluation:
    """Long-run cost of a fixed grid policy and its stationary law."""

    cost: float
    stationary: np.ndarray  # (n_q, n_e)
    boundary_mass: float

    def __float__(self) -> float:
        return self.cost


def _policy_table(kernel: Kernel, policy) -> np.ndarray:
    n_h, n_q, n_e = kernel.grid.n_h, kernel.grid.n_q, kernel.grid.n_e
    if isinstance(policy, MdpSolution):
        return policy.policy_table
    if isinstance(policy, np.ndarray):
        if policy.shape != (n_h, n_q, n_e):
            raise ConfigError(f"policy table must have shape {(n_h, n_q, n_e)}")
        return policy
    fn: Callable = policy.power if hasattr(policy, "power") else policy
    out = np.empty((n_h, n_q, n_e))
    for k, h in enumerate(kernel.h_reps):
        for i, q in enumerate(kernel.q_grid):
            for j, e in enumerate(kernel.e_grid):
                out[k, i, j] = fn(float(h), float(q), float(e))
    return out


def _post_matrix(kernel: Kernel, table: np.ndarray) -> sp.csr_matrix:
    # S[state, post] = sum_h pi_h * bilinear weight of the post-decision point
    n_q, n_e = kernel.grid.n_q, kernel.grid.n_e
    s_pos, u_pos = kernel.post_decision(table)
    s_lo = np.minimum(np.floor(s_pos).astype(np.int64), n_q - 2)
    u_lo = np.minimum(np.floor(u_pos).astype(np.int64), n_e - 2)
    sw = np.clip(s_pos - s_lo, 0.0, 1.0)
    uw = np.clip(u_pos - u_lo, 0.0, 1.0)
    n_h = table.shape[0]
    rows = np.broadcast_to(np.arange(n_q * n_e).reshape(1, n_q, n_e), (n_h, n_q, n_e))
    hp = kernel.h_probs[:, None, None]
    r, c, v = [], [], []
    for di, wi in ((0, 1 - sw), (1, sw)):
        for dj, wj in ((0, 1 - uw), (1, uw)):
            r.append(rows.ravel())
            c.append(((s_lo + di) * n_e + (u_lo + dj)).ravel())
            v.append((hp * wi * wj).ravel())
    S = sp.coo_matrix((np.concatenate(v), (np.concatenate(r), np.concatenate(c))),
                      shape=(n_q * n_e, n_q * n_e))
    return S.tocsr()


class _Chain:
    """Transition matrix ``P = S (A_q kron B_e)`` of a fixed policy, matrix-free."""

    def __init__(self, kernel: Kernel, table: np.ndarray):
        self.n_q, self.n_e = kernel.grid.n_q, kernel.grid.n_e
        self.n = self.n_q * self.n_e
        self.S = _post_matrix(kernel, table)
        self.St = self.S.T.tocsr()
        self.A_q, self.B_e = kernel.A_q, kernel.B_e

    def apply(self, h: np.ndarray) -> np.ndarray:
        w = self.A_q @ h.reshape(self.n_q, self.n_e) @ self.B_e.T
        return self.S @ w.ravel()

    def apply_t(self, y: np.ndarray) -> np.ndarray:
        w = (self.St @ y).reshape(self.n_q, self.n_e)
        return (self.A_q.T @ w @ self.B_e).ravel()


def _krylov(matvec, rhs: np.ndarray, what: str, x0: Optional[np.ndarray] = None,
            rtol: float = 1e-10) -> np.ndarray:
    n = rhs.size
    op = LinearOperator((n, n), matvec=matvec, dtype=float)
    x, _ = gmres(op, rhs, x0=x0, rtol=1e-12, atol=0.0, restart=min(200, n), maxiter=25)
    resid = np.abs(matvec(x) - rhs).max()
    if not np.isfinite(resid) or resid > rtol * max(1.0, np.abs(rhs).max()):
        raise ReducibleChainError(
            f"{what}: linear solve did not converge (residual {resid:.2e}); "
            "the induced chain is likely not unichain or mixes too slowly"
        )
    return x


def policy_bias(kernel: Kernel, table: np.ndarray, ref: tuple = (0, 0),
                guess: Optional[np.ndarray] = None):
    """Gain and bias ``(theta, h)`` of a fixed policy, with ``h[ref] = 0``.

    Solves ``h + theta = c + P h``; the unknown ``theta`` takes the slot of
    the pinned entry ``h[ref]``.  ``guess`` is an optional starting bias.
    """
    chain = _Chain(kernel, table)
    r = ref[0] * kernel.grid.n_e + ref[1]

    def mv(z):
        h = z.copy()
        h[r] = 0.0
        return h - chain.apply(h) + z[r]

    x0 = None
    if guess is not None:
        x0 = np.array(guess, dtype=float).ravel() - np.ravel(guess)[r]
        x0[r] = 0.0
    z = _krylov(mv, kernel.cost.ravel(), "bias equation", x0)
    theta = float(z[r])
    z[r] = 0.0
    return theta, z.reshape(kernel.grid.n_q, kernel.grid.n_e)


def evaluate_policy_on_grid(kernel: Kernel, policy) -> PolicyEvaluation:
    """Exact long-run average cost of a stationary policy on the grid.

    ``policy`` is an :class:`MdpSolution`, a power table ``(n_h, n_q, n_e)``
    or any object with ``power(h2, q, e)`` (evaluated at the grid points
    and bin representatives).  Powers must satisfy ``p tau <= e``.

    The cost is the gain of the bias equation ``h + theta = c + P h``
    (solved to round-off); the stationary law, from
    ``(I - P^T + 1 1^T) pi = 1``, supplies the mass at ``q_max``.  Both
    systems are nonsingular exactly when the induced chain is unichain.

    Raises
    ------
    ReducibleChainError
        If the stationary law is not unique (several recurrent classes).
    """
    table = _policy_table(kernel, policy)
    tau = kernel.params.tau
    if np.any(table < 0) or np.any(table * tau > kernel.e_grid[None, None, :] * (1 + 1e-12)):
        raise ConfigError("policy violates 0 <= p and p tau <= e on the grid")
    chain = _Chain(kernel, table)
    n = chain.n

    def mv(x):
        return x - chain.apply_t(x) + x.sum()

    pi = _krylov(mv, np.ones(n), "stationary law")
    if pi.min() < -1e-7:
        raise ReducibleChainError(
            f"stationary solve returned negative mass {pi.min():.2e}; not unichain")
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    pi2 = pi.reshape(kernel.grid.n_q, kernel.grid.n_e)
    cost, _ = policy_bias(kernel, table)
    boundary = float(pi2[-1, :].sum())
    if boundary > 1e-3:
        warnings.warn(f"stationary mass {boundary:.3g} at q_max; the grid truncates the queue",
                      RuntimeWarning, stacklevel=2)
    return PolicyEvaluation(cost, pi2, boundary)
