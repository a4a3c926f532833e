"""Batch front-end: ``ehopt <command> --config file.ini [--set k=v ...]``.

Commands
--------
simulate   one summary row per (policy, seed)
sweep      the same over a parameter grid (``[sweep] axis/values``)
solve-mdp  relative value iteration on the grid, table written as CSV
compare    loss ratio of stationary policies against a solved table
vcts       fluid trajectory CSV plus its total cost
regimes    regime tag, thresholds and stability margins

Exit codes: 0 ok, 2 configuration error, 3 infeasible parameters,
4 solution table does not match the configuration.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .mdp import (ConvergenceError, GridSpec, ReducibleChainError, build_kernel,
                  evaluate_policy_on_grid, read_solution_csv, relative_value_iteration)
from .numerics import InfeasibleError, exp_integral_e1, solve_e_threshold
from .params import ConfigError, SystemParams, poisson_energy_pmf
from .policies import POLICY_NAMES, make_policy
from .priority import Regime, classify_regime, regime_thresholds, stability_check
from .sim import SimConfig, run_with_probe
from .vcts import (ConstantPowerFluidPolicy, ThresholdFluidPolicy, closed_form_fluid_policy,
                   integrate_vcts, total_cost)

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_MISMATCH = 0, 2, 3, 4

COMMANDS = ("simulate", "sweep", "solve-mdp", "compare", "vcts", "regimes")

SUMMARY_COLUMNS = [
    "config_id", "policy", "seed", "lambda_bar", "alpha_bar", "tau", "N_E",
    "avg_delay_s", "avg_queue", "avg_power_W", "stability_verdict",
]
SWEEP_COLUMNS = SUMMARY_COLUMNS + [
    "point", "avg_rate", "cap_events", "q2_slope", "delay_mean", "delay_stderr",
]

_S, _F, _I, _B = str, float, int, bool
# section -> key -> (type, default); None means "unset"
SCHEMA: Dict[str, Dict[str, tuple]] = {
    "meta": {"id": (_S, "")},
    "system": {
        "tau": (_F, 0.1), "lambda_bar": (_F, 1.8), "alpha_bar": (_F, 10.0),
        "N_E": (_F, 600.0), "N": (_I, 1), "zeta": (_F, 1.0), "alpha_th": (_F, 3.6),
    },
    "run": {
        "policies": (_S, "closed_form, greedy, csi_wf, qwwf"),
        "horizon": (_I, 100_000), "warmup": (_I, None), "seeds": (_I, 1),
        "seed": (_I, 0), "energy_scale": (_F, None), "energy_truncate": (_F, 4.0),
        "q0": (_F, 0.0), "e0": (_F, 0.0), "trace": (_B, False),
        "checkpoints": (_I, 10), "slope_threshold": (_F, 0.01),
        "allow_infeasible": (_B, False),
    },
    "sweep": {"axis": (_S, ""), "values": (_S, ""), "lambda_rule": (_S, "fixed")},
    "mdp": {
        "q_max": (_F, 60.0), "n_q": (_I, 120), "n_e": (_I, 80), "n_h": (_I, 8),
        "n_p": (_I, 12), "tol": (_F, 1e-6), "max_iter": (_I, 100_000),
        "bias_every": (_I, 100), "cap_multiple": (_F, None), "solution": (_S, ""),
    },
    "vcts": {
        "policy": (_S, "closed_form"), "e_low": (_F, 0.0), "e_high": (_F, 0.0),
        "p_on": (_F, 0.0), "power": (_F, 0.0), "q0": (_F, 0.0), "e0": (_F, 0.0),
        "T": (_F, 100.0), "dt": (_F, None),
    },
}
SWEEP_AXES = ("lambda_bar", "alpha_bar", "N_E", "N", "tau")
_PRESET_DIR = os.path.join(os.path.dirname(__file__), "presets")


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _parse_value(kind, raw: str, where: str):
    raw = raw.strip()
    if raw == "" and kind is not _S:
        return None
    try:
        if kind is _B:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError
        if kind is _I:
            v = float(raw)
            if v != int(v):
                raise ValueError
            return int(v)
        return kind(raw)
    except ValueError:
        raise ConfigError(f"{where}: cannot read {raw!r} as {kind.__name__}") from None


@dataclass
class Experiment:
    """Parsed configuration with overrides applied."""

    values: Dict[str, Dict[str, object]]
    config_id: str
    out_dir: str
    jobs: int = 1
    source: str = ""

    def __getitem__(self, section: str) -> Dict[str, object]:
        return self.values[section]

    def system(self, **changes) -> SystemParams:
        kw = dict(self.values["system"])
        kw.update(changes)
        return SystemParams(**kw)

    def policies(self) -> List[str]:
        names = [p.strip() for p in str(self["run"]["policies"]).split(",") if p.strip()]
        if not names:
            raise ConfigError("[run] policies: empty list")
        for n in names:
            if n not in POLICY_NAMES or n == "mdp_table":
                raise ConfigError(f"[run] policies: unknown policy {n!r}")
        return names

    def seeds(self) -> List[int]:
        n = self["run"]["seeds"]
        if n < 1:
            raise ConfigError("[run] seeds must be >= 1")
        base = self["run"]["seed"]
        return [base + k for k in range(n)]


def resolve_config_path(path: str) -> str:
    """Accept a file path or the name of a shipped preset."""
    if os.path.isfile(path):
        return path
    cand = os.path.join(_PRESET_DIR, path if path.endswith(".ini") else path + ".ini")
    if os.path.isfile(cand):
        return cand
    raise ConfigError(f"config file not found: {path}")


def load_experiment(path: str, overrides: Sequence[str] = (), out_dir: str = ".",
                    jobs: int = 1, seed: Optional[int] = None) -> Experiment:
    """Parse ``path``, apply ``section.key=value`` overrides, then validate."""
    path = resolve_config_path(path)
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    raw: Dict[str, Dict[str, str]] = {s: {} for s in SCHEMA}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{path}: unknown section [{section}]")
        for key, value in cp.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"{path}: [{section}] unknown key {key!r}")
            raw[section][key] = value
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set {item!r}: expected key=value")
        key, value = (s.strip() for s in item.split("=", 1))
        if "." in key:
            section, name = key.split(".", 1)
            if section not in SCHEMA or name not in SCHEMA[section]:
                raise ConfigError(f"--set {item!r}: no such key")
        else:
            owners = [s for s in SCHEMA if key in SCHEMA[s]]
            if len(owners) != 1:
                what = "no such key" if not owners else f"ambiguous, use one of " + ", ".join(
                    f"{s}.{key}" for s in owners)
                raise ConfigError(f"--set {item!r}: {what}")
            section, name = owners[0], key
        raw[section][name] = value
    if seed is not None:
        raw["run"]["seed"] = str(seed)

    values = {}
    for section, keys in SCHEMA.items():
        values[section] = {}
        for key, (kind, default) in keys.items():
            if key in raw[section]:
                v = _parse_value(kind, raw[section][key], f"[{section}] {key}")
            else:
                v = default
            values[section][key] = v
    config_id = values["meta"]["id"] or os.path.splitext(os.path.basename(path))[0]
    exp = Experiment(values, config_id, out_dir, max(1, int(jobs)), path)
    exp.system()  # validate system constants now
    return exp


def parse_grid(text: str) -> List[float]:
    """``"a:b:n"`` gives ``n`` evenly spaced points; otherwise a comma list."""
    text = text.strip()
    if not text:
        return []
    try:
        if ":" in text:
            a, b, n = text.split(":")
            n = int(n)
            if n < 1:
                return []
            return [float(v) for v in np.linspace(float(a), float(b), n)]
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"[sweep] values: cannot parse {text!r}") from None


def midway_lambda(alpha_bar: float) -> float:
    """Arrival rate halfway between the small-arrival and existence bounds."""
    th = regime_thresholds(SystemParams(alpha_bar=alpha_bar))
    return 0.5 * (exp_integral_e1(1.0 / alpha_bar) + th.existence_bound)


def grid_points(exp: Experiment) -> List[SystemParams]:
    """System parameters for each sweep point (one point when no sweep)."""
    sw = exp["sweep"]
    axis = sw["axis"]
    rule = sw["lambda_rule"]
    if rule not in ("fixed", "midway"):
        raise ConfigError(f"[sweep] lambda_rule: expected fixed or midway, got {rule!r}")
    if axis:
        if axis not in SWEEP_AXES:
            raise ConfigError(f"[sweep] axis: expected one of {', '.join(SWEEP_AXES)}")
        vals = parse_grid(sw["values"])
        if not vals:
            raise ConfigError("[sweep] values: empty grid")
        changes = [{axis: (int(v) if axis == "N" else v)} for v in vals]
    else:
        changes = [{}]
    points = []
    for ch in changes:
        p = exp.system(**ch)
        if rule == "midway":
            p = p.with_(lambda_bar=midway_lambda(p.alpha_bar))
        cap = exp["mdp"]["cap_multiple"]
        if cap is not None:
            p = p.with_(N_E=cap * p.alpha_bar * p.tau)
        points.append(p)
    return points


def check_feasible(params: SystemParams) -> None:
    if classify_regime(params) is Regime.Infeasible:
        th = regime_thresholds(params)
        raise CliError(
            f"infeasible: need lambda_bar < exp(1/x) E1(1/x) = {th.existence_bound:.6g} "
            f"(x = {th.x:.6g}), got lambda_bar = {params.lambda_bar:.6g}", EXIT_INFEASIBLE)


def _write_csv(path: str, columns: Sequence[str], rows: Sequence[dict]) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r.get(k, "")) for k in columns})


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def read_summary(path: str) -> List[dict]:
    """Re-read a CSV written by this module (numbers come back as floats)."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rec = {}
            for k, v in row.items():
                try:
                    rec[k] = float(v)
                except ValueError:
                    rec[k] = v
            out.append(rec)
    return out


# simulation runs -----------------------------------------------------------

@dataclass
class _Job:
    point: int
    params: SystemParams
    policy: str
    seed: int
    run: dict = field(default_factory=dict)
    trace_path: str = ""


def _run_job(job: _Job) -> dict:
    r = job.run
    cfg = SimConfig(
        job.params, job.policy, horizon=r["horizon"], warmup=r["warmup"], seed=job.seed,
        q0=r["q0"], e0=min(r["e0"], job.params.N_E), energy_scale=r["energy_scale"],
        energy_truncate=r["energy_truncate"], record_trace=bool(job.trace_path),
    )
    n_cp = max(2, r["checkpoints"])
    cps = np.linspace(cfg.horizon / n_cp, cfg.horizon, n_cp).astype(int)
    m, probe = run_with_probe(cfg, cps, r["slope_threshold"])
    if job.trace_path:
        _write_trace(job.trace_path, m.trace)
    p = job.params
    return {
        "policy": job.policy, "seed": job.seed, "lambda_bar": p.lambda_bar,
        "alpha_bar": p.alpha_bar, "tau": p.tau, "N_E": p.N_E,
        "avg_delay_s": m.avg_delay, "avg_queue": m.avg_queue, "avg_power_W": m.avg_power,
        "stability_verdict": probe.verdict, "point": job.point, "avg_rate": m.avg_rate,
        "cap_events": m.cap_events, "q2_slope": probe.slope,
    }


def _write_trace(path: str, trace: dict) -> None:
    cols = ["slot", "h2", "Q", "E", "p", "lambda", "alpha"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for row in zip(*(trace[c] for c in cols)):
            w.writerow([int(row[0])] + [repr(float(v)) for v in row[1:]])


def _run_all(jobs: List[_Job], n_workers: int) -> List[dict]:
    if n_workers <= 1 or len(jobs) <= 1:
        return [_run_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(_run_job, jobs))


def _aggregate(rows: List[dict]) -> None:
    groups: Dict[tuple, List[float]] = {}
    for r in rows:
        groups.setdefault((r["point"], r["policy"]), []).append(r["avg_delay_s"])
    for r in rows:
        d = np.asarray(groups[(r["point"], r["policy"])])
        r["delay_mean"] = float(d.mean())
        r["delay_stderr"] = float(d.std(ddof=1) / math.sqrt(d.size)) if d.size > 1 else 0.0


def _simulation_rows(exp: Experiment, points: List[SystemParams]) -> List[dict]:
    run = exp["run"]
    if not run["allow_infeasible"]:
        for p in points:
            check_feasible(p)
    policies, seeds = exp.policies(), exp.seeds()
    jobs = []
    for k, p in enumerate(points):
        for pol in policies:
            for s in seeds:
                trace = ""
                if run["trace"]:
                    trace = os.path.join(exp.out_dir,
                                         f"trace_{exp.config_id}_{k}_{pol}_{s}.csv")
                jobs.append(_Job(k, p, pol, s, run, trace))
    if run["trace"]:
        os.makedirs(exp.out_dir, exist_ok=True)
    rows = _run_all(jobs, exp.jobs)
    for r in rows:
        r["config_id"] = exp.config_id
    _aggregate(rows)
    return rows


def cmd_simulate(exp: Experiment) -> str:
    """Summary rows for every policy and seed at the configured point."""
    rows = _simulation_rows(exp, [exp.system()])
    path = os.path.join(exp.out_dir, f"summary_{exp.config_id}.csv")
    _write_csv(path, SWEEP_COLUMNS, rows)
    return path


def cmd_sweep(exp: Experiment) -> str:
    """Long-format rows over the ``[sweep]`` grid."""
    if not exp["sweep"]["axis"]:
        raise ConfigError("[sweep] axis: required for the sweep command")
    rows = _simulation_rows(exp, grid_points(exp))
    path = os.path.join(exp.out_dir, f"sweep_{exp.config_id}.csv")
    _write_csv(path, SWEEP_COLUMNS, rows)
    return path


# grid oracle -----------------------------------------------------------------

def _energy_pmf(exp: Experiment, params: SystemParams):
    scale = exp["run"]["energy_scale"] or params.alpha_bar / 10.0
    return poisson_energy_pmf(params.alpha_bar, scale, exp["run"]["energy_truncate"])


def _grid_spec(exp: Experiment, params: SystemParams) -> GridSpec:
    m = exp["mdp"]
    return GridSpec(q_max=m["q_max"], n_q=m["n_q"], n_e=m["n_e"], n_h=m["n_h"],
                    n_p=m["n_p"], energy_pmf=_energy_pmf(exp, params))


def _solution_path(exp: Experiment, k: int, n_points: int) -> str:
    explicit = exp["mdp"]["solution"]
    if explicit and n_points == 1:
        return explicit
    stem = explicit[:-4] if explicit.endswith(".csv") else (
        explicit or os.path.join(exp.out_dir, f"mdp_{exp.config_id}"))
    return f"{stem}_{k}.csv" if n_points > 1 else f"{stem}.csv"


MDP_COLUMNS = ["config_id", "point", "lambda_bar", "alpha_bar", "tau", "N_E", "q_max",
               "theta_star", "iterations", "span", "solution"]


def cmd_solve_mdp(exp: Experiment) -> str:
    """Solve the grid MDP at each point and export the tables."""
    points = grid_points(exp)
    for p in points:
        check_feasible(p)
    m = exp["mdp"]
    rows = []
    for k, p in enumerate(points):
        kernel = build_kernel(_grid_spec(exp, p), p)
        try:
            sol = relative_value_iteration(kernel, tol=m["tol"], max_iter=m["max_iter"],
                                           bias_every=m["bias_every"])
        except ConvergenceError as exc:
            raise CliError(str(exc), EXIT_CONFIG) from None
        sol.meta.update(config_id=exp.config_id, n_p=m["n_p"], N=p.N)
        path = _solution_path(exp, k, len(points))
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        sol.to_csv(path)
        rows.append({"config_id": exp.config_id, "point": k, "lambda_bar": p.lambda_bar,
                     "alpha_bar": p.alpha_bar, "tau": p.tau, "N_E": p.N_E,
                     "q_max": m["q_max"], "theta_star": sol.theta_star,
                     "iterations": sol.iterations, "span": sol.span, "solution": path})
    out = os.path.join(exp.out_dir, f"mdp_summary_{exp.config_id}.csv")
    _write_csv(out, MDP_COLUMNS, rows)
    return out


COMPARE_COLUMNS = ["config_id", "point", "lambda_bar", "alpha_bar", "tau", "N_E", "policy",
                   "cost", "theta_star", "loss_ratio", "boundary_mass"]
# stationary policies only: the dual baselines change while they learn
COMPARE_POLICIES = ("closed_form", "greedy")


def _check_match(meta: dict, params: SystemParams, exp: Experiment, path: str) -> None:
    m = exp["mdp"]
    want = {"lambda_bar": params.lambda_bar, "alpha_bar": params.alpha_bar,
            "N_E": params.N_E, "tau": params.tau, "q_max": m["q_max"],
            "n_q": m["n_q"], "n_e": m["n_e"], "n_h": m["n_h"], "n_p": m["n_p"]}
    for key, v in want.items():
        got = meta.get(key)
        if got is None or not math.isclose(float(got), float(v), rel_tol=1e-9, abs_tol=1e-12):
            raise CliError(f"{path}: {key} = {got!r} in the table but {v!r} in the config",
                           EXIT_MISMATCH)


def cmd_compare(exp: Experiment) -> str:
    """Loss ratio ``(cost - theta*) / theta*`` of each policy on the solved grid."""
    points = grid_points(exp)
    rows = []
    for k, p in enumerate(points):
        path = _solution_path(exp, k, len(points))
        if not os.path.isfile(path):
            raise CliError(f"{path}: no solution table; run solve-mdp first", EXIT_MISMATCH)
        sol = read_solution_csv(path)
        _check_match(sol.meta, p, exp, path)
        kernel = build_kernel(_grid_spec(exp, p), p)
        candidates = [("mdp_table", sol)] + [(n, make_policy(n, p)) for n in COMPARE_POLICIES]
        for name, pol in candidates:
            try:
                ev = evaluate_policy_on_grid(kernel, pol)
                cost, mass = ev.cost, ev.boundary_mass
            except ReducibleChainError:
                cost, mass = math.nan, math.nan
            theta = sol.theta_star
            rows.append({"config_id": exp.config_id, "point": k, "lambda_bar": p.lambda_bar,
                         "alpha_bar": p.alpha_bar, "tau": p.tau, "N_E": p.N_E,
                         "policy": name, "cost": cost, "theta_star": theta,
                         "loss_ratio": (cost - theta) / theta if theta > 0 else math.nan,
                         "boundary_mass": mass})
    out = os.path.join(exp.out_dir, f"compare_{exp.config_id}.csv")
    _write_csv(out, COMPARE_COLUMNS, rows)
    return out


# fluid model and reports -----------------------------------------------------

VCTS_COLUMNS = ["config_id", "policy", "lambda_bar", "alpha_bar", "tau", "N_E", "T", "dt",
                "total_cost", "L_final", "U_final", "trajectory"]


def _fluid_policy(exp: Experiment, params: SystemParams):
    v = exp["vcts"]
    name = v["policy"]
    if name == "closed_form":
        check_feasible(params)
        return closed_form_fluid_policy(params)
    if name == "threshold":
        return ThresholdFluidPolicy(v["e_low"], v["e_high"], v["p_on"], params.tau)
    if name == "constant":
        return ConstantPowerFluidPolicy(v["power"], params.tau)
    raise ConfigError(f"[vcts] policy: expected closed_form, threshold or constant, got {name!r}")


def cmd_vcts(exp: Experiment) -> str:
    """Integrate the fluid model and dump ``t, q, e, L, U``."""
    p = exp.system()
    v = exp["vcts"]
    dt = v["dt"] if v["dt"] is not None else p.tau / 10.0
    traj = integrate_vcts(p, _fluid_policy(exp, p), v["q0"], v["e0"], v["T"], dt)
    os.makedirs(exp.out_dir, exist_ok=True)
    tpath = os.path.join(exp.out_dir, f"vcts_{exp.config_id}.csv")
    traj.to_csv(tpath)
    row = {"config_id": exp.config_id, "policy": v["policy"], "lambda_bar": p.lambda_bar,
           "alpha_bar": p.alpha_bar, "tau": p.tau, "N_E": p.N_E, "T": v["T"], "dt": dt,
           "total_cost": total_cost(traj), "L_final": float(traj.L[-1]),
           "U_final": float(traj.U[-1]), "trajectory": tpath}
    out = os.path.join(exp.out_dir, f"vcts_summary_{exp.config_id}.csv")
    _write_csv(out, VCTS_COLUMNS, [row])
    return out


REGIME_COLUMNS = ["config_id", "lambda_bar", "alpha_bar", "tau", "N_E", "N", "regime", "x",
                  "small_arrival_bound", "existence_bound", "e_th", "e_star", "rate_margin",
                  "storage_margin", "stable", "note"]


def regime_report(params: SystemParams, energy_pmf=None) -> dict:
    """Regime tag, thresholds and both stability margins for ``params``."""
    th = regime_thresholds(params)
    regime = classify_regime(params)
    try:
        e_th = solve_e_threshold(params.lambda_bar, params.tau) if params.lambda_bar > 0 \
            else math.nan
    except (InfeasibleError, ValueError):
        e_th = math.nan
    rep = stability_check(params, energy_pmf)
    note = rep.note
    if regime is Regime.Infeasible:
        note = (f"lambda_bar >= exp(1/x) E1(1/x) = {th.existence_bound:.6g}; "
                "no stabilizing water level exists")
    elif not rep.storage_ok and rep.storage_margin is not None:
        note = f"N_E < N e* (short by {-rep.storage_margin:.6g} J)"
    return {
        "lambda_bar": params.lambda_bar, "alpha_bar": params.alpha_bar, "tau": params.tau,
        "N_E": params.N_E, "N": params.N, "regime": regime.value, "x": th.x,
        "small_arrival_bound": th.small_arrival_bound, "existence_bound": th.existence_bound,
        "e_th": e_th, "e_star": math.nan if rep.e_star is None else rep.e_star,
        "rate_margin": rep.rate_margin,
        "storage_margin": math.nan if rep.storage_margin is None else rep.storage_margin,
        "stable": rep.ok, "note": note,
    }


def cmd_regimes(exp: Experiment, stream=None) -> str:
    """Print and write one report line per grid point."""
    stream = stream or sys.stdout
    rows = []
    for p in grid_points(exp):
        r = regime_report(p, _energy_pmf(exp, p))
        r["config_id"] = exp.config_id
        rows.append(r)
        print(f"{exp.config_id}: lambda_bar={p.lambda_bar:.6g} alpha_bar={p.alpha_bar:.6g} "
              f"regime={r['regime']} x={r['x']:.6g} e_th={r['e_th']:.6g} "
              f"e*={r['e_star']:.6g} rate_margin={r['rate_margin']:.6g} "
              f"storage_margin={r['storage_margin']:.6g} stable={r['stable']}"
              + (f" ({r['note']})" if r["note"] else ""), file=stream)
    out = os.path.join(exp.out_dir, f"regimes_{exp.config_id}.csv")
    _write_csv(out, REGIME_COLUMNS, rows)
    return out


HANDLERS = {
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "solve-mdp": cmd_solve_mdp,
    "compare": cmd_compare,
    "vcts": cmd_vcts,
    "regimes": cmd_regimes,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="ehopt", description="Power control experiments for an energy-harvesting link.",
        epilog="exit codes: 0 ok, 2 config error, 3 infeasible, 4 table/config mismatch")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True,
                    help="INI file, or the name of a shipped preset (e.g. fig7)")
    ap.add_argument("--set", dest="overrides", action="append", default=[],
                    metavar="KEY=VALUE", help="override, e.g. system.lambda_bar=1.82")
    ap.add_argument("--out", default=".", help="output directory")
    ap.add_argument("--jobs", type=int, default=1, help="parallel simulation workers")
    ap.add_argument("--seed", type=int, default=None, help="base seed (overrides run.seed)")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        exp = load_experiment(args.config, args.overrides, args.out, args.jobs, args.seed)
        path = HANDLERS[args.command](exp)
    except CliError as exc:
        print(f"ehopt: {exc}", file=sys.stderr)
        return exc.code
    except InfeasibleError as exc:
        print(f"ehopt: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ConfigError as exc:
        print(f"ehopt: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
