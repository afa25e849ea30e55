"""Day-ahead scheduling problem: assembly and solution extraction.

One conic program covers the whole horizon: HVAC powers and renewable
acceptance fractions are the physical decisions, grid purchase/sale close
the energy balance, and auxiliary flow bounds tie the robust branch
constraints to the apparent-power cone caps. The uncertain network members
are reformulated per the chosen uncertainty-set method by `robust`.

The objective prices the slack exchange at the per-timestep sample mean of
the forecast error, so reported cost is the expected-exchange cost while
feasibility is enforced robustly.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import robust, svc, thermal, usets
from .distflow import build_sensitivity
from .errors import ConfigError, SolverError
from .netdata import NetworkModel, SampleSet, TimeSeriesInputs
from .solvers import ConicProgram

METHODS = ("svc", "box", "hull", "bonferroni")

SCENARIO_DELTA = 1e-3


def n_master_vars(network: NetworkModel, horizon):
    """First-stage decision count (used in the scenario-count rule)."""
    n_b = len(network.buildings)
    n_d = len(network.drg_buses)
    n_br = network.n_branches
    return horizon * (n_b + n_d + 2 + 2 * n_br)


def _build_layout(prog: ConicProgram, network: NetworkModel,
                  inputs: TimeSeriesInputs) -> robust.Layout:
    horizon = inputs.horizon
    buildings = network.buildings
    p_hvac = np.empty((len(buildings), horizon), dtype=np.int64)
    tan_phi = np.empty(len(buildings))
    bus_building = {}
    for b, bld in enumerate(buildings):
        p_hvac[b] = prog.add_var_block(horizon, lo=0.0, hi=bld.p_max,
                                       name=f"p_hvac[{bld.bus}]")
        pf = bld.power_factor
        tan_phi[b] = math.sqrt(1.0 - pf * pf) / pf
        bus_building[bld.bus] = b
    lam = np.empty((len(network.drg_buses), horizon), dtype=np.int64)
    for d, bus in enumerate(network.drg_buses):
        lam[d] = prog.add_var_block(horizon, lo=0.0, hi=1.0, name=f"lam[{bus}]")
    g_buy = prog.add_var_block(horizon, lo=0.0, name="g_buy")
    g_sell = prog.add_var_block(horizon, lo=0.0, name="g_sell")
    sens = build_sensitivity(network)
    n_br = network.n_branches
    p_aux = np.empty((n_br, horizon), dtype=np.int64)
    q_aux = np.empty((n_br, horizon), dtype=np.int64)
    for row, bus in enumerate(sens.bus_ids):
        p_aux[row] = prog.add_var_block(horizon, lo=0.0, hi=sens.s_max[row],
                                        name=f"p_aux[{bus}]")
        q_aux[row] = prog.add_var_block(horizon, lo=0.0, hi=sens.s_max[row],
                                        name=f"q_aux[{bus}]")
    return robust.Layout(p_hvac=p_hvac, lam=lam, g_buy=g_buy, g_sell=g_sell,
                         p_aux=p_aux, q_aux=q_aux, bus_building=bus_building,
                         tan_phi=tan_phi)


def bonferroni_z(eps, n_members):
    """Per-member amplification factor for splitting the joint risk evenly.

    Uses the one-sided distribution-free moment bound sqrt((1-e)/e) at the
    per-member risk e = eps/M: it guarantees the individual chance
    constraint for any distribution with the sample moments, which is what
    makes this benchmark so conservative once M is large.
    """
    eps_m = eps / n_members
    if eps_m < 1e-12:
        warnings.warn(f"per-member risk {eps_m:.2e} below the practical range; "
                      "clamping at 1e-12")
        eps_m = 1e-12
    return float(math.sqrt((1.0 - eps_m) / eps_m))


def fit_sets(network: NetworkModel, inputs: TimeSeriesInputs,
             samples: SampleSet, method, eps, models=None,
             delta=SCENARIO_DELTA, seed=0):
    """Per-timestep uncertainty sets for a method, fitted from samples.

    The box and hull are fitted on a scenario subset whose size follows the
    classical scenario-count rule (capped at the available N); the
    classifier is trained per timestep unless pre-trained models are given.
    """
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r} (choose from {METHODS})")
    if method == "svc":
        if models is not None:
            if len(models) != inputs.horizon:
                raise ConfigError(f"expected {inputs.horizon} models, got {len(models)}")
            return list(models)
        return [svc.train(samples.xi[t], eps) for t in range(inputs.horizon)]
    if method == "bonferroni":
        return [usets.fit_moments(samples.xi[t]) for t in range(inputs.horizon)]
    count = usets.scenario_count(eps, delta, n_master_vars(network, inputs.horizon))
    subset = usets.select_scenarios(samples, min(count, samples.n_samples), seed)
    if method == "box":
        return [usets.fit_box(subset.xi[t]) for t in range(inputs.horizon)]
    return [usets.reduce_vertices(usets.fit_hull(subset.xi[t]))
            for t in range(inputs.horizon)]


def assemble(network: NetworkModel, inputs: TimeSeriesInputs, method, sets,
             xi_mean, eps=None, presolve=False):
    """Build the full-horizon program. Returns (program, layout, info).

    xi_mean is a (D, T) matrix of per-timestep sample means used in the
    energy balance and hence the objective. `presolve` drops members that
    variable bounds alone already satisfy (never applied to the Gaussian
    benchmark, whose uncertainty is unbounded).
    """
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r} (choose from {METHODS})")
    if method == "bonferroni" and eps is None:
        raise ConfigError("the Gaussian benchmark needs eps to split the risk")
    horizon = inputs.horizon
    if len(sets) != horizon:
        raise ConfigError(f"expected one uncertainty set per timestep "
                          f"({horizon}), got {len(sets)}")
    xi_mean = np.asarray(xi_mean, dtype=float)
    sens = build_sensitivity(network)
    prog = ConicProgram()
    layout = _build_layout(prog, network, inputs)

    dt = inputs.dt_hours
    obj_cols = np.concatenate([layout.g_buy, layout.g_sell])
    obj_vals = np.concatenate([dt * inputs.price_buy, -dt * inputs.price_sell])
    prog.set_objective(obj_cols, obj_vals)

    # energy balance at the expected forecast error
    gbar = inputs.drg_nominal
    base_nonslack = inputs.base_p[1:].sum(axis=0)
    for t in range(horizon):
        cols = np.concatenate([[layout.g_buy[t], layout.g_sell[t]],
                               layout.p_hvac[:, t], layout.lam[:, t]])
        vals = np.concatenate([[1.0, -1.0],
                               -np.ones(layout.p_hvac.shape[0]),
                               gbar[:, t] * (1.0 + xi_mean[:, t])])
        prog.add_eq_row(cols, vals, base_nonslack[t], tag=f"balance@t{t}")

    # comfort band via the unrolled temperature recursion
    tril_r, tril_c = np.tril_indices(horizon)
    for b, bld in enumerate(network.buildings):
        const, gain = thermal.unroll_constraints(
            bld, dt, inputs.theta_out, inputs.heat_load[b])
        entries = gain[tril_r, tril_c]
        cols = layout.p_hvac[b][tril_c]
        prog.add_ineq_rows(tril_r, cols, entries,
                           bld.theta_hi - const, tag=f"theta_hi[{bld.bus}]")
        prog.add_ineq_rows(tril_r, cols, -entries,
                           const - bld.theta_lo, tag=f"theta_lo[{bld.bus}]")

    # branch apparent-power caps on the auxiliary flow bounds
    for row, bus in enumerate(sens.bus_ids):
        for t in range(horizon):
            prog.add_soc([
                (np.empty(0, dtype=np.int64), np.empty(0), sens.s_max[row]),
                (np.array([layout.p_aux[row, t]]), np.array([1.0]), 0.0),
                (np.array([layout.q_aux[row, t]]), np.array([1.0]), 0.0),
            ], tag=f"s_cap[{bus}]@t{t}")

    n_members = 0
    n_dropped = 0
    n_groups = 0
    z_val = None
    if method == "bonferroni":
        z_val = bonferroni_z(eps, robust.members_per_step(network))
    var_lo, var_hi = prog.var_bounds()
    for t in range(horizon):
        members = robust.network_members(network, sens, inputs, layout, t)
        n_members += len(members)
        if presolve and method != "bonferroni":
            xi_lo, xi_hi = usets.outer_bounds(sets[t])
            members, dropped = robust.interval_slack_filter(
                members, var_lo, var_hi, xi_lo, xi_hi)
            n_dropped += len(dropped)
        if method == "hull":
            for m in members:
                robust.add_hull_member(prog, m, sets[t])
        elif method == "bonferroni":
            cov_sqrt = sets[t].cov_sqrt
            for m in members:
                robust.add_bonferroni_member(prog, m, sets[t], z_val, cov_sqrt)
        else:
            groups = robust.group_by_h(members)
            n_groups += len(groups)
            for group in groups:
                if method == "svc":
                    robust.add_svc_group(prog, group, sets[t])
                else:
                    robust.add_box_group(prog, group, sets[t])
    info = {"n_members": n_members, "n_dropped": n_dropped,
            "n_groups": n_groups, "n_vars": prog.n_vars, "n_rows": prog.n_rows}
    return prog, layout, info


@dataclass
class ScheduleSolution:
    """Solved schedule with the physical decision trajectories."""

    method: str
    eps: float
    status: str
    cost: float
    p_hvac: np.ndarray        # (B, T) MW
    lam: np.ndarray           # (D, T) acceptance fractions
    g_buy: np.ndarray         # (T,) MW
    g_sell: np.ndarray        # (T,)
    p_aux: np.ndarray         # (n_branch, T)
    q_aux: np.ndarray         # (n_branch, T)
    temperatures: np.ndarray  # (B, T) degC at the end of each step
    solve_seconds: float
    iterations: int
    backend: str
    build_info: dict = field(default_factory=dict)

    def to_dict(self):
        doc = {
            "kind": "schedule-solution",
            "method": self.method, "eps": self.eps, "status": self.status,
            "cost": self.cost, "solve_seconds": self.solve_seconds,
            "iterations": self.iterations, "backend": self.backend,
            "build_info": self.build_info,
        }
        for name in ("p_hvac", "lam", "g_buy", "g_sell", "p_aux", "q_aux",
                     "temperatures"):
            doc[name] = getattr(self, name).tolist()
        return doc

    @classmethod
    def from_dict(cls, doc):
        if doc.get("kind") != "schedule-solution":
            raise ValueError("not a schedule solution document")
        arrays = {name: np.array(doc[name], dtype=float)
                  for name in ("p_hvac", "lam", "g_buy", "g_sell", "p_aux",
                               "q_aux", "temperatures")}
        return cls(method=doc["method"], eps=float(doc["eps"]),
                   status=doc["status"], cost=float(doc["cost"]),
                   solve_seconds=float(doc["solve_seconds"]),
                   iterations=int(doc["iterations"]), backend=doc["backend"],
                   build_info=dict(doc.get("build_info", {})), **arrays)

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def solve_schedule(network: NetworkModel, inputs: TimeSeriesInputs, method,
                   sets, xi_mean, eps=None, presolve=False,
                   backend="auto", **solver_options) -> ScheduleSolution:
    """Assemble, solve, and unpack one schedule."""
    prog, layout, info = assemble(network, inputs, method, sets, xi_mean,
                                  eps=eps, presolve=presolve)
    sol = prog.solve(backend=backend, **solver_options)
    rel = abs(sol.objective - sol.solver_objective) / (1.0 + abs(sol.objective))
    if rel > 1e-6:
        raise SolverError(f"objective re-evaluation mismatch: recomputed "
                          f"{sol.objective:.9g} vs reported "
                          f"{sol.solver_objective:.9g}")
    x = sol.x
    p_hvac = x[layout.p_hvac]
    temps = np.empty_like(p_hvac)
    for b, bld in enumerate(network.buildings):
        const, gain = thermal.unroll_constraints(
            bld, inputs.dt_hours, inputs.theta_out, inputs.heat_load[b])
        temps[b] = const + gain @ p_hvac[b]
    return ScheduleSolution(
        method=method, eps=float(eps) if eps is not None else float("nan"),
        status=sol.status, cost=sol.objective,
        p_hvac=p_hvac, lam=x[layout.lam],
        g_buy=x[layout.g_buy], g_sell=x[layout.g_sell],
        p_aux=x[layout.p_aux], q_aux=x[layout.q_aux],
        temperatures=temps, solve_seconds=sol.solve_seconds,
        iterations=sol.iterations, backend=sol.backend, build_info=info)


def schedule_from_samples(network, inputs, samples: SampleSet, method, eps,
                          models=None, presolve=False, seed=0,
                          backend="auto", **solver_options):
    """Fit the chosen sets from samples and solve the schedule."""
    if samples.horizon != inputs.horizon:
        raise ConfigError(f"samples cover {samples.horizon} steps, "
                          f"case has {inputs.horizon}")
    if samples.dim != len(network.drg_buses):
        raise ConfigError(f"samples have {samples.dim} dims, case has "
                          f"{len(network.drg_buses)} renewable sites")
    sets = fit_sets(network, inputs, samples, method, eps, models=models,
                    seed=seed)
    xi_mean = np.stack([samples.xi[t].mean(axis=0)
                        for t in range(inputs.horizon)], axis=1)
    sol = solve_schedule(network, inputs, method, sets, xi_mean, eps=eps,
                         presolve=presolve, backend=backend, **solver_options)
    return sol, sets
