"""Post-solution checks: empirical risk, renewable utilization, set sizes.

The scheduler guarantees feasibility over its uncertainty set; this module
measures what that buys against actual samples: the fraction of forecast
error draws under which the fixed schedule would breach a voltage band or
a branch apparent-power cap, the share of available renewable energy the
schedule accepts, and Monte Carlo areas of 2-D uncertainty sets.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .distflow import build_sensitivity
from .netdata import NetworkModel, SampleSet, TimeSeriesInputs
from .scheduler import ScheduleSolution
from .usets import membership, outer_bounds

PHYSICAL_TOL = 1e-7

REPORT_COLUMNS = [
    "case", "family", "method", "eps", "status", "cost", "utilization",
    "max_violation_train", "max_violation_holdout", "solve_seconds",
    "n_vars", "n_rows", "backend",
]


@dataclass(frozen=True)
class ViolationReport:
    """Per-timestep empirical probability of breaching any network limit."""

    label: str
    per_t: np.ndarray
    half_width: np.ndarray   # 95% binomial half-widths
    n_samples: int

    @property
    def max_over_t(self):
        return float(self.per_t.max())

    @property
    def argmax_t(self):
        return int(self.per_t.argmax())


def violation_probability(network: NetworkModel, inputs: TimeSeriesInputs,
                          solution: ScheduleSolution, samples: SampleSet,
                          label="holdout", tol=PHYSICAL_TOL) -> ViolationReport:
    """Fraction of samples under which the schedule breaks a network limit.

    A sample counts as a violation when any bus voltage leaves its band or
    any branch exceeds its apparent-power cap (joint check, tolerance
    `tol` in the respective physical units).
    """
    sens = build_sensitivity(network)
    drg_rows = np.array([sens.bus_ids.index(b) for b in network.drg_buses])
    n_bus = len(sens.bus_ids)
    horizon = inputs.horizon
    per_t = np.empty(horizon)
    n = samples.n_samples
    bus_b = {bus: b for bus, b in
             ((bld.bus, i) for i, bld in enumerate(network.buildings))}
    tan_phi = np.array([np.sqrt(1.0 - b.power_factor ** 2) / b.power_factor
                        for b in network.buildings])
    for t in range(horizon):
        p_fix = -inputs.base_p[1:, t].copy()
        q_fix = -inputs.base_q[1:, t].copy()
        for row, bus in enumerate(sens.bus_ids):
            b = bus_b.get(bus)
            if b is not None:
                p_fix[row] -= solution.p_hvac[b, t]
                q_fix[row] -= tan_phi[b] * solution.p_hvac[b, t]
        accepted = inputs.drg_nominal[:, t] * solution.lam[:, t]
        p_fix[drg_rows] += accepted

        delta = accepted[:, None] * samples.xi[t].T          # (D, N)
        p_all = np.repeat(p_fix[:, None], n, axis=1)
        p_all[drg_rows] += delta
        u_sq = sens.u_slack_sq + sens.volt_p @ p_all + sens.volt_q @ q_fix[:, None]
        p_flow = -sens.downstream @ p_all
        q_flow = -sens.downstream @ q_fix
        s_flow = np.hypot(p_flow, q_flow[:, None])
        bad = (
            (u_sq > sens.v_max_sq[:, None] + tol).any(axis=0)
            | (u_sq < sens.v_min_sq[:, None] - tol).any(axis=0)
            | (s_flow > sens.s_max[:, None] + tol).any(axis=0)
        )
        per_t[t] = bad.mean()
    half = 1.96 * np.sqrt(per_t * (1.0 - per_t) / n)
    return ViolationReport(label=label, per_t=per_t, half_width=half, n_samples=n)


def utilization_rate(inputs: TimeSeriesInputs, solution: ScheduleSolution):
    """Accepted share of the nominally available renewable energy."""
    available = inputs.drg_nominal.sum()
    if available <= 0:
        return 0.0
    return float((inputs.drg_nominal * solution.lam).sum() / available)


def set_area_2d(uset, n_points=20000, seed=0, bounds=None):
    """Monte Carlo area of a 2-D set; returns (area, standard error)."""
    if bounds is None:
        lo, hi = outer_bounds(uset)
    else:
        lo, hi = (np.asarray(b, dtype=float) for b in bounds)
    if lo.size != 2:
        raise ValueError("area estimation needs a 2-D set")
    span = hi - lo
    rect = float(span.prod())
    rng = np.random.default_rng(seed)
    pts = lo + rng.random((n_points, 2)) * span
    frac = membership(uset, pts).mean()
    area = rect * frac
    se = rect * np.sqrt(frac * (1.0 - frac) / n_points)
    return float(area), float(se)


def run_record(case, family, method, eps, solution: ScheduleSolution,
               utilization, train_report: ViolationReport | None,
               holdout_report: ViolationReport | None):
    """Flat dict for one pipeline run, ready for run_report."""
    rec = {
        "case": case, "family": family, "method": method, "eps": eps,
        "status": solution.status, "cost": solution.cost,
        "utilization": utilization,
        "solve_seconds": solution.solve_seconds,
        "n_vars": solution.build_info.get("n_vars"),
        "n_rows": solution.build_info.get("n_rows"),
        "backend": solution.backend,
    }
    if train_report is not None:
        rec["max_violation_train"] = train_report.max_over_t
        rec["violation_train_per_t"] = train_report.per_t.tolist()
    if holdout_report is not None:
        rec["max_violation_holdout"] = holdout_report.max_over_t
        rec["violation_holdout_per_t"] = holdout_report.per_t.tolist()
        rec["violation_holdout_half_width"] = holdout_report.half_width.tolist()
    return rec


def run_report(records, csv_path=None, json_path=None):
    """Write run records as a stable-column CSV and/or a full JSON dump."""
    if csv_path is not None:
        with Path(csv_path).open("w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS,
                                    extrasaction="ignore")
            writer.writeheader()
            for rec in records:
                writer.writerow({k: rec.get(k, "") for k in REPORT_COLUMNS})
    if json_path is not None:
        Path(json_path).write_text(json.dumps({"runs": list(records)}, indent=1))
    return records
