"""Robust counterparts of the uncertain network constraints.

Every network limit (voltage band, branch active/reactive flow cap) at
timestep t has the form

    max over xi in U_t of  (H xi)' y  <=  beta(y)

where y is the full decision vector, beta is affine in y, and H couples
the forecast error xi with the acceptance variables lambda: row d of H' y
is  coef_d * lambda_{t,d}. This module enumerates those members for a
case, then emits, per uncertainty-set type, rows into a ConicProgram that
are exactly equivalent to the robust constraint:

  * classifier set: the LP dual of maximizing over the lifted polyhedral
    description of {score <= gamma} (auxiliary duals rho, mu, pi);
  * box: dual of a box-constrained LP (split variables z+, z-);
  * hull: one row per stored vertex (the max over a polytope sits at a
    vertex);
  * Gaussian moments: a second-order-cone bound per member at the
    per-member risk level (no joint guarantee, used as a benchmark).

Members whose H is identical (bitwise) at the same timestep share one set
of dual variables: the dual objective value certifies every budget row at
once, so deduplication changes nothing but the program size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distflow import FlowSensitivity
from .netdata import NetworkModel, TimeSeriesInputs
from .solvers import ConicProgram
from .svc import SvcModel
from .usets import Box, Hull, Moments


@dataclass(frozen=True)
class AffExpr:
    """Affine expression const + sum coefs * y[cols]."""

    const: float
    cols: np.ndarray
    coefs: np.ndarray


class _Acc:
    """Accumulator for building affine expressions term by term."""

    def __init__(self, const=0.0):
        self.const = const
        self.terms = {}

    def add(self, col, coef):
        if coef != 0.0:
            self.terms[col] = self.terms.get(col, 0.0) + coef

    def add_scaled(self, expr_cols, expr_coefs, expr_const, scale):
        if scale == 0.0:
            return
        self.const += scale * expr_const
        for col, coef in zip(expr_cols, expr_coefs):
            self.add(col, scale * coef)

    def build(self):
        cols = np.fromiter(self.terms.keys(), dtype=np.int64, count=len(self.terms))
        coefs = np.fromiter(self.terms.values(), dtype=np.float64, count=len(self.terms))
        return AffExpr(const=self.const, cols=cols, coefs=coefs)


@dataclass(frozen=True)
class UncertainLinearConstraint:
    """One member  max_{xi in U_t} sum_k h_coefs[k]*xi[h_dims[k]]*y[h_cols[k]] <= beta."""

    tag: str
    t: int
    h_dims: np.ndarray    # xi dimension of each uncertain term
    h_cols: np.ndarray    # decision column of each uncertain term
    h_coefs: np.ndarray
    beta: AffExpr

    @property
    def certain(self):
        return self.h_coefs.size == 0


@dataclass(frozen=True)
class Layout:
    """Column indices of the master decision variables, plus building maps."""

    p_hvac: np.ndarray          # (B, T)
    lam: np.ndarray             # (D, T)
    g_buy: np.ndarray           # (T,)
    g_sell: np.ndarray          # (T,)
    p_aux: np.ndarray           # (n_branch, T)
    q_aux: np.ndarray           # (n_branch, T)
    bus_building: dict          # bus id -> building index
    tan_phi: np.ndarray         # (B,) reactive-to-active HVAC ratio


def members_per_step(network: NetworkModel):
    """Constraint members per timestep: 2 voltage bounds per bus plus
    4 flow bounds per branch."""
    return 2 * network.n_buses + 4 * network.n_branches


def _injection_exprs(network, sens, inputs, layout, t):
    """Per non-slack bus: affine p and q injections at xi = 0.

    Returned as parallel lists of (cols, coefs, const) triples in sens row
    order. The lambda coefficient carries the full nominal availability, so
    the uncertain part (handled by H) is purely the deviation term.
    """
    drg_row = {}
    for d, bus in enumerate(network.drg_buses):
        drg_row[bus] = d
    p_exprs = []
    q_exprs = []
    for row, bus in enumerate(sens.bus_ids):
        net_row = row + 1  # buses are id-sorted with the slack first
        cols_p = []
        coefs_p = []
        cols_q = []
        coefs_q = []
        b_idx = layout.bus_building.get(bus)
        if b_idx is not None:
            cols_p.append(layout.p_hvac[b_idx, t])
            coefs_p.append(-1.0)
            cols_q.append(layout.p_hvac[b_idx, t])
            coefs_q.append(-layout.tan_phi[b_idx])
        d = drg_row.get(bus)
        if d is not None:
            cols_p.append(layout.lam[d, t])
            coefs_p.append(inputs.drg_nominal[d, t])
        p_exprs.append((cols_p, coefs_p, -inputs.base_p[net_row, t]))
        q_exprs.append((cols_q, coefs_q, -inputs.base_q[net_row, t]))
    return p_exprs, q_exprs


def network_members(network: NetworkModel, sens: FlowSensitivity,
                    inputs: TimeSeriesInputs, layout: Layout, t):
    """All uncertain members of timestep t, in a fixed order.

    Order: upper voltage bound for every bus (slack first, then id order),
    lower voltage bounds likewise, then per branch the active-flow upper and
    lower and reactive-flow upper and lower members.
    """
    p_exprs, q_exprs = _injection_exprs(network, sens, inputs, layout, t)
    drg_rows = np.array([sens.bus_ids.index(b) for b in network.drg_buses])
    gbar = inputs.drg_nominal[:, t]
    dims = np.arange(len(network.drg_buses))
    members = []

    def _h(coefs_by_dim):
        keep = coefs_by_dim != 0.0
        return (dims[keep], layout.lam[keep, t], coefs_by_dim[keep])

    slack = network.buses[0]
    for sign, name in ((1.0, "u_hi"), (-1.0, "u_lo")):
        # slack bus voltage is fixed; the member is a constant row
        const = (slack.v_max_sq - network.u_slack_sq if sign > 0
                 else network.u_slack_sq - slack.v_min_sq)
        members.append(UncertainLinearConstraint(
            tag=f"{name}[{slack.id}]@t{t}", t=t,
            h_dims=np.empty(0, dtype=np.int64), h_cols=np.empty(0, dtype=np.int64),
            h_coefs=np.empty(0), beta=AffExpr(const, np.empty(0, dtype=np.int64),
                                              np.empty(0))))
        for row, bus in enumerate(sens.bus_ids):
            acc = _Acc(sens.v_max_sq[row] - sens.u_slack_sq if sign > 0
                       else sens.u_slack_sq - sens.v_min_sq[row])
            for k in range(len(sens.bus_ids)):
                cp, fp, kp = p_exprs[k]
                cq, fq, kq = q_exprs[k]
                acc.add_scaled(cp, fp, kp, -sign * sens.volt_p[row, k])
                acc.add_scaled(cq, fq, kq, -sign * sens.volt_q[row, k])
            h_dims, h_cols, h_coefs = _h(sign * sens.volt_p[row, drg_rows] * gbar)
            members.append(UncertainLinearConstraint(
                tag=f"{name}[{bus}]@t{t}", t=t,
                h_dims=h_dims, h_cols=h_cols, h_coefs=h_coefs, beta=acc.build()))

    for row, bus in enumerate(sens.bus_ids):
        down = sens.downstream[row]
        for sign, name in ((1.0, "p_hi"), (-1.0, "p_lo")):
            # sign*P - p_aux <= 0 with P = -sum(down * p_inj)
            acc = _Acc(0.0)
            acc.add(layout.p_aux[row, t], 1.0)
            for k in np.nonzero(down)[0]:
                cp, fp, kp = p_exprs[k]
                acc.add_scaled(cp, fp, kp, sign * down[k])
            h_dims, h_cols, h_coefs = _h(-sign * down[drg_rows] * gbar)
            members.append(UncertainLinearConstraint(
                tag=f"{name}[{bus}]@t{t}", t=t,
                h_dims=h_dims, h_cols=h_cols, h_coefs=h_coefs, beta=acc.build()))
        for sign, name in ((1.0, "q_hi"), (-1.0, "q_lo")):
            acc = _Acc(0.0)
            acc.add(layout.q_aux[row, t], 1.0)
            for k in np.nonzero(down)[0]:
                cq, fq, kq = q_exprs[k]
                acc.add_scaled(cq, fq, kq, sign * down[k])
            members.append(UncertainLinearConstraint(
                tag=f"{name}[{bus}]@t{t}", t=t,
                h_dims=np.empty(0, dtype=np.int64),
                h_cols=np.empty(0, dtype=np.int64),
                h_coefs=np.empty(0), beta=acc.build()))
    return members


def group_by_h(members):
    """Group members sharing a bitwise-identical uncertain part H.

    Only exact equality is merged, so sharing dual variables between the
    group's budget rows is exact: the worst-case value is one number and
    each budget row compares it against its own beta.
    """
    groups = {}
    for m in members:
        key = (m.h_dims.tobytes(), m.h_cols.tobytes(), m.h_coefs.tobytes())
        groups.setdefault(key, []).append(m)
    return list(groups.values())


def add_nominal_row(prog: ConicProgram, member):
    """H = 0: the member reduces to the deterministic row 0 <= beta(y)."""
    prog.add_ineq_row(member.beta.cols, -member.beta.coefs,
                      member.beta.const, tag=member.tag)


def add_svc_group(prog: ConicProgram, members, model: SvcModel):
    """Exact counterpart over the classifier set for one same-H group.

    Dual block (one per group): variables rho_n, mu_n >= 0 per support
    vector and pi >= 0, with

        sum_n (mu_n - rho_n)' W sv_n + pi*gamma <= beta_m(y)   (per member)
        sum_n W (rho_n - mu_n) + H' y = 0                      (per xi dim)
        rho_n + mu_n = pi * alpha_n                            (per n, dim)
    """
    lead = members[0]
    if lead.certain:
        for m in members:
            add_nominal_row(prog, m)
        return
    nsv, dim = model.sv.shape
    w = model.kernel.weights
    w_sv = (model.sv @ w.T).ravel()          # (Wsv_n)_e flattened n-major
    rho = prog.add_var_block(nsv * dim, lo=0.0)
    mu = prog.add_var_block(nsv * dim, lo=0.0)
    pi = prog.add_var(lo=0.0)

    for m in members:
        cols = np.concatenate([mu, rho, [pi], m.beta.cols])
        vals = np.concatenate([w_sv, -w_sv, [model.gamma], -m.beta.coefs])
        prog.add_ineq_row(cols, vals, m.beta.const, tag=m.tag)

    tag = f"dual-balance@{lead.tag}"
    for d in range(dim):
        w_row = np.tile(w[d], nsv)
        sel = lead.h_dims == d
        cols = np.concatenate([rho, mu, lead.h_cols[sel]])
        vals = np.concatenate([w_row, -w_row, lead.h_coefs[sel]])
        prog.add_eq_row(cols, vals, 0.0, tag=tag)

    rows = np.arange(nsv * dim)
    prog.add_eq_rows(
        np.concatenate([rows, rows, rows]),
        np.concatenate([rho, mu, np.full(nsv * dim, pi)]),
        np.concatenate([np.ones(nsv * dim), np.ones(nsv * dim),
                        -np.repeat(model.alpha, dim)]),
        np.zeros(nsv * dim), tag=f"dual-cap@{lead.tag}")


def add_box_group(prog: ConicProgram, members, box: Box):
    """Exact counterpart over a box for one same-H group.

    max over lo <= xi <= hi of xi'v equals min of hi'z+ - lo'z- subject to
    z+ - z- = v, z >= 0, so sharing z across the group's budget rows is
    exact for the same reason as the classifier block.
    """
    lead = members[0]
    if lead.certain:
        for m in members:
            add_nominal_row(prog, m)
        return
    dim = box.lo.size
    z_pos = prog.add_var_block(dim, lo=0.0)
    z_neg = prog.add_var_block(dim, lo=0.0)
    for m in members:
        cols = np.concatenate([z_pos, z_neg, m.beta.cols])
        vals = np.concatenate([box.hi, -box.lo, -m.beta.coefs])
        prog.add_ineq_row(cols, vals, m.beta.const, tag=m.tag)
    tag = f"dual-balance@{lead.tag}"
    for d in range(dim):
        sel = lead.h_dims == d
        cols = np.concatenate([[z_pos[d], z_neg[d]], lead.h_cols[sel]])
        vals = np.concatenate([[1.0, -1.0], -lead.h_coefs[sel]])
        prog.add_eq_row(cols, vals, 0.0, tag=tag)


def add_hull_member(prog: ConicProgram, member, hull: Hull):
    """One row per stored vertex: the max over a polytope sits at a vertex."""
    if member.certain:
        add_nominal_row(prog, member)
        return
    verts = hull.vertices
    nv = verts.shape[0]
    h_vals = verts[:, member.h_dims] * member.h_coefs          # (nv, |h|)
    b_vals = np.broadcast_to(-member.beta.coefs, (nv, member.beta.coefs.size))
    width = h_vals.shape[1] + b_vals.shape[1]
    entry_rows = np.repeat(np.arange(nv), width)
    cols = np.tile(np.concatenate([member.h_cols, member.beta.cols]), nv)
    vals = np.hstack([h_vals, b_vals]).ravel()
    prog.add_ineq_rows(entry_rows, cols, vals,
                       np.full(nv, member.beta.const), tag=member.tag)


def add_bonferroni_member(prog: ConicProgram, member, moments: Moments,
                          z_value, cov_sqrt=None):
    """Gaussian per-member bound as a second-order cone row.

    (H mean)'y + z * || cov^(1/2) H'y ||  <=  beta(y), assuming the
    uncertain term is normal with the sample moments.
    """
    if member.certain:
        add_nominal_row(prog, member)
        return
    if cov_sqrt is None:
        cov_sqrt = moments.cov_sqrt
    dim = moments.mean.size
    head_cols = np.concatenate([member.beta.cols, member.h_cols])
    head_vals = np.concatenate([member.beta.coefs,
                                -moments.mean[member.h_dims] * member.h_coefs])
    slots = [(head_cols, head_vals, member.beta.const)]
    for e in range(dim):
        vals = z_value * cov_sqrt[e, member.h_dims] * member.h_coefs
        slots.append((member.h_cols, vals, 0.0))
    prog.add_soc(slots, tag=member.tag)


def interval_slack_filter(members, var_lo, var_hi, xi_lo, xi_hi, safety=1e-9):
    """Split members into (kept, dropped) by interval arithmetic.

    A member is dropped only when the largest possible value of its
    uncertain term plus the largest possible shortfall of beta, over the
    variable bounds alone, still satisfies the constraint. Dropping such
    rows cannot change the feasible set, so the reformulation stays exact.
    """
    kept = []
    dropped = []
    for m in members:
        ub = 0.0
        ok = True
        for k in range(m.h_coefs.size):
            col = m.h_cols[k]
            lo_y, hi_y = var_lo[col], var_hi[col]
            if not (np.isfinite(lo_y) and np.isfinite(hi_y)):
                ok = False
                break
            d = m.h_dims[k]
            c = m.h_coefs[k]
            corners = [c * xi * y for xi in (xi_lo[d], xi_hi[d])
                       for y in (lo_y, hi_y)]
            ub += max(corners)
        if ok:
            lb_beta = m.beta.const
            for col, c in zip(m.beta.cols, m.beta.coefs):
                lo_y, hi_y = var_lo[col], var_hi[col]
                term = min(c * lo_y, c * hi_y)
                if not np.isfinite(term):
                    ok = False
                    break
                lb_beta += term
        if ok and ub <= lb_beta - safety * (1.0 + abs(lb_beta)):
            dropped.append(m)
        else:
            kept.append(m)
    return kept, dropped
