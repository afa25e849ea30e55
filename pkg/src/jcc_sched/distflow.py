"""Linearized power flow for radial networks (lossless branch-flow model).

On a tree, the active power on a branch equals minus the sum of net
injections in the subtree below it, and squared voltage magnitude drops
along the path from the slack in proportion to branch r and x. Both maps
are linear in the injections, so we precompute dense sensitivity matrices
once per case and reuse them for every timestep and every constraint.

Sign convention: injections are positive into the network, branch flow is
positive from parent to child, and the grid exchange at the slack is
positive when importing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .netdata import NetworkModel


@dataclass(frozen=True)
class FlowSensitivity:
    """Dense linear maps from bus injections to flows and voltages.

    Branches are keyed by their child bus; ``bus_ids`` lists the non-slack
    buses in id order and fixes the row/column order of every array here.
    ``downstream[b, k]`` is 1 when bus ``bus_ids[k]`` lies in the subtree
    under branch ``b`` (equivalently: branch b is on the path from the
    slack to that bus).

    Flows:      P = -downstream @ p,  Q = -downstream @ q
    Voltages:   u = u_slack_sq + volt_p @ p + volt_q @ q   (squared, p.u.^2)
    Exchange:   g = -sum(p)          (positive = import)
    """

    bus_ids: tuple[int, ...]
    downstream: np.ndarray
    r: np.ndarray
    x: np.ndarray
    s_max: np.ndarray
    volt_p: np.ndarray
    volt_q: np.ndarray
    u_slack_sq: float
    v_min_sq: np.ndarray
    v_max_sq: np.ndarray


def build_sensitivity(network: NetworkModel) -> FlowSensitivity:
    """Precompute flow/voltage sensitivities for one radial network."""
    children = [b for b in network.buses if b.parent is not None]
    bus_ids = tuple(b.id for b in children)
    index = {bid: k for k, bid in enumerate(bus_ids)}
    n = len(children)

    # downstream[b, k] = 1 iff branch b lies on the slack->bus_ids[k] path
    downstream = np.zeros((n, n), dtype=float)
    by_id = {b.id: b for b in network.buses}
    for k, bid in enumerate(bus_ids):
        cur = bid
        while cur != 0:
            downstream[index[cur], k] = 1.0
            cur = by_id[cur].parent

    r = np.array([b.r for b in children])
    x = np.array([b.x for b in children])
    s_max = np.array([b.s_max for b in children])
    # u_j = u_slack - 2 * sum over path branches of (r*P + x*Q), and
    # P = -downstream @ p, so the two minus signs cancel.
    volt_p = 2.0 * downstream.T @ (r[:, None] * downstream)
    volt_q = 2.0 * downstream.T @ (x[:, None] * downstream)

    return FlowSensitivity(
        bus_ids=bus_ids,
        downstream=downstream,
        r=r, x=x, s_max=s_max,
        volt_p=volt_p, volt_q=volt_q,
        u_slack_sq=network.u_slack_sq,
        v_min_sq=np.array([b.v_min_sq for b in children]),
        v_max_sq=np.array([b.v_max_sq for b in children]),
    )


def branch_flows(sens: FlowSensitivity, p_inj, q_inj):
    """Active/reactive branch flows for injection vectors (or (n,T) stacks)."""
    return -sens.downstream @ np.asarray(p_inj), -sens.downstream @ np.asarray(q_inj)


def voltages_sq(sens: FlowSensitivity, p_inj, q_inj):
    """Squared voltage magnitude at every non-slack bus."""
    return sens.u_slack_sq + sens.volt_p @ np.asarray(p_inj) + sens.volt_q @ np.asarray(q_inj)


def grid_exchange(p_inj):
    """Slack import (positive) balancing the given injections."""
    return -np.sum(np.asarray(p_inj), axis=0)
