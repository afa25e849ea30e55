"""First-order RC building model and its unrolled linear form.

Indoor temperature follows a discrete-time RC circuit: each step mixes the
previous indoor temperature with the outdoor temperature, internal heat
gains, and HVAC cooling. Because the recursion is linear, the whole horizon
unrolls into an affine map from the HVAC power vector to the temperature
vector, which is what the scheduler embeds as constraints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .netdata import Building


@dataclass(frozen=True)
class ThermalCoeffs:
    """Discrete-time coefficients of one building's temperature recursion.

    theta_t = a_in*theta_{t-1} + a_out*theta_out_{t-1} + a_h*h_{t-1} + a_q*p_{t-1}

    a_in + a_out = 1 by construction (convex mix of indoor and ambient);
    a_q < 0 because HVAC power removes heat (cooling).
    """

    a_in: float
    a_out: float
    a_h: float
    a_q: float

    def __post_init__(self):
        if not 0 < self.a_in < 1:
            raise ValueError(f"a_in must lie in (0, 1), got {self.a_in}")
        if abs(self.a_in + self.a_out - 1.0) > 1e-12:
            raise ValueError("a_in + a_out must equal 1")


def coeffs(building: Building, dt_hours: float) -> ThermalCoeffs:
    """Exact zero-order-hold discretization of the RC model."""
    if dt_hours <= 0:
        raise ValueError("dt_hours must be positive")
    rc = building.thermal_resistance * building.heat_capacity
    a_in = math.exp(-dt_hours / rc)
    a_out = 1.0 - a_in
    a_h = building.thermal_resistance * a_out
    a_q = -building.cop * a_h
    return ThermalCoeffs(a_in=a_in, a_out=a_out, a_h=a_h, a_q=a_q)


def step_temperature(c: ThermalCoeffs, theta_in, theta_out, heat_gain, p_hvac):
    """One step of the recursion. Accepts scalars or aligned arrays."""
    return (c.a_in * np.asarray(theta_in)
            + c.a_out * np.asarray(theta_out)
            + c.a_h * np.asarray(heat_gain)
            + c.a_q * np.asarray(p_hvac))


def reactive_power(building: Building, p_hvac):
    """HVAC reactive draw implied by operating at fixed power factor."""
    pf = building.power_factor
    return math.sqrt(1.0 - pf * pf) / pf * np.asarray(p_hvac)


def unroll_constraints(building: Building, dt_hours, theta_out, heat_gain):
    """Affine map from the HVAC power vector to indoor temperatures.

    Returns (const, gain) with theta = const + gain @ p, where p stacks the
    HVAC powers over the horizon and theta[t] is the temperature at the end
    of step t. gain is lower triangular: power at step s only influences
    temperatures from step s onward.
    """
    theta_out = np.asarray(theta_out, dtype=float)
    heat_gain = np.asarray(heat_gain, dtype=float)
    if theta_out.shape != heat_gain.shape or theta_out.ndim != 1:
        raise ValueError("theta_out and heat_gain must be equal-length vectors")
    horizon = theta_out.shape[0]
    c = coeffs(building, dt_hours)

    const = np.empty(horizon)
    prev = building.theta_init
    for t in range(horizon):
        prev = c.a_in * prev + c.a_out * theta_out[t] + c.a_h * heat_gain[t]
        const[t] = prev

    # gain[t, s] = a_q * a_in^(t-s) for s <= t
    powers = c.a_q * np.power(c.a_in, np.arange(horizon))
    gain = np.zeros((horizon, horizon))
    for t in range(horizon):
        gain[t, :t + 1] = powers[t::-1]
    return const, gain
