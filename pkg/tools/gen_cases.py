"""Generate the bundled 13-bus cases (homogeneous and heterogeneous).

Topology is a 13-bus radial feeder: trunk 0-1-6, laterals 1-2-3, 1-4-5,
6-7, 6-8-{9,10}, 6-11-12. Renewable sites sit at the far laterals (3, 12)
so that forecast errors move both voltage rise and trunk flows. Series are
smooth synthetic day profiles: hot afternoon, midday solar bell, an
evening price spike peaking at hour 18.

Run from the repo root:  python3 tools/gen_cases.py
"""

import json
import math
from pathlib import Path

import numpy as np

OUT_DIR = Path(__file__).resolve().parent.parent / "src" / "jcc_sched" / "cases"

HORIZON = 24

# child bus -> (parent, r, x) in p.u. on 1 MVA
BRANCHES = {
    1: (0, 0.008, 0.012),
    2: (1, 0.007, 0.007),
    3: (2, 0.008, 0.006),
    4: (1, 0.006, 0.006),
    5: (4, 0.005, 0.004),
    6: (1, 0.007, 0.011),
    7: (6, 0.004, 0.004),
    8: (6, 0.006, 0.005),
    9: (8, 0.005, 0.004),
    10: (8, 0.006, 0.005),
    11: (6, 0.007, 0.006),
    12: (11, 0.008, 0.006),
}

DRG = {3: 1.6, 12: 1.9}   # bus -> midday peak availability, MW

V_MIN_SQ = 0.95 ** 2
V_MAX_SQ = 1.05 ** 2
S_MAX = 2.0


def series():
    t = np.arange(HORIZON)
    theta_out = 29.5 + 4.5 * np.cos(2 * np.pi * (t - 15) / 24)

    price_buy = np.full(HORIZON, 40.0)
    price_buy[0:7] = 30.0
    price_buy[7:17] = 50.0
    price_buy[[17, 18, 19, 20]] = (110.0, 120.0, 110.0, 80.0)
    price_sell = np.round(0.3 * price_buy, 6)

    solar = np.where((t >= 6) & (t <= 18),
                     np.sin(np.pi * (t - 6) / 12.0), 0.0).clip(min=0.0)
    daybump = np.where((t >= 7) & (t <= 21),
                       np.sin(np.pi * (t - 7) / 14.0), 0.0).clip(min=0.0)

    base_p = {}
    base_q = {}
    for bus in BRANCHES:
        level = 0.03 + 0.01 * (bus % 3)
        prof = level + 0.02 * daybump
        base_p[str(bus)] = np.round(prof, 6).tolist()
        base_q[str(bus)] = np.round(0.3 * prof, 6).tolist()

    heat_load = {}
    for bus in BRANCHES:
        occ = np.where((t >= 8) & (t <= 18), 0.06, 0.0)
        prof = 0.02 + occ + 0.005 * (bus % 3)
        heat_load[str(bus)] = np.round(prof, 6).tolist()

    drg = {str(bus): np.round(peak * solar, 6).tolist()
           for bus, peak in DRG.items()}
    return {
        "theta_out": np.round(theta_out, 6).tolist(),
        "price_buy": price_buy.tolist(),
        "price_sell": price_sell.tolist(),
        "base_p": base_p,
        "base_q": base_q,
        "heat_load": heat_load,
        "drg_nominal": drg,
    }


def buses():
    out = [{"id": 0, "parent": None, "v_min_sq": V_MIN_SQ, "v_max_sq": V_MAX_SQ}]
    for bus, (parent, r, x) in sorted(BRANCHES.items()):
        out.append({"id": bus, "parent": parent, "r": r, "x": x,
                    "v_min_sq": V_MIN_SQ, "v_max_sq": V_MAX_SQ,
                    "s_max": S_MAX})
    return out


def buildings_homogeneous():
    return [{"bus": bus, "heat_capacity": 1.0, "thermal_resistance": 20.0,
             "cop": 3.6, "power_factor": 0.98, "p_max": 0.5,
             "theta_lo": 24.0, "theta_hi": 28.0, "theta_init": 28.0}
            for bus in sorted(BRANCHES)]


def buildings_heterogeneous():
    rng = np.random.default_rng(42)
    out = []
    for bus in sorted(BRANCHES):
        out.append({
            "bus": bus,
            "heat_capacity": round(float(rng.uniform(0.8, 1.2)), 4),
            "thermal_resistance": round(float(rng.uniform(15.0, 25.0)), 4),
            "cop": round(float(rng.uniform(3.0, 4.0)), 4),
            "power_factor": round(float(rng.uniform(0.95, 0.99)), 4),
            "p_max": 0.5,
            "theta_lo": 24.0, "theta_hi": 28.0, "theta_init": 28.0,
        })
    return out


def case(name, bldgs):
    return {
        "schema_version": 1,
        "name": name,
        "s_base_mva": 1.0,
        "u_slack_sq": 1.0,
        "dt_hours": 1.0,
        "horizon": HORIZON,
        "buses": buses(),
        "drg_buses": sorted(DRG),
        "buildings": bldgs,
        "series": series(),
    }


def main():
    OUT_DIR.mkdir(parents=True, exist_ok=True)
    for name, bldgs in (("ieee13", buildings_homogeneous()),
                        ("ieee13_hetero", buildings_heterogeneous())):
        path = OUT_DIR / f"{name}.json"
        path.write_text(json.dumps(case(name, bldgs), indent=1))
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
