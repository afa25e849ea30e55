"""Static problem data: network topology, buildings, time series, and samples.

A "case" is one JSON document bundling the radial network, the buildings
attached to its buses, and all exogenous time series (outdoor temperature,
base loads, renewable forecasts, prices). Historical forecast-error samples
live in a separate CSV (long format ``t,node,value``) so the same case can
be paired with different uncertainty datasets.

Everything here is immutable after loading and safe to share across workers.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CaseFormatError, SampleFormatError, TopologyError

SCHEMA_VERSION = 1

SLACK_ID = 0


@dataclass(frozen=True)
class Bus:
    """One bus plus the branch connecting it to its parent.

    ``parent`` is None only for the slack bus. ``r``/``x`` are the branch
    impedance in p.u. on the case's MVA base; ``s_max`` is the branch
    apparent-power cap in MVA. Voltage bounds are squared, in p.u.^2.
    """

    id: int
    parent: int | None
    r: float
    x: float
    v_min_sq: float
    v_max_sq: float
    s_max: float

    def __post_init__(self):
        if self.parent is not None:
            if self.r < 0 or self.x < 0:
                raise CaseFormatError("branch impedance must be nonnegative",
                                      field="r/x", row=self.id)
            if self.s_max <= 0:
                raise CaseFormatError("s_max must be positive",
                                      field="s_max", row=self.id)
        if not self.v_min_sq < self.v_max_sq:
            raise CaseFormatError("need v_min_sq < v_max_sq",
                                  field="v_min_sq", row=self.id)


@dataclass(frozen=True)
class Building:
    """Thermal and electrical parameters of one HVAC-equipped building."""

    bus: int
    heat_capacity: float        # MWh/degC
    thermal_resistance: float   # degC/MW
    cop: float
    power_factor: float
    p_max: float                # MW
    theta_lo: float             # degC
    theta_hi: float
    theta_init: float

    def __post_init__(self):
        if self.heat_capacity <= 0 or self.thermal_resistance <= 0:
            raise CaseFormatError("heat_capacity and thermal_resistance must be positive",
                                  field="heat_capacity/thermal_resistance", row=self.bus)
        if self.cop <= 0:
            raise CaseFormatError("cop must be positive", field="cop", row=self.bus)
        if not 0 < self.power_factor <= 1:
            raise CaseFormatError("power_factor must lie in (0, 1]",
                                  field="power_factor", row=self.bus)
        if self.p_max <= 0:
            raise CaseFormatError("p_max must be positive", field="p_max", row=self.bus)
        if not self.theta_lo < self.theta_hi:
            raise CaseFormatError("need theta_lo < theta_hi", field="theta_lo", row=self.bus)
        if not self.theta_lo <= self.theta_init <= self.theta_hi:
            raise CaseFormatError("theta_init outside comfort band",
                                  field="theta_init", row=self.bus)


@dataclass(frozen=True)
class NetworkModel:
    """Validated radial network with attached buildings and DRG nodes.

    Buses are stored in id order with the slack bus first; ``branches`` lists
    the child-bus id of every branch (parent is ``bus.parent``), in bus-id
    order. ``drg_buses`` fixes the uncertainty-dimension ordering: dimension
    ``d`` of every sample vector refers to ``drg_buses[d]``.
    """

    name: str
    s_base_mva: float
    u_slack_sq: float
    buses: tuple[Bus, ...]
    drg_buses: tuple[int, ...]
    buildings: tuple[Building, ...]

    @property
    def n_buses(self):
        return len(self.buses)

    @property
    def branches(self):
        """Child-bus ids, one per branch."""
        return tuple(b.id for b in self.buses if b.parent is not None)

    @property
    def n_branches(self):
        return self.n_buses - 1

    def bus_index(self, bus_id):
        for k, b in enumerate(self.buses):
            if b.id == bus_id:
                return k
        raise KeyError(bus_id)


@dataclass(frozen=True)
class TimeSeriesInputs:
    """All exogenous series over the horizon, aligned with the network.

    Shapes: ``theta_out``/prices are (T,); ``heat_load`` is
    (n_buildings, T) in building order; ``base_p``/``base_q`` are
    (n_buses, T) in bus order (slack row included, normally zero);
    ``drg_nominal`` is (D, T) in ``drg_buses`` order.
    """

    horizon: int
    dt_hours: float
    theta_out: np.ndarray
    heat_load: np.ndarray
    base_p: np.ndarray
    base_q: np.ndarray
    drg_nominal: np.ndarray
    price_buy: np.ndarray
    price_sell: np.ndarray


@dataclass(frozen=True)
class SampleSet:
    """Per-timestep realizations of the relative DRG forecast error.

    ``xi[t]`` is an (N, D) matrix; dimension d follows the case's
    ``drg_buses`` order. All timesteps carry the same N.
    """

    dim: int
    xi: tuple[np.ndarray, ...] = field(repr=False)

    def __post_init__(self):
        for t, mat in enumerate(self.xi):
            if mat.ndim != 2 or mat.shape[1] != self.dim:
                raise SampleFormatError(f"t={t}: expected (N, {self.dim}) matrix, got {mat.shape}")
            if mat.shape[0] < self.dim + 1:
                raise SampleFormatError(f"t={t}: need at least D+1 samples, got {mat.shape[0]}")
            if not np.all(np.isfinite(mat)):
                raise SampleFormatError(f"t={t}: non-finite sample values")
            if np.any(mat < -1.0):
                raise SampleFormatError(f"t={t}: sample below -1 (available power would be negative)")

    @property
    def horizon(self):
        return len(self.xi)

    @property
    def n_samples(self):
        return self.xi[0].shape[0]


def _require(obj, key, kind, field_name):
    if key not in obj:
        raise CaseFormatError(f"missing required key {key!r}", field=field_name)
    val = obj[key]
    if kind is float and isinstance(val, (int, float)) and not isinstance(val, bool):
        return float(val)
    if kind is int and isinstance(val, int) and not isinstance(val, bool):
        return val
    if kind in (list, dict) and isinstance(val, kind):
        return val
    if kind is str and isinstance(val, str):
        return val
    raise CaseFormatError(f"key {key!r} has wrong type (expected {kind.__name__})",
                          field=field_name)


def _validate_tree(buses):
    """Every bus must reach the slack by parent links; report any cycle."""
    by_id = {b.id: b for b in buses}
    if SLACK_ID not in by_id or by_id[SLACK_ID].parent is not None:
        raise TopologyError("slack bus (id 0) missing or has a parent")
    state = {}  # id -> "done" | "active"
    for b in buses:
        path = []
        cur = b.id
        while True:
            if state.get(cur) == "done":
                break
            if cur in path:
                cycle = path[path.index(cur):] + [cur]
                raise TopologyError("parent links contain a cycle", cycle=cycle)
            path.append(cur)
            parent = by_id[cur].parent
            if parent is None:
                break
            if parent not in by_id:
                raise CaseFormatError("parent references unknown bus",
                                      field="parent", row=cur)
            cur = parent
        for node in path:
            state[node] = "done"


def _series_vector(raw, horizon, field_name):
    arr = np.asarray(raw, dtype=float)
    if arr.shape != (horizon,):
        raise CaseFormatError(f"series must have length {horizon}, got {arr.shape}",
                              field=field_name)
    if not np.all(np.isfinite(arr)):
        raise CaseFormatError("series contains non-finite values", field=field_name)
    return arr


def _series_map(raw, keys, horizon, field_name, default=0.0):
    """Stack per-id series into an array in `keys` order, filling absentees."""
    out = np.full((len(keys), horizon), default, dtype=float)
    known = {str(k) for k in keys}
    for key in raw:
        if key not in known:
            raise CaseFormatError(f"series for unknown id {key}", field=field_name)
    for i, k in enumerate(keys):
        if str(k) in raw:
            out[i] = _series_vector(raw[str(k)], horizon, f"{field_name}[{k}]")
    return out


def load_case(path):
    """Load and validate a case file.

    Returns (NetworkModel, TimeSeriesInputs). Raises CaseFormatError on
    schema problems and TopologyError if the parent links are not a tree.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise CaseFormatError(f"not valid JSON: {exc}") from exc
    version = _require(doc, "schema_version", int, "schema_version")
    if version != SCHEMA_VERSION:
        raise CaseFormatError(f"unsupported schema_version {version} (expected {SCHEMA_VERSION})",
                              field="schema_version")

    name = _require(doc, "name", str, "name")
    s_base = _require(doc, "s_base_mva", float, "s_base_mva")
    u_slack = _require(doc, "u_slack_sq", float, "u_slack_sq")
    dt = _require(doc, "dt_hours", float, "dt_hours")
    horizon = _require(doc, "horizon", int, "horizon")
    if s_base <= 0 or dt <= 0 or horizon < 1:
        raise CaseFormatError("s_base_mva, dt_hours and horizon must be positive",
                              field="s_base_mva/dt_hours/horizon")

    buses = []
    seen = set()
    for k, raw in enumerate(_require(doc, "buses", list, "buses")):
        bid = _require(raw, "id", int, f"buses[{k}].id")
        if bid in seen:
            raise CaseFormatError("duplicate bus id", field="buses.id", row=bid)
        seen.add(bid)
        parent = raw.get("parent")
        if parent is not None and (not isinstance(parent, int) or isinstance(parent, bool)):
            raise CaseFormatError("parent must be a bus id", field="parent", row=bid)
        if parent is not None and parent == bid:
            raise TopologyError("bus is its own parent", cycle=[bid, bid])
        buses.append(Bus(
            id=bid,
            parent=parent,
            r=float(raw.get("r", 0.0)),
            x=float(raw.get("x", 0.0)),
            v_min_sq=_require(raw, "v_min_sq", float, f"buses[{k}].v_min_sq"),
            v_max_sq=_require(raw, "v_max_sq", float, f"buses[{k}].v_max_sq"),
            s_max=float(raw.get("s_max", 0.0)) if parent is not None else 0.0,
        ))
    buses.sort(key=lambda b: b.id)
    _validate_tree(buses)
    slack = buses[0]
    if not slack.v_min_sq <= u_slack <= slack.v_max_sq:
        raise CaseFormatError("u_slack_sq outside the slack bus voltage band",
                              field="u_slack_sq")

    bus_ids = {b.id for b in buses}
    drg_buses = tuple(_require(doc, "drg_buses", list, "drg_buses"))
    if len(set(drg_buses)) != len(drg_buses):
        raise CaseFormatError("duplicate DRG bus", field="drg_buses")
    for b in drg_buses:
        if b not in bus_ids:
            raise CaseFormatError("DRG at unknown bus", field="drg_buses", row=b)
        if b == SLACK_ID:
            raise CaseFormatError("DRG at the slack bus is not supported",
                                  field="drg_buses", row=b)

    buildings = []
    for k, raw in enumerate(_require(doc, "buildings", list, "buildings")):
        bus = _require(raw, "bus", int, f"buildings[{k}].bus")
        if bus not in bus_ids or bus == SLACK_ID:
            raise CaseFormatError("building at unknown or slack bus",
                                  field="buildings.bus", row=bus)
        buildings.append(Building(
            bus=bus,
            heat_capacity=_require(raw, "heat_capacity", float, f"buildings[{k}].heat_capacity"),
            thermal_resistance=_require(raw, "thermal_resistance", float,
                                        f"buildings[{k}].thermal_resistance"),
            cop=_require(raw, "cop", float, f"buildings[{k}].cop"),
            power_factor=_require(raw, "power_factor", float, f"buildings[{k}].power_factor"),
            p_max=_require(raw, "p_max", float, f"buildings[{k}].p_max"),
            theta_lo=_require(raw, "theta_lo", float, f"buildings[{k}].theta_lo"),
            theta_hi=_require(raw, "theta_hi", float, f"buildings[{k}].theta_hi"),
            theta_init=_require(raw, "theta_init", float, f"buildings[{k}].theta_init"),
        ))

    network = NetworkModel(
        name=name, s_base_mva=s_base, u_slack_sq=u_slack,
        buses=tuple(buses), drg_buses=drg_buses, buildings=tuple(buildings),
    )

    series = _require(doc, "series", dict, "series")
    theta_out = _series_vector(_require(series, "theta_out", list, "theta_out"),
                               horizon, "theta_out")
    price_buy = _series_vector(_require(series, "price_buy", list, "price_buy"),
                               horizon, "price_buy")
    price_sell = _series_vector(_require(series, "price_sell", list, "price_sell"),
                                horizon, "price_sell")
    if np.any(price_sell < 0) or np.any(price_buy < price_sell):
        raise CaseFormatError("prices must satisfy price_buy >= price_sell >= 0 "
                              "(keeps the buy/sell split exact in a minimization)",
                              field="price_buy/price_sell")
    heat_load = _series_map(_require(series, "heat_load", dict, "heat_load"),
                            [b.bus for b in buildings], horizon, "heat_load")
    base_p = _series_map(_require(series, "base_p", dict, "base_p"),
                         [b.id for b in buses], horizon, "base_p")
    base_q = _series_map(series.get("base_q", {}),
                         [b.id for b in buses], horizon, "base_q")
    drg_nominal = _series_map(_require(series, "drg_nominal", dict, "drg_nominal"),
                              list(drg_buses), horizon, "drg_nominal")
    if np.any(drg_nominal < 0):
        raise CaseFormatError("drg_nominal must be nonnegative", field="drg_nominal")

    inputs = TimeSeriesInputs(
        horizon=horizon, dt_hours=dt, theta_out=theta_out, heat_load=heat_load,
        base_p=base_p, base_q=base_q, drg_nominal=drg_nominal,
        price_buy=price_buy, price_sell=price_sell,
    )
    return network, inputs


def save_samples(samples: SampleSet, path):
    """Write a SampleSet as long-format CSV with columns t,node,value."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "node", "value"])
        for t, mat in enumerate(samples.xi):
            for n in range(mat.shape[0]):
                for d in range(samples.dim):
                    writer.writerow([t, d, repr(float(mat[n, d]))])


def load_samples(path, dim=None):
    """Read long-format sample CSV back into a SampleSet.

    Sample order within each (t, node) group is the file order, so
    save_samples -> load_samples is the identity. ``dim`` (when given)
    is checked against the number of node columns found.
    """
    path = Path(path)
    groups: dict[int, dict[int, list[float]]] = {}
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise SampleFormatError("empty sample file")
        if [h.strip() for h in header] != ["t", "node", "value"]:
            raise SampleFormatError(f"expected header t,node,value, got {header}")
        count = 0
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise SampleFormatError(f"line {row_no}: expected 3 columns, got {len(row)}")
            try:
                t, node, value = int(row[0]), int(row[1]), float(row[2])
            except ValueError as exc:
                raise SampleFormatError(f"line {row_no}: {exc}") from exc
            groups.setdefault(t, {}).setdefault(node, []).append(value)
            count += 1
    if count == 0:
        raise SampleFormatError("sample file has a header but no rows")

    horizon = max(groups) + 1
    if sorted(groups) != list(range(horizon)):
        raise SampleFormatError("timestep indices are not contiguous from 0")
    nodes = sorted(groups[0])
    found_dim = len(nodes)
    if nodes != list(range(found_dim)):
        raise SampleFormatError("node indices are not contiguous from 0")
    if dim is not None and found_dim != dim:
        raise SampleFormatError(f"expected {dim} node columns, found {found_dim}")

    mats = []
    for t in range(horizon):
        if sorted(groups[t]) != nodes:
            raise SampleFormatError(f"t={t}: node set differs from t=0")
        cols = [groups[t][d] for d in range(found_dim)]
        lengths = {len(c) for c in cols}
        if len(lengths) != 1:
            raise SampleFormatError(f"t={t}: ragged node columns {sorted(lengths)}")
        mats.append(np.column_stack(cols))
    lengths = {m.shape[0] for m in mats}
    if len(lengths) != 1:
        raise SampleFormatError(f"sample counts differ across timesteps: {sorted(lengths)}")
    return SampleSet(dim=found_dim, xi=tuple(mats))


def bundled_case_path(name):
    """Path of a case shipped with the package (e.g. 'ieee13')."""
    here = Path(__file__).parent / "cases" / f"{name}.json"
    if not here.exists():
        raise FileNotFoundError(f"no bundled case named {name!r}")
    return here
