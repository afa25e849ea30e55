import json

import numpy as np
import numpy.testing as npt
import pytest

from jcc_sched import netdata
from jcc_sched.errors import CaseFormatError, SampleFormatError, TopologyError


def test_bundled_case_shapes(ieee13):
    net, inputs = ieee13
    assert net.n_buses == 13
    assert net.n_branches == 12
    assert net.drg_buses == (3, 12)
    assert len(net.buildings) == 12
    assert net.u_slack_sq == 1.0
    assert inputs.horizon == 24
    assert inputs.dt_hours == 1.0
    assert inputs.base_p.shape == (13, 24)
    assert inputs.drg_nominal.shape == (2, 24)
    assert inputs.heat_load.shape == (12, 24)
    # slack row carries no base load
    npt.assert_array_equal(inputs.base_p[0], 0.0)


def test_bundled_case_building_parameters(ieee13):
    net, _ = ieee13
    for bld in net.buildings:
        assert bld.heat_capacity == 1.0
        assert bld.thermal_resistance == 20.0
        assert bld.cop == 3.6
        assert bld.power_factor == 0.98
        assert bld.p_max == 0.5
        assert (bld.theta_lo, bld.theta_hi) == (24.0, 28.0)
        assert bld.theta_init == 28.0
    for bus in net.buses:
        assert bus.v_min_sq == pytest.approx(0.95 ** 2)
        assert bus.v_max_sq == pytest.approx(1.05 ** 2)


def test_hetero_case_parameters_vary(ieee13_hetero):
    net, _ = ieee13_hetero
    caps = np.array([b.heat_capacity for b in net.buildings])
    res = np.array([b.thermal_resistance for b in net.buildings])
    cops = np.array([b.cop for b in net.buildings])
    pfs = np.array([b.power_factor for b in net.buildings])
    assert np.all((caps >= 0.8) & (caps <= 1.2))
    assert np.all((res >= 15.0) & (res <= 25.0))
    assert np.all((cops >= 3.0) & (cops <= 4.0))
    assert np.all((pfs >= 0.95) & (pfs <= 0.99))
    assert len(set(caps)) > 1  # actually heterogeneous


def _dump_case(tmp_path, doc, name="case.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


@pytest.fixture
def case_doc():
    return json.loads(netdata.bundled_case_path("ieee13").read_text())


def test_cycle_in_parent_links(tmp_path, case_doc):
    # reroute bus 1 under bus 2 while 2 stays under 1
    for bus in case_doc["buses"]:
        if bus["id"] == 1:
            bus["parent"] = 2
    with pytest.raises(TopologyError) as err:
        netdata.load_case(_dump_case(tmp_path, case_doc))
    assert err.value.cycle is not None
    assert set(err.value.cycle) >= {1, 2}
    assert "->" in str(err.value)


def test_self_parent_is_a_cycle(tmp_path, case_doc):
    for bus in case_doc["buses"]:
        if bus["id"] == 7:
            bus["parent"] = 7
    with pytest.raises(TopologyError) as err:
        netdata.load_case(_dump_case(tmp_path, case_doc))
    assert err.value.cycle == [7, 7]


def test_missing_field_names_the_field(tmp_path, case_doc):
    del case_doc["buses"][3]["v_min_sq"]
    with pytest.raises(CaseFormatError) as err:
        netdata.load_case(_dump_case(tmp_path, case_doc))
    assert err.value.field == "buses[3].v_min_sq"


def test_sell_price_above_buy_rejected(tmp_path, case_doc):
    case_doc["series"]["price_sell"][5] = case_doc["series"]["price_buy"][5] + 1
    with pytest.raises(CaseFormatError):
        netdata.load_case(_dump_case(tmp_path, case_doc))


def test_negative_drg_nominal_rejected(tmp_path, case_doc):
    case_doc["series"]["drg_nominal"]["3"][4] = -0.2
    with pytest.raises(CaseFormatError):
        netdata.load_case(_dump_case(tmp_path, case_doc))


def test_building_init_outside_band_rejected(tmp_path, case_doc):
    case_doc["buildings"][0]["theta_init"] = 30.0
    with pytest.raises(CaseFormatError) as err:
        netdata.load_case(_dump_case(tmp_path, case_doc))
    assert err.value.field == "theta_init"


def test_sample_roundtrip_is_exact(tmp_path, rng):
    xi = tuple(rng.uniform(-0.8, 1.5, size=(17, 3)) for _ in range(5))
    samples = netdata.SampleSet(dim=3, xi=xi)
    path = tmp_path / "draw.csv"
    netdata.save_samples(samples, path)
    back = netdata.load_samples(path, dim=3)
    assert back.horizon == 5 and back.n_samples == 17
    for t in range(5):
        npt.assert_array_equal(back.xi[t], xi[t])


def test_sample_dim_mismatch(tmp_path, rng):
    samples = netdata.SampleSet(
        dim=2, xi=tuple(rng.uniform(-0.5, 0.5, (8, 2)) for _ in range(3)))
    path = tmp_path / "draw.csv"
    netdata.save_samples(samples, path)
    with pytest.raises(SampleFormatError):
        netdata.load_samples(path, dim=4)


def test_sample_file_validation(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(SampleFormatError):
        netdata.load_samples(empty)

    ragged = tmp_path / "ragged.csv"
    ragged.write_text("t,node,value\n0,0,0.1\n0,0\n")
    with pytest.raises(SampleFormatError):
        netdata.load_samples(ragged)

    bad_header = tmp_path / "header.csv"
    bad_header.write_text("a,b,c\n0,0,0.1\n")
    with pytest.raises(SampleFormatError):
        netdata.load_samples(bad_header)


def test_sampleset_rejects_bad_values(rng):
    with pytest.raises(SampleFormatError):
        netdata.SampleSet(dim=2, xi=(np.array([[0.0, -1.5]] * 4),))
    with pytest.raises(SampleFormatError):
        # fewer than dim+1 rows
        netdata.SampleSet(dim=2, xi=(np.zeros((2, 2)),))
    with pytest.raises(SampleFormatError):
        netdata.SampleSet(dim=2, xi=(np.full((4, 2), np.nan),))


def test_bundled_case_path_unknown_name():
    with pytest.raises(FileNotFoundError):
        netdata.bundled_case_path("no_such_case")
