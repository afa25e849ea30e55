import numpy as np
import pytest

from jcc_sched import netdata, usets


def truncate_inputs(inputs, horizon, start=0):
    """A `horizon`-step window of a full-day input block."""
    end = start + horizon
    return netdata.TimeSeriesInputs(
        horizon=horizon, dt_hours=inputs.dt_hours,
        theta_out=inputs.theta_out[start:end],
        heat_load=inputs.heat_load[:, start:end],
        base_p=inputs.base_p[:, start:end],
        base_q=inputs.base_q[:, start:end],
        drg_nominal=inputs.drg_nominal[:, start:end],
        price_buy=inputs.price_buy[start:end],
        price_sell=inputs.price_sell[start:end])


@pytest.fixture(scope="session")
def ieee13():
    return netdata.load_case(netdata.bundled_case_path("ieee13"))


@pytest.fixture(scope="session")
def ieee13_hetero():
    return netdata.load_case(netdata.bundled_case_path("ieee13_hetero"))


@pytest.fixture(scope="session")
def short_problem(ieee13):
    """Six midday steps of the bundled case (renewables active) plus samples."""
    net, inputs = ieee13
    horizon = 6
    cfg = usets.SamplerConfig(family="beta", horizon=horizon,
                              dim=len(net.drg_buses), n_samples=250, seed=7)
    return (net, truncate_inputs(inputs, horizon, start=9),
            usets.generate_samples(cfg))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
