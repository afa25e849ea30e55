import numpy as np
import numpy.testing as npt
import pytest

from jcc_sched import svc, usets
from jcc_sched.errors import ConfigError
from jcc_sched.netdata import SampleSet


def test_sampler_config_validation():
    with pytest.raises(ConfigError):
        usets.SamplerConfig(family="cauchy", horizon=4, dim=2, n_samples=10,
                            seed=0)
    with pytest.raises(ConfigError):
        usets.SamplerConfig(family="beta", horizon=0, dim=2, n_samples=10,
                            seed=0)
    with pytest.raises(ConfigError):
        usets.SamplerConfig(family="beta", horizon=4, dim=2, n_samples=2,
                            seed=0)


def test_sampler_determinism_and_shape():
    cfg = usets.SamplerConfig(family="weibull", horizon=5, dim=2,
                              n_samples=40, seed=3)
    a = usets.generate_samples(cfg)
    b = usets.generate_samples(cfg)
    assert a.horizon == 5 and a.n_samples == 40 and a.dim == 2
    for t in range(5):
        npt.assert_array_equal(a.xi[t], b.xi[t])
    # different timesteps are different draws
    assert not np.array_equal(a.xi[0], a.xi[1])


@pytest.mark.parametrize("family,mean,spread", [
    ("beta", 2.0 / 7.0 - 0.5, 0.160),   # sqrt(10/392)
    ("weibull", 0.0, 0.162),            # 0.35*sqrt(gamma(2)-gamma(1.5)^2)
    ("gaussian", 0.0, 0.15),
])
def test_sampler_family_moments(family, mean, spread):
    cfg = usets.SamplerConfig(family=family, horizon=4, dim=2,
                              n_samples=4000, seed=11)
    samples = usets.generate_samples(cfg)
    pooled = np.concatenate([m.ravel() for m in samples.xi])
    assert pooled.min() >= -1.0
    assert pooled.mean() == pytest.approx(mean, abs=0.02)
    assert pooled.std() == pytest.approx(spread, abs=0.03)


def test_scenario_count_reference():
    assert usets.scenario_count(0.05, 1e-3, 10) == 677
    with pytest.raises(ConfigError):
        usets.scenario_count(0.0, 1e-3, 10)
    with pytest.raises(ConfigError):
        usets.scenario_count(0.05, 1e-3, 0)


def test_select_scenarios(rng):
    xi = tuple(rng.normal(0.0, 0.3, (50, 2)) for _ in range(3))
    samples = SampleSet(dim=2, xi=xi)
    sub = usets.select_scenarios(samples, 20, seed=5)
    assert sub.n_samples == 20
    for t in range(3):
        # every selected row is one of the original rows
        for row in sub.xi[t]:
            assert (np.abs(xi[t] - row).sum(axis=1) < 1e-15).any()
    assert usets.select_scenarios(samples, 50, seed=5) is samples
    assert usets.select_scenarios(samples, 60, seed=5) is samples
    with pytest.raises(ConfigError):
        usets.select_scenarios(samples, 2, seed=5)


def test_box_and_moments_fit(rng):
    xi = rng.normal(0.1, 0.3, (80, 2))
    box = usets.fit_box(xi)
    npt.assert_array_equal(box.lo, xi.min(axis=0))
    npt.assert_array_equal(box.hi, xi.max(axis=0))

    mom = usets.fit_moments(xi)
    npt.assert_allclose(mom.mean, xi.mean(axis=0), atol=1e-12)
    npt.assert_allclose(mom.cov, np.cov(xi.T), atol=1e-12)
    npt.assert_allclose(mom.cov_sqrt @ mom.cov_sqrt, mom.cov, atol=1e-10)


def test_hull_reduction_preserves_membership(rng):
    xi = rng.normal(0.0, 0.4, (60, 2))
    raw = usets.fit_hull(xi)
    red = usets.reduce_vertices(raw)
    assert red.equations is not None
    assert red.vertices.shape[0] < raw.vertices.shape[0]
    # reduced facets and the LP fallback agree off the boundary
    pts = rng.uniform(-1.2, 1.2, (60, 2))
    fast = usets.membership(red, pts)
    slow = usets.membership(raw, pts)
    npt.assert_array_equal(fast, slow)
    # all defining points stay inside (facet-distance slack for vertices)
    assert usets.membership(red, xi, slack=1e-9).all()


def test_degenerate_hull_falls_back_to_lp():
    line = np.array([[t, 2.0 * t] for t in np.linspace(-1.0, 1.0, 9)])
    hull = usets.reduce_vertices(usets.fit_hull(line))
    assert hull.equations is None  # qhull cannot reduce a collinear cloud
    on = np.array([[0.25, 0.5]])
    off = np.array([[0.25, 0.6]])
    assert usets.membership(hull, on, slack=1e-9).all()
    assert not usets.membership(hull, off).any()


def test_box_membership_and_interior(rng):
    box = usets.Box(lo=np.array([-1.0, -2.0]), hi=np.array([3.0, 4.0]))
    assert usets.membership(box, np.array([[0.0, 0.0], [3.0, 4.0]])).all()
    assert not usets.membership(box, np.array([[3.1, 0.0]])).any()
    assert usets.membership(box, np.array([[3.05, 0.0]]), slack=0.1).all()
    center = usets.interior_point(box)
    npt.assert_allclose(center, [1.0, 1.0])
    lo, hi = usets.outer_bounds(box)
    npt.assert_array_equal(lo, box.lo)
    npt.assert_array_equal(hi, box.hi)


def test_membership_rejects_unknown_sets():
    with pytest.raises(TypeError):
        usets.membership(object(), np.zeros((1, 2)))
    with pytest.raises(TypeError):
        usets.interior_point("box")


def test_svc_outer_bounds_contain_the_set(rng):
    xi = rng.normal(0.0, 0.3, (120, 2))
    model = svc.train(xi, eps=0.1)
    lo, hi = usets.outer_bounds(model)
    ring = usets.trace_boundary_2d(model, n_rays=32)
    assert np.all(ring >= lo - 1e-9) and np.all(ring <= hi + 1e-9)
    inner = usets.interior_point(model)
    assert usets.membership(model, inner[None, :])[0]


def test_trace_boundary_on_a_box():
    box = usets.Box(lo=np.array([-1.0, -2.0]), hi=np.array([3.0, 4.0]))
    ring = usets.trace_boundary_2d(box, n_rays=48, tol=1e-8)
    assert ring.shape == (48, 2)
    inside = usets.membership(box, ring, slack=1e-6)
    assert inside.all()
    # every traced point hugs one of the four faces
    at_face = (
        np.isclose(ring[:, 0], -1.0, atol=1e-5)
        | np.isclose(ring[:, 0], 3.0, atol=1e-5)
        | np.isclose(ring[:, 1], -2.0, atol=1e-5)
        | np.isclose(ring[:, 1], 4.0, atol=1e-5)
    )
    assert at_face.all()


def test_trace_boundary_needs_two_dims():
    box = usets.Box(lo=np.zeros(3), hi=np.ones(3))
    with pytest.raises(ValueError):
        usets.trace_boundary_2d(box)
