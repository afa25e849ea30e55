"""Benchmark uncertainty sets and synthetic forecast-error sampling.

Alongside the learned classifier set this module provides the simpler sets
used for comparison: the axis-aligned bounding box, the convex hull of the
samples, and plain Gaussian moments for per-constraint probabilistic
bounds. It also generates the synthetic relative-forecast-error samples
(three distribution families) and implements the scenario-count rule used
to subsample before fitting the box and hull.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull as _QhullConvexHull
from scipy.spatial import QhullError

from .errors import ConfigError
from .netdata import SampleSet
from .svc import SvcModel

SAMPLE_FAMILIES = ("beta", "weibull", "gaussian")


@dataclass(frozen=True)
class SamplerConfig:
    """How to draw synthetic forecast-error samples (one family for all dims)."""

    family: str
    horizon: int
    dim: int
    n_samples: int
    seed: int

    def __post_init__(self):
        if self.family not in SAMPLE_FAMILIES:
            raise ConfigError(f"unknown sample family {self.family!r} "
                              f"(choose from {SAMPLE_FAMILIES})")
        if self.horizon < 1 or self.dim < 1 or self.n_samples < self.dim + 1:
            raise ConfigError("need horizon >= 1, dim >= 1, n_samples >= dim+1")


def _draw_family(rng, family, size):
    if family == "beta":
        # skewed, bounded: Beta(2,5) shifted to [-0.5, 0.5], mean 2/7 - 1/2
        return rng.beta(2.0, 5.0, size=size) - 0.5
    if family == "weibull":
        # heavy right tail; shifted so the mean is zero
        scale = 0.35
        shift = scale * math.gamma(1.5)
        return scale * rng.weibull(2.0, size=size) - shift
    # symmetric baseline
    return rng.normal(0.0, 0.15, size=size)


def generate_samples(config: SamplerConfig) -> SampleSet:
    """Draw fresh error samples for every timestep, independent across dims.

    Values below -1 (which would flip the sign of available power) are
    rejected and redrawn; a warning reports the rejection rate when it is
    large enough to bias the distribution noticeably.
    """
    rng = np.random.default_rng(config.seed)
    rejected = 0
    total = 0
    mats = []
    for _ in range(config.horizon):
        mat = _draw_family(rng, config.family, (config.n_samples, config.dim))
        total += mat.size
        bad = mat < -1.0
        while bad.any():
            rejected += int(bad.sum())
            total += int(bad.sum())
            mat[bad] = _draw_family(rng, config.family, int(bad.sum()))
            bad = mat < -1.0
        mats.append(mat)
    if total and rejected / total > 0.01:
        warnings.warn(f"rejected {rejected / total:.1%} of draws at the -1 floor; "
                      "the sampled distribution is noticeably truncated")
    return SampleSet(dim=config.dim, xi=tuple(mats))


def scenario_count(eps, delta, n_decision):
    """Number of scenarios that certifies eps-feasibility at confidence 1-delta.

    ceil((2/eps) * (ln(1/delta) + n_decision)); the caller caps it at the
    number of available samples.
    """
    if not 0 < eps < 1 or not 0 < delta < 1 or n_decision < 1:
        raise ConfigError("need eps, delta in (0,1) and n_decision >= 1")
    return math.ceil(2.0 / eps * (math.log(1.0 / delta) + n_decision))


def select_scenarios(samples: SampleSet, count, seed) -> SampleSet:
    """Uniform random subset of `count` samples per timestep (no replacement)."""
    if count >= samples.n_samples:
        return samples
    if count < samples.dim + 1:
        raise ConfigError(f"scenario count {count} below dim+1")
    rng = np.random.default_rng(seed)
    mats = tuple(mat[rng.choice(mat.shape[0], size=count, replace=False)]
                 for mat in samples.xi)
    return SampleSet(dim=samples.dim, xi=mats)


@dataclass(frozen=True)
class Box:
    """Axis-aligned box [lo, hi] per dimension."""

    lo: np.ndarray
    hi: np.ndarray


@dataclass(frozen=True)
class Hull:
    """Convex hull stored as its defining points.

    ``equations`` (outward facet normals [a, b] with a.x + b <= 0 inside)
    is filled by reduce_vertices and enables fast membership tests.
    """

    vertices: np.ndarray
    equations: np.ndarray | None = None


@dataclass(frozen=True)
class Moments:
    """Sample mean and covariance, for Gaussian per-constraint bounds."""

    mean: np.ndarray
    cov: np.ndarray

    @property
    def cov_sqrt(self):
        evals, evecs = np.linalg.eigh(self.cov)
        return evecs @ np.diag(np.sqrt(np.maximum(evals, 0.0))) @ evecs.T


def fit_box(xi) -> Box:
    """Smallest axis-aligned box containing every sample."""
    xi = np.asarray(xi, dtype=float)
    return Box(lo=xi.min(axis=0), hi=xi.max(axis=0))


def fit_hull(xi) -> Hull:
    """Convex hull of the samples, stored verbatim (every sample a vertex)."""
    return Hull(vertices=np.asarray(xi, dtype=float).copy())


def reduce_vertices(hull: Hull) -> Hull:
    """Keep only the extreme points (same set, far fewer rows downstream).

    Degenerate clouds (collinear in some dimension) are left unreduced;
    membership then falls back to a small LP per query point.
    """
    try:
        qh = _QhullConvexHull(hull.vertices)
    except QhullError:
        return hull
    return Hull(vertices=hull.vertices[qh.vertices].copy(),
                equations=qh.equations.copy())


def fit_moments(xi) -> Moments:
    xi = np.asarray(xi, dtype=float)
    return Moments(mean=xi.mean(axis=0), cov=np.atleast_2d(np.cov(xi.T)))


def _hull_membership_lp(vertices, points, slack):
    # x in conv(V) iff exists lam >= 0, sum lam = 1, V' lam = x
    from scipy.optimize import linprog

    nv = vertices.shape[0]
    out = np.zeros(points.shape[0], dtype=bool)
    a_eq_base = np.vstack([vertices.T, np.ones(nv)])
    for i, x in enumerate(points):
        rhs = np.concatenate([x, [1.0]])
        res = linprog(np.zeros(nv), A_eq=a_eq_base, b_eq=rhs,
                      bounds=[(0, None)] * nv, method="highs")
        out[i] = res.status == 0 if slack == 0 else (
            res.status == 0 or _point_near_hull(vertices, x, slack))
    return out


def _point_near_hull(vertices, x, slack):
    from scipy.optimize import linprog

    # minimize L_inf distance to the hull via an LP
    nv = vertices.shape[0]
    dim = vertices.shape[1]
    # vars: lam (nv), t (1); |V'lam - x| <= t
    cost = np.zeros(nv + 1)
    cost[-1] = 1.0
    a_ub = np.vstack([
        np.hstack([vertices.T, -np.ones((dim, 1))]),
        np.hstack([-vertices.T, -np.ones((dim, 1))]),
    ])
    b_ub = np.concatenate([x, -x])
    res = linprog(cost, A_ub=a_ub, b_ub=b_ub,
                  A_eq=np.concatenate([np.ones(nv), [0.0]])[None, :], b_eq=[1.0],
                  bounds=[(0, None)] * nv + [(0, None)], method="highs")
    return res.status == 0 and res.fun <= slack


def membership(uset, points, slack=0.0):
    """Boolean inclusion test, vectorized over rows of `points`.

    `slack` loosens the test in each set's natural metric: coordinate
    units for Box, facet distance for a reduced Hull, score units for the
    classifier set.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if isinstance(uset, Box):
        return np.all((pts >= uset.lo - slack) & (pts <= uset.hi + slack), axis=1)
    if isinstance(uset, Hull):
        if uset.equations is not None:
            vals = pts @ uset.equations[:, :-1].T + uset.equations[:, -1]
            return np.all(vals <= slack, axis=1)
        return _hull_membership_lp(uset.vertices, pts, slack)
    if isinstance(uset, SvcModel):
        return uset.contains(pts, slack=slack)
    raise TypeError(f"not an uncertainty set: {type(uset).__name__}")


def interior_point(uset):
    """A point inside the set, used as the ray origin for boundary tracing."""
    if isinstance(uset, Box):
        return 0.5 * (uset.lo + uset.hi)
    if isinstance(uset, Hull):
        return uset.vertices.mean(axis=0)
    if isinstance(uset, SvcModel):
        # the weighted-L1 score is convex; its minimum over the support
        # vectors is a cheap certified member
        scores = uset.score(uset.sv)
        return uset.sv[int(np.argmin(scores))]
    raise TypeError(f"not an uncertainty set: {type(uset).__name__}")


def outer_bounds(uset):
    """Certified per-dimension bounds (lo, hi) containing the whole set."""
    if isinstance(uset, Box):
        return uset.lo.copy(), uset.hi.copy()
    if isinstance(uset, Hull):
        return uset.vertices.min(axis=0), uset.vertices.max(axis=0)
    if isinstance(uset, SvcModel):
        # score >= ||W xi||_1 - sum_n alpha_n ||W sv_n||_1 by the triangle
        # inequality, so on the set ||W xi||_1 <= gamma + that sum; convert
        # to per-coordinate bounds through the rows of W^-1.
        w = uset.kernel.weights
        sv_norm = np.abs(uset.sv @ w.T).sum(axis=1) @ uset.alpha
        budget = uset.gamma + sv_norm
        w_inv = np.linalg.inv(w)
        reach = np.abs(w_inv).max(axis=1) * budget
        return -reach, reach
    raise TypeError(f"not an uncertainty set: {type(uset).__name__}")


def trace_boundary_2d(uset, n_rays=64, tol=1e-6):
    """Polyline along the boundary of a 2-D set by bisection along rays.

    Shoots n_rays directions from an interior point and bisects the first
    crossing out of the set. Returns an (n_rays, 2) array ordered by angle.
    """
    center = np.asarray(interior_point(uset), dtype=float)
    if center.shape != (2,):
        raise ValueError("boundary tracing only supports 2-D sets")
    lo, hi = outer_bounds(uset)
    r_max = float(np.linalg.norm(np.maximum(hi - center, center - lo))) + 1.0
    angles = np.linspace(0.0, 2.0 * np.pi, n_rays, endpoint=False)
    pts = np.empty((n_rays, 2))
    for i, phi in enumerate(angles):
        u = np.array([np.cos(phi), np.sin(phi)])
        a, b = 0.0, r_max
        # the center is inside; r_max is outside by construction
        while b - a > tol:
            mid = 0.5 * (a + b)
            if membership(uset, center + mid * u)[0]:
                a = mid
            else:
                b = mid
        pts[i] = center + a * u
    return pts
