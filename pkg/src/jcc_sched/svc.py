"""One-class support vector classifier with a weighted L1 kernel.

The classifier encloses the bulk of a sample cloud in the sublevel set of

    score(xi) = sum_n alpha_n * || W (xi - sv_n) ||_1  <=  gamma

where W is a whitening matrix fitted to the samples. The weights alpha
solve a small QP (minimize alpha' K alpha over the capped simplex) whose
kernel is K(a, b) = sum_d range_d - ||W(a - b)||_1; the cap 1/(N*eps)
limits how much mass any single sample can carry, which is what lets a
fraction eps of the data fall outside the set.

Because the score is a sum of weighted L1 distances, the set {score <= gamma}
is a polyhedron, which downstream code exploits to build exact robust
counterparts. Training uses a pairwise coordinate method (jit-compiled when
numba is available) instead of a generic QP solver: the QP has a single
equality plus box bounds, which the pair updates preserve exactly, and at
N = 1000 a model trains in milliseconds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - exercised only without the extra
    numba = None


@dataclass(frozen=True)
class KernelSpec:
    """Whitening matrix and per-dimension sample ranges of the L1 kernel."""

    weights: np.ndarray   # (D, D) symmetric PSD
    ranges: np.ndarray    # (D,) per-dimension spread of the training data

    @property
    def dim(self):
        return self.weights.shape[0]

    @property
    def offset(self):
        """Constant kernel term; also the natural scale of scores."""
        return float(self.ranges.sum())

    def distances(self, a, b):
        """Pairwise sum_d |W(a_i - b_j)|_d as an (len(a), len(b)) matrix."""
        wa = np.asarray(a, dtype=float) @ self.weights.T
        wb = np.asarray(b, dtype=float) @ self.weights.T
        return np.abs(wa[:, None, :] - wb[None, :, :]).sum(axis=2)


def kernel_from_samples(xi, reg=1e-8) -> KernelSpec:
    """Fit the whitening matrix (inverse covariance square root) and ranges.

    The covariance is ridge-regularized by reg * trace/D so nearly collinear
    sample clouds still yield a finite W. Fully degenerate clouds (zero
    spread) fall back to the identity.
    """
    xi = np.asarray(xi, dtype=float)
    if xi.ndim != 2 or xi.shape[0] < 2:
        raise ValueError("need an (N, D) sample matrix with N >= 2")
    dim = xi.shape[1]
    ranges = xi.max(axis=0) - xi.min(axis=0)
    cov = np.atleast_2d(np.cov(xi.T))
    tr = float(np.trace(cov))
    if tr <= 0:
        weights = np.eye(dim)
    else:
        cov = cov + reg * tr / dim * np.eye(dim)
        evals, evecs = np.linalg.eigh(cov)
        weights = evecs @ np.diag(evals ** -0.5) @ evecs.T
    return KernelSpec(weights=weights, ranges=ranges)


def gram_matrix(spec: KernelSpec, xi):
    """Kernel matrix K and the underlying pairwise distance matrix."""
    dist = spec.distances(xi, xi)
    return spec.offset - dist, dist


def _smo_loops(K, cap, tol, max_iter):
    """Maximal-violating-pair coordinate descent on the capped simplex.

    Minimizes alpha' K alpha subject to sum alpha = 1, 0 <= alpha <= cap.
    Each step moves mass from the sample with the largest gradient to the
    one with the smallest, clipped to the box; both constraints hold
    exactly throughout. Written with explicit loops so numba can compile it.
    """
    n = K.shape[0]
    alpha = np.full(n, 1.0 / n)
    g = 2.0 * K.dot(alpha)
    it = 0
    while it < max_iter:
        gi = 1e300
        i = -1
        gj = -1e300
        j = -1
        for k in range(n):
            if alpha[k] < cap - 1e-14 and g[k] < gi:
                gi = g[k]
                i = k
            if alpha[k] > 1e-14 and g[k] > gj:
                gj = g[k]
                j = k
        if i < 0 or j < 0 or gj - gi <= tol:
            break
        denom = 2.0 * (K[i, i] + K[j, j] - 2.0 * K[i, j])
        limit = min(cap - alpha[i], alpha[j])
        if denom <= 1e-14:
            step = limit
        else:
            step = (gj - gi) / denom
            if step > limit:
                step = limit
        alpha[i] += step
        alpha[j] -= step
        for k in range(n):
            g[k] += 2.0 * step * (K[k, i] - K[k, j])
        it += 1
    return alpha, it


def _smo_numpy(K, cap, tol, max_iter):
    # Same algorithm, vectorized per iteration so pure numpy stays usable.
    n = K.shape[0]
    alpha = np.full(n, 1.0 / n)
    g = 2.0 * (K @ alpha)
    for it in range(max_iter):
        up = alpha < cap - 1e-14
        down = alpha > 1e-14
        if not up.any() or not down.any():
            return alpha, it
        i = int(np.argmin(np.where(up, g, np.inf)))
        j = int(np.argmax(np.where(down, g, -np.inf)))
        if g[j] - g[i] <= tol:
            return alpha, it
        denom = 2.0 * (K[i, i] + K[j, j] - 2.0 * K[i, j])
        limit = min(cap - alpha[i], alpha[j])
        step = limit if denom <= 1e-14 else min((g[j] - g[i]) / denom, limit)
        alpha[i] += step
        alpha[j] -= step
        g += 2.0 * step * (K[:, i] - K[:, j])
    return alpha, max_iter


if numba is not None:
    _smo = numba.njit(cache=True)(_smo_loops)
else:
    _smo = _smo_numpy


@dataclass(frozen=True)
class SvcModel:
    """Trained classifier: support vectors, their weights, and the threshold."""

    eps: float
    cap: float
    kernel: KernelSpec
    sv: np.ndarray       # (NSV, D) support vector coordinates
    alpha: np.ndarray    # (NSV,) weights, each in (0, cap], summing to 1
    gamma: float
    n_samples: int
    n_boundary: int      # support vectors strictly inside the box (0, cap)
    iterations: int

    def score(self, points):
        """sum_n alpha_n ||W(x - sv_n)||_1 for each row of points."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return self.kernel.distances(pts, self.sv) @ self.alpha

    def contains(self, points, slack=0.0):
        return self.score(points) <= self.gamma + slack

    def to_dict(self):
        return {
            "eps": self.eps,
            "cap": self.cap,
            "gamma": self.gamma,
            "n_samples": self.n_samples,
            "n_boundary": self.n_boundary,
            "iterations": self.iterations,
            "weights": self.kernel.weights.tolist(),
            "ranges": self.kernel.ranges.tolist(),
            "sv": self.sv.tolist(),
            "alpha": self.alpha.tolist(),
        }

    @classmethod
    def from_dict(cls, doc):
        kernel = KernelSpec(weights=np.array(doc["weights"], dtype=float),
                            ranges=np.array(doc["ranges"], dtype=float))
        return cls(
            eps=float(doc["eps"]), cap=float(doc["cap"]), kernel=kernel,
            sv=np.array(doc["sv"], dtype=float),
            alpha=np.array(doc["alpha"], dtype=float),
            gamma=float(doc["gamma"]),
            n_samples=int(doc["n_samples"]),
            n_boundary=int(doc["n_boundary"]),
            iterations=int(doc["iterations"]),
        )


def compute_gamma(scores, alpha, cap, tol_alpha):
    """Threshold from training scores: median over boundary support vectors.

    If rounding produced no strictly-interior weights (every support vector
    sits at the cap), take the largest score among non-support samples so
    exactly those remain inside the set.
    """
    boundary = (alpha > tol_alpha) & (alpha < cap - tol_alpha)
    if boundary.any():
        return float(np.median(scores[boundary]))
    inside = alpha <= tol_alpha
    if inside.any():
        return float(scores[inside].max())
    return float(scores.max())


def train(xi, eps, kernel=None, tol=None, max_iter=2_000_000) -> SvcModel:
    """Fit one classifier to an (N, D) sample matrix at outlier fraction eps."""
    xi = np.asarray(xi, dtype=float)
    n = xi.shape[0]
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    if n * eps < 1.0:
        raise ValueError(f"need N*eps >= 1 (got N={n}, eps={eps}); "
                         "otherwise the cap exceeds the whole mass")
    if kernel is None:
        kernel = kernel_from_samples(xi)
    cap = 1.0 / (n * eps)
    gram, dist = gram_matrix(kernel, xi)
    if tol is None:
        tol = 1e-10 * max(1.0, kernel.offset)
    alpha, iters = _smo(gram, cap, tol, max_iter)

    scores = dist @ alpha
    tol_alpha = 1e-6 * cap
    support = alpha > tol_alpha
    boundary = support & (alpha < cap - tol_alpha)
    gamma = compute_gamma(scores, alpha, cap, tol_alpha)
    return SvcModel(
        eps=float(eps), cap=cap, kernel=kernel,
        sv=xi[support].copy(), alpha=alpha[support].copy(), gamma=gamma,
        n_samples=n, n_boundary=int(boundary.sum()), iterations=iters,
    )


def export_polyhedron(model: SvcModel):
    """Lifted H-representation of {xi : score(xi) <= gamma}.

    Introduces one auxiliary variable per support vector and dimension
    bounding |W(xi - sv_n)|_d from above, turning the weighted-L1 sublevel
    set into A z <= b over z = [xi, u_flat]. Used by the exact reformulation
    and by the independent LP cross-check.
    """
    nsv, dim = model.sv.shape
    w = model.kernel.weights
    nvar = dim + nsv * dim
    rows = 1 + 2 * nsv * dim
    a_mat = np.zeros((rows, nvar))
    b_vec = np.zeros(rows)
    # budget row: sum_n alpha_n sum_d u_{n,d} <= gamma
    for n in range(nsv):
        a_mat[0, dim + n * dim:dim + (n + 1) * dim] = model.alpha[n]
    b_vec[0] = model.gamma
    w_sv = model.sv @ w.T
    r = 1
    for n in range(nsv):
        for d in range(dim):
            ucol = dim + n * dim + d
            a_mat[r, :dim] = w[d]
            a_mat[r, ucol] = -1.0
            b_vec[r] = w_sv[n, d]
            a_mat[r + 1, :dim] = -w[d]
            a_mat[r + 1, ucol] = -1.0
            b_vec[r + 1] = -w_sv[n, d]
            r += 2
    return a_mat, b_vec


def save_models(models, path):
    """Write one classifier per timestep to a single JSON file."""
    doc = {"kind": "svc-models", "horizon": len(models),
           "models": [m.to_dict() for m in models]}
    Path(path).write_text(json.dumps(doc))


def load_models(path):
    doc = json.loads(Path(path).read_text())
    if doc.get("kind") != "svc-models":
        raise ValueError(f"{path}: not a classifier model file")
    return [SvcModel.from_dict(m) for m in doc["models"]]
