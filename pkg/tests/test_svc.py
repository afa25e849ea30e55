import math

import numpy as np
import numpy.testing as npt
import pytest
from scipy.optimize import linprog

import oracles
from jcc_sched import svc

SQUARE = np.array([[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]])


def test_kernel_from_samples_whitens():
    spec = svc.kernel_from_samples(SQUARE)
    npt.assert_array_equal(spec.ranges, [2.0, 2.0])
    assert spec.offset == 4.0
    # corner cloud has covariance (4/3) I, so W is sqrt(3)/2 I
    npt.assert_allclose(spec.weights, math.sqrt(3.0) / 2.0 * np.eye(2),
                        rtol=1e-6)


def test_gram_matrix_structure(rng):
    xi = rng.normal(0.0, 0.4, (12, 2))
    spec = svc.kernel_from_samples(xi)
    gram, dist = svc.gram_matrix(spec, xi)
    npt.assert_allclose(gram, gram.T, atol=1e-12)
    npt.assert_allclose(np.diag(gram), spec.offset, atol=1e-12)
    assert np.all(dist >= 0.0)
    npt.assert_allclose(gram, spec.offset - dist, atol=1e-12)


def test_square_cloud_reference_model():
    """Four corner samples at eps=0.25: the learned set is exactly the square."""
    model = svc.train(SQUARE, eps=0.25)
    assert model.cap == 1.0
    assert model.sv.shape == (4, 2)
    npt.assert_allclose(model.alpha, 0.25, atol=1e-12)
    # every corner is a boundary support vector at the same score
    assert model.n_boundary == 4
    assert model.gamma == pytest.approx(math.sqrt(3.0), rel=1e-6)

    inside = np.array([[0.0, 0.0], [0.999, 0.0], [-0.999, 0.999], [1.0, 1.0]])
    outside = np.array([[1.01, 0.0], [0.0, -1.01], [1.2, 1.2]])
    # the weighted-L1 score is constant on the whole square
    npt.assert_allclose(model.score(inside), model.gamma, rtol=1e-9)
    assert model.contains(inside, slack=1e-9).all()
    assert not model.contains(outside).any()


def test_training_coverage_across_families(rng):
    horizon_clouds = {
        "tight": rng.normal(0.0, 0.12, (160, 2)),
        "skewed": np.column_stack([rng.gamma(2.0, 0.2, 160) - 0.4,
                                   rng.normal(0.0, 0.2, 160)]),
        "wide": rng.uniform(-0.9, 1.4, (160, 2)),
    }
    for eps in (0.05, 0.1, 0.25):
        for name, xi in horizon_clouds.items():
            model = svc.train(xi, eps)
            need = math.ceil((1.0 - eps) * xi.shape[0])
            covered = int(np.count_nonzero(model.contains(xi, slack=1e-8)))
            assert covered >= need, (name, eps, covered, need)
            assert model.alpha.sum() == pytest.approx(1.0, abs=1e-6)
            assert np.all(model.alpha > 0.0)
            assert np.all(model.alpha <= model.cap + 1e-12)


def test_train_input_validation(rng):
    xi = rng.normal(0.0, 0.2, (20, 2))
    with pytest.raises(ValueError):
        svc.train(xi, eps=0.0)
    with pytest.raises(ValueError):
        svc.train(xi, eps=1.0)
    with pytest.raises(ValueError):
        svc.train(xi[:6], eps=0.05)  # N*eps < 1


def test_smo_matches_numpy_fallback(rng):
    """Jitted and plain-numpy descent run the identical update sequence."""
    xi = rng.normal(0.0, 0.3, (40, 2))
    spec = svc.kernel_from_samples(xi)
    gram, _ = svc.gram_matrix(spec, xi)
    cap = 1.0 / (40 * 0.1)
    tol = 1e-10 * spec.offset
    a1, _ = svc._smo(gram, cap, tol, 100000)
    a2, _ = svc._smo_numpy(gram, cap, tol, 100000)
    npt.assert_allclose(a1, a2, atol=1e-7)
    assert a1.sum() == pytest.approx(1.0, abs=1e-9)


def test_smo_agrees_with_kkt_enumeration(rng):
    xi = rng.normal(0.0, 0.35, (7, 2))
    spec = svc.kernel_from_samples(xi)
    gram, _ = svc.gram_matrix(spec, xi)
    cap = 1.0 / (7 * 0.2)
    alpha, _ = svc._smo(gram, cap, 1e-12 * spec.offset, 10 ** 6)
    candidates = oracles.qp_candidates(gram, cap)
    assert candidates
    best_obj = min(obj for _, obj in candidates)
    assert alpha @ gram @ alpha == pytest.approx(best_obj, abs=1e-8)


def test_serialization_roundtrip(tmp_path, rng):
    xi = [rng.normal(0.0, 0.25, (60, 2)) for _ in range(3)]
    models = [svc.train(x, eps=0.1) for x in xi]
    path = tmp_path / "models.json"
    svc.save_models(models, path)
    back = svc.load_models(path)
    assert len(back) == 3
    probe = rng.uniform(-1.0, 1.0, (50, 2))
    for orig, copy in zip(models, back):
        assert copy.gamma == orig.gamma
        npt.assert_allclose(copy.score(probe), orig.score(probe), atol=1e-12)

    (tmp_path / "junk.json").write_text('{"kind": "other"}')
    with pytest.raises(ValueError):
        svc.load_models(tmp_path / "junk.json")


def test_exported_polyhedron_reproduces_score(rng):
    """Minimizing the lifted budget with xi pinned recovers score(xi)."""
    xi = rng.normal(0.0, 0.3, (40, 2))
    model = svc.train(xi, eps=0.15)
    a_mat, b_vec = svc.export_polyhedron(model)
    dim = 2
    for point in rng.uniform(-0.8, 0.8, (6, 2)):
        a_eq = np.zeros((dim, a_mat.shape[1]))
        a_eq[:, :dim] = np.eye(dim)
        res = linprog(a_mat[0], A_ub=a_mat[1:], b_ub=b_vec[1:],
                      A_eq=a_eq, b_eq=point, bounds=(None, None),
                      method="highs")
        assert res.status == 0
        assert res.fun == pytest.approx(model.score(point)[0], abs=1e-8)


def test_compute_gamma_fallbacks():
    scores = np.array([1.0, 2.0, 3.0, 4.0])
    cap = 0.5
    # boundary vectors present: median of their scores
    alpha = np.array([0.5, 0.3, 0.2, 0.0])
    assert svc.compute_gamma(scores, alpha, cap, 1e-6) == 2.5
    # all support mass at the cap: largest score of the inside samples
    alpha = np.array([0.5, 0.5, 0.0, 0.0])
    assert svc.compute_gamma(scores, alpha, cap, 1e-6) == 4.0
