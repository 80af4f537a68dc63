"""
Unit tests for rank-q PCA.
"""
import numpy as np
import pytest

from pcaboost import pca
from pcaboost.numlin import ShapeError


def _top_eigvecs(x: np.ndarray, q: int) -> np.ndarray:
    centered = x - x.mean(axis=0)
    vals, vecs = np.linalg.eigh(centered.T @ centered)
    return vecs[:, np.argsort(vals)[::-1][:q]]


def test_fit_axis_aligned_data():
    """Data on the x-axis gives loading (1, 0) and exact reconstruction."""
    x = np.array([[1.0, 0.0], [-1.0, 0.0], [2.0, 0.0], [-2.0, 0.0]])
    model = pca.fit(x, 1)
    np.testing.assert_allclose(model.v[:, 0], [1.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(pca.reconstruct(model, pca.project(model, x)), x, atol=1e-12)


def test_fit_diagonal_line():
    """Points on y = x load on (1, 1)/sqrt(2), sign-normalized positive."""
    x = np.array([[1.0, 1.0], [2.0, 2.0], [-1.0, -1.0], [5.0, 5.0]])
    model = pca.fit(x, 1)
    np.testing.assert_allclose(model.v[:, 0], np.array([1.0, 1.0]) / np.sqrt(2), atol=1e-12)


def test_full_rank_reconstruction_is_identity(rng):
    x = rng.standard_normal((30, 4))
    model = pca.fit(x, 4)
    np.testing.assert_allclose(pca.reconstruct(model, pca.project(model, x)), x, atol=1e-9)


def test_loadings_are_orthonormal_and_sign_fixed(rng):
    model = pca.fit(rng.standard_normal((50, 5)), 3)
    assert np.linalg.norm(model.v.T @ model.v - np.eye(3)) < 1e-10
    for col in model.v.T:
        assert col[np.argmax(np.abs(col))] > 0


def test_in_span_row_reconstructs_exactly(rng):
    x = rng.standard_normal((20, 3))
    model = pca.fit(x, 2)
    row = model.mean + 1.7 * model.v[:, 0] - 0.4 * model.v[:, 1]
    np.testing.assert_allclose(pca.reconstruct(model, pca.project(model, row[None, :]))[0], row, atol=1e-12)


def test_mean_row_reconstructs_to_mean(rng):
    x = rng.standard_normal((20, 3))
    model = pca.fit(x, 2)
    out = pca.reconstruct(model, pca.project(model, model.mean[None, :]))
    np.testing.assert_allclose(out[0], model.mean, atol=1e-12)


def test_reconstruction_matches_covariance_oracle(rng):
    """Rank-2 reconstruction equals projection onto the top-2 covariance eigenvectors."""
    x = rng.standard_normal((50, 5)) @ rng.standard_normal((5, 5))
    model = pca.fit(x, 2)
    e = _top_eigvecs(x, 2)
    mean = x.mean(axis=0)
    oracle = (x - mean) @ e @ e.T + mean
    np.testing.assert_allclose(pca.reconstruct(model, pca.project(model, x)), oracle, atol=1e-9)


def test_avg_projection_error_in_span_is_zero(rng):
    coeffs = rng.standard_normal((25, 2))
    x = coeffs @ rng.standard_normal((2, 4))
    model = pca.fit(x, 2)
    assert pca.avg_projection_error(model, x) < 1e-10


def test_avg_projection_error_single_row_distance():
    """A row at distance d off the principal line has error d."""
    x = np.array([[1.0, 0.0], [-1.0, 0.0], [3.0, 0.0], [-3.0, 0.0]])
    model = pca.fit(x, 1)
    assert pca.avg_projection_error(model, np.array([[2.0, 0.75]])) == pytest.approx(0.75)


def test_avg_projection_error_matches_two_line_oracle(rng):
    x = rng.standard_normal((40, 4))
    probe = rng.standard_normal((15, 4))
    model = pca.fit(x, 2)
    centered = probe - x.mean(axis=0)
    oracle = np.mean(np.linalg.norm(centered - centered @ model.v @ model.v.T, axis=1))
    assert pca.avg_projection_error(model, probe) == pytest.approx(oracle, abs=1e-10)


def test_error_non_increasing_in_q(rng):
    x = rng.standard_normal((30, 5))
    errors = [pca.mean_squared_error(pca.fit(x, q), x) for q in range(1, 6)]
    assert all(a >= b - 1e-12 for a, b in zip(errors, errors[1:]))


def test_scaled_fit_reports_original_units_by_default(rng):
    x = rng.standard_normal((40, 3)) * np.array([100.0, 1.0, 0.01])
    model = pca.fit(x, 2, scale=True)
    np.testing.assert_allclose(model.scale, x.std(axis=0))
    original = pca.avg_projection_error(model, x)
    scaled = pca.avg_projection_error(model, x, scaled_units=True)
    assert original != pytest.approx(scaled)


def test_rank_deficient_fit_sets_warning_flag():
    x = np.array([[1.0, 2.0, 0.0], [2.0, 4.0, 0.0], [3.0, 6.0, 0.0], [4.0, 8.0, 0.0]])
    model = pca.fit(x, 2)
    assert model.rank_deficient is True


def test_explained_variance_ratio(rng):
    model = pca.fit(rng.standard_normal((30, 3)), 3)
    assert np.sum(model.explained_variance_ratio) == pytest.approx(1.0)


def test_fit_rejects_bad_q(rng):
    with pytest.raises(pca.PcaError):
        pca.fit(rng.standard_normal((5, 3)), 4)


def test_fit_rejects_single_row():
    with pytest.raises(pca.PcaError):
        pca.fit(np.ones((1, 3)), 1)


def test_project_rejects_wrong_width(rng):
    model = pca.fit(rng.standard_normal((10, 3)), 2)
    with pytest.raises(ShapeError):
        pca.project(model, np.ones((2, 4)))


def test_model_json_round_trip(rng):
    model = pca.fit(rng.standard_normal((10, 3)), 2)
    data = model.to_dict()
    assert len(data["v"]) == 2 and len(data["v"][0]) == 3
    restored = pca.PcaModel.from_dict(data)
    np.testing.assert_array_equal(restored.v, model.v)
    assert restored.q == 2
