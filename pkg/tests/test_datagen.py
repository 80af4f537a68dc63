"""
Unit tests for dataset generation, CSV ingestion, transforms and splits.
"""
import numpy as np
import pytest

from pcaboost.datagen import (
    CsvParseError,
    Dataset,
    DatasetError,
    SplitConfigError,
    SplitSpec,
    ZeroVarianceError,
    apply_transform,
    fit_transform,
    gen_power_surface,
    inverse_transform,
    load_csv,
    save_csv,
    split,
)


def _plane_residual(x: np.ndarray) -> float:
    """Mean squared residual of z from its least-squares plane in (x, y)."""
    design = np.column_stack([x[:, 0], x[:, 1], np.ones(len(x))])
    coef, *_ = np.linalg.lstsq(design, x[:, 2], rcond=None)
    return float(np.mean((design @ coef - x[:, 2]) ** 2))


def test_power_surface_values(rng):
    data = gen_power_surface(50, 4.0, rng)
    np.testing.assert_allclose(data.x[:, 2], data.x[:, 0] ** 4 + data.x[:, 1] ** 4)
    assert data.feature_names == ["x", "y", "z"]
    assert np.all((data.x[:, :2] >= 0) & (data.x[:, :2] <= 1))


def test_power_surface_exponent_one_is_a_plane(rng):
    data = gen_power_surface(1, 1.0, rng)
    assert data.x[0, 2] == pytest.approx(data.x[0, 0] + data.x[0, 1])


def test_higher_exponent_is_more_curved():
    flat = gen_power_surface(1000, 1.1, np.random.default_rng(0)).x
    curved = gen_power_surface(1000, 4.0, np.random.default_rng(0)).x
    assert _plane_residual(curved) > _plane_residual(flat)


def test_power_surface_is_deterministic():
    a = gen_power_surface(20, 4.0, np.random.default_rng(9)).x
    b = gen_power_surface(20, 4.0, np.random.default_rng(9)).x
    np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("count, exponent", [(0, 4.0), (10, 0.5)])
def test_power_surface_rejects_bad_arguments(rng, count, exponent):
    with pytest.raises(DatasetError):
        gen_power_surface(count, exponent, rng)


def test_load_csv_plain(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("1,2\n3,4\n")
    data = load_csv(path)
    np.testing.assert_array_equal(data.x, [[1.0, 2.0], [3.0, 4.0]])
    assert data.feature_names is None


def test_load_csv_detects_header(tmp_path):
    path = tmp_path / "h.csv"
    path.write_text("a,b\n1,2\n3,4\n")
    data = load_csv(path)
    assert data.feature_names == ["a", "b"]
    assert data.n_rows == 2


def test_load_csv_reports_non_numeric_cell(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("1,2\n3,oops\n")
    with pytest.raises(CsvParseError) as excinfo:
        load_csv(path)
    assert excinfo.value.row == 2
    assert excinfo.value.column == 2


def test_load_csv_rejects_ragged_rows(tmp_path):
    path = tmp_path / "ragged.csv"
    path.write_text("1,2\n3,4,5\n")
    with pytest.raises(CsvParseError):
        load_csv(path)


def test_load_csv_rejects_empty_file(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("")
    with pytest.raises(CsvParseError):
        load_csv(path)


def test_load_csv_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_csv(tmp_path / "nope.csv")


def test_save_then_load_is_exact(tmp_path, rng):
    data = gen_power_surface(30, 4.0, rng)
    path = tmp_path / "out" / "surface.csv"
    save_csv(data, path)
    reloaded = load_csv(path)
    np.testing.assert_array_equal(reloaded.x, data.x)
    assert reloaded.feature_names == ["x", "y", "z"]


def test_fit_transform_centers_columns(rng):
    data = Dataset(x=rng.standard_normal((40, 3)) + 5.0)
    transformed, params = fit_transform(data)
    np.testing.assert_allclose(transformed.x.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_array_equal(params.scale, 1.0)
    assert transformed.is_transformed


def test_fit_transform_scales_columns(rng):
    data = Dataset(x=rng.standard_normal((40, 3)) * np.array([10.0, 1.0, 0.1]))
    transformed, _ = fit_transform(data, scale=True)
    np.testing.assert_allclose(transformed.x.std(axis=0), 1.0)


def test_inverse_transform_restores_data(rng):
    data = Dataset(x=rng.standard_normal((20, 3)) * 3 + 1)
    transformed, params = fit_transform(data, scale=True)
    np.testing.assert_allclose(inverse_transform(transformed, params), data.x, atol=1e-12)


def test_transform_fitted_on_train_does_not_center_test(rng):
    x = rng.standard_normal((60, 3)) * 2 + 1
    train, test = Dataset(x=x[:30]), Dataset(x=x[30:])
    _, params = fit_transform(train)
    moved = apply_transform(test, params)
    assert np.linalg.norm(moved.x.mean(axis=0)) > 1e-6


def test_scaling_constant_column_fails():
    data = Dataset(x=np.array([[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]]), feature_names=["a", "b"])
    with pytest.raises(ZeroVarianceError) as excinfo:
        fit_transform(data, scale=True)
    assert excinfo.value.column == "b"


def test_transform_twice_is_rejected(rng):
    transformed, _ = fit_transform(Dataset(x=rng.standard_normal((5, 2))))
    with pytest.raises(DatasetError):
        fit_transform(transformed)


def test_split_with_test_count_and_pool(rng):
    data = gen_power_surface(1000, 4.0, rng)
    splits = split(data, SplitSpec(test_count=250, pool_size=20, seed=3))
    assert splits.sizes() == {"train": 16, "val": 2, "select": 2, "test": 250}
    assert splits.unused.size == 730


def test_split_fractions_on_ten_rows():
    splits = split(Dataset(x=np.arange(20.0).reshape(10, 2)), SplitSpec(seed=0))
    assert splits.sizes() == {"train": 8, "val": 1, "select": 1, "test": 0}


def test_split_partitions_are_disjoint(rng):
    data = gen_power_surface(200, 4.0, rng)
    splits = split(data, SplitSpec(test_frac=0.25, pool_size=50, seed=1))
    parts = [splits.train, splits.val, splits.select, splits.test, splits.unused]
    joined = np.concatenate(parts)
    assert joined.size == 200
    assert np.unique(joined).size == 200


def test_split_is_deterministic(rng):
    data = gen_power_surface(100, 4.0, rng)
    spec = SplitSpec(test_count=20, pool_size=30, seed=5)
    assert split(data, spec).to_dict() == split(data, spec).to_dict()


def test_split_rejects_empty_partition():
    with pytest.raises(SplitConfigError):
        split(Dataset(x=np.ones((5, 2))), SplitSpec(seed=0))


def test_split_rejects_oversized_pool(rng):
    data = gen_power_surface(50, 4.0, rng)
    with pytest.raises(SplitConfigError):
        split(data, SplitSpec(test_count=40, pool_size=20))


@pytest.mark.parametrize(
    "kwargs",
    [
        {"train_frac": 0.5},
        {"test_count": 5, "test_frac": 0.1},
        {"test_frac": 1.5},
        {"pool_size": 2},
    ],
)
def test_split_spec_validation(kwargs):
    with pytest.raises(SplitConfigError):
        SplitSpec(**kwargs)
