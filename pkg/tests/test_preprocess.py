import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import chi2

from hybridfs.dataset import FAILURE, SUCCESS, DataError, Dataset
from hybridfs.preprocess import (OutlierReport, OversamplingFallbackWarning, SmoteConfig,
                                 _n_synthetic, chi_square_cdf, chi_square_quantile, dbsmote_oversample,
                                 mahalanobis_distances, remove_outliers, scatter_matrix)


def _ds(X, y=None):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if y is None:
        y = np.arange(len(X)) % 2
    return Dataset(X, np.asarray(y))


# --- scatter matrix --------------------------------------------------------

def test_scatter_two_points():
    sc = scatter_matrix(_ds([0.0, 2.0]))
    assert sc.S.tolist() == [[2.0]]
    assert sc.ridge == 0.0 and sc.inverse_ok


def test_scatter_identical_rows_gets_ridge():
    sc = scatter_matrix(_ds(np.ones((5, 3))))
    assert sc.inverse_ok
    assert sc.ridge > 0


def test_scatter_rank_deficient_gets_ridge():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(20, 2))
    sc = scatter_matrix(_ds(np.c_[a, a.sum(axis=1)]))
    assert sc.inverse_ok and sc.ridge > 0
    np.testing.assert_allclose(sc.S, sc.S.T, atol=1e-12)


def test_scatter_independent_sample_near_diagonal():
    rng = np.random.default_rng(1)
    sc = scatter_matrix(_ds(rng.normal(size=(10_000, 2))))
    assert abs(sc.S[0, 1]) < 0.05


def test_scatter_needs_two_rows():
    with pytest.raises(DataError):
        scatter_matrix(_ds([[1.0, 2.0]], [0]))


# --- distances -------------------------------------------------------------

def test_distance_zero_at_mean():
    ds = _ds([[0.0, 0.0], [2.0, 2.0], [1.0, 1.0], [0.0, 2.0], [2.0, 0.0]])
    d = mahalanobis_distances(ds, scatter_matrix(ds))
    assert d[2] == pytest.approx(0.0, abs=1e-12)
    assert (d >= 0).all()


def test_distance_one_dimensional_hand_value():
    # mean 0, sample variance 16 / 4 = 4; the point 2 above the mean has D = 4 / 4
    x = np.array([-2.0, 2.0, -2.0, 2.0, 0.0])
    ds = _ds(x)
    sc = scatter_matrix(ds)
    assert sc.S[0, 0] == pytest.approx(4.0)
    d = mahalanobis_distances(ds, sc)
    assert d[1] == pytest.approx(1.0)


def test_distance_identity_covariance_is_squared_euclidean():
    ds = _ds([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    sc = scatter_matrix(ds)
    np.testing.assert_allclose(sc.S, np.eye(2) * 2 / 3)
    # rescale so S = I
    ds = _ds(ds.X * np.sqrt(1.5))
    sc = scatter_matrix(ds)
    np.testing.assert_allclose(sc.S, np.eye(2), atol=1e-12)
    np.testing.assert_allclose(mahalanobis_distances(ds, sc), (ds.X ** 2).sum(axis=1))


def test_distance_dimension_mismatch():
    a = _ds(np.random.default_rng(0).normal(size=(10, 2)))
    b = _ds(np.random.default_rng(0).normal(size=(10, 3)))
    with pytest.raises(DataError):
        mahalanobis_distances(b, scatter_matrix(a))


def test_distance_affine_invariance():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(200, 3))
    d0 = mahalanobis_distances(_ds(X), scatter_matrix(_ds(X)))
    X2 = X.copy()
    X2[:, 1] *= 10
    X2 += 5
    d1 = mahalanobis_distances(_ds(X2), scatter_matrix(_ds(X2)))
    np.testing.assert_allclose(d0, d1, atol=1e-6)


# --- chi-square ------------------------------------------------------------

@pytest.mark.parametrize("df,p,expected", [(1, 0.5, 0.4549), (2, 0.95, 5.991), (2, 0.975, 7.378)])
def test_chi_square_table_values(df, p, expected):
    assert chi_square_quantile(df, p) == pytest.approx(expected, abs=1e-3)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 600), st.floats(0.001, 0.999))
def test_chi_square_quantile_matches_scipy(df, p):
    q = chi_square_quantile(df, p)
    assert q == pytest.approx(chi2.ppf(p, df), rel=1e-6, abs=1e-9)
    assert chi_square_cdf(q, df) == pytest.approx(p, abs=1e-6)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 300), st.floats(0.0, 800.0))
def test_chi_square_cdf_matches_scipy(df, x):
    assert chi_square_cdf(x, df) == pytest.approx(chi2.cdf(x, df), abs=1e-10)


def test_chi_square_small_p_tends_to_zero():
    assert chi_square_quantile(3, 1e-9) < 1e-4


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5])
def test_chi_square_bad_p(p):
    with pytest.raises(ValueError):
        chi_square_quantile(2, p)


# --- outlier removal -------------------------------------------------------

def test_outlier_fraction_standard_normal():
    rng = np.random.default_rng(0)
    ds = _ds(rng.normal(size=(100_000, 2)))
    _, report = remove_outliers(ds, 0.975)
    assert abs(len(report.flagged) / ds.n - 0.025) < 0.005


def test_outlier_none_beyond_threshold_unchanged():
    ds = _ds([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    out, report = remove_outliers(ds, 0.975)
    assert out is ds and report.flagged == []


def test_outlier_strict_inequality(monkeypatch):
    x = np.array([-1.0, 1.0, -1.0, 1.0, -3.0, 3.0, 0.0, 0.0])
    ds = _ds(x)
    d = mahalanobis_distances(ds, scatter_matrix(ds))
    import hybridfs.preprocess as pp
    # pin the threshold to a distance that several rows attain exactly
    monkeypatch.setattr(pp, "chi_square_quantile", lambda df, p: float(d[0]))
    out, report = remove_outliers(ds, 0.975)
    assert report.flagged == [4, 5]
    assert out.n == 6


def test_outlier_report_invariants_and_json():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(300, 3))
    X[:5] *= 8
    out, report = remove_outliers(_ds(X), 0.975)
    assert set(report.flagged) == set(np.flatnonzero(report.distances > report.threshold))
    assert out.n == 300 - len(report.flagged)
    back = OutlierReport.from_dict(json.loads(report.to_json()))
    assert back.flagged == report.flagged
    np.testing.assert_allclose(back.distances, report.distances)


# --- oversampling ----------------------------------------------------------

def test_synthetic_count_secom_shape():
    s = _n_synthetic(104, 1359, 0.4)
    assert 104 + s >= 906
    assert (104 + s) / (1463 + s) >= 0.4
    assert (104 + s - 1) / (1463 + s - 1) < 0.4


def _imbalanced(n_maj=200, n_min=30, seed=0):
    rng = np.random.default_rng(seed)
    X = np.r_[rng.normal(0, 1, (n_maj, 3)), rng.normal(3, 0.5, (n_min, 3))]
    y = np.r_[np.full(n_maj, SUCCESS), np.full(n_min, FAILURE)]
    return Dataset(X, y)


def test_oversample_ratio_and_originals_untouched():
    ds = _imbalanced()
    out = dbsmote_oversample(ds, SmoteConfig(target_minority_ratio=0.4, seed=1))
    counts = out.class_counts()
    assert counts[FAILURE] / out.n >= 0.4
    assert counts[SUCCESS] == 200
    assert counts[FAILURE] <= counts[SUCCESS]
    np.testing.assert_array_equal(out.X[: ds.n], ds.X)
    np.testing.assert_array_equal(out.y[: ds.n], ds.y)
    assert (out.row_ids[ds.n:] == -1).all()
    assert (out.y[ds.n:] == FAILURE).all()


def test_oversample_noop_at_current_ratio():
    ds = _imbalanced(70, 30)
    assert dbsmote_oversample(ds, SmoteConfig(target_minority_ratio=0.3)) is ds


def test_oversample_deterministic():
    ds = _imbalanced()
    a = dbsmote_oversample(ds, SmoteConfig(seed=4))
    b = dbsmote_oversample(ds, SmoteConfig(seed=4))
    np.testing.assert_array_equal(a.X, b.X)


def _on_some_segment(s, P, tol=1e-9):
    for i in range(len(P)):
        d = P - P[i]
        v = s - P[i]
        nn = (d * d).sum(axis=1)
        ok = nn > 0
        t = np.where(ok, d @ v / np.where(ok, nn, 1.0), 0.0)
        inside = ok & (t >= -tol) & (t <= 1 + tol)
        resid = np.linalg.norm(v[None, :] - t[:, None] * d, axis=1)
        if np.any(inside & (resid < tol * max(1.0, np.abs(s).max()))):
            return True
        if np.linalg.norm(v) < tol:
            return True
    return False


def test_synthetic_rows_on_minority_segments():
    ds = _imbalanced(120, 25, seed=2)
    out = dbsmote_oversample(ds, SmoteConfig(seed=0))
    P = ds.X[ds.y == FAILURE]
    for s in out.X[ds.n:]:
        assert _on_some_segment(s, P)


def test_synthetic_pairs_stay_inside_clusters():
    rng = np.random.default_rng(9)
    a = rng.normal(0, 0.05, (20, 2))
    b = rng.normal(10, 0.05, (20, 2))
    maj = rng.normal(5, 3, (200, 2))
    ds = Dataset(np.r_[maj, a, b], np.r_[np.full(200, 1), np.zeros(40, int)])
    out = dbsmote_oversample(ds, SmoteConfig(seed=0))
    synth = out.X[ds.n:]
    # nothing lands in the gap between the two dense minority clusters
    dist_a = np.linalg.norm(synth - a.mean(0), axis=1)
    dist_b = np.linalg.norm(synth - b.mean(0), axis=1)
    assert (np.minimum(dist_a, dist_b) < 1.0).all()


def test_oversample_fallback_warns():
    rng = np.random.default_rng(0)
    X = np.r_[rng.normal(size=(50, 2)), rng.normal(size=(3, 2)) * 5]
    ds = Dataset(X, np.r_[np.ones(50, int), np.zeros(3, int)])
    with pytest.warns(OversamplingFallbackWarning):
        out = dbsmote_oversample(ds, SmoteConfig(dbscan_min_pts=5))
    assert out.class_counts()[FAILURE] / out.n >= 0.4


def test_oversample_needs_two_minority_rows():
    ds = Dataset(np.arange(6.0)[:, None], np.array([1, 1, 1, 1, 1, 0]))
    with pytest.raises(DataError):
        dbsmote_oversample(ds, SmoteConfig())


@pytest.mark.parametrize("kw", [{"target_minority_ratio": 0.0}, {"k": 0}, {"dbscan_eps": -1.0}])
def test_smote_config_validation(kw):
    with pytest.raises(ValueError):
        SmoteConfig(**kw)
