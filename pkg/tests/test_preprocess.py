import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.interpolate import CubicSpline
from scipy.stats import spearmanr

from aiscyclegen.errors import ContractError, ImputationError, InputError, ParameterError
from aiscyclegen.ingest import AisSequence
from aiscyclegen.preprocess import (
    MinMaxScaler, cubic_spline_impute, feature_report, impute_and_smooth, minmax_fit_transform, minmax_inverse,
    moving_average, spearman_matrix, spearman_rho, write_feature_report,
)

# ---------------------------------------------------------------- spline


def test_spline_reproduces_linear_data():
    out = cubic_spline_impute([0.0, 0.5, 1.0, 2.0], [1.0, np.nan, 2.0, 3.0])
    assert out[1] == pytest.approx(1.5, abs=1e-12)


def test_spline_no_gaps_is_identity():
    v = np.array([1.0, 4.0, 2.0])
    assert np.array_equal(cubic_spline_impute([0.0, 1.0, 2.0], v), v)


def test_spline_beats_linear_on_sine():
    t = np.linspace(0, 2 * np.pi, 15)
    held = np.array([2, 4, 7, 10, 12])
    v = np.sin(t)
    gappy = v.copy()
    gappy[held] = np.nan
    spline = cubic_spline_impute(t, gappy)[held]
    known = np.setdiff1d(np.arange(15), held)
    linear = np.interp(t[held], t[known], v[known])
    rmse = lambda p: np.sqrt(np.mean((p - v[held]) ** 2))
    assert rmse(spline) < rmse(linear)


def test_spline_matches_reference_natural_spline():
    rng = np.random.default_rng(0)
    t = np.sort(rng.uniform(0, 10, 12))
    v = rng.normal(size=12)
    q = np.array([1, 4, 6, 9])
    gappy = v.copy()
    gappy[q] = np.nan
    known = np.setdiff1d(np.arange(12), q)
    ref = CubicSpline(t[known], v[known], bc_type="natural")(t[q])
    assert np.allclose(cubic_spline_impute(t, gappy)[q], ref, atol=1e-9)


def test_spline_boundary_extension_is_constant():
    out = cubic_spline_impute([0.0, 1.0, 2.0, 3.0], [np.nan, 2.0, 5.0, np.nan])
    assert out[0] == 2.0 and out[3] == 5.0


def test_spline_errors():
    with pytest.raises(ImputationError):
        cubic_spline_impute([0.0, 1.0, 2.0], [1.0, np.nan, np.nan])
    with pytest.raises(InputError):
        cubic_spline_impute([0.0, 0.0, 1.0], [1.0, 2.0, np.nan])


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(2, 12))
def test_spline_exact_at_knots_and_affine_reproduction(seed, n):
    rng = np.random.default_rng(seed)
    t = np.cumsum(rng.uniform(0.1, 2.0, n + 2))
    gappy = rng.normal(size=n + 2)
    gappy[1] = np.nan
    out = cubic_spline_impute(t, gappy)
    obs = ~np.isnan(gappy)
    assert np.max(np.abs(out[obs] - gappy[obs])) < 1e-9
    a, b = rng.normal(size=2)
    line = a * t + b
    line_gappy = line.copy()
    line_gappy[1] = np.nan
    assert abs(cubic_spline_impute(t, line_gappy)[1] - line[1]) < 1e-8


# ---------------------------------------------------------------- smoothing


def test_sma_prefix_rule():
    assert np.allclose(moving_average([1.0, 2.0, 3.0, 4.0], 2), [1.0, 1.5, 2.5, 3.5])


def test_sma_window_one_and_constant():
    x = np.array([3.0, -1.0, 2.0])
    assert np.array_equal(moving_average(x, 1), x)
    assert np.allclose(moving_average(np.full(6, 4.0), 3), 4.0)
    assert np.allclose(moving_average(np.full(6, 4.0), 3, method="gaussian"), 4.0)


def test_sma_bad_window():
    with pytest.raises(ParameterError):
        moving_average([1.0], 0)


@settings(max_examples=40, deadline=None)
@given(x=arrays(np.float64, st.integers(1, 30), elements=st.floats(-100, 100)), n=st.integers(1, 8))
def test_sma_matches_loop(x, n):
    ref = np.array([x[max(0, t - n + 1):t + 1].mean() for t in range(len(x))])
    assert np.allclose(moving_average(x, n), ref, atol=1e-9)


def test_impute_and_smooth_fills_and_preserves_shape():
    vals = np.array([[1.0, 5.0], [np.nan, 5.0], [3.0, np.nan], [4.0, np.nan]])
    seq = AisSequence(366000001, 0.0, vals, ("sog", "cog"), ~np.isnan(vals), np.arange(4.0) * 60)
    out = impute_and_smooth(seq, window=1)
    assert out.values.shape == (4, 2) and not np.isnan(out.values).any()
    assert out.values[1, 0] == pytest.approx(2.0) and np.all(out.values[:, 1] == 5.0)


def test_impute_and_smooth_empty_feature():
    vals = np.array([[1.0, np.nan], [2.0, np.nan]])
    seq = AisSequence(366000001, 0.0, vals, ("sog", "cog"), ~np.isnan(vals), np.arange(2.0))
    with pytest.raises(ImputationError, match="cog"):
        impute_and_smooth(seq)


# ---------------------------------------------------------------- scaling


def test_minmax_endpoints_and_constant():
    out, sc = minmax_fit_transform(np.array([[0.0, 7.0], [5.0, 7.0], [10.0, 7.0]]), ["a", "b"])
    assert np.allclose(out[:, 0], [0.0, 0.5, 1.0]) and np.all(out[:, 1] == 0.0)
    assert minmax_inverse(np.array([[0.5, 0.0]]), sc, ["a", "b"]).tolist() == [[5.0, 7.0]]


def test_minmax_errors():
    with pytest.raises(ParameterError):
        minmax_fit_transform(np.zeros((0, 2)))
    _, sc = minmax_fit_transform(np.eye(2), ["a", "b"])
    with pytest.raises(ContractError):
        minmax_inverse(np.eye(2), sc, ["b", "a"])
    with pytest.raises(ContractError):
        minmax_fit_transform(np.eye(2), split="test")


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(2, 30), d=st.integers(1, 5))
def test_minmax_range_and_round_trip(seed, n, d):
    data = np.random.default_rng(seed).normal(0, 50, size=(n, d))
    out, sc = minmax_fit_transform(data)
    assert out.min() >= 0.0 and out.max() <= 1.0
    assert np.allclose(out.min(axis=0), 0.0) and np.allclose(out.max(axis=0), 1.0)
    assert np.max(np.abs(minmax_inverse(out, sc) - data)) < 1e-6


def test_scaler_dict_round_trip():
    _, sc = minmax_fit_transform(np.array([[1.0, 2.0], [3.0, 8.0]]), ["x", "y"])
    back = MinMaxScaler.from_dict(sc.to_dict())
    assert back.feature_names == ("x", "y") and np.array_equal(back.x_max, [3.0, 8.0])


# ---------------------------------------------------------------- Spearman


def hand_rank_rho(x, y):
    """Mid-ranks assigned by counting, then the rank-difference formula and the rank Pearson."""
    def ranks(v):
        v = list(v)
        return [sum(w < a for w in v) + (sum(w == a for w in v) + 1) / 2 for a in v]
    rx, ry = np.array(ranks(x)), np.array(ranks(y))
    n = len(x)
    formula = 1 - 6 * np.sum((rx - ry) ** 2) / (n * (n * n - 1))
    cx, cy = rx - rx.mean(), ry - ry.mean()
    return formula, float(cx @ cy / np.sqrt((cx @ cx) * (cy @ cy)))


def test_spearman_monotone_cases():
    x = np.arange(6.0)
    assert spearman_rho(x, 2 * x) == pytest.approx(1.0)
    assert spearman_rho(x, -x) == pytest.approx(-1.0)


def test_spearman_tied_fixture_matches_hand_ranks():
    x, y = [1, 2, 3, 4, 5], [5, 6, 7, 8, 7]
    formula, pearson = hand_rank_rho(x, y)
    # mid-ranks (1, 2, 3.5, 5, 3.5): Pearson of ranks 8/sqrt(95), rank-difference formula 0.825
    assert pearson == pytest.approx(8 / np.sqrt(95))
    assert formula == pytest.approx(0.825)
    assert spearman_rho(x, y) == pytest.approx(pearson, abs=1e-12)
    assert spearman_rho(x, y) == pytest.approx(spearmanr(x, y).statistic, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(3, 25))
def test_spearman_tie_free_formula_and_monotone_invariance(seed, n):
    rng = np.random.default_rng(seed)
    x, y = rng.permutation(n).astype(float), rng.permutation(n).astype(float)
    formula, _ = hand_rank_rho(x, y)
    assert spearman_rho(x, y) == pytest.approx(formula, abs=1e-12)
    assert spearman_rho(np.exp(x / n), y ** 3) == pytest.approx(formula, abs=1e-12)


def test_spearman_matrix_properties_and_constant_column():
    rng = np.random.default_rng(3)
    data = rng.normal(size=(20, 4))
    data[:, 3] = 1.0
    m = spearman_matrix(data, ["a", "b", "c", "k"])
    assert np.allclose(m.rho, m.rho.T) and np.all(np.diag(m.rho) == 1.0)
    assert np.all(np.abs(m.rho) <= 1.0)
    assert m.undefined.tolist() == [False, False, False, True] and m.get("a", "k") == 0.0
    assert m.get("a", "b") == pytest.approx(spearman_rho(data[:, 0], data[:, 1]), abs=1e-12)


def test_spearman_matrix_too_few_rows():
    with pytest.raises(ParameterError):
        spearman_matrix(np.zeros((2, 2)))


def test_feature_report_retains_all(tmp_path):
    data = np.random.default_rng(0).normal(size=(30, 6))
    names = ["sog", "cog", "heading", "length", "width", "draught"]
    m = spearman_matrix(data, names)
    rows = feature_report(m, "heading")
    assert len(rows) == 5 and {r.decision for r in rows} == {"retain"}
    for r in rows:
        assert r.rho == m.get("heading", r.feature)
    write_feature_report(m, "heading", tmp_path / "r.csv")
    assert "retain" in (tmp_path / "r.csv").read_text()


def test_feature_report_flags_undefined_and_unknown_target():
    data = np.random.default_rng(0).normal(size=(10, 3))
    data[:, 2] = 0.0
    m = spearman_matrix(data, ["t", "a", "c"])
    assert [r.decision for r in feature_report(m, "t")] == ["retain", "undefined correlation"]
    with pytest.raises(ParameterError):
        feature_report(m, "nope")
