import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import array_dataset
from oracles import gauss_solve
from relcast.errors import ConfigurationError, NumericalError, UsageError
from relcast.regress import (
    Engine,
    Kernel,
    MetricsReport,
    RegressorSpec,
    compare_engines,
    evaluate,
    fit,
    kernel_matrix,
    metrics,
    metrics_csv,
    metrics_table,
    predict,
)
from relcast.regress.linalg import cholesky, solve_symmetric, spd_solve
from relcast.regress.tree import LEAF, grow_tree, tree_predict

ALL_SPECS = [
    RegressorSpec.parse("linear"),
    RegressorSpec.parse("ridge"),
    RegressorSpec.parse("kernel-ridge-linear"),
    RegressorSpec.parse("kernel-ridge-poly"),
    RegressorSpec.parse("kernel-ridge-rbf"),
    RegressorSpec.parse("kernel-ridge-sigmoid"),
    RegressorSpec.parse("knearest"),
    RegressorSpec.parse("radius", radius=3.0),
    RegressorSpec.parse("tree"),
]


# --- linear algebra --------------------------------------------------------


@pytest.mark.parametrize("seed", range(20))
def test_spd_solve_matches_gauss_oracle(seed):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(5, 5))
    A = M @ M.T + 0.5 * np.eye(5)
    b = rng.normal(size=5)
    assert np.max(np.abs(spd_solve(A, b) - np.array(gauss_solve(A.tolist(), b.tolist())))) < 1e-8


def test_cholesky_rejects_singular_and_indefinite():
    with pytest.raises(NumericalError, match="singular"):
        cholesky(np.array([[1.0, 1.0], [1.0, 1.0 + 1e-15]]))
    with pytest.raises(NumericalError):
        cholesky(np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_solve_symmetric_fallback_on_indefinite():
    A = np.array([[1.0, 2.0], [2.0, 1.0]])
    b = np.array([1.0, 0.0])
    x, fell_back = solve_symmetric(A, b)
    assert fell_back
    assert np.allclose(x, gauss_solve(A.tolist(), b.tolist()), atol=1e-12)
    _, fell_back = solve_symmetric(np.eye(2), b)
    assert not fell_back


# --- kernels ---------------------------------------------------------------


@pytest.mark.parametrize("kernel", list(Kernel))
def test_kernel_matrix_symmetric(kernel):
    X = np.random.default_rng(1).normal(size=(30, 4))
    K = kernel_matrix(kernel, X, gamma=0.3, degree=3, coef0=1.0)
    assert np.max(np.abs(K - K.T)) < 1e-12
    if kernel is Kernel.RBF:
        assert np.all(np.diag(K) == 1.0)


def test_kernel_values_by_hand():
    x = np.array([[1.0, 2.0]])
    z = np.array([[3.0, -1.0]])
    hp = dict(gamma=0.5, degree=2, coef0=1.0)
    assert kernel_matrix(Kernel.LINEAR, x, z, **hp)[0, 0] == 1.0
    assert kernel_matrix(Kernel.POLYNOMIAL, x, z, **hp)[0, 0] == pytest.approx(2.25)
    assert kernel_matrix(Kernel.RBF, x, z, **hp)[0, 0] == pytest.approx(math.exp(-6.5))
    assert kernel_matrix(Kernel.SIGMOID, x, z, **hp)[0, 0] == pytest.approx(math.tanh(1.5))


# --- spec ------------------------------------------------------------------


def test_spec_parse_and_labels():
    s = RegressorSpec.parse("kernel-ridge-poly", alpha=0.5)
    assert s.engine is Engine.KERNEL_RIDGE and s.kernel is Kernel.POLYNOMIAL
    assert s.label == "kernel-ridge-poly"
    assert RegressorSpec.from_dict(s.to_dict()) == s
    r = s.resolved(5)
    assert r.hyperparameters == {"alpha": 0.5, "degree": 3, "gamma": 0.2, "coef0": 1.0}


@pytest.mark.parametrize(
    "args, kw",
    [
        (("linear",), {"alpha": 1.0}),
        (("knearest",), {"degree": 2}),
        (("kernel-ridge-rbf",), {"degree": 2}),
        (("ridge",), {"alpha": 0.0}),
        (("knearest",), {"k": 0}),
        (("nope",), {}),
        (("kernel-ridge",), {}),
        (("kernel-ridge-poly", "rbf"), {}),
    ],
)
def test_spec_rejects_invalid(args, kw):
    with pytest.raises(ConfigurationError):
        RegressorSpec.parse(*args, **kw)


# --- fitting ---------------------------------------------------------------


def test_ridge_constant_targets():
    X = np.random.default_rng(2).normal(size=(20, 3))
    m = fit(RegressorSpec.parse("ridge"), array_dataset(X, np.full(20, 7.5)))
    assert np.linalg.norm(m.payload["weights"]) < 1e-8
    assert m.payload["intercept"] == pytest.approx(7.5, abs=1e-12)


@pytest.mark.parametrize("seed", range(20))
def test_kernel_ridge_linear_equals_ridge(seed):
    rng = np.random.default_rng(100 + seed)
    n, d = rng.integers(5, 30), rng.integers(1, 6)
    X = rng.normal(size=(n, d)) * rng.uniform(0.5, 5, d)
    y = X @ rng.normal(size=d) + rng.normal(size=n)
    alpha = float(rng.uniform(0.1, 3))
    data = array_dataset(X, y)
    ridge = fit(RegressorSpec.parse("ridge", alpha=alpha), data)
    krr = fit(RegressorSpec.parse("kernel-ridge-linear", alpha=alpha), data)
    Q = rng.normal(size=(40, d)) * 3
    assert np.max(np.abs(ridge.predict(Q) - krr.predict(Q))) < 1e-6


def test_kernel_ridge_poly_recovers_square():
    x = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
    m = fit(RegressorSpec.parse("kernel-ridge-poly", degree=2, alpha=1e-9), array_dataset(x[:, None], x**2))
    for q in (-1.5, 0.5, 1.7):
        assert abs(predict(m, np.array([q])) - q * q) < 1e-4


def test_linear_recovers_affine_function():
    rng = np.random.default_rng(3)
    X = rng.uniform(-5, 5, size=(50, 3))
    y = X @ np.array([1.5, -2.0, 0.25]) + 4.0
    m = fit(RegressorSpec.parse("linear"), array_dataset(X, y))
    assert np.allclose(m.predict(X), y, atol=1e-9)


def test_linear_singular_reports_collinearity():
    rng = np.random.default_rng(4)
    a = rng.normal(size=30)
    X = np.column_stack([a, 2 * a])
    with pytest.raises(NumericalError, match="collinear"):
        fit(RegressorSpec.parse("linear"), array_dataset(X, a))
    # the penalty resolves it
    fit(RegressorSpec.parse("ridge"), array_dataset(X, a))


def test_ridge_continuous_in_alpha():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(25, 3))
    y = rng.normal(size=25)
    data = array_dataset(X, y)
    a = fit(RegressorSpec.parse("ridge", alpha=0.7), data).predict(X)
    b = fit(RegressorSpec.parse("ridge", alpha=0.7 + 1e-8), data).predict(X)
    assert np.max(np.abs(a - b)) < 1e-6


def test_sigmoid_flags_indefinite(split900):
    train, test = split900
    m = fit(RegressorSpec.parse("kernel-ridge-sigmoid"), train)
    assert m.info["indefinite_kernel_system"] is True
    assert np.all(np.isfinite(m.predict(test.X)))
    assert "indefinite_kernel_system" not in fit(RegressorSpec.parse("kernel-ridge-rbf"), train).info


def test_fit_rejects_empty_and_nonfinite():
    with pytest.raises(UsageError):
        fit(RegressorSpec.parse("ridge"), array_dataset(np.ones((1, 1)), [1.0]).subset([]))
    with pytest.raises(NumericalError):
        fit(RegressorSpec.parse("ridge"), array_dataset([[0.0], [1.0]], [1.0, math.nan]))


# --- neighbors -------------------------------------------------------------


def test_knearest_exact_recall_and_midpoint():
    X = np.array([[0.0], [2.0], [10.0]])
    y = np.array([1.0, 3.0, 50.0])
    m = fit(RegressorSpec.parse("knearest", k=2), array_dataset(X, y))
    assert m.predict(X).tolist() == y.tolist()
    assert predict(m, np.array([1.0])) == pytest.approx(2.0, rel=1e-15)


def test_knearest_train_errors_zero(split900):
    train, _ = split900
    m = fit(RegressorSpec.parse("knearest"), train)
    r = evaluate(m, train)
    assert (r.mae, r.max_abs, r.rmse) == (0.0, 0.0, 0.0)


def test_radius_fallback_and_support():
    X = np.array([[0.0], [1.0], [2.0]])
    y = np.array([1.0, 2.0, 6.0])
    data = array_dataset(X, y)
    m = fit(RegressorSpec.parse("radius", radius=0.5), data)
    Z = m.encode(np.array([[50.0], [1.0]]))
    vals, support = m.predict_encoded(Z)
    assert vals[0] == pytest.approx(3.0) and not support[0]
    assert vals[1] == 2.0 and support[1]


# --- tree ------------------------------------------------------------------


def test_tree_exact_recall(split900):
    train, _ = split900
    m = fit(RegressorSpec.parse("tree"), train)
    assert np.array_equal(m.predict(train.X), train.y)


def test_tree_mse_non_increasing_with_depth():
    rng = np.random.default_rng(6)
    X = rng.uniform(size=(120, 3))
    y = np.sin(6 * X[:, 0]) + X[:, 1] ** 2 + 0.1 * rng.normal(size=120)
    prev = math.inf
    for depth in range(0, 10):
        t = grow_tree(X, y, depth)
        mse = float(np.mean((tree_predict(t, X) - y) ** 2))
        assert mse <= prev + 1e-15
        assert t.depth() <= depth
        prev = mse


def test_tree_structure_valid():
    rng = np.random.default_rng(7)
    X = rng.uniform(size=(60, 2))
    t = grow_tree(X, X[:, 0] + rng.normal(size=60), None, 4)
    leaves = t.feature == LEAF
    assert np.all(np.isfinite(t.value[leaves]))
    internal = np.flatnonzero(~leaves)
    children = np.concatenate([t.left[internal], t.right[internal]])
    assert sorted(children.tolist()) == list(range(1, t.n_nodes))


def test_tree_tie_break_lowest_feature():
    # both columns separate the targets equally well
    X = np.array([[0.0, 0.0], [1.0, 1.0]])
    t = grow_tree(X, np.array([0.0, 1.0]), 1)
    assert t.feature[0] == 0


# --- metrics ---------------------------------------------------------------


def test_metrics_examples():
    r = metrics([0.0, 0.0], [3.0, -4.0])
    assert (r.mae, r.max_abs) == (3.5, 4.0)
    assert r.rmse == pytest.approx(math.sqrt(12.5))
    assert math.isnan(r.r2) and math.isnan(r.ev)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=50))
def test_metric_identities(ys):
    y = np.array(ys)
    if np.var(y) < 1e-6:
        return
    perfect = metrics(y, y)
    assert (perfect.mae, perfect.max_abs, perfect.rmse, perfect.ev, perfect.r2) == (0, 0, 0, 1, 1)
    mean = metrics(y, np.full_like(y, y.mean()))
    assert abs(mean.r2) < 1e-9 and abs(mean.ev) < 1e-9


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.tuples(st.floats(-100, 100), st.floats(-100, 100)), min_size=3, max_size=30),
    st.floats(0.1, 10),
    st.floats(-50, 50),
)
def test_metric_affine_invariance(pairs, a, b):
    y = np.array([p[0] for p in pairs])
    yhat = np.array([p[1] for p in pairs])
    if np.var(y) < 1e-3:
        return
    r1 = metrics(y, yhat)
    r2 = metrics(a * y + b, a * yhat + b)
    assert r2.r2 == pytest.approx(r1.r2, rel=1e-6, abs=1e-9)
    assert r2.ev == pytest.approx(r1.ev, rel=1e-6, abs=1e-9)
    assert r2.mae == pytest.approx(a * r1.mae, rel=1e-9, abs=1e-9)
    assert r2.max_abs == pytest.approx(a * r1.max_abs, rel=1e-9, abs=1e-9)
    assert r2.rmse == pytest.approx(a * r1.rmse, rel=1e-9, abs=1e-9)
    assert r1.mae <= r1.max_abs + 1e-12
    assert r1.r2 <= r1.ev + 1e-12


def test_metrics_errors():
    with pytest.raises(UsageError):
        metrics([], [])
    with pytest.raises(UsageError):
        metrics([1.0], [1.0, 2.0])


def test_metrics_report_dict():
    r = MetricsReport(1.0, 2.0, 1.5, 0.9, 0.8, 3)
    assert MetricsReport.from_dict(r.as_dict()) == r


# --- comparison ------------------------------------------------------------


def test_compare_engines_reference_set(split900):
    train, test = split900
    specs = [RegressorSpec.parse("kernel-ridge-poly"), RegressorSpec.parse("kernel-ridge-rbf"), RegressorSpec.parse("knearest")]
    rows = compare_engines(specs, train, test)
    assert [r.dataset for r in rows] == ["train", "test"] * 3
    assert all(r.report.r2 >= 0.99 for r in rows)
    table = metrics_table(rows)
    assert table.splitlines()[0].split() == ["ML", "Model", "Data", "Set", "MAE", "MAX", "RMSE", "EV", "R2"]
    csv_text = metrics_csv(rows)
    assert csv_text.splitlines()[0] == "engine,dataset,mae,max,rmse,ev,r2"
    assert len(csv_text.splitlines()) == 7


def test_compare_engines_empty_test_and_duplicates(split900):
    train, test = split900
    spec = RegressorSpec.parse("ridge")
    rows = compare_engines([spec, spec], train, test.subset([]))
    assert len(rows) == 4
    assert rows[0].report == rows[2].report
    assert rows[1].error and rows[3].error
    assert "error:" in metrics_table(rows)
    with pytest.raises(UsageError):
        compare_engines([], train, test)


def test_compare_engines_failure_isolated():
    a = np.arange(10.0)
    data = array_dataset(np.column_stack([a, 2 * a]), a)
    rows = compare_engines([RegressorSpec.parse("linear"), RegressorSpec.parse("ridge")], data, data)
    assert rows[0].error and "collinear" in rows[0].error
    assert rows[2].report is not None


# --- determinism -----------------------------------------------------------


@pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: s.label)
def test_fit_deterministic(spec, split900):
    train, test = split900
    a = fit(spec, train)
    b = fit(spec, train)
    for k, v in a.payload.items():
        assert np.asarray(v).tobytes() == np.asarray(b.payload[k]).tobytes()
    assert a.predict(test.X).tobytes() == b.predict(test.X).tobytes()


@pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: s.label)
def test_single_point_predict_matches_batch(spec, split900):
    train, test = split900
    m = fit(spec, train)
    batch = m.predict(test.X[:10])
    single = np.array([predict(m, x) for x in test.X[:10]])
    assert np.allclose(batch, single, rtol=1e-12, atol=1e-9)
    assert predict(m, test.samples[0].values) == pytest.approx(batch[0], rel=1e-12)
