import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_logistic
from indo.objectives import (LibsvmError, QuadraticProblem, centralized_solution, error_E,
                             error_V, logistic_from_arrays, logistic_load, quadratic_generate,
                             quadratic_solution, read_libsvm)


def finite_diff_grad(f, y, h=1e-6):
    g = np.zeros_like(y)
    for k in range(y.size):
        e = np.zeros_like(y)
        e[k] = h
        g[k] = (f(y + e) - f(y - e)) / (2 * h)
    return g


def test_quadratic_generate_frozen():
    p = quadratic_generate(3, 2, 0)
    np.testing.assert_allclose(p.b[0], [20.10885062, 9.09360141, 2.22920572], rtol=1e-8)
    np.testing.assert_allclose(p.B[0, 0], [76.31375721, -4.04555259, -34.04885978], rtol=1e-8)
    assert p.m == pytest.approx(2.6527635528528757, rel=1e-12)
    assert p.M == pytest.approx(92.27555772777218, rel=1e-12)
    np.testing.assert_allclose(quadratic_solution(p), [21.85015046, 15.89543439, 9.95542659],
                               rtol=1e-8)


def test_quadratic_spectrum_and_data_ranges():
    p = quadratic_generate(6, 8, 11)
    eig = np.linalg.eigvalsh(p.B)
    assert eig.min() >= 1.0 - 1e-9 and eig.max() <= 101.0 + 1e-9
    assert p.b.min() >= 1.0 and p.b.max() <= 31.0
    np.testing.assert_allclose(p.B, np.transpose(p.B, (0, 2, 1)))
    assert p.L == 0.0


def test_quadratic_solution_is_stationary():
    p = quadratic_generate(5, 4, 2)
    y = quadratic_solution(p)
    assert np.linalg.norm(p.aggregate_gradient(y)) < 1e-9
    assert np.allclose(centralized_solution(p), y)


def test_quadratic_derivatives_match_finite_differences():
    p = quadratic_generate(4, 3, 5)
    y = np.random.default_rng(0).standard_normal(4)
    for i in range(3):
        np.testing.assert_allclose(p.gradient(i, y), finite_diff_grad(lambda z: p.value(i, z), y),
                                   rtol=1e-6, atol=1e-5)
    X = np.tile(y, (3, 1))
    np.testing.assert_allclose(p.gradients(X)[1], p.gradient(1, y))
    np.testing.assert_allclose(p.values(X)[2], p.value(2, y))


def test_quadratic_rejects_indefinite_blocks():
    with pytest.raises(ValueError):
        QuadraticProblem(np.array([[[1.0, 0.0], [0.0, -1.0]]]), np.zeros((1, 2)))


def test_logistic_derivatives_match_finite_differences():
    p = random_logistic(3, 5, 40, 0.1, 1)
    y = np.random.default_rng(2).standard_normal(5)
    for i in range(3):
        np.testing.assert_allclose(p.gradient(i, y),
                                   finite_diff_grad(lambda z: p.value(i, z), y), atol=1e-7)
        fd_hess = np.column_stack([
            finite_diff_grad(lambda z: p.gradient(i, z)[k], y) for k in range(5)])
        np.testing.assert_allclose(p.hessian(i, y), fd_hess, atol=1e-6)
        np.testing.assert_allclose(p.hessian_diag(i, y), np.diag(p.hessian(i, y)))


def test_logistic_rescaling_sets_M():
    p = random_logistic(4, 3, 80, 1e-4, 3)
    assert max(p.curvature) == pytest.approx(1.0)
    assert p.M == pytest.approx(1.0 + 1e-4)
    assert p.m == 1e-4


def test_logistic_split_is_a_partition():
    p = random_logistic(7, 3, 50, 1e-2, 0)
    idx = np.sort(np.concatenate(p.index_sets))
    np.testing.assert_array_equal(idx, np.arange(50))
    assert p.sizes.sum() == 50


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.1, 5.0))
def test_logistic_hessian_bounds_and_taylor(seed, spread):
    p = random_logistic(3, 4, 30, 1e-3, 0)
    rng = np.random.default_rng(seed)
    x = spread * rng.standard_normal(4)
    z = x + spread * rng.standard_normal(4)
    for i in range(3):
        eig = np.linalg.eigvalsh(p.hessian(i, x))
        assert eig.min() >= p.m * (1 - 1e-12)
        assert eig.max() <= p.M * (1 + 1e-12)
        rem = p.gradient(i, x) - p.gradient(i, z) + p.hessian(i, x) @ (z - x)
        dist = np.linalg.norm(z - x)
        assert np.linalg.norm(rem) <= min(2 * p.M, 0.5 * p.L * dist) * dist * (1 + 1e-9) + 1e-14


def test_centralized_solution_logistic():
    p = random_logistic(4, 3, 60, 1e-2, 4)
    y = centralized_solution(p)
    assert np.linalg.norm(p.aggregate_gradient(y)) < 1e-10


def test_error_measures():
    y = np.array([3.0, 4.0])
    X = np.array([[3.0, 4.0], [3.0, 9.0]])
    assert error_E(X, y) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        error_E(X, np.zeros(2))
    p = quadratic_generate(2, 2, 0)
    ys = quadratic_solution(p)
    assert error_V(np.tile(ys, (2, 1)), p) == pytest.approx(p.aggregate_value(ys))


LIBSVM_TEXT = """\
+1 1:0.5 3:1
-1 2:2.0
# comment line
+1 1:-1 2:1 3:0.25
"""


def test_read_libsvm(tmp_path):
    path = tmp_path / "toy.libsvm"
    path.write_text(LIBSVM_TEXT)
    X, y = read_libsvm(path)
    np.testing.assert_allclose(X, [[0.5, 0, 1], [0, 2, 0], [-1, 1, 0.25]])
    np.testing.assert_array_equal(y, [1, -1, 1])
    X, _ = read_libsvm(path, n_features=5)
    assert X.shape == (3, 5)


@pytest.mark.parametrize("text,line", [
    ("1 1:2\n0 x:1\n", 2),
    ("1 1:2\n2 0:1\n", 2),
    ("1 1:2\n2 2:1\n3 1:1\n", 3),
    ("abc 1:1\n", 1),
])
def test_read_libsvm_errors_carry_line(tmp_path, text, line):
    path = tmp_path / "bad.libsvm"
    path.write_text(text)
    with pytest.raises(LibsvmError, match="line %d" % line):
        read_libsvm(path)


def test_logistic_load_labels_zero_one(tmp_path):
    path = tmp_path / "zo.libsvm"
    path.write_text("0 1:1 2:1\n1 1:-1\n0 2:3\n1 1:2 2:-1\n")
    p = logistic_load(path, 2, 1e-4, seed=0)
    labels = np.concatenate(p.labels)
    assert set(labels) == {-1.0, 1.0}
    assert p.N == 2 and p.n == 2


def test_logistic_rejects_bad_labels():
    with pytest.raises(ValueError):
        logistic_from_arrays(np.ones((4, 2)), np.array([0, 1, 0, 1]), 2, 0.1)
