import numpy as np
import pytest

from frontalgait.simplex import initial_simplex, nelder_mead


def rosenbrock(x):
    return (1 - x[0]) ** 2 + 100 * (x[1] - x[0] ** 2) ** 2


def test_rosenbrock_minimum():
    res = nelder_mead(rosenbrock, [-1.2, 1.0], step=0.1, xtol=1e-10, ftol=1e-20, max_iter=5000)
    assert res.converged
    np.testing.assert_allclose(res.x, [1.0, 1.0], atol=1e-6)


def test_quadratic_in_four_dimensions():
    c = np.array([0.3, -1.0, 2.0, 0.5])
    res = nelder_mead(lambda x: float(np.sum((x - c) ** 2)), np.zeros(4), step=0.5, max_iter=4000)
    assert res.converged
    np.testing.assert_allclose(res.x, c, atol=1e-5)


def test_best_value_never_increases():
    res = nelder_mead(rosenbrock, [-1.2, 1.0], step=0.1, max_iter=300)
    h = np.array(res.history)
    assert np.all(np.diff(h) <= 0.0)


def test_non_finite_values_treated_as_infinite():
    def f(x):
        return np.nan if x[0] < 0 else (x[0] - 1) ** 2 + x[1] ** 2

    res = nelder_mead(f, [0.5, 0.5], step=0.2, max_iter=2000)
    assert np.isfinite(res.fun)
    np.testing.assert_allclose(res.x, [1.0, 0.0], atol=1e-5)


def test_stops_at_target_value():
    res = nelder_mead(lambda x: float(x @ x), [1.0, 1.0], step=0.3, fstop=1e-4)
    assert res.converged and res.message == "target value reached"
    assert res.fun <= 1e-4


def test_iteration_limit_reported():
    res = nelder_mead(rosenbrock, [-1.2, 1.0], step=0.1, max_iter=5)
    assert not res.converged and res.iterations == 5


def test_initial_simplex_shape():
    s = initial_simplex(np.array([1.0, 2.0, 3.0]), [0.1, 0.2, 0.3])
    assert s.shape == (4, 3)
    np.testing.assert_allclose(s[2], [1.0, 2.2, 3.0])


def test_already_optimal_start():
    res = nelder_mead(lambda x: float(x @ x), [0.0, 0.0], step=0.1)
    assert res.fun == pytest.approx(0.0) and res.iterations == 0
