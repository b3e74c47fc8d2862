import numpy as np
import pytest

from twinforge.errors import NumericalError
from twinforge.optimize import BFGSConfig, bfgs


def quadratic(A, b):
    def vg(x):
        return 0.5 * x @ A @ x - b @ x, A @ x - b

    return vg


class TestBFGS:
    def test_one_dimensional_quadratic(self):
        res = bfgs(quadratic(np.array([[4.0]]), np.array([2.0])), [3.0])
        assert res.converged and res.iterations <= 3
        assert res.x[0] == pytest.approx(0.5, abs=1e-8)

    def test_spd_quadratic(self, rng):
        B = rng.standard_normal((5, 5))
        A = B @ B.T + 5 * np.eye(5)
        b = rng.standard_normal(5)
        res = bfgs(quadratic(A, b), np.zeros(5), BFGSConfig(grad_tol=1e-10))
        assert res.converged
        assert np.allclose(res.x, np.linalg.solve(A, b), atol=1e-9)

    def test_rosenbrock(self):
        def vg(x):
            a, b = x
            return (1 - a) ** 2 + 100 * (b - a * a) ** 2, np.array([-2 * (1 - a) - 400 * a * (b - a * a), 200 * (b - a * a)])

        res = bfgs(vg, [-1.2, 1.0], BFGSConfig(grad_tol=1e-8, max_iters=500))
        assert res.converged
        assert np.allclose(res.x, [1.0, 1.0], atol=1e-6)

    def test_start_at_optimum(self):
        res = bfgs(quadratic(np.eye(3), np.ones(3)), np.ones(3))
        assert res.iterations == 0 and res.converged and res.evaluations == 1

    def test_line_search_failure_is_flagged(self):
        # the reported gradient points uphill, so no trial can satisfy Armijo
        res = bfgs(lambda x: (float(x[0]), np.array([-1.0])), [0.0])
        assert res.line_search_failed and not res.converged
        assert res.x[0] == 0.0

    def test_numerical_error_counts_as_infinite(self):
        calls = []

        def value(x):
            calls.append(float(x[0]))
            if x[0] < -1.0:
                raise NumericalError("outside the stable range")
            return float((x[0] + 0.5) ** 2)

        res = bfgs(lambda x: (value(x), 2 * (x + 0.5)), [30.0], value=value)
        assert res.converged
        assert res.x[0] == pytest.approx(-0.5, abs=1e-8)
        assert min(calls) < -1.0  # a failing trial was attempted and survived

    def test_iteration_cap(self):
        res = bfgs(quadratic(np.diag([1.0, 1e4]), np.ones(2)), np.zeros(2), BFGSConfig(max_iters=1))
        assert res.iterations == 1 and not res.converged

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            BFGSConfig(c1=1.5)
