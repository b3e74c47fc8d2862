import numpy as np
import pytest

from conftest import empty_twin
from twinforge import twin as tw
from twinforge import verify as vf
from twinforge.basis import BasisId, Dictionary
from twinforge.field import build_grid, trapezoid_weights
from twinforge.graybox import true_flux

U = BasisId.univariate


class TestTrueFlux:
    @pytest.mark.parametrize("kind", ["buckley_leverett", "burgers", "linear_advection"])
    def test_matches_graybox_flux(self, kind, rng):
        u = rng.uniform(0, 1, 50)
        F, dF = vf.TrueFlux(kind, speed=0.7)(u, None)
        Fr, dFr = true_flux(kind, u, 0.7)
        assert np.allclose(F, Fr, rtol=1e-14) and np.allclose(dF, dFr, rtol=1e-14)

    def test_derivative_by_differences(self, rng):
        f = vf.TrueFlux("buckley_leverett", eps=0.05)
        u = rng.uniform(0.05, 0.95, 20)
        h = 1e-6
        fd = (f(u + h, None)[0] - f(u - h, None)[0]) / (2 * h)
        assert np.allclose(f(u, None)[1], fd, rtol=1e-7)

    def test_unknown_kind(self):
        with pytest.raises(Exception):
            vf.TrueFlux("euler")


class TestIntegratedError:
    def test_example(self):
        g = build_grid(2, 2, 1.0)
        w = np.array([[1.0, 2.0], [4.0, 8.0]])
        est = np.array([[1.0, 2.0], [0.0, 0.0]])
        assert vf.integrated_gradient_error(est, np.zeros((2, 2)), w) == pytest.approx(3.0)
        assert vf.integrated_gradient_error(est, est, grid=g) == 0.0

    def test_density_scaling(self, rng):
        # a gradient equal to w * density has error sum w * density**2
        g = build_grid(4, 5, 1.0)
        w = trapezoid_weights(g).w
        dens = rng.standard_normal(g.shape)
        assert vf.integrated_gradient_error(w * dens, np.zeros(g.shape), grid=g) == pytest.approx(np.sum(w * dens**2))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            vf.integrated_gradient_error(np.zeros(3), np.zeros(4), np.ones(3))


class TestFluxRecovery:
    def test_empty_dictionary_has_unit_error(self):
        assert vf.derivative_error(Dictionary(), "buckley_leverett", 0.1, 0.9) == pytest.approx(1.0)

    def test_offset_is_invisible_to_derivative(self, wide_run, wide_trained):
        d, _ = wide_trained
        shifted = d.added(U(-40, 0), 3.0)
        a = vf.flux_recovery_report(d, "buckley_leverett", wide_run.field)
        b = vf.flux_recovery_report(shifted, "buckley_leverett", wide_run.field)
        assert abs(a.rel_l2_derivative - b.rel_l2_derivative) <= 1e-10
        assert b.offset_mean - a.offset_mean == pytest.approx(1.5, abs=1e-9)
        assert abs(b.offset_spread - a.offset_spread) <= 1e-9
        assert a.sweep_monotone is None and a.sweep_mismatch == []

    def test_perturbation_sweep(self, wide_run):
        twin = empty_twin(wide_run)
        sweep = vf.perturbation_sweep(twin, wide_run.field, "buckley_leverett", (0.0, 0.01, 0.05, 0.1))
        assert sweep[0] <= 1e-9
        assert all(b > a for a, b in zip(sweep, sweep[1:]))

    def test_report_sweep(self, wide_run, wide_trained):
        d, _ = wide_trained
        twin = tw.TwinModel.from_gray(d, wide_run.field, wide_run.substeps)
        rep = vf.flux_recovery_report(d, "buckley_leverett", wide_run.field, twin)
        assert rep.sweep_monotone is True and len(rep.sweep_mismatch) == 3
        assert rep.u_min == pytest.approx(wide_run.field.u.min())


class TestReferenceGradient:
    def test_agrees_with_oracle_differences(self, wide_run, rng):
        twin = empty_twin(wide_run)
        f = tw.TerminalQuadratic(0.5)
        c = np.zeros(wide_run.field.grid.shape)
        ref = vf.reference_gradient(twin, "buckley_leverett", f, c)
        oracle = vf.oracle_twin(twin, "buckley_leverett")
        comps = rng.choice(c.size, 4, replace=False)
        fd = tw.fd_gradient(lambda cc: tw.evaluate(oracle, f, cc), c, 1e-5, comps)
        assert np.allclose(ref.d_control.reshape(-1)[comps], fd, rtol=1e-5, atol=1e-12)
