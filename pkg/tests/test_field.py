import numpy as np
import pytest

from twinforge.errors import ConfigError, FieldFormatError, ShapeError
from twinforge.field import (QuadratureWeights, SpaceTimeField, build_grid, read_field, trapezoid_weights,
                             uniform_time_weights, weighted_sq_norm, write_field)


class TestGrid:
    def test_two_by_two_endpoints(self):
        g = build_grid(2, 2, 1.0, (0, 1))
        assert g.t_nodes.tolist() == [0.0, 1.0]
        assert g.x_nodes.tolist() == [0.0, 1.0]

    def test_uniform_spacing(self):
        g = build_grid(101, 100, 1.0, (0, 1))
        assert g.dt == pytest.approx(0.01, rel=1e-14)
        assert g.dx == pytest.approx(1 / 99, rel=1e-14)
        assert np.allclose(np.diff(g.x_nodes), g.dx, rtol=1e-12)
        assert g.t_nodes[0] == 0.0 and g.t_nodes[-1] == 1.0

    @pytest.mark.parametrize("args", [(1, 5, 1.0, (0, 1)), (5, 1, 1.0, (0, 1)), (3, 3, 0.0, (0, 1)),
                                      (3, 3, 1.0, (1, 1)), (3, 3, -1.0, (0, 1))])
    def test_rejects_degenerate(self, args):
        with pytest.raises(ConfigError):
            build_grid(*args)

    def test_nodes_are_read_only(self):
        g = build_grid(3, 4, 1.0)
        with pytest.raises(ValueError):
            g.x_nodes[0] = 5.0


class TestTrapezoid:
    def test_corners_of_unit_square(self):
        w = trapezoid_weights(build_grid(2, 2, 1.0)).w
        assert np.array_equal(w, np.full((2, 2), 0.25))

    def test_three_by_three(self):
        w = trapezoid_weights(build_grid(3, 3, 1.0)).w
        assert w[1, 1] == pytest.approx(0.25)
        assert w[0, 0] == pytest.approx(0.0625)
        assert w[0, 1] == pytest.approx(0.125)

    def test_exact_for_constants(self, rng):
        for _ in range(20):
            M, N = rng.integers(2, 60, size=2)
            T = rng.uniform(0.1, 5.0)
            lo = rng.uniform(-2, 2)
            hi = lo + rng.uniform(0.1, 3)
            w = trapezoid_weights(build_grid(M, N, T, (lo, hi))).w
            assert np.all(w > 0)
            assert np.sum(w) == pytest.approx(T * (hi - lo), rel=1e-12)

    def test_uniform_time_weights_are_time_independent(self):
        g = build_grid(7, 9, 2.0)
        q = uniform_time_weights(g)
        assert q.is_time_independent()
        assert not trapezoid_weights(g).is_time_independent()
        assert np.sum(q.w) == pytest.approx(2.0, rel=1e-12)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            QuadratureWeights(np.array([[1.0, 0.0], [1.0, 1.0]]))


class TestWeightedNorm:
    def setup_method(self):
        self.g = build_grid(5, 6, 1.0)
        self.w = trapezoid_weights(self.g)

    def test_zero_field(self):
        assert weighted_sq_norm(SpaceTimeField(np.zeros(self.g.shape), self.g), self.w) == 0.0

    def test_constant_one(self):
        assert weighted_sq_norm(SpaceTimeField(np.ones(self.g.shape), self.g), self.w) == pytest.approx(1.0, rel=1e-12)

    def test_hand_example(self):
        # two nodes selected by the mask, values 1 and -1, weights 0.5 each
        g = build_grid(2, 2, 1.0)
        w = QuadratureWeights(np.array([[0.5, 0.5], [7.0, 7.0]]))
        f = SpaceTimeField(np.array([[1.0, -1.0], [3.0, 3.0]]), g)
        mask = np.array([[True, True], [False, False]])
        assert weighted_sq_norm(f, w, mask) == pytest.approx(1.0)

    def test_mask_additivity_and_positivity(self, rng):
        for _ in range(10):
            f = SpaceTimeField(rng.standard_normal(self.g.shape), self.g)
            mask = rng.random(self.g.shape) < 0.4
            a, b = weighted_sq_norm(f, self.w, mask), weighted_sq_norm(f, self.w, ~mask)
            assert a >= 0 and b >= 0
            assert a + b == pytest.approx(weighted_sq_norm(f, self.w), rel=1e-13)

    def test_zero_only_on_zero_field(self, rng):
        v = np.zeros(self.g.shape)
        v[rng.integers(5), rng.integers(6)] = 1e-6
        assert weighted_sq_norm(SpaceTimeField(v, self.g), self.w) > 0

    def test_multi_variable_sum(self):
        v = np.stack([np.ones(self.g.shape), 2 * np.ones(self.g.shape)])
        assert weighted_sq_norm(SpaceTimeField(v, self.g), self.w) == pytest.approx(5.0)

    def test_shape_mismatch(self):
        f = SpaceTimeField(np.zeros(self.g.shape), self.g)
        with pytest.raises(ShapeError):
            weighted_sq_norm(f, trapezoid_weights(build_grid(4, 6, 1.0)))
        with pytest.raises(ShapeError):
            weighted_sq_norm(f, self.w, np.ones((2, 2), bool))


class TestSpaceTimeField:
    def test_rejects_nonfinite_and_bad_shape(self):
        g = build_grid(3, 3, 1.0)
        with pytest.raises(ValueError):
            SpaceTimeField(np.full((3, 3), np.nan), g)
        with pytest.raises(ShapeError):
            SpaceTimeField(np.zeros((3, 4)), g)

    def test_difference(self):
        g = build_grid(3, 3, 1.0)
        d = SpaceTimeField(np.ones((3, 3)), g) - SpaceTimeField(np.zeros((3, 3)), g)
        assert np.array_equal(d.u, np.ones((3, 3)))


class TestFieldIO:
    def test_round_trip_is_bit_exact(self, tmp_path, rng):
        g = build_grid(7, 5, 1.3, (-0.5, 2.0))
        f = SpaceTimeField(rng.standard_normal((2, 7, 5)) * 10.0 ** rng.integers(-20, 20, (2, 7, 5)), g)
        write_field(tmp_path / "f.csv", f)
        back = read_field(tmp_path / "f.csv")
        assert back.grid == g
        assert np.array_equal(back.values, f.values)

    def test_header_format(self, tmp_path):
        g = build_grid(2, 3, 1.0)
        write_field(tmp_path / "f.csv", SpaceTimeField(np.zeros((2, 3)), g))
        lines = (tmp_path / "f.csv").read_text().splitlines()
        assert lines[0].startswith('# {"k": 1, "M": 2, "N": 3')
        assert len(lines) == 1 + 6
        assert lines[2].split(",")[:2] == ["0", "0.5"]

    def test_nan_rejected(self, tmp_path):
        g = build_grid(2, 2, 1.0)
        write_field(tmp_path / "f.csv", SpaceTimeField(np.zeros((2, 2)), g))
        p = tmp_path / "f.csv"
        lines = p.read_text().splitlines()
        lines[-1] = "1,1,nan"
        p.write_text("\n".join(lines) + "\n")
        with pytest.raises(FieldFormatError):
            read_field(p)

    def test_missing_row_rejected(self, tmp_path):
        g = build_grid(3, 2, 1.0)
        write_field(tmp_path / "f.csv", SpaceTimeField(np.zeros((3, 2)), g))
        p = tmp_path / "f.csv"
        p.write_text("\n".join(p.read_text().splitlines()[:-1]) + "\n")
        with pytest.raises(ShapeError):
            read_field(p)

    def test_missing_header_rejected(self, tmp_path):
        p = tmp_path / "f.csv"
        p.write_text("0,0,1\n")
        with pytest.raises(FieldFormatError):
            read_field(p)
