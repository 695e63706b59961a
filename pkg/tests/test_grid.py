import numpy as np
import pytest

from logkge.grid import (
    Grid1D,
    GridFunction,
    forward_diff,
    inner,
    laplacian,
    norm_h1,
    norm_l2,
    norm_linf,
    quad,
    quad_l1,
    seminorm_h1,
)


@pytest.fixture
def g():
    return Grid1D(a=-1.0, b=1.0, N=64)


def random_gf(g, rng):
    return GridFunction.from_core(rng.standard_normal(g.N))


class TestGrid1D:
    def test_mesh_size(self):
        g = Grid1D(0.0, 2.0, 8)
        assert g.h == 0.25
        assert g.h * g.N == g.b - g.a

    def test_nodes(self, g):
        x = g.nodes
        assert x.shape == (g.N + 1,)
        assert x[0] == g.a
        assert x[-1] == pytest.approx(g.b, abs=1e-14)

    def test_invalid(self):
        with pytest.raises(ValueError):
            Grid1D(1.0, 0.0, 8)
        with pytest.raises(ValueError):
            Grid1D(0.0, 1.0, 3)


class TestGridFunction:
    def test_endpoint_normalized(self, g):
        vals = np.arange(g.N + 1, dtype=float)
        u = GridFunction(vals)
        assert u.values[-1] == u.values[0]

    def test_immutable(self, g):
        u = GridFunction.zeros(g)
        with pytest.raises(ValueError):
            u.values[0] = 1.0

    def test_sample_constant(self, g):
        u = GridFunction.sample(g, lambda x: 3.0)
        assert np.all(u.values == 3.0)

    def test_dimension_mismatch_rejected(self, g):
        other = Grid1D(-1.0, 1.0, 32)
        u = GridFunction.zeros(other)
        with pytest.raises(ValueError):
            laplacian(u, g)


class TestOperators:
    def test_laplacian_of_constant(self, g):
        u = GridFunction.sample(g, lambda x: 7.5)
        np.testing.assert_allclose(laplacian(u, g).values, 0.0, atol=1e-12)

    @pytest.mark.parametrize("l", [1, 3, 7])
    def test_laplacian_eigenfunction(self, g, l):
        # sine modes are eigenfunctions of the periodic three-point stencil
        # with eigenvalue -s_l^2, s_l = (2/h) sin(l pi / N); cross-checked
        # against the direct stencil application by construction
        u = GridFunction.sample(
            g, lambda x: np.sin(2 * np.pi * l * (x - g.a) / (g.b - g.a))
        )
        s_l = 2.0 / g.h * np.sin(l * np.pi / g.N)
        np.testing.assert_allclose(
            laplacian(u, g).values, -(s_l**2) * u.values, atol=1e-9
        )

    def test_wrap_always_applied(self, g):
        # a linear ramp is not periodic; the operator wraps it regardless,
        # giving slope 1 in the interior and a jump at the seam
        u = GridFunction(g.nodes - g.a)
        d = forward_diff(u, g)
        np.testing.assert_allclose(d.core[:-1], 1.0, atol=1e-12)
        assert d.core[-1] == pytest.approx((0.0 - (g.b - g.a - g.h)) / g.h)

    def test_forward_diff_constant(self, g):
        u = GridFunction.sample(g, lambda x: -2.0)
        np.testing.assert_allclose(forward_diff(u, g).values, 0.0, atol=1e-14)

    def test_laplacian_is_composition(self, g):
        # backward difference of the forward difference
        rng = np.random.default_rng(0)
        u = random_gf(g, rng)
        d = forward_diff(u, g).core
        back = (d - np.roll(d, 1)) / g.h
        np.testing.assert_allclose(laplacian(u, g).core, back, rtol=1e-12, atol=1e-12)


class TestNormsAndQuadrature:
    def test_l2_of_one(self, g):
        u = GridFunction.sample(g, lambda x: 1.0)
        assert norm_l2(u, g) == pytest.approx(np.sqrt(g.b - g.a), rel=1e-14)

    def test_h1_seminorm_of_constant(self, g):
        u = GridFunction.sample(g, lambda x: 1.0)
        assert seminorm_h1(u, g) == 0.0

    def test_linf_of_constant(self, g):
        u = GridFunction.sample(g, lambda x: -3.25)
        assert norm_linf(u, g) == 3.25

    def test_h1_combines(self, g):
        rng = np.random.default_rng(1)
        u = random_gf(g, rng)
        assert norm_h1(u, g) == pytest.approx(
            np.hypot(norm_l2(u, g), seminorm_h1(u, g)), rel=1e-14
        )
        assert norm_h1(u, g) >= norm_l2(u, g)

    def test_quad_constant(self, g):
        assert quad(GridFunction.sample(g, lambda x: 1.0), g) == pytest.approx(
            g.b - g.a, rel=1e-14
        )
        u = GridFunction.sample(g, lambda x: -2.0)
        assert quad_l1(u, g) == pytest.approx(2 * (g.b - g.a), rel=1e-14)
        assert quad(u, g) == pytest.approx(-2 * (g.b - g.a), rel=1e-14)

    def test_quad_of_periodic_sine(self, g):
        u = GridFunction.sample(g, lambda x: np.sin(2 * np.pi * (x - g.a) / (g.b - g.a)))
        assert abs(quad(u, g)) < 1e-13


class TestSummationByParts:
    def test_gradient_identity(self, g):
        # -(lap u, u) = ||D+ u||^2 for 100 random grid functions
        rng = np.random.default_rng(2)
        for _ in range(100):
            u = random_gf(g, rng)
            lhs = inner(laplacian(u, g), u, g)
            rhs = seminorm_h1(u, g) ** 2
            assert abs(-lhs - rhs) <= 1e-12 * rhs

    def test_product_identity_with_time_difference(self, g):
        # h sum u v = (||u||^2 + ||v||^2)/2 - tau^2/2 ||(v-u)/tau||^2, any tau
        rng = np.random.default_rng(3)
        for tau in [1e-3, 0.7, 13.0]:
            u, v = random_gf(g, rng), random_gf(g, rng)
            lhs = inner(u, v, g)
            dt = GridFunction.from_core((v.core - u.core) / tau)
            rhs = (
                0.5 * norm_l2(u, g) ** 2
                + 0.5 * norm_l2(v, g) ** 2
                - 0.5 * tau**2 * norm_l2(dt, g) ** 2
            )
            assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), 1.0)

    def test_cross_gradient_identity(self, g):
        # h sum (D+ v)(D+ u) = 1/(2h) sum [(v_{j+1}-u_j)^2 + (u_{j+1}-v_j)^2]
        #                      - tau^2/h^2 ||(v-u)/tau||^2
        rng = np.random.default_rng(4)
        for tau in [0.1, 2.0]:
            u, v = random_gf(g, rng), random_gf(g, rng)
            lhs = inner(forward_diff(v, g), forward_diff(u, g), g)
            uj, vj = u.core, v.core
            sq = (np.roll(vj, -1) - uj) ** 2 + (np.roll(uj, -1) - vj) ** 2
            dt = GridFunction.from_core((vj - uj) / tau)
            rhs = np.sum(sq) / (2 * g.h) - tau**2 / g.h**2 * norm_l2(dt, g) ** 2
            assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), np.sum(sq) / (2 * g.h))

    def test_laplacian_self_adjoint(self, g):
        rng = np.random.default_rng(5)
        for _ in range(20):
            u, v = random_gf(g, rng), random_gf(g, rng)
            a = inner(laplacian(u, g), v, g)
            b = inner(u, laplacian(v, g), g)
            assert abs(a - b) <= 1e-12 * max(abs(a), 1.0)
