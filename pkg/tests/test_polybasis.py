import numpy as np
import pytest
from hypothesis import given, strategies as st

from _geometry import polygon_moment, random_convex_polygon
from wgstokes.mesh import PolygonalMesh, generate_rectangular
from wgstokes.polybasis import (
    EdgeBasis,
    ElementBasis,
    dim_pk,
    edge_mass_matrix,
    edge_quadrature,
    element_mass_matrix,
    element_quadrature,
    eval_edge_basis,
    eval_element_basis,
    monomial_exponents,
    polygon_quadrature,
    segment_quadrature,
    triangle_rule,
)

seeds = st.integers(0, 2**32 - 1)
UNIT_SQUARE = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float)


def integrate(rule, f):
    return float(rule.weights @ f(rule.points[:, 0], rule.points[:, 1]))


class TestDimensions:
    @pytest.mark.parametrize("k,dim", [(0, 1), (1, 3), (2, 6), (3, 10)])
    def test_dim(self, k, dim):
        assert dim_pk(k) == dim == len(monomial_exponents(k))

    def test_ordering_by_total_degree(self):
        assert monomial_exponents(2).tolist() == [[0, 0], [1, 0], [0, 1], [2, 0], [1, 1], [0, 2]]


class TestElementQuadrature:
    def test_unit_square_constant(self):
        rule = polygon_quadrature(UNIT_SQUARE, [0.5, 0.5], 4)
        assert integrate(rule, lambda x, y: np.ones_like(x)) == pytest.approx(1.0, rel=1e-14)

    def test_unit_square_x2y2(self):
        rule = polygon_quadrature(UNIT_SQUARE, [0.5, 0.5], 4)
        assert integrate(rule, lambda x, y: x**2 * y**2) == pytest.approx(1 / 9, rel=1e-13)

    def test_reference_triangle_x(self):
        tri = np.array([[0, 0], [1, 0], [0, 1]], float)
        rule = polygon_quadrature(tri, tri.mean(axis=0), 1)
        assert integrate(rule, lambda x, y: x) == pytest.approx(1 / 6, rel=1e-14)

    def test_triangle_rule_weights(self):
        for q in range(10):
            _, w = triangle_rule(q)
            assert np.all(w > 0) and w.sum() == pytest.approx(0.5, rel=1e-14)

    def test_non_star_shaped_names_element(self):
        verts = np.array([[0, 0], [3, 0], [3, 0.2], [0.2, 0.2], [0.2, 3], [0, 3]], float)
        mesh = PolygonalMesh(verts, [[0, 1, 2, 3, 4, 5]])
        with pytest.raises(ValueError, match="element 0"):
            element_quadrature(mesh, 0, 4)

    def test_mesh_element_rule(self):
        mesh = generate_rectangular(2, 2)
        rule = element_quadrature(mesh, 3, 4)
        assert rule.weights.sum() == pytest.approx(0.25, rel=1e-14)

    @given(seeds, st.integers(0, 10))
    def test_exactness_on_random_polygons(self, seed, q):
        """All monomials up to the requested degree, against exact Green's-theorem moments."""
        rng = np.random.default_rng(seed)
        coords = random_convex_polygon(rng, scale=rng.uniform(0.3, 2.0))
        center = coords.mean(axis=0)
        rule = polygon_quadrature(coords, center, q)
        area = polygon_moment(coords, 0, 0)
        assert abs(rule.weights.sum() - area) <= 1e-13 * area
        for d in range(q + 1):
            for i in range(d + 1):
                j = d - i
                exact = polygon_moment(coords - center, i, j)
                got = rule.weights @ ((rule.points[:, 0] - center[0]) ** i * (rule.points[:, 1] - center[1]) ** j)
                # monomials centred on the polygon can integrate to zero; scale by |x|^d
                ref = area * np.abs(coords - center).max() ** d
                assert abs(got - exact) <= 1e-12 * max(abs(exact), ref)


class TestEdgeQuadrature:
    def test_unit_edge(self):
        rule = segment_quadrature([0, 0], [1, 0], 2)
        assert integrate(rule, lambda x, y: np.ones_like(x)) == pytest.approx(1.0, rel=1e-14)

    def test_vertical_y2(self):
        rule = segment_quadrature([0, 0], [0, 2], 2)
        assert integrate(rule, lambda x, y: y**2) == pytest.approx(8 / 3, rel=1e-14)

    def test_diagonal_x(self):
        rule = segment_quadrature([0, 0], [1, 1], 1)
        assert integrate(rule, lambda x, y: x) == pytest.approx(np.sqrt(2) / 2, rel=1e-14)

    @pytest.mark.parametrize("q,n", [(0, 1), (1, 1), (2, 2), (3, 2), (4, 3), (7, 4)])
    def test_point_count(self, q, n):
        assert len(segment_quadrature([0, 0], [1, 0], q).weights) == n

    def test_mesh_edge(self):
        mesh = generate_rectangular(2, 2)
        rule = edge_quadrature(mesh, 0, 3)
        assert rule.weights.sum() == pytest.approx(0.5, rel=1e-14)

    @given(seeds, st.integers(0, 12))
    def test_exactness(self, seed, q):
        rng = np.random.default_rng(seed)
        a, b = rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 2)
        L = np.linalg.norm(b - a)
        rule = segment_quadrature(a, b, q)
        # int_e t^q ds in the reference coordinate: L/2 * int t^q dt
        t = 2 * ((rule.points - 0.5 * (a + b)) @ (b - a)) / L**2
        exact = 0.5 * L * (2.0 / (q + 1) if q % 2 == 0 else 0.0)
        assert abs(rule.weights @ t**q - exact) <= 1e-12 * L


class TestElementBasis:
    def test_degree_zero(self):
        vals, grads = eval_element_basis(ElementBasis(np.zeros(2), 1.0, 0), np.array([[0.3, -0.2]]))
        assert vals.tolist() == [[1.0]] and np.all(grads == 0)

    def test_degree_one_at_centroid(self):
        c = np.array([0.4, 0.7])
        vals, _ = eval_element_basis(ElementBasis(c, 0.3, 1), c[None])
        assert vals[0].tolist() == [1.0, 0.0, 0.0]

    def test_scaling(self):
        basis = ElementBasis(np.array([1.0, 2.0]), 0.5, 2)
        vals, _ = basis(np.array([[1.5, 1.0]]))
        # scaled coordinates (1, -2)
        assert np.allclose(vals[0], [1, 1, -2, 1, -2, 4])

    @given(seeds, st.integers(0, 4))
    def test_gradient_finite_differences(self, seed, k):
        rng = np.random.default_rng(seed)
        h = rng.uniform(0.1, 2.0)
        basis = ElementBasis(rng.uniform(-1, 1, 2), h, k)
        p = basis.center + rng.uniform(-0.5, 0.5, 2) * h
        _, grads = eval_element_basis(basis, p[None])
        fd = 1e-6 * h
        for j, e in enumerate(np.eye(2)):
            plus, _ = eval_element_basis(basis, (p + fd * e)[None])
            minus, _ = eval_element_basis(basis, (p - fd * e)[None])
            approx = (plus - minus)[0] / (2 * fd)
            assert np.max(np.abs(grads[0, :, j] - approx)) <= 1e-7 / h


class TestMassMatrices:
    def test_degree_zero_is_area(self):
        coords = np.array([[0, 0], [2, 0], [2, 1], [0, 1]], float)
        rule = polygon_quadrature(coords, [1, 0.5], 2)
        M = element_mass_matrix(ElementBasis(np.array([1, 0.5]), np.sqrt(5), 0), rule)
        assert M.shape == (1, 1) and M[0, 0] == pytest.approx(2.0, rel=1e-14)

    def test_unit_square_degree_one(self):
        c, h = np.array([0.5, 0.5]), np.sqrt(2)
        M = element_mass_matrix(ElementBasis(c, h, 1), polygon_quadrature(UNIT_SQUARE, c, 2))
        # int ((x-1/2)/h)^2 = 1/12 / 2
        assert np.allclose(M, np.diag([1.0, 1 / 24, 1 / 24]), atol=1e-15)

    @given(seeds, st.integers(0, 4))
    def test_spd_on_random_polygon(self, seed, k):
        rng = np.random.default_rng(seed)
        coords = random_convex_polygon(rng)
        c = coords.mean(axis=0)
        h = np.linalg.norm(coords[:, None] - coords[None], axis=-1).max()
        M = element_mass_matrix(ElementBasis(c, h, k), polygon_quadrature(coords, c, 2 * k + 2))
        assert np.array_equal(M, M.T)
        assert np.linalg.eigvalsh(M).min() > 0

    def test_degenerate_reports_element(self):
        rule = polygon_quadrature(UNIT_SQUARE, [0.5, 0.5], 0)
        with pytest.raises(np.linalg.LinAlgError, match="element 7"):
            element_mass_matrix(ElementBasis(np.array([0.5, 0.5]), 1.0, 3), rule, element_id=7)

    @given(seeds, st.integers(0, 6))
    def test_edge_mass_diagonal(self, seed, k):
        rng = np.random.default_rng(seed)
        a, b = rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 2)
        basis = EdgeBasis(a, b, k)
        M = edge_mass_matrix(basis, segment_quadrature(a, b, 2 * k))
        d = np.diag(M)
        assert np.allclose(d, basis.length / (2 * np.arange(k + 1) + 1), rtol=1e-13)
        off = M - np.diag(d)
        assert np.abs(off).max() <= 1e-13 * d.max()


def test_edge_basis_reference_coordinate():
    basis = EdgeBasis(np.array([0.0, 0.0]), np.array([2.0, 0.0]), 2)
    t = basis.reference_coordinate(np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]))
    assert t.tolist() == [-1.0, 0.0, 1.0]
    assert np.allclose(eval_edge_basis(t, 2), [[1, -1, 1], [1, 0, -0.5], [1, 1, 1]])
