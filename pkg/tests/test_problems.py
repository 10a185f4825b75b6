import numpy as np
import pytest
import sympy as sy
from scipy import integrate

from wgstokes.problems import LID_SIDES, builtin_cavity, builtin_example71, builtin_example72

X, Y = sy.symbols("x y")
PROBLEMS = {
    "example71": (
        builtin_example71(),
        (sy.sin(sy.pi * X) * sy.sin(sy.pi * Y), sy.cos(sy.pi * X) * sy.cos(sy.pi * Y)),
        2 * sy.cos(sy.pi * X) * sy.sin(sy.pi * Y),
    ),
    "example72": (
        builtin_example72(),
        (
            2 * sy.pi * sy.sin(sy.pi * X) ** 2 * sy.cos(sy.pi * Y) * sy.sin(sy.pi * Y),
            -2 * sy.pi * sy.sin(sy.pi * X) * sy.cos(sy.pi * X) * sy.sin(sy.pi * Y) ** 2,
        ),
        sy.cos(sy.pi * X) * sy.cos(sy.pi * Y),
    ),
}


def sample_points(n=100, seed=0):
    rng = np.random.default_rng(seed)
    return rng.uniform(0, 1, n), rng.uniform(0, 1, n)


def symbolic(name):
    prob, u, p = PROBLEMS[name]
    grad_u = [[sy.diff(ui, v) for v in (X, Y)] for ui in u]
    grad_p = [sy.diff(p, v) for v in (X, Y)]
    f = [-sy.diff(ui, X, 2) - sy.diff(ui, Y, 2) + gp for ui, gp in zip(u, grad_p)]
    lam = lambda e: sy.lambdify((X, Y), e, "numpy")  # noqa: E731
    return prob, lam(list(u)), lam(p), lam(grad_u), lam(grad_p), lam(f)


def as_array(v, x):
    return np.array([np.broadcast_to(np.asarray(c, float), x.shape) for c in v])


@pytest.mark.parametrize("name", sorted(PROBLEMS))
class TestManufactured:
    def test_fields_match_symbolic(self, name):
        prob, u, p, gu, gp, f = symbolic(name)
        x, y = sample_points()
        assert np.abs(prob.u(x, y) - as_array(u(x, y), x)).max() <= 1e-12
        assert np.abs(prob.p(x, y) - p(x, y)).max() <= 1e-12
        want = np.array([as_array(row, x) for row in gu(x, y)])
        assert np.abs(prob.grad_u(x, y) - want).max() <= 1e-10
        assert np.abs(prob.grad_p(x, y) - as_array(gp(x, y), x)).max() <= 1e-10

    def test_forcing_matches_symbolic(self, name):
        prob, *_, f = symbolic(name)
        x, y = sample_points()
        assert np.abs(prob.f(x, y) - as_array(f(x, y), x)).max() <= 1e-10

    def test_forcing_finite_differences(self, name):
        prob = PROBLEMS[name][0]
        x, y = sample_points(seed=1)
        d = 1e-3
        lap = (prob.u(x + d, y) + prob.u(x - d, y) + prob.u(x, y + d) + prob.u(x, y - d) - 4 * prob.u(x, y)) / d**2
        gp = np.stack([prob.p(x + d, y) - prob.p(x - d, y), prob.p(x, y + d) - prob.p(x, y - d)]) / (2 * d)
        scale = np.abs(prob.f(x, y)).max()
        assert np.abs(prob.f(x, y) - (-lap + gp)).max() <= 1e-5 * scale

    def test_divergence_free(self, name):
        prob = PROBLEMS[name][0]
        x, y = sample_points(seed=2)
        g = prob.grad_u(x, y)
        assert np.abs(g[0, 0] + g[1, 1]).max() <= 1e-10

    def test_pressure_mean_zero(self, name):
        prob = PROBLEMS[name][0]
        val, _ = integrate.dblquad(lambda y, x: prob.p(x, y), 0, 1, 0, 1, epsabs=1e-13)
        assert abs(val) <= 1e-10

    def test_boundary_data_is_trace(self, name):
        prob = PROBLEMS[name][0]
        t = np.linspace(0, 1, 17)
        for x, y in ((t, 0 * t), (t, 0 * t + 1), (0 * t, t), (0 * t + 1, t)):
            assert np.array_equal(prob.g(x, y), prob.u(x, y))


def test_example71_point_values():
    prob = builtin_example71()
    assert np.allclose(prob.u(0.5, 0.5), [1.0, 0.0], atol=1e-15)
    assert prob.p(0.0, 0.5) == pytest.approx(2.0, rel=1e-15)


def test_example72_vanishes_on_boundary():
    prob = builtin_example72()
    t = np.linspace(0, 1, 101)
    for x, y in ((t, 0 * t), (t, 0 * t + 1), (0 * t, t), (0 * t + 1, t)):
        assert np.abs(prob.u(x, y)).max() <= 1e-12


class TestCavity:
    @pytest.mark.parametrize("side", sorted(LID_SIDES))
    def test_tangential_lid(self, side):
        prob = builtin_cavity(side)
        t = np.linspace(0.01, 0.99, 25)
        walls = {"left": ((0 * t, t), (-1, 0)), "right": ((0 * t + 1, t), (1, 0)),
                 "bottom": ((t, 0 * t), (0, -1)), "top": ((t, 0 * t + 1), (0, 1))}
        for wall, ((x, y), n) in walls.items():
            g = prob.g(x, y)
            assert np.abs(n[0] * g[0] + n[1] * g[1]).max() == 0.0
            speed = np.hypot(*g)
            assert np.all(speed == (1.0 if wall == side else 0.0))

    def test_clockwise(self):
        assert np.allclose(builtin_cavity("top").g(0.5, 1.0), [1.0, 0.0])
        assert np.allclose(builtin_cavity("right").g(1.0, 0.5), [0.0, -1.0])

    def test_zero_speed_and_forcing(self):
        prob = builtin_cavity("right", speed=0.0)
        x, y = sample_points()
        assert not prob.g(0 * x + 1, y).any() and not prob.f(x, y).any()
        assert not prob.has_exact_solution

    def test_unknown_side(self):
        with pytest.raises(ValueError, match="unknown lid side"):
            builtin_cavity("front")

    def test_singular_corners(self):
        assert set(builtin_cavity("top").singular_points) == {(0.0, 1.0), (1.0, 1.0)}
