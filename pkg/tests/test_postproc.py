import numpy as np
import pytest

import wgstokes.system
from wgstokes.mesh import build_mesh, generate_triangular
from wgstokes.postproc import (
    NORMS,
    ConvergenceTable,
    ErrorReport,
    cell_averages,
    compute_errors,
    convergence_study,
    export_fields,
    fitted_order,
    pressure_error_norms,
    read_vtk,
    velocity_error_norms,
    write_vtk,
)
from wgstokes.problems import builtin_cavity, builtin_example71, builtin_example72
from wgstokes.spaces import Discretization, WeakPressure, WeakVelocity, project_Qh, project_Qh_pressure
from wgstokes.system import SolverError, StokesSolution, assemble, solve

EX71, EX72 = builtin_example71(), builtin_example72()

# reference errors on uniform triangular meshes, h = 1/8, 1/16, 1/32
REFERENCE = {
    ("example71", 1, "wg_p"): [5.1214e-01, 2.1109e-01, 9.3992e-02],
    ("example71", 1, "l2_p"): [3.4266e-01, 1.1063e-01, 3.1403e-02],
    ("example71", 2, "l2_u"): [2.3513e-03, 2.9732e-04, 3.7349e-05],
    ("example71", 2, "l2_p"): [8.5422e-03, 1.8980e-03, 4.5063e-04],
    ("example72", 1, "wg_p"): [1.1518e+00, 5.1671e-01, 2.2432e-01],
    ("example72", 1, "l2_p"): [5.3190e-01, 2.8686e-01, 1.1558e-01],
    ("example72", 2, "l2_u"): [3.2044e-02, 4.0772e-03, 5.1315e-04],
    ("example72", 2, "l2_p"): [8.5399e-02, 1.5911e-02, 3.4240e-03],
}


@pytest.fixture(scope="module")
def studies():
    return {(p.name, k): convergence_study(p, k, [8, 16, 32]) for p in (EX71, EX72) for k in (1, 2)}


def exact_solution(disc, prob):
    u, p = project_Qh(disc, prob.u), project_Qh_pressure(disc, prob.p)
    return StokesSolution(u, p, 0.0, {})


class TestNorms:
    @pytest.mark.parametrize("kind", ["triangular", "voronoi"])
    @pytest.mark.parametrize("k", [1, 2])
    def test_exact_solution_has_zero_error(self, kind, k):
        disc = Discretization(build_mesh(kind, 4), k)
        rep = compute_errors(disc, exact_solution(disc, EX72), EX72.u, EX72.p)
        assert max(getattr(rep, n) for n in NORMS) <= 1e-12

    @pytest.mark.parametrize("k", [1, 2])
    def test_energy_matches_a_form(self, k):
        disc = Discretization(build_mesh("voronoi", 4), k)
        A = assemble(disc).A
        e = np.random.default_rng(k).standard_normal(disc.dofs.n_u)
        energy, _ = velocity_error_norms(disc, e)
        assert energy**2 == pytest.approx(e @ (A @ e), rel=1e-11)

    @pytest.mark.parametrize("k", [1, 2])
    def test_seminorm_matches_c_form(self, k):
        disc = Discretization(build_mesh("voronoi", 4), k)
        C = assemble(disc).C
        eps = np.random.default_rng(k).standard_normal(disc.dofs.n_p)
        _, semi = pressure_error_norms(disc, eps)
        assert semi**2 == pytest.approx(eps @ (C @ eps), rel=1e-11)

    def test_l2_of_constant(self):
        disc = Discretization(generate_triangular(3), 2)
        u = project_Qh(disc, lambda x, y: np.stack([3.0 + 0 * x, -4.0 + 0 * y]))
        energy, l2 = velocity_error_norms(disc, u.coeffs)
        assert l2 == pytest.approx(5.0, rel=1e-13) and energy <= 1e-12
        p = project_Qh_pressure(disc, lambda x, y: 2.0 + 0 * x)
        l2p, semi = pressure_error_norms(disc, p.coeffs)
        assert l2p == pytest.approx(2.0, rel=1e-13) and semi <= 1e-12

    def test_wg_p_decomposition(self):
        disc = Discretization(generate_triangular(4), 1)
        sol = solve(assemble(disc, f=EX71.f, g=EX71.g))
        rep = compute_errors(disc, sol, EX71.u, EX71.p)
        assert rep.wg_p**2 == pytest.approx(rep.l2_p**2 + rep.seminorm_p**2, rel=1e-14)
        assert rep.h == disc.mesh.h


def make_table(errors, h=(1 / 4, 1 / 8, 1 / 16)):
    t = ConvergenceTable(1, "demo")
    for hi, e in zip(h, errors):
        t.add(ErrorReport(hi, e, e / 2, e / 3, 0.0, e / 4))
    return t


class TestTable:
    def test_orders(self):
        t = make_table([1.0, 0.25, 0.0625])
        for n in NORMS:
            o = t.orders(n)
            assert o[0] is None and o[1:] == pytest.approx([2.0, 2.0], rel=1e-14)
        assert t.fitted_order("l2_u") == pytest.approx(2.0, rel=1e-12)

    def test_non_halving_has_no_order(self):
        t = make_table([1.0, 0.5], h=(1 / 4, 1 / 6))
        assert t.orders("energy_u") == [None, None]

    def test_csv(self):
        lines = make_table([1.0, 0.5, 0.25]).to_csv().splitlines()
        assert lines[0] == "h,energy_u,order,l2_u,order,wg_p,order,l2_p,order"
        assert len(lines) == 4
        assert lines[1].split(",")[2] == "" and float(lines[2].split(",")[2]) == pytest.approx(1.0)

    def test_format(self):
        text = make_table([1.0, 0.5, 0.25]).format()
        assert "1/8" in text and "1.0000" in text

    def test_fitted_order_power_law(self):
        h = np.array([1 / 8, 1 / 16, 1 / 32, 1 / 64])
        assert fitted_order(h, 3.0 * h**1.5) == pytest.approx(1.5, rel=1e-12)

    def test_as_dicts(self):
        d = make_table([1.0]).as_dicts()
        assert d == [{"h": 0.25, "energy_u": 1.0, "l2_u": 0.5, "wg_p": 1 / 3, "seminorm_p": 0.0, "l2_p": 0.25}]


class TestConvergenceStudy:
    def test_rejects_non_doubling(self):
        with pytest.raises(ValueError, match="double"):
            convergence_study(EX71, 1, [4, 6])
        with pytest.raises(ValueError, match="double"):
            convergence_study(EX71, 1, [])

    def test_rejects_problem_without_solution(self):
        with pytest.raises(ValueError, match="no exact solution"):
            convergence_study(builtin_cavity(), 1, [4])

    def test_solver_error_names_level(self, monkeypatch):
        calls = []

        def failing(system, **kw):
            calls.append(system.disc.mesh.n_elements)
            if len(calls) == 2:
                raise SolverError("stalled", [1.0, 0.5])
            return solve(system, **kw)

        monkeypatch.setattr(wgstokes.system, "solve", failing)
        with pytest.raises(SolverError, match="level n=4: stalled") as info:
            convergence_study(EX71, 1, [2, 4, 8])
        assert info.value.residual_history == [1.0, 0.5]

    def test_on_level_callback(self):
        seen = []
        convergence_study(EX71, 1, [2, 4], on_level=lambda n, rep, sol: seen.append((n, rep.h)))
        assert seen == [(2, 0.5), (4, 0.25)]

    @pytest.mark.parametrize("key", [("example71", 1), ("example71", 2), ("example72", 1), ("example72", 2)])
    def test_errors_decrease(self, studies, key):
        t = studies[key]
        for n in NORMS:
            assert np.all(np.diff(t.errors(n)) < 0), n

    @pytest.mark.parametrize("key", sorted(REFERENCE))
    def test_matches_reference_values(self, studies, key):
        name, k, norm = key
        got = studies[(name, k)].errors(norm)
        assert got == pytest.approx(REFERENCE[key], rel=2e-4)


class TestExport:
    def test_zero_solution_vtk(self, tmp_path):
        mesh = generate_triangular(2)
        disc = Discretization(mesh, 1)
        sol = StokesSolution(WeakVelocity(disc.dofs, np.zeros(disc.dofs.n_u)),
                             WeakPressure(disc.dofs, np.zeros(disc.dofs.n_p)), 0.0, {})
        vtk, csv_path = export_fields(disc, sol, tmp_path / "zero")
        lines = vtk.read_text().splitlines()
        assert lines[0] == "# vtk DataFile Version 3.0"
        assert lines[3] == "DATASET UNSTRUCTURED_GRID"
        assert f"CELLS {mesh.n_elements} {4 * mesh.n_elements}" in lines
        data = read_vtk(vtk)
        assert not data["vectors"]["velocity"].any() and not data["scalars"]["pressure"].any()
        assert csv_path.read_text().splitlines()[0] == "x,y,u1,u2,p"

    def test_roundtrip(self, tmp_path):
        mesh = build_mesh("voronoi", 3)
        rng = np.random.default_rng(0)
        vec, sca = rng.standard_normal((mesh.n_elements, 2)), rng.standard_normal(mesh.n_elements)
        data = read_vtk(write_vtk(tmp_path / "r.vtk", mesh, {"v": vec}, {"s": sca}))
        assert np.abs(data["points"][:, :2] - mesh.vertices).max() <= 1e-9
        assert data["cells"] == [c.tolist() for c in mesh.elements]
        assert set(data["cell_types"]) == {7}
        assert np.abs(data["vectors"]["v"][:, :2] - vec).max() <= 1e-9
        assert np.abs(data["scalars"]["s"] - sca).max() <= 1e-9

    def test_cell_averages_of_linear_field(self):
        disc = Discretization(build_mesh("voronoi", 3), 1)
        u = project_Qh(disc, lambda x, y: np.stack([x, 2 * y]))
        p = project_Qh_pressure(disc, lambda x, y: 1.0 + 0 * x)
        vel, pres = cell_averages(disc, StokesSolution(u, p, 0.0, {}))
        c = disc.mesh.centroids
        assert np.abs(vel - c * [1, 2]).max() <= 1e-12
        assert np.abs(pres - 1.0).max() <= 1e-12

    def test_csv_columns(self, tmp_path):
        disc = Discretization(generate_triangular(2), 1)
        sol = solve(assemble(disc, f=EX71.f, g=EX71.g))
        _, csv_path = export_fields(disc, sol, tmp_path / "f")
        rows = np.loadtxt(csv_path, delimiter=",", skiprows=1)
        assert rows.shape == (disc.mesh.n_elements, 5)
        assert np.allclose(rows[:, :2], disc.mesh.centroids, atol=1e-11)

    def test_unwritable_path(self, tmp_path):
        with pytest.raises(OSError, match="cannot write VTK"):
            write_vtk(tmp_path / "missing" / "x.vtk", generate_triangular(1))
