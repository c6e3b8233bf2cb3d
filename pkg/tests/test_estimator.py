import numpy as np
import pytest

from mbmlmc import fem, homogenize, media, problem
from mbmlmc.errors import DegenerateCombination, MeshMismatch
from mbmlmc.estimator import (
    error_estimate,
    local_indicators,
    residual_functional,
    sample_average_indicators,
    two_sided_bounds,
)
from mbmlmc.fem import Field
from mbmlmc.homogenize import BLOCKWISE, FINE, CoefficientField


def desk_problem():
    return problem.heat_rect_problem(
        width=0.4, height=0.2, blocks_x=4, blocks_y=2,
        coarse_level=1, fine_level=3, qoi_block=(1, 1),
    )


def shared_mesh_fields(prob, seed):
    """Fine and blockwise models discretized on one shared fine mesh."""
    mesh = fem.build_mesh(prob.partition, FINE, prob.coarse_level, prob.fine_level)
    micro = problem.microstructure(prob, seed)
    fr = media.block_fractions(micro)
    cf_fine = homogenize.build_coefficient_field(FINE, micro, mesh, prob.pair, fractions=fr)
    cf_surr = homogenize.build_coefficient_field(BLOCKWISE, micro, mesh, prob.pair, fractions=fr)
    u = fem.solve_primal(mesh, cf_fine, prob.spec, opts=prob.solver)
    u0 = fem.solve_primal(mesh, cf_surr, prob.spec, opts=prob.solver)
    w = fem.solve_adjoint(mesh, cf_fine, prob.qoi, prob.spec, opts=prob.solver)
    w0 = fem.solve_adjoint(mesh, cf_surr, prob.qoi, prob.spec, opts=prob.solver)
    return mesh, u, u0, w, w0, cf_fine, cf_surr


def two_cell_mesh():
    dom = media.Domain(rectangles=((0, 0, 1, 1),))
    part = media.partition_blocks(dom, 1.0)
    return fem.build_mesh(part, FINE, 0, 0)  # one quad, two triangles


class TestResidualFunctional:
    def test_zero_when_coefficients_match(self):
        mesh = two_cell_mesh()
        cf = CoefficientField(mesh=mesh, kappa=np.array([2.0, 3.0]))
        g = Field(mesh=mesh, values=mesh.vertices[:, 0] + 2 * mesh.vertices[:, 1])
        v = Field(mesh=mesh, values=mesh.vertices[:, 1].copy())
        assert residual_functional(g, v, cf, cf) == 0.0

    def test_positive_for_energy_pairing(self):
        mesh = two_cell_mesh()
        cf_fine = CoefficientField(mesh=mesh, kappa=np.array([5.0, 5.0]))
        cf_surr = CoefficientField(mesh=mesh, kappa=np.array([2.0, 2.0]))
        g = Field(mesh=mesh, values=mesh.vertices[:, 0] + mesh.vertices[:, 1])
        assert residual_functional(g, g, cf_fine, cf_surr) > 0.0

    def test_hand_evaluated_two_element_sum(self):
        # unit square split along (0,0)-(1,1); u = x, v = y
        # grad u . grad v = 0, so try u = x + y, v = x: integrand (k-k0) per element
        mesh = two_cell_mesh()
        cf_fine = CoefficientField(mesh=mesh, kappa=np.array([7.0, 3.0]))
        cf_surr = CoefficientField(mesh=mesh, kappa=np.array([4.0, 1.0]))
        u = Field(mesh=mesh, values=mesh.vertices[:, 0] + mesh.vertices[:, 1])
        v = Field(mesh=mesh, values=mesh.vertices[:, 0].copy())
        # grad u = (1,1), grad v = (1,0), product 1; areas 1/2 each
        expected = 0.5 * (7 - 4) + 0.5 * (3 - 1)
        assert residual_functional(u, v, cf_fine, cf_surr) == pytest.approx(expected)

    def test_mesh_mismatch(self):
        mesh_a = two_cell_mesh()
        mesh_b = two_cell_mesh()
        cf = CoefficientField(mesh=mesh_a, kappa=np.ones(2))
        u = Field(mesh=mesh_a, values=np.zeros(4))
        v = Field(mesh=mesh_b, values=np.zeros(4))
        with pytest.raises(MeshMismatch):
            residual_functional(u, v, cf, cf)


class TestEstimate:
    def test_zero_when_models_agree(self):
        prob = desk_problem()
        mesh, u, u0, w, w0, cf_fine, _ = shared_mesh_fields(prob, 0)
        assert error_estimate(u0, w0, cf_fine, cf_fine) == 0.0

    def test_additivity_is_exact(self):
        prob = desk_problem()
        for seed in range(4):
            mesh, u, u0, w, w0, cf_fine, cf_surr = shared_mesh_fields(prob, seed)
            inds = local_indicators(u0, w0, cf_fine, cf_surr)
            est = error_estimate(u0, w0, cf_fine, cf_surr)
            assert sum(inds.values()) == est

    def test_brute_force_elementwise_oracle(self):
        # independent pure-python recomputation of the indicator integral
        prob = desk_problem()
        mesh, u, u0, w, w0, cf_fine, cf_surr = shared_mesh_fields(prob, 2)
        total = 0.0
        for e in range(len(mesh.triangles)):
            i, j, k = mesh.triangles[e]
            (x0, y0), (x1, y1), (x2, y2) = mesh.vertices[[i, j, k]]
            det = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
            area = 0.5 * det

            def grad(values):
                b = np.array(
                    [
                        [y1 - y2, y2 - y0, y0 - y1],
                        [x2 - x1, x0 - x2, x1 - x0],
                    ]
                ) / det
                return b @ np.array([values[i], values[j], values[k]])

            gu = grad(u0.values)
            gw = grad(w0.values)
            kap, kap0 = cf_fine.kappa[e], cf_surr.kappa[e]
            total += -kap0 * (1.0 - kap0 / kap) * float(gu @ gw) * area
        est = error_estimate(u0, w0, cf_fine, cf_surr)
        assert est == pytest.approx(total, rel=1e-12)

    def test_refined_blocks_have_zero_indicator(self):
        prob = desk_problem()
        spec = homogenize.refined_model([1, 2])
        micro = problem.microstructure(prob, 1)
        rep, _ = problem.surrogate_report(prob, spec, micro)
        assert rep.block_indicators[1] == 0.0
        assert rep.block_indicators[2] == 0.0

    def test_single_homogenized_block_carries_everything(self):
        prob = desk_problem()
        spec = homogenize.refined_model([1, 2, 3, 4, 5, 6, 8])  # all but block 7
        micro = problem.microstructure(prob, 1)
        rep, _ = problem.surrogate_report(prob, spec, micro)
        assert rep.block_indicators[7] == pytest.approx(rep.estimate, rel=1e-12)

    def test_indicators_cover_all_blocks(self):
        prob = desk_problem()
        micro = problem.microstructure(prob, 5)
        rep, _ = problem.surrogate_report(prob, BLOCKWISE, micro)
        assert sorted(rep.block_indicators) == [b.id for b in prob.partition.blocks]


class TestExactErrorIdentity:
    def test_identity_on_shared_fine_mesh(self):
        # Q(e0) equals the residual of u0 against the fine adjoint, up to sign:
        # Q(e0) = -R_u0(w) with R the (A - A0)-weighted pairing
        prob = desk_problem()
        for seed in range(6):
            mesh, u, u0, w, w0, cf_fine, cf_surr = shared_mesh_fields(prob, seed)
            q_e0 = fem.evaluate_qoi(u, prob.qoi) - fem.evaluate_qoi(u0, prob.qoi)
            ident = -residual_functional(u0, w, cf_fine, cf_surr)
            assert q_e0 == pytest.approx(ident, rel=1e-6)


class TestTwoSidedBounds:
    def test_zero_for_matching_models(self):
        prob = desk_problem()
        mesh, u, u0, w, w0, cf_fine, _ = shared_mesh_fields(prob, 0)
        b = two_sided_bounds(u0, w0, cf_fine, cf_fine)
        assert (b.lower, b.upper) == (0.0, 0.0)

    def test_sandwich_on_random_samples(self):
        prob = desk_problem()
        for seed in range(12):
            mesh, u, u0, w, w0, cf_fine, cf_surr = shared_mesh_fields(prob, seed)
            q_e0 = fem.evaluate_qoi(u, prob.qoi) - fem.evaluate_qoi(u0, prob.qoi)
            b = two_sided_bounds(u0, w0, cf_fine, cf_surr, s=1.0)
            assert b.lower - 1e-10 <= q_e0 <= b.upper + 1e-10

    def test_bound_width_regression(self):
        # pinned from the first verified run of this configuration
        prob = desk_problem()
        mesh, u, u0, w, w0, cf_fine, cf_surr = shared_mesh_fields(prob, 0)
        b = two_sided_bounds(u0, w0, cf_fine, cf_surr, s=1.0)
        assert b.upper - b.lower == pytest.approx(464.7536858663491, rel=1e-9)

    def test_s_zero_rejected(self):
        prob = desk_problem()
        mesh, u, u0, w, w0, cf_fine, cf_surr = shared_mesh_fields(prob, 0)
        with pytest.raises(DegenerateCombination):
            two_sided_bounds(u0, w0, cf_fine, cf_surr, s=0.0)

    def test_elastic_sandwich(self):
        prob = problem.elasticity_lshape_problem(coarse_level=1, fine_level=3)
        mesh = fem.build_mesh(prob.partition, FINE, prob.coarse_level, prob.fine_level)
        for seed in range(3):
            micro = problem.microstructure(prob, seed)
            fr = media.block_fractions(micro)
            cf_fine = homogenize.build_coefficient_field(FINE, micro, mesh, prob.pair, fractions=fr)
            cf_surr = homogenize.build_coefficient_field(BLOCKWISE, micro, mesh, prob.pair, fractions=fr)
            u = fem.solve_primal(mesh, cf_fine, prob.spec, opts=prob.solver)
            u0 = fem.solve_primal(mesh, cf_surr, prob.spec, opts=prob.solver)
            w0 = fem.solve_adjoint(mesh, cf_surr, prob.qoi, prob.spec, opts=prob.solver)
            q_e0 = fem.evaluate_qoi(u, prob.qoi) - fem.evaluate_qoi(u0, prob.qoi)
            b = two_sided_bounds(u0, w0, cf_fine, cf_surr, s=1.0)
            assert b.lower - 1e-10 <= q_e0 <= b.upper + 1e-10


class TestSampleAverages:
    def test_single_seed_equals_single_sample(self):
        prob = desk_problem()
        seeds = [media.derive_seed(3, 1, 0)]
        est, inds, err = sample_average_indicators(prob, BLOCKWISE, seeds)
        micro = problem.microstructure(prob, seeds[0])
        rep, q0 = problem.surrogate_report(prob, BLOCKWISE, micro)
        qf, _ = problem.model_qoi(prob, FINE, micro)
        assert est == rep.estimate
        assert err == abs(qf - q0)
        assert inds == {b: abs(v) for b, v in rep.block_indicators.items()}

    def test_duplicated_seeds_identical_average(self):
        prob = desk_problem()
        s = media.derive_seed(4, 1, 0)
        est1, inds1, err1 = sample_average_indicators(prob, BLOCKWISE, [s])
        est2, inds2, err2 = sample_average_indicators(prob, BLOCKWISE, [s, s])
        assert est1 == pytest.approx(est2)
        assert err1 == pytest.approx(err2)

    def test_cached_fine_values_used(self):
        prob = desk_problem()
        seeds = [media.derive_seed(5, 1, i) for i in range(3)]
        fine = []
        for s in seeds:
            micro = problem.microstructure(prob, s)
            fine.append(problem.model_qoi(prob, FINE, micro)[0])
        a = sample_average_indicators(prob, BLOCKWISE, seeds)
        b = sample_average_indicators(prob, BLOCKWISE, seeds, fine_qois=fine)
        assert a[2] == pytest.approx(b[2], rel=1e-14)

    def test_default_pilot_count_matches_reference_setup(self):
        from mbmlmc.adapt import SelectionParams

        assert SelectionParams(tol_bias=1.0).m_hat == 180

    def test_empty_seed_list_rejected(self):
        prob = desk_problem()
        with pytest.raises(ValueError):
            sample_average_indicators(prob, BLOCKWISE, [])
