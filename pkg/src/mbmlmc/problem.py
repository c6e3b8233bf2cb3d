"""Experiment definition and the per-model solve pipeline.

A Problem bundles geometry, random-microstructure parameters, material pair,
boundary data and the QoI.  Meshes, dof maps and QoI loads depend only on the
model, not on the sample, so they are built once per model and reused; one
sample then costs a coefficient build, one assembly and one solve.  The
globally homogenized model short-circuits to the 1/kappa scaling of a single
fixed solve and is charged one work unit per sample.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fem, homogenize, media
from .errors import NotApplicable, RegionUnresolved
from .homogenize import FINE, MaterialPair, ModelSpec
from .media import BlockPartition, InclusionGenParams

# seed-stream tags
PILOT_STREAM = 1
LEVEL_STREAM = 2
MC_STREAM = 3
REFERENCE_STREAM = 4


@dataclass
class Problem:
    """One experiment: geometry, randomness, physics, QoI and resolutions."""

    partition: BlockPartition
    gen_params: InclusionGenParams
    pair: MaterialPair
    spec: fem.ProblemSpec
    qoi: fem.QoISpec
    coarse_level: int
    fine_level: int
    fraction_q: int = 64
    kappa_fix: float | None = None
    solver: fem.SolverOptions = fem.DEFAULT_SOLVER
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._validate_qoi()

    def _validate_qoi(self):
        ex, ey = self.partition.edge
        hx = ex / (1 << self.fine_level)
        hy = ey / (1 << self.fine_level)
        if self.qoi.variant == "mollified_strain_trace":
            if 2.0 * self.qoi.radius < max(hx, hy):
                raise RegionUnresolved("mollifier support below one fine element")
            return
        x0, y0, x1, y1 = self.qoi.region
        if (x1 - x0) * (y1 - y0) < hx * hy:
            raise RegionUnresolved("QoI region smaller than one fine element")

    @property
    def physics(self):
        return self.spec.physics


def qoi_region_from_block(partition: BlockPartition, block_id: int):
    return partition.block(block_id).bounds


def fine_model() -> ModelSpec:
    return FINE


@dataclass
class ModelWorkspace:
    """Per-model immutable data shared by every sample."""

    model: ModelSpec
    mesh: fem.Mesh
    work: int
    q_fix: float | None = None  # scaling shortcut: QoI of the fixed solve
    fix_work: int = 0


def workspace(problem: Problem, model: ModelSpec) -> ModelWorkspace:
    key = ("ws", model)
    ws = problem._cache.get(key)
    if ws is not None:
        return ws
    if model.variant == "global":
        mesh_model = _global_mesh_model(problem)
        mesh = fem.build_mesh(
            problem.partition, mesh_model, problem.coarse_level, problem.fine_level
        )
        mesh.model_key = ("global",)
        q_fix, fix_work = _fixed_global_solve(problem, mesh)
        ws = ModelWorkspace(model=model, mesh=mesh, work=1, q_fix=q_fix, fix_work=fix_work)
    else:
        mesh = fem.build_mesh(
            problem.partition, model, problem.coarse_level, problem.fine_level
        )
        ws = ModelWorkspace(
            model=model, mesh=mesh, work=fem.work_units(mesh, problem.spec)
        )
    problem._cache[key] = ws
    return ws


def _global_mesh_model(problem: Problem) -> ModelSpec:
    """The globally homogenized model is solved on the coarsest quadrilateral mesh."""
    if not problem.partition.is_tensor_grid():
        raise NotApplicable("global model needs a tensor-grid partition")
    nx, ny = problem.partition.grid_shape()
    c = 0
    while nx % (2 ** (c + 1)) == 0 and ny % (2 ** (c + 1)) == 0:
        c += 1
    return homogenize.coarse_model(c)


def _fixed_global_solve(problem: Problem, mesh: fem.Mesh):
    if problem.pair.kind != "scalar":
        raise NotApplicable("scaling shortcut applies to the scalar problem only")
    kfix = problem.kappa_fix if problem.kappa_fix is not None else problem.pair.kappa_m
    coeff = homogenize.CoefficientField(mesh=mesh, kappa=np.full(len(mesh), kfix))
    u = fem.solve_primal(mesh, coeff, problem.spec, opts=problem.solver)
    return fem.evaluate_qoi(u, problem.qoi), fem.work_units(mesh, problem.spec)


def microstructure(problem: Problem, seed: int) -> media.Microstructure:
    return media.sample_microstructure(problem.partition, problem.gen_params, seed)


def fractions(problem: Problem, micro: media.Microstructure) -> np.ndarray:
    return media.block_fractions(micro, problem.fraction_q)


def coefficient(problem: Problem, model: ModelSpec, micro, fracs=None):
    ws = workspace(problem, model)
    return homogenize.build_coefficient_field(
        model, micro, ws.mesh, problem.pair, fractions=fracs, q=problem.fraction_q
    )


def model_qoi(problem: Problem, model: ModelSpec, micro, fracs=None):
    """(QoI value, work units) of one model on one microstructure."""
    ws = workspace(problem, model)
    if model.variant == "global":
        if fracs is None:
            fracs = fractions(problem, micro)
        areas = np.array([b.area for b in problem.partition.blocks])
        phi_i = float(np.dot(fracs, areas) / areas.sum())
        kfix = problem.kappa_fix if problem.kappa_fix is not None else problem.pair.kappa_m
        k_eff = homogenize.hs_conductivity(
            problem.pair.kappa_m, problem.pair.kappa_i, 1.0 - phi_i, phi_i
        )
        return homogenize.scaled_global_qoi(ws.q_fix, kfix, k_eff), ws.work
    coeff = coefficient(problem, model, micro, fracs)
    u = fem.solve_primal(ws.mesh, coeff, problem.spec, opts=problem.solver)
    return fem.evaluate_qoi(u, problem.qoi), ws.work


def surrogate_report(problem: Problem, model: ModelSpec, micro):
    """Estimator report for one surrogate sample, plus its QoI value.

    Solves the surrogate primal and adjoint on the model mesh and evaluates
    the indicators against the element-centroid fine coefficient.
    """
    from . import estimator

    ws = workspace(problem, model)
    fracs = fractions(problem, micro)
    coeff_surr = coefficient(problem, model, micro, fracs)
    coeff_fine = homogenize.build_coefficient_field(
        FINE, micro, ws.mesh, problem.pair, fractions=fracs, q=problem.fraction_q
    )
    u0 = fem.solve_primal(ws.mesh, coeff_surr, problem.spec, opts=problem.solver)
    w0 = fem.solve_adjoint(ws.mesh, coeff_surr, problem.qoi, problem.spec, opts=problem.solver)
    rep = estimator.evaluate_report(
        u0,
        w0,
        coeff_fine,
        coeff_surr,
        block_ids=[b.id for b in problem.partition.blocks],
    )
    return rep, fem.evaluate_qoi(u0, problem.qoi)


# ---------------------------------------------------------------------------
# presets


def heat_rect_problem(
    width=1.0,
    height=0.2,
    blocks_x=10,
    blocks_y=4,
    coarse_level=1,
    fine_level=4,
    p_inclusion=0.5,
    kappa=(100.0, 10000.0),
    flux_top=1600.0,
    qoi_block=(1, 2),
    fraction_q=64,
    solver=fem.DEFAULT_SOLVER,
) -> Problem:
    """Desk-scale heat conduction preset: rectangle, Bernoulli inclusions.

    Neumann flux on the top edge, insulated bottom, homogeneous Dirichlet on
    the left/right edges; the QoI is the block average of the y-gradient over
    the block indexed (col, row) = qoi_block.
    """
    domain = media.Domain(
        rectangles=((0.0, 0.0, width, height),),
        boundary_tags={
            "left": (0, 0.0, 0.0, height),
            "right": (0, width, 0.0, height),
            "bottom": (1, 0.0, 0.0, width),
            "top": (1, height, 0.0, width),
        },
    )
    edge = (width / blocks_x, height / blocks_y)
    partition = media.partition_blocks(domain, edge)
    h = min(edge)
    gen = InclusionGenParams(
        variant="bernoulli", h=h, nominal_radius=h / 4.0, p=p_inclusion
    )
    col, row = qoi_block
    region = (
        col * edge[0],
        row * edge[1],
        (col + 1) * edge[0],
        (row + 1) * edge[1],
    )
    return Problem(
        partition=partition,
        gen_params=gen,
        pair=MaterialPair(kind="scalar", kappa_m=kappa[0], kappa_i=kappa[1]),
        spec=fem.ProblemSpec(
            physics=fem.SCALAR,
            dirichlet=("left", "right"),
            neumann={"top": flux_top},
        ),
        qoi=fem.QoISpec(variant="block_avg_gradient", region=region, axis=1),
        coarse_level=coarse_level,
        fine_level=fine_level,
        fraction_q=fraction_q,
        kappa_fix=kappa[0],
        solver=solver,
    )


def lshape_domain() -> media.Domain:
    """Unit L-shape with a radius-0.2 fillet rounding the inner corner."""
    fillet = media.Fillet(center=(0.6, 0.4), radius=0.2, sx=-1, sy=1)
    return media.Domain(
        rectangles=((0.0, 0.0, 0.4, 1.0), (0.4, 0.6, 1.0, 1.0)),
        fillet=fillet,
        boundary_tags={
            "bottom": (1, 0.0, 0.0, 0.4),
            "right": (0, 1.0, 0.6, 1.0),
        },
    )


def elasticity_lshape_problem(
    coarse_level=2,
    fine_level=4,
    young=(100.0, 1000.0),
    poisson=0.2,
    traction=(500.0, 500.0),
    subgrid_n=4,
    n_min=0,
    n_max=None,
    qoi_point=(0.4586, 0.5412),
    qoi_radius=0.05,
    fraction_q=64,
    solver=fem.DEFAULT_SOLVER,
) -> Problem:
    """Desk-scale plane-strain preset: L-shape, subgrid-permutation inclusions.

    Clamped bottom edge, diagonal traction on the right edge, traction-free
    elsewhere; the QoI is the mollified strain-trace average around a point on
    the fillet arc.
    """
    domain = lshape_domain()
    partition = media.partition_blocks(domain, 0.2)
    h = 0.2 / subgrid_n
    gen = InclusionGenParams(
        variant="subgrid",
        h=h,
        nominal_radius=h / 4.0,
        n=subgrid_n,
        n_min=n_min,
        n_max=n_max,
    )
    lam_m, mu_m = homogenize.lame_from_young_poisson(young[0], poisson)
    lam_i, mu_i = homogenize.lame_from_young_poisson(young[1], poisson)
    return Problem(
        partition=partition,
        gen_params=gen,
        pair=MaterialPair(
            kind="elastic", lam_m=lam_m, mu_m=mu_m, lam_i=lam_i, mu_i=mu_i, d=2
        ),
        spec=fem.ProblemSpec(
            physics=fem.ELASTIC,
            dirichlet=("bottom",),
            neumann={"right": tuple(traction)},
        ),
        qoi=fem.QoISpec(
            variant="mollified_strain_trace", point=tuple(qoi_point), radius=qoi_radius
        ),
        coarse_level=coarse_level,
        fine_level=fine_level,
        fraction_q=fraction_q,
        solver=solver,
    )
