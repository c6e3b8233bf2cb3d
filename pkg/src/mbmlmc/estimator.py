"""Goal-oriented modeling-error estimation.

All quantities are per-sample (deterministic) instances; expectations are
taken as arithmetic means over a shared seed list.  Writing A for the fine
coefficient and A0 for the surrogate one on the same mesh, the residual
functional is R_g(v) = integral (A - A0) grad g . grad v, the approximate
estimator is the weighted integral -A0 (1 - A0/A) grad u0 . grad w0, and the
two-sided bounds combine computable norms of the combined primal/adjoint
errors.  For isotropic elasticity the coefficient algebra acts separately on
the volumetric and deviatoric parts of the strain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCombination, MeshMismatch
from .fem import Field
from .homogenize import CoefficientField


@dataclass(frozen=True)
class BoundsReport:
    lower: float
    upper: float
    s: float
    theta_plus: float
    theta_minus: float
    zeta_upper: float
    xi_upper: float


@dataclass
class EstimatorReport:
    estimate: float
    block_indicators: dict
    bounds: BoundsReport | None = None
    n_samples: int = 1

    def __post_init__(self):
        total = sum(self.block_indicators.values())
        if abs(total - self.estimate) > 1e-12 * max(1.0, abs(self.estimate)):
            raise ValueError("block indicators do not sum to the estimate")


def _check_meshes(mesh, *objs):
    for o in objs:
        if o.mesh is not mesh:
            raise MeshMismatch("fields and coefficients must share one mesh")


def _pair_products(g: Field, v: Field):
    """Elementwise integrand factors of grad g . grad v.

    Scalar: (gradprod,).  Elastic: (volumetric product, deviatoric product)
    of the strains, against which the isotropic tensor eigenvalues act.
    """
    gg = g.gradients()
    gv = v.gradients()
    if gg.ndim == 2:
        return (np.einsum("ed,ed->e", gg, gv),)
    eps_g = 0.5 * (gg + np.swapaxes(gg, 1, 2))
    eps_v = 0.5 * (gv + np.swapaxes(gv, 1, 2))
    div_g = np.trace(eps_g, axis1=1, axis2=2)
    div_v = np.trace(eps_v, axis1=1, axis2=2)
    full = np.einsum("eij,eij->e", eps_g, eps_v)
    vol = div_g * div_v / 2.0
    return (vol, full - vol)


def _weights(coeff_fine: CoefficientField, coeff_surr: CoefficientField, kind: str):
    """Per-element integrand weights (one array per eigenvalue channel).

    kind "residual": A - A0; "estimate": -A0 (1 - A0/A);
    "square": (A - A0)^2 / A; "energy": A.
    """
    if coeff_fine.is_scalar:
        channels = ((coeff_fine.kappa, coeff_surr.kappa),)
    else:
        d = 2.0
        av = d * coeff_fine.lam + 2.0 * coeff_fine.mu
        av0 = d * coeff_surr.lam + 2.0 * coeff_surr.mu
        channels = ((av, av0), (2.0 * coeff_fine.mu, 2.0 * coeff_surr.mu))
    out = []
    for a, a0 in channels:
        if kind == "residual":
            out.append(a - a0)
        elif kind == "estimate":
            out.append(-a0 * (1.0 - a0 / a))
        elif kind == "square":
            out.append((a - a0) ** 2 / a)
        else:
            out.append(a)
    return out


def _weighted_integral(weights, products, areas, per_element=False):
    total = np.zeros_like(areas)
    for w, p in zip(weights, products):
        total += w * p
    total *= areas
    return total if per_element else float(total.sum())


def residual_functional(
    g: Field, v: Field, coeff_fine: CoefficientField, coeff_surr: CoefficientField, mesh=None
) -> float:
    """R_g(v) = integral (A - A0) grad g . grad v over the shared mesh."""
    mesh = mesh or g.mesh
    _check_meshes(mesh, g, v, coeff_fine, coeff_surr)
    return _weighted_integral(
        _weights(coeff_fine, coeff_surr, "residual"), _pair_products(g, v), mesh.areas
    )


def local_indicators(
    u0: Field, w0: Field, coeff_fine: CoefficientField, coeff_surr: CoefficientField, mesh=None
) -> dict:
    """Per-block restriction of the estimate; keys cover every block id."""
    mesh = mesh or u0.mesh
    _check_meshes(mesh, u0, w0, coeff_fine, coeff_surr)
    per_elem = _weighted_integral(
        _weights(coeff_fine, coeff_surr, "estimate"),
        _pair_products(u0, w0),
        mesh.areas,
        per_element=True,
    )
    ids = np.unique(mesh.element_block)
    return {int(b): float(per_elem[mesh.element_block == b].sum()) for b in ids}


def error_estimate(
    u0: Field, w0: Field, coeff_fine: CoefficientField, coeff_surr: CoefficientField, mesh=None
) -> float:
    """Approximate modeling-error estimate from the surrogate solution pair.

    Defined as the sum of the per-block indicators so that additivity holds
    exactly for every evaluation.
    """
    return sum(local_indicators(u0, w0, coeff_fine, coeff_surr, mesh).values())


def two_sided_bounds(
    u0: Field,
    w0: Field,
    coeff_fine: CoefficientField,
    coeff_surr: CoefficientField,
    mesh=None,
    s: float = 1.0,
) -> BoundsReport:
    """Guaranteed lower/upper bounds on the modeling error in the QoI.

    Exact (up to solver tolerance) whenever the fine and surrogate solution
    pairs live in the same FE space.  The residual term enters the combination
    with a minus sign, which is the sign that reproduces the approximate
    estimator from the two upper bounds; see the parallelogram identity
    Q(e0) = 1/4 |s e0 + ep/s|_B^2 - 1/4 |s e0 - ep/s|_B^2 - R_u0(w0)
    for e0, ep the primal and adjoint modeling errors.
    """
    if s == 0.0:
        raise DegenerateCombination("s must be nonzero")
    mesh = mesh or u0.mesh
    _check_meshes(mesh, u0, w0, coeff_fine, coeff_surr)
    areas = mesh.areas
    uu = _pair_products(u0, u0)
    uw = _pair_products(u0, w0)
    ww = _pair_products(w0, w0)
    w_res = _weights(coeff_fine, coeff_surr, "residual")
    w_sq = _weights(coeff_fine, coeff_surr, "square")
    w_en = _weights(coeff_fine, coeff_surr, "energy")

    r_uu = _weighted_integral(w_res, uu, areas)
    r_uw = _weighted_integral(w_res, uw, areas)
    r_ww = _weighted_integral(w_res, ww, areas)
    zeta2 = _weighted_integral(w_sq, uu, areas)
    cross = _weighted_integral(w_sq, uw, areas)
    xi2 = _weighted_integral(w_sq, ww, areas)
    b_uu = _weighted_integral(w_en, uu, areas)
    b_uw = _weighted_integral(w_en, uw, areas)
    b_ww = _weighted_integral(w_en, ww, areas)

    if zeta2 == 0.0 and xi2 == 0.0 and (r_uu, r_uw, r_ww) == (0.0, 0.0, 0.0):
        return BoundsReport(0.0, 0.0, s, 0.0, 0.0, 0.0, 0.0)

    upp2 = {}
    low = {}
    theta = {}
    for sign in (1.0, -1.0):
        upp2[sign] = max(0.0, s * s * zeta2 + xi2 / (s * s) + sign * 2.0 * cross)
        a = s * r_uu + sign * r_uw / s  # residual of the combination at u0
        b = s * r_uw + sign * r_ww / s  # ... and at w0
        if a == 0.0 and b == 0.0:
            low[sign] = 0.0
            theta[sign] = 0.0
            continue
        denom = b_uw * b - b_ww * a
        if denom == 0.0:
            raise DegenerateCombination("theta denominator vanished")
        th = (b_uw * a - b_uu * b) / denom
        norm2 = b_uu + 2.0 * th * b_uw + th * th * b_ww
        if norm2 <= 0.0:
            raise DegenerateCombination("test combination has zero energy norm")
        low[sign] = abs(a + th * b) / np.sqrt(norm2)
        theta[sign] = th

    eta_low = 0.25 * low[1.0] ** 2 - 0.25 * upp2[-1.0] - r_uw
    eta_upp = 0.25 * upp2[1.0] - 0.25 * low[-1.0] ** 2 - r_uw
    return BoundsReport(
        lower=eta_low,
        upper=eta_upp,
        s=s,
        theta_plus=theta[1.0],
        theta_minus=theta[-1.0],
        zeta_upper=float(np.sqrt(zeta2)),
        xi_upper=float(np.sqrt(max(0.0, xi2))),
    )


def evaluate_report(
    u0: Field,
    w0: Field,
    coeff_fine: CoefficientField,
    coeff_surr: CoefficientField,
    block_ids=None,
    with_bounds: bool = False,
    s: float = 1.0,
) -> EstimatorReport:
    """Single-sample report: estimate, per-block indicators, optional bounds."""
    indicators = local_indicators(u0, w0, coeff_fine, coeff_surr)
    if block_ids is not None:
        for b in block_ids:
            indicators.setdefault(int(b), 0.0)
    bounds = (
        two_sided_bounds(u0, w0, coeff_fine, coeff_surr, s=s) if with_bounds else None
    )
    return EstimatorReport(
        estimate=sum(indicators.values()),
        block_indicators=indicators,
        bounds=bounds,
    )


def sample_average_indicators(problem, model, seeds, fine_qois=None):
    """Pilot averages over a seed list, coupling fine and surrogate per seed.

    Returns (mean estimate, mean |indicator| per block, mean |q(u) - q(u0)|).
    `fine_qois` may carry cached fine-scale QoI samples for the same seeds.
    """
    if len(seeds) == 0:
        raise ValueError("need at least one seed")
    from . import problem as problem_mod

    est_sum = 0.0
    abs_ind = {b.id: 0.0 for b in problem.partition.blocks}
    err_sum = 0.0
    for i, seed in enumerate(seeds):
        micro = problem_mod.microstructure(problem, seed)
        rep, q0 = problem_mod.surrogate_report(problem, model, micro)
        try:
            qf = fine_qois[i] if fine_qois is not None else None
        except (TypeError, KeyError):
            qf = None
        if qf is None:
            qf, _ = problem_mod.model_qoi(problem, problem_mod.fine_model(), micro)
        est_sum += rep.estimate
        for b, v in rep.block_indicators.items():
            abs_ind[b] += abs(v)
        err_sum += abs(qf - q0)
    n = float(len(seeds))
    return (
        est_sum / n,
        {b: v / n for b, v in abs_ind.items()},
        err_sum / n,
    )
