"""Effective material parameters and elementwise coefficient fields.

Two-phase effective values come from the Hashin-Shtrikman bounds evaluated
with sample-dependent volume fractions: the lower bound when the matrix is the
compliant phase, the upper bound when it is the stiff one.  Coefficient fields
assign either these effective values (per block, per coarse cell, or globally)
or the pointwise phase values (element-centroid staircase) to mesh elements.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import media
from .errors import InvalidFractions, InvalidPoisson, MeshSpecMismatch, NotApplicable


@dataclass(frozen=True)
class MaterialPair:
    """Phase parameters for matrix (M) and inclusions (I).

    kind "scalar": conductivities (kappa_m, kappa_i).
    kind "elastic": Lame pairs (lam_m, mu_m), (lam_i, mu_i) with spatial
    dimension d; the d-dimensional bulk modulus K = lam + 2 mu / d must be
    positive for both phases.
    """

    kind: str  # "scalar" | "elastic"
    kappa_m: float = 0.0
    kappa_i: float = 0.0
    lam_m: float = 0.0
    mu_m: float = 0.0
    lam_i: float = 0.0
    mu_i: float = 0.0
    d: int = 2

    def __post_init__(self):
        if self.kind == "scalar":
            if self.kappa_m <= 0 or self.kappa_i <= 0:
                raise ValueError("conductivities must be positive")
        elif self.kind == "elastic":
            for lam, mu in ((self.lam_m, self.mu_m), (self.lam_i, self.mu_i)):
                if mu <= 0 or lam + 2.0 * mu / self.d <= 0:
                    raise ValueError("need mu > 0 and bulk modulus K > 0")
        else:
            raise ValueError(f"unknown material kind {self.kind!r}")

    @property
    def bulk_m(self):
        return self.lam_m + 2.0 * self.mu_m / self.d

    @property
    def bulk_i(self):
        return self.lam_i + 2.0 * self.mu_i / self.d


@dataclass(frozen=True)
class ModelSpec:
    """Identifies one surrogate (or the fine-scale base model).

    variant: "global" | "coarse" | "blockwise" | "refined" | "fine".
    "coarse" carries `coarsen`, the number of factor-2 coarsenings of the
    block grid defining the quadrilateral mesh level; "refined" carries the
    frozenset of block ids whose microstructure is resolved.
    """

    variant: str
    coarsen: int = 0
    refined_blocks: frozenset = frozenset()

    def __post_init__(self):
        if self.variant not in ("global", "coarse", "blockwise", "refined", "fine"):
            raise ValueError(f"unknown model variant {self.variant!r}")

    @property
    def label(self):
        if self.variant == "coarse":
            return f"coarse{self.coarsen}"
        if self.variant == "refined":
            return f"refined{len(self.refined_blocks)}"
        return self.variant

    def resolves_block(self, block_id: int) -> bool:
        """True when the microstructure is resolved inside this block."""
        if self.variant == "fine":
            return True
        return self.variant == "refined" and block_id in self.refined_blocks


GLOBAL = ModelSpec("global")
BLOCKWISE = ModelSpec("blockwise")
FINE = ModelSpec("fine")


def coarse_model(coarsen: int) -> ModelSpec:
    return ModelSpec("coarse", coarsen=coarsen)


def refined_model(block_ids) -> ModelSpec:
    return ModelSpec("refined", refined_blocks=frozenset(int(b) for b in block_ids))


@dataclass
class CoefficientField:
    """Per-element coefficients aligned with a mesh.

    Scalar problems fill `kappa`; elastic problems fill `lam` and `mu`.
    """

    mesh: object
    kappa: np.ndarray | None = None
    lam: np.ndarray | None = None
    mu: np.ndarray | None = None

    @property
    def is_scalar(self):
        return self.kappa is not None


def _check_fractions(phi_m, phi_i):
    if phi_m < -1e-12 or phi_i < -1e-12 or abs(phi_m + phi_i - 1.0) > 1e-9:
        raise InvalidFractions(f"phi_m={phi_m}, phi_i={phi_i}")


def _hs_value(a_m, a_i, phi_m, phi_i, shift):
    """Common HS form: arithmetic mean minus the two-phase correction."""
    arith = phi_m * a_m + phi_i * a_i
    denom = a_i * phi_m + a_m * phi_i + shift
    return arith - (a_m - a_i) ** 2 * phi_m * phi_i / denom


def hs_conductivity(kappa_m, kappa_i, phi_m, phi_i):
    """Effective conductivity: lower HS bound if kappa_m <= kappa_i, else upper."""
    _check_fractions(phi_m, phi_i)
    if kappa_m <= 0 or kappa_i <= 0:
        raise InvalidFractions("conductivities must be positive")
    shift = min(kappa_m, kappa_i) if kappa_m <= kappa_i else max(kappa_m, kappa_i)
    return _hs_value(kappa_m, kappa_i, phi_m, phi_i, shift)


def _hs_shear_shift(bulk, mu, d):
    return mu * (d * bulk / 2.0 + (d + 1) * (d - 2) * mu / d) / (bulk + 2.0 * mu)


def hs_elastic_moduli(pair: MaterialPair, phi_m, phi_i):
    """Effective (K, mu, lam) from the elastic HS bounds.

    The bound side is picked per modulus by the same compliant-matrix rule as
    for conductivity; lam is recovered from K = lam + 2 mu / d.
    """
    if pair.kind != "elastic":
        raise NotApplicable("elastic bounds need an elastic material pair")
    _check_fractions(phi_m, phi_i)
    d = pair.d
    k_m, k_i = pair.bulk_m, pair.bulk_i
    if k_m <= k_i:
        mu_side = min(pair.mu_m, pair.mu_i)
    else:
        mu_side = max(pair.mu_m, pair.mu_i)
    k_eff = _hs_value(k_m, k_i, phi_m, phi_i, 2.0 * (d - 1) / d * mu_side)
    if pair.mu_m <= pair.mu_i:
        k_side = min(k_m, k_i)
        mu_ref = min(pair.mu_m, pair.mu_i)
    else:
        k_side = max(k_m, k_i)
        mu_ref = max(pair.mu_m, pair.mu_i)
    mu_eff = _hs_value(
        pair.mu_m, pair.mu_i, phi_m, phi_i, _hs_shear_shift(k_side, mu_ref, d)
    )
    lam_eff = k_eff - 2.0 * mu_eff / d
    return k_eff, mu_eff, lam_eff


def lame_from_young_poisson(young, poisson):
    """(lam, mu) from Young's modulus and Poisson ratio."""
    if young <= 0:
        raise ValueError("Young's modulus must be positive")
    if not -1.0 < poisson < 0.5:
        raise InvalidPoisson(f"poisson ratio {poisson} outside (-1, 0.5)")
    lam = young * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson))
    mu = young / (2.0 * (1.0 + poisson))
    return lam, mu


def effective_values(pair: MaterialPair, phi_m, phi_i):
    """Effective coefficients for one region: kappa, or (lam, mu)."""
    if pair.kind == "scalar":
        return hs_conductivity(pair.kappa_m, pair.kappa_i, phi_m, phi_i)
    k_eff, mu_eff, lam_eff = hs_elastic_moduli(pair, phi_m, phi_i)
    return (lam_eff, mu_eff)


def scaled_global_qoi(q_fix, kappa_fix, kappa_eff):
    """QoI of the globally homogenized model by linear 1/kappa scaling.

    Valid for the scalar problem with a QoI linear in the solution; one fixed
    solve gives q_fix at kappa_fix and every other realization follows at O(1)
    cost.  Elastic pairs cannot be scaled this way.
    """
    if kappa_eff <= 0 or kappa_fix <= 0:
        raise InvalidFractions("coefficients must be positive")
    return q_fix * kappa_fix / kappa_eff


def build_coefficient_field(
    spec: ModelSpec,
    micro: media.Microstructure,
    mesh,
    pair: MaterialPair,
    fractions: np.ndarray | None = None,
    q: int = 64,
) -> CoefficientField:
    """Per-element coefficients for a model on its mesh.

    Elements inside resolved blocks (and all elements of the fine model) take
    the phase value of their centroid; homogenized regions take the HS value
    of the sample volume fractions of their block, coarse cell, or the whole
    domain.  `fractions` may carry precomputed per-block inclusion fractions.

    The mesh need not be the model's own mesh (the estimator evaluates two
    models on one shared mesh), but its elements must nest within the model's
    coefficient regions: a coarse-cell coefficient needs the matching coarse
    grid, and block-resolved coefficients cannot live on a coarse grid whose
    elements straddle blocks.
    """
    if spec.variant == "coarse":
        if mesh.model_key != _mesh_key(spec):
            raise MeshSpecMismatch(
                f"coarse-cell coefficient needs its own grid, mesh is {mesh.model_key!r}"
            )
    elif spec.variant != "global" and mesh.coarse_cells is not None:
        raise MeshSpecMismatch(
            f"{spec.variant!r} coefficient on a coarse grid: elements straddle blocks"
        )
    part = micro.partition
    nel = len(mesh.triangles)
    centroids = mesh.centroids
    in_disc = None

    if fractions is None and spec.variant != "fine":
        fractions = media.block_fractions(micro, q)
    areas = np.array([b.area for b in part.blocks])

    def phase_values(mask):
        nonlocal in_disc
        if in_disc is None:
            in_disc = micro.in_inclusion(centroids[:, 0], centroids[:, 1])
        return in_disc & mask

    if pair.kind == "scalar":
        values = np.empty(nel)
    else:
        lam = np.empty(nel)
        mu = np.empty(nel)

    def fill(mask, value):
        if pair.kind == "scalar":
            values[mask] = value
        else:
            lam[mask] = value[0]
            mu[mask] = value[1]

    def fill_phase(mask):
        inc = phase_values(mask)
        mat = mask & ~inc
        if pair.kind == "scalar":
            values[inc] = pair.kappa_i
            values[mat] = pair.kappa_m
        else:
            lam[inc], mu[inc] = pair.lam_i, pair.mu_i
            lam[mat], mu[mat] = pair.lam_m, pair.mu_m

    if spec.variant == "fine":
        fill_phase(np.ones(nel, dtype=bool))
    elif spec.variant == "global":
        phi_i = float(np.dot(fractions, areas) / areas.sum())
        fill(np.ones(nel, dtype=bool), effective_values(pair, 1.0 - phi_i, phi_i))
    elif spec.variant == "coarse":
        cells = mesh.coarse_cells  # list of (cell block-id tuple)
        for elems, block_ids in cells:
            ids = np.asarray(block_ids) - 1
            phi_i = float(np.dot(fractions[ids], areas[ids]) / areas[ids].sum())
            fill(elems, effective_values(pair, 1.0 - phi_i, phi_i))
    else:  # blockwise / refined
        for b in part.blocks:
            mask = mesh.element_block == b.id
            if spec.resolves_block(b.id):
                fill_phase(mask)
            else:
                phi_i = fractions[b.id - 1]
                fill(mask, effective_values(pair, 1.0 - phi_i, phi_i))

    if pair.kind == "scalar":
        return CoefficientField(mesh=mesh, kappa=values)
    return CoefficientField(mesh=mesh, lam=lam, mu=mu)


def _mesh_key(spec: ModelSpec):
    if spec.variant == "coarse":
        return ("coarse", spec.coarsen)
    if spec.variant == "refined":
        return ("refined", tuple(sorted(spec.refined_blocks)))
    return (spec.variant,)
