"""Error-estimator-driven model selection and the coarse model hierarchy.

The selection walks a fixed coarse hierarchy (globally homogenized model,
nested quadrilateral meshes with elementwise homogenized coefficients, then
the blockwise homogenized model) and afterwards grows the set of resolved
blocks by marking the largest averaged local indicators, until the pilot
estimate of |q(u) - q(u0)| meets the bias tolerance.  All pilot averages for
all models share one microstructure seed list, and the per-model QoI samples
are cached for the level-selection step.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import problem as problem_mod
from .homogenize import BLOCKWISE, ModelSpec, coarse_model, refined_model
from .media import derive_seed

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SelectionParams:
    """Inputs of the selection loop: marking fraction, pilot size, bias tolerance."""

    tol_bias: float
    m_hat: int = 180
    gamma: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.m_hat < 2:
            raise ValueError("need at least two pilot samples")


@dataclass
class ModelEntry:
    """One emitted surrogate with its pilot cache."""

    model: ModelSpec
    label: str
    qois: np.ndarray
    work: float
    pilot_error: float
    indicators: dict | None = None


@dataclass
class ModelSequence:
    """Ordered surrogates (coarsest first) with shared-seed pilot caches."""

    entries: list
    fine_qois: np.ndarray
    fine_work: float
    seeds: list
    tol_bias: float
    exhausted: bool
    pilot_work: float
    selection_log: list = field(default_factory=list)

    @property
    def models(self):
        return [e.model for e in self.entries]

    def __len__(self):
        return len(self.entries)

    def for_tolerance(self, tol: float) -> "ModelSequence":
        """Prefix whose last model meets tol/sqrt(2), with its corrected bias.

        Follows the common initial splitting: the walk stops at the first
        model whose pilot error is below tol/sqrt(2), and the bias tolerance
        is corrected to that pilot error.
        """
        target = tol / np.sqrt(2.0)
        for k, e in enumerate(self.entries):
            if e.pilot_error <= target:
                return ModelSequence(
                    entries=self.entries[: k + 1],
                    fine_qois=self.fine_qois,
                    fine_work=self.fine_work,
                    seeds=self.seeds,
                    tol_bias=e.pilot_error,
                    exhausted=False,
                    pilot_work=self.pilot_work,
                    selection_log=self.selection_log,
                )
        if self.exhausted:
            return self
        raise ValueError(
            f"selection was not run deep enough for tolerance {tol}"
        )


def coarse_hierarchy(partition, pair, physics="scalar") -> list:
    """Models below the blockwise one, coarsest first.

    Scalar physics on a tensor-grid partition admits the globally homogenized
    model and the nested quadrilateral hierarchy; elasticity (no scaling
    shortcut) and non-tensor partitions start directly at the blockwise model.
    """
    if pair.kind != "scalar" or physics != "scalar" or not partition.is_tensor_grid():
        return [BLOCKWISE]
    nx, ny = partition.grid_shape()
    c_max = 0
    while nx % (2 ** (c_max + 1)) == 0 and ny % (2 ** (c_max + 1)) == 0:
        c_max += 1
    models = [ModelSpec("global")]
    models += [coarse_model(c) for c in range(c_max, -1, -1)]
    models.append(BLOCKWISE)
    return models


def mark_blocks(avg_indicators: dict, gamma: float) -> set:
    """Blocks whose averaged |indicator| reaches gamma times the maximum."""
    if not avg_indicators:
        raise ValueError("indicator map must not be empty")
    mags = {b: abs(v) for b, v in avg_indicators.items()}
    peak = max(mags.values())
    return {b for b, v in mags.items() if v >= gamma * peak}


class PilotEvaluator:
    """Pilot-sample evaluation backed by the real solve pipeline."""

    def __init__(self, problem):
        self.problem = problem

    def hierarchy(self):
        return coarse_hierarchy(
            self.problem.partition, self.problem.pair, self.problem.physics
        )

    def block_ids(self):
        return [b.id for b in self.problem.partition.blocks]

    def fine_samples(self, seeds):
        qs = np.empty(len(seeds))
        work = 0.0
        for i, s in enumerate(seeds):
            micro = problem_mod.microstructure(self.problem, s)
            qs[i], w = problem_mod.model_qoi(self.problem, problem_mod.fine_model(), micro)
            work += w
        return qs, work / len(seeds)

    def model_samples(self, model, seeds):
        qs = np.empty(len(seeds))
        work = 0.0
        for i, s in enumerate(seeds):
            micro = problem_mod.microstructure(self.problem, s)
            qs[i], w = problem_mod.model_qoi(self.problem, model, micro)
            work += w
        return qs, work / len(seeds)

    def model_samples_with_indicators(self, model, seeds):
        qs = np.empty(len(seeds))
        abs_ind = {b: 0.0 for b in self.block_ids()}
        work = None
        for i, s in enumerate(seeds):
            micro = problem_mod.microstructure(self.problem, s)
            rep, q0 = problem_mod.surrogate_report(self.problem, model, micro)
            qs[i] = q0
            for b, v in rep.block_indicators.items():
                abs_ind[b] += abs(v)
            work = problem_mod.workspace(self.problem, model).work
        n = float(len(seeds))
        return qs, float(work), {b: v / n for b, v in abs_ind.items()}

    def global_fix_work(self):
        ws = problem_mod.workspace(self.problem, ModelSpec("global"))
        return ws.fix_work


def select_models(problem, params: SelectionParams, master_seed: int) -> ModelSequence:
    """Model selection: hierarchy walk, then indicator-driven block refinement.

    Emits the full chain of surrogates down to the first model whose pilot
    error meets params.tol_bias (or until every block is resolved, in which
    case the corrected bias tolerance is zero and the sequence ends at the
    last proper surrogate).  Preprocessing work is charged at twice the dofs
    per surrogate pilot sample (primal and adjoint) and once per fine-scale
    pilot sample.
    """
    ev = problem if hasattr(problem, "model_samples") else PilotEvaluator(problem)
    seeds = [derive_seed(master_seed, problem_mod.PILOT_STREAM, i) for i in range(params.m_hat)]

    fine_qois, fine_work = ev.fine_samples(seeds)
    pilot_work = params.m_hat * fine_work
    entries = []
    lines = []

    def record(model, qs, work, indicators=None):
        nonlocal pilot_work
        err = float(np.mean(np.abs(fine_qois - qs)))
        entries.append(
            ModelEntry(
                model=model,
                label=model.label,
                qois=qs,
                work=float(work),
                pilot_error=err,
                indicators=indicators,
            )
        )
        pilot_work += params.m_hat * 2.0 * work
        refined = sorted(model.refined_blocks) if model.variant == "refined" else []
        lines.append(
            f"model={model.label} refined={refined} pilot_error={err!r} pilot_work={work!r}"
        )
        if len(entries) >= 2 and err > entries[-2].pilot_error:
            log.warning(
                "pilot error increased from %s to %s at model %s",
                entries[-2].pilot_error,
                err,
                model.label,
            )
        return err

    hierarchy = ev.hierarchy()
    if hierarchy and hierarchy[0].variant == "global":
        pilot_work += ev.global_fix_work()
    done = False
    for model in hierarchy:
        if model.variant == "blockwise":
            qs, work, indicators = ev.model_samples_with_indicators(model, seeds)
            err = record(model, qs, work, indicators)
        else:
            qs, work = ev.model_samples(model, seeds)
            err = record(model, qs, work)
        if err <= params.tol_bias:
            done = True
            break

    exhausted = False
    if not done:
        all_blocks = set(ev.block_ids())
        resolved = set()
        while True:
            unrefined = {
                b: v
                for b, v in entries[-1].indicators.items()
                if b not in resolved
            }
            marked = mark_blocks(unrefined, params.gamma)
            resolved |= marked
            if resolved == all_blocks:
                exhausted = True
                lines.append("all blocks resolved; bias tolerance corrected to 0")
                break
            model = refined_model(resolved)
            qs, work, indicators = ev.model_samples_with_indicators(model, seeds)
            err = record(model, qs, work, indicators)
            if err <= params.tol_bias:
                break

    tol_bias = 0.0 if exhausted else entries[-1].pilot_error
    return ModelSequence(
        entries=entries,
        fine_qois=fine_qois,
        fine_work=float(fine_work),
        seeds=seeds,
        tol_bias=tol_bias,
        exhausted=exhausted,
        pilot_work=float(pilot_work),
        selection_log=lines,
    )
