"""Multilevel Monte Carlo over a sequence of surrogate models.

Levels are surrogates from the adaptive selection; one coupled sample solves
two adjacent models on the same microstructure.  Level selection is an
exhaustive search over ordered model tuples scored by the estimated work
TOL_stat^-2 * sum sqrt(V_l W_l), with variances and costs read off the cached
pilot samples.  Sample counts follow the standard constrained allocation with
a floor of two samples per level.  All reductions are index-ordered so runs
are reproducible for a fixed master seed at any worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from . import problem as problem_mod
from .adapt import ModelSequence
from .errors import BiasExceedsTolerance, NotEnoughModels
from .homogenize import FINE, ModelSpec
from .media import derive_seed


@dataclass(frozen=True)
class ToleranceSplit:
    """TOL = TOL_bias + TOL_stat."""

    tol: float
    tol_bias: float
    tol_stat: float


def split_tolerance(tol: float, bias: float | None = None) -> ToleranceSplit:
    """Initial splitting TOL_bias = TOL/sqrt(2), or the corrected split for a
    measured bias `bias` (which must stay below TOL)."""
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    if bias is None:
        bias = tol / math.sqrt(2.0)
    elif bias >= tol:
        raise BiasExceedsTolerance(f"bias {bias} >= tolerance {tol}")
    return ToleranceSplit(tol=tol, tol_bias=bias, tol_stat=tol - bias)


def coupled_sample(model_hi: ModelSpec, model_lo, problem, seed: int):
    """(Y, work) for one level sample: both models share one microstructure."""
    micro = problem_mod.microstructure(problem, seed)
    fracs = problem_mod.fractions(problem, micro)
    q_hi, w_hi = problem_mod.model_qoi(problem, model_hi, micro, fracs)
    if model_lo is None:
        return q_hi, w_hi
    q_lo, w_lo = problem_mod.model_qoi(problem, model_lo, micro, fracs)
    return q_hi - q_lo, w_hi + w_lo


def estimated_cost(variances, works, tol_stat: float) -> float:
    """Estimated total MLMC work for the statistical tolerance, as printed:
    TOL_stat^-2 * sum_l sqrt(V_l W_l)."""
    if len(variances) != len(works):
        raise ValueError("variance and work lists must have equal length")
    return sum(math.sqrt(v * w) for v, w in zip(variances, works)) / tol_stat**2


def allocate_samples(variances, works, tol_stat: float):
    """Sample counts M_l = ceil(TOL_stat^-2 sqrt(V_l/W_l) sum_j sqrt(V_j W_j)),
    floored at 2; guarantees sum_l V_l / M_l <= TOL_stat^2."""
    total = sum(math.sqrt(v * w) for v, w in zip(variances, works))
    out = []
    for v, w in zip(variances, works):
        raw = math.sqrt(v / w) * total / tol_stat**2
        out.append(max(2, math.ceil(raw)))
    return out


@dataclass
class LevelStats:
    variances: list
    works: list
    samples: list


@dataclass
class LevelPlan:
    """Levels for one MLMC run (coarsest first) with pilot statistics."""

    models: list  # ModelSpec per level
    labels: list
    bias_mode: str  # "corrected" | "zero"
    split: ToleranceSplit
    stats: LevelStats
    est_cost: float
    pilot_work: float = 0.0


def _pairwise_stats(qois_chain, works_chain):
    """V_l, W_l for a chain of cached sample vectors (level 1 pays only itself)."""
    variances = [float(np.var(qois_chain[0], ddof=1))]
    works = [works_chain[0]]
    for lo, hi, w_lo, w_hi in zip(
        qois_chain[:-1], qois_chain[1:], works_chain[:-1], works_chain[1:]
    ):
        variances.append(float(np.var(hi - lo, ddof=1)))
        works.append(w_hi + w_lo)
    return variances, works


def select_levels(
    seq: ModelSequence, levels: int, tol: float, split=None, force_zero: bool = False
) -> LevelPlan:
    """Cheapest L-level plan from the cached pilot samples.

    Two candidate modes: keep the corrected bias tolerance with the last
    surrogate as final level, or spend the whole tolerance on statistics with
    the fine-scale model on top.  Within each mode every ordered (L-1)-tuple
    of earlier models is scored by the estimated cost; the global minimizer
    wins (first hit on ties, candidate order: corrected mode first, tuples in
    lexicographic order).  `force_zero` restricts to the zero-bias mode, used
    for reference runs.
    """
    if levels < 1:
        raise NotEnoughModels("need at least one level")
    entries = seq.entries
    candidates = []

    def add_candidates(pool_q, pool_w, pool_labels, pool_models, last_idx, mode, tol_stat):
        idx_pool = list(range(last_idx))
        for combo in combinations(idx_pool, levels - 1):
            chain = list(combo) + [last_idx]
            v, w = _pairwise_stats(
                [pool_q[i] for i in chain], [pool_w[i] for i in chain]
            )
            cost = estimated_cost(v, w, tol_stat)
            candidates.append(
                (
                    cost,
                    LevelPlan(
                        models=[pool_models[i] for i in chain],
                        labels=[pool_labels[i] for i in chain],
                        bias_mode=mode,
                        split=split_tolerance(tol, 0.0 if mode == "zero" else seq.tol_bias),
                        stats=LevelStats(v, w, allocate_samples(v, w, tol_stat)),
                        est_cost=cost,
                        pilot_work=seq.pilot_work,
                    ),
                )
            )

    qois = [e.qois for e in entries]
    works = [e.work for e in entries]
    labels = [e.label for e in entries]
    models = [e.model for e in entries]

    if not force_zero and not seq.exhausted and seq.tol_bias < tol and len(entries) >= levels:
        tol_stat = tol - seq.tol_bias
        add_candidates(qois, works, labels, models, len(entries) - 1, "corrected", tol_stat)
    if len(entries) >= levels - 1:
        pool_q = qois + [seq.fine_qois]
        pool_w = works + [seq.fine_work]
        pool_labels = labels + ["fine"]
        pool_models = models + [FINE]
        add_candidates(pool_q, pool_w, pool_labels, pool_models, len(entries), "zero", tol)
    if not candidates:
        raise NotEnoughModels(
            f"{len(entries)} cached models cannot fill {levels} levels"
        )
    best = min(candidates, key=lambda c: c[0])
    return best[1]


@dataclass
class MLMCResult:
    estimate: float
    levels: list  # dicts: level, label, samples, variance, work, mean
    work_total: float
    work_preprocess: float
    master_seed: int
    repetition: int = 0
    tol: float | None = None


def _map_samples(fn, seeds, threads):
    if threads <= 1:
        return [fn(s) for s in seeds]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, seeds))


def telescoping_estimate(level_samples) -> float:
    """Sum of index-ordered level means (numpy pairwise reduction per level)."""
    return float(sum(np.mean(np.asarray(ys)) for ys in level_samples))


def run_mlmc(
    plan: LevelPlan, problem, master_seed: int, repetition: int = 0, threads: int = 1
) -> MLMCResult:
    """Run the plan with level-disjoint seed streams derived from the master seed."""
    level_rows = []
    level_samples = []
    work_total = 0.0
    for l, model in enumerate(plan.models, start=1):
        lower = plan.models[l - 2] if l >= 2 else None
        m_l = plan.stats.samples[l - 1]
        seeds = [
            derive_seed(master_seed, problem_mod.LEVEL_STREAM, repetition, l, i)
            for i in range(m_l)
        ]
        out = _map_samples(
            lambda s: coupled_sample(model, lower, problem, s), seeds, threads
        )
        ys = np.array([o[0] for o in out])
        ws = np.array([float(o[1]) for o in out])
        level_samples.append(ys)
        work_level = float(ws.sum())
        work_total += work_level
        level_rows.append(
            {
                "level": l,
                "label": plan.labels[l - 1],
                "samples": m_l,
                "variance": float(np.var(ys, ddof=1)) if m_l > 1 else 0.0,
                "work": float(ws.mean()),
                "mean": float(np.mean(ys)),
            }
        )
    return MLMCResult(
        estimate=telescoping_estimate(level_samples),
        levels=level_rows,
        work_total=work_total + plan.pilot_work,
        work_preprocess=plan.pilot_work,
        master_seed=master_seed,
        repetition=repetition,
        tol=plan.split.tol,
    )


def run_plain_mc(
    model: ModelSpec,
    problem,
    tol: float,
    master_seed: int,
    m_hat: int = 64,
    repetition: int = 0,
    threads: int = 1,
) -> MLMCResult:
    """Single-level Monte Carlo baseline: pilot variance, then M = ceil(V/TOL^2)
    fresh samples; the whole tolerance budget is statistical."""
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    pilot_seeds = [
        derive_seed(master_seed, problem_mod.MC_STREAM, repetition, 0, i)
        for i in range(m_hat)
    ]
    pilot = _map_samples(lambda s: coupled_sample(model, None, problem, s), pilot_seeds, threads)
    v_hat = float(np.var(np.array([p[0] for p in pilot]), ddof=1))
    m = max(2, math.ceil(v_hat / tol**2))
    seeds = [
        derive_seed(master_seed, problem_mod.MC_STREAM, repetition, 1, i)
        for i in range(m)
    ]
    out = _map_samples(lambda s: coupled_sample(model, None, problem, s), seeds, threads)
    ys = np.array([o[0] for o in out])
    ws = np.array([float(o[1]) for o in out])
    row = {
        "level": 1,
        "label": model.label,
        "samples": m,
        "variance": float(np.var(ys, ddof=1)),
        "work": float(ws.mean()),
        "mean": float(np.mean(ys)),
    }
    return MLMCResult(
        estimate=float(np.mean(ys)),
        levels=[row],
        work_total=float(ws.sum()),
        work_preprocess=0.0,
        master_seed=master_seed,
        repetition=repetition,
        tol=tol,
    )
