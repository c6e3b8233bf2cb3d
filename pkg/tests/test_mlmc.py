import numpy as np
import pytest

from mbmlmc import adapt, media, mlmc, problem
from mbmlmc.adapt import ModelEntry, ModelSequence
from mbmlmc.errors import BiasExceedsTolerance, NotEnoughModels
from mbmlmc.homogenize import BLOCKWISE, FINE, GLOBAL
from mbmlmc.mlmc import (
    allocate_samples,
    coupled_sample,
    estimated_cost,
    run_mlmc,
    run_plain_mc,
    select_levels,
    split_tolerance,
    telescoping_estimate,
)


def desk_problem(**kw):
    args = dict(width=0.4, height=0.2, blocks_x=4, blocks_y=2,
                coarse_level=1, fine_level=3, qoi_block=(1, 1))
    args.update(kw)
    return problem.heat_rect_problem(**args)


def synthetic_sequence(qois_per_model, works, fine_qois, fine_work,
                       tol_bias=0.01, exhausted=False, pilot_work=0.0):
    entries = [
        ModelEntry(model=BLOCKWISE, label=f"m{k}", qois=np.asarray(q), work=w,
                   pilot_error=1.0 / (k + 1))
        for k, (q, w) in enumerate(zip(qois_per_model, works))
    ]
    return ModelSequence(entries=entries, fine_qois=np.asarray(fine_qois),
                         fine_work=fine_work, seeds=list(range(len(fine_qois))),
                         tol_bias=tol_bias, exhausted=exhausted, pilot_work=pilot_work)


class TestToleranceSplit:
    def test_initial_common_splitting(self):
        s = split_tolerance(0.01)
        assert s.tol_bias == pytest.approx(0.0070710678, rel=1e-6)
        assert s.tol_stat == pytest.approx(0.01 - 0.0070710678, rel=1e-6)
        assert s.tol_bias + s.tol_stat == pytest.approx(s.tol)

    def test_zero_bias_gives_full_statistical_budget(self):
        s = split_tolerance(0.5, bias=0.0)
        assert s.tol_stat == 0.5

    def test_corrected_split_is_additive(self):
        s = split_tolerance(0.01, bias=0.004)
        assert s.tol_stat == pytest.approx(0.006)

    def test_bias_exceeding_tolerance_rejected(self):
        with pytest.raises(BiasExceedsTolerance):
            split_tolerance(0.01, bias=0.02)


class TestCoupledSample:
    def test_same_model_gives_exact_zero(self):
        prob = desk_problem()
        y, work = coupled_sample(BLOCKWISE, BLOCKWISE, prob, 42)
        assert y == 0.0
        assert work == 2 * problem.workspace(prob, BLOCKWISE).work

    def test_level_one_is_plain_qoi(self):
        prob = desk_problem()
        y, work = coupled_sample(BLOCKWISE, None, prob, 42)
        micro = problem.microstructure(prob, 42)
        q, w = problem.model_qoi(prob, BLOCKWISE, micro)
        assert y == q and work == w

    def test_coupling_correlation(self):
        # shared microstructures make adjacent models strongly correlated
        prob = desk_problem()
        hi, lo = [], []
        for i in range(200):
            seed = media.derive_seed(9, 2, 0, 1, i)
            micro = problem.microstructure(prob, seed)
            fr = media.block_fractions(micro)
            hi.append(problem.model_qoi(prob, FINE, micro, fr)[0])
            lo.append(problem.model_qoi(prob, BLOCKWISE, micro, fr)[0])
        corr = np.corrcoef(hi, lo)[0, 1]
        assert corr > 0.5


class TestCostAndAllocation:
    def test_hand_cost(self):
        assert estimated_cost([4.0, 1.0], [1.0, 4.0], 0.1) == pytest.approx(400.0)

    def test_zero_variance_level_contributes_nothing(self):
        assert estimated_cost([4.0, 0.0], [1.0, 9.0], 0.1) == pytest.approx(200.0)

    def test_single_level(self):
        assert estimated_cost([2.0], [8.0], 0.5) == pytest.approx(16.0)

    def test_hand_allocation(self):
        assert allocate_samples([4.0, 1.0], [1.0, 4.0], 0.1) == [800, 200]

    def test_zero_variance_floors_at_two(self):
        assert allocate_samples([0.0, 1.0], [1.0, 1.0], 0.1) == [2, 100]

    def test_single_level_reduces_to_plain_mc_count(self):
        assert allocate_samples([2.0], [5.0], 0.1) == [200]

    def test_feasibility_random_inputs(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            n = rng.integers(1, 5)
            v = rng.uniform(0.0, 10.0, n)
            w = rng.uniform(0.1, 100.0, n)
            ts = rng.uniform(0.01, 1.0)
            m = allocate_samples(v, w, ts)
            assert all(mi >= 2 for mi in m)
            assert sum(vi / mi for vi, mi in zip(v, m)) <= ts**2 + 1e-12


class TestSelectLevels:
    def test_identity_when_levels_match_sequence(self):
        rng = np.random.default_rng(0)
        base = rng.normal(size=64)
        seq = synthetic_sequence(
            [base + rng.normal(scale=1.0, size=64), base + rng.normal(scale=0.1, size=64)],
            [1.0, 10.0],
            base, 100.0, tol_bias=0.01,
        )
        plan = select_levels(seq, 2, 1.0)
        assert plan.labels in (["m0", "m1"], ["m0", "fine"], ["m1", "fine"])
        # with L equal to the corrected pool size there is exactly one corrected tuple
        corrected = select_levels(seq, 2, 1.0, force_zero=False)
        assert len(corrected.models) == 2

    def test_synthetic_costs_pick_cheaper_tuple(self):
        # two intermediate models; model a couples tightly (cheap), model b loosely
        rng = np.random.default_rng(1)
        base = rng.normal(size=400)
        qa = base + rng.normal(scale=0.05, size=400)   # tight coupling to fine
        qb = rng.normal(size=400) * 4.0                # useless coupling, high var
        seq = synthetic_sequence([qb, qa], [1.0, 1.0], base, 50.0,
                                 tol_bias=0.5, exhausted=True)
        plan = select_levels(seq, 2, 1.0)
        assert plan.bias_mode == "zero"
        assert plan.labels == ["m1", "fine"]

    def test_corrected_vs_zero_mode_tradeoff(self):
        # qualitative pattern: an expensive fine level makes the corrected mode
        # (surrogate last level) cheaper for L=2, while for L=3 the extra level
        # absorbs the variance and the zero-bias mode wins
        rng = np.random.default_rng(2)
        base = rng.normal(size=2000)
        q0 = base + rng.normal(scale=1.0, size=2000)
        q1 = base + rng.normal(scale=0.3, size=2000)
        seq = synthetic_sequence([q0, q1], [1.0, 20.0], base, 10000.0,
                                 tol_bias=0.2)
        two = select_levels(seq, 2, 1.0)
        assert two.bias_mode == "corrected"
        assert two.labels == ["m0", "m1"]
        three = select_levels(seq, 3, 1.0)
        assert three.bias_mode == "zero"
        assert three.labels == ["m0", "m1", "fine"]

    def test_exhausted_sequence_forces_zero_mode(self):
        rng = np.random.default_rng(4)
        base = rng.normal(size=32)
        seq = synthetic_sequence([base + 1.0], [1.0], base, 10.0, exhausted=True, tol_bias=0.0)
        plan = select_levels(seq, 2, 1.0)
        assert plan.bias_mode == "zero"
        assert plan.labels == ["m0", "fine"]

    def test_not_enough_models(self):
        rng = np.random.default_rng(5)
        base = rng.normal(size=16)
        seq = synthetic_sequence([base], [1.0], base, 10.0, tol_bias=0.01)
        with pytest.raises(NotEnoughModels):
            select_levels(seq, 4, 1.0)

    def test_cost_scaling_invariance(self):
        # multiplying all works by a constant leaves the argmin unchanged
        rng = np.random.default_rng(6)
        base = rng.normal(size=128)
        qs = [base + rng.normal(scale=s, size=128) for s in (2.0, 0.5, 0.1)]
        for scale in (1.0, 7.0):
            seq = synthetic_sequence(qs, [w * scale for w in (1.0, 4.0, 20.0)],
                                     base, 100.0 * scale, tol_bias=0.05)
            plan = select_levels(seq, 2, 0.5)
            if scale == 1.0:
                first = plan.labels
            else:
                assert plan.labels == first

    def test_global_model_enters_candidates(self):
        rng = np.random.default_rng(7)
        base = rng.normal(size=64)
        entries = [
            ModelEntry(model=GLOBAL, label="global", qois=base * 0.2, work=1.0, pilot_error=1.0),
            ModelEntry(model=BLOCKWISE, label="blockwise",
                       qois=base + rng.normal(scale=0.01, size=64), work=50.0, pilot_error=0.1),
        ]
        seq = ModelSequence(entries=entries, fine_qois=base, fine_work=500.0,
                            seeds=list(range(64)), tol_bias=0.1, exhausted=False,
                            pilot_work=0.0)
        plan = select_levels(seq, 2, 1.0)
        assert plan.labels[0] in ("global", "blockwise")


class TestRuns:
    def test_telescoping_identity_bitwise(self):
        # same model on both levels with shared per-index seeds: the telescoped
        # estimate equals the last-level plain mean bitwise
        rng = np.random.default_rng(8)
        q = rng.normal(size=37)
        levels = [q, q - q]  # Y_1 = q, Y_2 = 0 exactly
        assert telescoping_estimate(levels) == float(np.mean(q))

    def test_constant_qoi_exact(self):
        prob = desk_problem(p_inclusion=0.0)  # no randomness at all
        seq = adapt.select_models(prob, adapt.SelectionParams(tol_bias=1e-12, m_hat=2), 5)
        plan = select_levels(seq, 2, 0.5, force_zero=True)
        res = run_mlmc(plan, prob, 123)
        q_const, _ = problem.model_qoi(prob, FINE, problem.microstructure(prob, 999))
        assert res.estimate == pytest.approx(q_const, rel=1e-12)
        assert all(row["samples"] == 2 for row in res.levels)

    def test_run_is_deterministic_and_thread_invariant(self):
        prob = desk_problem()
        seq = adapt.select_models(prob, adapt.SelectionParams(tol_bias=0.3, m_hat=4), 5)
        plan = select_levels(seq, 2, 0.8)
        a = run_mlmc(plan, prob, 77, threads=1)
        b = run_mlmc(plan, prob, 77, threads=1)
        c = run_mlmc(plan, prob, 77, threads=3)
        assert a.estimate == b.estimate == c.estimate
        assert a.work_total == c.work_total

    def test_level_streams_disjoint(self):
        s1 = {media.derive_seed(5, problem.LEVEL_STREAM, 0, 1, i) for i in range(100)}
        s2 = {media.derive_seed(5, problem.LEVEL_STREAM, 0, 2, i) for i in range(100)}
        assert not (s1 & s2)

    def test_work_total_includes_pilot(self):
        prob = desk_problem()
        seq = adapt.select_models(prob, adapt.SelectionParams(tol_bias=0.3, m_hat=4), 5)
        plan = select_levels(seq, 2, 0.8)
        res = run_mlmc(plan, prob, 3)
        levels_work = sum(r["samples"] * r["work"] for r in res.levels)
        assert res.work_total == pytest.approx(levels_work + seq.pilot_work)
        assert res.work_preprocess == pytest.approx(seq.pilot_work)


class TestPlainMC:
    def test_constant_qoi_floor_guard(self):
        prob = desk_problem(p_inclusion=0.0)
        res = run_plain_mc(FINE, prob, 0.5, 1, m_hat=2)
        q_const, _ = problem.model_qoi(prob, FINE, problem.microstructure(prob, 999))
        assert res.estimate == pytest.approx(q_const, rel=1e-12)
        assert res.levels[0]["samples"] == 2

    def test_clt_variance_of_mean(self):
        # spread of repeated means matches V/M within 3 standard errors
        prob = desk_problem()
        reps = 50
        means = []
        m_used = None
        for rep in range(reps):
            res = run_plain_mc(BLOCKWISE, prob, 0.25, 7, m_hat=16, repetition=rep)
            means.append(res.estimate)
            m_used = res.levels[0]["samples"]
            v_hat = res.levels[0]["variance"]
        means = np.array(means)
        var_of_mean = means.var(ddof=1)
        expected = v_hat / m_used
        # chi-square spread of a 50-sample variance: ~3 sigma band
        assert var_of_mean == pytest.approx(expected, rel=0.75)

    def test_work_scales_inverse_tolerance_squared(self):
        prob = desk_problem()
        r1 = run_plain_mc(BLOCKWISE, prob, 0.2, 11, m_hat=32)
        r2 = run_plain_mc(BLOCKWISE, prob, 0.1, 11, m_hat=32)
        ratio = r2.work_total / r1.work_total
        assert ratio == pytest.approx(4.0, abs=0.5)
