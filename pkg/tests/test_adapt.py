import numpy as np
import pytest

from mbmlmc import adapt, media, problem
from mbmlmc.adapt import (
    ModelSequence,
    SelectionParams,
    coarse_hierarchy,
    mark_blocks,
    select_models,
)
from mbmlmc.homogenize import BLOCKWISE, MaterialPair


class StubEvaluator:
    """Deterministic models with prescribed pilot errors, for harness tests."""

    def __init__(self, model_errors, fine_value=10.0, block_count=4,
                 indicator_maps=None, works=None):
        self.model_errors = model_errors  # per hierarchy/refinement step
        self.fine_value = fine_value
        self.block_count = block_count
        self.indicator_maps = indicator_maps or []
        self.works = works or {}
        self.calls = []

    def hierarchy(self):
        return [BLOCKWISE]

    def block_ids(self):
        return list(range(1, self.block_count + 1))

    def fine_samples(self, seeds):
        return np.full(len(seeds), self.fine_value), 100.0

    def _entry(self, model, seeds):
        step = len(self.calls)
        self.calls.append(model)
        err = self.model_errors[step]
        qs = np.full(len(seeds), self.fine_value - err)
        qs[0] += 0.0  # constant samples: mean |q_f - q| = err exactly
        return qs, float(self.works.get(step, 10.0 * (step + 1)))

    def model_samples(self, model, seeds):
        return self._entry(model, seeds)

    def model_samples_with_indicators(self, model, seeds):
        qs, w = self._entry(model, seeds)
        step = len(self.calls) - 1
        if step < len(self.indicator_maps):
            ind = dict(self.indicator_maps[step])
        else:
            remaining = [b for b in self.block_ids()
                         if not (model.variant == "refined" and b in model.refined_blocks)]
            ind = {b: 1.0 for b in self.block_ids()}
        return qs, w, ind

    def global_fix_work(self):
        return 0.0


class TestCoarseHierarchy:
    def test_paper_rectangle_six_models(self):
        dom = media.Domain(rectangles=((0, 0, 2.0, 0.4),))
        part = media.partition_blocks(dom, 0.05)  # 40x8 blocks
        pair = MaterialPair(kind="scalar", kappa_m=100.0, kappa_i=10000.0)
        models = coarse_hierarchy(part, pair, "scalar")
        assert len(models) == 6
        assert models[0].variant == "global"
        assert [m.coarsen for m in models[1:5]] == [3, 2, 1, 0]
        assert models[-1].variant == "blockwise"

    def test_elastic_lshape_blockwise_only(self):
        prob = problem.elasticity_lshape_problem()
        models = coarse_hierarchy(prob.partition, prob.pair, prob.physics)
        assert models == [BLOCKWISE]

    def test_single_block_degenerates_to_global_coefficient(self):
        dom = media.Domain(rectangles=((0, 0, 1.0, 1.0),))
        part = media.partition_blocks(dom, 1.0)
        pair = MaterialPair(kind="scalar", kappa_m=1.0, kappa_i=2.0)
        models = coarse_hierarchy(part, pair, "scalar")
        assert models[0].variant == "global"
        # with one block every homogenized model has a single coefficient region
        for m in models[1:]:
            if m.variant == "coarse":
                assert m.coarsen == 0
        assert len(part) == 1


class TestMarkBlocks:
    def test_hand_threshold(self):
        marked = mark_blocks({1: 10.0, 2: 6.0, 3: 4.0, 4: 1.0}, 0.5)
        assert marked == {1, 2}

    def test_single_block(self):
        assert mark_blocks({7: 0.3}, 0.5) == {7}

    def test_all_equal_marks_all(self):
        assert mark_blocks({1: 2.0, 2: 2.0, 3: 2.0}, 0.9) == {1, 2, 3}

    def test_magnitudes_drive_marking(self):
        assert mark_blocks({1: -10.0, 2: 6.0}, 0.5) == {1, 2}

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            mark_blocks({}, 0.5)


class TestSelectModels:
    def test_stub_stops_after_third_model(self):
        # errors (10, 4, 1) * TOL with TOL_bias = 2 * TOL
        tol = 0.1
        ev = StubEvaluator(model_errors=[10 * tol, 4 * tol, 1 * tol],
                           indicator_maps=[{1: 5.0, 2: 1.0, 3: 1.0, 4: 1.0},
                                           {2: 5.0, 3: 1.0, 4: 1.0}])
        seq = select_models(ev, SelectionParams(tol_bias=2 * tol, m_hat=4), 7)
        assert len(seq.entries) == 3
        assert seq.tol_bias == pytest.approx(1 * tol)
        assert not seq.exhausted

    def test_early_return_when_first_model_suffices(self):
        ev = StubEvaluator(model_errors=[0.01])
        seq = select_models(ev, SelectionParams(tol_bias=0.5, m_hat=4), 7)
        assert len(seq.entries) == 1
        assert seq.tol_bias == pytest.approx(0.01)

    def test_exhaustion_sets_zero_bias(self):
        # 1-block toy: marking resolves the only block immediately
        ev = StubEvaluator(model_errors=[1.0], block_count=1,
                           indicator_maps=[{1: 1.0}])
        seq = select_models(ev, SelectionParams(tol_bias=1e-6, m_hat=4), 7)
        assert len(seq.entries) == 1
        assert seq.tol_bias == 0.0
        assert seq.exhausted

    def test_growth_is_monotone_and_terminates(self):
        prob = problem.heat_rect_problem(
            width=0.4, height=0.2, blocks_x=4, blocks_y=2,
            coarse_level=1, fine_level=3, qoi_block=(1, 1),
        )
        seq = select_models(prob, SelectionParams(tol_bias=1e-9, m_hat=4), 3)
        prev = set()
        rounds = 0
        for e in seq.entries:
            if e.model.variant == "refined":
                assert prev <= e.model.refined_blocks
                prev = set(e.model.refined_blocks)
                rounds += 1
        assert rounds <= len(prob.partition)
        assert seq.exhausted or seq.entries[-1].pilot_error <= 1e-9

    def test_seed_list_shared_across_models(self):
        prob = problem.heat_rect_problem(
            width=0.4, height=0.2, blocks_x=4, blocks_y=2,
            coarse_level=1, fine_level=3, qoi_block=(1, 1),
        )
        seq = select_models(prob, SelectionParams(tol_bias=0.5, m_hat=3), 11)
        assert len(seq.seeds) == 3
        # recompute one model's samples from the stored seeds: bitwise equal
        e = seq.entries[-1]
        redo = np.array([
            problem.model_qoi(prob, e.model, problem.microstructure(prob, s))[0]
            for s in seq.seeds
        ])
        assert np.array_equal(redo, e.qois)

    def test_for_tolerance_prefix_and_corrected_bias(self):
        entries = []
        for label, err in (("a", 0.5), ("b", 0.2), ("c", 0.05)):
            entries.append(adapt.ModelEntry(
                model=BLOCKWISE, label=label, qois=np.zeros(2), work=1.0, pilot_error=err,
            ))
        seq = ModelSequence(entries=entries, fine_qois=np.zeros(2), fine_work=9.0,
                            seeds=[1, 2], tol_bias=0.05, exhausted=False, pilot_work=0.0)
        st = seq.for_tolerance(0.4)  # target 0.283: first model with err <= is "b"
        assert [e.label for e in st.entries] == ["a", "b"]
        assert st.tol_bias == pytest.approx(0.2)
        with pytest.raises(ValueError):
            seq.for_tolerance(0.01)

    def test_monotone_error_reported_not_fatal(self, caplog):
        ev = StubEvaluator(model_errors=[1.0, 2.0, 0.01],
                           indicator_maps=[{1: 5.0, 2: 1.0, 3: 1.0, 4: 1.0},
                                           {2: 5.0, 3: 1.0, 4: 1.0}])
        with caplog.at_level("WARNING", logger="mbmlmc.adapt"):
            seq = select_models(ev, SelectionParams(tol_bias=0.1, m_hat=4), 7)
        assert len(seq.entries) == 3
        assert any("pilot error increased" in r.message for r in caplog.records)

    def test_selection_log_lines(self):
        ev = StubEvaluator(model_errors=[0.01])
        seq = select_models(ev, SelectionParams(tol_bias=0.5, m_hat=4), 7)
        assert len(seq.selection_log) == 1
        assert "pilot_error" in seq.selection_log[0]
