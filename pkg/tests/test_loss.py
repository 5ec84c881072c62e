import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import phyfea.tensor as T
from phyfea.analyzer import ConstraintCatalog
from phyfea.config import EngineConfig
from phyfea.errors import ConfigError, ContractError, DimensionError, ValidationError
from phyfea.fileio import FixtureSpec, gen_fixture
from phyfea.loss import combine_total, compute_penalty
from phyfea.pairmap import ordered_pairs


class TestCombine:
    def test_sum(self):
        assert combine_total(1.5e-5, 0.7) == pytest.approx(0.7 + 1.5e-5, rel=1e-12)

    def test_negative_cross_entropy_rejected(self):
        with pytest.raises(ContractError):
            combine_total(0.0, -0.1)

    def test_pinned_example(self):
        alpha, l_open, l_dil = 1e-5, 2.0, 0.5
        penalty = alpha * abs(l_open - l_dil)
        assert math.isclose(penalty, 1.5e-5, rel_tol=1e-9)

    @given(st.floats(0, 1e4), st.floats(0, 1e4),
           st.floats(1e-10, 0.99))
    def test_randomized_arithmetic(self, l_open, l_dil, alpha):
        penalty = alpha * abs(l_open - l_dil)
        want = alpha * math.fabs(l_open - l_dil)
        assert penalty == want or math.isclose(penalty, want, rel_tol=1e-9)


class TestComputePenalty:
    def test_report_matches_own_arithmetic(self, rng):
        rep = compute_penalty(rng.standard_normal((3, 8, 8)), EngineConfig())
        assert rep.penalty == pytest.approx(
            rep.alpha * abs(rep.l_opening - rep.l_dilation), rel=1e-12)

    def test_uniform_scores_give_exact_zero_penalty_and_gradient(self):
        rep = compute_penalty(np.zeros((2, 9, 9)), EngineConfig(), with_grad=True)
        assert rep.l_opening == 0.0
        assert rep.l_dilation == 0.0
        assert rep.penalty == 0.0
        assert (rep.grad == 0).all()

    def test_clean_fixture_exact_zero(self):
        _, scores = gen_fixture(FixtureSpec(kind="clean", with_scores=True))
        rep = compute_penalty(scores, EngineConfig(), with_grad=True)
        assert rep.penalty == 0.0
        assert (rep.grad == 0).all()

    def test_enclosure_fixture_opening_mass_positive(self):
        _, scores = gen_fixture(FixtureSpec(kind="enclosure", with_scores=True))
        rep = compute_penalty(scores, EngineConfig())
        assert rep.l_opening > 0
        masses = {pair: m for pair, m in rep.per_pair_mass["opening"] if m > 0}
        assert set(masses) == {(0, 1), (1, 0), (1, 2), (2, 1)}

    def test_border_block_fixture_opening_exactly_zero(self):
        _, scores = gen_fixture(FixtureSpec(kind="border_block", with_scores=True))
        rep = compute_penalty(scores, EngineConfig())
        assert rep.l_opening == 0.0

    def test_losses_subset_opening_only(self, rng):
        scores = rng.standard_normal((3, 8, 8))
        cfg = EngineConfig(losses=("opening",))
        rep = compute_penalty(scores, cfg)
        assert rep.l_dilation == 0.0
        assert rep.penalty == pytest.approx(cfg.alpha * rep.l_opening, rel=1e-12)
        assert rep.per_pair_mass["dilation"] == []

    def test_losses_subset_dilation_only(self, rng):
        scores = rng.standard_normal((3, 8, 8))
        cfg = EngineConfig(losses=("dilation",))
        rep = compute_penalty(scores, cfg)
        assert rep.l_opening == 0.0
        assert rep.penalty == pytest.approx(cfg.alpha * rep.l_dilation, rel=1e-12)

    def test_losses_none_zero_penalty_zero_grad(self, rng):
        scores = rng.standard_normal((3, 6, 6))
        rep = compute_penalty(scores, EngineConfig(losses=()), with_grad=True)
        assert rep.penalty == 0.0
        assert (rep.grad == 0).all()

    def test_cross_entropy_folded_into_total(self, rng):
        scores = rng.standard_normal((3, 6, 6))
        rep = compute_penalty(scores, EngineConfig(), cross_entropy=0.25)
        assert rep.total == pytest.approx(0.25 + rep.penalty, rel=1e-12)
        assert compute_penalty(scores, EngineConfig()).total is None

    def test_precision_controls_grad_dtype(self, rng):
        scores = rng.standard_normal((3, 6, 6))
        for precision, dtype in (("single", np.float32), ("double", np.float64)):
            rep = compute_penalty(scores, EngineConfig(precision=precision),
                                  with_grad=True)
            assert rep.grad.dtype == dtype
            assert rep.precision == precision

    def test_timing_and_iteration_bookkeeping(self, rng):
        rep = compute_penalty(rng.standard_normal((3, 8, 8)), EngineConfig())
        assert set(rep.timing) >= {"pair_stack", "opening", "dilation", "total"}
        assert len(rep.iterations_used["opening"]) == 6
        assert len(rep.iterations_used["dilation"]) == 6

    def test_worker_count_invariance_bitwise(self, rng):
        scores = rng.standard_normal((4, 10, 10))
        a = compute_penalty(scores, EngineConfig(workers=1))
        b = compute_penalty(scores, EngineConfig(workers=4))
        assert a.l_opening == b.l_opening
        assert a.l_dilation == b.l_dilation
        assert a.penalty == b.penalty

    def test_iterations_override_respected(self, rng):
        scores = rng.standard_normal((3, 16, 16))
        rep = compute_penalty(scores, EngineConfig(iterations_override=2))
        assert all(it <= 2 for it in rep.iterations_used["opening"])

    def test_pair_mode_infeasible_only_uses_catalog(self, rng):
        scores = rng.standard_normal((3, 7, 7))
        cat = ConstraintCatalog(num_classes=3, threshold=3, corpus_id="t")
        for pair in ordered_pairs(3):
            cat.occurrence_count[pair] = 0
            cat.image_count[pair] = 1
        cat.occurrence_count[(2, 1)] = 1
        rep = compute_penalty(scores, EngineConfig(pair_mode="infeasible_only"),
                              catalog=cat)
        assert [p for p, _ in rep.per_pair_mass["opening"]] == [(2, 1)]

    def test_pair_mode_infeasible_only_requires_catalog(self, rng):
        with pytest.raises(ConfigError):
            compute_penalty(rng.standard_normal((3, 7, 7)),
                            EngineConfig(pair_mode="infeasible_only"))

    def test_validation_errors(self, rng):
        with pytest.raises(DimensionError):
            compute_penalty(rng.standard_normal((8, 8)), EngineConfig())
        with pytest.raises(DimensionError):
            compute_penalty(rng.standard_normal((1, 8, 8)), EngineConfig())
        bad = rng.standard_normal((3, 6, 6))
        bad[0, 0, 0] = np.inf
        with pytest.raises(ValidationError):
            compute_penalty(bad, EngineConfig())

    def test_gradient_matches_finite_differences(self, rng):
        scores = rng.standard_normal((3, 8, 8))
        cfg = EngineConfig(workers=1)

        def evaluate(values, with_grad):
            rep = compute_penalty(values, cfg, with_grad=with_grad)
            return rep.penalty, rep.grad

        report = T.vjp_check(evaluate, scores, probes=12, tol=1e-6, seed=3)
        assert report.passed, report.max_rel_err

    def test_single_precision_gradient_against_double_differences(self, rng):
        scores = rng.standard_normal((3, 8, 8))
        single = EngineConfig(precision="single", workers=1)
        double = EngineConfig(precision="double", workers=1)

        def evaluate(values, with_grad):
            rep = compute_penalty(values, single, with_grad=with_grad)
            return rep.penalty, rep.grad

        def fd_eval(values):
            return compute_penalty(values, double).penalty

        report = T.vjp_check(evaluate, scores, probes=12, tol=1e-3, seed=4,
                             fd_eval=fd_eval)
        assert report.passed, report.max_rel_err

    def test_repeat_runs_bit_identical(self, rng):
        scores = rng.standard_normal((3, 9, 9))
        a = compute_penalty(scores, EngineConfig(), with_grad=True)
        b = compute_penalty(scores, EngineConfig(), with_grad=True)
        assert a.penalty == b.penalty
        assert np.array_equal(a.grad, b.grad)
