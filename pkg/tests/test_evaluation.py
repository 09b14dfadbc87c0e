import math

import numpy as np
import pytest

from doq.errors import DomainError
from doq.evaluation import (
    NOT_ACHIEVED,
    DoqDesigner,
    FineGrid,
    MaxOverDecisionSet,
    WaterFilling,
    mean_relative_loss,
    compression_curve,
    evaluate,
    expected_utility,
    fine_grid_candidates,
    min_decisions,
    oracle_utility,
    relative_loss,
    water_filling,
    water_filling_kkt_residual,
)
from doq.learn import mlp_init
from doq.model import (
    ComplexGaussianMatrix,
    ExponentialGains,
    MimoEE,
    MimoEEConfig,
    MultiBandEE,
    MultiBandEEConfig,
    ParameterSampler,
    SampleSet,
    SumRate,
    SumRateConfig,
    build_egt_decision_set,
    grow_nested_decision_sets,
    product_decision_set,
    sample_params,
)
from doq.quantizer import CellQuantizer, ExhaustiveArgmax, NNQuantizer

EE2 = MultiBandEE(MultiBandEEConfig(2, 1.0, 10.0))
FIG3 = product_decision_set([2.0, 3.0], 2)


def samples(n, seed=0, bands=2):
    return sample_params(ParameterSampler(ExponentialGains(bands), seed), n)


class TestWaterFilling:
    def test_example(self):
        cfg = SumRateConfig(2, 10.0, 5.0)
        p = water_filling([1.0, 2.0], cfg)
        assert p.powers == pytest.approx((0.0, 5.0), abs=1e-12)
        assert oracle_utility(SumRate(cfg), [1.0, 2.0], WaterFilling()) == pytest.approx(math.log(2), abs=1e-12)
        # grid search over the budget line
        grid = np.linspace(0, 5, 10_001)
        vals = np.log1p(grid * 1 / 10) + np.log1p((5 - grid) * 2 / 10)
        assert vals.max() == pytest.approx(math.log(2), abs=1e-4)
        assert grid[np.argmax(vals)] == pytest.approx(0.0, abs=1e-3)

    def test_all_active(self):
        cfg = SumRateConfig(3, 1.0, 30.0)
        p = water_filling([1.0, 1.0, 1.0], cfg)
        assert p.powers == pytest.approx((10.0, 10.0, 10.0))

    def test_kkt_and_dominance(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            n = int(rng.integers(1, 6))
            cfg = SumRateConfig(n, float(rng.uniform(0.1, 20)), float(rng.uniform(0.1, 50)))
            g = rng.exponential(size=n) + 1e-3
            p = water_filling(g, cfg)
            assert sum(p.powers) == pytest.approx(cfg.p_total, abs=1e-12)
            assert water_filling_kkt_residual(g, p, cfg) <= 1e-9
            best = np.log1p(np.array(p.powers) * g / cfg.sigma2).sum()
            alloc = rng.dirichlet(np.ones(n), size=2000) * cfg.p_total
            assert np.all(np.log1p(alloc * g / cfg.sigma2).sum(axis=1) <= best + 1e-12)

    def test_nonpositive_gain(self):
        with pytest.raises(DomainError):
            water_filling([1.0, 0.0], SumRateConfig(2, 1.0, 1.0))

    def test_wrong_model(self):
        with pytest.raises(DomainError):
            oracle_utility(EE2, [1.0, 1.0], WaterFilling())


class TestFineGrid:
    def test_single_band_stationary_point(self):
        model = MultiBandEE(MultiBandEEConfig(1, 1.0, 10.0))
        spec = FineGrid(resolution=2001)
        value = oracle_utility(model, [2.0], spec)
        assert value == pytest.approx(math.exp(-1) / 5, abs=1e-6)
        cands = fine_grid_candidates(model, spec)
        best = cands[int(np.argmax(model.table(cands, np.array([[2.0]]))[0]))]
        assert best.powers[0] == pytest.approx(5.0, rel=5e-3)

    def test_candidate_counts(self):
        assert len(fine_grid_candidates(EE2, FineGrid(resolution=64))) == 65 * 65 - 1
        sr = SumRate(SumRateConfig(2, 10.0, 10.0))
        cands = fine_grid_candidates(sr, FineGrid(resolution=10))
        assert len(cands) == 11
        assert all(sum(c.powers) == pytest.approx(10.0) for c in cands)


class TestExpectedUtility:
    def test_single_sample(self):
        s = SampleSet.from_params(np.array([[5.0, 1.0]]))
        q = ExhaustiveArgmax(EE2, FIG3)
        assert expected_utility(q, EE2, FIG3, s) == pytest.approx(EE2.utility(FIG3[2], [5.0, 1.0]))

    def test_constant_quantizer(self):
        s = SampleSet.from_params(np.array([[5.0, 1.0], [1.0, 5.0]]))
        q = CellQuantizer([[0.0, 0.0]], [3])
        expected = (math.exp(-10 / 15) + math.exp(-10 / 3)) / 6
        assert expected_utility(q, EE2, FIG3, s) == pytest.approx(expected, rel=1e-14)
        assert expected_utility(q, EE2, FIG3, s) == pytest.approx(0.091516, abs=1e-6)

    def test_exhaustive_dominates(self):
        s = samples(5000, seed=3)
        d = product_decision_set([0.5, 2, 8], 2)
        top = expected_utility(ExhaustiveArgmax(EE2, d), EE2, d, s)
        rng = np.random.default_rng(0)
        others = [
            CellQuantizer(rng.exponential(size=(5, 2)), rng.integers(0, len(d), 5)),
            NNQuantizer(mlp_init((2, 6, len(d)), seed=2), d),
        ]
        for q in others:
            assert expected_utility(q, EE2, d, s) <= top


class TestRelativeLoss:
    def test_self_oracle_is_zero(self):
        s = samples(500)
        assert relative_loss(ExhaustiveArgmax(EE2, FIG3), EE2, FIG3, s, MaxOverDecisionSet(FIG3)) == 0.0

    def test_half(self):
        assert mean_relative_loss(np.array([2.0]), np.array([1.0])) == (50.0, 0)

    def test_skip_zero_oracle(self):
        loss, skipped = mean_relative_loss(np.array([0.0, 4.0]), np.array([0.0, 3.0]))
        assert (loss, skipped) == (25.0, 1)

    def test_report(self):
        s = samples(2000, seed=5)
        q = CellQuantizer([[0.0, 0.0]], [0])
        big = product_decision_set([1, 2, 3, 4], 2)
        rep = evaluate(q, EE2, FIG3, s, MaxOverDecisionSet(big))
        assert rep.expected_utility <= rep.oracle_expected_utility + 1e-12
        assert rep.relative_loss_pct >= 0
        assert rep.per_decision_counts.tolist() == [2000, 0, 0, 0]
        assert rep.n_samples == 2000 and rep.n_skipped == 0 and rep.seed == 5
        u_q = EE2.table(FIG3, s.params)[:, 0]
        u_star = EE2.table(big, s.params).max(axis=1)
        assert rep.mean_sq_gap == pytest.approx(np.mean((u_star - u_q) ** 2), rel=1e-12)

    def test_order_independent(self):
        s = samples(3000, seed=8)
        perm = np.random.default_rng(1).permutation(len(s))
        shuffled = SampleSet.from_params(s.params[perm], seed=s.seed)
        big = MaxOverDecisionSet(product_decision_set([1, 2, 3, 4], 2))
        q = CellQuantizer([[0.5, 0.5], [2.0, 1.0]], [0, 2])
        a = evaluate(q, EE2, FIG3, s, big)
        b = evaluate(q, EE2, FIG3, shuffled, big)
        assert a.per_decision_counts.tolist() == b.per_decision_counts.tolist()
        for field in ("expected_utility", "oracle_expected_utility", "relative_loss_pct", "mean_sq_gap"):
            assert getattr(a, field) == pytest.approx(getattr(b, field), rel=1e-12)


def test_nested_sets_monotone():
    cfg = MimoEEConfig(n_tx=3, n_rx=1)
    model = MimoEE(cfg)
    s = sample_params(ParameterSampler(ComplexGaussianMatrix(1, 3), 4), 3000)
    chain = grow_nested_decision_sets(build_egt_decision_set(cfg, cfg.p_max), 7, seed=2)
    eu = [expected_utility(ExhaustiveArgmax(model, d), model, d, s) for d in chain]
    assert all(a <= b for a, b in zip(eu, eu[1:]))


class TestDecisionsNeeded:
    def test_unconstrained(self):
        assert min_decisions(EE2, samples(10), math.inf, None, 5, None) == 1

    def test_from_precomputed_losses(self):
        losses = {1: 40.0, 2: 9.0, 3: 0.5}
        assert min_decisions(EE2, samples(10), 10.0, None, 3, None, losses=losses) == 2
        assert min_decisions(EE2, samples(10), 0.1, None, 3, None, losses=losses) is NOT_ACHIEVED

    def test_bad_cap(self):
        with pytest.raises(DomainError):
            min_decisions(EE2, samples(10), 1.0, None, 0, None)

    def test_sum_rate_designed(self):
        sr = SumRate(SumRateConfig(2, 10.0, 10.0))
        cands = fine_grid_candidates(sr, FineGrid(resolution=100))
        s = samples(1500, seed=2)
        m = min_decisions(sr, s, 1.0, DoqDesigner(cands), 8, WaterFilling())
        assert m is not NOT_ACHIEVED and 2 <= m <= 8

    def test_curve(self):
        sr = SumRate(SumRateConfig(2, 10.0, 10.0))
        cands = fine_grid_candidates(sr, FineGrid(resolution=100))
        s = samples(1500, seed=2)
        curve = compression_curve(sr, s, [0.1, 1.0, 5.0, 20.0], DoqDesigner(cands), 8, WaterFilling())
        assert not curve.reference_fallback
        by_sigma = {p.sigma_pct: p for p in curve.points}
        assert by_sigma[1.0].gamma == 1.0
        ms = [p.m_required for p in curve.points if p.m_required is not None]
        assert all(a >= b for a, b in zip(ms, ms[1:]))
        gammas = [p.gamma for p in curve.points if p.gamma is not None]
        assert all(a <= b for a, b in zip(gammas, gammas[1:]))

    def test_curve_fallback_and_order(self):
        s = samples(400, seed=1)
        cands = product_decision_set([1.0, 4.0], 2)
        curve = compression_curve(EE2, s, [1.0, 50.0], DoqDesigner(cands), 2,
                                  MaxOverDecisionSet(product_decision_set([0.5, 1, 2, 4, 8, 16], 2)))
        assert curve.reference_fallback and curve.reference_m == 2
        with pytest.raises(DomainError):
            compression_curve(EE2, s, [5.0, 1.0], DoqDesigner(cands), 2, MaxOverDecisionSet(cands))
