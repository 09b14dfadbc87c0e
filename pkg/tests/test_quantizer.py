import math

import numpy as np
import pytest

from doq.errors import DomainError, UnsupportedError
from doq.learn import mlp_init
from doq.model import (
    DecisionSet,
    ExponentialGains,
    MultiBandEE,
    MultiBandEEConfig,
    ParameterSampler,
    PowerVector,
    SampleSet,
    product_decision_set,
    sample_params,
)
from doq.quantizer import (
    CellQuantizer,
    ExhaustiveArgmax,
    NNQuantizer,
    Threshold1D,
    as_region_grid,
    label_samples,
    pairwise_threshold,
    quantize,
    scalar_effective_thresholds,
    split_indices,
)

EE2 = MultiBandEEConfig(2, 1.0, 10.0)
EE1 = MultiBandEEConfig(1, 1.0, 10.0)
FIG3 = product_decision_set([2.0, 3.0], 2)  # (2,2), (2,3), (3,2), (3,3)


def u1(p, g, a=10.0):
    return math.exp(-a / (p * g)) / p


def u2(p, g):
    return sum(math.exp(-10.0 / (pi * gi)) for pi, gi in zip(p, g)) / sum(p)


def brute_crossing(p_lo, p_hi, a, g_max=None, step=1e-4):
    """First g where the larger power stops winning, by scan then bisection."""
    g_max = g_max or 50 * a / p_lo
    g = step
    while u1(p_hi, g, a) >= u1(p_lo, g, a):
        g += step
        if g > g_max:
            raise AssertionError("no crossing found")
    lo, hi = g - step, g
    for _ in range(60):
        mid = (lo + hi) / 2
        if u1(p_hi, mid, a) >= u1(p_lo, mid, a):
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


class TestThreshold1D:
    def test_middle_interval(self):
        q = Threshold1D((7.2135, 4.1105), (0, 1, 2))
        assert quantize(q, np.array([5.0])) == 1
        assert u1(2, 5) > u1(1, 5) and u1(2, 5) > u1(3, 5)

    def test_extremes_and_boundary(self):
        q = Threshold1D((7.0, 4.0), (2, 0, 1))
        assert q.indices(np.array([9.0, 5.0, 1.0])).tolist() == [2, 0, 1]
        # a point on a threshold joins the lower-g (higher power) side
        assert q.indices(np.array([7.0, 4.0])).tolist() == [0, 1]

    def test_validation(self):
        with pytest.raises(DomainError):
            Threshold1D((1.0, 2.0), (0, 1, 2))
        with pytest.raises(DomainError):
            Threshold1D((2.0, 1.0), (0, 0, 1))
        with pytest.raises(DomainError):
            Threshold1D((2.0, 1.0), (0, 1, 2)).indices(np.ones((3, 2)))


class TestScalarThresholds:
    def test_two_powers(self):
        q = scalar_effective_thresholds([2, 3], c=1, sigma2=10)
        assert q.thresholds[0] == pytest.approx(brute_crossing(2, 3, 10.0), abs=1e-6)
        assert q.thresholds[0] == pytest.approx(10 * (1 / 2 - 1 / 3) / math.log(1.5), rel=1e-12)
        # published display value, rounded in its last digit
        assert q.thresholds[0] == pytest.approx(4.11052, abs=2e-5)

    def test_three_powers(self):
        q = scalar_effective_thresholds([1, 2, 3], c=1, sigma2=10)
        np.testing.assert_allclose(q.thresholds, [5 / math.log(2), 4.110505770627387], rtol=1e-12)
        np.testing.assert_allclose(q.thresholds, [7.21348, 4.11052], atol=2e-5)
        skipped = pairwise_threshold(1, 3, 1, 10)
        assert skipped == pytest.approx((20 / 3) / math.log(3), rel=1e-12)
        assert skipped == pytest.approx(brute_crossing(1, 3, 10.0), abs=1e-6)
        assert q.thresholds[1] < skipped < q.thresholds[0]

    def test_partition_boundaries_are_consecutive_thresholds(self):
        powers = [1.0, 2.0, 3.0]
        g = np.linspace(0.05, 15, 30_001)
        best = np.argmax([[u1(p, x) for p in powers] for x in g], axis=1)
        changes = g[1:][np.diff(best) != 0]
        q = scalar_effective_thresholds(powers, 1, 10)
        assert len(changes) == 2
        # boundaries ordered by decreasing g match the thresholds
        np.testing.assert_allclose(sorted(changes, reverse=True), q.thresholds, atol=1e-3)

    def test_homogeneous_in_c_sigma2(self):
        base = pairwise_threshold(2.0, 5.0, 1.0, 1.0)
        for a in (0.5, 3.0, 17.0):
            assert pairwise_threshold(2.0, 5.0, a, 1.0) == pytest.approx(a * base, rel=1e-14)
            assert pairwise_threshold(2.0, 5.0, 1.0, a) == pytest.approx(a * base, rel=1e-14)

    def test_errors(self):
        with pytest.raises(DomainError, match=r"\(3.0, 2.0\)"):
            scalar_effective_thresholds([1, 3, 2], 1, 10)
        with pytest.raises(DomainError):
            scalar_effective_thresholds([1, 2], 0, 10)

    def test_strictly_decreasing_random(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            m = rng.integers(2, 9)
            powers = np.sort(rng.uniform(0.01, 100, m))
            if np.any(np.diff(powers) <= 0):
                continue
            t = scalar_effective_thresholds(powers, rng.uniform(0.1, 5), rng.uniform(0.1, 20)).thresholds
            assert all(a > b for a, b in zip(t, t[1:]))

    def test_agrees_with_exhaustive_argmax(self):
        rng = np.random.default_rng(1)
        powers = [0.5, 1.0, 2.5, 4.0, 9.0]
        q_t = scalar_effective_thresholds(powers, 1.0, 10.0)
        q_x = ExhaustiveArgmax(MultiBandEE(EE1), DecisionSet(tuple(PowerVector((p,)) for p in powers)))
        # below ~0.05 every utility underflows to 0 and the argmax tie is arbitrary
        g = np.concatenate([np.linspace(0.05, 60, 100_001), rng.exponential(3.0, 50_000) + 0.05])
        np.testing.assert_array_equal(q_t.indices(g), q_x.indices(g[:, None]))


class TestExhaustiveArgmax:
    def test_dominant_channel(self):
        q = ExhaustiveArgmax(MultiBandEE(EE2), FIG3)
        utilities = [u2(d.powers, (5, 1)) for d in FIG3]
        np.testing.assert_allclose(utilities, [0.09365, 0.08071, 0.10403, 0.09152], atol=5e-6)
        assert quantize(q, np.array([5.0, 1.0])) == 2
        assert FIG3[2].powers == (3.0, 2.0)

    def test_swap_symmetry(self):
        q = ExhaustiveArgmax(MultiBandEE(EE2), FIG3)
        rng = np.random.default_rng(4)
        g = rng.exponential(2.0, size=(20_000, 2)) + 1e-6
        a = q.indices(g)
        b = q.indices(g[:, ::-1])
        P = FIG3.power_matrix()
        np.testing.assert_array_equal(P[a], P[b][:, ::-1])

    def test_dimension_mismatch(self):
        q = ExhaustiveArgmax(MultiBandEE(EE2), FIG3)
        with pytest.raises(DomainError):
            q.indices(np.ones((3, 3)))


class TestCellQuantizer:
    def test_single_cell(self):
        q = CellQuantizer([[0.3, 0.1]], [4])
        assert q.indices(np.random.default_rng(0).exponential(size=(50, 2))).tolist() == [4] * 50

    def test_nearest_with_ties_low(self):
        q = CellQuantizer([[0.0], [2.0]], [7, 3])
        assert q.indices(np.array([[0.2], [1.0], [1.7]])).tolist() == [7, 7, 3]

    def test_unassigned(self):
        with pytest.raises(DomainError):
            CellQuantizer([[0.0]]).indices(np.zeros((1, 1)))


class TestLabeling:
    def test_single_decision(self):
        s = sample_params(ParameterSampler(ExponentialGains(2), 0), 100)
        data = label_samples(MultiBandEE(EE2), DecisionSet((PowerVector((1, 1)),)), s)
        assert np.all(data.labels == 0)

    def test_duplicates_go_to_first(self):
        s = sample_params(ParameterSampler(ExponentialGains(2), 0), 100)
        d = PowerVector((2, 3))
        data = label_samples(MultiBandEE(EE2), DecisionSet((d, d)), s)
        assert np.all(data.labels == 0)

    def test_swapped_dominant_channel(self):
        s = SampleSet.from_params(np.array([[1.0, 5.0], [5.0, 1.0]]))
        data = label_samples(MultiBandEE(EE2), FIG3, s)
        assert [FIG3[i].powers for i in data.labels] == [(2.0, 3.0), (3.0, 2.0)]

    def test_split(self):
        tr, va, te = split_indices(1000, seed=3)
        assert (len(tr), len(va), len(te)) == (700, 150, 150)
        assert sorted(np.concatenate([tr, va, te]).tolist()) == list(range(1000))

    def test_labels_are_optimal(self):
        model = MultiBandEE(EE2)
        s = sample_params(ParameterSampler(ExponentialGains(2), 9), 5000)
        D = product_decision_set([0.5, 1, 2, 4, 8], 2)
        data = label_samples(model, D, s)
        tab = model.table(D, s.params)
        assert np.all(tab[np.arange(len(s)), data.labels] >= tab.max(axis=1))


class TestRegionGrid:
    def test_constant(self):
        q = CellQuantizer([[1.0, 1.0]], [2])
        assert np.all(as_region_grid(q, [(0, 5), (0, 5)], 17) == 2)

    def test_fig3_structure(self):
        q = ExhaustiveArgmax(MultiBandEE(EE2), FIG3)
        grid = as_region_grid(q, [(0, 5), (0, 5)], 200)
        assert grid.shape == (200, 200)
        assert set(np.unique(grid)) == {0, 1, 2, 3}

    def test_single_point_is_corner(self):
        q = ExhaustiveArgmax(MultiBandEE(EE2), FIG3)
        grid = as_region_grid(q, [(0, 5), (0, 5)], 1)
        assert grid.shape == (1, 1)
        assert grid[0, 0] == quantize(q, np.array([5.0, 5.0]))

    def test_one_dimensional(self):
        q = scalar_effective_thresholds([1, 2, 3], 1, 10)
        grid = as_region_grid(q, [(0, 10)], 10)
        assert grid.tolist() == [2, 2, 2, 2, 1, 1, 1, 0, 0, 0]

    def test_three_dimensions_unsupported(self):
        with pytest.raises(UnsupportedError):
            as_region_grid(CellQuantizer([[0, 0, 0]], [0]), [(0, 1)] * 3, 2)


def test_totality_all_variants():
    rng = np.random.default_rng(5)
    g = rng.exponential(size=(100_000, 2)) + 1e-12
    M = len(FIG3)
    variants = [
        ExhaustiveArgmax(MultiBandEE(EE2), FIG3),
        CellQuantizer(rng.exponential(size=(6, 2)), rng.integers(0, M, 6)),
        NNQuantizer(mlp_init((2, 5, M), seed=1), FIG3),
    ]
    for q in variants:
        idx = q.indices(g)
        assert idx.shape == (len(g),)
        assert idx.min() >= 0 and idx.max() < M
    t = scalar_effective_thresholds([1, 2, 3], 1, 10).indices(g[:, 0])
    assert set(np.unique(t)) <= {0, 1, 2}
