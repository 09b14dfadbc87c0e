"""Monte-Carlo evaluation of decisional quantizers.

Covers the expected utility of a quantizer, the per-sample utility oracle
``U(g) = max_x u(x; g)`` under a declared feasible set, the mean relative
optimality loss, the number of decisions needed to reach a loss target and
the resulting compression rate.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from doq.algopt import AlternatingConfig, DiscreteCandidates, doq_alternate
from doq.errors import DomainError
from doq.model import DecisionSet, MultiBandEE, PowerVector, SumRate
from doq.quantizer import ExhaustiveArgmax, quantize_samples

__all__ = [
    "MaxOverDecisionSet",
    "WaterFilling",
    "FineGrid",
    "EvaluationReport",
    "CompressionCurve",
    "CompressionPoint",
    "quantizer_utilities",
    "expected_utility",
    "oracle_utility",
    "oracle_values",
    "relative_loss",
    "mean_relative_loss",
    "evaluate",
    "water_filling",
    "water_filling_kkt_residual",
    "fine_grid_candidates",
    "DoqDesigner",
    "loss_by_m",
    "min_decisions",
    "compression_curve",
    "NOT_ACHIEVED",
]

NOT_ACHIEVED = None


@dataclass(frozen=True)
class MaxOverDecisionSet:
    decisions: DecisionSet


@dataclass(frozen=True)
class WaterFilling:
    """Closed-form sum-rate optimum under the total power budget."""


@dataclass(frozen=True)
class FineGrid:
    """Brute-force maximum over a per-band grid of powers.

    Energy-efficiency grids use ``resolution`` log-spaced powers in
    ``[p_min, p_max]`` plus zero for each band (the all-zero vector is
    excluded). Sum-rate grids use the power simplex with ``resolution``
    steps per band.
    """

    resolution: int = 64
    p_min: float = 0.1
    p_max: float = 1000.0


# ---------------------------------------------------------------------------
# Water-filling
# ---------------------------------------------------------------------------


def _water_level(floors, p_total):
    """Level ``mu`` with ``sum(max(0, mu - floors)) == p_total``."""
    a = np.sort(floors)
    csum = np.cumsum(a)
    for k in range(len(a), 0, -1):
        mu = (p_total + csum[k - 1]) / k
        if mu > a[k - 1]:
            return mu
    raise AssertionError("unreachable: one active band always satisfies the level condition")


def water_filling(g, cfg):
    """Sum-rate optimal powers ``p_i = max(0, mu - sigma2 / g_i)`` with ``sum p = p_total``."""
    g = np.asarray(g, dtype=float).ravel()
    if not np.all(g > 0):
        raise DomainError(f"channel gains must be positive, got {g}")
    floors = cfg.sigma2 / g
    mu = _water_level(floors, cfg.p_total)
    return PowerVector(np.maximum(0.0, mu - floors))


def water_filling_kkt_residual(g, p, cfg):
    """Largest violation of the optimality conditions for powers ``p``.

    Combines the budget gap, negativity, the spread of marginal rates over
    active bands and any inactive band whose marginal rate beats the level.
    """
    g = np.asarray(g, dtype=float).ravel()
    p = np.asarray(p.powers if isinstance(p, PowerVector) else p, dtype=float)
    floors = cfg.sigma2 / g
    marginal = 1.0 / (floors + p)
    active = p > 0
    nu = marginal[active].max()
    res = abs(p.sum() - cfg.p_total)
    res = max(res, float(np.maximum(0.0, -p).max()))
    res = max(res, float(np.abs(marginal[active] - nu).max()))
    if (~active).any():
        res = max(res, float(np.maximum(0.0, marginal[~active] - nu).max()))
    return res


def _water_filling_values(G, cfg):
    G = np.asarray(G, dtype=float)
    return np.array([np.log1p(water_filling(g, cfg).as_array() * g / cfg.sigma2).sum() for g in G])


# ---------------------------------------------------------------------------
# Oracles
# ---------------------------------------------------------------------------


def fine_grid_candidates(model, spec):
    """Candidate decision set behind a FineGrid oracle."""
    n = model.cfg.n_bands
    if isinstance(model, MultiBandEE):
        levels = np.concatenate([[0.0], np.geomspace(spec.p_min, spec.p_max, spec.resolution)])
        combos = [c for c in itertools.product(levels, repeat=n) if any(c)]
    elif isinstance(model, SumRate):
        steps = spec.resolution
        total = model.cfg.p_total
        combos = [tuple(total * k / steps for k in c)
                  for c in itertools.product(range(steps + 1), repeat=n) if sum(c) == steps]
    else:
        raise DomainError(f"FineGrid oracle is not defined for {type(model).__name__}")
    return DecisionSet(tuple(PowerVector(c) for c in combos))


def oracle_values(model, params, spec):
    """``U(g)`` for every row of ``params`` under the declared oracle."""
    if isinstance(spec, MaxOverDecisionSet):
        return model.table(spec.decisions, params).max(axis=1)
    if isinstance(spec, WaterFilling):
        if not isinstance(model, SumRate):
            raise DomainError("the water-filling oracle only applies to the sum-rate model")
        return _water_filling_values(params, model.cfg)
    if isinstance(spec, FineGrid):
        return model.table(fine_grid_candidates(model, spec), params).max(axis=1)
    raise DomainError(f"unknown oracle {spec!r}")


def oracle_utility(model, g, spec):
    return float(oracle_values(model, np.asarray(g)[None, ...], spec)[0])


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


@dataclass
class EvaluationReport:
    expected_utility: float
    oracle_expected_utility: float
    relative_loss_pct: float
    per_decision_counts: np.ndarray
    n_samples: int
    n_skipped: int
    oracle: str
    seed: int | None = None
    # E[(u* - u_q)^2]: the squared utility gap, reported but never optimized
    mean_sq_gap: float = float("nan")


def quantizer_utilities(q, model, decisions, samples):
    """Per-sample utility of the decision the quantizer picks."""
    idx = quantize_samples(q, samples)
    tab = model.table(decisions, samples.params)
    return tab[np.arange(len(idx)), idx], idx


def expected_utility(q, model, decisions, samples):
    return float(quantizer_utilities(q, model, decisions, samples)[0].mean())


def mean_relative_loss(u_star, u_q):
    """``(loss_pct, n_skipped)`` from per-sample oracle and quantizer utilities."""
    ok = u_star != 0
    if not ok.any():
        return float("nan"), int((~ok).sum())
    loss = np.abs((u_star[ok] - u_q[ok]) / u_star[ok]).mean() * 100.0
    return float(loss), int((~ok).sum())


def relative_loss(q, model, decisions, samples, oracle):
    """Mean per-sample ``|u* - u_q| / u*`` in percent; samples with ``u* == 0`` are skipped."""
    u_q, _ = quantizer_utilities(q, model, decisions, samples)
    u_star = oracle_values(model, samples.params, oracle)
    return mean_relative_loss(u_star, u_q)[0]


def evaluate(q, model, decisions, samples, oracle):
    u_q, idx = quantizer_utilities(q, model, decisions, samples)
    u_star = oracle_values(model, samples.params, oracle)
    loss, skipped = mean_relative_loss(u_star, u_q)
    return EvaluationReport(
        expected_utility=float(u_q.mean()),
        oracle_expected_utility=float(u_star.mean()),
        relative_loss_pct=loss,
        per_decision_counts=np.bincount(idx, minlength=len(decisions)),
        n_samples=len(samples),
        n_skipped=skipped,
        oracle=type(oracle).__name__,
        seed=samples.seed,
        mean_sq_gap=float(np.mean((u_star - u_q) ** 2)),
    )


# ---------------------------------------------------------------------------
# Decisions needed for a loss target
# ---------------------------------------------------------------------------


@dataclass
class DoqDesigner:
    """Builds an M-decision quantizer with the alternating algorithm.

    Decisions are drawn from ``candidates``; the resulting quantizer is the
    exhaustive argmax over the designed set.
    """

    candidates: DecisionSet
    seed: int = 0
    t_max: int = 100

    def __call__(self, model, samples, m):
        cfg = AlternatingConfig(m=m, mode=DiscreteCandidates(self.candidates),
                                t_max=self.t_max, seed=self.seed)
        rep = doq_alternate(model, samples, cfg)
        return ExhaustiveArgmax(model, rep.final_decisions), rep.final_decisions


def loss_by_m(model, samples, designer, m_values, oracle):
    """Relative loss of the designed quantizer for each M in ``m_values``."""
    u_star = oracle_values(model, samples.params, oracle)
    out = {}
    for m in m_values:
        q, decisions = designer(model, samples, m)
        u_q, _ = quantizer_utilities(q, model, decisions, samples)
        out[m] = mean_relative_loss(u_star, u_q)[0]
    return out


def min_decisions(model, samples, sigma_pct, designer, m_cap, oracle, losses=None):
    """Smallest M <= m_cap whose designed quantizer has loss <= sigma_pct.

    Returns ``NOT_ACHIEVED`` (None) when no such M exists. ``losses`` may
    carry precomputed ``{M: loss}`` values.
    """
    if m_cap < 1:
        raise DomainError("m_cap must be >= 1")
    if math.isinf(sigma_pct):
        return 1
    for m in range(1, m_cap + 1):
        if losses is None or m not in losses:
            losses = dict(losses or {})
            losses.update(loss_by_m(model, samples, designer, [m], oracle))
        if losses[m] <= sigma_pct:
            return m
    return NOT_ACHIEVED


@dataclass(frozen=True)
class CompressionPoint:
    sigma_pct: float
    m_required: int | None
    gamma: float | None
    loss_pct_at_m: float | None


@dataclass
class CompressionCurve:
    points: list
    reference_m: int
    reference_fallback: bool
    losses: dict = field(default_factory=dict)


def compression_curve(model, samples, sigmas, designer, m_cap, oracle):
    """Compression rate ``M(1%) / M(sigma)`` for ascending loss targets.

    When 1% is never reached within ``m_cap`` the reference falls back to
    ``m_cap`` and ``reference_fallback`` is set.
    """
    sigmas = [float(s) for s in sigmas]
    if any(a > b for a, b in zip(sigmas, sigmas[1:])):
        raise DomainError("sigmas must be ascending")
    losses = loss_by_m(model, samples, designer, range(1, m_cap + 1), oracle)

    def first_m(target):
        return next((m for m in range(1, m_cap + 1) if losses[m] <= target), NOT_ACHIEVED)

    ref = first_m(1.0)
    fallback = ref is NOT_ACHIEVED
    if fallback:
        ref = m_cap
    points = []
    for s in sigmas:
        m = first_m(s)
        points.append(CompressionPoint(
            s, m, None if m is None else ref / m, None if m is None else losses[m]))
    return CompressionCurve(points, ref, fallback, losses)
