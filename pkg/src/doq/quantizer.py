"""Decisional quantizers: maps from a parameter realization to a decision index.

Four interchangeable forms share one batch interface, ``indices(params)``:

``ExhaustiveArgmax``
    best decision by direct comparison of utilities (lowest index on ties);
``Threshold1D``
    interval membership for a scalar parameter;
``CellQuantizer``
    nearest representative in feature space, each cell carrying a decision;
``NNQuantizer``
    argmax of a trained classifier's scores.

All indices are 0-based.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from doq.errors import DomainError, UnsupportedError
from doq.model import SampleSet, encode_batch

__all__ = [
    "ExhaustiveArgmax",
    "Threshold1D",
    "CellQuantizer",
    "NNQuantizer",
    "LabeledDataset",
    "quantize",
    "quantize_samples",
    "argmax_labels",
    "label_samples",
    "split_indices",
    "pairwise_threshold",
    "scalar_effective_thresholds",
    "region_axes",
    "as_region_grid",
]


def argmax_labels(table):
    """Row-wise argmax of a utility table, first index winning ties."""
    return np.argmax(table, axis=1)


class ExhaustiveArgmax:
    def __init__(self, model, decisions):
        self.model = model
        self.decisions = decisions

    @property
    def n_decisions(self):
        return len(self.decisions)

    def indices(self, params):
        return argmax_labels(self.model.table(self.decisions, params))


@dataclass(frozen=True)
class Threshold1D:
    """Scalar quantizer with strictly decreasing thresholds.

    ``g > thresholds[0]`` maps to ``decision_order[0]``, the j-th interval
    below maps to ``decision_order[j]``. A value equal to a threshold falls
    on the lower-g side.
    """

    thresholds: tuple
    decision_order: tuple

    def __post_init__(self):
        t = tuple(float(x) for x in self.thresholds)
        order = tuple(int(i) for i in self.decision_order)
        if len(order) != len(t) + 1:
            raise DomainError("need exactly one more decision than thresholds")
        if sorted(order) != list(range(len(order))):
            raise DomainError(f"decision_order must be a permutation of 0..{len(order) - 1}")
        if any(a <= b for a, b in zip(t, t[1:])):
            raise DomainError(f"thresholds must be strictly decreasing, got {t}")
        object.__setattr__(self, "thresholds", t)
        object.__setattr__(self, "decision_order", order)

    @property
    def n_decisions(self):
        return len(self.decision_order)

    def indices(self, params):
        g = np.asarray(params, dtype=float)
        if g.ndim > 1:
            if g.shape[1:] != (1,):
                raise DomainError(f"Threshold1D expects scalar parameters, got shape {g.shape[1:]}")
            g = g[:, 0]
        t = np.array(self.thresholds)
        # number of thresholds >= g; equality pushes g into the next interval
        j = (t[None, :] >= g[:, None]).sum(axis=1)
        return np.asarray(self.decision_order)[j]


@dataclass(frozen=True, eq=False)
class CellQuantizer:
    """Nearest-representative quantizer in feature space.

    ``cell_decisions`` is ``None`` until decisions are attached to cells.
    """

    representatives: np.ndarray
    cell_decisions: np.ndarray | None = None
    empty_cells: tuple = ()

    def __post_init__(self):
        r = np.array(self.representatives, dtype=float)
        if r.ndim == 1:
            r = r[:, None]
        r.setflags(write=False)
        object.__setattr__(self, "representatives", r)
        if self.cell_decisions is not None:
            cd = np.array(self.cell_decisions, dtype=int)
            if cd.shape != (len(r),):
                raise DomainError("one decision per cell required")
            cd.setflags(write=False)
            object.__setattr__(self, "cell_decisions", cd)

    @property
    def n_cells(self):
        return len(self.representatives)

    def cells(self, features):
        x = np.asarray(features, dtype=float)
        x = x.reshape(x.shape[0], -1)
        r = self.representatives
        if x.shape[1] != r.shape[1]:
            raise DomainError(f"feature dimension {x.shape[1]} != {r.shape[1]}")
        d2 = ((x[:, None, :] - r[None, :, :]) ** 2).sum(axis=2)
        return np.argmin(d2, axis=1)

    def indices(self, params):
        if self.cell_decisions is None:
            raise DomainError("cell decisions have not been assigned")
        return self.cell_decisions[self.cells(encode_batch(params))]


class NNQuantizer:
    def __init__(self, net, decisions):
        if net.layer_sizes[-1] != len(decisions):
            raise DomainError(
                f"classifier has {net.layer_sizes[-1]} outputs for {len(decisions)} decisions")
        self.net = net
        self.decisions = decisions

    @property
    def n_decisions(self):
        return len(self.decisions)

    def indices(self, params):
        from doq.learn import mlp_predict

        return mlp_predict(self.net, encode_batch(params))


def quantize(q, g):
    """Decision index of a single realization ``g``."""
    g = np.asarray(g)
    return int(q.indices(g[None, ...])[0])


def quantize_samples(q, samples):
    if isinstance(samples, SampleSet):
        return q.indices(samples.params)
    return q.indices(samples)


# ---------------------------------------------------------------------------
# Labeled datasets
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray
    n_classes: int

    def split(self, name):
        idx = getattr(self, name)
        return self.features[idx], self.labels[idx]


def split_indices(n, seed, proportions=(0.70, 0.15, 0.15)):
    """Seeded shuffle of ``range(n)`` cut into train/validation/test."""
    if len(proportions) != 3 or abs(sum(proportions) - 1.0) > 1e-9:
        raise DomainError(f"split proportions must be three fractions summing to 1, got {proportions}")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(proportions[0] * n))
    n_val = int(round(proportions[1] * n))
    return perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:]


def label_samples(model, decisions, samples, seed=0, proportions=(0.70, 0.15, 0.15)):
    """Exhaustive best-decision labels plus a seeded train/validation/test split."""
    labels = argmax_labels(model.table(decisions, samples.params))
    train, val, test = split_indices(len(samples), seed, proportions)
    return LabeledDataset(
        np.array(samples.features), labels, train, val, test, n_classes=len(decisions))


# ---------------------------------------------------------------------------
# Closed-form thresholds for single-band energy efficiency
# ---------------------------------------------------------------------------


def pairwise_threshold(p_low, p_high, c, sigma2):
    """Gain at which powers ``p_low < p_high`` give equal single-band efficiency.

    Below the threshold the larger power is preferred.
    """
    if not 0 < p_low < p_high:
        raise DomainError(f"need 0 < p_low < p_high, got ({p_low}, {p_high})")
    a = c * sigma2
    return a * (1.0 / p_low - 1.0 / p_high) / (np.log(p_high) - np.log(p_low))


def scalar_effective_thresholds(powers, c, sigma2):
    """Effective thresholds between consecutive ascending power levels.

    Only consecutive pairs bound a decision region, and the resulting
    thresholds decrease with the power index.
    """
    p = [float(x) for x in powers]
    if len(p) < 2:
        raise DomainError("need at least two power levels")
    for a, b in zip(p, p[1:]):
        if not 0 < a < b:
            raise DomainError(f"powers must be positive and strictly ascending; offending pair ({a}, {b})")
    if not c * sigma2 > 0:
        raise DomainError(f"c * sigma2 must be positive, got {c * sigma2}")
    t = tuple(pairwise_threshold(a, b, c, sigma2) for a, b in zip(p, p[1:]))
    assert all(x > y for x, y in zip(t, t[1:])), t
    return Threshold1D(t, tuple(range(len(p))))


# ---------------------------------------------------------------------------
# Region grids
# ---------------------------------------------------------------------------


def region_axes(bounds, resolution):
    """Grid coordinates per axis: the upper end of each of ``resolution`` cells.

    With ``resolution == 1`` the single point is the upper box corner, which
    keeps the grid off a zero lower bound where gains are undefined.
    """
    if resolution < 1:
        raise DomainError(f"resolution must be >= 1, got {resolution}")
    axes = []
    for lo, hi in bounds:
        if not hi > lo:
            raise DomainError(f"empty interval ({lo}, {hi})")
        axes.append(lo + (hi - lo) * np.arange(1, resolution + 1) / resolution)
    return axes


def as_region_grid(q, bounds, resolution):
    """Decision index at every grid point, first axis outermost."""
    bounds = [tuple(b) for b in bounds]
    if len(bounds) not in (1, 2):
        raise UnsupportedError(f"region grids are limited to 1-D and 2-D, got {len(bounds)}-D")
    axes = region_axes(bounds, resolution)
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=1)
    return q.indices(points).reshape((resolution,) * len(bounds))
