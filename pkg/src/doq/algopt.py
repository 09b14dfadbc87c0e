"""Quantizer design: the alternating decisional quantization algorithm and k-means.

The alternating algorithm mirrors Lloyd's: given decisions, each sample is
assigned to the cell of its best decision; given cells, each decision is
replaced by the one maximizing the mean utility over its cell. Expectations
are empirical means over a fixed :class:`~doq.model.SampleSet`, which makes
both half-steps monotone on that set.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from doq.errors import DomainError
from doq.model import DecisionSet
from doq.quantizer import CellQuantizer, argmax_labels

__all__ = [
    "DiscreteCandidates",
    "ContinuousSearch",
    "AlternatingConfig",
    "AlternatingReport",
    "update_cells",
    "update_representatives",
    "initial_decisions",
    "doq_alternate",
    "kmeans_init",
    "kmeans_fit",
    "KMeansHistory",
    "assign_cell_decisions",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DiscreteCandidates:
    candidates: DecisionSet


@dataclass(frozen=True)
class ContinuousSearch:
    """Bounded Nelder-Mead search in the model's decision-vector space.

    ``project`` optionally maps a box point onto the feasible set before
    evaluation (e.g. the sum-rate power simplex).
    """

    lower: tuple
    upper: tuple
    tol: float = 1e-8
    max_evals: int = 500
    project: object = None


@dataclass(frozen=True)
class AlternatingConfig:
    m: int
    mode: object
    epsilon: float = 1e-10
    t_max: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.m < 1:
            raise DomainError("m must be >= 1")
        if self.t_max < 1:
            raise DomainError("t_max must be >= 1")
        if not self.epsilon >= 0:
            raise DomainError("epsilon must be nonnegative")


@dataclass
class AlternatingReport:
    final_decisions: DecisionSet
    labels: np.ndarray
    utility_history: list
    iterations: int
    converged: bool
    label_history: list = field(default_factory=list, repr=False)
    decision_history: list = field(default_factory=list, repr=False)


def update_cells(model, decisions, samples):
    """Index of the best decision for every sample (first index on ties)."""
    return argmax_labels(model.table(decisions, samples.params))


def _cell_sums(model, candidates, params, labels, m):
    """``(m, C)`` sums of candidate utilities over the members of each cell."""
    onehot = np.zeros((len(labels), m))
    onehot[np.arange(len(labels)), labels] = 1.0
    sums = np.zeros((m, len(candidates)))
    step = max(1, 2_000_000 // max(1, len(candidates)))
    for start in range(0, len(labels), step):
        sl = slice(start, start + step)
        sums += onehot[sl].T @ model.table(candidates, params[sl])
    return sums


def _continuous_best(model, members, incumbent, mode):
    """Local maximizer of the mean utility over ``members`` started at ``incumbent``.

    Models with a closed-form cell maximizer (``cell_optimum``) skip the search.
    """
    lo = np.asarray(mode.lower, dtype=float)
    hi = np.asarray(mode.upper, dtype=float)
    project = mode.project or (lambda x: x)
    exact = getattr(model, "cell_optimum", None)
    if exact is not None:
        return model.make_decision(project(np.clip(exact(members), lo, hi)))

    def to_decision(x):
        return model.make_decision(project(np.clip(x, lo, hi)))

    def objective(x):
        return -model.table([to_decision(x)], members)[:, 0].mean()

    x0 = np.clip(model.decision_vector(incumbent), lo, hi)
    f0 = -model.table([incumbent], members)[:, 0].mean()
    res = minimize(
        objective, x0, method="Nelder-Mead", bounds=list(zip(lo, hi)),
        options={"xatol": mode.tol, "fatol": mode.tol * 1e-6, "maxfev": mode.max_evals},
    )
    if res.fun <= f0:
        return to_decision(res.x)
    return incumbent


def update_representatives(model, samples, labels, mode, incumbents):
    """Best decision per cell for fixed cells; empty cells keep their incumbent."""
    labels = np.asarray(labels)
    m = len(incumbents)
    out = list(incumbents)
    if isinstance(mode, DiscreteCandidates):
        cands = mode.candidates
        sums = _cell_sums(model, cands, samples.params, labels, m)
        inc = _cell_sums(model, incumbents, samples.params, labels, m)
        for k in range(m):
            if not np.any(labels == k):
                continue
            j = int(np.argmax(sums[k]))
            # switch only on strict improvement so equal-valued moves cannot cycle
            if sums[k, j] > inc[k, k]:
                out[k] = cands[j]
    elif isinstance(mode, ContinuousSearch):
        for k in range(m):
            members = samples.params[labels == k]
            if len(members) == 0:
                continue
            out[k] = _continuous_best(model, members, incumbents[k], mode)
    else:
        raise DomainError(f"unknown representative mode {mode!r}")
    return DecisionSet(tuple(out))


def _mean_utility(model, decisions, samples, labels):
    tab = model.table(decisions, samples.params)
    return float(tab[np.arange(len(labels)), labels].mean())


def _displacement(model, old, new):
    if hasattr(model, "decision_vector"):
        return float(sum(((model.decision_vector(a) - model.decision_vector(b)) ** 2).sum()
                         for a, b in zip(old, new)))
    return float(sum(a != b for a, b in zip(old, new)))


def initial_decisions(model, samples, cfg):
    """Seeded starting decisions.

    Discrete mode: the distinct best candidates of randomly ordered samples,
    topped up with random unused candidates if fewer than M exist. Continuous
    mode: per-sample optima of M random samples.
    """
    rng = np.random.default_rng(cfg.seed)
    mode = cfg.mode
    if isinstance(mode, DiscreteCandidates):
        cands = mode.candidates
        if len(cands) < cfg.m:
            raise DomainError(f"only {len(cands)} candidates for M={cfg.m}")
        order = rng.permutation(len(samples))
        chosen = []
        step = 1024
        for start in range(0, len(order), step):
            idx = order[start:start + step]
            best = argmax_labels(model.table(cands, samples.params[idx]))
            for j in best:
                if int(j) not in chosen:
                    chosen.append(int(j))
                    if len(chosen) == cfg.m:
                        break
            if len(chosen) == cfg.m:
                break
        rest = [j for j in rng.permutation(len(cands)) if int(j) not in chosen]
        chosen += [int(j) for j in rest[:cfg.m - len(chosen)]]
        return DecisionSet(tuple(cands[j] for j in chosen))
    if isinstance(mode, ContinuousSearch):
        if len(samples) < cfg.m:
            raise DomainError(f"need at least M={cfg.m} samples")
        idx = rng.choice(len(samples), size=cfg.m, replace=False)
        center = model.make_decision((np.asarray(mode.lower) + np.asarray(mode.upper)) / 2)
        return DecisionSet(tuple(
            _continuous_best(model, samples.params[i:i + 1], center, mode) for i in idx))
    raise DomainError(f"unknown representative mode {mode!r}")


def doq_alternate(model, samples, cfg, init=None):
    """Alternate cell and decision updates until decisions settle.

    Stops once the summed squared decision displacement is at most
    ``cfg.epsilon`` or after ``cfg.t_max`` iterations. The empirical expected
    utility is recorded after each full iteration.
    """
    decisions = initial_decisions(model, samples, cfg) if init is None else DecisionSet(init)
    if len(decisions) != cfg.m:
        raise DomainError(f"initial decision set has {len(decisions)} entries, expected {cfg.m}")
    history, label_hist, dec_hist = [], [], []
    converged = False
    labels = None
    it = 0
    for it in range(1, cfg.t_max + 1):
        labels = update_cells(model, decisions, samples)
        new = update_representatives(model, samples, labels, cfg.mode, decisions)
        history.append(_mean_utility(model, new, samples, labels))
        label_hist.append(labels)
        dec_hist.append(new)
        shift = _displacement(model, decisions, new)
        decisions = new
        log.debug("iteration %d: utility %.12g, shift %.3g", it, history[-1], shift)
        if shift <= cfg.epsilon:
            converged = True
            break
    return AlternatingReport(decisions, labels, history, it, converged, label_hist, dec_hist)


# ---------------------------------------------------------------------------
# k-means baseline
# ---------------------------------------------------------------------------


@dataclass
class KMeansHistory:
    labels: list = field(default_factory=list)
    representatives: list = field(default_factory=list)
    inertia: list = field(default_factory=list)


def kmeans_init(features, k, seed):
    """Seeded draw of ``k`` distinct feature vectors."""
    x = np.asarray(features, dtype=float)
    x = x.reshape(x.shape[0], -1)
    uniq = np.unique(x, axis=0)
    if k < 1 or k > len(uniq):
        raise DomainError(f"k={k} exceeds the {len(uniq)} distinct points")
    rng = np.random.default_rng(seed)
    chosen = []
    for i in rng.permutation(len(x)):
        if not any(np.array_equal(x[i], c) for c in chosen):
            chosen.append(x[i])
            if len(chosen) == k:
                break
    return np.array(chosen)


def _sq_dist(x, r):
    return ((x[:, None, :] - r[None, :, :]) ** 2).sum(axis=2)


def kmeans_fit(features, k, iters=100, seed=0, init=None, return_history=False):
    """Lloyd's k-means on real feature vectors.

    Empty clusters are re-seeded at the point farthest from its own
    representative. Stops after ``iters`` rounds or when assignments repeat.
    """
    x = np.asarray(features, dtype=float)
    x = x.reshape(x.shape[0], -1)
    reps = kmeans_init(x, k, seed) if init is None else np.array(init, dtype=float).reshape(k, -1)
    hist = KMeansHistory()
    prev = None
    for _ in range(iters):
        d2 = _sq_dist(x, reps)
        labels = np.argmin(d2, axis=1)
        hist.labels.append(labels)
        hist.inertia.append(float(d2[np.arange(len(x)), labels].sum()))
        if prev is not None and np.array_equal(labels, prev):
            hist.representatives.append(reps.copy())
            break
        prev = labels
        new = reps.copy()
        for j in range(k):
            members = x[labels == j]
            if len(members):
                new[j] = members.mean(axis=0)
            else:
                far = int(np.argmax(d2[np.arange(len(x)), labels]))
                new[j] = x[far]
        reps = new
        hist.representatives.append(reps.copy())
    q = CellQuantizer(reps)
    return (q, hist) if return_history else q


def assign_cell_decisions(q, model, decisions, samples, per_centroid=False):
    """Attach to each cell the decision with the best mean utility over its members.

    Empty cells (or every cell when ``per_centroid``) take the decision that is
    best at the representative itself, which requires features to be the
    model's parameters.
    """
    cells = q.cells(samples.features)
    tab = model.table(decisions, samples.params)
    out = np.empty(q.n_cells, dtype=int)
    empty = []
    for j in range(q.n_cells):
        members = cells == j
        if members.any() and not per_centroid:
            out[j] = int(np.argmax(tab[members].mean(axis=0)))
        else:
            if not per_centroid:
                empty.append(j)
            out[j] = int(np.argmax(model.table(decisions, _features_to_params(model, q.representatives[j:j + 1]))[0]))
    return CellQuantizer(q.representatives, out, tuple(empty))


def _features_to_params(model, feats):
    cfg = getattr(model, "cfg", None)
    if cfg is not None and hasattr(cfg, "n_rx"):
        pairs = feats.reshape(len(feats), cfg.n_rx, cfg.n_tx, 2)
        return pairs[..., 0] + 1j * pairs[..., 1]
    return feats
