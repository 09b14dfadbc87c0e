"""Figure-level experiments built from the library pieces.

Each function returns plain rows (lists of tuples or dataclasses) so callers
can write CSV, assert on them, or print them.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from doq.algopt import assign_cell_decisions, kmeans_fit
from doq.evaluation import expected_utility, mean_relative_loss
from doq.learn import TrainConfig, mlp_init, mlp_train
from doq.model import (
    MimoEE,
    build_egt_decision_set,
    grow_nested_decision_sets,
    product_decision_set,
)
from doq.quantizer import (
    ExhaustiveArgmax,
    NNQuantizer,
    as_region_grid,
    label_samples,
    region_axes,
)

__all__ = [
    "BENCHMARK_TRAIN",
    "decision_regions",
    "MimoRow",
    "mimo_benchmark",
    "train_decision_classifier",
]

log = logging.getLogger(__name__)

# Minibatch schedule for 100k-sample benchmarks; full-batch descent needs
# thousands of epochs to leave the majority-class plateau on MIMO labels.
BENCHMARK_TRAIN = TrainConfig(max_epochs=100, learning_rate=0.5, momentum=0.9, patience=20,
                              batch_size=128, lr_decay=0.05)


def decision_regions(model, levels, bounds=((0.0, 5.0), (0.0, 5.0)), resolution=200):
    """Exhaustive-argmax decision map of a 2-band model over a product decision set.

    Returns ``(rows, decisions)`` with rows ``(g1, g2, index, p1, p2)`` in
    row-major order (g1 outermost).
    """
    decisions = product_decision_set(levels, 2)
    q = ExhaustiveArgmax(model, decisions)
    grid = as_region_grid(q, bounds, resolution)
    x, y = region_axes(bounds, resolution)
    rows = []
    for i, g1 in enumerate(x):
        for j, g2 in enumerate(y):
            k = int(grid[i, j])
            rows.append((float(g1), float(g2), k) + decisions[k].powers)
    return rows, decisions


def train_decision_classifier(model, decisions, samples, train_cfg=TrainConfig(),
                              hidden=(20, 20, 20), split_seed=0):
    """Label samples exhaustively and fit a classifier on the train split."""
    data = label_samples(model, decisions, samples, seed=split_seed)
    net = mlp_init((data.features.shape[1],) + tuple(hidden) + (len(decisions),),
                   seed=train_cfg.seed)
    return mlp_train(net, data, train_cfg), data


@dataclass(frozen=True)
class MimoRow:
    k: int
    eu_optimal: float
    eu_doq_exhaustive: float
    eu_nn: float | None
    eu_kmeans: float
    # mean per-sample relative loss (%) against the full-set optimum
    loss_doq_pct: float = float("nan")
    loss_kmeans_pct: float = float("nan")


def mimo_benchmark(cfg, samples, k_max=None, seed=0, train_cfg=BENCHMARK_TRAIN,
                   hidden=(20, 20, 20), nn_ks=None, kmeans_iters=100):
    """Average EGT utility against the number of decisions.

    For each ``k`` the nested set ``D_k`` is drawn with ``seed``. All four
    quantizers are scored on the test split only: the full-set optimum, the
    exhaustive argmax on ``D_k``, a classifier trained on the train split,
    and a k-means quantizer fitted on the train split whose cells take their
    best mean-utility decision in ``D_k``. ``nn_ks`` restricts classifier
    training to the listed ``k`` (``None`` trains for every ``k``).
    """
    model = MimoEE(cfg)
    full = build_egt_decision_set(cfg, cfg.p_max)
    k_max = len(full) if k_max is None else k_max
    chain = grow_nested_decision_sets(full, k_max, seed)
    data = label_samples(model, full, samples, seed=seed)
    train = samples.subset(data.train)
    test = samples.subset(data.test)

    u_opt = model.table(full, test.params).max(axis=1)
    eu_opt = float(u_opt.mean())
    rows = []
    for k, dk in enumerate(chain, start=1):
        tab = model.table(dk, test.params)
        u_doq = tab.max(axis=1)
        eu_doq = float(u_doq.mean())
        if k == 1:
            eu_nn = float(tab[:, 0].mean())
        elif nn_ks is None or k in nn_ks:
            dk_data = label_samples(model, dk, samples, seed=seed)
            net = mlp_init((dk_data.features.shape[1],) + tuple(hidden) + (k,), seed=train_cfg.seed)
            report = mlp_train(net, dk_data, train_cfg)
            eu_nn = expected_utility(NNQuantizer(report.net, dk), model, dk, test)
            log.info("k=%d: classifier test accuracy %.4f after %d epochs",
                     k, report.test_accuracy, report.epochs)
        else:
            eu_nn = None
        km = kmeans_fit(train.features, k, iters=kmeans_iters, seed=seed)
        km = assign_cell_decisions(km, model, dk, train)
        u_km = tab[np.arange(len(test)), km.indices(test.params)]
        rows.append(MimoRow(k, eu_opt, eu_doq, eu_nn, float(u_km.mean()),
                            mean_relative_loss(u_opt, u_doq)[0], mean_relative_loss(u_opt, u_km)[0]))
    return rows
