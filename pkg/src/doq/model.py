"""Utility functions, decision sets and parameter samplers.

Three utility families are provided:

* multi-band energy efficiency ``sum_i w(SNR_i) / sum_i p_i`` with the packet
  success rate ``w(s) = exp(-c / s)``,
* sum-rate ``sum_i ln(1 + SNR_i)``,
* single-user MIMO energy efficiency
  ``R0 log2 det(I + rho H Q H^H) / (Tr Q + P0)`` with equal-gain antenna
  selection covariances.

Every model exposes ``utility(decision, g)`` for a single realization and a
vectorized ``table(decisions, params)`` returning the ``(n, M)`` matrix of
utilities that the quantizer design code works with.
"""

from __future__ import annotations

import itertools
from collections.abc import Sequence
from dataclasses import dataclass, replace

import numpy as np

from doq.errors import ConstraintViolation, DomainError

__all__ = [
    "MultiBandEEConfig",
    "SumRateConfig",
    "MimoEEConfig",
    "PowerVector",
    "EgtDecision",
    "DecisionSet",
    "product_decision_set",
    "ExponentialGains",
    "ComplexGaussianMatrix",
    "ParameterSampler",
    "SampleSet",
    "MultiBandEE",
    "SumRate",
    "MimoEE",
    "NegSquaredDistance",
    "eval_multiband_ee",
    "eval_sum_rate",
    "eval_mimo_ee",
    "sample_params",
    "encode_features",
    "encode_batch",
    "build_egt_decision_set",
    "grow_nested_decision_sets",
    "find_pstar",
    "default_pstar_grid",
]

# Upper bound on the number of float64 cells materialized per chunk in table().
_CHUNK_CELLS = 2_000_000


# ---------------------------------------------------------------------------
# Configurations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MultiBandEEConfig:
    n_bands: int = 2
    c: float = 1.0
    sigma2: float = 10.0  # mW

    def __post_init__(self):
        if int(self.n_bands) != self.n_bands or self.n_bands < 1:
            raise DomainError(f"n_bands must be a positive integer, got {self.n_bands}")
        if not self.c >= 0:
            raise DomainError(f"c must be nonnegative, got {self.c}")
        if not self.sigma2 > 0:
            raise DomainError(f"sigma2 must be positive, got {self.sigma2}")


@dataclass(frozen=True)
class SumRateConfig:
    n_bands: int = 2
    sigma2: float = 10.0  # mW
    p_total: float = 10.0  # mW

    def __post_init__(self):
        if int(self.n_bands) != self.n_bands or self.n_bands < 1:
            raise DomainError(f"n_bands must be a positive integer, got {self.n_bands}")
        if not self.sigma2 > 0:
            raise DomainError(f"sigma2 must be positive, got {self.sigma2}")
        if not self.p_total > 0:
            raise DomainError(f"p_total must be positive, got {self.p_total}")


@dataclass(frozen=True)
class MimoEEConfig:
    n_tx: int = 4
    n_rx: int = 1
    r0: float = 1e6  # bits/s
    sigma2: float = 5.0  # mW
    p0: float = 10.0  # mW
    p_max: float = 12.0  # mW

    def __post_init__(self):
        for name in ("n_tx", "n_rx"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise DomainError(f"{name} must be a positive integer, got {v}")
        for name in ("r0", "sigma2", "p0", "p_max"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive, got {getattr(self, name)}")

    @property
    def rho(self):
        return 1.0 / self.sigma2


# ---------------------------------------------------------------------------
# Decisions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PowerVector:
    """Per-band transmit powers in mW."""

    powers: tuple

    def __post_init__(self):
        p = tuple(float(x) for x in np.ravel(self.powers))
        if not p:
            raise DomainError("empty power vector")
        if not all(np.isfinite(x) and x >= 0 for x in p):
            raise DomainError(f"powers must be finite and nonnegative, got {p}")
        object.__setattr__(self, "powers", p)

    def __len__(self):
        return len(self.powers)

    def as_array(self):
        return np.array(self.powers)


@dataclass(frozen=True)
class EgtDecision:
    """Equal-gain transmission over the antennas selected by ``mask``.

    The implied covariance is ``(scale / l) * Diag(mask)`` where ``l`` is the
    number of selected antennas, so its trace is exactly ``scale``.
    """

    scale: float
    mask: tuple

    def __post_init__(self):
        mask = tuple(int(m) for m in self.mask)
        if any(m not in (0, 1) for m in mask) or sum(mask) < 1:
            raise DomainError(f"mask must be binary with at least one 1, got {mask}")
        if not self.scale > 0:
            raise DomainError(f"scale must be positive, got {self.scale}")
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "scale", float(self.scale))

    @property
    def weight(self):
        return sum(self.mask)

    def diag_powers(self):
        return np.array(self.mask, dtype=float) * (self.scale / self.weight)

    def covariance(self):
        return np.diag(self.diag_powers())


@dataclass(frozen=True)
class DecisionSet(Sequence):
    """Ordered finite set of candidate decisions.

    Indices are 0-based in the library API. Distinctness is reported by
    :meth:`is_distinct` rather than enforced, since alternating updates can
    legitimately drive two cells onto the same decision.
    """

    decisions: tuple

    def __post_init__(self):
        d = tuple(self.decisions)
        if not d:
            raise DomainError("a decision set needs at least one decision")
        object.__setattr__(self, "decisions", d)

    def __len__(self):
        return len(self.decisions)

    def __getitem__(self, i):
        return self.decisions[i]

    def __iter__(self):
        return iter(self.decisions)

    def is_distinct(self):
        return len(set(self.decisions)) == len(self.decisions)

    def power_matrix(self):
        """Stack PowerVector decisions into an ``(M, N)`` array."""
        return np.array([d.powers for d in self.decisions], dtype=float)


def product_decision_set(levels, n_bands):
    """All per-band combinations of ``levels``, in ``itertools.product`` order."""
    return DecisionSet(
        tuple(PowerVector(p) for p in itertools.product(levels, repeat=n_bands))
    )


def _as_power_matrix(decisions):
    if isinstance(decisions, DecisionSet):
        decisions = decisions.decisions
    return np.array(
        [d.powers if isinstance(d, PowerVector) else np.ravel(d) for d in decisions],
        dtype=float,
    )


# ---------------------------------------------------------------------------
# Scalar utility evaluations
# ---------------------------------------------------------------------------


def _check_gains(g, n):
    g = np.asarray(g, dtype=float).ravel()
    if g.size != n:
        raise DomainError(f"expected {n} gains, got {g.size}")
    if not np.all(g > 0):
        raise DomainError(f"channel gains must be positive, got {g}")
    return g


def eval_multiband_ee(p, g, cfg):
    """Multi-band energy efficiency in 1/mW.

    Bands with zero power contribute nothing to the numerator.
    """
    p = np.asarray(p.powers if isinstance(p, PowerVector) else p, dtype=float).ravel()
    g = _check_gains(g, p.size)
    if p.size != cfg.n_bands:
        raise DomainError(f"expected {cfg.n_bands} bands, got {p.size}")
    if np.any(p < 0):
        raise DomainError(f"negative power in {p}")
    total = p.sum()
    if total <= 0:
        raise DomainError("all-zero power vector has undefined energy efficiency")
    active = p > 0
    snr = p[active] * g[active] / cfg.sigma2
    return float(np.exp(-cfg.c / snr).sum() / total)


def eval_sum_rate(p, g, cfg):
    """Sum of ``ln(1 + p_i g_i / sigma2)`` in nats."""
    p = np.asarray(p.powers if isinstance(p, PowerVector) else p, dtype=float).ravel()
    g = _check_gains(g, p.size)
    if p.size != cfg.n_bands:
        raise DomainError(f"expected {cfg.n_bands} bands, got {p.size}")
    if np.any(p < 0):
        raise DomainError(f"negative power in {p}")
    return float(np.log1p(p * g / cfg.sigma2).sum())


def _logdet2_hpd(a):
    """log2 det of a stack of Hermitian positive-definite matrices (Cholesky)."""
    chol = np.linalg.cholesky(a)
    diag = np.real(np.diagonal(chol, axis1=-2, axis2=-1))
    return 2.0 * np.log2(diag).sum(axis=-1)


def eval_mimo_ee(d, H, cfg):
    """MIMO energy efficiency in bits/s/mW for an EGT decision."""
    H = np.asarray(H, dtype=complex)
    if H.shape != (cfg.n_rx, cfg.n_tx):
        raise DomainError(f"H must be {cfg.n_rx}x{cfg.n_tx}, got {H.shape}")
    if len(d.mask) != cfg.n_tx:
        raise DomainError(f"mask length {len(d.mask)} != n_tx {cfg.n_tx}")
    if d.scale > cfg.p_max * (1 + 1e-12):
        raise ConstraintViolation(f"Tr(Q)={d.scale} exceeds p_max={cfg.p_max}")
    q = d.diag_powers()
    a = np.eye(cfg.n_rx) + cfg.rho * (H * q) @ H.conj().T
    return float(cfg.r0 * _logdet2_hpd(a) / (d.scale + cfg.p0))


# ---------------------------------------------------------------------------
# Utility models (scalar + vectorized)
# ---------------------------------------------------------------------------


def _chunks(n, width):
    step = max(1, _CHUNK_CELLS // max(1, width))
    for start in range(0, n, step):
        yield slice(start, min(n, start + step))



def _as_rows(params, shape, dtype):
    """Stack of parameters with trailing ``shape``; a single parameter becomes one row."""
    a = np.asarray(params, dtype=dtype)
    if a.shape == shape:
        return a[None, ...]
    if a.shape[1:] != shape:
        raise DomainError(f"parameters of shape {a.shape[1:] or a.shape} do not match model shape {shape}")
    return a

def _first_bad_row(mask):
    bad = np.flatnonzero(~mask)
    return int(bad[0]) if bad.size else None


class MultiBandEE:
    """Multi-band energy efficiency model over PowerVector decisions."""

    kind = "multiband_ee"

    def __init__(self, cfg):
        self.cfg = cfg

    def utility(self, decision, g):
        return eval_multiband_ee(decision, g, self.cfg)

    def table(self, decisions, params):
        P = _as_power_matrix(decisions)
        G = _as_rows(params, (self.cfg.n_bands,), float)
        if P.shape[1] != self.cfg.n_bands:
            raise DomainError(f"decisions have {P.shape[1]} bands, model has {self.cfg.n_bands}")
        bad = _first_bad_row(np.all(G > 0, axis=1))
        if bad is not None:
            raise DomainError(f"sample {bad}: channel gains must be positive, got {G[bad]}")
        if np.any(P < 0):
            raise DomainError("negative power in decision set")
        totals = P.sum(axis=1)
        if np.any(totals <= 0):
            raise DomainError(f"decision {int(np.argmin(totals))} is the all-zero power vector")
        # 1/p with 0 -> inf, so exp(-c sigma2 / (p g)) -> 0 for switched-off bands
        with np.errstate(divide="ignore"):
            inv_p = np.where(P > 0, 1.0 / P, np.inf)
        a = self.cfg.c * self.cfg.sigma2
        if a == 0:
            # every active band succeeds with probability one
            return np.tile((P > 0).sum(axis=1) / totals, (G.shape[0], 1))
        out = np.empty((G.shape[0], P.shape[0]))
        for sl in _chunks(G.shape[0], P.size):
            arg = (a / G[sl, None, :]) * inv_p[None, :, :]
            out[sl] = np.exp(-arg).sum(axis=2) / totals
        return out

    def decision_vector(self, decision):
        return np.array(decision.powers)

    def make_decision(self, x):
        return PowerVector(np.maximum(np.asarray(x, dtype=float), 0.0))


class SumRate:
    """Sum-rate model (nats) over PowerVector decisions."""

    kind = "sumrate"

    def __init__(self, cfg):
        self.cfg = cfg

    def utility(self, decision, g):
        return eval_sum_rate(decision, g, self.cfg)

    def table(self, decisions, params):
        P = _as_power_matrix(decisions)
        G = _as_rows(params, (self.cfg.n_bands,), float)
        if P.shape[1] != self.cfg.n_bands:
            raise DomainError(f"decisions have {P.shape[1]} bands, model has {self.cfg.n_bands}")
        bad = _first_bad_row(np.all(G > 0, axis=1))
        if bad is not None:
            raise DomainError(f"sample {bad}: channel gains must be positive, got {G[bad]}")
        if np.any(P < 0):
            raise DomainError("negative power in decision set")
        out = np.empty((G.shape[0], P.shape[0]))
        scaled = P / self.cfg.sigma2
        for sl in _chunks(G.shape[0], P.size):
            out[sl] = np.log1p(G[sl, None, :] * scaled[None, :, :]).sum(axis=2)
        return out

    def decision_vector(self, decision):
        return np.array(decision.powers)

    def make_decision(self, x):
        return PowerVector(np.maximum(np.asarray(x, dtype=float), 0.0))

    def project(self, x):
        """Euclidean projection onto the simplex ``sum p = p_total, p >= 0``."""
        x = np.asarray(x, dtype=float)
        u = np.sort(x)[::-1]
        css = np.cumsum(u) - self.cfg.p_total
        k = np.arange(1, x.size + 1)
        r = np.flatnonzero(u - css / k > 0)[-1]
        return np.maximum(x - css[r] / (r + 1), 0.0)


class MimoEE:
    """MIMO energy-efficiency model over EGT decisions."""

    kind = "mimo_ee"

    def __init__(self, cfg):
        self.cfg = cfg

    def utility(self, decision, H):
        return eval_mimo_ee(decision, H, self.cfg)

    def table(self, decisions, params):
        cfg = self.cfg
        H = _as_rows(params, (cfg.n_rx, cfg.n_tx), complex)
        out = np.empty((H.shape[0], len(decisions)))
        eye = np.eye(cfg.n_rx)
        for k, d in enumerate(decisions):
            if len(d.mask) != cfg.n_tx:
                raise DomainError(f"decision {k}: mask length {len(d.mask)} != n_tx {cfg.n_tx}")
            if d.scale > cfg.p_max * (1 + 1e-12):
                raise ConstraintViolation(
                    f"decision {k}: Tr(Q)={d.scale} exceeds p_max={cfg.p_max}")
            sel = H[:, :, np.array(d.mask, dtype=bool)]
            gain = cfg.rho * d.scale / d.weight
            if cfg.n_rx == 1:
                # rank-one case: det(1 + x) without a factorization
                rate = np.log2(1.0 + gain * (np.abs(sel) ** 2).sum(axis=(1, 2)))
            else:
                a = eye + gain * sel @ np.conj(np.swapaxes(sel, 1, 2))
                rate = _logdet2_hpd(a)
            out[:, k] = cfg.r0 * rate / (d.scale + cfg.p0)
        return out


class NegSquaredDistance:
    """Distortion utility ``u(x; g) = -||x - g||^2`` over real vectors.

    With this utility the alternating design reduces to k-means.
    """

    kind = "neg_sq_distance"

    def utility(self, decision, g):
        x = np.ravel(np.asarray(decision, dtype=float))
        g = np.ravel(np.asarray(g, dtype=float))
        if x.shape != g.shape:
            raise DomainError(f"dimension mismatch {x.shape} vs {g.shape}")
        return float(-((x - g) ** 2).sum())

    def table(self, decisions, params):
        R = np.array([np.ravel(d) for d in decisions], dtype=float)
        X = np.asarray(params, dtype=float)
        X = X.reshape(X.shape[0], -1)
        if R.shape[1] != X.shape[1]:
            raise DomainError(f"dimension mismatch {R.shape[1]} vs {X.shape[1]}")
        return -((X[:, None, :] - R[None, :, :]) ** 2).sum(axis=2)

    def decision_vector(self, decision):
        return np.ravel(np.asarray(decision, dtype=float)).copy()

    def make_decision(self, x):
        return tuple(float(v) for v in np.ravel(x))

    def cell_optimum(self, members):
        """The mean, which maximizes the average utility over ``members``."""
        X = np.asarray(members, dtype=float)
        return X.reshape(X.shape[0], -1).mean(axis=0)


# ---------------------------------------------------------------------------
# Sampling and features
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExponentialGains:
    n_bands: int


@dataclass(frozen=True)
class ComplexGaussianMatrix:
    n_rx: int
    n_tx: int


@dataclass(frozen=True)
class ParameterSampler:
    kind: object
    seed: int = 0


def encode_features(g):
    """Real feature vector of one realization.

    Real gain vectors pass through unchanged; complex matrices are traversed
    row-major emitting ``(Re, Im)`` per entry.
    """
    g = np.asarray(g)
    if np.iscomplexobj(g):
        return np.stack([g.real, g.imag], axis=-1).reshape(-1).astype(float)
    return np.array(g, dtype=float).reshape(-1)


def encode_batch(params):
    """Features for a stack of realizations, one row per realization."""
    params = np.asarray(params)
    n = params.shape[0]
    width = int(np.prod(params.shape[1:])) * (2 if np.iscomplexobj(params) else 1)
    if np.iscomplexobj(params):
        return np.stack([params.real, params.imag], axis=-1).reshape(n, width).astype(float)
    return np.array(params, dtype=float).reshape(n, width)


@dataclass(frozen=True, eq=False)
class SampleSet:
    params: np.ndarray
    features: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        if len(self.params) != len(self.features):
            raise DomainError("features and params differ in length")
        for arr in (self.params, self.features):
            arr.setflags(write=False)

    def __len__(self):
        return len(self.params)

    @classmethod
    def from_params(cls, params, seed=None):
        params = np.array(params)
        return cls(params, encode_batch(params), seed)

    @classmethod
    def from_features(cls, features, seed=None):
        features = np.array(features, dtype=float)
        if features.ndim == 1:
            features = features[:, None]
        return cls(features, features.copy(), seed)

    def subset(self, index):
        index = np.asarray(index)
        return SampleSet(self.params[index].copy(), self.features[index].copy(), self.seed)


def sample_params(sampler, n):
    """Draw ``n`` realizations; the result depends only on the sampler seed."""
    if n < 1:
        raise DomainError(f"need at least one sample, got {n}")
    rng = np.random.default_rng(sampler.seed)
    kind = sampler.kind
    if isinstance(kind, ExponentialGains):
        g = rng.exponential(1.0, size=(n, kind.n_bands))
        # exponential draws can be exactly 0 with probability ~2^-53
        params = np.maximum(g, np.finfo(float).tiny)
    elif isinstance(kind, ComplexGaussianMatrix):
        shape = (n, kind.n_rx, kind.n_tx)
        params = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
    else:
        raise DomainError(f"unknown sampler kind {kind!r}")
    return SampleSet(params, encode_batch(params), sampler.seed)


# ---------------------------------------------------------------------------
# EGT decision sets and the total-power search
# ---------------------------------------------------------------------------


def build_egt_decision_set(cfg, p):
    """Every antenna subset with power ``p`` split equally over it.

    Ordered by subset size, then lexicographically by selected antenna indices.
    """
    if not p > 0:
        raise DomainError(f"total power must be positive, got {p}")
    out = []
    for l in range(1, cfg.n_tx + 1):
        for idx in itertools.combinations(range(cfg.n_tx), l):
            mask = [0] * cfg.n_tx
            for i in idx:
                mask[i] = 1
            out.append(EgtDecision(p, tuple(mask)))
    return DecisionSet(tuple(out))


def grow_nested_decision_sets(full, k_max, seed):
    """Nested subsets D_1 c D_2 c ... adding one random unused decision each step."""
    if not 1 <= k_max <= len(full):
        raise DomainError(f"k_max must be in [1, {len(full)}], got {k_max}")
    order = np.random.default_rng(seed).permutation(len(full))[:k_max]
    return [DecisionSet(tuple(full[int(i)] for i in order[:k])) for k in range(1, k_max + 1)]


def default_pstar_grid(cfg):
    return np.arange(1.0, 2.0 * cfg.p0 + 0.5, 1.0)


def find_pstar(cfg, p_grid, samples):
    """Budget from ``p_grid`` maximizing the mean best-EGT utility.

    Ties go to the smaller budget.
    """
    grid = np.sort(np.asarray(p_grid, dtype=float))
    if grid.size == 0 or np.any(grid <= 0):
        raise DomainError("p_grid must be nonempty with positive entries")
    if len(samples) == 0:
        raise DomainError("no samples")
    means = []
    for p in grid:
        model = MimoEE(replace(cfg, p_max=float(p)))
        tab = model.table(build_egt_decision_set(model.cfg, p), samples.params)
        means.append(tab.max(axis=1).mean())
    return float(grid[int(np.argmax(means))])
