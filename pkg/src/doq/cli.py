"""Command-line experiment runner.

Every command reads a JSON config, takes ``--seed`` and ``--out`` and writes
CSV (or, for ``train-nn``, a text model file). CSV files start with a comment
line recording the config hash, seed and sample counts. Decision indices in
CSV output are 1-based.

Exit codes: 0 success, 2 invalid input, 3 runtime or numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
from dataclasses import dataclass, fields

import numpy as np

from doq.errors import DomainError, TrainingError, UnsupportedError
from doq.evaluation import (
    DoqDesigner,
    FineGrid,
    MaxOverDecisionSet,
    WaterFilling,
    compression_curve,
    evaluate,
    fine_grid_candidates,
)
from doq.experiments import BENCHMARK_TRAIN, decision_regions, mimo_benchmark
from doq.learn import MlpClassifier, TrainConfig, mlp_init, mlp_train
from doq.model import (
    ComplexGaussianMatrix,
    ExponentialGains,
    MimoEE,
    MimoEEConfig,
    MultiBandEE,
    MultiBandEEConfig,
    ParameterSampler,
    SumRate,
    SumRateConfig,
    build_egt_decision_set,
    product_decision_set,
    sample_params,
)
from doq.quantizer import ExhaustiveArgmax, NNQuantizer, label_samples, scalar_effective_thresholds

log = logging.getLogger("doq")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 2, 3

_UTILITY_CONFIGS = {"ee": MultiBandEEConfig, "sumrate": SumRateConfig, "mimo": MimoEEConfig}
_MODELS = {"ee": MultiBandEE, "sumrate": SumRate, "mimo": MimoEE}


class ConfigError(DomainError):
    pass


# ---------------------------------------------------------------------------
# Config
# ---------------------------------------------------------------------------


def _build(cls, block, where):
    """Instantiate a config dataclass, rejecting unknown keys."""
    block = dict(block or {})
    known = {f.name for f in fields(cls)}
    extra = sorted(set(block) - known)
    if extra:
        raise ConfigError(f"{where}: unknown keys {extra}")
    try:
        return cls(**block)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _positive_int(value, name):
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ConfigError(f"{name} must be a positive integer, got {value!r}")
    return value


def _float_list(value, name, min_len=1):
    if not isinstance(value, list) or len(value) < min_len:
        raise ConfigError(f"{name} must be a list of at least {min_len} numbers")
    try:
        out = [float(v) for v in value]
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must contain numbers, got {value!r}") from None
    if not all(np.isfinite(out)):
        raise ConfigError(f"{name} must be finite")
    return out


@dataclass
class Experiment:
    raw: dict
    kind: str
    utility: object
    n_samples: int
    split: tuple

    @property
    def model(self):
        return _MODELS[self.kind](self.utility)

    def sampler(self, seed):
        if self.kind == "mimo":
            return ParameterSampler(ComplexGaussianMatrix(self.utility.n_rx, self.utility.n_tx), seed)
        return ParameterSampler(ExponentialGains(self.utility.n_bands), seed)

    def section(self, name):
        block = self.raw.get(name, {})
        if not isinstance(block, dict):
            raise ConfigError(f"section '{name}' must be an object")
        return block

    def hash(self):
        text = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def parse_config(raw):
    """Validate a config document; raises ConfigError before any sampling."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    util = raw.get("utility", {"kind": "ee"})
    if not isinstance(util, dict):
        raise ConfigError("'utility' must be an object")
    util = dict(util)
    kind = util.pop("kind", "ee")
    if kind not in _UTILITY_CONFIGS:
        raise ConfigError(f"utility kind must be one of {sorted(_UTILITY_CONFIGS)}, got {kind!r}")
    utility = _build(_UTILITY_CONFIGS[kind], util, "utility")
    n = _positive_int(raw.get("samples", 100_000), "samples")
    split = tuple(_float_list(raw.get("split", [0.70, 0.15, 0.15]), "split", 3))
    if len(split) != 3 or min(split) < 0 or abs(sum(split) - 1) > 1e-9:
        raise ConfigError(f"split must be three nonnegative shares summing to 1, got {split}")
    return Experiment(raw, kind, utility, n, split)


def load_config(path):
    if path is None:
        return parse_config({})
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return parse_config(raw)


def _train_config(block, seed, default=TrainConfig()):
    block = dict(block or {})
    merged = {f.name: getattr(default, f.name) for f in fields(TrainConfig)}
    merged["seed"] = seed
    unknown = sorted(set(block) - set(merged))
    if unknown:
        raise ConfigError(f"train: unknown keys {unknown}")
    merged.update(block)
    try:
        return TrainConfig(**merged)
    except TypeError as exc:
        raise ConfigError(f"train: {exc}") from None


def _hidden(value):
    if not isinstance(value, list) or not value:
        raise ConfigError("hidden must be a nonempty list of layer widths")
    return tuple(_positive_int(h, "hidden width") for h in value)


def _decisions(exp, block):
    """Decision set for classifier commands."""
    if exp.kind == "mimo":
        p = float(block.get("p", exp.utility.p_max))
        return build_egt_decision_set(exp.utility, p)
    levels = _float_list(block.get("levels", [2.0, 3.0]), "levels")
    return product_decision_set(levels, exp.utility.n_bands)


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _csv_text(exp, seed, header, rows, counts):
    buf = io.StringIO()
    meta = " ".join(f"{k}={v}" for k, v in counts.items())
    buf.write(f"# config_sha256={exp.hash() if exp else 'none'} seed={seed} {meta}".rstrip() + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _emit(text, out):
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _split_counts(n, split):
    n_tr = int(round(split[0] * n))
    n_va = int(round(split[1] * n))
    return {"n_samples": n, "n_train": n_tr, "n_validation": n_va, "n_test": n - n_tr - n_va}


def format_model(net):
    """Text serialization with 17 significant digits per value."""
    def line(values):
        return " ".join(f"{v:.17g}" for v in np.ravel(values))

    out = ["doq-mlp 1", "layer_sizes " + " ".join(map(str, net.layer_sizes)),
           "mean " + line(net.mean), "scale " + line(net.scale)]
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        out.append(f"weights {l} {w.shape[0]} {w.shape[1]}")
        out.extend(line(row) for row in w)
        out.append(f"biases {l} {b.shape[0]}")
        out.append(line(b))
    return "\n".join(out) + "\n"


def parse_model(text):
    lines = iter(text.splitlines())
    try:
        if next(lines).strip() != "doq-mlp 1":
            raise ConfigError("not a doq-mlp model file")
        sizes = tuple(int(v) for v in next(lines).split()[1:])
        mean = np.array([float(v) for v in next(lines).split()[1:]])
        scale = np.array([float(v) for v in next(lines).split()[1:]])
        weights, biases = [], []
        for l in range(len(sizes) - 1):
            _, _, rows, cols = next(lines).split()
            weights.append(np.array([[float(v) for v in next(lines).split()] for _ in range(int(rows))])
                           .reshape(int(rows), int(cols)))
            next(lines)
            biases.append(np.array([float(v) for v in next(lines).split()]))
    except (StopIteration, ValueError) as exc:
        raise ConfigError(f"malformed model file: {exc}") from None
    return MlpClassifier(sizes, weights, biases, mean, scale)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_thresholds(exp, args):
    block = exp.section("thresholds")
    if args.powers is not None:
        powers = _float_list([v for v in args.powers.split(",") if v.strip()], "powers")
    else:
        powers = _float_list(block.get("powers", [2.0, 3.0]), "powers")
    c = args.c if args.c is not None else getattr(exp.utility, "c", None)
    sigma2 = args.sigma2 if args.sigma2 is not None else exp.utility.sigma2
    if c is None:
        raise ConfigError("thresholds need c: pass --c or use an ee utility config")
    q = scalar_effective_thresholds(powers, c, sigma2)
    rows = [(i + 1, powers[i], powers[i + 1], t) for i, t in enumerate(q.thresholds)]
    for r in rows:
        log.info("g0*(%s, %s) = %.6f", r[1], r[2], r[3])
    return _csv_text(exp, args.seed, ["i", "p_low", "p_high", "threshold"], rows, {})


def cmd_regions(exp, args):
    if exp.kind == "mimo" or exp.utility.n_bands != 2:
        raise UnsupportedError("decision regions are only drawn for 2-band utilities")
    block = exp.section("regions")
    levels = _float_list(block.get("levels", [2.0, 3.0]), "regions.levels")
    bounds = block.get("bounds", [[0.0, 5.0], [0.0, 5.0]])
    if not isinstance(bounds, list) or len(bounds) != 2:
        raise ConfigError("regions.bounds must hold two [lo, hi] pairs")
    bounds = [tuple(_float_list(b, "regions.bounds", 2)) for b in bounds]
    resolution = _positive_int(block.get("resolution", 200), "regions.resolution")
    rows, _ = decision_regions(exp.model, levels, bounds, resolution)
    rows = [(g1, g2, k + 1, p1, p2) for g1, g2, k, p1, p2 in rows]
    return _csv_text(exp, args.seed, ["g1", "g2", "decision_index", "p1", "p2"], rows,
                     {"grid_points": len(rows)})


def _oracle(exp, name, resolution):
    if name == "waterfilling":
        return WaterFilling()
    if name == "finegrid":
        return FineGrid(resolution=resolution)
    raise ConfigError(f"unknown oracle {name!r}")


def cmd_compression(exp, args):
    if exp.kind == "mimo":
        raise UnsupportedError("compression curves are defined for the ee and sumrate utilities")
    block = exp.section("compression")
    sigmas = _float_list(block.get("sigmas", [1.0, 2.0, 5.0, 10.0, 20.0]), "compression.sigmas")
    if any(a > b for a, b in zip(sigmas, sigmas[1:])):
        raise ConfigError("compression.sigmas must be ascending")
    m_cap = _positive_int(block.get("m_cap", 16), "compression.m_cap")
    default_res = 64 if exp.kind == "ee" else 200
    cand_res = _positive_int(block.get("candidate_resolution", default_res), "compression.candidate_resolution")
    oracle_name = block.get("oracle", "finegrid" if exp.kind == "ee" else "waterfilling")
    oracle_res = _positive_int(block.get("oracle_resolution", cand_res), "compression.oracle_resolution")
    oracle = _oracle(exp, oracle_name, oracle_res)
    if isinstance(oracle, WaterFilling) and exp.kind != "sumrate":
        raise ConfigError("the water-filling oracle applies to the sumrate utility only")
    model = exp.model
    candidates = fine_grid_candidates(model, FineGrid(resolution=cand_res))
    if m_cap > len(candidates):
        raise ConfigError(f"m_cap={m_cap} exceeds the {len(candidates)} candidate decisions")

    samples = sample_params(exp.sampler(args.seed), exp.n_samples)
    curve = compression_curve(model, samples, sigmas, DoqDesigner(candidates, seed=args.seed),
                              m_cap, oracle)
    rows = [(p.sigma_pct, p.m_required, p.gamma, p.loss_pct_at_m) for p in curve.points]
    meta = {"n_samples": exp.n_samples, "reference_m": curve.reference_m,
            "reference_fallback": str(curve.reference_fallback).lower()}
    return _csv_text(exp, args.seed, ["sigma_pct", "m_required", "gamma", "loss_pct_at_m"], rows, meta)


def cmd_mimo(exp, args):
    if exp.kind != "mimo":
        raise ConfigError("the mimo command needs utility kind 'mimo'")
    block = exp.section("mimo")
    full_size = 2 ** exp.utility.n_tx - 1
    k_max = _positive_int(block.get("k_max", full_size), "mimo.k_max")
    if k_max > full_size:
        raise ConfigError(f"mimo.k_max={k_max} exceeds the {full_size} antenna subsets")
    nn_ks = block.get("nn_ks")
    if nn_ks is not None:
        nn_ks = tuple(_positive_int(k, "mimo.nn_ks entry") for k in nn_ks)
    hidden = _hidden(block.get("hidden", [20, 20, 20]))
    train_cfg = _train_config(block.get("train"), args.seed, BENCHMARK_TRAIN)
    iters = _positive_int(block.get("kmeans_iters", 100), "mimo.kmeans_iters")

    samples = sample_params(exp.sampler(args.seed), exp.n_samples)
    rows = mimo_benchmark(exp.utility, samples, k_max=k_max, seed=args.seed, train_cfg=train_cfg,
                          hidden=hidden, nn_ks=nn_ks, kmeans_iters=iters)
    out = [(r.k, r.eu_optimal, r.eu_doq_exhaustive, r.eu_nn, r.eu_kmeans) for r in rows]
    return _csv_text(exp, args.seed, ["k", "eu_optimal", "eu_doq_exhaustive", "eu_nn", "eu_kmeans"],
                     out, _split_counts(exp.n_samples, (0.70, 0.15, 0.15)))


def _nn_setup(exp, args):
    block = exp.section("nn")
    decisions = _decisions(exp, block)
    hidden = _hidden(block.get("hidden", [20, 20, 20]))
    train_cfg = _train_config(block.get("train"), args.seed)
    return decisions, hidden, train_cfg


def cmd_train_nn(exp, args):
    decisions, hidden, train_cfg = _nn_setup(exp, args)
    samples = sample_params(exp.sampler(args.seed), exp.n_samples)
    model = exp.model
    data = label_samples(model, decisions, samples, seed=args.seed, proportions=exp.split)
    net = mlp_init((data.features.shape[1],) + hidden + (len(decisions),), seed=args.seed)
    report = mlp_train(net, data, train_cfg)
    test = samples.subset(data.test)
    nn = evaluate(NNQuantizer(report.net, decisions), model, decisions, test, MaxOverDecisionSet(decisions))
    log.info("epochs %d (best %d), accuracy train %.4f validation %.4f test %.4f",
             report.epochs, report.best_epoch, report.train_accuracy,
             report.validation_accuracy, report.test_accuracy)
    log.info("test expected utility: classifier %.10g, exhaustive %.10g (loss %.4f%%)",
             nn.expected_utility, nn.oracle_expected_utility, nn.relative_loss_pct)
    return format_model(report.net)


def cmd_eval(exp, args):
    if args.model is None:
        raise ConfigError("eval needs --model")
    decisions, _, _ = _nn_setup(exp, args)
    try:
        with open(args.model, encoding="utf-8") as fh:
            net = parse_model(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read model: {exc}") from None
    if net.n_classes != len(decisions):
        raise ConfigError(f"model has {net.n_classes} outputs but the config defines {len(decisions)} decisions")
    samples = sample_params(exp.sampler(args.seed), exp.n_samples)
    model = exp.model
    data = label_samples(model, decisions, samples, seed=args.seed, proportions=exp.split)
    test = samples.subset(data.test)
    rows = []
    for name, q in (("nn", NNQuantizer(net, decisions)), ("exhaustive", ExhaustiveArgmax(model, decisions))):
        rep = evaluate(q, model, decisions, test, MaxOverDecisionSet(decisions))
        acc = float(np.mean(q.indices(test.params) == data.labels[data.test]))
        rows.append((name, rep.expected_utility, rep.oracle_expected_utility,
                     rep.relative_loss_pct, acc, rep.n_skipped))
    return _csv_text(exp, args.seed, ["quantizer", "expected_utility", "oracle_expected_utility",
                                      "relative_loss_pct", "label_accuracy", "n_skipped"],
                     rows, _split_counts(exp.n_samples, exp.split))


COMMANDS = {
    "thresholds": cmd_thresholds,
    "regions": cmd_regions,
    "compression": cmd_compression,
    "mimo": cmd_mimo,
    "train-nn": cmd_train_nn,
    "eval": cmd_eval,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="doq", description="Decision-oriented quantization experiments.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", help="output path (default: stdout)")
        if name == "thresholds":
            p.add_argument("--powers", help="comma-separated ascending powers")
            p.add_argument("--c", type=float)
            p.add_argument("--sigma2", type=float)
        if name == "eval":
            p.add_argument("--model", help="model file written by train-nn")
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.seed < 0 or args.seed >= 2 ** 64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_INVALID
    try:
        exp = load_config(args.config)
        text = COMMANDS[args.command](exp, args)
        _emit(text, args.out)
    except (DomainError, UnsupportedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (TrainingError, FloatingPointError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
