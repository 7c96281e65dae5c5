"""The conditional quantile model: training loop, prediction, evaluation, persistence.

The network is a single :class:`~cqe.nn.MLPParams` whose hidden layers form
the feature extractor and whose final linear layer produces the raw quantile
increments; :func:`~cqe.head.head_forward` turns those into ordered quantiles.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from .config import RunConfig
from .data import Dataset, FeatureEncoder, SyntheticSpec, interest_labels, true_quantiles
from .errors import InvalidArgument, NumericFailure, SchemaError, UndefinedMetric
from .head import head_backward, head_forward, make_levels
from .inference import StrategyConfig, apply_strategy
from .loss import qr_loss_batch
from .metrics import MetricsReport, gauc_detail, mae, ndcg_at_k, rank_within_groups, xauc

log = logging.getLogger(__name__)

FORMAT_TAG = "cqe-model"
FORMAT_VERSION = 1
OUTPUT_BIAS_INIT = 0.1
NDCG_KS = (1, 3, 5)


@dataclass
class CQEModel:
    params: nn.MLPParams
    levels: np.ndarray
    encoder: FeatureEncoder | None = None
    config_lines: list[str] = field(default_factory=list)

    @property
    def n_features(self):
        return self.params.layer_sizes[0]

    def predict_quantiles(self, X, batch=4096):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_features:
            raise InvalidArgument(f"model expects {self.n_features} features, got {X.shape[1]}")
        out = np.empty((X.shape[0], self.levels.size))
        for a in range(0, X.shape[0], batch):
            _, d_raw = nn.forward(self.params, X[a:a + batch])
            out[a:a + batch] = head_forward(d_raw)
        return out

    def score(self, X, strategy: StrategyConfig, k=None):
        return apply_strategy(self.predict_quantiles(X), self.levels, strategy, k)


@dataclass
class OracleModel:
    """Predicts the exact quantiles of a synthetic spec; a stand-in for a perfect model."""

    spec: SyntheticSpec
    levels: np.ndarray

    @property
    def n_features(self):
        return self.spec.n_features

    def predict_quantiles(self, X):
        return true_quantiles(self.spec, np.atleast_2d(X), self.levels)

    def score(self, X, strategy: StrategyConfig, k=None):
        return apply_strategy(self.predict_quantiles(X), self.levels, strategy, k)


def init_model(n_features, config: RunConfig, seed) -> CQEModel:
    sizes = [n_features, *config.hidden_sizes, config.n_quantiles]
    params = nn.init_mlp(sizes, seed)
    params.biases[-1][:] = OUTPUT_BIAS_INIT  # keeps the head out of the all-zero dead zone
    return CQEModel(params, make_levels(config.n_quantiles), config_lines=config.to_lines())


def cqe_loss(params: nn.MLPParams, X, y, levels):
    """Mean summed-pinball loss of the full network and its parameter gradient."""
    cache, d_raw = nn.forward(params, X)
    t = head_forward(d_raw)
    value, grad_t = qr_loss_batch(y, t, levels)
    grads = nn.backward(params, cache, head_backward(d_raw, grad_t))
    return value, grads


@dataclass
class TrainResult:
    model: CQEModel
    loss_trace: list[float]


def train(dataset: Dataset, config: RunConfig, seed=None) -> TrainResult:
    """Mini-batch training of the quantile model on ``dataset``.

    The per-epoch trace holds the size-weighted mean of the batch losses.
    Every random choice derives from ``seed`` (``config.seed`` when omitted).
    """
    if len(dataset) == 0:
        raise InvalidArgument("cannot train on an empty dataset")
    seed = config.seed if seed is None else seed
    init_seq, shuffle_seq = np.random.SeedSequence(seed).spawn(2)
    model = init_model(dataset.X.shape[1], config, init_seq)
    X, y, levels = dataset.X, dataset.y, model.levels

    rng = np.random.default_rng(shuffle_seq)
    params = model.params
    state = nn.init_opt_state(params, config.optimizer)
    trace = []
    n = len(dataset)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for a in range(0, n, config.batch_size):
            rows = order[a:a + config.batch_size]
            value, grads = cqe_loss(params, X[rows], y[rows], levels)
            if not np.isfinite(value):
                raise NumericFailure(f"non-finite loss in epoch {epoch}", last_good_epoch=epoch - 1)
            try:
                params, state = nn.step(params, grads, state, config.lr)
            except NumericFailure as exc:
                raise NumericFailure(f"epoch {epoch}: {exc}", last_good_epoch=epoch - 1) from exc
            total += value * rows.size
        trace.append(total / n)
        log.debug("epoch %d loss %.6f", epoch, trace[-1])
    model.params = params
    return TrainResult(model, trace)


def evaluate(model, dataset: Dataset, strategy: StrategyConfig, task="watchtime",
             max_pairs=None, seed=0) -> MetricsReport:
    """Score ``dataset`` with ``strategy`` and compute the task's metrics.

    ``watchtime`` reports MAE and XAUC against the observed watch time;
    ``interest`` uses the scores to rank each user's items against the binary
    interest label and reports GAUC and nDCG@{1,3,5}. A metric that is
    undefined on the data is recorded in ``report.errors`` instead of raising.
    """
    if task not in ("watchtime", "interest"):
        raise InvalidArgument(f"task must be watchtime or interest, got {task!r}")
    if len(dataset) == 0:
        raise InvalidArgument("cannot evaluate on an empty dataset")
    if dataset.X.shape[1] != model.n_features:
        raise InvalidArgument(
            f"dataset has {dataset.X.shape[1]} features, model expects {model.n_features}")
    scores = model.score(dataset.X, strategy)
    report = MetricsReport(n=len(dataset))
    if task == "watchtime":
        report.mae = mae(scores, dataset.y)
        try:
            kw = {} if max_pairs is None else {"max_pairs": max_pairs}
            report.xauc = xauc(scores, dataset.y, seed=seed, **kw)
        except UndefinedMetric as exc:
            report.errors["xauc"] = str(exc)
        return report

    if dataset.durations is None or dataset.user_ids is None:
        raise InvalidArgument("interest task needs durations and user ids")
    labels = interest_labels(dataset.durations, dataset.y)
    try:
        report.gauc, report.groups_evaluated, report.groups_skipped = gauc_detail(
            scores, labels, dataset.user_ids)
    except UndefinedMetric as exc:
        report.errors["gauc"] = str(exc)
    ranked = rank_within_groups(scores, labels, dataset.user_ids)
    for k in NDCG_KS:
        try:
            report.ndcg_at[k] = ndcg_at_k(ranked, k)
        except UndefinedMetric as exc:
            report.errors[f"ndcg@{k}"] = str(exc)
    return report


# ---------------------------------------------------------------------------
# Persistence

def _fmt(values):
    return " ".join(repr(float(v)) for v in np.ravel(values))


def save_model(model: CQEModel, path):
    lines = [f"{FORMAT_TAG} {FORMAT_VERSION}"]
    lines += [f"config {c}" for c in model.config_lines]
    lines.append(f"levels {model.levels.size}")
    lines.append(_fmt(model.levels))
    enc = "none" if model.encoder is None else json.dumps(model.encoder.to_dict(), sort_keys=True)
    lines.append(f"encoder {enc}")
    lines.append(f"layers {len(model.params.weights)}")
    for w, b in zip(model.params.weights, model.params.biases):
        lines.append(f"weight {w.shape[0]} {w.shape[1]}")
        lines.extend(_fmt(row) for row in w)
        lines.append(f"bias {b.size}")
        lines.append(_fmt(b))
    lines.append("end")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_model(path) -> CQEModel:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    it = iter(lines)

    def expect(prefix):
        line = next(it, None)
        if line is None or not line.startswith(prefix):
            raise SchemaError(f"{path}: expected {prefix!r}, found {line!r}")
        return line[len(prefix):].strip()

    tag = expect(FORMAT_TAG)
    if tag != str(FORMAT_VERSION):
        raise SchemaError(f"{path}: unsupported model format version {tag}")
    config_lines = []
    line = next(it)
    while line.startswith("config "):
        config_lines.append(line[len("config "):])
        line = next(it)
    if not line.startswith("levels "):
        raise SchemaError(f"{path}: expected 'levels', found {line!r}")
    n_levels = int(line.split()[1])
    levels = np.array([float(v) for v in next(it).split()])
    if levels.size != n_levels:
        raise SchemaError(f"{path}: level count mismatch")
    enc_raw = expect("encoder")
    encoder = None if enc_raw == "none" else FeatureEncoder.from_dict(json.loads(enc_raw))
    n_layers = int(expect("layers"))
    weights, biases = [], []
    for _ in range(n_layers):
        rows, cols = (int(v) for v in expect("weight").split())
        w = np.array([[float(v) for v in next(it).split()] for _ in range(rows)])
        if w.shape != (rows, cols):
            raise SchemaError(f"{path}: weight block has shape {w.shape}, header says {(rows, cols)}")
        size = int(expect("bias"))
        b = np.array([float(v) for v in next(it).split()])
        if b.size != size:
            raise SchemaError(f"{path}: bias length mismatch")
        weights.append(w)
        biases.append(b)
    expect("end")
    return CQEModel(nn.MLPParams(weights, biases), levels, encoder, config_lines)
