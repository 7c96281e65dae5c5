"""Regression and ranking metrics: MAE, XAUC, AUC, GAUC, nDCG@k."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import InvalidArgument, UndefinedMetric

DEFAULT_MAX_PAIRS = 5_000_000


@dataclass
class MetricsReport:
    n: int = 0
    mae: float | None = None
    xauc: float | None = None
    gauc: float | None = None
    ndcg_at: dict[int, float] = field(default_factory=dict)
    groups_evaluated: int = 0
    groups_skipped: int = 0
    errors: dict[str, str] = field(default_factory=dict)

    def as_rows(self):
        """Flat ``(name, value)`` pairs in a fixed order, for printing and CSV output."""
        rows = [("n", self.n)]
        if self.mae is not None:
            rows.append(("mae", self.mae))
        if self.xauc is not None:
            rows.append(("xauc", self.xauc))
        if self.gauc is not None:
            rows.append(("gauc", self.gauc))
        for k in sorted(self.ndcg_at):
            rows.append((f"ndcg@{k}", self.ndcg_at[k]))
        if self.gauc is not None or self.ndcg_at:
            rows.append(("groups_evaluated", self.groups_evaluated))
            rows.append(("groups_skipped", self.groups_skipped))
        for name in sorted(self.errors):
            rows.append((f"error:{name}", self.errors[name]))
        return rows


def _pair(preds, targets):
    p = np.asarray(preds, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if p.shape != y.shape or p.ndim != 1:
        raise InvalidArgument(f"predictions {p.shape} and targets {y.shape} must be equal-length vectors")
    return p, y


def mae(preds, targets) -> float:
    p, y = _pair(preds, targets)
    if p.size == 0:
        raise InvalidArgument("mae of an empty set")
    return float(np.abs(p - y).mean())


def _xauc_counts_exhaustive(p, y, chunk=512):
    n = p.size
    concordant = ties = total = 0
    idx = np.arange(n)
    for a in range(0, n, chunk):
        b = min(a + chunk, n)
        upper = idx[None, :] > idx[a:b, None]
        dy = np.sign(y[a:b, None] - y[None, :])
        dp = np.sign(p[a:b, None] - p[None, :])
        valid = upper & (dy != 0)
        total += int(valid.sum())
        concordant += int((valid & (dp == dy)).sum())
        ties += int((valid & (dp == 0)).sum())
    return concordant, ties, total


def _n_distinct_target_pairs(y):
    _, counts = np.unique(y, return_counts=True)
    n = y.size
    return n * (n - 1) // 2 - int((counts * (counts - 1) // 2).sum())


def xauc(preds, targets, max_pairs=DEFAULT_MAX_PAIRS, seed=0) -> float:
    """Fraction of target-distinct pairs whose predictions are ordered the same way.

    Pairs with equal targets are excluded and prediction ties count one half.
    When there are at most ``max_pairs`` such pairs all of them are used;
    otherwise ``max_pairs`` pairs are drawn uniformly (with replacement) using
    ``seed``.
    """
    p, y = _pair(preds, targets)
    n_pairs = _n_distinct_target_pairs(y)
    if n_pairs == 0:
        raise UndefinedMetric("xauc needs at least two distinct targets")
    if n_pairs <= max_pairs:
        c, t, total = _xauc_counts_exhaustive(p, y)
    else:
        rng = np.random.default_rng(seed)
        c = t = total = 0
        n = p.size
        while total < max_pairs:
            want = max_pairs - total
            i = rng.integers(0, n, size=2 * want + 16)
            j = rng.integers(0, n, size=2 * want + 16)
            dy = np.sign(y[i] - y[j])
            keep = np.flatnonzero((i != j) & (dy != 0))[:want]
            dy = dy[keep]
            dp = np.sign(p[i[keep]] - p[j[keep]])
            c += int((dp == dy).sum())
            t += int((dp == 0).sum())
            total += keep.size
    return (2 * c + t) / (2 * total)


def auc(scores, labels) -> float:
    """Mann-Whitney AUC with tied scores counted as one half."""
    s = np.asarray(scores, dtype=np.float64)
    lab = np.asarray(labels)
    if s.shape != lab.shape:
        raise InvalidArgument("scores and labels must have the same length")
    pos = lab == 1
    n_pos = int(pos.sum())
    n_neg = s.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetric("auc needs both positive and negative labels")
    ranks = rankdata(s)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2
    return float(u / (n_pos * n_neg))


def _groups(groups):
    g = np.asarray(groups)
    # stable, first-appearance order keeps the reduction deterministic
    _, first, inverse = np.unique(g, return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")
    return [np.flatnonzero(inverse == o) for o in order]


def gauc_detail(scores, labels, groups):
    """GAUC together with the number of evaluated and skipped groups."""
    s = np.asarray(scores, dtype=np.float64)
    lab = np.asarray(labels)
    aucs, weights = [], []
    skipped = 0
    for rows in _groups(groups):
        try:
            aucs.append(auc(s[rows], lab[rows]))
        except UndefinedMetric:
            skipped += 1
            continue
        weights.append(rows.size)
    if not aucs:
        raise UndefinedMetric("gauc: no group has both positive and negative labels")
    # normalize weights first so a lone group returns its AUC exactly
    w = np.asarray(weights, dtype=np.float64)
    value = float((w / w.sum()) @ np.asarray(aucs))
    return value, len(aucs), skipped


def gauc(scores, labels, groups) -> float:
    """Impression-weighted mean of per-group AUC; single-class groups are skipped."""
    return gauc_detail(scores, labels, groups)[0]


def dcg_at_k(ranked_relevance, k):
    rel = np.asarray(ranked_relevance, dtype=np.float64)[:k]
    return float((rel / np.log2(np.arange(2, rel.size + 2))).sum())


def ndcg_at_k(ranked_relevances, k) -> float:
    """Mean nDCG@k over lists; lists without any relevant item are skipped.

    Each element of ``ranked_relevances`` is one user's relevance labels in
    the order the system ranked them.
    """
    if k < 1:
        raise InvalidArgument(f"k must be >= 1, got {k}")
    if len(ranked_relevances) == 0:
        raise InvalidArgument("ndcg of an empty set of lists")
    values = []
    for rel in ranked_relevances:
        ideal = dcg_at_k(np.sort(np.asarray(rel, dtype=np.float64))[::-1], k)
        if ideal == 0:
            continue
        values.append(dcg_at_k(rel, k) / ideal)
    if not values:
        raise UndefinedMetric("ndcg: no list contains a relevant item")
    return float(np.mean(values))


def rank_within_groups(scores, labels, groups):
    """Per-group label lists ordered by descending score (ties keep input order)."""
    s = np.asarray(scores, dtype=np.float64)
    lab = np.asarray(labels)
    out = []
    for rows in _groups(groups):
        order = rows[np.argsort(-s[rows], kind="stable")]
        out.append(lab[order])
    return out
