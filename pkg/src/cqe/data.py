"""Interaction logs, feature encoding, interest labels and synthetic data.

The synthetic generator draws watch times from a parametric conditional
distribution whose parameters are affine in the feature vector, which gives
an exact quantile function to test learned models against.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import special, stats

from .errors import InvalidArgument, InvalidState, SchemaError

REQUIRED_COLUMNS = ("user_id", "item_id", "duration_s", "watch_time_s")
SHORT_VIDEO_S = 18.0
FULL_WATCH_TOL_S = 1e-6


@dataclass
class InteractionRecord:
    user_id: str
    item_id: str
    duration_s: float
    watch_time_s: float
    context: list[str] = field(default_factory=list)
    numeric_feats: list[float] = field(default_factory=list)


@dataclass
class LoadReport:
    n_rows: int = 0
    n_loaded: int = 0
    skipped: Counter = field(default_factory=Counter)

    @property
    def n_skipped(self):
        return sum(self.skipped.values())


@dataclass
class Dataset:
    """Feature matrix plus targets, with the ids/durations the interest task needs."""

    X: np.ndarray
    y: np.ndarray
    user_ids: np.ndarray | None = None
    item_ids: np.ndarray | None = None
    durations: np.ndarray | None = None

    def __len__(self):
        return self.y.shape[0]

    def subset(self, rows):
        pick = lambda a: None if a is None else a[rows]
        return Dataset(self.X[rows], self.y[rows], pick(self.user_ids),
                       pick(self.item_ids), pick(self.durations))

    def split(self, holdout_fraction, seed):
        """Deterministic shuffled split into ``(train, holdout)``."""
        n = len(self)
        order = np.random.default_rng(seed).permutation(n)
        n_hold = int(round(n * holdout_fraction))
        return self.subset(np.sort(order[n_hold:])), self.subset(np.sort(order[:n_hold]))


# ---------------------------------------------------------------------------
# CSV ingestion

def load_csv(path, schema=None):
    """Read an interaction CSV into records.

    ``schema`` optionally maps canonical column names (``user_id``, ...) to the
    names used in the file. Columns prefixed ``cat_`` become context tokens and
    ``num_`` columns numeric features, both in header order. Lines starting
    with ``#`` are comments. Rows that cannot be parsed or violate the record
    invariants are skipped and tallied in the returned :class:`LoadReport`.
    """
    schema = dict(schema or {})
    path = Path(path)
    report = LoadReport()
    records = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(reader, None)
        if header is None:
            raise SchemaError(f"{path}: no header row")
        header = [h.strip() for h in header]
        col = {}
        for name in REQUIRED_COLUMNS:
            actual = schema.get(name, name)
            if actual not in header:
                raise SchemaError(f"{path}: missing required column {actual!r}")
            col[name] = header.index(actual)
        cat_cols = [(h, i) for i, h in enumerate(header) if h.startswith("cat_")]
        num_cols = [i for i, h in enumerate(header) if h.startswith("num_")]
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            report.n_rows += 1
            if len(row) != len(header):
                report.skipped["wrong_field_count"] += 1
                continue
            try:
                duration = float(row[col["duration_s"]])
                watch = float(row[col["watch_time_s"]])
                nums = [float(row[i]) for i in num_cols]
            except ValueError:
                report.skipped["unparseable_number"] += 1
                continue
            if not all(math.isfinite(v) for v in (duration, watch, *nums)):
                report.skipped["non_finite"] += 1
                continue
            if watch < 0:
                report.skipped["negative_watch_time"] += 1
                continue
            if duration <= 0:
                report.skipped["non_positive_duration"] += 1
                continue
            records.append(InteractionRecord(
                user_id=row[col["user_id"]], item_id=row[col["item_id"]],
                duration_s=duration, watch_time_s=watch,
                context=[f"{h}={row[i]}" for h, i in cat_cols],
                numeric_feats=nums))
    report.n_loaded = len(records)
    return records, report


def numeric_names_from_csv(path):
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for line in fh:
            if not line.startswith("#"):
                return [h.strip() for h in next(csv.reader([line])) if h.strip().startswith("num_")]
    return []


# ---------------------------------------------------------------------------
# Interest label

def interest_label(duration_s, watch_time_s) -> int:
    """1 for a full watch of a short video or more than 18 s of a long one.

    "Full watch" means the watch time equals the duration to within 1e-6 s.
    """
    if not duration_s > 0 or not watch_time_s >= 0:
        raise InvalidArgument(f"invalid duration/watch time: {duration_s}, {watch_time_s}")
    if duration_s <= SHORT_VIDEO_S:
        return int(abs(watch_time_s - duration_s) <= FULL_WATCH_TOL_S)
    return int(watch_time_s > SHORT_VIDEO_S)


def interest_labels(durations, watch_times):
    d = np.asarray(durations, dtype=np.float64)
    w = np.asarray(watch_times, dtype=np.float64)
    if np.any(~(d > 0)) or np.any(~(w >= 0)):
        raise InvalidArgument("durations must be positive and watch times non-negative")
    short = d <= SHORT_VIDEO_S
    return np.where(short, np.abs(w - d) <= FULL_WATCH_TOL_S, w > SHORT_VIDEO_S).astype(int)


# ---------------------------------------------------------------------------
# Feature encoding

def _bucket(token: str, seed: int, n_buckets: int) -> int:
    h = hashlib.blake2b(token.encode("utf-8"), digest_size=8,
                        key=str(seed).encode("ascii"))
    return int.from_bytes(h.digest(), "little") % n_buckets


@dataclass
class FeatureEncoder:
    """Standardized numeric features followed by hashed categorical buckets.

    Output layout: ``[duration_s?, num_* ..., bucket_0 ... bucket_m]`` with a
    total length of ``n_dims``. User id, item id and every context token each
    add 1 to their hash bucket.
    """

    n_dims: int = 2048
    hash_seed: int = 0
    include_duration: bool = True
    hash_ids: bool = True
    means: np.ndarray | None = None
    stds: np.ndarray | None = None

    @property
    def fitted(self):
        return self.means is not None

    def _numeric(self, rec: InteractionRecord):
        vals = ([rec.duration_s] if self.include_duration else []) + list(rec.numeric_feats)
        return np.asarray(vals, dtype=np.float64)

    def fit(self, records) -> "FeatureEncoder":
        if not records:
            raise InvalidArgument("cannot fit an encoder on zero records")
        raw = np.stack([self._numeric(r) for r in records])
        if raw.shape[1] >= self.n_dims:
            raise InvalidArgument(
                f"n_dims={self.n_dims} leaves no room for hash buckets after {raw.shape[1]} numeric features")
        std = raw.std(axis=0)
        std[std == 0] = 1.0
        return FeatureEncoder(self.n_dims, self.hash_seed, self.include_duration,
                              self.hash_ids, raw.mean(axis=0), std)

    def encode(self, rec: InteractionRecord) -> np.ndarray:
        if not self.fitted:
            raise InvalidState("encoder has not been fitted")
        num = self._numeric(rec)
        if num.shape != self.means.shape:
            raise InvalidArgument(
                f"record has {num.size} numeric features, encoder was fitted on {self.means.size}")
        out = np.zeros(self.n_dims)
        k = num.size
        out[:k] = (num - self.means) / self.stds
        tokens = list(rec.context)
        if self.hash_ids:
            tokens = [f"user_id={rec.user_id}", f"item_id={rec.item_id}"] + tokens
        n_buckets = self.n_dims - k
        for tok in tokens:
            out[k + _bucket(tok, self.hash_seed, n_buckets)] += 1.0
        return out

    def encode_many(self, records) -> np.ndarray:
        if not records:
            return np.zeros((0, self.n_dims))
        return np.stack([self.encode(r) for r in records])

    def to_dict(self):
        return {"n_dims": self.n_dims, "hash_seed": self.hash_seed,
                "include_duration": self.include_duration, "hash_ids": self.hash_ids,
                "means": None if self.means is None else self.means.tolist(),
                "stds": None if self.stds is None else self.stds.tolist()}

    @classmethod
    def from_dict(cls, d):
        arr = lambda v: None if v is None else np.asarray(v, dtype=np.float64)
        return cls(int(d["n_dims"]), int(d["hash_seed"]), bool(d["include_duration"]),
                   bool(d["hash_ids"]), arr(d["means"]), arr(d["stds"]))


def records_to_dataset(records, encoder: FeatureEncoder) -> Dataset:
    return Dataset(
        X=encoder.encode_many(records),
        y=np.array([r.watch_time_s for r in records], dtype=np.float64),
        user_ids=np.array([r.user_id for r in records], dtype=object),
        item_ids=np.array([r.item_id for r in records], dtype=object),
        durations=np.array([r.duration_s for r in records], dtype=np.float64))


# ---------------------------------------------------------------------------
# Synthetic conditional distributions

FAMILY_PARAMS = {
    "lognormal": ("mu", "sigma"),
    "gamma": ("shape", "scale"),
    "mixture": ("weight", "mu1", "sigma1", "mu2", "sigma2"),
}


@dataclass(frozen=True)
class AffineMap:
    intercept: float
    coef: tuple[float, ...]

    def __call__(self, X):
        return self.intercept + np.asarray(X, dtype=np.float64) @ np.asarray(self.coef)

    def box_range(self, low, high):
        c = np.asarray(self.coef)
        lo = self.intercept + np.minimum(c * low, c * high).sum()
        hi = self.intercept + np.maximum(c * low, c * high).sum()
        return lo, hi


@dataclass(frozen=True)
class SyntheticSpec:
    """Conditional watch-time law ``W | x`` with affine parameter maps.

    Features are i.i.d. uniform on ``[feature_low, feature_high]``. The
    ``mixture`` family is two lognormals, ``weight`` being the probability of
    the first. All draws are capped at ``t_max`` seconds.
    """

    family: str
    n_features: int
    params: dict
    t_max: float = 300.0
    feature_low: float = -1.0
    feature_high: float = 1.0
    n_users: int = 50
    n_items: int = 500
    duration_low: float = 5.0
    duration_high: float = 60.0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.family not in FAMILY_PARAMS:
            raise SchemaError(f"family: unknown distribution family {self.family!r}")
        if self.n_features < 1:
            raise InvalidArgument("n_features must be >= 1")
        if not self.feature_low < self.feature_high:
            raise InvalidArgument("feature_low must be below feature_high")
        if not self.t_max > 0:
            raise InvalidArgument("t_max must be positive")
        if not 0 < self.duration_low <= self.duration_high:
            raise InvalidArgument("need 0 < duration_low <= duration_high")
        if self.n_users < 1 or self.n_items < 1:
            raise InvalidArgument("n_users and n_items must be >= 1")
        need = FAMILY_PARAMS[self.family]
        missing = [p for p in need if p not in self.params]
        extra = [p for p in self.params if p not in need]
        if missing or extra:
            raise SchemaError(f"params: family {self.family} needs {need}, "
                              f"missing {missing}, unexpected {extra}")
        for name in need:
            m = self.params[name]
            if len(m.coef) != self.n_features:
                raise SchemaError(f"params.{name}: expected {self.n_features} coefficients")
            lo, hi = m.box_range(self.feature_low, self.feature_high)
            if name.startswith("sigma") and lo < 0:
                raise InvalidArgument(f"params.{name} goes negative on the feature box ({lo})")
            if name in ("shape", "scale") and lo <= 0:
                raise InvalidArgument(f"params.{name} must stay positive on the feature box ({lo})")
            if name == "weight" and (lo <= 0 or hi >= 1):
                raise InvalidArgument(f"params.weight must stay inside (0, 1) ({lo}, {hi})")

    def evaluate(self, X):
        """Distribution parameters at each row of ``X``."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_features:
            raise InvalidArgument(f"expected {self.n_features} features, got {X.shape[1]}")
        return {name: m(X) for name, m in self.params.items()}

    def to_dict(self):
        return {
            "family": self.family, "n_features": self.n_features, "t_max": self.t_max,
            "feature_low": self.feature_low, "feature_high": self.feature_high,
            "n_users": self.n_users, "n_items": self.n_items,
            "duration_low": self.duration_low, "duration_high": self.duration_high,
            "params": {k: {"intercept": v.intercept, "coef": list(v.coef)}
                       for k, v in self.params.items()},
        }

    @classmethod
    def from_dict(cls, d):
        if "family" not in d:
            raise SchemaError("family: field is required")
        if "params" not in d or not isinstance(d["params"], dict):
            raise SchemaError("params: field is required and must be a mapping")
        known = {"family", "n_features", "t_max", "feature_low", "feature_high", "n_users",
                 "n_items", "duration_low", "duration_high", "params"}
        unknown = sorted(set(d) - known)
        if unknown:
            raise SchemaError(f"unknown spec fields: {unknown}")
        try:
            params = {k: AffineMap(float(v["intercept"]), tuple(float(c) for c in v["coef"]))
                      for k, v in d["params"].items()}
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"params: each entry needs intercept and coef ({exc})") from exc
        kw = {k: d[k] for k in known - {"family", "params"} if k in d}
        if "n_features" not in kw:
            raise SchemaError("n_features: field is required")
        return cls(family=d["family"], params=params, **kw)

    @classmethod
    def load(cls, path):
        with Path(path).open(encoding="utf-8") as fh:
            try:
                d = json.load(fh)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}: not valid JSON ({exc})") from exc
        return cls.from_dict(d.get("spec", d))


def _affine(intercept, *coef):
    return AffineMap(float(intercept), tuple(float(c) for c in coef))


def default_lognormal_spec(t_max=300.0) -> SyntheticSpec:
    """Heteroscedastic lognormal with median between ~10 s and ~60 s."""
    return SyntheticSpec("lognormal", 3, {
        "mu": _affine(3.2, 0.6, -0.3, 0.0),
        "sigma": _affine(0.6, 0.0, 0.1, 0.25),
    }, t_max=t_max)


def default_mixture_spec(t_max=300.0) -> SyntheticSpec:
    """Skip-or-watch mixture: a short "skip" lognormal and a long "watch" one.

    Skips are the majority, so the median sits inside the skip component and
    only sees ``x2`` (skip length). How long a real watch lasts depends on
    ``x0`` and ``x1``, which the mean picks up and the median does not.
    """
    return SyntheticSpec("mixture", 3, {
        "weight": _affine(0.55, 0.0, 0.0, 0.0),
        "mu1": _affine(0.7, 0.0, 0.0, 0.15),
        "sigma1": _affine(0.4, 0.0, 0.0, 0.0),
        "mu2": _affine(3.6, 0.6, 0.4, 0.0),
        "sigma2": _affine(0.45, 0.0, 0.0, 0.0),
    }, t_max=t_max)


def default_gamma_spec(t_max=300.0) -> SyntheticSpec:
    return SyntheticSpec("gamma", 3, {
        "shape": _affine(2.0, 0.8, 0.0, 0.5),
        "scale": _affine(12.0, 0.0, 4.0, 0.0),
    }, t_max=t_max)


def sample_features(spec: SyntheticSpec, n, rng):
    return rng.uniform(spec.feature_low, spec.feature_high, size=(n, spec.n_features))


def sample_watch_times(spec: SyntheticSpec, X, rng):
    """One draw of ``W | x`` per row of ``X``, capped at ``t_max``."""
    p = spec.evaluate(X)
    n = np.atleast_2d(X).shape[0]
    if spec.family == "lognormal":
        w = np.exp(p["mu"] + p["sigma"] * rng.standard_normal(n))
    elif spec.family == "gamma":
        w = rng.gamma(p["shape"], p["scale"])
    else:
        first = rng.random(n) < p["weight"]
        z = rng.standard_normal(n)
        w = np.where(first, np.exp(p["mu1"] + p["sigma1"] * z),
                     np.exp(p["mu2"] + p["sigma2"] * z))
    return np.minimum(w, spec.t_max)


def synth_generate(spec: SyntheticSpec, n, seed) -> Dataset:
    if int(n) != n or n < 1:
        raise InvalidArgument(f"n must be a positive integer, got {n}")
    rng = np.random.default_rng(seed)
    X = sample_features(spec, n, rng)
    y = sample_watch_times(spec, X, rng)
    users = rng.integers(0, spec.n_users, size=n)
    items = rng.integers(0, spec.n_items, size=n)
    durations = rng.uniform(spec.duration_low, spec.duration_high, size=n)
    return Dataset(X, y,
                   np.array([f"u{u}" for u in users], dtype=object),
                   np.array([f"i{i}" for i in items], dtype=object),
                   durations)


def _lognormal_cdf(q, mu, sigma):
    with np.errstate(divide="ignore"):
        logq = np.log(q)
    safe = np.where(sigma > 0, sigma, 1.0)
    return np.where(sigma > 0, special.ndtr((logq - mu) / safe), (logq >= mu).astype(float))


def true_cdf(spec: SyntheticSpec, X, q):
    """``P(min(W, t_max) <= q | x)`` evaluated row-wise."""
    p = spec.evaluate(X)
    q = np.asarray(q, dtype=np.float64)
    if spec.family == "lognormal":
        c = _lognormal_cdf(q, p["mu"], p["sigma"])
    elif spec.family == "gamma":
        c = stats.gamma.cdf(q, p["shape"], scale=p["scale"])
    else:
        c = (p["weight"] * _lognormal_cdf(q, p["mu1"], p["sigma1"])
             + (1 - p["weight"]) * _lognormal_cdf(q, p["mu2"], p["sigma2"]))
    return np.where(q >= spec.t_max, 1.0, c)


def _mixture_quantile(p, tau, tol=1e-12, max_iter=200):
    z = special.ndtri(tau)
    q1 = np.exp(p["mu1"] + p["sigma1"] * z)
    q2 = np.exp(p["mu2"] + p["sigma2"] * z)
    lo, hi = np.minimum(q1, q2), np.maximum(q1, q2)

    def cdf(q):
        return (p["weight"] * _lognormal_cdf(q, p["mu1"], p["sigma1"])
                + (1 - p["weight"]) * _lognormal_cdf(q, p["mu2"], p["sigma2"]))

    # the mixture tau-quantile lies between the component tau-quantiles
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        below = cdf(mid) < tau
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.all(hi - lo <= tol * hi):
            break
    return 0.5 * (lo + hi)


def true_quantile(spec: SyntheticSpec, X, tau):
    """Exact ``tau``-quantile of the capped conditional law, one per row of ``X``."""
    if not 0 < tau < 1:
        raise InvalidArgument(f"tau must lie in (0, 1), got {tau}")
    p = spec.evaluate(X)
    if spec.family == "lognormal":
        q = np.exp(p["mu"] + p["sigma"] * special.ndtri(tau))
    elif spec.family == "gamma":
        q = stats.gamma.ppf(tau, p["shape"], scale=p["scale"])
    else:
        q = _mixture_quantile(p, tau)
    return np.minimum(q, spec.t_max)


def true_quantiles(spec: SyntheticSpec, X, levels):
    """Matrix of shape ``(rows, len(levels))``."""
    return np.stack([true_quantile(spec, X, t) for t in levels], axis=-1)


def _lognormal_capped_mean(mu, sigma, cap):
    logc = np.log(cap)
    safe = np.where(sigma > 0, sigma, 1.0)
    part = (np.exp(mu + safe ** 2 / 2) * special.ndtr((logc - mu - safe ** 2) / safe)
            + cap * special.ndtr(-(logc - mu) / safe))
    return np.where(sigma > 0, part, np.minimum(np.exp(mu), cap))


def true_mean(spec: SyntheticSpec, X):
    """``E[min(W, t_max) | x]`` in closed form."""
    p = spec.evaluate(X)
    T = spec.t_max
    if spec.family == "lognormal":
        return _lognormal_capped_mean(p["mu"], p["sigma"], T)
    if spec.family == "gamma":
        k, th = p["shape"], p["scale"]
        return (k * th * stats.gamma.cdf(T, k + 1, scale=th)
                + T * stats.gamma.sf(T, k, scale=th))
    w = p["weight"]
    return (w * _lognormal_capped_mean(p["mu1"], p["sigma1"], T)
            + (1 - w) * _lognormal_capped_mean(p["mu2"], p["sigma2"], T))


# ---------------------------------------------------------------------------
# Synthetic CSV output

def write_dataset_csv(ds: Dataset, path, header_lines=()):
    """Write ``ds`` in the interaction CSV dialect with ``num_x*`` feature columns."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        d = ds.X.shape[1]
        w.writerow(list(REQUIRED_COLUMNS) + [f"num_x{j}" for j in range(d)])
        for i in range(len(ds)):
            w.writerow([ds.user_ids[i], ds.item_ids[i], repr(float(ds.durations[i])),
                        repr(float(ds.y[i]))] + [repr(float(v)) for v in ds.X[i]])


def write_sidecar(spec: SyntheticSpec, path, n, seed):
    body = {"spec": spec.to_dict(), "n": int(n), "seed": int(seed)}
    Path(path).write_text(json.dumps(body, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def sidecar_path(csv_path):
    p = Path(csv_path)
    return p.with_name(p.name + ".spec.json")
