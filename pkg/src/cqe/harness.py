"""Small-scale ranking simulator for comparing inference strategies.

A pool holds candidates whose watch-time distributions are known exactly.
A session serves candidates in ranked order (no repeats), draws a realized
watch time for each, and may end early: a watch shorter than
``threshold_s`` makes the user leave with probability ``p_churn``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import AffineMap, SyntheticSpec, sample_features, sample_watch_times, true_quantiles
from .errors import InvalidArgument
from .inference import StrategyConfig, apply_strategy

REPORT_COLUMNS = ("strategy", "mean_watch_s", "se_watch", "mean_plays", "se_plays", "churn_rate")


@dataclass(frozen=True)
class Candidate:
    spec: SyntheticSpec
    x: tuple[float, ...]
    k: float | None = None  # per-candidate DQC blend, e.g. from item novelty


@dataclass
class CandidatePool:
    candidates: list[Candidate]

    def __post_init__(self):
        if not self.candidates:
            raise InvalidArgument("candidate pool is empty")

    def __len__(self):
        return len(self.candidates)

    @property
    def X(self):
        widths = {len(c.x) for c in self.candidates}
        if len(widths) != 1:
            raise InvalidArgument("candidates have different feature widths")
        return np.array([c.x for c in self.candidates], dtype=np.float64)

    @classmethod
    def sample(cls, spec: SyntheticSpec, n, seed):
        X = sample_features(spec, n, np.random.default_rng(seed))
        return cls([Candidate(spec, tuple(row)) for row in X])


@dataclass
class PoolOracle:
    """Exact quantiles of each candidate's own distribution."""

    levels: np.ndarray

    def pool_quantiles(self, pool: CandidatePool):
        return np.vstack([true_quantiles(c.spec, np.array([c.x]), self.levels)
                          for c in pool.candidates])


@dataclass(frozen=True)
class UserModel:
    p_churn: float = 0.5
    threshold_s: float = 5.0

    def __post_init__(self):
        if not 0 <= self.p_churn <= 1:
            raise InvalidArgument(f"p_churn must lie in [0, 1], got {self.p_churn}")
        if not self.threshold_s >= 0:
            raise InvalidArgument(f"threshold_s must be >= 0, got {self.threshold_s}")


@dataclass
class SessionOutcome:
    total_watch_s: float = 0.0
    plays: int = 0
    churned: bool = False
    steps: list[tuple[int, float]] = field(default_factory=list)


@dataclass
class StrategyRow:
    strategy: str
    mean_watch_s: float
    se_watch: float
    mean_plays: float
    se_plays: float
    churn_rate: float


def candidate_quantiles(model, pool: CandidatePool):
    if hasattr(model, "pool_quantiles"):
        return model.pool_quantiles(pool)
    return model.predict_quantiles(pool.X)


def score_pool(model, pool: CandidatePool, strategy: StrategyConfig):
    q = candidate_quantiles(model, pool)
    k = np.array([strategy.k if c.k is None else c.k for c in pool.candidates])
    return apply_strategy(q, model.levels, strategy, k=k)


def rank(model, pool: CandidatePool, strategy: StrategyConfig):
    """Candidate indices by descending score; equal scores keep pool order."""
    scores = score_pool(model, pool, strategy)
    return np.argsort(-scores, kind="stable")


def simulate_session(pool: CandidatePool, policy, user_model: UserModel, horizon, seed):
    """Play one session.

    ``policy`` is either a precomputed ordering of pool indices or a callable
    mapping the pool to one. The played item that triggers churn counts as a
    play.
    """
    if int(horizon) != horizon or horizon < 1:
        raise InvalidArgument(f"horizon must be a positive integer, got {horizon}")
    if horizon > len(pool):
        raise InvalidArgument(f"horizon {horizon} exceeds pool size {len(pool)}")
    if not isinstance(user_model, UserModel):
        raise InvalidArgument("user_model must be a UserModel")
    order = np.asarray(policy(pool) if callable(policy) else policy)
    rng = np.random.default_rng(seed)
    out = SessionOutcome()
    for idx in order[:horizon]:
        c = pool.candidates[int(idx)]
        w = float(sample_watch_times(c.spec, np.array([c.x]), rng)[0])
        u = rng.random()  # drawn every step so paired runs stay aligned
        out.steps.append((int(idx), w))
        out.total_watch_s += w
        out.plays += 1
        if w < user_model.threshold_s and u < user_model.p_churn:
            out.churned = True
            break
    return out


def compare_strategies(model, pool: CandidatePool, strategies, n_sessions, seed,
                       user_model: UserModel = UserModel(), horizon=10):
    """One report row per strategy, with Monte-Carlo standard errors.

    ``strategies`` is a list of :class:`StrategyConfig` or ``(name, config)``
    pairs. Session ``i`` uses seed ``seed + i`` under every strategy, so the
    rows are paired comparisons.
    """
    if not strategies:
        raise InvalidArgument("need at least one strategy")
    rows = []
    for entry in strategies:
        name, strat = entry if isinstance(entry, tuple) else (entry.kind, entry)
        order = rank(model, pool, strat)
        watch = np.empty(n_sessions)
        plays = np.empty(n_sessions)
        churn = np.empty(n_sessions)
        for i in range(n_sessions):
            s = simulate_session(pool, order, user_model, horizon, seed + i)
            watch[i], plays[i], churn[i] = s.total_watch_s, s.plays, s.churned
        se = lambda a: float(a.std(ddof=1) / np.sqrt(a.size)) if a.size > 1 else float("nan")
        rows.append(StrategyRow(name, float(watch.mean()), se(watch),
                                float(plays.mean()), se(plays), float(churn.mean())))
    return rows


def write_report_csv(rows, path, header_lines=()):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in rows:
            w.writerow([r.strategy] + [repr(getattr(r, c)) for c in REPORT_COLUMNS[1:]])


def default_pool_spec(t_max=300.0) -> SyntheticSpec:
    """Lognormal candidates whose spread grows with ``x1``.

    High-spread items have the larger mean but also the larger chance of a
    very short watch, which is where the strategies disagree.
    """
    return SyntheticSpec("lognormal", 2, {
        "mu": AffineMap(3.2, (0.4, 0.0)),
        "sigma": AffineMap(0.7, (0.0, 0.5)),
    }, t_max=t_max)


# Half of all sub-5-second watches end the session.
HIGH_CHURN = UserModel(p_churn=0.5, threshold_s=5.0)
LOW_CHURN = UserModel(p_churn=0.05, threshold_s=5.0)


def load_pool(path):
    """Read a pool file; returns ``(pool, user_model, horizon)``.

    The JSON object may give a shared ``spec`` plus either ``n_candidates``
    (features sampled with ``pool_seed``) or an explicit ``candidates`` list
    whose entries carry ``x`` and optionally their own ``spec`` and ``k``.
    """
    import json

    from .errors import SchemaError

    path = Path(path)
    try:
        d = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from exc
    shared = SyntheticSpec.from_dict(d["spec"]) if "spec" in d else None
    if "candidates" in d:
        cands = []
        for i, c in enumerate(d["candidates"]):
            spec = SyntheticSpec.from_dict(c["spec"]) if "spec" in c else shared
            if spec is None:
                raise SchemaError(f"candidates[{i}].spec: no spec and no shared spec")
            if "x" not in c:
                raise SchemaError(f"candidates[{i}].x: field is required")
            cands.append(Candidate(spec, tuple(float(v) for v in c["x"]),
                                   None if c.get("k") is None else float(c["k"])))
        pool = CandidatePool(cands)
    elif shared is not None and "n_candidates" in d:
        pool = CandidatePool.sample(shared, int(d["n_candidates"]), int(d.get("pool_seed", 0)))
    else:
        raise SchemaError(f"{path}: need 'candidates' or 'spec' with 'n_candidates'")
    um = d.get("user_model", {})
    unknown = set(um) - {"p_churn", "threshold_s"}
    if unknown:
        raise SchemaError(f"user_model: unknown fields {sorted(unknown)}")
    return pool, UserModel(**um), int(d.get("horizon", 10))
