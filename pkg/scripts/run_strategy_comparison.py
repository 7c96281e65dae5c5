"""Simulate sessions under two churn regimes and compare CSE, DQC and CDE.

    python3 scripts/run_strategy_comparison.py --n-sessions 10000
"""

import argparse

from cqe.harness import (HIGH_CHURN, LOW_CHURN, CandidatePool, PoolOracle, compare_strategies,
                         default_pool_spec)
from cqe.head import make_levels
from cqe.inference import StrategyConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-sessions", type=int, default=10_000)
    ap.add_argument("--n-candidates", type=int, default=30)
    ap.add_argument("--horizon", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    pool = CandidatePool.sample(default_pool_spec(), args.n_candidates, seed=10)
    oracle = PoolOracle(make_levels(100))
    strategies = [StrategyConfig(k) for k in ("cse", "dqc", "cde")]
    for label, um in (("high churn", HIGH_CHURN), ("low churn", LOW_CHURN)):
        print(f"== {label}: p_churn={um.p_churn}, threshold={um.threshold_s}s")
        print(f"{'strategy':8s} {'watch_s':>16s} {'plays':>16s} {'churn':>7s}")
        for r in compare_strategies(oracle, pool, strategies, args.n_sessions, args.seed,
                                    um, args.horizon):
            print(f"{r.strategy:8s} {r.mean_watch_s:9.2f} ± {r.se_watch:4.2f} "
                  f"{r.mean_plays:9.4f} ± {r.se_plays:.4f} {r.churn_rate:7.4f}")


if __name__ == "__main__":
    main()
