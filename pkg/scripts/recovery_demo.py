"""Fit a small quantile model to lognormal data and print learned vs true quantiles.

    python3 scripts/recovery_demo.py --n 50000 --n-quantiles 9
"""

import argparse

import numpy as np

from cqe.config import RunConfig
from cqe.data import default_lognormal_spec, synth_generate, true_mean, true_quantiles
from cqe.experiments import recovery_error
from cqe.inference import StrategyConfig
from cqe.model import train


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=50_000)
    ap.add_argument("--n-quantiles", type=int, default=9)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    spec = default_lognormal_spec()
    train_ds = synth_generate(spec, args.n, args.seed)
    test_ds = synth_generate(spec, 5_000, args.seed + 1)
    result = train(train_ds, RunConfig(n_quantiles=args.n_quantiles))
    model = result.model
    print(f"final training loss {result.loss_trace[-1]:.4f}")
    print(f"mean relative recovery error {recovery_error(model, test_ds.X, test_ds.X, spec):.2%}")

    probe = np.array([[-0.8, 0.5, -0.5], [0.0, 0.0, 0.0], [0.8, -0.5, 0.9]])
    learned = model.predict_quantiles(probe)
    truth = true_quantiles(spec, probe, model.levels)
    cde = model.score(probe, StrategyConfig("cde"))
    for x, q, t, c, m in zip(probe, learned, truth, cde, true_mean(spec, probe)):
        print(f"\nx = {x.tolist()}   cde {c:.2f}  true mean {m:.2f}")
        for tau, a, b in zip(model.levels, q, t):
            print(f"  tau {tau:.2f}  learned {a:8.2f}  true {b:8.2f}")


if __name__ == "__main__":
    main()
