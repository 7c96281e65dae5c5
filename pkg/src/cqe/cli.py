"""Command-line entry point: ``cqe <verb> ...``.

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import nn
from .config import RunConfig, load_config
from .data import (
    SyntheticSpec, default_gamma_spec, default_lognormal_spec, default_mixture_spec,
    load_csv, records_to_dataset, sidecar_path, synth_generate, write_dataset_csv,
    write_sidecar, FeatureEncoder,
)
from .errors import CQEError, InvalidArgument, NumericFailure, SchemaError
from .experiments import SWEEP_COLUMNS, sweep_quantiles
from .harness import PoolOracle, compare_strategies, load_pool, write_report_csv
from .head import make_levels
from .inference import StrategyConfig
from .model import cqe_loss, evaluate, load_model, save_model, train

log = logging.getLogger("cqe")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

BUILTIN_SPECS = {
    "lognormal": default_lognormal_spec,
    "mixture": default_mixture_spec,
    "gamma": default_gamma_spec,
}


class UsageError(CQEError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _config(args) -> RunConfig:
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
    except (SchemaError, InvalidArgument, OSError) as exc:
        raise UsageError(f"config {args.config}: {exc}") from exc
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def _need_out(args):
    if not args.out:
        raise UsageError("--out is required for this command")
    return Path(args.out)


def _header(cfg: RunConfig, **extra):
    lines = list(cfg.to_lines())
    lines += [f"{k} = {v}" for k, v in extra.items()]
    return lines


def _write_rows(path, header_lines, columns, rows):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        w.writerows(rows)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _load_records(path):
    records, report = load_csv(path)
    if report.n_skipped:
        log.warning("%s: skipped %d malformed rows (%s)", path, report.n_skipped,
                    dict(sorted(report.skipped.items())))
    if not records:
        raise SchemaError(f"{path}: no usable rows")
    return records


def _strategy(args, cfg: RunConfig) -> StrategyConfig:
    return StrategyConfig(
        args.strategy or cfg.strategy,
        cfg.tau_low if args.tau_low is None else args.tau_low,
        cfg.tau_high if args.tau_high is None else args.tau_high,
        cfg.k if args.k is None else args.k)


# ---------------------------------------------------------------------------
# verbs

def cmd_gen_data(args):
    out = _need_out(args)
    if args.spec:
        spec = SyntheticSpec.load(args.spec)
    else:
        spec = BUILTIN_SPECS[args.family]()
    seed = 0 if args.seed is None else args.seed
    ds = synth_generate(spec, args.n, seed)
    try:
        write_dataset_csv(ds, out)
        write_sidecar(spec, sidecar_path(out), args.n, seed)
    except OSError as exc:
        raise OSError(f"cannot write {out}: {exc}") from exc
    print(f"wrote {args.n} rows to {out} (spec: {sidecar_path(out)})")


def cmd_train(args):
    cfg = _config(args)
    out = _need_out(args)
    records = _load_records(args.data)
    encoder = FeatureEncoder(n_dims=cfg.n_dims).fit(records)
    ds = records_to_dataset(records, encoder)
    result = train(ds, cfg)
    model = result.model
    model.encoder = encoder
    save_model(model, out)
    trace_path = out.with_name(out.name + ".loss.csv")
    _write_rows(trace_path, _header(cfg, data=args.data), ("epoch", "loss"),
                [(i, repr(v)) for i, v in enumerate(result.loss_trace)])
    print(f"model -> {out}\nloss trace -> {trace_path} (final loss {result.loss_trace[-1]:.6g})")


def _load_model(path):
    if not Path(path).is_file():
        raise FileNotFoundError(f"model file not found: {path}")
    return load_model(path)


def cmd_eval(args):
    cfg = _config(args)
    model = _load_model(args.model)
    records = _load_records(args.data)
    ds = records_to_dataset(records, model.encoder)
    strategy = _strategy(args, cfg)
    kw = {} if args.max_pairs is None else {"max_pairs": args.max_pairs}
    report = evaluate(model, ds, strategy, args.task, seed=cfg.seed, **kw)
    rows = [("strategy", strategy.kind), ("task", args.task)] + report.as_rows()
    for name, value in rows:
        print(f"{name}\t{_fmt(value)}")
    if args.out:
        _write_rows(args.out, _header(cfg, model=args.model, data=args.data,
                                      strategy=strategy.kind, tau_low=strategy.tau_low,
                                      tau_high=strategy.tau_high, k=strategy.k, task=args.task),
                    ("metric", "value"), [(n, _fmt(v)) for n, v in rows])


def cmd_rank(args):
    cfg = _config(args)
    out = _need_out(args)
    model = _load_model(args.model)
    records = _load_records(args.data)
    ds = records_to_dataset(records, model.encoder)
    strategy = _strategy(args, cfg)
    scores = model.score(ds.X, strategy)
    rows = []
    users = ds.user_ids
    _, first = np.unique(users, return_index=True)
    for u in users[np.sort(first)]:
        idx = np.flatnonzero(users == u)
        order = idx[np.argsort(-scores[idx], kind="stable")]
        rows += [(u, pos + 1, ds.item_ids[i], repr(float(scores[i]))) for pos, i in enumerate(order)]
    _write_rows(out, _header(cfg, model=args.model, data=args.data, strategy=strategy.kind),
                ("user_id", "rank", "item_id", "score"), rows)
    print(f"ranked {len(rows)} rows for {len(first)} users -> {out}")


def cmd_grad_check(args):
    cfg = _config(args)
    rng = np.random.default_rng(cfg.seed)
    sizes = [args.n_features, *cfg.hidden_sizes, cfg.n_quantiles]
    params = nn.init_mlp(sizes, cfg.seed)
    for b in params.biases:
        b[:] = rng.normal(0, 0.1, size=b.shape)
    X = rng.normal(size=(args.n_samples, args.n_features))
    y = rng.gamma(2.0, 1.0, size=args.n_samples)
    levels = make_levels(cfg.n_quantiles)
    err = float(nn.grad_check(params, lambda p: cqe_loss(p, X, y, levels), eps=args.eps))
    print(f"params\t{params.n_params}\nmax_relative_error\t{err!r}")
    if args.out:
        _write_rows(args.out, _header(cfg, n_features=args.n_features, n_samples=args.n_samples,
                                      eps=args.eps),
                    ("params", "max_relative_error"), [(params.n_params, repr(err))])
    if err >= args.tolerance:
        raise NumericFailure(f"gradient check failed: {err:.3g} >= {args.tolerance}")


def cmd_sweep(args):
    cfg = _config(args)
    out = _need_out(args)
    try:
        n_list = [int(v) for v in args.n_list.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"--n-list must be comma-separated integers: {exc}") from exc
    if not n_list:
        raise UsageError("--n-list is empty")
    records = _load_records(args.data)
    encoder = FeatureEncoder(n_dims=cfg.n_dims).fit(records)
    ds = records_to_dataset(records, encoder)
    raw = np.array([r.numeric_feats for r in records], dtype=np.float64)
    order = np.random.default_rng(cfg.seed).permutation(len(ds))
    n_hold = int(round(len(ds) * args.holdout))
    if n_hold < 2 or n_hold >= len(ds):
        raise UsageError("--holdout leaves no room for a train/test split")
    test_rows, train_rows = np.sort(order[:n_hold]), np.sort(order[n_hold:])
    spec = None
    side = sidecar_path(args.data)
    if side.is_file():
        spec = SyntheticSpec.load(side)
        if raw.shape[1] != spec.n_features:
            spec = None
    rows = sweep_quantiles(cfg, ds.subset(train_rows), ds.subset(test_rows), n_list,
                           spec=spec, test_raw=raw[test_rows] if spec is not None else None)
    _write_rows(out, _header(cfg, data=args.data, holdout=args.holdout, n_list=args.n_list),
                SWEEP_COLUMNS, [[_fmt(getattr(r, c)) for c in SWEEP_COLUMNS] for r in rows])
    for r in rows:
        print("\t".join(f"{c}={_fmt(getattr(r, c))}" for c in SWEEP_COLUMNS))


def cmd_compare(args):
    cfg = _config(args)
    out = _need_out(args)
    pool, user_model, horizon = load_pool(args.pool)
    names = [s.strip() for s in args.strategies.split(",") if s.strip()]
    if not names:
        raise UsageError("--strategies is empty")
    strategies = [(n, cfg.strategy_config(n)) for n in names]
    model = PoolOracle(make_levels(cfg.n_quantiles))
    rows = compare_strategies(model, pool, strategies, args.n_sessions, cfg.seed,
                              user_model, horizon)
    write_report_csv(rows, out, _header(
        cfg, pool=args.pool, n_sessions=args.n_sessions, horizon=horizon,
        p_churn=user_model.p_churn, threshold_s=user_model.threshold_s))
    for r in rows:
        print(f"{r.strategy}\twatch={r.mean_watch_s:.3f}±{r.se_watch:.3f}\t"
              f"plays={r.mean_plays:.4f}±{r.se_plays:.4f}\tchurn={r.churn_rate:.4f}")


# ---------------------------------------------------------------------------

def build_parser():
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", help="run config file (key = value lines)")
    shared.add_argument("--seed", type=int, help="overrides the config seed")
    shared.add_argument("--out", help="output path")
    shared.add_argument("-v", "--verbose", action="store_true")

    strat = argparse.ArgumentParser(add_help=False)
    strat.add_argument("--strategy", choices=("cse", "dqc", "cde"))
    strat.add_argument("--tau-low", type=float)
    strat.add_argument("--tau-high", type=float)
    strat.add_argument("--k", type=float)

    p = _Parser(prog="cqe", description="Conditional quantile estimation for watch time.")
    sub = p.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-data", parents=[shared], help="write a synthetic interaction CSV")
    g.add_argument("--spec", help="synthetic spec JSON (default: built-in --family)")
    g.add_argument("--family", choices=sorted(BUILTIN_SPECS), default="lognormal")
    g.add_argument("--n", type=int, required=True)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", parents=[shared], help="train a quantile model")
    t.add_argument("--data", required=True)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", parents=[shared, strat], help="evaluate a model")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--task", choices=("watchtime", "interest"), default="watchtime")
    e.add_argument("--max-pairs", type=int)
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("rank", parents=[shared, strat], help="rank each user's candidates")
    r.add_argument("--model", required=True)
    r.add_argument("--data", required=True)
    r.set_defaults(func=cmd_rank)

    c = sub.add_parser("grad-check", parents=[shared], help="finite-difference gradient check")
    c.add_argument("--n-features", type=int, default=8)
    c.add_argument("--n-samples", type=int, default=4)
    c.add_argument("--eps", type=float, default=1e-5)
    c.add_argument("--tolerance", type=float, default=1e-4)
    c.set_defaults(func=cmd_grad_check)

    s = sub.add_parser("sweep-quantiles", parents=[shared], help="train/evaluate across quantile counts")
    s.add_argument("--data", required=True)
    s.add_argument("--n-list", required=True, help="comma-separated quantile counts")
    s.add_argument("--holdout", type=float, default=0.2)
    s.set_defaults(func=cmd_sweep)

    m = sub.add_parser("compare", parents=[shared], help="simulate sessions per strategy")
    m.add_argument("--pool", required=True, help="pool JSON")
    m.add_argument("--strategies", default="cse,dqc,cde")
    m.add_argument("--n-sessions", type=int, default=10_000)
    m.set_defaults(func=cmd_compare)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (UsageError, InvalidArgument) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericFailure as exc:
        extra = "" if exc.last_good_epoch is None else f" (last good epoch: {exc.last_good_epoch})"
        print(f"numeric failure: {exc}{extra}", file=sys.stderr)
        return EXIT_NUMERIC
    except (SchemaError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except CQEError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
