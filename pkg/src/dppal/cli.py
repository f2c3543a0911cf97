"""Command-line entry point ``dppal``.

Exit codes: 0 success, 1 config or input error, 2 numerical failure,
3 threshold failure in ``mode-compare --check``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace

import numpy as np

from dppal.data import (
    SineSpec,
    fake_labels_sine,
    generate_sine_dataset,
    load_csv,
    minmax_normalize,
    save_csv,
)
from dppal.errors import DppError, InputError, NumericalError
from dppal.harness import (
    config_to_dict,
    curves_csv,
    load_config,
    mode_compare,
    read_records,
    run_experiment,
    summarize,
    tune_gamma,
    write_records,
)
from dppal.kernel import build_kernel, default_sigma, gaussian_similarity
from dppal.mode import SmdConfig, greedy_mode, mcr_mode
from dppal.sampler import DppDistribution, McmcConfig, default_mcmc_steps, sample_exact, sample_mcmc

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_THRESHOLD = 0, 1, 2, 3


def _pool(args, scores_column=None):
    """(features, scores, similarity) for a CSV pool; scores default to 1."""
    ds = load_csv(args.csv, args.label_column, normalize=False)
    with open(args.csv, encoding="utf-8") as fh:
        header = [h.strip() for h in fh.readline().split(",")]
    names = [h for h in header if h != args.label_column]
    x = ds.features
    scores = np.ones(ds.n)
    if scores_column is not None:
        if scores_column not in names:
            raise InputError(f"scores column {scores_column!r} not in header")
        c = names.index(scores_column)
        scores = x[:, c].copy()
        x = np.delete(x, c, axis=1)
    if not args.raw:
        x = minmax_normalize(x)
    sigma = args.sigma if args.sigma is not None else default_sigma(max(args.k, 2), x.shape[1])
    return x, scores, gaussian_similarity(x, sigma)


def cmd_generate(args):
    ds = generate_sine_dataset(SineSpec(n=args.n, seed=args.seed))
    if args.fake_labels:
        ds = replace(ds, labels=fake_labels_sine(ds.features))
    save_csv(ds, args.out)
    print(f"wrote {ds.n} rows to {args.out}")
    return EXIT_OK


def cmd_sample(args):
    x, scores, s = _pool(args, args.scores_column)
    kernel = build_kernel(s, scores, args.alpha, args.gamma)
    dist = DppDistribution(kernel, args.k, args.alpha)
    if args.exact:
        subset = sample_exact(dist, seed=args.seed)
    else:
        steps = args.mcmc_steps or default_mcmc_steps(x.shape[0], args.k)
        subset = sample_mcmc(dist, McmcConfig(steps, seed=args.seed))
    print(json.dumps(list(subset)))
    return EXIT_OK


def cmd_mode(args):
    _, _, s = _pool(args)
    if args.algorithm == "greedy":
        res = greedy_mode(s, args.k)
    else:
        res = mcr_mode(s, args.k, SmdConfig(seed=args.seed))
    print(json.dumps({"subset": list(res.subset), "log_det": res.log_det, "algorithm": res.algorithm}))
    return EXIT_OK


def cmd_mode_compare(args):
    res = mode_compare(args.instances, args.points, args.sigma, args.k, seed=args.seed,
                       workers=args.workers, smd=SmdConfig(seed=args.seed))
    print(res.table())
    if args.check is not None and res.better_or_equal < args.check:
        print(f"FAIL: better-or-equal rate {res.better_or_equal:.3f} < {args.check}")
        return EXIT_THRESHOLD
    return EXIT_OK


def _experiment_config(args):
    cfg = load_config(args.config)
    updates = {}
    if args.replicates is not None:
        updates["replicates"] = args.replicates
    if args.seed is not None:
        updates["base_seed"] = args.seed
    if getattr(args, "out", None):
        updates["output"] = args.out
    if args.workers is not None:
        updates["workers"] = args.workers
    return replace(cfg, **updates)


def cmd_al_run(args):
    cfg = _experiment_config(args)
    logging.info("config: %s", json.dumps(config_to_dict(cfg)))
    records = run_experiment(cfg)
    print(summarize(records).table())
    return EXIT_OK


def cmd_tune(args):
    cfg = _experiment_config(args)
    grid = [float(g) for g in args.grid.split(",")] if args.grid else None
    res = tune_gamma(cfg, grid, fake_labels=args.fake_labels) if grid else tune_gamma(
        cfg, fake_labels=args.fake_labels)
    print(f"{'gamma':>6} {'mean':>8} {'std':>8}")
    for g, m, sd in res.grid:
        print(f"{g:>6g} {m:>8.4f} {sd:>8.4f}")
    print(f"best gamma: {res.best:g}")
    return EXIT_OK


def cmd_report(args):
    records = [r for path in args.records for r in read_records(path)]
    print(summarize(records).table())
    if args.csv:
        curves_csv(records, args.csv)
    if args.merge:
        write_records(records, args.merge)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="dppal", description="DPP batch selection and active learning")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write the synthetic sine-band dataset as CSV")
    g.add_argument("--n", type=int, default=1000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--fake-labels", action="store_true", help="use the tuning labels")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    def pool_args(q):
        q.add_argument("--csv", required=True)
        q.add_argument("--label-column", default=None)
        q.add_argument("--raw", action="store_true", help="skip min-max normalisation")
        q.add_argument("--k", type=int, required=True)
        q.add_argument("--sigma", type=float, default=None)
        q.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("sample", help="one k-DPP draw over a CSV pool")
    pool_args(s)
    s.add_argument("--alpha", type=float, default=1.0)
    s.add_argument("--gamma", type=float, default=0.0)
    s.add_argument("--scores-column", default=None)
    s.add_argument("--mcmc-steps", type=int, default=None)
    s.add_argument("--exact", action="store_true", help="spectral sampler (alpha = 1 only)")
    s.set_defaults(func=cmd_sample)

    m = sub.add_parser("mode", help="approximate k-DPP mode of a CSV pool")
    pool_args(m)
    m.add_argument("--algorithm", choices=("greedy", "mcr"), default="greedy")
    m.set_defaults(func=cmd_mode)

    c = sub.add_parser("mode-compare", help="greedy vs MCR on random point clouds")
    c.add_argument("--instances", type=int, default=100)
    c.add_argument("--points", type=int, default=200)
    c.add_argument("--sigma", type=float, default=1.0)
    c.add_argument("--k", type=int, default=3)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--workers", type=int, default=1)
    c.add_argument("--check", type=float, nargs="?", const=0.85, default=None,
                   help="exit 3 if the better-or-equal rate is below this (default 0.85)")
    c.set_defaults(func=cmd_mode_compare)

    def exp_args(q):
        q.add_argument("--config", required=True)
        q.add_argument("--replicates", type=int, default=None)
        q.add_argument("--seed", type=int, default=None)
        q.add_argument("--workers", type=int, default=None)

    a = sub.add_parser("al-run", help="run an active-learning experiment from a JSON config")
    exp_args(a)
    a.add_argument("--out", default=None, help="records file (JSON lines)")
    a.set_defaults(func=cmd_al_run)

    t = sub.add_parser("tune", help="gamma grid search on fake labels")
    exp_args(t)
    t.add_argument("--grid", default=None, help="comma-separated gammas (default 0..7)")
    t.add_argument("--fake-labels", choices=("fake-sine", "fake-centroid"), default="fake-sine")
    t.set_defaults(func=cmd_tune)

    r = sub.add_parser("report", help="summarise records files")
    r.add_argument("records", nargs="+")
    r.add_argument("--csv", default=None, help="write mean accuracy curves here")
    r.add_argument("--merge", default=None, help="write all records to one file")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DppError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
