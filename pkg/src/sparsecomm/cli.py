"""Command-line entry point: ``sparsecomm {bound,hist,train,bench,randk-check}``."""

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import analysis, bench
from .compressors import CompressorSpec
from .config import ConfigError, defaults, load_config, parse_overrides
from .engine import TrainConfig, train
from .errors import SparseCommError
from .models import MLP, load_idx, synth_dataset

log = logging.getLogger("sparsecomm")

ENV_OUT = "SPARSECOMM_OUT"


class UsageError(Exception):
    pass


def _int_list(text):
    try:
        return [int(float(x)) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of integers, got {text!r}") from None


def _str_list(text):
    return [x.strip() for x in text.split(",") if x.strip()]


def _ratio(text):
    v = float(text)
    if not 0 < v <= 1:
        raise argparse.ArgumentTypeError(f"ratio must lie in (0, 1], got {text}")
    return v


def _add_common(p, seed_required=True):
    p.add_argument("--out", help=f"output directory (default: ${ENV_OUT} or ./out)")
    p.add_argument("--seed", type=int, required=seed_required)
    p.add_argument("-v", "--verbose", action="store_true")


def _add_training(p):
    p.add_argument("--config", help="TOML config file; dotted keys may be overridden as --section.key VALUE")
    p.add_argument("--compressor", choices=["dense", "topk", "randk", "gaussiank", "dgck", "trimmedk"])
    p.add_argument("--k-ratio", type=_ratio)
    p.add_argument("--sample-ratio", type=_ratio)
    p.add_argument("--refine-iters", type=int)
    _add_common(p, seed_required=False)


def build_parser():
    parser = argparse.ArgumentParser(prog="sparsecomm", description="Gradient sparsification experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bound", help="top-k error ratio vs. (1-k/d) and (1-k/d)^2, plus pi^2 shape")
    p.add_argument("--d", type=int, default=100_000)
    p.add_argument("--dist", choices=analysis.DISTRIBUTIONS, default="gaussian")
    p.add_argument("--ks", type=_int_list, default=[10, 100, 1000, 10000])
    _add_common(p)

    p = sub.add_parser("hist", help="histograms/CDFs of compressor inputs during a short training run")
    p.add_argument("--bins", type=int)
    p.add_argument("--checkpoints", type=str, help="comma-separated iteration numbers")
    _add_training(p)

    p = sub.add_parser("train", help="error-feedback data-parallel SGD")
    _add_training(p)

    p = sub.add_parser("bench", help="operator cost comparison")
    p.add_argument("--dims", type=_int_list, default=[1_000_000])
    p.add_argument("--k-ratio", type=_ratio, default=0.001)
    p.add_argument("--kinds", type=_str_list, default=["topk", "topk-sort", "gaussiank", "dgck"])
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--sample-ratio", type=_ratio, default=0.01)
    p.add_argument("--refine-iters", type=int, default=4)
    p.add_argument("--fp32", action="store_true", help="benchmark on float32 vectors")
    p.add_argument("--no-timing", action="store_true", help="leave wall time blank (byte-reproducible CSV)")
    _add_common(p)

    p = sub.add_parser("randk-check", help="Monte Carlo check of the Rand_k expectation")
    p.add_argument("--d", type=int, default=10_000)
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--dist", choices=analysis.DISTRIBUTIONS, default="gaussian")
    _add_common(p)
    return parser


def _out_dir(args, cfg=None):
    out = args.out or os.environ.get(ENV_OUT) or (cfg or {}).get("output.dir") or "out"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    if not os.access(path, os.W_OK):
        raise UsageError(f"output directory is not writable: {path}")
    return path


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def cmd_bound(args):
    out = _out_dir(args)
    u = analysis.synthetic_vector(args.dist, args.d, args.seed)
    rows = analysis.bound_report(u, args.ks)
    analysis.write_bound_csv(rows, out / "bound_report.csv")
    shape = analysis.pi_shape_check(u)
    _write_rows(out / "pi_shape_summary.csv",
                ["d", "convex_violations", "line_violations", "skip_head", "stride"],
                [[args.d, shape.convex_violations, shape.line_violations, shape.skip_head, shape.stride]])
    analysis.write_pi_shape_csv(u, out / "pi_shape.csv")
    for r in rows:
        print(f"k={r.k} exact={r.exact_ratio:.6g} tight={r.tight_bound:.6g} loose={r.loose_bound:.6g}")
    return 0


def _training_config(args, extra):
    cfg = defaults()
    if args.config:
        cfg.update(load_config(args.config))
    flags = {
        "compressor.kind": args.compressor,
        "compressor.k_ratio": args.k_ratio,
        "compressor.sample_ratio": args.sample_ratio,
        "compressor.refine_iters": args.refine_iters,
        "seed": args.seed,
    }
    cfg.update({k: v for k, v in flags.items() if v is not None})
    cfg.update(parse_overrides(extra))
    if cfg["seed"] is None:
        raise UsageError("a seed is required (--seed or 'seed' in the config file)")
    return cfg


def _build_training(cfg):
    seed = cfg["seed"]
    if cfg["data.images"] or cfg["data.labels"]:
        if not (cfg["data.images"] and cfg["data.labels"]):
            raise UsageError("data.images and data.labels must be given together")
        data = load_idx(cfg["data.images"], cfg["data.labels"]).subset(cfg["data.limit"])
    else:
        sseed = cfg["data.synth.seed"] if cfg["data.synth.seed"] is not None else seed
        data = synth_dataset(sseed, cfg["data.synth.n"], cfg["data.synth.m"], cfg["data.synth.C"],
                             cfg["data.synth.separation"])
    if cfg["model.kind"] == "logreg":
        sizes = (data.m, data.n_classes)
    elif cfg["model.kind"] == "mlp":
        sizes = (data.m, *[int(h) for h in cfg["model.hidden"].split(",") if h.strip()], data.n_classes)
    else:
        raise UsageError(f"unknown model.kind {cfg['model.kind']!r}")
    model = MLP(sizes, cfg["model.activation"])
    kind = cfg["compressor.kind"]
    spec = None
    if kind != "dense":
        k_args = {"k": cfg["compressor.k"]} if cfg["compressor.k"] else {"k_ratio": cfg["compressor.k_ratio"]}
        spec = CompressorSpec(kind, sample_ratio=cfg["compressor.sample_ratio"],
                              refine_iters=cfg["compressor.refine_iters"], seed=seed, **k_args)
    return TrainConfig(
        model=model, data=data, compressor=spec, P=cfg["train.workers"], lr=cfg["train.lr"],
        momentum=cfg["train.momentum"], epochs=cfg["train.epochs"], iters=cfg["train.iters"],
        batch_size=cfg["train.batch_size"], global_seed=seed, lr_decay=cfg["train.lr_decay"],
        lr_decay_epochs=cfg["train.lr_decay_epochs"],
    )


def cmd_train(args, extra):
    cfg = _training_config(args, extra)
    out = _out_dir(args, cfg)
    tc = _build_training(cfg)
    log.info("training %r on n=%d with %s", tc.model, tc.data.n, tc.compressor)
    result = train(tc)
    result.write_csv(out / "train_iters.csv", out / "train_epochs.csv")
    e, loss, acc = result.epochs[-1]
    print(f"final epoch {e}: train_loss={loss:.6g} train_acc={acc:.4f} communicated={result.iters[-1][3]}")
    return 0


def cmd_hist(args, extra):
    cfg = _training_config(args, extra)
    if args.bins is not None:
        cfg["hist.bins"] = args.bins
    if args.checkpoints is not None:
        cfg["hist.checkpoints"] = args.checkpoints
    out = _out_dir(args, cfg)
    checkpoints = sorted(set(_int_list(cfg["hist.checkpoints"])))
    tc = _build_training(cfg)
    tc.iters = max(checkpoints) + 1
    summary = []

    def dump(t, inputs):
        if t in checkpoints:
            u = inputs[0]
            h = analysis.histogram(u, cfg["hist.bins"])
            analysis.write_histogram_csv(h, out / f"hist_iter{t:06d}.csv")
            summary.append([t, repr(float(np.mean(u))), repr(float(np.std(u))), repr(_excess_kurtosis(u))])

    train(tc, on_iteration=dump)
    _write_rows(out / "hist_summary.csv", ["iter", "mean", "std", "excess_kurtosis"], summary)
    print(f"wrote {len(summary)} histograms to {out}")
    return 0


def _excess_kurtosis(u):
    c = u - u.mean()
    var = float(np.mean(c * c))
    return float(np.mean(c ** 4) / (var * var) - 3.0) if var > 0 else 0.0


def cmd_bench(args):
    out = _out_dir(args)
    rows = bench.run_bench(args.dims, args.k_ratio, args.kinds, args.repeats, args.seed,
                           sample_ratio=args.sample_ratio, refine_iters=args.refine_iters,
                           dtype=np.float32 if args.fp32 else np.float64)
    bench.write_bench_csv(rows, out / "bench.csv", with_timing=not args.no_timing)
    for r in rows:
        print(f"d={r.d} {r.kind:10s} {r.wall_ms:10.3f} ms passes={r.full_passes} "
              f"selected={r.selected_count} recall={r.recall:.3f}")
    return 0


def cmd_randk(args):
    out = _out_dir(args)
    u = analysis.synthetic_vector(args.dist, args.d, args.seed)
    mean, target = analysis.randk_expectation_check(u, args.k, args.trials, args.seed)
    rel = abs(mean - target) / target if target else abs(mean)
    _write_rows(out / "randk_check.csv", ["d", "k", "trials", "mean_ratio", "target", "rel_err"],
                [[args.d, args.k, args.trials, repr(mean), repr(target), repr(rel)]])
    print(f"mean_ratio={mean:.6f} target={target:.6f} rel_err={rel:.4%}")
    return 0


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    if extra and args.command not in ("train", "hist"):
        parser.error(f"unrecognized arguments: {' '.join(extra)}")
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "bound":
            return cmd_bound(args)
        if args.command == "train":
            return cmd_train(args, extra)
        if args.command == "hist":
            return cmd_hist(args, extra)
        if args.command == "bench":
            return cmd_bench(args)
        return cmd_randk(args)
    except (ConfigError, UsageError) as exc:
        print(f"sparsecomm {args.command}: {exc}", file=sys.stderr)
        return 2
    except (SparseCommError, OSError, MemoryError) as exc:
        print(f"sparsecomm {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
