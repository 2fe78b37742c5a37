"""Command line entry point: ``edgeless-gnn {train,infer,eval,bench-scaling,synth,gradcheck}``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import pipeline
from .bench import DEFAULT_KS, DEFAULT_SIZES, linear_fit, scaling_benchmark
from .data_io import (FormatError, RunConfig, load_checkpoint, load_dataset, load_embeddings_binary,
                      load_embeddings_text, load_run_config, load_split, report_lines, report_table,
                      save_checkpoint, save_embeddings_binary, save_embeddings_text, save_report,
                      save_run_config, save_split, write_dataset, load_report)
from .loss import LossParams
from .sampling import split_nodes
from .synthetic import planted_partition
from .trainer import DivergenceError, check_gradients, stderr_progress

log = logging.getLogger("edgeless_gnn")

TASK_NAMES = {"lp": "lp", "link_prediction": "lp", "nc": "nc", "node_classification": "nc",
              "cd": "cd", "community_detection": "cd"}


def _add_overrides(p: argparse.ArgumentParser) -> None:
    d = RunConfig()
    p.add_argument("--config", required=True, help="key = value run configuration file")
    p.add_argument("--seed", type=int, help=f"split/init/sampling seed (default {d.seed})")
    p.add_argument("--k", type=int, help=f"neighbors per node in the kNN graph (default {d.k})")
    p.add_argument("--variant", choices=["gcn", "sage", "gin"], help=f"encoder (default {d.variant})")
    p.add_argument("--dim", type=int, help=f"embedding dimension (default {d.dim})")
    p.add_argument("--alpha", type=float, help=f"second-order loss weight (default {d.alpha})")
    p.add_argument("--beta", type=float, help=f"negative-pair distance weight (default {d.beta})")
    p.add_argument("--gamma", type=float, help=f"energy sharpness (default {d.gamma})")
    p.add_argument("--b", type=float, help=f"energy offset (default {d.b})")
    p.add_argument("--mask-fraction", type=float, dest="mask_fraction",
                   help=f"fraction of attribute entries zeroed (default {d.mask_fraction})")
    p.add_argument("--out-dir", default="out", help="directory for outputs (default out)")


def _run_config(args) -> RunConfig:
    cfg = load_run_config(args.config)
    return cfg.with_overrides(seed=args.seed, k=args.k, variant=args.variant, dim=args.dim,
                              alpha=args.alpha, beta=args.beta, gamma=args.gamma, b=args.b,
                              mask_fraction=args.mask_fraction)


def _load_bundle(cfg: RunConfig):
    if not cfg.edges or not cfg.features:
        raise ValueError("config must name 'edges' and 'features' files")
    return load_dataset(cfg.edges, cfg.features, cfg.labels or None)


def _scenario(cfg: RunConfig, split=None):
    bundle = _load_bundle(cfg)
    if split is None:
        split = split_nodes(bundle.graph.num_nodes, cfg.ratios, cfg.seed)
    return pipeline.prepare(bundle, split, cfg.k, cfg.mask_fraction, cfg.seed)


def cmd_train(args) -> int:
    cfg = _run_config(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scn = _scenario(cfg)
    print(f"train: {scn.g_train.num_nodes} training nodes, {scn.g_train.num_edges} edges, "
          f"{len(scn.split.edgeless_ids)} edgeless nodes, kNN edges {scn.g_knn.num_edges}", file=sys.stderr)
    result = pipeline.fit(scn, cfg, progress=stderr_progress)
    save_split(scn.split, out / "split.txt")
    save_run_config(cfg, out / "config.txt")
    save_checkpoint(out / "checkpoint.bin", result.params, cfg.train_config(), result.history,
                    {"best_epoch": result.best_epoch, "config_hash": cfg.config_hash()})
    with open(out / "history.tsv", "w", encoding="utf-8") as fh:
        fh.write("epoch\tloss\tval_ap\n")
        for epoch, loss, val in result.history:
            fh.write(f"{epoch}\t{loss!r}\t{'' if val is None else repr(val)}\n")
    print(f"wrote {out / 'checkpoint.bin'} (best epoch {result.best_epoch} of {result.epochs_run})",
          file=sys.stderr)
    return 0


def cmd_infer(args) -> int:
    cfg = _run_config(args)
    params, _, _, _ = load_checkpoint(args.checkpoint)
    split = load_split(args.split)
    scn = _scenario(cfg, split)
    if params.in_dim != scn.X.num_features:
        raise ValueError(f"checkpoint expects {params.in_dim} attributes, dataset has {scn.X.num_features}")
    rows, Z = pipeline.embed(params, scn, args.subset)
    n = scn.g_train.num_nodes
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_embeddings_binary(out / "z_all.bin", Z, rows)
    save_embeddings_text(out / "z_all.txt", Z, rows)
    save_embeddings_binary(out / "z_edgeless.bin", Z[n:], rows[n:])
    save_embeddings_text(out / "z_edgeless.txt", Z[n:], rows[n:])
    print(f"wrote {Z.shape[0]} embeddings ({Z.shape[0] - n} edgeless) to {out}", file=sys.stderr)
    return 0


def _parse_tasks(text: str) -> tuple[str, ...]:
    tasks = []
    for t in text.split(","):
        t = t.strip()
        if t:
            if t not in TASK_NAMES:
                raise ValueError(f"unknown task {t!r}; choose from lp, nc, cd")
            tasks.append(TASK_NAMES[t])
    return tuple(dict.fromkeys(tasks))


def cmd_eval(args) -> int:
    cfg = _run_config(args)
    tasks = _parse_tasks(args.tasks or cfg.tasks)
    split = load_split(args.split)
    scn = _scenario(cfg, split)
    lines = []
    if args.embeddings:
        path = Path(args.embeddings)
        if not path.exists():
            raise FileNotFoundError(f"embedding file not found: {path}")
        rows, Z = load_embeddings_binary(path) if path.suffix == ".bin" else load_embeddings_text(path)
        results = pipeline.evaluate(Z, scn, rows, tasks, cfg.eval_seed, cfg.logreg_reg, cfg.kmeans_restarts,
                                    targets=args.targets)
        lines += report_lines(results, cfg.eval_seed, cfg.config_hash())
    if args.baseline == "att-only":
        rows = scn.row_ids("all")
        results = pipeline.evaluate(None, scn, rows, tasks, cfg.eval_seed, cfg.logreg_reg,
                                    cfg.kmeans_restarts, baseline=True, targets=args.targets)
        lines += report_lines(results, cfg.eval_seed, cfg.config_hash(), method="att-only")
    if not lines:
        raise ValueError("nothing to evaluate: pass --embeddings and/or --baseline att-only")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_report(out / "report.jsonl", lines)
    print(report_table(load_report(out / "report.jsonl")))
    return 0


def cmd_bench(args) -> int:
    bundle = None
    if args.config:
        bundle = _load_bundle(load_run_config(args.config))
    sizes = tuple(int(s) for s in args.sizes.split(","))
    ks = tuple(int(s) for s in args.ks.split(","))
    by_size, by_k = scaling_benchmark(bundle, sizes, ks, args.fixed_size, args.fixed_k, args.seed,
                                      args.forward_prob, args.variant, args.dim, args.runs, args.repeats)
    lines = ["size\tk\tseconds"] + [f"{t.size}\t{t.k}\t{t.seconds:.6f}" for t in by_size + by_k]
    text = "\n".join(lines) + "\n"
    print(text, end="")
    _, _, r2_size = linear_fit([t.size for t in by_size], [t.seconds for t in by_size])
    _, _, r2_k = linear_fit([t.k for t in by_k], [t.seconds for t in by_k])
    print(f"# linear fit R^2: size {r2_size:.4f}, k {r2_k:.4f}", file=sys.stderr)
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "scaling.tsv").write_text(text, encoding="utf-8")
    return 0


def cmd_synth(args) -> int:
    bundle = planted_partition(num_nodes=args.nodes, num_blocks=args.blocks, num_features=args.features,
                               topic_share=args.topic_share, seed=args.seed)
    write_dataset(bundle, args.out_dir)
    out = Path(args.out_dir)
    cfg_path = out / "config.txt"
    if not cfg_path.exists():
        cfg_path.write_text("edges = edges.tsv\nfeatures = features.tsv\nlabels = labels.tsv\n", encoding="utf-8")
    print(f"wrote synthetic dataset ({args.nodes} nodes, {bundle.graph.num_edges} edges) to {out}",
          file=sys.stderr)
    return 0


def cmd_gradcheck(args) -> int:
    worst = 0.0
    for variant in ("gcn", "sage", "gin"):
        errs = [check_gradients(variant, (args.nodes, args.features, args.dim), LossParams(), seed=s,
                                num_layers=args.layers, final_activation=args.activation)
                for s in range(args.seeds)]
        print(f"{variant}\tmax_rel_error {max(errs):.3e}")
        worst = max(worst, max(errs))
    return 0 if worst < 1e-4 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="edgeless-gnn", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="split, build the kNN graph and train the encoder")
    _add_overrides(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="embed every node including the edgeless ones")
    _add_overrides(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--subset", choices=["all", "val", "test", "none"], default="all",
                   help="edgeless nodes to embed (default all = val + test)")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="link prediction, classification and clustering metrics")
    _add_overrides(p)
    p.add_argument("--split", required=True)
    p.add_argument("--embeddings", help="z_all.bin or z_all.txt written by infer")
    p.add_argument("--tasks", help="comma list of lp, nc, cd (default from config: lp,nc,cd)")
    p.add_argument("--baseline", choices=["att-only"], help="also score raw attributes")
    p.add_argument("--targets", choices=["test", "edgeless"], default="test",
                   help="nodes to score: test only, or all edgeless (val + test) nodes (default test)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench-scaling", help="forward-pass time against |V| and k")
    p.add_argument("--config", help="dataset config; a synthetic graph is generated when omitted")
    p.add_argument("--sizes", default=",".join(map(str, DEFAULT_SIZES)))
    p.add_argument("--ks", default=",".join(map(str, DEFAULT_KS)))
    p.add_argument("--fixed-size", type=int, default=2500, dest="fixed_size")
    p.add_argument("--fixed-k", type=int, default=3, dest="fixed_k")
    p.add_argument("--forward-prob", type=float, default=0.7, dest="forward_prob",
                   help="forest-fire forward burning probability (default 0.7)")
    p.add_argument("--variant", choices=["gcn", "sage", "gin"], default="sage")
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--runs", type=int, default=5, help="timed runs per point; the median is kept")
    p.add_argument("--repeats", type=int, default=10, help="forward passes per timed run")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("synth", help="write a planted-partition dataset")
    p.add_argument("--nodes", type=int, default=400)
    p.add_argument("--blocks", type=int, default=4)
    p.add_argument("--features", type=int, default=200)
    p.add_argument("--topic-share", type=float, default=0.5, dest="topic_share")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("gradcheck", help="compare backprop with finite differences")
    p.add_argument("--nodes", type=int, default=10)
    p.add_argument("--features", type=int, default=5)
    p.add_argument("--dim", type=int, default=3)
    p.add_argument("--layers", type=int, default=1)
    p.add_argument("--activation", choices=["identity", "relu"], default="identity")
    p.add_argument("--seeds", type=int, default=20)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (FileNotFoundError, FormatError, ValueError, DivergenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
