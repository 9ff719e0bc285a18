"""Command-line front end: ``hypersparse run | gradcheck | compare | analyze``.

Exit codes: 0 success, 1 check failure, 2 config error, 3 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import art
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, load_config
from .errors import ConfigError, FormatError
from .gradcheck import GRAD_RTOL, run_gradcheck
from .metrics import AnnotatorLabels, compression_position, hardness_score, individual_accuracies
from .pruning import weights_per_layer
from .regularization import RegKind, hypersparse_grad
from . import reports

log = logging.getLogger("hypersparse")

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3

METHODS = {
    "art_hs": RegKind.HYPERSPARSE,
    "art_l1": RegKind.L1,
    "art_l2": RegKind.L2,
    "oneshot": None,
}


def _override(cfg: RunConfig, seed=None, out=None) -> RunConfig:
    if seed is not None:
        cfg = replace(cfg, pipeline=replace(cfg.pipeline, seed=seed))
    if out is not None:
        cfg = replace(cfg, output_dir=Path(out))
    return cfg


def execute(cfg: RunConfig, method: str = None, splits=None, w_pre=None) -> art.RunResult:
    splits = splits or cfg.splits()
    spec = cfg.model_spec(splits.train)
    method = method or _method_for(cfg.pipeline.reg.kind)
    kind = METHODS[method]
    if kind is None:
        return art.oneshot_baseline(spec, splits, cfg.pipeline, w_pre=w_pre)
    return art.run_art(spec, splits, art.with_kind(cfg.pipeline, kind), w_pre=w_pre)


def _method_for(kind: RegKind) -> str:
    return {v: k for k, v in METHODS.items() if v is not None}[kind]


def write_run_artifacts(out: Path, result: art.RunResult, splits, cfg: RunConfig) -> None:
    reports.ensure_dir(out)
    reports.write_metrics(out / "metrics.csv", result.log)
    reports.write_weights_per_layer(out / "weights_per_layer.csv",
                                    weights_per_layer(result.params, result.mask))
    train = splits.train
    rows = reports.cp_rows("pretrain", result.log.dense_flags, train.ids, train.labels)
    rows += reports.cp_rows("regularize", result.log.pruned_flags, train.ids, train.labels)
    reports.write_cp(out / "cp.csv", rows)
    save_checkpoint(out / "final.ckpt", result.params, result.mask)
    np.savez_compressed(
        out / "correctness.npz",
        dense=np.asarray(result.log.dense_flags, dtype=bool).reshape(-1, len(train)),
        pruned=np.asarray(result.log.pruned_flags, dtype=bool).reshape(-1, len(train)),
        ids=train.ids, labels=train.labels,
    )
    summary = {
        "method": result.method,
        "seed": cfg.seed,
        "pruning_rate": cfg.pipeline.kappa,
        "test_acc": result.test_acc,
        "val_acc": result.val_acc,
        "finetune_start_val_acc": result.finetune_start_val_acc,
        "reg_epochs": result.reg_epochs,
    }
    if result.reg is not None:
        summary.update(
            truncated=result.reg.truncated,
            best_index=result.reg.best_index,
            best_smoothed_pruned_rating=result.reg.best_rating,
            dense_rating_at_exit=result.reg.dense_at_exit,
        )
    with open(out / "summary.json", "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)


def cmd_run(config_path, seed=None, out=None) -> int:
    cfg = _override(load_config(config_path), seed, out)
    splits = cfg.splits()
    result = execute(cfg, splits=splits)
    write_run_artifacts(cfg.output_dir, result, splits, cfg)
    log.info("%s: test acc %.4f after %d regularized epochs -> %s",
             result.method, result.test_acc, result.reg_epochs, cfg.output_dir)
    return EXIT_OK


def cmd_gradcheck(seed=0, n=100, perturb=0.0) -> int:
    if n < 1:
        print("gradcheck: --n must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    grad_fn = hypersparse_grad
    if perturb:
        def grad_fn(w, ctx):
            return hypersparse_grad(w, ctx) * (1.0 + perturb)
    rep = run_gradcheck(seed, n, grad_fn)
    print(f"gradcheck: n={rep.n} max_rel_error={rep.max_rel_error:.3e} (tol {GRAD_RTOL:g}) "
          f"root_residual={rep.max_root_residual:.3e} value_ratio={rep.max_value_ratio:.3e}")
    if not rep.ok:
        print(f"gradcheck: FAILED, worst instance #{rep.worst_instance}", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def _compare_seed(cfg: RunConfig, methods, seed):
    cfg = _override(cfg, seed=seed)
    splits = cfg.splits()
    spec = cfg.model_spec(splits.train)
    w_pre = art.pretrain(spec, splits, cfg.pipeline, art.MetricLog())
    rows = []
    for m in methods:
        res = execute(cfg, m, splits=splits, w_pre=w_pre)
        reg = res.log.phase(art.Phase.REGULARIZE)
        rows.append({
            "method": m,
            "seed": seed,
            "test_acc": res.test_acc,
            "val_acc": res.val_acc,
            "reg_epochs": res.reg_epochs,
            "truncated": bool(res.reg.truncated) if res.reg else False,
            "inter_first": reg[0].mask_intersection if reg else float("nan"),
            "inter_before_exit": reg[-2].mask_intersection if len(reg) > 1 else float("nan"),
            "inter_final": reg[-1].mask_intersection if reg else float("nan"),
        })
    return rows


def compare(cfg: RunConfig, methods, jobs: int = 1):
    """All (method, seed) results, each seed sharing data, W_pre and batch order across methods."""
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            chunks = list(ex.map(_compare_seed, [cfg] * len(cfg.seeds), [methods] * len(cfg.seeds),
                                 cfg.seeds))
    else:
        chunks = [_compare_seed(cfg, methods, s) for s in cfg.seeds]
    return [row for chunk in chunks for row in chunk]


def write_comparison(out: Path, rows, methods, seeds) -> None:
    cols = (["method"] + [f"acc_seed_{s}" for s in seeds] + ["acc_median"]
            + [f"epochs_seed_{s}" for s in seeds] + ["epochs_median"])
    table = []
    for m in methods:
        by_seed = {r["seed"]: r for r in rows if r["method"] == m}
        accs = [by_seed[s]["test_acc"] for s in seeds]
        eps = [by_seed[s]["reg_epochs"] for s in seeds]
        table.append([m, *accs, float(np.median(accs)), *eps, float(np.median(eps))])
    reports.write_csv(out / "comparison.csv", cols, table)
    run_cols = list(rows[0].keys()) if rows else []
    reports.write_csv(out / "comparison_runs.csv", run_cols, ([r[c] for c in run_cols] for r in rows))


def parse_methods(text):
    methods = [m.strip() for m in text.split(",") if m.strip()]
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ConfigError("methods", f"unknown method(s) {unknown}; choose from {sorted(METHODS)}")
    if len(set(methods)) < 2:
        raise ConfigError("methods", "compare needs at least two distinct methods")
    return list(dict.fromkeys(methods))


def cmd_compare(config_path, methods, out=None, jobs=1) -> int:
    methods = parse_methods(methods) if isinstance(methods, str) else parse_methods(",".join(methods))
    cfg = _override(load_config(config_path), out=out)
    rows = compare(cfg, methods, jobs)
    reports.ensure_dir(cfg.output_dir)
    write_comparison(cfg.output_dir, rows, methods, cfg.seeds)
    return EXIT_OK


def read_annotations(path):
    """CSV with columns sample_id,true_label,label1,label2,label3."""
    recs = {}
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            rec = AnnotatorLabels(int(row["sample_id"]), row["true_label"],
                                  (row["label1"], row["label2"], row["label3"]))
            recs[rec.sample_id] = hardness_score(rec)
    return recs


def cmd_analyze(run_dir, annotations=None) -> int:
    run_dir = Path(run_dir)
    params, mask = load_checkpoint(run_dir / "final.ckpt")
    if mask is None:
        raise FormatError(f"{run_dir / 'final.ckpt'} has no mask section")
    reports.write_weights_per_layer(run_dir / "weights_per_layer.csv", weights_per_layer(params, mask))
    with np.load(run_dir / "correctness.npz") as z:
        logs = {"pretrain": z["dense"], "regularize": z["pruned"]}
        ids, labels = z["ids"], z["labels"]
    hard = None
    if annotations:
        scores = read_annotations(annotations)
        hard = np.array([scores.get(int(i), -1) for i in ids])
    rows = []
    for window, flags in logs.items():
        if len(flags) == 0:
            continue
        rows += reports.cp_rows(window, flags, ids, labels)
        cp = compression_position(individual_accuracies(flags), ids)
        reports.write_cp_by_group(run_dir / f"cp_by_group_{window}.csv", cp, labels, hard)
    reports.write_cp(run_dir / "cp.csv", rows)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hypersparse", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="pre-train, regularize, fine-tune; write CSVs and checkpoint")
    r.add_argument("--config", required=True)
    r.add_argument("--seed", type=int)
    r.add_argument("--out")

    g = sub.add_parser("gradcheck", help="finite-difference check of the HyperSparse gradient")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--n", type=int, default=100)
    g.add_argument("--perturb", type=float, default=0.0, help=argparse.SUPPRESS)

    c = sub.add_parser("compare", help="paired-seed comparison of methods")
    c.add_argument("--config", required=True)
    c.add_argument("--methods", default="art_hs,art_l1,art_l2,oneshot")
    c.add_argument("--out")
    c.add_argument("--jobs", type=int, default=1)

    a = sub.add_parser("analyze", help="recompute analysis CSVs from a run directory")
    a.add_argument("--out", required=True, help="run directory written by `run`")
    a.add_argument("--annotations", help="CSV: sample_id,true_label,label1,label2,label3")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            return cmd_run(args.config, args.seed, args.out)
        if args.command == "gradcheck":
            return cmd_gradcheck(args.seed, args.n, args.perturb)
        if args.command == "compare":
            return cmd_compare(args.config, args.methods, args.out, args.jobs)
        return cmd_analyze(args.out, args.annotations)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, FormatError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
