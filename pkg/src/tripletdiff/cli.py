"""Command-line driver: gen, train, infer, eval and ablate.

Exit codes are 0 on success, 1 on runtime failure and 2 on usage errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config
from .denoiser import TrainingError
from .joint import make_layout
from .metrics import EvalReport, ablation_report, evaluate, format_table, report_csv
from .pipeline import (ArtifactMismatch, axis_arms, cross_validate, guidance_for, load_model, predict_videos,
                       read_prediction, save_model, schedule_for, train_model, write_prediction)
from .synthetic import DatasetError, TaskSpec, export_dataset, generate_dataset, load_dataset

log = logging.getLogger("tripletdiff")

PRED_META = "predictions.json"


def _read_json(path: str) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def cmd_gen(args) -> int:
    spec = TaskSpec.from_dict(_read_json(args.spec)) if args.spec else TaskSpec()
    ds = generate_dataset(spec)
    export_dataset(ds, args.out)
    tax = ds.taxonomy
    labels = np.concatenate([v.labels for v in ds.videos])
    print(f"taxonomy: {tax.c_i} instruments, {tax.c_v} verbs, {tax.c_t} targets, {tax.c_ivt} triplets "
          f"(hash {tax.hash()[:12]})")
    print(f"videos: {len(ds.videos)} x {spec.video_length} frames, feature dim {spec.feature_dim}")
    print(f"label density: {labels.mean():.4f} per class, {labels.sum(1).mean():.3f} triplets per frame, "
          f"{(labels.sum(1) == 0).mean():.3f} empty frames")
    counts = labels.sum(0).astype(int)
    print(f"positives per triplet: min {counts.min()}, median {int(np.median(counts))}, max {counts.max()}")
    return 0


def _config(args) -> RunConfig:
    cfg = load_config(args.config)
    if getattr(args, "fold", None) is not None:
        if not 0 <= args.fold < cfg.folds:
            raise ValueError(f"fold {args.fold} outside [0, {cfg.folds})")
        cfg.fold = args.fold
    if getattr(args, "seed", None) is not None:
        cfg.seeds = [args.seed]
    return cfg


def cmd_train(args) -> int:
    cfg = _config(args)
    ds = load_dataset(args.data)
    layout = make_layout(cfg.layout, ds.taxonomy)
    seed = cfg.seeds[0]
    train_videos, _ = ds.split(cfg.fold, cfg.folds)
    log.info("training %s on fold %d (%d videos), seed %d", layout.name, cfg.fold, len(train_videos), seed)
    result = train_model(ds, train_videos, cfg, layout, seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_model(out, result.model, {
        "taxonomy_hash": ds.taxonomy.hash(), "layout": layout.name, "fold": cfg.fold, "folds": cfg.folds,
        "seed": seed, "causal": result.model.config.causal, "schedule": {"total_steps": cfg.schedule.total_steps,
                                                                          "eta": cfg.schedule.eta},
        "config": cfg.to_dict(),
    })
    with open(f"{out}.loss.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "loss"])
        for e, v in enumerate(result.epoch_loss):
            w.writerow([e, repr(v)])
    if result.epoch_loss:
        print(f"final loss {result.epoch_loss[-1]:.5f} after {len(result.epoch_loss)} epochs")
    return 0


def cmd_infer(args) -> int:
    ds = load_dataset(args.data)
    model, meta = load_model(args.ckpt, ds.taxonomy)
    layout = make_layout(meta["layout"], ds.taxonomy)
    cfg = RunConfig.from_dict(meta["config"])
    schedule = schedule_for(cfg, args.steps, args.eta)
    guidance = guidance_for(layout, ds.taxonomy, args.omega) if layout.has_components else None
    _, test_videos = ds.split(meta["fold"], meta["folds"])
    preds = predict_videos(model, test_videos, schedule, guidance, args.seed, meta["seed"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for vid, scores in preds.items():
        write_prediction(out / f"video_{vid:04d}.pred", scores, layout.name)
    (out / PRED_META).write_text(json.dumps({
        "taxonomy_hash": ds.taxonomy.hash(), "layout": layout.name, "fold": meta["fold"], "seed": meta["seed"],
        "steps": schedule.inference_steps, "omega": args.omega if guidance else 0.0, "eta": schedule.eta,
        "videos": sorted(preds),
    }, indent=1), encoding="utf-8")
    print(f"wrote {len(preds)} prediction files to {out}")
    return 0


def cmd_eval(args) -> int:
    ds = load_dataset(args.data)
    pred_dir = Path(args.pred)
    meta = _read_json(pred_dir / PRED_META)
    if meta["taxonomy_hash"] != ds.taxonomy.hash():
        raise ArtifactMismatch("predictions were made on a different taxonomy")
    layout = make_layout(meta["layout"], ds.taxonomy)
    by_id = {v.id: v for v in ds.videos}
    preds, videos = {}, []
    for vid in meta["videos"]:
        scores, tag = read_prediction(pred_dir / f"video_{vid:04d}.pred")
        if tag != layout.name:
            raise ArtifactMismatch(f"video {vid}: prediction layout {tag} != {layout.name}")
        preds[vid] = scores
        videos.append(by_id[vid])
    report = EvalReport([evaluate(preds, videos, ds.taxonomy, layout, meta["fold"], meta["seed"])])
    runs = {layout.name: report}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    text = format_table(runs)
    (out / "report.txt").write_text(text, encoding="utf-8")
    (out / "report.csv").write_text(report_csv(runs), encoding="utf-8")
    print(text, end="")
    return 0


def cmd_ablate(args) -> int:
    cfg = _config(args)
    ds = load_dataset(args.data)
    arms = axis_arms(args.axis, cfg)
    runs = cross_validate(ds, cfg, arms, progress=log.info)
    text, table_csv = ablation_report(runs, args.axis, [a.name for a in arms])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text(text, encoding="utf-8")
    (out / "report.csv").write_text(table_csv, encoding="utf-8")
    print(text, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tripletdiff", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic dataset")
    g.add_argument("--spec", help="TaskSpec JSON (defaults when omitted)")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train a denoiser on one fold")
    t.add_argument("--data", required=True)
    t.add_argument("--config")
    t.add_argument("--out", required=True)
    t.add_argument("--fold", type=int)
    t.add_argument("--seed", type=int)
    t.set_defaults(func=cmd_train)

    i = sub.add_parser("infer", help="sample predictions for the held-out fold")
    i.add_argument("--data", required=True)
    i.add_argument("--ckpt", required=True)
    i.add_argument("--out", required=True)
    i.add_argument("--steps", type=int, default=8)
    i.add_argument("--omega", type=float, default=1.0)
    i.add_argument("--eta", type=float)
    i.add_argument("--seed", type=int, default=0)
    i.set_defaults(func=cmd_infer)

    e = sub.add_parser("eval", help="score predictions")
    e.add_argument("--data", required=True)
    e.add_argument("--pred", required=True)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("ablate", help="cross-validated ablation sweep")
    a.add_argument("--data", required=True)
    a.add_argument("--config")
    a.add_argument("--axis", required=True, choices=["layout", "omega", "steps", "causality"])
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_ablate)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        return args.func(args)
    except (DatasetError, ArtifactMismatch, TrainingError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
