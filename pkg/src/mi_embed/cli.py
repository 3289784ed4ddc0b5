"""mi-embed command line interface.

Subcommands cover the full pipeline: gen-data, train-victim, train-shadows,
train-attack, infer, baseline-encodermi, experiment, and report. The
MI_EMBED_WORKERS environment variable bounds the shadow worker pool.
"""

from __future__ import annotations

import argparse
import csv
import json
import shutil
import sys
from pathlib import Path

from . import __version__
from ._validation import derive_seed
from .attack import infer_user, load_attack_model, save_attack_model, train_attack
from .baseline import fit_threshold_on_shadows, resolve_spec, score_user, user_verdict
from .config import default_config, load_config
from .data import (
    apply_manifest,
    generate_synthetic,
    load_csv,
    load_split_manifest,
    save_csv,
    save_split_manifest,
)
from .embedding import load_encoder, save_encoder, train_encoder
from .exceptions import MiEmbedError, SizingError
from .experiment import run_experiment
from .report import parse_json, render
from .shadows import (
    ShadowConfig,
    build_shadow_splits,
    run_shadows,
    write_attack_dataset,
    read_attack_dataset,
)

_FEATURE_FLAG = {"c": "c_only", "p": "p_only", "both": "both"}


def _parse_samples_arg(raw: str):
    if ":" in raw:
        low, high = raw.split(":", 1)
        return (int(low), int(high))
    return int(raw)


def _cmd_gen_data(args) -> int:
    clusters = generate_synthetic(
        n_users=args.n_users,
        samples_per_user=_parse_samples_arg(args.samples_per_user),
        dim=args.dim,
        cluster_spread=args.cluster_spread,
        user_separation=args.user_separation,
        rng_seed=args.seed,
    )
    save_csv(clusters, args.out)
    print(f"wrote {sum(c.n_samples for c in clusters)} samples to {args.out}")
    return 0


def _victim_config(args):
    cfg = load_config(args.config).victim if args.config else default_config().victim
    if args.seed is not None:
        from dataclasses import replace

        cfg = replace(cfg, seed=args.seed)
    return cfg


def _cmd_train_victim(args) -> int:
    clusters = load_csv(args.data)
    cfg = _victim_config(args)
    encoder = train_encoder(
        clusters, cfg, encoder_id=f"victim_seed{cfg.seed}"
    )
    save_encoder(encoder, args.out)
    loss = encoder.final_epoch_loss
    print(
        f"trained victim on {len(clusters)} users; "
        f"final epoch loss {loss if loss is not None else 'n/a'}; saved {args.out}"
    )
    return 0


def _cmd_train_shadows(args) -> int:
    pool = load_csv(args.pool)
    exp = load_config(args.config) if args.config else default_config()
    shadow_cfg = ShadowConfig(
        n_shadows=exp.shadows.n_shadows,
        members_per_shadow=exp.shadows.members_per_shadow,
        nonmembers_per_shadow=exp.shadows.nonmembers_per_shadow,
        within_user_split=exp.shadows.within_user_split,
        encoder=exp.victim,
        k=exp.k,
        master_seed=args.seed if args.seed is not None else exp.base_seed,
    )
    splits = build_shadow_splits(pool, shadow_cfg)
    encoders, dataset = run_shadows(splits, shadow_cfg)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, (encoder, split) in enumerate(zip(encoders, splits)):
        save_encoder(encoder, out_dir / f"shadow_{i:03d}.json")
        save_split_manifest(split, out_dir / f"shadow_{i:03d}.split.json")
    write_attack_dataset(dataset, out_dir / "attack_dataset.csv")
    # Keep a copy of the pool so the directory is self-contained for the
    # baseline's threshold fitting.
    shutil.copyfile(args.pool, out_dir / "pool.csv")
    print(f"trained {len(encoders)} shadows; {len(dataset)} attack rows in {out_dir}")
    return 0


def _cmd_train_attack(args) -> int:
    dataset = read_attack_dataset(args.attack_dataset)
    model = train_attack(
        dataset, feature_mode=_FEATURE_FLAG[args.features], seed=args.seed
    )
    save_attack_model(model, args.out)
    print(
        f"trained attack model on {len(dataset)} rows "
        f"(mode {model.feature_mode}); saved {args.out}"
    )
    return 0


def _cmd_infer(args) -> int:
    model = load_attack_model(args.attack_model)
    victim = load_encoder(args.victim)
    clusters = load_csv(args.data)
    with open(args.report, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["user_id", "verdict", "score"])
        for cluster in clusters:
            verdict, score = infer_user(
                model, victim, cluster, args.k, seed=derive_seed(args.seed, cluster.user_id)
            )
            writer.writerow([cluster.user_id, verdict, repr(score)])
    print(f"wrote verdicts for {len(clusters)} users to {args.report}")
    return 0


def _cmd_baseline(args) -> int:
    victim = load_encoder(args.victim)
    clusters = load_csv(args.data)
    mode = "full_knowledge" if args.mode == "full" else "unknown_augmentations"
    spec = resolve_spec(mode)

    shadow_dir = Path(args.shadow_dir)
    pool_csv = shadow_dir / "pool.csv"
    if not pool_csv.exists():
        raise SizingError(f"{shadow_dir} has no pool.csv (run train-shadows first)")
    pool = load_csv(pool_csv)
    encoders = []
    splits = []
    for ckpt in sorted(shadow_dir.glob("shadow_*.json")):
        if ckpt.name.endswith(".split.json"):
            continue
        encoders.append(load_encoder(ckpt))
        manifest = load_split_manifest(shadow_dir / f"{ckpt.stem}.split.json")
        splits.append(apply_manifest(pool, manifest))
    if not encoders:
        raise SizingError(f"{shadow_dir} holds no shadow checkpoints")

    threshold = fit_threshold_on_shadows(encoders, splits, spec, seed=args.seed)
    verdicts = []
    for cluster in clusters:
        scores = score_user(victim, cluster, spec, seed=derive_seed(args.seed, "eval"))
        votes = int((scores > threshold).sum())
        verdict = "member" if votes * 2 > len(scores) else "nonmember"
        verdicts.append(
            {
                "user_id": cluster.user_id,
                "verdict": verdict,
                "member_votes": votes,
                "total_votes": len(scores),
            }
        )
    doc = {
        "knowledge_mode": mode,
        "threshold": threshold,
        "n_shadows": len(encoders),
        "verdicts": verdicts,
    }
    with open(args.report, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(
        f"baseline ({mode}) threshold {threshold:.4f}; "
        f"wrote verdicts for {len(clusters)} users to {args.report}"
    )
    return 0


def _cmd_experiment(args) -> int:
    cfg = load_config(args.config) if args.config else default_config()
    if args.seed is not None:
        from dataclasses import replace

        cfg = replace(cfg, base_seed=args.seed)
    report = run_experiment(cfg)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(render(report, "json"), encoding="utf-8")
    (out_dir / "report.txt").write_text(render(report, "table"), encoding="utf-8")
    print(render(report, "table"))
    if report.errors:
        print(f"{len(report.errors)} repeat(s) aborted", file=sys.stderr)
        return 1
    return 0


def _cmd_report(args) -> int:
    report = parse_json(Path(args.report).read_text(encoding="utf-8"))
    rendered = render(report, args.format)
    if args.out:
        Path(args.out).write_text(rendered, encoding="utf-8")
    else:
        print(rendered, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mi-embed",
        description="User-level membership inference attacks on metric embeddings.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate synthetic user clusters")
    p.add_argument("--out", required=True)
    p.add_argument("--n-users", type=int, default=200)
    p.add_argument(
        "--samples-per-user", default="20", help="fixed COUNT or LOW:HIGH range"
    )
    p.add_argument("--dim", type=int, default=20)
    p.add_argument("--cluster-spread", type=float, default=1.0)
    p.add_argument("--user-separation", type=float, default=3.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("train-victim", help="train the victim encoder on a CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train_victim)

    p = sub.add_parser("train-shadows", help="train shadows and emit attack rows")
    p.add_argument("--pool", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_train_shadows)

    p = sub.add_parser("train-attack", help="fit the membership classifier")
    p.add_argument("--attack-dataset", required=True)
    p.add_argument("--features", choices=sorted(_FEATURE_FLAG), default="both")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train_attack)

    p = sub.add_parser("infer", help="per-user membership verdicts")
    p.add_argument("--attack-model", required=True)
    p.add_argument("--victim", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", required=True)
    p.set_defaults(func=_cmd_infer)

    p = sub.add_parser(
        "baseline-encodermi", help="augmentation-voting baseline attack"
    )
    p.add_argument("--victim", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--mode", choices=("full", "unknown"), default="unknown")
    p.add_argument("--shadow-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", required=True)
    p.set_defaults(func=_cmd_baseline)

    p = sub.add_parser("experiment", help="run a full experiment grid")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("report", help="render a stored report")
    p.add_argument("--report", required=True)
    p.add_argument("--format", choices=("json", "table"), default="table")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MiEmbedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
