"""Command-line surface: generate / train / infer / eval / ablate.

Configuration precedence: command-line flags > key=value config file >
preset > built-in defaults. All randomness flows from --seed. The
--threads flag caps BLAS worker counts (set before numpy loads) without
changing results.

Exit codes: 0 success, 1 runtime/pipeline failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import os
import sys

PRESETS = {
    "coarse": {"tau_u": 0.3, "learning_rate": 0.01},
    "fine": {"tau_u": 0.25, "learning_rate": 0.05},
}

TRAIN_DEFAULTS = {
    "epochs": 30,
    "seed": 0,
    "kernel": "knn",
    "k": 8,
    "alpha": 0.5,
    "delta": 0.9,
    "sigma": 0.1,
    "max_neighbors": 1000,
    "tau_u": 0.3,
    "tau_s": 0.07,
    "lam": 0.35,
    "learning_rate": 0.01,
    "weight_decay": 5e-5,
    "momentum": 0.9,
    "batch_size": 128,
    "hidden_dim": 2048,
    "out_dim": 768,
    "num_blocks": 3,
    "view_noise_scale": 0.1,
    "k_search_max": 1000,
    "k_search_min": 1,
    "t_max": 10,
}


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {value}")
    return value


def _parse_config_file(path: str) -> dict:
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}: bad config line {line!r}")
            key, _, val = line.partition("=")
            values[key.strip()] = val.strip()
    return values


def _resolve(args, key: str, cast=None):
    """flags > config file > preset > built-in default."""
    cli_value = getattr(args, key, None)
    if cli_value is not None:
        return cli_value
    file_values = getattr(args, "_config_values", {})
    if key in file_values:
        raw = file_values[key]
        return cast(raw) if cast else raw
    preset = getattr(args, "preset", None)
    if preset and key in PRESETS[preset]:
        return PRESETS[preset][key]
    return TRAIN_DEFAULTS[key]


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epochs", type=_positive_int)
    p.add_argument("--seed", type=int)
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--kernel", choices=["knn", "uniform", "gaussian"])
    p.add_argument("--k", type=_positive_int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--max-neighbors", dest="max_neighbors", type=_positive_int)
    p.add_argument("--tau-u", dest="tau_u", type=float)
    p.add_argument("--tau-s", dest="tau_s", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--lr", dest="learning_rate", type=float)
    p.add_argument("--weight-decay", dest="weight_decay", type=float)
    p.add_argument("--momentum", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=_positive_int)
    p.add_argument("--hidden-dim", dest="hidden_dim", type=_positive_int)
    p.add_argument("--out-dim", dest="out_dim", type=_positive_int)
    p.add_argument("--num-blocks", dest="num_blocks", type=_positive_int)
    p.add_argument("--view-noise-scale", dest="view_noise_scale", type=float)
    p.add_argument("--k-search-max", dest="k_search_max", type=_positive_int)
    p.add_argument("--k-search-min", dest="k_search_min", type=_positive_int)
    p.add_argument("--use-gt-k", dest="use_gt_k", action="store_true", default=False)
    p.add_argument("--gt-k", dest="gt_k", type=_positive_int)
    p.add_argument("--view-a", dest="view_a", help="paired-view EMB1 bank (view a)")
    p.add_argument("--view-b", dest="view_b", help="paired-view EMB1 bank (view b)")


def _resolved_train_settings(args) -> dict:
    if getattr(args, "config", None):
        args._config_values = _parse_config_file(args.config)
    else:
        args._config_values = {}
    casts = {k: type(v) for k, v in TRAIN_DEFAULTS.items()}
    settings = {key: _resolve(args, key, casts[key]) for key in TRAIN_DEFAULTS}
    settings["use_gt_k"] = bool(getattr(args, "use_gt_k", False))
    settings["gt_k"] = getattr(args, "gt_k", None)
    settings["preset"] = getattr(args, "preset", None) or "none"
    return settings


def _build_train_config(settings: dict, in_dim: int):
    from .encoder import HeadConfig, OptimizerConfig
    from .losses import LossConfig
    from .meanshift import KernelConfig
    from .trainer import TrainConfig

    return TrainConfig(
        epochs=settings["epochs"],
        kernel=KernelConfig(
            kind=settings["kernel"],
            k=settings["k"],
            alpha=settings["alpha"],
            delta=settings["delta"],
            sigma=settings["sigma"],
            max_neighbors=settings["max_neighbors"],
        ),
        loss=LossConfig(
            tau_u=settings["tau_u"], tau_s=settings["tau_s"], lam=settings["lam"]
        ),
        optimizer=OptimizerConfig(
            learning_rate=settings["learning_rate"],
            weight_decay=settings["weight_decay"],
            momentum=settings["momentum"],
            batch_size=settings["batch_size"],
        ),
        head=HeadConfig(
            in_dim=in_dim,
            hidden_dim=settings["hidden_dim"],
            out_dim=settings["out_dim"],
            num_blocks=settings["num_blocks"],
            init_seed=settings["seed"],
        ),
        view_noise_scale=settings["view_noise_scale"],
        k_search_max=settings["k_search_max"],
        k_search_min=settings["k_search_min"],
        use_gt_k_for_validation=settings["use_gt_k"],
        gt_k=settings["gt_k"],
        seed=settings["seed"],
    )


def cmd_generate(args) -> int:
    from .data import SyntheticConfig, generate_synthetic, save_embedding_bank, save_manifest

    cfg = SyntheticConfig(
        num_classes=args.classes,
        dim=args.dim,
        per_class=args.per_class,
        center_max_cosine=args.center_max_cosine,
        noise_scale=args.noise_scale,
        known_fraction=args.known_fraction,
        labeled_fraction=args.labeled_fraction,
        val_fraction=args.val_fraction,
        seed=args.seed,
    )
    bank, manifest = generate_synthetic(cfg)
    os.makedirs(args.out, exist_ok=True)
    save_embedding_bank(bank, os.path.join(args.out, "embeddings.emb1"))
    save_manifest(manifest, os.path.join(args.out, "manifest.csv"))
    print(f"items={bank.count} dim={bank.dim} classes={cfg.num_classes}")
    print(
        f"labeled={manifest.labeled_indices().size} "
        f"unlabeled={manifest.unlabeled_indices().size} "
        f"validation={manifest.validation_indices().size}"
    )
    return 0


def _load_paired_views(args, manifest_len: int):
    from .data import load_embedding_bank

    if bool(args.view_a) != bool(args.view_b):
        raise ValueError("--view-a and --view-b must be given together")
    if not args.view_a:
        return None
    bank_a = load_embedding_bank(args.view_a)
    bank_b = load_embedding_bank(args.view_b)
    if bank_a.count != manifest_len or bank_b.count != manifest_len:
        raise ValueError("paired-view banks must cover every manifest item")
    return bank_a, bank_b


def cmd_train(args) -> int:
    from .data import load_embedding_bank, load_manifest
    from .encoder import save_head
    from .trainer import fit

    settings = _resolved_train_settings(args)
    bank = load_embedding_bank(args.embeddings)
    manifest = load_manifest(args.manifest)
    if bank.count != len(manifest):
        raise ValueError(
            f"bank has {bank.count} rows but manifest has {len(manifest)} items"
        )
    paired = _load_paired_views(args, len(manifest))
    view = manifest.training_view()
    cfg = _build_train_config(settings, in_dim=bank.dim)
    result = fit(bank.vectors, view, cfg, paired_views=paired)

    os.makedirs(args.out, exist_ok=True)
    ckpt = os.path.join(args.out, "checkpoint.cmsh")
    save_head(result.head, ckpt, estimated_k=result.estimated_k)
    log_path = os.path.join(args.out, "train_log.csv")
    with open(log_path, "w", encoding="utf-8") as fh:
        for key in sorted(settings):
            fh.write(f"# {key}={settings[key]}\n")
        fh.write(result.log.to_text())
    print(f"estimated_k={result.estimated_k}")
    print(f"best_epoch={result.best_epoch} best_val_acc={result.best_val_accuracy:.6f}")
    print(f"checkpoint={ckpt}")
    print(f"log={log_path}")
    return 0


def cmd_infer(args) -> int:
    from .clustering import save_clustering
    from .data import load_embedding_bank, load_manifest
    from .encoder import load_head
    from .meanshift import KernelConfig
    from .trainer import InferenceConfig, final_inference

    bank = load_embedding_bank(args.embeddings)
    manifest = load_manifest(args.manifest)
    if bank.count != len(manifest):
        raise ValueError(
            f"bank has {bank.count} rows but manifest has {len(manifest)} items"
        )
    head, stored_k = load_head(args.checkpoint)
    k = args.gt_k if args.gt_k is not None else stored_k
    if k < 1:
        raise ValueError("checkpoint stores no estimated K; pass --gt-k")
    kernel = KernelConfig(
        kind=args.kernel or "knn",
        k=args.k or 8,
        alpha=args.alpha if args.alpha is not None else 0.5,
        delta=args.delta if args.delta is not None else 0.9,
        sigma=args.sigma if args.sigma is not None else 0.1,
        max_neighbors=args.max_neighbors or 1000,
    )
    inf = InferenceConfig(t_max=args.t_max, accuracy_scope=args.scope)
    view = manifest.training_view()
    outcome = final_inference(head, bank.vectors, view, k, inf, kernel)

    os.makedirs(args.out, exist_ok=True)
    assignments = os.path.join(args.out, "assignments.csv")
    save_clustering(outcome.result, assignments)
    meta = os.path.join(args.out, "inference.txt")
    with open(meta, "w", encoding="utf-8") as fh:
        fh.write(f"k={k}\n")
        fh.write(f"iterations_used={outcome.iterations_used}\n")
        fh.write(f"returned_iteration={outcome.returned_iteration}\n")
        fh.write(f"aborted_degenerate={int(outcome.aborted_degenerate)}\n")
    print(f"k={k} iterations_used={outcome.iterations_used}")
    print(f"assignments={assignments}")
    return 0


def cmd_eval(args) -> int:
    from .clustering import load_clustering
    from .data import load_manifest
    from .evaluation import gcd_accuracy

    pred = load_clustering(args.assignments)
    manifest = load_manifest(args.manifest)
    report = gcd_accuracy(pred, manifest)
    print(report.machine_line())
    print(report.text_block())
    return 0


ABLATE_AXES = {"k": int, "alpha": float, "lambda": float, "kernel": str}


def cmd_ablate(args) -> int:
    from .data import load_embedding_bank, load_manifest
    from .evaluation import gcd_accuracy
    from .trainer import InferenceConfig, final_inference, fit

    if args.axis not in ABLATE_AXES:
        raise ValueError(f"unknown axis {args.axis!r}")
    cast = ABLATE_AXES[args.axis]
    values = [cast(v) for v in args.values.split(",") if v]
    if not values:
        raise ValueError("no sweep values given")

    settings = _resolved_train_settings(args)
    bank = load_embedding_bank(args.embeddings)
    manifest = load_manifest(args.manifest)
    view = manifest.training_view()

    header = f"{args.axis:>10} {'all':>7} {'old':>7} {'novel':>7} {'est_k':>6} {'iters':>6}"
    lines = [header]
    for value in values:
        point = dict(settings)
        point["lam" if args.axis == "lambda" else args.axis] = value
        cfg = _build_train_config(point, in_dim=bank.dim)
        result = fit(bank.vectors, view, cfg)
        inf = InferenceConfig(t_max=point["t_max"])
        outcome = final_inference(
            result.head, bank.vectors, view, result.estimated_k, inf, cfg.kernel
        )
        report = gcd_accuracy(outcome.result, manifest)
        lines.append(
            f"{value!s:>10} {report.all:7.3f} {report.old:7.3f} {report.novel:7.3f} "
            f"{result.estimated_k:6d} {outcome.iterations_used:6d}"
        )
    table = "\n".join(lines)
    print(table)
    if args.out:
        os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(table + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cmshift",
        description="Contrastive mean-shift learning over precomputed feature banks",
    )
    parser.add_argument("--threads", type=_positive_int, help="cap BLAS worker threads")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic EMB1 bank and manifest")
    g.add_argument("--classes", type=_positive_int, required=True)
    g.add_argument("--dim", type=_positive_int, required=True)
    g.add_argument("--per-class", dest="per_class", type=_positive_int, required=True)
    g.add_argument("--center-max-cosine", dest="center_max_cosine", type=float, default=0.2)
    g.add_argument("--noise-scale", dest="noise_scale", type=float, default=0.1)
    g.add_argument("--known-fraction", dest="known_fraction", type=float, default=0.5)
    g.add_argument("--labeled-fraction", dest="labeled_fraction", type=float, default=0.5)
    g.add_argument("--val-fraction", dest="val_fraction", type=float, default=0.1)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train the projection head and estimate K")
    t.add_argument("--embeddings", required=True)
    t.add_argument("--manifest", required=True)
    t.add_argument("--out", required=True)
    _add_train_flags(t)
    t.set_defaults(func=cmd_train)

    i = sub.add_parser("infer", help="iterative mean-shift clustering inference")
    i.add_argument("--embeddings", required=True)
    i.add_argument("--manifest", required=True)
    i.add_argument("--checkpoint", required=True)
    i.add_argument("--out", required=True)
    i.add_argument("--gt-k", dest="gt_k", type=_positive_int)
    i.add_argument("--t-max", dest="t_max", type=_positive_int, default=10)
    i.add_argument("--kernel", choices=["knn", "uniform", "gaussian"])
    i.add_argument("--k", type=_positive_int)
    i.add_argument("--alpha", type=float)
    i.add_argument("--delta", type=float)
    i.add_argument("--sigma", type=float)
    i.add_argument("--max-neighbors", dest="max_neighbors", type=_positive_int)
    i.add_argument(
        "--scope",
        choices=["labeled", "labeled-validation"],
        default="labeled",
        help="items scoring the early-stopping accuracy",
    )
    i.set_defaults(func=cmd_infer)

    e = sub.add_parser("eval", help="score an assignment file against a manifest")
    e.add_argument("--assignments", required=True)
    e.add_argument("--manifest", required=True)
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("ablate", help="sweep one axis, re-running train+infer+eval")
    a.add_argument("--embeddings", required=True)
    a.add_argument("--manifest", required=True)
    a.add_argument("--axis", required=True, choices=sorted(ABLATE_AXES))
    a.add_argument("--values", required=True, help="comma-separated sweep values")
    a.add_argument("--out", help="optional path for the table")
    _add_train_flags(a)
    a.set_defaults(func=cmd_ablate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads is not None:
        for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, str(args.threads))
    from .errors import CmsError

    try:
        return args.func(args)
    except (CmsError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
