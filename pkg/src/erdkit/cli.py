"""Batch experiment driver.

Every command takes a JSON config (or a shipped preset name) plus an output
directory, runs deterministically from the config's seed, writes the exact
resolved config next to its outputs, and emits CSV/JSON plus rendered
figures. Exit codes: 0 success, 1 validation error, 2 numeric failure.

Subcommands: gen | pretrain | erd | baseline | eval | sweep | propcheck.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import baselines, plots
from .data import (ClusterableSpec, check_generated, generate_clusterable,
                   load_bundle, make_2d_ssnd_source, make_ssnd_split,
                   random_unit_centers, save_bundle)
from .ensemble import (erd_fit, grid_eval, learning_curve_rows, load_ensemble,
                       save_ensemble, score_members, write_grid_csv,
                       write_learning_curves)
from .errors import NumericFailure, ValidationError
from .metrics import roc, threshold_for_fpr, write_roc_csv
from .nnet import (MlpClassifier, TrainConfig, fit_early_stopped,
                   load_checkpoint, save_checkpoint)
from .presets import preset_names, resolve_config
from .verifier import run_propcheck

SCORERS = ("erd_tdis", "erd_entropy", "vanilla", "vanilla_tdis", "binary")


def _dump_json(obj, path):
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _prepare_outdir(config, outdir):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    _dump_json(config, outdir / "config.json")
    return outdir


def _train_config(config, seed=None):
    section = dict(config.get("train", {}))
    if "learning_rate" not in section:
        raise ValidationError("config.train.learning_rate is required")
    return TrainConfig(
        learning_rate=float(section["learning_rate"]),
        batch_size=section.get("batch_size"),
        max_epochs=int(section.get("max_epochs", 10)),
        seed=int(config.get("seed", 0) if seed is None else seed),
        l2_coefficient=float(section.get("l2_coefficient", 0.0)),
        loss=section.get("loss", "cross_entropy"),
    )


def _build_source(config):
    """Materialize (points, cluster_assignment, ood_flags, info) per config."""
    src = config.get("source")
    if not src:
        raise ValidationError("config.source is required for gen")
    seed = int(config.get("seed", 0))
    kind = src.get("kind")
    if kind == "2d":
        points, assignment, flags = make_2d_ssnd_source(
            src["task"], int(src["n_id"]), int(src["n_ood"]),
            float(src["noise"]), seed, n_classes=int(src.get("n_classes", 2)))
        return points, assignment, flags, {"kind": "2d", "task": src["task"]}
    if kind == "clusterable":
        labels = np.asarray(src["cluster_labels"], dtype=np.int64)
        flags = np.asarray(src["ood_cluster_flags"], dtype=bool)
        k = len(labels)
        if "sizes" in src:
            sizes = np.asarray(src["sizes"], dtype=np.int64)
        else:
            sizes = np.full(k, int(src["cluster_size"]), dtype=np.int64)
        centers = random_unit_centers(k, int(src["dim"]), seed, labels=labels,
                                      epsilon=float(src["epsilon"]))
        spec = ClusterableSpec(
            centers=centers, cluster_labels=labels,
            epsilon=float(src["epsilon"]), rho=float(src.get("rho", 0.0)),
            sizes=sizes, ood_cluster_flags=flags,
            alpha1=float(src.get("alpha1", 0.5)),
            alpha2=float(src.get("alpha2", 2.0)),
            seed=seed, num_classes=int(src.get("num_classes", 0)))
        points, assignment = generate_clusterable(spec)
        stats = check_generated(points, assignment, spec)
        return points, assignment, flags, {"kind": "clusterable",
                                           "validator": stats}
    raise ValidationError(f"unknown source kind {kind!r}")


def cmd_gen(config, outdir):
    outdir = _prepare_outdir(config, outdir)
    points, assignment, flags, info = _build_source(config)
    split = config.get("split")
    if not split:
        raise ValidationError("config.split is required for gen")
    bundle = make_ssnd_split(
        points, assignment, flags,
        fractions=split["fractions"],
        ood_ratio=float(split["ood_ratio"]),
        unlabeled_size=int(split["unlabeled_size"]),
        test_size=split.get("test_size"),
        seed=int(config.get("seed", 0)),
        num_id_classes=config.get("source", {}).get("num_classes") or None)
    bundle.meta["source"] = info
    save_bundle(bundle, outdir)
    summary = {
        "sizes": {"train": len(bundle.train), "validation": len(bundle.validation),
                  "unlabeled": len(bundle.unlabeled), "test": len(bundle.test)},
        "num_ood_in_unlabeled": int(bundle.unlabeled_truth.sum()),
        "num_ood_in_test": int(bundle.test_truth.sum()),
        "source": info,
    }
    _dump_json(summary, outdir / "gen_summary.json")
    print(f"wrote split bundle to {outdir} "
          f"(|S|={len(bundle.train)}, |V|={len(bundle.validation)}, "
          f"|U|={len(bundle.unlabeled)}, |test|={len(bundle.test)})")
    return summary


def _model_dims(config, bundle):
    hidden = config.get("model", {}).get("hidden", [100, 100])
    return [bundle.train.dim, *[int(h) for h in hidden],
            bundle.train.num_classes]


def cmd_pretrain(config, outdir):
    outdir = _prepare_outdir(config, outdir)
    bundle = load_bundle(_require(config, "data_dir"))
    train_cfg = _train_config(config)
    init = MlpClassifier.initialize(
        _model_dims(config, bundle),
        activation=config.get("model", {}).get("activation", "relu"),
        seed=train_cfg.seed)
    V = bundle.validation
    model, stop, curve = fit_early_stopped(
        init, bundle.train, train_cfg,
        metric=lambda m: m.accuracy(V.features, V.labels))
    save_checkpoint(model, outdir / "model.json")
    summary = {"val_accuracy": curve[stop], "stop_epoch": stop,
               "val_curve": curve}
    _dump_json(summary, outdir / "pretrain_summary.json")
    print(f"pretrained model: validation accuracy {curve[stop]:.4f} "
          f"at epoch {stop}")
    return summary


def cmd_erd(config, outdir):
    outdir = _prepare_outdir(config, outdir)
    bundle = load_bundle(_require(config, "data_dir"))
    pretrained = load_checkpoint(_require(config, "pretrained"))
    erd_section = config.get("erd", {})
    k = int(erd_section.get("k", 3))
    labels = erd_section.get("labels")
    ensemble = erd_fit(pretrained, bundle.train, bundle.unlabeled,
                       bundle.validation, k, _train_config(config),
                       label_choice=labels)
    save_ensemble(ensemble, outdir / "ensemble")
    write_learning_curves(ensemble, outdir / "curves",
                          unlabeled_truth=bundle.unlabeled_truth)
    rows_per_member = [
        learning_curve_rows(tr, int(c), bundle.unlabeled_truth)
        for tr, c in zip(ensemble.traces, ensemble.artificial_labels)]
    plots.plot_learning_curves(rows_per_member, ensemble.stop_epochs,
                               outdir / "curves" / "learning_curves.png")
    summary = {
        "artificial_labels": [int(c) for c in ensemble.artificial_labels],
        "stop_epochs": [int(e) for e in ensemble.stop_epochs],
        "val_accuracy_at_stop": [
            tr[stop].val_accuracy
            for tr, stop in zip(ensemble.traces, ensemble.stop_epochs)],
    }
    _dump_json(summary, outdir / "erd_summary.json")
    print(f"fine-tuned {k} members, artificial labels "
          f"{summary['artificial_labels']}, stop epochs "
          f"{summary['stop_epochs']}")
    return summary


def cmd_baseline(config, outdir):
    outdir = _prepare_outdir(config, outdir)
    bundle = load_bundle(_require(config, "data_dir"))
    kind = config.get("baseline", {}).get("kind") or config.get("kind")
    train_cfg = _train_config(config)
    hidden = tuple(config.get("model", {}).get("hidden", [100, 100]))
    activation = config.get("model", {}).get("activation", "relu")
    if kind == "vanilla":
        k = int(config.get("baseline", {}).get("vanilla_k",
                                               config.get("k", 5)))
        ens = baselines.vanilla_fit(bundle.train, bundle.validation, k,
                                    train_cfg, hidden=hidden,
                                    activation=activation)
        baselines.save_vanilla(ens, outdir / "checkpoint")
        summary = {"kind": "vanilla", "k": k, "seeds": ens.seeds}
    elif kind == "binary":
        disc = baselines.binary_fit(bundle.train, bundle.unlabeled,
                                    bundle.validation, train_cfg,
                                    hidden=hidden, activation=activation)
        baselines.save_binary(disc, outdir / "checkpoint")
        summary = {"kind": "binary", "stop_epoch": disc.stop_epoch}
    else:
        raise ValidationError("config.baseline.kind must be vanilla or binary")
    _dump_json(summary, outdir / "baseline_summary.json")
    print(f"trained {kind} baseline -> {outdir / 'checkpoint'}")
    return summary


def _load_scorer(kind, checkpoint):
    """Returns (score function over features, members-for-grid or None)."""
    if kind == "erd_tdis":
        ens = load_ensemble(checkpoint)
        return (lambda X: score_members(ens.members, X, "tdis_tv")), ens.members
    if kind == "erd_entropy":
        ens = load_ensemble(checkpoint)
        return (lambda X: score_members(ens.members, X, "entropy_avg")), ens.members
    if kind == "vanilla":
        ens = baselines.load_vanilla(checkpoint)
        return (lambda X: ens.scores(X, "entropy_avg")), ens.members
    if kind == "vanilla_tdis":
        ens = baselines.load_vanilla(checkpoint)
        return (lambda X: ens.scores(X, "tdis_tv")), ens.members
    if kind == "binary":
        disc = baselines.load_binary(checkpoint)
        return disc.scores, None
    raise ValidationError(f"unknown scorer {kind!r}; expected one of {SCORERS}")


def cmd_eval(config, outdir):
    outdir = _prepare_outdir(config, outdir)
    bundle = load_bundle(_require(config, "data_dir"))
    eval_section = config.get("eval", {})
    kind = eval_section.get("scorer") or config.get("scorer") or "erd_tdis"
    checkpoint = eval_section.get("checkpoint") or _require(config, "checkpoint")
    score_fn, members = _load_scorer(kind, checkpoint)

    truth = bundle.test_truth
    test_scores = score_fn(bundle.test.features)
    scores_id = test_scores[~truth]
    scores_ood = test_scores[truth]
    report = roc(scores_id, scores_ood)

    val_scores = score_fn(bundle.validation.features)
    target_fpr = float(eval_section.get("target_fpr", 0.05))
    threshold = threshold_for_fpr(val_scores, target_fpr)
    threshold05 = (threshold if target_fpr == 0.05
                   else threshold_for_fpr(val_scores, 0.05))
    flagged = test_scores > threshold

    write_roc_csv(report, outdir / "roc.csv")
    with (outdir / "scores.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["score", "is_ood", "flagged"])
        for s, t, f in zip(test_scores, truth, flagged):
            writer.writerow([repr(float(s)), int(bool(t)), int(bool(f))])
    summary = {
        "auroc": report.auroc,
        "tnr_at_tpr95": report.tnr_at_tpr95,
        "threshold_at_fpr05": threshold05,
        "scorer": kind,
        "target_fpr": target_fpr,
        "threshold": threshold,
        "test_tpr_at_threshold": float(np.mean(flagged[truth])) if truth.any() else None,
        "test_fpr_at_threshold": float(np.mean(flagged[~truth])) if (~truth).any() else None,
        "n_test_id": int((~truth).sum()),
        "n_test_ood": int(truth.sum()),
    }
    _dump_json(summary, outdir / "summary.json")
    plots.plot_roc(report, outdir / "roc.png", title=kind)
    plots.plot_score_histograms(scores_id, scores_ood, outdir / "scores.png",
                                threshold=threshold, title=f"{kind} scores")

    resolution = eval_section.get("grid_resolution")
    if resolution and bundle.test.dim == 2 and members is not None:
        lo = bundle.test.features.min(axis=0) - 0.5
        hi = bundle.test.features.max(axis=0) + 0.5
        grid = grid_eval(members, ((lo[0], hi[0]), (lo[1], hi[1])),
                         int(resolution))
        write_grid_csv(grid, outdir / "grid.csv")
        plots.plot_grid(grid, outdir / "grid.png")
    print(f"{kind}: AUROC={report.auroc:.4f} TNR@95={report.tnr_at_tpr95:.4f} "
          f"threshold(fpr={target_fpr})={threshold:.6g}")
    return summary


SWEEP_AXES = ("ood_ratio", "unlabeled_size", "ensemble_size")


def _apply_axis(config, axis, value):
    cfg = json.loads(json.dumps(config))  # deep copy via JSON round-trip
    if axis == "ood_ratio":
        cfg.setdefault("split", {})["ood_ratio"] = float(value)
    elif axis == "unlabeled_size":
        cfg.setdefault("split", {})["unlabeled_size"] = int(value)
    elif axis == "ensemble_size":
        cfg.setdefault("erd", {})["k"] = int(value)
    else:
        raise ValidationError(f"unknown sweep axis {axis!r}; "
                              f"expected one of {SWEEP_AXES}")
    return cfg


def run_pipeline(config, outdir):
    """gen -> pretrain -> erd -> eval(erd_tdis) in one output directory."""
    outdir = Path(outdir)
    cmd_gen(config, outdir / "data")
    pre_cfg = dict(config, data_dir=str(outdir / "data"))
    cmd_pretrain(pre_cfg, outdir / "pretrain")
    erd_cfg = dict(config, data_dir=str(outdir / "data"),
                   pretrained=str(outdir / "pretrain" / "model.json"))
    cmd_erd(erd_cfg, outdir / "erd")
    eval_cfg = dict(config, data_dir=str(outdir / "data"),
                    checkpoint=str(outdir / "erd" / "ensemble"))
    return cmd_eval(eval_cfg, outdir / "eval")


def cmd_sweep(config, outdir):
    outdir = _prepare_outdir(config, outdir)
    sweep = config.get("sweep", {})
    axis = sweep.get("axis") or config.get("axis")
    grid = sweep.get("grid") or config.get("grid")
    if axis not in SWEEP_AXES:
        raise ValidationError(f"sweep axis must be one of {SWEEP_AXES}")
    if not grid:
        raise ValidationError("sweep.grid must list the axis values")
    rows = []
    for value in grid:
        point_cfg = _apply_axis(config, axis, value)
        point_dir = outdir / f"{axis}_{value}"
        summary = run_pipeline(point_cfg, point_dir)
        rows.append({"value": value, "auroc": summary["auroc"],
                     "tnr_at_tpr95": summary["tnr_at_tpr95"]})
        print(f"{axis}={value}: auroc={summary['auroc']:.4f}")
    with (outdir / "sweep.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([axis, "auroc", "tnr_at_tpr95"])
        for row in rows:
            writer.writerow([row["value"], repr(float(row["auroc"])),
                             repr(float(row["tnr_at_tpr95"]))])
    _dump_json({"axis": axis, "rows": rows}, outdir / "sweep_summary.json")
    plots.plot_sweep([r["value"] for r in rows], [r["auroc"] for r in rows],
                     [r["tnr_at_tpr95"] for r in rows], axis,
                     outdir / "sweep.png")
    return rows


def cmd_propcheck(config, outdir):
    outdir = _prepare_outdir(config, outdir)
    report = run_propcheck(config.get("propcheck", config))
    with (outdir / "propcheck_curves.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["seed", "epoch", "acc_S", "acc_correct_unlabeled_id",
                         "acc_novel", "acc_noisy_true_label", "all_fit"])
        for rec in report["per_seed"]:
            for row in rec["epochs"]:
                writer.writerow([rec["seed"], row["epoch"],
                                 repr(row["mask_S"]), repr(row["mask_correct"]),
                                 repr(row["mask_novel"]), repr(row["mask_noisy"]),
                                 int(row["all_fit"])])
    verdict = {
        "success_rate": report["success_rate"],
        "num_success": report["num_success"],
        "num_seeds": report["config"]["num_seeds"],
        "delta": report["delta"],
        "per_seed": [{k: v for k, v in rec.items() if k != "epochs"}
                     for rec in report["per_seed"]],
        "config": report["config"],
    }
    _dump_json(verdict, outdir / "verdict.json")
    plots.plot_propcheck(report, outdir / "propcheck.png")
    print(f"regularized-disagreement phase found in "
          f"{report['num_success']}/{report['config']['num_seeds']} seeds "
          f"(success rate {report['success_rate']:.2f})")
    return verdict


def _require(config, key):
    value = config.get(key)
    if not value:
        raise ValidationError(f"config.{key} is required for this command")
    return value


COMMANDS = {
    "gen": cmd_gen,
    "pretrain": cmd_pretrain,
    "erd": cmd_erd,
    "baseline": cmd_baseline,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "propcheck": cmd_propcheck,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="erdkit",
        description="Novelty detection with disagreement-regularized "
                    "ensembles: deterministic batch experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        group = p.add_mutually_exclusive_group(required=True)
        group.add_argument("--config", help="path to a JSON run config")
        group.add_argument("--preset", choices=preset_names(),
                           help="use a shipped preset config")
        p.add_argument("--out", required=True, help="output directory")
    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # argparse exits itself; keep our code contract
        return 0 if exc.code == 0 else 1
    try:
        if args.config:
            raw = json.loads(Path(args.config).read_text())
        else:
            raw = {"preset": args.preset}
        config = resolve_config(raw)
        COMMANDS[args.command](config, args.out)
    except (ValidationError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericFailure as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
