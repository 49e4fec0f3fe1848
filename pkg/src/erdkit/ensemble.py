"""Disagreement-regularized ensembles: fine-tune K classifiers that each
press a distinct artificial label onto the unlabeled mixture, early-stop each
on validation accuracy, and score test points by how much the members'
softmax outputs disagree.
"""

from __future__ import annotations

import csv
import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset, concat_datasets
from .errors import ShapeError, ValidationError
from .nnet import MlpClassifier, load_checkpoint, save_checkpoint, sgd_train

STATISTICS = ("tdis_tv", "entropy_avg")


def _check_prob_vector(p, name):
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1:
        raise ShapeError(f"{name} must be a 1-D probability vector")
    if abs(float(p.sum()) - 1.0) > 1e-9 or p.min() < -1e-12:
        raise ValidationError(f"{name} is not a probability vector")
    return p


def tv_distance(p, q):
    """Total variation distance 0.5 * sum |p_k - q_k| between two
    probability vectors; 0 iff p == q, at most 1."""
    p = _check_prob_vector(p, "p")
    q = _check_prob_vector(q, "q")
    if p.shape != q.shape:
        raise ShapeError("p and q must have the same length")
    return float(0.5 * np.abs(p - q).sum())


def disagreement_statistic(outputs):
    """Mean pairwise total variation distance over the K(K-1)/2 unordered
    pairs of member outputs; lies in [0, 1]."""
    if len(outputs) < 2:
        raise ValidationError("need at least 2 member outputs")
    probs = [_check_prob_vector(p, f"outputs[{i}]") for i, p in enumerate(outputs)]
    k = len(probs)
    total = 0.0
    for i in range(k):
        for j in range(i + 1, k):
            total += 0.5 * float(np.abs(probs[i] - probs[j]).sum())
    return total / (k * (k - 1) / 2)


def entropy_avg_statistic(outputs):
    """Shannon entropy (natural log) of the member-averaged output, with
    0 * log 0 taken as 0. Blind to disagreement: two confident members that
    contradict each other average to the same score as shared uncertainty."""
    if len(outputs) < 1:
        raise ValidationError("need at least 1 member output")
    probs = [_check_prob_vector(p, f"outputs[{i}]") for i, p in enumerate(outputs)]
    avg = np.mean(probs, axis=0)
    nz = avg > 0.0
    return float(-(avg[nz] * np.log(avg[nz])).sum())


def _batch_tdis(prob_stack):
    """Mean pairwise TV distance per point for a (K, n, classes) stack."""
    k = prob_stack.shape[0]
    total = np.zeros(prob_stack.shape[1])
    for i in range(k):
        for j in range(i + 1, k):
            total += 0.5 * np.abs(prob_stack[i] - prob_stack[j]).sum(axis=1)
    return total / (k * (k - 1) / 2)


def _batch_entropy_avg(prob_stack):
    avg = prob_stack.mean(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(avg > 0.0, avg * np.log(avg), 0.0)
    return -terms.sum(axis=1)


def score_members(members, X, statistic="tdis_tv"):
    """Per-point disagreement (or averaged-entropy) scores for a member list."""
    if statistic not in STATISTICS:
        raise ValidationError(f"unknown statistic {statistic!r}")
    if len(members) == 0:
        raise ValidationError("empty ensemble")
    stack = np.stack([m.predict_proba(X) for m in members])
    if statistic == "tdis_tv":
        if len(members) < 2:
            raise ValidationError("tdis_tv needs at least 2 members")
        return _batch_tdis(stack)
    return _batch_entropy_avg(stack)


@dataclass
class MemberEpochRecord:
    """Per-epoch snapshot metrics for one fine-tuned member. Epoch 0 is the
    state before fine-tuning. ``u_predictions`` stores the member's argmax on
    the unlabeled set so curves can later be split by the held-out truth."""

    epoch: int
    val_accuracy: float
    acc_on_S: float
    acc_on_U_with_label_c: float
    u_predictions: np.ndarray | None = None


@dataclass
class ErdEnsemble:
    members: list
    artificial_labels: np.ndarray
    stop_epochs: list
    traces: list = field(default_factory=list)

    def __post_init__(self):
        self.artificial_labels = np.asarray(self.artificial_labels, dtype=np.int64)
        if len(self.members) != len(self.artificial_labels):
            raise ValidationError("one artificial label per member required")
        if len(set(self.artificial_labels.tolist())) != len(self.artificial_labels):
            raise ValidationError("artificial labels must be pairwise distinct")


@dataclass
class DetectionResult:
    scores: np.ndarray
    flagged: np.ndarray
    threshold: float


def erd_fit(pretrained, S, U, V, K, config, label_choice=None):
    """Fine-tune K members of an ensemble with regularized disagreement.

    Each member starts from ``pretrained``, picks a distinct artificial label
    c, and trains on S plus every unlabeled point relabeled c. Members
    checkpoint every epoch; the kept checkpoint maximizes validation accuracy
    over epochs >= 1 (ties break to the earliest epoch), so at least one
    epoch of fine-tuning always happens. ``label_choice`` may list the K
    labels explicitly; by default they are sampled without replacement using
    ``config.seed``. Member i shuffles with seed ``config.seed + i``.
    """
    num_classes = pretrained.num_classes
    if K < 2:
        raise ValidationError("ensemble size K must be >= 2")
    if K > num_classes:
        raise ValidationError(
            f"cannot pick {K} distinct artificial labels from {num_classes} classes")
    if S.dim != pretrained.input_dim:
        raise ShapeError("training features do not match the pretrained model")
    if len(U) and not np.all(U.labels == -1):
        raise ValidationError("unlabeled set must carry label -1 everywhere")

    if label_choice is not None:
        labels = np.asarray(list(label_choice), dtype=np.int64)
        if len(labels) != K:
            raise ValidationError("label_choice must provide exactly K labels")
        if len(set(labels.tolist())) != K:
            raise ValidationError("label_choice labels must be distinct")
        if labels.min() < 0 or labels.max() >= num_classes:
            raise ValidationError("label_choice labels out of range")
    else:
        rng = np.random.default_rng(config.seed)
        labels = rng.choice(num_classes, size=K, replace=False).astype(np.int64)

    members, stop_epochs, traces = [], [], []
    for i, c in enumerate(labels):
        train_set = concat_datasets(S, U.with_labels(int(c))) if len(U) else S
        member_config = _reseeded(config, config.seed + i)
        trace, snapshots = [], []

        def record(epoch, model, _c=int(c)):
            snapshots.append(model.copy())
            u_pred = model.predict_labels(U.features) if len(U) else None
            trace.append(MemberEpochRecord(
                epoch=epoch,
                val_accuracy=model.accuracy(V.features, V.labels),
                acc_on_S=model.accuracy(S.features, S.labels),
                acc_on_U_with_label_c=(
                    float(np.mean(u_pred == _c)) if u_pred is not None else float("nan")),
                u_predictions=u_pred,
            ))

        sgd_train(pretrained, train_set, member_config, epoch_callback=record)
        val_curve = np.array([r.val_accuracy for r in trace[1:]])
        best = int(np.argmax(val_curve)) + 1  # argmax returns the earliest tie
        chosen = snapshots[best]
        chosen.epochs_trained = best
        members.append(chosen)
        stop_epochs.append(best)
        traces.append(trace)
    return ErdEnsemble(members=members, artificial_labels=labels,
                       stop_epochs=stop_epochs, traces=traces)


def _reseeded(config, seed):
    return dataclasses.replace(config, seed=int(seed))


def detect(ensemble, test, threshold, statistic="tdis_tv"):
    """Score every test point with the selected members and flag the ones
    whose score strictly exceeds the threshold."""
    members = ensemble.members if isinstance(ensemble, ErdEnsemble) else list(ensemble)
    if len(members) == 0:
        raise ValidationError("empty ensemble")
    X = test.features if isinstance(test, Dataset) else np.asarray(test, dtype=np.float64)
    scores = score_members(members, X, statistic=statistic)
    flagged = scores > threshold
    return DetectionResult(scores=scores, flagged=flagged, threshold=float(threshold))


@dataclass
class GridEval:
    xs: np.ndarray
    ys: np.ndarray
    member_labels: np.ndarray  # (K, nx * ny)
    scores: np.ndarray         # mean pairwise TV per grid point (0 for K=1)
    resolution: tuple


def grid_eval(model_or_ensemble, bounds, resolution):
    """Evaluate member predictions and disagreement on a 2D grid.

    ``bounds`` is ((xmin, xmax), (ymin, ymax)); ``resolution`` an int or
    (nx, ny) count of cells per axis. Evaluation happens at cell centers, so
    resolution 1 probes the box center. A single model yields one label row
    and zero disagreement.
    """
    if isinstance(model_or_ensemble, ErdEnsemble):
        members = model_or_ensemble.members
    elif isinstance(model_or_ensemble, MlpClassifier):
        members = [model_or_ensemble]
    else:
        members = list(model_or_ensemble)
    if any(m.input_dim != 2 for m in members):
        raise ShapeError("grid evaluation needs 2-D input models")
    if isinstance(resolution, int):
        nx = ny = resolution
    else:
        nx, ny = resolution
    if nx < 1 or ny < 1:
        raise ValidationError("resolution must be >= 1 per axis")
    (xmin, xmax), (ymin, ymax) = bounds
    cx = xmin + (np.arange(nx) + 0.5) * (xmax - xmin) / nx
    cy = ymin + (np.arange(ny) + 0.5) * (ymax - ymin) / ny
    gx, gy = np.meshgrid(cx, cy)  # row-major over y then x
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    stack = np.stack([m.predict_proba(pts) for m in members])
    labels = stack.argmax(axis=2)
    scores = _batch_tdis(stack) if len(members) >= 2 else np.zeros(len(pts))
    return GridEval(xs=pts[:, 0], ys=pts[:, 1], member_labels=labels,
                    scores=scores, resolution=(nx, ny))


def write_grid_csv(grid, path):
    k = grid.member_labels.shape[0]
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y"] + [f"member{i}_label" for i in range(k)]
                        + ["tdis"])
        for idx in range(len(grid.xs)):
            writer.writerow([repr(float(grid.xs[idx])), repr(float(grid.ys[idx]))]
                            + [int(grid.member_labels[i, idx]) for i in range(k)]
                            + [repr(float(grid.scores[idx]))])


def learning_curve_rows(trace, artificial_label, unlabeled_truth=None):
    """Flatten one member's trace into rows {epoch, val_acc, acc_S,
    acc_U_c_on_ood, acc_U_c_on_id}, splitting the fraction of the unlabeled
    set predicted as the artificial label by the held-out truth."""
    rows = []
    truth = None if unlabeled_truth is None else np.asarray(unlabeled_truth, bool)
    for rec in trace:
        on_ood = on_id = float("nan")
        if rec.u_predictions is not None and truth is not None and len(truth):
            hits = rec.u_predictions == artificial_label
            if truth.any():
                on_ood = float(np.mean(hits[truth]))
            if (~truth).any():
                on_id = float(np.mean(hits[~truth]))
        rows.append({
            "epoch": rec.epoch,
            "val_acc": rec.val_accuracy,
            "acc_S": rec.acc_on_S,
            "acc_U_c_on_ood": on_ood,
            "acc_U_c_on_id": on_id,
        })
    return rows


CURVE_FIELDS = ("epoch", "val_acc", "acc_S", "acc_U_c_on_ood", "acc_U_c_on_id")


def write_learning_curves(ensemble, outdir, unlabeled_truth=None):
    """One CSV per member with the early-stopping learning curves."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, trace in enumerate(ensemble.traces):
        rows = learning_curve_rows(trace, int(ensemble.artificial_labels[i]),
                                   unlabeled_truth)
        path = outdir / f"member_{i}_curve.csv"
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CURVE_FIELDS)
            for row in rows:
                writer.writerow([row["epoch"]] +
                                [repr(float(row[k])) for k in CURVE_FIELDS[1:]])
        paths.append(path)
    return paths


def save_ensemble(ensemble, outdir, statistic_defaults=None):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    for i, member in enumerate(ensemble.members):
        save_checkpoint(member, outdir / f"member_{i}.json")
    manifest = {
        "artificial_labels": [int(c) for c in ensemble.artificial_labels],
        "stop_epochs": [int(e) for e in ensemble.stop_epochs],
        "statistic_defaults": statistic_defaults or {"statistic": "tdis_tv"},
    }
    (outdir / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n")


def load_ensemble(indir):
    indir = Path(indir)
    manifest_path = indir / "manifest.json"
    if not manifest_path.exists():
        raise ValidationError(f"missing manifest.json in {indir}")
    manifest = json.loads(manifest_path.read_text())
    labels = manifest["artificial_labels"]
    members = [load_checkpoint(indir / f"member_{i}.json")
               for i in range(len(labels))]
    return ErdEnsemble(members=members,
                       artificial_labels=np.asarray(labels, dtype=np.int64),
                       stop_epochs=list(manifest["stop_epochs"]))
