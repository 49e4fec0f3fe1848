"""Synthetic data: clusterable ball mixtures, 2D toy tasks, SSND splits
(labeled train / validation / unlabeled mixture / test), and CSV I/O.

All generation is a pure function of (spec, seed). Labels use -1 for
"unlabeled"; novel (OOD) clusters carry class ids at or above the ID
alphabet size so they can never collide with a training label.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParseError, ShapeError, SizeError, ValidationError


@dataclass
class Dataset:
    """Feature matrix plus integer labels; -1 marks unlabeled points."""

    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise ShapeError("features must be a 2-D array")
        if self.labels.shape != (self.features.shape[0],):
            raise ShapeError("labels must be one integer per row of features")
        if not np.all(np.isfinite(self.features)):
            raise ValidationError("features contain non-finite values")
        if self.num_classes < 2:
            raise ValidationError("num_classes must be >= 2")
        if len(self.labels) and (self.labels.min() < -1
                                 or self.labels.max() >= self.num_classes):
            raise ValidationError(
                f"labels must lie in [-1, {self.num_classes}) for this dataset")

    def __len__(self):
        return self.features.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]

    def subset(self, indices):
        indices = np.asarray(indices)
        return Dataset(self.features[indices], self.labels[indices],
                       self.num_classes)

    def with_labels(self, labels):
        labels = np.broadcast_to(labels, (len(self),)).copy()
        return Dataset(self.features, labels, self.num_classes)


def concat_datasets(a, b):
    if len(b) == 0:
        return a
    if a.dim != b.dim:
        raise ShapeError("datasets have different feature dimensions")
    return Dataset(np.vstack([a.features, b.features]),
                   np.concatenate([a.labels, b.labels]),
                   max(a.num_classes, b.num_classes))


@dataclass
class ClusterableSpec:
    """Generative description of a ball-cluster mixture.

    ``centers`` rows are unit-norm; points land uniformly within radius
    ``epsilon`` of their center. Each cluster has a label; exactly
    floor(rho * size) of its points get a uniformly random wrong label from
    the ID alphabet. Clusters flagged in ``ood_cluster_flags`` are novel
    classes, excluded from the labeled train/validation splits. Differently
    labeled centers must be at least 2 * epsilon apart, and cluster sizes
    must stay within [alpha1, alpha2] times the mean.
    """

    centers: np.ndarray
    cluster_labels: np.ndarray
    epsilon: float
    rho: float
    sizes: np.ndarray
    ood_cluster_flags: np.ndarray
    alpha1: float = 0.5
    alpha2: float = 2.0
    seed: int = 0
    num_classes: int = 0  # ID alphabet size; 0 = infer from non-OOD labels

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=np.float64)
        self.cluster_labels = np.asarray(self.cluster_labels, dtype=np.int64)
        self.sizes = np.asarray(self.sizes, dtype=np.int64)
        self.ood_cluster_flags = np.asarray(self.ood_cluster_flags, dtype=bool)
        if self.num_classes == 0:
            id_labels = self.cluster_labels[~self.ood_cluster_flags]
            if len(id_labels) == 0:
                raise ValidationError("need at least one non-OOD cluster")
            self.num_classes = int(id_labels.max()) + 1

    @property
    def k_clusters(self):
        return self.centers.shape[0]

    @property
    def dim(self):
        return self.centers.shape[1]

    def validate(self):
        """Raise ValidationError naming the first violated clause."""
        k = self.k_clusters
        if self.centers.ndim != 2 or k < 1:
            raise ValidationError("centers must be a nonempty (K, d) matrix")
        for name, arr in (("cluster_labels", self.cluster_labels),
                          ("sizes", self.sizes),
                          ("ood_cluster_flags", self.ood_cluster_flags)):
            if arr.shape != (k,):
                raise ValidationError(f"{name} must have one entry per cluster")
        norms = np.linalg.norm(self.centers, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise ValidationError("violated clause: center rows must be unit-norm")
        if self.epsilon < 0:
            raise ValidationError("violated clause: epsilon must be >= 0")
        if not (0.0 <= self.rho <= 1.0):
            raise ValidationError("violated clause: rho must lie in [0, 1]")
        if np.any(self.sizes < 1):
            raise ValidationError("violated clause: every cluster needs >= 1 point")
        mean_size = self.sizes.sum() / k
        if np.any(self.sizes < self.alpha1 * mean_size - 1e-9) or \
                np.any(self.sizes > self.alpha2 * mean_size + 1e-9):
            raise ValidationError(
                "violated clause: cluster sizes outside "
                f"[{self.alpha1}, {self.alpha2}] x n/K balance band")
        id_labels = self.cluster_labels[~self.ood_cluster_flags]
        if len(id_labels) and id_labels.max() >= self.num_classes:
            raise ValidationError(
                "violated clause: non-OOD cluster labels must fit the ID alphabet")
        for i in range(k):
            for j in range(i + 1, k):
                if self.cluster_labels[i] != self.cluster_labels[j]:
                    dist = float(np.linalg.norm(self.centers[i] - self.centers[j]))
                    if dist < 2.0 * self.epsilon - 1e-12:
                        raise ValidationError(
                            "violated clause: differently labeled centers "
                            f"{i} and {j} are {dist:.6g} apart, need >= "
                            f"{2.0 * self.epsilon:.6g}")


def generate_clusterable(spec):
    """Realize a ClusterableSpec.

    Returns (points, cluster_assignment): a Dataset whose labels are the
    cluster labels with exactly floor(rho * size) per-cluster noisy entries,
    and the integer cluster index of each row. Points are center + r * u
    with u uniform on the unit sphere and r uniform in [0, epsilon].
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    feats, labels, assignment = [], [], []
    alphabet = int(max(spec.num_classes, int(spec.cluster_labels.max()) + 1))
    for i in range(spec.k_clusters):
        m = int(spec.sizes[i])
        u = rng.standard_normal((m, spec.dim))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        r = rng.uniform(0.0, spec.epsilon, size=m) if spec.epsilon > 0 else np.zeros(m)
        feats.append(spec.centers[i] + r[:, None] * u)
        lab = np.full(m, spec.cluster_labels[i], dtype=np.int64)
        n_noisy = int(np.floor(spec.rho * m))
        if n_noisy > 0:
            noisy_idx = rng.choice(m, size=n_noisy, replace=False)
            for j in noisy_idx:
                wrong = [y for y in range(spec.num_classes) if y != lab[j]]
                lab[j] = wrong[rng.integers(len(wrong))]
        labels.append(lab)
        assignment.append(np.full(m, i, dtype=np.int64))
    points = Dataset(np.vstack(feats), np.concatenate(labels), alphabet)
    return points, np.concatenate(assignment)


def check_generated(points, cluster_assignment, spec, atol=1e-9):
    """Re-verify a generated sample against its spec; returns measured stats."""
    spec.validate()
    stats = {"max_radius": 0.0, "max_noisy_fraction": 0.0}
    for i in range(spec.k_clusters):
        sel = cluster_assignment == i
        if int(sel.sum()) != int(spec.sizes[i]):
            raise ValidationError(f"cluster {i} has wrong size after generation")
        radii = np.linalg.norm(points.features[sel] - spec.centers[i], axis=1)
        stats["max_radius"] = max(stats["max_radius"], float(radii.max(initial=0.0)))
        if radii.max(initial=0.0) > spec.epsilon + atol:
            raise ValidationError(f"cluster {i} exceeds the epsilon radius")
        noisy = int(np.sum(points.labels[sel] != spec.cluster_labels[i]))
        allowed = int(np.floor(spec.rho * spec.sizes[i]))
        stats["max_noisy_fraction"] = max(stats["max_noisy_fraction"],
                                          noisy / max(1, int(spec.sizes[i])))
        if noisy > allowed:
            raise ValidationError(f"cluster {i} has {noisy} noisy labels, "
                                  f"allowed {allowed}")
    return stats


@dataclass
class SplitBundle:
    """The SSND splits: S, V, unlabeled mixture U (labels erased), and a
    held-out test mixture. Truth vectors (True = OOD) exist for evaluation
    only and never feed training."""

    train: Dataset
    validation: Dataset
    unlabeled: Dataset
    unlabeled_truth: np.ndarray
    test: Dataset
    test_truth: np.ndarray
    meta: dict = field(default_factory=dict)


def make_ssnd_split(points, cluster_assignment, ood_cluster_flags, fractions,
                    ood_ratio, unlabeled_size, test_size=None, seed=0,
                    num_id_classes=None):
    """Split generated points into an SSND bundle.

    ``fractions`` is a mapping with keys train, val, unlabeled_id giving the
    shares of the ID pool reserved for S, V, and the unlabeled-ID reservoir
    (they must sum to <= 1). U holds round(ood_ratio * unlabeled_size) OOD
    points and ID points for the remainder; the test mixture (default size:
    ``unlabeled_size``) mirrors the same proportions from leftover points.
    S and V keep their generated labels; U labels are erased; OOD test
    points are marked unlabeled. No index lands in two splits.
    """
    cluster_assignment = np.asarray(cluster_assignment, dtype=np.int64)
    ood_cluster_flags = np.asarray(ood_cluster_flags, dtype=bool)
    for key in ("train", "val", "unlabeled_id"):
        if key not in fractions:
            raise ValidationError(f"fractions must include {key!r}")
    f_train, f_val, f_unl = (float(fractions[k])
                             for k in ("train", "val", "unlabeled_id"))
    if min(f_train, f_val, f_unl) < 0 or f_train + f_val + f_unl > 1.0 + 1e-9:
        raise SizeError("fractions must be nonnegative and sum to at most 1")
    if not (0.0 <= ood_ratio <= 1.0):
        raise ValidationError("ood_ratio must lie in [0, 1]")
    if unlabeled_size < 1:
        raise ValidationError("unlabeled_size must be >= 1")
    if test_size is None:
        test_size = int(unlabeled_size)

    rng = np.random.default_rng(seed)
    is_ood_point = ood_cluster_flags[cluster_assignment]
    id_pool = rng.permutation(np.flatnonzero(~is_ood_point))
    ood_pool = rng.permutation(np.flatnonzero(is_ood_point))

    n_u_ood = int(round(ood_ratio * unlabeled_size))
    n_u_id = int(unlabeled_size) - n_u_ood
    n_t_ood = int(round(ood_ratio * test_size))
    n_t_id = int(test_size) - n_t_ood

    n_id = len(id_pool)
    n_s = int(np.floor(f_train * n_id))
    n_v = int(np.floor(f_val * n_id))
    n_u_reservoir = int(np.floor(f_unl * n_id))
    if n_u_id > n_u_reservoir:
        raise SizeError(
            f"unlabeled set needs {n_u_id} ID points but the unlabeled_id "
            f"fraction reserves only {n_u_reservoir}")
    if n_s + n_v + n_u_reservoir + n_t_id > n_id:
        raise SizeError(
            f"ID pool has {n_id} points; requested "
            f"{n_s}+{n_v}+{n_u_reservoir}+{n_t_id} for S/V/U/test "
            f"(short by {n_s + n_v + n_u_reservoir + n_t_id - n_id})")
    if n_u_ood + n_t_ood > len(ood_pool):
        raise SizeError(
            f"OOD pool has {len(ood_pool)} points; requested "
            f"{n_u_ood}+{n_t_ood} for U/test "
            f"(short by {n_u_ood + n_t_ood - len(ood_pool)})")

    cut1, cut2, cut3 = n_s, n_s + n_v, n_s + n_v + n_u_id
    s_idx = id_pool[:cut1]
    v_idx = id_pool[cut1:cut2]
    u_id_idx = id_pool[cut2:cut3]
    t_id_idx = id_pool[n_s + n_v + n_u_reservoir:
                       n_s + n_v + n_u_reservoir + n_t_id]
    u_ood_idx = ood_pool[:n_u_ood]
    t_ood_idx = ood_pool[n_u_ood:n_u_ood + n_t_ood]

    num_classes = num_id_classes
    if num_classes is None:
        id_labels = points.labels[~is_ood_point]
        id_labels = id_labels[id_labels >= 0]
        num_classes = max(2, int(id_labels.max()) + 1) if len(id_labels) else 2

    def _as_dataset(idx, erase=False, mask_ood=False):
        labels = points.labels[idx].copy()
        if erase:
            labels[:] = -1
        elif mask_ood:
            labels[is_ood_point[idx]] = -1
        labels[labels >= num_classes] = -1
        return Dataset(points.features[idx], labels, num_classes)

    u_order = rng.permutation(len(u_id_idx) + len(u_ood_idx))
    u_idx = np.concatenate([u_id_idx, u_ood_idx])[u_order]
    u_truth = np.concatenate([np.zeros(len(u_id_idx), bool),
                              np.ones(len(u_ood_idx), bool)])[u_order]
    t_order = rng.permutation(len(t_id_idx) + len(t_ood_idx))
    t_idx = np.concatenate([t_id_idx, t_ood_idx])[t_order]
    t_truth = np.concatenate([np.zeros(len(t_id_idx), bool),
                              np.ones(len(t_ood_idx), bool)])[t_order]

    meta = {
        "num_classes": int(num_classes),
        "ood_ratio": float(ood_ratio),
        "unlabeled_size": int(unlabeled_size),
        "test_size": int(test_size),
        "seed": int(seed),
        "indices": {
            "train": s_idx.tolist(),
            "validation": v_idx.tolist(),
            "unlabeled": u_idx.tolist(),
            "test": t_idx.tolist(),
        },
    }
    return SplitBundle(
        train=_as_dataset(s_idx),
        validation=_as_dataset(v_idx),
        unlabeled=_as_dataset(u_idx, erase=True),
        unlabeled_truth=u_truth,
        test=_as_dataset(t_idx, mask_ood=True),
        test_truth=t_truth,
        meta=meta,
    )


def make_two_moons_like_2d(task, n, noise, seed):
    """2-class 2D toy data: parallel bands, two moons, or two blobs."""
    if n < 4:
        raise ValidationError("need n >= 4")
    if noise < 0:
        raise ValidationError("noise must be >= 0")
    rng = np.random.default_rng(seed)
    n0 = n // 2
    n1 = n - n0
    if task == "blobs":
        c0, c1 = np.array([-1.0, 0.0]), np.array([1.0, 0.0])
        x0 = c0 + noise * rng.standard_normal((n0, 2))
        x1 = c1 + noise * rng.standard_normal((n1, 2))
    elif task == "bands":
        x0 = np.column_stack([rng.uniform(-2.0, 2.0, n0),
                              -1.0 + noise * rng.standard_normal(n0)])
        x1 = np.column_stack([rng.uniform(-2.0, 2.0, n1),
                              1.0 + noise * rng.standard_normal(n1)])
    elif task == "moons":
        t0 = rng.uniform(0.0, np.pi, n0)
        t1 = rng.uniform(0.0, np.pi, n1)
        x0 = np.column_stack([np.cos(t0), np.sin(t0)])
        x1 = np.column_stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)])
        x0 += noise * rng.standard_normal((n0, 2))
        x1 += noise * rng.standard_normal((n1, 2))
    else:
        raise ValidationError(f"unknown 2D task {task!r}")
    feats = np.vstack([x0, x1])
    labels = np.concatenate([np.zeros(n0, np.int64), np.ones(n1, np.int64)])
    return Dataset(feats, labels, 2)


def make_2d_ssnd_source(task, n_id, n_ood, noise, seed, n_classes=2):
    """ID toy task plus a planted novel component for SSND splits.

    Returns (points, cluster_assignment, ood_cluster_flags): components
    0..n_classes-1 are the ID classes, the last component is the novel one
    (a band one spacing above the top band, a displaced third moon, or a far
    blob). Only the bands task supports more than two ID classes.
    """
    if n_ood < 1:
        raise ValidationError("need n_ood >= 1")
    if n_classes != 2 and task != "bands":
        raise ValidationError("multi-class 2D sources exist for bands only")
    rng = np.random.default_rng(seed + 1)
    if task == "bands" and n_classes != 2:
        # ID band for class k at y = 2k - 1, novel band one spacing above
        gen = np.random.default_rng(seed)
        per = [n_id // n_classes] * n_classes
        for i in range(n_id % n_classes):
            per[i] += 1
        parts, labs = [], []
        for k, m in enumerate(per):
            parts.append(np.column_stack([
                gen.uniform(-2.0, 2.0, m),
                (2.0 * k - 1.0) + noise * gen.standard_normal(m)]))
            labs.append(np.full(m, k, np.int64))
        id_feats = np.vstack(parts)
        id_labels = np.concatenate(labs)
    else:
        ident = make_two_moons_like_2d(task, n_id, noise, seed)
        id_feats, id_labels = ident.features, ident.labels
    if task == "bands":
        ood = np.column_stack([
            rng.uniform(-2.0, 2.0, n_ood),
            (2.0 * n_classes - 1.0) + noise * rng.standard_normal(n_ood)])
    elif task == "moons":
        t = rng.uniform(0.0, np.pi, n_ood)
        ood = np.column_stack([1.0 - np.cos(t) - 2.0, 0.5 - np.sin(t)])
        ood += noise * rng.standard_normal((n_ood, 2))
    elif task == "blobs":
        ood = np.array([4.0, 4.0]) + noise * rng.standard_normal((n_ood, 2))
    else:
        raise ValidationError(f"unknown 2D task {task!r}")
    feats = np.vstack([id_feats, ood])
    labels = np.concatenate([id_labels, np.full(n_ood, n_classes, np.int64)])
    assignment = labels.copy()
    points = Dataset(feats, labels, n_classes + 1)
    flags = np.array([False] * n_classes + [True])
    return points, assignment, flags


def write_csv(dataset, path):
    """Write the x0..x{d-1},label CSV form; floats keep full precision."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i}" for i in range(dataset.dim)] + ["label"])
        for row, lab in zip(dataset.features, dataset.labels):
            writer.writerow([repr(float(v)) for v in row] + [int(lab)])


def read_csv(path, num_classes=None):
    path = Path(path)
    with path.open("r", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file, expected a header row") from None
        d = len(header) - 1
        expected = [f"x{i}" for i in range(d)] + ["label"]
        if d < 1 or header != expected:
            raise ParseError(
                f"expected header 'x0,...,x{max(d - 1, 0)},label', got "
                f"{','.join(header)}", line_number=1)
        feats, labels = [], []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != d + 1:
                raise ParseError(f"expected {d + 1} fields, got {len(row)}",
                                 line_number=line_no)
            try:
                feats.append([float(v) for v in row[:d]])
                labels.append(int(row[d]))
            except ValueError as exc:
                raise ParseError(str(exc), line_number=line_no) from None
    if not feats:
        raise ParseError("no samples")
    labels = np.asarray(labels, dtype=np.int64)
    if num_classes is None:
        num_classes = max(2, int(labels.max()) + 1)
    return Dataset(np.asarray(feats, dtype=np.float64), labels, num_classes)


def _write_truth(truth, path):
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["is_ood"])
        for v in truth:
            writer.writerow([int(bool(v))])


def _read_truth(path):
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"missing truth file {path}")
    with path.open("r", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["is_ood"]:
            raise ParseError("expected header 'is_ood'", line_number=1)
        vals = [bool(int(row[0])) for row in reader if row]
    return np.asarray(vals, dtype=bool)


BUNDLE_FILES = ("train.csv", "val.csv", "unlabeled.csv", "unlabeled_truth.csv",
                "test.csv", "test_truth.csv", "meta.json")


def save_bundle(bundle, outdir):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    write_csv(bundle.train, outdir / "train.csv")
    write_csv(bundle.validation, outdir / "val.csv")
    write_csv(bundle.unlabeled, outdir / "unlabeled.csv")
    _write_truth(bundle.unlabeled_truth, outdir / "unlabeled_truth.csv")
    write_csv(bundle.test, outdir / "test.csv")
    _write_truth(bundle.test_truth, outdir / "test_truth.csv")
    meta = dict(bundle.meta)
    meta.setdefault("num_classes", bundle.train.num_classes)
    (outdir / "meta.json").write_text(
        json.dumps(meta, sort_keys=True, indent=2) + "\n")


def load_bundle(indir):
    indir = Path(indir)
    meta_path = indir / "meta.json"
    if not meta_path.exists():
        raise ValidationError(f"missing meta.json in {indir}")
    meta = json.loads(meta_path.read_text())
    num_classes = int(meta["num_classes"])
    bundle = SplitBundle(
        train=read_csv(indir / "train.csv", num_classes),
        validation=read_csv(indir / "val.csv", num_classes),
        unlabeled=read_csv(indir / "unlabeled.csv", num_classes),
        unlabeled_truth=_read_truth(indir / "unlabeled_truth.csv"),
        test=read_csv(indir / "test.csv", num_classes),
        test_truth=_read_truth(indir / "test_truth.csv"),
        meta=meta,
    )
    if len(bundle.unlabeled_truth) != len(bundle.unlabeled):
        raise ValidationError("unlabeled_truth length mismatch")
    if len(bundle.test_truth) != len(bundle.test):
        raise ValidationError("test_truth length mismatch")
    return bundle


def random_unit_centers(k, d, seed, labels=None, epsilon=0.0, max_tries=200):
    """Random unit-norm centers; retries until differently labeled centers
    are at least 2 * epsilon apart."""
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        c = rng.standard_normal((k, d))
        c /= np.linalg.norm(c, axis=1, keepdims=True)
        if labels is None or epsilon == 0.0:
            return c
        ok = True
        for i in range(k):
            for j in range(i + 1, k):
                if labels[i] != labels[j] and \
                        np.linalg.norm(c[i] - c[j]) < 2.0 * epsilon:
                    ok = False
        if ok:
            return c
    raise ValidationError("could not place centers 2*epsilon apart")
