"""Empirical check of the regularized-disagreement phase on clusterable data.

Setup per seed: draw a ball-cluster mixture with unit-norm centers, hold the
flagged clusters out as novel classes, move a small fraction of each ID
cluster into the unlabeled set, and give every unlabeled point one artificial
label c. A two-layer net with frozen output weights then trains with
full-batch gradient descent at the scheduled step size. The run succeeds if
some epoch within scan_factor * t_stop simultaneously

  * fits every labeled train point,
  * predicts c on every unlabeled point whose true class is c,
  * predicts c on every novel-cluster point, and
  * still decodes every wrongly-relabeled ID point to its true class.

That window is exactly where ensemble members disagree on novel points but
not on in-distribution ones.
"""

from __future__ import annotations

import numpy as np

from .data import ClusterableSpec, Dataset, generate_clusterable, random_unit_centers
from .errors import ValidationError
from .nnet import TheoryNet, TrainConfig, sgd_train, theory_schedule

DEFAULT_PROPCHECK = {
    "k_clusters": 6,
    "dim": 16,
    "epsilon": 0.05,
    "rho": 0.05,
    "n": 1200,
    "num_classes": 3,
    "n_ood_clusters": 1,
    "hidden_units": 2048,
    "mc_samples": 10000,
    "num_seeds": 20,
    "base_seed": 0,
    "c2": 1.0,
    "c4": 1.0,
    "scan_factor": 3,
}


def check_rho_bound(rho, num_classes):
    """The analysis needs rho <= delta / 8 with delta <= 2 / (|Y| - 1)."""
    delta = 2.0 / (num_classes - 1)
    if rho > delta / 8.0 + 1e-12:
        raise ValidationError(
            f"rho={rho} violates the noise bound rho <= delta/8 = "
            f"{delta / 8.0:.6g} for {num_classes} classes")
    return delta


def _build_instance(cfg, seed):
    """Clusterable SSND instance for one seed.

    Returns dict with features X, training labels y_train (artificial label
    on the unlabeled part), boolean masks for S / correctly-relabeled /
    novel / noisy subsets, true labels, the centers, and c.
    """
    k = cfg["k_clusters"]
    d = cfg["dim"]
    n = cfg["n"]
    num_classes = cfg["num_classes"]
    n_ood = cfg["n_ood_clusters"]
    n_id_clusters = k - n_ood
    if n_id_clusters < num_classes:
        raise ValidationError("need at least one ID cluster per class")

    rng = np.random.default_rng(seed)
    labels = np.array([i % num_classes for i in range(n_id_clusters)]
                      + [num_classes + j for j in range(n_ood)], dtype=np.int64)
    flags = np.array([False] * n_id_clusters + [True] * n_ood)
    centers = random_unit_centers(k, d, seed, labels=labels,
                                  epsilon=cfg["epsilon"])
    sizes = np.full(k, n // k, dtype=np.int64)
    sizes[: n % k] += 1
    spec = ClusterableSpec(centers=centers, cluster_labels=labels,
                           epsilon=cfg["epsilon"], rho=0.0, sizes=sizes,
                           ood_cluster_flags=flags, seed=seed,
                           num_classes=num_classes)
    points, assignment = generate_clusterable(spec)

    c = int(rng.integers(num_classes))
    unlabeled = np.zeros(len(points), dtype=bool)
    for i in range(n_id_clusters):
        members = np.flatnonzero(assignment == i)
        n_unl = int(np.floor(cfg["rho"] * len(members)))
        if n_unl > 0:
            unlabeled[rng.choice(members, size=n_unl, replace=False)] = True
    novel = flags[assignment]
    unlabeled |= novel

    true_labels = points.labels.copy()
    y_train = true_labels.copy()
    y_train[unlabeled] = c

    id_unlabeled = unlabeled & ~novel
    return {
        "X": points.features,
        "y_train": y_train,
        "true_labels": true_labels,
        "c": c,
        "centers": centers,
        "mask_S": ~unlabeled,
        "mask_correct": id_unlabeled & (true_labels == c),
        "mask_novel": novel,
        "mask_noisy": id_unlabeled & (true_labels != c),
    }


def _scan_epochs(inst, cfg, seed, schedule):
    """Full-batch training with per-epoch condition checks."""
    num_classes = cfg["num_classes"]
    net = TheoryNet(cfg["hidden_units"], cfg["dim"], num_classes, seed=seed)
    max_epochs = max(1, int(cfg["scan_factor"] * schedule.t_stop))
    train = Dataset(inst["X"], inst["y_train"], num_classes)
    config = TrainConfig(learning_rate=schedule.eta, batch_size=None,
                         max_epochs=max_epochs, seed=seed, loss="squared")

    conds = {"mask_S": None, "mask_correct": inst["c"],
             "mask_novel": inst["c"], "mask_noisy": None}
    epochs = []

    def record(epoch, model):
        if epoch == 0:
            return
        preds = model.predict_labels(inst["X"])
        row = {"epoch": epoch}
        for name, target in conds.items():
            mask = inst[name]
            if target is None:
                ref = inst["true_labels"][mask]
            else:
                ref = target
            row[name] = float(np.mean(preds[mask] == ref)) if mask.any() else 1.0
        row["all_fit"] = all(row[m] == 1.0 for m in conds)
        epochs.append(row)

    sgd_train(net, train, config, epoch_callback=record)
    return epochs


def run_propcheck(config=None):
    """Run the verifier over the configured seeds; returns the verdict dict.

    The report carries, per seed, the scheduled eta / t_stop / sigma_min,
    whether a fully-fit-but-noise-free epoch exists in [1, scan_factor *
    t_stop], and that window's bounds. Overall success_rate is the fraction
    of seeds with such an epoch.
    """
    cfg = dict(DEFAULT_PROPCHECK)
    if config:
        cfg.update(config)
    delta = check_rho_bound(cfg["rho"], cfg["num_classes"])

    per_seed = []
    for s in range(cfg["num_seeds"]):
        seed = cfg["base_seed"] + s
        inst = _build_instance(cfg, seed)
        schedule = theory_schedule(inst["centers"], mc_samples=cfg["mc_samples"],
                                   seed=seed, n=len(inst["X"]),
                                   c2=cfg["c2"], c4=cfg["c4"])
        epochs = _scan_epochs(inst, cfg, seed, schedule)
        good = [row["epoch"] for row in epochs if row["all_fit"]]
        per_seed.append({
            "seed": seed,
            "artificial_label": inst["c"],
            "eta": schedule.eta,
            "t_stop": schedule.t_stop,
            "sigma_min": schedule.sigma_min,
            "success": bool(good),
            "first_good_epoch": good[0] if good else None,
            "last_good_epoch": good[-1] if good else None,
            "epochs": epochs,
            "counts": {
                "S": int(inst["mask_S"].sum()),
                "correct_unlabeled_id": int(inst["mask_correct"].sum()),
                "novel": int(inst["mask_novel"].sum()),
                "noisy": int(inst["mask_noisy"].sum()),
            },
        })
    n_ok = sum(1 for r in per_seed if r["success"])
    return {
        "config": cfg,
        "delta": delta,
        "success_rate": n_ok / cfg["num_seeds"],
        "num_success": n_ok,
        "per_seed": per_seed,
    }
