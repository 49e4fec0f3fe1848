"""Reference detectors: a vanilla ensemble scored by the entropy of the
averaged softmax, and a binary discriminator trained to separate the labeled
set from the unlabeled mixture, regularized by early stopping.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Dataset
from .ensemble import score_members
from .errors import ValidationError
from .nnet import (MlpClassifier, fit_early_stopped, load_checkpoint,
                   save_checkpoint)

DEFAULT_HIDDEN = (100, 100)


@dataclass
class VanillaEnsemble:
    """K classifiers trained on the labeled set only, differing in seed."""

    members: list
    seeds: list

    def scores(self, X, statistic="entropy_avg"):
        return score_members(self.members, X, statistic=statistic)


@dataclass
class BinaryDiscriminator:
    """Two-output classifier: class 0 = labeled train set, class 1 =
    unlabeled mixture. The score of a point is its class-1 probability."""

    model: MlpClassifier
    stop_epoch: int

    def scores(self, X):
        return self.model.predict_proba(X)[:, 1]


def vanilla_fit(S, V, K, config, hidden=DEFAULT_HIDDEN, activation="relu",
                seeds=None):
    """Train K independent classifiers on S with seeds seed + i (or an
    explicit ``seeds`` list), each early-stopped on validation accuracy."""
    if K < 1:
        raise ValidationError("K must be >= 1")
    if seeds is None:
        seeds = [config.seed + i for i in range(K)]
    if len(seeds) != K:
        raise ValidationError("need one seed per member")
    dims = [S.dim, *hidden, S.num_classes]
    members = []
    for s in seeds:
        init = MlpClassifier.initialize(dims, activation=activation, seed=s)
        member_config = dataclasses.replace(config, seed=int(s))
        chosen, _, _ = fit_early_stopped(
            init, S, member_config,
            metric=lambda m: m.accuracy(V.features, V.labels))
        members.append(chosen)
    return VanillaEnsemble(members=members, seeds=[int(s) for s in seeds])


def binary_fit(S, U, V_id, config, hidden=DEFAULT_HIDDEN, activation="relu"):
    """Early-stopped discriminator between S (class 0) and U (class 1).

    Classes are weight-balanced when |S| != |U| so the bigger side cannot
    swallow the loss. The stopping epoch maximizes the fraction of the
    ID-only holdout predicted as class 0.
    """
    if len(U) == 0:
        raise ValidationError("unlabeled set must be non-empty")
    feats = np.vstack([S.features, U.features])
    labels = np.concatenate([np.zeros(len(S), np.int64),
                             np.ones(len(U), np.int64)])
    train = Dataset(feats, labels, 2)
    n = len(train)
    weights = (n / (2.0 * len(S)), n / (2.0 * len(U)))
    config = dataclasses.replace(config, class_weights=weights)
    init = MlpClassifier.initialize([S.dim, *hidden, 2],
                                    activation=activation, seed=config.seed)

    def id_accuracy(model):
        return float(np.mean(model.predict_labels(V_id.features) == 0))

    chosen, best, _ = fit_early_stopped(init, train, config, metric=id_accuracy)
    return BinaryDiscriminator(model=chosen, stop_epoch=best)


def save_vanilla(ensemble, outdir):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    for i, member in enumerate(ensemble.members):
        save_checkpoint(member, outdir / f"member_{i}.json")
    manifest = {"kind": "vanilla", "seeds": ensemble.seeds,
                "statistic_defaults": {"statistic": "entropy_avg"}}
    (outdir / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n")


def load_vanilla(indir):
    indir = Path(indir)
    manifest = json.loads((indir / "manifest.json").read_text())
    if manifest.get("kind") != "vanilla":
        raise ValidationError(f"{indir} is not a vanilla-ensemble checkpoint")
    members = [load_checkpoint(indir / f"member_{i}.json")
               for i in range(len(manifest["seeds"]))]
    return VanillaEnsemble(members=members, seeds=list(manifest["seeds"]))


def save_binary(disc, outdir):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(disc.model, outdir / "model.json")
    manifest = {"kind": "binary", "stop_epoch": disc.stop_epoch}
    (outdir / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n")


def load_binary(indir):
    indir = Path(indir)
    manifest = json.loads((indir / "manifest.json").read_text())
    if manifest.get("kind") != "binary":
        raise ValidationError(f"{indir} is not a binary-discriminator checkpoint")
    return BinaryDiscriminator(model=load_checkpoint(indir / "model.json"),
                               stop_epoch=int(manifest["stop_epoch"]))
