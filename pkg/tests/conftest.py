import numpy as np
import pytest

from erdkit.data import make_2d_ssnd_source, make_ssnd_split
from erdkit.ensemble import erd_fit
from erdkit.nnet import MlpClassifier, TrainConfig, fit_early_stopped


def small_blobs_bundle(seed=0, ood_ratio=0.5):
    points, assignment, flags = make_2d_ssnd_source(
        "blobs", n_id=1000, n_ood=500, noise=0.15, seed=seed)
    return make_ssnd_split(
        points, assignment, flags,
        {"train": 0.4, "val": 0.1, "unlabeled_id": 0.2},
        ood_ratio=ood_ratio, unlabeled_size=300, test_size=300, seed=seed)


def quick_config(seed=0, epochs=15, lr=0.05):
    return TrainConfig(learning_rate=lr, batch_size=64, max_epochs=epochs,
                       seed=seed)


@pytest.fixture(scope="session")
def blobs_bundle():
    return small_blobs_bundle()


@pytest.fixture(scope="session")
def blobs_pretrained(blobs_bundle):
    cfg = quick_config()
    init = MlpClassifier.initialize([2, 64, 64, 2], "relu", seed=cfg.seed)
    V = blobs_bundle.validation
    model, _, _ = fit_early_stopped(
        init, blobs_bundle.train, cfg,
        metric=lambda m: m.accuracy(V.features, V.labels))
    return model


@pytest.fixture(scope="session")
def blobs_ensemble(blobs_bundle, blobs_pretrained):
    b = blobs_bundle
    return erd_fit(blobs_pretrained, b.train, b.unlabeled, b.validation, 2,
                   quick_config())
