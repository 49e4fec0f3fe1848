import numpy as np
import pytest

from conftest import quick_config, small_blobs_bundle
from erdkit.baselines import (binary_fit, load_binary, load_vanilla,
                              save_binary, save_vanilla, vanilla_fit)
from erdkit.data import Dataset
from erdkit.errors import ValidationError
from erdkit.nnet import TrainConfig, fit_early_stopped, MlpClassifier


@pytest.fixture(scope="module")
def bundle():
    return small_blobs_bundle(seed=4)


class TestVanilla:
    def test_single_member_is_predictive_entropy(self, bundle):
        ens = vanilla_fit(bundle.train, bundle.validation, 1, quick_config(),
                          hidden=(32,))
        X = bundle.test.features
        probs = ens.members[0].predict_proba(X)
        nz = lambda p: -np.sum(np.where(p > 0, p * np.log(p), 0.0), axis=1)
        np.testing.assert_allclose(ens.scores(X), nz(probs), atol=1e-12)

    def test_identical_seeds_collapse_diversity(self, bundle):
        ens = vanilla_fit(bundle.train, bundle.validation, 2, quick_config(),
                          hidden=(32,), seeds=[7, 7])
        X = bundle.test.features
        assert np.all(ens.scores(X, "tdis_tv") == 0.0)
        single = vanilla_fit(bundle.train, bundle.validation, 1,
                             quick_config(), hidden=(32,), seeds=[7])
        np.testing.assert_allclose(ens.scores(X), single.scores(X), atol=1e-12)

    def test_entropy_rises_away_from_clusters(self, bundle):
        ens = vanilla_fit(bundle.train, bundle.validation, 5, quick_config())
        ent_val = float(ens.scores(bundle.validation.features).mean())
        rng = np.random.default_rng(0)
        dirs = rng.standard_normal((400, 2))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        shell = np.vstack([c + 10 * 0.15 * dirs[i::2]
                           for i, c in enumerate([(-1.0, 0.0), (1.0, 0.0)])])
        assert ent_val < float(ens.scores(shell).mean())

    def test_io_round_trip(self, tmp_path, bundle):
        ens = vanilla_fit(bundle.train, bundle.validation, 2, quick_config(),
                          hidden=(16,))
        save_vanilla(ens, tmp_path)
        back = load_vanilla(tmp_path)
        X = bundle.test.features[:10]
        np.testing.assert_allclose(back.scores(X), ens.scores(X), atol=1e-12)


class TestBinary:
    def test_duplicated_data_scores_near_half(self, bundle):
        cfg = TrainConfig(learning_rate=0.01, batch_size=64, max_epochs=10,
                          seed=0)
        u_dup = Dataset(bundle.train.features.copy(),
                        np.full(len(bundle.train), -1), 2)
        disc = binary_fit(bundle.train, u_dup, bundle.validation, cfg)
        test_id = bundle.test.features[~bundle.test_truth]
        assert 0.4 <= float(disc.scores(test_id).mean()) <= 0.6

    def test_far_ood_blob_separates(self, bundle):
        from erdkit.metrics import roc
        disc = binary_fit(bundle.train, bundle.unlabeled, bundle.validation,
                          quick_config())
        sid = disc.scores(bundle.test.features[~bundle.test_truth])
        sood = disc.scores(bundle.test.features[bundle.test_truth])
        assert roc(sid, sood).auroc >= 0.99

    def test_stop_epoch_beats_final_epoch(self, bundle):
        cfg = quick_config(epochs=25)
        disc = binary_fit(bundle.train, bundle.unlabeled, bundle.validation,
                          cfg)
        # retrain without selection to read the final-epoch state
        feats = np.vstack([bundle.train.features, bundle.unlabeled.features])
        labels = np.concatenate([np.zeros(len(bundle.train), np.int64),
                                 np.ones(len(bundle.unlabeled), np.int64)])
        import dataclasses
        n = len(labels)
        weighted = dataclasses.replace(
            cfg, class_weights=(n / (2.0 * len(bundle.train)),
                                n / (2.0 * len(bundle.unlabeled))))
        init = MlpClassifier.initialize([2, 100, 100, 2], "relu",
                                        seed=weighted.seed)
        final, _, curve = fit_early_stopped(
            init, Dataset(feats, labels, 2), weighted,
            metric=lambda m: float(
                np.mean(m.predict_labels(bundle.validation.features) == 0)))
        assert curve[disc.stop_epoch] >= curve[-1]

    def test_scores_are_probabilities(self, bundle):
        disc = binary_fit(bundle.train, bundle.unlabeled, bundle.validation,
                          quick_config())
        s = disc.scores(bundle.test.features)
        assert np.all(s >= 0.0) and np.all(s <= 1.0)

    def test_empty_unlabeled_rejected(self, bundle):
        empty = Dataset(np.zeros((0, 2)), np.zeros(0, np.int64), 2)
        with pytest.raises(ValidationError):
            binary_fit(bundle.train, empty, bundle.validation, quick_config())

    def test_io_round_trip(self, tmp_path, bundle):
        disc = binary_fit(bundle.train, bundle.unlabeled, bundle.validation,
                          quick_config())
        save_binary(disc, tmp_path)
        back = load_binary(tmp_path)
        assert back.stop_epoch == disc.stop_epoch
        X = bundle.test.features[:10]
        np.testing.assert_allclose(back.scores(X), disc.scores(X), atol=1e-12)
