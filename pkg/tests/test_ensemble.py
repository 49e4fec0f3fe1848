import numpy as np
import pytest

from conftest import quick_config
from erdkit.data import (ClusterableSpec, Dataset, generate_clusterable,
                         make_ssnd_split, random_unit_centers)
from erdkit.ensemble import (ErdEnsemble, detect, erd_fit, grid_eval,
                             learning_curve_rows, load_ensemble,
                             save_ensemble, score_members, write_grid_csv)
from erdkit.errors import ShapeError, ValidationError
from erdkit.nnet import MlpClassifier, TrainConfig, fit_early_stopped


def empty_unlabeled(dim=2):
    return Dataset(np.zeros((0, dim)), np.zeros(0, np.int64), 2)


def verifier_style_bundle(seed):
    """Clusterable mixture with the verifier preset's geometry; the whole
    novel cluster plus 5% of each ID cluster lands in the unlabeled set."""
    labels = np.array([0, 1, 2, 0, 1, 3])
    flags = np.array([False] * 5 + [True])
    centers = random_unit_centers(6, 16, seed, labels=labels, epsilon=0.05)
    spec = ClusterableSpec(centers=centers, cluster_labels=labels,
                           epsilon=0.05, rho=0.0, sizes=np.full(6, 200),
                           ood_cluster_flags=flags, seed=seed, num_classes=3)
    points, assignment = generate_clusterable(spec)
    bundle = make_ssnd_split(points, assignment, flags,
                             {"train": 0.8, "val": 0.1, "unlabeled_id": 0.06},
                             ood_ratio=0.8, unlabeled_size=250, test_size=0,
                             seed=seed)
    return points, bundle


class TestErdFit:
    def test_empty_unlabeled_degenerates_to_finetune(self, blobs_bundle,
                                                     blobs_pretrained):
        b = blobs_bundle
        cfg = quick_config()
        ens = erd_fit(blobs_pretrained, b.train, empty_unlabeled(), b.validation,
                      2, cfg, label_choice=[0, 1])
        test_id = b.test.features[~b.test_truth]
        # members only saw S, so ID disagreement stays at the vanilla level
        assert float(score_members(ens.members, test_id).mean()) < 0.05

    def test_deterministic(self, blobs_bundle, blobs_pretrained):
        b = blobs_bundle
        runs = [erd_fit(blobs_pretrained, b.train, b.unlabeled, b.validation,
                        2, quick_config()) for _ in range(2)]
        assert runs[0].stop_epochs == runs[1].stop_epochs
        assert np.array_equal(runs[0].artificial_labels,
                              runs[1].artificial_labels)
        for m1, m2 in zip(runs[0].members, runs[1].members):
            for w1, w2 in zip(m1.weights + m1.biases, m2.weights + m2.biases):
                assert np.array_equal(w1, w2)

    def test_label_exhaustion(self, blobs_bundle, blobs_pretrained):
        b = blobs_bundle
        with pytest.raises(ValidationError, match="distinct artificial labels"):
            erd_fit(blobs_pretrained, b.train, b.unlabeled, b.validation, 3,
                    quick_config())

    def test_duplicate_explicit_labels(self, blobs_bundle, blobs_pretrained):
        b = blobs_bundle
        with pytest.raises(ValidationError, match="distinct"):
            erd_fit(blobs_pretrained, b.train, b.unlabeled, b.validation, 2,
                    quick_config(), label_choice=[1, 1])

    def test_unlabeled_must_be_unlabeled(self, blobs_bundle, blobs_pretrained):
        b = blobs_bundle
        with pytest.raises(ValidationError, match="label -1"):
            erd_fit(blobs_pretrained, b.train, b.train, b.validation, 2,
                    quick_config())

    def test_selection_maximizes_validation_accuracy(self, blobs_ensemble):
        for trace, stop in zip(blobs_ensemble.traces,
                               blobs_ensemble.stop_epochs):
            accs = [r.val_accuracy for r in trace[1:]]
            assert trace[stop].val_accuracy == max(accs)
            # earliest tie wins
            assert stop == 1 + int(np.argmax(np.asarray(accs)))
            assert stop >= 1

    def test_regularized_disagreement_on_clusterable(self):
        for seed in (0, 1):
            points, bundle = verifier_style_bundle(seed)
            cfg = quick_config(seed=seed)
            init = MlpClassifier.initialize([16, 100, 100, 3], "relu",
                                            seed=seed)
            V = bundle.validation
            pre, _, _ = fit_early_stopped(
                init, bundle.train, cfg,
                metric=lambda m: m.accuracy(V.features, V.labels))
            ens = erd_fit(pre, bundle.train, bundle.unlabeled,
                          bundle.validation, 2, cfg)
            true_u = points.labels[np.asarray(bundle.meta["indices"]["unlabeled"])]
            ood = bundle.unlabeled_truth
            for member, c in zip(ens.members, ens.artificial_labels):
                pred = member.predict_labels(bundle.unlabeled.features)
                assert float(np.mean(pred[ood] == c)) == 1.0
                noisy = (~ood) & (true_u != c)
                assert noisy.any()
                assert float(np.mean(pred[noisy] == true_u[noisy])) >= 0.9

    def test_mean_tdis_higher_on_ood(self, blobs_bundle, blobs_ensemble):
        b = blobs_bundle
        scores = score_members(blobs_ensemble.members, b.unlabeled.features)
        assert scores[b.unlabeled_truth].mean() > scores[~b.unlabeled_truth].mean()


@pytest.fixture(scope="module")
def bands_run():
    from erdkit.data import make_2d_ssnd_source
    points, assignment, flags = make_2d_ssnd_source(
        "bands", n_id=4000, n_ood=1600, noise=0.25, seed=0)
    bundle = make_ssnd_split(points, assignment, flags,
                             {"train": 0.35, "val": 0.1, "unlabeled_id": 0.25},
                             ood_ratio=0.5, unlabeled_size=1000,
                             test_size=1000, seed=0)
    cfg = TrainConfig(learning_rate=0.05, batch_size=64, max_epochs=30, seed=0)
    init = MlpClassifier.initialize([2, 100, 100, 2], "relu", seed=0)
    V = bundle.validation
    pre, _, _ = fit_early_stopped(init, bundle.train, cfg,
                                  metric=lambda m: m.accuracy(V.features,
                                                              V.labels))
    ens = erd_fit(pre, bundle.train, bundle.unlabeled, bundle.validation, 2,
                  cfg)
    return bundle, ens


class TestDetect:
    def test_bands_tpr_at_calibrated_threshold(self, bands_run):
        from erdkit.metrics import threshold_for_fpr
        bundle, ens = bands_run
        val_scores = score_members(ens.members, bundle.validation.features)
        threshold = threshold_for_fpr(val_scores, 0.05)
        res = detect(ens, bundle.test, threshold)
        tpr = float(np.mean(res.flagged[bundle.test_truth]))
        fpr = float(np.mean(res.flagged[~bundle.test_truth]))
        assert tpr >= 0.95
        assert fpr <= 0.15  # loose sanity bound; calibration is on V

    def test_threshold_one_flags_nothing(self, blobs_bundle, blobs_ensemble):
        res = detect(blobs_ensemble, blobs_bundle.test, 1.0, "tdis_tv")
        assert not res.flagged.any()

    def test_threshold_minus_one_flags_everything(self, blobs_bundle,
                                                  blobs_ensemble):
        res = detect(blobs_ensemble, blobs_bundle.test, -1.0, "tdis_tv")
        assert res.flagged.all()

    def test_flag_iff_strictly_above(self, blobs_bundle, blobs_ensemble):
        res = detect(blobs_ensemble, blobs_bundle.test, 0.5)
        np.testing.assert_array_equal(res.flagged, res.scores > 0.5)

    def test_monotone_in_threshold(self, blobs_bundle, blobs_ensemble):
        lower = detect(blobs_ensemble, blobs_bundle.test, 0.2).flagged
        higher = detect(blobs_ensemble, blobs_bundle.test, 0.6).flagged
        assert not (higher & ~lower).any()

    def test_empty_ensemble(self, blobs_bundle):
        with pytest.raises(ValidationError, match="empty"):
            detect([], blobs_bundle.test, 0.5)

    def test_entropy_statistic_selectable(self, blobs_bundle, blobs_ensemble):
        res = detect(blobs_ensemble, blobs_bundle.test, 0.1, "entropy_avg")
        assert res.scores.shape == (len(blobs_bundle.test),)


def linear_member(slope_at):
    """2-class linear model whose class-1 region is x > slope_at."""
    s = 30.0
    w = np.array([[-s / 2.0, s / 2.0], [0.0, 0.0]])
    b = np.array([s / 2.0 * slope_at, -s / 2.0 * slope_at])
    return MlpClassifier([2, 2], [w], [b])


class TestGridEval:
    def test_constant_model_constant_grid(self):
        model = MlpClassifier([2, 2], [np.zeros((2, 2))],
                              [np.array([2.0, 0.0])])
        grid = grid_eval(model, ((-1, 1), (-1, 1)), 5)
        assert np.all(grid.member_labels == 0)
        assert np.all(grid.scores == 0.0)

    def test_resolution_one_hits_center(self):
        model = MlpClassifier([2, 2], [np.zeros((2, 2))], [np.zeros(2)])
        grid = grid_eval(model, ((0.0, 2.0), (-4.0, 0.0)), 1)
        assert grid.xs.tolist() == [1.0]
        assert grid.ys.tolist() == [-2.0]

    def test_mirrored_boundaries_disagree_in_band(self):
        members = [linear_member(0.5), linear_member(-0.5)]
        grid = grid_eval(members, ((-2, 2), (-1, 1)), 40)
        inside = np.abs(grid.xs) < 0.4
        outside = np.abs(grid.xs) > 0.7
        assert grid.scores[inside].min() > grid.scores[outside].max()

    def test_non_2d_model_rejected(self):
        model = MlpClassifier.initialize([3, 4, 2], "relu", seed=0)
        with pytest.raises(ShapeError):
            grid_eval(model, ((-1, 1), (-1, 1)), 4)

    def test_csv_export(self, tmp_path):
        members = [linear_member(0.5), linear_member(-0.5)]
        grid = grid_eval(members, ((-2, 2), (-1, 1)), 3)
        path = tmp_path / "grid.csv"
        write_grid_csv(grid, path)
        header = path.read_text().splitlines()[0]
        assert header == "x,y,member0_label,member1_label,tdis"


class TestEnsembleIO:
    def test_round_trip(self, tmp_path, blobs_ensemble):
        save_ensemble(blobs_ensemble, tmp_path)
        back = load_ensemble(tmp_path)
        assert back.stop_epochs == blobs_ensemble.stop_epochs
        assert np.array_equal(back.artificial_labels,
                              blobs_ensemble.artificial_labels)
        X = np.random.default_rng(0).normal(size=(20, 2))
        np.testing.assert_allclose(
            score_members(back.members, X),
            score_members(blobs_ensemble.members, X), atol=1e-12)

    def test_distinct_labels_enforced(self):
        m = MlpClassifier.initialize([2, 2], "relu", seed=0)
        with pytest.raises(ValidationError):
            ErdEnsemble(members=[m, m], artificial_labels=np.array([0, 0]),
                        stop_epochs=[1, 1])


class TestLearningCurves:
    def test_rows_split_by_truth(self, blobs_bundle, blobs_ensemble):
        rows = learning_curve_rows(blobs_ensemble.traces[0],
                                   int(blobs_ensemble.artificial_labels[0]),
                                   blobs_bundle.unlabeled_truth)
        assert rows[0]["epoch"] == 0
        assert len(rows) == len(blobs_ensemble.traces[0])
        for row in rows:
            for key in ("val_acc", "acc_S", "acc_U_c_on_ood", "acc_U_c_on_id"):
                assert 0.0 <= row[key] <= 1.0
