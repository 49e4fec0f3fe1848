import pytest

from erdkit.errors import ValidationError
from erdkit.verifier import check_rho_bound, run_propcheck


class TestRhoBound:
    def test_default_preset_passes(self):
        check_rho_bound(0.05, 3)

    def test_half_violates_for_three_classes(self):
        with pytest.raises(ValidationError, match="rho"):
            check_rho_bound(0.5, 3)

    def test_run_rejects_bad_rho(self):
        with pytest.raises(ValidationError):
            run_propcheck({"rho": 0.5, "num_seeds": 1})


class TestRunPropcheck:
    def test_zero_rho_succeeds_vacuously(self):
        report = run_propcheck({"rho": 0.0, "num_seeds": 1,
                                "hidden_units": 1024, "mc_samples": 2000})
        rec = report["per_seed"][0]
        assert rec["counts"]["noisy"] == 0
        assert rec["success"]

    def test_small_run_finds_phase(self):
        report = run_propcheck({"num_seeds": 2, "hidden_units": 1024,
                                "mc_samples": 2000})
        assert report["success_rate"] == 1.0
        for rec in report["per_seed"]:
            assert rec["counts"]["noisy"] > 0
            assert 1 <= rec["first_good_epoch"] <= 3 * rec["t_stop"]

    def test_noisy_fraction_respects_rho(self):
        report = run_propcheck({"num_seeds": 1, "hidden_units": 512,
                                "mc_samples": 2000})
        cfg = report["config"]
        rec = report["per_seed"][0]
        per_cluster = cfg["n"] // cfg["k_clusters"]
        id_clusters = cfg["k_clusters"] - cfg["n_ood_clusters"]
        max_noisy = int(cfg["rho"] * per_cluster) * id_clusters
        assert rec["counts"]["noisy"] <= max_noisy
