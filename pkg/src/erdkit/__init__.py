"""erdkit: semi-supervised novelty detection with disagreement-regularized
ensembles, plus the clusterable-data verifier of the underlying
early-stopping phase.
"""

from .baselines import (BinaryDiscriminator, VanillaEnsemble, binary_fit,
                        vanilla_fit)
from .data import (ClusterableSpec, Dataset, SplitBundle, check_generated,
                   generate_clusterable, load_bundle, make_2d_ssnd_source,
                   make_ssnd_split, make_two_moons_like_2d, read_csv,
                   save_bundle, write_csv)
from .ensemble import (DetectionResult, ErdEnsemble, detect,
                       disagreement_statistic, entropy_avg_statistic, erd_fit,
                       grid_eval, load_ensemble, save_ensemble, score_members,
                       tv_distance)
from .errors import (DegenerateCentersError, NumericError, NumericFailure,
                     ParseError, ShapeError, SizeError, TrainingDivergedError,
                     ValidationError)
from .metrics import RocReport, auroc_bruteforce, roc, threshold_for_fpr
from .nnet import (FULL, MlpClassifier, TheoryNet, TrainConfig, backward,
                   fit_early_stopped, forward, load_checkpoint,
                   save_checkpoint, sgd_train, theory_schedule)
from .verifier import run_propcheck

__version__ = "0.1.0"

__all__ = [
    "BinaryDiscriminator", "VanillaEnsemble", "binary_fit", "vanilla_fit",
    "ClusterableSpec", "Dataset", "SplitBundle", "check_generated",
    "generate_clusterable", "load_bundle", "make_2d_ssnd_source",
    "make_ssnd_split", "make_two_moons_like_2d", "read_csv", "save_bundle",
    "write_csv", "DetectionResult", "ErdEnsemble", "detect",
    "disagreement_statistic", "entropy_avg_statistic", "erd_fit", "grid_eval",
    "load_ensemble", "save_ensemble", "score_members", "tv_distance",
    "DegenerateCentersError", "NumericError", "NumericFailure", "ParseError",
    "ShapeError", "SizeError", "TrainingDivergedError", "ValidationError",
    "RocReport", "auroc_bruteforce", "roc", "threshold_for_fpr", "FULL",
    "MlpClassifier", "TheoryNet", "TrainConfig", "backward",
    "fit_early_stopped", "forward", "load_checkpoint", "save_checkpoint",
    "sgd_train", "theory_schedule", "run_propcheck", "__version__",
]
