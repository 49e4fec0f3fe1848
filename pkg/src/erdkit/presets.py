"""Shipped run configurations.

Each preset is a complete config for the batch commands; a user config may
name one via {"preset": "..."} and override any key (dicts merge
recursively, other values replace). The ``expected`` blocks document the
metric ranges observed on the seeded reference runs; they are informational,
not enforced at run time.
"""

from __future__ import annotations

import copy

from .errors import ValidationError
from .verifier import DEFAULT_PROPCHECK

_COMMON_2D = {
    "model": {"hidden": [100, 100], "activation": "relu"},
    "train": {"learning_rate": 0.05, "batch_size": 64, "max_epochs": 30,
              "l2_coefficient": 0.0},
    "erd": {"k": 2},
    "baseline": {"vanilla_k": 5},
    "eval": {"target_fpr": 0.05, "grid_resolution": 80},
    "seed": 0,
}

PRESETS = {
    "bands-2d": {
        **copy.deepcopy(_COMMON_2D),
        "source": {"kind": "2d", "task": "bands", "n_id": 4000, "n_ood": 1600,
                   "noise": 0.25},
        "split": {"fractions": {"train": 0.35, "val": 0.1, "unlabeled_id": 0.25},
                  "ood_ratio": 0.5, "unlabeled_size": 1000, "test_size": 1000},
        "expected": {"erd_tdis_auroc": ">= 0.95 (observed ~1.00 over 5 seeds)",
                     "vanilla_entropy_auroc": "<= erd - 0.05 (observed ~0.00)"},
    },
    "bands5-2d": {
        **copy.deepcopy(_COMMON_2D),
        "source": {"kind": "2d", "task": "bands", "n_id": 5000, "n_ood": 1600,
                   "noise": 0.25, "n_classes": 5, "num_classes": 5},
        "split": {"fractions": {"train": 0.35, "val": 0.1, "unlabeled_id": 0.25},
                  "ood_ratio": 0.5, "unlabeled_size": 1000, "test_size": 1000},
        "train": {"learning_rate": 0.1, "batch_size": 64, "max_epochs": 40,
                  "l2_coefficient": 0.0},
        "erd": {"k": 3},
        "expected": {"erd_tdis_auroc": ">= 0.99 for ensemble sizes 2..5 "
                                       "(spread < 0.05)"},
    },
    "moons-2d": {
        **copy.deepcopy(_COMMON_2D),
        "source": {"kind": "2d", "task": "moons", "n_id": 4000, "n_ood": 1600,
                   "noise": 0.1},
        "split": {"fractions": {"train": 0.35, "val": 0.1, "unlabeled_id": 0.25},
                  "ood_ratio": 0.5, "unlabeled_size": 1000, "test_size": 1000},
        "expected": {"erd_tdis_auroc": ">= 0.9 (observed ~0.98)"},
    },
    "blobs-far-ood": {
        **copy.deepcopy(_COMMON_2D),
        "source": {"kind": "2d", "task": "blobs", "n_id": 2000, "n_ood": 800,
                   "noise": 0.15},
        "split": {"fractions": {"train": 0.4, "val": 0.1, "unlabeled_id": 0.2},
                  "ood_ratio": 0.5, "unlabeled_size": 300, "test_size": 300},
        "train": {"learning_rate": 0.05, "batch_size": 64, "max_epochs": 20,
                  "l2_coefficient": 0.0},
        "expected": {"erd_tdis_auroc": "~1.0",
                     "binary_auroc": ">= 0.99 (far OOD blob)"},
    },
    "clusterable-k6": {
        "source": {"kind": "clusterable", "k_clusters": 6, "dim": 16,
                   "epsilon": 0.05, "rho": 0.0,
                   "cluster_labels": [0, 1, 2, 0, 1, 3],
                   "ood_cluster_flags": [False, False, False, False, False, True],
                   "cluster_size": 1000, "num_classes": 3,
                   "alpha1": 0.5, "alpha2": 2.0},
        "split": {"fractions": {"train": 0.5, "val": 0.1, "unlabeled_id": 0.2},
                  "ood_ratio": 0.5, "unlabeled_size": 1000, "test_size": 1000},
        "model": {"hidden": [100, 100], "activation": "relu"},
        "train": {"learning_rate": 0.05, "batch_size": 64, "max_epochs": 15,
                  "l2_coefficient": 0.0},
        "erd": {"k": 3},
        "baseline": {"vanilla_k": 5},
        "eval": {"target_fpr": 0.05},
        "seed": 0,
        "expected": {"erd_tdis_auroc": ">= 0.9 for ood_ratio in "
                                       "{0.1, 0.25, 0.5} (observed 1.00)"},
    },
    "propcheck-default": dict(DEFAULT_PROPCHECK),
}


def preset_names():
    return sorted(PRESETS)


def _merge(base, override):
    out = copy.deepcopy(base)
    for key, val in override.items():
        if key in out and isinstance(out[key], dict) and isinstance(val, dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def resolve_config(config):
    """Expand a {"preset": name, ...overrides} config into a full one."""
    config = dict(config or {})
    name = config.pop("preset", None)
    if name is None:
        return config
    if name not in PRESETS:
        raise ValidationError(
            f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return _merge(PRESETS[name], config)
