"""Figure rendering for the report paths. Every CLI command that emits
delimited output also drops a PNG next to it; the CSV/JSON files stay the
machine-readable interface.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=130, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_roc(report, path, title="ROC"):
    fig, ax = plt.subplots(figsize=(4.2, 4))
    ax.plot(report.fpr, report.tpr, lw=1.8)
    ax.plot([0, 1], [0, 1], ls="--", c="gray", lw=0.8)
    ax.set_xlabel("FPR")
    ax.set_ylabel("TPR")
    ax.set_title(f"{title}  AUROC={report.auroc:.3f}  TNR@95={report.tnr_at_tpr95:.3f}")
    ax.set_xlim(-0.02, 1.02)
    ax.set_ylim(-0.02, 1.02)
    return _save(fig, path)


def plot_score_histograms(scores_id, scores_ood, path, threshold=None,
                          title="detection scores"):
    fig, ax = plt.subplots(figsize=(5, 3.2))
    bins = np.histogram_bin_edges(np.concatenate([scores_id, scores_ood]), bins=40)
    ax.hist(scores_id, bins=bins, alpha=0.6, label="ID", density=True)
    ax.hist(scores_ood, bins=bins, alpha=0.6, label="OOD", density=True)
    if threshold is not None:
        ax.axvline(threshold, color="k", ls="--", lw=1, label="threshold")
    ax.set_xlabel("score")
    ax.set_ylabel("density")
    ax.set_title(title)
    ax.legend()
    return _save(fig, path)


def plot_learning_curves(rows_per_member, stop_epochs, path):
    """One panel per member: validation accuracy, train-set accuracy, and the
    fraction of unlabeled OOD / ID points predicted as the member's
    artificial label, with the chosen stopping epoch marked."""
    k = len(rows_per_member)
    fig, axes = plt.subplots(1, k, figsize=(4.2 * k, 3.4), squeeze=False)
    for i, rows in enumerate(rows_per_member):
        ax = axes[0][i]
        epochs = [r["epoch"] for r in rows]
        for key, style in (("val_acc", "-o"), ("acc_S", "-s"),
                           ("acc_U_c_on_ood", "-^"), ("acc_U_c_on_id", "-v")):
            vals = [r[key] for r in rows]
            if all(np.isnan(v) for v in vals):
                continue
            ax.plot(epochs, vals, style, ms=3, lw=1.2, label=key)
        ax.axvline(stop_epochs[i], color="k", ls="--", lw=1)
        ax.set_xlabel("epoch")
        ax.set_ylabel("accuracy")
        ax.set_ylim(-0.05, 1.05)
        ax.set_title(f"member {i} (stop={stop_epochs[i]})")
        ax.legend(fontsize=7)
    return _save(fig, path)


def plot_sweep(values, aurocs, tnrs, axis_name, path):
    fig, ax = plt.subplots(figsize=(4.6, 3.4))
    ax.plot(values, aurocs, "-o", label="AUROC")
    ax.plot(values, tnrs, "-s", label="TNR@95")
    ax.set_xlabel(axis_name)
    ax.set_ylabel("metric")
    ax.set_ylim(-0.05, 1.05)
    ax.set_title(f"detection vs {axis_name}")
    ax.legend()
    return _save(fig, path)


def plot_grid(grid, path, bundle=None):
    """Disagreement heatmap plus per-member decision maps on the 2D grid."""
    nx, ny = grid.resolution
    k = grid.member_labels.shape[0]
    fig, axes = plt.subplots(1, k + 1, figsize=(3.6 * (k + 1), 3.2),
                             squeeze=False)
    extent = (grid.xs.min(), grid.xs.max(), grid.ys.min(), grid.ys.max())
    im = axes[0][0].imshow(grid.scores.reshape(ny, nx), origin="lower",
                           extent=extent, aspect="auto", cmap="magma")
    axes[0][0].set_title("disagreement")
    fig.colorbar(im, ax=axes[0][0], shrink=0.8)
    for i in range(k):
        ax = axes[0][i + 1]
        ax.imshow(grid.member_labels[i].reshape(ny, nx), origin="lower",
                  extent=extent, aspect="auto", cmap="coolwarm")
        ax.set_title(f"member {i} argmax")
    if bundle is not None:
        for ax in axes[0]:
            ax.scatter(bundle.train.features[:, 0], bundle.train.features[:, 1],
                       s=2, c="white", alpha=0.25, linewidths=0)
    return _save(fig, path)


def plot_propcheck(report, path):
    """Per-seed windows of the fully-fit-yet-noise-free epochs."""
    per_seed = report["per_seed"]
    fig, ax = plt.subplots(figsize=(6, 3.4))
    for idx, rec in enumerate(per_seed):
        if rec["success"]:
            ax.barh(idx, rec["last_good_epoch"] - rec["first_good_epoch"] + 1,
                    left=rec["first_good_epoch"], color="tab:green", height=0.6)
        ax.plot([rec["t_stop"]], [idx], "k|", ms=10)
    ax.set_xlabel("epoch (| marks scheduled stop)")
    ax.set_ylabel("seed index")
    ax.set_title(f"regularized-disagreement window, "
                 f"success rate {report['success_rate']:.2f}")
    return _save(fig, path)
