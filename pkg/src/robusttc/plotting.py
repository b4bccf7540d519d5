"""Matplotlib figures written next to the CSV/JSON outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "figure.figsize": (6.4, 4.0),
    "figure.dpi": 120,
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
    "savefig.bbox": "tight",
}
MARKERS = {"FGSM": "o", "PGD": "s"}


def _save(fig, path):
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_robustness(path, before, after=()):
    """Accuracy (%) against epsilon; solid lines before, dashed after fine-tuning."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for reports, ls, tag in ((before, "-", "before"), (after, "--", "after")):
            for rep in reports:
                for kind, vals in rep.rows.items():
                    ax.plot(rep.grid, [100 * v for v in vals], ls, marker=MARKERS.get(kind, "."),
                            label=f"{kind} {rep.model_name} ({tag})")
        ax.set_xlabel("epsilon (l-inf, normalized bytes)")
        ax.set_ylabel("accuracy (%)")
        ax.set_ylim(0, 101)
        ax.legend(fontsize=7, ncol=2)
        return _save(fig, path)


def plot_delta(path, deltas):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for d in deltas:
            for kind, vals in d.rows.items():
                ax.plot(d.grid, [100 * v for v in vals], marker=MARKERS.get(kind, "."),
                        label=f"{kind} {d.model_name}")
        ax.axhline(0, color="0.4", lw=0.8)
        ax.set_xlabel("epsilon")
        ax.set_ylabel("accuracy gain (points)")
        ax.legend(fontsize=8)
        return _save(fig, path)


def plot_history(path, history, title=""):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        epochs = range(1, len(history.val_accuracy) + 1)
        ax.plot(epochs, history.train_loss, color="C0", label="train loss")
        ax.set_xlabel("epoch")
        ax.set_ylabel("loss")
        ax2 = ax.twinx()
        ax2.plot(epochs, history.val_accuracy, color="C1", label="val score")
        ax2.set_ylabel("validation score")
        ax2.grid(False)
        if history.best_epoch >= 0:
            ax2.axvline(history.best_epoch + 1, color="0.5", ls=":", lw=0.8)
        if title:
            ax.set_title(title)
        return _save(fig, path)


def plot_search(path, slog):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for g in slog.generations:
            accs = [c.val_accuracy for c in g.trained]
            ax.scatter([g.generation] * len(accs), accs, s=8, color="C0", alpha=0.6)
        ax.plot([g.generation for g in slog.generations], slog.best_curve(), color="C3", label="global best")
        ax.set_xlabel("generation")
        ax.set_ylabel("validation accuracy")
        ax.legend()
        return _save(fig, path)
