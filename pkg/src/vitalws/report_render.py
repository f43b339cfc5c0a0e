"""Re-render report figures from a persisted bundle of ROC CSVs."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pandas as pd

from .errors import DataFormatError

_COLORS = {
    "weak_sup": "tab:red",
    "majority_vote": "tab:green",
    "fully_sup": "tab:blue",
    "prob_labels": "tab:gray",
}


def _parse_key(stem: str) -> tuple[str, str, str] | None:
    # {tau}_{labeler}_{ablation}_roc_{orientation}
    for labeler in _COLORS:
        for ablation in ("with_waveform", "without_waveform"):
            suffix = f"_{labeler}_{ablation}"
            if suffix in stem:
                tau = stem.split(suffix)[0]
                return tau, labeler, ablation
    return None


def render_from_bundle(report_dir: str | Path) -> list[Path]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "vitalws"

    report_dir = Path(report_dir)
    written = []
    for orientation, rate_col, band_cols, xlabel, ylabel in (
        ("tpr", ("fpr", "tpr"), ("tpr_lo", "tpr_hi"),
         "false positive rate (log)", "true positive rate"),
        ("tnr", ("fnr", "tnr"), ("tnr_lo", "tnr_hi"),
         "false negative rate (log)", "true negative rate"),
    ):
        files = sorted(report_dir.glob(f"*_roc_{orientation}.csv"))
        if not files:
            raise DataFormatError(f"no ROC CSVs under {report_dir}")
        by_tau: dict[str, list[tuple[str, str, pd.DataFrame]]] = {}
        for path in files:
            parsed = _parse_key(path.stem)
            if parsed is None:
                continue
            tau, labeler, ablation = parsed
            by_tau.setdefault(tau, []).append((labeler, ablation, pd.read_csv(path)))
        for tau, curves in sorted(by_tau.items()):
            fig, ax = plt.subplots(figsize=(5, 4))
            floor = 1e-4
            for labeler, ablation, frame in curves:
                x = np.maximum(frame[rate_col[0]].to_numpy(), 1e-4)
                y = frame[rate_col[1]].to_numpy()
                style = "-" if ablation == "with_waveform" else "--"
                label = labeler + ("" if ablation == "with_waveform" else " (no wf)")
                ax.plot(x, y, style, color=_COLORS[labeler], label=label, linewidth=1.2)
                ax.fill_between(
                    x, frame[band_cols[0]], frame[band_cols[1]],
                    color=_COLORS[labeler], alpha=0.15,
                )
            grid = np.logspace(np.log10(floor), 0, 64)
            ax.plot(grid, grid, "-", color="dimgray", linewidth=1.0, label="random")
            ax.set_xscale("log")
            ax.set_xlim(floor, 1.0)
            ax.set_ylim(0.0, 1.02)
            ax.set_xlabel(xlabel)
            ax.set_ylabel(ylabel)
            ax.set_title(f"{tau} alerts")
            ax.legend(fontsize=7, loc="lower right")
            fig.tight_layout()
            path = report_dir / f"{tau}_roc_{orientation}.svg"
            fig.savefig(path, metadata={"Date": None})
            plt.close(fig)
            written.append(path)
    return written
