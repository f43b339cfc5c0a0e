"""Leave-one-patient-out evaluation of every experiment arm.

Four labelers are compared: the weakly supervised forest (label model
posteriors crisped into training labels), its fully supervised counterpart
(ground truth labels), a majority-vote labeler, and the label model's raw
posteriors with no end classifier. Each can run with or without
waveform-derived features; heuristics keep waveform access either way.

Scores are pooled across folds before computing metrics, matching a single
operating curve per arm; a per-fold breakdown is emitted alongside for
inspection. All fits (missingness policy, label model, forest) happen per
fold on training rows only.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from .alerts import AlertCriteria, AlertWindow, detect_alert_events, windows_from_event
from .context import WindowContext, build_window_context
from .data import PatientRecord
from .dsp import DspParams
from .errors import MissingLabelError, SingleClassError, VitalwsError
from .features import (
    extract_features,
    feature_schema,
    fit_missingness_policy,
    waveform_feature_names,
)
from .forest import RandomForestHyper, TrainedForest, feature_importance, train_random_forest
from .label_model import (
    LabelModelHyper,
    majority_vote_batch,
    posterior_batch,
    fit_label_model,
    to_crisp_labels,
)
from .labeling import LfThresholds, VoteMatrix, apply_labeling_functions, lf_suite

WEAK_SUP = "weak_sup"
FULLY_SUP = "fully_sup"
MAJORITY_VOTE = "majority_vote"
PROB_LABELS = "prob_labels"
LABELERS = (WEAK_SUP, FULLY_SUP, MAJORITY_VOTE, PROB_LABELS)

WITH_WAVEFORM = "with_waveform"
WITHOUT_WAVEFORM = "without_waveform"
ABLATIONS = (WITH_WAVEFORM, WITHOUT_WAVEFORM)


@dataclass(frozen=True)
class ExperimentArm:
    tau: str
    labeler: str
    ablation: str = WITH_WAVEFORM

    def __post_init__(self) -> None:
        if self.labeler not in LABELERS:
            raise ValueError(f"unknown labeler {self.labeler!r}")
        if self.ablation not in ABLATIONS:
            raise ValueError(f"unknown ablation {self.ablation!r}")
        if self.labeler == PROB_LABELS and self.ablation == WITHOUT_WAVEFORM:
            raise ValueError("the posterior-only arm has no classifier to ablate")

    @property
    def key(self) -> str:
        return f"{self.tau}_{self.labeler}_{self.ablation}"


def default_arms(taus: Sequence[str]) -> list[ExperimentArm]:
    arms = []
    for tau in taus:
        for labeler in (WEAK_SUP, MAJORITY_VOTE, FULLY_SUP, PROB_LABELS):
            arms.append(ExperimentArm(tau, labeler, WITH_WAVEFORM))
        for labeler in (WEAK_SUP, FULLY_SUP, MAJORITY_VOTE):
            arms.append(ExperimentArm(tau, labeler, WITHOUT_WAVEFORM))
    return arms


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RocCurve:
    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    n_pos: int
    n_neg: int
    auc: float


def roc_and_auc(scores: np.ndarray, labels: np.ndarray) -> RocCurve:
    """Threshold sweep over the distinct scores (predict positive at
    score >= threshold); AUC by the trapezoid rule, which equals the
    tie-corrected rank statistic."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=int)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise SingleClassError("ROC needs both classes present")
    order = np.argsort(-scores, kind="stable")
    s, y = scores[order], labels[order]
    tp = np.cumsum(y == 1)
    fp = np.cumsum(y == 0)
    # one point per distinct score: the last index of each tie group
    last = np.flatnonzero(np.diff(s) != 0)
    cut = np.concatenate([last, [s.size - 1]])
    thresholds = np.concatenate([[np.inf], s[cut]])
    tpr = np.concatenate([[0.0], tp[cut] / n_pos])
    fpr = np.concatenate([[0.0], fp[cut] / n_neg])
    auc = float(np.trapezoid(tpr, fpr))
    return RocCurve(thresholds, fpr, tpr, n_pos, n_neg, auc)


def operating_point_metrics(roc: RocCurve) -> dict[str, float]:
    """Operating points read off the swept curve, no interpolation."""
    tnr = 1.0 - roc.fpr
    fnr = 1.0 - roc.tpr
    return {
        "fpr_at_50tpr": float(roc.fpr[roc.tpr >= 0.5].min()),
        "fnr_at_50tnr": float(fnr[tnr >= 0.5].min()),
        "tpr_at_1fpr": float(roc.tpr[roc.fpr <= 0.01].max()),
        "tnr_at_1fnr": float(tnr[fnr <= 0.01].max()),
    }


def wilson_interval(successes: int, n: int, z: float = 1.96) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        raise ValueError("n must be positive")
    if not 0 <= successes <= n:
        raise ValueError("successes must lie in [0, n]")
    p = successes / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1.0 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def lopo_folds(windows: Sequence[AlertWindow]) -> list[tuple[list[str], list[str]]]:
    """One (train ids, test ids) pair per patient; windows of one parent
    event always land on the same side."""
    by_patient: dict[str, list[str]] = {}
    for w in windows:
        by_patient.setdefault(w.patient_id, []).append(w.row_id)
    if len(by_patient) < 2:
        raise ValueError("leave-one-patient-out needs at least two patients")
    all_ids = [w.row_id for w in windows]
    folds = []
    for patient in sorted(by_patient):
        test = set(by_patient[patient])
        folds.append(
            ([rid for rid in all_ids if rid not in test],
             [rid for rid in all_ids if rid in test])
        )
    return folds


# ---------------------------------------------------------------------------
# Experiment orchestration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentSettings:
    """Everything run_experiment needs besides the data itself."""

    seed: int
    class_balance: float
    criteria: AlertCriteria = field(default_factory=AlertCriteria)
    dsp: DspParams = field(default_factory=DspParams)
    lf_thresholds: LfThresholds = field(default_factory=LfThresholds)
    label_model: LabelModelHyper = field(default_factory=LabelModelHyper)
    forest: RandomForestHyper = field(default_factory=RandomForestHyper)
    importance_repeats: int = 5
    workers: int | None = None


@dataclass
class ArmResult:
    arm: ExperimentArm
    row_ids: list[str]
    scores: np.ndarray
    labels: np.ndarray
    metrics: dict[str, float]
    roc: RocCurve
    tpr_bands: np.ndarray  # (k, 2) Wilson bounds on TPR per ROC point
    tnr_bands: np.ndarray
    per_fold: pd.DataFrame


@dataclass
class EvaluationReport:
    arms: dict[str, ArmResult]
    importances: dict[str, list[tuple[str, float]]]
    n_windows: dict[str, int]
    settings: ExperimentSettings


@dataclass
class _TauData:
    tau: str
    row_ids: list[str]
    patients: list[str]
    y: np.ndarray
    votes: VoteMatrix
    features: list[dict[str, float]]
    folds: list[tuple[np.ndarray, np.ndarray]]  # positional indices


def _labeled_windows(
    records: Sequence[PatientRecord],
    labels: dict[str, int],
    tau: str,
    criteria: AlertCriteria,
) -> list[AlertWindow]:
    windows: list[AlertWindow] = []
    for record in records:
        for event in detect_alert_events(record, tau, criteria):
            if event.pid not in labels:
                raise MissingLabelError(f"event {event.pid} has no ground truth label")
            windows.extend(windows_from_event(replace(event, y=labels[event.pid])))
    return windows


def _prepare_tau(
    records: Sequence[PatientRecord],
    labels: dict[str, int],
    tau: str,
    settings: ExperimentSettings,
) -> _TauData:
    windows = _labeled_windows(records, labels, tau, settings.criteria)
    by_id = {r.patient_id: r for r in records}
    contexts: list[WindowContext] = [
        build_window_context(by_id[w.patient_id], w, settings.dsp) for w in windows
    ]
    votes = apply_labeling_functions(lf_suite(tau, settings.lf_thresholds), contexts)
    features = [extract_features(ctx, tau) for ctx in contexts]
    id_pos = {rid: i for i, rid in enumerate(votes.row_ids)}
    folds = [
        (np.array([id_pos[r] for r in train]), np.array([id_pos[r] for r in test]))
        for train, test in lopo_folds(windows)
    ]
    return _TauData(
        tau=tau,
        row_ids=list(votes.row_ids),
        patients=[w.patient_id for w in windows],
        y=np.array([w.y for w in windows], dtype=int),
        votes=votes,
        features=features,
        folds=folds,
    )


def _arm_seed(settings: ExperimentSettings, arm: ExperimentArm, fold: int) -> int:
    entropy = [
        settings.seed,
        0 if arm.tau == "RR" else 1,
        LABELERS.index(arm.labeler),
        ABLATIONS.index(arm.ablation),
        fold,
    ]
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


def _fold_scores(
    data: _TauData, fold_idx: int, arms: list[ExperimentArm], settings: ExperimentSettings
) -> dict[str, np.ndarray]:
    """Test-row scores for every arm of one fold."""
    train_idx, test_idx = data.folds[fold_idx]
    train_votes = VoteMatrix(
        data.votes.votes[train_idx],
        [data.row_ids[i] for i in train_idx],
        data.votes.lf_names,
    )
    needs_lm = any(a.labeler in (WEAK_SUP, PROB_LABELS) for a in arms)
    params = (
        fit_label_model(train_votes, settings.class_balance, settings.label_model)
        if needs_lm
        else None
    )

    out: dict[str, np.ndarray] = {}
    for arm in arms:
        try:
            if arm.labeler == PROB_LABELS:
                probs = posterior_batch(params, data.votes)
                out[arm.key] = np.array([probs[i].p_artifact for i in test_idx])
                continue
            if arm.labeler == WEAK_SUP:
                crisp = to_crisp_labels(posterior_batch(params, train_votes))
            elif arm.labeler == MAJORITY_VOTE:
                crisp = to_crisp_labels(
                    majority_vote_batch(train_votes, settings.class_balance)
                )
            else:  # FULLY_SUP
                crisp = {
                    data.row_ids[i]: int(data.y[i]) for i in train_idx
                }
            train_rows = [i for i in train_idx if data.row_ids[i] in crisp]
            y_train = np.array([crisp[data.row_ids[i]] for i in train_rows], dtype=int)

            schema = feature_schema(data.tau)
            if arm.ablation == WITHOUT_WAVEFORM:
                drop = waveform_feature_names(data.tau)
                schema = [f for f in schema if f not in drop]
            policy = fit_missingness_policy(
                [data.features[i] for i in train_rows], schema
            )
            x_train = policy.apply([data.features[i] for i in train_rows])
            x_test = policy.apply([data.features[i] for i in test_idx])
            hyper = RandomForestHyper(
                trees=settings.forest.trees,
                max_depth=settings.forest.max_depth,
                seed=_arm_seed(settings, arm, fold_idx),
            )
            forest = train_random_forest(x_train, y_train, policy.kept, hyper)
            out[arm.key] = forest.predict_proba(x_test)
        except VitalwsError as exc:
            raise type(exc)(
                f"fold {fold_idx} ({data.tau}), arm {arm.key}: {exc}"
            ) from exc
    return out


def _fold_job(args):
    return _fold_scores(*args)


def _full_fit_forest(
    data: _TauData, labeler: str, settings: ExperimentSettings
) -> tuple[TrainedForest, np.ndarray, np.ndarray]:
    """Forest refit on the whole cohort, for importance diagnostics only."""
    if labeler == FULLY_SUP:
        crisp = {rid: int(y) for rid, y in zip(data.row_ids, data.y)}
    elif labeler == WEAK_SUP:
        params = fit_label_model(data.votes, settings.class_balance, settings.label_model)
        crisp = to_crisp_labels(posterior_batch(params, data.votes))
    else:
        raise ValueError(f"importances are computed for {WEAK_SUP} and {FULLY_SUP} only")
    rows = [i for i, rid in enumerate(data.row_ids) if rid in crisp]
    policy = fit_missingness_policy(
        [data.features[i] for i in rows], feature_schema(data.tau)
    )
    x = policy.apply([data.features[i] for i in rows])
    y = np.array([crisp[data.row_ids[i]] for i in rows], dtype=int)
    arm = ExperimentArm(data.tau, labeler, WITH_WAVEFORM)
    hyper = RandomForestHyper(
        settings.forest.trees, settings.forest.max_depth,
        _arm_seed(settings, arm, fold=10**6),
    )
    return train_random_forest(x, y, policy.kept, hyper), x, y


def run_experiment(
    records: Sequence[PatientRecord],
    labels: dict[str, int],
    arms: Sequence[ExperimentArm],
    settings: ExperimentSettings,
) -> EvaluationReport:
    taus = sorted({arm.tau for arm in arms}, reverse=True)  # RR before SPO2
    tau_data = {
        tau: _prepare_tau(records, labels, tau, settings) for tau in taus
    }

    jobs = []
    for tau in taus:
        data = tau_data[tau]
        tau_arms = [a for a in arms if a.tau == tau]
        for fold_idx in range(len(data.folds)):
            jobs.append((data, fold_idx, tau_arms, settings))

    workers = settings.workers
    if workers is None:
        workers = max(1, os.cpu_count() or 1)
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_fold_job, jobs, chunksize=1))
    else:
        results = [_fold_scores(*job) for job in jobs]

    # pool scores per arm in deterministic (fold, row) order
    pooled: dict[str, dict[str, list]] = {
        arm.key: {"idx": [], "scores": []} for arm in arms
    }
    for (data, fold_idx, tau_arms, _), result in zip(jobs, results):
        test_idx = data.folds[fold_idx][1]
        for arm in tau_arms:
            pooled[arm.key]["idx"].extend(test_idx.tolist())
            pooled[arm.key]["scores"].extend(result[arm.key].tolist())

    arm_results: dict[str, ArmResult] = {}
    for arm in arms:
        data = tau_data[arm.tau]
        idx = np.array(pooled[arm.key]["idx"], dtype=int)
        scores = np.array(pooled[arm.key]["scores"], dtype=float)
        y = data.y[idx]
        roc = roc_and_auc(scores, y)
        metrics = {
            "accuracy": float(((scores > 0.5).astype(int) == y).mean()),
            "auc": roc.auc,
            **operating_point_metrics(roc),
        }
        tpr_bands = np.array(
            [wilson_interval(round(t * roc.n_pos), roc.n_pos) for t in roc.tpr]
        )
        tnr_bands = np.array(
            [wilson_interval(round((1 - f) * roc.n_neg), roc.n_neg) for f in roc.fpr]
        )
        per_fold = _per_fold_frame(data, arm, pooled[arm.key])
        arm_results[arm.key] = ArmResult(
            arm=arm,
            row_ids=[data.row_ids[i] for i in idx],
            scores=scores,
            labels=y,
            metrics=metrics,
            roc=roc,
            tpr_bands=tpr_bands,
            tnr_bands=tnr_bands,
            per_fold=per_fold,
        )

    importances: dict[str, list[tuple[str, float]]] = {}
    for tau in taus:
        for labeler in (WEAK_SUP, FULLY_SUP):
            if not any(
                a.tau == tau and a.labeler == labeler and a.ablation == WITH_WAVEFORM
                for a in arms
            ):
                continue
            forest, x, y = _full_fit_forest(tau_data[tau], labeler, settings)
            for mode in ("GI", "PFI"):
                importances[f"{tau}_{labeler}_{mode}"] = feature_importance(
                    forest, x, y, mode=mode,
                    repeats=settings.importance_repeats,
                    seed=settings.seed,
                )

    return EvaluationReport(
        arms=arm_results,
        importances=importances,
        n_windows={tau: len(tau_data[tau].row_ids) for tau in taus},
        settings=settings,
    )


def _per_fold_frame(data: _TauData, arm: ExperimentArm, pool: dict) -> pd.DataFrame:
    idx = np.array(pool["idx"], dtype=int)
    scores = np.array(pool["scores"], dtype=float)
    rows = []
    pos = 0
    for train_idx, test_idx in data.folds:
        k = len(test_idx)
        fold_scores = scores[pos : pos + k]
        fold_y = data.y[idx[pos : pos + k]]
        pos += k
        entry = {
            "patient_id": data.patients[test_idx[0]],
            "n_test": k,
            "accuracy": float(((fold_scores > 0.5).astype(int) == fold_y).mean()),
        }
        if np.unique(fold_y).size == 2:
            entry["auc"] = roc_and_auc(fold_scores, fold_y).auc
        else:
            entry["auc"] = float("nan")
        rows.append(entry)
    return pd.DataFrame(rows)


# ---------------------------------------------------------------------------
# Report emission
# ---------------------------------------------------------------------------

METRIC_COLUMNS = [
    "accuracy", "auc", "fpr_at_50tpr", "fnr_at_50tnr", "tpr_at_1fpr", "tnr_at_1fnr",
]


def emit_report(report: EvaluationReport, out_dir: str | Path) -> list[Path]:
    """Write the metrics table, ROC point files (both orientations),
    per-fold breakdowns, importance rankings and log-scale ROC plots."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    rows = []
    for key in sorted(report.arms):
        res = report.arms[key]
        rows.append(
            {
                "tau": res.arm.tau,
                "arm": res.arm.labeler,
                "ablation": res.arm.ablation,
                **{c: res.metrics[c] for c in METRIC_COLUMNS},
            }
        )
    metrics_path = out_dir / "metrics.csv"
    pd.DataFrame(rows).to_csv(metrics_path, index=False)
    written.append(metrics_path)

    for key in sorted(report.arms):
        res = report.arms[key]
        roc = res.roc
        tpr_frame = pd.DataFrame(
            {
                "threshold": roc.thresholds,
                "fpr": roc.fpr,
                "tpr": roc.tpr,
                "tpr_lo": res.tpr_bands[:, 0],
                "tpr_hi": res.tpr_bands[:, 1],
            }
        )
        tnr_frame = pd.DataFrame(
            {
                "threshold": roc.thresholds,
                "fnr": 1.0 - roc.tpr,
                "tnr": 1.0 - roc.fpr,
                "tnr_lo": res.tnr_bands[:, 0],
                "tnr_hi": res.tnr_bands[:, 1],
            }
        )
        for suffix, frame in (("roc_tpr", tpr_frame), ("roc_tnr", tnr_frame)):
            path = out_dir / f"{key}_{suffix}.csv"
            frame.to_csv(path, index=False)
            written.append(path)
        fold_path = out_dir / f"{key}_per_fold.csv"
        res.per_fold.to_csv(fold_path, index=False)
        written.append(fold_path)

    for key in sorted(report.importances):
        frame = pd.DataFrame(report.importances[key], columns=["feature", "score"])
        path = out_dir / f"{key.lower()}_importance.csv"
        frame.to_csv(path, index=False)
        written.append(path)

    written.extend(_plot_roc_figures(report, out_dir))
    return written


_ARM_COLORS = {
    WEAK_SUP: "tab:red",
    MAJORITY_VOTE: "tab:green",
    FULLY_SUP: "tab:blue",
    PROB_LABELS: "tab:gray",
}


def _plot_roc_figures(report: EvaluationReport, out_dir: Path) -> list[Path]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    # fixed hash salt and no date metadata keep SVG output byte-stable
    matplotlib.rcParams["svg.hashsalt"] = "vitalws"

    written = []
    taus = sorted({res.arm.tau for res in report.arms.values()})
    for tau in taus:
        for orientation in ("tpr", "tnr"):
            fig, ax = plt.subplots(figsize=(5, 4))
            floor = 1.0
            for key in sorted(report.arms):
                res = report.arms[key]
                if res.arm.tau != tau:
                    continue
                if orientation == "tpr":
                    x, y = res.roc.fpr, res.roc.tpr
                    bands, n_axis = res.tpr_bands, res.roc.n_neg
                else:
                    x, y = 1.0 - res.roc.tpr, 1.0 - res.roc.fpr
                    bands, n_axis = res.tnr_bands, res.roc.n_pos
                eps = 1.0 / n_axis
                floor = min(floor, eps)
                xp = np.maximum(x, eps)
                style = "-" if res.arm.ablation == WITH_WAVEFORM else "--"
                label = res.arm.labeler + (
                    "" if res.arm.ablation == WITH_WAVEFORM else " (no wf)"
                )
                color = _ARM_COLORS[res.arm.labeler]
                ax.plot(xp, y, style, color=color, label=label, linewidth=1.2)
                ax.fill_between(xp, bands[:, 0], bands[:, 1], color=color, alpha=0.15)
            grid = np.logspace(np.log10(max(floor, 1e-4)), 0, 64)
            ax.plot(grid, grid, "-", color="dimgray", linewidth=1.0, label="random")
            ax.set_xscale("log")
            ax.set_xlim(max(floor, 1e-4), 1.0)
            ax.set_ylim(0.0, 1.02)
            if orientation == "tpr":
                ax.set_xlabel("false positive rate (log)")
                ax.set_ylabel("true positive rate")
            else:
                ax.set_xlabel("false negative rate (log)")
                ax.set_ylabel("true negative rate")
            ax.set_title(f"{tau} alerts")
            ax.legend(fontsize=7, loc="lower right")
            fig.tight_layout()
            path = out_dir / f"{tau}_roc_{orientation}.svg"
            fig.savefig(path, metadata={"Date": None})
            plt.close(fig)
            written.append(path)
    return written
