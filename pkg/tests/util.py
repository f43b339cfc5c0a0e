"""Shared signal builders and independent oracles for the test suite.

Oracles here are deliberately naive (loops, direct definitions) so they
stay independent of the library's vectorized implementations.
"""

from __future__ import annotations

import numpy as np

from vitalws.alerts import AlertWindow
from vitalws.context import WindowContext
from vitalws.data import CHANNEL_SPECS, Channel, PatientRecord, slice_window
from vitalws.dsp import DerivedEstimates


def tone(freq_hz: float, fs: float, duration_s: float, amp: float = 1.0, phase: float = 0.0):
    t = np.arange(int(duration_s * fs)) / fs
    return amp * np.sin(2 * np.pi * freq_hz * t + phase)


def pulse_train(freq_hz: float, fs: float, duration_s: float,
                am_freq_hz: float = 0.0, am_depth: float = 0.0, amp: float = 1.0):
    """Pleth-like positive pulses with optional amplitude modulation."""
    t = np.arange(int(duration_s * fs)) / fs
    carrier = (0.5 - 0.5 * np.cos(2 * np.pi * freq_hz * t)) ** 3
    modulation = 1.0 + am_depth * np.sin(2 * np.pi * am_freq_hz * t)
    return amp * modulation * carrier


def spike_train(freq_hz: float, fs: float, duration_s: float, width_s: float = 0.02):
    """ECG-like narrow positive spikes at the beat rate."""
    t = np.arange(int(duration_s * fs)) / fs
    phase = np.mod(freq_hz * t, 1.0)
    return np.exp(-0.5 * ((phase - 0.5) / (width_s * freq_hz)) ** 2)


def full_channel(name: str, values: np.ndarray, start_index: int = 0) -> Channel:
    kind, rates = CHANNEL_SPECS[name]
    idx = np.arange(start_index, start_index + len(values), dtype=np.int64)
    return Channel(name, kind, rates[0], idx, np.asarray(values, dtype=float))


def record_of(patient_id: str, **arrays) -> PatientRecord:
    """PatientRecord from channel-name -> value-array keyword arguments."""
    channels = {name: full_channel(name, vals) for name, vals in arrays.items()}
    return PatientRecord(patient_id, channels)


def make_context(
    record: PatientRecord,
    start_s: float = 0.0,
    duration_s: float = 60.0,
    estimates: DerivedEstimates | None = None,
    tau: str = "RR",
    telemetric: bool = False,
) -> WindowContext:
    """Window context with estimates supplied directly (bypassing dsp)."""
    window = AlertWindow(
        parent=f"{record.patient_id}-{tau}-0",
        patient_id=record.patient_id,
        tau=tau,
        window_index=0,
        start_s=start_s,
        duration_s=duration_s,
        telemetric=telemetric,
    )
    view = slice_window(record, start_s, duration_s)
    return WindowContext(
        window=window,
        view=view,
        declared_channels=frozenset(record.channels),
        estimates=estimates or DerivedEstimates(),
    )


# ---------------------------------------------------------------------------
# Oracles
# ---------------------------------------------------------------------------

def prominence_oracle(x: np.ndarray, i: int) -> float:
    """Topographic prominence of a strict local maximum, by definition."""
    left_min = x[i]
    for j in range(i - 1, -1, -1):
        if x[j] > x[i]:
            break
        left_min = min(left_min, x[j])
    else:
        left_min = min(left_min, x[: i + 1].min())
    right_min = x[i]
    for j in range(i + 1, len(x)):
        if x[j] > x[i]:
            break
        right_min = min(right_min, x[j])
    else:
        right_min = min(right_min, x[i:].min())
    return x[i] - max(left_min, right_min)


def local_maxima_oracle(x: np.ndarray) -> list[int]:
    return [i for i in range(1, len(x) - 1) if x[i - 1] < x[i] > x[i + 1]]


def roc_sweep_oracle(scores: np.ndarray, labels: np.ndarray):
    """Naive ROC: one point per distinct score, predicting positive at
    score >= threshold; returns (thresholds, fpr, tpr, auc)."""
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    thresholds = [np.inf] + sorted(set(scores.tolist()), reverse=True)
    fpr, tpr = [], []
    for thr in thresholds:
        pred = scores >= thr
        tp = int(((pred == 1) & (labels == 1)).sum())
        fp = int(((pred == 1) & (labels == 0)).sum())
        tpr.append(tp / n_pos)
        fpr.append(fp / n_neg)
    auc = 0.0
    for k in range(1, len(thresholds)):
        auc += (fpr[k] - fpr[k - 1]) * (tpr[k] + tpr[k - 1]) / 2
    return np.array(thresholds), np.array(fpr), np.array(tpr), auc


def operating_points_oracle(fpr: np.ndarray, tpr: np.ndarray) -> dict[str, float]:
    tnr, fnr = 1.0 - fpr, 1.0 - tpr
    return {
        "fpr_at_50tpr": min(f for f, t in zip(fpr, tpr) if t >= 0.5),
        "fnr_at_50tnr": min(fn for fn, tn in zip(fnr, tnr) if tn >= 0.5),
        "tpr_at_1fpr": max(t for f, t in zip(fpr, tpr) if f <= 0.01),
        "tnr_at_1fnr": max(tn for fn, tn in zip(fnr, tnr) if fn <= 0.01),
    }


def enumerate_label_model(votes_row, theta_acc, theta_prop, class_balance):
    """Marginal likelihood and posterior of one vote row by enumerating the
    full vote-configuration normalizer (3^m terms)."""
    import itertools

    m = len(votes_row)

    def weight(row, y):
        s = 0.0
        for j, lam in enumerate(row):
            s += theta_acc[j] * (lam == y) + theta_prop[j] * (lam != -1)
        return np.exp(s)

    z = {
        y: sum(weight(r, y) for r in itertools.product([-1, 0, 1], repeat=m))
        for y in (0, 1)
    }
    like = {y: weight(tuple(votes_row), y) / z[y] for y in (0, 1)}
    marginal = (1 - class_balance) * like[0] + class_balance * like[1]
    posterior = class_balance * like[1] / marginal
    return marginal, posterior
