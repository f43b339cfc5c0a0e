"""Window featurization and the train-fold missingness policy.

Each window yields seven aggregate statistics per raw channel (mean, std,
kurtosis, skewness, median, first and third quartile) plus the
waveform-derived numerics. Respiratory-rate alerts omit every feature
sourced from the ART, telemetric-pleth, ECG-lead-III or telemetric-SpO2
channels; oxygen-saturation alerts omit only ART-sourced features. Absent
data stays absent until a policy, fitted on training rows only, drops
features missing in more than 75% of rows and imputes the rest with a
sentinel outside the feature's observed range.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .context import WindowContext

AGGREGATES = ("mean", "std", "kurt", "skew", "med", "q1", "q3")

CHANNEL_FEATURE_SUFFIX = {
    "RESP": "resp",
    "RR": "rr",
    "HR": "hr",
    "SPO2": "SpO2",
    "SPO2_T": "SpO2T",
    "PLETH": "pleth",
    "PLETH_T": "plethT",
    "ECG_II": "ecg2",
    "ECG_III": "ecg3",
    "ART": "art",
}

# channels whose features each alert type keeps
_RR_CHANNELS = ("RESP", "RR", "HR", "SPO2", "PLETH", "ECG_II")
_SPO2_CHANNELS = (
    "RESP", "RR", "HR", "SPO2", "SPO2_T", "PLETH", "PLETH_T", "ECG_II", "ECG_III",
)

# derived feature name -> DerivedEstimates attribute
_DERIVED_COMMON = {
    "respFFT": "resp_fft_rate",
    "respNK1": "resp_extrema_rate",
    "respHeight": "resp_height",
    "plethFFT": "hr_pleth_fft",
    "plethINT": "hr_pleth_peaks",
    "plethNK1": "hr_pleth_extrema",
    "plethHeight": "pleth_height",
    "pulsatility": "pulsatility",
    "hrECG2": "hr_ecg2",
}
_DERIVED_SPO2_EXTRA = {
    "plethTFFT": "hr_plethT_fft",
    "plethTINT": "hr_plethT_peaks",
    "plethTNK1": "hr_plethT_extrema",
    "pulsatilityT": "pulsatility_t",
    "hrECG3": "hr_ecg3",
}

NUMERIC_SUFFIXES = ("rr", "hr", "SpO2", "SpO2T")


def _derived_map(tau: str) -> dict[str, str]:
    if tau == "RR":
        return dict(_DERIVED_COMMON)
    if tau == "SPO2":
        return {**_DERIVED_COMMON, **_DERIVED_SPO2_EXTRA}
    raise ValueError(f"unknown alert type {tau!r}")


def feature_schema(tau: str) -> list[str]:
    """Fixed, ordered feature-name universe for one alert type."""
    channels = _RR_CHANNELS if tau == "RR" else _SPO2_CHANNELS
    names = [
        f"{agg}_{CHANNEL_FEATURE_SUFFIX[ch]}" for ch in channels for agg in AGGREGATES
    ]
    names.extend(_derived_map(tau))
    return names


def waveform_feature_names(tau: str) -> set[str]:
    """Features unavailable without waveform data (ablation drop set)."""
    channels = _RR_CHANNELS if tau == "RR" else _SPO2_CHANNELS
    names = {
        f"{agg}_{CHANNEL_FEATURE_SUFFIX[ch]}"
        for ch in channels
        if CHANNEL_FEATURE_SUFFIX[ch] not in NUMERIC_SUFFIXES
        for agg in AGGREGATES
    }
    names.update(_derived_map(tau))
    return names


def _aggregate(values: np.ndarray, suffix: str) -> dict[str, float]:
    mean = float(np.mean(values))
    out = {
        f"mean_{suffix}": mean,
        f"std_{suffix}": float(np.std(values)),
        f"med_{suffix}": float(np.median(values)),
        f"q1_{suffix}": float(np.percentile(values, 25)),
        f"q3_{suffix}": float(np.percentile(values, 75)),
    }
    # shape statistics are undefined for constant signals; leave them absent
    centered = values - mean
    m2 = float(np.mean(centered**2))
    if m2 > 0:
        out[f"skew_{suffix}"] = float(np.mean(centered**3)) / m2**1.5
        out[f"kurt_{suffix}"] = float(np.mean(centered**4)) / m2**2 - 3.0
    return out


def extract_features(ctx: WindowContext, tau: str) -> dict[str, float]:
    """Sparse feature vector; keys missing where source data is absent."""
    channels = _RR_CHANNELS if tau == "RR" else _SPO2_CHANNELS
    features: dict[str, float] = {}
    for ch in channels:
        values = ctx.view.values(ch)
        if values.size:
            features.update(_aggregate(values, CHANNEL_FEATURE_SUFFIX[ch]))
    for name, attr in _derived_map(tau).items():
        value = getattr(ctx.estimates, attr)
        if value is not None:
            features[name] = float(value)
    return features


@dataclass(frozen=True)
class MissingnessPolicy:
    """Drop-and-impute rules fitted on training rows only."""

    kept: tuple[str, ...]
    dropped: frozenset[str]
    impute: dict[str, float]

    def __post_init__(self) -> None:
        if self.dropped & set(self.impute):
            raise ValueError("a feature cannot be both dropped and imputed")

    def apply(self, rows: Sequence[Mapping[str, float]]) -> np.ndarray:
        """Dense matrix over the kept features; no value is left absent."""
        out = np.empty((len(rows), len(self.kept)))
        for i, row in enumerate(rows):
            for j, name in enumerate(self.kept):
                out[i, j] = row.get(name, self.impute[name])
        return out


def fit_missingness_policy(
    train_rows: Sequence[Mapping[str, float]], schema: Sequence[str]
) -> MissingnessPolicy:
    """Drop features missing in more than 75% of training rows; impute the
    rest with -1 when 0 falls inside the observed range, else with 0."""
    if not train_rows:
        raise ValueError("empty training set")
    n = len(train_rows)
    kept, dropped, impute = [], set(), {}
    for name in schema:
        observed = [row[name] for row in train_rows if name in row]
        if len(observed) < 0.25 * n:
            dropped.add(name)
            continue
        lo, hi = min(observed), max(observed)
        impute[name] = -1.0 if lo <= 0.0 <= hi else 0.0
        kept.append(name)
    return MissingnessPolicy(tuple(kept), frozenset(dropped), impute)
