"""Heuristic labeling functions and the vote matrix they produce.

Each labeling function maps a window context to one of three votes:
abstain (-1), real (0) or artifact (1). Functions are total and
deterministic; whenever an input they rely on is absent they abstain.

Two fixed suites encode the clinicians' business rules: 8 functions for
respiratory-rate alerts and 11 for oxygen-saturation alerts. Most compare a
monitor numeric against the same quantity re-derived from waveforms; the
rest flag implausible amplitude, instability or dropout. Only the 15%
respiratory agreement band is fixed by the source heuristics; every other
band, floor and ceiling is a configurable reconstruction with the defaults
below.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import pandas as pd

from .context import WindowContext


class Vote(enum.IntEnum):
    ABSTAIN = -1
    REAL = 0
    ARTIFACT = 1


@dataclass(frozen=True)
class LabelingFunction:
    name: str
    evaluate: Callable[[WindowContext], Vote]

    def __call__(self, ctx: WindowContext) -> Vote:
        return self.evaluate(ctx)


@dataclass(frozen=True)
class VoteMatrix:
    """n windows x m labeling functions, entries in {-1, 0, 1}."""

    votes: np.ndarray
    row_ids: list[str]
    lf_names: list[str]

    def __post_init__(self) -> None:
        votes = np.asarray(self.votes, dtype=np.int8).reshape(
            len(self.row_ids), len(self.lf_names)
        )
        if not np.isin(votes, (-1, 0, 1)).all():
            raise ValueError("votes must be in {-1, 0, 1}")
        if len(set(self.row_ids)) != len(self.row_ids):
            raise ValueError("duplicate row ids")
        if len(set(self.lf_names)) != len(self.lf_names):
            raise ValueError("duplicate labeling function names")
        object.__setattr__(self, "votes", votes)

    @property
    def n(self) -> int:
        return self.votes.shape[0]

    @property
    def m(self) -> int:
        return self.votes.shape[1]

    def rows(self, row_ids: Sequence[str]) -> "VoteMatrix":
        pos = {rid: i for i, rid in enumerate(self.row_ids)}
        sel = [pos[r] for r in row_ids]
        return VoteMatrix(self.votes[sel], list(row_ids), self.lf_names)

    def to_csv(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        frame = pd.DataFrame(self.votes, columns=self.lf_names)
        frame.insert(0, "row_id", self.row_ids)
        frame.to_csv(path, index=False)

    @classmethod
    def from_csv(cls, path: str | Path) -> "VoteMatrix":
        frame = pd.read_csv(path)
        row_ids = frame["row_id"].astype(str).tolist()
        lf_names = [c for c in frame.columns if c != "row_id"]
        return cls(frame[lf_names].to_numpy(np.int8), row_ids, lf_names)


def apply_labeling_functions(
    lfs: Sequence[LabelingFunction], contexts: Sequence[WindowContext]
) -> VoteMatrix:
    names = [lf.name for lf in lfs]
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate labeling function names in {names}")
    votes = np.full((len(contexts), len(lfs)), int(Vote.ABSTAIN), dtype=np.int8)
    for i, ctx in enumerate(contexts):
        for j, lf in enumerate(lfs):
            votes[i, j] = int(lf.evaluate(ctx))
    return VoteMatrix(votes, [c.row_id for c in contexts], names)


def lf_coverage_stats(matrix: VoteMatrix) -> dict[str, dict[str, float]]:
    """Per-function coverage, overlap and conflict fractions."""
    v = matrix.votes
    voted = v != Vote.ABSTAIN
    stats = {}
    for j, name in enumerate(matrix.lf_names):
        if matrix.n == 0:
            stats[name] = {"coverage": 0.0, "overlap": 0.0, "conflict": 0.0}
            continue
        others = np.delete(voted, j, axis=1)
        other_votes = np.delete(v, j, axis=1)
        overlap_rows = voted[:, j] & others.any(axis=1)
        disagree = (other_votes != v[:, [j]]) & others
        stats[name] = {
            "coverage": float(voted[:, j].mean()),
            "overlap": float(overlap_rows.mean()),
            "conflict": float((voted[:, j] & disagree.any(axis=1)).mean()),
        }
    return stats


# ---------------------------------------------------------------------------
# Concrete suites
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LfThresholds:
    """Bands, floors and ceilings used by the concrete labeling functions."""

    resp_extrema_band: float = 0.15  # fixed by the source heuristic
    resp_fft_band: float = 0.15
    resp_peak_band: float = 0.20
    pleth_rr_real_band: float = 0.25
    pleth_rr_artifact_band: float = 0.50
    resp_height_floor: float = 0.2
    low_density: float = 0.3
    rr_std_ceiling: float = 2.0
    rr_numeric_density: float = 0.65
    hr_agree_band: float = 0.10
    pulsatility_floor: float = 0.15
    tachypnea_rr: float = 20.0
    spo2_std_ceiling: float = 3.0
    consensus_agree_band: float = 0.10
    consensus_disagree_band: float = 0.25


def _relative_gap(estimate: float, reference: float) -> float | None:
    if reference == 0:
        return None
    return abs(estimate - reference) / abs(reference)


def _agreement_vote(
    estimate: float | None, reference: float | None, band: float
) -> Vote:
    """Real when the derived value sits within ``band`` of the reference."""
    if estimate is None or reference is None:
        return Vote.ABSTAIN
    gap = _relative_gap(estimate, reference)
    if gap is None:
        return Vote.ABSTAIN
    return Vote.REAL if gap <= band else Vote.ARTIFACT


def rr_lf_suite(thresholds: LfThresholds | None = None) -> list[LabelingFunction]:
    """The eight respiratory-rate heuristics."""
    t = thresholds or LfThresholds()

    def med_rr(ctx: WindowContext) -> float | None:
        return ctx.numeric_median("RR") if ctx.has_channel("RR") else None

    def resp_extrema_agreement(ctx: WindowContext) -> Vote:
        return _agreement_vote(ctx.estimates.resp_extrema_rate, med_rr(ctx), t.resp_extrema_band)

    def resp_fft_agreement(ctx: WindowContext) -> Vote:
        return _agreement_vote(ctx.estimates.resp_fft_rate, med_rr(ctx), t.resp_fft_band)

    def resp_peakcount_agreement(ctx: WindowContext) -> Vote:
        return _agreement_vote(ctx.estimates.resp_peak_rate, med_rr(ctx), t.resp_peak_band)

    def pleth_derived_rr_agreement(ctx: WindowContext) -> Vote:
        # conservative: vote artifact only on gross disagreement
        estimate, reference = ctx.estimates.pleth_rr_fft, med_rr(ctx)
        if estimate is None or reference is None:
            return Vote.ABSTAIN
        gap = _relative_gap(estimate, reference)
        if gap is None:
            return Vote.ABSTAIN
        if gap <= t.pleth_rr_real_band:
            return Vote.REAL
        if gap > t.pleth_rr_artifact_band:
            return Vote.ARTIFACT
        return Vote.ABSTAIN

    def resp_low_amplitude(ctx: WindowContext) -> Vote:
        height = ctx.estimates.resp_height
        if height is None:
            return Vote.ABSTAIN
        return Vote.ARTIFACT if height < t.resp_height_floor else Vote.ABSTAIN

    def resp_missing(ctx: WindowContext) -> Vote:
        if not ctx.has_channel("RESP"):
            return Vote.ABSTAIN
        return Vote.ARTIFACT if ctx.density("RESP") < t.low_density else Vote.ABSTAIN

    def rr_numeric_unstable(ctx: WindowContext) -> Vote:
        std = ctx.numeric_std("RR") if ctx.has_channel("RR") else None
        if std is None:
            return Vote.ABSTAIN
        return Vote.ARTIFACT if std > t.rr_std_ceiling else Vote.ABSTAIN

    def rr_numeric_density(ctx: WindowContext) -> Vote:
        if not ctx.has_channel("RR"):
            return Vote.ABSTAIN
        return Vote.ARTIFACT if ctx.density("RR") < t.rr_numeric_density else Vote.ABSTAIN

    return [
        LabelingFunction("resp_extrema_agreement", resp_extrema_agreement),
        LabelingFunction("resp_fft_agreement", resp_fft_agreement),
        LabelingFunction("resp_peakcount_agreement", resp_peakcount_agreement),
        LabelingFunction("pleth_derived_rr_agreement", pleth_derived_rr_agreement),
        LabelingFunction("resp_low_amplitude", resp_low_amplitude),
        LabelingFunction("resp_missing", resp_missing),
        LabelingFunction("rr_numeric_unstable", rr_numeric_unstable),
        LabelingFunction("rr_numeric_density", rr_numeric_density),
    ]


def spo2_lf_suite(thresholds: LfThresholds | None = None) -> list[LabelingFunction]:
    """The eleven oxygen-saturation heuristics."""
    t = thresholds or LfThresholds()

    def med_hr(ctx: WindowContext) -> float | None:
        return ctx.numeric_median("HR") if ctx.has_channel("HR") else None

    def med_rr(ctx: WindowContext) -> float | None:
        return ctx.numeric_median("RR") if ctx.has_channel("RR") else None

    def hr_ecg2_vs_numeric(ctx: WindowContext) -> Vote:
        return _agreement_vote(ctx.estimates.hr_ecg2, med_hr(ctx), t.hr_agree_band)

    def hr_ecg3_vs_pleth(ctx: WindowContext) -> Vote:
        return _agreement_vote(
            ctx.estimates.hr_ecg3, ctx.estimates.hr_pleth_peaks, t.hr_agree_band
        )

    def hr_plethpeaks_vs_numeric(ctx: WindowContext) -> Vote:
        return _agreement_vote(ctx.estimates.hr_pleth_peaks, med_hr(ctx), t.hr_agree_band)

    def hr_plethfft_vs_numeric(ctx: WindowContext) -> Vote:
        return _agreement_vote(ctx.estimates.hr_pleth_fft, med_hr(ctx), t.hr_agree_band)

    def hr_plethT_vs_numeric(ctx: WindowContext) -> Vote:
        return _agreement_vote(ctx.estimates.hr_plethT_peaks, med_hr(ctx), t.hr_agree_band)

    def pleth_low_pulsatility(ctx: WindowContext) -> Vote:
        p = ctx.estimates.pulsatility
        if p is None:
            return Vote.ABSTAIN
        return Vote.ARTIFACT if p < t.pulsatility_floor else Vote.ABSTAIN

    def plethT_low_pulsatility(ctx: WindowContext) -> Vote:
        p = ctx.estimates.pulsatility_t
        if p is None:
            return Vote.ABSTAIN
        return Vote.ARTIFACT if p < t.pulsatility_floor else Vote.ABSTAIN

    def tachypnea_support(ctx: WindowContext) -> Vote:
        rr = med_rr(ctx)
        if rr is None:
            return Vote.ABSTAIN
        return Vote.REAL if rr > t.tachypnea_rr else Vote.ABSTAIN

    def spo2_numeric_unstable(ctx: WindowContext) -> Vote:
        # prefer the channel that raised the alert
        order = ("SPO2_T", "SPO2") if ctx.window.telemetric else ("SPO2", "SPO2_T")
        for name in order:
            if ctx.has_channel(name):
                std = ctx.numeric_std(name)
                if std is None:
                    return Vote.ABSTAIN
                return Vote.ARTIFACT if std > t.spo2_std_ceiling else Vote.ABSTAIN
        return Vote.ABSTAIN

    def pleth_missing(ctx: WindowContext) -> Vote:
        if not ctx.has_channel("PLETH"):
            return Vote.ABSTAIN
        return Vote.ARTIFACT if ctx.density("PLETH") < t.low_density else Vote.ABSTAIN

    def cross_hr_consensus(ctx: WindowContext) -> Vote:
        # independence means one rate per sensing modality: two ECG leads
        # (or two estimators on the same pleth) do not corroborate each other
        e = ctx.estimates
        modalities = [
            [e.hr_ecg2, e.hr_ecg3],
            [e.hr_pleth_peaks, e.hr_pleth_fft],
            [e.hr_plethT_peaks, e.hr_plethT_fft],
        ]
        rates = []
        for group in modalities:
            present = [r for r in group if r is not None]
            if present:
                rates.append(float(np.median(present)))
        if len(rates) < 2:
            return Vote.ABSTAIN
        gaps = [
            abs(a - b) / ((a + b) / 2)
            for i, a in enumerate(rates)
            for b in rates[i + 1 :]
            if (a + b) > 0
        ]
        if not gaps:
            return Vote.ABSTAIN
        if min(gaps) <= t.consensus_agree_band:
            return Vote.REAL
        if min(gaps) > t.consensus_disagree_band:
            return Vote.ARTIFACT
        return Vote.ABSTAIN

    return [
        LabelingFunction("hr_ecg2_vs_numeric", hr_ecg2_vs_numeric),
        LabelingFunction("hr_ecg3_vs_pleth", hr_ecg3_vs_pleth),
        LabelingFunction("hr_plethpeaks_vs_numeric", hr_plethpeaks_vs_numeric),
        LabelingFunction("hr_plethfft_vs_numeric", hr_plethfft_vs_numeric),
        LabelingFunction("hr_plethT_vs_numeric", hr_plethT_vs_numeric),
        LabelingFunction("pleth_low_pulsatility", pleth_low_pulsatility),
        LabelingFunction("plethT_low_pulsatility", plethT_low_pulsatility),
        LabelingFunction("tachypnea_support", tachypnea_support),
        LabelingFunction("spo2_numeric_unstable", spo2_numeric_unstable),
        LabelingFunction("pleth_missing", pleth_missing),
        LabelingFunction("cross_hr_consensus", cross_hr_consensus),
    ]


def lf_suite(tau: str, thresholds: LfThresholds | None = None) -> list[LabelingFunction]:
    if tau == "RR":
        return rr_lf_suite(thresholds)
    if tau == "SPO2":
        return spo2_lf_suite(thresholds)
    raise ValueError(f"unknown alert type {tau!r}")
