"""Deterministic synthetic cohort with planted real/artifact ground truth.

Signals are simple harmonic and pulse-train models, not physiologic
simulators: the priority is unambiguous, verifiable labels. Each patient
carries baseline numerics for the whole stay and waveform coverage around
each planted episode only (elsewhere the waveform sensors are simply
absent), which keeps cohorts at desk scale.

A planted episode drives the triggering numeric beyond its alert threshold
for five-plus minutes. Real episodes keep the waveforms consistent with the
excursion (the breathing actually slowed, the saturation actually fell,
with tachypnea in a share of desaturations); artifact episodes leave the
patient's true state at baseline and corrupt one modality per artifact
kind, so waveform-derived rates contradict the numerics. Every random
decision flows from one seed through per-patient child sequences.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .alerts import AlertCriteria, detect_alert_events
from .data import (
    CHANNEL_SPECS,
    Channel,
    GroundTruthLabel,
    NUMERIC,
    PatientRecord,
    WAVEFORM,
    save_labels,
    save_patient_record,
)

FLATLINE = "FLATLINE"
NOISE_BURST = "NOISE_BURST"
SENSOR_DROPOUT = "SENSOR_DROPOUT"
NUMERIC_WAVEFORM_MISMATCH = "NUMERIC_WAVEFORM_MISMATCH"
ARTIFACT_KINDS = (FLATLINE, NOISE_BURST, SENSOR_DROPOUT, NUMERIC_WAVEFORM_MISMATCH)

EVENT_LEAD_S = 180
EVENT_PERIOD_S = 760
EVENT_TAIL_S = 620  # lead + max duration + max jitter
WAVE_PAD_BEFORE_S = 10
WAVE_PAD_AFTER_S = 200

_ROUND_DECIMALS = 4


@dataclass(frozen=True)
class CohortSpec:
    n_patients: int = 40
    hours_per_patient: float = 1.1
    artifact_rate: float = 0.26
    seed: int = 7
    artifact_kinds: tuple[str, ...] = ARTIFACT_KINDS

    def __post_init__(self) -> None:
        if self.n_patients < 2:
            raise ValueError("need at least two patients")
        if not 0.0 <= self.artifact_rate <= 1.0:
            raise ValueError("artifact_rate must lie in [0, 1]")
        unknown = set(self.artifact_kinds) - set(ARTIFACT_KINDS)
        if unknown or not self.artifact_kinds:
            raise ValueError(f"invalid artifact kinds: {sorted(unknown)}")


@dataclass(frozen=True)
class PlantedEvent:
    tau: str
    start_s: int
    duration_s: int
    artifact: bool
    kind: str | None
    telemetric: bool
    excursion: float
    true_rr: float
    true_hr: float


# ---------------------------------------------------------------------------
# Artifact injection (applied to an assembled record)
# ---------------------------------------------------------------------------

def inject_artifact(
    record: PatientRecord,
    event_interval: tuple[float, float],
    kind: str,
    channels: list[str] | None = None,
    seed: int = 0,
    dropout_fraction: float = 0.8,
    numeric_jitter: float = 2.5,
) -> PatientRecord:
    """Corrupt the given channels over [start, end) and return a new record.

    FLATLINE pins the samples to their interval median (zero swing);
    NOISE_BURST replaces them with broadband noise of comparable scale;
    SENSOR_DROPOUT deletes a fraction of them; NUMERIC_WAVEFORM_MISMATCH
    jitters numeric values in place, leaving every waveform untouched.
    """
    if kind not in ARTIFACT_KINDS:
        raise ValueError(f"unknown artifact kind {kind!r}")
    start_s, end_s = event_interval
    if start_s >= end_s:
        raise ValueError("empty interval")
    if channels is None:
        channels = [
            name
            for name, ch in record.channels.items()
            if (ch.kind == NUMERIC) == (kind == NUMERIC_WAVEFORM_MISMATCH)
        ]
    rng = np.random.default_rng(seed)
    out = record
    for name in channels:
        ch = record.channels.get(name)
        if ch is None:
            continue
        lo = np.searchsorted(ch.indices, int(np.ceil(start_s * ch.fs)))
        hi = np.searchsorted(ch.indices, int(np.ceil(end_s * ch.fs)))
        if lo >= hi:
            continue
        if ch.indices.size and (
            start_s * ch.fs > ch.indices[-1] + 1 or end_s * ch.fs < ch.indices[0]
        ):
            raise ValueError(f"interval outside the samples of channel {name}")
        idx, val = ch.indices.copy(), ch.values.copy()
        if kind == FLATLINE:
            val[lo:hi] = np.median(val[lo:hi])
        elif kind == NOISE_BURST:
            scale = max(float(np.std(val[lo:hi])), 1e-3)
            val[lo:hi] = np.round(
                rng.normal(0.0, scale, hi - lo), _ROUND_DECIMALS
            )
        elif kind == SENSOR_DROPOUT:
            n = hi - lo
            drop = rng.choice(n, size=int(round(dropout_fraction * n)), replace=False)
            keep = np.ones(idx.size, dtype=bool)
            keep[lo + drop] = False
            idx, val = idx[keep], val[keep]
        else:  # NUMERIC_WAVEFORM_MISMATCH
            val[lo:hi] = np.round(
                val[lo:hi] + rng.uniform(-numeric_jitter, numeric_jitter, hi - lo),
                _ROUND_DECIMALS,
            )
        out = out.with_channel(Channel(name, ch.kind, ch.fs, idx, val))
    return out


# ---------------------------------------------------------------------------
# Signal synthesis
# ---------------------------------------------------------------------------

def _phase(times: np.ndarray, freq_hz: float, phase0: float, wobble: float) -> np.ndarray:
    return freq_hz * times + phase0 + wobble * np.sin(2 * np.pi * 0.011 * times)


def _pulse_shape(phase: np.ndarray) -> np.ndarray:
    return (0.5 - 0.5 * np.cos(2 * np.pi * phase)) ** 3


def _spike_shape(phase: np.ndarray, width: float = 0.03) -> np.ndarray:
    frac = np.mod(phase, 1.0)
    return np.exp(-0.5 * ((frac - 0.5) / width) ** 2)


def _event_wave_segment(
    rng: np.random.Generator,
    name: str,
    fs: float,
    t0: int,
    t1: int,
    rr_hz: float,
    hr_hz: float,
    amp: float,
) -> tuple[np.ndarray, np.ndarray]:
    """(indices, values) of one synthetic waveform stretch."""
    i0 = int(round(t0 * fs))
    i1 = int(round(t1 * fs))
    idx = np.arange(i0, i1, dtype=np.int64)
    t = idx / fs
    ph_resp = _phase(t, rr_hz, rng.uniform(0, 1), 0.15)
    ph_beat = _phase(t, hr_hz, rng.uniform(0, 1), 0.10)
    if name == "RESP":
        wave = amp * (
            np.sin(2 * np.pi * ph_resp) + 0.15 * np.sin(4 * np.pi * ph_resp + 1.0)
        )
        wave += rng.normal(0.0, 0.04 * amp, idx.size)
    elif name in ("PLETH", "PLETH_T"):
        modulation = 1.0 + 0.25 * np.sin(2 * np.pi * ph_resp)
        wave = amp * modulation * _pulse_shape(ph_beat)
        wave += rng.normal(0.0, 0.02 * amp, idx.size)
    elif name in ("ECG_II", "ECG_III"):
        wave = amp * _spike_shape(ph_beat)
        wave += 0.08 * amp * np.sin(2 * np.pi * 0.1 * t + rng.uniform(0, 6.28))
        wave += rng.normal(0.0, 0.03 * amp, idx.size)
    elif name == "ART":
        wave = 60.0 + 30.0 * _pulse_shape(ph_beat) + rng.normal(0.0, 0.5, idx.size)
    else:
        raise ValueError(f"not a synthesized waveform: {name}")
    return idx, np.round(wave, _ROUND_DECIMALS)


def _numeric_channel(
    rng: np.random.Generator,
    name: str,
    total_s: int,
    baseline: np.ndarray,
    keep_prob: float = 0.93,
) -> Channel:
    keep = rng.random(total_s) < keep_prob
    idx = np.flatnonzero(keep).astype(np.int64)
    return Channel(name, NUMERIC, 1.0, idx, np.round(baseline[idx], _ROUND_DECIMALS))


def _wander(rng: np.random.Generator, total_s: int, amp: float, period_s: float) -> np.ndarray:
    t = np.arange(total_s)
    return amp * np.sin(2 * np.pi * t / period_s + rng.uniform(0, 6.28))


@dataclass
class _PatientPlan:
    patient_id: str
    total_s: int
    baseline_rr: float
    baseline_hr: float
    baseline_spo2: float
    telemetric: bool
    has_ecg3: bool
    has_art: bool
    events: list[PlantedEvent]


def _plan_patient(pidx: int, rng: np.random.Generator, spec: CohortSpec) -> _PatientPlan:
    total_s = int(spec.hours_per_patient * 3600)
    plan = _PatientPlan(
        patient_id=f"P{pidx:03d}",
        total_s=total_s,
        baseline_rr=rng.uniform(12.0, 19.0),
        baseline_hr=rng.uniform(72.0, 108.0),
        baseline_spo2=rng.uniform(95.0, 98.5),
        telemetric=bool(rng.random() < 0.35),
        has_ecg3=bool(rng.random() < 0.7),
        has_art=bool(rng.random() < 0.1),
        events=[],
    )
    n_events = max(0, (total_s - EVENT_TAIL_S) // EVENT_PERIOD_S + 1)
    for k in range(n_events):
        start = EVENT_LEAD_S + k * EVENT_PERIOD_S + int(rng.integers(0, 60))
        duration = int(rng.integers(310, 381))
        tau = "RR" if (pidx + k) % 2 == 0 else "SPO2"
        artifact = bool(rng.random() < spec.artifact_rate)
        kind = str(rng.choice(list(spec.artifact_kinds))) if artifact else None
        if tau == "RR":
            low = rng.random() < 0.7
            excursion = rng.uniform(5.8, 7.8) if low else rng.uniform(31.0, 33.5)
            true_rr = plan.baseline_rr if artifact else excursion
        else:
            excursion = rng.uniform(80.0, 87.5)
            # compensatory tachypnea in a share of true desaturations, and
            # coincidentally in a few artifact episodes
            tachypnea = rng.random() < (0.20 if artifact else 0.40)
            true_rr = rng.uniform(21.5, 27.0) if tachypnea else plan.baseline_rr
        plan.events.append(
            PlantedEvent(
                tau=tau,
                start_s=start,
                duration_s=duration,
                artifact=artifact,
                kind=kind,
                telemetric=plan.telemetric and tau == "SPO2",
                excursion=excursion,
                true_rr=true_rr,
                true_hr=plan.baseline_hr,
            )
        )
    return plan


def _numeric_series(rng: np.random.Generator, plan: _PatientPlan) -> dict[str, np.ndarray]:
    n = plan.total_s
    rr = plan.baseline_rr + _wander(rng, n, 0.8, 620.0) + rng.normal(0, 0.3, n)
    rr = np.clip(rr, 10.6, 28.4)
    hr = plan.baseline_hr + _wander(rng, n, 2.0, 540.0) + rng.normal(0, 0.6, n)
    spo2 = np.clip(plan.baseline_spo2 + rng.normal(0, 0.35, n), 93.0, 100.0)
    spo2_t = np.clip(plan.baseline_spo2 - 0.3 + rng.normal(0, 0.4, n), 92.5, 100.0)

    for ev in plan.events:
        sl = slice(ev.start_s, ev.start_s + ev.duration_s)
        m = ev.duration_s
        if ev.tau == "RR":
            if ev.artifact:
                # the garbage numeric jitters; amount varies by episode
                lo, hi = (2.0, 12.0) if ev.excursion < 10 else (26.0, 40.0)
                rr[sl] = np.clip(ev.excursion + rng.normal(0, rng.uniform(0.8, 2.6), m), lo, hi)
            else:
                rr[sl] = ev.excursion + rng.normal(0, rng.uniform(0.25, 0.9), m)
        else:
            if ev.artifact:
                # a failing oximeter reports jumpy saturation values; one
                # about to drop out entirely is reliably erratic first
                if ev.kind == SENSOR_DROPOUT:
                    sigma = rng.uniform(3.4, 5.0)
                else:
                    sigma = rng.uniform(0.8, 4.5)
                values = np.clip(ev.excursion + rng.normal(0, sigma, m), 74.0, 89.4)
                if ev.kind == NUMERIC_WAVEFORM_MISMATCH:
                    # its pulse-rate numeric undercounts while waveforms stay clean
                    factor = rng.uniform(0.62, 0.85)
                    hr[sl] = np.clip(
                        plan.baseline_hr * factor + rng.normal(0, 1.5, m), 45.0, 120.0
                    )
            else:
                # true desaturations fluctuate too, just less wildly
                values = np.clip(
                    ev.excursion + rng.normal(0, rng.uniform(0.4, 2.5), m), 74.0, 93.0
                )
            if ev.true_rr > 20.0:
                rr[sl] = ev.true_rr + rng.normal(0, 0.3, m)
            if ev.telemetric:
                spo2_t[sl] = values
                if not ev.artifact:
                    spo2[sl] = values + rng.normal(0, 0.3, m)
            else:
                spo2[sl] = values
    return {"RR": rr, "HR": hr, "SPO2": spo2, "SPO2_T": spo2_t}


def _generate_patient(
    pidx: int, child_seed: np.random.SeedSequence, spec: CohortSpec
) -> tuple[PatientRecord, list[PlantedEvent]]:
    rng = np.random.default_rng(child_seed)
    plan = _plan_patient(pidx, rng, spec)
    series = _numeric_series(rng, plan)

    channels: dict[str, Channel] = {}
    numeric_names = ["RR", "HR", "SPO2"] + (["SPO2_T"] if plan.telemetric else [])
    for name in numeric_names:
        channels[name] = _numeric_channel(rng, name, plan.total_s, series[name])

    wave_names = ["RESP", "PLETH", "ECG_II"]
    if plan.has_ecg3:
        wave_names.append("ECG_III")
    if plan.telemetric:
        wave_names.append("PLETH_T")
    if plan.has_art:
        wave_names.append("ART")
    amps = {name: rng.uniform(0.8, 1.3) for name in wave_names}
    amps["ECG_III"] = amps.get("ECG_II", 1.0) * 0.6

    segments: dict[str, list[tuple[np.ndarray, np.ndarray]]] = {n: [] for n in wave_names}
    for ev in plan.events:
        t0 = ev.start_s - WAVE_PAD_BEFORE_S
        t1 = min(ev.start_s + WAVE_PAD_AFTER_S, plan.total_s)
        for name in wave_names:
            fs = CHANNEL_SPECS[name][1][0]
            idx, val = _event_wave_segment(
                rng, name, fs, t0, t1, ev.true_rr / 60.0, ev.true_hr / 60.0, amps[name]
            )
            # light ambient sample dropout exercises gap handling downstream
            keep = rng.random(idx.size) < 0.97
            segments[name].append((idx[keep], val[keep]))

    for name in wave_names:
        if segments[name]:
            idx = np.concatenate([s[0] for s in segments[name]])
            val = np.concatenate([s[1] for s in segments[name]])
        else:
            idx = np.empty(0, np.int64)
            val = np.empty(0)
        channels[name] = Channel(name, WAVEFORM, CHANNEL_SPECS[name][1][0], idx, val)

    record = PatientRecord(plan.patient_id, channels)

    # waveform corruption for the artifact plants
    for ev in plan.events:
        if not ev.artifact or ev.kind == NUMERIC_WAVEFORM_MISMATCH:
            continue
        targets = ["RESP"] if ev.tau == "RR" else ["PLETH", "PLETH_T"]
        targets = [t for t in targets if t in record.channels]
        record = inject_artifact(
            record,
            (ev.start_s - WAVE_PAD_BEFORE_S, ev.start_s + WAVE_PAD_AFTER_S),
            ev.kind,
            channels=targets,
            seed=int(rng.integers(0, 2**31)),
        )
    return record, plan.events


def generate_cohort_detailed(
    spec: CohortSpec,
) -> tuple[list[PatientRecord], list[GroundTruthLabel], dict[str, list[PlantedEvent]]]:
    """Cohort plus the planted-event metadata, keyed by patient id."""
    children = np.random.SeedSequence(spec.seed).spawn(spec.n_patients)
    records, labels, planted = [], [], {}
    criteria = AlertCriteria()
    for pidx in range(spec.n_patients):
        record, events = _generate_patient(pidx, children[pidx], spec)
        records.append(record)
        planted[record.patient_id] = events
        for tau in ("RR", "SPO2"):
            expected = sorted(
                (ev for ev in events if ev.tau == tau), key=lambda ev: ev.start_s
            )
            detected = detect_alert_events(record, tau, criteria)
            if len(detected) != len(expected):
                raise RuntimeError(
                    f"{record.patient_id}/{tau}: planted {len(expected)} events, "
                    f"detected {len(detected)}"
                )
            for got, want in zip(detected, expected):
                if abs(got.start_s - want.start_s) > 5.0:
                    raise RuntimeError(
                        f"{record.patient_id}/{tau}: detected event at {got.start_s}, "
                        f"planted at {want.start_s}"
                    )
                labels.append(GroundTruthLabel(got.pid, int(want.artifact)))
    return records, labels, planted


def generate_cohort(
    spec: CohortSpec,
) -> tuple[list[PatientRecord], list[GroundTruthLabel]]:
    records, labels, _ = generate_cohort_detailed(spec)
    return records, labels


def write_cohort(
    records: list[PatientRecord],
    labels: list[GroundTruthLabel],
    out_dir: str | Path,
) -> Path:
    out_dir = Path(out_dir)
    for record in records:
        save_patient_record(record, out_dir / record.patient_id)
    save_labels({lbl.event_id: lbl.y for lbl in labels}, out_dir / "labels.csv")
    return out_dir
