"""Detection of RR and SpO2 alert events from numeric channels.

An event is a maximal cluster of beyond-threshold numeric samples that
passes four checks: span at least ``min_duration_s``, at least
``persistence`` of the present samples beyond threshold, clusters closer
than ``tolerance_s`` merged before re-checking, and sample density of at
least ``density`` over the span. Each qualifying event contributes its
first three one-minute analysis windows.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .data import PatientRecord
from .errors import MissingTriggerChannelError

RR = "RR"
SPO2 = "SPO2"
ALERT_TYPES = (RR, SPO2)

WINDOWS_PER_EVENT = 3
WINDOW_DURATION_S = 60.0


@dataclass(frozen=True)
class AlertCriteria:
    """Thresholds defining a clinically relevant alert episode."""

    min_duration_s: float = 300.0
    persistence: float = 0.70
    rr_low: float = 10.0
    rr_high: float = 29.0
    spo2_low: float = 90.0
    tolerance_s: float = 300.0
    density: float = 0.65

    def __post_init__(self) -> None:
        if not (0 < self.persistence <= 1 and 0 < self.density <= 1):
            raise ValueError("persistence and density must lie in (0, 1]")

    def beyond(self, tau: str, values: np.ndarray) -> np.ndarray:
        if tau == RR:
            return (values < self.rr_low) | (values > self.rr_high)
        if tau == SPO2:
            return values < self.spo2_low
        raise ValueError(f"unknown alert type {tau!r}")


@dataclass(frozen=True)
class AlertEvent:
    pid: str
    patient_id: str
    tau: str
    start_s: float
    duration_s: float
    telemetric: bool = False
    y: int | None = None

    @property
    def end_s(self) -> float:
        return self.start_s + self.duration_s


@dataclass(frozen=True)
class AlertWindow:
    """One of the three 1-minute analysis windows of an event."""

    parent: str
    patient_id: str
    tau: str
    window_index: int
    start_s: float
    duration_s: float = WINDOW_DURATION_S
    telemetric: bool = False
    y: int | None = None

    @property
    def row_id(self) -> str:
        return f"{self.parent}-w{self.window_index}"

    def to_json_obj(self) -> dict:
        obj = {
            "pid": self.parent,
            "patient_id": self.patient_id,
            "tau": self.tau,
            "window_index": self.window_index,
            "start": self.start_s,
            "duration": self.duration_s,
            "telemetric": self.telemetric,
        }
        if self.y is not None:
            obj["y"] = self.y
        return obj


def _qualifying_intervals(
    indices: np.ndarray, values: np.ndarray, fs: float, tau: str, criteria: AlertCriteria
) -> list[tuple[float, float]]:
    """(start_s, duration_s) of clusters passing all four criteria."""
    beyond_idx = indices[criteria.beyond(tau, values)]
    if beyond_idx.size == 0:
        return []
    # cluster beyond-threshold samples: a gap of tolerance or more splits
    gaps_s = np.diff(beyond_idx) / fs
    breaks = np.flatnonzero(gaps_s >= criteria.tolerance_s)
    starts = np.concatenate([[0], breaks + 1])
    ends = np.concatenate([breaks, [beyond_idx.size - 1]])

    out = []
    for s, e in zip(starts, ends):
        first, last = int(beyond_idx[s]), int(beyond_idx[e])
        span_s = (last - first + 1) / fs
        if span_s < criteria.min_duration_s:
            continue
        lo = np.searchsorted(indices, first, side="left")
        hi = np.searchsorted(indices, last, side="right")
        present = hi - lo
        n_beyond = e - s + 1
        if n_beyond / present < criteria.persistence:
            continue
        if present / (span_s * fs) < criteria.density:
            continue
        out.append((first / fs, span_s))
    return out


def _merge_overlapping(events: list[AlertEvent]) -> list[AlertEvent]:
    """Union overlapping events from the two oximetry sources."""
    events = sorted(events, key=lambda ev: (ev.start_s, ev.end_s))
    merged: list[AlertEvent] = []
    for ev in events:
        if merged and ev.start_s < merged[-1].end_s:
            prev = merged[-1]
            end = max(prev.end_s, ev.end_s)
            merged[-1] = replace(
                prev,
                duration_s=end - prev.start_s,
                telemetric=prev.telemetric or ev.telemetric,
            )
        else:
            merged.append(ev)
    return merged


def detect_alert_events(
    record: PatientRecord, tau: str, criteria: AlertCriteria | None = None
) -> list[AlertEvent]:
    """All qualifying events of one type, sorted by start time.

    SpO2 alerts scan the standard and telemetric oximetry channels
    independently and merge overlaps, flagging the event telemetric when
    either source was the telemetric channel.
    """
    criteria = criteria or AlertCriteria()
    if tau == RR:
        sources = [name for name in ("RR",) if name in record.channels]
    elif tau == SPO2:
        sources = [name for name in ("SPO2", "SPO2_T") if name in record.channels]
    else:
        raise ValueError(f"unknown alert type {tau!r}")
    if not sources:
        raise MissingTriggerChannelError(
            f"patient {record.patient_id}: missing trigger channel for {tau}"
        )

    events: list[AlertEvent] = []
    for name in sources:
        ch = record.channels[name]
        for start_s, duration_s in _qualifying_intervals(
            ch.indices, ch.values, ch.fs, tau, criteria
        ):
            events.append(
                AlertEvent(
                    pid="",
                    patient_id=record.patient_id,
                    tau=tau,
                    start_s=start_s,
                    duration_s=duration_s,
                    telemetric=(name == "SPO2_T"),
                )
            )
    if tau == SPO2:
        events = _merge_overlapping(events)
    events.sort(key=lambda ev: ev.start_s)
    return [
        replace(ev, pid=f"{record.patient_id}-{tau}-{i}") for i, ev in enumerate(events)
    ]


def windows_from_event(event: AlertEvent) -> list[AlertWindow]:
    """The first three consecutive one-minute windows, inheriting the label."""
    return [
        AlertWindow(
            parent=event.pid,
            patient_id=event.patient_id,
            tau=event.tau,
            window_index=i,
            start_s=event.start_s + i * WINDOW_DURATION_S,
            telemetric=event.telemetric,
            y=event.y,
        )
        for i in range(WINDOWS_PER_EVENT)
    ]


def write_windows_jsonl(windows: list[AlertWindow], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for w in windows:
            fh.write(json.dumps(w.to_json_obj()) + "\n")
