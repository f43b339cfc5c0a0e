"""In-memory representation and file ingestion of multi-rate recordings.

A recording is a set of channels, each a sparse series of ``(index, value)``
samples at a fixed sampling rate. Missing samples are simply absent from the
index sequence; no sentinel values are ever stored. Windowing is half-open in
seconds and converts to sample indices at each channel's own rate, so mixed
rates never accumulate float-time drift.

On disk a patient is a JSON manifest plus one ``index,value`` CSV per channel;
ground truth is a two-column ``event_id,y`` CSV.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import (
    DataFormatError,
    DuplicateChannelError,
    MalformedRowError,
    MissingChannelFileError,
    SamplingRateError,
    UnknownChannelError,
)

WAVEFORM = "waveform"
NUMERIC = "numeric"

# Channel id -> (kind, allowed sampling rates in Hz)
CHANNEL_SPECS: dict[str, tuple[str, tuple[float, ...]]] = {
    "ECG_II": (WAVEFORM, (250.0, 500.0)),
    "ECG_III": (WAVEFORM, (250.0, 500.0)),
    "PLETH": (WAVEFORM, (125.0,)),
    "PLETH_T": (WAVEFORM, (125.0,)),
    "ART": (WAVEFORM, (125.0,)),
    "RESP": (WAVEFORM, (62.5,)),
    "RR": (NUMERIC, (1.0,)),
    "HR": (NUMERIC, (1.0,)),
    "SPO2": (NUMERIC, (1.0,)),
    "SPO2_T": (NUMERIC, (1.0,)),
}

NUMERIC_CHANNELS = tuple(n for n, (k, _) in CHANNEL_SPECS.items() if k == NUMERIC)
WAVEFORM_CHANNELS = tuple(n for n, (k, _) in CHANNEL_SPECS.items() if k == WAVEFORM)


def _validate_channel_id(name: str) -> None:
    if name not in CHANNEL_SPECS:
        raise UnknownChannelError(f"unknown channel id {name!r}")


@dataclass(frozen=True)
class Channel:
    """One channel: sparse samples at a fixed rate.

    ``indices`` are sample positions at ``fs`` (sample k sits at time k/fs),
    strictly increasing; gaps are whatever indices are missing.
    """

    name: str
    kind: str
    fs: float
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        _validate_channel_id(self.name)
        expected_kind, allowed_fs = CHANNEL_SPECS[self.name]
        if self.kind != expected_kind:
            raise DataFormatError(
                f"channel {self.name}: kind {self.kind!r}, expected {expected_kind!r}"
            )
        if self.fs <= 0 or self.fs not in allowed_fs:
            raise SamplingRateError(
                f"channel {self.name}: fs={self.fs} not in allowed set {sorted(allowed_fs)}"
            )
        idx = np.asarray(self.indices, dtype=np.int64)
        val = np.asarray(self.values, dtype=np.float64)
        if idx.shape != val.shape or idx.ndim != 1:
            raise DataFormatError(f"channel {self.name}: index/value shape mismatch")
        if idx.size and (np.diff(idx) <= 0).any():
            raise DataFormatError(f"channel {self.name}: indices not strictly increasing")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)

    @property
    def n_samples(self) -> int:
        return int(self.indices.size)

    def duration_s(self) -> float:
        """Span covered by the samples, in seconds (0 when empty)."""
        if not self.n_samples:
            return 0.0
        return float(self.indices[-1] - self.indices[0] + 1) / self.fs


@dataclass(frozen=True)
class PatientRecord:
    """All channels of one patient. Immutable after construction."""

    patient_id: str
    channels: dict[str, Channel] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.patient_id:
            raise DataFormatError("patient_id must be non-empty")
        for name, ch in self.channels.items():
            if name != ch.name:
                raise DataFormatError(f"channel key {name!r} does not match {ch.name!r}")

    @property
    def telemetric(self) -> bool:
        """True when the telemetric oximetry channel is present."""
        return "SPO2_T" in self.channels

    def with_channel(self, ch: Channel) -> "PatientRecord":
        chans = dict(self.channels)
        chans[ch.name] = ch
        return PatientRecord(self.patient_id, chans)


@dataclass(frozen=True)
class GroundTruthLabel:
    """Adjudicated class of one alert event: 0 = real, 1 = artifact."""

    event_id: str
    y: int

    def __post_init__(self) -> None:
        if self.y not in (0, 1):
            raise DataFormatError(f"label for {self.event_id}: y={self.y} not in {{0,1}}")


@dataclass(frozen=True)
class ChannelView:
    """Slice of one channel; indices remain absolute record positions."""

    name: str
    fs: float
    indices: np.ndarray
    values: np.ndarray

    @property
    def n_samples(self) -> int:
        return int(self.indices.size)


@dataclass(frozen=True)
class WindowView:
    """Per-channel views over a half-open time window [start, start+duration)."""

    start_s: float
    duration_s: float
    channels: dict[str, ChannelView]

    def values(self, name: str) -> np.ndarray:
        _validate_channel_id(name)
        view = self.channels.get(name)
        return view.values if view is not None else np.empty(0)

    def slice(self, start_s: float, duration_s: float) -> "WindowView":
        """Sub-window; the result covers the intersection interval."""
        if duration_s <= 0:
            raise ValueError("duration must be positive")
        lo = max(start_s, self.start_s)
        hi = min(start_s + duration_s, self.start_s + self.duration_s)
        dur = max(hi - lo, 0.0)
        out = {}
        for name, cv in self.channels.items():
            a, b = _index_range(lo, dur, cv.fs)
            sel = slice(
                np.searchsorted(cv.indices, a, side="left"),
                np.searchsorted(cv.indices, b, side="left"),
            )
            out[name] = ChannelView(name, cv.fs, cv.indices[sel], cv.values[sel])
        return WindowView(lo, dur, out)


def _index_range(start_s: float, duration_s: float, fs: float) -> tuple[int, int]:
    """Sample-index bounds [a, b) for the half-open window at rate fs."""
    a = math.ceil(start_s * fs)
    b = math.ceil((start_s + duration_s) * fs)
    return a, b


def slice_window(record: PatientRecord, start_s: float, duration_s: float) -> WindowView:
    """View of every channel over [start, start+duration); empty views are legal."""
    if duration_s <= 0:
        raise ValueError("duration must be positive")
    views = {}
    for name, ch in record.channels.items():
        a, b = _index_range(start_s, duration_s, ch.fs)
        lo = np.searchsorted(ch.indices, a, side="left")
        hi = np.searchsorted(ch.indices, b, side="left")
        views[name] = ChannelView(name, ch.fs, ch.indices[lo:hi], ch.values[lo:hi])
    return WindowView(start_s, duration_s, views)


def channel_density(view: WindowView, name: str) -> float:
    """Fraction of expected samples actually present, clamped to [0, 1]."""
    _validate_channel_id(name)
    cv = view.channels.get(name)
    if cv is None:
        return 0.0
    expected = cv.fs * view.duration_s
    if expected <= 0:
        return 0.0
    return float(min(1.0, cv.n_samples / expected))


# ---------------------------------------------------------------------------
# File format: manifest.json + one CSV per channel, labels as CSV.
# ---------------------------------------------------------------------------

def load_patient_record(manifest_path: str | Path) -> PatientRecord:
    manifest_path = Path(manifest_path)
    try:
        manifest = json.loads(manifest_path.read_text())
    except FileNotFoundError:
        raise MissingChannelFileError(f"manifest not found: {manifest_path}") from None
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"manifest {manifest_path}: {exc}") from None

    patient_id = manifest.get("patient_id")
    if not patient_id:
        raise DataFormatError(f"manifest {manifest_path}: missing patient_id")

    channels: dict[str, Channel] = {}
    for entry in manifest.get("channels", []):
        name = entry.get("id")
        _validate_channel_id(name)
        if name in channels:
            raise DuplicateChannelError(f"channel {name}: declared twice")
        path = manifest_path.parent / entry["file"]
        if not path.exists():
            raise MissingChannelFileError(f"channel {name}: file not found: {path}")
        fs = float(entry["fs"])
        _, allowed = CHANNEL_SPECS[name]
        if fs not in allowed:
            raise SamplingRateError(
                f"channel {name}: fs mismatch, declared {fs}, allowed {sorted(allowed)}"
            )
        indices, values = _read_channel_csv(path, name)
        channels[name] = Channel(name, entry["kind"], fs, indices, values)
    return PatientRecord(patient_id, channels)


def _read_channel_csv(path: Path, name: str) -> tuple[np.ndarray, np.ndarray]:
    try:
        frame = pd.read_csv(
            path,
            header=0,
            dtype={"index": np.int64, "value": np.float64},
            float_precision="round_trip",
        )
    except (ValueError, pd.errors.ParserError) as exc:
        raise MalformedRowError(f"channel {name}: malformed row in {path}: {exc}") from None
    if list(frame.columns) != ["index", "value"]:
        raise MalformedRowError(
            f"channel {name}: expected header 'index,value' in {path}, got {list(frame.columns)}"
        )
    if frame["value"].isna().any() or frame["index"].isna().any():
        raise MalformedRowError(f"channel {name}: non-numeric row in {path}")
    return frame["index"].to_numpy(np.int64), frame["value"].to_numpy(np.float64)


def save_patient_record(record: PatientRecord, out_dir: str | Path) -> Path:
    """Write the manifest plus channel CSVs; values round-trip bit-exactly."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for name in sorted(record.channels):
        ch = record.channels[name]
        fname = f"{name}.csv"
        # repr-based formatting (pandas default) is shortest-roundtrip exact
        pd.DataFrame({"index": ch.indices, "value": ch.values}).to_csv(
            out_dir / fname, index=False
        )
        entries.append({"id": name, "file": fname, "fs": ch.fs, "kind": ch.kind})
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(
        json.dumps({"patient_id": record.patient_id, "channels": entries}, indent=1)
    )
    return manifest_path


def load_labels(path: str | Path) -> dict[str, int]:
    path = Path(path)
    frame = pd.read_csv(path, header=0, dtype={"event_id": str})
    if list(frame.columns) != ["event_id", "y"]:
        raise DataFormatError(f"labels {path}: expected header 'event_id,y'")
    labels = {}
    for event_id, y in zip(frame["event_id"], frame["y"]):
        lbl = GroundTruthLabel(str(event_id), int(y))
        labels[lbl.event_id] = lbl.y
    return labels


def save_labels(labels: dict[str, int], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(
        {"event_id": list(labels.keys()), "y": [int(v) for v in labels.values()]}
    )
    frame.to_csv(path, index=False)


def load_cohort(data_dir: str | Path) -> tuple[list[PatientRecord], dict[str, int]]:
    """Load every patient under ``data_dir`` plus the cohort label file."""
    data_dir = Path(data_dir)
    manifests = sorted(data_dir.glob("*/manifest.json"))
    if not manifests:
        raise DataFormatError(f"no patient manifests under {data_dir}")
    records = [load_patient_record(m) for m in manifests]
    labels_path = data_dir / "labels.csv"
    labels = load_labels(labels_path) if labels_path.exists() else {}
    return records, labels
