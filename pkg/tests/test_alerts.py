import numpy as np
import pytest

from vitalws.alerts import (
    AlertCriteria,
    AlertEvent,
    detect_alert_events,
    windows_from_event,
)
from vitalws.data import Channel, PatientRecord
from vitalws.errors import MissingTriggerChannelError

from util import record_of


def rr_record(values, indices=None, patient="P1"):
    values = np.asarray(values, dtype=float)
    if indices is None:
        indices = np.arange(values.size, dtype=np.int64)
    ch = Channel("RR", "numeric", 1.0, np.asarray(indices, dtype=np.int64), values)
    return PatientRecord(patient, {"RR": ch})


def spo2_record(values_by_channel, patient="P1"):
    channels = {}
    for name, vals in values_by_channel.items():
        vals = np.asarray(vals, dtype=float)
        channels[name] = Channel(
            name, "numeric", 1.0, np.arange(vals.size, dtype=np.int64), vals
        )
    return PatientRecord(patient, channels)


def series(length, normal=15.0):
    return np.full(length, normal)


def criteria_oracle(record, tau, events, criteria=AlertCriteria()):
    """Re-evaluate all four criteria over the raw series for each event."""
    sources = ["RR"] if tau == "RR" else ["SPO2", "SPO2_T"]
    for ev in events:
        ok_any = False
        for name in sources:
            if name not in record.channels:
                continue
            ch = record.channels[name]
            lo = np.searchsorted(ch.indices, ev.start_s * ch.fs)
            hi = np.searchsorted(ch.indices, ev.end_s * ch.fs)
            vals = ch.values[lo:hi]
            if vals.size == 0:
                continue
            beyond = criteria.beyond(tau, vals)
            span = ev.duration_s
            ok = (
                span >= criteria.min_duration_s
                and beyond.mean() >= criteria.persistence - 1e-12
                and (hi - lo) / (span * ch.fs) >= criteria.density - 1e-12
            )
            ok_any = ok_any or ok
        assert ok_any, f"event {ev.pid} fails independent re-check"


class TestDetectExamples:
    def test_persistent_low_rr_one_event(self):
        vals = series(360)
        beyond = np.linspace(0, 359, 260).astype(int)  # includes first and last
        vals[beyond] = 8.0
        events = detect_alert_events(rr_record(vals), "RR")
        assert len(events) == 1
        assert events[0].start_s == 0.0 and events[0].duration_s == 360.0
        criteria_oracle(rr_record(vals), "RR", events)

    def test_insufficient_persistence_no_event(self):
        vals = series(360)
        vals[np.linspace(0, 359, 216).astype(int)] = 8.0  # 60% beyond
        assert detect_alert_events(rr_record(vals), "RR") == []

    def test_merge_within_tolerance(self):
        vals = series(800)
        vals[:300] = 8.0
        vals[500:800] = 8.0  # 200 s of normal values in between
        events = detect_alert_events(rr_record(vals), "RR")
        assert len(events) == 1
        assert events[0].duration_s == 800.0

    def test_gap_at_tolerance_not_merged(self):
        vals = series(920)
        vals[:300] = 8.0
        vals[610:920] = 8.0  # first beyond samples are 310 s apart
        events = detect_alert_events(rr_record(vals), "RR")
        assert len(events) == 2

    def test_high_rr_threshold(self):
        vals = series(320)
        vals[:] = 31.0
        events = detect_alert_events(rr_record(vals), "RR")
        assert len(events) == 1

    def test_short_run_rejected(self):
        vals = series(400)
        vals[:299] = 8.0
        assert detect_alert_events(rr_record(vals), "RR") == []

    def test_low_density_rejected(self):
        keep = np.linspace(0, 319, 200).astype(int)  # density 0.625 < 0.65
        vals = np.full(keep.size, 8.0)
        record = rr_record(vals, indices=keep)
        assert detect_alert_events(record, "RR") == []

    def test_missing_trigger_channel(self):
        record = record_of("P1", HR=np.full(400, 70.0))
        with pytest.raises(MissingTriggerChannelError):
            detect_alert_events(record, "RR")
        with pytest.raises(MissingTriggerChannelError):
            detect_alert_events(record, "SPO2")


class TestSpo2Merging:
    def test_overlapping_sources_merge_telemetric(self):
        low = np.full(400, 85.0)
        normal = np.full(400, 97.0)
        base = np.concatenate([normal, low, normal])
        shifted = np.concatenate([normal[:-30], low, normal[: normal.size - 30 + 60]])
        record = spo2_record({"SPO2": base, "SPO2_T": shifted[: base.size]})
        events = detect_alert_events(record, "SPO2")
        assert len(events) == 1
        assert events[0].telemetric

    def test_telemetric_only_source(self):
        low = np.full(400, 85.0)
        normal = np.full(500, 97.0)
        record = spo2_record(
            {"SPO2": np.full(900, 97.0), "SPO2_T": np.concatenate([normal, low])}
        )
        events = detect_alert_events(record, "SPO2")
        assert len(events) == 1 and events[0].telemetric

    def test_standard_source_not_telemetric(self):
        low = np.full(400, 85.0)
        record = spo2_record({"SPO2": np.concatenate([np.full(500, 97.0), low])})
        events = detect_alert_events(record, "SPO2")
        assert len(events) == 1 and not events[0].telemetric


class TestWindows:
    def test_three_consecutive_windows(self):
        ev = AlertEvent("P1-RR-0", "P1", "RR", 100.0, 400.0)
        windows = windows_from_event(ev)
        assert [w.start_s for w in windows] == [100.0, 160.0, 220.0]
        assert all(w.duration_s == 60.0 for w in windows)

    def test_label_inherited(self):
        ev = AlertEvent("P1-RR-0", "P1", "RR", 0.0, 360.0, y=1)
        assert all(w.y == 1 for w in windows_from_event(ev))

    def test_windows_have_distinct_parents(self):
        vals = series(1500)
        vals[:360] = 8.0
        vals[900:1300] = 8.0
        events = detect_alert_events(rr_record(vals), "RR")
        windows = [w for ev in events for w in windows_from_event(ev)]
        assert len(windows) == 6
        assert len({w.parent for w in windows}) == 2
        assert len({w.row_id for w in windows}) == 6


class TestDetectionInvariants:
    def test_no_two_events_within_tolerance(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            vals = series(3000)
            for _ in range(rng.integers(1, 5)):
                start = rng.integers(0, 2600)
                vals[start : start + rng.integers(200, 400)] = 8.0
            events = detect_alert_events(rr_record(vals), "RR")
            for a, b in zip(events, events[1:]):
                assert b.start_s - a.end_s >= 0  # no overlap
            criteria_oracle(rr_record(vals), "RR", events)

    def test_channel_order_invariance(self):
        low = np.full(400, 85.0)
        normal = np.full(500, 97.0)
        spo2 = np.concatenate([normal, low])
        spo2_t = np.concatenate([low, normal])
        a = spo2_record({"SPO2": spo2, "SPO2_T": spo2_t})
        b = spo2_record({"SPO2_T": spo2_t, "SPO2": spo2})
        assert detect_alert_events(a, "SPO2") == detect_alert_events(b, "SPO2")

    def test_pids_deterministic(self):
        vals = series(1500)
        vals[:360] = 8.0
        vals[900:1300] = 8.0
        events = detect_alert_events(rr_record(vals), "RR")
        assert [e.pid for e in events] == ["P1-RR-0", "P1-RR-1"]
