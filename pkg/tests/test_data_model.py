import json

import numpy as np
import pytest

from vitalws.data import (
    Channel,
    channel_density,
    load_labels,
    load_patient_record,
    save_labels,
    save_patient_record,
    slice_window,
)
from vitalws.errors import (
    DataFormatError,
    DuplicateChannelError,
    MalformedRowError,
    MissingChannelFileError,
    SamplingRateError,
    UnknownChannelError,
)

from util import full_channel, record_of


def write_manifest(tmp_path, channels):
    entries = []
    for name, fs, kind, rows in channels:
        fname = f"{name}.csv"
        (tmp_path / fname).write_text(
            "index,value\n" + "".join(f"{i},{v}\n" for i, v in rows)
        )
        entries.append({"id": name, "file": fname, "fs": fs, "kind": kind})
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps({"patient_id": "P1", "channels": entries}))
    return path


class TestLoad:
    def test_parses_declared_channels(self, tmp_path):
        rows = [(i, 0.5) for i in range(7500)]
        rec = load_patient_record(
            write_manifest(tmp_path, [("RESP", 62.5, "waveform", rows)])
        )
        ch = rec.channels["RESP"]
        assert ch.n_samples == 7500 and ch.fs == 62.5

    def test_gaps_preserved(self, tmp_path):
        rows = [(i, 70.0) for i in range(60) if not 20 <= i < 30]
        rec = load_patient_record(
            write_manifest(tmp_path, [("HR", 1, "numeric", rows)])
        )
        ch = rec.channels["HR"]
        assert ch.n_samples == 50
        assert not np.isin(np.arange(20, 30), ch.indices).any()

    def test_fs_mismatch(self, tmp_path):
        path = write_manifest(tmp_path, [("ECG_II", 300, "waveform", [(0, 1.0)])])
        with pytest.raises(SamplingRateError, match="ECG_II"):
            load_patient_record(path)

    def test_missing_file(self, tmp_path):
        path = write_manifest(tmp_path, [("HR", 1, "numeric", [(0, 70.0)])])
        (tmp_path / "HR.csv").unlink()
        with pytest.raises(MissingChannelFileError, match="HR"):
            load_patient_record(path)

    def test_malformed_row(self, tmp_path):
        path = write_manifest(tmp_path, [("HR", 1, "numeric", [])])
        (tmp_path / "HR.csv").write_text("index,value\n3,not_a_number\n")
        with pytest.raises(MalformedRowError, match="HR"):
            load_patient_record(path)

    def test_duplicate_channel(self, tmp_path):
        path = write_manifest(tmp_path, [("HR", 1, "numeric", [(0, 70.0)])])
        manifest = json.loads(path.read_text())
        manifest["channels"].append(manifest["channels"][0])
        path.write_text(json.dumps(manifest))
        with pytest.raises(DuplicateChannelError, match="HR"):
            load_patient_record(path)

    def test_unknown_channel_id(self, tmp_path):
        path = write_manifest(tmp_path, [("HR", 1, "numeric", [(0, 70.0)])])
        manifest = json.loads(path.read_text())
        manifest["channels"][0]["id"] = "TEMP"
        path.write_text(json.dumps(manifest))
        with pytest.raises(UnknownChannelError):
            load_patient_record(path)


class TestChannelInvariants:
    def test_indices_strictly_increasing(self):
        with pytest.raises(DataFormatError):
            Channel("HR", "numeric", 1.0, np.array([0, 0, 1]), np.zeros(3))

    def test_numeric_rate_fixed(self):
        with pytest.raises(SamplingRateError):
            Channel("RR", "numeric", 2.0, np.array([0]), np.array([15.0]))

    def test_ecg_rates(self):
        for fs in (250.0, 500.0):
            Channel("ECG_II", "waveform", fs, np.array([0]), np.array([0.1]))


def test_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(3)
    rec = record_of(
        "P9",
        HR=rng.normal(80, 7, 120),
        RESP=rng.normal(0, np.pi, 500),  # full-precision doubles
    )
    manifest = save_patient_record(rec, tmp_path / "P9")
    loaded = load_patient_record(manifest)
    for name, ch in rec.channels.items():
        got = loaded.channels[name]
        assert np.array_equal(got.indices, ch.indices)
        assert np.array_equal(got.values, ch.values)  # bit exact


def test_labels_roundtrip(tmp_path):
    labels = {"P1-RR-0": 1, "P1-SPO2-0": 0}
    save_labels(labels, tmp_path / "labels.csv")
    assert load_labels(tmp_path / "labels.csv") == labels


class TestSliceWindow:
    def test_sample_count_bound(self):
        rec = record_of("P1", RESP=np.zeros(62 * 70))
        view = slice_window(rec, 0, 60)
        assert view.channels["RESP"].n_samples <= 3750

    def test_slice_inside_gap_is_empty(self):
        ch = full_channel("HR", np.full(50, 70.0), start_index=200)
        rec = record_of("P1").with_channel(ch)
        view = slice_window(rec, 50, 60)
        assert view.channels["HR"].n_samples == 0

    def test_slice_straddling_gap(self):
        idx = np.array([i for i in range(100) if not 30 <= i < 50], dtype=np.int64)
        ch = Channel("HR", "numeric", 1.0, idx, np.full(idx.size, 70.0))
        rec = record_of("P1").with_channel(ch)
        view = slice_window(rec, 10, 60)
        assert view.channels["HR"].n_samples == 40

    def test_slice_of_slice_is_intersection(self):
        rng = np.random.default_rng(11)
        rec = record_of("P1", HR=rng.normal(70, 3, 600))
        for _ in range(50):
            a = rng.uniform(0, 500)
            da = rng.uniform(1, 100)
            b = rng.uniform(0, 500)
            db = rng.uniform(1, 100)
            nested = slice_window(rec, a, da).slice(b, db)
            lo, hi = max(a, b), min(a + da, b + db)
            if hi <= lo:
                assert nested.channels["HR"].n_samples == 0
            else:
                direct = slice_window(rec, lo, hi - lo)
                assert np.array_equal(
                    nested.channels["HR"].indices, direct.channels["HR"].indices
                )


class TestChannelDensity:
    def test_known_fraction(self):
        idx = np.arange(39, dtype=np.int64)
        ch = Channel("RR", "numeric", 1.0, idx, np.full(39, 15.0))
        rec = record_of("P1").with_channel(ch)
        assert channel_density(slice_window(rec, 0, 60), "RR") == pytest.approx(0.65)

    def test_full_and_empty(self):
        rec = record_of("P1", RR=np.full(60, 15.0))
        assert channel_density(slice_window(rec, 0, 60), "RR") == 1.0
        assert channel_density(slice_window(rec, 120, 60), "RR") == 0.0

    def test_unknown_channel(self):
        rec = record_of("P1", RR=np.full(10, 15.0))
        with pytest.raises(UnknownChannelError):
            channel_density(slice_window(rec, 0, 10), "BOGUS")

    def test_monotone_under_deletion(self):
        rng = np.random.default_rng(5)
        idx = np.arange(60, dtype=np.int64)
        for _ in range(20):
            keep = np.sort(rng.choice(60, size=rng.integers(1, 60), replace=False))
            smaller = keep[rng.random(keep.size) < 0.7]
            def density(indices):
                if indices.size == 0:
                    return 0.0
                ch = Channel("RR", "numeric", 1.0, indices, np.full(indices.size, 15.0))
                rec = record_of("P1").with_channel(ch)
                return channel_density(slice_window(rec, 0, 60), "RR")
            assert density(smaller) <= density(keep)
