import numpy as np
import pytest

from vitalws.data import PatientRecord
from vitalws.dsp import DerivedEstimates
from vitalws.labeling import (
    LabelingFunction,
    LfThresholds,
    Vote,
    VoteMatrix,
    apply_labeling_functions,
    lf_coverage_stats,
    rr_lf_suite,
    spo2_lf_suite,
)

from util import make_context, record_of


def ctx_with(estimates=None, tau="RR", telemetric=False, **channels):
    record = record_of("P1", **channels) if channels else PatientRecord("P1", {})
    return make_context(record, estimates=estimates, tau=tau, telemetric=telemetric)


def votes_by_name(suite, ctx):
    return {lf.name: lf.evaluate(ctx) for lf in suite}


class TestApply:
    def test_empty_window_list(self):
        matrix = apply_labeling_functions(rr_lf_suite(), [])
        assert matrix.n == 0 and matrix.m == 8

    def test_always_abstain_column(self):
        lfs = [LabelingFunction("quiet", lambda ctx: Vote.ABSTAIN)]
        ctxs = [ctx_with(RR=np.full(60, 15.0)) for _ in range(4)]
        matrix = apply_labeling_functions(lfs, ctxs)
        assert (matrix.votes == int(Vote.ABSTAIN)).all()

    def test_duplicate_names_rejected(self):
        lfs = [
            LabelingFunction("same", lambda ctx: Vote.REAL),
            LabelingFunction("same", lambda ctx: Vote.ARTIFACT),
        ]
        with pytest.raises(ValueError, match="duplicate"):
            apply_labeling_functions(lfs, [])

    def test_csv_roundtrip(self, tmp_path):
        matrix = VoteMatrix(
            np.array([[-1, 0], [1, 1]]), ["a", "b"], ["lf1", "lf2"]
        )
        matrix.to_csv(tmp_path / "votes.csv")
        back = VoteMatrix.from_csv(tmp_path / "votes.csv")
        assert back.row_ids == matrix.row_ids
        assert back.lf_names == matrix.lf_names
        assert np.array_equal(back.votes, matrix.votes)


class TestRrSuite:
    def test_suite_size(self):
        assert len(rr_lf_suite()) == 8

    def test_extrema_agreement_within_band_is_real(self):
        # derived rate 21.5 against a numeric median of 20: 7.5% <= 15%
        ctx = ctx_with(
            estimates=DerivedEstimates(resp_extrema_rate=21.5),
            RR=np.full(60, 20.0),
        )
        assert votes_by_name(rr_lf_suite(), ctx)["resp_extrema_agreement"] == Vote.REAL

    def test_extrema_disagreement_is_artifact(self):
        ctx = ctx_with(
            estimates=DerivedEstimates(resp_extrema_rate=28.0),
            RR=np.full(60, 20.0),
        )
        assert votes_by_name(rr_lf_suite(), ctx)["resp_extrema_agreement"] == Vote.ARTIFACT

    def test_all_channels_absent_all_abstain(self):
        ctx = ctx_with()
        assert set(votes_by_name(rr_lf_suite(), ctx).values()) == {Vote.ABSTAIN}

    def test_flat_resp_votes_artifact(self):
        ctx = ctx_with(
            estimates=DerivedEstimates(resp_height=0.0), RESP=np.zeros(3750)
        )
        assert votes_by_name(rr_lf_suite(), ctx)["resp_low_amplitude"] == Vote.ARTIFACT

    def test_pleth_rr_grey_zone_abstains(self):
        t = LfThresholds()
        for rate, expected in [(20.0 * 1.2, Vote.REAL), (20.0 * 1.4, Vote.ABSTAIN),
                               (20.0 * 1.6, Vote.ARTIFACT)]:
            ctx = ctx_with(
                estimates=DerivedEstimates(pleth_rr_fft=rate), RR=np.full(60, 20.0)
            )
            assert votes_by_name(rr_lf_suite(t), ctx)["pleth_derived_rr_agreement"] == expected

    def test_resp_missing_depends_on_declaration(self):
        declared_empty = ctx_with(RESP=np.zeros(0))
        assert votes_by_name(rr_lf_suite(), declared_empty)["resp_missing"] == Vote.ARTIFACT
        undeclared = ctx_with(RR=np.full(60, 15.0))
        assert votes_by_name(rr_lf_suite(), undeclared)["resp_missing"] == Vote.ABSTAIN

    def test_rr_density_vote(self):
        sparse = np.full(30, 15.0)  # half of the expected 60 samples
        ctx = ctx_with(RR=sparse)
        assert votes_by_name(rr_lf_suite(), ctx)["rr_numeric_density"] == Vote.ARTIFACT


class TestSpo2Suite:
    def test_suite_size(self):
        assert len(spo2_lf_suite()) == 11

    def test_pleth_peaks_agreement(self):
        ctx = ctx_with(
            estimates=DerivedEstimates(hr_pleth_peaks=81.0),
            HR=np.full(60, 80.0),
            tau="SPO2",
        )
        assert votes_by_name(spo2_lf_suite(), ctx)["hr_plethpeaks_vs_numeric"] == Vote.REAL

    def test_low_pulsatility_artifact(self):
        ctx = ctx_with(estimates=DerivedEstimates(pulsatility=0.01), tau="SPO2")
        assert votes_by_name(spo2_lf_suite(), ctx)["pleth_low_pulsatility"] == Vote.ARTIFACT

    def test_tachypnea_supports_real(self):
        ctx = ctx_with(RR=np.full(60, 25.0), tau="SPO2")
        assert votes_by_name(spo2_lf_suite(), ctx)["tachypnea_support"] == Vote.REAL
        calm = ctx_with(RR=np.full(60, 15.0), tau="SPO2")
        assert votes_by_name(spo2_lf_suite(), calm)["tachypnea_support"] == Vote.ABSTAIN

    def test_consensus_modalities(self):
        agree = DerivedEstimates(hr_ecg2=80.0, hr_pleth_peaks=82.0)
        assert votes_by_name(spo2_lf_suite(), ctx_with(estimates=agree, tau="SPO2"))[
            "cross_hr_consensus"
        ] == Vote.REAL
        disagree = DerivedEstimates(hr_ecg2=80.0, hr_pleth_peaks=130.0)
        assert votes_by_name(spo2_lf_suite(), ctx_with(estimates=disagree, tau="SPO2"))[
            "cross_hr_consensus"
        ] == Vote.ARTIFACT
        # two estimators of the same modality never corroborate each other
        same_modality = DerivedEstimates(hr_ecg2=80.0, hr_ecg3=80.5)
        assert votes_by_name(
            spo2_lf_suite(), ctx_with(estimates=same_modality, tau="SPO2")
        )["cross_hr_consensus"] == Vote.ABSTAIN

    def test_all_absent_all_abstain(self):
        ctx = ctx_with(tau="SPO2")
        assert set(votes_by_name(spo2_lf_suite(), ctx).values()) == {Vote.ABSTAIN}


class TestCoverageStats:
    def test_single_lf(self):
        matrix = VoteMatrix(np.array([[0], [1], [-1]]), ["a", "b", "c"], ["only"])
        stats = lf_coverage_stats(matrix)["only"]
        assert stats == {"coverage": pytest.approx(2 / 3), "overlap": 0.0, "conflict": 0.0}

    def test_identical_always_voting(self):
        matrix = VoteMatrix(np.array([[0, 0], [1, 1]]), ["a", "b"], ["x", "y"])
        for name in ("x", "y"):
            stats = lf_coverage_stats(matrix)[name]
            assert stats["overlap"] == 1.0 and stats["conflict"] == 0.0

    def test_conflict_counts(self):
        matrix = VoteMatrix(np.array([[0, 1], [0, 0]]), ["a", "b"], ["x", "y"])
        stats = lf_coverage_stats(matrix)
        assert stats["x"]["conflict"] == 0.5
        assert stats["y"]["conflict"] == 0.5

    def test_empty_matrix(self):
        matrix = VoteMatrix(np.empty((0, 2)), [], ["x", "y"])
        stats = lf_coverage_stats(matrix)
        assert stats["x"] == {"coverage": 0.0, "overlap": 0.0, "conflict": 0.0}


class TestTotality:
    def degenerate_contexts(self):
        rng = np.random.default_rng(17)
        channel_pool = ["RESP", "PLETH", "PLETH_T", "ECG_II", "ECG_III",
                        "RR", "HR", "SPO2", "SPO2_T"]
        contexts = []
        for _ in range(40):
            channels = {}
            for name in channel_pool:
                roll = rng.random()
                if roll < 0.4:
                    continue
                n = int(rng.integers(0, 80))
                channels[name] = rng.normal(50, 40, n)
            estimate_fields = {}
            for field in ("resp_extrema_rate", "resp_fft_rate", "pulsatility",
                          "hr_ecg2", "hr_pleth_peaks", "resp_height", "pleth_rr_fft"):
                if rng.random() < 0.5:
                    estimate_fields[field] = float(abs(rng.normal(30, 40)))
            contexts.append(
                ctx_with(
                    estimates=DerivedEstimates(**estimate_fields),
                    telemetric=bool(rng.random() < 0.5),
                    **channels,
                )
            )
        return contexts

    def test_every_lf_total_and_deterministic(self):
        suites = rr_lf_suite() + spo2_lf_suite()
        for ctx in self.degenerate_contexts():
            for lf in suites:
                first = lf.evaluate(ctx)
                assert isinstance(first, Vote)
                assert lf.evaluate(ctx) == first
