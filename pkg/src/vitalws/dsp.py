"""Waveform-derived rate and amplitude estimators.

Everything here is a pure function of the input samples; there is no
randomness. Estimators return ``None`` ("absent") instead of NaN when the
data cannot support an estimate, so downstream heuristics can abstain.

The respiratory chain is: linear detrend, order-5 low-pass Butterworth at
2 Hz applied forward-backward (zero phase), then either peak counting, the
primary harmonic of a Bohman-windowed periodogram, or alternating-extrema
breath counting. Pulse-oximetry waveforms yield heart rate the same three
ways, plus a respiratory surrogate built by spline-interpolating the pulse
peak tips into an amplitude-modulation envelope.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal
from scipy.interpolate import CubicSpline

RESP_FILTER_ORDER = 5
RESP_FILTER_CUTOFF_HZ = 2.0

# filtfilt pads 3 * (order + 1) samples on each side
_MIN_FILTER_SAMPLES = 3 * (RESP_FILTER_ORDER + 1) + 2


@dataclass(frozen=True)
class PeakParams:
    """Peak-detector settings for one signal class."""

    min_distance_s: float
    prominence_fraction: float


@dataclass(frozen=True)
class DspParams:
    """All estimator knobs, overridable from the experiment config.

    Defaults reflect physiologic ceilings: breathing tops out near
    60 breaths/min and pulse near 200-240 beats/min.
    """

    resp_peaks: PeakParams = field(default_factory=lambda: PeakParams(1.0, 0.2))
    pleth_peaks: PeakParams = field(default_factory=lambda: PeakParams(0.3, 0.3))
    ecg_peaks: PeakParams = field(default_factory=lambda: PeakParams(0.25, 0.4))
    rr_band_hz: tuple[float, float] = (0.05, 1.0)
    hr_band_hz: tuple[float, float] = (0.5, 3.0)
    extrema_noise_iqr_fraction: float = 0.2


@dataclass(frozen=True)
class DerivedEstimates:
    """Per-window waveform-derived numerics; ``None`` marks absence."""

    resp_peak_rate: float | None = None
    resp_fft_rate: float | None = None
    resp_extrema_rate: float | None = None
    resp_height: float | None = None
    pleth_rr_fft: float | None = None
    pleth_rr_extrema: float | None = None
    pleth_height: float | None = None
    hr_pleth_peaks: float | None = None
    hr_pleth_fft: float | None = None
    hr_pleth_extrema: float | None = None
    pulsatility: float | None = None
    hr_plethT_peaks: float | None = None
    hr_plethT_fft: float | None = None
    hr_plethT_extrema: float | None = None
    pulsatility_t: float | None = None
    hr_ecg2: float | None = None
    hr_ecg3: float | None = None


def preprocess_resp(wave: np.ndarray, fs: float) -> np.ndarray:
    """Detrend then zero-phase low-pass the respiratory waveform.

    Removes the least-squares line and applies the order-5 Butterworth
    low-pass at 2 Hz forward and backward so peak timing is preserved.
    """
    if fs <= 2 * RESP_FILTER_CUTOFF_HZ:
        raise ValueError(f"fs={fs} too low for a {RESP_FILTER_CUTOFF_HZ} Hz low-pass")
    x = np.asarray(wave, dtype=np.float64)
    if x.size < _MIN_FILTER_SAMPLES:
        raise ValueError(f"need at least {_MIN_FILTER_SAMPLES} samples, got {x.size}")
    x = signal.detrend(x, type="linear")
    # second-order sections: the ba form is ill-conditioned at this cutoff
    sos = signal.butter(
        RESP_FILTER_ORDER, RESP_FILTER_CUTOFF_HZ, btype="low", fs=fs, output="sos"
    )
    # even extension avoids the pseudo-DC step odd extension injects at a
    # nonzero-valued edge, which a low-pass would otherwise let through
    padlen = int(min(x.size - 1, 3 * fs))
    filtered = signal.sosfiltfilt(sos, x, padlen=padlen, padtype="even")
    return signal.detrend(filtered, type="linear")


def detect_peaks(
    wave: np.ndarray, fs: float, min_distance_s: float, prominence_fraction: float
) -> np.ndarray:
    """Local maxima at least ``min_distance_s`` apart whose topographic
    prominence reaches ``prominence_fraction`` of the signal range."""
    x = np.asarray(wave, dtype=np.float64)
    if x.size < 3:
        return np.empty(0, dtype=np.int64)
    span = float(x.max() - x.min())
    if span <= 0:
        return np.empty(0, dtype=np.int64)
    peaks, _ = signal.find_peaks(
        x,
        distance=max(1, round(min_distance_s * fs)),
        prominence=prominence_fraction * span,
    )
    return peaks.astype(np.int64)


def rate_from_peak_count(peaks: np.ndarray, window_s: float) -> float:
    """Peaks per minute over the analysis span."""
    if window_s <= 0:
        raise ValueError("window_s must be positive")
    return len(peaks) * 60.0 / window_s


def rate_from_primary_harmonic(
    wave: np.ndarray, fs: float, band_hz: tuple[float, float]
) -> float | None:
    """Rate per minute at the strongest periodogram bin inside ``band_hz``.

    The signal is detrended, Bohman-windowed and zero-padded to 4x its
    length, giving frequency steps of fs/(4N) below the nominal fs/N
    resolution.
    """
    f_lo, f_hi = band_hz
    if not (0.0 <= f_lo < f_hi <= fs / 2):
        raise ValueError(f"invalid band {band_hz} for fs={fs}")
    x = np.asarray(wave, dtype=np.float64)
    if x.size < 64:
        return None
    x = signal.detrend(x, type="linear")
    freqs, pxx = signal.periodogram(
        x, fs=fs, window="bohman", nfft=4 * x.size, detrend=False
    )
    mask = (freqs >= f_lo) & (freqs <= f_hi)
    if not mask.any():
        return None
    k = int(np.argmax(pxx[mask]))
    return float(60.0 * freqs[mask][k])


def _alternating_extrema(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Strictly alternating (index, is_max) extrema of a smooth signal.

    Runs of same-type extrema keep only the most extreme member.
    """
    maxima, _ = signal.find_peaks(x)
    minima, _ = signal.find_peaks(-x)
    if maxima.size + minima.size == 0:
        return np.empty(0, np.int64), np.empty(0, bool)
    idx = np.concatenate([maxima, minima])
    is_max = np.concatenate([np.ones(maxima.size, bool), np.zeros(minima.size, bool)])
    order = np.argsort(idx)
    idx, is_max = idx[order], is_max[order]
    keep_idx, keep_max = [], []
    for i, m in zip(idx, is_max):
        if keep_max and keep_max[-1] == m:
            better = x[i] > x[keep_idx[-1]] if m else x[i] < x[keep_idx[-1]]
            if better:
                keep_idx[-1] = i
        else:
            keep_idx.append(i)
            keep_max.append(m)
    return np.asarray(keep_idx, np.int64), np.asarray(keep_max, bool)


def rate_from_extrema(
    wave: np.ndarray, fs: float, noise_iqr_fraction: float = 0.2
) -> float | None:
    """Breaths per minute from alternating max/min pairs of the filtered wave.

    A max-to-next-min pair counts as one breath only when its vertical swing
    clears ``noise_iqr_fraction`` of the filtered signal's interquartile
    range; fewer than two countable breaths yields ``None``.
    """
    x = np.asarray(wave, dtype=np.float64)
    if x.size < _MIN_FILTER_SAMPLES:
        return None
    raw_span = float(x.max() - x.min())
    if raw_span <= 1e-12 * max(1.0, abs(float(x.mean()))):
        return None
    x = preprocess_resp(x, fs)
    idx, is_max = _alternating_extrema(x)
    if idx.size < 2:
        return None
    q1, q3 = np.percentile(x, [25, 75])
    floor = noise_iqr_fraction * (q3 - q1)
    breaths = 0
    for k in range(idx.size - 1):
        if is_max[k] and not is_max[k + 1]:
            if x[idx[k]] - x[idx[k + 1]] >= floor and floor > 0:
                breaths += 1
    if breaths < 2:
        return None
    return breaths * 60.0 / (x.size / fs)


def derive_resp_from_pleth(
    pleth: np.ndarray,
    fs: float,
    min_distance_s: float = 0.3,
    prominence_fraction: float = 0.3,
) -> np.ndarray | None:
    """Respiratory surrogate: cubic spline through the pulse peak tips.

    The envelope is evaluated at every sample index between the first and
    last detected pulse peak, at the original rate. Needs at least four
    peaks; returns ``None`` otherwise, or when the peak tips carry no
    measurable modulation (below 2% of the signal range).
    """
    x = np.asarray(pleth, dtype=np.float64)
    peaks = detect_peaks(x, fs, min_distance_s, prominence_fraction)
    if peaks.size < 4:
        return None
    spline = CubicSpline(peaks, x[peaks])
    envelope = spline(np.arange(peaks[0], peaks[-1] + 1))
    span = float(x.max() - x.min())
    tips = x[peaks]
    if span <= 0 or (tips.max() - tips.min()) < 0.02 * span:
        return None
    return envelope


def clean_ecg_and_rate(
    ecg: np.ndarray,
    fs: float,
    min_distance_s: float = 0.25,
    prominence_fraction: float = 0.4,
) -> float | None:
    """Median heart rate from R peaks of a band-limited ECG.

    Cleaning is a 0.5 Hz high-pass (baseline wander) plus 50/60 Hz notches
    (powerline); needs 10 s of data and at least two R peaks.
    """
    x = np.asarray(ecg, dtype=np.float64)
    if x.size < 10 * fs:
        return None
    sos = signal.butter(2, 0.5, btype="highpass", fs=fs, output="sos")
    x = signal.sosfiltfilt(sos, x)
    for mains_hz in (50.0, 60.0):
        if mains_hz < fs / 2:
            b, a = signal.iirnotch(mains_hz, Q=30.0, fs=fs)
            x = signal.filtfilt(b, a, x)
    peaks = detect_peaks(x, fs, min_distance_s, prominence_fraction)
    if peaks.size < 2:
        return None
    rr_intervals_s = np.diff(peaks) / fs
    return float(np.median(60.0 / rr_intervals_s))


def amplitude_metric(wave: np.ndarray, prominence_fraction: float = 0.25) -> float:
    """Median peak-to-next-trough swing over detected cycles; 0 without cycles."""
    x = np.asarray(wave, dtype=np.float64)
    if x.size == 0:
        raise ValueError("amplitude_metric needs a nonempty signal")
    span = float(x.max() - x.min())
    if span <= 0:
        return 0.0
    prom = prominence_fraction * span
    peaks, _ = signal.find_peaks(x, prominence=prom)
    troughs, _ = signal.find_peaks(-x, prominence=prom)
    if peaks.size == 0 or troughs.size == 0:
        return 0.0
    nxt = np.searchsorted(troughs, peaks)
    valid = nxt < troughs.size
    if not valid.any():
        return 0.0
    swings = x[peaks[valid]] - x[troughs[nxt[valid]]]
    return float(np.median(swings))


# ---------------------------------------------------------------------------
# Bundled per-window estimation
# ---------------------------------------------------------------------------

def _span_s(indices: np.ndarray, fs: float) -> float:
    return float(indices[-1] - indices[0] + 1) / fs


def _pleth_estimates(
    view_channel, params: DspParams, with_envelope: bool
) -> dict[str, float | None]:
    wave, fs = view_channel.values, view_channel.fs
    pp = params.pleth_peaks
    out: dict[str, float | None] = {
        "peaks": None, "fft": None, "extrema": None, "pulsatility": None,
        "rr_fft": None, "rr_extrema": None, "height": None,
    }
    peaks = detect_peaks(wave, fs, pp.min_distance_s, pp.prominence_fraction)
    if peaks.size:
        out["peaks"] = rate_from_peak_count(peaks, _span_s(view_channel.indices, fs))
    out["fft"] = rate_from_primary_harmonic(wave, fs, params.hr_band_hz)
    out["extrema"] = rate_from_extrema(wave, fs, params.extrema_noise_iqr_fraction)
    out["pulsatility"] = amplitude_metric(wave)
    if with_envelope:
        envelope = derive_resp_from_pleth(wave, fs, pp.min_distance_s, pp.prominence_fraction)
        if envelope is not None and envelope.size >= 64:
            out["rr_fft"] = rate_from_primary_harmonic(envelope, fs, params.rr_band_hz)
            out["rr_extrema"] = rate_from_extrema(envelope, fs, params.extrema_noise_iqr_fraction)
            out["height"] = amplitude_metric(envelope)
    return out


def derive_estimates(view, params: DspParams | None = None) -> DerivedEstimates:
    """Compute every waveform-derived numeric available in a window view.

    Gaps are collapsed before filtering, so sparse coverage yields rate
    estimates that honestly contradict the monitor numerics instead of
    silently abstaining; only channels with under 64 samples are skipped.
    Peak-count rates divide by the true elapsed span, which keeps them
    unbiased under mild sample dropout.
    """
    params = params or DspParams()
    fields: dict[str, float | None] = {}

    resp = view.channels.get("RESP")
    if resp is not None and resp.values.size >= 64:
        filtered = preprocess_resp(resp.values, resp.fs)
        fields["resp_height"] = amplitude_metric(filtered)
        rp = params.resp_peaks
        peaks = detect_peaks(filtered, resp.fs, rp.min_distance_s, rp.prominence_fraction)
        fields["resp_peak_rate"] = rate_from_peak_count(peaks, _span_s(resp.indices, resp.fs))
        fields["resp_fft_rate"] = rate_from_primary_harmonic(filtered, resp.fs, params.rr_band_hz)
        fields["resp_extrema_rate"] = rate_from_extrema(
            resp.values, resp.fs, params.extrema_noise_iqr_fraction
        )

    pleth = view.channels.get("PLETH")
    if pleth is not None and pleth.values.size >= 64:
        est = _pleth_estimates(pleth, params, with_envelope=True)
        fields["hr_pleth_peaks"] = est["peaks"]
        fields["hr_pleth_fft"] = est["fft"]
        fields["hr_pleth_extrema"] = est["extrema"]
        fields["pulsatility"] = est["pulsatility"]
        fields["pleth_rr_fft"] = est["rr_fft"]
        fields["pleth_rr_extrema"] = est["rr_extrema"]
        fields["pleth_height"] = est["height"]

    pleth_t = view.channels.get("PLETH_T")
    if pleth_t is not None and pleth_t.values.size >= 64:
        # no envelope: telemetric pleth is not used for respiratory surrogates
        est = _pleth_estimates(pleth_t, params, with_envelope=False)
        fields["hr_plethT_peaks"] = est["peaks"]
        fields["hr_plethT_fft"] = est["fft"]
        fields["hr_plethT_extrema"] = est["extrema"]
        fields["pulsatility_t"] = est["pulsatility"]

    ep = params.ecg_peaks
    for lead, key in (("ECG_II", "hr_ecg2"), ("ECG_III", "hr_ecg3")):
        ch = view.channels.get(lead)
        if ch is not None and ch.values.size >= 64:
            fields[key] = clean_ecg_and_rate(
                ch.values, ch.fs, ep.min_distance_s, ep.prominence_fraction
            )

    return DerivedEstimates(**fields)
