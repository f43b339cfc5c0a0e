"""Per-window bundle consumed by labeling functions and featurization.

The context pairs an alert window with its raw channel views and the
waveform-derived estimates, computed once and shared by every consumer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .alerts import AlertWindow
from .data import PatientRecord, WindowView, channel_density, slice_window
from .dsp import DerivedEstimates, DspParams, derive_estimates


@dataclass(frozen=True)
class WindowContext:
    window: AlertWindow
    view: WindowView
    declared_channels: frozenset[str]
    estimates: DerivedEstimates

    @property
    def row_id(self) -> str:
        return self.window.row_id

    def has_channel(self, name: str) -> bool:
        """Whether the patient's record declares the channel at all."""
        return name in self.declared_channels

    def density(self, name: str) -> float:
        return channel_density(self.view, name)

    def numeric_values(self, name: str) -> np.ndarray:
        return self.view.values(name)

    def numeric_median(self, name: str) -> float | None:
        vals = self.numeric_values(name)
        return float(np.median(vals)) if vals.size else None

    def numeric_std(self, name: str) -> float | None:
        vals = self.numeric_values(name)
        return float(np.std(vals)) if vals.size >= 2 else None


def build_window_context(
    record: PatientRecord, window: AlertWindow, params: DspParams | None = None
) -> WindowContext:
    view = slice_window(record, window.start_s, window.duration_s)
    return WindowContext(
        window=window,
        view=view,
        declared_channels=frozenset(record.channels),
        estimates=derive_estimates(view, params),
    )
