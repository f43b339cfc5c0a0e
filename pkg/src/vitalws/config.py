"""Experiment configuration: one JSON file, overridable by CLI flags.

Unknown keys anywhere in the document are rejected so that a config diff
always means what it says. The master seed is mandatory; it may come from
the file, a flag, or the VITALWS_SEED environment variable as a last
resort.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .alerts import AlertCriteria
from .dsp import DspParams, PeakParams
from .errors import ConfigError
from .evaluation import ExperimentArm, ExperimentSettings, default_arms
from .forest import RandomForestHyper
from .label_model import LabelModelHyper
from .labeling import LfThresholds

SEED_ENV_VAR = "VITALWS_SEED"

_TAU_ALIASES = {"rr": "RR", "spo2": "SPO2", "RR": "RR", "SPO2": "SPO2"}


def canonical_tau(value: str) -> str:
    try:
        return _TAU_ALIASES[value]
    except KeyError:
        raise ConfigError(f"unknown alert type {value!r}; expected rr or spo2") from None


@dataclass(frozen=True)
class ExperimentConfig:
    data_dir: str
    out_dir: str
    seed: int
    class_balance: float
    taus: tuple[str, ...] = ("RR", "SPO2")
    criteria: AlertCriteria = field(default_factory=AlertCriteria)
    dsp: DspParams = field(default_factory=DspParams)
    lf_thresholds: LfThresholds = field(default_factory=LfThresholds)
    label_model: LabelModelHyper = field(default_factory=LabelModelHyper)
    forest: RandomForestHyper = field(default_factory=RandomForestHyper)
    arms: tuple[ExperimentArm, ...] | None = None  # None -> full default set
    importance_repeats: int = 5
    workers: int | None = None

    def resolved_arms(self) -> list[ExperimentArm]:
        return list(self.arms) if self.arms is not None else default_arms(self.taus)

    def settings(self) -> ExperimentSettings:
        return ExperimentSettings(
            seed=self.seed,
            class_balance=self.class_balance,
            criteria=self.criteria,
            dsp=self.dsp,
            lf_thresholds=self.lf_thresholds,
            label_model=self.label_model,
            forest=self.forest,
            importance_repeats=self.importance_repeats,
            workers=self.workers,
        )


def _build_dataclass(cls, obj: dict[str, Any], where: str):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(obj) - set(fields)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for key, value in obj.items():
        target = fields[key].type
        if isinstance(value, dict):
            nested = {"resp_peaks": PeakParams, "pleth_peaks": PeakParams,
                      "ecg_peaks": PeakParams}.get(key)
            if nested is None:
                raise ConfigError(f"{where}.{key}: unexpected object")
            value = _build_dataclass(nested, value, f"{where}.{key}")
        elif isinstance(value, list) and key.endswith("band_hz"):
            value = tuple(value)
        kwargs[key] = value
        del target
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


_SECTION_TYPES = {
    "criteria": AlertCriteria,
    "dsp": DspParams,
    "lf_thresholds": LfThresholds,
    "label_model": LabelModelHyper,
    "forest": RandomForestHyper,
}

_TOP_LEVEL_KEYS = {
    "data_dir", "out_dir", "seed", "class_balance", "taus", "arms",
    "importance_repeats", "workers", *_SECTION_TYPES,
}


def load_config(path: str | Path, overrides: dict[str, Any] | None = None) -> ExperimentConfig:
    """Parse and validate the config file; ``overrides`` (flag values) win."""
    try:
        obj = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path}: {exc}") from None
    if not isinstance(obj, dict):
        raise ConfigError(f"config {path}: expected a JSON object")
    unknown = set(obj) - _TOP_LEVEL_KEYS
    if unknown:
        raise ConfigError(f"config {path}: unknown keys {sorted(unknown)}")
    merged = dict(obj)
    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key] = value

    sections = {}
    for name, cls in _SECTION_TYPES.items():
        raw = merged.get(name, {})
        if not isinstance(raw, dict):
            raise ConfigError(f"config section {name!r} must be an object")
        sections[name] = _build_dataclass(cls, raw, name)

    seed = merged.get("seed")
    if seed is None and os.environ.get(SEED_ENV_VAR):
        seed = int(os.environ[SEED_ENV_VAR])
    if seed is None:
        raise ConfigError(f"seed is required (config key, --seed, or ${SEED_ENV_VAR})")

    for required in ("data_dir", "out_dir", "class_balance"):
        if merged.get(required) is None:
            raise ConfigError(f"config key {required!r} is required")

    taus = tuple(canonical_tau(t) for t in merged.get("taus", ["rr", "spo2"]))
    arms = None
    if "arms" in merged and merged["arms"] is not None:
        arms = tuple(
            ExperimentArm(
                canonical_tau(a["tau"]), a["labeler"], a.get("ablation", "with_waveform")
            )
            for a in merged["arms"]
        )

    try:
        return ExperimentConfig(
            data_dir=str(merged["data_dir"]),
            out_dir=str(merged["out_dir"]),
            seed=int(seed),
            class_balance=float(merged["class_balance"]),
            taus=taus,
            arms=arms,
            importance_repeats=int(merged.get("importance_repeats", 5)),
            workers=(None if merged.get("workers") is None else int(merged["workers"])),
            **sections,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
