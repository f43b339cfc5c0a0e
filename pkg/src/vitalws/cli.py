"""Command-line entry point.

Subcommands cover the full pipeline: ``synth`` generates a cohort,
``detect`` emits alert windows, ``votes`` writes the heuristic vote matrix,
``train`` fits and persists the label model plus the forest, ``evaluate``
runs the leave-one-patient-out experiment, and ``report`` re-renders plots
from an existing report bundle. Identical inputs and flags always produce
identical outputs.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .alerts import detect_alert_events, windows_from_event, write_windows_jsonl
from .config import SEED_ENV_VAR, canonical_tau, load_config
from .context import build_window_context
from .data import load_cohort
from .errors import ConfigError, VitalwsError
from .evaluation import emit_report, run_experiment
from .features import extract_features, feature_schema, fit_missingness_policy
from .forest import RandomForestHyper, train_random_forest
from .label_model import LabelModelHyper, fit_label_model, posterior_batch, to_crisp_labels
from .labeling import apply_labeling_functions, lf_suite
from .synth import ARTIFACT_KINDS, CohortSpec, generate_cohort, write_cohort


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # single-line, machine-parseable
        print(f"error: usage: {message}", file=sys.stderr)
        raise SystemExit(2)


def _default_seed() -> int | None:
    raw = os.environ.get(SEED_ENV_VAR)
    return int(raw) if raw else None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vitalws", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[], help="generate a synthetic cohort")
    p.add_argument("--out", required=True, help="output cohort directory")
    p.add_argument("--patients", type=int, default=40, help="number of patients (default 40)")
    p.add_argument("--hours", type=float, default=1.1,
                   help="recording hours per patient (default 1.1)")
    p.add_argument("--artifact-rate", type=float, default=0.26,
                   help="probability a planted event is an artifact (default 0.26)")
    p.add_argument("--seed", type=int, default=_default_seed(),
                   help=f"master seed (default ${SEED_ENV_VAR})")
    p.add_argument("--kinds", default=",".join(ARTIFACT_KINDS),
                   help=f"comma-separated artifact kinds (default all: {','.join(ARTIFACT_KINDS)})")

    for name, extra in (("detect", "emit alert windows as JSON lines"),
                        ("votes", "emit the labeling-function vote matrix as CSV")):
        p = sub.add_parser(name, help=extra)
        p.add_argument("--data", required=True, help="cohort directory")
        p.add_argument("--tau", required=True, choices=["rr", "spo2"], help="alert type")
        p.add_argument("--out", required=True, help="output file")

    p = sub.add_parser("train", help="fit the label model and forest on a whole cohort")
    p.add_argument("--data", required=True, help="cohort directory")
    p.add_argument("--tau", required=True, choices=["rr", "spo2"], help="alert type")
    p.add_argument("--class-balance", type=float, required=True,
                   help="prior probability of the artifact class")
    p.add_argument("--seed", type=int, default=_default_seed(),
                   help=f"master seed (default ${SEED_ENV_VAR})")
    p.add_argument("--trees", type=int, default=1000, help="forest size (default 1000)")
    p.add_argument("--max-depth", type=int, default=5, help="tree depth cap (default 5)")
    p.add_argument("--out", required=True, help="output model directory")

    p = sub.add_parser("evaluate", help="run the leave-one-patient-out experiment")
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--data", default=None, help="override config data_dir")
    p.add_argument("--out", default=None, help="override config out_dir")
    p.add_argument("--seed", type=int, default=None, help="override config seed")
    p.add_argument("--workers", type=int, default=None,
                   help="worker processes (default: available parallelism)")

    p = sub.add_parser("report", help="re-render plots from an existing report bundle")
    p.add_argument("--report-dir", required=True, help="directory holding report CSVs")
    return parser


def _load_tau_pipeline(data_dir: str, tau: str):
    records, labels = load_cohort(data_dir)
    windows, contexts = [], []
    for record in records:
        for event in detect_alert_events(record, tau):
            y = labels.get(event.pid)
            for w in windows_from_event(replace(event, y=y)):
                windows.append(w)
                contexts.append(build_window_context(record, w))
    return records, labels, windows, contexts


def _cmd_synth(args) -> int:
    if args.seed is None:
        raise ConfigError(f"seed is required (--seed or ${SEED_ENV_VAR})")
    spec = CohortSpec(
        n_patients=args.patients,
        hours_per_patient=args.hours,
        artifact_rate=args.artifact_rate,
        seed=args.seed,
        artifact_kinds=tuple(args.kinds.split(",")),
    )
    records, labels = generate_cohort(spec)
    write_cohort(records, labels, args.out)
    n_events = len(labels)
    n_artifacts = sum(l.y for l in labels)
    print(f"wrote {len(records)} patients, {n_events} events "
          f"({n_artifacts} artifacts) to {args.out}")
    return 0


def _cmd_detect(args) -> int:
    tau = canonical_tau(args.tau)
    _, _, windows, _ = _load_tau_pipeline(args.data, tau)
    write_windows_jsonl(windows, args.out)
    print(f"wrote {len(windows)} windows to {args.out}")
    return 0


def _cmd_votes(args) -> int:
    tau = canonical_tau(args.tau)
    _, _, _, contexts = _load_tau_pipeline(args.data, tau)
    matrix = apply_labeling_functions(lf_suite(tau), contexts)
    matrix.to_csv(args.out)
    print(f"wrote {matrix.n}x{matrix.m} vote matrix to {args.out}")
    return 0


def _cmd_train(args) -> int:
    if args.seed is None:
        raise ConfigError(f"seed is required (--seed or ${SEED_ENV_VAR})")
    tau = canonical_tau(args.tau)
    _, _, windows, contexts = _load_tau_pipeline(args.data, tau)
    matrix = apply_labeling_functions(lf_suite(tau), contexts)
    params = fit_label_model(
        matrix, args.class_balance, LabelModelHyper(seed=args.seed)
    )
    crisp = to_crisp_labels(posterior_batch(params, matrix))
    rows = [i for i, rid in enumerate(matrix.row_ids) if rid in crisp]
    features = [extract_features(contexts[i], tau) for i in rows]
    policy = fit_missingness_policy(features, feature_schema(tau))
    x = policy.apply(features)
    y = np.array([crisp[matrix.row_ids[i]] for i in rows], dtype=int)
    forest = train_random_forest(
        x, y, policy.kept, RandomForestHyper(args.trees, args.max_depth, args.seed)
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    params.to_json(out / "label_model.json")
    forest.to_json(out / "forest.json")
    (out / "policy.json").write_text(json.dumps({
        "kept": list(policy.kept),
        "dropped": sorted(policy.dropped),
        "impute": policy.impute,
    }, indent=1))
    print(f"trained on {len(rows)} covered windows; model files in {out}")
    return 0


def _cmd_evaluate(args) -> int:
    overrides = {
        "data_dir": args.data,
        "out_dir": args.out,
        "seed": args.seed,
        "workers": args.workers,
    }
    cfg = load_config(args.config, overrides)
    records, labels = load_cohort(cfg.data_dir)
    report = run_experiment(records, labels, cfg.resolved_arms(), cfg.settings())
    files = emit_report(report, cfg.out_dir)
    print(f"wrote {len(files)} report files to {cfg.out_dir}")
    return 0


def _cmd_report(args) -> int:
    # re-render figures from persisted ROC CSVs without recomputing scores
    from .report_render import render_from_bundle

    written = render_from_bundle(args.report_dir)
    print(f"re-rendered {len(written)} figures in {args.report_dir}")
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "detect": _cmd_detect,
    "votes": _cmd_votes,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "report": _cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except VitalwsError as exc:
        print(f"error: {exc.code}: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
