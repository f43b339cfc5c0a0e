"""Weakly supervised adjudication of vital-sign alerts as real or artifact.

The pipeline: multi-rate recordings are scanned for respiratory-rate and
oxygen-saturation alert events, each split into one-minute windows. A panel
of clinical heuristics votes real/artifact/abstain per window; a generative
label model turns the votes into probabilistic labels, which train a Random
Forest classifier evaluated leave-one-patient-out against fully supervised
and majority-vote baselines.
"""

from .alerts import AlertCriteria, AlertEvent, AlertWindow, detect_alert_events, windows_from_event
from .context import WindowContext, build_window_context
from .data import (
    Channel,
    GroundTruthLabel,
    PatientRecord,
    WindowView,
    channel_density,
    load_cohort,
    load_patient_record,
    save_patient_record,
    slice_window,
)
from .dsp import DerivedEstimates, DspParams
from .evaluation import (
    ExperimentArm,
    ExperimentSettings,
    EvaluationReport,
    emit_report,
    lopo_folds,
    operating_point_metrics,
    roc_and_auc,
    run_experiment,
    wilson_interval,
)
from .features import MissingnessPolicy, extract_features, feature_schema, fit_missingness_policy
from .forest import RandomForestHyper, TrainedForest, feature_importance, train_random_forest
from .label_model import (
    LabelModelHyper,
    LabelModelParams,
    ProbabilisticLabel,
    fit_label_model,
    majority_vote,
    marginal_nll,
    posterior,
    to_crisp_labels,
)
from .labeling import (
    LabelingFunction,
    LfThresholds,
    Vote,
    VoteMatrix,
    apply_labeling_functions,
    lf_coverage_stats,
    lf_suite,
    rr_lf_suite,
    spo2_lf_suite,
)
from .synth import ARTIFACT_KINDS, CohortSpec, generate_cohort, inject_artifact, write_cohort

__version__ = "0.1.0"
