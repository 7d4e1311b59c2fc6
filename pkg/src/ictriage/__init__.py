"""ictriage: EEG independent-component triage pipeline.

Decomposes multichannel EEG into independent components, renders each one as
a 4-panel diagnostic dashboard, classifies dashboards through a pluggable
vision backend, applies a confidence-gated rejection policy, and reconstructs
a cleaned recording. A synthetic ground-truth generator and agreement-metrics
harness make the whole loop verifiable offline.
"""

from .recording import Epochs, Montage, Recording
from .container import load_container, save_container
from .edf import load_edf, write_edf
from .filters import bandpass_filter, make_epochs, notch_filter
from .ica import (
    Activations,
    IcaModel,
    activations,
    amari_index,
    apply_rejection,
    fit_extended_infomax,
    fit_fastica,
    load_model,
    save_model,
    whiten,
)
from .spectral import SpectrumEstimate, welch_psd
from .topomap import fit_spline, spherical_spline_field
from .synth import (
    GroundTruth,
    SourceSpec,
    generate_dataset,
    make_default_corpus,
    match_components,
)
from .dashboard import Dashboard, RenderParams, compose_dashboard, render_all
from .client import (
    BackendConfig,
    ComponentClassification,
    ClassificationFailure,
    build_prompt,
    classify_all,
    estimate_cost,
    heuristic_classify,
    oracle_classify,
    parse_response,
)
from .triage import TriageDecision, TriagePolicy, apply_overrides, decide
from .metrics import (
    EvalReport,
    LabelSet,
    cohens_kappa,
    confusion_and_distribution,
    exact_agreement,
    stratify_three_way,
)
from .pipeline import RunConfig, RunSummary, run

__version__ = "0.1.0"
