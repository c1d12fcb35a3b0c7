"""Dynamic Means clustering for batch-sequential data with evolving clusters."""

__version__ = "0.1.0"

from .baselines import DpMeansResult, dp_means
from .core import (
    NEW_CLUSTER,
    ActiveCluster,
    Decision,
    DynMeansParams,
    LabelAssignment,
    OldClusterRecord,
    assign_labels,
    assign_params,
    cluster_timestep,
    compute_cost,
    gamma,
    label_cost,
)
from .evaluation import (
    AccuracyReport,
    accuracy_report,
    optimal_matching,
    tracked_accuracy,
    weighted_accuracy,
)
from .pipeline import (
    ReparamConfig,
    RunConfig,
    SequenceResult,
    reparameterize,
    run_sequence,
    update_c,
)
from .synthgen import LabeledBatchSequence, SynthConfig, generate
