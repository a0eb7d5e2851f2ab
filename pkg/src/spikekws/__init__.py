"""Streaming spiking-network keyword spotting with early decisions."""

from .data import (
    Manifest,
    Sample,
    class_balanced_sampler,
    extract_features,
    load_gsc,
    load_manifest,
    save_manifest,
    synth_dataset,
)
from .decision import (
    DecisionConfig,
    DecisionOutcome,
    EvalReport,
    annotation_to_frame,
    confidence,
    decide_stream,
    evaluate,
    sweep_thresholds,
)
from .energy import EnergyModel, OpCount, count_ops, estimate_energy, spike_rate_trace
from .features import FbankConfig, compute_fbank, mel_filterbank
from .network import (
    AdLifParams,
    LayerState,
    Network,
    NetworkConfig,
    ReadoutTrace,
    adlif_step,
    count_parameters,
    forward_batch,
    init_network,
    load_checkpoint,
    readout_step,
    save_checkpoint,
)
from .training import (
    TrainConfig,
    backward,
    ct_loss,
    cumulative_loss,
    cumulative_output,
    spike_rate_loss,
    tet_loss,
    train,
)

__version__ = "0.1.0"
