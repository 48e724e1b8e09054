"""Online conformal compression: zero-delay lossy coding with anytime outage guarantees."""

__version__ = "0.1.0"

from .coder import OUTAGE, BitReader, BitWriter, CodeTable, build_huffman, build_one_to_one, build_shannon
from .codec import (
    CodecConfig,
    Decoder,
    DesyncError,
    Encoder,
    RunMetrics,
    StepOutcome,
    augment,
    guarantee_violations,
    outage_reconstruction,
    prefix_metrics,
    run_metrics,
    truncate,
)
from .conformal import ConformalConfig, ConformalState, PredictionSet, coverage_bound, empirical_quantile
from .predictor import ContextModel, PredictorSpec, ReplayPredictor, UniformPredictor
from .transport import SlotMessage, read_container, write_container

__all__ = [
    "OUTAGE", "BitReader", "BitWriter", "CodeTable", "build_huffman", "build_one_to_one",
    "build_shannon", "CodecConfig", "Decoder", "DesyncError", "Encoder", "RunMetrics",
    "StepOutcome", "augment", "guarantee_violations", "outage_reconstruction",
    "prefix_metrics", "run_metrics", "truncate", "ConformalConfig", "ConformalState",
    "PredictionSet", "coverage_bound", "empirical_quantile", "ContextModel", "PredictorSpec",
    "ReplayPredictor", "UniformPredictor", "SlotMessage", "read_container", "write_container",
]
