"""Graph/sequence fusion models for service telemetry anomaly detection.

The pipeline: ingest (or synthesize) per-service metric series and call
edges, window them into graph snapshots plus per-node metric windows, encode
structure with a graph convolution stack and dynamics with a Transformer
encoder, fuse both embeddings with a learned gate, and score each node by
its squared deviation from a frozen one-class center. Everything numeric
runs on a small reverse-mode tape over dense float64 matrices.
"""

from .data import (
    EdgeRecord,
    METRICS,
    MetricRecord,
    Normalizer,
    SynthConfig,
    WindowedDataset,
    apply_normalizer,
    build_windows,
    fit_normalizer,
    ingest_edges,
    ingest_metrics,
    read_labels_csv,
    read_scores_csv,
    synth_generate,
    window_count,
    write_edges_csv,
    write_labels_csv,
    write_metrics_csv,
    write_scores_csv,
)
from .errors import (
    CheckpointError,
    ConfigError,
    ContractError,
    DataError,
    GtfError,
    IngestError,
    JoinError,
    MetricUndefinedError,
    NumericError,
    ShapeError,
)
from .eval import (
    EvalReport,
    best_f1,
    depth_sweep,
    evaluate,
    ks_score,
    roc_auc,
    score_dataset,
    zscore_max_baseline,
)
from .fusion import FusionParams, ScoredNode, ScorerParams, fuse, gamma_value, score
from .graph import (
    NormalizedAdjacency,
    ServiceGraphSnapshot,
    build_snapshot,
    gcn_forward,
    node_input_features,
    normalize_adjacency,
)
from .model import GtfModel, ModelDims, init_params, score_window
from .numerics import Matrix, ParamStore, Tape, Var, backward, grad_check
from .temporal import (
    EncoderLayerParams,
    EncoderStack,
    MetricWindow,
    attention,
    encoder_forward,
    multihead_attention,
    pool_final,
    positional_encoding,
)
from .training import (
    TrainConfig,
    TrainReport,
    init_center,
    load_model,
    save_model,
    train,
)

__all__ = [
    "CheckpointError",
    "ConfigError",
    "ContractError",
    "DataError",
    "EdgeRecord",
    "EncoderLayerParams",
    "EncoderStack",
    "EvalReport",
    "FusionParams",
    "GtfError",
    "GtfModel",
    "IngestError",
    "JoinError",
    "METRICS",
    "Matrix",
    "MetricRecord",
    "MetricUndefinedError",
    "MetricWindow",
    "ModelDims",
    "NormalizedAdjacency",
    "Normalizer",
    "NumericError",
    "ParamStore",
    "ScoredNode",
    "ScorerParams",
    "ServiceGraphSnapshot",
    "ShapeError",
    "SynthConfig",
    "Tape",
    "TrainConfig",
    "TrainReport",
    "Var",
    "WindowedDataset",
    "apply_normalizer",
    "attention",
    "backward",
    "best_f1",
    "build_snapshot",
    "build_windows",
    "depth_sweep",
    "encoder_forward",
    "evaluate",
    "fit_normalizer",
    "fuse",
    "gamma_value",
    "gcn_forward",
    "grad_check",
    "ingest_edges",
    "ingest_metrics",
    "init_center",
    "init_params",
    "ks_score",
    "load_model",
    "multihead_attention",
    "node_input_features",
    "normalize_adjacency",
    "pool_final",
    "positional_encoding",
    "read_labels_csv",
    "read_scores_csv",
    "roc_auc",
    "save_model",
    "score",
    "score_dataset",
    "score_window",
    "synth_generate",
    "train",
    "window_count",
    "write_edges_csv",
    "write_labels_csv",
    "write_metrics_csv",
    "write_scores_csv",
    "zscore_max_baseline",
]
