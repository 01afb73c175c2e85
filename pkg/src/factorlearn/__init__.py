"""Factorized learning over normalized multi-source data.

Trains linear models, k-means, and Gaussian NMF either on a materialized
target table or directly on its sources, with instrumented sparse kernels,
an analytical cost model, and a learned factorize-vs-materialize estimator.
"""

from .sparse import (
    OpTrace,
    ShapeError,
    SparseMatrix,
    SparseStructureError,
    elementwise,
    frobenius_norm,
    rel_frobenius_diff,
    spmm,
    transpose,
)
from .metadata import (
    JOIN_TYPES,
    FactorizedTable,
    IndicatorMatrix,
    MappingMatrix,
    MetadataError,
    RedundancyStats,
    ValidationReport,
    materialize,
    redundancy_stats,
)
from .ops import OpError, TargetHandle
from .trainers import (
    ConfigError,
    DivergenceError,
    TrainConfig,
    TrainResult,
    train,
)
from .cost import (
    HardwareSpec,
    MODELS,
    TableDescriptor,
    complexity_ratio,
    linreg_cost,
    model_cost,
    op_cost,
)
from .features import FEATURE_NAMES, DatasetProfile, extract_features
from .gbdt import GbdtModel, GbdtParams, fit as fit_gbdt
from .estimator import (
    LabeledRun,
    baseline_tr_fr,
    evaluate,
    fit_estimator,
    predict,
    read_corpus,
    split_corpus,
    write_corpus,
)
from .datagen import GenSpec, GridConfig, generate, grid_specs
from .datasets import ingest_csv_file, list_datasets, load_dataset, save_dataset
from .bench import BenchConfig, bench_dataset, bench_many, measure_bandwidth

__version__ = "0.1.0"

__all__ = [
    "BenchConfig",
    "ConfigError",
    "DatasetProfile",
    "DivergenceError",
    "FEATURE_NAMES",
    "FactorizedTable",
    "GbdtModel",
    "GbdtParams",
    "GenSpec",
    "GridConfig",
    "HardwareSpec",
    "IndicatorMatrix",
    "JOIN_TYPES",
    "LabeledRun",
    "MODELS",
    "MappingMatrix",
    "MetadataError",
    "OpError",
    "OpTrace",
    "RedundancyStats",
    "ShapeError",
    "SparseMatrix",
    "SparseStructureError",
    "TableDescriptor",
    "TargetHandle",
    "TrainConfig",
    "TrainResult",
    "ValidationReport",
    "baseline_tr_fr",
    "bench_dataset",
    "bench_many",
    "complexity_ratio",
    "elementwise",
    "evaluate",
    "extract_features",
    "fit_estimator",
    "fit_gbdt",
    "frobenius_norm",
    "generate",
    "grid_specs",
    "ingest_csv_file",
    "linreg_cost",
    "list_datasets",
    "load_dataset",
    "materialize",
    "measure_bandwidth",
    "model_cost",
    "op_cost",
    "predict",
    "read_corpus",
    "redundancy_stats",
    "rel_frobenius_diff",
    "save_dataset",
    "split_corpus",
    "spmm",
    "train",
    "transpose",
    "write_corpus",
    "__version__",
]
