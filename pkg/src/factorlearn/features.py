"""Feature extraction for the factorize-vs-materialize decision.

A fixed 33-entry vector in three groups:
  data (15): target/source extents and redundancy statistics plus the
             join-type one-hot;
  complexity (12): analytic complexity and byte estimates for the chosen
             model and iteration count plus the model one-hot;
  hardware (6): thread count and memory bandwidth, and the complexity/byte
             totals normalized by them.
Extraction is pure arithmetic over descriptors; it never runs training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cost import MODELS, HardwareSpec, TableDescriptor, model_cost
from .metadata import JOIN_TYPES, FactorizedTable, redundancy_stats
from .trainers import TrainConfig

FEATURE_NAMES = (
    # data group
    "r_T", "c_T", "n_sources", "sum_r_k", "sum_c_k", "sparsity_T",
    "tuple_ratio_min", "tuple_ratio_max",
    "feature_ratio_min", "feature_ratio_max", "rho_c",
    "join_inner", "join_left", "join_outer", "join_union",
    # complexity group
    "complexity_ratio", "o_materialized", "o_factorized",
    "bytes_read_mat", "bytes_written_mat",
    "bytes_read_fact", "bytes_written_fact",
    "iterations",
    "model_linreg", "model_logreg", "model_kmeans", "model_gnmf",
    # hardware group
    "parallelism", "memory_bandwidth",
    "o_mat_per_thread", "o_fact_per_thread",
    "bytes_mat_over_bw", "bytes_fact_over_bw",
)

N_FEATURES = len(FEATURE_NAMES)
HARDWARE_FEATURE_INDICES = tuple(range(N_FEATURES - 6, N_FEATURES))

assert N_FEATURES == 33


class FeatureError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetProfile:
    """Everything feature extraction needs to know about one dataset."""

    desc: TableDescriptor
    join_type: str
    tuple_ratios: tuple[float, ...]
    feature_ratios: tuple[float, ...]
    sparsity: float
    rho_c: float

    @classmethod
    def from_table(cls, ft: FactorizedTable) -> "DatasetProfile":
        stats = redundancy_stats(ft)
        return cls(TableDescriptor.from_table(ft), ft.join_type,
                   stats.tuple_ratios, stats.feature_ratios,
                   stats.sparsity_target, stats.rho_c)

    def to_dict(self) -> dict:
        return {
            "r_T": self.desc.r_t, "c_T": self.desc.c_t, "m_T": self.desc.m_t,
            "sources": [[s.rows, s.cols, s.nnz] for s in self.desc.sources],
            "join_type": self.join_type,
            "tuple_ratios": list(self.tuple_ratios),
            "feature_ratios": list(self.feature_ratios),
            "sparsity": self.sparsity, "rho_c": self.rho_c,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetProfile":
        from .cost import SourceDescriptor
        desc = TableDescriptor(d["r_T"], d["c_T"], d["m_T"],
                               tuple(SourceDescriptor(*s) for s in d["sources"]))
        return cls(desc, d["join_type"], tuple(d["tuple_ratios"]),
                   tuple(d["feature_ratios"]), d["sparsity"], d["rho_c"])


def extract_features(profile: DatasetProfile, model: str, cfg: TrainConfig,
                     hw: HardwareSpec) -> np.ndarray:
    """The 33-entry vector in FEATURE_NAMES order."""
    if model not in MODELS:
        raise FeatureError(f"unknown model {model!r}")
    if profile.join_type not in JOIN_TYPES:
        raise FeatureError(f"unknown join type {profile.join_type!r}")
    desc = profile.desc
    cp = model_cost(model, desc, cfg)
    bytes_mat = cp.bytes_read_materialized + cp.bytes_written_materialized
    bytes_fact = cp.bytes_read_factorized + cp.bytes_written_factorized
    v = [
        float(desc.r_t), float(desc.c_t), float(len(desc.sources)),
        float(sum(s.rows for s in desc.sources)),
        float(sum(s.cols for s in desc.sources)),
        profile.sparsity,
        min(profile.tuple_ratios), max(profile.tuple_ratios),
        min(profile.feature_ratios), max(profile.feature_ratios),
        profile.rho_c,
        *(1.0 if profile.join_type == j else 0.0 for j in JOIN_TYPES),
        cp.complexity_ratio,
        float(cp.o_materialized), float(cp.o_factorized),
        cp.bytes_read_materialized, cp.bytes_written_materialized,
        cp.bytes_read_factorized, cp.bytes_written_factorized,
        float(cfg.iterations),
        *(1.0 if model == m else 0.0 for m in MODELS),
        float(hw.parallelism), float(hw.memory_bandwidth),
        cp.o_materialized / hw.parallelism, cp.o_factorized / hw.parallelism,
        bytes_mat / hw.memory_bandwidth, bytes_fact / hw.memory_bandwidth,
    ]
    out = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(out)):
        raise FeatureError("non-finite feature value (empty or degenerate table?)")
    return out
