"""Synthetic star-schema generator with ground-truth metadata matrices.

One GenSpec describes a target table: nominal fact-row count, number of
sources, per-source column range, target sparsity p, mapped-column fraction
rho_c, and the join type. The generator derives everything else from the seed:
per-dim fanout (sampled from {2, 5, 10, 20}, so dim tables have about
r_fact/fanout rows), unmatched fractions for left/outer joins, column widths,
and values (uniform in (0,1); complexity depends only on structure).

Source density is solved from the requested target sparsity: with F_k =
nnz(I_k) source-row placements, target density is d * sum(c_k F_k)/(r_T c_T),
so d = (1-p) r_T c_T / sum(c_k F_k). For a fully mapped inner join this is
exactly 1-p; joins that pad with structural zeros (low rho_c, outer, union)
need denser sources, and specs whose padding already exceeds p are rejected
as infeasible.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .metadata import (JOIN_TYPES, FactorizedTable, IndicatorMatrix,
                       MappingMatrix)
from .sparse import SparseMatrix

FANOUT_CHOICES = (2, 5, 10, 20)
UNMATCHED_RANGE = (0.1, 0.3)


class GenError(ValueError):
    pass


@dataclass(frozen=True)
class GenSpec:
    r_t: int
    n_sources: int = 2
    c_min: int = 10
    c_max: int = 50
    sparsity: float = 0.5
    rho_c: float = 1.0
    join_type: str = "inner"
    seed: int = 0

    def __post_init__(self):
        if self.r_t < 2:
            raise GenError("r_t must be >= 2")
        if not 2 <= self.n_sources <= 4:
            raise GenError("n_sources must be in [2, 4]")
        if not 1 <= self.c_min <= self.c_max:
            raise GenError("need 1 <= c_min <= c_max")
        if not 0.0 <= self.sparsity <= 0.9:
            raise GenError("sparsity must be in [0, 0.9]")
        if not 0.1 <= self.rho_c <= 1.0:
            raise GenError("rho_c must be in [0.1, 1]")
        if self.join_type not in JOIN_TYPES:
            raise GenError(f"join_type must be one of {JOIN_TYPES}")
        if self.seed < 0:
            raise GenError("seed must be non-negative")


def _block_mapping(c_t: int, c_k: int, offset: int) -> MappingMatrix:
    return MappingMatrix(SparseMatrix.from_coo(
        c_t, c_k, np.arange(offset, offset + c_k), np.arange(c_k), np.ones(c_k)))


def _indicator(r_t: int, r_k: int, rows, cols) -> IndicatorMatrix:
    rows = np.asarray(rows, dtype=np.int64)
    return IndicatorMatrix(SparseMatrix.from_coo(
        r_t, r_k, rows, np.asarray(cols, dtype=np.int64), np.ones(rows.size)))


def _source(rng: np.random.Generator, rows: int, cols: int,
            density: float) -> SparseMatrix:
    vals = rng.random((rows, cols))
    if density >= 1.0:
        return SparseMatrix.from_dense(vals)
    mask = rng.random((rows, cols)) < density
    return SparseMatrix.from_dense(np.where(mask, vals, 0.0))


def generate(spec: GenSpec, *, dry_run: bool = False) -> tuple[FactorizedTable | None, dict]:
    """Build sources + metadata realizing the spec; returns (table, manifest
    parameter record). Raises GenError when the requested sparsity is below
    what the join structure's padding already imposes. dry_run derives the
    structure and feasibility but skips value generation (table is None)."""
    rng = np.random.default_rng(spec.seed)
    n = spec.n_sources
    c_k = rng.integers(spec.c_min, spec.c_max + 1, size=n)
    sum_c = int(c_k.sum())
    c_t = max(sum_c, int(round(sum_c / spec.rho_c)))

    if spec.join_type == "union":
        # source-major row stacking; every source keeps fanout 1
        splits = np.linspace(0, spec.r_t, n + 1).astype(np.int64)
        r_k = np.diff(splits)
        if np.any(r_k < 1):
            raise GenError("r_t too small to split across sources")
        r_t = spec.r_t
        indicator_rc = []
        off = 0
        for rk in r_k:
            indicator_rc.append((np.arange(off, off + rk), np.arange(rk)))
            off += int(rk)
        fanouts = [1] * n
        unmatched = 0.0
    else:
        r_fact = spec.r_t
        fanouts = [1] + [int(f) for f in rng.choice(FANOUT_CHOICES, size=n - 1)]
        unmatched = (float(rng.uniform(*UNMATCHED_RANGE))
                     if spec.join_type in ("left", "outer") else 0.0)
        r_k = [r_fact]
        links = [None]
        spares = [np.empty(0, dtype=np.int64)]
        for f in fanouts[1:]:
            r_dim = max(1, int(round(r_fact / f)))
            u_fact = int(round(unmatched * r_fact)) if unmatched else 0
            v_dim = int(round(unmatched * r_dim)) if spec.join_type == "outer" else 0
            if r_fact - u_fact < 1 or r_dim - v_dim < 1:
                raise GenError("unmatched fraction leaves an empty match set")
            unmatched_fact = rng.choice(r_fact, size=u_fact, replace=False)
            dim_ids = np.arange(r_dim)
            if v_dim:
                spare = np.sort(rng.choice(r_dim, size=v_dim, replace=False))
                dim_ids = np.setdiff1d(dim_ids, spare)
            else:
                spare = np.empty(0, dtype=np.int64)
            link = np.full(r_fact, -1, dtype=np.int64)
            matched_fact = np.setdiff1d(np.arange(r_fact), unmatched_fact)
            # round-robin keeps per-dim-row fanout balanced at ~f
            assign = dim_ids[np.arange(matched_fact.size) % dim_ids.size]
            link[matched_fact] = rng.permutation(assign)
            r_k.append(r_dim)
            links.append(link)
            spares.append(spare)
        appended = sum(sp.size for sp in spares)
        r_t = r_fact + appended
        indicator_rc = [(np.arange(r_fact), np.arange(r_fact))]
        for k in range(1, n):
            rows = np.nonzero(links[k] >= 0)[0]
            cols = links[k][rows]
            off = r_fact
            for j in range(1, n):
                if j == k and spares[j].size:
                    rows = np.concatenate([rows, off + np.arange(spares[j].size)])
                    cols = np.concatenate([cols, spares[j]])
                off += spares[j].size
            indicator_rc.append((rows, cols))

    placements = sum(int(c_k[k]) * len(indicator_rc[k][0]) for k in range(n))
    density = (1.0 - spec.sparsity) * r_t * c_t / placements
    if density > 1.0 + 1e-9:
        raise GenError(
            f"infeasible: structural zeros force sparsity >= "
            f"{1.0 - placements / (r_t * c_t):.3f} > requested {spec.sparsity}")
    density = min(density, 1.0)

    params = dict(asdict(spec))
    params.update({"r_T": r_t, "c_T": c_t, "c_k": [int(c) for c in c_k],
                   "r_k": [int(r) for r in r_k], "fanouts": fanouts,
                   "unmatched_fraction": unmatched, "source_density": density})
    if dry_run:
        return None, params

    sources, mappings, indicators = [], [], []
    offset = 0
    for k in range(n):
        sources.append(_source(rng, int(r_k[k]), int(c_k[k]), density))
        mappings.append(_block_mapping(c_t, int(c_k[k]), offset))
        indicators.append(_indicator(r_t, int(r_k[k]), *indicator_rc[k]))
        offset += int(c_k[k])

    ft = FactorizedTable(sources, mappings, indicators, spec.join_type, r_t, c_t)
    report = ft.validate()
    if not report.ok:
        raise GenError(f"generator bug: invalid table\n{report}")
    return ft, params


@dataclass(frozen=True)
class GridConfig:
    """Cross product of parameter lists, cycled until `count` feasible
    datasets are produced (infeasible combinations are skipped)."""

    r_t: tuple[int, ...] = (5000, 20000)
    n_sources: tuple[int, ...] = (2, 3)
    sparsity: tuple[float, ...] = (0.0, 0.2, 0.4, 0.6, 0.8)
    rho_c: tuple[float, ...] = (0.4, 0.7, 1.0)
    join_types: tuple[str, ...] = JOIN_TYPES
    c_min: int = 10
    c_max: int = 50
    count: int = 300
    seed: int = 0

    @classmethod
    def from_dict(cls, d: dict) -> "GridConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise GenError(f"unknown grid config keys: {sorted(unknown)}")
        norm = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        cfg = cls(**norm)
        if cfg.count < 1:
            raise GenError("count must be >= 1")
        return cfg

    @classmethod
    def from_file(cls, path) -> "GridConfig":
        with open(path) as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as e:
                raise GenError(f"malformed grid config {path}: {e}") from None
        if not isinstance(raw, dict):
            raise GenError(f"grid config {path} must be a JSON object")
        return cls.from_dict(raw)


def grid_specs(cfg: GridConfig) -> list[GenSpec]:
    """The first cfg.count feasible GenSpecs from the cycled cross product.

    Each produced spec carries a distinct derived seed, so cycling the grid
    yields fresh datasets rather than duplicates.
    """
    combos = [(r, n, p, rho, j)
              for r in cfg.r_t for n in cfg.n_sources for p in cfg.sparsity
              for rho in cfg.rho_c for j in cfg.join_types]
    if not combos:
        raise GenError("empty grid")
    specs: list[GenSpec] = []
    attempt = 0
    limit = 50 * cfg.count + len(combos)
    while len(specs) < cfg.count:
        if attempt >= limit:
            raise GenError(
                f"grid yielded only {len(specs)} feasible specs out of "
                f"{attempt} attempts; requested {cfg.count}")
        r, n, p, rho, j = combos[attempt % len(combos)]
        spec = GenSpec(r_t=r, n_sources=n, c_min=cfg.c_min, c_max=cfg.c_max,
                       sparsity=p, rho_c=rho, join_type=j,
                       seed=cfg.seed + attempt)
        attempt += 1
        if _feasible(spec):
            specs.append(spec)
    return specs


def _feasible(spec: GenSpec) -> bool:
    """Exact structural feasibility, without building the value matrices."""
    try:
        generate(spec, dry_run=True)
        return True
    except GenError:
        return False
