"""Dataset persistence and CSV ingestion.

A dataset on disk is one directory: `manifest.json` naming the join type,
target extents, and per-source Matrix Market files for the source matrix and
its mapping/indicator metadata. The CSV path turns n raw tables plus a small
join manifest (which columns are keys, what kind of join) into the same
structure, so downstream code never sees relational data.
"""

from __future__ import annotations

import csv
import json
import os

import numpy as np

from .io import read_matrix_market, write_matrix_market
from .metadata import (JOIN_TYPES, FactorizedTable, IndicatorMatrix,
                       MappingMatrix)
from .sparse import SparseMatrix

MANIFEST_NAME = "manifest.json"
MANIFEST_FORMAT = "factorlearn-dataset-v1"


class DatasetError(ValueError):
    pass


def save_dataset(ft: FactorizedTable, directory, *, dataset_id: str,
                 generator_params: dict | None = None) -> str:
    """Write matrices + manifest; returns the manifest path."""
    os.makedirs(directory, exist_ok=True)
    entries = []
    for k, (s, m, i) in enumerate(zip(ft.sources, ft.mappings, ft.indicators), 1):
        names = {"source": f"s{k}.mtx", "mapping": f"m{k}.mtx",
                 "indicator": f"i{k}.mtx"}
        write_matrix_market(os.path.join(directory, names["source"]), s)
        write_matrix_market(os.path.join(directory, names["mapping"]), m.matrix)
        write_matrix_market(os.path.join(directory, names["indicator"]), i.matrix)
        entries.append(names)
    manifest = {
        "format": MANIFEST_FORMAT,
        "id": dataset_id,
        "n_sources": ft.n_sources,
        "join_type": ft.join_type,
        "r_T": ft.r_T,
        "c_T": ft.c_T,
        "sources": entries,
    }
    if generator_params is not None:
        manifest["generator_params"] = generator_params
    path = os.path.join(directory, MANIFEST_NAME)
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return path


def load_manifest(path) -> dict:
    if os.path.isdir(path):
        path = os.path.join(path, MANIFEST_NAME)
    with open(path) as fh:
        manifest = json.load(fh)
    if manifest.get("format") != MANIFEST_FORMAT:
        raise DatasetError(f"unsupported manifest format in {path}")
    return manifest


def load_dataset(path, *, check: bool = True) -> tuple[FactorizedTable, dict]:
    """Read a dataset directory (or its manifest path) back into memory."""
    if os.path.isdir(path):
        directory = path
    else:
        directory = os.path.dirname(path) or "."
    manifest = load_manifest(path)
    sources, mappings, indicators = [], [], []
    for entry in manifest["sources"]:
        sources.append(read_matrix_market(os.path.join(directory, entry["source"])))
        mappings.append(MappingMatrix(
            read_matrix_market(os.path.join(directory, entry["mapping"]))))
        indicators.append(IndicatorMatrix(
            read_matrix_market(os.path.join(directory, entry["indicator"]))))
    ft = FactorizedTable(sources, mappings, indicators, manifest["join_type"],
                         manifest["r_T"], manifest["c_T"])
    if check:
        ft.require_valid()
    return ft, manifest


def list_datasets(root) -> list[str]:
    """Manifest paths under root, sorted for stable iteration order."""
    found = []
    for dirpath, _dirnames, filenames in os.walk(root):
        if MANIFEST_NAME in filenames:
            found.append(os.path.join(dirpath, MANIFEST_NAME))
    return sorted(found)


def _read_csv_table(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DatasetError(f"{path}: empty CSV")
    header, body = rows[0], rows[1:]
    width = len(header)
    for i, row in enumerate(body):
        if len(row) != width:
            raise DatasetError(f"{path}: row {i + 2} has {len(row)} fields, "
                               f"expected {width}")
    return header, body


def _feature_matrix(header, body, drop: set[str], path) -> tuple[SparseMatrix, list[str]]:
    keep = [j for j, name in enumerate(header) if name not in drop]
    if not keep:
        raise DatasetError(f"{path}: no feature columns left after dropping keys")
    data = np.empty((len(body), len(keep)))
    for i, row in enumerate(body):
        for out_j, j in enumerate(keep):
            try:
                data[i, out_j] = float(row[j])
            except ValueError:
                raise DatasetError(
                    f"{path}: non-numeric value {row[j]!r} in feature column "
                    f"{header[j]!r}") from None
    return SparseMatrix.from_dense(data), [header[j] for j in keep]


def _block_mappings(col_counts: list[int], c_t: int) -> list[MappingMatrix]:
    mappings, off = [], 0
    for c in col_counts:
        mappings.append(MappingMatrix(SparseMatrix.from_coo(
            c_t, c, np.arange(off, off + c), np.arange(c), np.ones(c))))
        off += c
    return mappings


def ingest_csv(manifest: dict, *, base_dir: str = ".") -> FactorizedTable:
    """Turn raw CSV tables into a FactorizedTable.

    Star-join manifests::

        {"join_type": "inner"|"left"|"outer",
         "fact": {"path": ..., "keys": {"<dim name>": "<fk column>"}},
         "dims": {"<dim name>": {"path": ..., "key": "<key column>"}}}

    Key/FK columns join the tables and are dropped from the features (the
    metadata matrices carry all join knowledge). Union manifests::

        {"join_type": "union", "tables": [path, ...]}

    stack the tables row-wise with each table owning its own target-column
    block, keeping sources column-disjoint.
    """
    join_type = manifest.get("join_type")
    if join_type not in JOIN_TYPES:
        raise DatasetError(f"manifest join_type must be one of {JOIN_TYPES}")
    if join_type == "union":
        return _ingest_union(manifest, base_dir)
    return _ingest_star(manifest, base_dir)


def _ingest_union(manifest: dict, base_dir: str) -> FactorizedTable:
    paths = manifest.get("tables")
    if not paths:
        raise DatasetError("union manifest needs a nonempty 'tables' list")
    sources = []
    for p in paths:
        header, body = _read_csv_table(os.path.join(base_dir, p))
        s, _ = _feature_matrix(header, body, set(), p)
        sources.append(s)
    r_t = sum(s.n_rows for s in sources)
    c_t = sum(s.n_cols for s in sources)
    mappings = _block_mappings([s.n_cols for s in sources], c_t)
    indicators, off = [], 0
    for s in sources:
        indicators.append(IndicatorMatrix(SparseMatrix.from_coo(
            r_t, s.n_rows, np.arange(off, off + s.n_rows),
            np.arange(s.n_rows), np.ones(s.n_rows))))
        off += s.n_rows
    ft = FactorizedTable(sources, mappings, indicators, "union", r_t, c_t)
    ft.require_valid()
    return ft


def _ingest_star(manifest: dict, base_dir: str) -> FactorizedTable:
    join_type = manifest["join_type"]
    fact_cfg = manifest.get("fact")
    dims_cfg = manifest.get("dims", {})
    if not fact_cfg or not dims_cfg:
        raise DatasetError("star manifest needs 'fact' and 'dims' entries")
    fact_header, fact_body = _read_csv_table(os.path.join(base_dir, fact_cfg["path"]))
    fk_cols = fact_cfg.get("keys", {})
    if set(fk_cols) != set(dims_cfg):
        raise DatasetError("fact 'keys' must name exactly the declared dims")

    dim_order = sorted(dims_cfg)
    dims = {}
    for name in dim_order:
        cfg = dims_cfg[name]
        header, body = _read_csv_table(os.path.join(base_dir, cfg["path"]))
        key = cfg["key"]
        if key not in header:
            raise DatasetError(f"dim {name}: key column {key!r} not in header")
        kj = header.index(key)
        index = {}
        for i, row in enumerate(body):
            if row[kj] in index:
                raise DatasetError(f"dim {name}: duplicate key {row[kj]!r}")
            index[row[kj]] = i
        matrix, _ = _feature_matrix(header, body, {key}, cfg["path"])
        dims[name] = (matrix, index)

    # fact-row -> dim-row links; -1 where the FK has no dim match
    links = {}
    for name in dim_order:
        fkj = fact_header.index(fk_cols[name])
        index = dims[name][1]
        links[name] = np.asarray([index.get(row[fkj], -1) for row in fact_body],
                                 dtype=np.int64)

    keep_fact = np.arange(len(fact_body), dtype=np.int64)
    if join_type == "inner":
        matched = np.all(np.stack([links[n] >= 0 for n in dim_order]), axis=0)
        keep_fact = keep_fact[matched]
        if keep_fact.size == 0:
            raise DatasetError("inner join produced no rows")

    fact_matrix, _ = _feature_matrix(fact_header, fact_body,
                                     set(fk_cols.values()), fact_cfg["path"])
    n_fact = keep_fact.size
    extra = []
    if join_type == "outer":
        for name in dim_order:
            used = set(links[name].tolist())
            spare = [i for i in range(dims[name][0].n_rows) if i not in used]
            extra.append((name, np.asarray(spare, dtype=np.int64)))
    r_t = n_fact + sum(len(sp) for _, sp in extra)

    sources = [fact_matrix] + [dims[n][0] for n in dim_order]
    c_t = sum(s.n_cols for s in sources)
    mappings = _block_mappings([s.n_cols for s in sources], c_t)

    indicators = [IndicatorMatrix(SparseMatrix.from_coo(
        r_t, fact_matrix.n_rows, np.arange(n_fact), keep_fact, np.ones(n_fact)))]
    for name in dim_order:
        rows = np.nonzero(links[name][keep_fact] >= 0)[0]
        cols = links[name][keep_fact][rows]
        if join_type == "outer":
            off = n_fact
            for other, spare in extra:
                if other == name:
                    rows = np.concatenate([rows, off + np.arange(len(spare))])
                    cols = np.concatenate([cols, spare])
                off += len(spare)
        indicators.append(IndicatorMatrix(SparseMatrix.from_coo(
            r_t, dims[name][0].n_rows, rows, cols, np.ones(rows.size))))
    ft = FactorizedTable(sources, mappings, indicators, join_type, r_t, c_t)
    ft.require_valid()
    return ft


def ingest_csv_file(manifest_path) -> FactorizedTable:
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    return ingest_csv(manifest, base_dir=os.path.dirname(manifest_path) or ".")
