"""On-disk formats: feature matrices, layer weights, dataset sidecars.

Feature file ("NFMT"): magic ``NFMT``, one version byte (1), uint32 N,
uint32 d (little-endian), then N*d little-endian float64 values in
row-major order.  Files ending in ``.csv`` are instead read/written as
header-less CSV with d columns; values use shortest round-trip decimal
so re-reading reproduces the exact doubles.

Weight file ("NFWT"): magic ``NFWT``, one version byte (1), uint32 layer
count, uint32 d, then per layer the row-major little-endian float64
blocks w_q, w_k, w_v (d*d each), ff1 (d*d), b1 (d), ff2 (d*d), b2 (d).

Dataset sidecar: CSV with header ``index,label,role,outlier`` carrying
the identity id, query/gallery role and outlier flag per feature row.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .attention import ProjectionSet
from .exceptions import DataFormatError, ShapeError
from .retrieval import GenParams, SyntheticDataset
from .stack import LayerWeights
from .validation import as_matrix

FEATURE_MAGIC = b"NFMT"
WEIGHT_MAGIC = b"NFWT"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sBII")

SIDECAR_HEADER = "index,label,role,outlier"


def _is_csv(path: Path) -> bool:
    return path.suffix.lower() == ".csv"


def _float_cell(value: float) -> str:
    return repr(float(value))


def write_features(path, x) -> None:
    """Write an N x d feature matrix; format chosen by extension."""
    path = Path(path)
    x = as_matrix(x, "features")
    if _is_csv(path):
        lines = [",".join(_float_cell(v) for v in row) for row in x]
        path.write_text("\n".join(lines) + "\n")
        return
    n, d = x.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(FEATURE_MAGIC, FORMAT_VERSION, n, d))
        fh.write(np.ascontiguousarray(x, dtype="<f8").tobytes())


def read_features(path) -> np.ndarray:
    """Read a feature matrix written by :func:`write_features`."""
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"feature file not found: {path}")
    if _is_csv(path):
        try:
            data = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
        except ValueError as exc:
            raise DataFormatError(f"malformed feature CSV {path}: {exc}") from exc
        return as_matrix(data, "features")
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise DataFormatError(f"feature file too short: {path}")
    magic, version, n, d = _HEADER.unpack_from(raw)
    if magic != FEATURE_MAGIC:
        raise DataFormatError(f"bad magic {magic!r} in {path}; expected {FEATURE_MAGIC!r}")
    if version != FORMAT_VERSION:
        raise DataFormatError(f"unsupported feature file version {version}")
    expected = _HEADER.size + 8 * n * d
    if len(raw) != expected:
        raise DataFormatError(f"feature file {path} has {len(raw)} bytes, expected {expected}")
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(n, d)
    return as_matrix(data.copy(), "features")


def write_weights(path, weights: list[LayerWeights]) -> None:
    path = Path(path)
    if not weights:
        raise ShapeError("cannot write an empty weight list")
    d = weights[0].d
    for w in weights:
        if w.d != d:
            raise ShapeError("all layers must share one dimension")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(WEIGHT_MAGIC, FORMAT_VERSION, len(weights), d))
        for w in weights:
            for block in (w.projections.w_q, w.projections.w_k, w.projections.w_v,
                          w.ff1, w.b1, w.ff2, w.b2):
                fh.write(np.ascontiguousarray(block, dtype="<f8").tobytes())


def read_weights(path) -> list[LayerWeights]:
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"weight file not found: {path}")
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise DataFormatError(f"weight file too short: {path}")
    magic, version, layers, d = _HEADER.unpack_from(raw)
    if magic != WEIGHT_MAGIC:
        raise DataFormatError(f"bad magic {magic!r} in {path}; expected {WEIGHT_MAGIC!r}")
    if version != FORMAT_VERSION:
        raise DataFormatError(f"unsupported weight file version {version}")
    block_sizes = [d * d, d * d, d * d, d * d, d, d * d, d]
    expected = _HEADER.size + 8 * layers * sum(block_sizes)
    if len(raw) != expected:
        raise DataFormatError(f"weight file {path} has {len(raw)} bytes, expected {expected}")

    values = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    out = []
    cursor = 0
    for _ in range(layers):
        blocks = []
        for size in block_sizes:
            blocks.append(values[cursor:cursor + size].copy())
            cursor += size
        w_q, w_k, w_v, ff1, b1, ff2, b2 = blocks
        out.append(LayerWeights(
            projections=ProjectionSet(
                w_q=w_q.reshape(d, d), w_k=w_k.reshape(d, d), w_v=w_v.reshape(d, d)
            ),
            ff1=ff1.reshape(d, d), b1=b1, ff2=ff2.reshape(d, d), b2=b2,
        ))
    return out


def write_dataset(ds: SyntheticDataset, feature_path, sidecar_path) -> None:
    """Export features plus the index/label/role/outlier sidecar CSV."""
    write_features(feature_path, ds.features)
    lines = [SIDECAR_HEADER]
    for i in range(ds.n):
        lines.append(f"{i},{int(ds.labels[i])},{ds.roles[i]},{int(ds.outlier_flags[i])}")
    Path(sidecar_path).write_text("\n".join(lines) + "\n")


def read_dataset(feature_path, sidecar_path, gen_params: GenParams | None = None) -> SyntheticDataset:
    features = read_features(feature_path)
    sidecar = Path(sidecar_path)
    if not sidecar.exists():
        raise DataFormatError(f"sidecar file not found: {sidecar}")
    lines = sidecar.read_text().strip().splitlines()
    if not lines or lines[0] != SIDECAR_HEADER:
        raise DataFormatError(f"sidecar {sidecar} must start with header {SIDECAR_HEADER!r}")
    rows = lines[1:]
    if len(rows) != features.shape[0]:
        raise DataFormatError(
            f"sidecar has {len(rows)} rows but feature file has {features.shape[0]}"
        )
    labels = np.empty(len(rows), dtype=np.int64)
    roles = np.empty(len(rows), dtype="<U7")
    outliers = np.zeros(len(rows), dtype=bool)
    for line in rows:
        cells = line.split(",")
        if len(cells) != 4:
            raise DataFormatError(f"malformed sidecar row: {line!r}")
        idx = int(cells[0])
        if not 0 <= idx < len(rows):
            raise DataFormatError(f"sidecar index {idx} out of range")
        labels[idx] = int(cells[1])
        if cells[2] not in ("query", "gallery"):
            raise DataFormatError(f"unknown role {cells[2]!r} in sidecar")
        roles[idx] = cells[2]
        outliers[idx] = bool(int(cells[3]))
    if gen_params is None:
        n_ids = int(np.unique(labels).size)
        gen_params = GenParams(identities=n_ids,
                               images_per_identity=len(rows) // max(n_ids, 1),
                               dim=features.shape[1])
    return SyntheticDataset(features=features, labels=labels, roles=roles,
                            outlier_flags=outliers, gen_params=gen_params)
