"""CSV ingestion, outlier removal and detrending, and graph export."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import DataError, InvalidParameterError
from .graph import Graph

__all__ = [
    "LabeledSeries",
    "ingest_csv",
    "write_series_csv",
    "preprocess",
    "boxcar_detrend",
    "label_blocks",
    "GraphFormat",
    "graph_to_text",
    "export_graph",
    "graph_from_json",
]


@dataclass(frozen=True)
class LabeledSeries:
    """Data ``values`` (p, N_total) with optional integer ``labels`` (N_total,)."""

    values: np.ndarray
    labels: np.ndarray | None = None
    columns: tuple[str, ...] | None = None
    # original row index of each retained sample
    index: np.ndarray | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise DataError("values must be a p x N matrix")
        object.__setattr__(self, "values", v)
        if self.labels is not None:
            lab = np.asarray(self.labels)
            if lab.shape != (v.shape[1],):
                raise DataError(f"label length {lab.shape} does not match N_total={v.shape[1]}")
            object.__setattr__(self, "labels", lab)
        idx = np.arange(v.shape[1]) if self.index is None else np.asarray(self.index)
        object.__setattr__(self, "index", idx)

    @property
    def p(self) -> int:
        return self.values.shape[0]

    @property
    def N(self) -> int:
        return self.values.shape[1]

    def take(self, sel) -> "LabeledSeries":
        lab = None if self.labels is None else self.labels[sel]
        return LabeledSeries(self.values[:, sel], lab, self.columns, self.index[sel])


def _to_float(cell: str, row: int, col: int) -> float:
    try:
        return float(cell)
    except ValueError:
        raise DataError(f"non-numeric cell {cell!r} at row {row}, column {col}") from None


def ingest_csv(path, header_row: bool = False, label_column=None, delimiter: str = ",") -> LabeledSeries:
    """Read a table whose rows are time samples and columns components.

    ``label_column`` is a header name (needs ``header_row``) or a 0-based
    column index.  Row and column numbers in errors are 1-based file positions.
    """
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh, delimiter=delimiter))
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from e
    start = 0
    names = None
    if header_row:
        if not rows:
            raise DataError(f"{path} is empty")
        names = [c.strip() for c in rows[0]]
        start = 1
    body = [(i + 1, r) for i, r in enumerate(rows) if i >= start and any(c.strip() for c in r)]
    if not body:
        raise DataError(f"{path} has no data rows")
    width = len(names) if names is not None else len(body[0][1])
    for lineno, r in body:
        if len(r) != width:
            raise DataError(f"ragged row {lineno}: expected {width} columns, found {len(r)}")

    label_idx = None
    if label_column is not None:
        if isinstance(label_column, str) and not label_column.lstrip("-").isdigit():
            if names is None or label_column not in names:
                raise DataError(f"label column {label_column!r} not found in header")
            label_idx = names.index(label_column)
        else:
            label_idx = int(label_column)
            if not 0 <= label_idx < width:
                raise DataError(f"label column index {label_idx} out of range")

    feat = [j for j in range(width) if j != label_idx]
    if not feat:
        raise DataError("no feature columns")
    vals = np.empty((len(feat), len(body)))
    labels = np.empty(len(body), dtype=np.int64) if label_idx is not None else None
    for n, (lineno, r) in enumerate(body):
        for k, j in enumerate(feat):
            vals[k, n] = _to_float(r[j], lineno, j + 1)
        if label_idx is not None:
            x = _to_float(r[label_idx], lineno, label_idx + 1)
            if x != int(x):
                raise DataError(f"non-integer label {r[label_idx]!r} at row {lineno}")
            labels[n] = int(x)
    if not np.all(np.isfinite(vals)):
        bad = np.argwhere(~np.isfinite(vals))[0]
        raise DataError(f"non-finite value at row {body[bad[1]][0]}, column {feat[bad[0]] + 1}")
    cols = tuple(names[j] for j in feat) if names is not None else None
    return LabeledSeries(vals, labels, cols)


def write_series_csv(path, values, columns=None, labels=None, label_name: str = "label") -> None:
    """Write ``values`` (p, N) as N rows with a header; floats round-trip (``%.17g``)."""
    values = np.asarray(values, dtype=float)
    p = values.shape[0]
    columns = list(columns) if columns is not None else [f"x{i + 1}" for i in range(p)]
    header = columns + ([label_name] if labels is not None else [])
    lines = [",".join(header)]
    for n in range(values.shape[1]):
        cells = ["%.17g" % v for v in values[:, n]]
        if labels is not None:
            cells.append(str(int(labels[n])))
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")


def boxcar_detrend(values, length: int) -> np.ndarray:
    """Subtract a centred moving average of odd ``length`` from each row.

    Near the ends the average runs over the samples that exist.
    """
    if length < 1 or length % 2 == 0:
        raise InvalidParameterError("boxcar length must be odd and >= 1")
    x = np.asarray(values, dtype=float)
    N = x.shape[1]
    h = length // 2
    cs = np.concatenate([np.zeros((x.shape[0], 1)), np.cumsum(x, axis=1)], axis=1)
    lo = np.clip(np.arange(N) - h, 0, N)
    hi = np.clip(np.arange(N) + h + 1, 0, N)
    mean = (cs[:, hi] - cs[:, lo]) / (hi - lo)
    return x - mean


def preprocess(series: LabeledSeries, outlier_mad_k: float = 5.0, boxcar_len: int = 5) -> LabeledSeries:
    """Drop samples with any component beyond ``median +- k MAD``, then detrend."""
    if boxcar_len < 1 or boxcar_len % 2 == 0:
        raise InvalidParameterError("boxcar length must be odd and >= 1")
    if not outlier_mad_k > 0:
        raise InvalidParameterError("outlier_mad_k must be positive")
    x = series.values
    med = np.median(x, axis=1, keepdims=True)
    mad = np.median(np.abs(x - med), axis=1, keepdims=True)
    keep = ~np.any(np.abs(x - med) > outlier_mad_k * mad, axis=0)
    if not keep.any():
        raise DataError("outlier removal discarded every sample")
    kept = series.take(keep)
    return LabeledSeries(boxcar_detrend(kept.values, boxcar_len), kept.labels, kept.columns, kept.index)


def label_blocks(series: LabeledSeries, N: int) -> dict[int, slice]:
    """First contiguous run of length ``>= N`` for every label, truncated to ``N`` samples.

    Contiguous means consecutive in the retained sample order.
    """
    if series.labels is None:
        raise DataError("series has no labels")
    lab = series.labels
    out: dict[int, slice] = {}
    start = 0
    for n in range(1, lab.size + 1):
        if n == lab.size or lab[n] != lab[start]:
            key = int(lab[start])
            if key not in out and n - start >= N:
                out[key] = slice(start, start + N)
            start = n
    return dict(sorted(out.items()))


class GraphFormat(str, Enum):
    JSON = "json"
    DOT = "dot"
    EDGE_CSV = "csv"


def graph_to_text(g: Graph, fmt=GraphFormat.JSON) -> str:
    """Serialise with 1-based node labels and edges sorted lexicographically."""
    fmt = GraphFormat(fmt)
    edges = [(a + 1, b + 1) for a, b in g.sorted_edges()]
    if fmt is GraphFormat.JSON:
        return json.dumps({"p": g.p, "edges": [list(e) for e in edges]}) + "\n"
    if fmt is GraphFormat.DOT:
        lines = ["graph cig {"]
        lines += [f"  {i};" for i in range(1, g.p + 1)]
        lines += [f"  {a} -- {b};" for a, b in edges]
        return "\n".join(lines) + "\n}\n"
    return "r,rp\n" + "".join(f"{a},{b}\n" for a, b in edges)


def export_graph(g: Graph, fmt, path) -> None:
    Path(path).write_text(graph_to_text(g, fmt))


def graph_from_json(text: str) -> Graph:
    try:
        obj = json.loads(text)
        p = int(obj["p"])
        edges = frozenset((int(a) - 1, int(b) - 1) for a, b in obj["edges"])
    except (ValueError, KeyError, TypeError) as e:
        raise DataError(f"malformed graph JSON: {e}") from e
    return Graph(p, edges)
