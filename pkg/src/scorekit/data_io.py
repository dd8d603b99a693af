"""CSV ingestion and seeded train/test splitting."""

from __future__ import annotations

import csv
import enum
import io
import math
import os
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import EvaluationSample
from .errors import EmptyStratum, GroupLargerThanPartition, MissingColumn, ParseError, ValidationError


class FeatureKind(enum.Enum):
    NUMERIC = "numeric"
    CATEGORICAL = "categorical"


@dataclass(frozen=True)
class ColumnSchema:
    """Which CSV columns hold the response, predictions, weight and features.

    ``features`` maps a column name to its :class:`FeatureKind`; pass a
    tuple of ``(name, kind)`` pairs to keep declaration order.
    """

    response: str
    predictions: tuple = ()
    weight: Optional[str] = None
    features: tuple = ()

    def __post_init__(self):
        feats = tuple((str(name), FeatureKind(kind)) for name, kind in self.features)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "predictions", tuple(self.predictions))
        if not self.response:
            raise ValidationError("a response column is required")
        names = self.columns
        dupes = sorted({c for c in names if names.count(c) > 1})
        if dupes:
            raise ValidationError(f"columns declared more than once: {dupes}")

    @property
    def columns(self) -> list[str]:
        cols = [self.response, *self.predictions]
        if self.weight:
            cols.append(self.weight)
        return cols + [name for name, _ in self.features]


def _parse_float(text: str, row: int, column: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ParseError(row, column, text) from None


def read_csv_text(text: str, schema: ColumnSchema) -> EvaluationSample:
    """Like :func:`load_csv` for CSV content already in memory."""
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ValidationError("CSV input is empty; a header row is required") from None
    header = [h.strip() for h in header]
    missing = [c for c in schema.columns if c not in header]
    if missing:
        raise MissingColumn(f"column(s) {missing} not found in header {header}")
    idx = {c: header.index(c) for c in schema.columns}
    numeric = [schema.response, *schema.predictions]
    if schema.weight:
        numeric.append(schema.weight)
    numeric += [name for name, kind in schema.features if kind is FeatureKind.NUMERIC]
    values: dict[str, list] = {c: [] for c in schema.columns}
    for row_no, row in enumerate(reader, start=1):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise ParseError(row_no, "<row>", f"{len(row)} fields, expected {len(header)}")
        for c in numeric:
            values[c].append(_parse_float(row[idx[c]].strip(), row_no, c))
        for name, kind in schema.features:
            if kind is FeatureKind.CATEGORICAL:
                values[name].append(row[idx[name]].strip())
    features = {}
    for name, kind in schema.features:
        col = values[name]
        features[name] = np.asarray(col, dtype=float if kind is FeatureKind.NUMERIC else object)
    return EvaluationSample(
        y=np.asarray(values[schema.response], dtype=float),
        predictions={p: np.asarray(values[p], dtype=float) for p in schema.predictions},
        weights=np.asarray(values[schema.weight], dtype=float) if schema.weight else None,
        features=features,
    )


def load_csv(path, schema: ColumnSchema) -> EvaluationSample:
    """Read a comma-separated UTF-8 file with a header row.

    Data rows are numbered from 1 in error messages; blank lines are
    skipped and row order is preserved.

    Raises
    ------
    MissingColumn
        If a declared column is absent from the header.
    ParseError
        If a numeric cell cannot be parsed.
    ValidationError
        If the resulting sample violates its invariants.
    """
    with open(os.fspath(path), newline="", encoding="utf-8-sig") as fh:
        return read_csv_text(fh.read(), schema)


def read_header(path) -> list[str]:
    with open(os.fspath(path), newline="", encoding="utf-8-sig") as fh:
        return [h.strip() for h in next(csv.reader(fh), [])]


class SplitMethod(enum.Enum):
    RANDOM = "random"
    STRATIFIED = "stratified"
    GROUPED = "grouped"
    KFOLD = "kfold"
    OUT_OF_TIME = "out_of_time"


def _default_names(k: int) -> tuple:
    if k == 1:
        return ("train",)
    if k == 2:
        return ("train", "test")
    if k == 3:
        return ("train", "validation", "test")
    return tuple(f"part{i}" for i in range(k))


@dataclass(frozen=True)
class SplitSpec:
    """How to partition rows.

    ``fractions`` apply to random, stratified, grouped and out-of-time
    splits; ``k`` to k-fold.  ``column`` names the strata, group or
    ordering column.  Rows beyond ``sum(fractions)`` stay unassigned.
    """

    method: SplitMethod
    fractions: tuple = (0.8, 0.2)
    k: Optional[int] = None
    seed: int = 0
    column: Optional[str] = None
    names: Optional[tuple] = None

    def __post_init__(self):
        method = SplitMethod(self.method)
        object.__setattr__(self, "method", method)
        if method is SplitMethod.KFOLD:
            if self.k is None or self.k < 2:
                raise ValidationError("k-fold splitting needs k >= 2")
            names = self.names or tuple(f"fold{i}" for i in range(self.k))
            if len(names) != self.k:
                raise ValidationError("need one name per fold")
        else:
            fr = tuple(float(f) for f in self.fractions)
            if fr != (1.0,) and (not fr or any(not 0.0 < f < 1.0 for f in fr)):
                raise ValidationError("fractions must lie in (0, 1)")
            if math.fsum(fr) > 1.0 + 1e-12:
                raise ValidationError(f"fractions sum to {math.fsum(fr)}, more than 1")
            object.__setattr__(self, "fractions", fr)
            names = self.names or _default_names(len(fr))
            if len(names) != len(fr):
                raise ValidationError("need one name per fraction")
        if len(set(names)) != len(names):
            raise ValidationError("partition names must be distinct")
        object.__setattr__(self, "names", tuple(names))
        if method in (SplitMethod.STRATIFIED, SplitMethod.GROUPED, SplitMethod.OUT_OF_TIME) and not self.column:
            raise ValidationError(f"{method.value} splitting needs a column")

    @property
    def assigns_all(self) -> bool:
        return self.method is SplitMethod.KFOLD or math.isclose(math.fsum(self.fractions), 1.0)


def largest_remainder(total: int, fractions: Sequence[float], exhaustive: bool) -> np.ndarray:
    """Integer counts proportional to ``fractions`` of ``total``.

    Floors are topped up one by one in order of largest remainder (ties to
    the earlier partition) until the counts add up to
    ``round(total * sum(fractions))``, or ``total`` when ``exhaustive``.
    """
    raw = np.asarray(fractions, dtype=float) * total
    counts = np.floor(raw + 1e-9).astype(int)
    target = total if exhaustive else int(math.floor(math.fsum(raw) + 0.5 + 1e-9))
    rem = raw - counts
    order = sorted(range(len(raw)), key=lambda i: (-rem[i], i))
    for i in order[: max(0, target - int(counts.sum()))]:
        counts[i] += 1
    return counts


def _codes(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if values.dtype.kind == "f":
        return np.unique(values, return_inverse=True)
    levels, inverse = np.unique(values.astype(str), return_inverse=True)
    return levels, inverse


def _cut(order: np.ndarray, counts: np.ndarray, names: tuple) -> dict:
    out, start = {}, 0
    for name, c in zip(names, counts):
        out[name] = order[start : start + c]
        start += c
    return out


def split(sample: EvaluationSample, spec: SplitSpec) -> dict[str, np.ndarray]:
    """Partition the row indices of ``sample``.

    Returns a dict from partition name to sorted row indices.  All methods
    are deterministic given ``spec.seed`` (numpy PCG64).

    Raises
    ------
    EmptyStratum
        If a stratum has fewer rows than there are partitions.
    GroupLargerThanPartition
        If a group cannot be placed without exceeding the assigned share
        of rows (only possible when the fractions sum to less than 1).
    """
    n = sample.n
    rng = np.random.default_rng(spec.seed)
    method = spec.method
    if method is SplitMethod.KFOLD:
        if spec.k > n:
            raise ValidationError(f"cannot make {spec.k} folds from {n} rows")
        perm = rng.permutation(n)
        parts = dict(zip(spec.names, np.array_split(perm, spec.k)))
    elif method is SplitMethod.RANDOM:
        counts = largest_remainder(n, spec.fractions, spec.assigns_all)
        parts = _cut(rng.permutation(n), counts, spec.names)
    elif method is SplitMethod.OUT_OF_TIME:
        key = sample.column(spec.column)
        if key.dtype.kind != "f":
            raise ValidationError(f"ordering column {spec.column!r} must be numeric")
        counts = largest_remainder(n, spec.fractions, spec.assigns_all)
        parts = _cut(np.argsort(key, kind="stable"), counts, spec.names)
    elif method is SplitMethod.STRATIFIED:
        levels, codes = _codes(np.asarray(sample.column(spec.column)))
        chunks = {name: [] for name in spec.names}
        for s, level in enumerate(levels):
            rows = np.flatnonzero(codes == s)
            if rows.size < len(spec.names):
                raise EmptyStratum(
                    f"stratum {level!r} has {rows.size} row(s), fewer than the {len(spec.names)} partitions"
                )
            counts = largest_remainder(rows.size, spec.fractions, spec.assigns_all)
            for name, idx in _cut(rng.permutation(rows), counts, spec.names).items():
                chunks[name].append(idx)
        parts = {name: np.concatenate(c) for name, c in chunks.items()}
    else:
        parts = _grouped(sample, spec, rng)
    return {name: np.sort(np.asarray(idx, dtype=int)) for name, idx in parts.items()}


def _grouped(sample: EvaluationSample, spec: SplitSpec, rng: np.random.Generator) -> dict:
    levels, codes = _codes(np.asarray(sample.column(spec.column)))
    sizes = np.bincount(codes, minlength=levels.size)
    targets = largest_remainder(sample.n, spec.fractions, spec.assigns_all).astype(float)
    filled = np.zeros_like(targets)
    assigned: dict[int, list] = {i: [] for i in range(len(targets))}
    for g in rng.permutation(levels.size):
        deficit = targets - filled
        best = int(np.argmax(deficit))
        if not spec.assigns_all:
            if deficit[best] <= 0:
                continue
            if sizes[g] > targets.sum():
                raise GroupLargerThanPartition(
                    f"group {levels[g]!r} has {sizes[g]} rows, more than the {int(targets.sum())} rows to assign"
                )
        assigned[best].append(g)
        filled[best] += sizes[g]
    out = {}
    for i, name in enumerate(spec.names):
        groups = np.asarray(assigned[i], dtype=int)
        out[name] = np.flatnonzero(np.isin(codes, groups))
    return out


def partitions_csv(parts: dict) -> str:
    """``row_index,partition`` lines sorted by row index."""
    label = {}
    for name, idx in parts.items():
        for i in idx:
            label[int(i)] = name
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["row_index", "partition"])
    for i in sorted(label):
        writer.writerow([i, label[i]])
    return buf.getvalue()
