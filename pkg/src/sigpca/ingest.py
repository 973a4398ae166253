"""CSV ingest: schema-driven parsing and the fixed preprocessing chain.

Preprocessing always runs in the same order: drop columns that are
mostly missing, expand discrete columns to indicator columns, then
center every column (and scale continuous ones to unit sample standard
deviation).  Each step appends a line to the dataset's provenance log.

Discrete columns are stored internally as level indices; indicator
expansion and CSV round-trips both work off the declared level order.
Ordinal columns are expanded like categorical ones unless their schema
entry sets ``as_numeric``, in which case the level index is kept as a
numeric code and the column is centered but never scaled.

Schema-driven ingest is for heterogeneous tables whose columns live on
unrelated scales.  Numeric matrices already on one common scale (the
synthetic benchmarks, or any pre-standardised export) instead go
through :func:`load_matrix_csv` and :func:`center_columns`: columns are
centered on their observed means but never rescaled, because dividing
columns of a homogeneous matrix by their individual standard deviations
would distort the very variance structure under test.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, DataError, LoadError
from .linalg import MaskedMatrix

KINDS = ("continuous", "categorical", "ordinal", "binary")
DISCRETE_KINDS = ("categorical", "ordinal", "binary")
DEFAULT_MISSING_TOKENS = ("", "NA")

_MIN_LEVELS = 2
_MAX_LEVELS = 11
# Sample std at or below this (relative) bound counts as zero variance.
_ZERO_STD_RTOL = 1e-12


@dataclass(frozen=True)
class ColumnSchema:
    """Declared name, kind and (for discrete kinds) ordered levels of one
    column.  ``as_numeric`` keeps an ordinal column as its level index
    instead of expanding it to indicators."""

    name: str
    kind: str
    levels: tuple[str, ...] | None = None
    as_numeric: bool = False

    def __post_init__(self) -> None:
        if not self.name or self.name != self.name.strip() or " " in self.name:
            raise ConfigError(f"invalid column name {self.name!r}")
        if self.kind not in KINDS:
            raise ConfigError(
                f"column {self.name!r}: kind must be one of {KINDS}, got {self.kind!r}"
            )
        if self.kind == "continuous":
            if self.levels is not None:
                raise ConfigError(f"column {self.name!r}: continuous columns take no levels")
        else:
            levels = tuple(self.levels or ())
            low, high = (2, 2) if self.kind == "binary" else (_MIN_LEVELS, _MAX_LEVELS)
            if not low <= len(levels) <= high:
                raise ConfigError(
                    f"column {self.name!r}: {self.kind} needs between {low} and "
                    f"{high} levels, got {len(levels)}"
                )
            if len(set(levels)) != len(levels):
                raise ConfigError(f"column {self.name!r}: duplicate levels")
            object.__setattr__(self, "levels", levels)
        if self.as_numeric and self.kind != "ordinal":
            raise ConfigError(
                f"column {self.name!r}: as_numeric applies only to ordinal columns"
            )

    @property
    def is_discrete(self) -> bool:
        return self.kind in DISCRETE_KINDS


@dataclass(frozen=True)
class Dataset:
    """A masked matrix with per-column schema, row labels, and the
    ordered provenance log of every transform applied so far."""

    schema: tuple[ColumnSchema, ...]
    matrix: MaskedMatrix
    row_labels: tuple[str, ...]
    provenance: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "schema", tuple(self.schema))
        object.__setattr__(self, "row_labels", tuple(self.row_labels))
        object.__setattr__(self, "provenance", tuple(self.provenance))
        if len(self.schema) != self.matrix.n_cols:
            raise DataError(
                f"schema describes {len(self.schema)} columns, matrix has "
                f"{self.matrix.n_cols}"
            )
        if len(self.row_labels) != self.matrix.n_rows:
            raise DataError(
                f"{len(self.row_labels)} row labels for {self.matrix.n_rows} rows"
            )
        names = [c.name for c in self.schema]
        if len(set(names)) != len(names):
            raise DataError("duplicate column names in schema")

    @property
    def column_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.schema)

    def with_step(self, step: str) -> "Dataset":
        return replace(self, provenance=self.provenance + (step,))


def _names(columns) -> str:
    return ",".join(columns) if columns else "-"


def load_csv(path, schema, missing_tokens=DEFAULT_MISSING_TOKENS) -> Dataset:
    """Parse a CSV file against ``schema``.

    The header must list exactly the schema's column names in order.
    Cells are stripped of surrounding whitespace; a cell matching one of
    ``missing_tokens`` is recorded as missing.  Continuous cells must
    parse as numbers and discrete cells must match a declared level,
    otherwise a LoadError names the offending row and column.
    """
    schema = tuple(schema)
    tokens = frozenset(missing_tokens)
    names = [c.name for c in schema]
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise LoadError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if header != names:
            raise LoadError(
                f"{path}: header {header} does not match schema columns {names}"
            )
        level_index = {
            c.name: {lvl: float(i) for i, lvl in enumerate(c.levels)}
            for c in schema
            if c.is_discrete
        }
        values: list[list[float]] = []
        mask: list[list[bool]] = []
        for row_num, row in enumerate(reader, start=1):
            if len(row) != len(schema):
                raise LoadError(
                    f"{path}: row {row_num} has {len(row)} cells, expected {len(schema)}"
                )
            v_row = []
            m_row = []
            for col, cell in zip(schema, row):
                cell = cell.strip()
                if cell in tokens:
                    v_row.append(0.0)
                    m_row.append(False)
                    continue
                if col.kind == "continuous":
                    try:
                        parsed = float(cell)
                    except ValueError:
                        raise LoadError(
                            f"{path}: row {row_num}, column {col.name!r}: "
                            f"unparseable number {cell!r}"
                        ) from None
                    if not np.isfinite(parsed):
                        raise LoadError(
                            f"{path}: row {row_num}, column {col.name!r}: "
                            f"non-finite value {cell!r}"
                        )
                else:
                    try:
                        parsed = level_index[col.name][cell]
                    except KeyError:
                        raise LoadError(
                            f"{path}: row {row_num}, column {col.name!r}: "
                            f"value {cell!r} not among levels {list(col.levels)}"
                        ) from None
                v_row.append(parsed)
                m_row.append(True)
            values.append(v_row)
            mask.append(m_row)
    if not values:
        raise LoadError(f"{path}: no data rows")
    matrix = MaskedMatrix(
        np.asarray(values, dtype=np.float64), np.asarray(mask, dtype=bool)
    )
    labels = tuple(str(i) for i in range(matrix.n_rows))
    step = (
        f"load_csv path={path} rows={matrix.n_rows} cols={matrix.n_cols} "
        f"missing_tokens={sorted(tokens)!r}"
    )
    return Dataset(schema=schema, matrix=matrix, row_labels=labels, provenance=(step,))


def write_csv(dataset: Dataset, path, missing_token: str = "NA") -> None:
    """Write ``dataset`` back out as CSV, inverse of :func:`load_csv`.

    Continuous cells use shortest round-trip float formatting, discrete
    cells are mapped back to their level strings, missing cells become
    ``missing_token``.
    """
    mat = dataset.matrix
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(dataset.column_names)
        for i in range(mat.n_rows):
            row = []
            for j, col in enumerate(dataset.schema):
                if not mat.mask[i, j]:
                    row.append(missing_token)
                elif col.is_discrete:
                    row.append(col.levels[int(mat.values[i, j])])
                else:
                    row.append(repr(float(mat.values[i, j])))
            writer.writerow(row)


def load_matrix_csv(path, missing_tokens=DEFAULT_MISSING_TOKENS) -> MaskedMatrix:
    """Parse a plain numeric CSV (header row then number cells) into a
    masked matrix.  Cells matching a missing token are masked out; any
    other cell must parse as a finite number."""
    tokens = frozenset(missing_tokens)
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise LoadError(f"{path}: empty file") from None
        width = len(header)
        values: list[list[float]] = []
        mask: list[list[bool]] = []
        for row_num, row in enumerate(reader, start=1):
            if len(row) != width:
                raise LoadError(
                    f"{path}: row {row_num} has {len(row)} cells, expected {width}"
                )
            v_row = []
            m_row = []
            for col_idx, cell in enumerate(row):
                cell = cell.strip()
                if cell in tokens:
                    v_row.append(0.0)
                    m_row.append(False)
                    continue
                try:
                    parsed = float(cell)
                except ValueError:
                    raise LoadError(
                        f"{path}: row {row_num}, column {header[col_idx].strip()!r}: "
                        f"unparseable number {cell!r}"
                    ) from None
                if not np.isfinite(parsed):
                    raise LoadError(
                        f"{path}: row {row_num}, column {header[col_idx].strip()!r}: "
                        f"non-finite value {cell!r}"
                    )
                v_row.append(parsed)
                m_row.append(True)
            values.append(v_row)
            mask.append(m_row)
    if not values:
        raise LoadError(f"{path}: no data rows")
    return MaskedMatrix(
        np.asarray(values, dtype=np.float64), np.asarray(mask, dtype=bool)
    )


def write_matrix_csv(matrix: MaskedMatrix, path, missing_token: str = "NA") -> None:
    """Write a masked matrix as a plain numeric CSV, inverse of
    :func:`load_matrix_csv`.  Columns are headed c0, c1, ... and values
    use shortest round-trip formatting."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow([f"c{j}" for j in range(matrix.n_cols)])
        for i in range(matrix.n_rows):
            writer.writerow(
                [
                    repr(float(matrix.values[i, j])) if matrix.mask[i, j] else missing_token
                    for j in range(matrix.n_cols)
                ]
            )


def drop_sparse_matrix_columns(
    matrix: MaskedMatrix, threshold: float = 0.5
) -> MaskedMatrix:
    """Drop matrix columns whose missing fraction strictly exceeds
    ``threshold``; schema-less counterpart of :func:`drop_sparse_columns`."""
    if not 0.0 <= threshold <= 1.0:
        raise ConfigError(f"threshold must be in [0, 1], got {threshold}")
    missing_frac = 1.0 - matrix.column_observed_counts() / matrix.n_rows
    keep = missing_frac <= threshold
    if not np.any(keep):
        raise DataError("every column exceeds the missing-fraction threshold")
    if np.all(keep):
        return matrix
    return MaskedMatrix(matrix.values[:, keep], matrix.mask[:, keep])


def center_columns(matrix: MaskedMatrix) -> MaskedMatrix:
    """Center every column on its observed mean, without any rescaling.

    This is the whole preprocessing owed to a numeric matrix already on
    one common scale.  Columns need at least one observed entry (already
    guaranteed by the sparse-column drop at any sane threshold).
    """
    means = matrix.column_means()
    values = np.where(matrix.mask, matrix.values - means, 0.0)
    return MaskedMatrix(values, matrix.mask)


def drop_sparse_columns(dataset: Dataset, threshold: float = 0.5) -> Dataset:
    """Drop columns whose missing fraction strictly exceeds ``threshold``."""
    if not 0.0 <= threshold <= 1.0:
        raise ConfigError(f"threshold must be in [0, 1], got {threshold}")
    mat = dataset.matrix
    missing_frac = 1.0 - mat.column_observed_counts() / mat.n_rows
    keep = missing_frac <= threshold
    dropped = [c.name for c, k in zip(dataset.schema, keep) if not k]
    if not np.any(keep):
        raise DataError("every column exceeds the missing-fraction threshold")
    out = Dataset(
        schema=tuple(c for c, k in zip(dataset.schema, keep) if k),
        matrix=MaskedMatrix(mat.values[:, keep], mat.mask[:, keep]),
        row_labels=dataset.row_labels,
        provenance=dataset.provenance,
    )
    return out.with_step(
        f"drop_sparse_columns threshold={threshold} dropped={_names(dropped)}"
    )


def one_hot(dataset: Dataset) -> Dataset:
    """Expand discrete columns into one indicator column per level.

    A missing source cell is missing across its whole indicator block.
    Ordinal columns flagged ``as_numeric`` pass through unchanged, as do
    continuous columns.
    """
    mat = dataset.matrix
    new_schema: list[ColumnSchema] = []
    new_values: list[np.ndarray] = []
    new_mask: list[np.ndarray] = []
    encoded: list[str] = []
    for j, col in enumerate(dataset.schema):
        if not col.is_discrete or (col.kind == "ordinal" and col.as_numeric):
            new_schema.append(col)
            new_values.append(mat.values[:, j])
            new_mask.append(mat.mask[:, j])
            continue
        encoded.append(col.name)
        observed = mat.mask[:, j]
        idx = mat.values[:, j]
        for lvl_pos, lvl in enumerate(col.levels):
            new_schema.append(
                ColumnSchema(name=f"{col.name}={lvl}", kind="binary", levels=("0", "1"))
            )
            new_values.append(np.where(observed & (idx == lvl_pos), 1.0, 0.0))
            new_mask.append(observed.copy())
    out = Dataset(
        schema=tuple(new_schema),
        matrix=MaskedMatrix(
            np.column_stack(new_values), np.column_stack(new_mask)
        ),
        row_labels=dataset.row_labels,
        provenance=dataset.provenance,
    )
    return out.with_step(f"one_hot encoded={_names(encoded)}")


def center_scale(dataset: Dataset) -> Dataset:
    """Center every column on its observed mean; scale continuous columns
    to unit sample (n-1) standard deviation.

    Indicator and numeric ordinal columns are centered but never scaled.
    Continuous columns with zero observed variance carry no information
    once centered and are dropped, with a provenance warning.  Every
    surviving column is plain continuous afterwards.
    """
    mat = dataset.matrix
    counts = mat.column_observed_counts()
    for col, count in zip(dataset.schema, counts):
        if count < 2:
            raise DataError(
                f"column {col.name!r} has {count} observed entries; need at least 2"
            )
    keep_cols: list[int] = []
    dropped: list[str] = []
    scaled: list[str] = []
    values = mat.values.copy()
    for j, col in enumerate(dataset.schema):
        obs = mat.mask[:, j]
        column = values[obs, j]
        mean = column.mean()
        column = column - mean
        if col.kind == "continuous":
            std = float(np.sqrt(np.dot(column, column) / (column.size - 1)))
            if std <= _ZERO_STD_RTOL * max(1.0, abs(mean)):
                dropped.append(col.name)
                continue
            column = column / std
            scaled.append(col.name)
        keep_cols.append(j)
        values[obs, j] = column
        values[~obs, j] = 0.0
    if not keep_cols:
        raise DataError("no columns left after dropping zero-variance columns")
    keep = np.asarray(keep_cols)
    out = Dataset(
        schema=tuple(
            ColumnSchema(name=dataset.schema[j].name, kind="continuous") for j in keep
        ),
        matrix=MaskedMatrix(values[:, keep], mat.mask[:, keep]),
        row_labels=dataset.row_labels,
        provenance=dataset.provenance,
    )
    return out.with_step(
        f"center_scale std_convention=sample(n-1) scaled={_names(scaled)} "
        f"dropped_zero_variance={_names(dropped)}"
    )


def preprocess(dataset: Dataset, sparse_threshold: float = 0.5) -> Dataset:
    """The full fixed-order chain: drop sparse, one-hot, center/scale."""
    return center_scale(one_hot(drop_sparse_columns(dataset, sparse_threshold)))


def read_schema(path) -> tuple[ColumnSchema, ...]:
    """Parse a schema file.

    One column per line: ``name kind`` for continuous columns,
    ``name kind level,level,...`` for discrete ones, with an optional
    trailing ``numeric`` token for ordinals kept as numeric codes.
    Blank lines and ``#`` comments are ignored.
    """
    columns: list[ColumnSchema] = []
    with open(path) as handle:
        for line_num, line in enumerate(handle, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) < 2 or len(parts) > 4:
                raise LoadError(f"{path}: line {line_num}: expected 'name kind [levels] [numeric]'")
            name, kind = parts[0], parts[1]
            levels = None
            as_numeric = False
            rest = parts[2:]
            if rest and rest[-1] == "numeric":
                as_numeric = True
                rest = rest[:-1]
            if rest:
                levels = tuple(rest[0].split(","))
            try:
                columns.append(
                    ColumnSchema(name=name, kind=kind, levels=levels, as_numeric=as_numeric)
                )
            except ConfigError as exc:
                raise LoadError(f"{path}: line {line_num}: {exc}") from exc
    if not columns:
        raise LoadError(f"{path}: no columns declared")
    return tuple(columns)


def write_schema(schema, path) -> None:
    """Inverse of :func:`read_schema`."""
    with open(path, "w") as handle:
        for col in schema:
            parts = [col.name, col.kind]
            if col.levels is not None:
                parts.append(",".join(col.levels))
            if col.as_numeric:
                parts.append("numeric")
            handle.write(" ".join(parts) + "\n")


def save_processed(dataset: Dataset, values_path, mask_path, provenance_path) -> None:
    """Write the processed matrix as a values/mask CSV pair plus the
    provenance log as plain text lines."""
    mat = dataset.matrix
    with open(values_path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(dataset.column_names)
        for i in range(mat.n_rows):
            writer.writerow(
                [
                    repr(float(mat.values[i, j])) if mat.mask[i, j] else ""
                    for j in range(mat.n_cols)
                ]
            )
    with open(mask_path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(dataset.column_names)
        for i in range(mat.n_rows):
            writer.writerow([int(x) for x in mat.mask[i]])
    with open(provenance_path, "w") as handle:
        for step in dataset.provenance:
            handle.write(step + "\n")
