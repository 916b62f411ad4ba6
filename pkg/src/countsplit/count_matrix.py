"""Count matrices: container, file I/O, size factors and log-normalisation."""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.io
import scipy.sparse

from .errors import (
    DegenerateCellError,
    DimensionMismatchError,
    InvalidConfigError,
    MatrixIOError,
    MatrixParseError,
)

FORMATS = ("csv_dense", "matrix_market")


@dataclass(frozen=True)
class CountMatrix:
    """Cells-by-genes matrix of non-negative integer read counts."""

    counts: np.ndarray
    gene_names: tuple[str, ...] | None = None
    cell_names: tuple[str, ...] | None = None

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 2 or counts.shape[0] < 1 or counts.shape[1] < 1:
            raise DimensionMismatchError(f"counts must be a non-empty 2D array, got shape {counts.shape}")
        if counts.dtype.kind == "f":
            if not np.all(np.isfinite(counts)) or np.any(counts != np.round(counts)):
                raise MatrixParseError("counts must be integer-valued")
        elif counts.dtype.kind not in "iu":
            raise MatrixParseError(f"counts must be numeric, got dtype {counts.dtype}")
        if np.any(counts < 0):
            i, j = np.argwhere(counts < 0)[0]
            raise MatrixParseError(f"negative count at row {i}, column {j}", row=int(i), col=int(j))
        counts = np.ascontiguousarray(counts, dtype=np.int64)
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        if self.gene_names is not None:
            names = tuple(str(g) for g in self.gene_names)
            if len(names) != counts.shape[1]:
                raise DimensionMismatchError(f"{len(names)} gene names for {counts.shape[1]} genes")
            object.__setattr__(self, "gene_names", names)
        if self.cell_names is not None:
            names = tuple(str(c) for c in self.cell_names)
            if len(names) != counts.shape[0]:
                raise DimensionMismatchError(f"{len(names)} cell names for {counts.shape[0]} cells")
            object.__setattr__(self, "cell_names", names)

    @property
    def n_cells(self) -> int:
        return self.counts.shape[0]

    @property
    def n_genes(self) -> int:
        return self.counts.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.counts.shape

    def with_counts(self, counts: np.ndarray) -> "CountMatrix":
        """Same names, new counts of identical shape."""
        return CountMatrix(counts, gene_names=self.gene_names, cell_names=self.cell_names)

    def take_rows(self, rows: Sequence[int]) -> "CountMatrix":
        rows = np.asarray(rows, dtype=np.int64)
        cells = None if self.cell_names is None else tuple(self.cell_names[i] for i in rows)
        return CountMatrix(self.counts[rows], gene_names=self.gene_names, cell_names=cells)

    def take_cols(self, cols: Sequence[int]) -> "CountMatrix":
        cols = np.asarray(cols, dtype=np.int64)
        genes = None if self.gene_names is None else tuple(self.gene_names[j] for j in cols)
        return CountMatrix(self.counts[:, cols], gene_names=genes, cell_names=self.cell_names)


@dataclass(frozen=True)
class SizeFactors:
    """Per-cell size factors; all entries strictly positive."""

    gamma: np.ndarray = field()

    def __post_init__(self):
        gamma = np.ascontiguousarray(self.gamma, dtype=np.float64)
        if gamma.ndim != 1 or gamma.size == 0:
            raise DimensionMismatchError("size factors must be a non-empty 1D array")
        if not np.all(np.isfinite(gamma)) or np.any(gamma <= 0):
            raise InvalidConfigError("size factors must be finite and strictly positive")
        gamma.setflags(write=False)
        object.__setattr__(self, "gamma", gamma)

    def __len__(self) -> int:
        return self.gamma.size

    @classmethod
    def unit(cls, n_cells: int) -> "SizeFactors":
        return cls(np.ones(n_cells))

    def take(self, rows) -> "SizeFactors":
        return SizeFactors(self.gamma[np.asarray(rows, dtype=np.int64)])


def _infer_format(path: str) -> str:
    lower = path.lower()
    if lower.endswith((".mtx", ".mm", ".mtx.gz")):
        return "matrix_market"
    return "csv_dense"


def _parse_int_token(tok: str, row: int, col: int) -> int:
    tok = tok.strip()
    try:
        value = int(tok)
    except ValueError:
        try:
            fval = float(tok)
        except ValueError:
            raise MatrixParseError(
                f"non-numeric entry {tok!r} at row {row}, column {col}", row=row, col=col
            ) from None
        if not np.isfinite(fval) or fval != int(fval):
            raise MatrixParseError(
                f"fractional entry {tok!r} at row {row}, column {col}", row=row, col=col
            ) from None
        value = int(fval)
    if value < 0:
        raise MatrixParseError(f"negative entry {tok!r} at row {row}, column {col}", row=row, col=col)
    return value


def _looks_numeric(tok: str) -> bool:
    try:
        float(tok)
    except ValueError:
        return False
    return True


def _read_csv(text: str) -> CountMatrix:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise MatrixParseError("empty CSV file")
    first = [t.strip() for t in lines[0].split(",")]
    gene_names = None
    if not all(_looks_numeric(t) for t in first):
        gene_names = [t.strip('"') for t in first]
        lines = lines[1:]
    if not lines:
        raise MatrixParseError("CSV file has a header but no data rows")
    width = len(lines[0].split(","))
    try:
        values = np.loadtxt(io.StringIO("\n".join(lines)), delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError:
        values = None
    if values is None or values.shape[1] != width:
        rows = []
        for i, ln in enumerate(lines):
            toks = ln.split(",")
            if len(toks) != width:
                raise MatrixParseError(f"row {i} has {len(toks)} fields, expected {width}", row=i)
            rows.append([_parse_int_token(t, i, j) for j, t in enumerate(toks)])
        counts = np.array(rows, dtype=np.int64)
    else:
        bad = ~np.isfinite(values) | (values < 0) | (values != np.round(values))
        if bad.any():
            i, j = np.argwhere(bad)[0]
            _parse_int_token(lines[i].split(",")[j], int(i), int(j))
            raise MatrixParseError(f"invalid entry at row {i}, column {j}", row=int(i), col=int(j))
        counts = values.astype(np.int64)
    return CountMatrix(counts, gene_names=gene_names)


def _read_matrix_market(path: str) -> CountMatrix:
    try:
        mat = scipy.io.mmread(path)
    except (ValueError, IndexError) as exc:
        raise MatrixParseError(f"cannot parse MatrixMarket file {path}: {exc}") from exc
    if scipy.sparse.issparse(mat):
        coo = mat.tocoo()
        data, rr, cc = coo.data, coo.row, coo.col
        dense = None
    else:
        dense = np.asarray(mat)
        rr, cc = np.nonzero(dense)
        data = dense[rr, cc]
    bad = (data < 0) | (data != np.round(data))
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        raise MatrixParseError(
            f"invalid entry {data[k]!r} at row {rr[k]}, column {cc[k]}", row=int(rr[k]), col=int(cc[k])
        )
    if dense is None:
        dense = mat.toarray()
    return CountMatrix(np.rint(dense).astype(np.int64))


def load_matrix(path: str | os.PathLike, format: str | None = None) -> CountMatrix:
    """Read a count matrix from a dense CSV or a MatrixMarket coordinate file.

    Parameters
    ----------
    path : str or PathLike
        Input file.
    format : {"csv_dense", "matrix_market"}, optional
        Inferred from the extension when omitted (``.mtx`` is MatrixMarket).

    Raises
    ------
    MatrixIOError
        The file cannot be read.
    MatrixParseError
        An entry is negative, fractional or non-numeric; ``row``/``col``
        locate it (0-based).
    """
    path = os.fspath(path)
    fmt = format or _infer_format(path)
    if fmt not in FORMATS:
        raise InvalidConfigError(f"unknown matrix format {fmt!r}; expected one of {FORMATS}")
    if not os.path.isfile(path):
        raise MatrixIOError(f"cannot read {path}: no such file")
    if fmt == "matrix_market":
        return _read_matrix_market(path)
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise MatrixIOError(f"cannot read {path}: {exc}") from exc
    return _read_csv(text)


def save_matrix(X: CountMatrix, path: str | os.PathLike, format: str | None = None) -> None:
    """Write ``X`` in the given format (round-trips exactly through :func:`load_matrix`)."""
    path = os.fspath(path)
    fmt = format or _infer_format(path)
    if fmt not in FORMATS:
        raise InvalidConfigError(f"unknown matrix format {fmt!r}; expected one of {FORMATS}")
    try:
        if fmt == "matrix_market":
            scipy.io.mmwrite(path, scipy.sparse.coo_matrix(X.counts), field="integer", symmetry="general")
            return
        with open(path, "w", encoding="utf-8", newline="") as fh:
            if X.gene_names is not None:
                fh.write(",".join(X.gene_names) + "\n")
            np.savetxt(fh, X.counts, fmt="%d", delimiter=",")
    except OSError as exc:
        raise MatrixIOError(f"cannot write {path}: {exc}") from exc


def estimate_size_factors(X: CountMatrix) -> SizeFactors:
    """Row sums scaled to geometric mean one.

    Raises :class:`DegenerateCellError` if any cell has zero total count.
    """
    sums = X.counts.sum(axis=1).astype(np.float64)
    if np.any(sums <= 0):
        bad = np.flatnonzero(sums <= 0)
        raise DegenerateCellError(f"{bad.size} cell(s) with zero total count, first at row {bad[0]}")
    logs = np.log(sums)
    return SizeFactors(np.exp(logs - logs.mean()))


def log_normalize(X: CountMatrix | np.ndarray, gamma: SizeFactors | np.ndarray, pseudocount: float = 1.0) -> np.ndarray:
    """Return ``log(X_ij / gamma_i + pseudocount)`` as a float array."""
    counts = X.counts if isinstance(X, CountMatrix) else np.asarray(X)
    g = gamma.gamma if isinstance(gamma, SizeFactors) else np.asarray(gamma, dtype=np.float64)
    if counts.ndim != 2 or g.shape != (counts.shape[0],):
        raise DimensionMismatchError(
            f"size factors of length {g.shape} do not match {counts.shape[0]} cells"
        )
    if not pseudocount > 0:
        raise InvalidConfigError("pseudocount must be positive")
    return np.log(counts / g[:, None] + pseudocount)
