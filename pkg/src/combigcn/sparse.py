"""CSR sparse matrices and the handful of kernels the model needs.

Dense matrices are plain ``float64`` numpy arrays; only the sparse side gets
its own type.  Heavy lifting (sparse-dense products, transposes, the Gram
product) goes through ``scipy.sparse`` but every result is re-wrapped and
validated as a :class:`CSRMatrix`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True, eq=False)
class CSRMatrix:
    n_rows: int
    n_cols: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        row_ptr = np.ascontiguousarray(self.row_ptr, dtype=np.int64)
        col_idx = np.ascontiguousarray(self.col_idx, dtype=np.int64)
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        for arr in (row_ptr, col_idx, values):
            arr.flags.writeable = False
        object.__setattr__(self, "row_ptr", row_ptr)
        object.__setattr__(self, "col_idx", col_idx)
        object.__setattr__(self, "values", values)
        self.check()

    def check(self) -> None:
        """Raise ``ValueError`` if any structural invariant is broken."""
        rp, ci, v = self.row_ptr, self.col_idx, self.values
        if self.n_rows < 0 or self.n_cols < 0:
            raise ValueError(f"negative shape ({self.n_rows}, {self.n_cols})")
        if rp.shape != (self.n_rows + 1,):
            raise ValueError(f"row_ptr must have length {self.n_rows + 1}, got {rp.shape[0]}")
        if rp[0] != 0 or rp[-1] != ci.shape[0]:
            raise ValueError("row_ptr must start at 0 and end at nnz")
        if np.any(np.diff(rp) < 0):
            raise ValueError("row_ptr must be non-decreasing")
        if ci.shape != v.shape:
            raise ValueError("col_idx and values differ in length")
        if ci.size:
            if ci.min() < 0 or ci.max() >= self.n_cols:
                raise ValueError("column index out of range")
            # strictly increasing within a row: every step that stays inside a row must be positive
            steps = np.diff(ci)
            row_of = np.repeat(np.arange(self.n_rows), np.diff(rp))
            same_row = row_of[1:] == row_of[:-1]
            if np.any(steps[same_row] <= 0):
                raise ValueError("column indices must be strictly increasing within each row")
        if not np.all(np.isfinite(v)):
            raise ValueError("values must be finite")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self) -> int:
        return int(self.col_idx.shape[0])

    def row_indices(self) -> np.ndarray:
        """Row index of every stored entry (COO-style expansion)."""
        return np.repeat(np.arange(self.n_rows, dtype=np.int64), np.diff(self.row_ptr))

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix(
            (self.values, self.col_idx, self.row_ptr), shape=self.shape, copy=False
        )

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape, dtype=np.float64)
        out[self.row_indices(), self.col_idx] = self.values
        return out

    @classmethod
    def from_scipy(cls, m: sp.spmatrix) -> CSRMatrix:
        m = sp.csr_matrix(m, dtype=np.float64)
        m.sum_duplicates()
        m.sort_indices()
        return cls(m.shape[0], m.shape[1], m.indptr, m.indices, m.data)

    @classmethod
    def from_dense(cls, a) -> CSRMatrix:
        a = np.asarray(a, dtype=np.float64)
        if a.ndim != 2:
            raise ValueError(f"expected a 2-d array, got shape {a.shape}")
        return cls.from_scipy(sp.csr_matrix(a))

    @classmethod
    def from_coo(cls, rows, cols, values, shape: tuple[int, int]) -> CSRMatrix:
        """Build from triplets; duplicate coordinates are summed."""
        m = sp.coo_matrix(
            (np.asarray(values, dtype=np.float64), (np.asarray(rows), np.asarray(cols))),
            shape=shape,
        )
        return cls.from_scipy(m.tocsr())

    @classmethod
    def empty(cls, n_rows: int, n_cols: int) -> CSRMatrix:
        return cls(n_rows, n_cols, np.zeros(n_rows + 1), np.zeros(0), np.zeros(0))

    def is_binary(self) -> bool:
        return bool(np.all(self.values == 1.0))

    def equals(self, other: CSRMatrix) -> bool:
        """Bit-exact structural and value equality."""
        return (
            self.shape == other.shape
            and np.array_equal(self.row_ptr, other.row_ptr)
            and np.array_equal(self.col_idx, other.col_idx)
            and np.array_equal(self.values, other.values)
        )


def spmm(a: CSRMatrix, x: np.ndarray) -> np.ndarray:
    """Sparse times dense: ``a @ x``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or a.n_cols != x.shape[0]:
        raise ValueError(f"cannot multiply sparse {a.shape} by dense {x.shape}")
    if a.nnz == 0:
        return np.zeros((a.n_rows, x.shape[1]))
    return np.asarray(a.to_scipy() @ x)


def transpose(a: CSRMatrix) -> CSRMatrix:
    return CSRMatrix.from_scipy(a.to_scipy().T.tocsr())


def gram(a: CSRMatrix) -> CSRMatrix:
    """``a @ a.T`` for binary ``a``: entry (i, j) counts columns shared by rows i and j."""
    if not a.is_binary():
        raise ValueError("gram() requires a binary matrix (all stored values equal to 1)")
    s = a.to_scipy()
    return CSRMatrix.from_scipy(s @ s.T)


def sym_normalize(a: CSRMatrix, row_deg, col_deg) -> CSRMatrix:
    """Scale entry (i, j) by ``1 / sqrt(row_deg[i] * col_deg[j])``.

    Entries touching a zero-degree row or column become zero and are dropped.
    """
    row_deg = np.asarray(row_deg, dtype=np.float64)
    col_deg = np.asarray(col_deg, dtype=np.float64)
    if row_deg.shape != (a.n_rows,):
        raise ValueError(f"row_deg has length {row_deg.size}, expected {a.n_rows}")
    if col_deg.shape != (a.n_cols,):
        raise ValueError(f"col_deg has length {col_deg.size}, expected {a.n_cols}")
    if np.any(row_deg < 0) or np.any(col_deg < 0):
        raise ValueError("degrees must be non-negative")

    def inv_sqrt(deg: np.ndarray) -> np.ndarray:
        out = np.zeros_like(deg)
        pos = deg > 0
        out[pos] = 1.0 / np.sqrt(deg[pos])
        return out

    rows = a.row_indices()
    # multiply the two scale factors first so symmetric inputs stay exactly symmetric
    scaled = a.values * (inv_sqrt(row_deg)[rows] * inv_sqrt(col_deg)[a.col_idx])
    keep = scaled != 0.0
    return CSRMatrix.from_coo(rows[keep], a.col_idx[keep], scaled[keep], a.shape)
