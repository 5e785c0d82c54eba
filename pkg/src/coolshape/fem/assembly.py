"""Sparse assembly, Dirichlet constraints and the direct solver."""

from __future__ import annotations

import dataclasses

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SingularSystemError(RuntimeError):
    pass


@dataclasses.dataclass(frozen=True, eq=False)
class SparseSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray

    @property
    def shape(self):
        return self.matrix.shape


def assemble_matrix(local, row_dofs, col_dofs=None, shape=None):
    """Sum cell matrices ``local`` (nc, nr, nc_) into a CSR matrix.

    Duplicates are summed by scipy in sorted-index order, so the result is
    bitwise reproducible.
    """
    local = np.asarray(local)
    if col_dofs is None:
        col_dofs = row_dofs
    if local.shape[1:] != (row_dofs.shape[1], col_dofs.shape[1]):
        raise ValueError(
            f"local block {local.shape[1:]} does not match dof maps "
            f"{row_dofs.shape[1]} x {col_dofs.shape[1]}"
        )
    if shape is None:
        n = int(max(row_dofs.max(), col_dofs.max())) + 1
        shape = (n, n)
    rows = np.broadcast_to(row_dofs[:, :, None], local.shape).ravel()
    cols = np.broadcast_to(col_dofs[:, None, :], local.shape).ravel()
    m = sp.coo_matrix((local.ravel(), (rows, cols)), shape=shape).tocsr()
    m.sum_duplicates()
    return m


def assemble_vector(local, dofs, n):
    local = np.asarray(local)
    if local.shape != dofs.shape:
        raise ValueError(f"local vector {local.shape} does not match dof map {dofs.shape}")
    return np.bincount(dofs.ravel(), weights=local.ravel(), minlength=n)


def apply_dirichlet(system, dofs, values=0.0, symmetric=True):
    """Constrain ``x[dofs] = values``: identity rows, RHS set to the values.

    With ``symmetric`` the constrained columns are lifted to the RHS too, so a
    symmetric matrix stays symmetric.
    """
    A = system.matrix.tocsr()
    n = A.shape[0]
    dofs = np.asarray(dofs, dtype=np.int64).ravel()
    if len(dofs) == 0:
        return system
    if dofs.min() < 0 or dofs.max() >= n:
        raise IndexError(f"Dirichlet DOF out of range 0..{n - 1}")
    values = np.broadcast_to(np.asarray(values, float), dofs.shape)
    b = np.array(system.rhs, dtype=float, copy=True)
    g = np.zeros(n)
    g[dofs] = values
    mask = np.zeros(n, dtype=bool)
    mask[dofs] = True
    keep = sp.diags((~mask).astype(float))
    if symmetric:
        b -= A @ g
        A = keep @ A @ keep
    else:
        A = keep @ A
    A = (A + sp.diags(mask.astype(float))).tocsr()
    b[mask] = g[mask]
    return SparseSystem(A, b)


def solve_direct(system, rtol=1e-10):
    """Sparse LU solve; raises :class:`SingularSystemError` for singular matrices."""
    A = system.matrix.tocsc()
    b = np.asarray(system.rhs, float)
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"matrix is not square: {A.shape}")
    empty_rows = np.flatnonzero(np.diff(A.tocsr().indptr) == 0)
    empty_cols = np.flatnonzero(np.diff(A.indptr) == 0)
    if len(empty_rows) or len(empty_cols):
        where = empty_rows[0] if len(empty_rows) else empty_cols[0]
        kind = "row" if len(empty_rows) else "column"
        raise SingularSystemError(f"structurally singular matrix: empty {kind} {where}")
    try:
        lu = spla.splu(A)
    except RuntimeError as exc:
        raise SingularSystemError(f"singular matrix: {exc}") from exc
    diag = np.abs(lu.U.diagonal())
    if np.any(diag == 0):
        k = int(np.flatnonzero(diag == 0)[0])
        raise SingularSystemError(f"singular matrix: zero pivot at position {k}")
    x = lu.solve(b)
    bnorm = np.linalg.norm(b)
    for _ in range(3):
        r = b - A @ x
        if np.linalg.norm(r) <= rtol * bnorm:
            break
        x = x + lu.solve(r)
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("non-finite solution")
    return x


class Factorized:
    """LU factorization reused for several right-hand sides."""

    def __init__(self, matrix):
        self.matrix = matrix.tocsc()
        try:
            self.lu = spla.splu(self.matrix)
        except RuntimeError as exc:
            raise SingularSystemError(f"singular matrix: {exc}") from exc

    def solve(self, b, rtol=1e-10):
        x = self.lu.solve(b)
        r = b - self.matrix @ x
        if np.linalg.norm(r) > rtol * np.linalg.norm(b):
            x = x + self.lu.solve(r)
        return x
