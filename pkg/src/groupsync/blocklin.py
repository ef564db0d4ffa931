"""Block-structured linear algebra.

A block column is an ``(n, d, k)`` array; ``Y.reshape(n * d, k)`` is the usual
stacked ``nd x k`` matrix, block ``i`` being ``Y[i]``. Symmetric block
matrices store only the upper-triangular off-diagonal blocks plus the
diagonal blocks, so symmetry holds by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, eigsh


class ConvergenceError(RuntimeError):
    """An iterative solver ran out of iterations."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (achieved residual {residual:.3e})")
        self.residual = residual


@dataclass
class BlockSymMatrix:
    """Symmetric ``nd x nd`` matrix with sparse ``d x d`` blocks.

    ``rows[e] < cols[e]`` index the stored upper blocks ``blocks[e]``; the
    lower block ``(cols[e], rows[e])`` is ``blocks[e].T``. ``diag`` holds the
    ``n`` diagonal blocks (each must be symmetric).
    """

    n: int
    d: int
    rows: np.ndarray
    cols: np.ndarray
    blocks: np.ndarray
    diag: np.ndarray
    _csr: Optional[sp.csr_matrix] = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.int64).reshape(-1)
        self.cols = np.asarray(self.cols, dtype=np.int64).reshape(-1)
        self.blocks = np.asarray(self.blocks, dtype=float).reshape(-1, self.d, self.d)
        self.diag = np.asarray(self.diag, dtype=float).reshape(self.n, self.d, self.d)
        if not (len(self.rows) == len(self.cols) == len(self.blocks)):
            raise ValueError("rows, cols and blocks must have the same length")
        if len(self.rows) and (np.any(self.rows >= self.cols) or self.rows.min() < 0 or self.cols.max() >= self.n):
            raise ValueError("off-diagonal blocks must be indexed by 0 <= i < j < n")
        if not np.allclose(self.diag, np.swapaxes(self.diag, 1, 2)):
            raise ValueError("diagonal blocks must be symmetric")

    @classmethod
    def block_identity(cls, n: int, d: int) -> "BlockSymMatrix":
        return cls(n, d, np.zeros(0), np.zeros(0), np.zeros((0, d, d)), np.broadcast_to(np.eye(d), (n, d, d)))

    @property
    def size(self) -> int:
        return self.n * self.d

    def to_sparse(self) -> sp.csr_matrix:
        if self._csr is None:
            n, d = self.n, self.d
            index = np.arange(n)
            block_rows = np.concatenate([index, self.rows, self.cols])
            block_cols = np.concatenate([index, self.cols, self.rows])
            data = np.concatenate([self.diag, self.blocks, np.swapaxes(self.blocks, 1, 2)])
            order = np.lexsort((block_cols, block_rows))
            block_rows, block_cols, data = block_rows[order], block_cols[order], data[order]
            indptr = np.searchsorted(block_rows, np.arange(n + 1))
            bsr = sp.bsr_matrix((data, block_cols, indptr), shape=(n * d, n * d), blocksize=(d, d))
            self._csr = bsr.tocsr()
        return self._csr

    def to_dense(self) -> np.ndarray:
        return self.to_sparse().toarray()

    def abs_row_sums(self) -> np.ndarray:
        return np.asarray(abs(self.to_sparse()).sum(axis=1)).reshape(-1)

    def __matmul__(self, Y):
        return blockmatvec(self, Y)


def as_stacked(Y, n: int, d: int) -> np.ndarray:
    """View a block column of ``n`` blocks with ``d`` rows as an ``nd x k`` matrix."""
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 3:
        if Y.shape[:2] != (n, d):
            raise ValueError(f"expected ({n}, {d}, k) block column, got {Y.shape}")
        return Y.reshape(n * d, Y.shape[2])
    if Y.ndim == 2 and Y.shape[0] == n * d:
        return Y
    if Y.ndim == 1 and Y.shape[0] == n * d:
        return Y[:, None]
    raise ValueError(f"cannot interpret shape {Y.shape} as a block column with n={n}, d={d}")


def blockmatvec(C: BlockSymMatrix, Y):
    """Product ``C @ Y`` for a block column ``Y``; output keeps the input layout."""
    Y = np.asarray(Y, dtype=float)
    out = C.to_sparse() @ as_stacked(Y, C.n, C.d)
    if Y.ndim == 1:
        return out[:, 0]
    return out.reshape(Y.shape)


DENSE_EIGEN_LIMIT = 64


def top_eigenvectors(C: BlockSymMatrix, k: int, tol: float = 1e-8, max_iters: int = 5000):
    """The ``k`` algebraically largest eigenpairs of a symmetric block matrix.

    Implicitly restarted Lanczos (ARPACK) run to machine precision from a
    fixed start vector, so results are reproducible; small matrices use a
    dense solver. Every returned pair satisfies ``||C v - lam v|| <= tol * s``
    with ``s`` the Gershgorin bound on ``||C||``.

    Returns
    -------
    values : ndarray, shape (k,)
        Eigenvalues in descending order.
    vectors : ndarray, shape (nd, k)
        Orthonormal eigenvectors.
    """
    N = C.size
    if not 1 <= k <= N:
        raise ValueError(f"need 1 <= k <= {N}, got {k}")
    scale = max(float(C.abs_row_sums().max(initial=0.0)), 1e-300)
    if N <= DENSE_EIGEN_LIMIT or k >= N - 1:
        values, vectors = np.linalg.eigh(C.to_dense())
        return values[::-1][:k].copy(), vectors[:, ::-1][:, :k].copy()

    A = C.to_sparse()
    v0 = np.random.default_rng(0x5EED).standard_normal(N)
    try:
        values, vectors = eigsh(A, k=k, which="LA", v0=v0, tol=0.0, maxiter=max_iters)
    except ArpackNoConvergence as exc:
        residual = np.inf
        if len(exc.eigenvalues):
            R = A @ exc.eigenvectors - exc.eigenvectors * exc.eigenvalues
            residual = float(np.linalg.norm(R, axis=0).max())
        raise ConvergenceError(f"top_eigenvectors did not converge in {max_iters} iterations", residual) from exc
    order = np.argsort(values)[::-1]
    values, vectors = values[order], vectors[:, order]
    residual = float(np.linalg.norm(A @ vectors - vectors * values, axis=0).max())
    if residual > tol * scale:
        raise ConvergenceError(f"top_eigenvectors residual {residual:.3g} exceeds {tol * scale:.3g}", residual)
    return values, vectors


def operator_norm(
    apply: Callable[[np.ndarray], np.ndarray],
    apply_transpose: Callable[[np.ndarray], np.ndarray],
    dim: int,
    tol: float = 1e-6,
    max_iters: int = 10000,
    block: int = 6,
) -> float:
    """Largest singular value of a linear map on ``R^dim``.

    Subspace iteration on ``A^T A`` with Rayleigh-Ritz; converged when the
    top Ritz pair has residual ``<= tol * theta``.
    """
    p = min(block, dim)
    rng = np.random.default_rng(0x0B5E)
    V, _ = np.linalg.qr(rng.standard_normal((dim, p)))
    residual = np.inf
    for _ in range(max_iters):
        W = apply_transpose(apply(V))
        H = V.T @ W
        theta, S = np.linalg.eigh((H + H.T) / 2.0)
        top = theta[-1]
        if top <= 0.0 and not np.any(W):
            return 0.0
        v, w = V @ S[:, -1], W @ S[:, -1]
        residual = float(np.linalg.norm(w - top * v))
        if residual <= tol * max(top, 0.0):
            return float(np.sqrt(max(top, 0.0)))
        V, _ = np.linalg.qr(W)
    raise ConvergenceError(f"operator_norm did not converge in {max_iters} iterations", residual)


def dense_operator(A: np.ndarray):
    """``(apply, apply_transpose, dim)`` triple for a dense matrix."""
    A = np.asarray(A, dtype=float)
    return (lambda x: A @ x), (lambda x: A.T @ x), A.shape[1]
