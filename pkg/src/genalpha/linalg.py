"""Kronecker-structured solves, preconditioned CG and small eigenvalue kernels."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp


class FactorizationError(np.linalg.LinAlgError):
    """Raised when a Kronecker factor is not symmetric positive definite."""


def _to_banded_upper(a, bw: int) -> np.ndarray:
    """Upper banded storage ``ab[bw + i - j, j] = a[i, j]``."""
    a = a.toarray() if sp.issparse(a) else np.asarray(a, float)
    n = a.shape[0]
    ab = np.zeros((bw + 1, n))
    for off in range(bw + 1):
        ab[bw - off, off:] = np.diagonal(a, off)
    return ab


def _bandwidth(a) -> int:
    coo = sp.coo_matrix(a)
    return int(np.max(np.abs(coo.row - coo.col))) if coo.nnz else 0


class KroneckerOperator:
    """``A = A_d kron ... kron A_1`` acting on co-lexicographic vectors.

    Each factor is stored in banded form with a cached Cholesky factor, so
    :meth:`solve` costs a few banded triangular sweeps per direction.
    """

    def __init__(self, factors: Sequence, bandwidth: int | None = None):
        self.factors = [sp.csr_matrix(f) for f in factors]
        self.shape = tuple(f.shape[0] for f in self.factors)
        self.size = int(np.prod(self.shape))
        self._bands, self._chol = [], []
        for f in self.factors:
            bw = _bandwidth(f) if bandwidth is None else bandwidth
            ab = _to_banded_upper(f, bw)
            try:
                c = sla.cholesky_banded(ab, lower=False)
            except np.linalg.LinAlgError as exc:
                raise FactorizationError(f"Kronecker factor is not SPD: {exc}") from exc
            self._bands.append(ab)
            self._chol.append(c)
        self.flops = 0

    @property
    def dim(self) -> int:
        return len(self.shape)

    def _along(self, x, k, fn):
        arr = np.moveaxis(x, k, 0)
        shp = arr.shape
        out = fn(arr.reshape(shp[0], -1)).reshape(shp)
        return np.moveaxis(out, 0, k)

    def _grid(self, v):
        return np.asarray(v, float).reshape(self.shape, order="F")

    def apply(self, v) -> np.ndarray:
        x = self._grid(v)
        for k, f in enumerate(self.factors):
            x = self._along(x, k, lambda b, f=f: f @ b)
        return x.ravel(order="F")

    def solve_flops(self) -> int:
        """Floating point operations of one :meth:`solve`.

        Each direction performs a forward and a backward substitution with the
        banded Cholesky factor for ``size / m_k`` right-hand sides; a
        substitution costs one multiply-add per stored factor entry.
        """
        total = 0
        for k, c in enumerate(self._chol):
            bw = c.shape[0] - 1
            m = c.shape[1]
            nnz = sum(m - off for off in range(bw + 1))
            total += 2 * 2 * nnz * (self.size // m)
        return total

    def solve(self, b) -> np.ndarray:
        x = self._grid(b)
        for k, c in enumerate(self._chol):
            x = self._along(x, k, lambda r, c=c: sla.cho_solve_banded((c, False), r, check_finite=False))
        self.flops += self.solve_flops()
        return x.ravel(order="F")

    def diagonal(self) -> np.ndarray:
        diag = np.ones(1)
        for f in self.factors:
            diag = np.kron(f.diagonal(), diag)
        return diag

    def toarray(self) -> np.ndarray:
        out = np.ones((1, 1))
        for f in self.factors:
            out = np.kron(f.toarray(), out)
        return out


def kron_solve(op: KroneckerOperator, b) -> np.ndarray:
    """Solve ``(kron_k A_k) x = b`` without forming the Kronecker matrix."""
    return op.solve(b)


@dataclass
class PcgReport:
    iterations: int
    residual: float
    converged: bool
    breakdown: bool = False
    kappa: float = float("nan")
    history: list = field(default_factory=list)


def _as_apply(a) -> Callable:
    if a is None:
        return lambda v: v
    if callable(a):
        return a
    return lambda v: a @ v


def pcg(apply_A, apply_Pinv, b, tol: float = 1e-12, max_iter: int | None = None, x0=None,
        callback: Callable | None = None, refresh: int = 50):
    """Preconditioned conjugate gradients with a relative residual criterion.

    Args:
        apply_A: matrix or callable ``v -> A v``.
        apply_Pinv: matrix, callable ``v -> P^{-1} v`` or ``None``.
        tol: stop when ``||b - A x|| <= tol ||b||``.
        refresh: recompute the true residual every ``refresh`` iterations.
        callback: called with the iterate after every iteration.

    Returns:
        ``(x, PcgReport)``. The report's ``kappa`` is the ratio of extreme Ritz
        values of the preconditioned operator, from the CG coefficients.
    """
    A = _as_apply(apply_A)
    Pinv = _as_apply(apply_Pinv)
    b = np.asarray(b, float)
    n = b.size
    max_iter = 10 * n + 10 if max_iter is None else max_iter
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros(n), PcgReport(0, 0.0, True)
    x = np.zeros(n) if x0 is None else np.array(x0, float)
    r = b - A(x) if x0 is not None else b.copy()
    res = float(np.linalg.norm(r)) / bnorm
    history = [res]
    if res <= tol:
        return x, PcgReport(0, res, True, history=history)
    z = Pinv(r)
    p = z.copy()
    rz = float(r @ z)
    alphas, betas = [], []
    it = 0
    breakdown = False
    while it < max_iter:
        Ap = A(p)
        pAp = float(p @ Ap)
        if pAp <= 0 or rz <= 0:
            breakdown = True
            break
        alpha = rz / pAp
        x += alpha * p
        it += 1
        if it % refresh == 0:
            r = b - A(x)
        else:
            r -= alpha * Ap
        res = float(np.linalg.norm(r)) / bnorm
        history.append(res)
        alphas.append(alpha)
        if callback is not None:
            callback(x)
        if res <= tol:
            break
        z = Pinv(r)
        rz_new = float(r @ z)
        beta = rz_new / rz
        betas.append(beta)
        rz = rz_new
        p = z + beta * p
    kappa = _lanczos_kappa(alphas, betas)
    return x, PcgReport(it, res, res <= tol, breakdown, kappa, history)


def _lanczos_kappa(alphas, betas) -> float:
    m = len(alphas)
    if m == 0:
        return float("nan")
    diag = np.empty(m)
    off = np.empty(max(m - 1, 0))
    diag[0] = 1.0 / alphas[0]
    for j in range(1, m):
        diag[j] = 1.0 / alphas[j] + betas[j - 1] / alphas[j - 1]
        off[j - 1] = np.sqrt(max(betas[j - 1], 0.0)) / alphas[j - 1]
    ev = sla.eigvalsh_tridiagonal(diag, off) if m > 1 else diag
    lo, hi = float(ev.min()), float(ev.max())
    return hi / lo if lo > 0 else float("inf")


@dataclass
class PowerReport:
    value: float
    iterations: int
    confident: bool
    history: list


def power_iteration_genmax(K_apply, M_solve, n: int | None = None, tol: float = 1e-10,
                           max_iter: int = 2000, seed: int = 0, x0=None) -> PowerReport:
    """Largest eigenvalue of ``M^{-1} K`` by power iteration.

    The estimate ``<K x, y> / <K x, x>`` with ``y = M^{-1} K x`` is a Rayleigh
    quotient of a symmetric operator similar to ``M^{-1} K``, so it increases
    monotonically. ``confident`` is ``False`` if the relative change did not
    drop below ``tol`` within ``max_iter`` iterations.
    """
    K = _as_apply(K_apply)
    Ms = _as_apply(M_solve)
    if x0 is None:
        x = np.random.default_rng(seed).standard_normal(n)
    else:
        x = np.array(x0, float)
    history = []
    lam = 0.0
    for it in range(1, max_iter + 1):
        kx = K(x)
        y = Ms(kx)
        den = float(kx @ x)
        if den <= 0:
            return PowerReport(lam, it, False, history)
        new = float(kx @ y) / den
        history.append(new)
        if it > 1 and abs(new - lam) <= tol * abs(new):
            return PowerReport(new, it, True, history)
        lam = new
        x = y / np.linalg.norm(y)
    return PowerReport(lam, max_iter, False, history)


def block_char_poly(block: np.ndarray) -> np.ndarray:
    """Monic characteristic polynomial ``[1, c2, c1, c0]`` of a 3x3 matrix."""
    b = np.asarray(block)
    tr = np.trace(b)
    minors = (b[0, 0] * b[1, 1] - b[0, 1] * b[1, 0] + b[0, 0] * b[2, 2] - b[0, 2] * b[2, 0]
              + b[1, 1] * b[2, 2] - b[1, 2] * b[2, 1])
    return np.array([1.0, -tr, minors, -np.linalg.det(b)])


def block_eigs(block: np.ndarray) -> np.ndarray:
    """Eigenvalues of a 3x3 block.

    Exactly triangular blocks return their diagonal. Otherwise the QR
    algorithm is applied to the block itself; rooting the characteristic
    cubic instead loses about ``sqrt(eps)`` near the double root at 1 that
    occurs for small ``Theta``.
    """
    b = np.asarray(block, float)
    if not np.any(np.tril(b, -1)) or not np.any(np.triu(b, 1)):
        return np.diag(b).astype(complex)
    return np.linalg.eigvals(b).astype(complex)


def dense_eigs_3x3block(G: np.ndarray) -> list:
    """Eigenvalues of an upper block-triangular matrix with 3x3 diagonal blocks.

    Returns one array of three eigenvalues per diagonal block.
    """
    G = np.asarray(G, float)
    k = G.shape[0] // 3
    return [block_eigs(G[3 * j: 3 * j + 3, 3 * j: 3 * j + 3]) for j in range(k)]
