"""Mass-matrix preconditioners built from the parametric Kronecker mass.

On one patch the preconditioner is ``P = S M_hat S`` where ``M_hat`` is the
Kronecker product of univariate masses on ``[0, 1]`` and ``S`` the diagonal
scaling that makes ``diag(P) = diag(M)``. On several patches the local
inverses are summed through the patch restriction maps (additive Schwarz).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .assembly import QuadratureRule, assemble_mass, parametric_mass_1d
from .linalg import KroneckerOperator


class PreconditionerError(ValueError):
    """Raised for nonpositive diagonals or non-tensor index sets."""


class SinglePatchPrecond:
    """``P^{-1} v = s * M_hat^{-1} (s * v)`` with ``s = sqrt(diag(M_hat) / diag(M))``.

    Args:
        m_diag: diagonal of the (restricted) physical mass matrix, co-lex order.
        factors: univariate parametric mass matrices (restricted), one per direction.
    """

    def __init__(self, m_diag, factors: Sequence):
        self.kron = KroneckerOperator(factors)
        m_diag = np.asarray(m_diag, float)
        dhat = self.kron.diagonal()
        if m_diag.shape != dhat.shape:
            raise PreconditionerError("diagonal size does not match the Kronecker factors")
        if np.any(m_diag <= 0) or np.any(dhat <= 0):
            raise PreconditionerError("nonpositive diagonal entry in the mass matrix")
        self.scale = np.sqrt(dhat / m_diag)
        self.size = dhat.size
        self.applications = 0

    def apply_inverse(self, v) -> np.ndarray:
        self.applications += 1
        return self.scale * self.kron.solve(self.scale * np.asarray(v, float))

    __call__ = apply_inverse

    def apply(self, v) -> np.ndarray:
        """Forward action ``P v`` (for testing)."""
        return self.kron.apply(np.asarray(v, float) / self.scale) / self.scale

    def flops_per_application(self) -> int:
        # two diagonal scalings plus the Kronecker solve
        return 2 * self.size + self.kron.solve_flops()

    def toarray(self) -> np.ndarray:
        inv_s = 1.0 / self.scale
        return inv_s[:, None] * self.kron.toarray() * inv_s[None, :]


def tensor_ranges(shape: Sequence[int], keep_mask: np.ndarray):
    """Split a co-lex mask into per-direction index lists, if it is a tensor product."""
    grid = np.asarray(keep_mask, bool).reshape(tuple(shape), order="F")
    ranges = []
    for k in range(len(shape)):
        other = tuple(j for j in range(len(shape)) if j != k)
        ranges.append(np.nonzero(grid.any(axis=other) if other else grid)[0])
    rebuilt = np.ones((), bool)
    for k, r in enumerate(ranges):
        m = np.zeros(shape[k], bool)
        m[r] = True
        rebuilt = np.multiply.outer(rebuilt, m) if rebuilt.ndim else m
    if not np.array_equal(rebuilt, grid):
        raise PreconditionerError("free index set of a patch is not a tensor product")
    return ranges


def _restrict(mat, idx):
    return mat[idx][:, idx]


def patch_precond(space, patch, keep_mask, quad: QuadratureRule = QuadratureRule()) -> SinglePatchPrecond:
    """Single-patch preconditioner on the tensor index set ``keep_mask``.

    The scaling diagonal is taken from the patch mass matrix restricted to the
    kept indices.
    """
    ranges = tensor_ranges(space.shape, keep_mask)
    factors = [_restrict(parametric_mass_1d(kv, quad), r) for kv, r in zip(space.knot_vectors, ranges)]
    m_loc = assemble_mass(space, patch, quad)
    keep = np.nonzero(np.asarray(keep_mask, bool))[0]
    return SinglePatchPrecond(m_loc.diagonal()[keep], factors)


class SchwarzPrecond:
    """Additive Schwarz sum ``sum_r R_r^T P_r^{-1} R_r`` over patches.

    ``R_r`` selects the free global DOFs of patch ``r`` (in the patch's co-lex
    order). With one patch this is exactly the single-patch preconditioner.
    """

    def __init__(self, locals_: Sequence[SinglePatchPrecond], restrictions: Sequence[np.ndarray], size: int):
        self.locals = list(locals_)
        self.restrictions = [np.asarray(r, np.int64) for r in restrictions]
        self.size = int(size)
        self.applications = 0

    def apply_inverse(self, v) -> np.ndarray:
        self.applications += 1
        v = np.asarray(v, float)
        out = np.zeros(self.size)
        for P, R in zip(self.locals, self.restrictions):
            out[R] += P.apply_inverse(v[R])
        return out

    __call__ = apply_inverse

    def flops_per_application(self) -> int:
        return sum(P.flops_per_application() + 2 * P.size for P in self.locals)

    def inverse_toarray(self) -> np.ndarray:
        return np.column_stack([self.apply_inverse(e) for e in np.eye(self.size)])


def build_schwarz(system, quad: QuadratureRule = QuadratureRule()) -> SchwarzPrecond:
    """Preconditioner for the reduced mass matrix of a :class:`SemiDiscreteSystem`."""
    mp = system.mp
    pos = -np.ones(mp.size, dtype=np.int64)
    pos[system.free] = np.arange(system.free.size)
    locals_, restr = [], []
    for r, (patch, space) in enumerate(zip(mp.patches, mp.spaces)):
        gpos = pos[mp.local_to_global[r]]
        keep = gpos >= 0
        if not keep.any():
            continue
        locals_.append(patch_precond(space, patch, keep, quad))
        restr.append(gpos[keep])
    return SchwarzPrecond(locals_, restr, system.free.size)


def build_single_patch(system, quad: QuadratureRule = QuadratureRule()) -> SinglePatchPrecond:
    """Single-patch preconditioner acting on the free DOFs of a one-patch system."""
    mp = system.mp
    if mp.n_patches != 1:
        raise PreconditionerError("single-patch preconditioner needs exactly one patch")
    keep = np.zeros(mp.size, bool)
    keep[system.free] = True
    keep = keep[mp.local_to_global[0]]
    pre = patch_precond(mp.spaces[0], mp.patches[0], keep, quad)
    # the patch numbering equals the global one for a single patch
    return pre


def mass_preconditioner(system, quad: QuadratureRule = QuadratureRule()):
    if system.mp.n_patches == 1:
        return build_single_patch(system, quad)
    return build_schwarz(system, quad)


def preconditioned_condition_number(M, pinv_apply) -> float:
    """Dense ``kappa(P^{-1/2} M P^{-1/2})`` from the action of ``P^{-1}``."""
    Md = M.toarray() if sp.issparse(M) else np.asarray(M)
    n = Md.shape[0]
    Pinv = np.column_stack([pinv_apply(e) for e in np.eye(n)])
    Pinv = 0.5 * (Pinv + Pinv.T)
    L = np.linalg.cholesky(Pinv)
    ev = sla.eigvalsh(L.T @ Md @ L)
    return float(ev.max() / ev.min())


@dataclass
class SolveDiagnostic:
    geometry: str
    p: int
    n_sub: int
    iterations: float
    kappa: float


def write_diagnostics(rows: Sequence[SolveDiagnostic], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n_sub", "p", "geometry", "iterations", "kappa"])
        for r in rows:
            w.writerow([r.n_sub, r.p, r.geometry, f"{r.iterations:.6g}", f"{r.kappa:.6g}"])
