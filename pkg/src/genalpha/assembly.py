"""Galerkin assembly of mass, stiffness and load on spline patches.

Element integrals use tensor Gauss-Legendre rules on every knot span. Local
contributions are computed in vectorized chunks and scattered into COO
triplets, so the reduction into the global matrix is done once by scipy and
is free of write races.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import MultiPatchSpace, Patch, eval_map, face_indices, GeometryError
from .splines import KnotVector, SplineSpace, basis_derivatives

log = logging.getLogger(__name__)

_LETTERS = "abcdefghijklmnopqrstuvwxyz"


class AssemblyError(RuntimeError):
    """Raised when an assembled matrix is not usable (e.g. indefinite mass)."""


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Legendre rule with ``points`` nodes per span and direction.

    ``points=None`` means ``p + 1 + extra`` nodes for degree ``p``.
    """

    points: int | None = None
    extra: int = 0

    def n_points(self, degree: int) -> int:
        return (degree + 1 if self.points is None else self.points) + self.extra

    def univariate(self, kv: KnotVector):
        q = self.n_points(kv.degree)
        xg, wg = np.polynomial.legendre.leggauss(q)
        spans = kv.span_indices
        a, b = kv.knots[spans], kv.knots[spans + 1]
        pts = 0.5 * (a + b)[:, None] + 0.5 * (b - a)[:, None] * xg[None, :]
        wts = 0.5 * (b - a)[:, None] * wg[None, :]
        first, ders = basis_derivatives(kv, pts.ravel(), 1, spans=np.repeat(spans, q))
        p1 = kv.degree + 1
        return _Univariate(pts, wts, spans - kv.degree,
                           ders[:, 0, :].reshape(-1, q, p1), ders[:, 1, :].reshape(-1, q, p1))


@dataclass
class _Univariate:
    pts: np.ndarray    # (E, q)
    wts: np.ndarray    # (E, q)
    first: np.ndarray  # (E,)
    vals: np.ndarray   # (E, q, p+1)
    ders: np.ndarray   # (E, q, p+1)

    def take(self, sl) -> "_Univariate":
        return _Univariate(self.pts[sl], self.wts[sl], self.first[sl], self.vals[sl], self.ders[sl])


def _outer(factors):
    """Tensor product of per-direction ``(E_k, q_k, a_k)`` arrays as ``(E, Q, A)``.

    All flattened indices are co-lexicographic (first direction fastest).
    """
    d = len(factors)
    subs = [_LETTERS[3 * k: 3 * k + 3] for k in range(d)]
    out = "".join(s[0] for s in subs[::-1]) + "".join(s[1] for s in subs[::-1]) + "".join(s[2] for s in subs[::-1])
    res = np.einsum(",".join(subs) + "->" + out, *factors)
    E = int(np.prod([f.shape[0] for f in factors]))
    Q = int(np.prod([f.shape[1] for f in factors]))
    return res.reshape(E, Q, -1)


def _grid_points(dirs):
    """Tensor grid of quadrature points, ordered ``(E, Q, d)``."""
    d = len(dirs)
    cols = []
    for j in range(d):
        facs = [np.ones(u.pts.shape + (1,)) if k != j else u.pts[..., None] for k, u in enumerate(dirs)]
        cols.append(_outer(facs)[..., 0])
    return np.stack(cols, axis=-1)


@dataclass
class ElementBlock:
    """Quadrature data on a chunk of elements of one patch."""

    idx: np.ndarray          # (E, A) local basis indices
    wdet: np.ndarray         # (E, Q) weight times det J
    vals: np.ndarray         # (E, Q, A)
    grads: np.ndarray | None  # (E, Q, A, d) physical gradients
    x: np.ndarray            # (E, Q, d) physical points


def element_blocks(space: SplineSpace, patch: Patch, quad: QuadratureRule = QuadratureRule(),
                   need_grad: bool = True, max_entries: float = 4e6):
    """Yield :class:`ElementBlock` chunks covering all elements of the patch."""
    d = space.dim
    per = [quad.univariate(kv) for kv in space.knot_vectors]
    n_e = [u.pts.shape[0] for u in per]
    n_q = int(np.prod([u.pts.shape[1] for u in per]))
    n_a = int(np.prod([u.vals.shape[2] for u in per]))
    per_elem = n_q * n_a * (d + 1)
    inner = int(np.prod(n_e[:-1])) if d > 1 else 1
    step = max(1, int(max_entries // (per_elem * inner)))
    shape = space.shape
    strides = np.cumprod([1] + list(shape[:-1]))
    for start in range(0, n_e[-1], step):
        dirs = per[:-1] + [per[-1].take(slice(start, min(n_e[-1], start + step)))]
        pts = _grid_points(dirs)
        E, Q = pts.shape[:2]
        x, jac, det = eval_map(patch, pts.reshape(-1, d))
        det = det.reshape(E, Q)
        if not patch.singular and np.any(det <= 0):
            raise GeometryError(f"nonpositive Jacobian at a quadrature point (min {det.min():.3e})")
        w = _outer([u.wts[..., None] for u in dirs])[..., 0]
        vals = _outer([u.vals for u in dirs])
        grads = None
        if need_grad:
            pg = np.stack([
                _outer([u.ders if k == j else u.vals for k, u in enumerate(dirs)]) for j in range(d)
            ], axis=-1)
            jinv = np.linalg.inv(jac).reshape(E, Q, d, d)
            grads = np.einsum("eqaj,eqji->eqai", pg, jinv)
        locs = []
        for k, u in enumerate(dirs):
            a = np.arange(u.vals.shape[2])
            locs.append((u.first[:, None] + a[None, :]) * strides[k])
        idx = _sum_outer(locs)
        yield ElementBlock(idx.reshape(E, -1), w * det, vals, grads, x.reshape(E, Q, d))


def _sum_outer(locs):
    """Sum of per-direction ``(E_k, a_k)`` index arrays as an ``(E, A)`` array."""
    d = len(locs)
    E = [l.shape[0] for l in locs]
    A = [l.shape[1] for l in locs]
    total = np.zeros(E[::-1] + A[::-1], dtype=np.int64)
    for k, l in enumerate(locs):
        shape = [1] * (2 * d)
        shape[d - 1 - k] = E[k]
        shape[2 * d - 1 - k] = A[k]
        total = total + l.reshape(shape)
    return total.reshape(int(np.prod(E)), int(np.prod(A)))


def _scatter(blocks_local, size, l2g=None):
    rows, cols, data = [], [], []
    for idx, loc in blocks_local:
        g = idx if l2g is None else l2g[idx]
        n_a = g.shape[1]
        rows.append(np.repeat(g, n_a, axis=1).ravel())
        cols.append(np.tile(g, (1, n_a)).ravel())
        data.append(loc.ravel())
    mat = sp.coo_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
                        shape=(size, size)).tocsr()
    mat = (0.5 * (mat + mat.T)).tocsr()
    mat.sort_indices()
    return mat


def _mass_blocks(space, patch, quad, coeff=None):
    for blk in element_blocks(space, patch, quad, need_grad=False):
        wd = blk.wdet if coeff is None else blk.wdet * coeff(blk.x)
        yield blk.idx, np.einsum("eq,eqa,eqb->eab", wd, blk.vals, blk.vals)


def _stiff_blocks(space, patch, quad, omega):
    for blk in element_blocks(space, patch, quad, need_grad=True):
        yield blk.idx, omega ** 2 * np.einsum("eq,eqai,eqbi->eab", blk.wdet, blk.grads, blk.grads)


def assemble_mass(space: SplineSpace, patch: Patch, quad: QuadratureRule = QuadratureRule()) -> sp.csr_matrix:
    """Mass matrix ``int B_i B_j dx`` on one patch (local numbering)."""
    return _scatter(_mass_blocks(space, patch, quad), space.size)


def assemble_stiffness(space: SplineSpace, patch: Patch, quad: QuadratureRule = QuadratureRule(),
                       omega: float = 1.0) -> sp.csr_matrix:
    """Stiffness matrix ``int omega^2 grad B_i . grad B_j dx`` on one patch."""
    return _scatter(_stiff_blocks(space, patch, quad, omega), space.size)


def assemble_load(space: SplineSpace, patch: Patch, f: Callable, t: float = 0.0,
                  quad: QuadratureRule = QuadratureRule()) -> np.ndarray:
    """Load vector ``int f(x, t) B_i dx``; ``f`` takes points of shape ``(n, d)``."""
    out = np.zeros(space.size)
    for blk in element_blocks(space, patch, quad, need_grad=False):
        fx = np.asarray(f(blk.x.reshape(-1, space.dim), t), dtype=float).reshape(blk.wdet.shape)
        np.add.at(out, blk.idx, np.einsum("eq,eqa->ea", blk.wdet * fx, blk.vals))
    return out


def parametric_mass_1d(kv: KnotVector, quad: QuadratureRule = QuadratureRule()) -> sp.csr_matrix:
    """Univariate mass matrix on ``[0, 1]`` (identity map)."""
    from .geometry import unit_interval
    return assemble_mass(SplineSpace([kv]), unit_interval(), quad)


def assemble_global(mp: MultiPatchSpace, quad: QuadratureRule = QuadratureRule(), omega: float = 1.0):
    """Global mass and stiffness matrices on a multi-patch space."""
    mblocks, kblocks = [], []
    for r, (patch, space) in enumerate(zip(mp.patches, mp.spaces)):
        l2g = mp.local_to_global[r]
        mblocks += [(l2g[i], m) for i, m in _mass_blocks(space, patch, quad)]
        kblocks += [(l2g[i], k) for i, k in _stiff_blocks(space, patch, quad, omega)]
    return _scatter(mblocks, mp.size), _scatter(kblocks, mp.size)


def assemble_global_load(mp: MultiPatchSpace, f: Callable, t: float = 0.0,
                         quad: QuadratureRule = QuadratureRule()) -> np.ndarray:
    out = np.zeros(mp.size)
    for r, (patch, space) in enumerate(zip(mp.patches, mp.spaces)):
        np.add.at(out, mp.local_to_global[r], assemble_load(space, patch, f, t, quad))
    return out


# ---------------------------------------------------------------- fields


@dataclass(frozen=True)
class SeparableField:
    """``u(x, t) = sum_i s_i(x) h_i(t)``.

    Each term is ``(s, h)`` where ``s(x)`` maps ``(n, d)`` points to values and
    ``h(t, order)`` returns the ``order``-th time derivative of the temporal
    factor.
    """

    terms: tuple

    def __call__(self, x, t, order: int = 0):
        x = np.atleast_2d(x)
        return sum(s(x) * h(t, order) for s, h in self.terms)

    def __add__(self, other: "SeparableField") -> "SeparableField":
        return SeparableField(self.terms + other.terms)


# ---------------------------------------------------------------- boundary


def _face_quadrature(space: SplineSpace, patch: Patch, face: int, quad: QuadratureRule):
    """Points, weights (with surface measure) and trace basis values on a face."""
    d = space.dim
    k, side = divmod(face, 2)
    fidx = np.ravel(face_indices(space.shape, face), order="F")
    if d == 1:
        pts = np.array([[float(side)]])
        x, _, _ = eval_map(patch, pts)
        return x, np.ones((1, 1)), np.ones((1, 1, 1)), fidx.reshape(1, 1), 1.0
    tdirs = [j for j in range(d) if j != k]
    per = [quad.univariate(space.knot_vectors[j]) for j in tdirs]
    tp = _grid_points(per)
    E, Q = tp.shape[:2]
    pts = np.empty((E * Q, d))
    pts[:, tdirs] = tp.reshape(-1, d - 1)
    pts[:, k] = float(side)
    x, jac, _ = eval_map(patch, pts)
    tang = jac[:, :, tdirs]
    if d == 2:
        meas = np.linalg.norm(tang[:, :, 0], axis=1)
    else:
        meas = np.linalg.norm(np.cross(tang[:, :, 0], tang[:, :, 1]), axis=1)
    w = _outer([u.wts[..., None] for u in per])[..., 0] * meas.reshape(E, Q)
    vals = _outer([u.vals for u in per])
    shape_t = [space.shape[j] for j in tdirs]
    strides = np.cumprod([1] + shape_t[:-1])
    tloc = [(u.first[:, None] + np.arange(u.vals.shape[2])[None, :]) * s for u, s in zip(per, strides)]
    tflat = _sum_outer(tloc)
    scale = float(np.abs(patch.control).max()) or 1.0
    return x.reshape(E, Q, d), w, vals, fidx[tflat], float(meas.max()) / scale


def boundary_projection(mp: MultiPatchSpace, functions: Sequence[Callable],
                        quad: QuadratureRule = QuadratureRule(extra=1), faces=None):
    """L2 projection of boundary data onto the traces of the boundary basis.

    Faces whose image is a single point (collapsed edges of singular maps) are
    handled by point interpolation before the projection on the other faces.

    Returns:
        (dofs, values) with ``values[:, i]`` the coefficients of ``functions[i]``.
    """
    faces = mp.boundary_faces() if faces is None else faces
    dofs = mp.boundary_dofs(faces)
    pos = {int(g): i for i, g in enumerate(dofs)}
    nb, nf = dofs.size, len(functions)
    fixed = {}
    rows, cols, data = [], [], []
    rhs = np.zeros((nb, nf))
    for r, face in faces:
        space, patch = mp.spaces[r], mp.patches[r]
        x, w, vals, loc, rel_meas = _face_quadrature(space, patch, face, quad)
        g = np.array([pos[int(i)] for i in mp.local_to_global[r][loc.ravel()]]).reshape(loc.shape)
        if rel_meas < 1e-12 and space.dim > 1:
            point = x.reshape(-1, space.dim)[:1]
            for i in np.unique(g):
                fixed[int(i)] = np.array([float(np.ravel(f(point))[0]) for f in functions])
            continue
        loc_m = np.einsum("eq,eqa,eqb->eab", w, vals, vals)
        n_a = g.shape[1]
        rows.append(np.repeat(g, n_a, axis=1).ravel())
        cols.append(np.tile(g, (1, n_a)).ravel())
        data.append(loc_m.ravel())
        for i, f in enumerate(functions):
            fx = np.asarray(f(x.reshape(-1, space.dim)), float).reshape(w.shape)
            np.add.at(rhs[:, i], g, np.einsum("eq,eqa->ea", w * fx, vals))
    values = np.zeros((nb, nf))
    fixed_idx = np.array(sorted(fixed), dtype=np.int64)
    free_idx = np.setdiff1d(np.arange(nb), fixed_idx)
    for i in fixed_idx:
        values[i] = fixed[int(i)]
    if free_idx.size:
        mb = sp.coo_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
                           shape=(nb, nb)).tocsr()
        b = rhs[free_idx] - mb[free_idx][:, fixed_idx] @ values[fixed_idx]
        sol = spla.splu(mb[free_idx][:, free_idx].tocsc()).solve(b)
        values[free_idx] = sol.reshape(free_idx.size, nf)
    return dofs, values


# ---------------------------------------------------------------- system


@dataclass
class SemiDiscreteSystem:
    """Semi-discrete wave equation ``M U'' + C U' + K U = F(t)`` on free DOFs.

    Args:
        mp: multi-patch discretization.
        omega: wave speed.
        damping: Rayleigh coefficients ``(a0, a1)``, ``C = a0 M + a1 K``.
        source: :class:`SeparableField` (analytic time derivatives) or a
            callable ``f(x, t)`` (time derivatives by finite differences).
        boundary: Dirichlet data as a :class:`SeparableField`; ``None`` means
            homogeneous.
        dirichlet_faces: exterior faces carrying Dirichlet conditions (default
            all exterior faces).
    """

    mp: MultiPatchSpace
    omega: float = 1.0
    damping: tuple = (0.0, 0.0)
    source: object = None
    boundary: SeparableField | None = None
    dirichlet_faces: list | None = None
    quad: QuadratureRule = field(default_factory=QuadratureRule)
    fd_step: float | None = None

    def __post_init__(self):
        Mg, Kg = assemble_global(self.mp, self.quad, self.omega)
        a0, a1 = self.damping
        self.full_M, self.full_K = Mg, Kg
        self.full_C = (a0 * Mg + a1 * Kg).tocsr() if (a0 or a1) else None
        faces = self.mp.boundary_faces() if self.dirichlet_faces is None else self.dirichlet_faces
        self.dirichlet_faces = faces
        self.fixed = self.mp.boundary_dofs(faces)
        self.free = np.setdiff1d(np.arange(self.mp.size), self.fixed)
        f, c = self.free, self.fixed
        self.M = Mg[f][:, f].tocsr()
        self.K = Kg[f][:, f].tocsr()
        self.C = None if self.full_C is None else self.full_C[f][:, f].tocsr()
        self._M_fc = Mg[f][:, c].tocsr()
        self._K_fc = Kg[f][:, c].tocsr()
        self._C_fc = None if self.full_C is None else self.full_C[f][:, c].tocsr()
        self._warned = False
        if self.M.shape[0] and self.M.diagonal().min() <= 0:
            raise AssemblyError("mass matrix has a nonpositive diagonal entry")

    @property
    def n(self) -> int:
        return self.free.size

    @property
    def dim(self) -> int:
        return self.mp.dim

    @cached_property
    def _source_vectors(self):
        if not isinstance(self.source, SeparableField):
            return None
        return [(assemble_global_load(self.mp, lambda x, t, s=s: s(x), 0.0, self.quad)[self.free], h)
                for s, h in self.source.terms]

    @cached_property
    def _lift(self):
        if self.boundary is None or self.fixed.size == 0:
            return []
        dofs, vals = boundary_projection(self.mp, [s for s, _ in self.boundary.terms],
                                         faces=self.dirichlet_faces)
        assert np.array_equal(dofs, self.fixed)
        out = []
        for i, (_, h) in enumerate(self.boundary.terms):
            ug = vals[:, i]
            ce = None if self._C_fc is None else self._C_fc @ ug
            out.append((ug, self._M_fc @ ug, ce, self._K_fc @ ug, h))
        return out

    def lift(self, t: float, order: int = 0) -> np.ndarray:
        """Values of the Dirichlet DOFs (or their time derivatives) at ``t``."""
        out = np.zeros(self.fixed.size)
        for ug, _, _, _, h in self._lift:
            out += ug * h(t, order)
        return out

    def _raw_load(self, t: float) -> np.ndarray:
        if self.source is None:
            return np.zeros(self.n)
        if isinstance(self.source, SeparableField):
            return sum(v * h(t, 0) for v, h in self._source_vectors)
        return assemble_global_load(self.mp, self.source, t, self.quad)[self.free]

    def load(self, t: float, order: int = 0) -> np.ndarray:
        """``order``-th time derivative of the free-DOF load, lift included."""
        out = np.zeros(self.n)
        if isinstance(self.source, SeparableField):
            for v, h in self._source_vectors:
                out += v * h(t, order)
        elif self.source is not None:
            out += self._fd_derivative(t, order)
        for _, me, ce, ke, h in self._lift:
            out -= me * h(t, order + 2) + ke * h(t, order)
            if ce is not None:
                out -= ce * h(t, order + 1)
        return out

    def _fd_derivative(self, t: float, order: int) -> np.ndarray:
        if order == 0:
            return self._raw_load(t)
        if self.fd_step is None:
            raise AssemblyError("finite-difference load derivatives need fd_step (set by the integrator)")
        if not self._warned:
            log.warning("load time derivatives approximated by central differences (step %.3e)", self.fd_step)
            self._warned = True
        from math import comb
        h = self.fd_step
        return sum((-1) ** i * comb(order, i) * self._raw_load(t + (order / 2 - i) * h)
                   for i in range(order + 1)) / h ** order

    def full_vector(self, u_free: np.ndarray, t: float = 0.0, order: int = 0) -> np.ndarray:
        out = np.zeros(self.mp.size)
        out[self.free] = u_free
        out[self.fixed] = self.lift(t, order)
        return out

    @cached_property
    def _mass_lu(self):
        return spla.splu(self.M.tocsc())

    def project(self, u: SeparableField, t: float = 0.0, order: int = 0) -> np.ndarray:
        """Free part of the L2 projection with the Dirichlet values fixed to the lift."""
        rhs = np.zeros(self.n)
        for s, h in u.terms:
            c = h(t, order)
            if c != 0.0:
                rhs += c * assemble_global_load(self.mp, lambda x, tt, s=s: s(x), 0.0, self.quad)[self.free]
        rhs -= self._M_fc @ self.lift(t, order)
        return self._mass_lu.solve(rhs)

    def energy(self, U: np.ndarray, V: np.ndarray) -> float:
        return 0.5 * float(V @ (self.M @ V) + U @ (self.K @ U))

    def l2_error(self, u_free: np.ndarray, exact: SeparableField, t: float, order: int = 0,
                 relative: bool = True) -> float:
        coeffs = self.full_vector(u_free, t, order)
        quad = QuadratureRule(extra=2)
        err2 = ref2 = 0.0
        for r, (patch, space) in enumerate(zip(self.mp.patches, self.mp.spaces)):
            c = coeffs[self.mp.local_to_global[r]]
            for blk in element_blocks(space, patch, quad, need_grad=False):
                uh = np.einsum("eqa,ea->eq", blk.vals, c[blk.idx])
                ue = exact(blk.x.reshape(-1, space.dim), t, order).reshape(uh.shape)
                err2 += float(np.sum(blk.wdet * (uh - ue) ** 2))
                ref2 += float(np.sum(blk.wdet * ue ** 2))
        if relative and ref2 > 0:
            return float(np.sqrt(err2 / ref2))
        return float(np.sqrt(err2))


def write_triplets(mat: sp.spmatrix, path) -> None:
    """Write ``row col value`` lines."""
    coo = sp.coo_matrix(mat)
    with open(path, "w") as fh:
        for i, j, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{i} {j} {v:.17g}\n")


def read_triplets(path, shape=None) -> sp.csr_matrix:
    data = np.loadtxt(path, ndmin=2)
    rows, cols = data[:, 0].astype(int), data[:, 1].astype(int)
    if shape is None:
        n = int(max(rows.max(), cols.max())) + 1
        shape = (n, n)
    return sp.coo_matrix((data[:, 2], (rows, cols)), shape=shape).tocsr()
