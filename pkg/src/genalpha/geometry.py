"""Spline parametrizations of patches and conforming multi-patch domains.

Faces of a patch are numbered ``2 * direction + side``: face 0 is
``xi_1 = 0``, face 1 is ``xi_1 = 1``, face 2 is ``xi_2 = 0`` and so on.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .splines import KnotVector, SplineSpace, basis_derivatives


class GeometryError(ValueError):
    """Raised for invalid parametrizations (e.g. negative Jacobian)."""


class ConformityError(ValueError):
    """Raised when two patches do not match along a declared interface."""

    def __init__(self, patch_a: int, patch_b: int, reason: str):
        super().__init__(f"patches {patch_a} and {patch_b} are not conforming: {reason}")
        self.pair = (patch_a, patch_b)


@dataclass(frozen=True, eq=False)
class Patch:
    """A tensor-product spline map ``F: [0,1]^d -> R^d``.

    ``control`` holds one physical point per geometry basis function, in
    co-lexicographic order.
    """

    space: SplineSpace
    control: np.ndarray
    singular: bool = False

    def __post_init__(self):
        ctrl = np.array(self.control, dtype=float)
        if ctrl.ndim == 1:
            ctrl = ctrl[:, None]
        if ctrl.shape != (self.space.size, self.space.dim):
            raise GeometryError(
                f"control net has shape {ctrl.shape}, expected {(self.space.size, self.space.dim)}"
            )
        ctrl.setflags(write=False)
        object.__setattr__(self, "control", ctrl)

    @property
    def dim(self) -> int:
        return self.space.dim

    def control_grid(self) -> np.ndarray:
        """Control net reshaped to ``(m_1, ..., m_d, d)``."""
        shape = self.space.shape
        return self.control.reshape(shape[::-1] + (self.dim,)).transpose(
            tuple(range(self.dim - 1, -1, -1)) + (self.dim,)
        )


def eval_map(patch: Patch, points, check: bool = False):
    """Evaluate the map, its Jacobian and the Jacobian determinant.

    Args:
        points: parametric points, shape ``(n, d)`` (or ``(d,)``).
        check: raise :class:`GeometryError` if ``det J <= 0`` at any point of a
            patch that is not flagged singular.

    Returns:
        ``(x, J, det)`` with shapes ``(n, d)``, ``(n, d, d)`` and ``(n,)``;
        ``J[n, i, j] = dx_i / dxi_j``.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    d = patch.dim
    if pts.shape[1] != d:
        raise ValueError(f"points must have {d} coordinates")
    n = pts.shape[0]
    data = [basis_derivatives(kv, pts[:, k], 1) for k, kv in enumerate(patch.space.knot_vectors)]
    x = np.zeros((n, d))
    jac = np.zeros((n, d, d))
    shape = patch.space.shape
    for local in itertools.product(*[range(kv.degree + 1) for kv in patch.space.knot_vectors]):
        flat = np.zeros(n, dtype=np.int64)
        stride = 1
        for k in range(d):
            flat += (data[k][0] + local[k]) * stride
            stride *= shape[k]
        ctrl = patch.control[flat]
        vals = [data[k][1][:, 0, local[k]] for k in range(d)]
        ders = [data[k][1][:, 1, local[k]] for k in range(d)]
        x += np.prod(vals, axis=0)[:, None] * ctrl
        for j in range(d):
            w = np.ones(n)
            for k in range(d):
                w = w * (ders[k] if k == j else vals[k])
            jac[:, :, j] += w[:, None] * ctrl
    det = np.linalg.det(jac) if d > 1 else jac[:, 0, 0].copy()
    if check and not patch.singular and np.any(det <= 0):
        raise GeometryError(f"nonpositive Jacobian determinant (min {det.min():.3e})")
    return x, jac, det


@dataclass(frozen=True)
class GeometryReport:
    delta: float
    delta_interior: float
    singular: bool


def validate_geometry(patch: Patch, samples: int = 21, rel_tol: float = 1e-10) -> GeometryReport:
    """Sample ``det J`` on a closed grid and at interior Gauss points.

    ``delta`` is the minimum over the closed grid; the patch is reported
    singular if that minimum is below ``rel_tol`` times the maximum. A
    nonpositive determinant at an interior Gauss point (an inverted or folded
    map) raises :class:`GeometryError`.
    """
    d = patch.dim
    grid = np.linspace(0.0, 1.0, samples)
    pts = np.stack([g.ravel() for g in np.meshgrid(*[grid] * d, indexing="ij")], axis=-1)
    _, _, det = eval_map(patch, pts)
    gauss = np.polynomial.legendre.leggauss(3)[0] * 0.5 + 0.5
    inner = []
    for kv in patch.space.knot_vectors:
        bp = kv.breakpoints
        inner.append((bp[:-1, None] + np.diff(bp)[:, None] * gauss[None, :]).ravel())
    ipts = np.stack([g.ravel() for g in np.meshgrid(*inner, indexing="ij")], axis=-1)
    _, _, idet = eval_map(patch, ipts)
    if idet.min() <= 0:
        raise GeometryError(f"nonpositive Jacobian determinant inside the patch (min {idet.min():.3e})")
    delta = float(det.min())
    scale = float(np.abs(det).max())
    return GeometryReport(delta, float(idet.min()), bool(delta <= rel_tol * scale or patch.singular))


# ---------------------------------------------------------------- generators


def _grid_control(*axes_points):
    """Co-lexicographic control net from a callable grid."""
    grids = np.meshgrid(*axes_points, indexing="ij")
    return np.stack([g.ravel(order="F") for g in grids], axis=-1)


def unit_cube(dim: int, scale: float = 1.0) -> Patch:
    """Identity (or scaled) map of ``[0,1]^dim`` with degree 1 in each direction."""
    space = SplineSpace([KnotVector.uniform(1, 1)] * dim)
    ctrl = _grid_control(*[np.array([0.0, scale])] * dim)
    return Patch(space, ctrl)


def unit_interval(scale: float = 1.0) -> Patch:
    return unit_cube(1, scale)


def unit_square(scale: float = 1.0) -> Patch:
    return unit_cube(2, scale)


def box(lower: Sequence[float], upper: Sequence[float]) -> Patch:
    """Axis-aligned box, affine map of degree 1."""
    lower = np.asarray(lower, float)
    upper = np.asarray(upper, float)
    dim = lower.size
    space = SplineSpace([KnotVector.uniform(1, 1)] * dim)
    return Patch(space, _grid_control(*[np.array([lower[k], upper[k]]) for k in range(dim)]))


def _quarter_arc(radius: float) -> np.ndarray:
    # quadratic arc whose midpoint lies on the circle
    c = radius * (np.sqrt(2.0) - 0.5)
    return np.array([[radius, 0.0], [c, c], [0.0, radius]])


def quarter_annulus(r_inner: float = 1.0, r_outer: float = 2.0) -> Patch:
    """Polynomial approximation of a quarter annulus.

    The first direction is radial (degree 1), the second angular (degree 2).
    """
    space = SplineSpace([KnotVector.uniform(1, 1), KnotVector.uniform(2, 1)])
    inner, outer = _quarter_arc(r_inner), _quarter_arc(r_outer)
    ctrl = np.empty((6, 2))
    for j in range(3):
        ctrl[2 * j] = inner[j]
        ctrl[2 * j + 1] = outer[j]
    return Patch(space, ctrl)


def singular_sector(radius: float = 1.0) -> Patch:
    """Quarter disk whose edge ``xi_1 = 0`` collapses to the origin."""
    space = SplineSpace([KnotVector.uniform(1, 1), KnotVector.uniform(2, 1)])
    outer = _quarter_arc(radius)
    ctrl = np.zeros((6, 2))
    for j in range(3):
        ctrl[2 * j + 1] = outer[j]
    return Patch(space, ctrl, singular=True)


def distorted_square(amplitude: float = 0.1) -> Patch:
    """Unit square with a bulged interior, biquadratic."""
    space = SplineSpace([KnotVector.uniform(2, 1)] * 2)
    g = np.array([0.0, 0.5, 1.0])
    ctrl = _grid_control(g, g)
    ctrl[4] += amplitude
    return Patch(space, ctrl)


# ---------------------------------------------------------------- multipatch


@dataclass(frozen=True)
class Interface:
    """Face ``face_a`` of ``patch_a`` glued to face ``face_b`` of ``patch_b``.

    ``flip[j]`` reverses the ``j``-th tangent direction of face ``b`` and
    ``swap`` transposes its two tangent directions (3D only); both are applied
    to face ``b`` to bring it onto face ``a``.
    """

    patch_a: int
    face_a: int
    patch_b: int
    face_b: int
    flip: tuple = ()
    swap: bool = False

    @classmethod
    def from_dict(cls, data: dict) -> "Interface":
        orient = data.get("orientation", {})
        if isinstance(orient, bool):
            orient = {"flip": [orient]}
        return cls(
            int(data["patch_a"]), int(data["face_a"]), int(data["patch_b"]), int(data["face_b"]),
            tuple(bool(f) for f in orient.get("flip", ())), bool(orient.get("swap", False)),
        )

    def to_dict(self) -> dict:
        return {
            "patch_a": self.patch_a, "face_a": self.face_a,
            "patch_b": self.patch_b, "face_b": self.face_b,
            "orientation": {"flip": list(self.flip), "swap": self.swap},
        }


def face_indices(shape: Sequence[int], face: int) -> np.ndarray:
    """Flat indices of the basis functions on a face, as a grid over tangent directions."""
    d = len(shape)
    k, side = divmod(face, 2)
    if k >= d:
        raise ValueError(f"face {face} does not exist in dimension {d}")
    axes = [np.arange(m) for m in shape]
    axes[k] = np.array([shape[k] - 1 if side else 0])
    grids = np.meshgrid(*axes, indexing="ij")
    flat = np.ravel_multi_index(tuple(grids), tuple(shape), order="F")
    return np.squeeze(flat, axis=k) if d > 1 else flat.reshape(())


def _orient_grid(grid: np.ndarray, flip, swap) -> np.ndarray:
    if swap:
        grid = grid.T
    for j, f in enumerate(flip):
        if f:
            grid = np.flip(grid, axis=j)
    return grid


def _tangent_dirs(d: int, face: int):
    return [j for j in range(d) if j != face // 2]


def _face_param_points(d: int, face: int, tangent_pts: np.ndarray) -> np.ndarray:
    k, side = divmod(face, 2)
    pts = np.empty((tangent_pts.shape[0], d))
    pts[:, [j for j in range(d) if j != k]] = tangent_pts
    pts[:, k] = float(side)
    return pts


class _UnionFind:
    def __init__(self, n):
        self.parent = np.arange(n)

    def find(self, i):
        root = i
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[i] != root:
            self.parent[i], i = root, self.parent[i]
        return root

    def union(self, i, j):
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            self.parent[max(ri, rj)] = min(ri, rj)


class MultiPatchSpace:
    """Continuous spline space on a union of conforming patches.

    Args:
        patches: geometry maps.
        spaces: discretization spaces, one per patch (same degree everywhere).
        interfaces: face pairings.
        tol: relative tolerance for the geometric trace check.
    """

    def __init__(self, patches: Sequence[Patch], spaces: Sequence[SplineSpace],
                 interfaces: Sequence[Interface] = (), tol: float = 1e-10):
        if len(patches) != len(spaces):
            raise ValueError("one discretization space per patch is required")
        self.patches = tuple(patches)
        self.spaces = tuple(spaces)
        self.interfaces = tuple(interfaces)
        degrees = {s.degrees for s in self.spaces}
        if len(degrees) > 1:
            raise ValueError("all patches must share the same degree")
        d = self.spaces[0].dim
        sizes = [s.size for s in self.spaces]
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        uf = _UnionFind(int(offsets[-1]))
        for itf in self.interfaces:
            a, b = itf.patch_a, itf.patch_b
            self._check_conformity(itf, tol)
            ga = face_indices(self.spaces[a].shape, itf.face_a)
            gb = _orient_grid(face_indices(self.spaces[b].shape, itf.face_b), itf.flip, itf.swap)
            for ia, ib in zip(np.ravel(ga), np.ravel(gb)):
                uf.union(int(offsets[a] + ia), int(offsets[b] + ib))
        roots = np.array([uf.find(i) for i in range(int(offsets[-1]))])
        _, first_pos, inverse = np.unique(roots, return_index=True, return_inverse=True)
        # number global indices by first occurrence
        order = np.argsort(np.argsort(first_pos))
        glob = order[inverse]
        self.local_to_global = tuple(glob[offsets[r]: offsets[r + 1]] for r in range(len(sizes)))
        self.size = int(glob.max()) + 1 if glob.size else 0
        self.multiplicity = np.bincount(glob, minlength=self.size)
        self.n_adj = int(self.multiplicity.max())
        self._dim = d

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def n_patches(self) -> int:
        return len(self.patches)

    def dof_sets(self):
        """For each global index, the list of ``(patch, local index)`` pairs."""
        sets = [[] for _ in range(self.size)]
        for r, l2g in enumerate(self.local_to_global):
            for i, g in enumerate(l2g):
                sets[g].append((r, i))
        return sets

    def interface_faces(self) -> set:
        out = set()
        for itf in self.interfaces:
            out.add((itf.patch_a, itf.face_a))
            out.add((itf.patch_b, itf.face_b))
        return out

    def boundary_faces(self):
        """Exterior ``(patch, face)`` pairs."""
        inner = self.interface_faces()
        return [(r, f) for r in range(self.n_patches) for f in range(2 * self.dim) if (r, f) not in inner]

    def boundary_dofs(self, faces=None) -> np.ndarray:
        faces = self.boundary_faces() if faces is None else faces
        idx = [self.local_to_global[r][np.ravel(face_indices(self.spaces[r].shape, f))] for r, f in faces]
        return np.unique(np.concatenate(idx)) if idx else np.zeros(0, dtype=np.int64)

    def _check_conformity(self, itf: Interface, tol: float):
        a, b = itf.patch_a, itf.patch_b
        d = self.spaces[a].dim
        ta, tb = _tangent_dirs(d, itf.face_a), _tangent_dirs(d, itf.face_b)
        if itf.swap:
            tb = tb[::-1]
        flip = tuple(itf.flip) + (False,) * (len(ta) - len(itf.flip))
        for j, (da, db) in enumerate(zip(ta, tb)):
            kva = self.spaces[a].knot_vectors[da]
            kvb = self.spaces[b].knot_vectors[db]
            if flip[j]:
                kvb = kvb.reversed()
            if kva != kvb:
                raise ConformityError(a, b, f"knot vectors differ along tangent direction {j}")
        # geometric traces
        n_t = len(ta)
        s = np.linspace(0.0, 1.0, 7)
        tpts = np.stack([g.ravel() for g in np.meshgrid(*[s] * n_t, indexing="ij")], axis=-1) if n_t else np.zeros((1, 0))
        tpts_b = tpts.copy()
        for j in range(n_t):
            if flip[j]:
                tpts_b[:, j] = 1.0 - tpts_b[:, j]
        if itf.swap:
            tpts_b = tpts_b[:, ::-1]
        xa, _, _ = eval_map(self.patches[a], _face_param_points(d, itf.face_a, tpts))
        xb, _, _ = eval_map(self.patches[b], _face_param_points(d, itf.face_b, tpts_b))
        scale = max(1.0, float(np.abs(xa).max()))
        if np.abs(xa - xb).max() > tol * scale:
            raise ConformityError(a, b, "geometric traces differ")


def discretization_space(patch: Patch, degree: int, n_sub: int) -> SplineSpace:
    """Maximal-regularity space with ``n_sub`` uniform spans per direction.

    The geometry breakpoints must be contained in the refined mesh so that the
    map is smooth on every element.
    """
    kvs = []
    for kv in patch.space.knot_vectors:
        new = KnotVector.uniform(degree, n_sub)
        if not np.all(np.isin(kv.breakpoints, new.breakpoints)):
            raise GeometryError("geometry breakpoints are not part of the refined mesh")
        kvs.append(new)
    return SplineSpace(kvs)


def single_patch(patch: Patch, degree: int, n_sub: int) -> MultiPatchSpace:
    return MultiPatchSpace([patch], [discretization_space(patch, degree, n_sub)])


@dataclass
class Domain:
    """Patches plus interface pairings, prior to choosing a discretization."""

    patches: list
    interfaces: list = field(default_factory=list)

    def discretize(self, degree: int, n_sub: int) -> MultiPatchSpace:
        spaces = [discretization_space(p, degree, n_sub) for p in self.patches]
        return MultiPatchSpace(self.patches, spaces, self.interfaces)

    @property
    def dim(self) -> int:
        return self.patches[0].dim

    def to_dict(self) -> dict:
        return {
            "patches": [
                {
                    "degree": list(p.space.degrees),
                    "knots": [kv.knots.tolist() for kv in p.space.knot_vectors],
                    "control_points": p.control.tolist(),
                    "singular": p.singular,
                }
                for p in self.patches
            ],
            "interfaces": [i.to_dict() for i in self.interfaces],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Domain":
        patches = []
        for item in data["patches"]:
            kvs = [KnotVector(p, k) for p, k in zip(item["degree"], item["knots"])]
            patches.append(Patch(SplineSpace(kvs), np.asarray(item["control_points"], float),
                                 bool(item.get("singular", False))))
        return cls(patches, [Interface.from_dict(i) for i in data.get("interfaces", [])])

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "Domain":
        return cls.from_dict(json.loads(Path(path).read_text()))


def two_squares() -> Domain:
    """Unit square split at ``x = 0.5`` into two patches."""
    left = box([0.0, 0.0], [0.5, 1.0])
    right = box([0.5, 0.0], [1.0, 1.0])
    return Domain([left, right], [Interface(0, 1, 1, 0)])


def ring(n: int = 4, radius: float = 1.0, bulge: float = 1.2) -> Domain:
    """``n`` bilinear kite patches around the origin.

    Patch ``r`` has corners at the origin, at angles ``2 pi r / n`` and
    ``2 pi (r+1) / n`` on the circle of the given radius, and an outer corner at
    ``bulge * radius`` on the bisecting ray. All patches share the center
    vertex, so ``N_adj = n``.
    """
    if n < 3:
        raise ValueError("a ring needs at least 3 patches")
    space = SplineSpace([KnotVector.uniform(1, 1)] * 2)
    patches = []
    for r in range(n):
        t0, t1 = 2 * np.pi * r / n, 2 * np.pi * (r + 1) / n
        tm = 0.5 * (t0 + t1)
        p0 = radius * np.array([np.cos(t0), np.sin(t0)])
        p1 = radius * np.array([np.cos(t1), np.sin(t1)])
        q = bulge * radius * np.array([np.cos(tm), np.sin(tm)])
        ctrl = np.array([[0.0, 0.0], p0, p1, q])
        patches.append(Patch(space, ctrl))
    interfaces = [Interface(r, 0, (r + 1) % n, 2) for r in range(n)]
    return Domain(patches, interfaces)


BUILTIN = {
    "unit_interval": lambda **kw: Domain([unit_interval(**kw)]),
    "unit_square": lambda **kw: Domain([unit_square(**kw)]),
    "unit_cube": lambda **kw: Domain([unit_cube(3, **kw)]),
    "quarter_annulus": lambda **kw: Domain([quarter_annulus(**kw)]),
    "singular_sector": lambda **kw: Domain([singular_sector(**kw)]),
    "distorted_square": lambda **kw: Domain([distorted_square(**kw)]),
    "two_squares": lambda **kw: two_squares(**kw),
    "ring": lambda **kw: ring(**kw),
}


def get_domain(ref) -> Domain:
    """Resolve a builtin name, ``{"name": ..., **kwargs}`` or a JSON file path."""
    if isinstance(ref, dict):
        kw = dict(ref)
        name = kw.pop("name")
        return BUILTIN[name](**kw)
    if ref in BUILTIN:
        return BUILTIN[ref]()
    path = Path(ref)
    if path.exists():
        return Domain.load(path)
    raise KeyError(f"unknown geometry {ref!r}")
