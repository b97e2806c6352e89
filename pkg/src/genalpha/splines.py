"""Univariate and tensor-product B-spline bases on open knot vectors.

Basis functions are evaluated with the Cox--de Boor recursion. Flat indices
of tensor-product bases are co-lexicographic: the first parametric direction
varies fastest.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np


class KnotVectorError(ValueError):
    """Raised for malformed knot vectors."""


class DomainError(ValueError):
    """Raised when an evaluation point lies outside the parametric domain."""


@dataclass(frozen=True, eq=False)
class KnotVector:
    """An open knot vector on [0, 1] together with a spline degree.

    Args:
        degree: polynomial degree ``p``.
        knots: nondecreasing knots; the first and last ``p+1`` must equal
            0 and 1 respectively, interior knots may repeat up to ``p`` times.
    """

    degree: int
    knots: np.ndarray

    def __post_init__(self):
        p = int(self.degree)
        if p < 0:
            raise KnotVectorError(f"degree must be nonnegative, got {p}")
        kv = np.array(self.knots, dtype=float)
        if kv.ndim != 1 or kv.size < 2 * p + 2:
            raise KnotVectorError("knot vector too short for the degree")
        if np.any(np.diff(kv) < 0):
            raise KnotVectorError("knots must be nondecreasing")
        if np.any(kv[: p + 1] != 0.0) or np.any(kv[-(p + 1):] != 1.0):
            raise KnotVectorError("knot vector must be open on [0, 1]")
        if kv.size > 2 * p + 2:
            if kv[p + 1] == 0.0 or kv[-(p + 2)] == 1.0:
                raise KnotVectorError("end knots repeated more than p+1 times")
            _, counts = np.unique(kv[p + 1: -(p + 1)], return_counts=True)
            if counts.size and counts.max() > max(p, 1):
                raise KnotVectorError("interior knot multiplicity exceeds the degree")
        kv.setflags(write=False)
        object.__setattr__(self, "degree", p)
        object.__setattr__(self, "knots", kv)

    @classmethod
    def uniform(cls, degree: int, n_sub: int) -> "KnotVector":
        """Maximal-regularity knot vector with ``n_sub`` equal spans."""
        if n_sub < 1:
            raise KnotVectorError("n_sub must be positive")
        interior = np.arange(1, n_sub) / n_sub
        knots = np.concatenate([np.zeros(degree + 1), interior, np.ones(degree + 1)])
        return cls(degree, knots)

    @classmethod
    def from_breakpoints(cls, degree: int, breakpoints: Sequence[float], regularity: int | None = None):
        """Open knot vector with the given breakpoints and uniform interior regularity."""
        bp = np.asarray(breakpoints, dtype=float)
        r = degree - 1 if regularity is None else regularity
        mult = degree - r
        interior = np.repeat(bp[1:-1], mult)
        return cls(degree, np.concatenate([np.zeros(degree + 1), interior, np.ones(degree + 1)]))

    @property
    def size(self) -> int:
        """Number of basis functions ``m``."""
        return self.knots.size - self.degree - 1

    @property
    def breakpoints(self) -> np.ndarray:
        return np.unique(self.knots)

    @property
    def span_indices(self) -> np.ndarray:
        """Knot indices ``i`` of the nonempty spans ``[xi_i, xi_{i+1})``."""
        return np.nonzero(np.diff(self.knots) > 0)[0]

    @property
    def n_spans(self) -> int:
        return self.span_indices.size

    def mesh_size(self) -> float:
        return float(np.max(np.diff(self.knots)))

    def quasi_uniformity(self) -> float:
        """Ratio of the smallest nonempty span to the mesh size."""
        widths = np.diff(self.knots)
        widths = widths[widths > 0]
        return float(widths.min() / widths.max())

    def greville(self) -> np.ndarray:
        p = self.degree
        if p == 0:
            return 0.5 * (self.knots[:-1] + self.knots[1:])
        idx = np.arange(self.size)[:, None] + np.arange(1, p + 1)[None, :]
        return self.knots[idx].mean(axis=1)

    def reversed(self) -> "KnotVector":
        return KnotVector(self.degree, 1.0 - self.knots[::-1])

    def __eq__(self, other):
        if not isinstance(other, KnotVector):
            return NotImplemented
        return self.degree == other.degree and np.array_equal(self.knots, other.knots)

    def __hash__(self):
        return hash((self.degree, self.knots.tobytes()))

    def __repr__(self):
        return f"KnotVector(p={self.degree}, m={self.size}, spans={self.n_spans})"


def find_spans(kv: KnotVector, x) -> np.ndarray:
    """Vectorized span lookup: ``knots[i] <= x < knots[i+1]``, closed at x = 1."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0.0) or np.any(x > 1.0) or np.any(np.isnan(x)):
        raise DomainError("evaluation point outside [0, 1]")
    i = np.searchsorted(kv.knots, x, side="right") - 1
    return np.minimum(i, kv.size - 1)


def find_span(kv: KnotVector, x: float) -> int:
    """Index ``i`` of the knot span containing ``x``."""
    return int(find_spans(kv, np.array([x]))[0])


def _safe_div(num, den):
    # 0/0 = 0 convention of the recursion
    out = np.zeros(np.broadcast(num, den).shape)
    np.divide(num, den, out=out, where=den != 0)
    return out


def basis_derivatives(kv: KnotVector, x, order: int = 0, spans=None):
    """Nonzero basis functions and their derivatives at many points.

    Returns:
        (first, values): ``first[n]`` is the index of the first active basis
        function at ``x[n]`` and ``values[n, r, a]`` the ``r``-th derivative of
        basis function ``first[n] + a``. Derivatives above the degree are zero.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    p = kv.degree
    t = kv.knots
    span = find_spans(kv, x) if spans is None else np.asarray(spans)
    n = x.size
    # ndu[j, r]: upper triangle holds basis values, lower triangle knot differences
    ndu = np.zeros((n, p + 1, p + 1))
    ndu[:, 0, 0] = 1.0
    left = np.zeros((n, p + 1))
    right = np.zeros((n, p + 1))
    for j in range(1, p + 1):
        left[:, j] = x - t[span + 1 - j]
        right[:, j] = t[span + j] - x
        saved = np.zeros(n)
        for r in range(j):
            ndu[:, j, r] = right[:, r + 1] + left[:, j - r]
            temp = _safe_div(ndu[:, r, j - 1], ndu[:, j, r])
            ndu[:, r, j] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        ndu[:, j, j] = saved

    ders = np.zeros((n, order + 1, p + 1))
    ders[:, 0, :] = ndu[:, :, p]
    nd = min(order, p)
    for r in range(p + 1):
        s1, s2 = 0, 1
        a = np.zeros((n, 2, p + 1))
        a[:, 0, 0] = 1.0
        for k in range(1, nd + 1):
            d = np.zeros(n)
            rk, pk = r - k, p - k
            if r >= k:
                a[:, s2, 0] = _safe_div(a[:, s1, 0], ndu[:, pk + 1, rk])
                d = a[:, s2, 0] * ndu[:, rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                a[:, s2, j] = _safe_div(a[:, s1, j] - a[:, s1, j - 1], ndu[:, pk + 1, rk + j])
                d = d + a[:, s2, j] * ndu[:, rk + j, pk]
            if r <= pk:
                a[:, s2, k] = _safe_div(-a[:, s1, k - 1], ndu[:, pk + 1, r])
                d = d + a[:, s2, k] * ndu[:, r, pk]
            ders[:, k, r] = d
            s1, s2 = s2, s1
    fac = float(p)
    for k in range(1, nd + 1):
        ders[:, k, :] *= fac
        fac *= p - k
    return span - p, ders


def eval_basis(kv: KnotVector, x: float):
    """The ``p+1`` nonzero basis values at ``x`` and the first active index."""
    first, ders = basis_derivatives(kv, np.array([x]), 0)
    return int(first[0]), ders[0, 0]


def eval_basis_derivatives(kv: KnotVector, x: float, order: int):
    """Values and derivatives up to ``order`` at ``x``; rows are derivative orders."""
    first, ders = basis_derivatives(kv, np.array([x]), order)
    return int(first[0]), ders[0]


def basis_matrix(kv: KnotVector, x, order: int = 0) -> np.ndarray:
    """Dense collocation matrix ``B[n, i] = d^order b_i(x_n)``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    first, ders = basis_derivatives(kv, x, order)
    out = np.zeros((x.size, kv.size))
    cols = first[:, None] + np.arange(kv.degree + 1)[None, :]
    np.put_along_axis(out, cols, ders[:, order, :], axis=1)
    return out


class ActiveBasis(NamedTuple):
    multi: np.ndarray
    flat: np.ndarray
    values: np.ndarray


class SplineSpace:
    """Tensor product of univariate B-spline bases, ``d`` in {1, 2, 3}."""

    def __init__(self, knot_vectors: Sequence[KnotVector]):
        kvs = tuple(knot_vectors)
        if not 1 <= len(kvs) <= 3:
            raise ValueError("spline spaces must have 1 to 3 directions")
        self.knot_vectors = kvs

    @classmethod
    def uniform(cls, degree, n_sub, dim: int | None = None) -> "SplineSpace":
        if dim is not None:
            degree = [degree] * dim if np.isscalar(degree) else degree
            n_sub = [n_sub] * dim if np.isscalar(n_sub) else n_sub
        return cls([KnotVector.uniform(p, n) for p, n in zip(degree, n_sub)])

    @property
    def dim(self) -> int:
        return len(self.knot_vectors)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(kv.size for kv in self.knot_vectors)

    @property
    def degrees(self) -> tuple[int, ...]:
        return tuple(kv.degree for kv in self.knot_vectors)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def flat_index(self, multi) -> np.ndarray:
        multi = np.asarray(multi)
        return np.ravel_multi_index(tuple(np.moveaxis(multi, -1, 0)), self.shape, order="F")

    def multi_index(self, flat) -> np.ndarray:
        return np.stack(np.unravel_index(np.asarray(flat), self.shape, order="F"), axis=-1)

    def __eq__(self, other):
        if not isinstance(other, SplineSpace):
            return NotImplemented
        return self.knot_vectors == other.knot_vectors

    def __hash__(self):
        return hash(self.knot_vectors)

    def __repr__(self):
        return f"SplineSpace(degrees={self.degrees}, shape={self.shape})"


def tensor_eval(space: SplineSpace, point) -> ActiveBasis:
    """Active tensor-product basis functions at ``point`` and their values."""
    point = np.asarray(point, dtype=float).ravel()
    if point.size != space.dim:
        raise ValueError(f"point has {point.size} coordinates, space has dimension {space.dim}")
    firsts, vals = [], []
    for kv, x in zip(space.knot_vectors, point):
        f, v = eval_basis(kv, x)
        firsts.append(f + np.arange(kv.degree + 1))
        vals.append(v)
    grids = np.meshgrid(*firsts, indexing="ij")
    multi = np.stack([g.ravel(order="F") for g in grids], axis=-1)
    # outer(v, values) makes each new direction the slow index
    values = vals[0]
    for v in vals[1:]:
        values = np.multiply.outer(v, values).ravel()
    return ActiveBasis(multi, space.flat_index(multi), values)
