"""Amplification matrices of the scheme on the scalar model problem.

For ``u'' + lam u = 0`` the scheme maps the scaled state
``x_m = tau^m X_m`` (``X_0 = U``, ``X_1 = V``, ``X_2 = A`` and higher
derivatives of ``A`` after that) linearly: ``x_{n+1} = G(Theta) x_n`` with
``Theta = tau^2 lam``. ``G = L^{-1} R`` is upper block triangular with one
3x3 diagonal block per block equation.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from math import factorial

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .linalg import block_char_poly, block_eigs
from .params import GenAlphaParams

log = logging.getLogger(__name__)

THETA_CEILING = 20.0
BISECTION_TOL = 1e-10
RADIUS_TOL = 1e-10


def predictor_degree(k: int, d: int) -> int:
    """Highest Taylor index used in the stiffness argument of a block.

    Block equations evaluated at the end of the step use the displacement
    predictor truncated after ``tau^(2k-1)``.
    """
    return min(2 * k - 1, 3 * k - 1 - d)


def scheme_matrices(params: GenAlphaParams, theta: float):
    """``(L, R)`` with ``L x_{n+1} = R x_n`` for the undamped scalar problem."""
    k = params.k
    n = 3 * k
    L = np.zeros((n, n))
    R = np.zeros((n, n))
    for j in range(k):
        a, b, g, af = params.alpha[j], params.beta[j], params.gamma[j], params.alpha_f[j]
        d, ia = 3 * j, 3 * j + 2
        q = predictor_degree(k, d)
        # acceleration row: alpha x_a' = -(1 - alpha) T_a - Theta * stiffness argument
        L[ia, ia] = a
        for i in range(n - ia):
            R[ia, ia + i] -= (1 - a) / factorial(i)
        R[ia, d] -= theta * (1 - af)
        for i in range(q + 1):
            R[ia, d + i] -= theta * af / factorial(i)
        # displacement-type and velocity-type rows
        for row, first, coef in ((d, d, b), (d + 1, d + 1, g)):
            L[row, row] = 1.0
            L[row, ia] = -coef
            for i in range(n - first):
                R[row, first + i] += 1.0 / factorial(i)
            for i in range(n - ia):
                R[row, ia + i] -= coef / factorial(i)
    return L, R


def explicit_AB(params: GenAlphaParams, theta: float):
    """Explicit ``(A, B)`` pair with ``A x_{n+1} = B x_n`` for ``k = 2``."""
    if params.k != 2:
        raise ValueError("explicit A, B matrices are provided for k = 2 only")
    a1, a2 = params.alpha
    b1, b2 = params.beta
    g1, g2 = params.gamma
    T = theta
    A = np.array([
        [1, 0, -b1, 0, 0, 0],
        [0, 1, -g1, 0, 0, 0],
        [0, 0, a1, 0, 0, 0],
        [0, 0, 0, 1, 0, -b2],
        [0, 0, 0, 0, 1, -g2],
        [0, 0, 0, 0, 0, a2],
    ], dtype=float)
    B = np.array([
        [1, 1, 0.5 - b1, 1 / 6 - b1, 1 / 24 - b1 / 2, 1 / 120 - b1 / 6],
        [0, 1, 1 - g1, 0.5 - g1, 1 / 6 - g1 / 2, 1 / 24 - g1 / 6],
        [-T, -T, a1 - 1 - T / 2, a1 - 1 - T / 6, (a1 - 1) / 2, (a1 - 1) / 6],
        [0, 0, 0, 1, 1, 0.5 - b2],
        [0, 0, 0, 0, 1, 1 - g2],
        [0, 0, 0, -T, 0, a2 - 1],
    ], dtype=float)
    return A, B


def inner_block_matrix(alpha, beta, gamma, theta):
    """Closed-form diagonal block for ``alpha_f = 1``."""
    a, b, g, T = alpha, beta, gamma, theta
    return np.array([
        [a - b * T, a - b * T, (a - b * (T + 2)) / 2],
        [-g * T, a - g * T, a - g * (T + 2) / 2],
        [-T, -T, a - 1 - T / 2],
    ]) / a


def last_block_matrix(alpha, beta, gamma, theta):
    """Closed-form diagonal block for ``alpha_f = 0``."""
    a, b, g, T = alpha, beta, gamma, theta
    return np.array([
        [a - b * T, a, a / 2 - b],
        [-g * T, a, a - g],
        [-T, 0, a - 1],
    ]) / a


@dataclass
class AmplificationMatrix:
    params: GenAlphaParams
    theta: float
    matrix: np.ndarray

    def block(self, j: int) -> np.ndarray:
        """Diagonal block ``j`` (0-based)."""
        return self.matrix[3 * j: 3 * j + 3, 3 * j: 3 * j + 3]

    def coupling(self, i: int, j: int) -> np.ndarray:
        return self.matrix[3 * i: 3 * i + 3, 3 * j: 3 * j + 3]

    def __array__(self, dtype=None, copy=None):
        return self.matrix if dtype is None else self.matrix.astype(dtype)


def build_G(params: GenAlphaParams, theta: float) -> AmplificationMatrix:
    """``G(Theta) = L^{-1} R``."""
    if theta < 0:
        raise ValueError("Theta must be nonnegative")
    L, R = scheme_matrices(params, theta)
    return AmplificationMatrix(params, float(theta), np.linalg.solve(L, R))


def diagonal_block(params: GenAlphaParams, j: int, theta: float) -> np.ndarray:
    """Diagonal block ``j`` from the closed forms (identical to ``build_G(...).block(j)``)."""
    make = inner_block_matrix if params.alpha_f[j] == 1.0 else last_block_matrix
    return make(params.alpha[j], params.beta[j], params.gamma[j], theta)


@dataclass
class SpectrumSample:
    theta: float
    eigenvalues: np.ndarray       # all 3k eigenvalues, block by block
    radius: float
    block_radius: np.ndarray      # per block


def spectrum(params: GenAlphaParams, theta: float) -> SpectrumSample:
    """Eigenvalues of ``G(Theta)`` from its diagonal blocks."""
    per = [block_eigs(diagonal_block(params, j, theta)) for j in range(params.k)]
    radii = np.array([np.abs(e).max() for e in per])
    return SpectrumSample(float(theta), np.concatenate(per), float(radii.max()), radii)


def block_radius(params: GenAlphaParams, j: int, theta: float) -> float:
    return float(np.abs(block_eigs(diagonal_block(params, j, theta))).max())


def discriminant(params: GenAlphaParams, j: int, theta: float) -> float:
    """Discriminant of the block's characteristic cubic (negative: one complex pair)."""
    _, b, c, d = block_char_poly(diagonal_block(params, j, theta))
    return 18 * b * c * d - 4 * b ** 3 * d + b ** 2 * c ** 2 - 4 * c ** 3 - 27 * d ** 2


@dataclass
class BifurcationReport:
    block: int
    theta: float
    closed_form: float
    found: bool
    kind: str = "not-found"
    discriminant: float = float("nan")


def find_bifurcation(params: GenAlphaParams, j: int, ceiling: float = THETA_CEILING,
                     samples: int = 4000) -> BifurcationReport:
    """First ``Theta`` where the principal root pair of block ``j`` becomes real.

    A sign change of the discriminant from negative to positive is refined by
    Brent's method. When the spurious and principal roots meet in a triple
    root the discriminant only touches zero; that tangency is located as a
    local maximum of the discriminant.
    """
    closed = params.omega_b[j]
    grid = np.linspace(ceiling / samples, ceiling, samples)
    disc = np.array([discriminant(params, j, t) for t in grid])
    f = lambda t: discriminant(params, j, t)
    pos = np.nonzero(disc > 0)[0]
    if pos.size:
        i = pos[0]
        if i == 0:
            return BifurcationReport(j, float(grid[0]), closed, True, "sign-change", float(disc[0]))
        t = brentq(f, grid[i - 1], grid[i], xtol=1e-14, rtol=4 * np.finfo(float).eps)
        return BifurcationReport(j, t, closed, True, "sign-change", f(t))
    inner = np.nonzero((disc[1:-1] >= disc[:-2]) & (disc[1:-1] >= disc[2:]))[0] + 1
    if inner.size:
        i = inner[np.argmax(disc[inner])]
        res = minimize_scalar(lambda t: -f(t), bounds=(grid[i - 1], grid[i + 1]), method="bounded",
                              options={"xatol": 1e-12})
        t = float(res.x)
        val = f(t)
        if abs(val) <= 1e-8:
            return BifurcationReport(j, t, closed, True, "tangency", val)
    return BifurcationReport(j, float("nan"), closed, False)


@dataclass
class StabilityReport:
    theta_max: float
    per_block: list
    closed_form: list
    discrepancies: list = field(default_factory=list)


def block_stability_limit(params: GenAlphaParams, j: int, ceiling: float = THETA_CEILING,
                          step: float = 0.005, tol: float = BISECTION_TOL) -> float:
    """Largest ``Theta`` with block radius ``<= 1 + 1e-10``, by scan and bisection."""
    grid = np.arange(step, ceiling + step / 2, step)
    prev = 0.0
    for t in grid:
        if block_radius(params, j, t) > 1 + RADIUS_TOL:
            lo, hi = prev, t
            while hi - lo > tol:
                mid = 0.5 * (lo + hi)
                if block_radius(params, j, mid) > 1 + RADIUS_TOL:
                    hi = mid
                else:
                    lo = mid
            return lo
        prev = t
    return float("inf")


def find_stability(params: GenAlphaParams, ceiling: float = THETA_CEILING) -> StabilityReport:
    """Numeric stability limit of every block and of the whole scheme.

    Closed-form limits are reported next to the numeric ones; relative
    disagreements above 1% are logged and listed as ``(block, numeric,
    closed_form)``, never reconciled.
    """
    per, closed, bad = [], [], []
    for j in range(params.k):
        lim = block_stability_limit(params, j, ceiling)
        cf = params.omega_s[j]
        per.append(lim)
        closed.append(cf)
        if not np.isfinite(lim) or abs(cf - lim) > 0.01 * abs(lim):
            log.warning("block %d: numeric stability limit %.6g differs from closed form %.6g",
                        j + 1, lim, cf)
            bad.append((j, lim, cf))
    return StabilityReport(min(per), per, closed, bad)


def spectrum_sweep(params: GenAlphaParams, thetas) -> list:
    """One :class:`SpectrumSample` per ``Theta`` (grid must be sorted)."""
    thetas = np.asarray(thetas, float)
    if np.any(np.diff(thetas) < 0):
        raise ValueError("Theta grid must be sorted")
    return [spectrum(params, t) for t in thetas]


def sweep_rows(samples) -> tuple[list, list]:
    """CSV header and rows ``theta, rho_G, re_lambda_i, im_lambda_i, ...``."""
    n = samples[0].eigenvalues.size if samples else 0
    header = ["theta", "rho_G"]
    for i in range(n):
        header += [f"re_lambda_{i + 1}", f"im_lambda_{i + 1}"]
    rows = []
    for s in samples:
        row = [s.theta, s.radius]
        for lam in s.eigenvalues:
            row += [lam.real, lam.imag]
        rows.append(row)
    return header, rows
