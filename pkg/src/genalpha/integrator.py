"""Explicit generalized-alpha time stepping of order 2k.

The state holds ``3k`` vectors: displacement ``U``, velocity ``V``,
acceleration ``A`` and the time derivatives of ``A`` up to order ``3k - 3``.
Block ``j`` (0-based) owns the triple ``(X_{3j}, X_{3j+1}, X_{3j+2})``. Each
step performs one mass solve per block for ``X_{3j+2}``; the two other
members of the triple are corrected algebraically. All blocks only read the
state at the start of the step.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from math import factorial
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .linalg import pcg, power_iteration_genmax
from .params import GenAlphaParams, compute_params
from .spectral import find_stability, predictor_degree

log = logging.getLogger(__name__)


class StepError(RuntimeError):
    """A mass solve failed inside a step."""

    def __init__(self, block: int, message: str):
        super().__init__(f"block {block + 1}: {message}")
        self.block = block


class InitializationError(RuntimeError):
    """A mass solve failed while computing the initial derivatives."""


class InstabilityError(RuntimeError):
    """The scaled state norm grew beyond the detection threshold."""

    def __init__(self, step: int, t: float, growth: float):
        super().__init__(f"instability detected at step {step} (t = {t:.6g}), growth {growth:.3e}")
        self.step = step
        self.t = t
        self.growth = growth


class CFLError(ValueError):
    """The time step exceeds the stability limit."""


class MassSolver:
    """Mass solves with bookkeeping.

    ``method="pcg"`` runs preconditioned CG from a zero initial guess;
    ``method="direct"`` uses a sparse LU factorization.
    """

    def __init__(self, M, precond=None, tol: float = 1e-12, max_iter: int | None = None,
                 method: str = "pcg"):
        self.M = sp.csr_matrix(M) if not sp.issparse(M) else M.tocsr()
        self.precond = precond
        self.tol = tol
        self.max_iter = max_iter
        self.method = method
        self.solves = 0
        self.iterations: list[int] = []
        self.kappas: list[float] = []
        self._lu = spla.splu(self.M.tocsc()) if method == "direct" else None

    def solve(self, b):
        """Return ``(x, converged, message)``."""
        self.solves += 1
        if self._lu is not None:
            self.iterations.append(0)
            return self._lu.solve(np.asarray(b, float)), True, ""
        x, rep = pcg(self.M, self.precond, b, tol=self.tol, max_iter=self.max_iter)
        self.iterations.append(rep.iterations)
        self.kappas.append(rep.kappa)
        msg = "" if rep.converged else f"PCG stopped after {rep.iterations} iterations (residual {rep.residual:.3e})"
        return x, rep.converged, msg

    @property
    def mean_iterations(self) -> float:
        return float(np.mean(self.iterations)) if self.iterations else 0.0

    def reset(self):
        self.solves = 0
        self.iterations = []
        self.kappas = []


@dataclass
class IntegratorState:
    t: float
    X: list

    @property
    def U(self):
        return self.X[0]

    @property
    def V(self):
        return self.X[1]

    @property
    def A(self):
        return self.X[2]

    def scaled_norm(self, tau: float) -> float:
        return float(np.sqrt(sum((tau ** m) ** 2 * float(np.dot(x, x)) for m, x in enumerate(self.X))))

    def scaled(self, tau: float) -> np.ndarray:
        """Stack ``tau^m X_m`` (scalar systems: a vector of length ``3k``)."""
        return np.concatenate([np.atleast_1d(tau ** m * x) for m, x in enumerate(self.X)])

    @classmethod
    def from_scaled(cls, x, tau: float, t: float = 0.0, n: int = 1):
        """Inverse of :meth:`scaled` for blocks of length ``n``."""
        parts = np.split(np.asarray(x, float), len(x) // n)
        return cls(t, [p / tau ** m for m, p in enumerate(parts)])


@dataclass
class MatrixSystem:
    """``M U'' + C U' + K U = F(t)`` given directly by matrices.

    ``load(t, order)`` returns the ``order``-th time derivative of ``F``;
    the default is zero forcing.
    """

    M: object
    K: object
    C: object = None
    forcing: Callable | None = None
    fd_step: float | None = None

    def __post_init__(self):
        self.M = sp.csr_matrix(np.atleast_2d(self.M) if not sp.issparse(self.M) else self.M)
        self.K = sp.csr_matrix(np.atleast_2d(self.K) if not sp.issparse(self.K) else self.K)
        if self.C is not None:
            self.C = sp.csr_matrix(np.atleast_2d(self.C) if not sp.issparse(self.C) else self.C)

    @property
    def n(self) -> int:
        return self.M.shape[0]

    def load(self, t: float, order: int = 0):
        if self.forcing is None:
            return np.zeros(self.n)
        return np.atleast_1d(np.asarray(self.forcing(t, order), float))


def _matvec(A, x):
    return A @ x if A is not None else 0.0


def init_state(system, params: GenAlphaParams, U0, V0, solver: MassSolver, t0: float = 0.0) -> IntegratorState:
    """Initial acceleration and its derivatives by cascaded mass solves.

    ``X_m = M^{-1}(F^{(m-2)}(t0) - K X_{m-2} - C X_{m-1})`` for ``m = 2 .. 3k-1``.
    """
    X = [np.array(U0, float), np.array(V0, float)]
    for m in range(2, 3 * params.k):
        rhs = system.load(t0, m - 2) - system.K @ X[m - 2] - _matvec(system.C, X[m - 1])
        x, ok, msg = solver.solve(rhs)
        if not ok:
            raise InitializationError(f"derivative {m - 2} of the acceleration: {msg}")
        X.append(x)
    return IntegratorState(t0, X)


def _taylor(X, m, tau, hi=None):
    top = len(X) - 1 - m if hi is None else min(hi, len(X) - 1 - m)
    out = X[m].copy()
    for i in range(1, top + 1):
        out = out + (tau ** i / factorial(i)) * X[m + i]
    return out


def step(system, params: GenAlphaParams, state: IntegratorState, tau: float, solver: MassSolver) -> IntegratorState:
    """Advance one step of size ``tau`` (exactly ``k`` mass solves)."""
    X = state.X
    k = params.k
    new = [None] * (3 * k)
    for j in range(k):
        a, b, g, af = params.alpha[j], params.beta[j], params.gamma[j], params.alpha_f[j]
        d, ia = 3 * j, 3 * j + 2
        q = predictor_degree(k, d)
        ta = _taylor(X, ia, tau)
        kd = X[d] if af == 0.0 else (1 - af) * X[d] + af * _taylor(X, d, tau, q)
        rhs = system.load(state.t + af * tau, d) - system.K @ kd
        if system.C is not None:
            cd = X[d + 1] if af == 0.0 else (1 - af) * X[d + 1] + af * _taylor(X, d + 1, tau, q)
            rhs = rhs - system.C @ cd
        # alpha M X_a' + (1 - alpha) M T_a = rhs, solved for X_a'
        x, ok, msg = solver.solve((rhs - (1 - a) * (system.M @ ta)) / a)
        if not ok:
            raise StepError(j, msg)
        corr = x - ta
        new[ia] = x
        new[d] = _taylor(X, d, tau) + b * tau ** 2 * corr
        new[d + 1] = _taylor(X, d + 1, tau) + g * tau * corr
    return IntegratorState(state.t + tau, new)


def max_generalized_eigenvalue(system, seed: int = 0):
    """Power-iteration estimate of the largest eigenvalue of ``M^{-1} K``."""
    lu = spla.splu(system.M.tocsc())
    return power_iteration_genmax(lambda v: system.K @ v, lu.solve, system.n, seed=seed)


def stability_limit(params: GenAlphaParams) -> float:
    """Numerically verified ``Theta_max`` (minimum over blocks)."""
    return float(find_stability(params).theta_max)


def cfl_timestep(lam_max: float, params_or_theta, safety: float = 1.0) -> float:
    """``tau = safety * sqrt(Theta_max / lam_max)``."""
    if lam_max <= 0:
        raise ValueError("the largest generalized eigenvalue must be positive")
    if not 0 < safety <= 1:
        raise ValueError("safety factor must lie in (0, 1]")
    theta = params_or_theta if np.isscalar(params_or_theta) else stability_limit(params_or_theta)
    return safety * float(np.sqrt(theta / lam_max))


@dataclass
class IntegrationReport:
    state: IntegratorState
    steps: int
    solves: int
    mean_iterations: float
    initial_norm: float
    history: list = field(default_factory=list)


def integrate(system, params: GenAlphaParams, U0, V0, tau: float, T: float,
              solver: MassSolver | None = None, observers: Sequence[Callable] = (), cadence: int = 1,
              unsafe: bool = False, lam_max: float | None = None, state0: IntegratorState | None = None,
              growth_limit: float = 1e6) -> IntegrationReport:
    """Run ``round(T / tau)`` steps from the given initial data.

    Observers are called as ``observer(t, state)`` at the initial time and
    every ``cadence`` steps (and at the final step). Unless ``unsafe`` is set,
    ``tau`` is checked against the stability limit using ``lam_max`` (computed
    by power iteration if not given).
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    if solver is None:
        from .precond import mass_preconditioner
        solver = MassSolver(system.M, mass_preconditioner(system))
    if not unsafe:
        if lam_max is None:
            lam_max = max_generalized_eigenvalue(system).value
        limit = cfl_timestep(lam_max, params)
        if tau > limit * (1 + 1e-12):
            raise CFLError(f"tau = {tau:.3e} exceeds the stability bound {limit:.3e}")
    system.fd_step = tau / 100
    state = state0 if state0 is not None else init_state(system, params, U0, V0, solver)
    n_steps = int(round(T / tau))
    norm0 = state.scaled_norm(tau)
    for obs in observers:
        obs(state.t, state)
    for n in range(1, n_steps + 1):
        state = step(system, params, state, tau, solver)
        nrm = state.scaled_norm(tau)
        if not np.isfinite(nrm) or (norm0 > 0 and nrm > growth_limit * norm0):
            raise InstabilityError(n, state.t, nrm / norm0 if norm0 > 0 else np.inf)
        if n % cadence == 0 or n == n_steps:
            for obs in observers:
                obs(state.t, state)
    return IntegrationReport(state, n_steps, solver.solves, solver.mean_iterations, norm0)


__all__ = [
    "GenAlphaParams", "compute_params", "MassSolver", "MatrixSystem", "IntegratorState", "init_state", "step",
    "integrate", "stability_limit", "cfl_timestep", "max_generalized_eigenvalue",
    "StepError", "InitializationError", "InstabilityError", "CFLError", "IntegrationReport",
]
