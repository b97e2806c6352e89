"""Algorithmic parameters of the explicit generalized-alpha family of order 2k.

Block ``j < k`` evaluates the stiffness and damping terms at the end of the
step (``alpha_f = 1``); the last block evaluates them at the start
(``alpha_f = 0``). ``alpha`` and ``beta`` are chosen so that the principal
root pair of every diagonal block of the amplification matrix coalesces at
``-rho_b`` and the spurious root sits at ``-rho_s`` when the bifurcation
limit is reached.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ParameterError(ValueError):
    """Raised for dissipation controls outside the admissible range."""


FORMULAS = ("factored", "alternate")


def last_block(rb: float, rs: float):
    """``(alpha, beta, Omega_b, Omega_s)`` of a block with ``alpha_f = 0``."""
    alpha = (2 + (1 - rb) * rs) / ((1 + rb) * (1 + rs))
    beta = ((-5 - 3 * rb - 4 * rs + 2 * rb * rs + 2 * rb ** 2 * rs - rs ** 2 + rb * rs ** 2)
            / ((1 + rb) ** 2 * (-2 - 3 * rs + rb * rs - rs ** 2 + rb * rs ** 2)))
    omega_b = 2 + 2 * rb + rs - rs * rb ** 2
    omega_s = (4 * (1 + rb) * (2 - rb * rs + rs) * (3 - rb + rs - 3 * rb * rs)
               / (2 * (5 - rb ** 2) + (5 - 13 * rb - rb ** 2 + rb ** 3) * rs - (1 - rb) ** 3 * rs ** 2))
    return alpha, beta, omega_b, omega_s


def inner_block(rb: float, rs: float):
    """``(alpha, beta, Omega_b, Omega_s)`` of a block with ``alpha_f = 1``.

    Obtained by imposing the root factorization ``(x + rb)^2 (x + rs)`` on the
    block's characteristic polynomial at the bifurcation limit. The resulting
    polynomial coincides with that of the last block, so both share the
    bifurcation and stability limits.
    """
    alpha, _, omega_b, omega_s = last_block(rb, rs)
    beta = (rb - 1) * (rb * rs - 1) ** 2 / ((1 + rb) ** 2 * (1 + rs) * (rb * rs - rs - 2))
    return alpha, beta, omega_b, omega_s


def inner_block_alternate(rb: float, rs: float):
    """Alternative closed forms for the ``alpha_f = 1`` block, kept for comparison.

    These place the coalesced roots at ``+rb`` instead of ``-rb`` and lose
    stability quickly as ``rb -> 1``.
    """
    alpha = (2 - (1 + rb) * rs) / ((-1 + rb) * (-1 + rs))
    beta = (1 + rb) * (-1 + rb * rs) ** 2 / ((-1 + rb) ** 2 * (-1 + rs) * (-2 + rs + rb * rs))
    omega_b = 2 - 2 * rb - rs + rs * rb ** 2
    omega_s = (4 * (1 - rb) * (2 - rb * rs - rs) * (3 + rb - rs - 3 * rb * rs)
               / (2 * (5 - rb ** 2) + (5 - 13 * rb - rb ** 2 - rb ** 3) * rs - (1 + rb) ** 3 * rs ** 2))
    return alpha, beta, omega_b, omega_s


@dataclass(frozen=True)
class GenAlphaParams:
    """Per-block parameters of the order-``2k`` scheme (tuples of length ``k``)."""

    k: int
    rho_b: tuple
    rho_s: tuple
    alpha: tuple
    beta: tuple
    gamma: tuple
    alpha_f: tuple
    omega_b: tuple
    omega_s: tuple
    formulas: str = "factored"

    @property
    def order(self) -> int:
        return 2 * self.k

    def block(self, j: int) -> dict:
        """Parameters of block ``j`` (0-based)."""
        return {name: getattr(self, name)[j] for name in
                ("rho_b", "rho_s", "alpha", "beta", "gamma", "alpha_f", "omega_b", "omega_s")}


def _per_block(value, k, name):
    if np.isscalar(value):
        return [float(value)] * k
    vals = [float(v) for v in value]
    if len(vals) != k:
        raise ParameterError(f"{name} needs {k} entries, got {len(vals)}")
    return vals


def compute_params(k: int, rho_b=0.0, rho_s=None, formulas: str = "factored") -> GenAlphaParams:
    """Evaluate the closed-form parameters.

    Args:
        k: order index, the method is of order ``2k``.
        rho_b: principal-root target(s) at the bifurcation limit, scalar or per block.
        rho_s: spurious-root target(s); defaults to ``rho_b``.
        formulas: ``"factored"`` (default) or ``"alternate"`` for the inner blocks.
    """
    if int(k) != k or k < 1:
        raise ParameterError(f"k must be a positive integer, got {k}")
    k = int(k)
    if formulas not in FORMULAS:
        raise ParameterError(f"formulas must be one of {FORMULAS}")
    rb = _per_block(rho_b, k, "rho_b")
    rs = rb if rho_s is None else _per_block(rho_s, k, "rho_s")
    for j, (b, s) in enumerate(zip(rb, rs)):
        if not (0.0 <= b < 1.0 and 0.0 <= s < 1.0):
            raise ParameterError(f"block {j + 1}: rho values must lie in [0, 1), got ({b}, {s})")
        if s > b:
            raise ParameterError(f"block {j + 1}: rho_s = {s} exceeds rho_b = {b}")
    inner = inner_block if formulas == "factored" else inner_block_alternate
    cols = {n: [] for n in ("alpha", "beta", "gamma", "alpha_f", "omega_b", "omega_s")}
    for j in range(k):
        af = 0.0 if j == k - 1 else 1.0
        a, b, ob, os_ = (last_block if af == 0.0 else inner)(rb[j], rs[j])
        # snap alpha to a 2^-50 grid so that gamma = 1/2 - alpha_f + alpha is exact
        a = round(a * 2.0 ** 50) / 2.0 ** 50
        cols["alpha"].append(a)
        cols["beta"].append(b)
        cols["gamma"].append(0.5 - af + a)
        cols["alpha_f"].append(af)
        cols["omega_b"].append(ob)
        cols["omega_s"].append(os_)
    return GenAlphaParams(k, tuple(rb), tuple(rs), **{n: tuple(v) for n, v in cols.items()},
                          formulas=formulas)
