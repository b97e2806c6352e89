"""Manufactured solutions with analytic time derivatives.

Each problem is separable, ``u(x, t) = s(x) h(t)`` (or a sum of such terms),
so the source term and all its time derivatives are available exactly. The
source accounts for Rayleigh damping ``a0 u' - a1 omega^2 lap u'``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .assembly import SeparableField


def harmonic(freq: float, a_cos: float = 1.0, a_sin: float = 0.0) -> Callable:
    """``h(t) = a_cos cos(freq t) + a_sin sin(freq t)`` with derivatives."""

    def h(t, order=0):
        # d^m/dt^m cos = freq^m cos(. + m pi/2)
        shift = order * np.pi / 2
        return freq ** order * (a_cos * np.cos(freq * t + shift) + a_sin * np.sin(freq * t + shift))

    return h


def polynomial_in_time(coeffs) -> Callable:
    """``h(t) = sum_i c_i t^i`` with derivatives."""
    poly = np.polynomial.Polynomial(coeffs)

    def h(t, order=0):
        return float(poly.deriv(order)(t)) if order else float(poly(t))

    return h


def sine_product(freqs) -> Callable:
    """``s(x) = prod_k sin(freqs[k] x_k)``."""
    freqs = np.asarray(freqs, float)

    def s(x):
        x = np.atleast_2d(x)
        return np.prod(np.sin(freqs[None, :] * x[:, : freqs.size]), axis=1)

    return s


@dataclass(frozen=True)
class Manufactured:
    """An exact solution together with the source that produces it."""

    name: str
    dim: int
    exact: SeparableField
    source: SeparableField
    omega: float = 1.0
    homogeneous: bool = False

    @property
    def boundary(self) -> SeparableField | None:
        return None if self.homogeneous else self.exact


def _sine_wave(name, freqs, h, omega=1.0, damping=(0.0, 0.0), homogeneous=False):
    """``u = prod sin(c_k x_k) h(t)``; ``-lap s = |c|^2 s``."""
    s = sine_product(freqs)
    kappa2 = float(np.sum(np.square(freqs)))
    a0, a1 = damping
    lam = omega ** 2 * kappa2

    def g(t, order=0):
        return h(t, order + 2) + (a0 + a1 * lam) * h(t, order + 1) + lam * h(t, order)

    return Manufactured(name, len(freqs), SeparableField(((s, h),)), SeparableField(((s, g),)),
                        omega, homogeneous)


def standing_wave_2d(damping=(0.0, 0.0)) -> Manufactured:
    """``sin(10 pi x) sin(10 pi y) [cos(10 sqrt2 pi t) + sin(10 sqrt2 pi t)]``; zero source when undamped."""
    w = 10.0 * np.sqrt(2.0) * np.pi
    return _sine_wave("standing_wave_2d", [10 * np.pi, 10 * np.pi], harmonic(w, 1.0, 1.0),
                      damping=damping, homogeneous=True)


def standing_wave_1d(damping=(0.0, 0.0)) -> Manufactured:
    """One-dimensional analog with the same temporal frequency; source ``-100 pi^2 u``."""
    w = 10.0 * np.sqrt(2.0) * np.pi
    return _sine_wave("standing_wave_1d", [10 * np.pi], harmonic(w, 1.0, 1.0),
                      damping=damping, homogeneous=True)


def smooth_trig(dim: int = 2, freq: float = 20 * np.pi, damping=(0.0, 0.0)) -> Manufactured:
    """``prod sin(x_k) [cos(freq t) + sin(freq t)]``, nonzero on most boundaries."""
    return _sine_wave("smooth_trig", [1.0] * dim, harmonic(freq, 1.0, 1.0), damping=damping)


def dispersion_mode(j: int) -> Manufactured:
    """``sin(j pi x) cos(pi t)`` with wave speed ``1/j``; zero source."""
    m = _sine_wave(f"dispersion_{j}", [j * np.pi], harmonic(np.pi, 1.0, 0.0), omega=1.0 / j,
                   homogeneous=True)
    return m


def linear_in_space(coeffs=(1.0, 0.5, -0.25), dim: int | None = None) -> Manufactured:
    """``(c0 + c . x)(1 + t + t^2/2)``; the source is ``(c0 + c . x)``."""
    c = np.asarray(coeffs, float)
    dim = c.size - 1 if dim is None else dim

    def s(x):
        x = np.atleast_2d(x)
        return c[0] + x[:, :dim] @ c[1: dim + 1]

    h = polynomial_in_time([1.0, 1.0, 0.5])
    g = polynomial_in_time([1.0])
    return Manufactured("linear_in_space", dim, SeparableField(((s, h),)), SeparableField(((s, g),)))


REGISTRY = {
    "standing_wave_2d": standing_wave_2d,
    "standing_wave_1d": standing_wave_1d,
    "smooth_trig": smooth_trig,
    "dispersion": dispersion_mode,
    "linear_in_space": linear_in_space,
}


def get_problem(name: str, **kwargs) -> Manufactured:
    try:
        return REGISTRY[name](**kwargs)
    except KeyError:
        raise KeyError(f"unknown manufactured solution {name!r}") from None
