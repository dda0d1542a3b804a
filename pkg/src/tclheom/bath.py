"""Debye bath: spectral density and exponential (Matsubara) decomposition.

The bath correlation function of a Debye spectral density,

    J(w) = eta * wc * w / (w**2 + wc**2),

is written as a sum of decaying exponentials C(t) = sum_k d_k exp(-w_k t).
Mode 0 decays with the cutoff frequency and carries the only imaginary
part; modes k >= 1 decay with the Matsubara frequencies 2 k pi / beta.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate


class BathError(ValueError):
    """Raised for invalid bath parameters."""


@dataclass(frozen=True)
class BathSpec:
    """Debye bath parameters (hbar = 1).

    Attributes
    ----------
    eta : float
        Coupling strength (energy). The reorganization energy is eta / 2.
    omega_c : float
        Cutoff frequency.
    beta : float
        Inverse temperature.
    n_matsubara : int
        Number K of Matsubara modes kept in addition to the cutoff mode.
    """

    eta: float
    omega_c: float
    beta: float
    n_matsubara: int = 0

    def __post_init__(self) -> None:
        if not self.eta >= 0.0:
            raise BathError(f"eta must be >= 0, got {self.eta}")
        if not self.omega_c > 0.0:
            raise BathError(f"omega_c must be > 0, got {self.omega_c}")
        if not self.beta > 0.0:
            raise BathError(f"beta must be > 0, got {self.beta}")
        if int(self.n_matsubara) != self.n_matsubara or self.n_matsubara < 0:
            raise BathError(f"n_matsubara must be a non-negative integer, got {self.n_matsubara}")
        bw = self.beta * self.omega_c
        for k in range(1, self.n_matsubara + 1):
            if math.isclose(2 * k * math.pi, bw, rel_tol=1e-12):
                raise BathError(
                    f"beta*omega_c = {bw} hits the pole of Matsubara mode k={k}")
        # cot(beta*omega_c/2) is singular at the same points for any K
        if abs(math.sin(0.5 * bw)) < 1e-12:
            raise BathError(f"beta*omega_c = {bw} is a multiple of 2*pi")

    @property
    def reorganization_energy(self) -> float:
        return 0.5 * self.eta

    def replace(self, **changes) -> "BathSpec":
        fields = dict(eta=self.eta, omega_c=self.omega_c, beta=self.beta,
                      n_matsubara=self.n_matsubara)
        fields.update(changes)
        return BathSpec(**fields)


@dataclass(frozen=True)
class ExpMode:
    """One exponential term d * exp(-omega * t) of the correlation function."""

    d: complex
    omega: float


def spectral_density(spec: BathSpec, omega):
    """Debye spectral density J(omega); odd in omega, accepts arrays."""
    omega = np.asarray(omega, dtype=float)
    j = spec.eta * spec.omega_c * omega / (omega**2 + spec.omega_c**2)
    return j if j.ndim else float(j)


def expand_correlation(spec: BathSpec) -> list[ExpMode]:
    """Return the K+1 exponential modes of C(t) for a Debye bath."""
    eta, wc, beta = spec.eta, spec.omega_c, spec.beta
    bw = beta * wc
    modes = [ExpMode(d=0.5 * eta * wc * (1.0 / math.tan(0.5 * bw) - 1j), omega=wc)]
    for k in range(1, spec.n_matsubara + 1):
        nu = 2.0 * k * math.pi
        dk = 4.0 * k * math.pi * eta * wc / (nu * nu - bw * bw)
        modes.append(ExpMode(d=complex(dk, 0.0), omega=nu / beta))
    return modes


def correlation(spec: BathSpec, t, modes: Sequence[ExpMode] | None = None):
    """Evaluate C(t) = sum_k d_k exp(-omega_k t) for t >= 0."""
    if modes is None:
        modes = expand_correlation(spec)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("correlation is defined for t >= 0")
    c = np.zeros(t.shape, dtype=complex)
    for m in modes:
        c += m.d * np.exp(-m.omega * t)
    return c if c.ndim else complex(c)


def correlation_quadrature(spec: BathSpec, t: float, cutoff: float | None = None) -> complex:
    """C(t) from direct quadrature of the fluctuation-dissipation integral.

    Independent of the exponential decomposition; used as a cross-check.
    With ``cutoff`` the integral runs over [-cutoff, cutoff]; otherwise over
    the whole real axis (Fourier quadrature, requires t > 0).
    """
    eta, wc, beta = spec.eta, spec.omega_c, spec.beta
    if eta == 0.0:
        return 0j

    def symmetric(w):
        # J(w) coth(beta w / 2); removable singularity at w = 0
        x = 0.5 * beta * w
        if abs(x) < 1e-6:
            coth_times_w = (2.0 / beta) * (1.0 + x * x / 3.0)
            return eta * wc * coth_times_w / (w * w + wc * wc)
        return spectral_density(spec, w) / math.tanh(x)

    def antisym(w):
        return spectral_density(spec, w)

    # Re C(t) = (1/pi) int_0^inf J coth cos(wt);  Im C(t) = -(1/pi) int_0^inf J sin(wt)
    if cutoff is None:
        if t <= 0.0:
            raise ValueError("infinite-range quadrature needs t > 0; C(0) diverges for Debye")
        re, _ = integrate.quad(symmetric, 0.0, np.inf, weight="cos", wvar=t, limlst=200)
        im, _ = integrate.quad(antisym, 0.0, np.inf, weight="sin", wvar=t, limlst=200)
    else:
        kw = dict(limit=2000, epsabs=0.0, epsrel=1e-12)
        if t == 0.0:
            re, _ = integrate.quad(symmetric, 0.0, cutoff, **kw)
            im = 0.0
        else:
            re, _ = integrate.quad(symmetric, 0.0, cutoff, weight="cos", wvar=t, **kw)
            im, _ = integrate.quad(antisym, 0.0, cutoff, weight="sin", wvar=t, **kw)
    return complex(re / math.pi, -im / math.pi)


def matsubara_tail_weight(spec: BathSpec) -> float:
    """Sum of d_k / omega_k over the Matsubara modes k > K that are dropped.

    Uses the closed form sum_{k>=1} d_k / omega_k
    = eta / (beta wc) - (eta / 2) cot(beta wc / 2).
    """
    bw = spec.beta * spec.omega_c
    total = spec.eta / bw - 0.5 * spec.eta / math.tan(0.5 * bw)
    kept = sum(m.d.real / m.omega for m in expand_correlation(spec)[1:])
    return total - kept
