"""Pure NumPy HEOM right-hand side; fallback for the compiled kernel."""
from __future__ import annotations

import numpy as np

from .hierarchy import RhsPlan


class KernelPlan(RhsPlan):
    """RhsPlan plus per-mode gather tables for vectorized updates."""

    def __init__(self, hierarchy, modes, static_damping=None):
        super().__init__(hierarchy, modes, static_damping)
        self.has_damping = bool(np.any(self.static_damping))
        self.up_terms = []
        self.down_terms = []
        for k in range(modes.n_modes):
            v = self.v[k]
            comm = (v[:, None] - v[None, :]).astype(complex)
            low = self.d[k] * v[:, None] - np.conj(self.d[k]) * v[None, :]
            tgt = np.nonzero(self.plus[:, k] >= 0)[0]
            if tgt.size and np.any(comm):
                coef = -1j * self.up[tgt, k][:, None, None] * comm[None]
                self.up_terms.append((tgt, self.plus[tgt, k], coef))
            tgt = np.nonzero(self.minus[:, k] >= 0)[0]
            if tgt.size and np.any(low):
                coef = -1j * self.down[tgt, k][:, None, None] * low[None]
                self.down_terms.append((tgt, self.minus[tgt, k], coef))


def heom_rhs(rho: np.ndarray, h: np.ndarray, plan: KernelPlan, out: np.ndarray) -> np.ndarray:
    """Write the hierarchy time derivative of ``rho`` (n_ados, d, d) into ``out``."""
    np.matmul(h, rho, out=out)
    out -= rho @ h
    out *= -1j
    out -= plan.gamma[:, None, None] * rho
    if plan.has_damping:
        out -= plan.static_damping * rho
    for tgt, src, coef in plan.up_terms:
        out[tgt] += coef * rho[src]
    for tgt, src, coef in plan.down_terms:
        out[tgt] += coef * rho[src]
    return out
