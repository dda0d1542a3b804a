# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled HEOM right-hand side (same contract as ``_kernels_py``)."""
import numpy as np

from .hierarchy import RhsPlan


class KernelPlan(RhsPlan):
    """Same tables as RhsPlan, plus the per-mode couplings flattened for C."""

    def __init__(self, hierarchy, modes, static_damping=None):
        super().__init__(hierarchy, modes, static_damping)
        v = self.v
        # comm[k, a, b] = v_a - v_b ; low[k, a, b] = d v_a - d^* v_b
        self.comm = np.ascontiguousarray((v[:, :, None] - v[:, None, :]).astype(complex))
        self.low = np.ascontiguousarray(
            self.d[:, None, None] * v[:, :, None] - np.conj(self.d)[:, None, None] * v[:, None, :])


cdef void _rhs(const double complex* rho,
               const double complex* h,
               const double* gamma,
               const long* plus,
               const long* minus,
               const double* up,
               const double* down,
               const double complex* comm,
               const double complex* low,
               const double* damp,
               Py_ssize_t n_ados, Py_ssize_t dim, Py_ssize_t n_modes,
               double complex* out) noexcept nogil:
    cdef Py_ssize_t dd = dim * dim
    cdef Py_ssize_t i, k, a, b, c, src, e
    cdef double complex acc
    cdef double complex mi = -1j
    cdef double complex* o
    cdef const double complex* r
    cdef const double complex* s
    cdef const double complex* m
    cdef double coef

    for i in range(n_ados):
        o = out + i * dd
        r = rho + i * dd
        for a in range(dim):
            for b in range(dim):
                acc = 0
                for c in range(dim):
                    acc = acc + h[a * dim + c] * r[c * dim + b] - r[a * dim + c] * h[c * dim + b]
                o[a * dim + b] = mi * acc - (gamma[i] + damp[a * dim + b]) * r[a * dim + b]
        for k in range(n_modes):
            src = plus[i * n_modes + k]
            if src >= 0:
                coef = up[i * n_modes + k]
                s = rho + src * dd
                m = comm + k * dd
                for e in range(dd):
                    if m[e] != 0:
                        o[e] = o[e] + mi * coef * m[e] * s[e]
            src = minus[i * n_modes + k]
            if src >= 0:
                coef = down[i * n_modes + k]
                s = rho + src * dd
                m = low + k * dd
                for e in range(dd):
                    if m[e] != 0:
                        o[e] = o[e] + mi * coef * m[e] * s[e]


def heom_rhs(rho, h, plan, out):
    """Write the hierarchy time derivative of ``rho`` (n_ados, d, d) into ``out``."""
    cdef const double complex[:, :, ::1] rho_v = rho
    cdef const double complex[:, ::1] h_v = h
    cdef const double[::1] gamma_v = plan.gamma
    cdef const long[:, ::1] plus_v = plan.plus
    cdef const long[:, ::1] minus_v = plan.minus
    cdef const double[:, ::1] up_v = plan.up
    cdef const double[:, ::1] down_v = plan.down
    cdef const double complex[:, :, ::1] comm_v = plan.comm
    cdef const double complex[:, :, ::1] low_v = plan.low
    cdef const double[:, ::1] damp_v = plan.static_damping
    cdef double complex[:, :, ::1] out_v = out
    cdef Py_ssize_t n_ados = rho_v.shape[0], dim = rho_v.shape[1], n_modes = comm_v.shape[0]
    if out_v.shape[0] != n_ados or plus_v.shape[0] != n_ados or h_v.shape[0] != dim:
        raise ValueError("inconsistent array shapes")
    with nogil:
        _rhs(&rho_v[0, 0, 0], &h_v[0, 0], &gamma_v[0], &plus_v[0, 0], &minus_v[0, 0],
             &up_v[0, 0], &down_v[0, 0], &comm_v[0, 0, 0], &low_v[0, 0, 0], &damp_v[0, 0],
             n_ados, dim, n_modes, &out_v[0, 0, 0])
    return out
