"""Extended HEOM: Taylor coefficients of hierarchy dynamics in the interstate coupling.

With H_S = h0 + delta * P, the hierarchy generator is A + delta * B where
B a_n = -i [P, a_n]. Writing every ADO as sum_N delta**N s_n^(N), the
coefficients obey the lower-triangular ladder

    ds^(N)/dt = A0 s^(N) - i [P, s^(N-1)],

A0 being the hierarchy generator with H_S -> h0. The factorial-scaled
coefficients s^(N) = rho^(N) / N! are propagated so no N! ever appears.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .heom import HeomSolver, HierarchyState, IntegratorConfig, NumericalError, rk4_stepper
from .model import SIGMA_Y, SIGMA_Z, SystemModel


@dataclass(eq=False)
class OrderLadder:
    """Scaled Taylor coefficients s^(0..n_max) of a hierarchy state."""

    states: np.ndarray  # (n_max + 1, n_ados, d, d)

    @property
    def n_max(self) -> int:
        return self.states.shape[0] - 1

    @classmethod
    def from_state(cls, state: HierarchyState, n_max: int) -> "OrderLadder":
        ladder = np.zeros((n_max + 1,) + state.rho.shape, dtype=complex)
        ladder[0] = state.rho
        return cls(ladder)

    def order(self, n: int, hierarchy) -> HierarchyState:
        return HierarchyState(hierarchy, self.states[n])


class ExtendedHeom:
    """Ladder propagator built on a :class:`HeomSolver` of the same model."""

    def __init__(self, solver: HeomSolver):
        self.solver = solver
        model = solver.model
        self.h0 = np.ascontiguousarray(model.h0, dtype=complex)
        self.pert = np.ascontiguousarray(model.perturbation, dtype=complex)

    def rhs_array(self, ladder: np.ndarray, out: np.ndarray, zero_orders: int = 0) -> np.ndarray:
        """Ladder derivative; orders below ``zero_orders`` are known to vanish."""
        solver = self.solver
        for n in range(ladder.shape[0]):
            if n < zero_orders:
                out[n] = 0.0
                continue
            solver.rhs_array(ladder[n], self.h0, out[n])
            if n > 0:
                lower = ladder[n - 1]
                out[n] -= 1j * (self.pert @ lower - lower @ self.pert)
        return out

    def rhs(self, ladder: OrderLadder) -> OrderLadder:
        return OrderLadder(self.rhs_array(ladder.states, np.empty_like(ladder.states)))

    def propagate(self, initial: OrderLadder, cfg: IntegratorConfig, observer=None):
        """RK4 over the whole ladder; ``observer(t, zero_index_payloads)`` per record.

        Returns (times, payloads) with payloads of shape (T, n_max + 1, d, d).
        """
        self.solver.check_step(cfg.dt)
        y = initial.states.copy()
        step = rk4_stepper(lambda yy, out: self.rhs_array(yy, out))
        times, recs = [0.0], [y[:, 0].copy()]
        if observer is not None:
            observer(0.0, y[:, 0])
        for n in range(1, cfg.n_steps + 1):
            y = step(y, cfg.dt)
            if n % cfg.record_stride == 0:
                if not np.isfinite(y).all():
                    raise NumericalError(f"non-finite ladder values at step {n}", step=n)
                t = n * cfg.dt
                times.append(t)
                recs.append(y[:, 0].copy())
                if observer is not None:
                    observer(t, y[:, 0])
        return np.array(times), np.array(recs)


def ext_rhs(ladder: OrderLadder, solver: HeomSolver) -> OrderLadder:
    return ExtendedHeom(solver).rhs(ladder)


def populations(rdo: np.ndarray) -> np.ndarray:
    return np.real(np.diagonal(rdo, axis1=-2, axis2=-1))


def udot_source(model: SystemModel, k: int):
    """Initial system operator and readout for the U_dot column of state k.

    U_dot_jk(t) = -i <<j| e^{-iLt} L |k rho_k^B>> and L|k rho_k^B>> equals
    [H_S - h0, |k><k|] (x) rho_k^B. For the spin-boson model the operator is
    propagated as sigma_y and read out with the (-1)^(j+k+1) delta
    [sigma_z sigma_y(t)]_jj rule; otherwise X_k = [P, |k><k|] is propagated
    directly and read out as -i delta [X_k(t)]_jj.

    Returns ``(op, readout)``; ``readout`` maps payloads (..., d, d) to
    columns (..., d) and excludes the factor delta so it also serves the
    ladder.
    """
    d = model.dim
    if model.name == "spin-boson":
        # (-1)^(j+k+1) with 1-based j, k equals (-1)^(j+k+1) with 0-based j, k
        signs = np.array([(-1.0) ** (j + k + 1) for j in range(d)])

        def readout(rdo):
            return np.real(signs * np.diagonal(SIGMA_Z @ rdo, axis1=-2, axis2=-1))

        return SIGMA_Y.copy(), readout
    proj = np.zeros((d, d), dtype=complex)
    proj[k, k] = 1.0
    op = model.perturbation @ proj - proj @ model.perturbation

    def readout(rdo):
        return np.real(-1j * np.diagonal(rdo, axis1=-2, axis2=-1))

    return op, readout


@dataclass(eq=False)
class TaylorSeries:
    """Per-order coefficient matrices on a time grid.

    ``coeffs[N]`` has shape (T, d, d); column k comes from initial state k.
    """

    times: np.ndarray
    coeffs: np.ndarray  # (n_max + 1, T, d, d)

    @property
    def n_max(self) -> int:
        return self.coeffs.shape[0] - 1

    def resum(self, delta: float, n_max: int | None = None) -> np.ndarray:
        n_max = self.n_max if n_max is None else n_max
        powers = delta ** np.arange(n_max + 1)
        return np.tensordot(powers, self.coeffs[: n_max + 1], axes=1)


def swap_symmetric(model: SystemModel) -> bool:
    """True for a two-state model invariant under exchanging the states.

    Exchange maps h0 and P onto themselves and flips the sign of every
    coupling vector; a Gaussian bath is blind to that sign, so column 1 of
    any population propagator is column 0 with both indices swapped.
    """
    if model.dim != 2:
        return False
    x = np.array([[0, 1], [1, 0]])
    return (np.allclose(x @ model.h0 @ x, model.h0, atol=0.0)
            and np.allclose(x @ model.perturbation @ x, model.perturbation, atol=0.0)
            and np.allclose(model.couplings[:, ::-1], -model.couplings, atol=0.0))


def _ladder_columns(model, solver, equilibrated, n_max, cfg, kind, use_symmetry=True):
    ext = ExtendedHeom(solver)
    d = model.dim
    mirror = use_symmetry and swap_symmetric(model)
    cols = []
    times = None
    for k in range(d):
        if mirror and k == 1:
            cols.append(cols[0][..., ::-1])
            continue
        eq = equilibrated[k] if equilibrated is not None else solver.equilibrate(k)
        if kind == "u":
            init = eq
            readout = populations
        else:
            op, readout = udot_source(model, k)
            init = eq.with_system_operator(op, k)
        times, recs = ext.propagate(OrderLadder.from_state(init, n_max), cfg)
        cols.append(np.moveaxis(readout(recs), 1, 0))
    return times, np.stack(cols, axis=-1)


def taylor_series_us(model: SystemModel, solver: HeomSolver, n_max: int, cfg: IntegratorConfig,
                     equilibrated=None, use_symmetry: bool = True) -> TaylorSeries:
    """Coefficients U^(N)(t) of U_S(t) = sum_N delta^N U^(N)(t) (U^(0) = I).

    ``equilibrated`` holds one equilibrated hierarchy per state (computed on
    demand when omitted). Exchange-symmetric two-state models propagate one
    column only unless ``use_symmetry`` is False.
    """
    times, coeffs = _ladder_columns(model, solver, equilibrated, n_max, cfg, "u", use_symmetry)
    return TaylorSeries(times, coeffs)


def taylor_series_us_dot(model: SystemModel, solver: HeomSolver, n_max: int, cfg: IntegratorConfig,
                         equilibrated=None, use_symmetry: bool = True) -> TaylorSeries:
    """Coefficients Udot^(N)(t); one power of delta shifts the ladder order by one."""
    if n_max < 1:
        raise ValueError("n_max must be >= 1 for U_dot")
    times, raw = _ladder_columns(model, solver, equilibrated, n_max - 1, cfg, "udot", use_symmetry)
    coeffs = np.zeros((n_max + 1,) + raw.shape[1:])
    coeffs[1:] = raw
    return TaylorSeries(times, coeffs)
