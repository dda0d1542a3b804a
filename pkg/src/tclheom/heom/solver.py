"""HEOM right-hand side, RK4 propagation and bath equilibration."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ..bath import ExpMode, matsubara_tail_weight
from ..model import SystemModel
from . import kernels
from .hierarchy import DEFAULT_MAX_ADOS, Hierarchy, HierarchyState, ModeTable


class NumericalError(RuntimeError):
    """Non-finite values or failed convergence during propagation."""

    def __init__(self, message: str, step: int | None = None, residual: float | None = None):
        super().__init__(message)
        self.step = step
        self.residual = residual


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float
    t_max: float
    record_stride: int = 1

    def __post_init__(self) -> None:
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if not self.t_max >= self.dt:
            raise ValueError("t_max must be >= dt")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_max / self.dt))


RK4_STABILITY_LIMIT = 2.78  # |dt * lambda| bound of classical RK4 on the negative real axis


class HeomSolver:
    """Truncated hierarchy for a model, with a reusable RHS plan.

    Parameters
    ----------
    model : SystemModel
    depth : int
        Hierarchy truncation L; ADOs with total order above L are zero.
    modes : per-bath mode lists, optional
        Defaults to the Matsubara expansion of each bath.
    backend : str, optional
        Kernel backend name (see :mod:`tclheom.heom.kernels`).
    terminator : bool
        Treat the dropped Matsubara modes as white noise, adding
        -sum_b w_b [V_b, [V_b, rho_n]] to every ADO (w_b from
        :func:`tclheom.bath.matsubara_tail_weight`). Off by default.
    """

    def __init__(self, model: SystemModel, depth: int,
                 modes: Sequence[Sequence[ExpMode]] | None = None,
                 backend: str | None = None, max_ados: int = DEFAULT_MAX_ADOS,
                 terminator: bool = False):
        self.model = model
        self.depth = depth
        self.terminator = terminator
        self.modes = ModeTable.from_model(model, modes)
        self.hierarchy = Hierarchy.build(self.modes.n_modes, depth, max_ados)
        self.backend = kernels.get(backend)
        damping = None
        if terminator:
            if modes is not None:
                raise ValueError("the terminator is defined for the default Matsubara modes only")
            damping = np.zeros((model.dim, model.dim))
            for bath, v in zip(model.baths, model.couplings):
                damping += matsubara_tail_weight(bath) * (v[:, None] - v[None, :]) ** 2
        self.plan = self.backend.KernelPlan(self.hierarchy, self.modes, damping)

    @property
    def dim(self) -> int:
        return self.model.dim

    def max_stable_dt(self) -> float:
        """Largest step that keeps the fastest ADO decay inside the RK4 stability region."""
        fastest = float(self.plan.gamma.max())
        if self.plan.static_damping is not None:
            fastest += float(np.max(self.plan.static_damping))
        return RK4_STABILITY_LIMIT / fastest if fastest > 0 else math.inf

    def check_step(self, dt: float) -> None:
        limit = self.max_stable_dt()
        if dt > limit:
            raise NumericalError(
                f"dt={dt:g} exceeds the RK4 stability limit {limit:.4g} for depth {self.depth}; "
                "reduce dt or the hierarchy depth")

    def zeros(self) -> HierarchyState:
        return HierarchyState.zeros(self.hierarchy, self.dim)

    def factorized(self, rho0) -> HierarchyState:
        return HierarchyState.factorized(self.hierarchy, rho0)

    def rhs_array(self, rho: np.ndarray, h: np.ndarray | None = None,
                  out: np.ndarray | None = None) -> np.ndarray:
        if h is None:
            h = self.model.h_sys
        if out is None:
            out = np.empty_like(rho)
        return self.backend.heom_rhs(rho, np.ascontiguousarray(h, dtype=complex), self.plan, out)

    def rhs(self, state: HierarchyState, h: np.ndarray | None = None) -> HierarchyState:
        return HierarchyState(self.hierarchy, self.rhs_array(state.rho, h))

    def stepper(self, h: np.ndarray | None = None) -> Callable[[np.ndarray, float], np.ndarray]:
        """Return an in-place-friendly RK4 step ``y -> y(t + dt)``."""
        if h is None:
            h = self.model.h_sys
        h = np.ascontiguousarray(h, dtype=complex)
        return rk4_stepper(lambda y, out: self.rhs_array(y, h, out))

    def propagate(self, initial: HierarchyState, cfg: IntegratorConfig,
                  observer: Callable | None = None, h: np.ndarray | None = None,
                  full_state: bool = False) -> "Trajectory":
        """Fixed-step RK4 propagation of the whole hierarchy.

        ``observer(t, rdo, state_or_None)`` is called at every recorded time,
        including t = 0. The recorded RDOs are also returned.
        """
        self.check_step(cfg.dt)
        step = self.stepper(h)
        y = initial.rho.copy()
        times, rdos = [], []

        def record(n):
            t = n * cfg.dt
            times.append(t)
            rdos.append(y[0].copy())
            if observer is not None:
                observer(t, y[0], HierarchyState(self.hierarchy, y) if full_state else None)

        record(0)
        for n in range(1, cfg.n_steps + 1):
            y = step(y, cfg.dt)
            if n % cfg.record_stride == 0:
                if not np.isfinite(y).all():
                    raise NumericalError(
                        f"non-finite ADO values at step {n} (t={n * cfg.dt:g}); "
                        "reduce dt or raise the hierarchy depth", step=n)
                record(n)
        if not np.isfinite(y).all():
            raise NumericalError(f"non-finite ADO values at step {cfg.n_steps}", step=cfg.n_steps)
        return Trajectory(np.array(times), np.array(rdos), HierarchyState(self.hierarchy, y))

    def equilibrate(self, j: int, dt: float | None = None, t_max: float | None = None,
                    tol: float = 1e-9) -> HierarchyState:
        """Locally equilibrated state |j><j| (x) rho_j^B by real-time relaxation.

        The hierarchy is relaxed under the pinned Hamiltonian (interstate
        coupling removed) from |j><j| with an uncorrelated thermal bath until
        the max-norm of the RHS drops below ``tol``.
        """
        dim = self.dim
        if not 0 <= j < dim:
            raise ValueError(f"state {j} out of range for dim {dim}")
        proj = np.zeros((dim, dim), dtype=complex)
        proj[j, j] = 1.0
        y = self.factorized(proj).rho
        h = np.ascontiguousarray(self.model.h0, dtype=complex)
        if not np.any(self.modes.d):
            return HierarchyState(self.hierarchy, y)
        wc = float(self.modes.omega.max())
        wmin = float(self.modes.omega[np.abs(self.modes.d) > 0].min())
        if dt is None:
            # RK4 stability on the fastest ADO decay rate
            fastest = max(self.plan.gamma.max(), wc, 1e-300)
            dt = min(1.0 / fastest, 0.1 / wmin)
        if t_max is None:
            betas = [b.beta * b.omega_c for b in self.model.baths]
            t_max = 40.0 / wmin * max(1.0, max(betas))
        step = rk4_stepper(lambda yy, out: self.rhs_array(yy, h, out))
        buf = np.empty_like(y)
        check_every = max(1, int(round(0.5 / (wmin * dt))))
        n_steps = int(math.ceil(t_max / dt))
        residual = float("inf")
        for n in range(1, n_steps + 1):
            y = step(y, dt)
            if n % check_every == 0 or n == n_steps:
                residual = float(np.abs(self.rhs_array(y, h, buf)).max())
                if not np.isfinite(residual):
                    raise NumericalError("equilibration diverged", step=n)
                if residual < tol:
                    return HierarchyState(self.hierarchy, y)
        raise NumericalError(
            f"bath equilibration not stationary after t={t_max:g}: residual {residual:.3e} > {tol:.1e}",
            residual=residual)


@dataclass(eq=False)
class Trajectory:
    times: np.ndarray
    rdos: np.ndarray
    final: HierarchyState

    @property
    def populations(self) -> np.ndarray:
        return np.real(np.einsum("tii->ti", self.rdos))


def rk4_stepper(f):
    """Classical RK4 for a linear autonomous ``f(y, out)``."""
    k1 = k2 = k3 = k4 = tmp = None

    def step(y, dt):
        nonlocal k1, k2, k3, k4, tmp
        if k1 is None or k1.shape != y.shape:
            k1, k2, k3, k4, tmp = (np.empty_like(y) for _ in range(5))
        f(y, k1)
        np.multiply(k1, 0.5 * dt, out=tmp)
        tmp += y
        f(tmp, k2)
        np.multiply(k2, 0.5 * dt, out=tmp)
        tmp += y
        f(tmp, k3)
        np.multiply(k3, dt, out=tmp)
        tmp += y
        f(tmp, k4)
        k2 += k3
        k2 *= 2.0
        k1 += k2
        k1 += k4
        k1 *= dt / 6.0
        return y + k1

    return step


_SOLVER_CACHE: dict = {}


def _solver_for(model: SystemModel, depth: int, modes=None) -> HeomSolver:
    key = (id(model), depth, id(modes), kernels.active_backend())
    solver = _SOLVER_CACHE.get(key)
    if solver is None or solver.model is not model:
        solver = HeomSolver(model, depth, modes)
        _SOLVER_CACHE.clear()
        _SOLVER_CACHE[key] = solver
    return solver


def heom_rhs(state: HierarchyState, model: SystemModel, modes=None) -> HierarchyState:
    """Time derivative of every ADO of ``state`` under ``model``."""
    solver = _solver_for(model, state.hierarchy.depth, modes)
    if solver.hierarchy.n_ados != state.hierarchy.n_ados:
        raise ValueError("state is not enumerated consistently with the modes")
    return solver.rhs(state)


def propagate(initial: HierarchyState, model: SystemModel, modes, cfg: IntegratorConfig,
              observer: Callable | None = None, full_state: bool = False) -> Trajectory:
    solver = _solver_for(model, initial.hierarchy.depth, modes)
    return solver.propagate(initial, cfg, observer, full_state=full_state)


def equilibrate_bath(model: SystemModel, j: int, depth: int, modes=None,
                     tol: float = 1e-9, t_max: float | None = None) -> HierarchyState:
    return _solver_for(model, depth, modes).equilibrate(j, tol=tol, t_max=t_max)
