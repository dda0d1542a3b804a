"""Exact TCL generator of the population master equation and its expansion.

The population propagator U_S(t) (columns: populations at t starting from
|k><k| with a locally equilibrated bath) and its derivative give the exact
generator R(t) = U_S'(t) U_S(t)^-1 of dP/dt = R(t) P. Expanding U_S and
U_S' in the interstate coupling yields the order-by-order recursion

    R^(2n) = U'^(2n) - sum_{m=1}^{n-1} R^(2m) U^(2(n-m)).
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bath import BathSpec
from .extheom import TaylorSeries, populations, taylor_series_us, taylor_series_us_dot, udot_source
from .heom import HeomSolver, IntegratorConfig
from .model import SpinBosonParams, SystemModel, build_spin_boson

DEFAULT_COND_THRESHOLD = 1e8
DEFAULT_DET_THRESHOLD = 1e-10


class SingularGeneratorError(ValueError):
    """The TCL integration window meets a singular generator sample."""

    def __init__(self, t_singular: float):
        super().__init__(f"generator is singular at t={t_singular:.6g}")
        self.t_singular = t_singular


@dataclass(eq=False)
class PropagatorSeries:
    """U_S(t) and U_S'(t) on a uniform grid.

    ``rdos[i, k]`` is the reduced density matrix at ``times[i]`` for the run
    started in state k (kept for trajectory output).
    """

    times: np.ndarray
    u: np.ndarray
    u_dot: np.ndarray
    rdos: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.u.shape[-1]

    @property
    def spacing(self) -> float:
        return float(self.times[1] - self.times[0])


@dataclass(eq=False)
class GeneratorSeries:
    times: np.ndarray
    r: np.ndarray
    det_u: np.ndarray
    cond_u: np.ndarray
    singular_mask: np.ndarray

    @property
    def dim(self) -> int:
        return self.r.shape[-1]


@dataclass(eq=False)
class ExpansionSeries:
    """Even-order generator terms R^(N)(t) and their partial sums.

    ``partial_sums[i]`` is S^(orders[i]) = sum_{m <= orders[i]} delta^m R^(m).
    """

    times: np.ndarray
    orders: list
    r_terms: np.ndarray
    delta: float
    partial_sums: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.partial_sums = self.sums_for(self.delta)

    def sums_for(self, delta: float) -> np.ndarray:
        weighted = np.array([delta**n * term for n, term in zip(self.orders, self.r_terms)])
        return np.cumsum(weighted, axis=0)

    def term(self, order: int) -> np.ndarray:
        return self.r_terms[self.orders.index(order)]

    def partial_sum(self, order: int, delta: float | None = None) -> np.ndarray:
        sums = self.partial_sums if delta is None else self.sums_for(delta)
        return sums[self.orders.index(order)]

    def max_amplitudes(self, element: tuple | None = None) -> dict:
        """Max over the grid of |R^(N)| (one element, or all elements)."""
        if element is None:
            return {n: float(np.abs(t).max()) for n, t in zip(self.orders, self.r_terms)}
        a, b = element
        return {n: float(np.abs(t[:, a, b]).max()) for n, t in zip(self.orders, self.r_terms)}


def _map(fn, items, threads: int):
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def finite_difference(values: np.ndarray, h: float) -> np.ndarray:
    """Fourth-order time derivative along axis 0 (one-sided at the edges)."""
    f = np.asarray(values)
    n = f.shape[0]
    if n < 5:
        raise ValueError("need at least 5 samples for fourth-order differences")
    out = np.empty_like(f)
    out[2:-2] = (-f[4:] + 8 * f[3:-1] - 8 * f[1:-3] + f[:-4]) / (12 * h)
    out[0] = (-25 * f[0] + 48 * f[1] - 36 * f[2] + 16 * f[3] - 3 * f[4]) / (12 * h)
    out[1] = (-3 * f[0] - 10 * f[1] + 18 * f[2] - 6 * f[3] + f[4]) / (12 * h)
    out[-1] = (25 * f[-1] - 48 * f[-2] + 36 * f[-3] - 16 * f[-4] + 3 * f[-5]) / (12 * h)
    out[-2] = (3 * f[-1] + 10 * f[-2] - 18 * f[-3] + 6 * f[-4] - f[-5]) / (12 * h)
    return out


def assemble_propagators(model: SystemModel, depth: int, cfg: IntegratorConfig,
                         udot_method: str = "heom", solver: HeomSolver | None = None,
                         equilibrated=None, threads: int = 1,
                         terminator: bool = False) -> PropagatorSeries:
    """Build U_S(t) and U_S'(t) from one pair of HEOM runs per initial state.

    Column k of U_S holds the populations of the run started from
    |k><k| (x) rho_k^B. With ``udot_method="heom"`` column k of U_S' comes
    from propagating L|k rho_k^B>> (sigma_y for the spin-boson model);
    ``"fd"`` differentiates U_S on the grid instead.
    """
    if udot_method not in ("heom", "fd"):
        raise ValueError(f"unknown udot_method {udot_method!r}")
    if solver is None:
        solver = HeomSolver(model, depth, terminator=terminator)
    d = model.dim
    if equilibrated is None:
        equilibrated = _map(solver.equilibrate, list(range(d)), threads)

    def column(k):
        traj = solver.propagate(equilibrated[k], cfg)
        u_col = populations(traj.rdos)
        if udot_method == "fd":
            return traj, u_col, None
        op, readout = udot_source(model, k)
        dtraj = solver.propagate(equilibrated[k].with_system_operator(op, k), cfg)
        return traj, u_col, model.delta * readout(dtraj.rdos)

    results = _map(column, list(range(d)), threads)
    times = results[0][0].times
    u = np.stack([r[1] for r in results], axis=-1)
    rdos = np.stack([r[0].rdos for r in results], axis=1)
    if udot_method == "fd":
        u_dot = finite_difference(u, times[1] - times[0])
    else:
        u_dot = np.stack([r[2] for r in results], axis=-1)
    return PropagatorSeries(times, u, u_dot, rdos)


def exact_generator(series: PropagatorSeries, cond_threshold: float = DEFAULT_COND_THRESHOLD,
                    det_threshold: float = DEFAULT_DET_THRESHOLD) -> GeneratorSeries:
    """R = U_S' U_S^-1 per sample via an LU solve of U_S^T R^T = U_S'^T.

    Samples with cond(U_S) > ``cond_threshold`` or
    |det U_S| < ``det_threshold`` * ||U_S||^d are flagged and R is NaN there.
    """
    u, ud = series.u, series.u_dot
    d = u.shape[-1]
    cond = np.linalg.cond(u)
    det = np.linalg.det(u)
    norm = np.linalg.norm(u, ord=2, axis=(-2, -1))
    singular = ~np.isfinite(cond) | (cond > cond_threshold) | (np.abs(det) < det_threshold * norm**d)
    r = np.full_like(ud, np.nan)
    ok = ~singular
    if ok.any():
        ut = np.swapaxes(u[ok], -1, -2)
        r[ok] = np.swapaxes(np.linalg.solve(ut, np.swapaxes(ud[ok], -1, -2)), -1, -2)
    return GeneratorSeries(series.times.copy(), r, det, cond, singular)


def first_singular_index(gen: GeneratorSeries, last: int | None = None) -> int | None:
    """First flagged sample, or first sample after a det(U_S) sign change, up to ``last``."""
    last = len(gen.times) - 1 if last is None else last
    hits = np.flatnonzero(gen.singular_mask[: last + 1])
    det = gen.det_u[: last + 1]
    flips = np.flatnonzero(det[:-1] * det[1:] < 0) + 1
    cands = [int(x[0]) for x in (hits, flips) if len(x)]
    return min(cands) if cands else None


def propagate_tcl(gen: GeneratorSeries, p0, t_end: float | None = None,
                  stop_at_singularity: bool = False):
    """RK4 for dP/dt = R(t) P with step twice the generator grid spacing.

    Half-step generator values are grid samples, so R is never interpolated.
    A window that meets a flagged sample or a sign change of det(U_S) raises
    :class:`SingularGeneratorError`, or is cut short before it when
    ``stop_at_singularity`` is set. Returns ``(times, populations)``.
    """
    p = np.asarray(p0, dtype=float).copy()
    if p.shape != (gen.dim,):
        raise ValueError(f"p0 must have length {gen.dim}")
    if np.any(p < -1e-12) or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("p0 must be a probability vector")
    times = gen.times
    h = times[1] - times[0]
    last = len(times) - 1
    if t_end is not None:
        last = min(last, int(round(t_end / h)))
    last -= last % 2
    first = first_singular_index(gen, last)
    if first is not None:
        if not stop_at_singularity:
            raise SingularGeneratorError(float(times[first]))
        last = max(0, first - 1)
        last -= last % 2
    r = gen.r
    dt = 2.0 * h
    out_t = [times[0]]
    out_p = [p.copy()]
    for i in range(0, last, 2):
        k1 = r[i] @ p
        k2 = r[i + 1] @ (p + 0.5 * dt * k1)
        k3 = r[i + 1] @ (p + 0.5 * dt * k2)
        k4 = r[i + 2] @ (p + dt * k3)
        p = p + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        out_t.append(times[i + 2])
        out_p.append(p.copy())
    return np.array(out_t), np.array(out_p)


def expand_generator(us_orders: TaylorSeries, usdot_orders: TaylorSeries, n_max: int,
                     delta: float = 1.0) -> ExpansionSeries:
    """Even-order generator terms R^(2)..R^(n_max) by the recursion."""
    if n_max < 2 or n_max % 2:
        raise ValueError(f"n_max must be an even order >= 2, got {n_max}")
    if us_orders.n_max < n_max - 2 or usdot_orders.n_max < n_max:
        raise ValueError(
            f"need U up to order {n_max - 2} and U_dot up to order {n_max}; "
            f"have {us_orders.n_max} and {usdot_orders.n_max}")
    if len(us_orders.times) != len(usdot_orders.times) or not np.allclose(us_orders.times, usdot_orders.times):
        raise ValueError("U and U_dot series are on different grids")
    u, ud = us_orders.coeffs, usdot_orders.coeffs
    terms = {}
    for n in range(1, n_max // 2 + 1):
        acc = ud[2 * n].copy()
        for m in range(1, n):
            acc -= terms[2 * m] @ u[2 * (n - m)]
        terms[2 * n] = acc
    orders = sorted(terms)
    return ExpansionSeries(us_orders.times.copy(), orders, np.array([terms[n] for n in orders]), delta)


def second_order_generator(expansion: ExpansionSeries) -> GeneratorSeries:
    """Generator truncated at second order, delta^2 R^(2)."""
    r = expansion.delta**2 * expansion.term(2)
    n = len(expansion.times)
    return GeneratorSeries(expansion.times.copy(), r, np.full(n, np.nan), np.full(n, np.nan),
                           np.zeros(n, dtype=bool))


def generator_expansion(model: SystemModel, depth: int, n_max: int, cfg: IntegratorConfig,
                        solver: HeomSolver | None = None, equilibrated=None,
                        terminator: bool = False) -> tuple[ExpansionSeries, TaylorSeries, TaylorSeries]:
    """Run the extended HEOM for U and U' and apply the recursion up to ``n_max``."""
    if solver is None:
        solver = HeomSolver(model, depth, terminator=terminator)
    us = taylor_series_us(model, solver, n_max - 2, cfg, equilibrated)
    usd = taylor_series_us_dot(model, solver, n_max, cfg, equilibrated)
    return expand_generator(us, usd, n_max, model.delta), us, usd


@dataclass(frozen=True)
class Singularity:
    t_enter: float
    t_exit: float
    det_sign_change: bool
    t_zero: float | None = None


def detect_singularities(gen: GeneratorSeries) -> list[Singularity]:
    """Merge flagged runs and det(U_S) zero crossings into singular intervals."""
    t, det, mask = gen.times, gen.det_u, gen.singular_mask
    raw = []
    i, n = 0, len(t)
    while i < n:
        if mask[i]:
            j = i
            while j + 1 < n and mask[j + 1]:
                j += 1
            raw.append([i, j, False, None])
            i = j + 1
        else:
            i += 1
    for i in range(n - 1):
        if det[i] == 0.0 or det[i] * det[i + 1] < 0:
            if det[i] == 0.0:
                tz = float(t[i])
            else:
                tz = float(t[i] + (t[i + 1] - t[i]) * det[i] / (det[i] - det[i + 1]))
            raw.append([i, i + 1, True, tz])
    raw.sort(key=lambda x: (x[0], x[1]))
    merged = []
    for lo, hi, sign, tz in raw:
        if merged and lo <= merged[-1][1] + 1:
            m = merged[-1]
            m[1] = max(m[1], hi)
            m[2] = m[2] or sign
            if m[3] is None:
                m[3] = tz
        else:
            merged.append([lo, hi, sign, tz])
    return [Singularity(float(t[lo]), float(t[hi]), bool(sign), tz) for lo, hi, sign, tz in merged]


# --- critical interstate coupling -------------------------------------------------

@dataclass(frozen=True)
class ConvergenceCriterion:
    """|S11^(n)(t*) - S11^(ref)(t*)| <= threshold for every even n in [min_order, max_order]."""

    t_star: float = 2.5 * math.pi
    reference_order: int = 10
    min_order: int = 12
    max_order: int = 28
    threshold: float = 1e-3
    element: tuple = (0, 0)

    def orders(self) -> list:
        return list(range(self.min_order, self.max_order + 1, 2))

    def deviation(self, terms_at_t: dict, delta: float) -> float:
        # S^(n) - S^(ref) summed directly over the orders between them, so a
        # large low-order part cannot swamp the tail
        a, b = self.element
        tail, worst = 0.0, 0.0
        for n in range(self.reference_order + 2, self.max_order + 1, 2):
            tail += delta**n * terms_at_t[n][a, b]
            if n >= self.min_order:
                worst = max(worst, abs(tail))
        return worst

    def satisfied(self, terms_at_t: dict, delta: float) -> bool:
        return self.deviation(terms_at_t, delta) <= self.threshold


@dataclass(frozen=True)
class DeltaCResult:
    eta: float
    delta_c: float
    status: str  # "ok", "below_bracket", "above_bracket"
    bracket: tuple


def terms_at_time(model: SystemModel, depth: int, t_star: float, n_max: int, dt: float,
                  terminator: bool = False) -> dict:
    """Generator terms R^(N)(t*) for N = 2..n_max, from one extended-HEOM run."""
    n_steps = max(1, int(round(t_star / dt)))
    cfg = IntegratorConfig(t_star / n_steps, t_star, n_steps)
    exp, _, _ = generator_expansion(model, depth, n_max, cfg, terminator=terminator)
    return {n: exp.term(n)[-1] for n in exp.orders}


def locate_delta_c(terms_at_t: dict, criterion: ConvergenceCriterion, delta_min: float = 0.01,
                   delta_max: float = 20.0, resolution: float = 0.01) -> tuple[float, str, tuple]:
    """Largest delta satisfying the criterion, by bracket expansion and bisection."""
    ok = lambda x: criterion.satisfied(terms_at_t, x)  # noqa: E731
    if not ok(delta_min):
        return delta_min, "below_bracket", (0.0, delta_min)
    lo, hi = delta_min, 2.0 * delta_min
    while ok(hi):
        lo, hi = hi, 2.0 * hi
        if hi > delta_max:
            return delta_max, "above_bracket", (lo, delta_max)
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo, "ok", (lo, hi)


def critical_delta_sweep(eta_grid, beta: float = 0.5, omega_c: float = 5.0, epsilon: float = 0.0,
                         depth: int = 10, n_matsubara: int = 2, dt: float = 0.005,
                         criterion: ConvergenceCriterion | None = None, resolution: float = 0.01,
                         terminator: bool = False) -> list[DeltaCResult]:
    """Critical interstate coupling per system-bath coupling strength."""
    criterion = criterion or ConvergenceCriterion()
    out = []
    for eta in eta_grid:
        model = build_spin_boson(SpinBosonParams(epsilon, 1.0, BathSpec(eta, omega_c, beta, n_matsubara)))
        terms = terms_at_time(model, depth, criterion.t_star, criterion.max_order, dt, terminator)
        dc, status, bracket = locate_delta_c(terms, criterion, resolution=resolution)
        out.append(DeltaCResult(float(eta), float(dc), status, bracket))
    return out
