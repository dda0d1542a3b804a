"""Shared regimes, cached heavy computations and the acceptance summary."""
from __future__ import annotations

import contextlib
import functools
from pathlib import Path

import numpy as np
import pytest

from tclheom import tcl
from tclheom.bath import BathSpec
from tclheom.heom import HeomSolver, IntegratorConfig
from tclheom.model import SpinBosonParams, build_spin_boson

DATA = Path(__file__).parent / "data"

# Parameter sets (beta, omega_c, eta) of the studied spin-boson regimes, delta = 1, epsilon = 0.
CONVERGENT = (0.5, 5.0, 5.0)
DIVERGENT = (1.0, 1.0, 2.0)
SINGULAR = (1.0, 1.0, 1.0)

# Converged numerical settings (depth, matsubara, dt) and windows.
SETTINGS = {"depth": 12, "matsubara": 2, "dt": 0.005}
WINDOW = {CONVERGENT: 10.0, DIVERGENT: 10.0, SINGULAR: 5.0}
EXPANSION_ORDER = 12


def spin_boson(regime, delta=1.0, epsilon=0.0, matsubara=None):
    beta, wc, eta = regime
    k = SETTINGS["matsubara"] if matsubara is None else matsubara
    return build_spin_boson(SpinBosonParams(epsilon, delta, BathSpec(eta, wc, beta, k)))


@functools.lru_cache(maxsize=None)
def solver_for(regime, depth=None, matsubara=None, delta=1.0):
    return HeomSolver(spin_boson(regime, delta, matsubara=matsubara), depth or SETTINGS["depth"])


@functools.lru_cache(maxsize=None)
def equilibrated(regime, depth=None, matsubara=None):
    s = solver_for(regime, depth, matsubara)
    return tuple(s.equilibrate(k) for k in range(2))


@functools.lru_cache(maxsize=None)
def propagators(regime, dt=None, t_max=None):
    dt = dt or SETTINGS["dt"]
    s = solver_for(regime)
    return tcl.assemble_propagators(s.model, s.depth, IntegratorConfig(dt, t_max or WINDOW[regime]),
                                    solver=s, equilibrated=list(equilibrated(regime)))


@functools.lru_cache(maxsize=None)
def generator(regime):
    return tcl.exact_generator(propagators(regime))


@functools.lru_cache(maxsize=None)
def expansion(regime, n_max=EXPANSION_ORDER):
    s = solver_for(regime)
    cfg = IntegratorConfig(SETTINGS["dt"], WINDOW[regime])
    return tcl.generator_expansion(s.model, s.depth, n_max, cfg, solver=s,
                                   equilibrated=list(equilibrated(regime)))


@functools.lru_cache(maxsize=None)
def heom_p1(regime, depth, matsubara, dt, t_max):
    """P_1(t) from the site-1 equilibrated state on the common grid of spacing 0.01."""
    s = solver_for(regime, depth, matsubara)
    eq = equilibrated(regime, depth, matsubara)[0]
    stride = int(round(0.01 / dt))
    traj = s.propagate(eq, IntegratorConfig(dt, t_max, stride))
    return traj.populations[:, 0]


def stable_dt(regime, depth, matsubara, dt) -> float:
    """``dt`` halved until RK4 is stable for the given hierarchy."""
    limit = solver_for(regime, depth, matsubara).max_stable_dt()
    while dt > limit:
        dt /= 2
    return dt


def tcl_second_order_error(regime) -> float:
    exp = expansion(regime)[0]
    tt, pp = tcl.propagate_tcl(tcl.second_order_generator(exp), [1.0, 0.0])
    exact = propagators(regime).u[: 2 * len(tt) - 1: 2, 0, 0]
    return float(np.abs(pp[:, 0] - exact).max())


# --- acceptance bookkeeping -----------------------------------------------------

ACCEPTANCE: dict = {}


@contextlib.contextmanager
def criterion(number, title: str):
    """Record the outcome of an acceptance criterion for the terminal summary."""
    ACCEPTANCE[number] = (title, "FAIL", "did not complete")
    notes = []
    try:
        yield notes
    except AssertionError as exc:
        ACCEPTANCE[number] = (title, "FAIL", str(exc).splitlines()[0] if str(exc) else "assertion failed")
        raise
    except Exception as exc:
        ACCEPTANCE[number] = (title, "FAIL", f"{type(exc).__name__}: {exc}")
        raise
    else:
        ACCEPTANCE[number] = (title, "PASS", "; ".join(notes))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE, key=lambda x: (int(str(x).split()[0]), str(x))):
        title, status, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"[{status}] criterion {n}: {title} -- {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running numerical check")

