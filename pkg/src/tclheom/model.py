"""System models: the spin-boson dimer and N-site exciton models.

Every system-bath coupling operator used here is diagonal in the site basis
(sigma_z for the spin-boson model, |m><m| for site m of an exciton model),
so a coupling operator is stored as its diagonal vector.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .bath import BathError, BathSpec

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)

# 2 pi c in rad ps^-1 per cm^-1
CM1_TO_RAD_PS = 2.0 * math.pi * 2.99792458e10 * 1e-12

UNITS = ("natural", "cm-1")


class ModelConfigError(ValueError):
    """Invalid model configuration."""


@dataclass(frozen=True)
class SpinBosonParams:
    epsilon: float
    delta: float
    bath: BathSpec

    def __post_init__(self) -> None:
        if self.delta < 0:
            raise ValueError("delta must be >= 0 (sign is a basis convention)")


@dataclass(frozen=True, eq=False)
class SystemModel:
    """A d-state system coupled to independent Debye baths.

    Attributes
    ----------
    h_sys : ndarray (d, d)
        Full system Hamiltonian.
    couplings : ndarray (n_baths, d)
        Diagonal of the coupling operator of each bath.
    baths : tuple of BathSpec
    h0 : ndarray (d, d)
        Unperturbed part used by the expansion in the interstate coupling;
        the diagonal of ``h_sys`` by construction.
    perturbation : ndarray (d, d)
        Interstate coupling operator scaled to unit strength, so that
        ``h_sys = h0 + delta * perturbation``.
    delta : float
        Strength of the interstate coupling.
    """

    h_sys: np.ndarray
    couplings: np.ndarray
    baths: tuple
    h0: np.ndarray
    perturbation: np.ndarray
    delta: float
    name: str = "model"
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.h_sys.shape[0]

    def with_delta(self, delta: float) -> "SystemModel":
        """Same model with the interstate coupling rescaled to ``delta``."""
        return SystemModel(
            h_sys=self.h0 + delta * self.perturbation,
            couplings=self.couplings,
            baths=self.baths,
            h0=self.h0,
            perturbation=self.perturbation,
            delta=delta,
            name=self.name,
            meta=self.meta,
        )

    def pinned(self) -> "SystemModel":
        """Model with the interstate coupling removed (H_S -> h0)."""
        return self.with_delta(0.0)

    def with_baths(self, baths) -> "SystemModel":
        return SystemModel(self.h_sys, self.couplings, tuple(baths), self.h0,
                           self.perturbation, self.delta, self.name, self.meta)


def build_spin_boson(params: SpinBosonParams) -> SystemModel:
    """H_S = epsilon sigma_z + delta sigma_x, one bath coupled through sigma_z."""
    h0 = params.epsilon * SIGMA_Z
    return SystemModel(
        h_sys=h0 + params.delta * SIGMA_X,
        couplings=np.array([[1.0, -1.0]]),
        baths=(params.bath,),
        h0=h0,
        perturbation=SIGMA_X.copy(),
        delta=params.delta,
        name="spin-boson",
        meta={"epsilon": params.epsilon, "delta": params.delta},
    )


def exciton_model(h_matrix, baths) -> SystemModel:
    """N-site exciton model; site m couples to bath m through |m><m|."""
    h = np.asarray(h_matrix, dtype=float)
    n = h.shape[0]
    if h.ndim != 2 or h.shape != (n, n):
        raise ModelConfigError(f"h_matrix must be square, got shape {h.shape}")
    if n < 2:
        raise ModelConfigError("exciton model needs at least 2 sites")
    if not np.allclose(h, h.T, atol=1e-12, rtol=0):
        raise ModelConfigError("h_matrix is not symmetric")
    baths = tuple(baths)
    if len(baths) != n:
        raise ModelConfigError(f"expected {n} baths, got {len(baths)}")
    h0 = np.diag(np.diag(h)).astype(complex)
    off = h.astype(complex) - h0
    return SystemModel(
        h_sys=h.astype(complex),
        couplings=np.eye(n),
        baths=baths,
        h0=h0,
        perturbation=off,
        delta=1.0,
        name="exciton",
    )


def load_exciton_model(config_text: str) -> SystemModel:
    """Parse a JSON exciton-model config into a model in hbar = 1 units.

    Fields: ``dim``, ``h_matrix`` (row-major, nested or flat), ``baths``
    (one entry per site with ``eta`` or ``lambda``, ``omega_c``, ``beta``,
    optional ``n_matsubara``), ``units`` ("natural" or "cm-1").

    With ``units = "cm-1"`` every energy (h_matrix, eta/lambda, omega_c) is
    converted to rad/ps and beta (given in cm) to ps, so time is in ps.
    """
    try:
        cfg = json.loads(config_text)
    except json.JSONDecodeError as exc:
        raise ModelConfigError(f"model config is not valid JSON: {exc}") from exc
    return exciton_model_from_dict(cfg)


def exciton_model_from_dict(cfg: dict) -> SystemModel:
    for key in ("dim", "h_matrix", "baths"):
        if key not in cfg:
            raise ModelConfigError(f"model config is missing field '{key}'")
    units = cfg.get("units", "natural")
    if units not in UNITS:
        raise ModelConfigError(f"unknown unit tag {units!r}; expected one of {UNITS}")
    scale = CM1_TO_RAD_PS if units == "cm-1" else 1.0

    n = int(cfg["dim"])
    h = np.asarray(cfg["h_matrix"], dtype=float)
    if h.size != n * n:
        raise ModelConfigError(f"h_matrix has {h.size} entries, expected {n * n}")
    h = h.reshape(n, n) * scale

    raw_baths = cfg["baths"]
    if isinstance(raw_baths, dict):
        raw_baths = [raw_baths] * n
    baths = []
    for i, b in enumerate(raw_baths):
        if "eta" in b:
            eta = float(b["eta"])
        elif "lambda" in b:
            eta = 2.0 * float(b["lambda"])
        else:
            raise ModelConfigError(f"bath {i} needs 'eta' or 'lambda'")
        for key in ("omega_c", "beta"):
            if key not in b:
                raise ModelConfigError(f"bath {i} is missing field '{key}'")
        try:
            baths.append(BathSpec(
                eta=eta * scale,
                omega_c=float(b["omega_c"]) * scale,
                beta=float(b["beta"]) / scale,
                n_matsubara=int(b.get("n_matsubara", 0)),
            ))
        except BathError as exc:
            raise ModelConfigError(f"bath {i}: {exc}") from exc
    model = exciton_model(h, baths)
    meta = {"units": units, "time_unit": "ps" if units == "cm-1" else "natural"}
    return SystemModel(model.h_sys, model.couplings, model.baths, model.h0,
                       model.perturbation, model.delta, "exciton", meta)


def liouvillian_apply(h: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Commutator [H, rho]; ``rho`` may carry leading batch axes."""
    h = np.asarray(h)
    rho = np.asarray(rho)
    if h.shape[-1] != rho.shape[-1] or rho.shape[-1] != rho.shape[-2]:
        raise ValueError(f"shape mismatch: {h.shape} vs {rho.shape}")
    return h @ rho - rho @ h
