"""ADO multi-index enumeration and neighbor tables."""
from __future__ import annotations

from dataclasses import dataclass, field
from math import comb
from typing import Sequence

import numpy as np
from scipy.special import gammaln

from ..bath import ExpMode, expand_correlation
from ..model import SystemModel

DEFAULT_MAX_ADOS = 2_000_000


class HierarchyTooLarge(MemoryError):
    """The requested hierarchy exceeds the configured budget."""

    def __init__(self, count: int, budget: int):
        super().__init__(f"hierarchy has {count} ADOs, budget is {budget}")
        self.count = count
        self.budget = budget


def hierarchy_size(n_modes: int, depth: int) -> int:
    return comb(n_modes + depth, depth)


def _compositions(total: int, parts: int):
    """All tuples of ``parts`` non-negative ints summing to ``total``, lex descending."""
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def enumerate_indices(n_modes: int, depth: int, max_ados: int = DEFAULT_MAX_ADOS) -> np.ndarray:
    """Multi-indices of total order <= depth in graded lexicographic order.

    Returns an int array of shape (count, n_modes); row 0 is the zero index.
    """
    if n_modes < 1:
        raise ValueError("need at least one mode")
    if depth < 0:
        raise ValueError("depth must be >= 0")
    count = hierarchy_size(n_modes, depth)
    if count > max_ados:
        raise HierarchyTooLarge(count, max_ados)
    rows = [c for level in range(depth + 1) for c in _compositions(level, n_modes)]
    return np.array(rows, dtype=np.int64).reshape(count, n_modes)


@dataclass(frozen=True, eq=False)
class Hierarchy:
    """Static structure of a truncated hierarchy.

    ``plus[i, k]`` / ``minus[i, k]`` hold the row of index i with n_k raised /
    lowered by one, or -1 when that index lies outside the hierarchy.
    """

    indices: np.ndarray
    depth: int
    plus: np.ndarray
    minus: np.ndarray
    _lookup: dict = field(repr=False, default_factory=dict)

    @classmethod
    def build(cls, n_modes: int, depth: int, max_ados: int = DEFAULT_MAX_ADOS) -> "Hierarchy":
        idx = enumerate_indices(n_modes, depth, max_ados)
        lookup = {tuple(row): i for i, row in enumerate(idx.tolist())}
        count = idx.shape[0]
        plus = np.full((count, n_modes), -1, dtype=np.int64)
        minus = np.full((count, n_modes), -1, dtype=np.int64)
        for i, row in enumerate(idx.tolist()):
            for k in range(n_modes):
                if row[k] > 0:
                    lower = list(row)
                    lower[k] -= 1
                    j = lookup[tuple(lower)]
                    minus[i, k] = j
                    plus[j, k] = i
        return cls(idx, depth, plus, minus, lookup)

    @property
    def n_ados(self) -> int:
        return self.indices.shape[0]

    @property
    def n_modes(self) -> int:
        return self.indices.shape[1]

    def position(self, n: Sequence[int]) -> int:
        try:
            return self._lookup[tuple(int(x) for x in n)]
        except KeyError:
            raise KeyError(f"index {tuple(n)} is not in the hierarchy") from None

    def index_of(self, position: int) -> tuple:
        return tuple(int(x) for x in self.indices[position])


@dataclass(frozen=True, eq=False)
class ModeTable:
    """Exponential modes of all baths, flattened in bath order.

    Attributes
    ----------
    d, omega : ndarray (M,)
        Amplitude and decay rate of each mode.
    bath_of : ndarray (M,)
        Bath owning each mode.
    v : ndarray (M, dim)
        Diagonal of the coupling operator seen by each mode.
    """

    d: np.ndarray
    omega: np.ndarray
    bath_of: np.ndarray
    v: np.ndarray

    @property
    def n_modes(self) -> int:
        return self.d.shape[0]

    @classmethod
    def from_model(cls, model: SystemModel, modes: Sequence[Sequence[ExpMode]] | None = None) -> "ModeTable":
        if modes is None:
            modes = [expand_correlation(b) for b in model.baths]
        if len(modes) != len(model.baths):
            raise ValueError("need one mode list per bath")
        d, om, owner, v = [], [], [], []
        for b, mlist in enumerate(modes):
            for m in mlist:
                d.append(m.d)
                om.append(m.omega)
                owner.append(b)
                v.append(model.couplings[b])
        return cls(np.array(d, dtype=complex), np.array(om, dtype=float),
                   np.array(owner, dtype=np.int64), np.array(v, dtype=float))


class RhsPlan:
    """Coefficient tables of the rescaled hierarchy for one mode table.

    ADOs are stored rescaled, rho_n = s_n * a_n with
    s_n = prod_k sqrt(n_k!) |d_k|**(n_k / 2) (modes with d_k = 0 unscaled).
    The equation of motion for a_n reads

        da_n/dt = -(i L + sum_k n_k w_k) a_n
                  - i sum_k up[n, k] [V_k, a_{n+k}]
                  - i sum_k down[n, k] (d_k V_k a_{n-k} - d_k^* a_{n-k} V_k)

    with up = sqrt((n_k + 1) |d_k|) and down = sqrt(n_k / |d_k|); for
    |d_k| = 0 they reduce to 1 and n_k, i.e. the unscaled equation.
    The rescaling is a diagonal similarity transform: the zero-index payload
    and all dynamics are unchanged, only ADO magnitudes stay O(1).
    """

    def __init__(self, hierarchy: "Hierarchy", modes: ModeTable, static_damping=None):
        idx = hierarchy.indices.astype(float)
        absd = np.abs(modes.d)
        scaled = absd > 0
        safe = np.where(scaled, absd, 1.0)
        self.plus = hierarchy.plus
        self.minus = hierarchy.minus
        self.v = np.ascontiguousarray(modes.v, dtype=float)
        self.d = np.ascontiguousarray(modes.d, dtype=complex)
        self.gamma = np.ascontiguousarray((idx * modes.omega[None, :]).sum(axis=1))
        self.up = np.where(scaled[None, :], np.sqrt((idx + 1.0) * safe[None, :]), 1.0)
        self.down = np.where(scaled[None, :], np.sqrt(idx / safe[None, :]), idx)
        self.up = np.ascontiguousarray(np.where(self.plus >= 0, self.up, 0.0))
        self.down = np.ascontiguousarray(np.where(self.minus >= 0, self.down, 0.0))
        dim = modes.v.shape[1]
        if static_damping is None:
            static_damping = np.zeros((dim, dim))
        # element-wise damping applied to every ADO (Markovian tail terminator)
        self.static_damping = np.ascontiguousarray(static_damping, dtype=float)
        self.scale_log = (0.5 * idx * np.log(safe)[None, :]).sum(axis=1) + 0.5 * np.sum(
            np.where(scaled[None, :], gammaln(idx + 1.0), 0.0), axis=1)

    def unscale(self, rho: np.ndarray) -> np.ndarray:
        """Physical (unscaled) ADOs from rescaled payloads."""
        return rho * np.exp(self.scale_log)[:, None, None]


@dataclass(eq=False)
class HierarchyState:
    """ADO payloads ``rho[i]`` for every enumerated index of ``hierarchy``."""

    hierarchy: Hierarchy
    rho: np.ndarray

    @property
    def rdo(self) -> np.ndarray:
        return self.rho[0]

    @classmethod
    def zeros(cls, hierarchy: Hierarchy, dim: int) -> "HierarchyState":
        return cls(hierarchy, np.zeros((hierarchy.n_ados, dim, dim), dtype=complex))

    @classmethod
    def factorized(cls, hierarchy: Hierarchy, rho0: np.ndarray) -> "HierarchyState":
        """System state rho0 with the bath in its uncorrelated thermal state."""
        rho0 = np.asarray(rho0, dtype=complex)
        st = cls.zeros(hierarchy, rho0.shape[0])
        st.rho[0] = rho0
        return st

    def copy(self) -> "HierarchyState":
        return HierarchyState(self.hierarchy, self.rho.copy())

    def with_system_operator(self, op: np.ndarray, j: int) -> "HierarchyState":
        """Replace |j><j| by ``op`` in a state of the form |j><j| (x) bath.

        The bath encoding of every ADO is its (j, j) element; the result is
        ``op (x) bath`` with the same bath encoding.
        """
        scalars = self.rho[:, j, j]
        return HierarchyState(self.hierarchy, scalars[:, None, None] * np.asarray(op, dtype=complex)[None])
