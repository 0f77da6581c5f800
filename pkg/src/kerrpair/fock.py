"""Truncated multi-mode Fock spaces with dense operators.

A :class:`FockBasis` enumerates occupation tuples ``(n_1, ..., n_M)`` with
``n_i < dims[i]`` and, optionally, ``sum(n) <= cap``.  States excluded by the
cap are dropped from the basis rather than zero padded, so every operator is
built directly in the restricted space.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

__all__ = [
    "FockBasis",
    "QOperator",
    "DensityMatrix",
    "annihilation",
    "creation",
    "number",
    "identity",
    "tensor_embed",
    "projector",
    "ket",
    "partial_trace",
]


@dataclass(frozen=True, eq=False)
class FockBasis:
    mode_dims: tuple[int, ...]
    cap: int | None = None
    states: np.ndarray = field(init=False, repr=False)
    _lookup: np.ndarray = field(init=False, repr=False)
    _radix: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.mode_dims)
        if not dims or any(d < 1 for d in dims):
            raise ConfigurationError(f"invalid mode dimensions {self.mode_dims!r}")
        if self.cap is not None and self.cap < 0:
            raise ConfigurationError("excitation cap must be non-negative")
        object.__setattr__(self, "mode_dims", dims)

        states = np.array(list(itertools.product(*(range(d) for d in dims))), dtype=np.int64)
        if self.cap is not None:
            states = states[states.sum(axis=1) <= self.cap]
        states.setflags(write=False)
        # mixed-radix code of a multi-index -> position in the full product space
        radix = np.ones(len(dims), dtype=np.int64)
        for i in range(len(dims) - 2, -1, -1):
            radix[i] = radix[i + 1] * dims[i + 1]
        lookup = np.full(int(np.prod(dims)), -1, dtype=np.int64)
        lookup[states @ radix] = np.arange(len(states))
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "_lookup", lookup)
        object.__setattr__(self, "_radix", radix)

    @property
    def n_modes(self) -> int:
        return len(self.mode_dims)

    @property
    def size(self) -> int:
        return len(self.states)

    def __len__(self):
        return self.size

    def __eq__(self, other):
        return isinstance(other, FockBasis) and (self.mode_dims, self.cap) == (other.mode_dims, other.cap)

    def __hash__(self):
        return hash((self.mode_dims, self.cap))

    def index(self, occupation) -> int:
        occ = np.asarray(occupation, dtype=np.int64)
        if occ.shape != (self.n_modes,) or np.any(occ < 0) or np.any(occ >= self.mode_dims):
            raise KeyError(tuple(occupation))
        i = int(self._lookup[occ @ self._radix])
        if i < 0:
            raise KeyError(tuple(occupation))
        return i

    def occupation(self, index: int) -> tuple[int, ...]:
        return tuple(int(n) for n in self.states[index])

    def indices_of(self, occupations: np.ndarray) -> np.ndarray:
        """Vectorised lookup; returns -1 for tuples outside the basis."""
        occ = np.asarray(occupations, dtype=np.int64)
        inside = np.all((occ >= 0) & (occ < np.array(self.mode_dims)), axis=-1)
        out = np.full(occ.shape[:-1], -1, dtype=np.int64)
        out[inside] = self._lookup[occ[inside] @ self._radix]
        return out

    def check_mode(self, mode: int) -> int:
        if not isinstance(mode, (int, np.integer)) or not 0 <= mode < self.n_modes:
            raise ConfigurationError(f"mode index {mode!r} out of range for {self.n_modes} modes")
        return int(mode)


class QOperator:
    """Dense operator on a :class:`FockBasis`."""

    __slots__ = ("basis", "data")

    def __init__(self, basis: FockBasis, data):
        data = np.asarray(data, dtype=complex)
        if data.shape != (basis.size, basis.size):
            raise ConfigurationError(f"operator shape {data.shape} does not match basis size {basis.size}")
        self.basis = basis
        self.data = data

    def _wrap(self, data):
        return type(self)(self.basis, data)

    def _other(self, other):
        if isinstance(other, QOperator):
            if other.basis != self.basis:
                raise ConfigurationError("operators live on different bases")
            return other.data
        return other

    def dag(self):
        return self._wrap(self.data.conj().T)

    def __add__(self, other):
        return self._wrap(self.data + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self._wrap(self.data - self._other(other))

    def __neg__(self):
        return self._wrap(-self.data)

    def __mul__(self, scalar):
        return self._wrap(self.data * scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self._wrap(self.data / scalar)

    def __matmul__(self, other):
        if isinstance(other, QOperator):
            return QOperator(self.basis, self.data @ self._other(other))
        return self.data @ other

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        return bool(np.max(np.abs(self.data - self.data.conj().T), initial=0.0) < tol)

    def expect(self, rho) -> complex:
        r = rho.data if isinstance(rho, QOperator) else rho
        return complex(np.trace(self.data @ r))

    def __repr__(self):
        return f"{type(self).__name__}(dims={self.basis.mode_dims}, cap={self.basis.cap})"


class DensityMatrix(QOperator):
    __slots__ = ()

    def trace(self) -> complex:
        return complex(np.trace(self.data))

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.data - self.data.conj().T), initial=0.0))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(0.5 * (self.data + self.data.conj().T))[0])

    def element(self, left, right) -> complex:
        return complex(self.data[self.basis.index(left), self.basis.index(right)])

    def population(self, occupation) -> float:
        return float(self.element(occupation, occupation).real)

    @classmethod
    def from_ket(cls, basis: FockBasis, psi) -> "DensityMatrix":
        psi = np.asarray(psi, dtype=complex)
        return cls(basis, np.outer(psi, psi.conj()))

    @classmethod
    def vacuum(cls, basis: FockBasis) -> "DensityMatrix":
        return cls.from_ket(basis, ket(basis, (0,) * basis.n_modes))


def ket(basis: FockBasis, occupation) -> np.ndarray:
    psi = np.zeros(basis.size, dtype=complex)
    psi[basis.index(occupation)] = 1.0
    return psi


def tensor_embed(basis: FockBasis, local_op, mode: int) -> QOperator:
    """Operator acting as ``local_op`` on one mode and as identity elsewhere."""
    mode = basis.check_mode(mode)
    local = np.asarray(local_op, dtype=complex)
    d = basis.mode_dims[mode]
    if local.shape != (d, d):
        raise ConfigurationError(f"local operator shape {local.shape} != ({d}, {d}) for mode {mode}")
    out = np.zeros((basis.size, basis.size), dtype=complex)
    cols = np.arange(basis.size)
    n_in = basis.states[:, mode]
    for n_out in range(d):
        vals = local[n_out, n_in]
        target = basis.states.copy()
        target[:, mode] = n_out
        rows = basis.indices_of(target)
        keep = (rows >= 0) & (vals != 0)
        out[rows[keep], cols[keep]] = vals[keep]
    return QOperator(basis, out)


def _local_lowering(d: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, d, dtype=float)), k=1)


def annihilation(basis: FockBasis, mode: int) -> QOperator:
    mode = basis.check_mode(mode)
    return tensor_embed(basis, _local_lowering(basis.mode_dims[mode]), mode)


def creation(basis: FockBasis, mode: int) -> QOperator:
    return annihilation(basis, mode).dag()


def number(basis: FockBasis, mode: int) -> QOperator:
    mode = basis.check_mode(mode)
    return QOperator(basis, np.diag(basis.states[:, mode].astype(complex)))


def identity(basis: FockBasis) -> QOperator:
    return QOperator(basis, np.eye(basis.size, dtype=complex))


def projector(basis: FockBasis, occupations: dict[int, int]) -> QOperator:
    """Projector onto states whose listed modes hold the given occupations."""
    mask = np.ones(basis.size, dtype=bool)
    for mode, n in occupations.items():
        mask &= basis.states[:, basis.check_mode(mode)] == n
    return QOperator(basis, np.diag(mask.astype(complex)))


def partial_trace(rho: QOperator, keep_modes) -> DensityMatrix:
    """Reduced state on ``keep_modes`` (kept in the given order).

    The kept basis inherits the excitation cap, which every kept occupation
    tuple automatically satisfies.
    """
    basis = rho.basis
    keep = [basis.check_mode(m) for m in keep_modes]
    if not keep:
        raise ConfigurationError("partial trace needs at least one kept mode")
    if len(set(keep)) != len(keep):
        raise ConfigurationError("duplicate modes in keep set")
    traced = [m for m in range(basis.n_modes) if m not in keep]
    kept_basis = FockBasis(tuple(basis.mode_dims[m] for m in keep), basis.cap)
    data = rho.data if isinstance(rho, QOperator) else np.asarray(rho)

    k_idx = kept_basis.indices_of(basis.states[:, keep])
    if traced:
        env_basis = FockBasis(tuple(basis.mode_dims[m] for m in traced))
        e_idx = env_basis.indices_of(basis.states[:, traced])
    else:
        e_idx = np.zeros(basis.size, dtype=np.int64)
    out = np.zeros((kept_basis.size, kept_basis.size), dtype=complex)
    # group full-basis states by environment configuration
    order = np.argsort(e_idx, kind="stable")
    bounds = np.flatnonzero(np.diff(e_idx[order])) + 1
    for group in np.split(order, bounds):
        ki = k_idx[group]
        out[np.ix_(ki, ki)] += data[np.ix_(group, group)]
    return DensityMatrix(kept_basis, out)
