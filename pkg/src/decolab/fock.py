"""Truncated Fock-space primitives.

Composite states are stored densely in a field-major basis: mode 0 is the
field, modes 1..N are bath oscillators in ascending order, and the flat
index is the row-major (C order) ravel of the occupation tuple.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import reduce
from typing import Sequence, Union

import numpy as np

from .errors import DimensionMismatch, TruncationError

NORM_TOL = 1e-10
HERMITIAN_TOL = 1e-10
PSD_TOL = 1e-8
MIN_RETAINED_NORM2 = 0.999
THERMAL_TAIL_TOL = 1e-6


@dataclass(frozen=True)
class FockSpace:
    dim: int

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise DimensionMismatch(f"Fock dimension must be a positive integer, got {self.dim}")


@dataclass(frozen=True)
class CompositeBasis:
    dims: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if not self.dims or any(d < 1 for d in self.dims):
            raise DimensionMismatch(f"invalid composite dims {self.dims}")

    @property
    def total_dim(self) -> int:
        return math.prod(self.dims)

    @property
    def n_modes(self) -> int:
        return len(self.dims)

    def index(self, occupations: Sequence[int]) -> int:
        if len(occupations) != len(self.dims):
            raise DimensionMismatch("occupation tuple length does not match basis")
        return int(np.ravel_multi_index(tuple(occupations), self.dims))

    def multi_index(self, index: int) -> tuple[int, ...]:
        return tuple(int(i) for i in np.unravel_index(index, self.dims))

    def occupations(self) -> np.ndarray:
        """(total_dim, n_modes) table of occupation numbers per basis index."""
        grids = np.indices(self.dims).reshape(len(self.dims), -1)
        return grids.T.copy()


@dataclass(frozen=True)
class KetVector:
    amplitudes: np.ndarray
    basis: CompositeBasis

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.size != self.basis.total_dim:
            raise DimensionMismatch(
                f"ket has {amps.size} amplitudes but basis has {self.basis.total_dim}"
            )
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def to_density(self) -> "DensityMatrix":
        psi = self.amplitudes
        return DensityMatrix(np.outer(psi, psi.conj()), self.basis)


@dataclass(frozen=True)
class DensityMatrix:
    entries: np.ndarray
    basis: CompositeBasis
    check: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        rho = np.asarray(self.entries, dtype=complex)
        n = self.basis.total_dim
        if rho.shape != (n, n):
            raise DimensionMismatch(f"density matrix shape {rho.shape} does not match basis dim {n}")
        rho.setflags(write=False)
        object.__setattr__(self, "entries", rho)
        if self.check:
            validate_density(rho)


def validate_density(rho: np.ndarray) -> None:
    herm = np.max(np.abs(rho - rho.conj().T)) if rho.size else 0.0
    if herm > HERMITIAN_TOL:
        raise ValueError(f"density matrix not Hermitian (max deviation {herm:.3e})")
    tr = np.trace(rho)
    if abs(tr - 1.0) > NORM_TOL:
        raise ValueError(f"density matrix trace {tr} differs from 1")
    lam_min = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min()
    if lam_min < -PSD_TOL:
        raise ValueError(f"density matrix has negative eigenvalue {lam_min:.3e}")


State = Union[KetVector, DensityMatrix]


# -- field state specifications ------------------------------------------------


@dataclass(frozen=True)
class Fock:
    n: int


@dataclass(frozen=True)
class Coherent:
    alpha: complex


@dataclass(frozen=True)
class EvenCat:
    alpha: complex


FieldStateSpec = Union[Fock, Coherent, EvenCat]


def recommended_dim(alpha: complex) -> int:
    """Smallest truncation considered adequate for a coherent amplitude."""
    n = abs(alpha) ** 2
    return int(math.ceil(n + 6.0 * math.sqrt(n + 1.0)))


# -- operators ------------------------------------------------------------------


def annihilation_matrix(space: FockSpace) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, space.dim, dtype=float)), 1).astype(complex)


def creation_matrix(space: FockSpace) -> np.ndarray:
    return annihilation_matrix(space).conj().T


def number_matrix(space: FockSpace) -> np.ndarray:
    return np.diag(np.arange(space.dim, dtype=float)).astype(complex)


def embed(op: np.ndarray, mode: int, basis: CompositeBasis) -> np.ndarray:
    """Lift a single-mode operator to the composite space."""
    if op.shape != (basis.dims[mode],) * 2:
        raise DimensionMismatch(f"operator shape {op.shape} does not fit mode {mode}")
    factors = [np.eye(d, dtype=complex) for d in basis.dims]
    factors[mode] = op
    return reduce(np.kron, factors)


# -- state constructors -----------------------------------------------------------


def _single_mode_ket(amps: np.ndarray, dim: int) -> KetVector:
    return KetVector(amps, CompositeBasis((dim,)))


def _renormalize(amps: np.ndarray, what: str) -> np.ndarray:
    kept = float(np.vdot(amps, amps).real)
    if kept < MIN_RETAINED_NORM2:
        raise TruncationError(f"{what}: truncation keeps only {kept:.6f} of the norm")
    return amps / math.sqrt(kept)


def _check_dim(alpha: complex, space: FockSpace) -> None:
    need = abs(alpha) ** 2 + 6.0 * math.sqrt(abs(alpha) ** 2 + 1.0)
    if space.dim < need:
        warnings.warn(
            f"Fock dimension {space.dim} is below the recommended {need:.1f} for |alpha|={abs(alpha):.3g}",
            stacklevel=3,
        )


def _coherent_amplitudes(alpha: complex, dim: int) -> np.ndarray:
    # c_n = exp(-|a|^2/2) a^n / sqrt(n!), built by recurrence to avoid overflow
    amps = np.empty(dim, dtype=complex)
    amps[0] = math.exp(-0.5 * abs(alpha) ** 2)
    for n in range(1, dim):
        amps[n] = amps[n - 1] * alpha / math.sqrt(n)
    return amps


def fock_state(n: int, space: FockSpace) -> KetVector:
    if not 0 <= n < space.dim:
        raise TruncationError(f"Fock level {n} outside truncation dim {space.dim}")
    amps = np.zeros(space.dim, dtype=complex)
    amps[n] = 1.0
    return _single_mode_ket(amps, space.dim)


def coherent_state(alpha: complex, space: FockSpace) -> KetVector:
    _check_dim(alpha, space)
    amps = _renormalize(_coherent_amplitudes(complex(alpha), space.dim), "coherent state")
    return _single_mode_ket(amps, space.dim)


def even_cat_state(alpha: complex, space: FockSpace) -> KetVector:
    """Even superposition of |alpha> and |-alpha>.

    The untruncated normalization is [2(1 + exp(-2|alpha|^2))]^(-1/2); after
    truncation the ket is renormalized numerically, which agrees with it to
    the discarded tail.
    """
    _check_dim(alpha, space)
    c = _coherent_amplitudes(complex(alpha), space.dim)
    amps = np.zeros(space.dim, dtype=complex)
    # |a> + |-a> doubles even components and cancels odd ones exactly
    amps[0::2] = 2.0 * c[0::2]
    norm2 = 2.0 * (1.0 + math.exp(-2.0 * abs(alpha) ** 2))
    amps /= math.sqrt(norm2)
    amps = _renormalize(amps, "even cat state")
    return _single_mode_ket(amps, space.dim)


def field_state(spec: FieldStateSpec, space: FockSpace) -> KetVector:
    if isinstance(spec, Fock):
        return fock_state(spec.n, space)
    if isinstance(spec, Coherent):
        return coherent_state(spec.alpha, space)
    if isinstance(spec, EvenCat):
        return even_cat_state(spec.alpha, space)
    raise TypeError(f"unknown field state spec {spec!r}")


def thermal_occupation(beta: float, omega: float) -> float:
    """Bose-Einstein mean occupation; beta = inf means T = 0."""
    x = beta * omega
    if math.isinf(x):
        return 0.0
    if x > 700.0:
        return math.exp(-x)
    return 1.0 / math.expm1(x)


def thermal_weights(beta: float, omega: float, space: FockSpace) -> np.ndarray:
    """Boltzmann weights p_n of a single oscillator, renormalized on the truncation."""
    if not (beta > 0) or not (omega > 0):
        raise ValueError("thermal_weights needs beta > 0 and omega > 0")
    p = np.zeros(space.dim)
    if math.isinf(beta):
        p[0] = 1.0
        return p
    q = math.exp(-beta * omega)
    tail = q ** space.dim
    if tail > THERMAL_TAIL_TOL:
        raise TruncationError(f"thermal tail mass {tail:.3e} beyond dim {space.dim}")
    p = (1.0 - q) * q ** np.arange(space.dim)
    return p / p.sum()


def thermal_density(beta: float, omega: float, space: FockSpace) -> DensityMatrix:
    return DensityMatrix(np.diag(thermal_weights(beta, omega, space)), CompositeBasis((space.dim,)))


# -- composition and reduction ------------------------------------------------------


def tensor_product(states: Sequence[State]) -> State:
    if not states:
        raise DimensionMismatch("tensor_product needs at least one factor")
    dims = tuple(d for s in states for d in s.basis.dims)
    basis = CompositeBasis(dims)
    if all(isinstance(s, KetVector) for s in states):
        return KetVector(reduce(np.kron, [s.amplitudes for s in states]), basis)
    mats = [s.to_density().entries if isinstance(s, KetVector) else s.entries for s in states]
    return DensityMatrix(reduce(np.kron, mats), basis)


def _as_keep(keep, n_modes: int) -> tuple[int, ...]:
    keep = (keep,) if isinstance(keep, (int, np.integer)) else tuple(keep)
    if not keep or len(set(keep)) != len(keep) or any(not 0 <= k < n_modes for k in keep):
        raise DimensionMismatch(f"invalid subsystem selection {keep} for {n_modes} modes")
    return tuple(sorted(int(k) for k in keep))


def partial_trace(state: State, keep) -> DensityMatrix:
    """Reduced density matrix on the modes listed in ``keep`` (in basis order)."""
    basis = state.basis
    keep = _as_keep(keep, basis.n_modes)
    drop = [m for m in range(basis.n_modes) if m not in keep]
    kept_dims = tuple(basis.dims[k] for k in keep)
    dk = math.prod(kept_dims)
    if isinstance(state, KetVector):
        psi = state.amplitudes.reshape(basis.dims)
        psi = np.transpose(psi, list(keep) + drop).reshape(dk, -1)
        red = psi @ psi.conj().T
    else:
        n = basis.n_modes
        rho = state.entries.reshape(basis.dims + basis.dims)
        order = list(keep) + drop
        rho = np.transpose(rho, order + [n + m for m in order])
        rest = basis.total_dim // dk
        rho = rho.reshape(dk, rest, dk, rest)
        red = np.einsum("ajbj->ab", rho)
    return DensityMatrix(red, CompositeBasis(kept_dims))


def purity(state: State) -> float:
    if isinstance(state, KetVector):
        return float(np.vdot(state.amplitudes, state.amplitudes).real ** 2)
    rho = state.entries
    # Tr(rho^2) = sum |rho_ij|^2 for Hermitian rho
    return float(np.sum(np.abs(rho) ** 2))


def linear_entropy(state: State) -> float:
    return 1.0 - purity(state)


def expectation(op: np.ndarray, state: State) -> complex:
    op = np.asarray(op)
    n = state.basis.total_dim
    if op.shape != (n, n):
        raise DimensionMismatch(f"operator shape {op.shape} does not match state dim {n}")
    if isinstance(state, KetVector):
        psi = state.amplitudes
        return complex(np.vdot(psi, op @ psi))
    return complex(np.trace(op @ state.entries))
