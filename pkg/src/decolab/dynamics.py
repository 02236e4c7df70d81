"""Exact evolution of one field mode coupled to a discrete oscillator bath.

The Hamiltonian is the rotating-wave beam-splitter model

    H = w a^dag a + sum_j W_j b_j^dag b_j + sum_j g_j (a^dag b_j + a b_j^dag)

which conserves the total excitation number, so the dense propagator is
built sector by sector. A thermal bath is diagonal in the Fock basis and is
handled as a weighted mixture of Fock product states; every member is
evolved as a pure ket and observables are aggregated in member order.
"""

from __future__ import annotations

import heapq
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Literal, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.sparse import csr_matrix, issparse

from .errors import ConvergenceError, DimensionMismatch, EnsembleExplosion, TruncationError
from .fock import (
    CompositeBasis,
    FieldStateSpec,
    FockSpace,
    KetVector,
    field_state,
    Fock,
    recommended_dim,
)

DENSE_LIMIT = 4096
WORKERS_ENV = "DECOLAB_WORKERS"
# extra field levels above the truncation warning threshold; keeps <a^dag a> within 1e-6
GUARD_LEVELS = 4


@dataclass(frozen=True)
class BathMode:
    omega: float
    gamma: float
    dim: int

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError(f"bath frequency must be positive, got {self.omega}")
        if self.gamma < 0:
            raise ValueError(f"coupling must be real and non-negative, got {self.gamma}")
        if int(self.dim) != self.dim or self.dim < 2:
            raise DimensionMismatch(f"coupled bath mode needs dim >= 2, got {self.dim}")


@dataclass(frozen=True)
class DiscreteBath:
    modes: tuple[BathMode, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))

    @classmethod
    def from_arrays(cls, omegas, gammas, dims) -> "DiscreteBath":
        omegas, gammas, dims = list(omegas), list(gammas), list(dims)
        if not len(omegas) == len(gammas) == len(dims):
            raise DimensionMismatch("bath arrays must have equal length")
        return cls(tuple(BathMode(float(o), float(g), int(d)) for o, g, d in zip(omegas, gammas, dims)))

    @property
    def omegas(self) -> np.ndarray:
        return np.array([m.omega for m in self.modes], dtype=float)

    @property
    def gammas(self) -> np.ndarray:
        return np.array([m.gamma for m in self.modes], dtype=float)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(m.dim for m in self.modes)

    def scaled(self, s: float) -> "DiscreteBath":
        return DiscreteBath(tuple(replace(m, gamma=m.gamma * s) for m in self.modes))


@dataclass(frozen=True)
class EvolutionConfig:
    t_max: float
    n_samples: int = 101
    method: Literal["auto", "dense", "ode"] = "auto"
    tolerance: float = 1e-10

    def __post_init__(self):
        if self.n_samples < 2:
            raise ValueError("n_samples must be at least 2")
        if not self.t_max > 0:
            raise ValueError("t_max must be positive")
        if self.method not in ("auto", "dense", "ode"):
            raise ValueError(f"unknown evolution method {self.method!r}")

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.t_max, self.n_samples)


@dataclass(frozen=True)
class ThermalEnsemble:
    members: tuple[tuple[tuple[int, ...], float], ...]
    cumulative_weight: float

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for _, w in self.members])


@dataclass
class Trajectory:
    times: np.ndarray
    E1: np.ndarray
    delta1: np.ndarray
    delta2: np.ndarray
    mean_a: np.ndarray
    norm: np.ndarray
    total_excitation: np.ndarray
    # worst per-member drift over the run
    norm_drift: float
    excitation_drift: float
    omega: float
    mean_n0: float
    mean_a0: complex
    n_members: int
    rho1: np.ndarray = field(repr=False)

    @property
    def purity2_relative_loss(self) -> np.ndarray:
        """1 - Tr rho2(t)^2 / Tr rho2(0)^2."""
        p = 1.0 - self.delta2
        return 1.0 - p / p[0]


# -- Hamiltonian and sectors ----------------------------------------------------


def _check_basis(bath: DiscreteBath, basis: CompositeBasis) -> None:
    if basis.dims[1:] != bath.dims:
        raise DimensionMismatch(f"basis dims {basis.dims} do not match field + bath dims {bath.dims}")
    if basis.dims[0] < 1:
        raise DimensionMismatch("field dimension must be positive")


def hamiltonian_sparse(omega: float, bath: DiscreteBath, basis: CompositeBasis) -> csr_matrix:
    _check_basis(bath, basis)
    occ = basis.occupations()
    dims = np.array(basis.dims)
    freqs = np.concatenate([[omega], bath.omegas])
    diag = np.arange(basis.total_dim)
    rows, cols, vals = [diag], [diag], [(occ @ freqs).astype(complex)]
    n0 = occ[:, 0]
    for j, mode in enumerate(bath.modes, start=1):
        if mode.gamma == 0.0:
            continue
        nj = occ[:, j]
        # a^dag b_j : (n0, nj) -> (n0 + 1, nj - 1)
        src = np.nonzero((n0 < dims[0] - 1) & (nj >= 1))[0]
        tgt_occ = occ[src].copy()
        tgt_occ[:, 0] += 1
        tgt_occ[:, j] -= 1
        tgt = np.ravel_multi_index(tgt_occ.T, basis.dims)
        amp = (mode.gamma * np.sqrt((n0[src] + 1) * nj[src])).astype(complex)
        rows += [tgt, src]
        cols += [src, tgt]
        vals += [amp, amp]
    n = basis.total_dim
    return csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))


def build_hamiltonian(omega: float, bath: DiscreteBath, basis: CompositeBasis) -> np.ndarray:
    return hamiltonian_sparse(omega, bath, basis).toarray()


def excitation_sectors(basis: CompositeBasis) -> list[np.ndarray]:
    """Basis indices grouped by total excitation number, in increasing order."""
    totals = basis.occupations().sum(axis=1)
    return [np.nonzero(totals == n)[0] for n in np.unique(totals)]


# -- propagation ------------------------------------------------------------------


class Propagator:
    """exp(-iHt) applied to kets, dense per excitation sector or by adaptive ODE.

    ``auto`` picks the dense route whenever the largest excitation sector has
    at most DENSE_LIMIT states.
    """

    def __init__(self, H, basis: CompositeBasis, method: str = "auto", tolerance: float = 1e-10):
        data = H.data if issparse(H) else np.asarray(H)
        if not np.all(np.isfinite(data)):
            raise ValueError("Hamiltonian has non-finite entries")
        self.H = H
        self.basis = basis
        self.tolerance = tolerance
        sectors = excitation_sectors(basis)
        if method == "auto":
            method = "dense" if max(len(idx) for idx in sectors) <= DENSE_LIMIT else "ode"
        self.method = method
        if method == "dense":
            self._blocks = []
            for idx in sectors:
                block = H[idx][:, idx]
                block = block.toarray() if issparse(block) else block
                evals, evecs = np.linalg.eigh(block)
                self._blocks.append((idx, evals, evecs))
        else:
            self._sparse = csr_matrix(H)

    def states(self, psi0: np.ndarray, times: np.ndarray) -> np.ndarray:
        """Array of shape (len(times), total_dim) holding psi(t_k)."""
        psi0 = np.asarray(psi0, dtype=complex)
        if self.method == "dense":
            out = np.zeros((len(times), psi0.size), dtype=complex)
            for idx, evals, evecs in self._blocks:
                c = evecs.conj().T @ psi0[idx]
                if not np.any(c):
                    continue
                phases = np.exp(-1j * np.outer(times, evals))
                out[:, idx] = (phases * c) @ evecs.T
            return out
        return self._ode_states(psi0, times)

    def _ode_states(self, psi0: np.ndarray, times: np.ndarray) -> np.ndarray:
        Hs = self._sparse
        sol = solve_ivp(
            lambda t, y: -1j * (Hs @ y),
            (float(times[0]), float(times[-1])),
            psi0,
            method="DOP853",
            t_eval=times,
            # local error control must be tighter than the global norm budget
            rtol=max(self.tolerance * 1e-2, 1e-13),
            atol=max(self.tolerance * 1e-2, 1e-13),
        )
        if not sol.success:
            raise ConvergenceError(f"ODE integration failed: {sol.message}")
        out = sol.y.T
        drift = np.max(np.abs(np.linalg.norm(out, axis=1) - np.linalg.norm(psi0)))
        if not drift <= max(1e-8, 100 * self.tolerance):
            raise ConvergenceError(f"ODE norm drift {drift:.3e} exceeds tolerance")
        return out


def evolve(psi0: KetVector, H: np.ndarray, cfg: EvolutionConfig) -> list[KetVector]:
    prop = Propagator(H, psi0.basis, cfg.method, cfg.tolerance)
    arr = prop.states(psi0.amplitudes, cfg.times)
    return [KetVector(row, psi0.basis) for row in arr]


# -- thermal ensemble ----------------------------------------------------------------


def thermal_ensemble(
    beta: float,
    bath: DiscreteBath,
    weight_cutoff: float = 1e-9,
    max_members: int = 20000,
) -> ThermalEnsemble:
    """Fock configurations of the thermal bath, heaviest first.

    Weights are the untruncated Boltzmann products; enumeration stops once
    their sum reaches ``1 - weight_cutoff``.
    """
    if not 0 < weight_cutoff <= 0.1:
        raise ValueError("weight_cutoff must lie in (0, 0.1]")
    n = len(bath.modes)
    vacuum = (0,) * n
    if math.isinf(beta) or n == 0:
        return ThermalEnsemble(((vacuum, 1.0),), 1.0)
    if not beta > 0:
        raise ValueError("beta must be positive")
    q = np.exp(-beta * bath.omegas)
    dims = bath.dims

    def weight(cfg):
        return float(np.prod((1.0 - q) * q ** np.array(cfg)))

    heap = [(-weight(vacuum), vacuum)]
    seen = {vacuum}
    members = []
    total = 0.0
    target = 1.0 - weight_cutoff
    while heap and total < target:
        neg_w, cfg = heapq.heappop(heap)
        members.append((cfg, -neg_w))
        total += -neg_w
        if len(members) > max_members:
            raise EnsembleExplosion(f"thermal ensemble needs more than {max_members} members")
        for j in range(n):
            if cfg[j] + 1 < dims[j]:
                nxt = cfg[:j] + (cfg[j] + 1,) + cfg[j + 1 :]
                if nxt not in seen:
                    seen.add(nxt)
                    heapq.heappush(heap, (-weight(nxt), nxt))
    if total < target:
        raise TruncationError(
            f"bath truncation {dims} holds only {total:.9f} of the thermal weight (need {target})"
        )
    return ThermalEnsemble(tuple(members), total)


# -- full simulation --------------------------------------------------------------------


def default_field_dim(spec: FieldStateSpec) -> int:
    if isinstance(spec, Fock):
        return spec.n + 2
    return max(2, recommended_dim(spec.alpha) + GUARD_LEVELS)


def _workers(workers: Optional[int]) -> int:
    if workers is None:
        env = os.environ.get(WORKERS_ENV, "")
        workers = int(env) if env.strip() else 1
    return max(1, int(workers))


def simulate(
    field_spec: FieldStateSpec,
    omega: float,
    bath: DiscreteBath,
    beta: float,
    cfg: EvolutionConfig,
    field_dim: Optional[int] = None,
    weight_cutoff: float = 1e-9,
    workers: Optional[int] = None,
) -> Trajectory:
    d_f = field_dim or default_field_dim(field_spec)
    ket = field_state(field_spec, FockSpace(d_f))
    basis = CompositeBasis((d_f,) + bath.dims)
    H = hamiltonian_sparse(omega, bath, basis)
    prop = Propagator(H, basis, cfg.method, cfg.tolerance)
    ens = thermal_ensemble(beta, bath, weight_cutoff)
    times = cfg.times
    d_b = basis.total_dim // d_f
    totals = basis.occupations().sum(axis=1).astype(float)
    nvec = np.arange(d_f, dtype=float)
    sqrt_n = np.sqrt(np.arange(1, d_f, dtype=float))

    def run_member(member):
        config, _ = member
        bath_vec = np.zeros(d_b, dtype=complex)
        bath_vec[int(np.ravel_multi_index(config, bath.dims)) if bath.modes else 0] = 1.0
        psi = prop.states(np.kron(ket.amplitudes, bath_vec), times)
        prob = np.abs(psi) ** 2
        norm = np.sqrt(prob.sum(axis=1))
        ntot = prob @ totals
        M = psi.reshape(len(times), d_f, d_b)
        rho1 = np.einsum("tib,tjb->tij", M, M.conj())
        return M, rho1, norm, ntot

    n_workers = _workers(workers)
    if n_workers > 1 and len(ens.members) > 1:
        with ThreadPoolExecutor(n_workers) as pool:
            results = list(pool.map(run_member, ens.members))
    else:
        results = [run_member(m) for m in ens.members]

    W = ens.cumulative_weight
    rho1 = np.zeros((len(times), d_f, d_f), dtype=complex)
    norm = np.zeros(len(times))
    ntot = np.zeros(len(times))
    norm_drift = 0.0
    exc_drift = 0.0
    for (_, w), (_, r1, nm, nt) in zip(ens.members, results):
        rho1 += (w / W) * r1
        norm += (w / W) * nm
        ntot += (w / W) * nt
        norm_drift = max(norm_drift, float(np.max(np.abs(nm - nm[0]))))
        exc_drift = max(exc_drift, float(np.max(np.abs(nt - nt[0]))))

    purity2 = _bath_purity([w / W for _, w in ens.members], [r[0] for r in results])
    purity1 = np.einsum("tij,tij->t", rho1, rho1.conj()).real
    n_mean = np.einsum("tii,i->t", rho1, nvec).real
    # <a> = Tr(a rho1) = sum_n sqrt(n) rho1[n, n-1]
    mean_a = np.einsum("tn,n->t", np.diagonal(rho1, offset=-1, axis1=1, axis2=2), sqrt_n)

    a_op = np.diag(sqrt_n, 1)
    return Trajectory(
        times=times,
        E1=omega * n_mean,
        delta1=1.0 - purity1,
        delta2=1.0 - purity2,
        mean_a=mean_a,
        norm=norm,
        total_excitation=ntot,
        norm_drift=norm_drift,
        excitation_drift=exc_drift,
        omega=omega,
        mean_n0=float(np.vdot(ket.amplitudes, nvec * ket.amplitudes).real),
        mean_a0=complex(np.vdot(ket.amplitudes, a_op @ ket.amplitudes)),
        n_members=len(ens.members),
        rho1=rho1,
    )


def _bath_purity(weights: Sequence[float], mats: Sequence[np.ndarray]) -> np.ndarray:
    """Tr(rho2^2) for rho2 = sum_m w_m Tr_field |psi_m><psi_m|.

    ``mats`` holds each member's states reshaped to (time, field, bath). With
    X stacking sqrt(w_m) M_m row-wise, rho2 = X^T conj(X), and Tr(rho2^2) is the
    squared Frobenius norm of whichever Gram matrix (bath- or member-side) is smaller.
    """
    n_t = mats[0].shape[0]
    sw = np.sqrt(np.asarray(weights, dtype=float))
    out = np.empty(n_t)
    for k in range(n_t):
        X = np.concatenate([s * M[k] for s, M in zip(sw, mats)], axis=0)
        G = X.T @ X.conj() if X.shape[1] <= X.shape[0] else X.conj() @ X.T
        out[k] = np.vdot(G, G).real
    return out
