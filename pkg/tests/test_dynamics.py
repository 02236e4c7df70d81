import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from decolab.dynamics import (
    DiscreteBath,
    EvolutionConfig,
    Propagator,
    _bath_purity,
    build_hamiltonian,
    evolve,
    excitation_sectors,
    simulate,
    thermal_ensemble,
)
from decolab.errors import ConvergenceError, DimensionMismatch, EnsembleExplosion, TruncationError
from decolab.fock import CompositeBasis, EvenCat, Fock, FockSpace, Coherent, fock_state, tensor_product


def small_bath(gammas=(0.05, 0.04, 0.03), dims=3):
    return DiscreteBath.from_arrays([0.9, 1.0, 1.15], gammas, [dims] * 3)


def test_hamiltonian_examples():
    H = build_hamiltonian(1.3, DiscreteBath(()), CompositeBasis((5,)))
    assert np.allclose(H, np.diag(1.3 * np.arange(5)))
    g = 0.2
    H = build_hamiltonian(1.0, DiscreteBath.from_arrays([1.0], [g], [2]), CompositeBasis((2, 2)))
    block = H[np.ix_([1, 2], [1, 2])]
    assert np.allclose(np.linalg.eigvalsh(block), [1 - g, 1 + g], atol=1e-12)
    assert np.allclose(H, H.conj().T, atol=1e-12)
    with pytest.raises(DimensionMismatch):
        build_hamiltonian(1.0, DiscreteBath.from_arrays([1.0], [g], [2]), CompositeBasis((2, 3, 2)))


def test_number_conservation(rng):
    bath = DiscreteBath.from_arrays(rng.uniform(0.5, 1.5, 3), rng.uniform(0, 0.3, 3), [3, 3, 3])
    basis = CompositeBasis((4, 3, 3, 3))
    H = build_hamiltonian(1.0, bath, basis)
    Ntot = np.diag(basis.occupations().sum(axis=1).astype(float))
    assert np.max(np.abs(H @ Ntot - Ntot @ H)) < 1e-12


def test_excitation_sectors():
    secs = excitation_sectors(CompositeBasis((2, 2)))
    assert [sorted(s.tolist()) for s in secs] == [[0], [1, 2], [3]]
    secs = excitation_sectors(CompositeBasis((3, 2)))
    assert len(secs[1]) == 2


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_hamiltonian_block_diagonal(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 4))
    dims = tuple(int(d) for d in rng.integers(2, 4, n))
    bath = DiscreteBath.from_arrays(rng.uniform(0.2, 2, n), rng.uniform(0, 0.5, n), dims)
    basis = CompositeBasis((int(rng.integers(2, 5)),) + dims)
    H = build_hamiltonian(float(rng.uniform(0.2, 2)), bath, basis)
    secs = excitation_sectors(basis)
    label = np.empty(basis.total_dim, dtype=int)
    for k, s in enumerate(secs):
        label[s] = k
    assert sorted(np.concatenate(secs).tolist()) == list(range(basis.total_dim))
    off = label[:, None] != label[None, :]
    assert np.max(np.abs(H[off]), initial=0.0) == 0.0


def test_evolve_decoupled_and_rabi():
    basis = CompositeBasis((2, 2))
    psi0 = tensor_product([fock_state(1, FockSpace(2)), fock_state(0, FockSpace(2))])
    cfg = EvolutionConfig(t_max=30.0, n_samples=301)
    H0 = build_hamiltonian(1.0, DiscreteBath.from_arrays([1.0], [0.0], [2]), basis)
    n_field = np.kron(np.diag([0.0, 1.0]), np.eye(2))
    for k in evolve(psi0, H0, cfg):
        assert abs(np.vdot(k.amplitudes, n_field @ k.amplitudes).real - 1.0) < 1e-10
    g = 0.15
    H = build_hamiltonian(1.0, DiscreteBath.from_arrays([1.0], [g], [2]), basis)
    for method in ("dense", "ode"):
        kets = evolve(psi0, H, EvolutionConfig(30.0, 301, method=method, tolerance=1e-10))
        n_t = np.array([np.vdot(k.amplitudes, n_field @ k.amplitudes).real for k in kets])
        assert np.max(np.abs(n_t - np.cos(g * cfg.times) ** 2)) < 1e-8
        assert max(abs(k.norm - 1) for k in kets) < 1e-10


def test_dense_and_ode_agree(rng):
    bath = small_bath()
    basis = CompositeBasis((5, 3, 3, 3))
    H = build_hamiltonian(1.0, bath, basis)
    v = rng.normal(size=basis.total_dim) + 1j * rng.normal(size=basis.total_dim)
    v /= np.linalg.norm(v)
    t = np.linspace(0, 5, 11)
    a = Propagator(H, basis, "dense").states(v, t)
    b = Propagator(H, basis, "ode", 1e-10).states(v, t)
    assert np.max(np.abs(a - b)) < 1e-8


def test_ode_failure_is_reported(monkeypatch):
    import decolab.dynamics as dyn

    basis = CompositeBasis((3, 3))
    H = build_hamiltonian(1.0, DiscreteBath.from_arrays([1.0], [0.5], [3]), basis)
    v = np.zeros(basis.total_dim, complex)
    v[basis.index((1, 1))] = 1
    monkeypatch.setattr(dyn, "solve_ivp", lambda *a, **k: type("R", (), {"success": False, "message": "step"})())
    with pytest.raises(ConvergenceError):
        Propagator(H, basis, "ode", 1e-10).states(v, np.linspace(0, 10, 5))
    H[4, 4] = np.nan
    with pytest.raises(ValueError):
        Propagator(H, basis, "ode")


def test_thermal_ensemble_examples():
    bath = DiscreteBath.from_arrays([1.0], [0.1], [40])
    ens = thermal_ensemble(math.inf, bath)
    assert ens.members == (((0,), 1.0),)
    ens = thermal_ensemble(math.log(2.0), bath, 1e-3)
    assert len(ens.members) == 10
    assert np.allclose(ens.weights, 0.5 ** np.arange(1, 11))
    assert ens.cumulative_weight <= 1.0
    with pytest.raises(EnsembleExplosion):
        thermal_ensemble(0.05, DiscreteBath.from_arrays([1.0] * 3, [0.1] * 3, [200] * 3), 1e-6, max_members=500)
    with pytest.raises(TruncationError):
        thermal_ensemble(0.5, DiscreteBath.from_arrays([1.0], [0.1], [3]), 1e-6)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.3, 5.0), st.floats(1e-6, 0.1))
def test_thermal_ensemble_properties(beta_omega, cutoff):
    bath = DiscreteBath.from_arrays([1.0, 1.4], [0.1, 0.1], [60, 60])
    ens = thermal_ensemble(beta_omega, bath, cutoff)
    w = ens.weights
    assert np.all(w > 0)
    assert np.all(np.diff(w) <= 1e-15)
    assert 1 - cutoff <= w.sum() <= 1 + 1e-12
    assert len({c for c, _ in ens.members}) == len(ens.members)


def test_simulate_rabi_oracle():
    g = 0.1
    cfg = EvolutionConfig(t_max=40.0, n_samples=201)
    tr = simulate(Fock(1), 1.0, DiscreteBath.from_arrays([1.0], [g], [2]), math.inf, cfg, field_dim=2)
    assert np.max(np.abs(tr.E1 - np.cos(g * tr.times) ** 2)) < 1e-8
    assert tr.norm_drift < 1e-8 and tr.excitation_drift < 1e-8


def test_simulate_decoupled():
    cfg = EvolutionConfig(t_max=10.0, n_samples=21)
    tr = simulate(EvenCat(1.0), 1.0, small_bath((0, 0, 0), dims=5), 5.0, cfg, field_dim=12)
    assert np.max(np.abs(tr.delta1 - tr.delta1[0])) < 1e-10
    assert np.max(np.abs(tr.E1 - tr.E1[0])) < 1e-10


@pytest.mark.parametrize("spec", [EvenCat(1.0), Coherent(0.7 + 0.3j), Fock(2)])
def test_schmidt_symmetry_at_zero_temperature(spec):
    cfg = EvolutionConfig(t_max=20.0, n_samples=41)
    tr = simulate(spec, 1.0, small_bath((0.2, 0.15, 0.1)), math.inf, cfg)
    assert np.max(np.abs(tr.delta1 - tr.delta2)) < 1e-10
    assert np.max(tr.delta1) > 1e-3 or isinstance(spec, Coherent)


def test_thermal_run_health_and_workers(monkeypatch):
    cfg = EvolutionConfig(t_max=5.0, n_samples=11)
    bath = small_bath(dims=4)
    serial = simulate(EvenCat(1.0), 1.0, bath, 3.0, cfg, field_dim=9, weight_cutoff=1e-4)
    monkeypatch.setenv("DECOLAB_WORKERS", "4")
    parallel = simulate(EvenCat(1.0), 1.0, bath, 3.0, cfg, field_dim=9, weight_cutoff=1e-4)
    assert serial.n_members > 1
    assert serial.norm_drift < 1e-8 and serial.excitation_drift < 1e-8
    # fixed aggregation order makes the fan-out bit-identical
    assert np.array_equal(serial.delta2, parallel.delta2)
    assert np.array_equal(serial.E1, parallel.E1)


@pytest.mark.parametrize("d_f, d_b, members", [(4, 6, 5), (3, 20, 2), (2, 3, 7)])
def test_bath_purity_against_direct_accumulation(rng, d_f, d_b, members):
    mats = [rng.normal(size=(3, d_f, d_b)) + 1j * rng.normal(size=(3, d_f, d_b)) for _ in range(members)]
    mats = [m / np.linalg.norm(m, axis=(1, 2), keepdims=True) for m in mats]
    w = rng.uniform(size=members)
    w /= w.sum()
    rho2 = sum(wi * np.einsum("tib,tic->tbc", M, M.conj()) for wi, M in zip(w, mats))
    direct = np.einsum("tbc,tcb->t", rho2, rho2).real
    assert np.allclose(_bath_purity(w, mats), direct, atol=1e-13)


def test_config_validation():
    with pytest.raises(ValueError):
        EvolutionConfig(t_max=1.0, n_samples=1)
    with pytest.raises(ValueError):
        DiscreteBath.from_arrays([-1.0], [0.1], [2])
