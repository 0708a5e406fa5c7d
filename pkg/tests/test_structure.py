import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lindbladkit.core import Operator, pauli
from lindbladkit.generator import LindbladModel, apply_generator, random_model
from lindbladkit.models import build_model
from lindbladkit.spectra import eigenvalues, spectral_decomposition, steady_states
from lindbladkit.structure import (algebra_closure, check_dynamical_symmetry, check_strong_symmetry,
                                   check_weak_symmetry, dark_states, davies_irreducible, dfs_detect,
                                   phase_rotation, reflection, restrict_to_subspace, site_permutation,
                                   spin_flip_all, structure_report_json, verify_noiseless_subsystem,
                                   weak_symmetry_blocks)

SX, SY, SZ, SP, SM = (p.data for p in pauli())
I2 = np.eye(2)


def _reduced_purity(psi, da, db):
    M = psi.reshape(da, db)
    r = M @ M.conj().T
    return float(np.real(np.trace(r @ r)))


# --- algebra and irreducibility --------------------------------------------------------------

def test_pauli_pair_generates_full_algebra():
    assert algebra_closure([SX, SZ]).dimension == 4


def test_sz_and_raising_generate_proper_subalgebra():
    assert algebra_closure([SZ, SP]).dimension < 4


def test_algebra_closure_needs_generators():
    with pytest.raises(ValueError):
        algebra_closure([])


def test_algebra_basis_is_orthonormal():
    c = algebra_closure([SZ, SP])
    assert np.allclose(c.basis @ c.basis.conj().T, np.eye(c.dimension), atol=1e-10)


def test_tfi_chain_is_irreducible():
    r = davies_irreducible(build_model("tfi-chain", n=3))
    assert r.irreducible and r.algebra_dim == 64
    assert r.kernel_dim == 1 and r.steady_min_eigenvalue > 0 and r.consistent


def test_reducible_qubit_has_pure_steady_state():
    r = davies_irreducible(LindbladModel(Operator(SZ), ((SP, 1.0),)))
    assert not r.irreducible
    ss = steady_states(spectral_decomposition(LindbladModel(Operator(SZ), ((SP, 1.0),))))[0].data
    assert np.allclose(ss, np.diag([1.0, 0.0]), atol=1e-10)


def test_evans_qubit_irreducible_with_unique_full_rank_state():
    r = davies_irreducible(build_model("evans-qubit"))
    assert r.irreducible and r.kernel_dim == 1 and r.steady_min_eigenvalue > 0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(2, 3))
def test_irreducibility_implies_unique_full_rank_steady_state(seed, D):
    r = davies_irreducible(random_model(D, 2, seed))
    assert r.consistent
    if r.irreducible:
        assert r.kernel_dim == 1 and r.steady_min_eigenvalue > 0


# --- dark states ---------------------------------------------------------------------------

def test_eit_dark_state_direction():
    wp, wc = 0.5, 1.5
    ds = dark_states(build_model("eit", omega_p=wp, omega_c=wc))
    assert len(ds) == 1
    target = np.array([wc, 0, -wp]) / np.hypot(wp, wc)
    assert abs(abs(np.vdot(target, ds[0].state.amplitudes)) - 1) < 1e-10


def test_correlated_qubits_dark_state_is_entangled():
    ds = dark_states(build_model("correlated-qubits"))
    assert len(ds) == 1
    assert _reduced_purity(ds[0].state.amplitudes, 2, 2) == pytest.approx(0.5, abs=1e-10)


def test_rainbow_dark_state_entangles_pairs():
    m = build_model("rainbow", l=2)
    ds = dark_states(m)
    assert len(ds) == 1
    # qubit ordering (a1, b1, a2, b2): bring to (a1, a2 | b1, b2)
    psi = site_permutation([0, 2, 1, 3], m.dims) @ ds[0].state.amplitudes
    assert _reduced_purity(psi, 4, 4) < 0.99


@pytest.mark.parametrize("name", ["eit", "correlated-qubits", "rainbow", "two-qubit-dfs", "qubit-decay"])
def test_dark_state_certificate(name):
    m = build_model(name)
    for d in dark_states(m):
        rho = np.outer(d.state.amplitudes, d.state.amplitudes.conj())
        assert np.linalg.norm(apply_generator(m, rho).data) < 1e-8
        assert d.residual < 1e-8


def test_driven_spin_has_no_dark_state():
    assert dark_states(build_model("driven-spin-half")) == []


# --- strong and weak symmetries ------------------------------------------------------------

def test_bose_hubbard_number_rotation_is_strong():
    m = build_model("bh-dimer", n_max=2)
    r = check_strong_symmetry(m, phase_rotation(m.ops["N"], 0.4))
    assert r.verdict and r.kind == "strong"
    assert r.witnesses["steady_state_count"] >= len(r.witnesses["sector_phases"])
    assert r.witnesses["count_bound_holds"]


def test_damped_cavity_rotation_is_weak_not_strong():
    m = build_model("damped-cavity", cutoff=6)
    U = phase_rotation(m.ops["n"], 0.7)
    assert not check_strong_symmetry(m, U).verdict
    w = check_weak_symmetry(m, U)
    assert w.verdict and w.witnesses["steady_state_invariance"] < 1e-10


def test_identity_is_strong():
    m = build_model("driven-spin-half")
    assert check_strong_symmetry(m, I2).verdict


def test_non_unitary_candidate_rejected():
    with pytest.raises(ValueError):
        check_strong_symmetry(build_model("driven-spin-half"), 2 * I2)


def test_xxz_reflection_spin_flip_is_weak():
    m = build_model("xxz-boundary", n=3)
    U = reflection(m.dims) @ spin_flip_all(3)
    assert check_weak_symmetry(m, U).verdict
    rho = steady_states(spectral_decomposition(m))[0].data
    sz = [np.trace(z @ rho).real for z in m.ops["sz"]]
    for i in range(3):
        assert sz[i] == pytest.approx(-sz[2 - i], abs=1e-9)


def test_xxz_unequal_rates_break_weak_symmetry():
    m = build_model("xxz-boundary", n=3, gamma_plus=1.0, gamma_minus=0.3)
    assert not check_weak_symmetry(m, reflection(m.dims) @ spin_flip_all(3)).verdict


@pytest.mark.parametrize("name,op", [("bh-dimer", "N"), ("hubbard-dephasing", "N"), ("tight-binding-loss", "N")])
def test_strong_implies_weak(name, op):
    m = build_model(name)
    for phi in (0.3, 1.1):
        U = phase_rotation(m.ops[op], phi)
        s = check_strong_symmetry(m, U)
        if s.verdict:
            assert check_weak_symmetry(m, U).verdict


def test_weak_blocks_for_damped_cavity():
    m = build_model("damped-cavity", cutoff=6)
    b = weak_symmetry_blocks(m, phase_rotation(m.ops["n"], 0.7))
    assert sorted(b.block_sizes) == sorted([6, 5, 5, 4, 4, 3, 3, 2, 2, 1, 1])
    assert b.off_block < 1e-12


def test_weak_blocks_identity_single_block():
    m = build_model("damped-cavity", cutoff=4)
    b = weak_symmetry_blocks(m, np.eye(4))
    assert b.block_sizes == (16,)


def test_weak_blocks_nonlinear_cavity():
    m = build_model("kerr", f_tilde=0.0, cutoff=6)
    b = weak_symmetry_blocks(m, phase_rotation(m.ops["n"], 0.7))
    assert sorted(b.block_sizes) == sorted([6, 5, 5, 4, 4, 3, 3, 2, 2, 1, 1])


def test_weak_blocks_require_weak_symmetry():
    m = build_model("driven-cavity", cutoff=6)
    with pytest.raises(ValueError):
        weak_symmetry_blocks(m, phase_rotation(m.ops["n"], 0.7))


# --- dynamical symmetries ------------------------------------------------------------------

def test_hubbard_raising_operator_is_dynamical():
    m = build_model("hubbard-dephasing")
    r = check_dynamical_symmetry(m, m.ops["Splus"])
    assert r.verdict and r.witnesses["omega"] == pytest.approx(1.1)
    assert r.witnesses["ladder_found"]


def test_commuting_operator_is_not_dynamical():
    m = build_model("hubbard-dephasing")
    r = check_dynamical_symmetry(m, m.ops["N"])
    assert not r.verdict and r.witnesses["omega"] == pytest.approx(0.0)


def test_qutrit_pair_double_raising():
    w0 = 1.0
    m = build_model("qutrit-pair", omega=w0)
    Sp = m.ops["Splus"]
    A2 = Sp[0] @ Sp[0] @ Sp[1] @ Sp[1]
    r = check_dynamical_symmetry(m, A2)
    assert r.verdict
    # [A2, H] = -4 w0 A2 with omega defined by Tr(A^dag [A, H]) / Tr(A^dag A)
    assert r.witnesses["omega"] == pytest.approx(-4 * w0)
    vals = eigenvalues(m)
    assert np.min(np.abs(vals - 4j * w0)) < 1e-7


def test_dynamical_rejects_zero_operator():
    with pytest.raises(ValueError):
        check_dynamical_symmetry(build_model("hubbard-dephasing"), np.zeros((6, 6)))


# --- decoherence-free subspaces ------------------------------------------------------------

def test_two_qubit_dfs():
    found = dfs_detect(build_model("two-qubit-dfs"))
    null = [f for f in found if f.kind == "null-space"]
    eig = [f for f in found if f.kind == "eigen"]
    assert len(null) == 1 and null[0].basis.shape[1] == 2
    assert np.allclose(np.sort(null[0].energies), [-1, 1])
    assert null[0].confirmed
    assert len(eig) == 2 and all(f.confirmed for f in eig)


def test_tight_binding_odd_modes_survive():
    m = build_model("tight-binding-loss", l=2)
    found = dfs_detect(m)
    dims = sorted(f.basis.shape[1] for f in found)
    assert dims == [1, 2]
    N = m.ops["N"]
    two = [f for f in found if f.basis.shape[1] == 2][0]
    # both modes live in the single-particle sector
    assert np.allclose(np.diag(two.basis.conj().T @ N @ two.basis).real, 1)


def test_lossless_model_is_one_dfs():
    H = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 3]], float)
    found = dfs_detect(LindbladModel(Operator(H), ()))
    assert len(found) == 1 and found[0].basis.shape[1] == 3
    assert np.allclose(np.sort(found[0].energies), np.linalg.eigvalsh(H))


def test_lossless_diagonal_model_covers_space():
    found = dfs_detect(LindbladModel(Operator(np.diag([0.0, 1.0, 3.0])), ()))
    assert sum(f.basis.shape[1] for f in found) == 3


def test_dfs_basis_annihilated_by_jumps():
    m = build_model("two-qubit-dfs")
    for f in dfs_detect(m):
        if f.kind == "null-space":
            for L in m.scaled_jumps():
                assert np.linalg.norm(L @ f.basis) < 1e-10


# --- noiseless subsystems and restriction --------------------------------------------------

def _factorized(jump_on_a=False):
    H = 0.7 * np.kron(SZ, I2) + 0.3 * np.kron(I2, SX)
    L = np.kron(SM, I2) if jump_on_a else np.kron(I2, SM)
    return LindbladModel(Operator(H, [2, 2]), ((L, 1.0),))


def test_noiseless_subsystem_verified():
    assert verify_noiseless_subsystem(_factorized(), 2, 2).verified


def test_noiseless_subsystem_rejected_when_noise_hits_a():
    r = verify_noiseless_subsystem(_factorized(jump_on_a=True), 2, 2)
    assert not r.verified and r.jump_residuals[0] > 0.1


def test_noiseless_subsystem_with_basis_change():
    rng = np.random.default_rng(7)
    Q, _ = np.linalg.qr(rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4)))
    m = _factorized()
    rot = LindbladModel(Operator(Q @ m.H.data @ Q.conj().T, [2, 2]),
                        tuple((Q @ L @ Q.conj().T, 1.0) for L in m.scaled_jumps()))
    assert verify_noiseless_subsystem(rot, 2, 2, basis=Q).verified
    assert not verify_noiseless_subsystem(rot, 2, 2).verified


def test_noiseless_subsystem_dimension_error():
    with pytest.raises(ValueError):
        verify_noiseless_subsystem(_factorized(), 3, 2)


def test_restrict_to_number_sector():
    m = build_model("bh-dimer", n_max=2)
    N = np.real(np.diag(m.ops["N"]))
    V = np.eye(m.D)[:, np.isclose(N, 0) | np.isclose(N, 1)]
    r = restrict_to_subspace(m, V)
    assert r.D == V.shape[1]
    assert np.allclose(r.H.data, V.T @ m.H.data @ V)


def test_restrict_rejects_leaky_subspace():
    m = build_model("driven-spin-half")
    with pytest.raises(ValueError):
        restrict_to_subspace(m, np.array([[1.0], [0.0]]))
    with pytest.raises(ValueError):
        restrict_to_subspace(m, np.array([[2.0], [0.0]]))


# --- candidate library and report ----------------------------------------------------------

def test_candidate_unitaries():
    P = site_permutation([1, 0], [2, 2])
    assert np.allclose(P @ np.kron(SX, SZ) @ P.T, np.kron(SZ, SX))
    assert np.allclose(spin_flip_all(2), np.kron(SX, SX))
    assert np.allclose(phase_rotation(np.diag([0, 1, 2]), np.pi), np.diag([1, -1, 1]))
    with pytest.raises(ValueError):
        site_permutation([0, 0], [2, 2])


def test_structure_report_json():
    m = build_model("bh-dimer", n_max=2)
    text = structure_report_json(m, {"U(1)": ("strong", phase_rotation(m.ops["N"], 0.5))})
    d = json.loads(text)
    assert d["D"] == m.D and d["davies"]["irreducible"] is False
    assert d["symmetries"]["U(1)"]["verdict"] is True
    assert isinstance(d["dark_states"], list) and isinstance(d["dfs"], list)
