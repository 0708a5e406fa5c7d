import json

import numpy as np
import pytest

from lindbladkit.core import Operator, basis_state, build_spin_operators, pauli, spin_coherent_state
from lindbladkit.generator import LindbladModel
from lindbladkit.integrators import TimeGrid, evolve_rk4
from lindbladkit.models import build_model
from lindbladkit.trajectories import (ensemble_average, homodyne_ensemble, homodyne_run, jump_statistics,
                                      mcwf_ensemble, mcwf_run, qsd_ensemble, qsd_run, record_csv, record_json,
                                      run_ensemble, sme_jump_ensemble, sme_jump_run, stats_csv)

SX, SY, SZ, SP, SM = (p.data for p in pauli())
UP = basis_state(2, 0).amplitudes
DOWN = basis_state(2, 1).amplitudes
PLUS = np.array([1, 1]) / np.sqrt(2)


def _decay(gamma=1.0, H=None):
    return LindbladModel(Operator(np.zeros((2, 2)) if H is None else H), ((SM, gamma),))


def _within(mean, se, ref, k=3.0):
    return np.all(np.abs(mean - ref) <= k * se + 1e-9)


# --- quantum jumps -------------------------------------------------------------------------

def test_dark_state_never_jumps():
    grid = TimeGrid(0.0, 5.0, 1e-2, 50)
    recs = mcwf_ensemble(_decay(), DOWN, grid, 20, seed=1, observables={"sz": SZ}, store_states=True)
    assert all(not r.jumps for r in recs)
    assert all(np.allclose(r.expect["sz"], -1) for r in recs)
    assert jump_statistics(recs).counts.sum() == 0


def test_spin_one_jump_counts_follow_initial_populations():
    s = build_spin_operators(1)
    m = LindbladModel(Operator(np.zeros((3, 3))), ((s.Sminus, 1.0),))
    psi0 = spin_coherent_state(1, np.pi / 2, 0.0)
    n = 1000
    recs = mcwf_ensemble(m, psi0, TimeGrid(0.0, 25.0, 1e-2, 2500), n, seed=3)
    hist = np.bincount([len(r.jumps) for r in recs], minlength=3)
    assert hist.size == 3
    p = np.array([0.25, 0.5, 0.25])
    se = np.sqrt(p * (1 - p) / n)
    assert np.all(np.abs(hist / n - p) < 4 * se)


def test_norm_record_decreases_and_resets():
    m = build_model("driven-spin-half", omega=1.0, gamma=1.0)
    grid = TimeGrid(0.0, 20.0, 1e-3, 10)
    r = mcwf_run(m, DOWN, grid, seed=5)
    assert len(r.jumps) > 3
    cum = r.cumulative_jumps()
    same = np.diff(cum) == 0
    assert np.all(np.diff(r.norms)[same] <= 1e-12)
    # the norm right after a jump restarts from one
    assert np.any(np.diff(r.norms)[~same] > 0)
    assert np.all(r.norms <= 1 + 1e-12) and np.all(r.norms > 0)


def test_no_jump_norm_law():
    grid = TimeGrid(0.0, 3.0, 1e-3, 10)
    for seed in range(10):
        r = mcwf_run(_decay(), UP, grid, seed=seed)
        t_first = r.jumps[0][0] if r.jumps else np.inf
        before = r.times < t_first
        assert np.allclose(r.norms[before], np.exp(-r.times[before]), atol=1e-10)


def test_mcwf_determinism_and_ordering():
    m = build_model("driven-spin-half", omega=1.0, gamma=2.0)
    grid = TimeGrid(0.0, 10.0, 1e-3, 100)
    a = mcwf_ensemble(m, DOWN, grid, 5, seed=9, observables={"sz": SZ})
    b = mcwf_ensemble(m, DOWN, grid, 5, seed=9, observables={"sz": SZ})
    for x, y in zip(a, b):
        assert x.jumps == y.jumps
        assert np.array_equal(x.expect["sz"], y.expect["sz"])
        t = x.jump_times()
        assert np.all(np.diff(t) > 0)
    # trajectory i of an ensemble equals the single run with index i
    single = mcwf_run(m, DOWN, grid, seed=9, index=3, observables={"sz": SZ}, store_states=False)
    assert single.jumps == a[3].jumps


def test_mcwf_snapshots_are_normalized():
    m = build_model("driven-spin-half")
    recs = mcwf_ensemble(m, DOWN, TimeGrid(0.0, 5.0, 1e-3, 100), 10, seed=2, store_states=True)
    for r in recs:
        assert np.abs(np.linalg.norm(r.states, axis=1) - 1).max() < 1e-8


def test_mcwf_ensemble_matches_lindblad_for_spin_half():
    m = build_model("driven-spin-half", omega=1.0, gamma=1.0)
    grid = TimeGrid(0.0, 8.0, 1e-3, 400)
    recs = mcwf_ensemble(m, DOWN, grid, 1000, seed=11, observables={"sz": SZ})
    st = ensemble_average(recs)
    ref = evolve_rk4(m, DOWN, grid, {"sz": SZ}, store_states=False).expect["sz"]
    assert _within(st.mean["sz"], st.stderr["sz"], ref)
    assert st.jump_histogram.sum() == 1000


# --- jump SME with detector efficiency -----------------------------------------------------

def test_sme_zero_efficiency_is_lindblad():
    m = build_model("driven-spin-half", omega=1.0, gamma=1.0)
    grid = TimeGrid(0.0, 5.0, 1e-3, 100)
    r = sme_jump_run(m, np.outer(DOWN, DOWN), 0.0, grid, seed=0, observables={"sz": SZ})
    ref = evolve_rk4(m, DOWN, grid, {"sz": SZ}, store_states=False).expect["sz"]
    assert not r.jumps
    assert np.abs(r.expect["sz"] - ref).max() < 5e-3


def test_sme_unit_efficiency_keeps_pure_states_pure():
    m = build_model("driven-spin-half", omega=1.0, gamma=1.0)
    grid = TimeGrid(0.0, 10.0, 1e-3, 100)
    r = sme_jump_run(m, np.outer(DOWN, DOWN), 1.0, grid, seed=4)
    pur = np.real(np.einsum("tij,tji->t", r.states, r.states))
    assert np.abs(pur - 1).max() < 1e-6
    assert len(r.jumps) > 0


def test_sme_partial_efficiency_ensemble_matches_lindblad():
    # start excited so clicks occur from the first samples and the standard error is informative
    m = build_model("driven-spin-half", omega=1.0, gamma=1.0)
    grid = TimeGrid(0.0, 6.0, 2e-3, 250)
    recs = sme_jump_ensemble(m, np.outer(UP, UP), 0.5, grid, 1000, seed=6, observables={"sz": SZ})
    st = ensemble_average(recs)
    ref = evolve_rk4(m, UP, TimeGrid(0.0, 6.0, 1e-3, 500), {"sz": SZ}, store_states=False).expect["sz"]
    assert _within(st.mean["sz"], st.stderr["sz"], ref)
    assert sum(len(r.jumps) for r in recs) > 500


def test_sme_rejects_bad_inputs():
    m = _decay(50.0)
    with pytest.raises(ValueError):
        sme_jump_run(m, np.outer(UP, UP), 1.0, TimeGrid(0.0, 1.0, 0.01), seed=0)
    with pytest.raises(ValueError):
        sme_jump_run(_decay(), np.outer(UP, UP), 1.5, TimeGrid(0.0, 1.0, 0.01), seed=0)


# --- diffusive unravelings -----------------------------------------------------------------

def test_homodyne_dephasing_localizes():
    m = LindbladModel(Operator(np.zeros((2, 2))), ((SZ, 1.0),))
    recs = homodyne_ensemble(m, PLUS, TimeGrid(0.0, 15.0, 1e-3, 100), 20, seed=2, observables={"sz": SZ})
    assert all(abs(r.expect["sz"][-1]) > 0.999 for r in recs)


def test_homodyne_without_dissipation_is_unitary():
    m = LindbladModel(Operator(0.5 * SX), ((SM, 0.0),))
    grid = TimeGrid(0.0, 2.0, 1e-3, 100)
    recs = homodyne_ensemble(m, UP, grid, 20, seed=3, observables={"sz": SZ})
    st = ensemble_average(recs)
    assert np.abs(st.stderr["sz"]).max() < 1e-14
    assert np.allclose(st.mean["sz"], np.cos(grid.times), atol=1e-9)
    # with <x> = 0 the current is pure shot noise of variance 1/dt about zero
    sig = np.concatenate([r.signal[:, 0] for r in recs])
    assert abs(sig.mean()) < 4 * np.sqrt(1 / grid.dt / sig.size)
    assert np.var(sig) * grid.dt == pytest.approx(1.0, rel=0.02)


def test_homodyne_signal_mean_tracks_quadrature():
    m = LindbladModel(Operator(np.zeros((2, 2))), ((SM, 1.0),))
    grid = TimeGrid(0.0, 0.2, 1e-3)
    recs = homodyne_ensemble(m, PLUS, grid, 2000, seed=4)
    first = np.array([r.signal[0, 0] for r in recs])
    # at t=0 every trajectory has <x> = <sx>/2 = 1/2
    assert abs(first.mean() - 1.0) < 4 * first.std() / np.sqrt(first.size)


def test_homodyne_ensemble_matches_lindblad_for_driven_spin():
    m = build_model("driven-spin-half", omega=1.0, gamma=1.0)
    grid = TimeGrid(0.0, 6.0, 1e-3, 300)
    recs = homodyne_ensemble(m, DOWN, grid, 1000, seed=12, observables={"sz": SZ}, store_signal=False)
    st = ensemble_average(recs)
    ref = evolve_rk4(m, DOWN, grid, {"sz": SZ}, store_states=False).expect["sz"]
    assert _within(st.mean["sz"], st.stderr["sz"], ref)


def test_homodyne_needs_a_jump_and_small_dt():
    with pytest.raises(ValueError):
        homodyne_run(LindbladModel(Operator(SZ)), UP, TimeGrid(0.0, 1.0, 1e-3), seed=0)
    with pytest.raises(ValueError):
        homodyne_run(_decay(100.0), UP, TimeGrid(0.0, 1.0, 0.1), seed=0)


def test_qsd_dephasing_reaches_eigenstate():
    m = LindbladModel(Operator(np.zeros((2, 2))), ((SZ, 1.0),))
    recs = qsd_ensemble(m, PLUS, TimeGrid(0.0, 15.0, 1e-3, 100), 20, seed=5, observables={"sz": SZ},
                        store_states=True)
    for r in recs:
        assert abs(r.expect["sz"][-1]) > 0.999
        assert np.abs(np.linalg.norm(r.states, axis=1) - 1).max() < 1e-8


def test_qsd_ensemble_matches_lindblad_for_driven_spin():
    m = build_model("driven-spin-half", omega=1.0, gamma=1.0)
    grid = TimeGrid(0.0, 6.0, 1e-3, 300)
    recs = qsd_ensemble(m, DOWN, grid, 1000, seed=13, observables={"sz": SZ})
    st = ensemble_average(recs)
    ref = evolve_rk4(m, DOWN, grid, {"sz": SZ}, store_states=False).expect["sz"]
    assert _within(st.mean["sz"], st.stderr["sz"], ref)


def test_diffusive_determinism():
    m = build_model("driven-spin-half")
    grid = TimeGrid(0.0, 1.0, 1e-3, 100)
    a = homodyne_run(m, DOWN, grid, seed=8, index=2)
    b = homodyne_run(m, DOWN, grid, seed=8, index=2)
    assert np.array_equal(a.signal, b.signal) and np.array_equal(a.states, b.states)
    c = qsd_run(m, DOWN, grid, seed=8, index=2)
    d = qsd_run(m, DOWN, grid, seed=8, index=2)
    assert np.array_equal(c.states, d.states)


# --- statistics and export -----------------------------------------------------------------

def test_single_record_statistics():
    m = build_model("driven-spin-half")
    r = mcwf_run(m, DOWN, TimeGrid(0.0, 2.0, 1e-3, 100), seed=1, observables={"sz": SZ})
    st = ensemble_average([r])
    assert np.array_equal(st.mean["sz"], r.expect["sz"])
    assert np.all(st.stderr["sz"] == 0)


def test_ensemble_average_observables_from_states():
    m = build_model("driven-spin-half")
    recs = mcwf_ensemble(m, DOWN, TimeGrid(0.0, 2.0, 1e-3, 100), 30, seed=1, observables={"sz": SZ},
                         store_states=True)
    st = ensemble_average(recs, observables={"sx": SX})
    assert np.allclose(st.mean["sz"], np.real(np.einsum("ij,tji->t", SZ, st.mean_states)))
    assert np.allclose(st.mean["sx"], np.real(np.einsum("ij,tji->t", SX, st.mean_states)))
    assert np.all(st.purity <= 1 + 1e-12)


def test_mixed_schemes_rejected():
    m = build_model("driven-spin-half")
    grid = TimeGrid(0.0, 0.1, 1e-3)
    with pytest.raises(ValueError):
        ensemble_average([mcwf_run(m, DOWN, grid, 0), qsd_run(m, DOWN, grid, 0, index=1)])
    with pytest.raises(ValueError):
        jump_statistics([qsd_run(m, DOWN, grid, 0)])
    with pytest.raises(ValueError):
        run_ensemble("telepathy", m, DOWN, grid, 1, 0)


def test_exports():
    m = build_model("driven-spin-half")
    grid = TimeGrid(0.0, 3.0, 1e-3, 1000)
    recs = run_ensemble("mcwf", m, DOWN, grid, 4, 21, observables={"sz": SZ}, store_states=True)
    text = record_csv(recs[0]).splitlines()
    assert text[0] == "t,sz,jumps" and len(text) == len(grid.times) + 1
    blob = json.loads(record_json(recs[0]))
    assert blob["scheme"] == "mcwf" and blob["seed"] == 21
    assert len(blob["jumps"]) == len(recs[0].jumps)
    head = stats_csv(ensemble_average(recs)).splitlines()[0]
    assert head == "t,sz_mean,sz_stderr,purity_of_mean"
