import warnings

import numpy as np
import pytest
import scipy.linalg as sla

from lindbladkit.core import Operator, kron, kron_states, pauli, random_density, random_hermitian
from lindbladkit.generator import LindbladModel, random_model, superoperator_matrix
from lindbladkit.integrators import (NoiseSpec, PositivityWarning, TimeGrid, default_dt, draw_noise, ensemble_csv,
                                     ensemble_meta_json, evolve_expm, evolve_expm_series, evolve_rk4,
                                     noisy_hamiltonian_ensemble, ou_noise_evolve, series_csv, stream)
from lindbladkit.spectra import evolve_spectral, spectral_decomposition

SX, SY, SZ, SP, SM = (p.data for p in pauli())
ZERO2 = np.zeros((2, 2))
UP = np.diag([1.0, 0.0])
PLUS = np.full((2, 2), 0.5)


def _decay(gamma=1.0):
    return LindbladModel(Operator(ZERO2), ((SM, gamma),))


def _dephasing(gamma=1.0):
    return LindbladModel(Operator(ZERO2), ((SZ, gamma),))


# --- time grid and noise specs -------------------------------------------------------------

def test_time_grid_samples_and_validation():
    g = TimeGrid(0.0, 1.0, 0.1, 3)
    assert g.n_steps == 10
    assert list(g.sample_steps) == [0, 3, 6, 9, 10]
    assert np.allclose(g.times, [0, 0.3, 0.6, 0.9, 1.0])
    with pytest.raises(ValueError):
        TimeGrid(1.0, 1.0, 0.1)
    with pytest.raises(ValueError):
        TimeGrid(0.0, 1.0, 2.0)
    with pytest.raises(ValueError):
        TimeGrid(0.0, 1.0, 0.1, 0)
    assert TimeGrid.with_samples(0, 10, 0.01, 100).stride == 10


def test_noise_spec_validation():
    with pytest.raises(ValueError):
        NoiseSpec("pink")
    with pytest.raises(ValueError):
        NoiseSpec("white-gaussian", gamma=-1)
    with pytest.raises(ValueError):
        NoiseSpec("ornstein-uhlenbeck", tau=None)
    NoiseSpec("ornstein-uhlenbeck", 1.0, 0.5)


def test_default_dt_scales_with_norms():
    assert default_dt(SZ) == pytest.approx(1e-3)
    assert default_dt(SZ, [SZ], gamma=10.0) == pytest.approx(1e-4)


# --- deterministic integration -------------------------------------------------------------

def test_rk4_qubit_decay():
    grid = TimeGrid(0.0, 5.0, 1e-3, 100)
    res = evolve_rk4(_decay(), UP, grid, {"sz": SZ}, store_states=False)
    assert np.abs(res.expect["sz"] - (2 * np.exp(-grid.times) - 1)).max() < 1e-8


def test_rk4_dephasing():
    grid = TimeGrid(0.0, 3.0, 1e-3, 100)
    res = evolve_rk4(_dephasing(), PLUS, grid, {"sx": SX})
    assert np.abs(res.expect["sx"] - np.exp(-2 * grid.times)).max() < 1e-8


def test_rk4_closed_system_is_unitary():
    rng = np.random.default_rng(1)
    H = random_hermitian(3, rng).data
    rho0 = random_density(3, rng).data
    grid = TimeGrid(0.0, 2.0, 1e-3, 1000)
    res = evolve_rk4(LindbladModel(Operator(H)), rho0, grid)
    U = sla.expm(-2j * H)
    assert np.abs(res.states[-1] - U @ rho0 @ U.conj().T).max() < 1e-8


def test_rk4_trace_drift_small():
    m = random_model(4, 3, 2)
    grid = TimeGrid(0.0, 5.0, 1e-3, 1000)
    res = evolve_rk4(m, random_density(4, 3), grid)
    drift = np.abs(np.trace(res.states, axis1=1, axis2=2) - 1).max()
    assert drift < 1e-10 * 5


def test_rk4_dense_and_stage_paths_agree(monkeypatch):
    import lindbladkit.integrators as integ
    m = random_model(3, 2, 4)
    rho0 = random_density(3, 5)
    grid = TimeGrid(0.0, 1.0, 1e-2, 10)
    a = evolve_rk4(m, rho0, grid).states
    monkeypatch.setattr(integ, "DENSE_RK4_MAX_D", 0)
    b = evolve_rk4(m, rho0, grid).states
    assert np.abs(a - b).max() < 1e-13


def test_rk4_fourth_order():
    m = LindbladModel(Operator(0.7 * SX), ((SM, 1.0),))
    exact = evolve_expm(superoperator_matrix(m), UP, 2.0).data
    errs = []
    for dt in (0.1, 0.05):
        r = evolve_rk4(m, UP, TimeGrid(0.0, 2.0, dt, 1000)).states[-1]
        errs.append(np.abs(r - exact).max())
    assert 12 < errs[0] / errs[1] < 20


def test_rk4_positivity_warning():
    # one step with gamma dt = 3 overshoots: the RK4 factor for the excited population is 1.375
    with pytest.warns(PositivityWarning):
        evolve_rk4(_decay(), UP, TimeGrid(0.0, 6.0, 3.0))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        evolve_rk4(_decay(), UP, TimeGrid(0.0, 6.0, 1e-2, 100))


# --- matrix exponential --------------------------------------------------------------------

def test_expm_zero_time_is_exact():
    rho0 = random_density(3, 6)
    S = superoperator_matrix(random_model(3, 2, 7))
    assert np.array_equal(evolve_expm(S, rho0, 0.0).data, rho0.data)


def test_expm_matches_rk4_and_spectral():
    rng = np.random.default_rng(8)
    m = random_model(2, 2, rng)
    rho0 = random_density(2, rng)
    S = superoperator_matrix(m)
    e = evolve_expm(S, rho0, 3.0).data
    r = evolve_rk4(m, rho0, TimeGrid(0.0, 3.0, 1e-3, 3000)).states[-1]
    s = evolve_spectral(spectral_decomposition(S), rho0, [3.0])[0].data
    assert np.abs(e - r).max() < 1e-8
    assert np.abs(e - s).max() < 1e-8


def test_expm_series_starts_at_first_time():
    S = superoperator_matrix(_decay())
    res = evolve_expm_series(S, UP, np.linspace(1.0, 3.0, 5), {"sz": SZ})
    assert res.expect["sz"][0] == pytest.approx(1.0)
    assert np.allclose(res.expect["sz"], 2 * np.exp(-(res.times - 1.0)) - 1, atol=1e-12)


# --- random streams ------------------------------------------------------------------------

def test_streams_are_reproducible_and_independent():
    a = stream(7, 3).standard_normal(5)
    assert np.array_equal(a, stream(7, 3).standard_normal(5))
    assert not np.allclose(a, stream(7, 4).standard_normal(5))
    assert not np.allclose(a, stream(8, 3).standard_normal(5))


def test_noise_draw_statistics():
    dt = 0.01
    w = draw_noise(NoiseSpec("white-gaussian", 2.0), stream(0, 0), 200000, 1, dt)
    assert np.var(w) * dt == pytest.approx(2.0, rel=0.02)
    d = draw_noise(NoiseSpec("discrete-pm1", 2.0), stream(0, 1), 1000, 2, dt)
    assert np.allclose(np.abs(d), np.sqrt(2.0 / dt))
    ou = draw_noise(NoiseSpec("ornstein-uhlenbeck", 1.0, 0.5), stream(0, 2), 200000, 1, dt)
    assert np.var(ou) == pytest.approx(1.0 / (2 * 0.5), rel=0.05)
    lag = int(0.5 / dt)
    c = np.mean(ou[:-lag, 0] * ou[lag:, 0]) / np.var(ou)
    assert c == pytest.approx(np.exp(-1), abs=0.05)


# --- noisy Hamiltonian ensembles -----------------------------------------------------------

def _z_scores(ens, key, exact):
    se = np.maximum(ens.stderr[key], 1e-12)
    return np.abs(ens.mean[key] - exact) / se


@pytest.mark.parametrize("kind", ["white-gaussian", "discrete-pm1"])
def test_noise_average_matches_dephasing(kind):
    gamma, n = 1.0, 2000
    grid = TimeGrid.with_samples(0.0, 1.5, 1e-3, 15)
    ens = noisy_hamiltonian_ensemble(ZERO2, [SZ], NoiseSpec(kind, gamma), n, grid, 11,
                                     np.array([1, 1]) / np.sqrt(2),
                                     {"sx": SX})
    exact = np.exp(-2 * gamma * grid.times)
    z = _z_scores(ens, "sx", exact)
    assert z[1:].max() <= 3.0


def test_noise_average_error_scales_as_inverse_root_n():
    grid = TimeGrid.with_samples(0.0, 1.0, 1e-2, 10)
    ses = []
    for n in (500, 2000):
        ens = noisy_hamiltonian_ensemble(ZERO2, [SZ], NoiseSpec("white-gaussian", 1.0), n, grid, 12,
                                         np.array([1, 1]) / np.sqrt(2), {"sx": SX})
        ses.append(ens.stderr["sx"][1:])
    ratio = ses[0] / ses[1]
    assert np.all((ratio > 1.7) & (ratio < 2.3))


def test_zero_noise_gives_unitary_with_no_spread():
    grid = TimeGrid(0.0, 1.0, 1e-2, 10)
    ens = noisy_hamiltonian_ensemble(0.5 * SX, [SZ], NoiseSpec("white-gaussian", 0.0), 20, grid, 0,
                                     UP, {"sz": SZ})
    assert np.abs(ens.stderr["sz"]).max() < 1e-14
    assert np.allclose(ens.mean["sz"], np.cos(grid.times), atol=1e-12)


def test_noisy_ensemble_rejects_non_hermitian_coupling():
    grid = TimeGrid(0.0, 1.0, 0.1)
    with pytest.raises(ValueError):
        noisy_hamiltonian_ensemble(ZERO2, [SP], NoiseSpec("white-gaussian"), 2, grid, 0, UP)
    with pytest.raises(ValueError):
        noisy_hamiltonian_ensemble(ZERO2, [SZ], NoiseSpec("white-gaussian"), 0, grid, 0, UP)


def test_two_spin_exchange_noise_average_reaches_lindblad_kernel():
    # H0 = S1.S2 with a common field noise eta(t)(S1z + S2z)
    S = [0.5 * SX, 0.5 * SY, 0.5 * SZ]
    H0 = sum(kron(s, s).data for s in S)
    Sz = kron(0.5 * SZ, np.eye(2)).data + kron(np.eye(2), 0.5 * SZ).data
    plus = np.array([1, 1]) / np.sqrt(2)
    psi0 = kron_states(plus, plus).amplitudes
    n = 1000
    grid = TimeGrid(0.0, 12.0, 1e-2, 1200)
    ens = noisy_hamiltonian_ensemble(H0, [Sz], NoiseSpec("white-gaussian", 1.0), n, grid, 13, psi0)
    dec = spectral_decomposition(LindbladModel(Operator(H0, [2, 2]), ((Sz, 1.0),)))
    Rk, Lk = dec.right[:, dec.kernel], dec.left[:, dec.kernel]
    limit = (Rk @ (Lk.conj().T @ np.outer(psi0, psi0.conj()).reshape(-1))).reshape(4, 4)
    assert np.abs(limit @ Sz - Sz @ limit).max() < 1e-10
    assert np.abs(limit @ H0 - H0 @ limit).max() < 1e-10
    assert np.abs(ens.mean_states[-1] - limit).max() < 5 / np.sqrt(n)


# --- colored noise -------------------------------------------------------------------------

def test_ou_short_correlation_time_is_white():
    # starting from zeta = 0 delays the decay by about tau, so the gap to the white-noise
    # solution approaches 2 gamma tau max_t|d<sx>/dt| / (2 gamma) = 2 gamma tau
    gamma = 1.0
    errs = []
    for tau in (1e-3, 1e-4):
        grid = TimeGrid(0.0, 1.5, tau / 10, 10)
        res = ou_noise_evolve(ZERO2, SZ, gamma, tau, PLUS, grid, {"sx": SX}, store_states=False)
        errs.append(np.abs(res.expect["sx"] - np.exp(-2 * gamma * grid.times)).max())
    assert errs[0] < 2 * gamma * 1e-3
    assert errs[1] < 2 * gamma * 1e-4
    assert 9 < errs[0] / errs[1] < 11


def test_ou_zero_strength_is_unitary():
    grid = TimeGrid(0.0, 1.0, 1e-3, 100)
    res = ou_noise_evolve(0.5 * SX, SZ, 0.0, 0.3, UP, grid, {"sz": SZ})
    assert np.allclose(res.expect["sz"], np.cos(grid.times), atol=1e-10)


def test_ou_long_correlation_time_starts_quadratically():
    grid = TimeGrid(0.0, 1e-5, 1e-6)
    res = ou_noise_evolve(ZERO2, SZ, 1.0, 10.0, PLUS, grid, {"sx": SX})
    x = res.expect["sx"]
    assert abs((x[1] - x[0]) / grid.dt) < 1e-6
    with pytest.raises(ValueError):
        ou_noise_evolve(ZERO2, SZ, 1.0, 0.0, PLUS, grid)


# --- export --------------------------------------------------------------------------------

def test_csv_and_meta_export():
    text = series_csv([0.0, 0.5], {"a": np.array([1.0, 2.0])})
    assert text.splitlines() == ["t,a", "0,1", "0.5,2"]
    grid = TimeGrid(0.0, 0.1, 0.05)
    ens = noisy_hamiltonian_ensemble(ZERO2, [SZ], NoiseSpec("white-gaussian"), 3, grid, 5, UP, {"sz": SZ})
    assert ensemble_csv(ens).splitlines()[0] == "t,sz_mean,sz_stderr"
    assert '"seed": 5' in ensemble_meta_json(ens)
