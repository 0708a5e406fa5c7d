"""Deterministic master-equation integration and noisy-Hamiltonian ensembles."""
from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field
from math import factorial
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg as sla

from .core import Operator, PureState, as_array, as_density, as_vector, hermitize
from .generator import (LindbladModel, Superoperator, check_capacity, devectorize, effective_hamiltonian,
                        superoperator_matrix, vectorize)

# propagate with a dense D^2 x D^2 RK4 map when D is at most this
DENSE_RK4_MAX_D = 32


class PositivityWarning(UserWarning):
    pass


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    t1: float
    dt: float
    stride: int = 1

    def __post_init__(self):
        if not self.t1 > self.t0:
            raise ValueError("t1 must exceed t0")
        if not 0 < self.dt <= self.t1 - self.t0:
            raise ValueError("dt must be positive and no larger than t1 - t0")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")

    @classmethod
    def with_samples(cls, t0, t1, dt, n_samples: int) -> "TimeGrid":
        n = int(round((t1 - t0) / dt))
        stride = max(1, n // max(1, n_samples))
        return cls(t0, t1, dt, stride)

    @property
    def n_steps(self) -> int:
        return int(round((self.t1 - self.t0) / self.dt))

    @property
    def sample_steps(self) -> np.ndarray:
        idx = list(range(0, self.n_steps + 1, self.stride))
        if idx[-1] != self.n_steps:
            idx.append(self.n_steps)
        return np.array(idx)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.sample_steps * self.dt


@dataclass(frozen=True)
class NoiseSpec:
    kind: str
    gamma: float = 1.0
    tau: float | None = None

    KINDS = ("white-gaussian", "discrete-pm1", "ornstein-uhlenbeck")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.gamma < 0:
            raise ValueError("noise strength must be nonnegative")
        if self.kind == "ornstein-uhlenbeck" and not (self.tau and self.tau > 0):
            raise ValueError("OU noise requires tau > 0")


@dataclass
class EvolutionResult:
    times: np.ndarray
    expect: dict
    states: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def state(self, k: int) -> Operator:
        return Operator(self.states[k])


def obs_dict(observables) -> dict:
    if observables is None:
        return {}
    if isinstance(observables, Mapping):
        return {k: as_array(v) for k, v in observables.items()}
    return {f"o{i}": as_array(v) for i, v in enumerate(observables)}


def default_dt(H, V_list=(), gamma: float = 0.0) -> float:
    scale = np.linalg.norm(as_array(H), 2)
    for V in V_list:
        scale = max(scale, gamma * np.linalg.norm(as_array(V), 2) ** 2)
    return 1e-3 / max(scale, 1e-12)


def rk4_propagator(M: np.ndarray, h: float) -> np.ndarray:
    """One classic RK4 step for the linear ODE dv/dt = M v, as a matrix.

    For autonomous linear systems the four RK4 stages collapse to the
    fourth-order Taylor polynomial of exp(hM).
    """
    A = h * M
    P = np.eye(M.shape[0], dtype=complex)
    term = np.eye(M.shape[0], dtype=complex)
    for k in range(1, 5):
        term = term @ A
        P = P + term / factorial(k)
    return P


def _rk4_stage_step(f, r, h):
    k1 = f(r)
    k2 = f(r + 0.5 * h * k1)
    k3 = f(r + 0.5 * h * k2)
    k4 = f(r + h * k3)
    return r + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)


def _lindblad_rhs(model: LindbladModel):
    Heff = effective_hamiltonian(model).data
    Hd = Heff.conj().T
    Ls = model.scaled_jumps()
    Lds = [L.conj().T for L in Ls]

    def f(r):
        out = -1j * (Heff @ r - r @ Hd)
        for L, Ld in zip(Ls, Lds):
            out = out + L @ r @ Ld
        return out
    return f


def _sample(r: np.ndarray, obs: dict, pos_tol: float, worst: list):
    r = hermitize(r)
    if pos_tol is not None:
        lmin = float(np.linalg.eigvalsh(r)[0])
        if lmin < worst[0]:
            worst[0] = lmin
    return r, {k: float(np.real(np.sum(o * r.T))) for k, o in obs.items()}


def evolve_rk4(model: LindbladModel, rho0, grid: TimeGrid, observables=None, store_states: bool = True,
               pos_tol: float | None = 1e-8) -> EvolutionResult:
    """Fixed-step classic RK4 integration of the Lindblad equation.

    Samples are Hermitized; a PositivityWarning reports the most negative
    eigenvalue if it drops below ``-pos_tol``.
    """
    D = model.D
    obs = obs_dict(observables)
    r = as_density(rho0).data.astype(complex)
    samples = set(grid.sample_steps.tolist())
    n = grid.n_steps
    worst = [0.0]
    states, ex = [], {k: [] for k in obs}

    def record(r):
        rs, vals = _sample(r, obs, pos_tol, worst)
        if store_states:
            states.append(rs)
        for k, v in vals.items():
            ex[k].append(v)

    record(r)
    if D <= DENSE_RK4_MAX_D:
        P = rk4_propagator(superoperator_matrix(model).matrix, grid.dt)
        v = r.reshape(-1)
        for step in range(1, n + 1):
            v = P @ v
            if step in samples:
                record(v.reshape(D, D))
    else:
        f = _lindblad_rhs(model)
        for step in range(1, n + 1):
            r = _rk4_stage_step(f, r, grid.dt)
            if step in samples:
                record(r)
    if pos_tol is not None and worst[0] < -pos_tol:
        warnings.warn(f"positivity violated: min eigenvalue {worst[0]:.3e}; reduce dt", PositivityWarning,
                      stacklevel=2)
    return EvolutionResult(grid.times, {k: np.array(v) for k, v in ex.items()},
                           np.array(states) if store_states else None,
                           {"dt": grid.dt, "min_eigenvalue": worst[0]})


def evolve_expm(S: Superoperator, rho0, t: float) -> Operator:
    """exp(S t) vec(rho0) by scaling-and-squaring Pade."""
    check_capacity(S.D)
    v0 = vectorize(as_density(rho0))
    if t == 0:
        return devectorize(v0, S.dims)
    return devectorize(sla.expm(np.asarray(S.matrix) * t) @ v0, S.dims)


def evolve_expm_series(S: Superoperator, rho0, times, observables=None) -> EvolutionResult:
    """Evolution on an equally spaced time list via one propagator; rho0 is the state at times[0]."""
    times = np.asarray(times, float)
    obs = obs_dict(observables)
    D = S.D
    v = vectorize(as_density(rho0))
    states = [v.reshape(D, D)]
    dts = np.diff(times)
    P = None
    for k, h in enumerate(dts):
        if P is None or not np.isclose(h, dts[k - 1]):
            P = sla.expm(np.asarray(S.matrix) * h)
        v = P @ v
        states.append(v.reshape(D, D))
    states = np.array([hermitize(s) for s in states])
    ex = {k: np.real(np.einsum("ij,tji->t", o, states)) for k, o in obs.items()}
    return EvolutionResult(times, ex, states)


# --- random streams ---------------------------------------------------------

def stream(seed: int, index: int) -> np.random.Generator:
    """Counter-based generator for realization ``index`` of master ``seed``."""
    key = ((int(seed) & (2 ** 64 - 1)) << 64) | (int(index) & (2 ** 64 - 1))
    return np.random.Generator(np.random.Philox(key=key))


def _ou_path(rng, n_steps, n_ch, dt, gamma, tau):
    var = gamma / (2 * tau)
    a = math.exp(-dt / tau)
    b = math.sqrt(var * (1 - a * a))
    xi = rng.standard_normal((n_steps + 1, n_ch))
    eta = np.empty((n_steps, n_ch))
    x = math.sqrt(var) * xi[0]
    for k in range(n_steps):
        eta[k] = x
        x = a * x + b * xi[k + 1]
    return eta


def draw_noise(noise: NoiseSpec, rng: np.random.Generator, n_steps: int, n_ch: int, dt: float) -> np.ndarray:
    """Piecewise-constant noise amplitudes eta[step, channel]."""
    if noise.kind == "white-gaussian":
        return math.sqrt(noise.gamma / dt) * rng.standard_normal((n_steps, n_ch))
    if noise.kind == "discrete-pm1":
        return math.sqrt(noise.gamma / dt) * (2.0 * rng.integers(0, 2, size=(n_steps, n_ch)) - 1.0)
    return _ou_path(rng, n_steps, n_ch, dt, noise.gamma, noise.tau)


@dataclass
class EnsembleSeries:
    times: np.ndarray
    mean: dict
    stderr: dict
    mean_states: np.ndarray | None
    n: int
    meta: dict = field(default_factory=dict)
    realizations: dict | None = None


def noisy_hamiltonian_ensemble(H0, V_list: Sequence, noise: NoiseSpec, n_realizations: int, grid: TimeGrid,
                               seed: int, state0, observables=None, keep_realizations: bool = False,
                               store_mean_states: bool = True) -> EnsembleSeries:
    """Average over realizations of H0 + sum_j eta_j(t) V_j.

    ``state0`` may be a ket (pure-state propagation) or a density matrix.
    White noise has per-step variance gamma/dt; discrete noise takes values
    +-sqrt(gamma/dt); OU noise is sampled exactly with stationary variance
    gamma/(2 tau).  Realization i draws from ``stream(seed, i)``.
    """
    H0 = as_array(H0)
    Vs = [as_array(V) for V in V_list]
    for V in Vs:
        if np.linalg.norm(V - V.conj().T) > 1e-10 * max(1.0, np.linalg.norm(V)):
            raise ValueError("noise coupling operators must be Hermitian")
    if n_realizations < 1:
        raise ValueError("need at least one realization")
    obs = obs_dict(observables)
    D = H0.shape[0]
    n = n_realizations
    nsteps = grid.n_steps
    dt = grid.dt
    samples = grid.sample_steps
    if isinstance(state0, PureState):
        pure = True
    elif isinstance(state0, Operator):
        pure = False
    else:
        pure = np.asarray(state0).ndim == 1
    noise_all = np.stack([draw_noise(noise, stream(seed, i), nsteps, len(Vs), dt) for i in range(n)])
    if pure:
        psi = np.tile(as_vector(state0), (n, 1))
    else:
        rho = np.tile(as_density(state0).data, (n, 1, 1))
    Vst = np.stack(Vs) if Vs else np.zeros((0, D, D))
    ex_samples = {k: [] for k in obs}
    mean_states = []

    def record():
        if pure:
            vals = {k: np.real(np.einsum("ni,ij,nj->n", psi.conj(), o, psi)) for k, o in obs.items()}
            if store_mean_states:
                mean_states.append(np.einsum("ni,nj->ij", psi, psi.conj()) / n)
        else:
            vals = {k: np.real(np.einsum("ij,nji->n", o, rho)) for k, o in obs.items()}
            if store_mean_states:
                mean_states.append(rho.mean(axis=0))
        for k, v in vals.items():
            ex_samples[k].append(v)

    record()
    sset = set(samples.tolist())
    for step in range(nsteps):
        Hs = H0[None] + np.einsum("nj,jab->nab", noise_all[:, step, :], Vst)
        w, Q = np.linalg.eigh(Hs)
        ph = np.exp(-1j * w * dt)
        U = np.einsum("nab,nb,ncb->nac", Q, ph, Q.conj())
        if pure:
            psi = np.einsum("nab,nb->na", U, psi)
        else:
            rho = U @ rho @ U.conj().transpose(0, 2, 1)
        if step + 1 in sset:
            record()
    mean, se, real = {}, {}, {}
    for k, v in ex_samples.items():
        arr = np.array(v)  # (t, n)
        mean[k] = arr.mean(axis=1)
        se[k] = arr.std(axis=1, ddof=1) / np.sqrt(n) if n > 1 else np.zeros(arr.shape[0])
        real[k] = arr.T
    return EnsembleSeries(grid.times, mean, se, np.array(mean_states) if store_mean_states else None, n,
                          {"seed": seed, "n": n, "dt": dt, "noise": noise.kind, "gamma": noise.gamma,
                           "tau": noise.tau},
                          real if keep_realizations else None)


def ou_noise_evolve(H0, V, gamma: float, tau: float, rho0, grid: TimeGrid, observables=None,
                    store_states: bool = True) -> EvolutionResult:
    """RK4 on d rho/dt = -i[H0,rho] - [V,zeta], d zeta/dt = -zeta/tau + (gamma/2tau)[V,rho]."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    H0 = as_array(H0)
    V = as_array(V)
    if np.linalg.norm(V - V.conj().T) > 1e-10 * max(1.0, np.linalg.norm(V)):
        raise ValueError("V must be Hermitian")
    D = H0.shape[0]
    I = np.eye(D)
    comH = np.kron(H0, I) - np.kron(I, H0.T)
    comV = np.kron(V, I) - np.kron(I, V.T)
    n2 = D * D
    M = np.zeros((2 * n2, 2 * n2), complex)
    M[:n2, :n2] = -1j * comH
    M[:n2, n2:] = -comV
    M[n2:, n2:] = -np.eye(n2) / tau
    M[n2:, :n2] = (gamma / (2 * tau)) * comV
    P = rk4_propagator(M, grid.dt)
    obs = obs_dict(observables)
    x = np.concatenate([as_density(rho0).data.reshape(-1), np.zeros(n2, complex)])
    sset = set(grid.sample_steps.tolist())
    states, ex = [], {k: [] for k in obs}

    def record(x):
        r = x[:n2].reshape(D, D)
        if store_states:
            states.append(r.copy())
        for k, o in obs.items():
            ex[k].append(float(np.real(np.sum(o * r.T))))

    record(x)
    for step in range(1, grid.n_steps + 1):
        x = P @ x
        if step in sset:
            record(x)
    return EvolutionResult(grid.times, {k: np.array(v) for k, v in ex.items()},
                           np.array(states) if store_states else None, {"tau": tau, "gamma": gamma})


# --- export -----------------------------------------------------------------

def series_csv(times, columns: Mapping[str, np.ndarray]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    names = list(columns)
    w.writerow(["t"] + names)
    for k, t in enumerate(times):
        w.writerow([f"{t:.17g}"] + [f"{float(columns[c][k]):.17g}" for c in names])
    return buf.getvalue()


def ensemble_csv(ens: EnsembleSeries) -> str:
    cols = {}
    for k in ens.mean:
        cols[f"{k}_mean"] = ens.mean[k]
        cols[f"{k}_stderr"] = ens.stderr[k]
    return series_csv(ens.times, cols)


def ensemble_meta_json(ens: EnsembleSeries) -> str:
    return json.dumps(ens.meta, sort_keys=True)
