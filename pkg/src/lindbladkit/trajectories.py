"""Stochastic unravelings: quantum jumps (MCWF), jump SME with finite detector
efficiency, homodyne diffusion and quantum state diffusion.

All schemes evolve a batch of trajectories in lock-step with numpy, but every
trajectory draws from its own counter-based stream ``stream(seed, index)``
so results do not depend on batch composition or ordering.

Random-draw order per trajectory
--------------------------------
* mcwf: one uniform for the first norm threshold; at each jump one uniform
  for the channel, then one uniform for the next threshold.
* sme-jump: blocks of ``(steps, 2)`` uniforms per step: click test, then channel.
* homodyne: blocks of ``(steps, channels)`` standard normals.
* qsd: blocks of ``(steps, channels, 2)`` standard normals (real, imaginary).
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .core import as_density, as_vector
from .generator import LindbladModel, effective_hamiltonian
from .integrators import TimeGrid, obs_dict, stream

BLOCK = 1024


class NumericalFailure(RuntimeError):
    pass


@dataclass
class TrajectoryRecord:
    seed: int
    index: int
    scheme: str
    times: np.ndarray
    expect: dict
    jumps: list = field(default_factory=list)        # (time, channel)
    states: np.ndarray | None = None                 # kets (n_t, D) or matrices (n_t, D, D)
    norms: np.ndarray | None = None                  # mcwf: <phi|phi> at samples
    signal: np.ndarray | None = None                 # homodyne current per step
    meta: dict = field(default_factory=dict)

    def jump_times(self, channel: int | None = None) -> np.ndarray:
        return np.array([t for t, c in self.jumps if channel is None or c == channel])

    def cumulative_jumps(self) -> np.ndarray:
        jt = self.jump_times()
        return np.searchsorted(jt, self.times, side="right")


def _stderr(arr, axis=0):
    n = arr.shape[axis]
    if n < 2:
        return np.zeros(np.delete(arr.shape, axis))
    return arr.std(axis=axis, ddof=1) / np.sqrt(n)


class _Blocks:
    """Per-trajectory random blocks drawn in fixed order from each stream."""

    def __init__(self, rngs, kind: str, shape: tuple):
        self.rngs = rngs
        self.kind = kind
        self.shape = shape
        self.buf = None
        self.pos = BLOCK

    def next(self) -> np.ndarray:
        if self.pos >= BLOCK:
            if self.kind == "uniform":
                self.buf = np.stack([g.random((BLOCK,) + self.shape) for g in self.rngs], axis=1)
            else:
                self.buf = np.stack([g.standard_normal((BLOCK,) + self.shape) for g in self.rngs], axis=1)
            self.pos = 0
        out = self.buf[self.pos]
        self.pos += 1
        return out


def _ket_obs(psi: np.ndarray, obs: dict) -> dict:
    return {k: np.real(np.einsum("ni,ij,nj->n", psi.conj(), o, psi)) for k, o in obs.items()}


def _rho_obs(rho: np.ndarray, obs: dict) -> dict:
    return {k: np.real(np.einsum("ij,nji->n", o, rho)) for k, o in obs.items()}


def _initial_kets(psi0, n):
    v = as_vector(psi0)
    v = v / np.linalg.norm(v)
    return np.tile(v, (n, 1)).astype(complex)


def _taylor4(A: np.ndarray) -> np.ndarray:
    P = np.eye(A.shape[0], dtype=complex)
    term = np.eye(A.shape[0], dtype=complex)
    for k in range(1, 5):
        term = term @ A / k
        P = P + term
    return P


# --- quantum jumps ----------------------------------------------------------

def mcwf_ensemble(model: LindbladModel, psi0, grid: TimeGrid, n: int, seed: int, observables=None,
                  store_states: bool = False, first_index: int = 0, bisect_tol: float = 1e-10,
                  max_bisect: int = 60) -> list[TrajectoryRecord]:
    """Monte-Carlo wave-function trajectories with norm-crossing jump times.

    The unnormalized state evolves under H_eff with classic RK4 (which for a
    linear ODE is the 4th-order Taylor map).  When ``<phi|phi>`` falls below
    the threshold ``r``, the crossing time inside the step is located by
    bisection until ``|<phi|phi> - r| <= bisect_tol * r``.
    """
    obs = obs_dict(observables)
    A = -1j * effective_hamiltonian(model).data
    Ls = model.scaled_jumps()
    dt = grid.dt
    P = _taylor4(A * dt)
    PT = P.T.copy()
    rngs = [stream(seed, first_index + i) for i in range(n)]
    r = np.array([g.random() for g in rngs])
    phi = _initial_kets(psi0, n)
    jumps = [[] for _ in range(n)]
    sset = set(grid.sample_steps.tolist())
    ex = {k: [] for k in obs}
    norms, states = [], []

    def rk4(v, h):
        k1 = A @ v
        k2 = A @ (v + 0.5 * h * k1)
        k3 = A @ (v + 0.5 * h * k2)
        k4 = A @ (v + h * k3)
        return v + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)

    def nrm(v):
        return float(np.real(np.vdot(v, v)))

    def record():
        n2 = np.real(np.einsum("ni,ni->n", phi.conj(), phi))
        psi = phi / np.sqrt(n2)[:, None]
        norms.append(n2)
        for k, v in _ket_obs(psi, obs).items():
            ex[k].append(v)
        if store_states:
            states.append(psi.copy())

    def settle(i, v, t_start):
        """Advance trajectory i across one step that contains a crossing."""
        h_rem = dt
        ri = r[i]
        while h_rem > 0:
            end = rk4(v, h_rem)
            if nrm(end) >= ri:
                return end
            lo, hi = 0.0, h_rem
            cand = end
            for _ in range(max_bisect):
                mid = 0.5 * (lo + hi)
                w = rk4(v, mid)
                nw = nrm(w)
                if abs(nw - ri) <= bisect_tol * ri:
                    hi, cand = mid, w
                    break
                if nw > ri:
                    lo = mid
                else:
                    hi, cand = mid, w
            s = hi
            tj = t_start + (dt - h_rem) + s
            p = np.array([nrm(L @ cand) for L in Ls])
            tot = p.sum()
            if not np.isfinite(tot) or tot <= 0:
                raise NumericalFailure(f"trajectory {first_index + i}: zero jump probability at t={tj:.6g}, "
                                       f"norm {nrm(cand):.3e}, threshold {ri:.3e}")
            u = rngs[i].random()
            mu = int(np.searchsorted(np.cumsum(p) / tot, u, side="right"))
            mu = min(mu, len(Ls) - 1)
            v = Ls[mu] @ cand
            v = v / np.sqrt(nrm(v))
            jumps[i].append((tj, mu))
            ri = rngs[i].random()
            r[i] = ri
            h_rem -= s
            if h_rem <= 1e-15 * dt:
                break
        return v

    record()
    for step in range(grid.n_steps):
        new = phi @ PT
        n2 = np.real(np.einsum("ni,ni->n", new.conj(), new))
        cross = np.nonzero(n2 < r)[0]
        if cross.size:
            t_start = grid.t0 + step * dt
            for i in cross:
                new[i] = settle(i, phi[i], t_start)
        phi = new
        if step + 1 in sset:
            record()

    times = grid.times
    out = []
    for i in range(n):
        out.append(TrajectoryRecord(
            seed=seed, index=first_index + i, scheme="mcwf", times=times,
            expect={k: np.array([row[i] for row in v]) for k, v in ex.items()},
            jumps=jumps[i],
            states=np.array([s[i] for s in states]) if store_states else None,
            norms=np.array([row[i] for row in norms]),
            meta={"dt": dt}))
    return out


def mcwf_run(model, psi0, grid, seed, index: int = 0, observables=None, store_states: bool = True):
    return mcwf_ensemble(model, psi0, grid, 1, seed, observables, store_states, first_index=index)[0]


# --- jump SME with detector efficiency ---------------------------------------

def sme_jump_ensemble(model: LindbladModel, rho0, efficiencies, grid: TimeGrid, n: int, seed: int,
                      observables=None, store_states: bool = False, first_index: int = 0,
                      max_jump_prob: float = 0.1) -> list[TrajectoryRecord]:
    """Conditional density matrices under partial photodetection.

    Between clicks the unnormalized state follows the linear no-click
    generator ``-i(H_eff rho - rho H_eff^dag) + sum (1-eta) L rho L^dag``,
    stepped with RK4.  The norm lost in a step is the click probability
    (to leading order ``sum eta <L^dag L> dt``); on a click the channel is
    chosen with weight ``eta_mu <L_mu^dag L_mu>`` and rho -> L rho L^dag / Tr.
    At unit efficiency pure states stay pure; at zero efficiency the scheme
    is RK4 on the Lindblad equation.
    """
    D = model.D
    Ls = model.scaled_jumps()
    C = len(Ls)
    eta = np.broadcast_to(np.asarray(efficiencies, float), (C,)).copy()
    if np.any(eta < 0) or np.any(eta > 1):
        raise ValueError("efficiencies must lie in [0, 1]")
    obs = obs_dict(observables)
    dt = grid.dt
    Heff = effective_hamiltonian(model).data
    Hd = Heff.conj().T
    LdL = [L.conj().T @ L for L in Ls]
    Lun = [(1 - e, L, L.conj().T) for e, L in zip(eta, Ls) if e < 1]

    def f(r):
        out = -1j * (Heff @ r - r @ Hd)
        for w, L, Ld in Lun:
            out = out + w * (L @ r @ Ld)
        return out

    rngs = [stream(seed, first_index + i) for i in range(n)]
    blocks = _Blocks(rngs, "uniform", (2,))
    rho = np.tile(as_density(rho0).data.astype(complex), (n, 1, 1))
    jumps = [[] for _ in range(n)]
    sset = set(grid.sample_steps.tolist())
    ex = {k: [] for k in obs}
    states = []

    def record():
        for k, v in _rho_obs(rho, obs).items():
            ex[k].append(v)
        if store_states:
            states.append(rho.copy())

    record()
    for step in range(grid.n_steps):
        u = blocks.next()  # (n, 2): click test, channel choice
        k1 = f(rho)
        k2 = f(rho + 0.5 * dt * k1)
        k3 = f(rho + 0.5 * dt * k2)
        k4 = f(rho + dt * k3)
        new = rho + (dt / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        tr = np.real(np.einsum("nii->n", new))
        p = np.clip(1.0 - tr, 0.0, None) if C else np.zeros(n)
        if p.size and p.max() > max_jump_prob:
            raise ValueError(f"jump probability per step {p.max():.3f} exceeds {max_jump_prob}; use a smaller dt")
        hit = np.nonzero(u[:, 0] < p)[0]
        t_jump = grid.t0 + (step + 1) * dt
        for i in hit:
            w = np.array([eta[mu] * np.real(np.trace(LdL[mu] @ new[i])) for mu in range(C)])
            mu = int(np.searchsorted(np.cumsum(w) / w.sum(), u[i, 1], side="right"))
            mu = min(mu, C - 1)
            new[i] = Ls[mu] @ new[i] @ Ls[mu].conj().T
            jumps[i].append((t_jump, mu))
        tr = np.real(np.einsum("nii->n", new))
        new = new / tr[:, None, None]
        rho = 0.5 * (new + new.conj().transpose(0, 2, 1))
        if step + 1 in sset:
            record()
    out = []
    for i in range(n):
        out.append(TrajectoryRecord(
            seed=seed, index=first_index + i, scheme="sme-jump", times=grid.times,
            expect={k: np.array([row[i] for row in v]) for k, v in ex.items()}, jumps=jumps[i],
            states=np.array([s[i] for s in states]) if store_states else None,
            meta={"dt": dt, "efficiencies": eta.tolist()}))
    return out


def sme_jump_run(model, rho0, efficiencies, grid, seed, index: int = 0, observables=None,
                 store_states: bool = True) -> TrajectoryRecord:
    return sme_jump_ensemble(model, rho0, efficiencies, grid, 1, seed, observables, store_states, index)[0]


# --- diffusive unravelings ----------------------------------------------------

def _diffusive_guard(Heff: np.ndarray, Ls, dt: float, limit: float = 0.5):
    scale = np.linalg.norm(Heff, 2) + sum(np.linalg.norm(L, 2) ** 2 for L in Ls)
    if scale * dt > limit:
        raise ValueError(f"dt={dt} too large for the generator norm {scale:.3g}; use dt <= {limit / scale:.3g}")


def homodyne_ensemble(model: LindbladModel, psi0, grid: TimeGrid, n: int, seed: int, observables=None,
                      store_states: bool = False, first_index: int = 0, store_signal: bool = True):
    """Homodyne unraveling: fourth-order Taylor propagator for ``H_eff`` plus a
    Milstein step on the linear SSE driven by the measured record
    ``dY = 2<x> dt + dW``, renormalized each step.

    Each channel has its own real Wiener increment; the recorded current is
    ``J = dY/dt`` with ``x = (L + L^dag)/2``.
    """
    Ls = model.scaled_jumps()
    if not Ls:
        raise ValueError("homodyne unraveling needs at least one jump operator")
    C = len(Ls)
    Heff = effective_hamiltonian(model).data
    dt = grid.dt
    _diffusive_guard(Heff, Ls, dt)
    obs = obs_dict(observables)
    A = -1j * Heff
    LT = [L.T.copy() for L in Ls]
    rngs = [stream(seed, first_index + i) for i in range(n)]
    blocks = _Blocks(rngs, "normal", (C,))
    psi = _initial_kets(psi0, n)
    sset = set(grid.sample_steps.tolist())
    ex = {k: [] for k in obs}
    states = []
    sig = np.zeros((grid.n_steps, n, C)) if store_signal else None
    sq = np.sqrt(dt)
    PT = _taylor4(A * dt).T.copy()

    def record():
        for k, v in _ket_obs(psi, obs).items():
            ex[k].append(v)
        if store_states:
            states.append(psi.copy())

    record()
    for step in range(grid.n_steps):
        dW = blocks.next() * sq  # (n, C)
        dpsi = psi @ PT - psi
        for c in range(C):
            Lpsi = psi @ LT[c]
            x = np.real(np.einsum("ni,ni->n", psi.conj(), Lpsi))
            dY = 2 * x * dt + dW[:, c]
            dpsi += Lpsi * dY[:, None] + 0.5 * (Lpsi @ LT[c]) * (dY ** 2 - dt)[:, None]
            if store_signal:
                sig[step, :, c] = dY / dt
        psi = psi + dpsi
        psi /= np.linalg.norm(psi, axis=1)[:, None]
        if step + 1 in sset:
            record()
    out = []
    for i in range(n):
        out.append(TrajectoryRecord(
            seed=seed, index=first_index + i, scheme="homodyne", times=grid.times,
            expect={k: np.array([row[i] for row in v]) for k, v in ex.items()},
            states=np.array([s[i] for s in states]) if store_states else None,
            signal=sig[:, i, :] if store_signal else None, meta={"dt": dt}))
    return out


def homodyne_run(model, psi0, grid, seed, index: int = 0, observables=None, store_states: bool = True):
    return homodyne_ensemble(model, psi0, grid, 1, seed, observables, store_states, index)[0]


def qsd_ensemble(model: LindbladModel, psi0, grid: TimeGrid, n: int, seed: int, observables=None,
                 store_states: bool = False, first_index: int = 0):
    """Quantum state diffusion with complex increments ``dZ = (xi1 + i xi2) sqrt(dt/2)``.

    The ``H_eff`` part uses the fourth-order Taylor propagator and the noise
    terms an Euler-Maruyama increment; the state is renormalized each step.
    """
    Ls = model.scaled_jumps()
    C = len(Ls)
    Heff = effective_hamiltonian(model).data
    dt = grid.dt
    _diffusive_guard(Heff, Ls, dt)
    obs = obs_dict(observables)
    PT = _taylor4(-1j * Heff * dt).T.copy()
    LT = [L.T.copy() for L in Ls]
    rngs = [stream(seed, first_index + i) for i in range(n)]
    blocks = _Blocks(rngs, "normal", (C, 2))
    psi = _initial_kets(psi0, n)
    sset = set(grid.sample_steps.tolist())
    ex = {k: [] for k in obs}
    states = []
    s2 = np.sqrt(dt / 2)

    def record():
        for k, v in _ket_obs(psi, obs).items():
            ex[k].append(v)
        if store_states:
            states.append(psi.copy())

    record()
    for step in range(grid.n_steps):
        xi = blocks.next()  # (n, C, 2)
        dZ = (xi[..., 0] + 1j * xi[..., 1]) * s2
        dpsi = psi @ PT - psi
        for c in range(C):
            Lpsi = psi @ LT[c]
            m = np.einsum("ni,ni->n", psi.conj(), Lpsi)
            dpsi += (Lpsi - m[:, None] * psi) * dZ[:, c, None]
            dpsi += (np.conj(m)[:, None] * Lpsi - 0.5 * (np.abs(m) ** 2)[:, None] * psi) * dt
        psi = psi + dpsi
        psi /= np.linalg.norm(psi, axis=1)[:, None]
        if step + 1 in sset:
            record()
    out = []
    for i in range(n):
        out.append(TrajectoryRecord(
            seed=seed, index=first_index + i, scheme="qsd", times=grid.times,
            expect={k: np.array([row[i] for row in v]) for k, v in ex.items()},
            states=np.array([s[i] for s in states]) if store_states else None, meta={"dt": dt}))
    return out


def qsd_run(model, psi0, grid, seed, index: int = 0, observables=None, store_states: bool = True):
    return qsd_ensemble(model, psi0, grid, 1, seed, observables, store_states, index)[0]


SCHEMES = {
    "mcwf": mcwf_ensemble,
    "qsd": qsd_ensemble,
    "homodyne": homodyne_ensemble,
}


def run_ensemble(scheme: str, model, state0, grid, n, seed, observables=None, store_states=False,
                 efficiencies=1.0):
    if scheme == "sme-jump":
        return sme_jump_ensemble(model, state0, efficiencies, grid, n, seed, observables, store_states)
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    return SCHEMES[scheme](model, state0, grid, n, seed, observables, store_states)


# --- statistics ---------------------------------------------------------------

@dataclass
class EnsembleStats:
    n: int
    times: np.ndarray
    mean: dict
    stderr: dict
    mean_states: np.ndarray | None = None
    purity: np.ndarray | None = None
    jump_histogram: np.ndarray | None = None
    waiting_times: np.ndarray | None = None


def ensemble_average(records, observables=None) -> EnsembleStats:
    """Mean and standard error per observable and time (trajectory-index order)."""
    records = sorted(records, key=lambda r: r.index)
    if not records:
        raise ValueError("no records")
    schemes = {r.scheme for r in records}
    if len(schemes) > 1:
        raise ValueError(f"mixed schemes {schemes}")
    times = records[0].times
    if any(len(r.times) != len(times) or not np.allclose(r.times, times) for r in records):
        raise ValueError("records use different grids")
    n = len(records)
    mean, se = {}, {}
    names = records[0].expect.keys()
    for k in names:
        arr = np.stack([r.expect[k] for r in records])
        mean[k] = arr.mean(axis=0)
        se[k] = _stderr(arr)
    if observables is not None:
        for k, o in obs_dict(observables).items():
            if k in mean or records[0].states is None:
                continue
            vals = np.stack([_state_expect(r.states, o) for r in records])
            mean[k] = vals.mean(axis=0)
            se[k] = _stderr(vals)
    mean_states = purity = None
    if records[0].states is not None:
        acc = None
        for r in records:
            s = r.states
            x = np.einsum("ti,tj->tij", s, s.conj()) if s.ndim == 2 else s
            acc = x.copy() if acc is None else acc + x
        mean_states = acc / n
        purity = np.real(np.einsum("tij,tji->t", mean_states, mean_states))
    hist = waits = None
    if records[0].scheme in ("mcwf", "sme-jump"):
        counts = np.array([len(r.jumps) for r in records])
        hist = np.bincount(counts)
        waits = np.concatenate([np.diff(r.jump_times()) for r in records]) if n else np.zeros(0)
    return EnsembleStats(n, times, mean, se, mean_states, purity, hist, waits)


def _state_expect(states, o):
    if states.ndim == 2:
        return np.real(np.einsum("ti,ij,tj->t", states.conj(), o, states))
    return np.real(np.einsum("ij,tji->t", o, states))


@dataclass
class JumpStats:
    counts: np.ndarray
    per_channel: np.ndarray
    fano: float
    waiting_times: np.ndarray
    mean_waiting: float
    histogram: tuple


def jump_statistics(records, window: tuple | None = None, bins: int = 50) -> JumpStats:
    """Counts, Fano factor and waiting times for jumps inside ``window``.

    Waiting times are intervals between consecutive jumps that both fall in
    the window.
    """
    if any(r.scheme not in ("mcwf", "sme-jump") for r in records):
        raise ValueError("jump statistics need a jump-capable scheme")
    records = sorted(records, key=lambda r: r.index)
    lo, hi = window if window is not None else (-np.inf, np.inf)
    nch = 1 + max((c for r in records for _, c in r.jumps), default=0)
    counts = np.zeros(len(records), int)
    per = np.zeros((len(records), nch), int)
    waits = []
    for k, r in enumerate(records):
        sel = [(t, c) for t, c in r.jumps if lo <= t <= hi]
        counts[k] = len(sel)
        for _, c in sel:
            per[k, c] += 1
        ts = np.array([t for t, _ in sel])
        if ts.size > 1:
            waits.append(np.diff(ts))
    waits = np.concatenate(waits) if waits else np.zeros(0)
    m = counts.mean() if counts.size else 0.0
    fano = float(counts.var(ddof=1) / m) if counts.size > 1 and m > 0 else float("nan")
    hist = np.histogram(waits, bins=bins) if waits.size else (np.zeros(0), np.zeros(0))
    mw = float(waits.mean()) if waits.size else float("nan")
    return JumpStats(counts, per, fano, waits, mw, hist)


def bootstrap_fano(counts, n_boot: int = 2000, seed: int = 0) -> np.ndarray:
    counts = np.asarray(counts, float)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, counts.size, size=(n_boot, counts.size))
    s = counts[idx]
    return s.var(axis=1, ddof=1) / s.mean(axis=1)


# --- export -------------------------------------------------------------------

def record_csv(rec: TrajectoryRecord) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    names = list(rec.expect)
    w.writerow(["t"] + names + ["jumps"])
    cum = rec.cumulative_jumps()
    for k, t in enumerate(rec.times):
        w.writerow([f"{t:.17g}"] + [f"{float(rec.expect[c][k]):.17g}" for c in names] + [int(cum[k])])
    return buf.getvalue()


def record_json(rec: TrajectoryRecord) -> str:
    return json.dumps({"seed": rec.seed, "index": rec.index, "scheme": rec.scheme,
                       "jumps": [[float(t), int(c)] for t, c in rec.jumps], "meta": rec.meta}, sort_keys=True)


def stats_csv(stats: EnsembleStats) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    names = list(stats.mean)
    header = ["t"]
    for k in names:
        header += [f"{k}_mean", f"{k}_stderr"]
    if stats.purity is not None:
        header.append("purity_of_mean")
    w.writerow(header)
    for i, t in enumerate(stats.times):
        row = [f"{t:.17g}"]
        for k in names:
            row += [f"{stats.mean[k][i]:.17g}", f"{stats.stderr[k][i]:.17g}"]
        if stats.purity is not None:
            row.append(f"{stats.purity[i]:.17g}")
        w.writerow(row)
    return buf.getvalue()
