"""Dense operators and states on finite composite Hilbert spaces.

Conventions
-----------
* Spin basis is ordered from the highest to the lowest ``m``: index 0 is
  spin up (the "excited" level of a qubit), so ``Sz = diag(S, ..., -S)`` and
  ``S- = |down><up|`` for spin 1/2.
* Fock basis runs ``|0>, ..., |cutoff-1>``.
* Composite spaces are ordered left to right as in ``kron(A, B)``.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg as sla

GUARD_BAND_TOL = 1e-8


class DimensionError(ValueError):
    pass


class TruncationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class HilbertDims:
    factors: tuple[int, ...]

    def __post_init__(self):
        f = tuple(int(x) for x in self.factors)
        if not f or any(x < 1 for x in f):
            raise DimensionError(f"invalid factor list {self.factors!r}")
        object.__setattr__(self, "factors", f)

    @property
    def total(self) -> int:
        return int(np.prod(self.factors))

    @classmethod
    def of(cls, dims) -> "HilbertDims":
        if isinstance(dims, HilbertDims):
            return dims
        if isinstance(dims, (int, np.integer)):
            return cls((int(dims),))
        return cls(tuple(dims))

    def __len__(self):
        return len(self.factors)


class Operator:
    """Immutable dense complex matrix tagged with tensor-factor dimensions."""

    __slots__ = ("data", "dims")
    __array_priority__ = 100

    def __init__(self, data, dims=None):
        arr = np.array(data, dtype=complex)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise DimensionError(f"operator must be square, got shape {arr.shape}")
        d = HilbertDims.of(dims if dims is not None else arr.shape[0])
        if d.total != arr.shape[0]:
            raise DimensionError(f"dims {d.factors} do not match matrix side {arr.shape[0]}")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "dims", d)

    def __setattr__(self, key, value):
        raise AttributeError("Operator is immutable")

    @property
    def shape(self):
        return self.data.shape

    @property
    def D(self) -> int:
        return self.dims.total

    def dag(self) -> "Operator":
        return Operator(self.data.conj().T, self.dims)

    def tr(self) -> complex:
        return complex(np.trace(self.data))

    def norm(self) -> float:
        return float(np.linalg.norm(self.data))

    def is_hermitian(self, tol: float = 1e-10) -> bool:
        scale = max(1.0, np.linalg.norm(self.data))
        return bool(np.linalg.norm(self.data - self.data.conj().T) <= tol * scale)

    def _wrap(self, other):
        if isinstance(other, Operator):
            if other.dims.total != self.dims.total:
                raise DimensionError("dimension mismatch")
            return other.data
        return other

    def __add__(self, other):
        if np.isscalar(other):
            return Operator(self.data + other * np.eye(self.D), self.dims)
        return Operator(self.data + self._wrap(other), self.dims)

    __radd__ = __add__

    def __sub__(self, other):
        if np.isscalar(other):
            return Operator(self.data - other * np.eye(self.D), self.dims)
        return Operator(self.data - self._wrap(other), self.dims)

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self):
        return Operator(-self.data, self.dims)

    def __mul__(self, other):
        if isinstance(other, Operator):
            return Operator(self.data @ self._wrap(other), self.dims)
        return Operator(self.data * other, self.dims)

    def __rmul__(self, other):
        return Operator(other * self.data, self.dims)

    def __truediv__(self, other):
        return Operator(self.data / other, self.dims)

    def __matmul__(self, other):
        if isinstance(other, Operator):
            return Operator(self.data @ self._wrap(other), self.dims)
        if isinstance(other, PureState):
            return PureState(self.data @ other.amplitudes, self.dims, normalized=False)
        return self.data @ np.asarray(other)

    def __pow__(self, k: int):
        return Operator(np.linalg.matrix_power(self.data, int(k)), self.dims)

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, Operator):
            return NotImplemented
        return self.dims == other.dims and np.array_equal(self.data, other.data)

    __hash__ = None

    def __repr__(self):
        return f"Operator(dims={list(self.dims.factors)}, shape={self.data.shape})"


class DensityMatrix(Operator):
    """Operator that passed :func:`validate_density` at construction."""

    __slots__ = ()

    def __init__(self, data, dims=None, tol: float = 1e-8):
        super().__init__(data, dims)
        rep = validate_density(self, tol)
        if not rep.valid:
            raise ValueError(f"not a valid density matrix: {rep}")


@dataclass(frozen=True)
class PureState:
    amplitudes: np.ndarray
    dims: HilbertDims
    normalized: bool = True

    def __init__(self, amplitudes, dims=None, normalized: bool = True, tol: float = 1e-8):
        v = np.array(amplitudes, dtype=complex).reshape(-1)
        d = HilbertDims.of(dims if dims is not None else v.size)
        if d.total != v.size:
            raise DimensionError("amplitude length does not match dims")
        if normalized and abs(np.linalg.norm(v) - 1.0) > tol:
            raise ValueError(f"state norm {np.linalg.norm(v)} differs from 1")
        v.flags.writeable = False
        object.__setattr__(self, "amplitudes", v)
        object.__setattr__(self, "dims", d)
        object.__setattr__(self, "normalized", normalized)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def unit(self) -> "PureState":
        return PureState(self.amplitudes / self.norm(), self.dims)

    def proj(self) -> Operator:
        v = self.amplitudes
        return Operator(np.outer(v, v.conj()), self.dims)

    def overlap(self, other) -> complex:
        return complex(np.vdot(self.amplitudes, as_vector(other)))

    def __array__(self, dtype=None, copy=None):
        return self.amplitudes if dtype is None else self.amplitudes.astype(dtype)


# --- coercion helpers -------------------------------------------------------

def as_array(x) -> np.ndarray:
    if isinstance(x, Operator):
        return x.data
    return np.asarray(x, dtype=complex)


def as_vector(x) -> np.ndarray:
    if isinstance(x, PureState):
        return x.amplitudes
    return np.asarray(x, dtype=complex).reshape(-1)


def as_operator(x, dims=None) -> Operator:
    if isinstance(x, Operator):
        return x
    return Operator(x, dims)


def dims_of(x) -> HilbertDims:
    if isinstance(x, (Operator, PureState)):
        return x.dims
    a = np.asarray(x)
    return HilbertDims.of(a.shape[0])


def as_density(state, dims=None) -> Operator:
    """Return a density-matrix operator from a PureState, vector or matrix."""
    if isinstance(state, Operator):
        return state
    if isinstance(state, PureState):
        return state.proj()
    a = np.asarray(state, dtype=complex)
    if a.ndim == 1:
        return Operator(np.outer(a, a.conj()), dims)
    return Operator(a, dims)


# --- builders ---------------------------------------------------------------

@dataclass(frozen=True)
class SpinOps:
    Sx: Operator
    Sy: Operator
    Sz: Operator
    Splus: Operator
    Sminus: Operator

    def as_dict(self):
        return {"Sx": self.Sx, "Sy": self.Sy, "Sz": self.Sz, "Splus": self.Splus, "Sminus": self.Sminus}


def build_spin_operators(S) -> SpinOps:
    twoS = 2 * float(S)
    if twoS < 0 or abs(twoS - round(twoS)) > 1e-12:
        raise ValueError(f"spin must be a nonnegative half-integer, got {S}")
    twoS = int(round(twoS))
    S = twoS / 2
    m = S - np.arange(twoS + 1)
    d = twoS + 1
    Sz = np.diag(m).astype(complex)
    Sp = np.zeros((d, d), complex)
    for k in range(1, d):
        # <m+1|S+|m> with m = m[k], target index k-1
        Sp[k - 1, k] = np.sqrt(S * (S + 1) - m[k] * (m[k] + 1))
    Sm = Sp.conj().T
    Sx = (Sp + Sm) / 2
    Sy = (Sp - Sm) / 2j
    return SpinOps(*(Operator(x) for x in (Sx, Sy, Sz, Sp, Sm)))


def pauli():
    """Pauli matrices (sx, sy, sz, sp, sm) with sp = |up><down| = sx+i sy over 2."""
    s = build_spin_operators(0.5)
    return (2 * s.Sx, 2 * s.Sy, 2 * s.Sz, s.Splus, s.Sminus)


@dataclass(frozen=True)
class BosonOps:
    a: Operator
    adag: Operator
    n: Operator


def build_boson_operators(cutoff: int) -> BosonOps:
    cutoff = int(cutoff)
    if cutoff < 2:
        raise ValueError("boson cutoff must be at least 2")
    a = np.diag(np.sqrt(np.arange(1, cutoff)), 1).astype(complex)
    return BosonOps(Operator(a), Operator(a.conj().T), Operator(np.diag(np.arange(cutoff)).astype(complex)))


def identity(dims) -> Operator:
    d = HilbertDims.of(dims)
    return Operator(np.eye(d.total), d)


def kron(*ops) -> Operator:
    ops = [as_operator(o) for o in ops]
    data = reduce(np.kron, [o.data for o in ops])
    factors = sum((o.dims.factors for o in ops), ())
    return Operator(data, factors)


def kron_states(*states) -> PureState:
    vecs = [as_vector(s) for s in states]
    factors = sum((dims_of(s).factors if isinstance(s, PureState) else (len(as_vector(s)),) for s in states), ())
    v = reduce(np.kron, vecs)
    return PureState(v, factors, normalized=False)


def embed(op, site: int, dims) -> Operator:
    """Place a single-factor operator on ``site`` of a composite space."""
    d = HilbertDims.of(dims)
    o = as_array(op)
    if o.shape[0] != d.factors[site]:
        raise DimensionError(f"operator side {o.shape[0]} != factor {d.factors[site]}")
    mats = [np.eye(f) for f in d.factors]
    mats[site] = o
    return Operator(reduce(np.kron, mats), d)


def basis_state(dims, index) -> PureState:
    d = HilbertDims.of(dims)
    if not isinstance(index, (int, np.integer)):
        index = int(np.ravel_multi_index(tuple(index), d.factors))
    v = np.zeros(d.total, complex)
    v[index] = 1.0
    return PureState(v, d)


def coherent_state(alpha: complex, cutoff: int) -> PureState:
    """Truncated coherent state, renormalized over the kept Fock levels."""
    n = np.arange(cutoff)
    logfac = np.array([0.0] + list(np.cumsum(np.log(np.arange(1, cutoff)))))
    if alpha == 0:
        v = np.zeros(cutoff, complex)
        v[0] = 1
    else:
        v = np.exp(n * np.log(complex(alpha)) - 0.5 * logfac)
    return PureState(v / np.linalg.norm(v), cutoff)


def spin_coherent_state(S, theta: float, phi: float) -> PureState:
    """Spin-S state pointing along (theta, phi), built by rotating |S,S>."""
    s = build_spin_operators(S)
    d = s.Sz.D
    top = np.zeros(d, complex)
    top[0] = 1
    gen = -1j * theta * (np.sin(phi) * -s.Sx.data + np.cos(phi) * s.Sy.data)
    v = sla.expm(gen) @ top
    return PureState(v / np.linalg.norm(v), d)


def random_density(D: int, rng=None, rank=None) -> Operator:
    rng = np.random.default_rng(rng)
    k = D if rank is None else rank
    G = rng.normal(size=(D, k)) + 1j * rng.normal(size=(D, k))
    rho = G @ G.conj().T
    return Operator(rho / np.trace(rho).real)


def random_pure(D: int, rng=None) -> PureState:
    rng = np.random.default_rng(rng)
    v = rng.normal(size=D) + 1j * rng.normal(size=D)
    return PureState(v / np.linalg.norm(v), D)


def random_hermitian(D: int, rng=None, scale=1.0) -> Operator:
    rng = np.random.default_rng(rng)
    A = rng.normal(size=(D, D)) + 1j * rng.normal(size=(D, D))
    return Operator(scale * (A + A.conj().T) / 2)


# --- reductions and metrics -------------------------------------------------

def partial_trace(rho, keep: Iterable[int], dims=None) -> Operator:
    op = as_density(rho, dims)
    factors = op.dims.factors
    keep = sorted(set(int(k) for k in keep))
    n = len(factors)
    if any(k < 0 or k >= n for k in keep):
        raise DimensionError(f"invalid factor index in {keep} for {n} factors")
    t = op.data.reshape(factors + factors)
    # trace out from the highest index down so axis numbers stay valid
    cur = n
    for k in reversed(range(n)):
        if k in keep:
            continue
        t = np.trace(t, axis1=k, axis2=k + cur)
        cur -= 1
    kept = tuple(factors[k] for k in keep)
    if not kept:
        return Operator(np.array([[t]], complex))
    dk = int(np.prod(kept))
    return Operator(t.reshape(dk, dk), kept)


@dataclass(frozen=True)
class DensityReport:
    hermiticity_defect: float
    trace_defect: float
    min_eigenvalue: float
    valid: bool


def validate_density(op, tol: float = 1e-10) -> DensityReport:
    a = as_array(op)
    herm = float(np.linalg.norm(a - a.conj().T))
    trd = float(abs(np.trace(a) - 1.0))
    ev = np.linalg.eigvalsh((a + a.conj().T) / 2)
    scale = max(1.0, float(np.max(np.abs(ev))))
    lmin = float(ev[0])
    ok = herm <= tol * scale and trd <= tol and lmin >= -tol * scale
    return DensityReport(herm, trd, lmin, bool(ok))


@dataclass(frozen=True)
class StateMetrics:
    purity: float
    entropy: float


def state_metrics(rho) -> StateMetrics:
    a = as_array(as_density(rho))
    ev = np.linalg.eigvalsh((a + a.conj().T) / 2)
    ev = np.clip(ev, 0.0, None)
    purity = float(np.real(np.sum(a * a.T)))
    nz = ev[ev > 1e-300]
    entropy = float(-np.sum(nz * np.log(nz)))
    return StateMetrics(purity, max(entropy, 0.0))


def purity(rho) -> float:
    a = as_array(as_density(rho))
    return float(np.real(np.sum(a * a.T)))


def expectation(O, state) -> complex:
    o = as_array(O)
    if isinstance(state, PureState) or np.asarray(state).ndim == 1:
        v = as_vector(state)
        if v.size != o.shape[0]:
            raise DimensionError("dimension mismatch")
        return complex(np.vdot(v, o @ v))
    r = as_array(state)
    if r.shape != o.shape:
        raise DimensionError("dimension mismatch")
    return complex(np.sum(o * r.T))


def fidelity_pure(psi, rho) -> float:
    """<psi|rho|psi> for a normalized ket."""
    return float(np.real(expectation(as_density(rho), psi)))


def phase_aligned_distance(psi, phi) -> float:
    """min over global phase of || |psi> - e^{i a}|phi> ||."""
    a, b = as_vector(psi), as_vector(phi)
    ov = np.vdot(b, a)
    phase = ov / abs(ov) if abs(ov) > 0 else 1.0
    return float(np.linalg.norm(a - phase * b))


def hermitize(a: np.ndarray) -> np.ndarray:
    return (a + a.conj().T) / 2


# --- truncation guard -------------------------------------------------------

def top_level_population(state, cutoff_axes: Sequence[int] | None = None) -> float:
    """Population in the two highest levels of each listed tensor factor."""
    rho = as_density(state)
    factors = rho.dims.factors
    axes = range(len(factors)) if cutoff_axes is None else cutoff_axes
    worst = 0.0
    for ax in axes:
        red = partial_trace(rho, [ax]).data if len(factors) > 1 else rho.data
        p = np.real(np.diag(red))
        worst = max(worst, float(p[-2:].sum()))
    return worst


def check_guard_band(state, cutoff_axes=None, tol: float = GUARD_BAND_TOL, warn: bool = True) -> bool:
    pop = top_level_population(state, cutoff_axes)
    ok = pop < tol
    if not ok and warn:
        warnings.warn(f"Fock truncation: top-two-level population {pop:.3e} exceeds {tol:.0e}",
                      TruncationWarning, stacklevel=2)
    return ok


# --- serialization ----------------------------------------------------------

def operator_to_dict(op) -> dict:
    op = as_operator(op)
    return {"dims": list(op.dims.factors), "re": op.data.real.tolist(), "im": op.data.imag.tolist()}


def operator_from_dict(blob: dict) -> Operator:
    data = np.asarray(blob["re"], float) + 1j * np.asarray(blob["im"], float)
    return Operator(data, blob["dims"])


def operator_to_json(op) -> str:
    return json.dumps(operator_to_dict(op))


def operator_from_json(s: str) -> Operator:
    return operator_from_dict(json.loads(s))


def state_to_dict(psi: PureState) -> dict:
    v = as_vector(psi)
    return {"dims": list(dims_of(psi).factors), "re": v.real.tolist(), "im": v.imag.tolist()}
