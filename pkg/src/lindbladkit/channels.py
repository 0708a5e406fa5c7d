"""Kraus channels, Choi matrices and CPTP checks.

The Choi matrix uses the unnormalized maximally entangled vector
``|Omega> = sum_i |i>|i>``: ``C = sum_ij Phi(|i><j|) (x) |i><j|``, so a
trace-preserving map has ``Tr C = D``.  Eigenvalue witnesses are reported for
the Choi *state* ``C / D``, i.e. ``(Phi (x) I)`` applied to the normalized
maximally entangled state.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import DimensionError, HilbertDims, Operator, as_array, as_operator, operator_from_dict, operator_to_dict
from .generator import LindbladModel, effective_hamiltonian


class NotCompletelyPositiveError(ValueError):
    def __init__(self, witness: float):
        super().__init__(f"Choi matrix is not positive semidefinite; min Choi-state eigenvalue {witness:.6g}")
        self.witness = witness


@dataclass(frozen=True)
class KrausChannel:
    kraus: tuple

    def __init__(self, kraus: Sequence):
        ks = tuple(as_operator(k) for k in kraus)
        if not ks:
            raise ValueError("empty Kraus list")
        D = ks[0].D
        if any(k.D != D for k in ks):
            raise DimensionError("Kraus operators must share dimensions")
        object.__setattr__(self, "kraus", ks)

    @property
    def dims(self) -> HilbertDims:
        return self.kraus[0].dims

    @property
    def D(self) -> int:
        return self.kraus[0].D

    def tp_defect(self) -> float:
        S = sum(k.data.conj().T @ k.data for k in self.kraus)
        return float(np.linalg.norm(S - np.eye(self.D)))


@dataclass(frozen=True)
class ChoiMatrix:
    entries: np.ndarray
    dims: HilbertDims

    @property
    def D(self) -> int:
        return self.dims.total

    def state(self) -> np.ndarray:
        return self.entries / self.D


def apply_channel(ch: KrausChannel, rho) -> Operator:
    r = as_array(rho)
    if r.shape != (ch.D, ch.D):
        raise DimensionError("state dimension differs from channel")
    out = sum(k.data @ r @ k.data.conj().T for k in ch.kraus)
    return Operator(out, ch.dims)


def _choi_from_superop(M: np.ndarray, D: int) -> np.ndarray:
    # M[(a,b),(i,j)] = Phi(|i><j|)[a,b]  ->  C[(a,i),(b,j)]
    return M.reshape(D, D, D, D).transpose(0, 2, 1, 3).reshape(D * D, D * D)


def _superop_from_choi(C: np.ndarray, D: int) -> np.ndarray:
    return C.reshape(D, D, D, D).transpose(0, 2, 1, 3).reshape(D * D, D * D)


def choi_of(phi, dims=None) -> ChoiMatrix:
    """Choi matrix of a KrausChannel, a D^2 x D^2 row-major superoperator matrix,
    or a Python callable acting on D x D arrays (``dims`` required)."""
    if isinstance(phi, KrausChannel):
        D = phi.D
        vs = np.stack([k.data.reshape(-1) for k in phi.kraus], axis=1)
        return ChoiMatrix(vs @ vs.conj().T, phi.dims)
    if callable(phi):
        d = HilbertDims.of(dims)
        D = d.total
        C = np.zeros((D * D, D * D), complex)
        for i in range(D):
            for j in range(D):
                E = np.zeros((D, D), complex)
                E[i, j] = 1
                out = as_array(phi(E))
                C += np.kron(out, E)
        return ChoiMatrix(C, d)
    M = as_array(phi) if not hasattr(phi, "matrix") else np.asarray(phi.matrix)
    D = int(round(np.sqrt(M.shape[0])))
    if D * D != M.shape[0]:
        raise DimensionError("superoperator side is not a perfect square")
    d = HilbertDims.of(dims if dims is not None else getattr(phi, "dims", D))
    return ChoiMatrix(_choi_from_superop(M, D), d)


def superop_of_choi(C: ChoiMatrix) -> np.ndarray:
    return _superop_from_choi(C.entries, C.D)


def choi_min_eigenvalue(C: ChoiMatrix) -> float:
    E = C.entries
    return float(np.linalg.eigvalsh((E + E.conj().T) / 2)[0] / C.D)


def kraus_from_choi(C: ChoiMatrix, tol: float = 1e-12) -> KrausChannel:
    E = C.entries
    D = C.D
    if np.linalg.norm(E - E.conj().T) > 1e-10 * max(1.0, np.linalg.norm(E)):
        raise NotCompletelyPositiveError(float("nan"))
    w, V = np.linalg.eigh((E + E.conj().T) / 2)
    wmax = max(float(np.max(np.abs(w))), 1e-300)
    if w[0] < -tol * wmax:
        raise NotCompletelyPositiveError(float(w[0] / D))
    keep = w > tol * wmax
    ks = [np.sqrt(w[k]) * V[:, k].reshape(D, D) for k in np.nonzero(keep)[0][::-1]]
    if not ks:
        ks = [np.zeros((D, D), complex)]
    return KrausChannel([Operator(k, C.dims) for k in ks])


@dataclass(frozen=True)
class CPTPReport:
    cp: bool
    tp: bool
    min_choi_eigenvalue: float
    tp_defect: float


def cptp_check(ch, tol: float = 1e-10) -> CPTPReport:
    if isinstance(ch, KrausChannel):
        C = choi_of(ch)
        tpd = ch.tp_defect()
    else:
        C = ch
        D = C.D
        T = C.entries.reshape(D, D, D, D)
        S = np.einsum("aiaj->ji", T)  # sum K^dag K
        tpd = float(np.linalg.norm(S - np.eye(D)))
    lmin = choi_min_eigenvalue(C)
    return CPTPReport(bool(lmin >= -tol), bool(tpd <= tol), lmin, tpd)


def partial_transpose_map(X):
    return np.asarray(X).T


def lindblad_step_channel(model: LindbladModel, dt: float, max_tp_defect: float = 1e-2) -> KrausChannel:
    """Kraus set {1 - i H_eff dt, sqrt(gamma dt) L_mu} of one short time step."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    D = model.D
    Heff = effective_hamiltonian(model).data
    ks = [np.eye(D) - 1j * Heff * dt] + [np.sqrt(dt) * Ls for Ls in model.scaled_jumps()]
    ch = KrausChannel([Operator(k, model.dims) for k in ks])
    d = ch.tp_defect()
    if d > max_tp_defect:
        raise ValueError(f"dt={dt} too large: trace-preservation defect {d:.3e} exceeds {max_tp_defect:.1e}")
    return ch


def random_channel(D: int, n_kraus: int, rng=None) -> KrausChannel:
    """Random CPTP channel from an isometry (QR of a Gaussian matrix)."""
    rng = np.random.default_rng(rng)
    G = rng.normal(size=(n_kraus * D, D)) + 1j * rng.normal(size=(n_kraus * D, D))
    Q, _ = np.linalg.qr(G)
    return KrausChannel([Q[k * D:(k + 1) * D] for k in range(n_kraus)])


def channel_to_json(ch: KrausChannel) -> str:
    return json.dumps([operator_to_dict(k) for k in ch.kraus])


def channel_from_json(s: str) -> KrausChannel:
    return KrausChannel([operator_from_dict(b) for b in json.loads(s)])
