"""Lindblad generators, vectorization and the superoperator matrix.

Vectorization is row-major: ``vec(rho)[i*D + j] = rho[i, j]``, so that
``vec(A rho B) = kron(A, B.T) @ vec(rho)``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .core import (DimensionError, HilbertDims, Operator, as_array, as_operator,
                   operator_from_dict, operator_to_dict)

# default memory budget for dense D^2 x D^2 work (bytes)
MEMORY_BUDGET = 2 * 1024 ** 3


class CapacityError(RuntimeError):
    pass


@dataclass(frozen=True)
class Jump:
    L: Operator
    gamma: float = 1.0

    @property
    def scaled(self) -> np.ndarray:
        return np.sqrt(self.gamma) * self.L.data


@dataclass(frozen=True)
class LindbladModel:
    H: Operator
    jumps: tuple = ()
    label: str = ""
    ops: dict = field(default_factory=dict, compare=False, repr=False)
    herm_tol: float = 1e-10

    def __post_init__(self):
        H = as_operator(self.H)
        object.__setattr__(self, "H", H)
        js = []
        for j in self.jumps:
            if isinstance(j, Jump):
                L, g = j.L, j.gamma
            elif isinstance(j, (tuple, list)):
                L, g = j
            else:
                L, g = j, 1.0
            L = as_operator(L, H.dims)
            g = float(g)
            if g < 0 or not np.isfinite(g):
                raise ValueError(f"jump rate must be nonnegative, got {g}")
            if L.D != H.D:
                raise DimensionError("jump operator dimension differs from H")
            js.append(Jump(Operator(L.data, H.dims), g))
        object.__setattr__(self, "jumps", tuple(js))
        h = H.data
        scale = max(1.0, np.linalg.norm(h))
        if np.linalg.norm(h - h.conj().T) > self.herm_tol * scale:
            raise ValueError("Hamiltonian is not Hermitian")

    @property
    def dims(self) -> HilbertDims:
        return self.H.dims

    @property
    def D(self) -> int:
        return self.H.D

    def scaled_jumps(self) -> list[np.ndarray]:
        return [j.scaled for j in self.jumps]

    def with_jumps(self, jumps) -> "LindbladModel":
        return LindbladModel(self.H, tuple(jumps), self.label, self.ops)


def effective_hamiltonian(model: LindbladModel) -> Operator:
    h = model.H.data.copy()
    for Ls in model.scaled_jumps():
        h = h - 0.5j * (Ls.conj().T @ Ls)
    return Operator(h, model.dims)


def apply_generator(model: LindbladModel, rho, adjoint: bool = False) -> Operator:
    r = as_array(rho)
    if r.shape != (model.D, model.D):
        raise DimensionError("state dimension differs from model")
    H = model.H.data
    if not adjoint:
        out = -1j * (H @ r - r @ H)
        for Ls in model.scaled_jumps():
            Ld = Ls.conj().T
            LdL = Ld @ Ls
            out += Ls @ r @ Ld - 0.5 * (LdL @ r + r @ LdL)
    else:
        out = 1j * (H @ r - r @ H)
        for Ls in model.scaled_jumps():
            Ld = Ls.conj().T
            LdL = Ld @ Ls
            out += Ld @ r @ Ls - 0.5 * (LdL @ r + r @ LdL)
    return Operator(out, model.dims)


def dissipator(L, rho) -> np.ndarray:
    L = as_array(L)
    r = as_array(rho)
    Ld = L.conj().T
    LdL = Ld @ L
    return L @ r @ Ld - 0.5 * (LdL @ r + r @ LdL)


def vectorize(rho) -> np.ndarray:
    a = as_array(rho)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError("vectorize expects a square matrix")
    return a.reshape(-1).copy()


def devectorize(v, dims=None) -> Operator:
    v = np.asarray(v, dtype=complex).reshape(-1)
    D = int(round(np.sqrt(v.size)))
    if D * D != v.size:
        raise DimensionError(f"length {v.size} is not a perfect square")
    return Operator(v.reshape(D, D), dims)


@dataclass(frozen=True)
class Superoperator:
    matrix: np.ndarray
    dims: HilbertDims
    row_major: bool = True

    @property
    def D(self) -> int:
        return self.dims.total

    def apply(self, rho) -> Operator:
        return devectorize(self.matrix @ vectorize(rho), self.dims)


def check_capacity(D: int, budget: int | None = None, copies: int = 3):
    budget = MEMORY_BUDGET if budget is None else budget
    need = copies * 16 * (D * D) ** 2
    if need > budget:
        raise CapacityError(f"dense superoperator for D={D} needs ~{need / 2**30:.1f} GiB "
                            f"(budget {budget / 2**30:.1f} GiB)")


def superoperator_matrix(model: LindbladModel, budget: int | None = None) -> Superoperator:
    D = model.D
    check_capacity(D, budget)
    Heff = effective_hamiltonian(model).data
    I = np.eye(D)
    M = 1j * (np.kron(I, Heff.conj()) - np.kron(Heff, I))
    for Ls in model.scaled_jumps():
        M += np.kron(Ls, Ls.conj())
    M.flags.writeable = False
    return Superoperator(M, model.dims)


def adjoint_superoperator(model: LindbladModel) -> np.ndarray:
    """Matrix of the adjoint generator in the same row-major convention."""
    D = model.D
    check_capacity(D)
    Heff = effective_hamiltonian(model).data
    I = np.eye(D)
    M = 1j * (np.kron(Heff.conj().T, I) - np.kron(I, Heff.T))
    for Ls in model.scaled_jumps():
        M += np.kron(Ls.conj().T, Ls.T)
    return M


def superoperator_sparse(model: LindbladModel) -> sp.csr_matrix:
    """Sparse version of :func:`superoperator_matrix` for large-D kernel/gap work."""
    D = model.D
    Heff = sp.csr_matrix(effective_hamiltonian(model).data)
    I = sp.identity(D, dtype=complex, format="csr")
    M = 1j * (sp.kron(I, Heff.conj()) - sp.kron(Heff, I))
    for Ls in model.scaled_jumps():
        Lsp = sp.csr_matrix(Ls)
        M = M + sp.kron(Lsp, Lsp.conj())
    return sp.csr_matrix(M)


# --- Kossakowski form -------------------------------------------------------

@dataclass(frozen=True)
class KossakowskiForm:
    C: np.ndarray
    M: tuple

    def __post_init__(self):
        C = np.asarray(self.C, complex)
        if C.shape != (len(self.M), len(self.M)):
            raise DimensionError("C must be square with one row per basis operator")
        if np.linalg.norm(C - C.conj().T) > 1e-10 * max(1.0, np.linalg.norm(C)):
            raise ValueError("Kossakowski matrix must be Hermitian")
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "M", tuple(as_operator(m) for m in self.M))


def kossakowski_generator(H, C, M, rho) -> np.ndarray:
    """-i[H,rho] + sum C_{nm} (M_n rho M_m^dag - 1/2 {M_m^dag M_n, rho})."""
    r = as_array(rho)
    h = as_array(H)
    out = -1j * (h @ r - r @ h)
    Ms = [as_array(m) for m in M]
    C = np.asarray(C, complex)
    for a, Ma in enumerate(Ms):
        for b, Mb in enumerate(Ms):
            c = C[a, b]
            if c == 0:
                continue
            Mbd = Mb.conj().T
            out += c * (Ma @ r @ Mbd - 0.5 * (Mbd @ Ma @ r + r @ Mbd @ Ma))
    return out


def diagonalize_kossakowski(C, M: Sequence, tol: float = 1e-10) -> list[tuple[Operator, float]]:
    """Return jumps ``(L'_mu, gamma'_mu)`` with ``L'_mu = sum_nu U[nu, mu] M_nu``.

    ``C = U diag(gamma') U^dag``; gamma' are the eigenvalues (so that
    gamma' D[L'] reproduces the non-diagonal form).
    """
    form = KossakowskiForm(C, tuple(M))
    w, U = np.linalg.eigh(form.C)
    scale = max(1.0, float(np.max(np.abs(w))))
    if w.min() < -tol * scale:
        raise ValueError(f"Kossakowski matrix has negative eigenvalue {w.min():.3e}")
    w = np.clip(w, 0.0, None)
    Ms = [m.data for m in form.M]
    dims = form.M[0].dims
    out = []
    for mu in np.argsort(-w):
        L = sum(U[nu, mu] * Ms[nu] for nu in range(len(Ms)))
        out.append((Operator(L, dims), float(w[mu])))
    return out


def shift_gauge(model: LindbladModel, shifts: Sequence[complex]) -> LindbladModel:
    """Apply L -> sqrt(g) L + a, H -> H + (1/2i) sum(a* sqrt(g) L - a sqrt(g) L^dag).

    Rates are folded into the returned jump operators (all rates become 1).
    """
    if len(shifts) != len(model.jumps):
        raise ValueError("one shift per jump operator is required")
    D = model.D
    H = model.H.data.copy()
    jumps = []
    for a, Ls in zip(shifts, model.scaled_jumps()):
        a = complex(a)
        H = H + (np.conj(a) * Ls - a * Ls.conj().T) / 2j
        jumps.append((Operator(Ls + a * np.eye(D), model.dims), 1.0))
    return LindbladModel(Operator(H, model.dims), tuple(jumps), model.label, model.ops)


# --- serialization ----------------------------------------------------------

def model_to_dict(model: LindbladModel) -> dict:
    return {
        "H": operator_to_dict(model.H),
        "jumps": [{"L": operator_to_dict(j.L), "gamma": j.gamma} for j in model.jumps],
        "dims": list(model.dims.factors),
    }


def model_from_dict(blob: dict) -> LindbladModel:
    H = operator_from_dict(blob["H"])
    jumps = tuple((operator_from_dict(j["L"]), float(j["gamma"])) for j in blob["jumps"])
    if list(H.dims.factors) != list(blob.get("dims", H.dims.factors)):
        raise DimensionError("dims field disagrees with H")
    return LindbladModel(H, jumps)


def model_to_json(model: LindbladModel) -> str:
    return json.dumps(model_to_dict(model))


def model_from_json(s: str) -> LindbladModel:
    return model_from_dict(json.loads(s))


def random_model(D: int, n_jumps: int = 2, rng=None, hermitian_jumps: bool = False) -> LindbladModel:
    rng = np.random.default_rng(rng)
    A = rng.normal(size=(D, D)) + 1j * rng.normal(size=(D, D))
    H = (A + A.conj().T) / 2
    jumps = []
    for _ in range(n_jumps):
        L = rng.normal(size=(D, D)) + 1j * rng.normal(size=(D, D))
        if hermitian_jumps:
            L = (L + L.conj().T) / 2
        jumps.append((Operator(L / np.sqrt(D)), float(rng.uniform(0.1, 1.0))))
    return LindbladModel(Operator(H), tuple(jumps))
