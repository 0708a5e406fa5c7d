"""Liouvillian eigen-analysis with biorthogonal left/right eigen-operators."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import Operator, as_density, hermitize
from .generator import LindbladModel, Superoperator, devectorize, superoperator_matrix, superoperator_sparse, vectorize


class DefectiveLiouvillianError(np.linalg.LinAlgError):
    def __init__(self, clusters):
        self.clusters = clusters
        lines = [f"lambda~{c['center']:.6g} size={c['size']} min_sv={c['min_sv']:.2e}" for c in clusters]
        super().__init__("defective Liouvillian (non-diagonalizable cluster): " + "; ".join(lines))


@dataclass
class SpectralDecomposition:
    eigenvalues: np.ndarray
    right: np.ndarray          # columns are vec(r_lambda)
    left: np.ndarray           # columns are vec(l_lambda); <<l|r>> = left^H right
    dims: object
    kernel: np.ndarray         # boolean mask
    clusters: list = field(default_factory=list)
    condition: float = 1.0
    scale: float = 1.0
    unstable: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def D(self) -> int:
        return self.dims.total

    def right_op(self, k: int) -> Operator:
        return devectorize(self.right[:, k], self.dims)

    def left_op(self, k: int) -> Operator:
        return devectorize(self.left[:, k], self.dims)

    def biorthogonality(self) -> np.ndarray:
        return self.left.conj().T @ self.right

    def completeness_defect(self) -> float:
        P = self.right @ self.left.conj().T
        return float(np.linalg.norm(P - np.eye(P.shape[0])))


def _clusters(vals: np.ndarray, radius: float) -> list[np.ndarray]:
    n = len(vals)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    order = np.lexsort((vals.imag, vals.real))
    # union neighbours within radius (check a window in sorted order by real part)
    for a in range(n):
        ia = order[a]
        for b in range(a + 1, n):
            ib = order[b]
            if vals[ib].real - vals[ia].real > radius:
                break
            if abs(vals[ib] - vals[ia]) <= radius:
                parent[find(ib)] = find(ia)
    groups = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return [np.array(sorted(g)) for g in groups.values()]


def spectral_decomposition(S, tol: float = 1e-8, kernel_tol: float = 1e-9,
                           defect_tol: float = 1e-10) -> SpectralDecomposition:
    """Full eigendecomposition of a superoperator.

    ``tol`` sets the clustering radius relative to the spectral radius,
    ``kernel_tol`` the relative threshold for zero eigenvalues and
    ``defect_tol`` the smallest acceptable singular value of a multi-member
    cluster's normalized Gram matrix. Isolated eigenvalues are never defective;
    their worst left/right overlap is reported through ``condition``.
    """
    if isinstance(S, LindbladModel):
        S = superoperator_matrix(S)
    M = np.asarray(S.matrix)
    vals, vl, vr = sla.eig(M, left=True, right=True)
    scale = max(1.0, float(np.max(np.abs(vals))))
    radius = tol * scale
    kernel = np.abs(vals) < kernel_tol * scale
    vals = vals.copy()

    groups = _clusters(vals, radius)
    R = vr.copy()
    Lf = vl.copy()
    bad = []
    cond = 1.0
    vecI = np.eye(S.dims.total).reshape(-1)
    for g in groups:
        center = complex(np.mean(vals[g]))
        Rg = R[:, g]
        Lg = Lf[:, g]
        if np.all(kernel[g]) or abs(center) < kernel_tol * scale:
            kernel[g] = True
            vals[g] = 0.0 if np.all(np.abs(vals[g]) < kernel_tol * scale) else vals[g]
            # rotate the left kernel basis so that its first element is I
            Q, _ = np.linalg.qr(Lg)
            c = Q.conj().T @ vecI
            if np.linalg.norm(Q @ c - vecI) < 1e-6 * np.linalg.norm(vecI):
                if len(g) > 1:
                    # orthonormal complement of c inside span(Q)
                    _, _, Wh = np.linalg.svd(c.conj()[None, :])
                    comp = Q @ Wh[1:].conj().T
                    Lg = np.column_stack([vecI, comp])
                else:
                    Lg = vecI[:, None].astype(complex)
        G = Lg.conj().T @ Rg
        # scale-free conditioning of the pairing
        nl = np.linalg.norm(Lg, axis=0)
        nr = np.linalg.norm(Rg, axis=0)
        Gn = G / np.outer(nl, nr)
        smin = float(np.linalg.svd(Gn, compute_uv=False).min())
        if smin < defect_tol and len(g) > 1:
            bad.append({"center": center, "size": len(g), "min_sv": smin, "indices": g.tolist()})
            continue
        cond = max(cond, 1.0 / smin)
        # normalize so that <<l|r>> = I within the cluster; keep l fixed
        R[:, g] = Rg @ np.linalg.inv(G)
        Lf[:, g] = Lg
    if bad:
        raise DefectiveLiouvillianError(bad)
    unstable = vals[(vals.real > tol * scale) & ~kernel]
    # order: kernel first, then by decreasing real part
    order = np.lexsort((-vals.imag, -vals.real, ~kernel))
    return SpectralDecomposition(vals[order], R[:, order], Lf[:, order], S.dims, kernel[order],
                                 groups, cond, scale, unstable)


def eigenvalues(S) -> np.ndarray:
    if isinstance(S, LindbladModel):
        S = superoperator_matrix(S)
    return sla.eigvals(np.asarray(S.matrix))


def _kernel_projector(dec: SpectralDecomposition):
    Rk = dec.right[:, dec.kernel]
    Lk = dec.left[:, dec.kernel]
    return Rk, Lk


def _clean_state(a: np.ndarray) -> np.ndarray:
    h = hermitize(a)
    w, V = np.linalg.eigh(h)
    w = np.clip(w, 0.0, None)
    out = (V * w) @ V.conj().T
    tr = np.trace(out).real
    return out / tr if tr > 0 else out


def steady_states(dec: SpectralDecomposition, tol: float = 1e-10) -> list[Operator]:
    """Trace-one positive representatives spanning the kernel.

    Candidates are obtained by projecting pure inputs onto the kernel with the
    biorthogonal projector ``sum_k |r_k>><<l_k|`` (which maps states to steady
    states); a greedy rank-revealing pass keeps ``dim kernel`` independent ones,
    trying computational-basis inputs first.
    """
    Rk, Lk = _kernel_projector(dec)
    k = Rk.shape[1]
    D = dec.D
    if k == 0:
        return []
    cands = []
    for i in range(D):
        E = np.zeros((D, D), complex)
        E[i, i] = 1
        cands.append(E)
    if k > 1:
        for i in range(D):
            for j in range(i + 1, D):
                for ph in (1, 1j):
                    v = np.zeros(D, complex)
                    v[i] = 1
                    v[j] = ph
                    cands.append(np.outer(v, v.conj()) / 2)
    chosen = []
    basis = np.zeros((D * D, 0), complex)
    for E in cands:
        x = Rk @ (Lk.conj().T @ E.reshape(-1))
        tr = np.trace(x.reshape(D, D)).real
        if abs(tr) < 1e-8:
            continue
        rho = _clean_state(x.reshape(D, D) / tr)
        v = rho.reshape(-1)
        resid = v - basis @ (basis.conj().T @ v) if basis.shape[1] else v
        if np.linalg.norm(resid) > 1e-6 * np.linalg.norm(v):
            basis = np.column_stack([basis, resid / np.linalg.norm(resid)])
            chosen.append(Operator(rho, dec.dims))
            if len(chosen) == k:
                break
    return chosen


def conserved_operators(model_or_dec, tol: float = 1e-9) -> list[Operator]:
    """Hermitian basis of the kernel of the adjoint generator; first element is I."""
    dec = model_or_dec if isinstance(model_or_dec, SpectralDecomposition) else spectral_decomposition(
        superoperator_matrix(model_or_dec))
    Lk = dec.left[:, dec.kernel]
    D = dec.D
    # conserved O satisfy d<O>/dt = 0 with <O> = <<O^dag|rho>>, so O = l^dag
    mats = [devectorize(Lk[:, i]).data.conj().T for i in range(Lk.shape[1])]
    herm = []
    for m in mats:
        herm.append(hermitize(m))
        herm.append(hermitize(-1j * m))
    if not herm:
        return []
    X = np.stack([h.reshape(-1) for h in herm], axis=1)
    # keep I first, then an orthonormal complement
    vecI = np.eye(D).reshape(-1) / np.sqrt(D)
    X = X - np.outer(vecI, vecI.conj() @ X)
    U, s, _ = np.linalg.svd(X, full_matrices=False)
    r = int(np.sum(s > tol * max(1.0, s.max() if s.size else 1.0)))
    out = [Operator(np.eye(D), dec.dims)]
    for i in range(min(r, Lk.shape[1] - 1)):
        u = U[:, i].reshape(D, D)
        # fix the phase so the operator is Hermitian
        h = hermitize(u)
        if np.linalg.norm(h) < 1e-8:
            h = hermitize(-1j * u)
        out.append(Operator(h / np.linalg.norm(h), dec.dims))
    return out


@dataclass(frozen=True)
class GapReport:
    gap: float
    slowest: complex
    kernel_dim: int
    oscillating: tuple = ()


def liouvillian_gap(dec_or_vals, kernel_tol: float = 1e-9, imag_tol: float = 1e-9) -> GapReport:
    if isinstance(dec_or_vals, SpectralDecomposition):
        vals = dec_or_vals.eigenvalues
        scale = dec_or_vals.scale
        kmask = dec_or_vals.kernel.copy()
    else:
        if isinstance(dec_or_vals, (Superoperator, LindbladModel)):
            vals = eigenvalues(dec_or_vals)
        else:
            vals = np.asarray(dec_or_vals, complex)
        scale = max(1.0, float(np.max(np.abs(vals)))) if vals.size else 1.0
        kmask = np.abs(vals) < kernel_tol * scale
    osc = (~kmask) & (np.abs(vals.real) < imag_tol * scale)
    rest = vals[(~kmask) & (~osc)]
    if rest.size == 0:
        return GapReport(float("inf"), complex("nan"), int(kmask.sum()), tuple(vals[osc]))
    i = int(np.argmax(rest.real))
    return GapReport(float(-rest[i].real), complex(rest[i]), int(kmask.sum()), tuple(sorted(vals[osc], key=lambda z: z.imag)))


def evolve_spectral(dec: SpectralDecomposition, rho0, times) -> list[Operator]:
    v0 = vectorize(as_density(rho0))
    c = dec.left.conj().T @ v0
    out = []
    for t in np.atleast_1d(times):
        v = dec.right @ (c * np.exp(dec.eigenvalues * t))
        out.append(devectorize(v, dec.dims))
    return out


# --- sparse helpers for large D (kernel and slowest modes only) -----------

def steady_state_sparse(model: LindbladModel) -> Operator:
    """Unique steady state by a sparse LU solve with the trace row replaced."""
    D = model.D
    M = superoperator_sparse(model).tolil()
    b = np.zeros(D * D, complex)
    # replace the first row by the trace functional
    M[0, :] = 0
    idx = np.arange(D) * (D + 1)
    M[0, idx] = 1.0
    b[0] = 1.0
    x = spla.spsolve(sp.csc_matrix(M), b)
    rho = hermitize(x.reshape(D, D))
    return Operator(rho / np.trace(rho).real, model.dims)


def slowest_eigenvalues(model: LindbladModel, k: int = 6, sigma: float = 0.05) -> np.ndarray:
    """Eigenvalues closest to ``sigma`` by shift-invert Arnoldi."""
    M = superoperator_sparse(model).tocsc()
    vals = spla.eigs(M, k=k, sigma=sigma, which="LM", return_eigenvectors=False, tol=1e-12, maxiter=10000)
    return vals[np.argsort(-vals.real)]


def gap_auto(model: LindbladModel, dense_max: int = 1024, k: int = 8) -> GapReport:
    """Gap by dense diagonalization when D^2 <= dense_max, otherwise shift-invert."""
    if model.D ** 2 <= dense_max:
        return liouvillian_gap(eigenvalues(superoperator_matrix(model)))
    vals = slowest_eigenvalues(model, k=k)
    scale = max(1.0, np.abs(vals).max())
    kmask = np.abs(vals) < 1e-9 * scale
    # a trace-preserving generator always has a zero mode; keep the closest one out of the gap
    kmask[int(np.argmin(np.abs(vals)))] = True
    rest = vals[~kmask]
    i = int(np.argmax(rest.real))
    return GapReport(float(-rest[i].real), complex(rest[i]), int(kmask.sum()), ())


def spectrum_csv(dec: SpectralDecomposition) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["re", "im", "is_kernel", "trace_of_right"])
    D = dec.D
    idx = np.arange(D) * (D + 1)
    for k, lam in enumerate(dec.eigenvalues):
        tr = dec.right[idx, k].sum()
        w.writerow([f"{lam.real:.17g}", f"{lam.imag:.17g}", int(dec.kernel[k]), f"{abs(tr):.17g}"])
    return buf.getvalue()
