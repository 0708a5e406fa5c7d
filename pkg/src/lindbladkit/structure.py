"""Steady-state structure: algebra closure and Davies irreducibility, dark
states, strong/weak/dynamical symmetries and decoherence-free subspaces."""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .core import HilbertDims, Operator, PureState, as_array
from .generator import (CapacityError, LindbladModel, apply_generator, check_capacity,
                        effective_hamiltonian, superoperator_matrix)

# dense cross-checks against the spectrum are skipped above this D
CROSSCHECK_MAX_D = 64


def _comm(A, B):
    return A @ B - B @ A


def _norm(A) -> float:
    return float(np.linalg.norm(A))


def _kernel_dim(vals, tol=1e-9) -> int:
    scale = max(1.0, float(np.max(np.abs(vals))))
    return int(np.sum(np.abs(vals) < tol * scale))


def _spectrum(model: LindbladModel):
    if model.D > CROSSCHECK_MAX_D:
        return None
    try:
        check_capacity(model.D)
    except CapacityError:
        return None
    return sla.eigvals(superoperator_matrix(model).matrix)


# --- algebra closure --------------------------------------------------------

@dataclass(frozen=True)
class AlgebraClosure:
    basis: np.ndarray     # (dimension, D*D), orthonormal rows
    dimension: int
    generations: int


def _orth_rows(X: np.ndarray, tol: float) -> np.ndarray:
    if X.shape[0] == 0:
        return X
    _, s, Vh = np.linalg.svd(X, full_matrices=False)
    r = int(np.sum(s > tol * s[0])) if s.size and s[0] > 0 else 0
    return Vh[:r]


def algebra_closure(generators, tol: float = 1e-10, max_generations: int = 100) -> AlgebraClosure:
    """Orthonormal basis of the algebra generated by ``generators`` under sums
    and products.  The identity is not added unless it is generated."""
    gens = [as_array(g) for g in generators]
    if not gens:
        raise ValueError("need at least one generator")
    D = gens[0].shape[0]
    rows = []
    for g in gens:
        n = np.linalg.norm(g)
        if n > 0:
            rows.append(g.reshape(-1) / n)
    basis = _orth_rows(np.array(rows, complex).reshape(-1, D * D), tol)
    gen = 0
    while gen < max_generations:
        gen += 1
        mats = basis.reshape(-1, D, D)
        prods = np.einsum("aij,bjk->abik", mats, mats).reshape(-1, D * D)
        norms = np.linalg.norm(prods, axis=1)
        prods = prods[norms > tol] / norms[norms > tol, None]
        new = _orth_rows(np.vstack([basis, prods]), tol)
        if new.shape[0] == basis.shape[0]:
            break
        basis = new
        if basis.shape[0] == D * D:
            break
    return AlgebraClosure(basis, basis.shape[0], gen)


@dataclass(frozen=True)
class DaviesReport:
    irreducible: bool
    algebra_dim: int
    full_dim: int
    kernel_dim: int | None = None
    steady_min_eigenvalue: float | None = None
    consistent: bool | None = None


def davies_irreducible(model: LindbladModel, tol: float = 1e-10) -> DaviesReport:
    """Irreducible iff {sqrt(gamma) L_mu, H_eff} generate the full algebra."""
    gens = model.scaled_jumps() + [effective_hamiltonian(model).data]
    clo = algebra_closure(gens, tol)
    full = model.D ** 2
    irr = clo.dimension == full
    kd = smin = cons = None
    vals = _spectrum(model)
    if vals is not None:
        kd = _kernel_dim(vals)
        if kd == 1:
            from .spectra import spectral_decomposition, steady_states
            ss = steady_states(spectral_decomposition(superoperator_matrix(model)))[0]
            smin = float(np.linalg.eigvalsh(ss.data)[0])
        cons = (not irr) or (kd == 1 and smin is not None and smin > 0)
    return DaviesReport(irr, clo.dimension, full, kd, smin, cons)


# --- dark states -------------------------------------------------------------

@dataclass(frozen=True)
class DarkState:
    state: PureState
    jump_eigenvalues: tuple
    heff_eigenvalue: complex
    residual: float


def _eig_candidates(B: np.ndarray, radius: float) -> list[complex]:
    if B.size == 0:
        return []
    w = np.linalg.eigvals(B)
    out = []
    for z in w:
        if all(abs(z - c) > radius for c in out):
            out.append(complex(z))
    return out


def _joint_eigenspaces(ops, W: np.ndarray, tol: float, include_zero) -> list[tuple[list, np.ndarray]]:
    """Split span(W) into joint eigenspaces of ``ops`` (applied in order)."""
    branches = [([], W)]
    for k, X in enumerate(ops):
        scale = max(1.0, np.linalg.norm(X, 2))
        nxt = []
        for lams, V in branches:
            B = V.conj().T @ X @ V
            cands = _eig_candidates(B, 1e-6 * scale)
            if include_zero[k]:
                cands = [0j] + [c for c in cands if abs(c) > 1e-6 * scale]
            for lam in cands:
                A = (X - lam * np.eye(X.shape[0])) @ V
                N = sla.null_space(A, rcond=tol * scale / max(np.linalg.norm(A, 2), 1e-300)) \
                    if np.linalg.norm(A) > 0 else np.eye(V.shape[1])
                if N.shape[1] == 0:
                    continue
                sub = V @ N
                sub, _ = np.linalg.qr(sub)
                nxt.append((lams + [lam], sub))
        branches = nxt
        if not branches:
            break
    return branches


def dark_states(model: LindbladModel, tol: float = 1e-9) -> list[DarkState]:
    """Pure steady states as joint eigenvectors of every jump operator and H_eff.

    Each returned state is certified by ``||L(|psi><psi|)|| < 10 tol``.
    Degenerate joint eigenspaces yield one orthonormal basis vector each.
    """
    Ls = model.scaled_jumps()
    Heff = effective_hamiltonian(model).data
    D = model.D
    ops = Ls + [Heff]
    zero = [True] * len(Ls) + [False]
    out = []
    for lams, V in _joint_eigenspaces(ops, np.eye(D, dtype=complex), tol, zero):
        for j in range(V.shape[1]):
            psi = V[:, j]
            rho = np.outer(psi, psi.conj())
            res = _norm(apply_generator(model, rho).data)
            if res < 10 * tol * max(1.0, np.linalg.norm(Heff, 2)):
                out.append(DarkState(PureState(psi, model.dims), tuple(lams[:-1]), lams[-1], res))
            else:
                warnings.warn(f"joint eigenspace of dimension {V.shape[1]} (eigenvalues {lams}) "
                              f"failed the dark-state check, residual {res:.2e}")
    return out


# --- symmetries ----------------------------------------------------------------

@dataclass
class SymmetryReport:
    kind: str
    verdict: bool
    residuals: dict
    witnesses: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "verdict": self.verdict, "residuals": self.residuals,
                "witnesses": _jsonable(self.witnesses)}


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (complex, np.complexfloating)):
        return [float(np.real(x)), float(np.imag(x))]
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    return x


def _check_unitary(U: np.ndarray, tol: float):
    if np.linalg.norm(U.conj().T @ U - np.eye(U.shape[0])) > max(tol, 1e-9) * U.shape[0]:
        raise ValueError("symmetry candidate is not unitary")


def _phase_sectors(U: np.ndarray, tol: float = 1e-8):
    """Eigen-phases of a unitary grouped into sectors -> (phases, projectors)."""
    # the Schur vectors of a normal matrix are orthonormal eigenvectors
    T, Z = sla.schur(U, output="complex")
    w = np.diag(T)
    th = np.angle(w)
    groups = []
    for i, t in enumerate(th):
        for g in groups:
            if abs(np.exp(1j * t) - np.exp(1j * g[0])) < tol:
                g[1].append(i)
                break
        else:
            groups.append((t, [i]))
    phases = [g[0] for g in groups]
    projs = [Z[:, g[1]] @ Z[:, g[1]].conj().T for g in groups]
    return phases, projs


def check_strong_symmetry(model: LindbladModel, U, tol: float = 1e-9) -> SymmetryReport:
    U = as_array(U)
    _check_unitary(U, tol)
    H = model.H.data
    res = {"H": _norm(_comm(U, H))}
    ok = res["H"] < tol * max(1.0, _norm(H))
    for k, L in enumerate(model.scaled_jumps()):
        r = _norm(_comm(U, L))
        res[f"L{k}"] = r
        ok = ok and r < tol * max(1.0, _norm(L))
    wit = {}
    if ok:
        phases, projs = _phase_sectors(U)
        wit["sector_phases"] = phases
        wit["sector_dims"] = [int(round(np.trace(P).real)) for P in projs]
        vals = _spectrum(model)
        if vals is not None:
            kd = _kernel_dim(vals)
            wit["steady_state_count"] = kd
            wit["count_bound_holds"] = kd >= len(phases)
    return SymmetryReport("strong" if ok else "none", bool(ok), res, wit)


def _unitary_superop(U: np.ndarray) -> np.ndarray:
    # vec(U rho U^dag) = kron(U, U^*) vec(rho) in row-major order
    return np.kron(U, U.conj())


def check_weak_symmetry(model: LindbladModel, U, tol: float = 1e-9) -> SymmetryReport:
    U = as_array(U)
    _check_unitary(U, tol)
    S = superoperator_matrix(model).matrix
    X = _unitary_superop(U)
    r = _norm(S @ X - X @ S)
    ok = r < tol * max(1.0, _norm(S))
    wit = {}
    vals = _spectrum(model)
    if vals is not None and ok:
        from .spectra import spectral_decomposition, steady_states
        ss = steady_states(spectral_decomposition(superoperator_matrix(model)))
        if len(ss) == 1:
            rho = ss[0].data
            wit["steady_state_invariance"] = _norm(U @ rho @ U.conj().T - rho)
    return SymmetryReport("weak" if ok else "none", bool(ok), {"superoperator": r}, wit)


@dataclass(frozen=True)
class BlockReport:
    labels: np.ndarray        # phase label per operator-basis element (U eigenbasis)
    block_phases: tuple
    block_sizes: tuple
    off_block: float
    basis: np.ndarray         # unitary mapping U-eigenbasis to the computational basis


def weak_symmetry_blocks(model: LindbladModel, U, tol: float = 1e-9) -> BlockReport:
    """Block-diagonalize the superoperator by the phases e^{i(theta_a - theta_b)}."""
    U = as_array(U)
    rep = check_weak_symmetry(model, U, tol)
    if not rep.verdict:
        raise ValueError(f"not a weak symmetry (residual {rep.residuals['superoperator']:.3e})")
    T, Z = sla.schur(U, output="complex")
    th = np.angle(np.diag(T))
    D = U.shape[0]
    S = superoperator_matrix(model).matrix
    W = np.kron(Z, Z.conj())
    Sp = W.conj().T @ S @ W
    lab = np.exp(1j * (th[:, None] - th[None, :])).reshape(-1)
    phases = []
    idx = np.empty(D * D, int)
    for i, z in enumerate(lab):
        for k, p in enumerate(phases):
            if abs(z - p) < 1e-8:
                idx[i] = k
                break
        else:
            phases.append(z)
            idx[i] = len(phases) - 1
    mask = idx[:, None] != idx[None, :]
    off = float(np.max(np.abs(Sp[mask]))) if mask.any() else 0.0
    if off > tol * max(1.0, _norm(S)):
        raise ValueError(f"off-block entries {off:.3e} exceed tolerance")
    sizes = tuple(int(np.sum(idx == k)) for k in range(len(phases)))
    angles = tuple(float(np.angle(p)) for p in phases)
    order = np.argsort(angles, kind="stable")
    return BlockReport(np.angle(lab), tuple(angles[i] for i in order), tuple(sizes[i] for i in order), off, Z)


def check_dynamical_symmetry(model: LindbladModel, A, tol: float = 1e-9, ladder_tol: float = 1e-7) -> SymmetryReport:
    """Strong dynamical symmetry test: [A, L] = [A, L^dag] = 0 and [A, H] = omega A."""
    A = as_array(A)
    nA = _norm(A)
    if nA == 0:
        raise ValueError("A must be nonzero")
    H = model.H.data
    res = {}
    ok = True
    for k, L in enumerate(model.scaled_jumps()):
        r1 = _norm(_comm(A, L))
        r2 = _norm(_comm(A, L.conj().T))
        res[f"L{k}"] = r1
        res[f"L{k}_dag"] = r2
        ok = ok and max(r1, r2) < tol * max(1.0, nA * _norm(L))
    C = _comm(A, H)
    omega = complex(np.trace(A.conj().T @ C) / np.trace(A.conj().T @ A))
    res["H"] = _norm(C - omega * A)
    scale = max(1.0, _norm(H))
    ok = ok and res["H"] < tol * nA * scale and abs(omega.imag) < tol * scale and abs(omega) > tol * scale
    wit = {"omega": omega.real if abs(omega.imag) < tol * scale else omega}
    if ok:
        vals = _spectrum(model)
        if vals is not None:
            w = omega.real
            wit["ladder_found"] = bool(np.min(np.abs(vals - 1j * w)) < ladder_tol and
                                       np.min(np.abs(vals + 1j * w)) < ladder_tol)
    return SymmetryReport("dynamical" if ok else "none", bool(ok), res, wit)


# --- candidate library ---------------------------------------------------------

def phase_rotation(number_op, phi: float) -> np.ndarray:
    """exp(i phi N) for a Hermitian (typically diagonal) number operator."""
    N = as_array(number_op)
    w, V = np.linalg.eigh(N)
    return (V * np.exp(1j * phi * w)) @ V.conj().T


def site_permutation(perm, dims) -> np.ndarray:
    """Unitary permuting tensor factors: factor ``perm[i]`` moves to slot ``i``."""
    d = HilbertDims.of(dims)
    f = list(d.factors)
    if sorted(perm) != list(range(len(f))) or any(f[p] != f[0] for p in perm):
        raise ValueError("permutation must act on equal factors")
    n = d.total
    I = np.eye(n).reshape(f + [n])
    return I.transpose(list(perm) + [len(f)]).reshape(n, n)


def reflection(dims) -> np.ndarray:
    k = len(HilbertDims.of(dims).factors)
    return site_permutation(list(range(k))[::-1], dims)


def spin_flip_all(n_sites: int) -> np.ndarray:
    X = np.array([[0, 1], [1, 0]], complex)
    out = np.ones((1, 1), complex)
    for _ in range(n_sites):
        out = np.kron(out, X)
    return out


# --- decoherence-free subspaces -------------------------------------------------

@dataclass(frozen=True)
class DFS:
    basis: np.ndarray          # D x d, orthonormal, H-eigenvectors
    energies: np.ndarray
    kind: str                  # "null-space" or "eigen"
    predicted: np.ndarray      # -i(E_j - E_k)
    confirmed: bool | None = None


def _null(A: np.ndarray, atol: float) -> np.ndarray:
    """Null space with an absolute singular-value cutoff."""
    if A.size == 0 or np.linalg.norm(A) <= atol:
        return np.eye(A.shape[1], dtype=complex)
    _, s, Vh = np.linalg.svd(A)
    r = int(np.sum(s > atol))
    return Vh[r:].conj().T


def _components(P: np.ndarray, tol: float) -> list[np.ndarray]:
    """Connected components of basis indices coupled by nonzero entries of P."""
    sup = np.nonzero(np.real(np.diag(P)) > tol)[0]
    seen = set()
    comps = []
    for s in sup:
        if s in seen:
            continue
        stack, comp = [s], []
        seen.add(s)
        while stack:
            i = stack.pop()
            comp.append(i)
            for j in sup:
                if j not in seen and abs(P[i, j]) > tol:
                    seen.add(j)
                    stack.append(j)
        comps.append(np.array(sorted(comp)))
    return comps


def _confirm(vals, predicted, tol=1e-7) -> bool:
    return all(np.min(np.abs(vals - p)) < tol for p in predicted)


def dfs_detect(model: LindbladModel, tol: float = 1e-9) -> list[DFS]:
    """Null-space DFSs (joint kernel of all jumps, made H-invariant) plus
    one-dimensional DFSs with L psi = c psi, L^dag psi = c* psi."""
    D = model.D
    H = model.H.data
    Ls = model.scaled_jumps()
    scale = max(1.0, np.linalg.norm(H, 2))
    V = _null(np.vstack(Ls), tol * scale) if Ls else np.eye(D, dtype=complex)
    # largest H-invariant subspace of the joint kernel
    while V.shape[1]:
        Q = np.eye(D) - V @ V.conj().T
        N = _null(Q @ H @ V, tol * scale)
        if N.shape[1] == V.shape[1]:
            break
        V, _ = np.linalg.qr(V @ N)
    vals = _spectrum(model)
    out = []
    if V.shape[1]:
        P = V @ V.conj().T
        for comp in _components(np.abs(P) + np.abs(P @ H @ P), 1e-8):
            w, U = np.linalg.eigh(P[np.ix_(comp, comp)])
            B = np.zeros((D, int(np.sum(w > 0.5))), complex)
            B[comp] = U[:, w > 0.5]
            E, R = np.linalg.eigh(B.conj().T @ H @ B)
            basis = B @ R
            pred = (-1j * (E[:, None] - E[None, :])).reshape(-1)
            out.append(DFS(basis, E, "null-space", pred, None if vals is None else _confirm(vals, pred)))
    # one-dimensional eigen-type DFSs
    inside = V if V.shape[1] else np.zeros((D, 0))
    for ds in dark_states(model, tol):
        psi = ds.state.amplitudes
        if inside.shape[1] and np.linalg.norm(inside.conj().T @ psi) > 1 - 1e-8:
            continue
        lams = ds.jump_eigenvalues
        if all(abs(l) < tol for l in lams):
            continue
        if all(_norm(L.conj().T @ psi - np.conj(l) * psi) < 10 * tol for L, l in zip(Ls, lams)):
            E = float(np.real(np.vdot(psi, H @ psi)))
            out.append(DFS(psi[:, None], np.array([E]), "eigen", np.array([0j]),
                           None if vals is None else _confirm(vals, [0j])))
    return out


@dataclass(frozen=True)
class NoiselessSubsystemReport:
    verified: bool
    jump_residuals: tuple
    hamiltonian_residual: float


def verify_noiseless_subsystem(model: LindbladModel, dim_a: int, dim_b: int, basis=None,
                               tol: float = 1e-9) -> NoiselessSubsystemReport:
    """Check a proposed factorization A (x) B in which every jump acts on B only
    and H = H_A (x) 1 + 1 (x) H_B.  ``basis`` optionally maps the factorized
    basis to the model basis (columns)."""
    D = model.D
    if dim_a * dim_b != D:
        raise ValueError("dim_a * dim_b must equal D")
    V = np.eye(D) if basis is None else as_array(basis)

    def to_fact(X):
        return V.conj().T @ X @ V

    def split(X):
        T = X.reshape(dim_a, dim_b, dim_a, dim_b)
        xa = np.einsum("ibjb->ij", T) / dim_b
        xb = np.einsum("aiaj->ij", T) / dim_a
        return xa, xb

    jres = []
    for L in model.scaled_jumps():
        Lf = to_fact(L)
        _, lb = split(Lf)
        jres.append(_norm(Lf - np.kron(np.eye(dim_a), lb)))
    Hf = to_fact(model.H.data)
    ha, hb = split(Hf)
    c = np.trace(Hf) / D
    hres = _norm(Hf - np.kron(ha, np.eye(dim_b)) - np.kron(np.eye(dim_a), hb) + c * np.eye(D))
    ok = all(r < tol * max(1.0, _norm(model.H.data)) for r in jres + [hres])
    return NoiselessSubsystemReport(bool(ok), tuple(jres), hres)


# --- subspace restriction ---------------------------------------------------------

def restrict_to_subspace(model: LindbladModel, basis, tol: float = 1e-10, label: str | None = None,
                         ops: dict | None = None) -> LindbladModel:
    """Compress a model onto an invariant subspace spanned by the (orthonormal)
    columns of ``basis``.  Raises if H or any jump leaks out of it.  ``ops``
    replaces the observable namespace; by default the model's operators are
    compressed too."""
    V = as_array(basis)
    if np.linalg.norm(V.conj().T @ V - np.eye(V.shape[1])) > 1e-10:
        raise ValueError("basis must have orthonormal columns")
    P = np.eye(V.shape[0]) - V @ V.conj().T
    for name, X in [("H", model.H.data)] + [(f"L{k}", L) for k, L in enumerate(model.scaled_jumps())]:
        for Y in (X, X.conj().T):
            if np.linalg.norm(P @ Y @ V) > tol * max(1.0, np.linalg.norm(Y)):
                raise ValueError(f"{name} does not leave the subspace invariant")
    H = V.conj().T @ model.H.data @ V
    jumps = tuple((Operator(V.conj().T @ L @ V), 1.0) for L in model.scaled_jumps())
    if ops is None:
        ops = {k: ([V.conj().T @ as_array(x) @ V for x in o] if isinstance(o, list) else V.conj().T @ as_array(o) @ V)
               for k, o in model.ops.items() if isinstance(o, (list, np.ndarray, Operator))}
    new_ops = ops
    return LindbladModel(Operator(H), jumps, label or model.label, new_ops)


# --- report ------------------------------------------------------------------------

def structure_report(model: LindbladModel, symmetries: dict | None = None, tol: float = 1e-9) -> dict:
    """JSON-ready summary: irreducibility, dark states, DFSs and symmetry verdicts.

    ``symmetries`` maps a name to ``("strong"|"weak"|"dynamical", operator)``.
    """
    dav = davies_irreducible(model)
    out = {
        "model": model.label,
        "D": model.D,
        "davies": _jsonable(dav.__dict__),
        "dark_states": [{"amplitudes": _jsonable(d.state.amplitudes), "jump_eigenvalues": _jsonable(d.jump_eigenvalues),
                         "heff_eigenvalue": _jsonable(d.heff_eigenvalue), "residual": d.residual}
                        for d in dark_states(model, tol)],
        "dfs": [{"kind": f.kind, "dimension": f.basis.shape[1], "energies": _jsonable(f.energies),
                 "confirmed": f.confirmed} for f in dfs_detect(model, tol)],
        "symmetries": {},
    }
    checks = {"strong": check_strong_symmetry, "weak": check_weak_symmetry, "dynamical": check_dynamical_symmetry}
    for name, (kind, op) in (symmetries or {}).items():
        out["symmetries"][name] = checks[kind](model, op, tol).to_dict()
    return out


def structure_report_json(model, symmetries=None, tol: float = 1e-9) -> str:
    return json.dumps(structure_report(model, symmetries, tol), sort_keys=True, indent=1)
