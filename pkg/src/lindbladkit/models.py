"""Model zoo, classical mean-field companions and Zeno measurement protocols.

Conventions: spin basis index 0 is the highest ``S_z`` state (spin up);
fermion modes use index 0 = empty with a Jordan-Wigner string over lower
modes; chain sites are numbered from 1 in observable names (``sz[1]``).
Every builder returns a :class:`LindbladModel` whose ``ops`` dict holds the
named observables (single operators, or lists for per-site operators).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import reduce
from typing import Callable

import numpy as np
import scipy.optimize as so

from .core import (Operator, PureState, as_array, as_density, as_vector, basis_state, build_boson_operators,
                   build_spin_operators, embed, pauli)
from .generator import LindbladModel
from .structure import restrict_to_subspace


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    name: str
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Family:
    builder: Callable
    defaults: dict
    doc: str


REGISTRY: dict[str, Family] = {}


def register(name: str, doc: str, **defaults):
    def deco(fn):
        REGISTRY[name] = Family(fn, defaults, doc)
        return fn
    return deco


def _check_params(name: str, params: dict) -> dict:
    fam = REGISTRY[name]
    unknown = set(params) - set(fam.defaults)
    if unknown:
        raise ModelError(f"{name}: unknown parameter(s) {sorted(unknown)}; allowed {sorted(fam.defaults)}")
    out = dict(fam.defaults)
    out.update(params)
    for k, v in out.items():
        if v is None or isinstance(v, (list, tuple)):
            continue
        if isinstance(v, bool) or not isinstance(v, (int, float, np.integer, np.floating)):
            raise ModelError(f"{name}: parameter {k!r} must be numeric, got {v!r}")
        if not np.isfinite(v):
            raise ModelError(f"{name}: parameter {k!r} must be finite")
    return out


def build_model(spec, **params) -> LindbladModel:
    if isinstance(spec, ModelSpec):
        name, params = spec.name, {**spec.params, **params}
    else:
        name = spec
    if name not in REGISTRY:
        raise ModelError(f"unknown model {name!r}; known: {', '.join(sorted(REGISTRY))}")
    p = _check_params(name, params)
    return REGISTRY[name].builder(**p)


def list_models() -> dict:
    return {k: {"doc": f.doc, "params": dict(f.defaults)} for k, f in sorted(REGISTRY.items())}


def _need(cond: bool, msg: str):
    if not cond:
        raise ModelError(msg)


def _int(x, name, lo=1):
    if float(x) != int(x) or int(x) < lo:
        raise ModelError(f"{name} must be an integer >= {lo}")
    return int(x)


# --- operator helpers -----------------------------------------------------------

def site_ops(op, n: int, d: int = 2) -> list[np.ndarray]:
    return [embed(op, i, [d] * n).data for i in range(n)]


def spin_chain_ops(n: int) -> dict:
    sx, sy, sz, sp, sm = pauli()
    return {"sx": site_ops(sx, n), "sy": site_ops(sy, n), "sz": site_ops(sz, n),
            "sp": site_ops(sp, n), "sm": site_ops(sm, n)}


def fermion_operators(n_modes: int) -> list[np.ndarray]:
    """Jordan-Wigner annihilators on 2**n_modes states (index 0 = empty per mode)."""
    c = np.array([[0, 1], [0, 0]], complex)
    Z = np.diag([1.0, -1.0]).astype(complex)
    I = np.eye(2)
    out = []
    for j in range(n_modes):
        mats = [Z] * j + [c] + [I] * (n_modes - j - 1)
        out.append(reduce(np.kron, mats))
    return out


def number_sector(n_modes: int, N: int) -> np.ndarray:
    """Isometry onto Fock states with exactly N particles."""
    idx = [k for k in range(2 ** n_modes) if bin(k).count("1") == N]
    V = np.zeros((2 ** n_modes, len(idx)))
    V[idx, np.arange(len(idx))] = 1.0
    return V


def _dag(A):
    return A.conj().T


# --- single qubits ------------------------------------------------------------

@register("qubit-decay", "H = (omega/2) sz, L = sqrt(gamma) s-", gamma=1.0, omega=0.0)
def qubit_decay(gamma, omega):
    sx, sy, sz, sp, sm = pauli()
    return LindbladModel(omega / 2 * sz, ((sm, gamma),), "qubit-decay",
                         {"sx": sx.data, "sy": sy.data, "sz": sz.data, "sp": sp.data, "sm": sm.data})


@register("qubit-dephasing", "H = (omega/2) sz, L = sqrt(gamma) sz", gamma=1.0, omega=0.0)
def qubit_dephasing(gamma, omega):
    sx, sy, sz, sp, sm = pauli()
    return LindbladModel(omega / 2 * sz, ((sz, gamma),), "qubit-dephasing",
                         {"sx": sx.data, "sy": sy.data, "sz": sz.data, "sp": sp.data, "sm": sm.data})


def bose_occupation(omega: float, T: float) -> float:
    if T <= 0:
        return 0.0
    return 1.0 / math.expm1(omega / T)


@register("finite-t-emission", "qubit emission and absorption at temperature T",
          gamma=1.0, omega=1.0, temperature=0.5, lamb_shift=0.0)
def finite_t_emission(gamma, omega, temperature, lamb_shift):
    _need(omega > 0, "omega must be positive")
    sx, sy, sz, sp, sm = pauli()
    nb = bose_occupation(omega, temperature)
    H = omega / 2 * sz + lamb_shift * (sp @ sm)
    return LindbladModel(H, ((sm, gamma * (nb + 1)), (sp, gamma * nb)), "finite-t-emission",
                         {"sx": sx.data, "sy": sy.data, "sz": sz.data, "nbar": nb})


@register("driven-spin-half", "H = omega Sx, L = sqrt(gamma) S-", omega=1.0, gamma=1.0)
def driven_spin_half(omega, gamma):
    s = build_spin_operators(0.5)
    sx, sy, sz, sp, sm = pauli()
    return LindbladModel(omega * s.Sx, ((s.Sminus, gamma),), "driven-spin-half",
                         {"sx": sx.data, "sy": sy.data, "sz": sz.data, "Sx": s.Sx.data, "Sz": s.Sz.data,
                          "ee": (sp @ sm).data})


REGISTRY["spin-half-driven"] = Family(driven_spin_half, dict(REGISTRY["driven-spin-half"].defaults),
                                     "alias of driven-spin-half")


@register("zeno-spin", "H = Sx, L = sqrt(gamma) Sz (spin-1/2)", gamma=20.0, omega=1.0)
def zeno_spin(gamma, omega):
    s = build_spin_operators(0.5)
    return LindbladModel(omega * s.Sx, ((s.Sz, gamma),), "zeno-spin",
                         {k: v.data for k, v in s.as_dict().items()})


@register("evans-qubit", "H = 0, L = 1 + s+", gamma=1.0)
def evans_qubit(gamma):
    sx, sy, sz, sp, sm = pauli()
    return LindbladModel(np.zeros((2, 2)), ((np.eye(2) + sp.data, gamma),), "evans-qubit",
                         {"sx": sx.data, "sy": sy.data, "sz": sz.data})


# --- cavities ---------------------------------------------------------------------

def _cavity_ops(cutoff):
    b = build_boson_operators(cutoff)
    a = b.a.data
    return {"a": a, "adag": _dag(a), "n": b.n.data, "x": (a + _dag(a)) / 2, "p": (a - _dag(a)) / 2j}


def auto_cutoff(expected_n: float, minimum: int = 16) -> int:
    return int(max(minimum, math.ceil(4 * expected_n)))


@register("damped-cavity", "H = omega a^dag a, L = sqrt(gamma) a", omega=1.0, gamma=1.0, cutoff=16)
def damped_cavity(omega, gamma, cutoff):
    ops = _cavity_ops(_int(cutoff, "cutoff", 2))
    return LindbladModel(omega * ops["n"], ((ops["a"], gamma),), "damped-cavity", ops)


@register("driven-cavity", "H = (Omega/2) a^dag + (Omega*/2) a, L = sqrt(gamma) a",
          omega_re=2.0, omega_im=0.0, gamma=1.0, cutoff=None)
def driven_cavity(omega_re, omega_im, gamma, cutoff):
    _need(gamma > 0, "gamma must be positive")
    Om = complex(omega_re, omega_im)
    alpha = -1j * Om / gamma
    cutoff = auto_cutoff(abs(alpha) ** 2) if cutoff is None else _int(cutoff, "cutoff", 2)
    ops = _cavity_ops(cutoff)
    H = Om / 2 * ops["adag"] + np.conj(Om) / 2 * ops["a"]
    ops["alpha_ss"] = alpha
    return LindbladModel(H, ((ops["a"], gamma),), "driven-cavity", ops)


@register("kerr", "H = -Delta n + (U/2) a^dag a^dag a a + F (a + a^dag), U = Ut/N, F = Ft sqrt(N)",
          delta=3.0, u_tilde=1.0, f_tilde=1.5, n_scale=1.0, gamma=1.0, cutoff=None)
def kerr(delta, u_tilde, f_tilde, n_scale, gamma, cutoff):
    _need(n_scale > 0 and gamma > 0, "n_scale and gamma must be positive")
    if cutoff is None:
        xs = [fp.x for fp in kerr_classical_fixed_points(delta, gamma, u_tilde, f_tilde)]
        cutoff = auto_cutoff(n_scale * max(xs + [0.0]))
    ops = _cavity_ops(_int(cutoff, "cutoff", 2))
    a, ad, n = ops["a"], ops["adag"], ops["n"]
    U = u_tilde / n_scale
    F = f_tilde * math.sqrt(n_scale)
    H = -delta * n + U / 2 * (ad @ ad @ a @ a) + F * (a + ad)
    return LindbladModel(H, ((a, gamma),), "kerr", ops)


# --- collective and paired spins ---------------------------------------------------

@register("collective-spin", "H = Sx, L = sqrt(gamma/S) S-", S=5.0, gamma=1.0)
def collective_spin(S, gamma):
    _need(S > 0, "S must be positive")
    s = build_spin_operators(S)
    return LindbladModel(s.Sx, ((s.Sminus, gamma / S),), "collective-spin",
                         {k: v.data for k, v in s.as_dict().items()})


@register("pt-spins", "H = g (SA+ SB- + h.c.), LA = sqrt(2 Gamma) SA+, LB = sqrt(2 Gamma) SB-",
          S=1.0, Gamma=1.0, g=1.0)
def pt_spins(S, Gamma, g):
    s = build_spin_operators(S)
    d = s.Sz.D
    A = {k: embed(v, 0, [d, d]).data for k, v in s.as_dict().items()}
    B = {k: embed(v, 1, [d, d]).data for k, v in s.as_dict().items()}
    H = g * (A["Splus"] @ B["Sminus"] + A["Sminus"] @ B["Splus"])
    ops = {f"{k}_A": v for k, v in A.items()} | {f"{k}_B": v for k, v in B.items()}
    return LindbladModel(Operator(H, [d, d]), ((A["Splus"], 2 * Gamma), (B["Sminus"], 2 * Gamma)), "pt-spins", ops)


def pt_order_parameter(model: LindbladModel, rho) -> float:
    r = as_density(rho).data
    a = np.real(np.trace(model.ops["Sminus_A"] @ model.ops["Splus_A"] @ r))
    b = np.real(np.trace(model.ops["Sminus_B"] @ model.ops["Splus_B"] @ r))
    return abs(a - b) / (a + b)


@register("qutrit-pair", "two spin-1 with exchange, zz coupling, field omega and L_i = sqrt(gamma) (S_iz)^2",
          delta=0.7, omega=1.0, gamma=1.0)
def qutrit_pair(delta, omega, gamma):
    s = build_spin_operators(1)
    o = {k: [embed(v, i, [3, 3]).data for i in range(2)] for k, v in s.as_dict().items()}
    H = (o["Splus"][0] @ o["Sminus"][1] + o["Sminus"][0] @ o["Splus"][1] + delta * o["Sz"][0] @ o["Sz"][1]
         + omega * (o["Sz"][0] + o["Sz"][1]))
    jumps = tuple((o["Sz"][i] @ o["Sz"][i], gamma) for i in range(2))
    return LindbladModel(Operator(H, [3, 3]), jumps, "qutrit-pair", o)


# --- engineered dark states ----------------------------------------------------------

def _pair_chain(l):
    n = 2 * l  # ordering (a1, b1, a2, b2, ...)
    ops = spin_chain_ops(n)
    return n, ops


@register("rainbow", "XY ladder of l pairs with correlated loss/gain L = u sa1- + v sb1+",
          l=2, u=1.0, v=0.6, J=1.0)
def rainbow(l, u, v, J):
    l = _int(l, "l")
    _need(u >= 0 and v >= 0, "u and v must be nonnegative")
    n, ops = _pair_chain(l)
    sp, sm = ops["sp"], ops["sm"]
    Js = np.broadcast_to(np.asarray(J, float), (max(l - 1, 1),))
    a = lambda i: 2 * (i - 1)
    b = lambda i: 2 * (i - 1) + 1
    H = sp[a(1)] @ sm[b(1)] + sm[a(1)] @ sp[b(1)]
    for i in range(1, l):
        for f in (a, b):
            X = sp[f(i)] @ sm[f(i + 1)]
            H = H + Js[i - 1] * (X + _dag(X))
    L = u * sm[a(1)] + v * sp[b(1)]
    return LindbladModel(Operator(H, [2] * n), ((L, 1.0),), "rainbow", ops)


def rainbow_state(l: int, u: float, v: float) -> PureState:
    """Product over pairs of v|up up> + (-1)^i u|down down>, normalized."""
    pair = []
    for i in range(1, l + 1):
        p = np.zeros(4, complex)
        p[0] = v          # |up up>
        p[3] = (-1) ** i * u  # |down down>
        pair.append(p / np.linalg.norm(p))
    return PureState(reduce(np.kron, pair), [2] * (2 * l))


@register("correlated-qubits", "H = s1+ s2- + h.c., L = u s1- + v s2+", u=1.0, v=1.0)
def correlated_qubits(u, v):
    m = rainbow(1, u, v, 1.0)
    return LindbladModel(m.H, m.jumps, "correlated-qubits", m.ops)


@register("eit", "three-level atom (g, e, r), H = Op|e><g| + Oc|e><r| + h.c., L = sqrt(gamma)|g><e|",
          omega_p=1.0, omega_c=1.0, gamma=1.0)
def eit(omega_p, omega_c, gamma):
    g, e, r = np.eye(3)
    H = omega_p * np.outer(e, g) + omega_c * np.outer(e, r)
    H = H + _dag(H)
    L = np.outer(g, e)
    ops = {"Pg": np.outer(g, g), "Pe": np.outer(e, e), "Pr": np.outer(r, r)}
    return LindbladModel(H, ((L, gamma),), "eit", ops)


@register("two-qubit-dfs", "H = s1+ s2- + h.c., L = sqrt(gamma)(s1z + s2z)", gamma=1.0)
def two_qubit_dfs(gamma):
    ops = spin_chain_ops(2)
    H = ops["sp"][0] @ ops["sm"][1] + ops["sm"][0] @ ops["sp"][1]
    return LindbladModel(Operator(H, [2, 2]), ((ops["sz"][0] + ops["sz"][1], gamma),), "two-qubit-dfs", ops)


# --- many-body chains ------------------------------------------------------------------

@register("tfi-chain", "sum h sz_i + J sx_i sx_{i+1}; L = sqrt(g+) s1+, sqrt(g-) s1-",
          n=3, h=1.0, J=1.0, gamma_plus=1.0, gamma_minus=0.5)
def tfi_chain(n, h, J, gamma_plus, gamma_minus):
    n = _int(n, "n", 2)
    ops = spin_chain_ops(n)
    hs = np.broadcast_to(np.asarray(h, float), (n,))
    Js = np.broadcast_to(np.asarray(J, float), (n - 1,))
    H = sum(hs[i] * ops["sz"][i] for i in range(n)) + sum(Js[i] * ops["sx"][i] @ ops["sx"][i + 1] for i in range(n - 1))
    return LindbladModel(Operator(H, [2] * n), ((ops["sp"][0], gamma_plus), (ops["sm"][0], gamma_minus)),
                         "tfi-chain", ops)


@register("xxz-boundary", "XXZ chain with pump at site 1 and loss at site n (or biased baths if mu is set)",
          n=3, delta=1.0, gamma_plus=1.0, gamma_minus=1.0, mu=None)
def xxz_boundary(n, delta, gamma_plus, gamma_minus, mu):
    n = _int(n, "n", 2)
    _need(n <= 8, "xxz-boundary is limited to n <= 8")
    ops = spin_chain_ops(n)
    H = sum(ops["sx"][i] @ ops["sx"][i + 1] + ops["sy"][i] @ ops["sy"][i + 1] + delta * ops["sz"][i] @ ops["sz"][i + 1]
            for i in range(n - 1))
    if mu is None:
        jumps = ((ops["sp"][0], gamma_plus), (ops["sm"][n - 1], gamma_minus))
    else:
        e = math.exp
        jumps = ((e(mu) * ops["sp"][0], 1.0), (e(-mu) * ops["sm"][0], 1.0),
                 (e(-mu) * ops["sp"][n - 1], 1.0), (e(mu) * ops["sm"][n - 1], 1.0))
    return LindbladModel(Operator(H, [2] * n), jumps, "xxz-boundary", ops)


@register("bh-dimer", "Bose-Hubbard dimer with incoherent hopping, all sectors N <= n_max",
          n_max=3, J=1.0, U=1.0, gamma_l=1.0, gamma_r=0.5)
def bh_dimer(n_max, J, U, gamma_l, gamma_r):
    n_max = _int(n_max, "n_max", 0)
    states = [(na, N - na) for N in range(n_max + 1) for na in range(N, -1, -1)]
    index = {s: k for k, s in enumerate(states)}
    D = len(states)
    adb = np.zeros((D, D))
    na = np.diag([s[0] for s in states]).astype(float)
    nb = np.diag([s[1] for s in states]).astype(float)
    for (x, y), k in index.items():
        if y > 0:
            adb[index[(x + 1, y - 1)], k] = math.sqrt((x + 1) * y)
    H = -J * (adb + adb.T) + U / 2 * (na @ (na - np.eye(D)) + nb @ (nb - np.eye(D)))
    ops = {"na": na, "nb": nb, "N": na + nb, "adag_b": adb, "Sz": (na - nb) / 2}
    return LindbladModel(H, ((adb, gamma_l), (adb.T, gamma_r)), "bh-dimer", ops)


def hubbard_ops(sites: int):
    """Annihilators c[(j, s)] on 2*sites modes ordered (1up, 1dn, 2up, 2dn, ...)."""
    cs = fermion_operators(2 * sites)
    return {(j, s): cs[2 * j + (0 if s == "up" else 1)] for j in range(sites) for s in ("up", "dn")}


@register("hubbard-dephasing", "open Hubbard chain with field B and dephasing L_j = sqrt(gamma) n_j; "
          "restricted to N particles unless N is None",
          sites=2, U=1.4, B=1.1, gamma=1.0, eps=(0.2, -0.25), N=2)
def hubbard_dephasing(sites, U, B, gamma, eps, N):
    sites = _int(sites, "sites", 1)
    _need(2 * sites <= 8, "full Fock construction is limited to 8 modes")
    c = hubbard_ops(sites)
    eps = np.broadcast_to(np.asarray(eps, float), (sites,))
    num = {k: _dag(v) @ v for k, v in c.items()}
    D = 2 ** (2 * sites)
    H = np.zeros((D, D), complex)
    for j in range(sites - 1):
        for s in ("up", "dn"):
            X = _dag(c[(j, s)]) @ c[(j + 1, s)]
            H -= X + _dag(X)
    for j in range(sites):
        nj = num[(j, "up")] + num[(j, "dn")]
        H += U * num[(j, "up")] @ num[(j, "dn")] + eps[j] * nj - B / 2 * (num[(j, "up")] - num[(j, "dn")])
    ops = {
        "n": [num[(j, "up")] + num[(j, "dn")] for j in range(sites)],
        "Sx": [(_dag(c[(j, "up")]) @ c[(j, "dn")] + _dag(c[(j, "dn")]) @ c[(j, "up")]) / 2 for j in range(sites)],
        "Sy": [(_dag(c[(j, "up")]) @ c[(j, "dn")] - _dag(c[(j, "dn")]) @ c[(j, "up")]) / 2j for j in range(sites)],
        "Sz": [(num[(j, "up")] - num[(j, "dn")]) / 2 for j in range(sites)],
    }
    ops["Splus"] = sum(_dag(c[(j, "up")]) @ c[(j, "dn")] for j in range(sites))
    ops["Stot_z"] = sum(ops["Sz"])
    ops["N"] = sum(ops["n"])
    full = LindbladModel(H, tuple((ops["n"][j], gamma) for j in range(sites)), "hubbard-dephasing", ops)
    if N is None:
        return full
    V = number_sector(2 * sites, _int(N, "N", 0))
    small = {k: ([V.T @ x @ V for x in v] if isinstance(v, list) else V.T @ v @ V) for k, v in ops.items()}
    return restrict_to_subspace(full, V, ops=small)


@register("tight-binding-loss", "open chain on sites -l..l with loss at the center; vacuum + one-particle sector",
          l=2, gamma=1.0, J=1.0)
def tight_binding_loss(l, gamma, J):
    l = _int(l, "l")
    n = 2 * l + 1
    D = n + 1  # index 0 = vacuum, 1 + (i + l) = particle on site i
    H = np.zeros((D, D))
    for k in range(1, n):
        H[k, k + 1] = H[k + 1, k] = -J
    L = np.zeros((D, D))
    L[0, 1 + l] = 1.0
    ops = {"n": [np.diag(np.eye(D)[1 + k]) for k in range(n)], "vac": np.diag(np.eye(D)[0])}
    ops["N"] = np.eye(D) - ops["vac"]
    return LindbladModel(H, ((L, gamma),), "tight-binding-loss", ops)


@register("lossy-fermion-chain", "spinless fermions c_i^dag c_{i+1} + h.c., L = sqrt(gamma) c_1 (full Fock space)",
          n=3, gamma=20.0, J=1.0)
def lossy_fermion_chain(n, gamma, J):
    n = _int(n, "n", 2)
    _need(n <= 8, "full Fock construction is limited to 8 modes")
    c = fermion_operators(n)
    H = sum(J * (_dag(c[i]) @ c[i + 1] + _dag(c[i + 1]) @ c[i]) for i in range(n - 1))
    ops = {"n": [_dag(x) @ x for x in c]}
    ops["N"] = sum(ops["n"])
    return LindbladModel(H, ((c[0], gamma),), "lossy-fermion-chain", ops)


@register("zeno-qutrit", "H = |0><1| + h.c. + K(|1><2| + h.c.), no dissipation", K=10.0)
def zeno_qutrit(K):
    H = np.zeros((3, 3))
    H[0, 1] = H[1, 0] = 1.0
    H[1, 2] = H[2, 1] = K
    return LindbladModel(H, (), "zeno-qutrit", {"P0": np.diag([1.0, 0, 0]), "P1": np.diag([0, 1.0, 0]),
                                                  "P2": np.diag([0, 0, 1.0])})


# --- classical companions --------------------------------------------------------------

@dataclass(frozen=True)
class FixedPoint:
    alpha: complex
    x: float
    stability: str
    jacobian_eigenvalues: tuple


def kerr_mean_field_rhs(alpha, delta, gamma, u_tilde, f_tilde):
    return (1j * delta - gamma / 2) * alpha - 1j * u_tilde * abs(alpha) ** 2 * alpha - 1j * f_tilde


def _kerr_jacobian(alpha, delta, gamma, u_tilde):
    # real 2x2 Jacobian of d(alpha)/dt in (Re alpha, Im alpha)
    a = alpha
    df_da = (1j * delta - gamma / 2) - 2j * u_tilde * abs(a) ** 2
    df_dac = -1j * u_tilde * a * a
    # f(a + e) ~ df_da e + df_dac e*
    J = np.empty((2, 2))
    for k, e in enumerate((1.0, 1j)):
        v = df_da * e + df_dac * np.conj(e)
        J[0, k], J[1, k] = v.real, v.imag
    return J


def kerr_classical_fixed_points(delta, gamma, u_tilde, f_tilde) -> list[FixedPoint]:
    """Fixed points of the rescaled mean-field Kerr equation from the real
    cubic in x = |alpha|^2, with linear stability of each root."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    coeffs = [u_tilde ** 2, -2 * u_tilde * delta, delta ** 2 + gamma ** 2 / 4, -f_tilde ** 2]
    while coeffs and coeffs[0] == 0:
        coeffs.pop(0)
    roots = np.roots(coeffs) if len(coeffs) > 1 else np.array([])
    xs = sorted({round(float(r.real), 12) for r in roots if abs(r.imag) < 1e-9 * max(1, abs(r)) and r.real >= -1e-14})
    out = []
    for x in xs:
        x = max(x, 0.0)
        alpha = -f_tilde / (u_tilde * x - delta - 0.5j * gamma)
        ev = np.linalg.eigvals(_kerr_jacobian(alpha, delta, gamma, u_tilde))
        if np.all(ev.real < 0):
            kind = "stable"
        elif np.all(ev.real > 0):
            kind = "unstable"
        else:
            kind = "saddle"
        out.append(FixedPoint(complex(alpha), float(abs(alpha) ** 2), kind, tuple(ev)))
    return out


def kerr_bistable_window(delta, gamma, u_tilde) -> tuple[float, float] | None:
    """Range of F~ with two stable branches (turning points of F~^2(x))."""
    # F^2 = x[(U x - D)^2 + g^2/4]; dF^2/dx = 3U^2 x^2 - 4 U D x + D^2 + g^2/4
    r = np.roots([3 * u_tilde ** 2, -4 * u_tilde * delta, delta ** 2 + gamma ** 2 / 4])
    r = np.sort(r[np.abs(r.imag) < 1e-12].real)
    if r.size < 2 or np.any(r < 0):
        return None
    f2 = lambda x: x * ((u_tilde * x - delta) ** 2 + gamma ** 2 / 4)
    return (math.sqrt(f2(r[1])), math.sqrt(f2(r[0])))


def collective_spin_rhs(s, gamma):
    sx, sy, sz = s
    return np.array([gamma * sx * sz, -sz + gamma * sy * sz, sy - gamma * (sx * sx + sy * sy)])


@dataclass(frozen=True)
class MeanFieldTrajectory:
    times: np.ndarray
    s: np.ndarray
    terminal_speed: float


def collective_spin_classical(s0, gamma: float, t_final: float, dt: float = 1e-3, stride: int = 100):
    """RK4 on the large-S mean-field equations of H = Sx, L = sqrt(gamma/S) S-."""
    s = np.asarray(s0, float)
    if abs(np.linalg.norm(s) - 1) > 1e-10:
        raise ValueError("s0 must be a unit vector")
    n = int(round(t_final / dt))
    ts, out = [0.0], [s.copy()]
    for k in range(n):
        k1 = collective_spin_rhs(s, gamma)
        k2 = collective_spin_rhs(s + 0.5 * dt * k1, gamma)
        k3 = collective_spin_rhs(s + 0.5 * dt * k2, gamma)
        k4 = collective_spin_rhs(s + dt * k3, gamma)
        s = s + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if (k + 1) % stride == 0 or k + 1 == n:
            ts.append((k + 1) * dt)
            out.append(s.copy())
    speed = float(np.linalg.norm(collective_spin_rhs(s, gamma)))
    return MeanFieldTrajectory(np.array(ts), np.array(out), speed)


# --- Zeno protocols ----------------------------------------------------------------------

def _expm_h(H, t):
    w, V = np.linalg.eigh(H)
    return (V * np.exp(-1j * w * t)) @ V.conj().T


def spin_axis_projectors(theta: float):
    """Projectors onto +/- along e = cos(theta) z - sin(theta) y for a spin-1/2."""
    sx, sy, sz, _, _ = pauli()
    n = math.cos(theta) * sz.data - math.sin(theta) * sy.data
    return [(np.eye(2) + n) / 2, (np.eye(2) - n) / 2]


@dataclass
class ZenoProtocol:
    H: np.ndarray
    tau: float
    n_measurements: int
    state0: object
    projectors: list | None = None              # fixed measurement
    schedule: Callable | None = None            # t -> list of projectors (rotating axis)
    mode: str = "ensemble"                      # ensemble | trajectory | postselect
    keep: int = 0                               # postselected outcome
    n_trajectories: int = 1000
    seed: int = 0
    observables: dict | None = None

    def __post_init__(self):
        if self.tau <= 0 or self.n_measurements < 1:
            raise ValueError("need tau > 0 and at least one measurement")
        if (self.projectors is None) == (self.schedule is None):
            raise ValueError("give exactly one of projectors or schedule")
        if self.mode not in ("ensemble", "trajectory", "postselect"):
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass(frozen=True)
class ZenoResult:
    times: np.ndarray
    survival: np.ndarray           # probability of the tracked outcome after each measurement
    expect: dict
    final_state: np.ndarray
    success: np.ndarray | None = None   # postselection success probability


def zeno_protocol_run(p: ZenoProtocol) -> ZenoResult:
    """Unitary steps exp(-i H tau) interleaved with projective measurements."""
    H = as_array(p.H)
    U = _expm_h(H, p.tau)
    projs = (lambda t: p.schedule(t)) if p.schedule is not None else (lambda t: p.projectors)
    obs = {k: as_array(v) for k, v in (p.observables or {}).items()}
    rho0 = as_density(p.state0).data
    # tracked outcome: the projector that holds the initial state at t = 0
    P0 = [as_array(x) for x in projs(0.0)]
    track = p.keep if p.mode == "postselect" else int(np.argmax([np.real(np.trace(P @ rho0)) for P in P0]))
    times = p.tau * np.arange(1, p.n_measurements + 1)
    surv = np.empty(p.n_measurements)
    ex = {k: np.empty(p.n_measurements) for k in obs}
    if p.mode == "trajectory":
        from .integrators import stream
        if as_array(p.state0).ndim != 1:
            raise ValueError("trajectory mode needs a pure initial state")
        psi0 = as_vector(p.state0)
        psis = np.tile(psi0 / np.linalg.norm(psi0), (p.n_trajectories, 1))
        rngs = [stream(p.seed, i) for i in range(p.n_trajectories)]
        for k, t in enumerate(times):
            psis = psis @ U.T
            Ps = [as_array(x) for x in projs(t)]
            probs = np.stack([np.real(np.einsum("ni,ij,nj->n", psis.conj(), P, psis)) for P in Ps], axis=1)
            u = np.array([g.random() for g in rngs])
            out = np.minimum((np.cumsum(probs, axis=1) < u[:, None]).sum(axis=1), len(Ps) - 1)
            for j, P in enumerate(Ps):
                sel = out == j
                if sel.any():
                    v = psis[sel] @ P.T
                    psis[sel] = v / np.linalg.norm(v, axis=1)[:, None]
            surv[k] = np.mean(out == track)
            for name, O in obs.items():
                ex[name][k] = np.mean(np.real(np.einsum("ni,ij,nj->n", psis.conj(), O, psis)))
        rho = np.einsum("ni,nj->ij", psis, psis.conj()) / p.n_trajectories
        return ZenoResult(times, surv, ex, rho)
    rho = rho0.astype(complex)
    success = np.empty(p.n_measurements) if p.mode == "postselect" else None
    acc = 1.0
    for k, t in enumerate(times):
        rho = U @ rho @ U.conj().T
        Ps = [as_array(x) for x in projs(t)]
        surv[k] = np.real(np.trace(Ps[track] @ rho))
        if p.mode == "postselect":
            acc *= surv[k]
            success[k] = acc
            rho = Ps[track] @ rho @ Ps[track] / surv[k]
        else:
            rho = sum(P @ rho @ P for P in Ps)
        for name, O in obs.items():
            ex[name][k] = np.real(np.trace(O @ rho))
    return ZenoResult(times, surv, ex, rho, success)


def zeno_projected_hamiltonian(H, projectors) -> np.ndarray:
    H = as_array(H)
    return sum(as_array(P) @ H @ as_array(P) for P in projectors)


def eigenprojectors(O, tol: float = 1e-9) -> list[np.ndarray]:
    O = as_array(O)
    if np.linalg.norm(O - O.conj().T) > tol * max(1.0, np.linalg.norm(O)):
        raise ValueError("observable must be Hermitian")
    w, V = np.linalg.eigh(O)
    out, start = [], 0
    for i in range(1, len(w) + 1):
        if i == len(w) or abs(w[i] - w[start]) > tol * max(1.0, abs(w).max()):
            out.append(V[:, start:i] @ V[:, start:i].conj().T)
            start = i
    return out


@dataclass(frozen=True)
class ZenoComparison:
    times: np.ndarray
    measured: np.ndarray     # populations (n_t, D) in the computational basis
    strong: np.ndarray
    projected: np.ndarray
    deviation: dict


def zeno_subspace_check(H, O, K: float, tau: float, t_final: float, state0,
                        postselect: int | None = None) -> ZenoComparison:
    """Compare (a) measuring O every tau, (b) evolving under H + K O and
    (c) evolving under the block-diagonal H_Z = sum_n P_n H P_n."""
    H = as_array(H)
    O = as_array(O)
    Ps = eigenprojectors(O)
    n = int(round(t_final / tau))
    rho0 = as_density(state0).data.astype(complex)
    mode = "ensemble" if postselect is None else "postselect"
    meas = zeno_protocol_run(ZenoProtocol(H, tau, n, rho0, projectors=Ps, mode=mode, keep=postselect or 0))
    times = meas.times
    HZ = zeno_projected_hamiltonian(H, Ps)
    HK = H + K * O

    def pops(Hx):
        w, V = np.linalg.eigh(Hx)
        c = V.conj().T @ rho0 @ V
        out = []
        for t in times:
            ph = np.exp(-1j * w * t)
            r = V @ (ph[:, None] * c * ph.conj()[None, :]) @ V.conj().T
            out.append(np.real(np.diag(r)))
        return np.array(out)

    # measured populations need the state after every step; rerun recording diagonals
    U = _expm_h(H, tau)
    rho = rho0.copy()
    mp = []
    for _ in range(n):
        rho = U @ rho @ U.conj().T
        if postselect is None:
            rho = sum(P @ rho @ P for P in Ps)
        else:
            P = Ps[postselect]
            rho = P @ rho @ P
            rho /= np.real(np.trace(rho))
        mp.append(np.real(np.diag(rho)))
    mp = np.array(mp)
    sp_, zp = pops(HK), pops(HZ)
    dev = {"measured_vs_projected": float(np.max(np.abs(mp - zp))),
           "strong_vs_projected": float(np.max(np.abs(sp_ - zp))),
           "measured_vs_strong": float(np.max(np.abs(mp - sp_)))}
    return ZenoComparison(times, mp, sp_, zp, dev)


def max_occupation(H, state0, level: int, t_max: float, n_grid: int = 20001) -> tuple[float, float]:
    """Maximum over t in [0, t_max] of |<level|exp(-iHt)|psi0>|^2 (grid + bounded refinement)."""
    H = as_array(H)
    psi0 = as_vector(state0)
    w, V = np.linalg.eigh(H)
    c = V.conj().T @ psi0
    row = V[level]

    def p(t):
        return float(abs(np.sum(row * np.exp(-1j * w * t) * c)) ** 2)

    ts = np.linspace(0, t_max, n_grid)
    vals = np.abs((row[None, :] * np.exp(-1j * np.outer(ts, w))) @ c) ** 2
    k = int(np.argmax(vals))
    lo, hi = ts[max(k - 1, 0)], ts[min(k + 1, n_grid - 1)]
    r = so.minimize_scalar(lambda t: -p(t), bounds=(lo, hi), method="bounded", options={"xatol": 1e-13})
    best = max((p(r.x), r.x), (vals[k], ts[k]))
    return float(best[0]), float(best[1])


# --- named initial states ---------------------------------------------------------------

def named_state(model: LindbladModel, name: str):
    """Initial states by name: "basis:k", "up"/"down" (all spins), "fock:n",
    "coherent:re,im", "mixed", or a dark/rainbow target for specific families."""
    D = model.D
    if name.startswith("basis:"):
        return basis_state(model.dims, int(name.split(":", 1)[1]))
    if name == "mixed":
        return Operator(np.eye(D) / D, model.dims)
    if name in ("up", "down"):
        # spin up = index 0 in every factor
        return basis_state(model.dims, 0 if name == "up" else D - 1)
    if name.startswith("fock:"):
        return basis_state(model.dims, int(name.split(":", 1)[1]))
    if name.startswith("coherent:"):
        from .core import coherent_state
        re_, im_ = (float(x) for x in name.split(":", 1)[1].split(","))
        return coherent_state(complex(re_, im_), D)
    raise ModelError(f"unknown state name {name!r}")
