"""Config-driven experiment runner.

    lindbladkit run --config exp.json --out results/
    lindbladkit sweep --config sweep.json --threads 4
    lindbladkit list-models [--json]
    lindbladkit validate-config --config exp.json

Exit codes: 0 ok, 2 config error, 3 capacity error, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import ast
import csv
import hashlib
import io
import json
import os
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy

from . import models as zoo
from . import structure, trajectories
from .core import Operator, PureState, as_density, expectation, purity
from .generator import CapacityError, LindbladModel, superoperator_matrix
from .integrators import TimeGrid, evolve_expm_series, evolve_rk4, series_csv
from .spectra import (DefectiveLiouvillianError, gap_auto, liouvillian_gap, slowest_eigenvalues,
                      spectral_decomposition, spectrum_csv, steady_state_sparse, steady_states)

__version__ = "0.1.0"

EXIT_OK, EXIT_CONFIG, EXIT_CAPACITY, EXIT_NUMERICAL = 0, 2, 3, 4
TASKS = ("spectrum", "evolve", "trajectories", "analyze", "zeno", "sweep")
STOCHASTIC = ("trajectories",)
DENSE_MAX = 4096  # D^2 above this switches spectrum/sweep to sparse solvers


class ConfigError(ValueError):
    pass


# --- observable expressions ------------------------------------------------------

class ExpressionError(ConfigError):
    pass


def _namespace(model: LindbladModel) -> dict:
    ns = {k: v for k, v in model.ops.items()}
    ns["H"] = model.H.data
    ns["I"] = np.eye(model.D)
    return ns


def _functions(model: LindbladModel) -> dict:
    dims = list(model.dims.factors)
    return {
        "dag": lambda a: np.conj(np.asarray(a)).T,
        "sum": lambda xs: sum(np.asarray(x) for x in xs),
        "phase_rotation": lambda nop, phi: structure.phase_rotation(nop, float(np.real(phi))),
        "reflection": lambda: structure.reflection(dims),
        "spin_flip_all": lambda: structure.spin_flip_all(len(dims)),
        "site_permutation": lambda *perm: structure.site_permutation([int(np.real(p)) - 1 for p in perm], dims),
    }


def evaluate(expr: str, model: LindbladModel):
    """Evaluate an operator expression over the model's named operators.

    Supported: names, ``name[k]`` (sites counted from 1), numbers including
    ``1j``, ``+ - * / **``, parentheses and the functions ``dag``, ``sum``,
    ``phase_rotation``, ``reflection``, ``spin_flip_all``, ``site_permutation``.
    ``*`` between two operators is the matrix product.
    """
    ns = _namespace(model)
    fns = _functions(model)
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as e:
        raise ExpressionError(f"cannot parse {expr!r}: {e.msg}") from None

    def is_op(x):
        return isinstance(x, np.ndarray) and x.ndim == 2

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float, complex)) \
                and not isinstance(node.value, bool):
            return node.value
        if isinstance(node, ast.Name):
            if node.id not in ns:
                raise ExpressionError(f"unknown operator {node.id!r} in {expr!r}; known: {', '.join(sorted(ns))}")
            return ns[node.id]
        if isinstance(node, ast.Subscript):
            base = ev(node.value)
            k = ev(node.slice)
            if not isinstance(base, (list, tuple)):
                raise ExpressionError(f"{expr!r}: only site lists can be indexed")
            if not isinstance(k, int) or not 1 <= k <= len(base):
                raise ExpressionError(f"{expr!r}: site index must be an integer in 1..{len(base)}")
            return np.asarray(base[k - 1])
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = ev(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.BinOp):
            a, b = ev(node.left), ev(node.right)
            if isinstance(a, (list, tuple)) or isinstance(b, (list, tuple)):
                raise ExpressionError(f"{expr!r}: index site lists before combining them")
            if isinstance(node.op, (ast.Add, ast.Sub)) and is_op(a) != is_op(b):
                # a scalar added to an operator means a multiple of the identity
                a, b = (a, b * np.eye(a.shape[0])) if is_op(a) else (a * np.eye(b.shape[0]), b)
            if isinstance(node.op, ast.Add):
                return a + b
            if isinstance(node.op, ast.Sub):
                return a - b
            if isinstance(node.op, ast.Mult):
                return a @ b if is_op(a) and is_op(b) else a * b
            if isinstance(node.op, ast.Div):
                if is_op(b):
                    raise ExpressionError(f"{expr!r}: cannot divide by an operator")
                return a / b
            if isinstance(node.op, ast.Pow):
                if is_op(a):
                    if not isinstance(b, int) or b < 0:
                        raise ExpressionError(f"{expr!r}: operator powers must be nonnegative integers")
                    return np.linalg.matrix_power(a, b)
                return a ** b
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and not node.keywords:
            if node.func.id not in fns:
                raise ExpressionError(f"unknown function {node.func.id!r} in {expr!r}")
            return fns[node.func.id](*[ev(a) for a in node.args])
        raise ExpressionError(f"unsupported syntax in {expr!r}: {type(node).__name__}")

    val = ev(tree)
    if isinstance(val, (list, tuple)):
        raise ExpressionError(f"{expr!r} is a site list; index it like name[1]")
    if not is_op(val):
        return val * np.eye(model.D)
    if val.shape != (model.D, model.D):
        raise ExpressionError(f"{expr!r} has shape {val.shape}, expected {(model.D, model.D)}")
    return val


# --- config ---------------------------------------------------------------------

def _need(cond, where, msg):
    if not cond:
        raise ConfigError(f"{where}: {msg}")


def _number(x, where, positive=False, integer=False):
    _need(isinstance(x, (int, float)) and not isinstance(x, bool), where, f"expected a number, got {x!r}")
    _need(np.isfinite(x), where, "must be finite")
    if integer:
        _need(float(x) == int(x), where, "must be an integer")
        x = int(x)
    if positive:
        _need(x > 0, where, "must be positive")
    return x


def _grid(blob, where="grid") -> dict:
    if isinstance(blob, list):
        _need(len(blob) == 3, where, "list form is [t0, t1, dt]")
        blob = {"t0": blob[0], "t1": blob[1], "dt": blob[2]}
    _need(isinstance(blob, dict), where, "expected [t0, t1, dt] or an object")
    extra = set(blob) - {"t0", "t1", "dt", "stride", "samples"}
    _need(not extra, where, f"unknown keys {sorted(extra)}")
    for k in ("t0", "t1", "dt"):
        _need(k in blob, where, f"missing {k!r}")
    out = {"t0": _number(blob["t0"], f"{where}.t0"), "t1": _number(blob["t1"], f"{where}.t1"),
           "dt": _number(blob["dt"], f"{where}.dt", positive=True)}
    _need(out["t1"] > out["t0"], where, "t1 must exceed t0")
    _need(out["dt"] <= out["t1"] - out["t0"], f"{where}.dt", "larger than the interval")
    if "stride" in blob:
        out["stride"] = _number(blob["stride"], f"{where}.stride", positive=True, integer=True)
    if "samples" in blob:
        out["samples"] = _number(blob["samples"], f"{where}.samples", positive=True, integer=True)
    return out


def make_grid(g: dict) -> TimeGrid:
    if "samples" in g:
        return TimeGrid.with_samples(g["t0"], g["t1"], g["dt"], g["samples"])
    return TimeGrid(g["t0"], g["t1"], g["dt"], g.get("stride", 1))


def _observables(blob, where="observables") -> dict:
    if blob is None:
        return {}
    if isinstance(blob, list):
        blob = {str(e): e for e in blob}
    _need(isinstance(blob, dict), where, "expected a list of expressions or a name->expression map")
    for k, v in blob.items():
        _need(isinstance(v, str), f"{where}.{k}", "expression must be a string")
    return dict(blob)


_TASK_KEYS = {
    "spectrum": {"dense_max", "observables", "n_slowest"},
    "evolve": {"grid", "initial_state", "observables", "method"},
    "trajectories": {"grid", "initial_state", "observables", "scheme", "n", "seed", "efficiencies",
                     "save_records", "jump_window"},
    "analyze": {"symmetries", "tol"},
    "zeno": {"hamiltonian", "measure", "tau", "n_measurements", "initial_state", "mode", "keep",
             "schedule", "n_trajectories", "seed", "observables"},
    "sweep": {"axis", "values", "series", "extract", "observables"},
}
_COMMON = {"model", "task", "output"}


@dataclass
class ExperimentConfig:
    model: zoo.ModelSpec
    task: str
    params: dict = field(default_factory=dict)
    output: str | None = None

    @classmethod
    def from_dict(cls, blob: dict) -> "ExperimentConfig":
        _need(isinstance(blob, dict), "config", "top level must be an object")
        _need("model" in blob, "model", "missing")
        _need("task" in blob, "task", "missing")
        m = blob["model"]
        if isinstance(m, str):
            m = {"name": m}
        _need(isinstance(m, dict) and isinstance(m.get("name"), str), "model", "expected a name or {name, params}")
        _need(not set(m) - {"name", "params"}, "model", f"unknown keys {sorted(set(m) - {'name', 'params'})}")
        _need(m["name"] in zoo.REGISTRY, "model.name",
              f"unknown model {m['name']!r}; see `lindbladkit list-models`")
        mp = m.get("params", {})
        _need(isinstance(mp, dict), "model.params", "expected an object")
        allowed = set(zoo.REGISTRY[m["name"]].defaults)
        for k, v in mp.items():
            _need(k in allowed, f"model.params.{k}", f"not a parameter of {m['name']}; allowed {sorted(allowed)}")
            ok = v is None or (isinstance(v, (int, float)) and not isinstance(v, bool)) or \
                (isinstance(v, list) and all(isinstance(e, (int, float)) for e in v))
            _need(ok, f"model.params.{k}", "must be numeric")
        task = blob["task"]
        _need(task in TASKS, "task", f"must be one of {', '.join(TASKS)}")
        extra = set(blob) - _COMMON - _TASK_KEYS[task]
        _need(not extra, "config", f"keys {sorted(extra)} are not valid for task {task!r}")
        params = {k: blob[k] for k in blob if k not in _COMMON}
        params = _validate_task(task, params)
        out = blob.get("output")
        _need(out is None or isinstance(out, str), "output", "expected a directory path")
        return cls(zoo.ModelSpec(m["name"], dict(mp)), task, params, out)

    def to_dict(self) -> dict:
        d = {"model": {"name": self.model.name, "params": dict(self.model.params)}, "task": self.task}
        d.update(self.params)
        if self.output is not None:
            d["output"] = self.output
        return d

    def canonical(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()


def _validate_task(task: str, p: dict) -> dict:
    p = dict(p)
    if "observables" in p:
        p["observables"] = _observables(p["observables"])
    if task in ("evolve", "trajectories"):
        _need("grid" in p, "grid", "missing")
        p["grid"] = _grid(p["grid"])
        _need(isinstance(p.get("initial_state", "basis:0"), str), "initial_state", "expected a state name")
    if task == "evolve":
        _need(p.get("method", "rk4") in ("rk4", "expm"), "method", "must be 'rk4' or 'expm'")
    if task == "trajectories":
        _need("seed" in p, "seed", "mandatory for stochastic tasks")
        p["seed"] = _number(p["seed"], "seed", integer=True)
        _need(p["seed"] >= 0, "seed", "must be nonnegative")
        _need("n" in p, "n", "missing")
        p["n"] = _number(p["n"], "n", positive=True, integer=True)
        _need(p.get("scheme", "mcwf") in trajectories.SCHEMES or p.get("scheme") == "sme-jump", "scheme",
              f"must be one of {', '.join(list(trajectories.SCHEMES) + ['sme-jump'])}")
        if "jump_window" in p:
            w = p["jump_window"]
            _need(isinstance(w, list) and len(w) == 2, "jump_window", "expected [t_lo, t_hi]")
    if task == "spectrum":
        if "dense_max" in p:
            p["dense_max"] = _number(p["dense_max"], "dense_max", positive=True, integer=True)
    if task == "analyze":
        syms = p.get("symmetries", {})
        _need(isinstance(syms, dict), "symmetries", "expected name -> {kind, operator}")
        for k, v in syms.items():
            _need(isinstance(v, dict) and v.get("kind") in ("strong", "weak", "dynamical"),
                  f"symmetries.{k}.kind", "must be strong, weak or dynamical")
            _need(isinstance(v.get("operator"), str), f"symmetries.{k}.operator", "expected an expression")
    if task == "zeno":
        for k in ("measure", "tau", "n_measurements"):
            _need(k in p, k, "missing")
        _need(isinstance(p["measure"], str), "measure", "expected an observable expression")
        p["tau"] = _number(p["tau"], "tau", positive=True)
        p["n_measurements"] = _number(p["n_measurements"], "n_measurements", positive=True, integer=True)
        mode = p.get("mode", "ensemble")
        _need(mode in ("ensemble", "trajectory", "postselect"), "mode", "must be ensemble, trajectory or postselect")
        if mode == "trajectory":
            _need("seed" in p, "seed", "mandatory for trajectory mode")
        if "schedule" in p:
            s = p["schedule"]
            _need(isinstance(s, dict) and s.get("kind") == "rotating-axis" and "omega" in s, "schedule",
                  "only {kind: rotating-axis, omega} is supported")
    if task == "sweep":
        _need("axis" in p and isinstance(p["axis"], str), "axis", "missing parameter name")
        vals = p.get("values")
        if isinstance(vals, dict):
            _need({"start", "stop", "num"} <= set(vals), "values", "range form needs start, stop, num")
            vals = np.linspace(vals["start"], vals["stop"], int(vals["num"])).tolist()
        _need(isinstance(vals, list) and len(vals) > 0, "values", "axis needs at least one value")
        for v in vals:
            _need(isinstance(v, (int, float)) and not isinstance(v, bool), "values", f"non-numeric axis value {v!r}")
        p["values"] = [float(v) for v in vals]
        if "series" in p:
            s = p["series"]
            _need(isinstance(s, dict) and isinstance(s.get("param"), str) and isinstance(s.get("values"), list)
                  and s["values"], "series", "expected {param, values}")
        ex = p.get("extract", ["gap"])
        ex = [ex] if isinstance(ex, str) else ex
        for e in ex:
            _need(e in ("gap", "purity", "order_parameter", "kernel_dim") or e.startswith("steady:"),
                  "extract", f"unknown quantity {e!r}")
        p["extract"] = ex
    return p


def load_config(path: str, seed: int | None = None) -> ExperimentConfig:
    try:
        with open(path) as f:
            blob = json.load(f)
    except OSError as e:
        raise ConfigError(f"config: cannot read {path}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"config: invalid JSON at line {e.lineno}: {e.msg}") from None
    if seed is not None and isinstance(blob, dict):
        if blob.get("task") in STOCHASTIC or "seed" in blob:
            blob["seed"] = seed
    cfg = ExperimentConfig.from_dict(blob)
    # parameter values and observables are checked against a built model up front
    model = _build(cfg.model)
    for name, e in cfg.params.get("observables", {}).items():
        evaluate(e, model)
    return cfg


def _build(spec: zoo.ModelSpec) -> LindbladModel:
    try:
        return zoo.build_model(spec)
    except zoo.ModelError as e:
        raise ConfigError(f"model.params: {e}") from None


# --- artifacts --------------------------------------------------------------------

@dataclass
class RunManifest:
    config_hash: str
    artifacts: dict
    versions: dict
    wall_time: float
    task: str

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True, indent=1)


class Artifacts:
    def __init__(self, out_dir: str):
        self.dir = out_dir
        self.files: dict[str, str] = {}
        os.makedirs(out_dir, exist_ok=True)

    def write(self, name: str, text: str):
        data = text.encode("utf-8")
        with open(os.path.join(self.dir, name), "wb") as f:
            f.write(data)
        self.files[name] = hashlib.sha256(data).hexdigest()


def _versions() -> dict:
    return {"lindbladkit": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def _initial(model, name):
    try:
        return zoo.named_state(model, name)
    except zoo.ModelError as e:
        raise ConfigError(f"initial_state: {e}") from None


def _ops(model, cfg_obs) -> dict:
    return {k: evaluate(e, model) for k, e in cfg_obs.items()}


def _expect_real(O, rho) -> float:
    return float(np.real(expectation(O, rho)))


def _task_spectrum(model, p, art):
    obs = _ops(model, p.get("observables", {}))
    summary = {"D": model.D}
    if model.D ** 2 <= p.get("dense_max", DENSE_MAX):
        dec = spectral_decomposition(superoperator_matrix(model))
        art.write("spectrum.csv", spectrum_csv(dec))
        g = liouvillian_gap(dec)
        ss = steady_states(dec)
        summary.update(method="dense", gap=g.gap, slowest=[g.slowest.real, g.slowest.imag],
                       kernel_dim=g.kernel_dim,
                       oscillating=[[z.real, z.imag] for z in g.oscillating])
    else:
        vals = slowest_eigenvalues(model, k=p.get("n_slowest", 8))
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["re", "im"])
        for z in vals:
            w.writerow([f"{z.real:.17g}", f"{z.imag:.17g}"])
        art.write("spectrum.csv", buf.getvalue())
        g = gap_auto(model, dense_max=0)
        ss = [steady_state_sparse(model)]
        summary.update(method="sparse", gap=g.gap, slowest=[g.slowest.real, g.slowest.imag],
                       kernel_dim=g.kernel_dim)
    summary["steady_states"] = [{"purity": purity(r), **{k: _expect_real(o, r) for k, o in obs.items()}}
                                for r in ss]
    art.write("summary.json", json.dumps(summary, sort_keys=True, indent=1))


def _task_evolve(model, p, art):
    grid = make_grid(p["grid"])
    obs = _ops(model, p.get("observables", {}))
    rho0 = _initial(model, p.get("initial_state", "basis:0"))
    if p.get("method", "rk4") == "rk4":
        res = evolve_rk4(model, rho0, grid, obs, store_states=False)
    else:
        res = evolve_expm_series(superoperator_matrix(model), rho0, grid.times, obs)
    art.write("evolution.csv", series_csv(res.times, res.expect))


def _task_trajectories(model, p, art, threads):
    grid = make_grid(p["grid"])
    obs = _ops(model, p.get("observables", {}))
    scheme = p.get("scheme", "mcwf")
    state = _initial(model, p.get("initial_state", "basis:0"))
    if scheme != "sme-jump" and not isinstance(state, PureState):
        raise ConfigError(f"initial_state: scheme {scheme!r} needs a pure state")
    n, seed = p["n"], p["seed"]
    # chunks are contiguous index ranges, so results do not depend on the thread count
    chunks = _chunks(n, threads)

    def run(chunk):
        lo, hi = chunk
        if scheme == "sme-jump":
            eff = p.get("efficiencies", 1.0)
            return trajectories.sme_jump_ensemble(model, as_density(state), eff, grid, hi - lo, seed, obs,
                                                  first_index=lo)
        return trajectories.SCHEMES[scheme](model, state, grid, hi - lo, seed, obs, first_index=lo)

    records = [r for part in _map(run, chunks, threads) for r in part]
    stats = trajectories.ensemble_average(records)
    art.write("ensemble.csv", trajectories.stats_csv(stats))
    summary = {"scheme": scheme, "n": n, "seed": seed}
    if scheme in ("mcwf", "sme-jump"):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "t", "channel"])
        for r in sorted(records, key=lambda r: r.index):
            for t, c in r.jumps:
                w.writerow([r.index, f"{t:.17g}", c])
        art.write("jumps.csv", buf.getvalue())
        js = trajectories.jump_statistics(records, tuple(p["jump_window"]) if "jump_window" in p else None)
        summary.update(total_jumps=int(js.counts.sum()), fano=js.fano, mean_waiting=js.mean_waiting)
    if p.get("save_records"):
        for r in records:
            art.write(f"trajectory_{r.index:05d}.csv", trajectories.record_csv(r))
    art.write("summary.json", json.dumps(summary, sort_keys=True, indent=1))


def _task_analyze(model, p, art):
    syms = {k: (v["kind"], evaluate(v["operator"], model)) for k, v in p.get("symmetries", {}).items()}
    art.write("structure.json", structure.structure_report_json(model, syms, p.get("tol", 1e-9)))


def _task_zeno(model, p, art):
    H = evaluate(p.get("hamiltonian", "H"), model)
    O = evaluate(p["measure"], model)
    obs = _ops(model, p.get("observables", {}))
    state = _initial(model, p.get("initial_state", "basis:0"))
    kw = dict(H=H, tau=p["tau"], n_measurements=p["n_measurements"], state0=state, mode=p.get("mode", "ensemble"),
              keep=p.get("keep", 0), n_trajectories=p.get("n_trajectories", 1000), seed=p.get("seed", 0),
              observables=obs)
    if "schedule" in p:
        om = float(p["schedule"]["omega"])
        kw["schedule"] = lambda t: zoo.spin_axis_projectors(om * t)
    else:
        kw["projectors"] = zoo.eigenprojectors(O)
    res = zoo.zeno_protocol_run(zoo.ZenoProtocol(**kw))
    cols = {"survival": res.survival, **res.expect}
    art.write("zeno.csv", series_csv(res.times, cols))


def _sweep_point(spec: zoo.ModelSpec, extract, obs_exprs):
    model = zoo.build_model(spec)
    row = {}
    need_ss = any(e not in ("gap", "kernel_dim") for e in extract)
    # eigenvalues only; eigenvector conditioning of fast truncation modes does not matter here
    g = gap_auto(model)
    ss = None
    if need_ss:
        if g.kernel_dim > 1:
            raise np.linalg.LinAlgError(f"{spec.name}: steady state not unique (kernel {g.kernel_dim})")
        ss = steady_state_sparse(model)
    for e in extract:
        if e == "gap":
            row["gap"] = g.gap
        elif e == "kernel_dim":
            row["kernel_dim"] = g.kernel_dim
        elif e == "purity":
            row["purity"] = purity(ss)
        elif e == "order_parameter":
            row["order_parameter"] = zoo.pt_order_parameter(model, ss)
        else:
            name = e.split(":", 1)[1]
            expr = obs_exprs.get(name, name)
            row[e] = _expect_real(evaluate(expr, model), ss)
    return row


def _task_sweep(cfg, p, art, threads):
    axis = p["axis"]
    fam = zoo.REGISTRY[cfg.model.name]
    _need(axis in fam.defaults, "axis", f"{axis!r} is not a parameter of {cfg.model.name}")
    series = p.get("series")
    svals = series["values"] if series else [None]
    points = []
    for s in svals:
        for v in p["values"]:
            params = dict(cfg.model.params)
            params[axis] = v
            if series:
                params[series["param"]] = s
            points.append((s, v, zoo.ModelSpec(cfg.model.name, params)))
    obs = p.get("observables", {})
    rows = _map(lambda pt: _sweep_point(pt[2], p["extract"], obs), points, threads)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    head = ([series["param"]] if series else []) + [axis] + p["extract"]
    w.writerow(head)
    for (s, v, _), row in zip(points, rows):
        w.writerow(([f"{s:.17g}"] if series else []) + [f"{v:.17g}"]
                   + [f"{float(row[e]):.17g}" for e in p["extract"]])
    art.write("sweep.csv", buf.getvalue())


def _chunks(n, threads):
    k = max(1, min(threads, n))
    edges = np.linspace(0, n, k + 1).round().astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def _map(fn, items, threads):
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def run(config: ExperimentConfig | str, out_dir: str | None = None, seed: int | None = None,
        threads: int = 1) -> RunManifest:
    """Execute one experiment and write its artifacts plus manifest.json."""
    cfg = load_config(config, seed) if isinstance(config, str) else config
    out_dir = out_dir or cfg.output or "lindbladkit-out"
    t0 = time.perf_counter()
    art = Artifacts(out_dir)
    art.write("config.json", json.dumps(cfg.to_dict(), sort_keys=True, indent=1))
    p = cfg.params
    if cfg.task == "sweep":
        _task_sweep(cfg, p, art, threads)
    else:
        model = _build(cfg.model)
        if cfg.task == "spectrum":
            _task_spectrum(model, p, art)
        elif cfg.task == "evolve":
            _task_evolve(model, p, art)
        elif cfg.task == "trajectories":
            _task_trajectories(model, p, art, threads)
        elif cfg.task == "analyze":
            _task_analyze(model, p, art)
        elif cfg.task == "zeno":
            _task_zeno(model, p, art)
    man = RunManifest(cfg.hash(), dict(sorted(art.files.items())), _versions(),
                      time.perf_counter() - t0, cfg.task)
    with open(os.path.join(out_dir, "manifest.json"), "w") as f:
        f.write(man.to_json())
    return man


def list_models_text() -> str:
    lines = []
    for name, info in zoo.list_models().items():
        ps = ", ".join(f"{k}={v}" for k, v in info["params"].items())
        lines.append(f"{name}\n    {info['doc']}\n    params: {ps or '(none)'}")
    return "\n".join(lines) + "\n"


# --- entry point ------------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lindbladkit", description="Lindblad dynamics experiment runner")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name, helptext in (("run", "run an experiment config"), ("sweep", "run a sweep config")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--config", required=True)
        s.add_argument("--out", default=None)
        s.add_argument("--seed", type=int, default=None)
        s.add_argument("--threads", type=int, default=1)
    s = sub.add_parser("list-models", help="show the model catalog")
    s.add_argument("--json", action="store_true")
    s = sub.add_parser("validate-config", help="check a config without running it")
    s.add_argument("--config", required=True)
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "list-models":
            sys.stdout.write(json.dumps(zoo.list_models(), sort_keys=True, indent=1) + "\n" if args.json
                             else list_models_text())
            return EXIT_OK
        if args.command == "validate-config":
            cfg = load_config(args.config)
            print(f"ok: task={cfg.task} model={cfg.model.name} hash={cfg.hash()}")
            return EXIT_OK
        cfg = load_config(args.config, args.seed)
        if args.command == "sweep" and cfg.task != "sweep":
            raise ConfigError("task: the sweep command needs task 'sweep'")
        if args.threads < 1:
            raise ConfigError("--threads: must be >= 1")
        man = run(cfg, args.out, threads=args.threads)
        out = args.out or cfg.output or "lindbladkit-out"
        print(f"wrote {len(man.artifacts)} artifacts to {out} (config {man.config_hash[:12]})")
        return EXIT_OK
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except CapacityError as e:
        print(f"capacity error: {e}", file=sys.stderr)
        return EXIT_CAPACITY
    except (DefectiveLiouvillianError, trajectories.NumericalFailure, np.linalg.LinAlgError,
            FloatingPointError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except zoo.ModelError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
