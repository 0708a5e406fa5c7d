"""Driven Kerr cavity: classical fixed points against quantum steady states.

Sweeps the rescaled drive F~ and writes, for each photon-number scale N,
the steady occupation <n>/N and the Liouvillian gap next to the classical
stable branches.
"""
import argparse
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from lindbladkit.models import build_model, kerr_bistable_window, kerr_classical_fixed_points
from lindbladkit.spectra import gap_auto, steady_state_sparse


def point(delta, u, F, N):
    m = build_model("kerr", delta=delta, u_tilde=u, f_tilde=F, n_scale=N)
    rho = steady_state_sparse(m).data
    return np.trace(m.ops["n"] @ rho).real / N, gap_auto(m).gap


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--delta", type=float, default=3.0)
    ap.add_argument("--u", type=float, default=1.0)
    ap.add_argument("--ns", type=float, nargs="+", default=[1.0, 3.0, 10.0])
    ap.add_argument("--points", type=int, default=21)
    ap.add_argument("--threads", type=int, default=4)
    ap.add_argument("--out", default="out/kerr_bistability")
    a = ap.parse_args()
    os.makedirs(a.out, exist_ok=True)

    win = kerr_bistable_window(a.delta, 1.0, a.u)
    print("bistable window in F~:", "none" if win is None else f"[{win[0]:.4f}, {win[1]:.4f}]")
    Fs = np.linspace(0.3, 2.5, a.points)
    jobs = [(F, N) for N in a.ns for F in Fs]
    with ThreadPoolExecutor(a.threads) as ex:
        res = list(ex.map(lambda j: point(a.delta, a.u, *j), jobs))

    with open(os.path.join(a.out, "kerr.csv"), "w") as f:
        f.write("N,f_tilde,n_over_N,gap,classical_low,classical_high\n")
        for (F, N), (n, g) in zip(jobs, res):
            xs = [p.x for p in kerr_classical_fixed_points(a.delta, 1.0, a.u, F) if p.stability == "stable"]
            f.write(f"{N:.17g},{F:.17g},{n:.17g},{g:.17g},{min(xs):.17g},{max(xs):.17g}\n")
    for N in a.ns:
        gaps = [g for (F, n_), (_, g) in zip(jobs, res) if n_ == N]
        print(f"N={N:g}: minimum gap {min(gaps):.3e} at F~={Fs[int(np.argmin(gaps))]:.3f}")


if __name__ == "__main__":
    main()
