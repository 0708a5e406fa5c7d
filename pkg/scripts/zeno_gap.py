"""Quantum Zeno effect: measured spin flips and the dephasing-limited gap.

Writes cos^N(pi/N) against the measured protocol, and the Liouvillian gap
of H = Sx, L = sqrt(gamma) Sz against the strong-dephasing value 2/gamma.
"""
import argparse
import math
import os

import numpy as np

from lindbladkit.core import pauli
from lindbladkit.models import ZenoProtocol, build_model, eigenprojectors, zeno_protocol_run
from lindbladkit.spectra import eigenvalues, liouvillian_gap


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--gammas", type=float, nargs="+", default=list(np.geomspace(0.5, 200, 30)))
    ap.add_argument("--out", default="out/zeno_gap")
    a = ap.parse_args()
    os.makedirs(a.out, exist_ok=True)
    sx, _, sz, _, _ = (p.data for p in pauli())

    with open(os.path.join(a.out, "measured_flip.csv"), "w") as f:
        f.write("N,sz_final,cos_power\n")
        for N in (1, 2, 3, 5, 10, 20, 50, 100, 1000):
            p = ZenoProtocol(0.5 * sx, math.pi / N, N, np.array([1.0, 0.0]), projectors=eigenprojectors(sz),
                             observables={"sz": sz})
            r = zeno_protocol_run(p)
            f.write(f"{N},{r.expect['sz'][-1]:.17g},{math.cos(math.pi / N) ** N:.17g}\n")

    with open(os.path.join(a.out, "gap.csv"), "w") as f:
        f.write("gamma,gap,two_over_gamma\n")
        for g in a.gammas:
            gap = liouvillian_gap(eigenvalues(build_model("zeno-spin", gamma=g))).gap
            f.write(f"{g:.17g},{gap:.17g},{2 / g:.17g}\n")
    print(f"gap at gamma={a.gammas[-1]:g}: {gap:.5f} (2/gamma = {2 / a.gammas[-1]:.5f})")


if __name__ == "__main__":
    main()
