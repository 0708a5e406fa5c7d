"""Balanced gain and loss on two spins: steady-state order parameter and purity vs Gamma/g."""
import argparse
import os

import numpy as np

from lindbladkit.core import purity
from lindbladkit.models import build_model, pt_order_parameter
from lindbladkit.spectra import liouvillian_gap, spectral_decomposition, steady_states


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--S", type=float, nargs="+", default=[0.5, 1.0, 2.0])
    ap.add_argument("--ratios", type=float, nargs="+", default=list(np.geomspace(0.05, 20, 25)))
    ap.add_argument("--out", default="out/pt_transition")
    a = ap.parse_args()
    os.makedirs(a.out, exist_ok=True)

    with open(os.path.join(a.out, "pt.csv"), "w") as f:
        f.write("S,gamma_over_g,order_parameter,purity,gap\n")
        for S in a.S:
            for r in a.ratios:
                m = build_model("pt-spins", S=S, Gamma=r, g=1.0)
                dec = spectral_decomposition(m)
                rho = steady_states(dec)[0]
                op, p, g = pt_order_parameter(m, rho), purity(rho), liouvillian_gap(dec).gap
                f.write(f"{S:.17g},{r:.17g},{op:.17g},{p:.17g},{g:.17g}\n")
            d = int(round(2 * S + 1))
            print(f"S={S:g}: purity {p:.4f} at Gamma/g={a.ratios[-1]:g}; "
                  f"fully mixed value would be {1 / d ** 2:.4f}")


if __name__ == "__main__":
    main()
