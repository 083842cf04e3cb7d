"""Integrator error against the dense propagator as a function of rtol.

A small bath (n_s = 6, dimension 128) is evolved to t = 100 from its thermal
initial states; the error of an 8th-order method under tolerance-proportional
step control should fall by about 10x per decade of rtol while the step count
grows by about 10**(1/8).
"""

import argparse
import math

import numpy as np

from spinbath.eigensolver import LanczosConfig, lowest_eigenpairs
from spinbath.model import ModelParams, build_bath_hamiltonian, build_full_hamiltonian
from spinbath.propagation import IntegratorConfig, evolve_exact_oracle, evolve_rk8, make_initial_state


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--ns", type=int, default=6)
    ap.add_argument("--lam", type=float, default=2.0)
    ap.add_argument("--tmax", type=float, default=100.0)
    args = ap.parse_args()

    p = ModelParams.paper(lam=args.lam, n_s=args.ns)
    h = build_full_hamiltonian(p)
    vecs = lowest_eigenpairs(build_bath_hamiltonian(p), LanczosConfig(n_eig=min(20, 2**args.ns))).eigenvectors
    psi0 = make_initial_state(vecs)
    exact = evolve_exact_oracle(h, psi0, [args.tmax])[0]

    print(f"{'rtol':>8} {'max error':>10} {'steps':>6} {'order':>6}")
    prev = None
    for k in range(4, 13):
        rtol = 10.0**-k
        cfg = IntegratorConfig(rtol=rtol, atol=rtol * 1e-2, t_grid=(0.0, args.tmax))
        rec = evolve_rk8(h, psi0, cfg, store_states=True)
        err = float(np.abs(rec.states[-1] - exact).max())
        order = "" if prev is None else f"{math.log(prev[0] / err) / math.log(rec.n_steps / prev[1]):6.2f}"
        print(f"{rtol:8.0e} {err:10.3e} {rec.n_steps:6d} {order:>6}")
        prev = (err, rec.n_steps)


if __name__ == "__main__":
    main()
