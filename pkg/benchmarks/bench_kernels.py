"""Compiled versus pure-Python integration kernels.

Times identical physical and regularized integrations (with and without
variational equations) on both backends and checks that they agree.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from degbill import geometry, kernels


def _models(mod, problem, E, mu):
    ctype, cpos, cdir, calpha = problem._arrays()
    om = problem.omega_matrix
    cf = 1.0 if problem.centrifugal else 0.0
    phys = mod.Model(mod.PHYS, problem.dim, om, problem.kepler, cf, ctype, cpos, cdir,
                     calpha, E, mu)
    c = problem.components[0]
    regm = mod.Model(mod.REG, problem.dim, om, problem.kepler, cf, ctype, cpos, cdir, calpha,
                     E, 0.0, 0, c.base, c.tangent_basis, c.normal_frame(),
                     problem.regularization_gauge(0))
    return phys, regm


def _cases(problem, E, mu):
    m = problem.dim
    q0 = np.array([0.5, 0.3] + [0.1] * (m - 2))
    p0 = np.zeros(m)
    p0[0] = np.sqrt(2.0 * (E - problem.potential(q0, mu)))
    # regularized state near center 0: (xi, eta) with |xi|^2 = 2 * 0.05
    ns_reg = 2 if m == 2 else 4
    xi = np.full(ns_reg, np.sqrt(0.1 / ns_reg))
    eta = np.zeros(ns_reg)
    eta[0] = 0.3
    return (("physical", 0, np.concatenate([q0, p0]), 2.0),
            ("regularized", 1, np.concatenate([xi, eta]), 0.5))


def bench(problem, E, mu, repeat):
    backends = kernels.backends()
    rows = []
    for name, mi, s0, T in _cases(problem, E, mu):
        for stm in (False, True):
            finals = {}
            times = {}
            for bname, mod in backends.items():
                model = _models(mod, problem, E, mu)[mi]
                ns = model.ns
                y0 = np.concatenate([s0, [0.0, 0.0]])
                if stm:
                    y0 = np.concatenate([y0, np.eye(ns).ravel()])
                best = np.inf
                for _ in range(repeat):
                    t = time.perf_counter()
                    ts, states, yf, status = model.integrate(y0, 0.0, T, 1e-12, 1e-12, stm)
                    best = min(best, time.perf_counter() - t)
                finals[bname] = yf
                times[bname] = best
            diff = (float(np.max(np.abs(finals["compiled"] - finals["python"])))
                    if len(finals) == 2 else float("nan"))
            rows.append((name, stm, times, diff))
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    problems = {
        "triangle (LC)": (geometry.n_centers([[0, 0], [1, 0], [0.5, np.sqrt(3) / 2]]), 0.5),
        "3d centers (KS)": (geometry.n_centers([[0, 0, 0], [1, 0, 0], [0, 1, 0.3]]), 0.5),
    }
    if "compiled" not in kernels.backends():
        print("compiled extension not built; only the python backend is available")
    print(f"{'problem':18s} {'flow':12s} {'stm':5s} {'compiled [s]':>13s} {'python [s]':>11s}"
          f" {'speedup':>8s} {'max |diff|':>11s}")
    for label, (problem, E) in problems.items():
        for name, stm, times, diff in bench(problem, E, -1e-4, args.repeat):
            tc = times.get("compiled", float("nan"))
            tp = times["python"]
            print(f"{label:18s} {name:12s} {str(stm):5s} {tc:13.4f} {tp:11.4f} "
                  f"{tp / tc:8.1f} {diff:11.2e}")


if __name__ == "__main__":
    main()
