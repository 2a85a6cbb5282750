"""Searches for readout/Purcell parameter sets whose hybridized modes show the
matching figures  |2chi_eff|/kappa_eff: ~20 / ~0.01 (mistargeted pair)
and ~0.7 / ~0.4 (trimmed pair). Uses a plain numpy eigen-decomposition.
"""
import numpy as np
from scipy.optimize import least_squares


def modes(fr, fp, j, kappa, chi):
    out = []
    for pull in (0.0, chi):
        m = np.array([[fr + pull, j], [j, fp - 0.5j * kappa]], dtype=complex)
        w = np.linalg.eigvals(m)
        w = w[np.argsort(w.real)]
        out.append(w)
    g, e = out
    kap = -2 * g.imag
    shift = e.real - g.real
    return kap, shift, g.real


def figures(fr, fp, j, kappa, chi):
    kap, shift, _ = modes(fr, fp, j, kappa, chi)
    return np.abs(shift) / kap, kap


def solve(target, j, kappa, x0):
    def res(x):
        fig, _ = figures(0.0, x[0], j, kappa, x[1])
        return np.log(fig) - np.log(target)
    return least_squares(res, x0).x


for name, target, j, kappa, x0 in [
    ("pre-trim", (20.0, 0.01), 8e6, 12e6, (60e6, -6e6)),
    ("post-trim", (0.7, 0.4), 8e6, 12e6, (5e6, -6e6)),
]:
    dp, chi = solve(np.array(target), j, kappa, np.array(x0))
    dp, chi = round(dp / 1e3) * 1e3, round(chi / 1e3) * 1e3
    fig, kap = figures(0.0, dp, j, kappa, chi)
    print(f"{name}: J={j:.0f} kappa={kappa:.0f} delta_pr={dp:.0f} chi={chi:.0f} -> figures {fig} kappa_eff {kap}")
