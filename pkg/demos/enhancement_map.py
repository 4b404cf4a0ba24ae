"""Where does amplification help?

Prints the counting-strategy enhancement E(g, p, eta) on a small grid, its
high-gain ceiling, and the smallest injection probability that still gives
E > 1 for a few detector efficiencies.

    python demos/enhancement_map.py
"""
import numpy as np

from qiopa import GainParams, critical_injection, enhancement, enhancement_limit

gains = [0.0, 0.5, 1.0, 2.0, 3.0, 4.5, 8.0]
etas = [1e-4, 1e-3, 1e-2, 1e-1]
p = 0.15

print(f"E(g, eta) at p = {p}")
print("g      " + "".join(f"{eta:>11.0e}" for eta in etas))
for g in gains:
    row = [enhancement(GainParams(g), p, eta) for eta in etas]
    print(f"{g:<6.1f} " + "".join(f"{E:>11.3f}" for E in row))
print("limit  " + "".join(f"{enhancement_limit(p, eta):>11.3f}" for eta in etas))

# low efficiency is where the gain pays off; near eta = 1/3 nothing helps
print("\ncritical injection probability")
for eta in (0.01, 0.1, 0.2, 0.3, 1 / 3, 0.45):
    pc = critical_injection(eta)
    verdict = "never above 1" if not np.isfinite(pc) or pc >= 1 else f"E > 1 for p > {pc:.4f}"
    print(f"  eta = {eta:.3f}: {verdict}")
