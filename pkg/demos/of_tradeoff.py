"""Threshold (orthogonality-filter) detection against photon counting.

An outcome is called +1 or -1 only if one arm beats the other by more than
k photons.  Raising k cleans up the fringe (higher visibility) but throws
away most events, and the sensitivity per trial ends up below what plain
counting gives at the same operating point.

    python demos/of_tradeoff.py
"""
import math

from qiopa import ChannelParams, GainParams, of_sensitivity_optimal, of_statistics_exact, sensitivity_report

gain = GainParams(2.0)
channel = ChannelParams(p=0.14, eta=0.05)

counting = sensitivity_report(gain, channel.p, channel.eta)
print(f"counting:  S = {counting.s_amplified:.4f}")

print(" k     R_mean  visibility   S_OF")
for st in of_statistics_exact(range(0, 12, 2), gain, channel):
    S = of_sensitivity_optimal(st.visibility, st.R_mean)
    print(f"{st.k:2d}   {st.R_mean:8.5f}   {st.visibility:8.4f}   {S:.4f}")

print(f"\nsingle photon, no gain: S = {math.sqrt(channel.p * channel.eta):.4f}")
