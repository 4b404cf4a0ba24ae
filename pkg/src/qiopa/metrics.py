"""Sensitivities, enhancement, Fisher information and the OF sensitivity.

All sensitivities are per trial (N = 1) unless ``N`` is passed; the sqrt(N)
factor is kept explicit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import (
    EXACT_THINNING_MAX_N,
    ChannelParams,
    binomial_thinning_exact,
    build_source_law,
    thinned_squeezed_distribution,
)
from .detection import counting_difference_stats
from .fock import DEFAULT_POLICY, FockDistribution, GainParams, TruncationPolicy

__all__ = [
    "DomainError",
    "RegimeError",
    "SensitivityReport",
    "FisherReport",
    "FisherResult",
    "sensitivity_single_photon",
    "sensitivity_amplified_closed_form",
    "sensitivity_report",
    "enhancement",
    "enhancement_limit",
    "critical_injection",
    "enhancement_achievable",
    "high_loss_parameter",
    "classical_fisher_information",
    "gaussian_fisher_information",
    "quantum_fisher_highloss",
    "fisher_report",
    "of_sensitivity",
    "of_sensitivity_optimal",
]

HIGH_LOSS_LIMIT = 0.1


class DomainError(ValueError):
    pass


class RegimeError(ValueError):
    pass


def sensitivity_single_photon(t: float, N: float = 1) -> float:
    """Shot-noise sensitivity sqrt(t N) of the bare single-photon probe."""
    if not 0.0 < t <= 1.0:
        raise DomainError(f"t must lie in (0, 1], got {t}")
    if N < 1:
        raise DomainError("N must be >= 1")
    return math.sqrt(t * N)


def sensitivity_amplified_closed_form(gain: GainParams, p: float, eta: float, N: float = 1) -> float:
    """Sensitivity of the amplified counting scheme around phi = pi/2."""
    n, c = gain.nbar, gain.c
    denom = eta * eta * (p * n * (4.0 * c + 2.0) + 2.0 * n * c) + eta * (p * c + 2.0 * n)
    if denom <= 0.0:
        raise DomainError("degenerate parameters (zero detected noise)")
    return math.sqrt(N) * p * eta * c / math.sqrt(denom)


def enhancement(gain: GainParams, p: float, eta: float) -> float:
    """E = (S_ampl / S_1phot)^2; independent of N."""
    if not (0.0 < p <= 1.0 and 0.0 < eta <= 1.0):
        raise DomainError("p and eta must lie in (0, 1]")
    n, c = gain.nbar, gain.c
    denom = eta * (p * n * (4.0 * c + 2.0) + 2.0 * n * c) + (p * c + 2.0 * n)
    # S^2 / (p eta), with one factor of eta cancelled analytically
    return p * c * c / denom


def enhancement_limit(p: float, eta: float) -> float:
    if not (0.0 < p <= 1.0 and 0.0 < eta <= 1.0):
        raise DomainError("p and eta must lie in (0, 1]")
    return p / (eta * (2.0 * p + 1.0))


def critical_injection(eta: float) -> float:
    """Injection probability above which the large-gain enhancement exceeds 1.

    Values >= 1 (eta >= 1/3) mean no enhancement is achievable.
    """
    if not 0.0 < eta < 0.5:
        raise DomainError(f"critical injection needs 0 < eta < 1/2, got {eta}")
    # 1/(1/eta - 2) rather than eta/(1 - 2 eta): exact at eta = 1/3
    return 1.0 / (1.0 / eta - 2.0)


def enhancement_achievable(eta: float) -> bool:
    return eta < 0.5 and critical_injection(eta) < 1.0


def high_loss_parameter(gain: GainParams, eta: float) -> float:
    """eta * max(<n+>, <n->), the quantity that must be << 1."""
    return eta * (3.0 * gain.nbar + 1.0)


@dataclass(frozen=True)
class SensitivityReport:
    s_single: float
    s_amplified: float
    enhancement: float
    high_loss: bool


def sensitivity_report(gain: GainParams, p: float, eta: float, N: float = 1) -> SensitivityReport:
    s1 = sensitivity_single_photon(p * eta, N)
    sa = sensitivity_amplified_closed_form(gain, p, eta, N)
    return SensitivityReport(s1, sa, (sa / s1) ** 2, high_loss_parameter(gain, eta) < HIGH_LOSS_LIMIT)


@dataclass(frozen=True)
class FisherResult:
    value: float
    method: str
    excluded_mass: float = 0.0
    valid: bool = True


def _thinned(gain: GainParams, odd: bool, eta: float, policy: TruncationPolicy) -> FockDistribution:
    src = build_source_law(0.0, gain, ChannelParams(1.0, 1.0), policy)
    dist = src.single_photon if odd else src.vacuum
    if dist.n_max <= EXACT_THINNING_MAX_N:
        return binomial_thinning_exact(dist, eta)
    return thinned_squeezed_distribution(gain, eta, odd)


def _cut(probs: np.ndarray, tail: float) -> np.ndarray:
    rest = np.cumsum(probs[::-1])[::-1]
    keep = int(np.searchsorted(-rest, -tail, side="left"))
    return probs[: max(keep, 2)]


def classical_fisher_information(
    phi: float,
    gain: GainParams,
    channel: ChannelParams,
    policy: TruncationPolicy = DEFAULT_POLICY,
    method: str = "auto",
    outcome_tail: float = 1e-16,
    max_outcomes: int = 4000,
) -> FisherResult:
    """Fisher information of the (m+, m-) counting measurement.

    Only the mixture weights depend on phi, and dw_A = -dw_B, so
    dP = dw_A (A - B) with A, B the thinned branch product laws.  The exact
    path sums (dP)^2 / P over the outcome grid.  Outcomes where P and dP
    both vanish contribute their limit 2 d^2P/dphi^2; any other P = 0
    outcome is dropped and its |dP| mass reported.  ``method="gaussian"`` returns the
    moment approximation (d<D>/dphi)^2 / Var D.
    """
    if method not in ("auto", "exact", "gaussian"):
        raise ValueError(f"unknown method {method!r}")
    if method == "gaussian":
        return gaussian_fisher_information(phi, gain, channel, policy)
    try:
        one = _cut(_thinned(gain, True, channel.eta, policy).probs, outcome_tail)
        zero = _cut(_thinned(gain, False, channel.eta, policy).probs, outcome_tail)
    except Exception:
        if method == "exact":
            raise
        return gaussian_fisher_information(phi, gain, channel, policy)
    size = max(one.size, zero.size)
    if size > max_outcomes:
        if method == "exact":
            raise RegimeError(f"outcome grid {size}^2 too large for the exact Fisher sum; use method='gaussian'")
        return gaussian_fisher_information(phi, gain, channel, policy)
    a = np.zeros(size)
    b = np.zeros(size)
    a[: one.size] = one
    b[: zero.size] = zero
    source = build_source_law(phi, gain, channel, policy)
    wa, wb, wc = source.sector_weights
    dwa = source.sector_weight_derivatives[0]
    if abs(math.sin(phi)) < 1e-12:
        # fringe extremum: cos phi rounds to +-1 in the weights, so snap dP too
        dwa = 0.0
    A = np.outer(a, b)
    B = np.outer(b, a)
    P = wa * A + wb * B + wc * np.outer(b, b)
    dP = dwa * (A - B)
    pos = P > 0.0
    F = math.fsum((dP[pos] ** 2 / P[pos]).tolist())
    # where P and dP vanish together, (dP)^2 / P -> 2 P'' along phi
    d2wa = -0.5 * channel.p * channel.seed_visibility * math.cos(phi)
    touch = ~pos & (dP == 0.0)
    curv = d2wa * (A - B)[touch]
    F += 2.0 * math.fsum(curv[curv > 0].tolist())
    excluded = float(np.abs(dP[~pos & ~touch]).sum())
    return FisherResult(F, "exact", excluded, True)


def gaussian_fisher_information(phi: float, gain: GainParams, channel: ChannelParams, policy: TruncationPolicy = DEFAULT_POLICY) -> FisherResult:
    """(d<D>/dphi)^2 / Var D; flagged valid only in the high-loss regime."""
    _, var = counting_difference_stats(phi, gain, channel, policy)
    dmean = -channel.p * channel.eta * channel.seed_visibility * gain.c * math.sin(phi)
    value = dmean * dmean / var if var > 0 else 0.0
    return FisherResult(value, "gaussian", 0.0, high_loss_parameter(gain, channel.eta) < HIGH_LOSS_LIMIT)


def quantum_fisher_highloss(gain: GainParams, p: float, eta: float) -> float:
    """High-loss approximation 2 nbar eta p (1 + 1/p)^-1 = 2 nbar eta p^2 / (p + 1)."""
    return 2.0 * gain.nbar * eta * p * p / (p + 1.0)


@dataclass(frozen=True)
class FisherReport:
    phi: float
    classical_fisher: float
    s_squared: float
    quantum_fisher_highloss: float
    h_single: float
    cr_ratio: float
    method: str
    excluded_mass: float
    high_loss: bool


def fisher_report(phi: float, gain: GainParams, channel: ChannelParams, policy: TruncationPolicy = DEFAULT_POLICY, method: str = "auto") -> FisherReport:
    """Fisher information next to the counting estimator's S^2 = (d<D>)^2 / Var D."""
    fi = classical_fisher_information(phi, gain, channel, policy, method=method)
    s2 = gaussian_fisher_information(phi, gain, channel, policy).value
    H = quantum_fisher_highloss(gain, channel.p, channel.eta)
    ratio = s2 / fi.value if fi.value > 0 else float("nan")
    return FisherReport(
        phi=phi,
        classical_fisher=fi.value,
        s_squared=s2,
        quantum_fisher_highloss=H,
        h_single=channel.eta * channel.p,
        cr_ratio=ratio,
        method=fi.method,
        excluded_mass=fi.excluded_mass,
        high_loss=high_loss_parameter(gain, channel.eta) < HIGH_LOSS_LIMIT,
    )


def of_sensitivity(I_max: float, I_min: float, phi: float) -> float:
    """Per-trial sensitivity of the three-outcome OF estimator.

    With I+(phi) = I_min + (I_max - I_min) cos^2(phi/2) and the mirror-image
    -1 rate, the outcome O in {+1, 0, -1} has E[O] = (I_max - I_min) cos phi
    and E[O^2] = I_max + I_min, so
    S = |sin phi| (I_max - I_min) / sqrt(I_max + I_min - (I_max - I_min)^2 cos^2 phi),
    which at phi = pi/2 equals V sqrt(R_mean) with R_mean = I_max + I_min.
    """
    if not 0.0 <= I_min <= I_max:
        raise DomainError("need 0 <= I_min <= I_max")
    amp = I_max - I_min
    s = abs(math.sin(phi))
    if s < 1e-15:
        return 0.0
    var = I_max + I_min - (amp * math.cos(phi)) ** 2
    if var <= 0.0:
        raise DomainError("zero denominator")
    return s * amp / math.sqrt(var)


def of_sensitivity_optimal(V: float, R_mean: float, N: float = 1) -> float:
    if not (0.0 <= V <= 1.0 and 0.0 <= R_mean <= 1.0 and N >= 1):
        raise DomainError("need 0 <= V, R_mean <= 1 and N >= 1")
    return V * math.sqrt(R_mean) * math.sqrt(N)
