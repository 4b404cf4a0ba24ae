"""Loss budget t = p * eta: injection, seed impurity and detection loss.

The source seen by the detectors is a mixture of three product laws over
(pi+, pi-) photon numbers:

* ``A`` = squeezed |1> x squeezed |0>   (Phi+ branch)
* ``B`` = squeezed |0> x squeezed |1>   (Phi- branch)
* ``C`` = squeezed |0> x squeezed |0>   (nothing injected)

An injected probe at phase phi contributes cos^2(phi/2) A + sin^2(phi/2) B.
A fraction (1 - V_s)/2 of the injected probes is taken to carry phi + pi,
which scales the fringe by V_s.  Folding everything together,

    w_A = p (1 + V_s cos phi) / 2,   w_B = p (1 - V_s cos phi) / 2,   w_C = 1 - p.

Detection loss acts on each mode as binomial thinning.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gammaln, logsumexp

from .fock import (
    DEFAULT_POLICY,
    FockDistribution,
    GainParams,
    JointModeDistribution,
    TruncationPolicy,
    amplified_probe_joint,
    squeezed_single_photon_distribution,
    squeezed_vacuum_distribution,
)
from .mc import binomial_sample

__all__ = [
    "ChannelParams",
    "SourceLaw",
    "ThinningSizeError",
    "build_source_law",
    "binomial_thinning_exact",
    "thinned_squeezed_distribution",
    "thinned_moments",
    "sample_detected_counts",
    "detected_joint_law",
    "sector_distribution",
    "EXACT_THINNING_MAX_N",
]

EXACT_THINNING_MAX_N = 4096


@dataclass(frozen=True)
class ChannelParams:
    """Injection probability ``p``, detection transmission ``eta``, seed visibility and trial budget."""

    p: float
    eta: float
    seed_visibility: float = 1.0
    trials: int = 1

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must lie in [0, 1], got {self.p}")
        if not 0.0 < self.eta <= 1.0:
            raise ValueError(f"eta must lie in (0, 1], got {self.eta}")
        if not 0.0 <= self.seed_visibility <= 1.0:
            raise ValueError(f"seed visibility must lie in [0, 1], got {self.seed_visibility}")
        if int(self.trials) != self.trials or self.trials < 1:
            raise ValueError("trials must be a positive integer")

    @property
    def t(self) -> float:
        return self.p * self.eta

    @classmethod
    def ideal(cls) -> "ChannelParams":
        return cls(p=1.0, eta=1.0)


@lru_cache(maxsize=64)
def sector_distribution(gain: GainParams, odd: bool, policy: TruncationPolicy = DEFAULT_POLICY) -> FockDistribution:
    """Cached squeezed sector law (distributions are immutable)."""
    if odd:
        return squeezed_single_photon_distribution(gain, policy)
    return squeezed_vacuum_distribution(gain, policy)


@dataclass(frozen=True, eq=False)
class SourceLaw:
    phi: float
    gain: GainParams
    channel: ChannelParams
    single_photon: FockDistribution
    vacuum: FockDistribution

    @property
    def component_weights(self) -> tuple[float, float, float]:
        """Weights of (probe at phi, probe at phi + pi, amplified vacuum)."""
        p, vs = self.channel.p, self.channel.seed_visibility
        return p * (1.0 + vs) / 2.0, p * (1.0 - vs) / 2.0, 1.0 - p

    def components(self) -> list[tuple[float, JointModeDistribution | tuple[FockDistribution, FockDistribution]]]:
        w_probe, w_flip, w_vac = self.component_weights
        probe = JointModeDistribution(self.phi, self.gain, self.single_photon, self.vacuum)
        flipped = JointModeDistribution(float(np.mod(self.phi + np.pi, 2 * np.pi)), self.gain, self.single_photon, self.vacuum)
        out = []
        for w, comp in ((w_probe, probe), (w_flip, flipped), (w_vac, (self.vacuum, self.vacuum))):
            if w > 0.0:
                out.append((w, comp))
        return out

    @property
    def sector_weights(self) -> tuple[float, float, float]:
        """Weights of the product laws (A, B, C) defined in the module docstring."""
        p, vs = self.channel.p, self.channel.seed_visibility
        cphi = math.cos(self.phi)
        return p * (1.0 + vs * cphi) / 2.0, p * (1.0 - vs * cphi) / 2.0, 1.0 - p

    @property
    def sector_weight_derivatives(self) -> tuple[float, float, float]:
        p, vs = self.channel.p, self.channel.seed_visibility
        d = -p * vs * math.sin(self.phi) / 2.0
        return d, -d, 0.0

    def product_terms(self) -> list[tuple[float, FockDistribution, FockDistribution]]:
        wa, wb, wc = self.sector_weights
        one, zero = self.single_photon, self.vacuum
        return [(wa, one, zero), (wb, zero, one), (wc, zero, zero)]

    def mode_means(self) -> tuple[float, float]:
        plus = sum(w * a.mean() for w, a, _ in self.product_terms())
        minus = sum(w * b.mean() for w, _, b in self.product_terms())
        return plus, minus

    def mean_difference(self) -> float:
        plus, minus = self.mode_means()
        return plus - minus

    def summary(self) -> dict:
        wa, wb, wc = self.sector_weights
        plus, minus = self.mode_means()
        return {
            "phi": self.phi,
            "g": self.gain.g,
            "p": self.channel.p,
            "eta": self.channel.eta,
            "seed_visibility": self.channel.seed_visibility,
            "weights": [wa, wb, wc],
            "mean_plus": plus,
            "mean_minus": minus,
            "var_single_photon": self.single_photon.variance(),
            "var_vacuum": self.vacuum.variance(),
        }


def build_source_law(phi: float, gain: GainParams, channel: ChannelParams, policy: TruncationPolicy = DEFAULT_POLICY) -> SourceLaw:
    phi = float(np.mod(phi, 2.0 * np.pi))
    return SourceLaw(
        phi=phi,
        gain=gain,
        channel=channel,
        single_photon=sector_distribution(gain, True, policy),
        vacuum=sector_distribution(gain, False, policy),
    )


class ThinningSizeError(ValueError):
    """Distribution too long for the exact transform; use moments or sampling."""


def binomial_thinning_exact(dist: FockDistribution, eta: float, chunk: int = 256) -> FockDistribution:
    """P'(m) = sum_n P(n) C(n, m) eta^m (1 - eta)^(n - m), summed in the log domain."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must lie in [0, 1], got {eta}")
    n_max = dist.n_max
    if n_max > EXACT_THINNING_MAX_N:
        raise ThinningSizeError(
            f"n_max={n_max} exceeds {EXACT_THINNING_MAX_N}; use thinned_moments, "
            "thinned_squeezed_distribution or sample_detected_counts"
        )
    if eta == 1.0:
        return dist
    if eta == 0.0:
        out = np.zeros(n_max + 1)
        out[0] = dist.total()
        return FockDistribution.from_probs(out, "mixed", dist.tail_mass)
    n = np.arange(n_max + 1, dtype=float)
    log_p = dist.log_probs
    log_eta, log_keep = math.log(eta), math.log1p(-eta)
    lg_n = gammaln(n + 1.0)
    out = np.empty(n_max + 1)
    for start in range(0, n_max + 1, chunk):
        m = n[start:start + chunk, None]
        k = n[None, :] - m
        with np.errstate(invalid="ignore"):
            terms = lg_n[None, :] - gammaln(m + 1.0) - gammaln(np.maximum(k, 0.0) + 1.0) + m * log_eta + k * log_keep + log_p[None, :]
        terms = np.where(k >= 0, terms, -np.inf)
        out[start:start + chunk] = logsumexp(terms, axis=1)
    return FockDistribution.from_log_probs(out, "mixed", dist.tail_mass)


def thinned_squeezed_distribution(gain: GainParams, eta: float, odd: bool, tol: float = 1e-13) -> FockDistribution:
    """Exact thinned law of a squeezed sector from its generating function.

    The generating function of the thinned law is G(1 - eta + eta s) with
    G(s) = sqrt((1 - x)/(1 - x s^2)) for squeezed vacuum and
    s (1 - x)^(3/2) (1 - x s^2)^(-3/2) for the squeezed photon, x = tanh^2 g.
    Its Taylor coefficients are read off with an FFT on the unit circle.
    They decay like rho^-m, rho = (x^-1/2 - 1 + eta)/eta being the nearest
    singularity, which fixes the FFT length (aliasing below 1e-18) and the
    kept length (geometric tail estimate below ``tol``).  There is no size
    guard, so this covers g = 4.5 where the matrix transform cannot go.
    """
    if not 0.0 < eta <= 1.0:
        raise ValueError(f"eta must lie in (0, 1], got {eta}")
    x = gain.gamma**2
    if x == 0.0:
        probs = np.array([1.0 - eta, eta]) if odd else np.array([1.0, 0.0])
        return FockDistribution.from_probs(probs, "mixed", 0.0)
    log_rho = math.log((1.0 / math.sqrt(x) - 1.0 + eta) / eta)
    half = int(math.ceil(45.0 / log_rho)) + 64
    length = 1 << max(7, int(math.ceil(math.log2(2 * half))))
    s = np.exp(2j * np.pi * np.arange(length) / length)
    u = 1.0 - eta + eta * s
    base = (1.0 - x) / (1.0 - x * u * u)
    gen = u * base**1.5 if odd else base**0.5
    coeffs = np.clip(np.fft.fft(gen).real[: length // 2] / length, 0.0, None)
    # generous geometric tail estimate (factor 2 covers the sqrt(m) prefactor)
    # pairwise max so the zero entries of a single-parity law do not end it early
    envelope = np.maximum(coeffs, np.append(coeffs[1:], 0.0))
    tail_est = 2.0 * envelope / -math.expm1(-log_rho)
    below = np.nonzero((tail_est <= tol) & (np.arange(coeffs.size) >= 2))[0]
    keep = int(below[0]) if below.size else coeffs.size
    probs = coeffs[:keep]
    tail_mass = max(1.0 - math.fsum(probs), float(tail_est[keep - 1]) if keep < coeffs.size else 0.0, 0.0)
    return FockDistribution.from_probs(probs, "mixed", tail_mass)


def thinned_moments(mean: float, variance: float, eta: float) -> tuple[float, float]:
    if variance < 0:
        raise ValueError("variance must be nonnegative")
    return eta * mean, eta * eta * variance + eta * (1.0 - eta) * mean


def _sampling_table(dist: FockDistribution) -> np.ndarray:
    table = getattr(dist, "_cdf_table", None)
    if table is None:
        cdf = dist.cdf()
        table = cdf / cdf[-1]
        object.__setattr__(dist, "_cdf_table", table)
    return table


def _draw(dist: FockDistribution, u: np.ndarray) -> np.ndarray:
    table = _sampling_table(dist)
    return np.minimum(np.searchsorted(table, u, side="right"), dist.n_max)


def sample_detected_counts(source: SourceLaw, eta: float | None = None, rng: np.random.Generator | None = None, size: int | None = None):
    """Draw detected (m_plus, m_minus) pairs.

    The mixture component is chosen by weight, photon numbers are drawn by
    inverse CDF from the (renormalised) truncated sector tables, and each
    mode is thinned with an exact binomial draw.  Returns scalars when
    ``size`` is None, else two integer arrays.
    """
    if rng is None:
        raise ValueError("an explicit rng stream is required")
    eta = source.channel.eta if eta is None else eta
    n = 1 if size is None else int(size)
    wa, wb, _ = source.sector_weights
    u_comp = rng.random(n)
    in_a = u_comp < wa
    in_b = (~in_a) & (u_comp < wa + wb)
    u_plus = rng.random(n)
    u_minus = rng.random(n)
    one, zero = source.single_photon, source.vacuum
    n_plus = np.where(in_a, _draw(one, u_plus), _draw(zero, u_plus))
    n_minus = np.where(in_b, _draw(one, u_minus), _draw(zero, u_minus))
    m_plus = binomial_sample(n_plus, eta, rng)
    m_minus = binomial_sample(n_minus, eta, rng)
    if size is None:
        return int(m_plus[0]), int(m_minus[0])
    return m_plus, m_minus


def detected_joint_law(source: SourceLaw, eta: float | None = None) -> np.ndarray:
    """Exact P[m+, m-] after detection loss, as a square matrix.

    Each sector marginal is thinned exactly and the product laws are mixed
    with the sector weights.  Limited to the exact-thinning regime.
    """
    eta = source.channel.eta if eta is None else eta
    one = binomial_thinning_exact(source.single_photon, eta).probs
    zero = binomial_thinning_exact(source.vacuum, eta).probs
    size = max(one.size, zero.size)
    a = np.zeros(size)
    b = np.zeros(size)
    a[: one.size] = one
    b[: zero.size] = zero
    wa, wb, wc = source.sector_weights
    return wa * np.outer(a, b) + wb * np.outer(b, a) + wc * np.outer(b, b)
