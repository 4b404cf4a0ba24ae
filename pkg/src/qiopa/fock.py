"""Photon-number statistics of the phase-covariant amplifier output.

The collinear amplifier decouples in the diagonal/antidiagonal polarization
basis into two single-mode squeezers acting on the pi+ and pi- modes. An
injected photon in pi+ therefore leaves as a squeezed single photon (odd
photon numbers only) next to a squeezed vacuum (even photon numbers only),
and the swap holds for an injected pi- photon.

For the probe state cos(phi/2)|Phi+> + i sin(phi/2)|Phi->, the two branches
put opposite parities on each mode, so their photon-number supports are
disjoint and no interference term survives photon counting.  The joint
photon-number law is then exactly the classical mixture of the two branch
product laws with weights cos^2(phi/2) and sin^2(phi/2).  The dense
squeeze-operator oracle in :mod:`qiopa.oracle` checks this at small gain.

Everything here is evaluated in the log domain via ``gammaln``: at g = 4.5
the distributions extend past n = 10^5.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy.special import gammaln

__all__ = [
    "GainParams",
    "TruncationPolicy",
    "TruncationError",
    "FockDistribution",
    "JointModeDistribution",
    "squeezed_vacuum_distribution",
    "squeezed_single_photon_distribution",
    "amplified_probe_joint",
    "mode_means",
    "fringe_visibility",
    "sector_moments",
]

Parity = Literal["even", "odd", "mixed"]


@dataclass(frozen=True)
class GainParams:
    """Amplifier gain ``g`` and the quantities derived from it."""

    g: float
    nbar: float = field(init=False)
    gamma: float = field(init=False)
    c: float = field(init=False)

    def __post_init__(self):
        g = float(self.g)
        if not np.isfinite(g) or g < 0:
            raise ValueError(f"gain must be finite and >= 0, got {self.g!r}")
        nbar = math.sinh(g) ** 2
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "nbar", nbar)
        object.__setattr__(self, "gamma", math.tanh(g))
        object.__setattr__(self, "c", 2.0 * nbar + 1.0)

    @property
    def log_cosh(self) -> float:
        g = self.g
        return g + math.log1p(math.exp(-2.0 * g)) - math.log(2.0)


@dataclass(frozen=True)
class TruncationPolicy:
    """How far photon-number vectors are extended.

    ``mode="tail_mass"`` keeps terms until a rigorous upper bound on the
    discarded probability drops below ``tail_mass``; ``mode="fixed_cutoff"``
    stops at ``n_max`` and reports whatever bound results.  ``hard_cap``
    defaults to ``50 * (3 nbar + 1) + 64``.
    """

    mode: Literal["tail_mass", "fixed_cutoff"] = "tail_mass"
    tail_mass: float = 1e-8
    n_max: int | None = None
    hard_cap: int | None = None

    def __post_init__(self):
        if self.mode not in ("tail_mass", "fixed_cutoff"):
            raise ValueError(f"unknown truncation mode {self.mode!r}")
        if self.mode == "tail_mass" and not (0 < self.tail_mass < 1):
            raise ValueError("tail_mass must lie in (0, 1)")
        if self.mode == "fixed_cutoff" and (self.n_max is None or self.n_max < 1):
            raise ValueError("fixed_cutoff needs n_max >= 1")

    @classmethod
    def tail(cls, eps: float = 1e-8, hard_cap: int | None = None) -> "TruncationPolicy":
        return cls(mode="tail_mass", tail_mass=eps, hard_cap=hard_cap)

    @classmethod
    def fixed(cls, n_max: int, hard_cap: int | None = None) -> "TruncationPolicy":
        return cls(mode="fixed_cutoff", n_max=n_max, hard_cap=hard_cap)

    def cap_for(self, gain: GainParams) -> int:
        if self.hard_cap is not None:
            return int(self.hard_cap)
        cap = 50.0 * (3.0 * gain.nbar + 1.0) + 64.0
        return int(min(cap, 2**62))


DEFAULT_POLICY = TruncationPolicy()


class TruncationError(RuntimeError):
    """The hard cap was reached before the requested tail mass."""

    def __init__(self, message: str, achieved_tail_mass: float, n_max: int):
        super().__init__(message)
        self.achieved_tail_mass = achieved_tail_mass
        self.n_max = n_max


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class FockDistribution:
    """Truncated photon-number distribution, indexed by n = 0..n_max."""

    probs: np.ndarray
    log_probs: np.ndarray
    parity: Parity = "mixed"
    tail_mass: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "probs", _readonly(self.probs))
        object.__setattr__(self, "log_probs", _readonly(self.log_probs))
        if self.probs.shape != self.log_probs.shape or self.probs.ndim != 1:
            raise ValueError("probs and log_probs must be matching 1-D arrays")

    @classmethod
    def from_probs(cls, probs, parity: Parity = "mixed", tail_mass: float = 0.0):
        probs = np.clip(np.asarray(probs, dtype=float), 0.0, None)
        with np.errstate(divide="ignore"):
            log_probs = np.log(probs)
        return cls(probs, log_probs, parity, tail_mass)

    @classmethod
    def from_log_probs(cls, log_probs, parity: Parity = "mixed", tail_mass: float = 0.0):
        log_probs = np.asarray(log_probs, dtype=float)
        return cls(np.exp(log_probs), log_probs, parity, tail_mass)

    @property
    def n_max(self) -> int:
        return self.probs.size - 1

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.probs.size)

    def total(self) -> float:
        return math.fsum(self.probs)

    def mean(self) -> float:
        return float(np.dot(self.support, self.probs))

    def variance(self) -> float:
        n = self.support.astype(float)
        mu = self.mean()
        return float(np.dot((n - mu) ** 2, self.probs))

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.probs)

    def padded(self, length: int) -> np.ndarray:
        """``probs`` zero-padded (or cut) to ``length`` entries."""
        out = np.zeros(length)
        m = min(length, self.probs.size)
        out[:m] = self.probs[:m]
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "prob"])
        for n, p in enumerate(self.probs):
            w.writerow([n, repr(float(p))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, parity: Parity = "mixed", tail_mass: float = 0.0):
        rows = list(csv.reader(io.StringIO(text)))
        probs = np.array([float(r[1]) for r in rows[1:]])
        return cls.from_probs(probs, parity, tail_mass)


def _sector_log_terms(gain: GainParams, odd: bool, count: int) -> np.ndarray:
    """log P(2k + odd) for k = 0..count-1."""
    k = np.arange(count, dtype=float)
    n = 2.0 * k + (1.0 if odd else 0.0)
    base = gammaln(n + 1.0) - k * math.log(4.0) - 2.0 * gammaln(k + 1.0)
    if gain.gamma == 0.0:
        geo = np.where(k == 0, 0.0, -np.inf)
    else:
        geo = 2.0 * k * math.log(gain.gamma)
    return base + geo - (3.0 if odd else 1.0) * gain.log_cosh


def _log_tail_bounds(log_terms: np.ndarray, x: float, odd: bool) -> np.ndarray:
    """Upper bound on log(sum_{j>=K} term_j) for each K.

    Term ratios are x(2k+1)/(2k+2) (even) or x(2k+3)/(2k+2) (odd), both
    bounded for k >= K by their value at k = K, so a geometric series bounds
    the tail.
    """
    k = np.arange(log_terms.size, dtype=float)
    if odd:
        r = x * (2.0 * k + 3.0) / (2.0 * k + 2.0)
    else:
        r = np.full_like(k, x)
    with np.errstate(invalid="ignore", divide="ignore"):
        bound = np.where(r < 1.0, log_terms - np.log1p(-np.minimum(r, 1.0 - 1e-300)), np.inf)
    return bound


def _squeezed_sector(gain: GainParams, odd: bool, policy: TruncationPolicy) -> FockDistribution:
    parity: Parity = "odd" if odd else "even"
    cap = policy.cap_for(gain)
    x = gain.gamma**2
    if x == 0.0:  # gamma^2 underflows for g below ~1e-154
        count = 1
        log_terms = _sector_log_terms(gain, odd, 1)
        tail = 0.0
    elif policy.mode == "fixed_cutoff":
        n_max = min(int(policy.n_max), cap)
        count = max((n_max - int(odd)) // 2 + 1, 1)
        log_terms = _sector_log_terms(gain, odd, count + 1)
        tail = float(np.exp(_log_tail_bounds(log_terms, x, odd)[count]))
        log_terms = log_terms[:count]
    else:
        log_eps = math.log(policy.tail_mass)
        max_count = (cap - int(odd)) // 2 + 1
        # first guess from the geometric decay rate, then double as needed
        guess = int(min(max_count, 64 + 2.0 * -log_eps / max(-math.log(x), 1e-300)))
        count = None
        while True:
            log_terms = _sector_log_terms(gain, odd, guess + 1)
            bounds = _log_tail_bounds(log_terms, x, odd)
            ok = np.nonzero(bounds[1:] <= log_eps)[0]
            if ok.size:
                count = int(ok[0]) + 1
                tail = float(np.exp(bounds[count]))
                log_terms = log_terms[:count]
                break
            if guess >= max_count:
                achieved = float(np.exp(bounds[guess]))
                n_last = 2 * (guess - 1) + int(odd)
                raise TruncationError(
                    f"hard cap {cap} reached with tail mass bound {achieved:.3e} "
                    f"> target {policy.tail_mass:.1e}",
                    achieved,
                    n_last,
                )
            guess = min(2 * guess, max_count)
    n_max = 2 * (count - 1) + int(odd)
    full = np.full(n_max + 1, -np.inf)
    full[int(odd)::2] = log_terms
    return FockDistribution.from_log_probs(full, parity, tail)


def squeezed_vacuum_distribution(gain: GainParams, policy: TruncationPolicy = DEFAULT_POLICY) -> FockDistribution:
    """Even-parity law of a squeezed vacuum: mean sinh^2 g, variance 2 nbar (nbar + 1)."""
    return _squeezed_sector(gain, odd=False, policy=policy)


def squeezed_single_photon_distribution(gain: GainParams, policy: TruncationPolicy = DEFAULT_POLICY) -> FockDistribution:
    """Odd-parity law of a squeezed single photon: mean 3 nbar + 1, variance 6 nbar (nbar + 1)."""
    return _squeezed_sector(gain, odd=True, policy=policy)


def sector_moments(gain: GainParams, odd: bool) -> tuple[float, float]:
    """Closed-form (mean, variance) of a squeezed sector, from its generating function."""
    n = gain.nbar
    if odd:
        return 3.0 * n + 1.0, 6.0 * n * (n + 1.0)
    return n, 2.0 * n * (n + 1.0)


@dataclass(frozen=True, eq=False)
class JointModeDistribution:
    """Two-mode photon-number law of the amplified probe at phase ``phi``.

    Branch Phi+ is (single_photon on pi+) x (vacuum on pi-) with weight
    ``weight_plus``; branch Phi- is the swap.
    """

    phi: float
    gain: GainParams
    single_photon: FockDistribution
    vacuum: FockDistribution

    @property
    def weight_plus(self) -> float:
        return math.cos(self.phi / 2.0) ** 2

    @property
    def weight_minus(self) -> float:
        return math.sin(self.phi / 2.0) ** 2

    @property
    def dist_plus_branch(self) -> tuple[FockDistribution, FockDistribution]:
        return self.single_photon, self.vacuum

    @property
    def dist_minus_branch(self) -> tuple[FockDistribution, FockDistribution]:
        return self.vacuum, self.single_photon

    def joint_matrix(self, size: int | None = None) -> np.ndarray:
        """Dense P[n_plus, n_minus]; only sensible for small gain."""
        if size is None:
            size = max(self.single_photon.probs.size, self.vacuum.probs.size)
        a = self.single_photon.padded(size)
        b = self.vacuum.padded(size)
        return self.weight_plus * np.outer(a, b) + self.weight_minus * np.outer(b, a)


def amplified_probe_joint(phi: float, gain: GainParams, policy: TruncationPolicy = DEFAULT_POLICY) -> JointModeDistribution:
    phi = float(np.mod(phi, 2.0 * np.pi))
    return JointModeDistribution(
        phi=phi,
        gain=gain,
        single_photon=squeezed_single_photon_distribution(gain, policy),
        vacuum=squeezed_vacuum_distribution(gain, policy),
    )


def mode_means(joint: JointModeDistribution) -> tuple[float, float]:
    """Mean photon numbers (pi+, pi-) computed from the stored distributions."""
    m1 = joint.single_photon.mean()
    m0 = joint.vacuum.mean()
    wp, wm = joint.weight_plus, joint.weight_minus
    return wp * m1 + wm * m0, wp * m0 + wm * m1


def fringe_visibility(gain: GainParams) -> float:
    """(<n+> - <n->)/(<n+> + <n->) at phi = 0, i.e. (2 nbar + 1)/(4 nbar + 1)."""
    n = gain.nbar
    return (2.0 * n + 1.0) / (4.0 * n + 1.0)
