"""Measurement strategies: photon-number difference and orthogonality filter.

Conventions used throughout:

* counting: the fringe signal is <D> = <m+ - m->; its visibility is the
  fitted cosine amplitude divided by the mean total count <m+ + m->.
* OF: the fringe I(phi) is the unconditional +1 rate (fraction of all
  trials giving +1).  R_mean is the conclusive fraction, the rate of +1 or
  -1, averaged over the phase grid.  The +1 rate among conclusive trials is
  reported alongside as ``visibility_conditional``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .channel import (
    ChannelParams,
    build_source_law,
    sample_detected_counts,
    thinned_moments,
    thinned_squeezed_distribution,
)
from .fock import DEFAULT_POLICY, GainParams, TruncationPolicy
from .mc import RunPlan, derive_seed, run_plan_execute

__all__ = [
    "FringeScan",
    "OFConfig",
    "OFStatistics",
    "FitError",
    "DegenerateStatisticsError",
    "counting_difference_stats",
    "fit_cosine",
    "scan_fringe",
    "estimate_visibility",
    "of_classify",
    "of_statistics",
    "of_sweep",
    "of_statistics_exact",
]


class FitError(ValueError):
    pass


class DegenerateStatisticsError(ValueError):
    pass


@dataclass(frozen=True)
class OFConfig:
    k: int = 0

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 0:
            raise ValueError(f"threshold k must be a nonnegative integer, got {self.k}")


@dataclass(frozen=True, eq=False)
class FringeScan:
    phi_grid: np.ndarray
    signal: np.ndarray
    std_err: np.ndarray
    trials_per_point: int
    strategy: str = "counting"
    total: np.ndarray | None = None
    total_err: np.ndarray | None = None
    rate_plus: np.ndarray | None = None
    rate_zero: np.ndarray | None = None
    rate_minus: np.ndarray | None = None

    def __post_init__(self):
        grid = np.asarray(self.phi_grid, dtype=float)
        if grid.ndim != 1 or grid.size < 1:
            raise ValueError("phi_grid must be a non-empty 1-D array")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("phi_grid must be strictly increasing")
        object.__setattr__(self, "phi_grid", grid)
        for name in ("signal", "std_err", "total", "total_err", "rate_plus", "rate_zero", "rate_minus"):
            v = getattr(self, name)
            if v is not None:
                v = np.asarray(v, dtype=float)
                if v.shape != grid.shape:
                    raise ValueError(f"{name} must match phi_grid")
                object.__setattr__(self, name, v)

    def columns(self) -> dict[str, np.ndarray]:
        cols = {
            "phi": self.phi_grid,
            "signal": self.signal,
            "std_err": self.std_err,
            "n_trials": np.full(self.phi_grid.size, self.trials_per_point, dtype=np.int64),
        }
        for name in ("total", "total_err", "rate_plus", "rate_zero", "rate_minus"):
            v = getattr(self, name)
            if v is not None:
                cols[name] = v
        return cols

    @classmethod
    def from_columns(cls, cols: dict[str, np.ndarray], strategy: str = "counting") -> "FringeScan":
        extra = {k: cols[k] for k in ("total", "total_err", "rate_plus", "rate_zero", "rate_minus") if k in cols}
        return cls(
            phi_grid=cols["phi"],
            signal=cols["signal"],
            std_err=cols["std_err"],
            trials_per_point=int(np.asarray(cols["n_trials"])[0]),
            strategy=strategy,
            **extra,
        )


@dataclass(frozen=True)
class OFStatistics:
    k: int
    R_mean: float
    I_max: float
    I_min: float
    visibility: float
    sigma_visibility: float = 0.0
    visibility_conditional: float = float("nan")
    degenerate: bool = False
    scan: FringeScan | None = field(default=None, compare=False, repr=False)


def counting_difference_stats(phi: float, gain: GainParams, channel: ChannelParams, policy: TruncationPolicy = DEFAULT_POLICY) -> tuple[float, float]:
    """Mean and variance of the detected difference m+ - m-, without sampling.

    Each product term of the source law contributes thinned per-mode moments;
    the mixture is combined with the law of total variance.
    """
    source = build_source_law(phi, gain, channel, policy)
    eta = channel.eta
    one = thinned_moments(source.single_photon.mean(), source.single_photon.variance(), eta)
    zero = thinned_moments(source.vacuum.mean(), source.vacuum.variance(), eta)
    wa, wb, wc = source.sector_weights
    terms = [
        (wa, one[0] - zero[0], one[1] + zero[1]),
        (wb, zero[0] - one[0], zero[1] + one[1]),
        (wc, 0.0, 2.0 * zero[1]),
    ]
    mean = math.fsum(w * m for w, m, _ in terms)
    second = math.fsum(w * (v + m * m) for w, m, v in terms)
    return mean, second - mean * mean


def fit_cosine(phi, y, sigma=None) -> tuple[float, float, np.ndarray]:
    """Least-squares fit y = A cos(phi) + B; returns (A, B, covariance).

    With ``sigma`` the fit is weighted and the covariance uses the given
    errors as absolute; without it the covariance comes from the residuals.
    """
    phi = np.asarray(phi, dtype=float)
    y = np.asarray(y, dtype=float)
    X = np.column_stack([np.cos(phi), np.ones_like(phi)])
    if sigma is None:
        w = np.ones_like(y)
    else:
        w = 1.0 / np.asarray(sigma, dtype=float) ** 2
    normal = X.T @ (w[:, None] * X)
    if phi.size < 2 or np.linalg.cond(normal) > 1e12:
        raise FitError("singular normal equations: phase grid does not identify amplitude and offset")
    cov = np.linalg.inv(normal)
    A, B = cov @ (X.T @ (w * y))
    if sigma is None:
        resid = y - X @ np.array([A, B])
        dof = phi.size - 2
        s2 = float(resid @ resid) / dof if dof > 0 else 0.0
        cov = cov * s2
    return float(A), float(B), cov


def _counting_scenario(source, eta):
    def run(rng, n):
        mp, mm = sample_detected_counts(source, eta, rng, size=n)
        return {"D": (mp - mm).astype(float), "T": (mp + mm).astype(float)}

    run.key = f"counting|{source.summary()}"
    return run


def _of_scenario(source, eta, ks):
    def run(rng, n):
        mp, mm = sample_detected_counts(source, eta, rng, size=n)
        d = mp - mm
        out = {}
        for k in ks:
            out[f"plus_{k}"] = (d > k).astype(float)
            out[f"minus_{k}"] = (d < -k).astype(float)
        return out

    run.key = f"of|{tuple(ks)}|{source.summary()}"
    return run


def _run_points(phi_grid, gain, channel, trials, make, seed, workers, policy, batch_size):
    results = []
    for i, phi in enumerate(phi_grid):
        source = build_source_law(phi, gain, channel, policy)
        plan = RunPlan(
            master_seed=derive_seed(seed, i),
            trials_total=int(trials),
            scenario=make(source),
            workers=workers,
            batch_size=batch_size,
        )
        results.append(run_plan_execute(plan))
    return results


def _floor(se: np.ndarray, trials: int) -> np.ndarray:
    # an all-identical sample has zero spread; keep one-count resolution
    return np.maximum(se, 1.0 / trials)


def scan_fringe(
    phi_grid: Sequence[float],
    gain: GainParams,
    channel: ChannelParams,
    trials: int,
    strategy: str | OFConfig = "counting",
    seed: int = 0,
    workers: int = 1,
    policy: TruncationPolicy = DEFAULT_POLICY,
    batch_size: int = 100_000,
) -> FringeScan:
    """Monte Carlo fringe: <D> per phase (counting) or OF outcome rates."""
    if trials < 2:
        raise ValueError("need at least 2 trials per point")
    phi_grid = np.asarray(phi_grid, dtype=float)
    eta = channel.eta
    if strategy == "counting":
        ests = _run_points(phi_grid, gain, channel, trials, lambda s: _counting_scenario(s, eta), seed, workers, policy, batch_size)
        return FringeScan(
            phi_grid=phi_grid,
            signal=np.array([e["D"].value for e in ests]),
            std_err=_floor(np.array([e["D"].std_err for e in ests]), trials),
            trials_per_point=int(trials),
            strategy="counting",
            total=np.array([e["T"].value for e in ests]),
            total_err=_floor(np.array([e["T"].std_err for e in ests]), trials),
        )
    if isinstance(strategy, OFConfig):
        k = strategy.k
        ests = _run_points(phi_grid, gain, channel, trials, lambda s: _of_scenario(s, eta, [k]), seed, workers, policy, batch_size)
        return _of_scan(phi_grid, ests, k, trials)
    raise ValueError(f"unknown strategy {strategy!r}")


def _of_scan(phi_grid, ests, k, trials) -> FringeScan:
    plus = np.array([e[f"plus_{k}"].value for e in ests])
    minus = np.array([e[f"minus_{k}"].value for e in ests])
    se = np.sqrt(plus * (1.0 - plus) / trials)
    return FringeScan(
        phi_grid=phi_grid,
        signal=plus,
        std_err=_floor(se, trials),
        trials_per_point=int(trials),
        strategy="of",
        rate_plus=plus,
        rate_zero=1.0 - plus - minus,
        rate_minus=minus,
    )


def estimate_visibility(scan: FringeScan) -> tuple[float, float]:
    """Visibility and its 1-sigma error from a cosine fit of the scan.

    Counting scans: |A| / mean total count.  Rate scans (OF or any other
    strategy): (I_max - I_min)/(I_max + I_min) = |A| / B.
    """
    if np.unique(np.mod(scan.phi_grid, 2 * np.pi)).size < 2:
        raise FitError("need at least two distinct phases")
    sigma = scan.std_err if np.all(scan.std_err > 0) else None
    A, B, cov = fit_cosine(scan.phi_grid, scan.signal, sigma)
    if scan.strategy == "counting":
        if scan.total is None:
            raise FitError("counting scan lacks total counts")
        T = float(np.mean(scan.total))
        if T <= 0:
            raise FitError("no detected photons")
        sT = float(np.sqrt(np.sum(scan.total_err**2))) / scan.total.size if scan.total_err is not None else 0.0
        V = abs(A) / T
        sV = math.sqrt(cov[0, 0] / T**2 + (abs(A) * sT / T**2) ** 2)
        return V, sV
    if B <= 0:
        raise FitError("nonpositive fringe offset")
    V = abs(A) / B
    grad = np.array([math.copysign(1.0, A) / B, -abs(A) / B**2])
    sV = math.sqrt(max(float(grad @ cov @ grad), 0.0))
    return V, sV


def of_classify(m_plus, m_minus, cfg: OFConfig):
    """+1 if m+ - m- > k, -1 if m- - m+ > k, else 0 (vectorised)."""
    d = np.asarray(m_plus) - np.asarray(m_minus)
    if np.any(np.asarray(m_plus) < 0) or np.any(np.asarray(m_minus) < 0):
        raise ValueError("counts must be nonnegative")
    out = np.where(d > cfg.k, 1, np.where(-d > cfg.k, -1, 0))
    return int(out) if out.ndim == 0 else out


def _fit_mirrored(phi, plus, minus, trials):
    """Fit I(phi) = A cos(phi) + B to the +1 rate and the -1 rate together.

    The -1 rate at phi samples the same fringe at phi + pi.  The fit is
    unweighted, so on a uniform full-period grid B is exactly half the mean
    conclusive rate; the covariance is the sandwich form with multinomial
    per-phase errors (or residual-based when ``trials`` is None).
    """
    c = np.cos(phi)
    X = np.column_stack([np.concatenate([c, -c]), np.ones(2 * phi.size)])
    y = np.concatenate([plus, minus])
    normal = X.T @ X
    if np.linalg.cond(normal) > 1e12:
        raise FitError("singular normal equations: phase grid does not identify amplitude and offset")
    inv = np.linalg.inv(normal)
    A, B = inv @ (X.T @ y)
    if trials is None:
        resid = y - X @ np.array([A, B])
        dof = y.size - 2
        return float(A), float(B), inv * (float(resid @ resid) / dof if dof > 0 else 0.0)
    n = phi.size
    var_p = _floor(np.sqrt(plus * (1.0 - plus) / trials), trials) ** 2
    var_m = _floor(np.sqrt(minus * (1.0 - minus) / trials), trials) ** 2
    cov_y = np.zeros((2 * n, 2 * n))
    cov_y[np.arange(n), np.arange(n)] = var_p
    cov_y[np.arange(n, 2 * n), np.arange(n, 2 * n)] = var_m
    cross = -plus * minus / trials
    cov_y[np.arange(n), np.arange(n, 2 * n)] = cross
    cov_y[np.arange(n, 2 * n), np.arange(n)] = cross
    return float(A), float(B), inv @ X.T @ cov_y @ X @ inv


def _of_from_rates(phi_grid, plus, minus, k, trials, scan=None) -> OFStatistics:
    conclusive = plus + minus
    R_mean = float(np.mean(conclusive))
    if R_mean <= 0.0:
        return OFStatistics(k, 0.0, 0.0, 0.0, float("nan"), float("nan"), float("nan"), True, scan)
    A, B, cov = _fit_mirrored(np.asarray(phi_grid, dtype=float), plus, minus, trials)
    i_max = min(B + abs(A), 1.0)
    i_min = max(B - abs(A), 0.0)
    V = (i_max - i_min) / (i_max + i_min)
    grad = np.array([math.copysign(1.0, A) / B, -abs(A) / B**2])
    sV = math.sqrt(max(float(grad @ cov @ grad), 0.0))
    with np.errstate(invalid="ignore", divide="ignore"):
        cond = np.where(conclusive > 0, plus / conclusive, np.nan)
    ok = np.isfinite(cond)
    Vc = float("nan")
    if ok.sum() >= 2:
        try:
            Ac, Bc, _ = fit_cosine(np.asarray(phi_grid)[ok], cond[ok])
            Vc = abs(Ac) / Bc if Bc > 0 else float("nan")
        except FitError:
            pass
    return OFStatistics(k, R_mean, i_max, i_min, V, sV, Vc, False, scan)


def of_sweep(
    phi_grid: Sequence[float],
    ks: Sequence[int],
    gain: GainParams,
    channel: ChannelParams,
    trials: int,
    seed: int = 0,
    workers: int = 1,
    policy: TruncationPolicy = DEFAULT_POLICY,
    batch_size: int = 100_000,
) -> list[OFStatistics]:
    """OF statistics for several thresholds evaluated on the same samples."""
    phi_grid = np.asarray(phi_grid, dtype=float)
    ks = [int(OFConfig(k).k) for k in ks]
    ests = _run_points(phi_grid, gain, channel, trials, lambda s: _of_scenario(s, channel.eta, ks), seed, workers, policy, batch_size)
    out = []
    for k in ks:
        scan = _of_scan(phi_grid, ests, k, trials)
        out.append(_of_from_rates(phi_grid, scan.rate_plus, scan.rate_minus, k, trials, scan))
    return out


def of_statistics(
    phi_grid: Sequence[float],
    cfg: OFConfig,
    gain: GainParams,
    channel: ChannelParams,
    trials: int,
    seed: int = 0,
    workers: int = 1,
    policy: TruncationPolicy = DEFAULT_POLICY,
    batch_size: int = 100_000,
) -> OFStatistics:
    (stats,) = of_sweep(phi_grid, [cfg.k], gain, channel, trials, seed, workers, policy, batch_size)
    if stats.degenerate:
        raise DegenerateStatisticsError(f"no conclusive events at k={cfg.k} over the whole grid")
    return stats


def of_statistics_exact(ks: Sequence[int], gain: GainParams, channel: ChannelParams, tol: float = 1e-13) -> list[OFStatistics]:
    """OF statistics from the exact thinned laws (no sampling).

    Under each product term the difference D = m+ - m- has the
    cross-correlation of the two thinned marginals as its law.  With
    a = P_A(D > k), b = P_A(D < -k), c = P_C(D > k) the +1 rate is
    p (a + b)/2 + p V_s (a - b) cos(phi)/2 + (1 - p) c, an exact cosine.
    """
    one = thinned_squeezed_distribution(gain, channel.eta, odd=True, tol=tol).probs
    zero = thinned_squeezed_distribution(gain, channel.eta, odd=False, tol=tol).probs
    d_a = np.clip(np.convolve(one, zero[::-1]), 0.0, None)
    d_c = np.clip(np.convolve(zero, zero[::-1]), 0.0, None)
    off_a = zero.size - 1
    off_c = zero.size - 1
    p, vs = channel.p, channel.seed_visibility
    out = []
    for k in ks:
        k = OFConfig(k).k
        a = math.fsum(d_a[off_a + k + 1:])
        b = math.fsum(d_a[: max(off_a - k, 0)])
        c = math.fsum(d_c[off_c + k + 1:])
        R = p * (a + b) + 2.0 * (1.0 - p) * c
        if R <= 0.0:
            out.append(OFStatistics(k, 0.0, 0.0, 0.0, float("nan"), float("nan"), float("nan"), True))
            continue
        B = R / 2.0
        A = p * vs * (a - b) / 2.0
        cond_amp = p * vs * (a - b) / R
        out.append(OFStatistics(k, R, B + abs(A), B - abs(A), abs(A) / B, 0.0, abs(cond_amp), False))
    return out
