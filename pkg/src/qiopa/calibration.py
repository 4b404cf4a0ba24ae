"""Gain calibration from spontaneous-emission counts versus pump power.

The count model is C(g, eta) = eta tanh^2 g / (1 - (1 - eta) tanh^2 g), with
the gain taken proportional to the pump field amplitude,
g = g_max sqrt(P / P_max).  The square-root law is an assumption, not a
measured relation.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import minimize

__all__ = [
    "CalibrationError",
    "CalibrationDataset",
    "CalibrationFit",
    "model_counts",
    "gain_power_map",
    "fit_gain",
]


class CalibrationError(RuntimeError):
    def __init__(self, message: str, best: "CalibrationFit | None" = None):
        super().__init__(message)
        self.best = best


def model_counts(g, eta):
    """Detected counts per pulse in the spontaneous (uninjected) regime."""
    g = np.asarray(g, dtype=float)
    t2 = np.tanh(g) ** 2
    with np.errstate(over="ignore"):
        sech2 = 1.0 / np.cosh(g) ** 2
    # 1 - (1 - eta) t^2 written without cancellation at large g
    out = eta * t2 / (sech2 + eta * t2)
    return float(out) if out.ndim == 0 else out


def gain_power_map(P, P_max: float, g_max: float):
    P = np.asarray(P, dtype=float)
    if np.any(P < 0) or np.any(P > P_max * (1 + 1e-12)):
        raise ValueError("pump power must lie in [0, P_max]")
    out = g_max * np.sqrt(P / P_max)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class CalibrationDataset:
    """Counts-versus-power points, stored sorted by power.

    ``normalized`` records whether powers are raw (W) or already divided by
    the maximum; it does not change the fit because only P / P_max enters.
    """

    power: np.ndarray
    counts: np.ndarray
    weight: np.ndarray | None = None
    normalized: bool = False

    def __post_init__(self):
        power = np.asarray(self.power, dtype=float)
        counts = np.asarray(self.counts, dtype=float)
        if power.shape != counts.shape or power.ndim != 1:
            raise ValueError("power and counts must be matching 1-D arrays")
        order = np.argsort(power, kind="stable")
        power, counts = power[order], counts[order]
        weight = None
        if self.weight is not None:
            weight = np.asarray(self.weight, dtype=float)[order]
            if np.any(weight <= 0):
                raise ValueError("weights must be positive")
        if np.any(power < 0):
            raise ValueError("powers must be nonnegative")
        if np.any(np.diff(power) <= 0):
            raise ValueError("powers must be distinct")
        if power.size < 4:
            raise ValueError("need at least 4 points for a 2-parameter fit")
        object.__setattr__(self, "power", power)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "weight", weight)

    def weights(self, scheme: str = "poisson") -> np.ndarray:
        if self.weight is not None:
            return self.weight
        if scheme == "poisson":
            return 1.0 / np.maximum(self.counts, 1.0)
        if scheme == "none":
            return np.ones_like(self.counts)
        raise ValueError(f"unknown weighting {scheme!r}")

    @classmethod
    def from_csv(cls, text: str, normalized: bool = False) -> "CalibrationDataset":
        rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].startswith("#")]
        header = [h.strip() for h in rows[0]]
        data = np.array([[float(x) for x in r] for r in rows[1:]])
        cols = dict(zip(header, data.T))
        return cls(cols["power"], cols["counts"], cols.get("weight"), normalized)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["power", "counts"] + (["weight"] if self.weight is not None else []))
        for i in range(self.power.size):
            row = [repr(float(self.power[i])), repr(float(self.counts[i]))]
            if self.weight is not None:
                row.append(repr(float(self.weight[i])))
            w.writerow(row)
        return buf.getvalue()


@dataclass(frozen=True)
class CalibrationFit:
    g_max: float
    eta_fit: float
    residual_norm: float
    g_max_halfwidth: float
    eta_halfwidth: float
    starts: int
    converged_starts: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def _unpack(z):
    return math.exp(z[0]), 1.0 / (1.0 + math.exp(-z[1]))


def _objective(theta, x, y, w):
    g_max, eta = theta
    if not (g_max > 0 and 0 < eta <= 1):
        return math.inf
    r = y - model_counts(g_max * x, eta)
    return float(np.dot(w, r * r))


def _polish(f, theta, sweeps=30):
    """Coordinate-wise parabolic refinement; also returns the curvatures."""
    theta = np.array(theta, dtype=float)
    curv = np.zeros(theta.size)
    for _ in range(sweeps):
        moved = False
        for j in range(theta.size):
            h = 1e-4 * abs(theta[j]) + 1e-12
            for _ in range(4):
                e = np.zeros_like(theta)
                e[j] = h
                f0, fp, fm = f(theta), f(theta + e), f(theta - e)
                c2 = (fp - 2 * f0 + fm) / (h * h)
                if np.isfinite(c2) and c2 > 0:
                    break
                h *= 0.1
            if not (np.isfinite(c2) and c2 > 0):
                continue
            curv[j] = c2
            step = -(fp - fm) / (2 * h) / c2
            if abs(step) > 0.1 * abs(theta[j]) + 1e-12:
                step = math.copysign(0.1 * abs(theta[j]), step)
            trial = theta.copy()
            trial[j] += step
            if f(trial) < f0:
                theta = trial
                moved = moved or abs(step) > 1e-14 * abs(theta[j])
        if not moved:
            break
    return theta, curv


def fit_gain(
    data: CalibrationDataset,
    weighting: str = "poisson",
    g_range: tuple[float, float] = (0.1, 8.0),
    eta_range: tuple[float, float] = (1e-3, 0.9),
    grid: int = 5,
    maxiter: int = 1000,
    workers: int = 1,
) -> CalibrationFit:
    """Weighted least squares for (g_max, eta).

    Nelder-Mead in (log g_max, logit eta) from a ``grid`` x ``grid``
    log-spaced set of starts; the best result is polished coordinate by
    coordinate with parabolic steps.  Half-widths come from the local
    quadratic model of the objective, scaled by the residual variance.
    """
    x = np.sqrt(data.power / data.power[-1])
    y = data.counts
    if not np.all(np.isfinite(y)):
        raise CalibrationError("non-finite counts")
    if np.ptp(y) == 0.0:
        raise CalibrationError("counts are constant: gain and efficiency are not identifiable")
    w = data.weights(weighting)

    def fz(z):
        return _objective(_unpack(z), x, y, w)

    def run(z0):
        with np.errstate(all="ignore"):
            return minimize(fz, z0, method="Nelder-Mead",
                            options={"xatol": 1e-10, "fatol": 1e-16, "maxiter": maxiter, "maxfev": 2 * maxiter})

    starts = [
        (math.log(g0), math.log(e0 / (1 - e0)))
        for g0 in np.geomspace(*g_range, grid)
        for e0 in np.geomspace(*eta_range, grid)
    ]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, starts))
    else:
        results = [run(z0) for z0 in starts]
    converged = sum(bool(r.success) for r in results)
    # first minimum in start order, so the outcome does not depend on workers
    best = min(results, key=lambda r: r.fun)
    f = lambda th: _objective(th, x, y, w)
    theta, curv = _polish(f, _unpack(best.x))
    fbest = f(theta)
    s2 = fbest / max(y.size - 2, 1)
    half = [math.sqrt(2.0 * s2 / c) if c > 0 else math.inf for c in curv]
    fit = CalibrationFit(
        g_max=float(theta[0]),
        eta_fit=float(theta[1]),
        residual_norm=math.sqrt(fbest),
        g_max_halfwidth=half[0],
        eta_halfwidth=half[1],
        starts=len(starts),
        converged_starts=converged,
    )
    if converged == 0:
        raise CalibrationError("no multistart run converged within the iteration budget", fit)
    if not (fit.g_max > 0 and 0 < fit.eta_fit <= 1):
        raise CalibrationError("fit left the admissible region", fit)
    return fit


def synthetic_dataset(g_max: float, eta: float, n_points: int = 20, noise: float = 0.0, rng: np.random.Generator | None = None, p_max: float = 1.0) -> CalibrationDataset:
    """Counts from the model on an even power grid, with optional multiplicative noise."""
    power = np.linspace(p_max / n_points, p_max, n_points)
    counts = model_counts(gain_power_map(power, p_max, g_max), eta)
    if noise:
        if rng is None:
            raise ValueError("noise needs an rng")
        counts = counts * (1.0 + noise * rng.standard_normal(n_points))
    return CalibrationDataset(power, counts, normalized=p_max == 1.0)
