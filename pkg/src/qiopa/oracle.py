"""Dense squeeze-operator oracle for small gain.

Builds exp(g (a^2 - a^dag^2) / 2) on a truncated number basis and applies it
to Fock inputs.  This is deliberately independent of the closed-form series
in :mod:`qiopa.fock`; the two are compared elementwise in the test suite and
by the ``oracle-check`` command.
"""
from __future__ import annotations

import numpy as np
from scipy.linalg import expm
from scipy.stats import chisquare

from .channel import SourceLaw, detected_joint_law, sample_detected_counts

__all__ = [
    "OracleResolutionError",
    "squeeze_operator",
    "small_g_oracle",
    "oracle_probe_joint",
    "default_oracle_dim",
    "sampler_goodness_of_fit",
]

MAX_GAIN = 1.0
MAX_DIM = 256
# probability allowed in the top quarter of the basis before the result is
# considered contaminated by the truncation boundary
RESOLUTION_TAIL = 1e-10


class OracleResolutionError(ValueError):
    pass


def squeeze_operator(g: float, dim: int) -> np.ndarray:
    a = np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1)
    generator = 0.5 * (a @ a - a.T @ a.T)
    return expm(g * generator)


def _check(g: float, dim: int):
    if not (0.0 <= g <= MAX_GAIN):
        raise OracleResolutionError(f"oracle regime is 0 <= g <= {MAX_GAIN}, got g={g}")
    if not (8 <= dim <= MAX_DIM):
        raise OracleResolutionError(f"oracle dim must lie in [8, {MAX_DIM}], got {dim}")


def _column_probs(op: np.ndarray, k: int) -> np.ndarray:
    probs = np.abs(op[:, k]) ** 2
    dim = probs.size
    edge = probs[3 * dim // 4:].sum()
    if edge > RESOLUTION_TAIL:
        raise OracleResolutionError(
            f"dim={dim} too small: {edge:.2e} of the probability sits in the top quarter of the basis"
        )
    return probs


def default_oracle_dim(g: float) -> int:
    for dim in (32, 64, 96, 128, 192, 256):
        op = squeeze_operator(g, dim)
        if (np.abs(op[3 * dim // 4:, :2]) ** 2).sum(axis=0).max() <= RESOLUTION_TAIL:
            return dim
    return MAX_DIM


def small_g_oracle(input_photons: tuple[int, int], g: float, dim: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Photon-number distributions of each mode after squeezing Fock inputs.

    ``input_photons`` gives the photon number (0 or 1) injected into the
    (pi+, pi-) modes.  Returns one probability vector of length ``dim`` per
    mode.
    """
    if dim is None:
        dim = default_oracle_dim(g)
    _check(g, dim)
    if any(k not in (0, 1) for k in input_photons):
        raise ValueError("input photons must be 0 or 1 per mode")
    op = squeeze_operator(g, dim)
    return tuple(_column_probs(op, k) for k in input_photons)


def oracle_probe_joint(phi: float, g: float, dim: int | None = None) -> np.ndarray:
    """Joint P[n+, n-] of the amplified probe from the coherent superposition.

    The two branch amplitudes are added before squaring, so any interference
    between them would show up here.
    """
    if dim is None:
        dim = default_oracle_dim(g)
    _check(g, dim)
    op = squeeze_operator(g, dim)
    one = op[:, 1].astype(complex)
    zero = op[:, 0].astype(complex)
    amp = np.cos(phi / 2.0) * np.outer(one, zero) + 1j * np.sin(phi / 2.0) * np.outer(zero, one)
    _column_probs(op, 1)
    return np.abs(amp) ** 2


def sampler_goodness_of_fit(source: SourceLaw, trials: int, rng: np.random.Generator, min_expected: float = 5.0) -> tuple[float, int, float]:
    """Chi-square test of sampled (m+, m-) pairs against the exact detected law.

    Cells expected to hold fewer than ``min_expected`` counts are pooled into
    one bin together with everything outside the exact grid.  Returns
    (statistic, degrees of freedom, p-value).
    """
    law = detected_joint_law(source)
    size = law.shape[0]
    mp, mm = sample_detected_counts(source, rng=rng, size=trials)
    inside = (mp < size) & (mm < size)
    observed = np.zeros_like(law)
    np.add.at(observed, (mp[inside], mm[inside]), 1.0)
    expected = law * trials
    big = expected >= min_expected
    obs = np.append(observed[big], trials - observed[big].sum())
    exp = np.append(expected[big], trials - expected[big].sum())
    if exp[-1] < min_expected:
        # pooled remainder too thin to test on its own
        obs, exp = obs[:-1], exp[:-1]
        exp = exp * obs.sum() / exp.sum()
    stat, pvalue = chisquare(obs, exp)
    return float(stat), int(obs.size - 1), float(pvalue)
