"""Runners behind the command-line subcommands.

Each runner takes a validated :class:`ScenarioConfig` and returns a
:class:`ResultArchive` that has not been written yet.  Parameter problems
raise :class:`ConfigError`; requests outside a numerical regime raise
:class:`RegimeError`.
"""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .archive import ResultArchive
from .calibration import CalibrationDataset, fit_gain, gain_power_map, model_counts, synthetic_dataset
from .channel import ChannelParams, build_source_law
from .config import ConfigError, ScenarioConfig, expand_grid
from .detection import (
    counting_difference_stats,
    estimate_visibility,
    of_statistics_exact,
    of_sweep,
    scan_fringe,
)
from .fock import (
    GainParams,
    TruncationPolicy,
    amplified_probe_joint,
    squeezed_single_photon_distribution,
    squeezed_vacuum_distribution,
)
from .mc import derive_seed, stream
from .metrics import (
    HIGH_LOSS_LIMIT,
    RegimeError,
    critical_injection,
    enhancement,
    enhancement_limit,
    fisher_report,
    high_loss_parameter,
    of_sensitivity,
)
from .oracle import OracleResolutionError, default_oracle_dim, oracle_probe_joint, sampler_goodness_of_fit, small_g_oracle

__all__ = ["RUNNERS", "run_scenario"]


def _num(value, name: str) -> float:
    try:
        out = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a number, got {value!r}") from None
    if not math.isfinite(out):
        raise ConfigError(f"{name} must be finite")
    return out


def _gain(value, name: str = "physics.g") -> GainParams:
    try:
        return GainParams(_num(value, name))
    except ValueError as exc:
        raise ConfigError(f"{name}: {exc}") from None


def _channel(ph: dict) -> ChannelParams:
    try:
        return ChannelParams(
            p=_num(ph["p"], "physics.p"),
            eta=_num(ph["eta"], "physics.eta"),
            seed_visibility=_num(ph.get("seed_visibility", 1.0), "physics.seed_visibility"),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"physics: {exc}") from None


def _policy(ph: dict) -> TruncationPolicy:
    eps = _num(ph.get("tail_mass", 1e-8), "physics.tail_mass")
    if not 0.0 < eps < 1.0:
        raise ConfigError("physics.tail_mass must lie in (0, 1)")
    return TruncationPolicy.tail(eps)


def _archive(cfg: ScenarioConfig) -> ResultArchive:
    return ResultArchive(cfg.semantic_hash(), cfg.to_dict())


# -- fringe ------------------------------------------------------------------


def run_fringe(cfg: ScenarioConfig) -> ResultArchive:
    """Counting fringes for the bare probe (g = 0) and the amplified probe."""
    ph, run = cfg.physics, cfg.run
    gain = _gain(ph["g"])
    channel = _channel(ph)
    phi = expand_grid(ph["phi"], "physics.phi")
    if np.unique(np.mod(phi, 2 * np.pi)).size < 2 or np.any(np.diff(phi) <= 0):
        raise ConfigError("physics.phi must be strictly increasing with at least two distinct phases")
    # the bare arm sees t = p eta photons per trial and may need a larger budget
    single = run.trials if ph["single_trials"] is None else ph["single_trials"]
    if not isinstance(single, int) or single < 2 or run.trials < 2:
        raise ConfigError("run.trials and physics.single_trials must be integers >= 2")
    policy = _policy(ph)
    arch = _archive(cfg)
    rows = {"g": [], "visibility": [], "sigma_visibility": [], "visibility_model": []}
    arms = (("single", GainParams(0.0), single), ("amplified", gain, run.trials))
    for i, (arm, g, trials) in enumerate(arms):
        scan = scan_fringe(phi, g, channel, trials, "counting", derive_seed(run.master_seed, i),
                           run.workers, policy, run.batch_size)
        arch.add_table(f"fringe_{arm}", scan.columns())
        V, sV = estimate_visibility(scan)
        p, n = channel.p, g.nbar
        model = p * channel.seed_visibility * g.c / (p * (4 * n + 1) + 2 * (1 - p) * n)
        for key, val in zip(rows, (g.g, V, sV, model)):
            rows[key].append(val)
    arch.add_table("visibility", {k: np.array(v) for k, v in rows.items()})
    arch.summary = {"visibility_single": rows["visibility"][0], "visibility_amplified": rows["visibility"][1]}
    return arch


# -- enhancement map ---------------------------------------------------------

PANELS = ("enhancement", "limit", "critical")


def run_enhancement_map(cfg: ScenarioConfig) -> ResultArchive:
    """Closed-form grids: E over (g, p, eta), E_lim over (p, eta), or p_crit(eta)."""
    ph = cfg.physics
    panel = ph["panel"]
    if panel not in PANELS:
        raise ConfigError(f"physics.panel must be one of {', '.join(PANELS)}")
    cap = int(_num(ph["max_points"], "physics.max_points"))
    eta = expand_grid(ph["eta"], "physics.eta")
    if np.any(eta <= 0) or np.any(eta > 1):
        raise ConfigError("physics.eta values must lie in (0, 1]")
    arch = _archive(cfg)
    if panel == "critical":
        if eta.size > cap:
            raise ConfigError(f"grid of {eta.size} points exceeds max_points={cap}")
        pc = np.array([critical_injection(e) if e < 0.5 else math.inf for e in eta])
        arch.add_table("critical", {"eta": eta, "p_crit": pc, "achievable": (pc < 1.0).astype(np.int64)})
        return arch
    p = expand_grid(ph["p"], "physics.p")
    if np.any(p <= 0) or np.any(p > 1):
        raise ConfigError("physics.p values must lie in (0, 1]")
    if panel == "limit":
        if p.size * eta.size > cap:
            raise ConfigError(f"grid of {p.size * eta.size} points exceeds max_points={cap}")
        P, H = np.meshgrid(p, eta, indexing="ij")
        lim = np.array([enhancement_limit(a, b) for a, b in zip(P.ravel(), H.ravel())])
        arch.add_table("limit", {
            "p": P.ravel(), "eta": H.ravel(), "E_lim": lim,
            "log10_E_lim": np.log10(lim), "above_one": (lim > 1.0).astype(np.int64),
        })
        return arch
    g = expand_grid(ph["g"], "physics.g")
    if np.any(g < 0):
        raise ConfigError("physics.g values must be >= 0")
    size = g.size * p.size * eta.size
    if size > cap:
        raise ConfigError(f"grid of {size} points exceeds max_points={cap}")
    G, P, H = (a.ravel() for a in np.meshgrid(g, p, eta, indexing="ij"))
    gains = {x: GainParams(x) for x in g}
    E = np.array([enhancement(gains[a], b, c) for a, b, c in zip(G, P, H)])
    lim = np.array([enhancement_limit(b, c) for b, c in zip(P, H)])
    pc = np.array([critical_injection(c) if c < 0.5 else math.inf for c in H])
    flag = np.array([high_loss_parameter(gains[a], c) < HIGH_LOSS_LIMIT for a, c in zip(G, H)], dtype=np.int64)
    arch.add_table("enhancement", {
        "g": G, "p": P, "eta": H, "E": E, "log10_E": np.log10(E),
        "E_lim": lim, "p_crit": pc, "regime_flag": flag,
    })
    return arch


# -- OF tradeoff -------------------------------------------------------------


def run_of_tradeoff(cfg: ScenarioConfig) -> ResultArchive:
    """Threshold sweep of the orthogonality filter next to the counting strategy."""
    ph, run = cfg.physics, cfg.run
    gain = _gain(ph["g"])
    channel = _channel(ph)
    if channel.p <= 0:
        raise ConfigError("physics.p must be > 0 for an enhancement comparison")
    ks = expand_grid(ph["k"], "physics.k", integer=True)
    if np.any(ks < 0):
        raise ConfigError("physics.k values must be >= 0")
    fk = ph["fringe_k"]
    if fk is not None and (not isinstance(fk, int) or fk < 0):
        raise ConfigError("physics.fringe_k must be a nonnegative integer or null")
    phi = expand_grid(ph["phi"], "physics.phi")
    method = ph["method"]
    all_ks = sorted(set(ks.tolist()) | ({fk} if fk is not None else set()))
    arch = _archive(cfg)
    fringe = None
    if method == "exact":
        stats = {s.k: s for s in of_statistics_exact(all_ks, gain, channel)}
        if fk is not None:
            s = stats[fk]
            mid, half = (s.I_max + s.I_min) / 2, (s.I_max - s.I_min) / 2
            plus = mid + half * np.cos(phi)
            minus = mid - half * np.cos(phi)
            fringe = {"phi": phi, "rate_plus": plus, "rate_zero": 1.0 - plus - minus, "rate_minus": minus}
    elif method == "mc":
        if np.any(np.diff(phi) <= 0):
            raise ConfigError("physics.phi must be strictly increasing")
        sweep = of_sweep(phi, all_ks, gain, channel, run.trials, run.master_seed, run.workers,
                         _policy(ph), run.batch_size)
        stats = {s.k: s for s in sweep}
        if fk is not None:
            fringe = stats[fk].scan.columns()
    else:
        raise ConfigError("physics.method must be 'exact' or 'mc'")
    pe = channel.p * channel.eta
    cols = {n: [] for n in ("k", "R_mean", "I_max", "I_min", "visibility", "sigma_visibility",
                            "visibility_conditional", "S_OF", "E_OF", "degenerate")}
    for k in ks.tolist():
        s = stats[k]
        S = 0.0 if s.degenerate else of_sensitivity(s.I_max, s.I_min, math.pi / 2)
        for name, val in zip(cols, (k, s.R_mean, s.I_max, s.I_min, s.visibility, s.sigma_visibility,
                                    s.visibility_conditional, S, S * S / pe, int(s.degenerate))):
            cols[name].append(val)
    table = {n: np.array(v, dtype=np.int64 if n in ("k", "degenerate") else float) for n, v in cols.items()}
    arch.add_table("of_tradeoff", table)
    mean, var = counting_difference_stats(math.pi / 2, gain, channel)
    slope = channel.p * channel.eta * channel.seed_visibility * gain.c
    e_count = slope * slope / var / pe
    best = int(np.argmax(table["E_OF"]))
    arch.add_table("comparison", {
        "counting_E": np.array([e_count]),
        "best_of_E": np.array([table["E_OF"][best]]),
        "best_of_k": np.array([table["k"][best]], dtype=np.int64),
        "counting_exceeds": np.array([int(e_count > table["E_OF"][best])], dtype=np.int64),
    })
    if fringe is not None:
        arch.add_table(f"of_fringe_k{fk}", fringe)
    arch.summary = {"counting_E": e_count, "best_of_E": float(table["E_OF"][best]), "method": method}
    return arch


# -- Fisher ------------------------------------------------------------------


def run_fisher(cfg: ScenarioConfig) -> ResultArchive:
    """Classical Fisher information of photon counting beside S^2 and H_ampl."""
    ph = cfg.physics
    gain = _gain(ph["g"])
    channel = _channel(ph)
    phi = expand_grid(ph["phi"], "physics.phi")
    policy = _policy(ph)
    method = "auto" if ph["gaussian_fallback"] else "exact"
    rows = []
    for x in phi:
        try:
            rows.append(fisher_report(float(x), gain, channel, policy, method=method))
        except RegimeError:
            raise
        except Exception as exc:
            if method == "exact":
                raise RegimeError(
                    f"exact Fisher sum unavailable at g={gain.g}, eta={channel.eta} ({exc}); "
                    "set physics.gaussian_fallback=true to use the moment approximation"
                ) from exc
            raise
    arch = _archive(cfg)
    arch.add_table("fisher", {
        "phi": phi,
        "F_classical": np.array([r.classical_fisher for r in rows]),
        "S2": np.array([r.s_squared for r in rows]),
        "H_ampl": np.array([r.quantum_fisher_highloss for r in rows]),
        "cr_ratio": np.array([r.cr_ratio for r in rows]),
        "excluded_mass": np.array([r.excluded_mass for r in rows]),
        "gaussian": np.array([int(r.method == "gaussian") for r in rows], dtype=np.int64),
        "high_loss": np.array([int(r.high_loss) for r in rows], dtype=np.int64),
    })
    return arch


# -- calibration -------------------------------------------------------------


def run_calibrate(cfg: ScenarioConfig) -> ResultArchive:
    """Fit (g_max, eta) to a counts-versus-power CSV or to seeded synthetic data."""
    ph, run = cfg.physics, cfg.run
    if ph["data"] is not None:
        try:
            text = Path(ph["data"]).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read calibration data: {exc}") from None
        try:
            data = CalibrationDataset.from_csv(text, normalized=bool(ph["normalized"]))
        except (ValueError, KeyError, IndexError) as exc:
            raise ConfigError(f"bad calibration data: {exc}") from None
    else:
        syn = ph["synthetic"]
        try:
            data = synthetic_dataset(
                _num(syn["g_max"], "synthetic.g_max"), _num(syn["eta"], "synthetic.eta"),
                int(syn["n_points"]), _num(syn["noise"], "synthetic.noise"), stream(run.master_seed, 0),
            )
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"physics.synthetic: {exc}") from None
    if ph["weighting"] not in ("poisson", "none"):
        raise ConfigError("physics.weighting must be 'poisson' or 'none'")
    fit = fit_gain(data, weighting=ph["weighting"], workers=run.workers)
    arch = _archive(cfg)
    g = gain_power_map(data.power, data.power[-1], fit.g_max)
    model = model_counts(g, fit.eta_fit)
    arch.add_table("calibration", {
        "power": data.power, "counts": data.counts, "model": model, "residual": data.counts - model,
    })
    arch.add_table("fit", {
        "g_max": np.array([fit.g_max]), "eta_fit": np.array([fit.eta_fit]),
        "residual_norm": np.array([fit.residual_norm]),
        "g_max_halfwidth": np.array([fit.g_max_halfwidth]), "eta_halfwidth": np.array([fit.eta_halfwidth]),
        "starts": np.array([fit.starts], dtype=np.int64), "converged_starts": np.array([fit.converged_starts], dtype=np.int64),
    })
    arch.documents["fit"] = {k: getattr(fit, k) for k in fit.__dataclass_fields__}
    arch.summary = {"g_max": fit.g_max, "eta_fit": fit.eta_fit}
    return arch


# -- oracle check ------------------------------------------------------------

# tight enough that truncation never shows up at the 1e-10 level
_ORACLE_POLICY = TruncationPolicy.tail(1e-14)


def run_oracle_check(cfg: ScenarioConfig) -> ResultArchive:
    """Closed forms against the dense oracle, and the sampler against the exact law.

    ``summary["passed"]`` is False when any deviation exceeds its bound.
    ``physics.corrupt`` perturbs the closed forms by one part in 10^6 to
    show that the check detects errors.
    """
    ph, run = cfg.physics, cfg.run
    gs = expand_grid(ph["g"], "physics.g")
    bound = _num(ph["bound"], "physics.bound")
    joint_max = _num(ph["joint_g_max"], "physics.joint_g_max")
    scale = 1.0 + 1e-6 if ph["corrupt"] else 1.0
    names, gcol, dev, bnd = [], [], [], []
    for g in gs.tolist():
        if g < 0:
            raise ConfigError("physics.g values must be >= 0")
        try:
            dim = default_oracle_dim(g) if g <= 1.0 else 0
            zero_o, one_o = small_g_oracle((0, 1), g, dim)
        except OracleResolutionError as exc:
            raise RegimeError(str(exc)) from exc
        gain = GainParams(g)
        zero_c = squeezed_vacuum_distribution(gain, _ORACLE_POLICY).padded(dim) * scale
        one_c = squeezed_single_photon_distribution(gain, _ORACLE_POLICY).padded(dim) * scale
        checks = [("squeezed_vacuum", np.abs(zero_c - zero_o).max()),
                  ("squeezed_single_photon", np.abs(one_c - one_o).max())]
        if g <= joint_max:
            joint = amplified_probe_joint(math.pi / 2, gain, _ORACLE_POLICY).joint_matrix(dim) * scale
            checks.append(("joint_pi_over_2", np.abs(joint - oracle_probe_joint(math.pi / 2, g, dim)).max()))
        for name, d in checks:
            names.append(name)
            gcol.append(g)
            dev.append(float(d))
            bnd.append(bound)
    dev_a, bnd_a = np.array(dev), np.array(bnd)
    arch = _archive(cfg)
    arch.add_table("oracle", {
        "check": np.array(names, dtype=object), "g": np.array(gcol), "deviation": dev_a,
        "bound": bnd_a, "passed": (dev_a <= bnd_a).astype(np.int64),
    })
    passed = bool(np.all(dev_a <= bnd_a))
    smp = ph["sampler"]
    if int(smp["trials"]) > 0:
        try:
            gain = _gain(smp["g"], "physics.sampler.g")
            channel = ChannelParams(_num(smp["p"], "sampler.p"), _num(smp["eta"], "sampler.eta"))
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"physics.sampler: {exc}") from None
        if gain.g > 1.0:
            raise RegimeError("sampler check is limited to g <= 1 (exact thinned law)")
        source = build_source_law(_num(smp["phi"], "sampler.phi"), gain, channel)
        stat, dof, pval = sampler_goodness_of_fit(source, int(smp["trials"]), stream(run.master_seed, 0))
        alpha = _num(smp["alpha"], "sampler.alpha")
        ok = pval >= alpha
        arch.add_table("sampler", {
            "g": np.array([gain.g]), "p": np.array([channel.p]), "eta": np.array([channel.eta]),
            "phi": np.array([source.phi]), "trials": np.array([int(smp["trials"])], dtype=np.int64),
            "statistic": np.array([stat]), "dof": np.array([dof], dtype=np.int64),
            "p_value": np.array([pval]), "alpha": np.array([alpha]), "passed": np.array([int(ok)], dtype=np.int64),
        })
        passed = passed and ok
    arch.summary = {"passed": passed, "max_deviation": float(dev_a.max())}
    return arch


RUNNERS = {
    "fringe": run_fringe,
    "enhancement_map": run_enhancement_map,
    "of_tradeoff": run_of_tradeoff,
    "fisher": run_fisher,
    "calibrate": run_calibrate,
    "oracle_check": run_oracle_check,
}


def run_scenario(cfg: ScenarioConfig) -> ResultArchive:
    return RUNNERS[cfg.kind](cfg)
