"""Named studies: quantitative sweeps behind the `ssep-hydro` harness.

Each study takes a StudyConfig, computes per-N metrics, and returns a
StudyReport whose verdicts cite entries of the ACCEPTANCE catalog below.
Reports are reproducible: identical scientific inputs (everything except
the output directory and thread count) give byte-identical report.json,
with wall-clock data quarantined in the report's meta block.
"""

from __future__ import annotations

import hashlib
import json
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .boundary import check_a2, left_density
from .csvio import write_csv
from .errors import Unsupported
from .fields import gradient, solve_correlation, solve_density
from .heat import solve_heat
from .kmc import ensemble_stats, simulate
from .model import (
    LatticeSpec,
    ModelSpec,
    RateTableBoundary,
    spec_from_json,
    spec_to_json,
    structured_spec,
    table_spec,
)
from .oracle import evolve_exact, exact_moments
from .walks import duality_density

SCHEMA_VERSION = 1

# Thresholds of the acceptance suite (tests/test_acceptance.py); verdicts
# reference these by id so reports and tests agree on one catalog.
ACCEPTANCE = {
    "AC1": "solver vs oracle max-norm <= 1e-8 on the spec battery at t in {0.01, 0.1, 1}; under 60 s",
    "AC2": "KMC ensemble moments within 4 SE of the oracle at >= 95% of points with 1e5 replicas; under 300 s",
    "AC3": "duality_density linear_solve within 1e-8 of the oracle; Monte Carlo within 4 SE at n = 1e5 walks; under 120 s",
    "AC4": "sup_{t in [0.05, 0.25]} |rho_N(t, p+1) - alpha| decreasing with log-log slope <= -0.8 across the sweep; under 600 s",
    "AC5": "sqrt(N) * sup_{t >= N^-1/20, k >= p+1} |rho_N(t, k+1) - rho_N(t, k)| strictly decreasing; early-time trimmed sup <= M'/N with M' calibrated on the smallest N",
    "AC6": "trimmed-bulk sup |phi_N| decreasing with log-log slope <= -0.8 (delta = 0.1, t = 0.25); c_N monotone decreasing",
    "AC7": "e(N) = (1/N) sum_k theta(T, k)^2 strictly decreasing and e < 1e-3 at the largest N; G-weighted functional within 4 sigma of its continuum value",
    "AC8": "rate-table late-time density at site p+1 within 4 SE of alpha-tilde (N = 256, t = 2); A2 report matches hand arithmetic",
    "AC9": "single-barrier window probabilities within 4 SE of the reflection value on a 3x3 (t, s) grid at N in {64, 256} with n = 1e5 walks; under 120 s",
    "AC10": "worked stationary block measures reproduced to 1e-12; NonUniqueStationary raised for the degenerate copy-only block",
}

# p = 3 flip-rate table satisfying the smallness condition with margin:
# A = 1.0, B = 0.9, summed excess 0.25, so (p-1) * 0.25 = 0.5 <= 1.9.
A2_TABLE = (1.0, 0.93, 1.05, 0.9, 1.1, 0.95, 1.02, 0.9)


# -- profiles ----------------------------------------------------------------------

def profile_from_json(obj) -> "callable":
    """Initial-profile callable from a JSON descriptor.

    Kinds: constant {value}; linear {a, b} for a + b*u; sine
    {offset, amplitude, cycles} for offset + amplitude*sin(cycles*pi*u).
    """
    if not isinstance(obj, dict) or "kind" not in obj:
        raise ValueError("profile descriptor must be an object with a 'kind'")
    kind = obj["kind"]
    try:
        if kind == "constant":
            v = float(obj["value"])
            return lambda u: v
        if kind == "linear":
            a, b = float(obj["a"]), float(obj["b"])
            return lambda u: a + b * u
        if kind == "sine":
            off = float(obj["offset"])
            amp = float(obj["amplitude"])
            cyc = float(obj["cycles"])
            return lambda u: off + amp * math.sin(cyc * math.pi * u)
    except KeyError as e:
        raise ValueError(f"profile kind {kind!r} is missing field {e}")
    raise ValueError(f"unknown profile kind {kind!r}")


# -- config and report -------------------------------------------------------------

@dataclass(frozen=True)
class StudyConfig:
    """Inputs of one study run.

    t_grid is the study's output time grid except for gradient, where the
    grids are N-dependent and t_grid[-1] only fixes the horizon. Knobs
    that vary per study (profiles, trims, tolerances) live in params as
    plain JSON values so configs round-trip through files.
    """

    study: str
    spec: ModelSpec
    sweep: tuple
    t_grid: tuple
    replicas: int
    walks: int
    seed: int
    out_dir: str
    threads: int
    params: dict

    def __post_init__(self):
        if self.study not in STUDIES:
            raise ValueError(f"unknown study {self.study!r}")
        if not self.sweep or any(int(n) != n for n in self.sweep):
            raise ValueError("sweep must be a non-empty tuple of integers")
        if any(b <= a for a, b in zip(self.sweep, self.sweep[1:])):
            raise ValueError("sweep must be strictly ascending")
        if not self.t_grid or any(t < 0 for t in self.t_grid):
            raise ValueError("t_grid must be non-empty and non-negative")
        if any(b <= a for a, b in zip(self.t_grid, self.t_grid[1:])):
            raise ValueError("t_grid must be strictly ascending")
        if self.replicas < 1:
            raise ValueError("replicas must be >= 1")
        if self.walks < 0 or self.seed < 0:
            raise ValueError("walks and seed must be non-negative")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")

    def canonical(self) -> dict:
        """Scientific inputs only; out_dir and threads do not touch results."""
        return {
            "study": self.study,
            "spec": spec_to_json(self.spec),
            "sweep": [int(n) for n in self.sweep],
            "t_grid": [float(t) for t in self.t_grid],
            "replicas": self.replicas,
            "walks": self.walks,
            "seed": self.seed,
            "params": _jsonable(self.params),
        }

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass(frozen=True)
class Verdict:
    check: str
    threshold: str
    passed: bool
    observed: str


@dataclass(frozen=True)
class StudyReport:
    """Per-N metrics plus threshold verdicts and provenance."""

    study: str
    metrics: tuple
    verdicts: tuple
    provenance: dict
    meta: dict

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def to_json(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "study": self.study,
            "metrics": [_jsonable(m) for m in self.metrics],
            "verdicts": [
                {
                    "check": v.check,
                    "threshold": v.threshold,
                    "passed": bool(v.passed),
                    "observed": v.observed,
                }
                for v in self.verdicts
            ],
            "passed": self.passed,
            "provenance": _jsonable(self.provenance),
            "meta": _jsonable(self.meta),
        }


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return float(x)
    return x


def _verdict(check: str, ac: str, passed, observed: str) -> Verdict:
    return Verdict(check, f"{ac}: {ACCEPTANCE[ac]}", bool(passed), observed)


def _code_version() -> str:
    from ssep_hydro import __version__

    return __version__


def _provenance(config: StudyConfig) -> dict:
    return {
        "config_hash": config.config_hash,
        "seed": config.seed,
        "code_version": _code_version(),
    }


# -- shared helpers ----------------------------------------------------------------

def _resize(spec: ModelSpec, N: int) -> ModelSpec:
    return ModelSpec(LatticeSpec(N, spec.lattice.p), spec.beta, spec.left)


def _map_sweep(fn, sweep, threads):
    if threads <= 1 or len(sweep) <= 1:
        return [fn(N) for N in sweep]
    with ThreadPoolExecutor(max_workers=min(threads, len(sweep))) as ex:
        return list(ex.map(fn, sweep))


def _strictly_decreasing(xs) -> bool:
    return all(b < a for a, b in zip(xs, xs[1:]))


def fit_log_slope(ns, ys) -> float:
    """Least-squares slope of log y on log N; needs >= 3 positive points."""
    ns = np.asarray(ns, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if ns.size < 3:
        raise ValueError("decay fit needs at least 3 sweep points")
    if np.any(ys <= 0):
        raise ValueError("decay fit needs positive metric values")
    return float(np.polyfit(np.log(ns), np.log(ys), 1)[0])


def _fmt_list(xs) -> str:
    return "[" + ", ".join(f"{x:.4e}" for x in xs) + "]"


def _max_z(dev, se) -> float:
    """Largest |deviation|/se, with zero-se entries passing only on equality."""
    dev = np.abs(np.asarray(dev, dtype=float))
    se = np.asarray(se, dtype=float)
    safe = np.where(se > 0, se, 1.0)
    z = np.where(se > 0, dev / safe, np.where(dev == 0, 0.0, np.inf))
    return float(z.max())


# -- computations ------------------------------------------------------------------

def hydro_sweep(spec, profile, T, sweep, rtol=1e-9, atol=1e-12, threads=1):
    """Lattice-vs-continuum deviation theta(T, k) for each N.

    Returns (rows, heat_solution); rows carry e(N) = (1/N) sum theta^2
    and sup_k |theta|. The continuum reference uses the block-chain left
    density and beta as Dirichlet data.
    """
    sol = solve_heat(profile, left_density(spec), spec.beta)

    def one(N):
        f = solve_density(_resize(spec, N), profile, [T], rtol=rtol, atol=atol)
        th = f.rho[0] - sol(T, np.arange(1, N) / N)
        return {
            "N": N,
            "e": float(np.sum(th * th) / N),
            "sup_theta": float(np.abs(th).max()),
        }

    return _map_sweep(one, sweep, threads), sol


def hydro_functional(spec, profile, g, T, N, replicas, seed, heat_sol=None,
                     pairs=True):
    """G-weighted empirical functional (1/N) sum G(k/N) eta_k vs continuum.

    Mean and standard error come from ensemble moment estimates: the
    variance uses the plug-in site variances and pair covariances, so no
    per-replica states are kept.
    """
    if heat_sol is None:
        heat_sol = solve_heat(profile, left_density(spec), spec.beta)
    stats = ensemble_stats(_resize(spec, N), profile, [T], replicas, seed,
                           pairs=pairs)
    G = np.array([float(g(k / N)) for k in range(1, N)])
    rho = stats.rho_hat[0]
    emp = float(G @ rho) / N
    var = float((G * G) @ (rho * (1.0 - rho)))
    if pairs:
        ks, ls = np.triu_indices(N - 1, k=1)
        var += 2.0 * float((G[ks] * G[ls]) @ stats.phi_hat[0])
    se = math.sqrt(max(var, 0.0) / (N * N) / replicas)
    us = np.linspace(0.0, 1.0, 4097)
    gu = np.array([float(g(u)) for u in us])
    ref = float(np.trapezoid(gu * heat_sol(T, us), us))
    if se > 0:
        z = (emp - ref) / se
    else:
        z = 0.0 if emp == ref else math.inf
    return {
        "N": N,
        "functional": emp,
        "se": se,
        "reference": ref,
        "z": float(z),
        "replicas": replicas,
        "events": stats.event_count,
    }


def left_density_sweep(spec, profile, t_grid, sweep, rtol=1e-9, atol=1e-12,
                       threads=1):
    """Suprema over t_grid of the three boundary gaps for each N."""
    alpha = left_density(spec)
    p = spec.lattice.p

    def one(N):
        f = solve_density(_resize(spec, N), profile, t_grid, rtol=rtol, atol=atol)
        rho = f.rho
        return {
            "N": N,
            "sup_alpha_gap": float(np.abs(rho[:, p] - alpha).max()),
            "sup_block_gap": float(np.abs(rho[:, p] - rho[:, p + 1]).max()),
            "sup_right_gap": float(np.abs(spec.beta - rho[:, -1]).max()),
        }

    return _map_sweep(one, sweep, threads)


def table_density_check(spec, profile, t_checkpoints, replicas, seed):
    """Late-time KMC density at site p+1 against the block-chain value.

    Each replica contributes its checkpoint average; the standard error
    is the sample one across replicas.
    """
    if not isinstance(spec.left, RateTableBoundary):
        raise Unsupported("the stationary-density check needs a rate-table boundary")
    if replicas < 2:
        raise ValueError("need at least two replicas for a standard error")
    target = left_density(spec)
    p = spec.lattice.p
    xs = np.empty(replicas)
    events = 0
    for i in range(replicas):
        traj = simulate(spec, profile, t_checkpoints, seed + i)
        xs[i] = np.mean([float(eta[p]) for _, eta in traj.checkpoints])
        events += traj.event_count
    est = float(xs.mean())
    se = float(xs.std(ddof=1) / math.sqrt(replicas))
    if se > 0:
        z = (est - target) / se
    else:
        z = 0.0 if est == target else math.inf
    a2 = check_a2(spec.left)
    return {
        "N": spec.lattice.N,
        "alpha_tilde": target,
        "estimate": est,
        "se": se,
        "z": float(z),
        "replicas": replicas,
        "events": events,
        "a2_A": a2.A,
        "a2_B": a2.B,
        "a2_lambda_sum": a2.lambda_sum,
        "a2_holds": a2.holds,
    }


def gradient_sweep(spec, profile, sweep, horizon=1.0, eps_late=0.05, n_late=8,
                   early_bottom=2.0, early_top=1.2, n_early=6, trim_pow=0.7,
                   margin=1.1, rtol=1e-9, atol=1e-12, threads=1):
    """Late- and early-time gradient statistics for each N.

    The late statistic is sqrt(N) times the sup of |g| over t >= N^-eps_late
    and k >= p+1: the first site outside the block, since block-interior
    gradients stay order one whenever reservoir densities differ and would
    measure the block rather than the relaxation. The early sup runs over
    t <= N^-early_top and the trimmed interior k in [N^trim_pow, N - N^trim_pow],
    deep enough that boundary influence (diffusive spread N^(1 - early_top/2))
    is negligible there. M' is margin times the smallest-N value of
    N * early_sup; the bound early_sup <= M'/N is evaluated on the rest.
    """
    if early_bottom <= early_top:
        raise ValueError("early_bottom must exceed early_top")
    if horizon <= sweep[0] ** (-eps_late):
        raise ValueError("horizon sits below the late-time window")
    p = spec.lattice.p

    def one(N):
        late_grid = np.linspace(N ** (-eps_late), horizon, n_late)
        early_grid = np.geomspace(N ** (-early_bottom), N ** (-early_top), n_early)
        grid = np.concatenate([[0.0], early_grid, late_grid])
        f = solve_density(_resize(spec, N), profile, grid, rtol=rtol, atol=atol)
        g = gradient(f).g
        x = int(np.floor(N ** trim_pow))
        if x < 1 or N - x <= x:
            raise ValueError(f"trim N^{trim_pow} empties the interior at N = {N}")
        early_sup = float(np.abs(g[: n_early + 1, x - 1 : N - x]).max())
        late_sup = float(np.abs(g[n_early + 1 :, p:]).max())
        return {
            "N": N,
            "late_stat": float(math.sqrt(N) * late_sup),
            "early_sup": early_sup,
            "sq_trim": float((g[:, x - 1 : N - x] ** 2).max()),
        }

    rows = _map_sweep(one, sweep, threads)
    m_prime = float(margin * sweep[0] * rows[0]["early_sup"])
    for r in rows:
        r["early_bound"] = m_prime / r["N"]
    early_ok = [(r["N"], r["early_sup"] <= r["early_bound"]) for r in rows[1:]]
    return {"rows": rows, "m_prime": m_prime, "early_ok": early_ok}


def correlation_sweep(spec, profile, t_grid, delta, sweep, rtol=1e-8,
                      atol=1e-11, threads=1):
    """Trimmed-bulk sup of |phi| and the vertical-border sup c_N per N.

    The trimmed bulk keeps pairs with delta*N < k < l < (1-delta)*N; c_N
    takes pairs (p+1, l) with N^(3/4) < l < N, both over the whole grid.
    """
    p = spec.lattice.p

    def one(N):
        corr = solve_correlation(_resize(spec, N), profile, t_grid,
                                 rtol=rtol, atol=atol)
        lo = int(np.floor(delta * N)) + 1
        hi = int(np.ceil((1.0 - delta) * N)) - 1
        if hi <= lo:
            raise ValueError(f"delta = {delta} trims away the bulk at N = {N}")
        meso = int(np.floor(N ** 0.75))
        sup_bulk = 0.0
        c_n = 0.0
        for t in t_grid:
            M = corr.matrix(t)
            sup_bulk = max(sup_bulk, float(np.abs(np.triu(M[lo - 1 : hi, lo - 1 : hi], 1)).max()))
            c_n = max(c_n, float(np.abs(M[p, meso : N - 1]).max()))
        return {"N": N, "sup_bulk": sup_bulk, "c_n": c_n}

    return _map_sweep(one, sweep, threads)


def duality_triangle(spec, profile, t, replicas, walks, seed,
                     rtol=1e-10, atol=1e-12):
    """Cross-validation of the four density routes on a small lattice.

    Deterministic legs (master distribution, moment solver, absorbed-walk
    linear solve) compare in max norm; stochastic legs (KMC ensemble,
    walk Monte Carlo) compare as z-scores, with the KMC-vs-walk pair on
    combined standard errors.
    """
    rho_o, _ = exact_moments(evolve_exact(spec, profile, [t])[0])
    f = solve_density(spec, profile, [t], rtol=rtol, atol=atol)
    solver_dev = float(np.abs(f.rho[0] - rho_o).max())
    sites = list(spec.lattice.sites)
    lin = np.array([duality_density(spec, profile, t, j) for j in sites])
    lin_dev = float(np.abs(lin - rho_o).max())
    stats = ensemble_stats(spec, profile, [t], replicas, seed, pairs=False)
    est = np.empty(len(sites))
    se = np.empty(len(sites))
    for i, j in enumerate(sites):
        est[i], se[i] = duality_density(spec, profile, t, j,
                                        method="monte_carlo", n=walks,
                                        seed=seed + j)
    return {
        "N": spec.lattice.N,
        "t": float(t),
        "solver_dev": solver_dev,
        "dual_linear_dev": lin_dev,
        "z_kmc": _max_z(stats.rho_hat[0] - rho_o, stats.rho_se[0]),
        "z_dual_mc": _max_z(est - rho_o, se),
        "z_cross": _max_z(stats.rho_hat[0] - est,
                          np.sqrt(stats.rho_se[0] ** 2 + se ** 2)),
        "replicas": replicas,
        "walks": walks,
        "events": stats.event_count,
    }


# -- studies -----------------------------------------------------------------------

def study_hydro(config: StudyConfig) -> StudyReport:
    """Decay of theta = rho_N - rho_bar across the sweep, plus the
    G-weighted functional check when replicas allow."""
    t0 = time.time()
    params = config.params
    profile = profile_from_json(params["profile"])
    T = config.t_grid[-1]
    rows, sol = hydro_sweep(config.spec, profile, T, config.sweep,
                            rtol=params.get("rtol", 1e-9),
                            atol=params.get("atol", 1e-12),
                            threads=config.threads)
    es = [r["e"] for r in rows]
    verdicts = [
        _verdict("e-strictly-decreasing", "AC7", _strictly_decreasing(es),
                 f"e(N) = {_fmt_list(es)}"),
        _verdict("e-final-below-1e-3", "AC7", es[-1] < 1e-3,
                 f"e({config.sweep[-1]}) = {es[-1]:.4e}"),
    ]
    metrics = list(rows)
    if config.replicas >= 2:
        g = profile_from_json(params["g_weight"])
        fn = int(params.get("functional_n", config.sweep[-1]))
        func = hydro_functional(config.spec, profile, g, T, fn,
                                config.replicas, config.seed, heat_sol=sol)
        verdicts.append(_verdict(
            "functional-within-4-sigma", "AC7", abs(func["z"]) <= 4.0,
            f"z = {func['z']:.3f} (functional {func['functional']:.6f}, "
            f"reference {func['reference']:.6f}, se {func['se']:.3e})"))
        metrics.append(func)
    return StudyReport("hydro", tuple(metrics), tuple(verdicts),
                       _provenance(config),
                       {"runtime_s": round(time.time() - t0, 3)})


def study_left_density(config: StudyConfig) -> StudyReport:
    """Boundary-gap suprema: deterministic sweep for structured boundaries,
    stationary KMC check against alpha-tilde for rate tables."""
    t0 = time.time()
    profile = profile_from_json(config.params["profile"])
    if isinstance(config.spec.left, RateTableBoundary):
        row = table_density_check(_resize(config.spec, config.sweep[-1]),
                                  profile, config.t_grid, config.replicas,
                                  config.seed)
        verdicts = [
            _verdict("a2-holds", "AC8", row["a2_holds"],
                     f"A = {row['a2_A']:.4f}, B = {row['a2_B']:.4f}, "
                     f"lambda_sum = {row['a2_lambda_sum']:.4f}"),
            _verdict("alpha-tilde-within-4se", "AC8", abs(row["z"]) <= 4.0,
                     f"z = {row['z']:.3f} (estimate {row['estimate']:.6f}, "
                     f"alpha_tilde {row['alpha_tilde']:.6f}, se {row['se']:.3e})"),
        ]
        metrics = [row]
    else:
        rows = left_density_sweep(config.spec, profile, config.t_grid,
                                  config.sweep,
                                  rtol=config.params.get("rtol", 1e-9),
                                  atol=config.params.get("atol", 1e-12),
                                  threads=config.threads)
        verdicts = []
        for key, check in (("sup_alpha_gap", "alpha-gap"),
                           ("sup_block_gap", "block-gap"),
                           ("sup_right_gap", "right-gap")):
            ys = [r[key] for r in rows]
            slope = fit_log_slope(config.sweep, ys)
            verdicts.append(_verdict(
                f"{check}-decay", "AC4",
                slope <= -0.8 and _strictly_decreasing(ys),
                f"slope = {slope:.3f}, sup = {_fmt_list(ys)}"))
        metrics = rows
    return StudyReport("left_density", tuple(metrics), tuple(verdicts),
                       _provenance(config),
                       {"runtime_s": round(time.time() - t0, 3)})


def study_gradient(config: StudyConfig) -> StudyReport:
    """Rescaled late-time gradient sup and early-time trimmed bound."""
    t0 = time.time()
    params = config.params
    profile = profile_from_json(params["profile"])
    out = gradient_sweep(
        config.spec, profile, config.sweep,
        horizon=config.t_grid[-1],
        eps_late=params.get("eps_late", 0.05),
        n_late=int(params.get("n_late", 8)),
        early_bottom=params.get("early_bottom", 2.0),
        early_top=params.get("early_top", 1.2),
        n_early=int(params.get("n_early", 6)),
        trim_pow=params.get("trim_pow", 0.7),
        margin=params.get("margin", 1.1),
        rtol=params.get("rtol", 1e-9),
        atol=params.get("atol", 1e-12),
        threads=config.threads,
    )
    late = [r["late_stat"] for r in out["rows"]]
    early_ok = all(ok for _, ok in out["early_ok"])
    verdicts = [
        _verdict("late-stat-strictly-decreasing", "AC5",
                 _strictly_decreasing(late),
                 f"sqrt(N)*sup = {_fmt_list(late)}"),
        _verdict("early-trimmed-bound", "AC5",
                 early_ok and bool(out["early_ok"]),
                 f"M' = {out['m_prime']:.4f}; " + "; ".join(
                     f"N={n} {'ok' if ok else 'FAIL'}"
                     for n, ok in out["early_ok"])),
    ]
    return StudyReport("gradient", tuple(out["rows"]), tuple(verdicts),
                       _provenance(config),
                       {"runtime_s": round(time.time() - t0, 3)})


def study_correlation(config: StudyConfig) -> StudyReport:
    """Two-point correlation decay over the trimmed bulk and V_N."""
    t0 = time.time()
    params = config.params
    profile = profile_from_json(params["profile"])
    rows = correlation_sweep(config.spec, profile, config.t_grid,
                             params.get("delta", 0.1), config.sweep,
                             rtol=params.get("rtol", 1e-8),
                             atol=params.get("atol", 1e-11),
                             threads=config.threads)
    sups = [r["sup_bulk"] for r in rows]
    cns = [r["c_n"] for r in rows]
    slope = fit_log_slope(config.sweep, sups)
    verdicts = [
        _verdict("bulk-sup-decay", "AC6",
                 slope <= -0.8 and _strictly_decreasing(sups),
                 f"slope = {slope:.3f}, sup = {_fmt_list(sups)}"),
        _verdict("cn-monotone-decreasing", "AC6", _strictly_decreasing(cns),
                 f"c_N = {_fmt_list(cns)}"),
    ]
    return StudyReport("correlation", tuple(rows), tuple(verdicts),
                       _provenance(config),
                       {"runtime_s": round(time.time() - t0, 3)})


def study_duality(config: StudyConfig) -> StudyReport:
    """Cross-validation triangle on a small lattice at one time."""
    t0 = time.time()
    profile = profile_from_json(config.params["profile"])
    spec = _resize(config.spec, config.sweep[-1])
    row = duality_triangle(spec, profile, config.t_grid[-1], config.replicas,
                           config.walks, config.seed,
                           rtol=config.params.get("rtol", 1e-10),
                           atol=config.params.get("atol", 1e-12))
    verdicts = [
        _verdict("solver-vs-oracle", "AC1", row["solver_dev"] <= 1e-8,
                 f"max dev = {row['solver_dev']:.3e}"),
        _verdict("walk-linear-vs-oracle", "AC3",
                 row["dual_linear_dev"] <= 1e-8,
                 f"max dev = {row['dual_linear_dev']:.3e}"),
        _verdict("walk-mc-vs-oracle", "AC3", row["z_dual_mc"] <= 4.0,
                 f"max |z| = {row['z_dual_mc']:.3f} at n = {row['walks']}"),
        _verdict("kmc-vs-oracle", "AC2", row["z_kmc"] <= 4.0,
                 f"max |z| = {row['z_kmc']:.3f} at {row['replicas']} replicas"),
        _verdict("kmc-vs-walk", "AC2", row["z_cross"] <= 4.0,
                 f"max combined |z| = {row['z_cross']:.3f}"),
    ]
    return StudyReport("duality", (row,), tuple(verdicts),
                       _provenance(config),
                       {"runtime_s": round(time.time() - t0, 3)})


STUDIES = {
    "hydro": study_hydro,
    "left_density": study_left_density,
    "gradient": study_gradient,
    "correlation": study_correlation,
    "duality": study_duality,
}


# -- defaults and config files -----------------------------------------------------

def _mixed_spec(N: int) -> ModelSpec:
    return structured_spec(N, 2, 0.6, [0.5, 1.2], [0.2, 0.9],
                           c=[[0.0, 0.7], [0.3, 0.0]],
                           a=[[0.0, 0.2], [0.4, 0.0]])


def default_config(study: str) -> StudyConfig:
    """Defaults reproduce the checked-in acceptance runs for each study."""
    if study == "hydro":
        return StudyConfig(
            study="hydro",
            spec=structured_spec(64, 1, 0.8, [1.0], [0.2]),
            sweep=(64, 128, 256, 512),
            t_grid=(0.25,),
            replicas=1000,
            walks=0,
            seed=1,
            out_dir="studies/hydro",
            threads=1,
            params={
                "profile": {"kind": "constant", "value": 0.5},
                "g_weight": {"kind": "sine", "offset": 0.0,
                             "amplitude": 1.0, "cycles": 1.0},
                "functional_n": 256,
                "rtol": 1e-9,
                "atol": 1e-12,
            },
        )
    if study == "left_density":
        return StudyConfig(
            study="left_density",
            spec=_mixed_spec(64),
            sweep=(64, 128, 256, 512),
            t_grid=(0.05, 0.075, 0.1, 0.125, 0.15, 0.175, 0.2, 0.225, 0.25),
            replicas=1,
            walks=0,
            seed=2,
            out_dir="studies/left_density",
            threads=1,
            params={"profile": {"kind": "constant", "value": 0.5},
                    "rtol": 1e-9, "atol": 1e-12},
        )
    if study == "gradient":
        return StudyConfig(
            study="gradient",
            spec=_mixed_spec(64),
            sweep=(64, 128, 256, 512),
            t_grid=(1.0,),
            replicas=1,
            walks=0,
            seed=3,
            out_dir="studies/gradient",
            threads=1,
            params={
                "profile": {"kind": "sine", "offset": 0.5,
                            "amplitude": 0.2, "cycles": 2.0},
                "eps_late": 0.05,
                "n_late": 8,
                "early_bottom": 2.0,
                "early_top": 1.2,
                "n_early": 6,
                "trim_pow": 0.7,
                "margin": 1.1,
                "rtol": 1e-9,
                "atol": 1e-12,
            },
        )
    if study == "correlation":
        return StudyConfig(
            study="correlation",
            spec=structured_spec(32, 1, 0.8, [1.0], [0.2]),
            sweep=(32, 64, 128, 256),
            t_grid=(0.0, 0.05, 0.1, 0.15, 0.2, 0.25),
            replicas=1,
            walks=0,
            seed=4,
            out_dir="studies/correlation",
            threads=1,
            params={"profile": {"kind": "constant", "value": 0.5},
                    "delta": 0.1, "rtol": 1e-8, "atol": 1e-11},
        )
    if study == "duality":
        return StudyConfig(
            study="duality",
            spec=structured_spec(8, 2, 0.6, [0.5, 1.2], [0.2, 0.9],
                                 c=[[0.0, 0.7], [0.3, 0.0]]),
            sweep=(8,),
            t_grid=(0.1,),
            replicas=20000,
            walks=100000,
            seed=6,
            out_dir="studies/duality",
            threads=1,
            params={"profile": {"kind": "constant", "value": 0.5},
                    "rtol": 1e-10, "atol": 1e-12},
        )
    raise ValueError(f"unknown study {study!r}; known: {', '.join(STUDIES)}")


def default_table_config() -> StudyConfig:
    """left_density variant running the rate-table stationary check."""
    return StudyConfig(
        study="left_density",
        spec=table_spec(256, 3, 0.8, list(A2_TABLE)),
        sweep=(256,),
        t_grid=(1.0, 1.25, 1.5, 1.75, 2.0),
        replicas=160,
        walks=0,
        seed=5,
        out_dir="studies/left_density_table",
        threads=1,
        params={"profile": {"kind": "constant", "value": 0.5}},
    )


_CONFIG_KEYS = {"study", "spec", "sweep", "t_grid", "replicas", "walks",
                "seed", "out_dir", "threads", "params"}


def load_config(path, seed=None, out=None, threads=None) -> StudyConfig:
    """Study config from a JSON file, merged over the study's defaults.

    The file needs a 'study' field; every other key overrides the default.
    Explicit seed/out/threads arguments (CLI flags) win over file values.
    """
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ValueError(f"cannot read config {path}: {e}")
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise ValueError(f"config {path} is not valid JSON: {e}")
    if not isinstance(obj, dict):
        raise ValueError("config must be a JSON object")
    if "study" not in obj:
        raise ValueError("config needs a 'study' field")
    unknown = set(obj) - _CONFIG_KEYS
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
    if obj["study"] not in STUDIES:
        raise ValueError(
            f"unknown study {obj['study']!r}; known: {', '.join(STUDIES)}")
    base = default_config(obj["study"])
    params = dict(base.params)
    params.update(obj.get("params", {}))
    try:
        spec = spec_from_json(obj["spec"]) if "spec" in obj else base.spec
        return StudyConfig(
            study=obj["study"],
            spec=spec,
            sweep=tuple(int(n) for n in obj.get("sweep", base.sweep)),
            t_grid=tuple(float(t) for t in obj.get("t_grid", base.t_grid)),
            replicas=int(obj.get("replicas", base.replicas)),
            walks=int(obj.get("walks", base.walks)),
            seed=int(seed if seed is not None else obj.get("seed", base.seed)),
            out_dir=str(out if out is not None else obj.get("out_dir", base.out_dir)),
            threads=int(threads if threads is not None
                        else obj.get("threads", base.threads)),
            params=params,
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ValueError(f"bad config {path}: {e}")


# -- output ------------------------------------------------------------------------

def write_report(report: StudyReport, out_dir) -> None:
    """report.json (sorted keys, trailing newline), metrics.csv, and an SVG."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n"
    (out_dir / "report.json").write_text(payload)
    header = []
    for row in report.metrics:
        for key in row:
            if key not in header:
                header.append(key)
    rows = [[row.get(k, "") for k in header] for row in report.metrics]
    write_csv(out_dir / "metrics.csv", header, rows)
    _plot_report(report, out_dir / f"{report.study}.svg")


def _plot_report(report: StudyReport, path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = report.metrics
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    sweep_like = len(rows) >= 2 and all("N" in r for r in rows)
    if sweep_like:
        ns = [r["N"] for r in rows]
        for key in rows[0]:
            if key == "N":
                continue
            ys = [r.get(key) for r in rows]
            if all(isinstance(y, (int, float)) and y > 0 for y in ys):
                ax.loglog(ns, ys, marker="o", label=key)
        ax.set_xlabel("N")
    else:
        items = [(k, v) for k, v in rows[0].items()
                 if isinstance(v, (int, float)) and not isinstance(v, bool)
                 and v > 0]
        ax.bar([k for k, _ in items], [v for _, v in items])
        ax.set_yscale("log")
        ax.tick_params(axis="x", rotation=45)
    ax.set_title(report.study)
    if ax.get_legend_handles_labels()[0]:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def run(config_path, seed=None, out=None, threads=None) -> int:
    """Parse a config, dispatch its study, write outputs; 0 pass, 1 fail,
    2 config error."""
    try:
        config = load_config(config_path, seed=seed, out=out, threads=threads)
    except ValueError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    report = STUDIES[config.study](config)
    write_report(report, config.out_dir)
    for v in report.verdicts:
        print(f"[{'PASS' if v.passed else 'FAIL'}] {report.study}/{v.check}: {v.observed}")
    print(f"report: {Path(config.out_dir) / 'report.json'}")
    return 0 if report.passed else 1
