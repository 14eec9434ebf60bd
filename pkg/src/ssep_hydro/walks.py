"""Dual random walks behind the density representation.

For a structured left block without anticopy rates the density solves a
closed linear system whose probabilistic counterpart is a single walker
on the lattice extended by cemetery states: one cemetery per reservoir
channel, entered at rate r_j and carrying the value alpha_j, plus one at
the right edge entered at rate 1 and carrying beta. Copy rates act as
extra jumps inside the block. Stopping the walker at the earlier of
absorption and time t and reading the space-time boundary datum at the
stopping point reproduces the density exactly.

This module implements that walk (Monte Carlo and exact transient
solve), the absorption-race probability from site p, hitting-window
estimates for the free rate-N^2 walk that appear in the boundary-layer
bounds, and the reflected / symmetrized pair of 2D walks used near the
correlation diagonal, together with their region geometry re-exported
from `regions`.

Kernels run on unscaled rates; a macroscopic horizon is converted to
the N^2 clock exactly once, where it enters. Anticopy rates have no
single-walker dual, so every operation here requires a == 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.linalg import expm
from scipy.stats import skellam

from .csvio import write_csv
from .errors import Unsupported
from .model import (
    InitialProfile,
    LatticeSpec,
    ModelSpec,
    StructuredBoundary,
    profile_vector,
)
from .regions import (  # noqa: F401  (re-exported walk geometry)
    Region2D,
    mesoscale,
    on_bulk,
    on_diagonal,
    region_classify,
    sup_norm,
)
from .rng import GOLDEN, derive_key, make_key, mix64, u01

__all__ = [
    "DualLattice",
    "Region2D",
    "SpaceTimeBoundary",
    "augmented_dual_rates",
    "diagonal_occupation",
    "dual_lattice",
    "dual_rates",
    "duality_density",
    "estimate_pi",
    "hitting_window_grid",
    "hitting_window_prob",
    "mesoscale",
    "on_bulk",
    "on_diagonal",
    "reflection_window_prob",
    "region_classify",
    "sample_level_hit_times",
    "space_time_boundary",
    "sup_norm",
    "walk2d_step",
    "write_hitting_csv",
    "write_occupation_csv",
]


# -- extended lattice --------------------------------------------------------

def _single_walker_boundary(spec: ModelSpec) -> StructuredBoundary:
    left = spec.left
    if not isinstance(left, StructuredBoundary):
        raise Unsupported("rate-table boundaries have no single-walker dual")
    if np.any(left.a > 0):
        raise Unsupported("anticopy rates need a signed dual; out of scope")
    return left


def _site_code(site, N: int, p: int) -> int:
    """Dense 0-based code: lattice sites first, then the p reservoir
    cemeteries ("d", j), then the right cemetery N."""
    if isinstance(site, tuple):
        if len(site) == 2 and site[0] == "d" and 1 <= int(site[1]) <= p:
            return N - 1 + int(site[1]) - 1
        raise ValueError(f"unknown dual site {site!r}")
    j = int(site)
    if 1 <= j <= N - 1:
        return j - 1
    if j == N:
        return N - 1 + p
    raise ValueError(f"site {site!r} not in the extended lattice 1..{N}")


def _code_site(code: int, N: int, p: int):
    if code < N - 1:
        return code + 1
    if code < N - 1 + p:
        return ("d", code - (N - 1) + 1)
    return N


@dataclass(frozen=True)
class DualLattice:
    """Lattice sites 1..N-1 extended by the absorbing states: ("d", j)
    for the j-th reservoir channel and the plain integer N for the right
    edge. boundary_density gives the frozen value at an absorbing state."""

    lattice: LatticeSpec
    alpha: np.ndarray
    beta: float

    @property
    def cemeteries(self) -> tuple:
        return tuple(("d", j) for j in range(1, self.lattice.p + 1)) + (
            self.lattice.N,
        )

    @property
    def sites(self) -> tuple:
        return tuple(self.lattice.sites) + self.cemeteries

    def is_cemetery(self, site) -> bool:
        code = _site_code(site, self.lattice.N, self.lattice.p)
        return code >= self.lattice.N - 1

    def boundary_density(self, site) -> float:
        if isinstance(site, tuple) and site[0] == "d":
            return float(self.alpha[_site_code(site, self.lattice.N,
                                               self.lattice.p)
                                    - (self.lattice.N - 1)])
        if int(site) == self.lattice.N:
            return float(self.beta)
        raise ValueError(f"site {site!r} is not a cemetery state")


def dual_lattice(spec: ModelSpec) -> DualLattice:
    left = _single_walker_boundary(spec)
    return DualLattice(spec.lattice, left.alpha, spec.beta)


@dataclass(frozen=True)
class SpaceTimeBoundary:
    """Boundary datum b(t, j): the initial profile on lattice sites at
    t = 0, the frozen reservoir density at cemeteries for every t."""

    dual: DualLattice
    profile: InitialProfile

    def value(self, t: float, site) -> float:
        if t < 0:
            raise ValueError("t must be non-negative")
        if self.dual.is_cemetery(site):
            return self.dual.boundary_density(site)
        if t > 0:
            raise ValueError("lattice values at t > 0 are not boundary data")
        return float(self.profile(int(site) / self.dual.lattice.N))


def space_time_boundary(spec: ModelSpec,
                        profile: InitialProfile) -> SpaceTimeBoundary:
    return SpaceTimeBoundary(dual_lattice(spec), profile)


# -- dual rates --------------------------------------------------------------

def dual_rates(j, spec: ModelSpec) -> list:
    """Outgoing (target, rate) pairs of the absorbed dual walk at j.

    Bulk stirring gives unit jumps to lattice neighbours, the right edge
    adds absorption into N at rate 1, and a block site j adds its
    reservoir cemetery ("d", j) at rate r_j plus copy jumps to the other
    block sites. Rates to a common target are merged and zero-rate
    channels dropped; cemetery states are absorbing.
    """
    left = _single_walker_boundary(spec)
    N, p = spec.lattice.N, spec.lattice.p
    code = _site_code(j, N, p)
    if code >= N - 1:
        return []
    site = code + 1
    out: dict = {}
    if site >= 2:
        out[site - 1] = out.get(site - 1, 0.0) + 1.0
    if site <= N - 2:
        out[site + 1] = out.get(site + 1, 0.0) + 1.0
    if site == N - 1:
        out[N] = out.get(N, 0.0) + 1.0
    if site <= p:
        if left.r[site - 1] > 0:
            out["d", site] = out.get(("d", site), 0.0) + float(
                left.r[site - 1])
        for k in range(1, p + 1):
            rate = float(left.c[site - 1][k - 1])
            if k != site and rate > 0:
                out[k] = out.get(k, 0.0) + rate
    return sorted(out.items(), key=lambda kv: _site_code(kv[0], N, p))


def augmented_dual_rates(j, spec: ModelSpec) -> list:
    """dual_rates plus the return jump: each cemetery feeds site p+1 at
    rate 1, which removes the absorbing trap while keeping the walk's
    law identical up to the first absorption."""
    _single_walker_boundary(spec)
    N, p = spec.lattice.N, spec.lattice.p
    if _site_code(j, N, p) >= N - 1:
        return [(p + 1, 1.0)]
    return dual_rates(j, spec)


def _walk_tables(spec: ModelSpec, augmented: bool = False):
    """CSR-style (indptr, targets, rates, row totals) over site codes."""
    N, p = spec.lattice.N, spec.lattice.p
    fn = augmented_dual_rates if augmented else dual_rates
    m = N + p
    indptr = np.zeros(m + 1, dtype=np.int64)
    tgt, rate = [], []
    for code in range(m):
        pairs = fn(_code_site(code, N, p), spec)
        indptr[code + 1] = indptr[code] + len(pairs)
        for target, r in pairs:
            tgt.append(_site_code(target, N, p))
            rate.append(r)
    tgt = np.array(tgt, dtype=np.int64)
    rate = np.array(rate, dtype=np.float64)
    tot = np.zeros(m)
    for code in range(m):
        tot[code] = rate[indptr[code]:indptr[code + 1]].sum()
    return indptr, tgt, rate, tot


def _boundary_values(spec: ModelSpec, profile: InitialProfile) -> np.ndarray:
    left = _single_walker_boundary(spec)
    N, p = spec.lattice.N, spec.lattice.p
    vals = np.empty(N + p)
    vals[: N - 1] = profile_vector(profile, spec.lattice)
    vals[N - 1: N - 1 + p] = left.alpha
    vals[N - 1 + p] = spec.beta
    return vals


# -- density through the absorbed walk ---------------------------------------

@njit(cache=True)
def _duality_kernel(indptr, tgt, rate, tot, start, horizon, scale, vals,
                    key, n_walks):
    one = np.uint64(1)
    s1 = 0.0
    s2 = 0.0
    ctr = np.uint64(0)
    for _ in range(n_walks):
        x = start
        t_now = 0.0
        while tot[x] > 0.0:
            u_c = u01(key, ctr)
            ctr += one
            t_now -= math.log(1.0 - u_c) / (tot[x] * scale)
            if t_now > horizon:
                break
            u_s = u01(key, ctr)
            ctr += one
            thr = u_s * tot[x]
            acc = 0.0
            nxt = tgt[indptr[x + 1] - 1]  # last target absorbs rounding slack
            for e in range(indptr[x], indptr[x + 1]):
                acc += rate[e]
                if thr < acc:
                    nxt = tgt[e]
                    break
            x = nxt
        v = vals[x]
        s1 += v
        s2 += v * v
    mean = s1 / n_walks
    var = s2 / n_walks - mean * mean
    if var < 0.0:
        var = 0.0
    var *= n_walks / (n_walks - 1.0)
    return mean, math.sqrt(var / n_walks)


def duality_density(spec: ModelSpec, profile: InitialProfile, t: float, j,
                    method: str = "linear_solve", n: int = 100_000,
                    seed: int = 0):
    """Density rho_N(t, j) read off the absorbed dual walk from j.

    The walk runs on the N^2 clock and stops at the earlier of
    absorption and time t; the density is the mean boundary datum at the
    stopping point. method="linear_solve" returns the float from the
    exact transient solve (dense matrix exponential over the extended
    lattice, intended for moderate N); method="monte_carlo" returns
    (estimate, stderr) over n sampled walks. A cemetery j returns its
    frozen value exactly.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    N, p = spec.lattice.N, spec.lattice.p
    code = _site_code(j, N, p)
    vals = _boundary_values(spec, profile)
    if method == "linear_solve":
        if code >= N - 1:
            return float(vals[code])
        indptr, tgt, rate, tot = _walk_tables(spec)
        m = N + p
        M = np.zeros((m, m))
        for c in range(m):
            for e in range(indptr[c], indptr[c + 1]):
                M[c, tgt[e]] += rate[e]
                M[c, c] -= rate[e]
        return float((expm(t * N * N * M) @ vals)[code])
    if method == "monte_carlo":
        if n < 2:
            raise ValueError("monte_carlo needs n >= 2")
        key = make_key(seed)
        if code >= N - 1:
            return float(vals[code]), 0.0
        indptr, tgt, rate, tot = _walk_tables(spec)
        est, se = _duality_kernel(indptr, tgt, rate, tot, code, float(t),
                                  float(N) * float(N), vals, key, n)
        return float(est), float(se)
    raise ValueError(f"unknown method {method!r}")


# -- absorption race from site p ---------------------------------------------

@njit(cache=True)
def _pi_kernel(indptr, tgt, rate, tot, start, stop, cem_lo, key, n_walks):
    one = np.uint64(1)
    hits = 0
    ctr = np.uint64(0)
    for _ in range(n_walks):
        x = start
        while True:
            if x >= cem_lo:
                hits += 1
                break
            if x == stop:
                break
            u_s = u01(key, ctr)
            ctr += one
            thr = u_s * tot[x]
            acc = 0.0
            nxt = tgt[indptr[x + 1] - 1]
            for e in range(indptr[x], indptr[x + 1]):
                acc += rate[e]
                if thr < acc:
                    nxt = tgt[e]
                    break
            x = nxt
    return hits


def estimate_pi(spec: ModelSpec, n: int, seed: int = 0):
    """P_p[the dual walk is absorbed before reaching site p+1], with the
    binomial standard error. Only the jump chain matters, so no clocks
    are sampled; every lattice site keeps a bulk move, so the race ends
    almost surely."""
    _single_walker_boundary(spec)
    if n < 1:
        raise ValueError("n must be positive")
    N, p = spec.lattice.N, spec.lattice.p
    indptr, tgt, rate, tot = _walk_tables(spec)
    hits = _pi_kernel(indptr, tgt, rate, tot, p - 1, p, N - 1,
                      make_key(seed), n)
    pi = hits / n
    return float(pi), float(math.sqrt(pi * (1.0 - pi) / n))


# -- hitting windows of the free walk ----------------------------------------

@njit(cache=True)
def _poisson(key, ctr, lam):
    """Exact Poisson(lam) draw; returns (value, next counter).

    Knuth's product method below lam = 10, Hormann's transformed
    rejection (PTRS) above; both are exact samplers."""
    one = np.uint64(1)
    if lam <= 0.0:
        return 0, ctr
    if lam < 10.0:
        L = math.exp(-lam)
        k = 0
        prod = u01(key, ctr)
        ctr += one
        while prod > L:
            k += 1
            prod *= u01(key, ctr)
            ctr += one
        return k, ctr
    loglam = math.log(lam)
    b = 0.931 + 2.53 * math.sqrt(lam)
    a = -0.059 + 0.02483 * b
    invalpha = 1.1239 + 1.1328 / (b - 3.4)
    vr = 0.9277 - 3.6224 / (b - 2.0)
    while True:
        U = u01(key, ctr) - 0.5
        ctr += one
        V = u01(key, ctr)
        ctr += one
        us = 0.5 - abs(U)
        kf = math.floor((2.0 * a / us + b) * U + lam + 0.43)
        if us >= 0.07 and V <= vr:
            return int(kf), ctr
        if kf < 0.0 or (us < 0.013 and V > us):
            continue
        k = int(kf)
        if (math.log(V) + math.log(invalpha) - math.log(a / (us * us) + b)
                <= k * loglam - lam - math.lgamma(k + 1.0)):
            return k, ctr


@njit(cache=True)
def _window_kernel(start, lo, hi, both, lam_inc, idx1, idx2, seed_base,
                   n_walks):
    """Hits per window cell, coupling one walk sample across all cells.

    lam_inc holds expected jump counts between consecutive distinct
    window boundary times; idx1/idx2 point each cell at the cumulative
    count for its t-s and t (idx1 = -1 encodes t-s = 0). The embedded
    +-1 chain is independent of the Poisson clock, so comparing the hit
    step j* with the boundary counts decides H in (t-s, t] exactly; the
    j* = 0 atom (start on a barrier) lands in the window iff t-s = 0.
    """
    C = idx1.size
    B = lam_inc.size
    one = np.uint64(1)
    zero = np.uint64(0)
    hits = np.zeros(C, dtype=np.int64)
    counts = np.empty(B, dtype=np.int64)
    for i in range(n_walks):
        key = derive_key(np.uint64(seed_base + i))
        ctr = np.uint64(0)
        tot = 0
        for bi in range(B):
            c, ctr = _poisson(key, ctr, lam_inc[bi])
            tot += c
            counts[bi] = tot
        m_max = counts[B - 1]
        x = start
        jstar = -1
        if x == hi or (both and x == lo):
            jstar = 0
        else:
            step = 0
            bits = zero
            nbits = 0
            while step < m_max:
                if nbits == 0:
                    bits = mix64(key + ctr * GOLDEN)
                    ctr += one
                    nbits = 64
                step += 1
                if bits & one != zero:
                    x += 1
                else:
                    x -= 1
                bits >>= one
                nbits -= 1
                if x == hi or (both and x == lo):
                    jstar = step
                    break
        if jstar < 0:
            continue
        for c in range(C):
            if jstar == 0:
                if idx1[c] < 0:
                    hits[c] += 1
            else:
                m1 = counts[idx1[c]] if idx1[c] >= 0 else 0
                if m1 < jstar and jstar <= counts[idx2[c]]:
                    hits[c] += 1
    return hits


def hitting_window_grid(k: int, N: int, cells, n: int, seed: int = 0,
                        barrier: str = "both", p: int = 1) -> list:
    """Window probabilities P_k[H in [t-s, t]] for the free walk on Z at
    rate N^2 per direction, over several (t, s) cells sharing one walk
    sample. barrier="both" stops at {p+1, N-1}, "right" at N-1 alone.
    Returns (t, s, estimate, stderr) rows in cell order.
    """
    if barrier not in ("both", "right"):
        raise ValueError(f"unknown barrier {barrier!r}")
    if not p + 1 <= k <= N - 1:
        raise ValueError(f"k must lie in {p + 1}..{N - 1}")
    if n < 2:
        raise ValueError("n must be at least 2")
    if seed < 0:
        raise ValueError("seed must be non-negative")
    cells = [(float(t), float(s)) for t, s in cells]
    if not cells:
        raise ValueError("cells must be non-empty")
    for t, s in cells:
        if not 0.0 < s <= t:
            raise ValueError("each cell needs 0 < s <= t")
    bounds = sorted({t for t, _ in cells}
                    | {t - s for t, s in cells if t - s > 0.0})
    pos = {b: i for i, b in enumerate(bounds)}
    lam_inc = np.diff(np.array([0.0] + bounds)) * 2.0 * N * N
    idx1 = np.array([pos[t - s] if t - s > 0.0 else -1 for t, s in cells],
                    dtype=np.int64)
    idx2 = np.array([pos[t] for t, _ in cells], dtype=np.int64)
    hits = _window_kernel(k, p + 1, N - 1, barrier == "both", lam_inc,
                          idx1, idx2, seed, n)
    out = []
    for (t, s), h in zip(cells, hits):
        est = h / n
        out.append((t, s, float(est),
                    float(math.sqrt(est * (1.0 - est) / n))))
    return out


def hitting_window_prob(k: int, N: int, t: float, s: float, n: int,
                        seed: int = 0, barrier: str = "both", p: int = 1):
    """Single-cell hitting_window_grid; returns (estimate, stderr)."""
    row = hitting_window_grid(k, N, [(t, s)], n, seed, barrier, p)[0]
    return row[2], row[3]


def _first_passage_cdf(m: int, mu: float) -> float:
    # reflection on the lattice keeps the level atom: P[H_m <= u]
    # = 2 P[Y(u) >= m] - P[Y(u) = m], Y(u) Skellam(mu, mu)
    if m <= 0:
        return 1.0
    if mu <= 0.0:
        return 0.0
    return float(2.0 * skellam.sf(m - 1, mu, mu) - skellam.pmf(m, mu, mu))


def reflection_window_prob(k: int, N: int, t: float, s: float) -> float:
    """Exact P_k[H in [t-s, t]] for the single right barrier at N-1,
    through the reflection identity for the free rate-N^2 walk. The
    H = 0 atom at k = N-1 belongs to the window only when s = t."""
    if not 0.0 < s <= t:
        raise ValueError("need 0 < s <= t")
    m = N - 1 - k
    if m < 0:
        raise ValueError("k must not exceed N-1")
    hi = _first_passage_cdf(m, N * N * t)
    lo = 0.0 if t - s <= 0.0 else _first_passage_cdf(m, N * N * (t - s))
    return float(hi - lo)


# -- 2D pair walks near the diagonal -----------------------------------------

_STEPS_2D = ((-1, 0), (1, 0), (0, -1), (0, 1))


def walk2d_step(pos, mode: str = "reflected") -> list:
    """Outgoing (target, rate) list of the pair walk at pos = (k, l).

    Off the shifted diagonal {l = k+1} both walks use the four-point
    stencil at rate 1. On it, the reflected walk takes the one-sided
    pair (k-1, l), (k, l+1) at rate 1 each and the symmetrized walk all
    four neighbours at rate 1/2, so both hold twice as long there.
    """
    if mode not in ("reflected", "symmetrized"):
        raise ValueError(f"unknown mode {mode!r}")
    k, l = int(pos[0]), int(pos[1])
    on_dbar = l == k + 1
    if mode == "reflected":
        if l <= k:
            raise ValueError("reflected walk requires k < l")
        if on_dbar:
            return [((k - 1, l), 1.0), ((k, l + 1), 1.0)]
    rate = 0.5 if on_dbar else 1.0
    return [((k + dk, l + dl), rate) for dk, dl in _STEPS_2D]


@njit(cache=True)
def _pair_walk_kernels(k0, l0, level, symmetrized, step_cap, seed_base,
                       n_walks):
    """Hit times of the level set {l-k-1 = level} (symmetrized walks may
    hit either sign), on the unscaled clock; inf marks a censored walk."""
    one = np.uint64(1)
    times = np.empty(n_walks)
    for i in range(n_walks):
        key = derive_key(np.uint64(seed_base + i))
        ctr = np.uint64(0)
        k = k0
        l = l0
        t_now = 0.0
        steps = 0
        while True:
            d = l - k - 1
            if d == level or (symmetrized and d == -level):
                break
            if steps >= step_cap:
                t_now = np.inf
                break
            w = 2.0 if d == 0 else 4.0
            u_c = u01(key, ctr)
            ctr += one
            t_now -= math.log(1.0 - u_c) / w
            u_s = u01(key, ctr)
            ctr += one
            if d == 0 and not symmetrized:
                if u_s < 0.5:
                    k -= 1
                else:
                    l += 1
            else:
                r = int(u_s * 4.0)
                if r > 3:
                    r = 3
                if r == 0:
                    k -= 1
                elif r == 1:
                    k += 1
                elif r == 2:
                    l -= 1
                else:
                    l += 1
            steps += 1
        times[i] = t_now
    return times


def sample_level_hit_times(start, level: int, mode: str = "reflected",
                           n: int = 1000, seed: int = 0,
                           step_cap: int = 10_000_000) -> np.ndarray:
    """Hitting times of {l-k-1 = level} for the pair walk from start,
    on the unscaled clock; the symmetrized walk also stops at the mirror
    level -(l-k-1) = level. Censored walks (past step_cap) return inf."""
    if mode not in ("reflected", "symmetrized"):
        raise ValueError(f"unknown mode {mode!r}")
    if level < 0:
        raise ValueError("level must be non-negative")
    if n < 1:
        raise ValueError("n must be positive")
    if seed < 0:
        raise ValueError("seed must be non-negative")
    k, l = int(start[0]), int(start[1])
    if mode == "reflected" and l <= k:
        raise ValueError("reflected walk requires k < l")
    return _pair_walk_kernels(k, l, level, mode == "symmetrized",
                              step_cap, seed, n)


@njit(cache=True)
def _occupation_kernel(k0, l0, N, meso, seed_base, n_walks):
    """Unscaled time the symmetrized walk spends on the diagonal segment
    {(k, k+1): meso <= k <= N-2} before leaving the sup-norm box 2N."""
    one = np.uint64(1)
    out = np.empty(n_walks)
    box = 2 * N
    for i in range(n_walks):
        key = derive_key(np.uint64(seed_base + i))
        ctr = np.uint64(0)
        k = k0
        l = l0
        acc = 0.0
        while max(abs(k), abs(l)) < box:
            d = l - k - 1
            w = 2.0 if d == 0 else 4.0
            u_c = u01(key, ctr)
            ctr += one
            dt = -math.log(1.0 - u_c) / w
            if d == 0 and meso <= k <= N - 2:
                acc += dt
            u_s = u01(key, ctr)
            ctr += one
            r = int(u_s * 4.0)
            if r > 3:
                r = 3
            if r == 0:
                k -= 1
            elif r == 1:
                k += 1
            elif r == 2:
                l -= 1
            else:
                l += 1
        out[i] = acc
    return out


def diagonal_occupation(start, N: int, n: int, seed: int = 0):
    """Mean macroscopic time the symmetrized pair walk from start spends
    on the diagonal segment D_N before first leaving the sup-norm box of
    radius 2N, with standard error. A start on the box edge has already
    left and returns (0, 0)."""
    if n < 2:
        raise ValueError("n must be at least 2")
    if seed < 0:
        raise ValueError("seed must be non-negative")
    k, l = int(start[0]), int(start[1])
    if sup_norm((k, l)) > 2 * N:
        raise ValueError("start must lie inside the 2N box")
    occ = _occupation_kernel(k, l, N, mesoscale(N), seed, n) / (N * N)
    return float(occ.mean()), float(occ.std(ddof=1) / math.sqrt(n))


# -- sweep output -------------------------------------------------------------

def write_hitting_csv(rows, path) -> None:
    """rows of (N, t, s, k, estimate, stderr)."""
    write_csv(path, ["N", "t", "s", "k", "estimate", "stderr"], rows)


def write_occupation_csv(rows, path) -> None:
    """rows of (N, estimate, stderr)."""
    write_csv(path, ["N", "estimate", "stderr"], rows)
