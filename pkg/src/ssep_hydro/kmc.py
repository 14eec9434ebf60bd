"""Event-driven kinetic Monte Carlo on the microscopic clock.

Rejection-free selection: stirring swaps fire at unit rate on the
discordant bonds, tracked in a swap-remove array so selection and
updates are O(1); boundary flips are looked up in a per-block-state
rate table, so structured and rate-table boundaries share one kernel.
A macro checkpoint t snapshots the state at the last event <= t*N^2.

Ensemble reduction uses exact integer accumulators in replica order,
so results do not depend on scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .csvio import write_csv
from .errors import SizeLimit
from .model import (
    InitialProfile,
    LatticeSpec,
    ModelSpec,
    StructuredBoundary,
    left_flip_rate,
    profile_vector,
)
from .rng import derive_key, make_key, u01

_P_CAP = 16  # flip table is dense in the block state


def flip_rate_table(spec: ModelSpec) -> np.ndarray:
    """(p, 2^p) lookup: rate of flipping block site j+1 in block state s."""
    p = spec.lattice.p
    if p > _P_CAP:
        raise SizeLimit(f"flip table is dense in 2^p; p capped at {_P_CAP}")
    n = spec.lattice.n_sites
    sites = range(1, p + 1) if isinstance(spec.left, StructuredBoundary) else (1,)
    out = np.zeros((p, 2 ** p))
    cfg = np.zeros(n, dtype=np.uint8)
    for s in range(2 ** p):
        for j in range(p):
            cfg[j] = (s >> j) & 1
        for j in sites:
            out[j - 1, s] = left_flip_rate(spec, cfg, j)
    return out


@njit(cache=True, inline="always")
def _refresh_bond(eta, act_list, act_pos, n_act, b):
    """Sync bond b's membership in the active list; returns the new count."""
    active = eta[b] != eta[b + 1]
    pos = act_pos[b]
    if active and pos < 0:
        act_pos[b] = n_act
        act_list[n_act] = b
        n_act += 1
    elif not active and pos >= 0:
        last = act_list[n_act - 1]
        act_list[pos] = last
        act_pos[last] = pos
        act_pos[b] = -1
        n_act -= 1
    return n_act


@njit(cache=True)
def _run_kernel(eta, p, flip_tab, right_r, check_times, out_states, key, ctr):
    """March one replica to the last checkpoint; snapshots are cadlag.

    eta is mutated in place; returns (counter, applied event count).
    """
    n = eta.size
    nb = n - 1
    act_list = np.empty(nb, np.int64)
    act_pos = np.full(nb, -1, np.int64)
    n_act = 0
    for b in range(nb):
        if eta[b] != eta[b + 1]:
            act_pos[b] = n_act
            act_list[n_act] = b
            n_act += 1
    bs = 0
    for j in range(p):
        bs |= int(eta[j]) << j
    t = 0.0
    ci = 0
    n_checks = check_times.size
    events = 0
    while ci < n_checks:
        W = float(n_act)
        for j in range(p):
            W += flip_tab[j, bs]
        W += right_r[eta[n - 1]]
        if W <= 0.0:
            break  # absorbing configuration
        u_sel = u01(key, ctr)
        ctr += np.uint64(1)
        u_clk = u01(key, ctr)
        ctr += np.uint64(1)
        t_next = t - np.log(1.0 - u_clk) / W
        while ci < n_checks and check_times[ci] < t_next:
            out_states[ci, :] = eta
            ci += 1
        if ci >= n_checks:
            break
        x = u_sel * W
        if x < n_act:
            bi = int(x)
            if bi >= n_act:
                bi = n_act - 1
            b = act_list[bi]
            tmp = eta[b]
            eta[b] = eta[b + 1]
            eta[b + 1] = tmp
            lo = b - 1 if b > 0 else 0
            hi = b + 1 if b + 1 < nb else nb - 1
            for bb in range(lo, hi + 1):
                n_act = _refresh_bond(eta, act_list, act_pos, n_act, bb)
            if b < p:
                bs = 0
                for j in range(p):
                    bs |= int(eta[j]) << j
        else:
            x -= n_act
            site = n - 1
            for j in range(p):
                rj = flip_tab[j, bs]
                if x < rj:
                    site = j
                    break
                x -= rj
            eta[site] = 1 - eta[site]
            if site < p:
                bs ^= 1 << site
            if site > 0:
                n_act = _refresh_bond(eta, act_list, act_pos, n_act, site - 1)
            if site < nb:
                n_act = _refresh_bond(eta, act_list, act_pos, n_act, site)
        events += 1
        t = t_next
    while ci < n_checks:  # frozen (absorbing) tail
        out_states[ci, :] = eta
        ci += 1
    return ctr, events


@njit(cache=True)
def _ensemble_kernel(probs, p, flip_tab, right_r, check_times,
                     seed_base, replicas, want_pairs):
    """Accumulate exact integer sums of occupancies and pair products."""
    n = probs.size
    T = check_times.size
    S1 = np.zeros((T, n), np.int64)
    npairs = n * (n - 1) // 2 if want_pairs else 0
    S2 = np.zeros((T, npairs), np.int64)
    states = np.empty((T, n), np.uint8)
    eta = np.empty(n, np.uint8)
    total_events = 0
    for i in range(replicas):
        key = derive_key(np.uint64(seed_base + i))
        for k in range(n):
            eta[k] = 1 if u01(key, np.uint64(k)) < probs[k] else 0
        _, ev = _run_kernel(eta, p, flip_tab, right_r, check_times,
                            states, key, np.uint64(n))
        total_events += ev
        for ti in range(T):
            for k in range(n):
                S1[ti, k] += states[ti, k]
        if want_pairs:
            for ti in range(T):
                pos = 0
                for k in range(n):
                    if states[ti, k]:
                        for l in range(k + 1, n):
                            S2[ti, pos + l - k - 1] += states[ti, l]
                    pos += n - 1 - k
    return S1, S2, total_events


# -- public containers ---------------------------------------------------------

@dataclass(frozen=True)
class Trajectory:
    """One sample path, reported at the macro checkpoints."""

    lattice: LatticeSpec
    checkpoints: list  # (macro time, configuration) pairs
    seed: int
    event_count: int

    @property
    def t_grid(self) -> np.ndarray:
        return np.array([t for t, _ in self.checkpoints])

    @property
    def states(self) -> np.ndarray:
        return np.stack([cfg for _, cfg in self.checkpoints])


@dataclass(frozen=True)
class EnsembleStats:
    """Replica means with standard errors.

    phi_hat is the plug-in covariance q - m_k m_l; its error bar comes
    from the sample variance of (eta_k - m_k)(eta_l - m_l), which for
    0/1 data is a closed-form function of the accumulated moments.
    """

    lattice: LatticeSpec
    t_grid: np.ndarray
    replicas: int
    rho_hat: np.ndarray  # (T, N-1)
    rho_se: np.ndarray
    phi_hat: np.ndarray  # (T, pairs) or None
    phi_se: np.ndarray
    event_count: int

    def pair_index(self, k: int, l: int) -> int:
        n = self.lattice.n_sites
        if not 1 <= k < l <= n:
            raise ValueError(f"pair ({k},{l}) out of range")
        return (k - 1) * n - (k * (k - 1)) // 2 + (l - k - 1)

    def phi(self, t_index: int, k: int, l: int) -> float:
        if self.phi_hat is None:
            raise ValueError("ensemble was accumulated without pair moments")
        if l < k:
            k, l = l, k
        return float(self.phi_hat[t_index, self.pair_index(k, l)])


def _validate_grid(t_checkpoints) -> np.ndarray:
    ts = np.asarray([float(t) for t in t_checkpoints])
    if ts.size == 0:
        raise ValueError("need at least one checkpoint")
    if np.any(ts < 0) or np.any(np.diff(ts) <= 0):
        raise ValueError("checkpoints must be non-negative and ascending")
    return ts


def _kernel_args(spec: ModelSpec):
    ftab = flip_rate_table(spec)
    right_r = np.array([spec.beta, 1.0 - spec.beta])
    return ftab, right_r


def simulate(spec: ModelSpec, profile: InitialProfile, t_checkpoints,
             seed: int) -> Trajectory:
    """One replica; bit-identical for identical arguments."""
    if seed < 0:
        raise ValueError("seed must be non-negative")
    ts = _validate_grid(t_checkpoints)
    lattice = spec.lattice
    n = lattice.n_sites
    probs = profile_vector(profile, lattice)
    ftab, right_r = _kernel_args(spec)
    micro = ts * float(lattice.N) ** 2
    states = np.empty((ts.size, n), dtype=np.uint8)
    eta = np.empty(n, dtype=np.uint8)
    key = make_key(seed)
    for k in range(n):  # counters 0..n-1, continued by the kernel at n
        eta[k] = 1 if u01(key, np.uint64(k)) < probs[k] else 0
    _, events = _run_kernel(eta, lattice.p, ftab, right_r, micro, states,
                            key, np.uint64(n))
    checkpoints = [(float(t), states[i].copy()) for i, t in enumerate(ts)]
    return Trajectory(lattice, checkpoints, int(seed), int(events))


def ensemble_stats(spec: ModelSpec, profile: InitialProfile, t_checkpoints,
                   replicas: int, seed_base: int,
                   pairs: bool = True) -> EnsembleStats:
    """Independent replicas seeded seed_base + i, reduced in index order."""
    if replicas < 2:
        raise ValueError("need at least two replicas for standard errors")
    if seed_base < 0:
        raise ValueError("seed_base must be non-negative")
    ts = _validate_grid(t_checkpoints)
    lattice = spec.lattice
    probs = profile_vector(profile, lattice)
    ftab, right_r = _kernel_args(spec)
    micro = ts * float(lattice.N) ** 2
    S1, S2, events = _ensemble_kernel(probs, lattice.p, ftab, right_r, micro,
                                      seed_base, replicas, pairs)
    R = replicas
    m = S1 / R
    rho_se = np.sqrt(m * (1.0 - m) / (R - 1))
    if pairs:
        n = lattice.n_sites
        ks, ls = [], []
        for k in range(1, n + 1):
            for l in range(k + 1, n + 1):
                ks.append(k - 1)
                ls.append(l - 1)
        a = m[:, ks]
        b = m[:, ls]
        q = S2 / R
        phi = q - a * b
        # E[(x-a)^2 (y-b)^2] for 0/1 pairs, then the variance of the
        # per-replica product (eta_k - a)(eta_l - b)
        mu22 = ((1 - 2 * a) * (1 - 2 * b) * q
                + (1 - 2 * a) * b * b * a
                + a * a * (1 - 2 * b) * b
                + a * a * b * b)
        var = np.maximum(mu22 - phi * phi, 0.0)
        phi_se = np.sqrt(var / (R - 1))
    else:
        phi, phi_se = None, None
    return EnsembleStats(lattice, ts, R, m, rho_se, phi, phi_se, int(events))


# -- CSV dumps -------------------------------------------------------------------

def write_ensemble_density_csv(stats: EnsembleStats, path) -> None:
    rows = [
        (float(t), k, float(stats.rho_hat[i, k - 1]), float(stats.rho_se[i, k - 1]))
        for i, t in enumerate(stats.t_grid)
        for k in range(1, stats.lattice.n_sites + 1)
    ]
    write_csv(path, ["t", "k", "rho_hat", "stderr"], rows)


def write_ensemble_correlation_csv(stats: EnsembleStats, path) -> None:
    if stats.phi_hat is None:
        raise ValueError("ensemble was accumulated without pair moments")
    n = stats.lattice.n_sites
    rows = []
    for i, t in enumerate(stats.t_grid):
        pos = 0
        for k in range(1, n + 1):
            for l in range(k + 1, n + 1):
                rows.append((float(t), k, l,
                             float(stats.phi_hat[i, pos]),
                             float(stats.phi_se[i, pos])))
                pos += 1
    write_csv(path, ["t", "k", "l", "phi_hat", "stderr"], rows)
