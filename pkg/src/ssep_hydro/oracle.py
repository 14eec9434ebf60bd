"""Exact master-equation evolution on the full configuration space.

For N-1 <= 16 sites the 2^(N-1)-state forward equation
d/dt P = N^2 P Q is integrated exactly enough to serve as the reference
for every other route in the package. Configurations map to integers
with site 1 as the least significant bit; this indexing is normative
for test vectors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from .csvio import write_csv
from .errors import SizeLimit
from .model import InitialProfile, LatticeSpec, ModelSpec, profile_vector, transitions

SIZE_CAP = 16  # sites; 2^16 states is the largest dense-vector evolution
_EXPM_CAP = 12  # up to here the dense matrix exponential is the default


@dataclass(frozen=True)
class FullDistribution:
    weights: np.ndarray
    time: float
    lattice: LatticeSpec

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)


def config_index(cfg) -> int:
    """Integer state of a full configuration, site 1 as bit 0."""
    s = 0
    for j, b in enumerate(cfg):
        s |= int(b) << j
    return s


def index_config(s: int, n_sites: int) -> np.ndarray:
    return np.array([(s >> j) & 1 for j in range(n_sites)], dtype=np.uint8)


def _occupancy_bits(n_sites: int) -> np.ndarray:
    """(2^n, n) matrix of site occupancies per state."""
    states = np.arange(2**n_sites, dtype=np.uint32)
    return ((states[:, None] >> np.arange(n_sites)) & 1).astype(np.float64)


def product_distribution(profile: InitialProfile, lattice: LatticeSpec) -> np.ndarray:
    """Weights of the product Bernoulli(profile(k/N)) law."""
    probs = profile_vector(profile, lattice)
    P = np.ones(1)
    # walk sites from N-1 down so site 1 lands on the least significant bit
    for k in range(lattice.n_sites, 0, -1):
        q = probs[k - 1]
        P = np.kron(P, np.array([1.0 - q, q]))
    return P


def build_generator(spec: ModelSpec) -> sp.csr_matrix:
    """Sparse generator over all configurations, assembled move by move
    from the same transition enumeration the simulator uses."""
    n = spec.lattice.n_sites
    if n > SIZE_CAP:
        raise SizeLimit(f"N-1 = {n} exceeds the oracle cap {SIZE_CAP}")
    dim = 2**n
    rows, cols, vals = [], [], []
    for s in range(dim):
        cfg = index_config(s, n)
        total = 0.0
        for move, rate in transitions(cfg, spec):
            if move[0] == "swap":
                t = s ^ ((1 << (move[1] - 1)) | (1 << (move[2] - 1)))
            else:
                t = s ^ (1 << (move[1] - 1))
            rows.append(s)
            cols.append(t)
            vals.append(rate)
            total += rate
        rows.append(s)
        cols.append(s)
        vals.append(-total)
    return sp.csr_matrix((vals, (rows, cols)), shape=(dim, dim))


def evolve_exact(
    spec: ModelSpec,
    profile: InitialProfile,
    t_grid,
    method: str = "auto",
    rtol: float = 1e-10,
    atol: float = 1e-13,
) -> list:
    """Distribution at each macro time in ascending t_grid.

    method "expm" uses the dense matrix exponential, "stepping" an
    adaptive eighth-order integrator on the sparse generator; "auto"
    picks expm up to N-1 = 12 and stepping beyond.
    """
    n = spec.lattice.n_sites
    if n > SIZE_CAP:
        raise SizeLimit(f"N-1 = {n} exceeds the oracle cap {SIZE_CAP}")
    t_grid = [float(t) for t in t_grid]
    if any(t < 0 for t in t_grid) or any(
        b <= a for a, b in zip(t_grid, t_grid[1:])
    ):
        raise ValueError("t_grid must be non-negative and strictly ascending")
    if method == "auto":
        method = "expm" if n <= _EXPM_CAP else "stepping"
    Q = build_generator(spec)
    P0 = product_distribution(profile, spec.lattice)
    scale = float(spec.lattice.N) ** 2
    out = []
    if method == "expm":
        Qd = Q.toarray()
        prev_t, prev_P = 0.0, P0
        for t in t_grid:
            # step from the previous output; expm cost scales with the gap
            P = prev_P if t == prev_t else prev_P @ expm(scale * (t - prev_t) * Qd)
            out.append(FullDistribution(P, t, spec.lattice))
            prev_t, prev_P = t, P
    elif method == "stepping":
        QT = sp.csr_matrix(Q.T)
        rhs = lambda t, y: scale * (QT @ y)
        t_end = t_grid[-1]
        if t_end == 0.0:
            out = [FullDistribution(P0, 0.0, spec.lattice)]
        else:
            sol = solve_ivp(
                rhs,
                (0.0, t_end),
                P0,
                method="DOP853",
                t_eval=t_grid,
                rtol=rtol,
                atol=atol,
            )
            if not sol.success:
                raise RuntimeError(f"oracle integration failed: {sol.message}")
            out = [
                FullDistribution(sol.y[:, i], t, spec.lattice)
                for i, t in enumerate(t_grid)
            ]
    else:
        raise ValueError(f"unknown method {method!r}")
    for dist in out:
        s = dist.weights.sum()
        if abs(s - 1.0) > 1e-10:
            raise AssertionError(f"probability leaked: sum = {s!r} at t = {dist.time}")
    return out


def exact_moments(dist: FullDistribution):
    """Density vector rho and covariance matrix phi of the distribution.

    phi is returned as a full symmetric matrix with zero diagonal;
    phi[k-1, l-1] = E[(eta_k - rho_k)(eta_l - rho_l)] for k != l.
    """
    n = dist.lattice.n_sites
    B = _occupancy_bits(n)
    w = dist.weights
    rho = B.T @ w
    second = (B * w[:, None]).T @ B
    phi = second - np.outer(rho, rho)
    np.fill_diagonal(phi, 0.0)
    return rho, phi


def dump_moments_csv(dists, density_path, correlation_path) -> None:
    """CSV dump matching the solver schemas: (t,k,rho) and (t,k,l,phi)."""
    rows_d, rows_c = [], []
    for dist in dists:
        rho, phi = exact_moments(dist)
        n = dist.lattice.n_sites
        for k in range(1, n + 1):
            rows_d.append((dist.time, k, float(rho[k - 1])))
        for k in range(1, n + 1):
            for l in range(k + 1, n + 1):
                rows_c.append((dist.time, k, l, float(phi[k - 1, l - 1])))
    write_csv(density_path, ["t", "k", "rho"], rows_d)
    write_csv(correlation_path, ["t", "k", "l", "phi"], rows_c)
