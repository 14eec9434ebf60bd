"""Deterministic integration of the closed moment systems.

The generator preserves multilinear polynomials of degree <= 2 for
structured boundaries, so first and second moments form a closed affine
ODE system. Rows are never hand-derived: each row comes from evaluating
the generator's action on a monomial over its dependency support and
extracting multilinear coefficients, with probe points guarding against
closure violations. Uniform interior rows are replicated from one
mechanically derived representative so that assembly stays O(N^2).

Time integration is an implicit trapezoid with step doubling; stiffness
grows like N^2 and explicit schemes are useless at N = 512.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .csvio import write_csv
from .errors import SizeLimit, Unsupported
from .model import (
    InitialProfile,
    LatticeSpec,
    ModelSpec,
    StructuredBoundary,
    flip_rate_core,
    profile_vector,
    right_flip_rate_core,
)
from .regions import on_bulk, on_diagonal

EXPM_CAP = 128  # dense exponential cross-check for the density system
CORR_CAP = 256  # default correlation size; configurable upward
_DENSE_CAP = 1500  # below this many unknowns, dense LU beats splu


# -- mechanical row derivation -------------------------------------------------

def _require_structured(spec: ModelSpec) -> StructuredBoundary:
    if not isinstance(spec.left, StructuredBoundary):
        raise Unsupported(
            "moment closure is exact for structured boundaries only; "
            "rate-table models need the simulator or the oracle"
        )
    return spec.left


def _moves_touching(sites, spec: ModelSpec):
    """Moves whose application can change a monomial over these sites."""
    N = spec.lattice.N
    p = spec.lattice.p
    moves = []
    seen = set()
    for s in sites:
        for a in (s - 1, s):
            if 1 <= a <= N - 2 and ("swap", a) not in seen:
                seen.add(("swap", a))
                moves.append(("swap", a, a + 1))
    for s in sites:
        if s <= p or s == N - 1:
            moves.append(("flip", s))
    return moves


def _exact_rates(spec: ModelSpec):
    """Boundary parameters lifted to Fraction for exact row extraction."""
    left = _require_structured(spec)
    lift = lambda arr: [Fraction(float(x)) for x in np.atleast_1d(arr)]
    r = lift(left.r)
    alpha = lift(left.alpha)
    c = [lift(row) for row in left.c]
    a = [lift(row) for row in left.a]
    return r, alpha, c, a, Fraction(float(spec.beta))


def _row_for_monomial(S, spec: ModelSpec):
    """Coefficients of d/dt E[prod_{s in S} eta_s], unscaled.

    Returns (const, lin, quad): lin maps a site to its coefficient, quad
    maps an ordered pair. Derived by evaluating f(zeta) = sum over moves
    of rate(zeta) * (monomial(after) - monomial(before)) on subsets of
    the dependency support and inverting the multilinear expansion. The
    whole extraction runs in exact rational arithmetic: interior rows
    must come out as literal small integers, not near-integers.
    """
    N, p = spec.lattice.N, spec.lattice.p
    rF, alphaF, cF, aF, betaF = _exact_rates(spec)
    S = tuple(sorted(S))
    moves = _moves_touching(S, spec)
    support = set(S)
    for mv in moves:
        if mv[0] == "swap":
            support.update((mv[1], mv[2]))
        elif mv[1] <= p:
            support.update(range(1, p + 1))
        else:
            support.add(mv[1])
    T = sorted(support)

    def f_at(assign: dict) -> Fraction:
        get = lambda s: assign.get(s, 0)
        total = Fraction(0)
        for mv in moves:
            if mv[0] == "swap":
                a, b = mv[1], mv[2]
                rate = Fraction(1)
                getafter = lambda s: get(b) if s == a else (get(a) if s == b else get(s))
            else:
                j = mv[1]
                if j <= p:
                    rate = flip_rate_core(rF, alphaF, cF, aF, get, j, p)
                else:
                    rate = right_flip_rate_core(betaF, get(j))
                getafter = lambda s: 1 - get(s) if s == j else get(s)
            if rate == 0:
                continue
            before = 1
            after = 1
            for s in S:
                before *= get(s)
                after *= getafter(s)
            total += rate * (after - before)
        return total

    f0 = f_at({})
    lin = {i: f_at({i: 1}) - f0 for i in T}
    quad = {}
    for i, j in combinations(T, 2):
        quad[(i, j)] = f_at({i: 1, j: 1}) - f0 - lin[i] - lin[j]

    def reconstruct(assign):
        v = f0
        for i in T:
            if assign.get(i, 0):
                v += lin[i]
        for (i, j), c in quad.items():
            if assign.get(i, 0) and assign.get(j, 0):
                v += c
        return v

    # probe points catch any degree-3 remainder (closure violation);
    # exact arithmetic makes this an equality, not a tolerance
    probes = [
        {i: 1 for i in T},
        {i: 1 for i in T[::2]},
        {i: 1 for i in T[1::2]},
    ]
    for pr in probes:
        if f_at(pr) != reconstruct(pr):
            raise AssertionError(
                f"moment closure violated on monomial {S}: probe mismatch"
            )
    lin = {i: float(v) for i, v in lin.items() if v != 0}
    quad = {ij: float(v) for ij, v in quad.items() if v != 0}
    return float(f0), lin, quad


# -- system assembly -----------------------------------------------------------

@dataclass(frozen=True)
class MomentSystem:
    """d/dt y = A y + b over stacked moments, N^2 clock included.

    y holds E[eta_k] for k = 1..N-1, then E[eta_k eta_l] for k < l when
    order == 2.
    """

    lattice: LatticeSpec
    order: int
    A: sp.csr_matrix
    b: np.ndarray

    @property
    def n_first(self) -> int:
        return self.lattice.n_sites

    def pair_index(self, k: int, l: int) -> int:
        """Column of the pair (k,l), k<l, inside the stacked vector."""
        if self.order < 2:
            raise ValueError("density-only system has no pair block")
        n = self.n_first
        if not 1 <= k < l <= n:
            raise ValueError(f"pair ({k},{l}) out of range")
        off = (k - 1) * n - (k * (k - 1)) // 2
        return n + off + (l - k - 1)

    def initial_vector(self, profile: InitialProfile) -> np.ndarray:
        """Moments of the product law with the given profile."""
        rho0 = profile_vector(profile, self.lattice)
        if self.order == 1:
            return rho0.copy()
        n = self.n_first
        y0 = np.empty(self.size)
        y0[:n] = rho0
        pos = n
        for k in range(1, n + 1):
            for l in range(k + 1, n + 1):
                y0[pos] = rho0[k - 1] * rho0[l - 1]
                pos += 1
        return y0

    @property
    def size(self) -> int:
        n = self.n_first
        return n if self.order == 1 else n + n * (n - 1) // 2


def _pair_cols(N: int):
    """Vectorized pair-column map for the stacked layout."""
    n = N - 1

    def col(ks, ls):
        ks = np.asarray(ks, dtype=np.int64)
        ls = np.asarray(ls, dtype=np.int64)
        off = (ks - 1) * n - (ks * (ks - 1)) // 2
        return n + off + (ls - ks - 1)

    return col


def _emit(rows, cols, vals, r, c, v):
    rows.append(np.asarray(r, dtype=np.int64))
    cols.append(np.asarray(c, dtype=np.int64))
    vals.append(np.asarray(v, dtype=np.float64))


def build_moment_system(
    spec: ModelSpec, order: int = 2, _replicate: bool = True
) -> MomentSystem:
    """Assemble the closed moment system (first moments, and pair moments
    when order == 2), scaled by N^2. _replicate=False forces every row
    through the generic derivation; the two paths must agree exactly."""
    _require_structured(spec)
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    N, p = spec.lattice.N, spec.lattice.p
    n = N - 1
    size = n if order == 1 else n + n * (n - 1) // 2
    b = np.zeros(size)
    rows, cols, vals = [], [], []
    pcol = _pair_cols(N)

    def place(row, const, lin, quad):
        if const:
            b[row] += const
        for site, v in lin.items():
            _emit(rows, cols, vals, [row], [site - 1], [v])
        for (i, j), v in quad.items():
            if order == 1:
                raise AssertionError("pair column in a density-only row")
            _emit(rows, cols, vals, [row], [pcol(i, j)], [v])

    for k in range(1, n + 1):
        place(k - 1, *_row_for_monomial((k,), spec))

    if order == 2:
        # generic rows where a flip site or the right edge is involved;
        # translation-invariant interior rows replicated from one
        # representative of each shape
        rep_ok = _replicate and N >= p + 6
        if rep_ok:
            base_off = _row_for_monomial((p + 1, p + 3), spec)
            base_diag = _row_for_monomial((p + 1, p + 2), spec)
            k0, l0 = p + 1, p + 3
            want_off = {
                (k0, l0): -4.0,
                (k0 - 1, l0): 1.0,
                (k0 + 1, l0): 1.0,
                (k0, l0 - 1): 1.0,
                (k0, l0 + 1): 1.0,
            }
            want_diag = {
                (p + 1, p + 2): -2.0,
                (p, p + 2): 1.0,
                (p + 1, p + 3): 1.0,
            }
            rep_ok = (
                base_off[0] == 0.0
                and not base_off[1]
                and base_off[2] == want_off
                and base_diag[0] == 0.0
                and not base_diag[1]
                and base_diag[2] == want_diag
            )
            if not rep_ok:
                raise AssertionError("representative interior row has unexpected shape")

        for k in range(1, n + 1):
            for l in range(k + 1, n + 1):
                plain = rep_ok and (p + 1 <= k) and (l <= N - 2)
                if not plain:
                    place(pcol(k, l), *_row_for_monomial((k, l), spec))

        if rep_ok:
            # off-diagonal block: self -4, four unit neighbours
            ks, ls = [], []
            for k in range(p + 1, N - 1):
                for l in range(k + 2, N - 1):
                    ks.append(k)
                    ls.append(l)
            if ks:
                ks = np.array(ks)
                ls = np.array(ls)
                me = pcol(ks, ls)
                _emit(rows, cols, vals, me, me, np.full(ks.size, -4.0))
                for dk, dl in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                    _emit(rows, cols, vals, me, pcol(ks + dk, ls + dl),
                          np.ones(ks.size))
            # diagonal strip: self -2, two unit neighbours
            kd = np.arange(p + 1, N - 2)
            if kd.size:
                me = pcol(kd, kd + 1)
                _emit(rows, cols, vals, me, me, np.full(kd.size, -2.0))
                _emit(rows, cols, vals, me, pcol(kd - 1, kd + 1), np.ones(kd.size))
                _emit(rows, cols, vals, me, pcol(kd, kd + 2), np.ones(kd.size))

    scale = float(N) ** 2
    A = sp.csr_matrix(
        (np.concatenate(vals) if vals else np.empty(0),
         (np.concatenate(rows) if rows else np.empty(0, dtype=np.int64),
          np.concatenate(cols) if cols else np.empty(0, dtype=np.int64))),
        shape=(size, size),
    )
    A.sum_duplicates()
    A = A * scale
    b *= scale
    return MomentSystem(spec.lattice, order, A, b)


# -- implicit trapezoid integrator ---------------------------------------------

def _make_linear_tools(A):
    n = A.shape[0]
    if n <= _DENSE_CAP:
        Ad = A.toarray() if sp.issparse(A) else np.asarray(A)
        matvec = lambda v: Ad @ v

        def factor(h):
            lu = scipy.linalg.lu_factor(np.eye(n) - (h / 2.0) * Ad)
            return lambda r: scipy.linalg.lu_solve(lu, r)

    else:
        As = sp.csc_matrix(A)
        I = sp.identity(n, format="csc")
        matvec = lambda v: As @ v

        def factor(h):
            lu = spla.splu((I - (h / 2.0) * As).tocsc())
            return lu.solve

    return matvec, factor


def _integrate_affine(A, b, y0, t_grid, rtol=1e-9, atol=1e-11):
    """y' = A y + b from t=0, reported at the ascending times in t_grid."""
    t_grid = [float(t) for t in t_grid]
    if any(x < 0 for x in t_grid) or any(
        v <= u for u, v in zip(t_grid, t_grid[1:])
    ):
        raise ValueError("t_grid must be non-negative and strictly ascending")
    matvec, factor = _make_linear_tools(A)
    solvers: dict = {}

    def solver(h):
        if h not in solvers:
            if len(solvers) > 40:
                solvers.clear()
            solvers[h] = factor(h)
        return solvers[h]

    def step(y, h, slv):
        return slv(y + (h / 2.0) * matvec(y) + h * b)

    out = np.empty((len(t_grid), y0.size))
    y = np.array(y0, dtype=float)
    t = 0.0
    gi = 0
    while gi < len(t_grid) and t_grid[gi] == 0.0:
        out[gi] = y
        gi += 1
    if gi == len(t_grid):
        return out
    horizon = t_grid[-1]
    h_pref = horizon * 1e-6  # controller's step, immune to grid landings
    hmin = horizon * 1e-13
    for target_i in range(gi, len(t_grid)):
        T = t_grid[target_i]
        while T - t > 1e-14 * horizon:
            h = min(h_pref, T - t)
            y1 = step(y, h, solver(h))
            s_half = solver(h / 2.0)
            y2 = step(step(y, h / 2.0, s_half), h / 2.0, s_half)
            scale = atol + rtol * np.maximum(np.abs(y), np.abs(y2))
            E = float(np.max(np.abs(y2 - y1) / (3.0 * scale)))
            if E <= 1.0 or h <= hmin:
                t += h
                y = y2
                if E == 0.0 or 0.9 * E ** (-1.0 / 3.0) >= 2.0:
                    h_pref = max(h_pref, h * 2.0)
                elif 0.9 * E ** (-1.0 / 3.0) < 1.0:
                    h_pref = max(h * 0.5, hmin)
            else:
                h_pref = max(h * 0.5, hmin)
        out[target_i] = y
    return out


def _integrate_affine_fixed(A, b, y0, T, steps):
    """Fixed-step trapezoid; the step-halving regression guard uses it."""
    matvec, factor = _make_linear_tools(A)
    h = T / steps
    slv = factor(h)
    y = np.array(y0, dtype=float)
    for _ in range(steps):
        y = slv(y + (h / 2.0) * matvec(y) + h * b)
    return y


# -- field containers -----------------------------------------------------------

@dataclass(frozen=True)
class DensityField:
    """rho(t,k) on the checkpoint grid, with frozen boundary data
    rho(t, d_j) = alpha_j and rho(t, N) = beta."""

    lattice: LatticeSpec
    beta: float
    alpha: np.ndarray  # cemetery densities, one per block site
    t_grid: np.ndarray
    rho: np.ndarray  # (len(t_grid), N-1)

    def time_index(self, t: float) -> int:
        idx = int(np.argmin(np.abs(self.t_grid - t)))
        if abs(self.t_grid[idx] - t) > 1e-12 * max(1.0, abs(t)):
            raise ValueError(f"time {t} is not on the checkpoint grid")
        return idx

    def value(self, t: float, site) -> float:
        """rho at a site of the extended lattice: 1..N-1, N, or ('d', j)."""
        if isinstance(site, tuple):
            tag, j = site
            if tag != "d" or not 1 <= j <= len(self.alpha):
                raise ValueError(f"unknown site {site!r}")
            return float(self.alpha[j - 1])
        site = int(site)
        if site == self.lattice.N:
            return float(self.beta)
        ti = self.time_index(t)
        if not 1 <= site <= self.lattice.n_sites:
            raise ValueError(f"site {site} out of range")
        return float(self.rho[ti, site - 1])


@dataclass(frozen=True)
class CorrelationField:
    """phi(t,k,l) for the full triangle 1 <= k < l <= N-1, with the
    upper boundary phi(t,k,N) = 0 by convention; symmetric access."""

    lattice: LatticeSpec
    t_grid: np.ndarray
    phi_flat: np.ndarray  # (len(t_grid), n*(n-1)/2) in pair order
    density: DensityField

    def _pidx(self, k: int, l: int) -> int:
        n = self.lattice.n_sites
        off = (k - 1) * n - (k * (k - 1)) // 2
        return off + (l - k - 1)

    def phi(self, t: float, k: int, l: int) -> float:
        N = self.lattice.N
        if k == l:
            raise ValueError("phi is defined for distinct sites")
        if l < k:
            k, l = l, k
        if l == N:
            if not 1 <= k <= N - 1:
                raise ValueError(f"site {k} out of range")
            return 0.0
        if not (1 <= k < l <= N - 1):
            raise ValueError(f"pair ({k},{l}) out of range")
        ti = self.density.time_index(t)
        return float(self.phi_flat[ti, self._pidx(k, l)])

    def matrix(self, t: float) -> np.ndarray:
        """Full symmetric phi matrix over lattice sites, zero diagonal."""
        n = self.lattice.n_sites
        ti = self.density.time_index(t)
        out = np.zeros((n, n))
        pos = 0
        for k in range(1, n + 1):
            cnt = n - k
            out[k - 1, k:] = self.phi_flat[ti, pos:pos + cnt]
            pos += cnt
        return out + out.T


@dataclass(frozen=True)
class GradientField:
    """Forward differences g(t,k) = rho(t,k+1) - rho(t,k) for k = 1..N-1
    (site N read as beta) and the diagonal source m = g^2."""

    lattice: LatticeSpec
    t_grid: np.ndarray
    g: np.ndarray
    m: np.ndarray


def solve_density(
    spec: ModelSpec,
    profile: InitialProfile,
    t_grid,
    method: str = "trapezoid",
    rtol: float = 1e-10,
    atol: float = 1e-12,
) -> DensityField:
    """Integrate the closed density system on the N^2 clock."""
    left = _require_structured(spec)
    if method not in ("trapezoid", "expm"):
        raise ValueError(f"unknown method {method!r}")
    if method == "expm" and spec.lattice.N > EXPM_CAP:
        raise SizeLimit(f"expm cross-check capped at N = {EXPM_CAP}")
    system = build_moment_system(spec, order=1)
    y0 = system.initial_vector(profile)
    t_arr = np.asarray([float(t) for t in t_grid])
    if method == "trapezoid":
        Y = _integrate_affine(system.A, system.b, y0, t_arr, rtol=rtol, atol=atol)
    else:
        Y = _expm_affine(system.A.toarray(), system.b, y0, t_arr)
    Y = np.clip(Y, 0.0, 1.0)  # shave integrator-level boundary overshoot
    return DensityField(spec.lattice, spec.beta, left.alpha.copy(), t_arr, Y)


def _expm_affine(A, b, y0, t_grid):
    """Exact affine evolution via the augmented-matrix exponential."""
    n = y0.size
    M = np.zeros((n + 1, n + 1))
    M[:n, :n] = A
    M[:n, n] = b
    z = np.concatenate([y0, [1.0]])
    out = np.empty((len(t_grid), n))
    prev_t = 0.0
    for i, t in enumerate(t_grid):
        if t > prev_t:
            z = scipy.linalg.expm(M * (t - prev_t)) @ z
            prev_t = t
        out[i] = z[:n]
    return out


def solve_correlation(
    spec: ModelSpec,
    profile: InitialProfile,
    t_grid,
    rtol: float = 1e-10,
    atol: float = 1e-12,
    max_n: int = CORR_CAP,
    verify_stencils: bool = True,
) -> CorrelationField:
    """Integrate the coupled first/second moment system and derive
    phi(t,k,l) = E[eta_k eta_l] - rho_k rho_l."""
    left = _require_structured(spec)
    N = spec.lattice.N
    if N > max_n:
        raise SizeLimit(f"correlation solve capped at N = {max_n}")
    system = build_moment_system(spec, order=2)
    if verify_stencils:
        _verify_interior_stencils(system, spec)
    y0 = system.initial_vector(profile)
    t_arr = np.asarray([float(t) for t in t_grid])
    Y = _integrate_affine(system.A, system.b, y0, t_arr, rtol=rtol, atol=atol)
    n = system.n_first
    rho = np.clip(Y[:, :n], 0.0, 1.0)
    second = Y[:, n:]
    phi = np.empty_like(second)
    pos = 0
    for k in range(1, n + 1):
        cnt = n - k
        phi[:, pos:pos + cnt] = second[:, pos:pos + cnt] - rho[:, [k - 1]] * rho[:, k:]
        pos += cnt
    dens = DensityField(spec.lattice, spec.beta, left.alpha.copy(), t_arr, rho)
    return CorrelationField(spec.lattice, t_arr, phi, dens)


def _verify_interior_stencils(system: MomentSystem, spec: ModelSpec) -> None:
    """Interior pair rows must equal the literal difference stencils.

    In raw-moment form the bulk rows read N^2 * (four unit neighbours,
    self -4) and the near-diagonal rows N^2 * (two unit neighbours,
    self -2); a neighbour at l = N contributes beta * E[eta_k] through
    the frozen right boundary. These raw rows are algebraically the
    phi-system stencils (the product-rule cross terms cancel against the
    density rows, leaving the -m source on the diagonal).
    """
    N, p = spec.lattice.N, spec.lattice.p
    scale = float(N) ** 2
    beta = spec.beta
    A = system.A.tocsr()
    n = system.n_first
    for k in range(p + 1, N):
        for l in range(k + 1, N):
            bulk = on_bulk(k, l, N, p)
            diag = on_diagonal(k, l, N)
            if not (bulk or diag):
                continue
            row = A.getrow(system.pair_index(k, l))
            got = dict(zip(row.indices.tolist(), row.data.tolist()))
            want = {system.pair_index(k, l): (-4.0 if bulk else -2.0) * scale}
            neigh = (
                [(k - 1, l), (k + 1, l), (k, l - 1), (k, l + 1)]
                if bulk
                else [(k - 1, k + 1), (k, k + 2)]
            )
            for a, c in neigh:
                if c == N:
                    want[a - 1] = beta * scale
                else:
                    want[system.pair_index(a, c)] = 1.0 * scale
            if got != want:
                raise AssertionError(
                    f"assembled row ({k},{l}) deviates from the interior stencil"
                )
    del n


def gradient(field: DensityField) -> GradientField:
    """g(t,k) = rho(t,k+1) - rho(t,k) with rho(t,N) = beta; m = g^2."""
    rho = field.rho
    g = np.empty_like(rho)
    g[:, :-1] = rho[:, 1:] - rho[:, :-1]
    g[:, -1] = field.beta - rho[:, -1]
    return GradientField(field.lattice, field.t_grid, g, g * g)


# -- CSV dumps -------------------------------------------------------------------

def write_density_csv(field: DensityField, path) -> None:
    rows = [
        (float(t), k, float(field.rho[i, k - 1]))
        for i, t in enumerate(field.t_grid)
        for k in range(1, field.lattice.n_sites + 1)
    ]
    write_csv(path, ["t", "k", "rho"], rows)


def write_correlation_csv(corr: CorrelationField, path) -> None:
    n = corr.lattice.n_sites
    rows = []
    for i, t in enumerate(corr.t_grid):
        pos = 0
        for k in range(1, n + 1):
            for l in range(k + 1, n + 1):
                rows.append((float(t), k, l, float(corr.phi_flat[i, pos])))
                pos += 1
    write_csv(path, ["t", "k", "l", "phi"], rows)


def write_gradient_csv(grad: GradientField, path) -> None:
    rows = [
        (float(t), k, float(grad.g[i, k - 1]), float(grad.m[i, k - 1]))
        for i, t in enumerate(grad.t_grid)
        for k in range(1, grad.lattice.n_sites + 1)
    ]
    write_csv(path, ["t", "k", "g", "m"], rows)
