"""Model family for the boundary-driven exclusion chain.

Sites are numbered 1..N-1 and stored in 0-based arrays (site k at index
k-1). The bulk runs nearest-neighbour stirring at rate 1, the right edge
flips site N-1 against a reservoir of density beta, and the left block
{1..p} is driven either by structured reservoir/copy/anticopy rates or
by a single flip-rate table for site 1 read off the block state.

All rates are per unit microscopic time; consumers apply the N^2
diffusive clock themselves.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .rng import u01_array

Move = tuple
InitialProfile = Callable[[float], float]


def _vector(x, p, name):
    v = np.atleast_1d(np.asarray(x, dtype=float))
    if v.shape != (p,):
        raise ValueError(f"{name} must have shape ({p},), got {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} must be finite")
    v.setflags(write=False)
    return v


def _matrix(x, p, name):
    if x is None:
        m = np.zeros((p, p))
    else:
        m = np.asarray(x, dtype=float)
    if m.shape != (p, p):
        raise ValueError(f"{name} must have shape ({p},{p}), got {m.shape}")
    if not np.all(np.isfinite(m)) or np.any(m < 0):
        raise ValueError(f"{name} must be finite and non-negative")
    if np.any(np.diag(m) != 0):
        raise ValueError(f"{name} must have a zero diagonal")
    m = m.copy()
    m.setflags(write=False)
    return m


@dataclass(frozen=True)
class LatticeSpec:
    """Bulk size N and left-block width p; sites are 1..N-1."""

    N: int
    p: int

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("p must be at least 1")
        # at least one bulk site strictly between the block and site N-1
        if self.N < self.p + 3:
            raise ValueError("N must be at least p+3")

    @property
    def sites(self) -> range:
        return range(1, self.N)

    @property
    def n_sites(self) -> int:
        return self.N - 1


@dataclass(frozen=True)
class StructuredBoundary:
    """Reservoir rates r_j with densities alpha_j, copy rates c[j,k] firing
    on disagreement, anticopy rates a[j,k] firing on agreement."""

    r: np.ndarray
    alpha: np.ndarray
    c: np.ndarray | None = None
    a: np.ndarray | None = None

    def __post_init__(self):
        p = len(np.atleast_1d(self.r))
        r = _vector(self.r, p, "r")
        if np.any(r < 0):
            raise ValueError("r must be non-negative")
        alpha = _vector(self.alpha, p, "alpha")
        if np.any(alpha < 0) or np.any(alpha > 1):
            raise ValueError("alpha must lie in [0,1]")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "c", _matrix(self.c, p, "c"))
        object.__setattr__(self, "a", _matrix(self.a, p, "a"))

    @property
    def p(self) -> int:
        return len(self.r)

    def __eq__(self, other):
        if not isinstance(other, StructuredBoundary):
            return NotImplemented
        return (
            np.array_equal(self.r, other.r)
            and np.array_equal(self.alpha, other.alpha)
            and np.array_equal(self.c, other.c)
            and np.array_equal(self.a, other.a)
        )


@dataclass(frozen=True)
class RateTableBoundary:
    """Flip rate for site 1 as a table over the block state.

    table[s] is the rate when the block occupancy is s, encoded with
    site 1 as the least significant bit. JSON uses p-character bit
    strings with site 1 leftmost; from_strings handles the conversion.
    """

    table: np.ndarray
    p: int = field(init=False)

    def __post_init__(self):
        t = np.asarray(self.table, dtype=float)
        if t.ndim != 1 or t.size < 2 or (t.size & (t.size - 1)) != 0:
            raise ValueError("table length must be a power of two, at least 2")
        if not np.all(np.isfinite(t)) or np.any(t < 0):
            raise ValueError("table rates must be finite and non-negative")
        t = t.copy()
        t.setflags(write=False)
        object.__setattr__(self, "table", t)
        object.__setattr__(self, "p", int(t.size).bit_length() - 1)

    @classmethod
    def from_strings(cls, entries: dict) -> "RateTableBoundary":
        keys = list(entries)
        if not keys:
            raise ValueError("empty rate table")
        p = len(keys[0])
        if any(len(k) != p or set(k) - {"0", "1"} for k in keys):
            raise ValueError("table keys must be equal-length bit strings")
        if len(entries) != 2**p:
            raise ValueError(f"table must cover all {2**p} block states")
        t = np.empty(2**p)
        for k, v in entries.items():
            t[int(k[::-1], 2)] = float(v)  # leftmost char is site 1
        return cls(t)

    def to_strings(self) -> dict:
        return {
            format(s, f"0{self.p}b")[::-1]: float(self.table[s])
            for s in range(2**self.p)
        }

    def __eq__(self, other):
        if not isinstance(other, RateTableBoundary):
            return NotImplemented
        return np.array_equal(self.table, other.table)


LeftBoundary = Union[StructuredBoundary, RateTableBoundary]


@dataclass(frozen=True)
class ModelSpec:
    lattice: LatticeSpec
    beta: float
    left: LeftBoundary

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must lie in [0,1]")
        if self.left.p != self.lattice.p:
            raise ValueError(
                f"left boundary width {self.left.p} != lattice p {self.lattice.p}"
            )


def structured_spec(N, p, beta, r, alpha, c=None, a=None) -> ModelSpec:
    return ModelSpec(LatticeSpec(N, p), beta, StructuredBoundary(r, alpha, c, a))


def table_spec(N, p, beta, table) -> ModelSpec:
    if isinstance(table, dict):
        left = RateTableBoundary.from_strings(table)
    else:
        left = RateTableBoundary(np.asarray(table, dtype=float))
    return ModelSpec(LatticeSpec(N, p), beta, left)


# -- configurations ---------------------------------------------------------

def parse_config(bits: str) -> np.ndarray:
    """Occupancy from a bit string with site 1 leftmost."""
    if set(bits) - {"0", "1"}:
        raise ValueError("configuration string must be binary")
    return np.array([int(b) for b in bits], dtype=np.uint8)


def format_config(cfg: np.ndarray) -> str:
    return "".join(str(int(b)) for b in cfg)


def _check_site(cfg, k):
    if not 1 <= k <= len(cfg):
        raise ValueError(f"site {k} out of range 1..{len(cfg)}")


def swap(cfg: np.ndarray, k: int, l: int) -> np.ndarray:
    """New configuration with the occupancies of sites k and l exchanged."""
    _check_site(cfg, k)
    _check_site(cfg, l)
    if k == l:
        raise ValueError("swap requires two distinct sites")
    out = cfg.copy()
    out[k - 1], out[l - 1] = cfg[l - 1], cfg[k - 1]
    return out


def flip(cfg: np.ndarray, k: int) -> np.ndarray:
    """New configuration with site k flipped."""
    _check_site(cfg, k)
    out = cfg.copy()
    out[k - 1] = 1 - out[k - 1]
    return out


def apply_move(cfg: np.ndarray, move: Move) -> np.ndarray:
    if move[0] == "swap":
        return swap(cfg, move[1], move[2])
    if move[0] == "flip":
        return flip(cfg, move[1])
    raise ValueError(f"unknown move {move!r}")


def block_state(cfg: np.ndarray, p: int) -> int:
    """Integer encoding of sites 1..p with site 1 as bit 0."""
    s = 0
    for j in range(p):
        s |= int(cfg[j]) << j
    return s


# -- rates -------------------------------------------------------------------

def flip_rate_core(r, alpha, c, a, get, j: int, p: int):
    """Block flip rate formula over any numeric type (float or Fraction).

    r, alpha index as [j-1]; c, a as [j-1][k-1]; get(site) in {0,1}.
    """
    e = get(j)
    rate = r[j - 1] * (alpha[j - 1] * (1 - e) + e * (1 - alpha[j - 1]))
    for k in range(1, p + 1):
        if k == j:
            continue
        ek = get(k)
        agree = e * ek + (1 - e) * (1 - ek)
        rate = rate + c[j - 1][k - 1] * (1 - agree) + a[j - 1][k - 1] * agree
    return rate


def structured_flip_rate(left: StructuredBoundary, get, j: int) -> float:
    """Flip rate of block site j; get(site) returns an occupancy in {0,1}."""
    return float(flip_rate_core(left.r, left.alpha, left.c, left.a, get, j, left.p))


def right_flip_rate_core(beta, e: int):
    return beta * (1 - e) + (1 - beta) * e


def right_flip_rate(beta: float, e: int) -> float:
    return float(right_flip_rate_core(beta, e))


def left_flip_rate(spec: ModelSpec, cfg: np.ndarray, j: int) -> float:
    """Flip rate of site j under the left mechanism (j in 1..p, or j=1
    for a rate table)."""
    left = spec.left
    if isinstance(left, StructuredBoundary):
        if not 1 <= j <= left.p:
            raise ValueError(f"site {j} is not in the left block")
        return structured_flip_rate(left, lambda s: int(cfg[s - 1]), j)
    if j != 1:
        raise ValueError("rate-table boundary flips site 1 only")
    return float(left.table[block_state(cfg, left.p)])


def flip_sites(spec: ModelSpec) -> list:
    """Sites carrying a flip mechanism (left block or site 1, plus N-1)."""
    if isinstance(spec.left, StructuredBoundary):
        out = list(range(1, spec.lattice.p + 1))
    else:
        out = [1]
    out.append(spec.lattice.N - 1)
    return out


def transitions(cfg: np.ndarray, spec: ModelSpec) -> list:
    """All moves with positive rate out of cfg, as (move, rate) pairs.

    Flip rates at one site are merged into a single entry. Stirring
    swaps are listed only when they change the configuration.
    """
    N = spec.lattice.N
    if len(cfg) != N - 1:
        raise ValueError(f"configuration has {len(cfg)} sites, expected {N - 1}")
    moves = []
    for k in range(1, N - 1):
        if cfg[k - 1] != cfg[k]:
            moves.append((("swap", k, k + 1), 1.0))
    left = spec.left
    if isinstance(left, StructuredBoundary):
        get = lambda s: int(cfg[s - 1])
        for j in range(1, left.p + 1):
            rate = structured_flip_rate(left, get, j)
            if rate > 0:
                moves.append((("flip", j), rate))
    else:
        rate = float(left.table[block_state(cfg, left.p)])
        if rate > 0:
            moves.append((("flip", 1), rate))
    rr = right_flip_rate(spec.beta, int(cfg[N - 2]))
    if rr > 0:
        moves.append((("flip", N - 1), rr))
    return moves


def total_rate_bound(spec: ModelSpec) -> float:
    """Upper bound on the total outflow rate from any configuration."""
    N = spec.lattice.N
    left = spec.left
    if isinstance(left, StructuredBoundary):
        per_site = left.r + left.c.sum(axis=1) + left.a.sum(axis=1)
        left_max = float(per_site.sum())
    else:
        left_max = float(left.table.max())
    return (N - 2) + left_max + max(spec.beta, 1 - spec.beta)


# -- initial data ------------------------------------------------------------

def profile_vector(profile: InitialProfile, lattice: LatticeSpec) -> np.ndarray:
    """profile(k/N) for k = 1..N-1, validated to lie in [0,1]."""
    N = lattice.N
    v = np.array([float(profile(k / N)) for k in range(1, N)])
    if np.any(v < 0) or np.any(v > 1) or not np.all(np.isfinite(v)):
        raise ValueError("initial profile must map (0,1) into [0,1]")
    return v


def sample_initial(profile: InitialProfile, lattice: LatticeSpec, seed: int) -> np.ndarray:
    """Product-law sample: site k occupied with probability profile(k/N).

    Uses counters 0..N-2 of the stream for seed; event kernels continue
    the same stream from counter N-1.
    """
    probs = profile_vector(profile, lattice)
    u = u01_array(seed, 0, lattice.n_sites)
    return (u < probs).astype(np.uint8)


# -- serialization -----------------------------------------------------------

def spec_to_json(spec: ModelSpec) -> dict:
    left = spec.left
    if isinstance(left, StructuredBoundary):
        left_obj = {
            "kind": "structured",
            "r": left.r.tolist(),
            "alpha": left.alpha.tolist(),
            "c": left.c.tolist(),
            "a": left.a.tolist(),
        }
    else:
        left_obj = {"kind": "table", "table": left.to_strings()}
    return {
        "N": spec.lattice.N,
        "p": spec.lattice.p,
        "beta": spec.beta,
        "left": left_obj,
    }


def spec_from_json(obj) -> ModelSpec:
    if isinstance(obj, (str, bytes)):
        obj = json.loads(obj)
    try:
        N = int(obj["N"])
        p = int(obj["p"])
        beta = float(obj["beta"])
        left_obj = dict(obj["left"])
        kind = left_obj["kind"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed model spec: {exc}") from exc
    if kind == "structured":
        left = StructuredBoundary(
            np.asarray(left_obj["r"], dtype=float),
            np.asarray(left_obj["alpha"], dtype=float),
            np.asarray(left_obj["c"], dtype=float) if "c" in left_obj else None,
            np.asarray(left_obj["a"], dtype=float) if "a" in left_obj else None,
        )
    elif kind == "table":
        left = RateTableBoundary.from_strings(left_obj["table"])
    else:
        raise ValueError(f"unknown left boundary kind {kind!r}")
    return ModelSpec(LatticeSpec(N, p), beta, left)
