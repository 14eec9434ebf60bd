"""Exact analysis of the left-block chain.

The block {1..p} together with its flip mechanisms and the stirring
bonds (k,k+1), k=1..p-1, forms an autonomous chain on 2^p states. Its
invariant measure mu gives the effective left density alpha = E_mu(eta_p)
(written alpha-tilde when the boundary is a rate table). States are
encoded as integers with site 1 as the least significant bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import NonUniqueStationary, SizeLimit, Unsupported
from .model import (
    ModelSpec,
    RateTableBoundary,
    StructuredBoundary,
    structured_flip_rate,
)

P_CAP = 12  # 2^p dense linear algebra beyond this is pointless


@dataclass(frozen=True)
class BoundaryChain:
    p: int
    generator: np.ndarray  # (2^p, 2^p), rows sum to zero

    @property
    def states(self) -> range:
        return range(2**self.p)


@dataclass(frozen=True)
class InvariantMeasure:
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)


def state_key(s: int, p: int) -> str:
    """Bit-string label with site 1 leftmost, matching rate-table keys."""
    return format(s, f"0{p}b")[::-1]


def build_chain(spec: ModelSpec) -> BoundaryChain:
    """Generator of the block chain: left flips plus internal stirring."""
    p = spec.lattice.p
    if p > P_CAP:
        raise SizeLimit(f"p = {p} exceeds the exact-chain cap {P_CAP}")
    n = 2**p
    Q = np.zeros((n, n))
    left = spec.left
    for s in range(n):
        bit = lambda j: (s >> (j - 1)) & 1
        if isinstance(left, StructuredBoundary):
            for j in range(1, p + 1):
                rate = structured_flip_rate(left, bit, j)
                if rate > 0:
                    Q[s, s ^ (1 << (j - 1))] += rate
        else:
            rate = float(left.table[s])
            if rate > 0:
                Q[s, s ^ 1] += rate
        for k in range(1, p):
            if bit(k) != bit(k + 1):
                Q[s, s ^ ((1 << (k - 1)) | (1 << k))] += 1.0
    np.fill_diagonal(Q, Q.diagonal() - Q.sum(axis=1))
    return BoundaryChain(p, Q)


def _closed_classes(Q: np.ndarray) -> list:
    """Communicating classes with no rate leading out of them."""
    n = Q.shape[0]
    adj = sp.csr_matrix((Q > 0).astype(np.int8))
    n_comp, labels = connected_components(adj, directed=True, connection="strong")
    leaves = [True] * n_comp
    rows, cols = np.nonzero(Q > 0)
    for i, j in zip(rows, cols):
        if labels[i] != labels[j]:
            leaves[labels[i]] = False
    return [np.nonzero(labels == c)[0] for c in range(n_comp) if leaves[c]]


def _gth(Q: np.ndarray) -> np.ndarray:
    """Stationary vector of an irreducible generator by GTH elimination
    (subtraction-free, numerically exact up to rounding)."""
    K = Q.copy()
    np.fill_diagonal(K, 0.0)
    n = K.shape[0]
    for k in range(n - 1, 0, -1):
        s = K[k, :k].sum()
        if s <= 0:
            raise NonUniqueStationary("chain is not irreducible")
        K[:k, :k] += np.outer(K[:k, k] / s, K[k, :k])
    mu = np.zeros(n)
    mu[0] = 1.0
    for k in range(1, n):
        mu[k] = mu[:k] @ K[:k, k] / K[k, :k].sum()
    return mu / mu.sum()


def invariant_measure(chain: BoundaryChain) -> InvariantMeasure:
    """Unique stationary law of the block chain.

    Uniqueness holds iff the positive-rate digraph has exactly one closed
    communicating class; a rank certificate on the generator augmented
    with the normalization row double-checks the verdict.
    """
    Q = chain.generator
    n = Q.shape[0]
    closed = _closed_classes(Q)
    if len(closed) != 1:
        raise NonUniqueStationary(
            f"{len(closed)} closed classes (degenerate boundary mechanism)"
        )
    aug = np.vstack([Q.T, np.ones(n)])
    if np.linalg.matrix_rank(aug) < n:
        raise NonUniqueStationary("rank certificate failed")
    support = closed[0]
    mu = np.zeros(n)
    mu[support] = _gth(Q[np.ix_(support, support)])
    resid = np.abs(mu @ Q).max()
    if resid > 1e-10 or abs(mu.sum() - 1.0) > 1e-12 or mu.min() < 0:
        raise AssertionError(f"stationary solve failed: residual {resid:.2e}")
    return InvariantMeasure(mu)


def left_density(spec: ModelSpec) -> float:
    """alpha = E_mu(eta_p); alpha-tilde for rate-table boundaries."""
    chain = build_chain(spec)
    mu = invariant_measure(chain).weights
    p = spec.lattice.p
    mask = (np.arange(2**p) >> (p - 1)) & 1
    return float(mu @ mask)


def check_a1(spec: ModelSpec) -> bool:
    """Ergodicity assumption for structured boundaries: some reservoir or
    anticopy rate is positive."""
    left = spec.left
    if not isinstance(left, StructuredBoundary):
        raise Unsupported("A1 is defined for structured boundaries only")
    return float(left.a.sum() + left.r.sum()) > 0.0


@dataclass(frozen=True)
class A2Report:
    A: float
    B: float
    lambda_sum: float
    holds: bool

    def as_dict(self) -> dict:
        return {
            "A": self.A,
            "B": self.B,
            "lambda_sum": self.lambda_sum,
            "holds": self.holds,
        }


def check_a2(table: RateTableBoundary) -> A2Report:
    """Smallness-of-variation condition on a rate table.

    With A and B the minimal rates at eta_1 = 0 and 1, and lambda the
    excess over that minimum, the condition reads
    (p-1) * sum_xi [lambda(0,xi) + lambda(1,xi)] <= A + B.
    """
    p = table.p
    t = table.table
    idx = np.arange(2**p)
    at0 = t[(idx & 1) == 0]
    at1 = t[(idx & 1) == 1]
    A = float(at0.min())
    B = float(at1.min())
    lambda_sum = float((at0 - A).sum() + (at1 - B).sum())
    holds = bool((p - 1) * lambda_sum <= A + B)
    return A2Report(A, B, lambda_sum, holds)


def boundary_report(spec: ModelSpec) -> dict:
    """JSON-ready summary: {alpha, unique, mu, a1, a2}."""
    p = spec.lattice.p
    chain = build_chain(spec)
    try:
        mu = invariant_measure(chain).weights
        unique = True
    except NonUniqueStationary:
        mu = None
        unique = False
    if mu is None:
        alpha = None
        mu_map = None
    else:
        mask = (np.arange(2**p) >> (p - 1)) & 1
        alpha = float(mu @ mask)
        mu_map = {state_key(s, p): float(mu[s]) for s in range(2**p)}
    if isinstance(spec.left, StructuredBoundary):
        a1 = check_a1(spec)
        a2 = None
    else:
        a1 = None
        a2 = check_a2(spec.left).as_dict()
    return {"alpha": alpha, "unique": unique, "mu": mu_map, "a1": a1, "a2": a2}
