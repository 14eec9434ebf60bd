"""Geometry of the two-point index set.

The correlation plane {(k,l): p+1 <= k < l <= N} splits into the bulk,
the near-diagonal strip, and three thin boundary layers, with the
N^(3/4) mesoscale separating them. The truncated-diagonal flag marks
diagonal points within N^(1-eps/4) of either corner.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

TAG_BULK = "bulk"
TAG_DIAGONAL = "diagonal"
TAG_VERTICAL = "vertical"
TAG_LOWER_HORIZONTAL = "lower_horizontal"
TAG_UPPER_HORIZONTAL = "upper_horizontal"
TAG_OUTSIDE = "outside"


@dataclass(frozen=True)
class Region2D:
    tag: str
    truncated: bool = False  # set only for diagonal points near a corner


def sup_norm(pos) -> int:
    k, l = pos
    return max(abs(int(k)), abs(int(l)))


def mesoscale(N: int) -> int:
    return int(math.floor(N**0.75))


def on_bulk(k: int, l: int, N: int, p: int = 1) -> bool:
    m = mesoscale(N)
    return m < l < N and p + 1 < k < max(m, l - 1)


def on_diagonal(k: int, l: int, N: int) -> bool:
    m = mesoscale(N)
    return l == k + 1 and m <= k <= N - 2


def region_classify(pos, N: int, eps: float = 1 / 20, p: int = 1) -> Region2D:
    """Tag of a lattice pair; diagonal points also carry the truncation
    flag k <= N^(1-eps/4) or k >= N - N^(1-eps/4)."""
    k, l = int(pos[0]), int(pos[1])
    m = mesoscale(N)
    if k == p + 1 and m < l < N:
        return Region2D(TAG_VERTICAL)
    if l == m and p + 1 <= k < m:
        return Region2D(TAG_LOWER_HORIZONTAL)
    if l == N and p + 1 <= k <= N - 2:
        return Region2D(TAG_UPPER_HORIZONTAL)
    if on_diagonal(k, l, N):
        x = N ** (1 - eps / 4)
        return Region2D(TAG_DIAGONAL, truncated=(k <= x or k >= N - x))
    if on_bulk(k, l, N, p):
        return Region2D(TAG_BULK)
    return Region2D(TAG_OUTSIDE)
