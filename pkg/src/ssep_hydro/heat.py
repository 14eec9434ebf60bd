"""Reference solution of the limiting heat equation.

Dirichlet data (alpha, beta), initial profile rho_0, solved by sine
series on top of the stationary linear part. A spectral form is the
right tool here because callers evaluate at arbitrary (t, k/N) pairs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .csvio import write_csv
from .fields import DensityField
from .model import InitialProfile

DEFAULT_MODES = 64
_GRID = 4096  # sampling resolution for the maximum-principle box


@dataclass(frozen=True)
class HeatSolution:
    """Evaluator for rho_bar(t, u) = alpha + (beta-alpha) u + series.

    The truncated series is projected onto the maximum-principle box
    [lo, hi]; projection never increases the distance to the true
    solution and keeps rough initial data honest at small t.
    """

    alpha: float
    beta: float
    modes: int
    coeffs: np.ndarray  # sine coefficients of rho_0 minus the linear part
    lo: float
    hi: float

    def __call__(self, t: float, u):
        t = float(t)
        if t < 0:
            raise ValueError("time must be non-negative")
        arr = np.asarray(u, dtype=float)
        if np.any(arr < 0) or np.any(arr > 1):
            raise ValueError("u must lie in [0, 1]")
        m = np.arange(1, self.modes + 1)
        weights = self.coeffs * np.exp(-((m * np.pi) ** 2) * t)
        series = np.sin(np.pi * np.outer(arr.ravel(), m)) @ weights
        vals = self.alpha + (self.beta - self.alpha) * arr.ravel() + series
        vals = np.clip(vals, self.lo, self.hi)
        if arr.ndim == 0:
            return float(vals[0])
        return vals.reshape(arr.shape)


def solve_heat(
    profile: InitialProfile, alpha: float, beta: float, modes: int = DEFAULT_MODES
) -> HeatSolution:
    """Sine-series solution with Dirichlet data (alpha, beta).

    Coefficients of rho_0(u) - alpha - (beta-alpha) u come from adaptive
    quadrature with the oscillatory sin weight, one mode at a time.
    """
    if modes < 1:
        raise ValueError("modes must be >= 1")
    if not (0.0 <= alpha <= 1.0 and 0.0 <= beta <= 1.0):
        raise ValueError("boundary densities must lie in [0, 1]")
    us = np.arange(1, _GRID) / _GRID
    samples = np.array([float(profile(u)) for u in us])
    if np.any(samples < 0) or np.any(samples > 1) or not np.all(np.isfinite(samples)):
        raise ValueError("initial profile must map (0,1) into [0,1]")

    g = lambda u: float(profile(u)) - alpha - (beta - alpha) * u
    coeffs = np.empty(modes)
    for m in range(1, modes + 1):
        val, _ = quad(g, 0.0, 1.0, weight="sin", wvar=m * np.pi, limit=200)
        coeffs[m - 1] = 2.0 * val
    lo = min(alpha, beta, float(samples.min()))
    hi = max(alpha, beta, float(samples.max()))
    return HeatSolution(float(alpha), float(beta), modes, coeffs, lo, hi)


def theta(field: DensityField, sol: HeatSolution, t: float, k: int) -> float:
    """Deviation rho_N(t,k) - rho_bar(t, k/N) of lattice from continuum."""
    if t <= 0:
        raise ValueError("theta is defined for t > 0")
    return field.value(t, k) - sol(t, k / field.lattice.N)


def write_heat_csv(sol: HeatSolution, t_grid, u_grid, path) -> None:
    rows = [
        (float(t), float(u), sol(t, u))
        for t in t_grid
        for u in u_grid
    ]
    write_csv(path, ["t", "u", "rho_bar"], rows)
