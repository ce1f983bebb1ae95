"""Moser functions concentrating at the boundary, and Trudinger-Moser probes.

psi_k is the truncated logarithm on the plane (up to the factor 1/sqrt(2 pi))

    sqrt(log k)                for r <= 1/k
    log(1/r) / sqrt(log k)     for 1/k <= r <= 1
    0                          for r >= 1

restricted to the upper half-plane.  Its normalised version phi_k divides
by the working norm of the restriction, built from the half-plane Dirichlet
energy (exactly 1/2) plus the potential term over the trace.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import integrate as _quadpack

from .errors import DomainError, MagnitudeError, ResolutionError
from .grid_spectral import Field, Grid1D, integrate
from .model import OVERFLOW_T2, PotentialSpec


@dataclass(frozen=True)
class MoserFamily:
    k: int

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 2:
            raise DomainError(f"Moser index k must be an integer >= 2, got {self.k}")

    @property
    def log_k(self) -> float:
        return math.log(self.k)

    @property
    def plateau(self) -> float:
        return math.sqrt(self.log_k) / math.sqrt(2.0 * math.pi)

    def psi(self, x, y=0.0):
        """psi_k(x, y), vectorised over broadcastable x, y."""
        r = np.hypot(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        lk = self.log_k
        inner = np.log(1.0 / np.maximum(r, 1.0 / self.k)) / math.sqrt(lk)
        inner = np.where(r >= 1.0, 0.0, inner)
        return inner / math.sqrt(2.0 * math.pi)

    def trace(self, x):
        return self.psi(x, 0.0)

    def potential_term(self, potential: Optional[PotentialSpec]) -> float:
        """int V(x) psi_k(x, 0)^2 dx by adaptive quadrature (0 when V is None)."""
        if potential is None:
            return 0.0
        f = lambda s: float(potential(s)) * float(self.trace(s)) ** 2
        a, _ = _quadpack.quad(f, 0.0, 1.0 / self.k, epsabs=0.0, epsrel=1e-13)
        b, _ = _quadpack.quad(f, 1.0 / self.k, 1.0, epsabs=0.0, epsrel=1e-13, limit=200)
        return 2.0 * (a + b)

    def norm_sq(self, potential: Optional[PotentialSpec]) -> float:
        """||psi_bar_k||^2 = 1/2 + int V psi_k(x, 0)^2."""
        return moser_energy_2d(self.k)[1] + self.potential_term(potential)

    def normalized_trace(self, grid: Grid1D, potential: Optional[PotentialSpec]) -> Field:
        check_resolution(grid, self.k)
        return Field(grid, self.trace(grid.x) / math.sqrt(self.norm_sq(potential)))


def check_resolution(grid: Grid1D, k: int) -> None:
    if grid.dx > 1.0 / (4.0 * k) * (1 + 1e-12):
        raise ResolutionError(f"dx = {grid.dx:.3e} does not resolve Moser index k = {k} (need dx <= {1 / (4 * k):.3e})")
    if grid.half_length <= 1.0:
        raise ResolutionError("the box must contain the support [-1, 1]")


def moser_energy_2d(k: int) -> Tuple[float, float, float]:
    """(full-plane Dirichlet energy, half-plane energy, full-plane L^2 mass).

    |grad psi_k|^2 = 1 / (2 pi r^2 log k) on 1/k < r < 1 and zero elsewhere,
    so the full-plane energy is int_{1/k}^1 dr / (r log k) = 1.
    """
    fam = MoserFamily(k)
    lk = fam.log_k
    full = (math.log(1.0) - math.log(1.0 / k)) / lk
    half = 0.5 * full
    ring, _ = _quadpack.quad(lambda r: r * math.log(1.0 / r) ** 2, 1.0 / k, 1.0, epsabs=0.0, epsrel=1e-13)
    mass = (math.pi * lk / k**2 + 2.0 * math.pi * ring / lk) / (2.0 * math.pi)
    return full, half, mass


def moser_center_sq(k: int, potential: Optional[PotentialSpec] = None) -> float:
    """phi_k(0, 0)^2 = (log k / (2 pi)) / ||psi_bar_k||^2."""
    fam = MoserFamily(k)
    return (fam.log_k / (2.0 * math.pi)) / fam.norm_sq(potential)


def mt_functional(u: Field, alpha: float) -> float:
    """int (exp(alpha u^2) - 1) dx."""
    if not alpha > 0:
        raise DomainError("alpha must be positive")
    vals = u.values
    peak = alpha * float(np.max(vals * vals))
    if peak > OVERFLOW_T2:
        raise MagnitudeError(f"alpha * max u^2 = {peak:.6g} exceeds the overflow guard", value=peak)
    return integrate(Field(u.grid, np.expm1(alpha * vals * vals)))


def ozawa_ratio(u: Field, q: float) -> float:
    """||u||_q / (sqrt(q) [u]^(1 - 2/q) ||u||_2^(2/q)), the implied constant."""
    if q < 2:
        raise DomainError("q must be at least 2")
    vals = u.values
    if not np.any(vals):
        raise DomainError("ozawa_ratio is undefined for the zero field")
    dx = u.grid.dx
    lq = (dx * float(np.sum(np.abs(vals) ** q))) ** (1.0 / q)
    l2 = math.sqrt(dx * float(np.dot(vals, vals)))
    uh = np.fft.rfft(vals)
    quarter = np.fft.irfft(np.abs(u.grid.rwavenumbers) ** 0.5 * uh, n=vals.shape[0])
    semi = math.sqrt(dx * float(np.dot(quarter, quarter)))
    e = 1.0 - 2.0 / q
    denom = math.sqrt(q) * (semi**e if e > 0 else 1.0) * l2 ** (2.0 / q)
    return lq / denom


def trace_seminorm_sq(grid: Grid1D, k: int) -> float:
    """[psi_k(., 0)]^2 via the multiplier (no normalisation)."""
    check_resolution(grid, k)
    vals = MoserFamily(k).trace(grid.x)
    uh = np.fft.rfft(vals)
    w = np.full(uh.shape, 2.0)
    w[0] = 1.0
    w[-1] = 1.0
    return grid.dx / grid.n_points * float(np.sum(w * grid.rwavenumbers * np.abs(uh) ** 2))
