"""Working norm, first eigenvalue, the functionals I and J and their gradients.

Everything lives on the trace line.  The half-plane Dirichlet energy of the
harmonic extension equals the H^(1/2) seminorm of the trace, so the working
norm is

    ||u||^2 = int u (-Delta)^(1/2) u dx + int V u^2 dx = <A u, u>,

with A = (-Delta)^(1/2) + V.  Gradients are Riesz representatives in this
inner product (Sobolev gradients): g = kappa u - A^(-1) n(u), where n is
the nonlinearity (plus an optional fixed source) and kappa = 1 for I,
kappa = m(||u||^2) for J.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg, eigsh

from .errors import ConvergenceError, DomainError
from .grid_spectral import Field, Grid1D, multiplier
from .model import ModelSpec, NonlinearitySpec

ArrayLike = Union[Field, np.ndarray]


def _vals(u) -> np.ndarray:
    return u.values if isinstance(u, Field) else np.asarray(u, dtype=float)


class EnergyContext:
    """Grid + model with precomputed potential samples and symbols.

    ``source`` is an optional fixed forcing s(x) added to the nonlinearity,
    i.e. the energy gains the linear term -int s u.  It exists for
    manufactured-solution tests.
    """

    def __init__(self, grid: Grid1D, model: ModelSpec, source: Optional[ArrayLike] = None,
                 cg_rtol: float = 1e-12, cg_maxiter: int = 5000):
        self.grid = grid
        self.model = model
        self.V = model.potential(grid.x)
        if np.any(self.V < model.potential.V0):
            raise DomainError("potential samples fall below V0")
        self.V.setflags(write=False)
        self.symbol = multiplier(grid, 0.5)
        self.quarter_symbol = multiplier(grid, 0.25)
        self.source = None if source is None else np.array(_vals(source), dtype=float)
        self.cg_rtol = cg_rtol
        self.cg_maxiter = cg_maxiter
        # diagonal of the dense operator: mean of |xi| over all N wavenumbers, plus V
        self._diag = float(np.mean(np.abs(grid.wavenumbers))) + self.V
        n = grid.n_points
        self._A_op = LinearOperator((n, n), matvec=self.apply_A, dtype=float)
        self._M_op = LinearOperator((n, n), matvec=lambda r: r / self._diag, dtype=float)

    # -- linear pieces -----------------------------------------------------
    @property
    def dx(self) -> float:
        return self.grid.dx

    def half_lap(self, u) -> np.ndarray:
        u = _vals(u)
        return np.fft.irfft(self.symbol * np.fft.rfft(u), n=u.shape[-1])

    def apply_A(self, u) -> np.ndarray:
        u = np.asarray(_vals(u), dtype=float)
        if u.ndim == 1:
            u = u.reshape(-1)
        return self.half_lap(u) + self.V * u

    def inner(self, u, v) -> float:
        """<u, v> = int v (-Delta)^(1/2) u + int V u v."""
        return float(self.dx * np.dot(_vals(v), self.apply_A(u)))

    def norm_sq(self, u):
        """Working norm squared; a 2-D array gives one value per row."""
        u = _vals(u)
        uh = np.fft.rfft(u, axis=-1)
        w = np.full(uh.shape[-1], 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        semi = self.dx / u.shape[-1] * np.sum(w * self.symbol * np.abs(uh) ** 2, axis=-1)
        total = semi + self.dx * np.sum(self.V * u * u, axis=-1)
        return float(total) if np.ndim(total) == 0 else total

    def seminorm_sq(self, u) -> float:
        """[u]^2 = int |(-Delta)^(1/4) u|^2."""
        u = _vals(u)
        q = np.fft.irfft(self.quarter_symbol * np.fft.rfft(u), n=u.shape[-1])
        return float(self.dx * np.dot(q, q))

    def solve_A(self, rhs, x0=None) -> np.ndarray:
        rhs = np.asarray(_vals(rhs), dtype=float)
        if not np.any(rhs):
            return np.zeros_like(rhs)
        sol, info = cg(self._A_op, rhs, x0=x0, rtol=self.cg_rtol, atol=0.0,
                       maxiter=self.cg_maxiter, M=self._M_op)
        if info != 0:
            res = float(np.linalg.norm(self.apply_A(sol) - rhs) / np.linalg.norm(rhs))
            raise ConvergenceError(f"conjugate gradient did not converge (relative residual {res:.3e})", residual=res)
        return sol

    def solve_A_batch(self, rhs) -> np.ndarray:
        """Row-wise A^(-1) by a block of independent Jacobi-preconditioned CG runs."""
        rhs = np.atleast_2d(np.asarray(rhs, dtype=float))
        x = np.zeros_like(rhs)
        bnorm = np.linalg.norm(rhs, axis=1)
        active = bnorm > 0
        r = rhs.copy()
        z = r / self._diag
        p = z.copy()
        rz = np.sum(r * z, axis=1)
        for _ in range(self.cg_maxiter):
            done = np.linalg.norm(r, axis=1) <= self.cg_rtol * bnorm
            active &= ~done
            if not np.any(active):
                return x
            Ap = self.apply_A(p)
            pAp = np.sum(p * Ap, axis=1)
            alpha = np.where(active, rz / np.where(pAp > 0, pAp, 1.0), 0.0)
            x += alpha[:, None] * p
            r -= alpha[:, None] * Ap
            z = r / self._diag
            rz_new = np.sum(r * z, axis=1)
            beta = np.where(active, rz_new / np.where(rz > 0, rz, 1.0), 0.0)
            p = z + beta[:, None] * p
            rz = rz_new
        res = float(np.max(np.linalg.norm(r, axis=1) / np.where(bnorm > 0, bnorm, 1.0)))
        raise ConvergenceError(f"block conjugate gradient did not converge (relative residual {res:.3e})",
                               residual=res)

    # -- nonlinear pieces --------------------------------------------------
    def kappa(self, which: str, norm_sq: float) -> float:
        if which == "I":
            return 1.0
        if which == "J":
            if self.model.kirchhoff is None:
                return 1.0
            return float(self.model.kirchhoff.m(norm_sq))
        raise DomainError(f"functional must be 'I' or 'J', got {which!r}")

    def big_M(self, which: str, norm_sq: float) -> float:
        if which not in ("I", "J"):
            raise DomainError(f"functional must be 'I' or 'J', got {which!r}")
        if which == "J" and self.model.kirchhoff is not None:
            return float(self.model.kirchhoff.M(norm_sq))
        return norm_sq

    def nonlinear(self, u) -> np.ndarray:
        n = self.model.nonlinearity(_vals(u))
        if self.source is not None:
            n = n + self.source
        return n

    def nonlinear_primitive_integral(self, u) -> float:
        u = _vals(u)
        total = float(self.dx * np.sum(self.model.nonlinearity.primitive(u)))
        if self.source is not None:
            total += float(self.dx * np.dot(self.source, u))
        return total

    def energy(self, u, which: str = "I") -> float:
        nsq = self.norm_sq(u)
        return 0.5 * self.big_M(which, nsq) - self.nonlinear_primitive_integral(u)


@dataclass(frozen=True)
class GradientReport:
    gradient: Field
    dual_norm: float
    energy: float
    kappa: float
    norm_sq: float
    grid_L: float
    grid_N: int


def v_norm_sq(ctx: EnergyContext, u: ArrayLike) -> float:
    return ctx.norm_sq(u)


def energy_I(ctx: EnergyContext, u: ArrayLike) -> float:
    """I(u) = ||u||^2 / 2 - int H(u)."""
    return ctx.energy(u, "I")


def energy_J(ctx: EnergyContext, u: ArrayLike) -> float:
    """J(u) = M(||u||^2) / 2 - int F(u)."""
    return ctx.energy(u, "J")


def gradient(ctx: EnergyContext, u: ArrayLike, which: str = "I") -> GradientReport:
    vals = _vals(u)
    nsq = ctx.norm_sq(vals)
    kap = ctx.kappa(which, nsq)
    n = ctx.nonlinear(vals)
    g = kap * vals - ctx.solve_A(n)
    # the Riesz map is an isometry, so the dual norm of E'(u) is the working norm of g
    dual_sq = ctx.norm_sq(g)
    energy = 0.5 * ctx.big_M(which, nsq) - ctx.nonlinear_primitive_integral(vals)
    return GradientReport(Field(ctx.grid, g), math.sqrt(dual_sq), energy, kap, nsq,
                          ctx.grid.half_length, ctx.grid.n_points)


def directional_derivative(ctx: EnergyContext, u: ArrayLike, v: ArrayLike, which: str = "I") -> float:
    """<E'(u), v> computed from the strong form (no linear solve)."""
    vals = _vals(u)
    kap = ctx.kappa(which, ctx.norm_sq(vals))
    return float(ctx.dx * np.dot(_vals(v), kap * ctx.apply_A(vals) - ctx.nonlinear(vals)))


def weak_residual(ctx: EnergyContext, u: ArrayLike, which: str = "I") -> float:
    """Sup norm of kappa ((-Delta)^(1/2) u + V u) - n(u) on the grid."""
    vals = _vals(u)
    kap = ctx.kappa(which, ctx.norm_sq(vals))
    return float(np.max(np.abs(kap * ctx.apply_A(vals) - ctx.nonlinear(vals))))


def manufactured_context(grid: Grid1D, model: ModelSpec, target: ArrayLike) -> EnergyContext:
    """Context whose unique critical point is ``target``.

    The nonlinearity is replaced by the fixed forcing
    h~ = (-Delta)^(1/2) u + V u evaluated at the target, so the energy
    is convex and any descent should land on the target.
    """
    base = EnergyContext(grid, ModelSpec(model.potential, NonlinearitySpec("zero")))
    return EnergyContext(grid, base.model, source=base.apply_A(_vals(target)))


def lambda_1(ctx: EnergyContext, tol: float = 1e-13) -> Tuple[float, Field]:
    """Smallest eigenvalue of (-Delta)^(1/2) + V and a non-negative eigenfield.

    Lanczos (ARPACK) on the inverse operator, each application being a
    preconditioned CG solve.
    """
    n = ctx.grid.n_points
    inv = LinearOperator((n, n), matvec=ctx.solve_A, dtype=float)
    v0 = 1.0 / ctx._diag
    try:
        vals, vecs = eigsh(inv, k=1, which="LA", tol=tol, v0=v0, maxiter=2000)
    except Exception as exc:  # ARPACK no-convergence
        raise ConvergenceError(f"eigensolver stagnated: {exc}") from exc
    lam = 1.0 / float(vals[0])
    vec = vecs[:, 0]
    if vec.sum() < 0:
        vec = -vec
    vec = vec / math.sqrt(ctx.dx * float(np.dot(vec, vec)))
    res = float(np.linalg.norm(ctx.apply_A(vec) - lam * vec) / np.linalg.norm(lam * vec))
    if res > 1e-6:
        raise ConvergenceError(f"eigen-residual {res:.3e} too large", residual=res)
    if lam < ctx.model.potential.V0 * (1 - 1e-10):
        raise ConvergenceError(f"lambda_1 = {lam} below V0 = {ctx.model.potential.V0}")
    return lam, Field(ctx.grid, vec)
