"""Potentials, nonlinearities and Kirchhoff coefficients, plus validators.

Two nonlinearity regimes are supported:

* ``h`` mode: superlinear near zero, critical exponential growth at
  infinity, used by the non-Kirchhoff problem ``(-Delta)^(1/2) u + V u = h(u)``;
* ``f`` mode: behaves like ``t^3`` (or flatter) at zero, used together with a
  Kirchhoff coefficient ``m``.

Exponential nonlinearities refuse arguments with ``t^2 > 700`` instead of
returning ``inf``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional

import numpy as np
from scipy import integrate as _quadpack

from .errors import DomainError, MagnitudeError

OVERFLOW_T2 = 700.0

NONLINEARITY_KINDS = ("exp", "exp_beta", "power", "zero")
POTENTIAL_KINDS = ("constant", "polynomial")

# 10-point Gauss-Legendre rule on [0, 1], used panel-wise for vectorised primitives.
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(10)
_GL_NODES = 0.5 * (_GL_NODES + 1.0)
_GL_WEIGHTS = 0.5 * _GL_WEIGHTS
_PANEL = 1.0 / 32.0


@dataclass(frozen=True)
class PotentialSpec:
    """V(x) = V0 (constant) or |x|^p_V + V0 (polynomial)."""

    kind: str = "polynomial"
    V0: float = 1.0
    p_V: float = 2.0

    def __post_init__(self):
        if self.kind not in POTENTIAL_KINDS:
            raise DomainError(f"unknown potential kind {self.kind!r}")
        if not self.V0 > 0:
            raise DomainError("V0 must be positive")
        if self.kind == "polynomial" and not self.p_V > 0:
            raise DomainError("p_V must be positive")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "constant":
            return np.full_like(x, self.V0, dtype=float)
        return np.abs(x) ** self.p_V + self.V0


@dataclass(frozen=True)
class NonlinearitySpec:
    """Catalogue nonlinearity, named h in h-mode and f in f-mode.

    kinds:
        ``exp``       t^p e^{t^2}
        ``exp_beta``  t^p (e^{t^beta} - 1) e^{t^2}
        ``power``     coeff * t^p (synthetic, used by manufactured tests)
        ``zero``      identically zero
    All kinds vanish for t <= 0.

    ``mu`` is the Ambrosetti-Rabinowitz exponent (h-mode) and ``theta`` the
    monotonicity exponent of f(t)/t^theta (f-mode).  ``M_h`` and ``K0`` are
    the constants in H <= M_h h and F <= K0 f for t >= t0; ``None`` lets the
    validator determine them empirically.
    """

    kind: str = "exp"
    p: float = 3.0
    beta: Optional[float] = None
    mode: str = "h"
    mu: Optional[float] = None
    theta: Optional[float] = None
    t0: float = 1.0
    M_h: Optional[float] = None
    K0: Optional[float] = None
    coeff: float = 1.0

    def __post_init__(self):
        if self.kind not in NONLINEARITY_KINDS:
            raise DomainError(f"unknown nonlinearity kind {self.kind!r}")
        if self.mode not in ("h", "f"):
            raise DomainError("mode must be 'h' or 'f'")
        if self.kind != "zero" and not self.p > 1:
            raise DomainError("power p must exceed 1")
        if self.kind == "exp_beta" and not (self.beta is not None and 0 < self.beta < 2):
            raise DomainError("beta must lie in (0, 2) for the exp_beta kind")
        if self.mu is None and self.mode == "h":
            object.__setattr__(self, "mu", self.p + 1.0)
        if self.theta is None and self.mode == "f":
            object.__setattr__(self, "theta", self.p)

    @property
    def exponential(self) -> bool:
        return self.kind in ("exp", "exp_beta")

    def _guard(self, t):
        if self.exponential:
            tmax = float(np.max(np.abs(t))) if np.size(t) else 0.0
            if tmax * tmax > OVERFLOW_T2:
                raise MagnitudeError(
                    f"nonlinearity argument t = {tmax:.6g} exceeds the overflow guard t^2 <= {OVERFLOW_T2}",
                    value=tmax,
                )

    def __call__(self, t):
        """Vectorised h(t)."""
        t = np.asarray(t, dtype=float)
        self._guard(t)
        tp = np.maximum(t, 0.0)
        if self.kind == "zero":
            return np.zeros_like(tp)
        if self.kind == "power":
            return self.coeff * tp**self.p
        with np.errstate(over="ignore"):
            base = tp**self.p * np.exp(tp * tp)
            if self.kind == "exp_beta":
                base = base * np.expm1(tp**self.beta)
        if not np.all(np.isfinite(base)):
            raise MagnitudeError("nonlinearity overflowed below the guard", value=float(np.max(tp)))
        return base

    def derivative(self, t):
        """Vectorised h'(t) (closed form)."""
        t = np.asarray(t, dtype=float)
        self._guard(t)
        tp = np.maximum(t, 0.0)
        if self.kind == "zero":
            return np.zeros_like(tp)
        if self.kind == "power":
            return self.coeff * self.p * tp ** (self.p - 1)
        e2 = np.exp(tp * tp)
        if self.kind == "exp":
            return (self.p * tp ** (self.p - 1) + 2.0 * tp ** (self.p + 1)) * e2
        g = np.expm1(tp**self.beta)
        dg = self.beta * tp ** (self.beta - 1) * np.exp(tp**self.beta)
        return (self.p * tp ** (self.p - 1) * g + tp**self.p * dg + 2.0 * tp ** (self.p + 1) * g) * e2

    def primitive(self, t):
        """Vectorised H(t) = int_0^t h, by panel Gauss-Legendre quadrature.

        Closed forms are used where they exist (``power``, ``zero``); otherwise
        each value is built from whole panels of width 1/32 plus a partial
        panel, which is accurate to a few ulps for the catalogue kinds.
        """
        t = np.asarray(t, dtype=float)
        self._guard(t)
        tp = np.maximum(t, 0.0)
        if self.kind == "zero":
            return np.zeros_like(tp)
        if self.kind == "power":
            return self.coeff * tp ** (self.p + 1) / (self.p + 1)
        flat = tp.reshape(-1)
        out = np.zeros_like(flat)
        pos = flat > 0
        if not np.any(pos):
            return out.reshape(tp.shape)
        tv = flat[pos]
        n_full = np.floor(tv / _PANEL).astype(int)
        top = int(n_full.max()) + 1
        left = _PANEL * np.arange(top)
        nodes = left[:, None] + _PANEL * _GL_NODES[None, :]
        panel_vals = _PANEL * (self(nodes) @ _GL_WEIGHTS)
        cum = np.concatenate([[0.0], np.cumsum(panel_vals)])
        base = cum[n_full]
        start = n_full * _PANEL
        width = tv - start
        part_nodes = start[:, None] + width[:, None] * _GL_NODES[None, :]
        partial = width * (self(part_nodes) @ _GL_WEIGHTS)
        out[pos] = base + partial
        return out.reshape(tp.shape)


def eval_h(spec: NonlinearitySpec, t: float) -> float:
    return float(spec(t))


def eval_H(spec: NonlinearitySpec, t: float) -> float:
    """H(t) by adaptive quadrature of h on [0, t]; zero for t <= 0."""
    spec._guard(np.asarray(t))
    if t <= 0:
        return 0.0
    val, _ = _quadpack.quad(lambda s: float(spec(s)), 0.0, t, epsabs=0.0, epsrel=1e-13, limit=200)
    return val


@dataclass(frozen=True)
class KirchhoffSpec:
    """m(t) = m0 + a t, with growth bound m(t) <= a1 + a2 t^sigma."""

    m0: float = 1.0
    a: float = 0.0
    a1: Optional[float] = None
    a2: Optional[float] = None
    sigma: float = 1.0

    def __post_init__(self):
        if not self.m0 > 0:
            raise DomainError("m0 must be positive")
        if self.a < 0:
            raise DomainError("slope a must be non-negative")
        if self.a1 is None:
            object.__setattr__(self, "a1", self.m0)
        if self.a2 is None:
            object.__setattr__(self, "a2", max(self.a, 1e-12))

    def m(self, t):
        return self.m0 + self.a * np.asarray(t, dtype=float)

    def M(self, t):
        t = np.asarray(t, dtype=float)
        return self.m0 * t + 0.5 * self.a * t * t


def eval_m(spec: KirchhoffSpec, t: float) -> float:
    if t < 0:
        raise DomainError(f"Kirchhoff argument must be non-negative, got {t}")
    return float(spec.m(t))


def eval_M(spec: KirchhoffSpec, t: float) -> float:
    if t < 0:
        raise DomainError(f"Kirchhoff argument must be non-negative, got {t}")
    return float(spec.M(t))


@dataclass(frozen=True)
class ModelSpec:
    potential: PotentialSpec = field(default_factory=PotentialSpec)
    nonlinearity: NonlinearitySpec = field(default_factory=NonlinearitySpec)
    kirchhoff: Optional[KirchhoffSpec] = None

    @property
    def problem(self) -> str:
        """'Q' for Kirchhoff models, 'P' otherwise."""
        return "Q" if self.kirchhoff is not None else "P"

    def with_kirchhoff(self, kirchhoff: Optional[KirchhoffSpec]) -> "ModelSpec":
        return replace(self, kirchhoff=kirchhoff)


# ---------------------------------------------------------------------------
# catalogue
# ---------------------------------------------------------------------------

def catalog() -> Dict[str, ModelSpec]:
    """Shipped models; each passes every condition it claims."""
    quad_V = PotentialSpec("polynomial", V0=1.0, p_V=2.0)
    return {
        "P-exp": ModelSpec(quad_V, NonlinearitySpec("exp", p=3.0, mode="h", mu=4.0)),
        "P-exp-beta": ModelSpec(quad_V, NonlinearitySpec("exp_beta", p=3.0, beta=1.0, mode="h", mu=4.0)),
        "P-exp-constV": ModelSpec(
            PotentialSpec("constant", V0=1.0), NonlinearitySpec("exp", p=2.0, mode="h", mu=3.0)
        ),
        "Q-exp": ModelSpec(quad_V, NonlinearitySpec("exp", p=4.0, mode="f", theta=4.0), KirchhoffSpec(1.0, 1.0)),
        "Q-exp-constm": ModelSpec(
            quad_V, NonlinearitySpec("exp", p=4.0, mode="f", theta=4.0), KirchhoffSpec(1.0, 0.0)
        ),
    }


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

@dataclass
class ConditionResult:
    name: str
    passed: bool
    worst_margin: float
    location: Optional[float]
    note: str = ""

    def to_dict(self):
        return {
            "name": self.name,
            "passed": bool(self.passed),
            "worst_margin": float(self.worst_margin),
            "location": None if self.location is None else float(self.location),
            "note": self.note,
        }


@dataclass
class ValidationReport:
    conditions: List[ConditionResult]
    constants: Dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions)

    def __getitem__(self, name) -> ConditionResult:
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    def names(self):
        return [c.name for c in self.conditions]

    def to_dict(self):
        return {
            "passed": self.passed,
            "conditions": [c.to_dict() for c in self.conditions],
            "constants": {k: float(v) for k, v in self.constants.items()},
        }


def default_t_grid(t_max: float = 12.0, t_min: float = 1e-3, n: int = 400) -> np.ndarray:
    return np.geomspace(t_min, t_max, n)


def _check(name, margins, locations, note="", strict=False) -> ConditionResult:
    """Pass when every margin is >= 0 (> 0 if strict); report the worst one."""
    margins = np.asarray(margins, dtype=float)
    locations = np.asarray(locations, dtype=float)
    i = int(np.argmin(margins))
    ok = bool(margins[i] > 0) if strict else bool(margins[i] >= 0)
    return ConditionResult(name, ok, float(margins[i]), float(locations[i]), note)


def _rel_increments(values):
    """Relative successive increments (v[i+1] - v[i]) / |v[i+1]|, safe at zero."""
    v = np.asarray(values, dtype=float)
    scale = np.maximum(np.abs(v[1:]), 1e-300)
    return (v[1:] - v[:-1]) / scale


def _top_decade(t):
    return t >= t[-1] / 10.0


def _validate_potential(pot: PotentialSpec, x_max: float) -> List[ConditionResult]:
    xs = np.linspace(-x_max, x_max, 2001)
    V = pot(xs)
    out = [_check("V:lower_bound", V - pot.V0, xs, "V(x) >= V0 > 0 on samples")]
    out[0].passed = out[0].passed and pot.V0 > 0
    if pot.kind == "polynomial":
        xr = xs[xs >= 0]
        out.append(
            _check("V:coercive", np.diff(pot(xr)), xr[1:], "V increases towards the domain ends", strict=True)
        )
    return out


def _tol_margin(lhs, rhs):
    # a few ulps of slack so identities hold as >= 0 in floating point
    return rhs - lhs + 1e-13 * np.maximum(np.abs(lhs), np.abs(rhs))


def _validate_h(nl: NonlinearitySpec, t: np.ndarray, lambda1: float) -> (List[ConditionResult], Dict):
    h = nl(t)
    H = nl.primitive(t)
    consts = {}
    res = []
    neg = -t[::-1]
    eps = 0.1
    top = t >= 0.75 * t[-1]
    growth = h[top] * np.exp(-(1.0 + eps) * t[top] ** 2)
    h1 = _check("h1:sign", np.concatenate([-np.abs(nl(neg)), h]), np.concatenate([neg, t]),
                "h = 0 for t <= 0 and h > 0 for t > 0")
    h1.passed = h1.passed and bool(np.all(nl(neg) == 0)) and bool(np.all(h > 0))
    res.append(h1)
    res.append(_check("h1:subcritical", -np.diff(growth), t[top][1:],
                      "h(t) exp(-(1+eps) t^2) decreasing on the top quarter of the grid, eps = 0.1"))
    mu = nl.mu
    r = _check("h2:AR", _tol_margin(mu * H, t * h), t, f"0 <= mu H(t) <= t h(t), mu = {mu}")
    r.passed = r.passed and mu > 2 and bool(np.all(H >= 0))
    res.append(r)
    sel = t >= nl.t0
    ratio = H[sel] / h[sel]
    M_h = nl.M_h if nl.M_h is not None else 1.1 * float(np.max(ratio))
    consts["M_h"] = M_h
    res.append(_check("h3:H_le_Mh", M_h * h[sel] - H[sel], t[sel], f"H <= M_h h on [t0, T], M_h = {M_h:.6g}"))
    dec = _top_decade(t)
    g4 = t[dec] * h[dec] * np.exp(-t[dec] ** 2)
    res.append(_check("h4:growth", _rel_increments(g4), t[dec][1:],
                      "t h(t) exp(-t^2) increasing on the top decade (finite-grid proxy for the limit)", strict=True))
    low = t <= 10.0 * t[0]
    q = 2.0 * H[low] / t[low] ** 2
    consts["lambda1_bound"] = lambda1
    res.append(_check("h5:small", lambda1 - q, t[low], f"2H(u)/u^2 < lambda1 = {lambda1:.6g} on the bottom decade",
                      strict=True))
    return res, consts


def _validate_f(nl: NonlinearitySpec, t: np.ndarray) -> (List[ConditionResult], Dict):
    f = nl(t)
    F = nl.primitive(t)
    consts = {}
    res = []
    neg = -t[::-1]
    r = _check("f1:sign", np.concatenate([-np.abs(nl(neg)), f]), np.concatenate([neg, t]),
               "f = 0 for t <= 0 and f > 0 for t > 0")
    r.passed = r.passed and bool(np.all(nl(neg) == 0)) and bool(np.all(f > 0))
    res.append(r)
    low = t <= 10.0 * t[0]
    q3 = f[low] / t[low] ** 3
    shrink = 0.5 * q3[-1] - q3[0]
    res.append(_check("f1:cubic_at_zero", np.concatenate([np.diff(q3), [shrink]]),
                      np.concatenate([t[low][1:], [t[0]]]),
                      "f(t)/t^3 increasing on the bottom decade and at least halving across it"))
    theta = nl.theta
    ratio = f / t**theta
    r = _check("f1:theta_monotone", _rel_increments(ratio), t[1:], f"f(t)/t^theta increasing, theta = {theta}")
    r.passed = r.passed and theta > 3
    res.append(r)
    sel = t >= nl.t0
    K0 = nl.K0 if nl.K0 is not None else 1.1 * float(np.max(F[sel] / f[sel]))
    consts["K0"] = K0
    res.append(_check("f2:F_le_K0f", K0 * f[sel] - F[sel], t[sel], f"F <= K0 f on [t0, T], K0 = {K0:.6g}"))
    dec = _top_decade(t)
    g3 = t[dec] * f[dec] * np.exp(-t[dec] ** 2)
    res.append(_check("f3:growth", _rel_increments(g3), t[dec][1:],
                      "t f(t) exp(-t^2) increasing on the top decade", strict=True))
    s4 = t * f - 4.0 * F
    scale = np.maximum(np.abs(t * f), 1e-300)
    res.append(_check("growth:sf_minus_4F", np.concatenate([np.diff(s4) / scale[1:], s4 / scale + 1e-13]),
                      np.concatenate([t[1:], t]), "s f(s) - 4 F(s) increasing and non-negative"))
    return res, consts


def _validate_m(km: KirchhoffSpec, t: np.ndarray) -> List[ConditionResult]:
    res = []
    m = km.m(t)
    r = _check("m1:lower_bound", m - km.m0, t, "m(t) >= m0")
    r.passed = r.passed and km.m0 > 0
    res.append(r)
    tt, ss = np.meshgrid(t[::8], t[::8])
    sup = km.M(tt + ss) - km.M(tt) - km.M(ss)
    scale = np.maximum(km.M(tt + ss), 1e-300)
    res.append(_check("m1:superadditive", (sup / scale + 1e-13).ravel(), tt.ravel(), "M(t+s) >= M(t) + M(s)"))
    sel = t >= 1.0
    bound = km.a1 + km.a2 * t[sel] ** km.sigma
    res.append(_check("m2:growth_bound", _tol_margin(m[sel], bound), t[sel],
                      f"m(t) <= a1 + a2 t^sigma, (a1, a2, sigma) = ({km.a1}, {km.a2}, {km.sigma})"))
    mt = m / t
    res.append(_check("m3:m_over_t_decreasing", -np.diff(mt), t[1:], "m(t)/t strictly decreasing", strict=True))
    q = 0.5 * km.M(t) - 0.25 * m * t
    res.append(_check("kirchhoff:half_M_minus_quarter_mt", q + 1e-13 * np.abs(km.M(t)), t, "M(t)/2 - m(t) t / 4 >= 0"))
    return res


def validate_assumptions(
    model: ModelSpec, t_grid: np.ndarray = None, x_max: float = 40.0, lambda1: float = None
) -> ValidationReport:
    """Check the structural assumptions claimed by ``model`` on finite grids.

    Limits are verified as monotonicity or smallness statements on the ends
    of ``t_grid`` (log-spaced on [1e-3, 12] by default); failures are
    reported, never raised.  ``lambda1`` defaults to the lower bound V0.
    """
    t = default_t_grid() if t_grid is None else np.sort(np.asarray(t_grid, dtype=float))
    if np.any(t <= 0):
        raise DomainError("t_grid must be strictly positive")
    if lambda1 is None:
        lambda1 = model.potential.V0
    conds = _validate_potential(model.potential, x_max)
    consts: Dict[str, float] = {}
    nl = model.nonlinearity
    if nl.kind == "zero":
        conds.append(ConditionResult("nonlinearity:nonzero", False, 0.0, None, "zero nonlinearity is synthetic"))
    elif nl.mode == "h":
        c, k = _validate_h(nl, t, lambda1)
        conds += c
        consts.update(k)
    else:
        c, k = _validate_f(nl, t)
        conds += c
        consts.update(k)
    if model.kirchhoff is not None:
        conds += _validate_m(model.kirchhoff, t)
    return ValidationReport(conds, consts)
