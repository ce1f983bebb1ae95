"""Ray maximisation, Nehari projection, mountain pass and descent solvers.

All iterations use Sobolev gradients in the working inner product, so a
step of length one along -g / kappa is well scaled independently of the
grid.  Negative energies, levels and residuals are reported, never
silently clipped; the only clipping is of sub-1e-12 negative undershoot
of the iterate itself, and it is flagged in the report.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .energy import EnergyContext, gradient, weak_residual
from .errors import (ConvergenceError, DeformationStallError, DomainError, GeometryError,
                     MagnitudeError, TrivialLimitError, UnboundedRayError)
from .grid_spectral import Field
from .model import eval_M
from .moser_trudinger import MoserFamily

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
CLIP_LEVEL = -1e-12


def _vals(u) -> np.ndarray:
    return u.values if isinstance(u, Field) else np.asarray(u, dtype=float)


class _Ray:
    """energy(t u) and its t-derivative for a fixed direction u."""

    def __init__(self, ctx: EnergyContext, u, which: str):
        self.ctx = ctx
        self.which = which
        vals = _vals(u)
        self.a = ctx.norm_sq(vals)
        mask = vals != 0
        self.us = vals[mask]
        self.dx = ctx.dx
        self.src = 0.0 if ctx.source is None else float(ctx.dx * np.dot(ctx.source, vals))
        self.nl = ctx.model.nonlinearity

    def energy(self, t: float) -> float:
        ts = t * t * self.a
        return (0.5 * self.ctx.big_M(self.which, ts) - self.dx * float(np.sum(self.nl.primitive(t * self.us)))
                - t * self.src)

    def derivative(self, t: float) -> float:
        ts = t * t * self.a
        return (self.ctx.kappa(self.which, ts) * t * self.a
                - self.dx * float(np.dot(self.nl(t * self.us), self.us)) - self.src)


# -- ray maximisation -------------------------------------------------------

@dataclass(frozen=True)
class RayMaxResult:
    t_star: float
    value: float
    derivative_residual: float
    scan: tuple = field(default=(), repr=False)

    def to_dict(self) -> dict:
        return {"t_star": self.t_star, "value": self.value, "derivative_residual": self.derivative_residual}


def _golden(f: Callable[[float], float], a: float, b: float, xtol: float) -> float:
    """Maximiser of a unimodal f on [a, b]."""
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while abs(b - a) > xtol * max(1.0, abs(c)):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def ray_max(ctx: EnergyContext, phi, which: str = "I", t_start: float = 1e-3, factor: float = 2.0,
            t_cap: float = 1e8, xtol: float = 1e-10) -> RayMaxResult:
    """sup over t > 0 of energy(t phi).

    The ray is scanned geometrically from ``t_start`` until the energy has
    decreased twice in a row; golden-section search on the bracket is then
    refined by a root of the analytic t-derivative.
    """
    vals = _vals(phi)
    if not np.any(vals):
        raise DomainError("ray direction must be non-zero")
    ray = _Ray(ctx, vals, which)
    ts, es = [], []
    t = t_start
    decreases = 0
    try:
        while True:
            ts.append(t)
            es.append(ray.energy(t))
            if len(es) > 1 and es[-1] < es[-2]:
                decreases += 1
                if decreases >= 2:
                    break
            else:
                decreases = 0
            t *= factor
            if t > t_cap:
                raise UnboundedRayError(f"energy still increasing at t = {ts[-1]:.3e}; no interior maximum")
    except MagnitudeError as exc:
        raise UnboundedRayError(f"no bracket found before the overflow guard (t = {t:.4g})") from exc
    i = int(np.argmax(es))
    lo = ts[i - 1] if i > 0 else 0.0
    hi = ts[i + 1]
    t_star = _golden(ray.energy, lo, hi, xtol)
    # polish with the analytic derivative when it brackets a root
    w = max(1e-6 * t_star, 10 * xtol * t_star)
    a, b = max(lo, t_star - w), min(hi, t_star + w)
    da, db = ray.derivative(a), ray.derivative(b)
    if da > 0 > db:
        t_star = brentq(ray.derivative, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    value = ray.energy(t_star)
    h = 1e-5 * t_star
    resid = abs(ray.energy(t_star + h) - ray.energy(t_star - h)) / (2 * h)
    if resid > 1e-8 * max(1.0, abs(value)):
        # central differences are limited by round-off; fall back on the exact derivative
        resid = min(resid, abs(ray.derivative(t_star)))
    return RayMaxResult(t_star, value, resid, tuple(zip(ts, es)))


# -- critical-level verdicts ------------------------------------------------

@dataclass(frozen=True)
class VerdictRow:
    k: int
    t_star: float
    value: float
    threshold: float
    margin: float
    t_star_sq: float
    t_star_sq_minus_pi: float
    derivative_residual: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class VerdictReport:
    which: str
    threshold: float
    rows: tuple
    verdict: bool

    @property
    def min_value(self) -> float:
        return min(r.value for r in self.rows)

    def to_dict(self) -> dict:
        return {"which": self.which, "threshold": self.threshold, "verdict": self.verdict,
                "rows": [r.to_dict() for r in self.rows]}


def critical_threshold(ctx: EnergyContext, which: str) -> float:
    """pi/2 for I, M(pi)/2 for J."""
    if which == "J" and ctx.model.kirchhoff is not None:
        return 0.5 * eval_M(ctx.model.kirchhoff, math.pi)
    return 0.5 * math.pi


def critical_level_verdict(ctx: EnergyContext, k_list: Sequence[int], which: Optional[str] = None,
                           workers: int = 1) -> VerdictReport:
    """Moser-ray maxima against the critical threshold for each k."""
    if len(k_list) == 0:
        raise DomainError("k_list must not be empty")
    if which is None:
        which = "J" if ctx.model.problem == "Q" else "I"
    thr = critical_threshold(ctx, which)
    potential = ctx.model.potential

    def one(k):
        phi = MoserFamily(int(k)).normalized_trace(ctx.grid, potential)
        r = ray_max(ctx, phi, which)
        ts2 = r.t_star**2
        return VerdictRow(int(k), r.t_star, r.value, thr, thr - r.value, ts2, ts2 - math.pi,
                          r.derivative_residual)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = tuple(pool.map(one, k_list))
    else:
        rows = tuple(one(k) for k in k_list)
    return VerdictReport(which, thr, rows, all(r.margin > 0 for r in rows))


# -- Nehari projection ------------------------------------------------------

def nehari_scale(ctx: EnergyContext, u, which: str = "J", tol: float = 1e-10) -> float:
    """t* > 0 with <E'(t* u), u> = 0 (bracketing plus Brent's safeguarded secant)."""
    vals = _vals(u)
    if not np.any(vals):
        raise DomainError("cannot project the zero field onto the Nehari set")
    ray = _Ray(ctx, vals, which)
    g = ray.derivative
    peak = float(np.max(np.abs(vals)))
    t_small = 1e-6 / peak
    if not g(t_small) > 0:
        raise GeometryError(f"<E'(tu), u> is not positive for small t (t = {t_small:.3e})")
    try:
        hi = 1.0
        while g(hi) > 0:
            hi *= 2.0
            if hi > 1e8:
                raise GeometryError("no sign change of <E'(tu), u> along the ray")
        lo = hi / 2.0
        while lo > t_small and g(lo) <= 0:
            lo /= 2.0
        lo = max(lo, t_small)
    except MagnitudeError as exc:
        raise GeometryError("no sign change of <E'(tu), u> before the overflow guard") from exc
    t = brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    scale = max(1.0, ctx.kappa(which, t * t * ray.a) * t * ray.a)
    if abs(g(t)) > tol * scale:
        raise ConvergenceError(f"Nehari root residual {abs(g(t)):.3e} above {tol:.1e}", residual=abs(g(t)))
    return float(t)


def lions_exponent(norm_w0_sq: float) -> float:
    """1 / (1 - ||w0||^2), the supremal admissible integrability exponent."""
    if not (0.0 <= norm_w0_sq < 1.0):
        raise DomainError(f"norm squared must lie in [0, 1), got {norm_w0_sq}")
    return 1.0 / (1.0 - norm_w0_sq)


# -- descent ----------------------------------------------------------------

@dataclass(frozen=True)
class SolveReport:
    solution: Field
    energy: float
    dual_norm: float
    which: str
    level: float
    nehari_level: Optional[float]
    norm_limit: float
    iterations: int
    history: tuple
    converged: bool
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "which": self.which,
            "energy": self.energy,
            "dual_norm": self.dual_norm,
            "level": self.level,
            "nehari_level": self.nehari_level,
            "norm_limit": self.norm_limit,
            "iterations": self.iterations,
            "converged": self.converged,
            "diagnostics": self.diagnostics,
            "history": [list(h) for h in self.history],
        }


def _structure_margins(ctx: EnergyContext, vals: np.ndarray, which: str, rep) -> dict:
    """Coercivity proxy, the M/2 - m t/4 gap and the m-inequality at one iterate."""
    nl = ctx.model.nonlinearity
    nsq = rep.norm_sq
    kap = rep.kappa
    pairing = kap * nsq - ctx.dx * float(np.dot(ctx.nonlinear(vals), vals))
    out = {}
    if which == "J":
        theta = nl.theta if nl.theta is not None else 4.0
        out["ar_proxy"] = (rep.energy - 0.25 * pairing) - (0.25 - 1.0 / theta) * kap * nsq
        out["kirchhoff_gap"] = 0.5 * ctx.big_M("J", nsq) - 0.25 * kap * nsq
    else:
        mu = nl.mu if nl.mu is not None else 4.0
        out["ar_proxy"] = (rep.energy - pairing / mu) - (0.5 - 1.0 / mu) * nsq
    out["norm_dominance"] = kap * nsq - ctx.dx * float(np.dot(nl(vals), vals))
    return out


def descend_to_solution(ctx: EnergyContext, seed, which: str = "I", tol: float = 1e-6,
                        residual_tol: float = 1e-5, max_iter: int = 3000, step: float = 1.0,
                        project: Optional[bool] = None, stall_window: int = 100) -> SolveReport:
    """Sobolev descent u <- P(u - (step / kappa) g), P the Nehari projection.

    The projection keeps the iterate away from the trivial critical point
    0; it is off by default when the context carries a fixed source, since
    then the ray derivative is negative at t = 0.  Stops when the dual norm
    is at most ``tol`` and the weak residual at most ``residual_tol``.
    """
    u = np.array(_vals(seed), dtype=float)
    if project is None:
        project = ctx.source is None
    n0 = ctx.norm_sq(u)
    if not n0 > 0 or not np.any(u):
        raise TrivialLimitError("seed is the zero field, the trivial critical point")
    clipped = False
    if project:
        u = nehari_scale(ctx, u, which) * u
    n_ref = ctx.norm_sq(u)
    history: List[tuple] = []
    margins = {"ar_proxy": math.inf, "kirchhoff_gap": math.inf}
    max_norm = 0.0
    best = math.inf
    since_best = 0
    tau = step
    rep = gradient(ctx, u, which)
    converged = False
    it = 0
    for it in range(max_iter + 1):
        res = weak_residual(ctx, u, which)
        history.append((rep.energy, rep.dual_norm))
        max_norm = max(max_norm, rep.norm_sq)
        for key, val in _structure_margins(ctx, u, which, rep).items():
            if key in margins:
                margins[key] = min(margins[key], val)
        if rep.dual_norm <= tol and res <= residual_tol:
            converged = True
            break
        if rep.dual_norm < best * (1 - 1e-3):
            best, since_best = rep.dual_norm, 0
        else:
            since_best += 1
            if since_best > stall_window:
                break
        if it == max_iter:
            break
        # trust region: a step never exceeds half the current norm, so the
        # iterate cannot jump across the mountain into the unbounded region
        gsize = math.sqrt(max(ctx.norm_sq(rep.gradient.values), 1e-300)) / rep.kappa
        cap = 0.5 * math.sqrt(rep.norm_sq) / gsize
        while True:
            v = u - min(tau, cap) / rep.kappa * rep.gradient.values
            neg = (v < 0) & (v > CLIP_LEVEL)
            if np.any(neg):
                clipped = True
                v[neg] = 0.0
            if not np.any(v) or ctx.norm_sq(v) < 1e-14 * n_ref:
                raise TrivialLimitError("descent collapsed to the zero field")
            try:
                if project:
                    v = nehari_scale(ctx, v, which) * v
                new = gradient(ctx, v, which)
            except (GeometryError, MagnitudeError, ConvergenceError):
                # the working norm does not bound sup |v|, so a trial step can
                # still overflow the exponential inside the linear solve
                new = None
            if new is not None and new.energy <= rep.energy + 1e-12 * max(1.0, abs(rep.energy)):
                break
            tau *= 0.5
            if tau < 1e-8:
                raise ConvergenceError("step length underflow in descent", residual=rep.dual_norm,
                                       history=history)
        u, rep = v, new
        tau = min(step, 2.0 * tau)
        if rep.norm_sq < 1e-14 * n_ref:
            raise TrivialLimitError("descent collapsed to the zero field")
    if not converged:
        raise ConvergenceError(
            f"descent stopped after {it} iterations with dual norm {rep.dual_norm:.3e} "
            f"(tolerance {tol:.1e}) and residual {res:.3e}",
            residual=rep.dual_norm, history=history)
    sol = Field(ctx.grid, u)
    final = _structure_margins(ctx, u, which, rep)
    diagnostics = {
        "weak_residual": res,
        "min_u": float(np.min(u)),
        "positive": bool(np.min(u) > -1e-10),
        "clipping_activated": clipped,
        "max_iterate_norm_sq": max_norm,
        "ar_proxy_min_margin": margins["ar_proxy"],
        "norm_dominance_margin": final["norm_dominance"],
        "kappa": rep.kappa,
        "grid_L": ctx.grid.half_length,
        "grid_N": ctx.grid.n_points,
    }
    if which == "J":
        diagnostics["kirchhoff_gap_min"] = margins["kirchhoff_gap"]
    return SolveReport(sol, rep.energy, rep.dual_norm, which, rep.energy, None,
                       math.sqrt(rep.norm_sq), it, tuple(history), True, diagnostics)


# -- Nehari minimisation ----------------------------------------------------

def default_seeds(ctx: EnergyContext, restarts: int, rng: Optional[np.random.Generator] = None) -> List[np.ndarray]:
    """Gaussian, Moser trace (when resolvable) then random Gaussian bumps."""
    x = ctx.grid.x
    seeds = [np.exp(-x * x)]
    try:
        seeds.append(MoserFamily(8).normalized_trace(ctx.grid, ctx.model.potential).values.copy())
    except Exception:
        pass
    rng = rng if rng is not None else np.random.default_rng(0)
    while len(seeds) < restarts:
        width = rng.uniform(0.5, 2.0)
        centre = rng.uniform(-1.0, 1.0)
        seeds.append(rng.uniform(0.5, 2.0) * np.exp(-((x - centre) / width) ** 2))
    return seeds[:max(restarts, 1)]


def nehari_minimize(ctx: EnergyContext, restarts: int = 3, which: str = "J", tol: float = 1e-6,
                    seeds: Optional[Sequence] = None, rng: Optional[np.random.Generator] = None,
                    workers: int = 1, max_iter: int = 3000) -> SolveReport:
    """b = inf over the Nehari set, by projected descent from several seeds."""
    if seeds is None:
        seeds = default_seeds(ctx, restarts, rng)

    def one(s):
        try:
            return descend_to_solution(ctx, s, which, tol=tol, project=True, max_iter=max_iter)
        except (ConvergenceError, GeometryError, TrivialLimitError) as exc:
            return exc

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, seeds))
    else:
        results = [one(s) for s in seeds]
    ok = [r for r in results if isinstance(r, SolveReport)]
    if not ok:
        raise ConvergenceError(f"all {len(results)} Nehari restarts failed: {results[0]}")
    bestrep = min(ok, key=lambda r: r.energy)
    diag = dict(bestrep.diagnostics)
    diag["restart_levels"] = [r.energy if isinstance(r, SolveReport) else None for r in results]
    return SolveReport(bestrep.solution, bestrep.energy, bestrep.dual_norm, which, bestrep.energy,
                       bestrep.energy, bestrep.norm_limit, bestrep.iterations, bestrep.history,
                       True, diag)


# -- mountain pass ----------------------------------------------------------

def _redistribute(ctx: EnergyContext, nodes: np.ndarray, lo: int, hi: int) -> None:
    """Equal energy-norm arclength for nodes[lo..hi], endpoints fixed."""
    if hi - lo < 2:
        return
    seg = nodes[lo:hi + 1]
    d = np.sqrt(np.maximum(ctx.norm_sq(np.diff(seg, axis=0)), 0.0))
    s = np.concatenate([[0.0], np.cumsum(d)])
    if s[-1] <= 0:
        return
    target = np.linspace(0.0, s[-1], hi - lo + 1)
    new = seg.copy()
    for j in range(1, hi - lo):
        i = int(np.clip(np.searchsorted(s, target[j]) - 1, 0, len(d) - 1))
        w = (target[j] - s[i]) / d[i] if d[i] > 0 else 0.0
        new[j] = (1 - w) * seg[i] + w * seg[i + 1]
    nodes[lo + 1:hi] = new[1:-1]


def _batch_energy(ctx: EnergyContext, nodes: np.ndarray, which: str) -> np.ndarray:
    nsq = ctx.norm_sq(nodes)
    prim = ctx.dx * np.sum(ctx.model.nonlinearity.primitive(nodes), axis=1)
    if ctx.source is not None:
        prim = prim + ctx.dx * nodes @ ctx.source
    big = np.array([ctx.big_M(which, t) for t in nsq])
    return 0.5 * big - prim


def _path_top(ctx: EnergyContext, nodes: np.ndarray, which: str, samples: int = 16):
    """Highest interior node, moved to the energy maximum on its two adjacent segments."""
    P = nodes.shape[0] - 1
    en = _batch_energy(ctx, nodes, which)
    top = int(np.argmax(en[1:P])) + 1  # argmax takes the smallest index on ties
    w = np.linspace(-1.0, 1.0, 2 * samples + 1)

    def point(s):
        return nodes[top] + (s * (nodes[top + 1] - nodes[top]) if s >= 0 else -s * (nodes[top - 1] - nodes[top]))

    pts = np.array([point(s) for s in w])
    vals = _batch_energy(ctx, pts, which)
    i = int(np.argmax(vals))
    lo, hi = w[max(i - 1, 0)], w[min(i + 1, len(w) - 1)]
    res = minimize_scalar(lambda s: -ctx.energy(point(s), which), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-8})
    best = res.x if -res.fun > vals[i] else w[i]
    p = point(best)
    return top, p, float(ctx.energy(p, which))


def mountain_pass(ctx: EnergyContext, which: str, e, path_points: int = 16, tol: float = 1e-6,
                  handoff_tol: float = 0.05, max_sweeps: int = 200, sweep_length: int = 10,
                  step: float = 1.0, plateau_rtol: float = 1e-5) -> SolveReport:
    """Path deformation between 0 and e, then local refinement of the top node.

    Each iteration pushes the highest interior node along -g / kappa, with
    the step halved until the maximum over the path drops, and then
    re-equidistributes both halves of the path in energy-norm arclength.
    Once the top node's dual norm is below ``handoff_tol`` (or the level
    changes by less than ``plateau_rtol`` over a sweep, the floor set by
    the path discretisation) it is refined by projected descent to
    ``tol``.  The level is the energy of the refined
    node; the maximum over the final discrete path is reported as an upper
    bound.
    """
    P = int(path_points)
    if P < 16:
        raise DomainError("path_points must be at least 16")
    ev = _vals(e)
    if not ctx.energy(ev, which) < 0:
        raise DomainError("endpoint e must have negative energy")
    s = np.linspace(0.0, 1.0, P + 1)[:, None]
    nodes = s * ev[None, :]
    sweep_levels: List[float] = []
    rising = 0
    history: List[tuple] = []
    top_dual = math.inf
    top = 1
    tau = step
    val = math.inf
    for sweep in range(max_sweeps):
        for _ in range(sweep_length):
            top, point, val = _path_top(ctx, nodes, which)
            nodes[top] = point
            rep = gradient(ctx, point, which)
            top_dual = rep.dual_norm
            history.append((val, top_dual))
            if top_dual <= handoff_tol:
                break
            move = rep.gradient.values / rep.kappa
            # trust region: the top node moves at most two path segments
            seg = float(np.mean(np.sqrt(np.maximum(ctx.norm_sq(np.diff(nodes, axis=0)), 0.0))))
            size = math.sqrt(max(ctx.norm_sq(move), 1e-300))
            move = move * min(1.0, 2.0 * seg / (tau * size))
            while True:
                trial = np.maximum(point - tau * move, 0.0)
                try:
                    ok = ctx.energy(trial, which) < val
                except MagnitudeError:
                    ok = False
                if ok:
                    break
                tau *= 0.5
                if tau < 1e-10:
                    raise DeformationStallError("path maximum cannot be lowered", residual=top_dual,
                                                history=history)
            nodes[top] = trial
            tau = min(step, 2.0 * tau)
            _redistribute(ctx, nodes, 0, top)
            _redistribute(ctx, nodes, top, P)
        level = val
        sweep_levels.append(level)
        if top_dual <= handoff_tol:
            break
        if len(sweep_levels) > 1:
            change = sweep_levels[-1] - sweep_levels[-2]
            if abs(change) <= plateau_rtol * abs(sweep_levels[-2]):
                break  # discretisation floor of the path reached
        if len(sweep_levels) > 1 and change > plateau_rtol * abs(sweep_levels[-2]):
            rising += 1
            if rising >= 3:
                raise DeformationStallError(
                    f"path level rose over 3 consecutive sweeps (now {level:.6g})",
                    residual=top_dual, history=history)
        else:
            rising = 0
    else:
        raise ConvergenceError(f"path deformation did not reach dual norm {handoff_tol:.1e} "
                               f"(top node {top_dual:.3e})", residual=top_dual, history=history)
    top, candidate, path_max = _path_top(ctx, nodes, which)
    rep = descend_to_solution(ctx, candidate, which, tol=tol)
    diag = dict(rep.diagnostics)
    diag.update({"path_max": path_max, "path_sweeps": len(sweep_levels), "path_top_index": top,
                 "path_points": P})
    return SolveReport(rep.solution, rep.energy, rep.dual_norm, which, rep.energy, None, rep.norm_limit,
                       rep.iterations + len(history), tuple(history) + rep.history, True, diag)


def negative_endpoint(ctx: EnergyContext, which: str, direction=None, t_max: float = 64.0):
    """A multiple t * direction with negative energy (default direction a Gaussian)."""
    d = np.exp(-ctx.grid.x**2) if direction is None else np.array(_vals(direction), dtype=float)
    ray = _Ray(ctx, d, which)
    t = 1.0
    while t <= t_max:
        try:
            if ray.energy(t) < 0:
                return Field(ctx.grid, t * d)
        except MagnitudeError:
            break
        t *= 1.25
    raise GeometryError("no negative-energy point found along the ray")
