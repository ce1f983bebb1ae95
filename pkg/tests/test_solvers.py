import math

import numpy as np
import pytest

from halflap.energy import EnergyContext, gradient, manufactured_context
from halflap.errors import (ConvergenceError, DomainError, GeometryError, TrivialLimitError,
                            UnboundedRayError)
from halflap.grid_spectral import Field, Grid1D, integrate
from halflap.model import KirchhoffSpec, ModelSpec, NonlinearitySpec, PotentialSpec, catalog
from halflap.moser_trudinger import MoserFamily
from halflap.solvers import (_Ray, critical_level_verdict, critical_threshold, default_seeds,
                             descend_to_solution, lions_exponent, mountain_pass, negative_endpoint,
                             nehari_minimize, nehari_scale, ray_max)

GRID = Grid1D(20.0, 1024)
QUAD_V = PotentialSpec("polynomial", 1.0, 2.0)


def power_model(coeff, p=3.0, kirchhoff=None):
    return ModelSpec(QUAD_V, NonlinearitySpec("power", p=p, coeff=coeff, mode="h", mu=p + 1), kirchhoff)


def scaled_gaussian(ctx, target_norm_sq):
    u = np.exp(-ctx.grid.x ** 2)
    return Field(ctx.grid, u * math.sqrt(target_norm_sq / ctx.norm_sq(u)))


# -- rays -------------------------------------------------------------------

def test_ray_without_nonlinearity_is_unbounded():
    ctx = EnergyContext(GRID, ModelSpec(QUAD_V, NonlinearitySpec("zero")))
    with pytest.raises(UnboundedRayError):
        ray_max(ctx, GRID.sample(lambda x: np.exp(-x**2)))


def test_ray_synthetic_quartic():
    # energy(t phi) = t^2 - t^4 / 2  when ||phi||^2 = 2 and coeff * int phi^4 = 2
    probe = EnergyContext(GRID, power_model(1.0))
    phi = scaled_gaussian(probe, 2.0)
    coeff = 2.0 / integrate(phi.values**4, GRID)
    ctx = EnergyContext(GRID, power_model(coeff))
    r = ray_max(ctx, phi)
    assert r.t_star == pytest.approx(1.0, abs=1e-9)
    assert r.value == pytest.approx(0.5, abs=1e-12)
    assert r.derivative_residual <= 1e-8


def test_ray_zero_direction():
    ctx = EnergyContext(GRID, catalog()["P-exp"])
    with pytest.raises(DomainError):
        ray_max(ctx, GRID.zeros())


def test_moser_ray_below_threshold():
    grid = Grid1D(8.0, 65536)
    model = catalog()["P-exp"]
    ctx = EnergyContext(grid, model)
    r = ray_max(ctx, MoserFamily(64).normalized_trace(grid, model.potential))
    assert r.value < math.pi / 2
    assert r.derivative_residual <= 1e-8 * max(1.0, r.value)


def test_thresholds():
    models = catalog()
    ctx_q = EnergyContext(GRID, models["Q-exp"])
    assert critical_threshold(ctx_q, "J") == pytest.approx((math.pi + math.pi**2 / 2) / 2, rel=1e-15)
    assert critical_threshold(ctx_q, "J") == pytest.approx(4.038197427067236, rel=1e-14)
    ctx_c = EnergyContext(GRID, models["Q-exp-constm"])
    assert critical_threshold(ctx_c, "J") == pytest.approx(math.pi / 2, rel=1e-15)
    assert critical_threshold(ctx_c, "I") == math.pi / 2


def test_verdict_reduction_constant_m():
    grid = Grid1D(8.0, 8192)
    models = catalog()
    f = models["Q-exp-constm"].nonlinearity
    ctx_q = EnergyContext(grid, models["Q-exp-constm"])
    ctx_p = EnergyContext(grid, ModelSpec(QUAD_V, f))
    vq = critical_level_verdict(ctx_q, [8, 64])
    vp = critical_level_verdict(ctx_p, [8, 64], which="I")
    assert vq.which == "J" and vp.which == "I"
    for a, b in zip(vq.rows, vp.rows):
        assert a.value == pytest.approx(b.value, rel=1e-12)
        assert a.margin == pytest.approx(b.margin, rel=1e-12)
    assert vq.verdict == vp.verdict


def test_verdict_errors():
    ctx = EnergyContext(Grid1D(8.0, 4096), catalog()["P-exp"])
    with pytest.raises(DomainError):
        critical_level_verdict(ctx, [])
    with pytest.raises(Exception) as exc:
        critical_level_verdict(ctx, [8, 4096])
    assert "resolve" in str(exc.value)


def test_threaded_verdict_matches_serial():
    ctx = EnergyContext(Grid1D(8.0, 16384), catalog()["P-exp"])
    a = critical_level_verdict(ctx, [8, 64, 256])
    b = critical_level_verdict(ctx, [8, 64, 256], workers=3)
    assert a.to_dict() == b.to_dict()


def test_single_sign_change_along_rays():
    rng = np.random.default_rng(7)
    for name, which in (("P-exp", "I"), ("Q-exp", "J")):
        ctx = EnergyContext(GRID, catalog()[name])
        for u in default_seeds(ctx, 5, rng):
            ray = _Ray(ctx, u, which)
            # stay where t^3 e^(t^2) is still a finite double
            t_max = math.sqrt(680.0) / np.max(np.abs(u))
            ts = np.geomspace(1e-4, t_max, 400)
            signs = np.sign([ray.derivative(t) for t in ts])
            assert signs[0] > 0
            assert np.count_nonzero(np.diff(signs)) == 1


# -- Nehari -----------------------------------------------------------------

def test_nehari_scale_synthetic():
    # <I'(tu), u> = t - t^3  when ||u||^2 = 1 and coeff * int u^4 = 1
    probe = EnergyContext(GRID, power_model(1.0))
    u = scaled_gaussian(probe, 1.0)
    coeff = 1.0 / integrate(u.values**4, GRID)
    ctx = EnergyContext(GRID, power_model(coeff))
    assert nehari_scale(ctx, u, "I") == pytest.approx(1.0, abs=1e-12)


def test_nehari_scale_identities():
    ctx = EnergyContext(GRID, catalog()["Q-exp"])
    u = GRID.sample(lambda x: np.exp(-x**2))
    t = nehari_scale(ctx, u)
    assert nehari_scale(ctx, t * u) == pytest.approx(1.0, abs=1e-8)
    for c in (0.25, 3.0):
        assert nehari_scale(ctx, c * u) == pytest.approx(t / c, rel=1e-10)
    # the root is accurate in g-value
    assert abs(_Ray(ctx, u, "J").derivative(t)) <= 1e-10 * max(1.0, t)


def test_nehari_sign_failure():
    model = catalog()["P-exp"]
    src = 5.0 * np.exp(-GRID.x**2)
    ctx = EnergyContext(GRID, model, source=src)
    with pytest.raises(GeometryError):
        nehari_scale(ctx, GRID.sample(lambda x: np.exp(-x**2)), "I")
    with pytest.raises(DomainError):
        nehari_scale(EnergyContext(GRID, model), GRID.zeros())


def test_nehari_restarts_agree():
    # fine enough for the Moser k = 8 seed to be resolvable
    ctx = EnergyContext(Grid1D(20.0, 4096), catalog()["Q-exp"])
    seeds = default_seeds(ctx, 2)
    x = ctx.grid.x
    # both seeds are centred on the origin but shaped differently
    assert abs(x[np.argmax(seeds[0])]) < 0.1 and abs(x[np.argmax(seeds[1])]) < 0.2
    assert not np.allclose(seeds[0] / seeds[0].max(), seeds[1] / seeds[1].max())
    a = descend_to_solution(ctx, seeds[0], "J")
    b = descend_to_solution(ctx, seeds[1], "J")
    assert a.energy == pytest.approx(b.energy, rel=1e-4)
    rep = nehari_minimize(ctx, restarts=2)
    assert rep.nehari_level == pytest.approx(min(a.energy, b.energy), rel=1e-10)


def test_nehari_reduction_constant_m():
    models = catalog()
    ctx_q = EnergyContext(GRID, models["Q-exp-constm"])
    ctx_p = EnergyContext(GRID, ModelSpec(QUAD_V, models["Q-exp-constm"].nonlinearity))
    bj = nehari_minimize(ctx_q, restarts=1, which="J").nehari_level
    bi = nehari_minimize(ctx_p, restarts=1, which="I").nehari_level
    assert bj == pytest.approx(bi, rel=1e-8)


def test_nehari_all_restarts_fail():
    ctx = EnergyContext(GRID, catalog()["Q-exp"])
    with pytest.raises(ConvergenceError):
        nehari_minimize(ctx, restarts=2, tol=1e-30, max_iter=5)


# -- descent ----------------------------------------------------------------

def test_descent_from_zero_seed():
    ctx = EnergyContext(GRID, catalog()["P-exp"])
    with pytest.raises(TrivialLimitError):
        descend_to_solution(ctx, GRID.zeros())


def test_manufactured_recovery():
    target = GRID.sample(lambda x: 0.5 * np.exp(-x**2))
    ctx = manufactured_context(GRID, catalog()["P-exp"], target)
    rep = descend_to_solution(ctx, GRID.sample(lambda x: 0.8 * np.exp(-(x / 1.3) ** 2)), "I", tol=1e-10)
    assert np.max(np.abs(rep.solution.values - target.values)) <= 1e-6


def test_catalog_solution_properties(ctx_p):
    rep = descend_to_solution(ctx_p, ctx_p.grid.sample(lambda x: np.exp(-x**2)), "I")
    u = rep.solution.values
    x = ctx_p.grid.x
    assert rep.dual_norm <= 1e-6
    assert rep.diagnostics["weak_residual"] <= 1e-5
    assert rep.diagnostics["min_u"] > -1e-10
    # even symmetry about 0 (x -> -x maps index i to N - i) and decay
    np.testing.assert_allclose(u[1:], u[1:][::-1], atol=1e-7)
    assert u[np.argmin(np.abs(x))] == pytest.approx(u.max())
    assert u[np.argmin(np.abs(x - 6))] < 1e-3 * u.max()
    assert rep.diagnostics["ar_proxy_min_margin"] >= -1e-6
    assert rep.history[-1][1] == rep.dual_norm


def test_kirchhoff_solution_diagnostics(ctx_q):
    rep = descend_to_solution(ctx_q, ctx_q.grid.sample(lambda x: np.exp(-x**2)), "J")
    d = rep.diagnostics
    assert d["norm_dominance_margin"] >= -1e-6
    assert d["kirchhoff_gap_min"] >= -1e-12
    assert d["ar_proxy_min_margin"] >= -1e-6
    assert d["kappa"] == pytest.approx(1.0 + rep.norm_limit**2)


def test_unreachable_tolerance_keeps_history(ctx_p):
    with pytest.raises(ConvergenceError) as exc:
        descend_to_solution(ctx_p, ctx_p.grid.sample(lambda x: np.exp(-x**2)), "I", tol=1e-30,
                            max_iter=50)
    assert len(exc.value.history) > 10


# -- mountain pass ----------------------------------------------------------

def test_mountain_pass_preconditions():
    ctx = EnergyContext(GRID, catalog()["P-exp"])
    e = negative_endpoint(ctx, "I")
    with pytest.raises(DomainError):
        mountain_pass(ctx, "I", e, path_points=8)
    with pytest.raises(DomainError):
        mountain_pass(ctx, "I", 0.01 * e)


def test_mountain_pass_reduction_constant_m():
    models = catalog()
    ctx_q = EnergyContext(GRID, models["Q-exp-constm"])
    ctx_p = EnergyContext(GRID, ModelSpec(QUAD_V, models["Q-exp-constm"].nonlinearity))
    cj = mountain_pass(ctx_q, "J", negative_endpoint(ctx_q, "J")).level
    ci = mountain_pass(ctx_p, "I", negative_endpoint(ctx_p, "I")).level
    assert cj == pytest.approx(ci, abs=1e-6)


def test_mountain_pass_level_bounds():
    ctx = EnergyContext(GRID, catalog()["P-exp"])
    rep = mountain_pass(ctx, "I", negative_endpoint(ctx, "I"))
    assert rep.level < math.pi / 2
    assert rep.level <= rep.diagnostics["path_max"] + 1e-12
    # no ray through a seed direction dips below the computed level
    for u in default_seeds(ctx, 4):
        assert ray_max(ctx, u).value >= rep.level - 1e-8
    assert gradient(ctx, rep.solution).dual_norm <= 1e-6


# -- Lions exponent ---------------------------------------------------------

@pytest.mark.parametrize("x, want", [(0.0, 1.0), (0.5, 2.0), (0.75, 4.0)])
def test_lions_exponent(x, want):
    assert lions_exponent(x) == want


@pytest.mark.parametrize("x", [1.0, 1.5, -0.1])
def test_lions_exponent_domain(x):
    with pytest.raises(DomainError):
        lions_exponent(x)
