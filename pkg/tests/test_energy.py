import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from halflap.energy import (EnergyContext, directional_derivative, energy_I, energy_J, gradient, lambda_1,
                            v_norm_sq, weak_residual)
from halflap.errors import DomainError
from halflap.grid_spectral import Field, Grid1D, frac_laplacian, integrate
from halflap.model import KirchhoffSpec, ModelSpec, NonlinearitySpec, PotentialSpec, catalog


def band_limited(grid, rng, n_modes=12, amp=0.4):
    x = grid.x
    u = np.zeros_like(x)
    for j in range(1, n_modes + 1):
        xi = math.pi * j / grid.L
        u += rng.normal() * np.cos(xi * x) + rng.normal() * np.sin(xi * x)
    u *= np.exp(-x**2 / 8)
    return Field(grid, amp * u / np.max(np.abs(u)))


def dense_A(ctx):
    n = ctx.grid.n_points
    return np.column_stack([ctx.apply_A(np.eye(n)[i]) for i in range(n)])


def test_norm_matches_direct_quadrature(small_grid, models):
    ctx = EnergyContext(small_grid, models["P-exp"])
    u = small_grid.sample(lambda x: np.exp(-x**2) * (1 + 0.3 * x))
    direct = integrate(frac_laplacian(u) * u) + integrate(ctx.V * u.values**2, small_grid)
    assert v_norm_sq(ctx, u) == pytest.approx(direct, rel=1e-12)
    assert ctx.seminorm_sq(u) == pytest.approx(integrate(frac_laplacian(u) * u), rel=1e-12)


def test_norm_of_rows(small_grid, models, rng):
    ctx = EnergyContext(small_grid, models["P-exp"])
    rows = rng.normal(size=(4, small_grid.n_points))
    np.testing.assert_allclose(ctx.norm_sq(rows), [ctx.norm_sq(r) for r in rows], rtol=1e-13)


def test_energy_at_zero_and_sign(small_grid, models):
    ctx = EnergyContext(small_grid, models["Q-exp"])
    z = small_grid.zeros()
    assert energy_I(ctx, z) == 0.0 and energy_J(ctx, z) == 0.0
    u = small_grid.sample(lambda x: 0.1 * np.exp(-x**2))
    assert energy_J(ctx, u) > energy_I(ctx, u) > 0


def _fd_check(ctx, which, rng, n_fields=20):
    worst = 0.0
    for _ in range(n_fields):
        u = band_limited(ctx.grid, rng)
        v = band_limited(ctx.grid, rng, amp=1.0)
        eps = 1e-5
        fd = (ctx.energy(u + eps * v, which) - ctx.energy(u - eps * v, which)) / (2 * eps)
        rep = gradient(ctx, u, which)
        exact = ctx.inner(rep.gradient, v)
        worst = max(worst, abs(fd - exact) / max(abs(exact), 1e-3))
    return worst


@pytest.mark.parametrize("which, name", [("I", "P-exp"), ("J", "Q-exp")])
def test_gradient_finite_difference(which, name, models, rng):
    ctx = EnergyContext(Grid1D(10.0, 256), models[name])
    assert _fd_check(ctx, which, rng) <= 1e-6


def test_gradient_agrees_with_strong_form(small_grid, models, rng):
    ctx = EnergyContext(small_grid, models["Q-exp"])
    u, v = band_limited(small_grid, rng), band_limited(small_grid, rng)
    rep = gradient(ctx, u, "J")
    assert ctx.inner(rep.gradient, v) == pytest.approx(directional_derivative(ctx, u, v, "J"), rel=1e-9)
    # Riesz isometry: ||E'(u)||^2 = <E'(u), g>
    assert rep.dual_norm**2 == pytest.approx(directional_derivative(ctx, u, rep.gradient, "J"), rel=1e-9)
    assert rep.kappa == pytest.approx(1.0 + rep.norm_sq)
    assert (rep.grid_L, rep.grid_N) == (small_grid.L, small_grid.N)


def test_manufactured_source_gives_zero_residual(small_grid, models):
    model = models["P-exp"]
    u = small_grid.sample(lambda x: 0.5 * np.exp(-x**2))
    base = EnergyContext(small_grid, model)
    src = base.apply_A(u) - model.nonlinearity(u.values)
    ctx = EnergyContext(small_grid, model, source=src)
    assert weak_residual(ctx, u) < 1e-12
    assert gradient(ctx, u).dual_norm < 1e-10


def test_solve_batch_matches_single(small_grid, models, rng):
    ctx = EnergyContext(small_grid, models["P-exp"])
    R = rng.normal(size=(5, small_grid.n_points))
    X = ctx.solve_A_batch(R)
    for r, x in zip(R, X):
        np.testing.assert_allclose(x, ctx.solve_A(r), atol=1e-10 * np.max(np.abs(x)))
        np.testing.assert_allclose(ctx.apply_A(x), r, atol=1e-9 * np.max(np.abs(r)))


def test_lambda1_against_dense_eigensolver(models):
    ctx = EnergyContext(Grid1D(10.0, 256), models["P-exp"])
    lam, vec = lambda_1(ctx)
    want = float(np.linalg.eigvalsh(0.5 * (dense_A(ctx) + dense_A(ctx).T))[0])
    assert lam == pytest.approx(want, rel=1e-9)
    assert lam >= ctx.model.potential.V0
    assert np.min(vec.values) > -1e-8 * np.max(vec.values)
    assert integrate(vec * vec) == pytest.approx(1.0)


def test_lambda1_constant_potential():
    model = ModelSpec(PotentialSpec("constant", V0=2.0), NonlinearitySpec())
    lam, vec = lambda_1(EnergyContext(Grid1D(5.0, 64), model))
    # the constant function is an exact eigenfunction, with eigenvalue V0
    assert lam == pytest.approx(2.0, rel=1e-10)
    np.testing.assert_allclose(vec.values, vec.values[0], rtol=1e-6)


def test_unknown_functional(small_grid, models):
    ctx = EnergyContext(small_grid, models["P-exp"])
    with pytest.raises(DomainError):
        ctx.energy(small_grid.zeros(), "K")


@settings(max_examples=15, deadline=None)
@given(c=st.floats(0.01, 0.5), m0=st.floats(0.5, 2.0))
def test_constant_m_scales_I(c, m0):
    g = Grid1D(10.0, 128)
    base = catalog()["Q-exp"]
    ctx = EnergyContext(g, base.with_kirchhoff(KirchhoffSpec(m0=m0, a=0.0)))
    u = g.sample(lambda x: c * np.exp(-x**2))
    nsq = ctx.norm_sq(u)
    assert energy_J(ctx, u) - energy_I(ctx, u) == pytest.approx(0.5 * (m0 - 1.0) * nsq, abs=1e-13)
