import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from halflap.errors import DomainError, MagnitudeError
from halflap.model import (KirchhoffSpec, ModelSpec, NonlinearitySpec, PotentialSpec, catalog, eval_H, eval_M,
                           eval_h, eval_m, validate_assumptions)


def test_potential_values():
    V = PotentialSpec("polynomial", V0=1.0, p_V=2.0)
    np.testing.assert_allclose(V(np.array([-2.0, 0.0, 3.0])), [5.0, 1.0, 10.0])
    assert PotentialSpec("constant", V0=2.5)(np.array([7.0]))[0] == 2.5
    with pytest.raises(DomainError):
        PotentialSpec("constant", V0=0.0)


def test_nonlinearity_vanishes_on_negative_axis():
    for name, m in catalog().items():
        t = -np.linspace(0.0, 5.0, 11)
        assert np.all(m.nonlinearity(t) == 0)
        assert np.all(m.nonlinearity.primitive(t) == 0)


def test_primitive_matches_closed_form_p3():
    nl = NonlinearitySpec("exp", p=3.0)
    t = np.linspace(0.0, 25.0, 401)
    # the closed form cancels to t^4/2 near zero, hence the absolute floor
    want = 0.5 * (t * t * np.exp(t * t) - np.expm1(t * t))
    np.testing.assert_allclose(nl.primitive(t), want, rtol=1e-13, atol=1e-16)


@pytest.mark.parametrize("spec", [NonlinearitySpec("exp", p=4.0, mode="f"), NonlinearitySpec("exp", p=2.0),
                                  NonlinearitySpec("exp_beta", p=3.0, beta=1.0)])
def test_primitive_matches_adaptive_quadrature(spec):
    for t in (0.05, 0.7, 2.0, 5.5, 12.0):
        assert spec.primitive(np.array([t]))[0] == pytest.approx(eval_H(spec, t), rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(t=st.floats(0.01, 20.0))
def test_derivative_matches_finite_difference(t):
    nl = NonlinearitySpec("exp_beta", p=3.0, beta=1.0)
    h = 1e-6 * t
    fd = (eval_h(nl, t + h) - eval_h(nl, t - h)) / (2 * h)
    assert nl.derivative(np.array([t]))[0] == pytest.approx(fd, rel=1e-6)


def test_overflow_guard():
    nl = NonlinearitySpec("exp", p=3.0)
    assert math.isfinite(eval_h(nl, math.sqrt(699.0)))
    with pytest.raises(MagnitudeError):
        eval_h(nl, math.sqrt(701.0))
    with pytest.raises(MagnitudeError):
        nl.primitive(np.array([0.0, 30.0]))
    # polynomial kinds have no guard
    assert NonlinearitySpec("power", p=3.0)(np.array([100.0]))[0] == 1e6


def test_kirchhoff_closed_forms():
    km = KirchhoffSpec(m0=1.0, a=1.0)
    assert eval_m(km, 2.0) == 3.0
    assert eval_M(km, math.pi) == pytest.approx(math.pi + math.pi**2 / 2, rel=1e-15)
    with pytest.raises(DomainError):
        eval_m(km, -1.0)
    with pytest.raises(DomainError):
        eval_M(km, -0.1)


def test_parameter_validation():
    with pytest.raises(DomainError):
        NonlinearitySpec("exp", p=1.0)
    with pytest.raises(DomainError):
        NonlinearitySpec("exp_beta", p=3.0)
    with pytest.raises(DomainError):
        NonlinearitySpec("cosh")
    with pytest.raises(DomainError):
        KirchhoffSpec(m0=0.0)


@pytest.mark.parametrize("name", sorted(catalog()))
def test_catalog_models_pass_their_conditions(name):
    model = catalog()[name]
    rep = validate_assumptions(model)
    assert rep.passed, [c.to_dict() for c in rep.conditions if not c.passed]
    families = {n.split(":")[0] for n in rep.names()}
    if model.problem == "P":
        assert {"V", "h1", "h2", "h3", "h4", "h5"} <= families
    else:
        assert {"V", "f1", "f2", "f3", "m1", "m2", "m3", "growth", "kirchhoff"} <= families


def test_theta_counterexample_is_located():
    model = catalog()["Q-exp"]
    bad = ModelSpec(model.potential, NonlinearitySpec("exp", p=3.0, mode="f", theta=3.5), model.kirchhoff)
    rep = validate_assumptions(bad)
    assert not rep.passed
    cond = rep["f1:theta_monotone"]
    assert not cond.passed and cond.worst_margin < 0
    # f(t)/t^3.5 = t^(-1/2) e^(t^2) decreases exactly on t < 1/2
    assert 0 < cond.location < 0.5


def test_constant_kirchhoff_passes_m_conditions():
    model = catalog()["Q-exp"].with_kirchhoff(KirchhoffSpec(m0=1.0, a=0.0))
    rep = validate_assumptions(model)
    for c in rep.conditions:
        if c.name.startswith("m"):
            assert c.passed, c.to_dict()


@pytest.mark.parametrize("m0, a", [(1.0, 1.0), (0.5, 3.0), (2.0, 0.0)])
def test_half_M_minus_quarter_mt_identity(m0, a):
    km = KirchhoffSpec(m0=m0, a=a)
    t = np.linspace(0.0, 50.0, 1001)
    lhs = 0.5 * km.M(t) - 0.25 * km.m(t) * t
    np.testing.assert_allclose(lhs, m0 * t / 4.0, rtol=0, atol=1e-12 * max(1.0, float(np.max(m0 * t))))


def test_superquadratic_ar_for_catalog():
    nl = catalog()["P-exp"].nonlinearity
    t = np.geomspace(1e-3, 20.0, 200)
    assert np.all(nl.mu * nl.primitive(t) <= t * nl(t) * (1 + 1e-12))


def test_h5_against_supplied_lambda():
    rep = validate_assumptions(catalog()["P-exp"], lambda1=1.5)
    assert rep["h5:small"].passed
    assert rep.constants


def test_report_serialises():
    d = validate_assumptions(catalog()["P-exp-constV"]).to_dict()
    assert d["passed"] is True
    assert all(set(c) == {"name", "passed", "worst_margin", "location", "note"} for c in d["conditions"])
