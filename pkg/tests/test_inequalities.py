import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from pydantic import ValidationError

from src.errors import PreconditionError
from src.inequalities import (
    TrialFamily,
    TrialFunction,
    check_ckn,
    check_embedding,
    check_picone,
    ckn_ratio,
    critical_exponent,
    hardy_constant_oracle,
    picone_expression,
    picone_suite,
)
from src.solvers.fem import DiscreteFunction, build_mesh
from src.weights import admissible_example_spec, embedding_constant
from tests.conftest import unit_spec

SHARP_N3 = 16.0 / 9.0  # (2 / (N - 2 - 2 alpha))^2 for N = 3, alpha = -1/4


def _spec(N=3, p=2.0, alpha=-0.25):
    return unit_spec(N=N, p=p, alpha=alpha)


def test_critical_exponent():
    assert critical_exponent(3, 2.0, -0.25) == pytest.approx(6.0 / 1.5)
    with pytest.raises(PreconditionError):
        critical_exponent(2, 2.0, 0.0)


@pytest.mark.parametrize("N, alpha", [(3, -0.25), (3, -0.5), (4, -0.75)])
def test_hardy_oracle_matches_sharp_constant(N, alpha):
    sharp = (2.0 / (N - 2.0 - 2.0 * alpha)) ** 2
    value = hardy_constant_oracle(N, alpha)
    assert value <= sharp * (1.0 + 1e-12)
    assert value == pytest.approx(sharp, rel=1e-6)


def test_hardy_oracle_approaches_four_as_alpha_vanishes_in_3d():
    assert hardy_constant_oracle(3, -1e-6) == pytest.approx(4.0, rel=1e-4)


def test_hardy_oracle_needs_positive_gap():
    with pytest.raises(PreconditionError):
        hardy_constant_oracle(2, 0.0)


def test_trial_function_derivative():
    t = TrialFunction(rho=2.0, k=3.0, m=1.5, delta=0.1)
    r = np.linspace(0.1, 1.9, 7)
    h = 1e-6
    fd = (t.value(r + h) - t.value(r - h)) / (2 * h)
    np.testing.assert_allclose(t.derivative(r), fd, rtol=1e-6)
    assert t.value(np.array([2.5]))[0] == 0.0


def test_negative_power_needs_regularization():
    with pytest.raises(ValidationError):
        TrialFunction(rho=1.0, k=1.0, m=-0.5)


def test_family_is_reproducible():
    a = TrialFamily(samples=5, seed=3).draw()
    b = TrialFamily(samples=5, seed=3).draw()
    c = TrialFamily(samples=5, seed=4).draw()
    assert a == b
    assert a != c


def test_ckn_basic_below_sharp_constant():
    family = TrialFamily(samples=200, seed=0)
    report = check_ckn(family, _spec(), "basic")
    assert report.passed
    assert report.oracle_constant == pytest.approx(SHARP_N3, rel=1e-6)
    assert report.max_ratio <= SHARP_N3
    assert report.trials == 200


@pytest.mark.slow
def test_near_extremal_family_gets_close_to_sharp_constant():
    family = TrialFamily.near_extremal(3, 2.0, -0.25, samples=1000, seed=0)
    report = check_ckn(family, _spec(), "basic")
    assert report.passed
    assert 0.5 * SHARP_N3 < report.max_ratio <= SHARP_N3


def test_near_extremal_needs_subcritical_dimension():
    with pytest.raises(PreconditionError):
        TrialFamily.near_extremal(2, 2.0, 0.0)


@settings(max_examples=20, deadline=None)
@given(
    rho=st.floats(min_value=0.2, max_value=5.0),
    k=st.floats(min_value=1.0, max_value=6.0),
    m=st.floats(min_value=0.0, max_value=3.0),
)
def test_basic_ratio_never_exceeds_sharp_constant(rho, k, m):
    t = TrialFunction(rho=rho, k=k, m=m)
    assert ckn_ratio(t.value, t.derivative, t.rho, _spec(), "basic") <= SHARP_N3 * (1.0 + 1e-10)


def test_generalized_ratio_is_scale_invariant_in_u():
    # Both sides are p-homogeneous in u, so scaling u leaves the ratio unchanged.
    t = TrialFunction(rho=1.5, k=2.0, m=0.5)
    spec = _spec()
    base = ckn_ratio(t.value, t.derivative, t.rho, spec, "generalized")
    scaled = ckn_ratio(
        lambda r: 3.0 * t.value(r), lambda r: 3.0 * t.derivative(r), t.rho, spec, "generalized"
    )
    assert scaled == pytest.approx(base, rel=1e-10)


def test_ckn_generalized_reports_p_star():
    report = check_ckn(TrialFamily(samples=20), _spec(), "generalized")
    assert report.p_star == pytest.approx(4.0)
    assert report.declared_constant is None
    assert report.passed
    assert math.isfinite(report.max_ratio) and report.max_ratio > 0


@pytest.mark.slow
def test_embedding_holds_with_computed_constant():
    spec = admissible_example_spec()
    C = embedding_constant(spec, tol=1e-8)
    report = check_embedding(TrialFamily(samples=100, seed=1), spec, C.value)
    assert report.passed
    assert report.max_ratio <= C.value


def test_embedding_ratio_is_scale_invariant():
    spec = admissible_example_spec()
    family = TrialFamily(samples=10, seed=2)
    base = check_embedding(family, spec, 1e6)
    scaled = check_embedding(family, spec.model_copy(update={"K": spec.K.scaled(2.0)}), 1e6)
    assert scaled.max_ratio == pytest.approx(2.0 * base.max_ratio, rel=1e-10)


def test_embedding_bound_violations_are_recorded():
    spec = admissible_example_spec()
    report = check_embedding(TrialFamily(samples=10, seed=2), spec, 1e-12)
    assert len(report.violations) == 10
    assert not report.passed


def test_embedding_constant_must_be_finite():
    with pytest.raises(PreconditionError):
        check_embedding(TrialFamily(samples=2), admissible_example_spec(), math.inf)


# -- Picone --


def _on_mesh(values, mesh):
    return DiscreteFunction(mesh, values, dirichlet_at_R=False)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_picone_vanishes_for_proportional_pairs(p):
    mesh = build_mesh(0.1, 2.0, 40)
    v = _on_mesh(1.0 + np.cos(mesh.nodes) ** 2, mesh)
    for c in (1.0, 2.0):
        u = _on_mesh(c * v.values, mesh)
        expr = picone_expression(u, v, p)
        np.testing.assert_allclose(expr, 0.0, atol=1e-10 * c**p)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_picone_nonnegative_for_unrelated_pairs(p):
    mesh = build_mesh(0.1, 2.0, 40)
    u = _on_mesh(np.exp(-mesh.nodes), mesh)
    v = _on_mesh(1.0 + mesh.nodes**2, mesh)
    assert check_picone(u, v, p) >= -1e-12


def test_picone_preconditions():
    mesh = build_mesh(0.1, 2.0, 10)
    v = _on_mesh(np.ones(mesh.nodes.size), mesh)
    with pytest.raises(PreconditionError):
        picone_expression(_on_mesh(-np.ones(mesh.nodes.size), mesh), v, 2.0)
    with pytest.raises(PreconditionError):
        picone_expression(v, _on_mesh(np.zeros(mesh.nodes.size), mesh), 2.0)


@pytest.mark.parametrize("p", [1.5, 2.0, 4.0])
def test_picone_suite_has_no_violations(p):
    mesh = build_mesh(1e-3, 5.0, 200)
    report = picone_suite(TrialFamily(samples=200, seed=5), mesh, p)
    assert report.inequality == "picone"
    assert report.trials == 100
    assert report.passed
    # Rounding only: the expression is nonnegative pointwise.
    assert report.picone_min > -1e-6


# -- full-size suites --


@pytest.mark.slow
def test_ckn_basic_over_a_thousand_trials():
    report = check_ckn(TrialFamily(samples=1000, seed=11), _spec(), "basic")
    assert report.trials == 1000
    assert report.passed
    assert report.max_ratio <= report.oracle_constant * (1.0 + 1e-10)


@pytest.mark.slow
def test_ckn_generalized_over_a_thousand_trials():
    report = check_ckn(TrialFamily(samples=1000, seed=12), _spec(), "generalized")
    assert report.trials == 1000
    assert report.passed
    assert math.isfinite(report.max_ratio) and report.max_ratio > 0


@pytest.mark.slow
def test_embedding_over_a_thousand_trials():
    spec = admissible_example_spec()
    C = embedding_constant(spec, tol=1e-8)
    report = check_embedding(TrialFamily(samples=1000, seed=13), spec, C.value)
    assert report.trials == 1000
    assert report.passed


@pytest.mark.slow
@pytest.mark.parametrize("p", [1.5, 2.0, 4.0])
def test_picone_over_a_thousand_pairs(p):
    mesh = build_mesh(1e-3, 5.0, 200)
    report = picone_suite(TrialFamily(samples=2000, seed=14), mesh, p)
    assert report.trials == 1000
    assert report.passed
