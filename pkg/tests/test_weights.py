import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from pydantic import ValidationError
from scipy.integrate import quad

from src.errors import InvalidWeightError, PreconditionError
from src.weights import (
    ConstantWeight,
    ExponentialWeight,
    PiecewiseWeight,
    PowerWeight,
    ProblemSpec,
    ProductPowerWeight,
    ReciprocalWeight,
    Segment,
    TableWeight,
    WeightAdapter,
    admissible_example_spec,
    boundedness_integral,
    check_admissibility,
    compute_F,
    compute_G,
    embedding_constant,
    growth_family_spec,
)

ARCTAN_L = ProductPowerWeight(a=-1.0, zeta=2.0)  # (1 + s^2)/s, so F = arctan


def _spec(v, w=None, N=3, p=2.0, alpha=-0.25):
    return ProblemSpec(N=N, p=p, alpha=alpha, L=v, K=ConstantWeight(), v=v, w=w)


# -- weight variants --


def test_scalar_and_array_evaluation():
    w = PowerWeight(coeff=2.0, exponent=-1.0)
    assert w(4.0) == pytest.approx(0.5)
    assert isinstance(w(4.0), float)
    np.testing.assert_allclose(w(np.array([1.0, 2.0])), [2.0, 1.0])


def test_piecewise_switches_at_breakpoints():
    w = PiecewiseWeight(
        segments=[
            Segment(upto=1.0, weight=ConstantWeight(value=2.0)),
            Segment(weight=PowerWeight(exponent=-1.0)),
        ]
    )
    assert w(1.0) == 2.0
    assert w(2.0) == pytest.approx(0.5)
    assert w.breakpoints() == [1.0]
    assert w.endpoint_exponents() == (0.0, -1.0)


def test_piecewise_rejects_decreasing_breakpoints():
    with pytest.raises(ValidationError):
        PiecewiseWeight(
            segments=[
                Segment(upto=2.0, weight=ConstantWeight()),
                Segment(upto=1.0, weight=ConstantWeight()),
                Segment(weight=ConstantWeight()),
            ]
        )


def test_table_interpolates_log_log():
    w = TableWeight(radii=[1.0, 10.0, 100.0], values=[1.0, 0.1, 0.01])
    assert w(math.sqrt(10.0)) == pytest.approx(10.0**-0.5)
    # Extrapolated with the boundary slope.
    assert w(1000.0) == pytest.approx(1e-3)
    assert w.endpoint_exponents() == pytest.approx((-1.0, -1.0))


def test_declared_positivity_is_checked():
    with pytest.raises(ValidationError):
        ConstantWeight(value=0.0)
    ConstantWeight(value=0.0, positivity="nonnegative")
    ReciprocalWeight(coeff=-1.0, a=2.0, shift=1.0, positivity="sign_changing")


def test_exponential_sampling_skips_underflow():
    w = ExponentialWeight(rate=1.0)
    assert w(1e4) == 0.0
    assert w.endpoint_exponents() == (0.0, -math.inf)


def test_weights_read_from_config_dicts():
    w = WeightAdapter.validate_python({"kind": "product_power", "a": 1.0, "zeta": 1.0})
    assert w(1.0) == pytest.approx(2.0)


@given(c=st.floats(min_value=1e-3, max_value=1e3))
def test_scaled_multiplies_values(c):
    w = admissible_example_spec().w
    r = np.geomspace(1e-3, 1e3, 13)
    np.testing.assert_allclose(w.scaled(c)(r), c * w(r), rtol=1e-12)


def test_L_must_be_strictly_positive():
    with pytest.raises(ValidationError):
        ProblemSpec(
            N=2, p=2.0,
            L=ConstantWeight(value=0.0, positivity="nonnegative"),
            K=ConstantWeight(),
        )


@pytest.mark.parametrize("kw", [{"p": 1.0}, {"N": 1}, {"alpha": 0.0}, {"eps": 2.0, "R": 1.0}])
def test_problem_spec_rejects_invalid_parameters(kw):
    base = dict(N=2, p=2.0, L=ConstantWeight(), K=ConstantWeight())
    base.update(kw)
    with pytest.raises(ValidationError):
        ProblemSpec(**base)


# -- G and the embedding constant --


@pytest.mark.parametrize("r, expected", [(1.0, 0.2), (2.0, 0.00625)])
def test_G_of_power_weight(r, expected):
    # N = 3, p = 2, v = t^4: G(r) = int_r^inf t^-6 dt = r^-5 / 5.
    spec = _spec(PowerWeight(exponent=4.0))
    res = compute_G(spec, r)
    assert res.convergent
    assert res.value == pytest.approx(expected, rel=1e-9)


def test_G_diverges_at_infinity():
    spec = _spec(PowerWeight(exponent=-1.0), N=2)
    res = compute_G(spec, 1.0)
    assert res.divergent
    assert res.endpoint == math.inf


def test_G_needs_positive_v():
    spec = _spec(ConstantWeight())
    spec = spec.model_copy(update={"v": ConstantWeight(value=-1.0, positivity="sign_changing")})
    with pytest.raises(InvalidWeightError):
        compute_G(spec, 1.0)


def test_G_needs_v():
    spec = ProblemSpec(N=2, p=2.0, L=ConstantWeight(), K=ConstantWeight())
    with pytest.raises(PreconditionError):
        compute_G(spec, 1.0)


def test_embedding_constant_diverges_at_zero():
    # N = 3, p = 2, v = t^4, w = 1: the integrand r^2 G(r) = r^-3 / 5 blows up at 0.
    spec = _spec(PowerWeight(exponent=4.0), ConstantWeight())
    res = embedding_constant(spec)
    assert res.divergent
    assert res.endpoint == 0.0


def test_embedding_constant_closed_form():
    # w = r^3 e^-r turns the integrand into e^-r / 5, so C = 1/5.
    spec = _spec(PowerWeight(exponent=4.0), ExponentialWeight(a=3.0, rate=1.0))
    res = embedding_constant(spec, tol=1e-9)
    assert res.convergent
    assert res.value == pytest.approx(0.2, rel=1e-6)


@pytest.mark.slow
def test_embedding_constant_scales_with_w():
    spec = admissible_example_spec()
    C = embedding_constant(spec, tol=1e-8)
    C2 = embedding_constant(spec.model_copy(update={"w": spec.w.scaled(2.0)}), tol=1e-8)
    assert C.convergent and C2.convergent
    assert C2.value == pytest.approx(2.0 * C.value, rel=1e-6)


# -- F and the boundedness integral --


def test_F_of_reciprocal_weight_is_identity():
    res = compute_F(PowerWeight(exponent=-1.0), 2.5)
    assert res.value == pytest.approx(2.5, rel=1e-9)


def test_F_of_arctan_weight():
    res = compute_F(ARCTAN_L, 3.0)
    assert res.value == pytest.approx(math.atan(3.0), rel=1e-9)


def test_F_diverges_for_unit_L():
    res = compute_F(ConstantWeight(), 1.0)
    assert res.divergent
    assert res.endpoint == 0.0


def test_boundedness_integral_against_scipy():
    res = boundedness_integral(ExponentialWeight(), ARCTAN_L, tol=1e-9)
    expected, _ = quad(lambda s: s * math.atan(s) ** 2 * math.exp(-s), 0.0, math.inf)
    assert res.convergent
    assert res.value == pytest.approx(expected, rel=1e-7)


def test_boundedness_integral_diverges_at_infinity():
    res = boundedness_integral(ConstantWeight(), PowerWeight(exponent=-1.0))
    assert res.divergent
    assert res.endpoint == math.inf


def test_boundedness_integral_hypotheses():
    with pytest.raises(PreconditionError):
        boundedness_integral(ExponentialWeight(), ConstantWeight())
    with pytest.raises(PreconditionError):
        boundedness_integral(
            ReciprocalWeight(coeff=-1.0, a=2.0, shift=1.0, positivity="sign_changing"), ARCTAN_L
        )


def test_boundedness_integral_skips_zero_K():
    res = boundedness_integral(ConstantWeight(value=0.0, positivity="nonnegative"), ARCTAN_L)
    assert res.convergent
    assert res.value == 0.0


# -- admissibility --


@pytest.mark.slow
def test_admissible_example():
    spec = admissible_example_spec()
    report = check_admissibility(spec, grid_size=64, tol=1e-10)
    assert report.verdict == "admissible", report.reasons
    assert report.c1_holds and report.v_bound_holds and report.w_bound_holds
    C = report.embedding_constant
    assert C.convergent and C.value > 0
    halved = embedding_constant(spec, tol=5e-11)
    assert halved.value == pytest.approx(C.value, rel=1e-6)
    # The G curve decreases in r.
    g = [v for _, v in report.G_curve]
    assert all(a > b for a, b in zip(g, g[1:]))


def test_v_on_the_bound_is_inadmissible():
    # v = r^(-p alpha) exactly: equality on a whole run of samples.
    spec = admissible_example_spec()
    v = PowerWeight(exponent=-spec.p * spec.alpha)
    report = check_admissibility(spec.model_copy(update={"v": v, "L": v}), grid_size=32, tol=1e-8)
    assert report.verdict == "inadmissible"
    assert not report.v_bound_holds
    assert report.v_bound_violation is not None


def test_sign_changing_K_beyond_w_breaks_c1():
    spec = admissible_example_spec()
    K = ReciprocalWeight(coeff=-1.0, a=-1.0, shift=0.0, positivity="sign_changing")  # -r
    report = check_admissibility(spec.model_copy(update={"K": K}), grid_size=32, tol=1e-8)
    assert not report.c1_holds
    assert report.verdict == "inadmissible"


def test_growth_family_intended_reading_diverges_at_zero():
    spec = growth_family_spec(reading="intended")
    report = check_admissibility(spec, grid_size=32, tol=1e-8)
    assert report.embedding_constant is not None
    assert report.embedding_constant.divergent
    assert report.embedding_constant.endpoint == 0.0
    assert report.verdict == "inadmissible"


def test_growth_family_literal_reading_is_inadmissible():
    spec = growth_family_spec(reading="literal")
    report = check_admissibility(spec, grid_size=32, tol=1e-8)
    assert report.verdict == "inadmissible"
    assert not report.w_bound_holds


def test_grid_size_floor():
    with pytest.raises(ValueError):
        check_admissibility(admissible_example_spec(), grid_size=8)


@settings(max_examples=10, deadline=None)
@given(c=st.floats(min_value=0.1, max_value=10.0))
def test_G_scales_inversely_with_v(c):
    # p = 2: G(r) = int t^(1-N) / v, so scaling v by c divides G by c.
    spec = _spec(PowerWeight(exponent=4.0))
    scaled = spec.model_copy(update={"v": spec.v.scaled(c)})
    assert compute_G(scaled, 1.5).value == pytest.approx(compute_G(spec, 1.5).value / c, rel=1e-8)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
@pytest.mark.parametrize("N", [2, 3, 5])
@pytest.mark.parametrize("alpha", [-0.25, -0.75])
def test_G_matches_power_law_closed_form(p, N, alpha):
    # v = c r^gamma with gamma = 1 - p alpha keeps the tail integrable.
    c, gamma = 1.5, 1.0 - p * alpha
    spec = _spec(PowerWeight(coeff=c, exponent=gamma), N=N, p=p, alpha=alpha)
    q = 1.0 / (p - 1.0)
    E = (1.0 - N - gamma) * q
    for r in (0.5, 2.0):
        expected = (c**-q * r ** (E + 1.0) / -(E + 1.0)) ** (p - 1.0)
        res = compute_G(spec, r, tol=1e-12)
        assert res.convergent
        assert res.value == pytest.approx(expected, rel=1e-8)


@pytest.mark.slow
@pytest.mark.parametrize("c", [0.9, 0.6, 0.5])
def test_shrinking_w_keeps_example_admissible(c):
    # K = w/2, so |K| <= c w still holds down to c = 1/2.
    spec = admissible_example_spec()
    report = check_admissibility(spec.model_copy(update={"w": spec.w.scaled(c)}), grid_size=32)
    assert report.w_bound_holds
    assert report.verdict == "admissible", report.reasons


@settings(max_examples=10, deadline=None)
@given(c=st.floats(min_value=1e-3, max_value=1.0))
def test_shrinking_w_never_breaks_the_w_bound(c):
    spec = growth_family_spec(reading="intended")
    assert check_admissibility(spec, grid_size=32, tol=1e-8).w_bound_holds
    shrunk = spec.model_copy(update={"w": spec.w.scaled(c)})
    assert check_admissibility(shrunk, grid_size=32, tol=1e-8).w_bound_holds


@pytest.mark.slow
def test_growing_L_keeps_example_admissible():
    spec = admissible_example_spec()
    report = check_admissibility(spec.model_copy(update={"L": spec.L.scaled(3.0)}), grid_size=32)
    assert report.c1_holds
    assert report.verdict == "admissible", report.reasons


@pytest.mark.slow
def test_embedding_constant_scales_inversely_with_v():
    spec = admissible_example_spec()
    C = embedding_constant(spec, tol=1e-8)
    scaled = spec.model_copy(update={"v": spec.v.scaled(4.0), "L": spec.L.scaled(4.0)})
    C4 = embedding_constant(scaled, tol=1e-8)
    assert C4.value == pytest.approx(C.value / 4.0, rel=1e-6)
    assert check_admissibility(scaled, grid_size=32).verdict == "admissible"


def test_growth_family_literal_reading_locates_divergence_at_zero():
    spec = growth_family_spec(reading="literal")
    report = check_admissibility(spec, grid_size=32, tol=1e-8)
    assert report.verdict == "inadmissible"
    assert report.embedding_of_abs_w
    assert report.embedding_constant.divergent
    assert report.embedding_constant.endpoint == 0.0
    assert any("C2 fails for |w|" in reason for reason in report.reasons)


def test_embedding_constant_refuses_sign_changing_w():
    with pytest.raises(InvalidWeightError):
        embedding_constant(growth_family_spec(reading="literal"))


def test_boundedness_integral_inherits_inconclusive_F(monkeypatch):
    import src.weights as weights

    exact = weights.compute_F

    def unsettled_F(L, r, tol=1e-10):
        return exact(L, r, tol).model_copy(update={"verdict": "inconclusive"})

    monkeypatch.setattr(weights, "compute_F", unsettled_F)
    res = boundedness_integral(ExponentialWeight(), ARCTAN_L, tol=1e-9)
    assert res.verdict == "inconclusive"
