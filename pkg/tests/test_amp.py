import numpy as np
import pytest
from pydantic import ValidationError

from src.solvers.amp import (
    LoadSpec,
    indicator_load,
    perturbed_residual,
    scan_amp,
    solve_perturbed,
)
from src.solvers.eigen import minimize_rayleigh
from src.solvers.fem import DiscreteFunction, RadialForms, build_mesh, load_vector
from src.weights import ConstantWeight, ExponentialWeight, PowerWeight, ProductPowerWeight
from tests.conftest import unit_spec

H = indicator_load(0.2, 0.5)


@pytest.fixture(scope="module")
def disk():
    spec = unit_spec()
    mesh = build_mesh(spec.eps, spec.R, 100)
    return spec, mesh, minimize_rayleigh(mesh, spec)


def test_indicator_load():
    assert H(0.3) == 1.0
    assert H(0.1) == 0.0 and H(0.6) == 0.0
    assert H.support == (0.2, 0.5)
    assert H.breakpoints() == [0.2, 0.5]
    with pytest.raises(ValueError):
        indicator_load(0.5, 0.2)


def test_load_spec_checks_declared_support():
    with pytest.raises(ValidationError):
        LoadSpec(profile=ConstantWeight(), support=(0.2, 0.5))


def test_lambda_zero_is_a_linear_solve(disk):
    spec, mesh, _ = disk
    u, record = solve_perturbed(mesh, spec, H, 0.0)
    assert record.converged
    forms = RadialForms(mesh, spec)
    A = forms.stiffness_matrix()
    b = load_vector(mesh, H, spec.N)[forms.free]
    expected = np.linalg.solve(A, b)
    np.testing.assert_allclose(u.values[forms.free], expected, rtol=1e-8)


def test_zero_load_below_lambda1_gives_zero(disk):
    spec, mesh, eig = disk
    zero_h = LoadSpec(profile=ConstantWeight(value=0.0, positivity="nonnegative"))
    start = DiscreteFunction(mesh, np.zeros(mesh.nodes.size))
    u, record = solve_perturbed(mesh, spec, zero_h, 0.5 * eig.lambda1, u0=start)
    assert record.converged
    assert record.residual == 0.0
    assert not u.values.any()


BELOW_CASES = {
    "disk": (unit_spec(), H),
    "disk-full-load": (unit_spec(), LoadSpec(profile=ConstantWeight())),
    "ball-3d": (unit_spec(N=3), indicator_load(0.1, 0.3, height=2.0)),
    "weighted": (
        unit_spec(R=2.0).model_copy(
            update={
                "L": ProductPowerWeight(a=0.0, zeta=1.0),
                "K": PowerWeight(exponent=-0.5),
            }
        ),
        indicator_load(0.5, 0.9),
    ),
    "decaying-K": (
        unit_spec(R=3.0).model_copy(update={"K": ExponentialWeight(rate=2.0)}),
        LoadSpec(profile=ExponentialWeight(a=1.0)),
    ),
}


@pytest.fixture(scope="module", params=list(BELOW_CASES))
def below_case(request):
    spec, h = BELOW_CASES[request.param]
    mesh = build_mesh(spec.eps, spec.R, 100)
    return spec, h, mesh, minimize_rayleigh(mesh, spec)


@pytest.mark.parametrize("frac", [0.25, 0.5, 0.9])
def test_below_lambda1_solution_is_positive(below_case, frac):
    spec, h, mesh, eig = below_case
    assert eig.converged
    u, record = solve_perturbed(mesh, spec, h, frac * eig.lambda1)
    assert record.converged
    assert (u.values[u.free] > 0).all()


def test_p3_converged_solutions_below_lambda1_are_positive():
    spec = unit_spec(p=3.0, eps=1e-2, R=1.0)
    mesh = build_mesh(spec.eps, spec.R, 80)
    eig = minimize_rayleigh(mesh, spec)
    u, record = solve_perturbed(mesh, spec, H, 0.5 * eig.lambda1)
    if record.converged:
        assert (u.values[u.free] > 0).all()
    else:
        assert record.status in ("MAX_ITER", "STAGNATED", "BLOW_UP")


def test_scan_below_lambda1(disk):
    spec, mesh, eig = disk
    lam1 = eig.lambda1
    scan = scan_amp(mesh, spec, H, (0.1 * lam1, 0.9 * lam1), 4, (spec.eps, spec.R), eig)
    assert len(scan.per_lambda) == 4
    assert all(s.converged and s.min_global > 0 for s in scan.per_lambda)
    assert scan.delta_local == 0.0 and scan.delta_global == 0.0
    assert scan.nonnegative_above == 0


def test_scan_grid_is_midpoints(disk):
    spec, mesh, eig = disk
    scan = scan_amp(mesh, spec, H, (1.0, 2.0), 4, (spec.eps, spec.R), eig)
    np.testing.assert_allclose(scan.lambda_grid, [1.125, 1.375, 1.625, 1.875])


def test_scan_with_zero_steps_is_empty(disk):
    spec, mesh, eig = disk
    scan = scan_amp(mesh, spec, H, (1.0, 2.0), 0, (spec.eps, spec.R), eig)
    assert scan.per_lambda == []
    assert scan.lambda_grid == []
    assert scan.delta_local == 0.0 and scan.delta_global == 0.0


def test_scan_rejects_bad_inputs(disk):
    spec, mesh, eig = disk
    with pytest.raises(ValueError):
        scan_amp(mesh, spec, H, (2.0, 1.0), 4, (spec.eps, spec.R), eig)
    with pytest.raises(ValueError):
        scan_amp(mesh, spec, H, (1.0, 2.0), 4, (0.5, 2.0), eig)


@pytest.mark.slow
def test_anti_maximum_window_above_lambda1(disk):
    spec, mesh, eig = disk
    lam1 = eig.lambda1
    window = (lam1, 1.2 * lam1)
    E = (spec.eps, spec.R)
    scan = scan_amp(mesh, spec, H, window, 8, E, eig)
    first = scan.per_lambda[0]
    assert first.converged
    assert first.max_global < 0
    assert scan.delta_global > 0
    assert scan.delta_global <= scan.delta_local
    free = np.arange(mesh.nodes.size) < mesh.nodes.size - 1
    inside = 0
    for lam, sample, u in zip(scan.lambda_grid, scan.per_lambda, scan.solutions):
        if lam1 < lam <= lam1 + scan.delta_global:
            inside += 1
            assert sample.converged
            assert (np.asarray(u)[free] < 0).all()
    assert inside >= 1
    again = scan_amp(mesh, spec, H, window, 8, E, eig)
    assert again.delta_global == scan.delta_global
    assert again.delta_local == scan.delta_local


def test_solutions_are_not_serialized(disk):
    spec, mesh, eig = disk
    scan = scan_amp(mesh, spec, H, (0.2 * eig.lambda1, 0.4 * eig.lambda1), 2, (0.2, 0.5), eig)
    assert len(scan.solutions) == 2
    assert "solutions" not in scan.model_dump()


@pytest.mark.parametrize("p", [2.0, 3.0])
def test_warm_started_sweeps_agree_in_both_directions(p):
    spec = unit_spec(p=p, eps=1e-2, R=1.0)
    mesh = build_mesh(spec.eps, spec.R, 60)
    lam1 = minimize_rayleigh(mesh, spec).lambda1
    grid = [f * lam1 for f in (0.2, 0.4, 0.6, 0.8)]

    def sweep(lams):
        out, prev = {}, None
        for lam in lams:
            u, record = solve_perturbed(mesh, spec, H, lam, u0=prev)
            if not record.converged:
                u, record = solve_perturbed(mesh, spec, H, lam)
            if record.converged:
                out[lam] = u.values
                prev = u
        return out

    up, down = sweep(grid), sweep(grid[::-1])
    if p == 2.0:
        assert set(up) == set(down) == set(grid)
    common = set(up) & set(down)
    assert common
    for lam in common:
        scale = np.max(np.abs(up[lam]))
        np.testing.assert_allclose(up[lam], down[lam], rtol=0, atol=1e-6 * scale)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
@pytest.mark.parametrize("c", [0.5, 3.0])
def test_residual_scales_with_load_and_solution(p, c):
    spec = unit_spec(p=p, eps=1e-2, R=1.0)
    mesh = build_mesh(spec.eps, spec.R, 40)
    rng = np.random.default_rng(1)
    u = DiscreteFunction(mesh, rng.normal(size=mesh.nodes.size))
    lam = 7.0
    base = perturbed_residual(mesh, spec, H, lam, u)
    scaled_h = indicator_load(0.2, 0.5, height=c ** (p - 1.0))
    scaled = perturbed_residual(mesh, spec, scaled_h, lam, u.with_values(c * u.values))
    expected = c ** (p - 1.0) * base
    np.testing.assert_allclose(scaled, expected, rtol=1e-9, atol=1e-9 * np.max(np.abs(expected)))
    assert not base[~u.free].any()


def test_converged_solve_has_small_residual(disk):
    spec, mesh, eig = disk
    u, record = solve_perturbed(mesh, spec, H, 0.5 * eig.lambda1)
    res = perturbed_residual(mesh, spec, H, 0.5 * eig.lambda1, u)
    assert record.converged
    assert np.max(np.abs(res)) == pytest.approx(record.residual, rel=1e-6, abs=1e-14)
