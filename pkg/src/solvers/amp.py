"""Perturbed problem -Delta_p,L u = lam K |u|^(p-2) u + h and antimaximum scans.

The discrete equation is the weak form tested against every free hat:

    (grad I(u) - lam grad G(u)) / p = b(h)

solved by damped Newton with the banded (regularized) Jacobian. Failures are
recorded, never raised: near lam1 nonconvergence is the expected outcome.
"""

import logging
from typing import List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, model_validator
from scipy.linalg import LinAlgError, solve_banded

from src.solvers.eigen import EigenResult
from src.solvers.fem import DiscreteFunction, RadialForms, RadialMesh, load_vector
from src.weights import SAMPLE_GRID, ConstantWeight, PiecewiseWeight, Segment, WeightFunction

__all__ = [
    "AmpSample",
    "AmpScanResult",
    "LoadSpec",
    "SolveRecord",
    "SolveStatus",
    "indicator_load",
    "perturbed_residual",
    "scan_amp",
    "solve_perturbed",
]

log = logging.getLogger("app.solvers.amp")

SolveStatus = Literal["CONVERGED", "STAGNATED", "BLOW_UP", "MAX_ITER"]

MAX_NEWTON = 100
MAX_HALVINGS = 40
BLOW_UP_FACTOR = 1e6
BISECTION_REL = 1e-3
MIN_STEP_REL = 1e-6
CONTINUATION_STEPS = 8


class LoadSpec(BaseModel):
    """Radial forcing h, optionally marked compactly supported in [a, b]."""

    profile: WeightFunction
    support: Optional[Tuple[float, float]] = None
    nonneg: bool = True

    @model_validator(mode="after")
    def _check_profile(self):
        vals = self.profile(SAMPLE_GRID)
        if self.nonneg and not (vals >= 0).all():
            i = int(np.argmax(~(vals >= 0)))
            raise ValueError(f"h is declared nonnegative but h({SAMPLE_GRID[i]:g}) = {vals[i]!r}.")
        if self.support is not None:
            a, b = self.support
            if not 0 <= a < b:
                raise ValueError(f"Invalid support interval {self.support}.")
            outside = (SAMPLE_GRID < a) | (SAMPLE_GRID > b)
            if np.any(vals[outside] != 0.0):
                raise ValueError(f"h does not vanish outside its declared support {self.support}.")
        return self

    def __call__(self, r):
        """Evaluate the profile."""
        return self.profile(r)

    def breakpoints(self) -> List[float]:
        """Breakpoints of the profile."""
        return self.profile.breakpoints()


def indicator_load(a: float, b: float, height: float = 1.0) -> LoadSpec:
    """h = height on (a, b], zero elsewhere, marked compactly supported."""
    if not (0 < a < b and height > 0):
        raise ValueError(f"Need 0 < a < b and height > 0, got a={a}, b={b}, height={height}.")
    zero = ConstantWeight(value=0.0, positivity="nonnegative")
    profile = PiecewiseWeight(
        positivity="nonnegative",
        segments=[
            Segment(upto=a, weight=zero),
            Segment(upto=b, weight=ConstantWeight(value=height)),
            Segment(weight=zero),
        ],
    )
    return LoadSpec(profile=profile, support=(a, b))


class SolveRecord(BaseModel):
    """Convergence record of one perturbed solve."""

    lam: float
    status: SolveStatus
    residual: float
    iterations: int
    norm: float

    @property
    def converged(self) -> bool:
        """Whether the residual target was met."""
        return self.status == "CONVERGED"


class AmpSample(BaseModel):
    """Sign summary of the solution at one grid lam."""

    lam: float
    converged: bool
    status: SolveStatus
    residual: float
    min_on_E: float
    max_on_E: float
    min_global: float
    max_global: float
    nonnegative: bool


class AmpScanResult(BaseModel):
    """Outcome of scan_amp; `per_lambda` aligns with `lambda_grid`."""

    lambda1: float
    lambda_grid: List[float]
    per_lambda: List[AmpSample]
    region_E: Tuple[float, float]
    delta_local: float = Field(ge=0)
    delta_global: float = Field(ge=0)
    nonnegative_above: int
    solutions: List[List[float]] = Field(default=[], exclude=True)


class _Perturbed:
    """Residual, Jacobian and Newton solver for one (mesh, spec, h)."""

    def __init__(self, forms: RadialForms, b: np.ndarray, tol: float):
        self.forms = forms
        self.b = b
        self.b_norm = float(np.max(np.abs(b), initial=0.0))
        self.target = tol * (1.0 + self.b_norm)

    def residual(self, u: np.ndarray, lam: float) -> np.ndarray:
        f = self.forms
        F = (f.grad_energy(u) - lam * f.grad_constraint(u)) / f.p - self.b
        F[~f.free] = 0.0
        return F

    def jacobian(self, u: np.ndarray, lam: float) -> np.ndarray:
        f = self.forms
        return f.constrain((f.hess_energy(u) - lam * f.hess_constraint(u)) / f.p)

    def _classify(self, u: np.ndarray, fallback: SolveStatus) -> SolveStatus:
        if np.max(np.abs(u)) > BLOW_UP_FACTOR * max(self.b_norm, np.finfo(float).tiny):
            return "BLOW_UP"
        return fallback

    def newton(self, u: np.ndarray, lam: float) -> Tuple[np.ndarray, SolveRecord]:
        u = u.copy()
        u[~self.forms.free] = 0.0
        F = self.residual(u, lam)
        nF = float(np.max(np.abs(F)))
        status: SolveStatus = "MAX_ITER"
        it = 0
        for it in range(MAX_NEWTON):
            if nF <= self.target:
                status = "CONVERGED"
                break
            try:
                delta = solve_banded((1, 1), self.jacobian(u, lam), -F)
            except (LinAlgError, ValueError):
                status = self._classify(u, "STAGNATED")
                break
            if not np.all(np.isfinite(delta)):
                status = self._classify(u, "STAGNATED")
                break
            alpha = 1.0
            for _ in range(MAX_HALVINGS):
                trial = u + alpha * delta
                Ft = self.residual(trial, lam)
                nT = float(np.max(np.abs(Ft)))
                if nT < (1.0 - 1e-4 * alpha) * nF:
                    u, F, nF = trial, Ft, nT
                    break
                alpha *= 0.5
            else:
                status = self._classify(u, "STAGNATED")
                break
            if self._classify(u, "MAX_ITER") == "BLOW_UP":
                status = "BLOW_UP"
                break
        else:
            it = MAX_NEWTON
            status = "CONVERGED" if nF <= self.target else self._classify(u, "MAX_ITER")
        return u, SolveRecord(
            lam=lam, status=status, residual=nF, iterations=it,
            norm=float(np.max(np.abs(u))),
        )

    def linear_guess(self) -> np.ndarray:
        """p-homogeneous rescaling of the solution of the p = 2 stiffness system."""
        f = self.forms
        c = f.stiff / f.h**2
        ab = f.constrain(f._banded(c, c, -c))
        y = solve_banded((1, 1), ab, self.b)
        denom = f.energy(y)
        work = float(self.b @ y)
        if denom == 0.0 or work == 0.0:
            return np.zeros_like(y)
        scale = abs(work) / denom
        return y * scale ** (1.0 / (f.p - 1.0))

    def continuation(
        self, u: np.ndarray, lam_from: float, lam_to: float, min_step: float
    ) -> Tuple[np.ndarray, SolveRecord]:
        """Walk lam_from -> lam_to, halving the step on failure."""
        step = lam_to - lam_from
        cur = lam_from
        record = None
        while True:
            nxt = lam_to if abs(lam_to - cur) <= abs(step) else cur + step
            trial, record = self.newton(u, nxt)
            if record.converged:
                u, cur = trial, nxt
                if cur == lam_to:
                    return u, record
                step *= 2.0
                continue
            step *= 0.5
            log.debug(f"Continuation halved to step {step:.3e} at lam={cur:.8g}.")
            if abs(step) < min_step:
                return trial, record


def solve_perturbed(
    mesh: RadialMesh,
    spec,
    h: LoadSpec,
    lam: float,
    u0: Optional[DiscreteFunction] = None,
    tol: float = 1e-10,
    dirichlet_at_eps: bool = False,
) -> Tuple[DiscreteFunction, SolveRecord]:
    """Solve the perturbed problem at lam.

    Without `u0`, the lam = 0 solve is the starting point and lam is reached by
    continuation in CONTINUATION_STEPS steps.
    """
    if not np.isfinite(lam):
        raise ValueError(f"lam must be finite, got {lam}.")
    forms = RadialForms(mesh, spec, dirichlet_at_eps=dirichlet_at_eps)
    problem = _Perturbed(forms, load_vector(mesh, h, spec.N, dirichlet_at_eps=dirichlet_at_eps), tol)
    if u0 is not None:
        u, record = problem.newton(u0.values, lam)
    else:
        u, record = problem.newton(problem.linear_guess(), 0.0)
        if record.converged and lam != 0.0:
            start, lam0 = u, 0.0
            for k in range(1, CONTINUATION_STEPS + 1):
                target = lam * k / CONTINUATION_STEPS
                start, record = problem.continuation(
                    start, lam0, target, MIN_STEP_REL * abs(lam)
                )
                if not record.converged:
                    break
                lam0 = target
            u = start
    log.debug(f"solve_perturbed lam={lam:.8g}: {record.status} residual={record.residual:.3e}")
    return forms.new_function(u), record


def perturbed_residual(
    mesh: RadialMesh, spec, h: LoadSpec, lam: float, u: DiscreteFunction
) -> np.ndarray:
    """Nodal residual (grad I(u) - lam grad G(u)) / p - b(h), zero at Dirichlet nodes."""
    forms = RadialForms(mesh, spec, u.dirichlet_at_R, u.dirichlet_at_eps)
    b = load_vector(mesh, h, spec.N, u.dirichlet_at_R, u.dirichlet_at_eps)
    return _Perturbed(forms, b, tol=1.0).residual(u.values, lam)


def _sample(
    lam: float, u: np.ndarray, record: SolveRecord, free: np.ndarray, in_E: np.ndarray
) -> AmpSample:
    uf, ue = u[free], u[in_E]
    return AmpSample(
        lam=lam,
        converged=record.converged,
        status=record.status,
        residual=record.residual,
        min_on_E=float(ue.min()),
        max_on_E=float(ue.max()),
        min_global=float(uf.min()),
        max_global=float(uf.max()),
        nonnegative=bool(record.converged and uf.min() >= 0.0),
    )


def scan_amp(
    mesh: RadialMesh,
    spec,
    h: LoadSpec,
    window: Tuple[float, float],
    steps: int,
    E: Tuple[float, float],
    eigen: EigenResult,
    tol: float = 1e-10,
    dirichlet_at_eps: bool = False,
) -> AmpScanResult:
    """Solve on the midpoint grid lam_j = lo + (j + 1/2)(hi - lo)/steps.

    Windows above lam1 are measured as the largest lam - lam1 such that every
    grid lam' in (lam1, lam] has a converged solution negative on E (local)
    or at every free node (global), refined by bisection to 1e-3 lam1.
    """
    lo, hi = window
    if not lo < hi:
        raise ValueError(f"Need lam_lo < lam_hi, got {window}.")
    if steps < 0:
        raise ValueError(f"steps must be nonnegative, got {steps}.")
    if not mesh.eps <= E[0] < E[1] <= mesh.R:
        raise ValueError(f"E={E} must lie inside [{mesh.eps}, {mesh.R}].")
    lam1 = eigen.lambda1
    if steps == 0:
        return AmpScanResult(
            lambda1=lam1, lambda_grid=[], per_lambda=[], region_E=E,
            delta_local=0.0, delta_global=0.0, nonnegative_above=0,
        )

    forms = RadialForms(mesh, spec, dirichlet_at_eps=dirichlet_at_eps)
    b = load_vector(mesh, h, spec.N, dirichlet_at_eps=dirichlet_at_eps)
    problem = _Perturbed(forms, b, tol)
    nodes = mesh.nodes
    in_E = forms.free & (nodes >= E[0]) & (nodes <= E[1])
    if not in_E.any():
        raise ValueError(f"E={E} contains no free mesh node.")
    phi = eigen.u.values
    min_step = MIN_STEP_REL * lam1

    def side_guess(lam: float) -> np.ndarray:
        """Lyapunov-Schmidt guess -t phi (above lam1) or +t phi (below)."""
        gap = lam - lam1
        work = float(b @ phi)
        if gap == 0.0 or work == 0.0:
            return problem.linear_guess()
        t = (abs(work) / abs(gap)) ** (1.0 / (forms.p - 1.0))
        return -np.sign(gap) * np.sign(work) * t * phi

    def solve_from(u_prev, lam_prev, lam):
        if u_prev is None or (lam_prev - lam1) * (lam - lam1) <= 0:
            if lam < lam1:
                u, rec = problem.newton(problem.linear_guess(), 0.0)
                if rec.converged:
                    return problem.continuation(u, 0.0, lam, min_step)
            return problem.newton(side_guess(lam), lam)
        return problem.continuation(u_prev, lam_prev, lam, min_step)

    dl = (hi - lo) / steps
    grid = [lo + (j + 0.5) * dl for j in range(steps)]
    samples: List[AmpSample] = []
    solutions: List[np.ndarray] = []
    u_prev, lam_prev = None, None
    for lam in grid:
        u, rec = solve_from(u_prev, lam_prev, lam)
        samples.append(_sample(lam, u, rec, forms.free, in_E))
        solutions.append(u)
        if rec.converged:
            u_prev, lam_prev = u, lam
        else:
            log.warning(f"lam={lam:.8g}: {rec.status} (residual {rec.residual:.3e}).")
            u_prev, lam_prev = None, None

    def window_width(key: str) -> float:
        above = [i for i, lam in enumerate(grid) if lam > lam1]
        last = None
        for i in above:
            s = samples[i]
            if s.converged and getattr(s, key) < 0:
                last = i
            else:
                break
        if last is None:
            return 0.0
        nxt = above.index(last) + 1
        if nxt >= len(above):
            return grid[last] - lam1
        a, b_ = grid[last], grid[above[nxt]]
        ua = solutions[last]
        while b_ - a > BISECTION_REL * lam1:
            mid = 0.5 * (a + b_)
            um, rec = problem.continuation(ua, a, mid, min_step)
            key_val = um[forms.free].max() if key == "max_global" else um[in_E].max()
            if rec.converged and key_val < 0:
                a, ua = mid, um
            else:
                b_ = mid
        return a - lam1

    delta_local = window_width("max_on_E")
    # Negativity at every free node implies negativity on E.
    delta_global = min(window_width("max_global"), delta_local)
    nonneg_above = sum(1 for s in samples if s.lam > lam1 and s.nonnegative)
    log.info(
        f"AMP scan over [{lo:.6g}, {hi:.6g}] ({steps} steps): "
        f"delta_local={delta_local:.6g} delta_global={delta_global:.6g}"
    )
    return AmpScanResult(
        lambda1=lam1,
        lambda_grid=grid,
        per_lambda=samples,
        region_E=E,
        delta_local=delta_local,
        delta_global=delta_global,
        nonnegative_above=nonneg_above,
        solutions=[s.tolist() for s in solutions],
    )
