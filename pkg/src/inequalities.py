"""Radial property tests of the functional inequalities behind the eigenproblem.

All integrals are radial, ∫_{R^N} f(|x|) dx = omega ∫_0^inf f(r) r^(N-1) dr.
For the basic weighted Hardy inequality the omega factor cancels; the
generalized form keeps it because the two sides carry different powers.
"""

import logging
import math
from typing import Callable, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, model_validator
from scipy.optimize import minimize_scalar

from src.errors import PreconditionError
from src.numerics import graded_gauss
from src.solvers.fem import DiscreteFunction, surface_measure

__all__ = [
    "InequalityReport",
    "TrialFamily",
    "TrialFunction",
    "Violation",
    "check_ckn",
    "check_embedding",
    "check_picone",
    "ckn_ratio",
    "critical_exponent",
    "hardy_constant_oracle",
    "picone_expression",
    "picone_suite",
]

log = logging.getLogger("app.inequalities")

RELATIVE_SLACK = 1e-10
ORACLE_LOG_SPAN = 1e10
ORACLE_Z_BOUND = 40.0


class TrialFunction(BaseModel):
    """u(r) = max(0, 1 - (r/rho)^2)^k * (r^2 + delta^2)^(m/2)."""

    rho: float = Field(gt=0)
    k: float = Field(ge=1)
    m: float = 0.0
    delta: float = Field(default=0.0, ge=0)

    @model_validator(mode="after")
    def _check_integrable(self):
        if self.m < 0 and self.delta == 0:
            raise ValueError("m < 0 needs a positive regularization radius delta.")
        return self

    def value(self, r: np.ndarray) -> np.ndarray:
        """u(r)."""
        t = np.clip(1.0 - (r / self.rho) ** 2, 0.0, None)
        return t**self.k * (r * r + self.delta**2) ** (self.m / 2.0)

    def derivative(self, r: np.ndarray) -> np.ndarray:
        """u'(r), zero outside the support."""
        t = np.clip(1.0 - (r / self.rho) ** 2, 0.0, None)
        s = r * r + self.delta**2
        bump = t**self.k
        dbump = -2.0 * self.k * r / self.rho**2 * t ** (self.k - 1.0)
        power = s ** (self.m / 2.0)
        dpower = self.m * r * s ** (self.m / 2.0 - 1.0)
        return dbump * power + bump * dpower


class TrialFamily(BaseModel):
    """Seeded sampler of trial functions; parameters drawn uniformly in the ranges."""

    rho: Tuple[float, float] = (0.2, 5.0)
    k: Tuple[float, float] = (1.0, 6.0)
    m: Tuple[float, float] = (0.0, 3.0)
    delta: Tuple[float, float] = (0.0, 0.0)
    samples: int = Field(default=1000, ge=1)
    seed: int = 0

    @model_validator(mode="after")
    def _check_ranges(self):
        for name in ("rho", "k", "m", "delta"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} range {lo} > {hi}.")
        if self.rho[0] <= 0 or self.k[0] < 1 or self.delta[0] < 0:
            raise ValueError("Need rho > 0, k >= 1 and delta >= 0.")
        if self.m[0] < 0 and self.delta[0] <= 0:
            raise ValueError("Negative m needs delta bounded away from 0.")
        return self

    @classmethod
    def near_extremal(cls, N: int, p: float, alpha: float, samples: int = 1000, seed: int = 0):
        """Regularized powers r^m with m just above the critical -(N - p beta)/p.

        For m at the critical exponent both sides of the basic inequality diverge
        logarithmically at 0 and their ratio tends to the sharp constant.
        """
        gamma = (N - p * (alpha + 1.0)) / p
        if not gamma > 0:
            raise PreconditionError(f"Need N - p beta > 0, got {N - p * (alpha + 1.0):g}.")
        return cls(
            rho=(1.0, 5.0),
            k=(1.0, 2.0),
            m=(-0.98 * gamma, -0.8 * gamma),
            delta=(1e-8, 1e-5),
            samples=samples,
            seed=seed,
        )

    def draw(self) -> List[TrialFunction]:
        """The family's trial functions, identical for identical seeds."""
        rng = np.random.default_rng(self.seed)
        n = self.samples
        rho = rng.uniform(*self.rho, n)
        k = rng.uniform(*self.k, n)
        m = rng.uniform(*self.m, n)
        lo, hi = self.delta
        if lo > 0:
            delta = np.exp(rng.uniform(math.log(lo), math.log(hi), n))
        else:
            delta = rng.uniform(lo, hi, n)
        return [
            TrialFunction(rho=float(a), k=float(b), m=float(c), delta=float(d))
            for a, b, c, d in zip(rho, k, m, delta)
        ]


class Violation(BaseModel):
    """A trial whose ratio exceeds the bound."""

    trial: TrialFunction
    ratio: float
    bound: Optional[float] = None


class InequalityReport(BaseModel):
    """Largest observed ratio lhs/rhs over a trial family."""

    inequality: Literal["ckn_basic", "ckn_generalized", "embedding", "picone"]
    trials: int
    max_ratio: float
    attaining: Optional[TrialFunction] = None
    violations: List[Violation] = []
    oracle_constant: Optional[float] = None
    declared_constant: Optional[float] = None
    p_star: Optional[float] = None
    picone_min: Optional[float] = None

    @property
    def passed(self) -> bool:
        """No violations recorded."""
        return not self.violations


def _radial(f: Callable[[np.ndarray], np.ndarray], rho: float) -> float:
    """∫_0^rho f(r) dr for integrands supported in [0, rho]."""
    return graded_gauss(f, 0.0, rho)


def _ratio(lhs: float, rhs: float) -> float:
    if lhs == 0.0 and rhs == 0.0:
        return 0.0
    if rhs == 0.0:
        return math.inf
    return lhs / rhs


def critical_exponent(N: int, p: float, alpha: float) -> float:
    """p*_alpha = N p / (N - p - p alpha).

    Raises:
        PreconditionError: N - p - p alpha <= 0.
    """
    denom = N - p - p * alpha
    if not denom > 0:
        raise PreconditionError(
            f"p*_α = Np/(N-p-pα) is undefined: N - p - pα = {denom:g} <= 0."
        )
    return N * p / denom


def ckn_ratio(
    u: Callable, du: Callable, rho: float, spec, variant: Literal["basic", "generalized"]
) -> float:
    """lhs/rhs of the weighted Hardy (basic) or Sobolev-type (generalized) inequality."""
    N, p, alpha, beta = spec.N, spec.p, spec.alpha, spec.beta
    if variant == "basic":
        if not -1 < alpha < 0:
            raise PreconditionError(f"Need alpha in (-1, 0), got {alpha}.")
        lhs = _radial(lambda r: r ** (-p * beta + N - 1) * np.abs(u(r)) ** p, rho)
        rhs = _radial(lambda r: r ** (-p * alpha + N - 1) * np.abs(du(r)) ** p, rho)
        return _ratio(lhs, rhs)
    p_star = critical_exponent(N, p, alpha)
    omega = surface_measure(N)
    lhs = _radial(lambda r: r ** (N - 1) * np.abs(u(r)) ** p_star, rho)
    rhs = omega * _radial(lambda r: spec.L(r) * r ** (N - 1) * np.abs(du(r)) ** p, rho)
    return _ratio((omega * lhs) ** (p / p_star), rhs)


def hardy_constant_oracle(N: int, alpha: float) -> float:
    """Sharp p = 2 constant (2 / (N - 2 - 2 alpha))^2 by 1-D Rayleigh maximization.

    Trials are u = 1 on [0, 1], r^-gamma on [1, T], T^-gamma (r/T)^-d beyond,
    with d = N - 2 - 2 alpha and T = e^Lspan. Both sides are closed-form in
    z = (d - 2 gamma) Lspan; the ratio is maximized over z with a bounded
    scalar search. The result approaches the sharp constant from below.
    """
    d = N - 2.0 - 2.0 * alpha
    if not d > 0:
        raise PreconditionError(f"Need N - 2 - 2 alpha > 0, got {d:g}.")
    span = ORACLE_LOG_SPAN
    gamma2 = d

    def ratio(z: float) -> float:
        gam = 0.5 * (d - z / span)
        phi = math.expm1(z) / z if z != 0 else 1.0
        mid = span * phi
        tail = math.exp(z) / (2.0 * gamma2 - d)
        lhs = 1.0 / d + mid + tail
        rhs = gam**2 * mid + gamma2**2 * tail
        return lhs / rhs

    res = minimize_scalar(
        lambda z: -ratio(z),
        bounds=(-ORACLE_Z_BOUND, ORACLE_Z_BOUND),
        method="bounded",
        options={"xatol": 1e-10},
    )
    best = ratio(float(res.x))
    log.debug(f"Hardy oracle N={N} alpha={alpha}: {best:.12g} at z={res.x:.6g}")
    return best


def _scan(
    family: TrialFamily,
    name,
    ratio_fn: Callable[[TrialFunction], float],
    bound: Optional[float],
) -> InequalityReport:
    trials = family.draw()
    best, attaining = -math.inf, None
    violations: List[Violation] = []
    for t in trials:
        ratio = ratio_fn(t)
        if ratio > best:
            best, attaining = ratio, t
        if not math.isfinite(ratio) or (
            bound is not None and ratio > bound * (1.0 + RELATIVE_SLACK)
        ):
            violations.append(Violation(trial=t, ratio=ratio, bound=bound))
    if violations:
        log.warning(f"{name}: {len(violations)} of {len(trials)} trials violate the bound.")
    log.info(f"{name}: max ratio {best:.10g} over {len(trials)} trials.")
    return InequalityReport(
        inequality=name,
        trials=len(trials),
        max_ratio=best,
        attaining=attaining,
        violations=violations,
        declared_constant=bound,
    )


def check_ckn(
    family: TrialFamily, spec, variant: Literal["basic", "generalized"] = "basic"
) -> InequalityReport:
    """Largest trial ratio for the basic or generalized inequality.

    The basic p = 2 case is checked against the oracle constant. The generalized
    constant is unknown, so the maximum ratio is reported as a lower bound and
    only non-finite ratios count as violations.
    """
    if variant == "basic":
        if not -1 < spec.alpha < 0:
            raise PreconditionError(f"Need alpha in (-1, 0), got {spec.alpha}.")
        oracle = None
        if spec.p == 2 and spec.N - 2 - 2 * spec.alpha > 0:
            oracle = hardy_constant_oracle(spec.N, spec.alpha)
        report = _scan(
            family, "ckn_basic",
            lambda t: ckn_ratio(t.value, t.derivative, t.rho, spec, "basic"),
            oracle,
        )
        return report.model_copy(update={"oracle_constant": oracle})
    p_star = critical_exponent(spec.N, spec.p, spec.alpha)
    report = _scan(
        family, "ckn_generalized",
        lambda t: ckn_ratio(t.value, t.derivative, t.rho, spec, "generalized"),
        None,
    )
    return report.model_copy(update={"p_star": p_star})


def check_embedding(family: TrialFamily, spec, C: float) -> InequalityReport:
    """∫|K||u|^p <= C ∫ L |u'|^p for every trial (omega cancels)."""
    if not (C > 0 and math.isfinite(C)):
        raise PreconditionError(f"Embedding constant must be finite and positive, got {C}.")
    N, p = spec.N, spec.p

    def ratio(t: TrialFunction) -> float:
        lhs = _radial(lambda r: np.abs(spec.K(r)) * r ** (N - 1) * np.abs(t.value(r)) ** p, t.rho)
        rhs = _radial(lambda r: spec.L(r) * r ** (N - 1) * np.abs(t.derivative(r)) ** p, t.rho)
        return _ratio(lhs, rhs)

    return _scan(family, "embedding", ratio, C)


def picone_expression(u: DiscreteFunction, v: DiscreteFunction, p: float) -> np.ndarray:
    """|u'|^p - |v'|^(p-2) v' (u^p / v^(p-1))' at the 2-point Gauss points.

    With t = u/v the expansion is |a|^p - p |b|^(p-2) b a + (p-1) |b|^p for
    a = u' and b = v' t, which is >= 0 by convexity of |.|^p.
    """
    mesh = u.mesh
    if not np.array_equal(mesh.nodes, v.mesh.nodes):
        raise ValueError("u and v must live on the same mesh.")
    scale = float(np.max(np.abs(v.values)))
    if (u.values < 0).any():
        raise PreconditionError("Picone needs u >= 0.")
    if not v.values.min() > 1e-12 * scale:
        raise PreconditionError("v is not bounded away from 0 on the mesh.")
    h = mesh.widths[:, None]
    rq = mesh.quad_points
    phi_r = (rq - mesh.nodes[:-1, None]) / h
    phi_l = 1.0 - phi_r
    uq = phi_l * u.values[:-1, None] + phi_r * u.values[1:, None]
    vq = phi_l * v.values[:-1, None] + phi_r * v.values[1:, None]
    a = np.broadcast_to((np.diff(u.values) / mesh.widths)[:, None], uq.shape)
    b = (np.diff(v.values) / mesh.widths)[:, None] * (uq / vq)
    # |b|^(p-2) b written as sign(b) |b|^(p-1) so b = 0 is harmless for p < 2.
    flux = np.sign(b) * np.abs(b) ** (p - 1.0)
    return np.abs(a) ** p - p * flux * a + (p - 1.0) * np.abs(b) ** p


def check_picone(u: DiscreteFunction, v: DiscreteFunction, p: float) -> float:
    """Minimum of the Picone expression over all quadrature points."""
    return float(picone_expression(u, v, p).min())


def picone_suite(
    family: TrialFamily, mesh, p: float, floor: float = 0.05
) -> InequalityReport:
    """Sample trial pairs onto the mesh and record the worst Picone minimum.

    v is lifted by `floor` so that it stays bounded away from 0.
    """
    nodes = mesh.nodes
    trials = family.draw()
    worst, violations, pairs = math.inf, [], 0
    for i in range(0, len(trials) - 1, 2):
        tu, tv = trials[i], trials[i + 1]
        u = DiscreteFunction(mesh, tu.value(nodes), dirichlet_at_R=False)
        v = DiscreteFunction(mesh, tv.value(nodes) + floor, dirichlet_at_R=False)
        expr = picone_expression(u, v, p)
        scale = max(1.0, float(np.max(np.abs(np.diff(u.values) / mesh.widths))) ** p)
        m = float(expr.min())
        pairs += 1
        worst = min(worst, m)
        if m < -RELATIVE_SLACK * scale:
            violations.append(Violation(trial=tu, ratio=m))
    log.info(f"picone: minimum {worst:.3e} over {pairs} pairs.")
    return InequalityReport(
        inequality="picone",
        trials=pairs,
        max_ratio=0.0,
        violations=violations,
        picone_min=worst,
    )
