"""Radial weight functions and the admissibility checks built on them.

Weights are pydantic models discriminated on `kind`, so any weight can be read
straight from an experiment config. Every variant is vectorized: calling it on
an array returns an array, calling it on a float returns a float.
"""

import logging
import math
from typing import Annotated, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, model_validator

from src.errors import InvalidWeightError, PreconditionError, WorkbenchError
from src.numerics import DEFAULT_TOL, QuadratureResult, integrate

__all__ = [
    "AdmissibilityReport",
    "ConstantWeight",
    "ExponentialWeight",
    "PiecewiseWeight",
    "PowerWeight",
    "ProblemSpec",
    "ProductPowerWeight",
    "ReciprocalWeight",
    "Segment",
    "TableWeight",
    "ViolationRecord",
    "WeightAdapter",
    "WeightFunction",
    "admissible_example_spec",
    "boundedness_integral",
    "check_admissibility",
    "compute_F",
    "compute_G",
    "embedding_constant",
    "growth_family_spec",
]

log = logging.getLogger("app.weights")

Positivity = Literal["strictly_positive", "nonnegative", "sign_changing"]

SAMPLE_GRID = np.logspace(-6, 6, 241)
# Past this, e^{-x} underflows and positivity can no longer be sampled.
_EXP_UNDERFLOW = 700.0
EQUALITY_MARGIN = 1e-12
G_CURVE_POINTS = 24


class _Weight(BaseModel):
    """Shared behaviour of all weight variants."""

    model_config = ConfigDict(frozen=True)

    positivity: Positivity = "strictly_positive"

    def __call__(self, r):
        """Evaluate at a radius or an array of radii."""
        arr = np.asarray(r, dtype=float)
        flat = np.atleast_1d(arr)
        with np.errstate(all="ignore"):
            out = np.broadcast_to(np.asarray(self._eval(flat), dtype=float), flat.shape)
        if arr.ndim == 0:
            return float(out[0])
        return out.reshape(arr.shape)

    def _eval(self, r: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _sample_grid(self) -> np.ndarray:
        return SAMPLE_GRID

    def endpoint_exponents(self) -> Tuple[float, float]:
        """Power-law exponents (e0, e_inf) with |W(r)| ~ r^e at 0 and at inf.

        Vanishing faster than any power is +inf at 0 and -inf at inf.
        """
        raise NotImplementedError

    def breakpoints(self) -> List[float]:
        """Radii where the weight is not smooth."""
        return []

    def scaled(self, c: float):
        """Return c * W for c > 0."""
        if not c > 0:
            raise ValueError(f"Scale factor must be positive, got {c}.")
        return self._scaled(c)

    def _scaled(self, c: float):
        return self.model_copy(update={"coeff": self.coeff * c})  # type: ignore[attr-defined]

    @model_validator(mode="after")
    def _check_declared_sign(self):
        if self.positivity == "sign_changing":
            return self
        grid = self._sample_grid()
        vals = self(grid)
        if self.positivity == "strictly_positive":
            bad = ~(vals > 0)
        else:
            bad = ~(vals >= 0)
        if bad.any():
            i = int(np.argmax(bad))
            raise ValueError(
                f"Weight declared {self.positivity} evaluates to {vals[i]!r} "
                f"at r={grid[i]:g}."
            )
        return self


class ConstantWeight(_Weight):
    """W(r) = value."""

    kind: Literal["constant"] = "constant"
    value: float = 1.0

    def _eval(self, r):
        return np.full(r.shape, self.value)

    def endpoint_exponents(self):
        if self.value == 0.0:
            return math.inf, -math.inf
        return 0.0, 0.0

    def _scaled(self, c):
        return self.model_copy(update={"value": self.value * c})


class PowerWeight(_Weight):
    """W(r) = coeff * r^exponent."""

    kind: Literal["power"] = "power"
    coeff: float = 1.0
    exponent: float

    def _eval(self, r):
        return self.coeff * r**self.exponent

    def endpoint_exponents(self):
        return self.exponent, self.exponent


class ProductPowerWeight(_Weight):
    """W(r) = coeff * r^a * (1 + r^zeta)."""

    kind: Literal["product_power"] = "product_power"
    coeff: float = 1.0
    a: float
    zeta: float

    def _eval(self, r):
        return self.coeff * r**self.a * (1.0 + r**self.zeta)

    def endpoint_exponents(self):
        if self.zeta > 0:
            return self.a, self.a + self.zeta
        if self.zeta < 0:
            return self.a + self.zeta, self.a
        return self.a, self.a


class ExponentialWeight(_Weight):
    """W(r) = coeff * r^a * exp(-rate * r)."""

    kind: Literal["exponential"] = "exponential"
    coeff: float = 1.0
    a: float = 0.0
    rate: float = 1.0

    def _eval(self, r):
        return self.coeff * r**self.a * np.exp(-self.rate * r)

    def _sample_grid(self):
        if self.rate <= 0:
            return SAMPLE_GRID
        return SAMPLE_GRID[SAMPLE_GRID * self.rate < _EXP_UNDERFLOW]

    def endpoint_exponents(self):
        if self.rate > 0:
            return self.a, -math.inf
        if self.rate < 0:
            return self.a, math.inf
        return self.a, self.a


class ReciprocalWeight(_Weight):
    """W(r) = coeff / (r^a + shift)."""

    kind: Literal["reciprocal"] = "reciprocal"
    coeff: float = 1.0
    a: float
    shift: float = 0.0

    def _eval(self, r):
        return self.coeff / (r**self.a + self.shift)

    def endpoint_exponents(self):
        if self.a > 0:
            return (0.0 if self.shift != 0 else -self.a), -self.a
        if self.a < 0:
            return -self.a, (0.0 if self.shift != 0 else -self.a)
        return 0.0, 0.0


class TableWeight(_Weight):
    """Tabulated weight, log-log linear inside, boundary power law outside."""

    kind: Literal["table"] = "table"
    radii: List[float]
    values: List[float]

    @model_validator(mode="before")
    @classmethod
    def _check_table(cls, data):
        if isinstance(data, dict) and "radii" in data and "values" in data:
            radii = np.asarray(data["radii"], dtype=float)
            values = np.asarray(data["values"], dtype=float)
            if radii.shape != values.shape or radii.size < 2:
                raise ValueError("Table needs at least two (radius, value) pairs.")
            if not (radii > 0).all() or not (np.diff(radii) > 0).all():
                raise ValueError("Table radii must be positive and strictly increasing.")
            if not (values > 0).all():
                raise ValueError("Table values must be positive for log-log interpolation.")
        return data

    def _slopes(self):
        lx, ly = np.log(self.radii), np.log(self.values)
        return (ly[1] - ly[0]) / (lx[1] - lx[0]), (ly[-1] - ly[-2]) / (lx[-1] - lx[-2])

    def _eval(self, r):
        lx, ly = np.log(self.radii), np.log(self.values)
        s0, s1 = self._slopes()
        x = np.log(r)
        y = np.interp(x, lx, ly)
        y = np.where(x < lx[0], ly[0] + s0 * (x - lx[0]), y)
        y = np.where(x > lx[-1], ly[-1] + s1 * (x - lx[-1]), y)
        return np.exp(y)

    def endpoint_exponents(self):
        return self._slopes()

    def _scaled(self, c):
        return self.model_copy(update={"values": [v * c for v in self.values]})


class Segment(BaseModel):
    """One piece of a piecewise weight, active up to `upto` (None: to infinity)."""

    model_config = ConfigDict(frozen=True)

    upto: Optional[float] = None
    weight: "WeightFunction"


class PiecewiseWeight(_Weight):
    """Weight switching variant at increasing breakpoints.

    Segment i covers (upto_{i-1}, upto_i]; the last segment has upto = None.
    """

    kind: Literal["piecewise"] = "piecewise"
    segments: List[Segment]

    @model_validator(mode="before")
    @classmethod
    def _check_segments(cls, data):
        if not isinstance(data, dict) or "segments" not in data:
            return data
        segs = data["segments"]
        if not segs:
            raise ValueError("Piecewise weight needs at least one segment.")
        uptos = [s.upto if isinstance(s, Segment) else s.get("upto") for s in segs]
        if uptos[-1] is not None:
            raise ValueError("Last segment must extend to infinity (upto = None).")
        finite = uptos[:-1]
        if any(u is None or not u > 0 for u in finite):
            raise ValueError("Inner breakpoints must be finite and positive.")
        if any(b <= a for a, b in zip(finite, finite[1:])):
            raise ValueError(f"Breakpoints must be strictly increasing, got {finite}.")
        return data

    def _eval(self, r):
        out = np.empty(r.shape)
        lower = -math.inf
        for seg in self.segments:
            upper = math.inf if seg.upto is None else seg.upto
            mask = (r > lower) & (r <= upper)
            if mask.any():
                out[mask] = seg.weight(r[mask])
            lower = upper
        return out

    def _sample_grid(self):
        parts, lower = [], -math.inf
        for seg in self.segments:
            upper = math.inf if seg.upto is None else seg.upto
            g = seg.weight._sample_grid()
            parts.append(g[(g > lower) & (g <= upper)])
            lower = upper
        return np.concatenate(parts)

    def endpoint_exponents(self):
        return (
            self.segments[0].weight.endpoint_exponents()[0],
            self.segments[-1].weight.endpoint_exponents()[1],
        )

    def breakpoints(self):
        out = []
        lower = 0.0
        for seg in self.segments:
            upper = math.inf if seg.upto is None else seg.upto
            out.extend(b for b in seg.weight.breakpoints() if lower < b < upper)
            if seg.upto is not None:
                out.append(seg.upto)
            lower = upper
        return sorted(out)

    def _scaled(self, c):
        segs = [s.model_copy(update={"weight": s.weight.scaled(c)}) for s in self.segments]
        return self.model_copy(update={"segments": segs})


WeightFunction = Annotated[
    Union[
        ConstantWeight,
        PowerWeight,
        ProductPowerWeight,
        ExponentialWeight,
        ReciprocalWeight,
        TableWeight,
        PiecewiseWeight,
    ],
    Field(discriminator="kind"),
]
Segment.model_rebuild()
PiecewiseWeight.model_rebuild()

WeightAdapter: TypeAdapter[WeightFunction] = TypeAdapter(WeightFunction)


class ProblemSpec(BaseModel):
    """Dimension, exponents, weights and truncation window of one problem."""

    model_config = ConfigDict(frozen=True)

    N: int = Field(ge=2)
    p: float = Field(gt=1)
    alpha: float = Field(default=-0.5, gt=-1, lt=0)
    L: WeightFunction
    K: WeightFunction
    v: Optional[WeightFunction] = None
    w: Optional[WeightFunction] = None
    eps: float = Field(default=1e-4, gt=0)
    R: float = 10.0

    @property
    def beta(self) -> float:
        """beta = alpha + 1."""
        return self.alpha + 1.0

    @property
    def p_conj(self) -> float:
        """Conjugate exponent p' = p / (p - 1)."""
        return self.p / (self.p - 1.0)

    @model_validator(mode="after")
    def _check_window(self):
        if not self.eps < self.R:
            raise ValueError(f"Need eps < R, got eps={self.eps}, R={self.R}.")
        if self.L.positivity != "strictly_positive":
            raise ValueError("L must be declared strictly_positive.")
        return self


class ViolationRecord(BaseModel):
    """Worst sample point of a failed pointwise check."""

    check: str
    r: float
    lhs: float
    rhs: float
    relative_gap: float


class AdmissibilityReport(BaseModel):
    """Outcome of check_admissibility."""

    c1_holds: bool
    c1_violation: Optional[ViolationRecord] = None
    v_bound_holds: bool
    v_bound_violation: Optional[ViolationRecord] = None
    w_bound_holds: bool
    w_bound_violation: Optional[ViolationRecord] = None
    G_curve: List[Tuple[float, float]]
    embedding_constant: Optional[QuadratureResult] = None
    # Set when w changes sign and the integral above was taken over |w|.
    embedding_of_abs_w: bool = False
    compact_embedding: Optional[bool] = None
    verdict: Literal["admissible", "inadmissible"]
    reasons: List[str] = []
    warnings: List[str] = []


def _require(weight, name: str):
    if weight is None:
        raise PreconditionError(f"Weight {name} is required but not set.")
    return weight


def _positive(weight, name: str, allow_zero: bool = False):
    """Wrap a weight as a scalar function that refuses nonpositive values.

    With `allow_zero`, exact zeros (underflow of decaying weights) pass.
    """

    def f(t: float) -> float:
        y = weight(t)
        if not (y > 0 or (allow_zero and y == 0.0)):
            raise InvalidWeightError(f"{name}({t:g}) = {y!r} is not positive.")
        return y

    return f


def compute_G(spec: ProblemSpec, r: float, tol: float = DEFAULT_TOL) -> QuadratureResult:
    """G(r) = (int_r^inf t^((1-N)/(p-1)) v(t)^(-1/(p-1)) dt)^(p-1).

    Raises:
        InvalidWeightError: v is not positive somewhere on (r, inf).
    """
    if not r > 0:
        raise ValueError(f"r must be positive, got {r}.")
    v = _require(spec.v, "v")
    if v.positivity == "sign_changing":
        raise InvalidWeightError("v must be positive, but it is declared sign_changing.")
    vpos = _positive(v, "v")
    q = 1.0 / (spec.p - 1.0)
    e = (1.0 - spec.N) * q

    def integrand(t: float) -> float:
        return t**e * vpos(t) ** -q

    inner = integrate(integrand, (r, math.inf), tol=tol)
    if inner.divergent:
        return inner
    power = spec.p - 1.0
    value = inner.value**power
    err = power * abs(inner.value) ** (power - 1.0) * inner.error_estimate
    return inner.model_copy(update={"value": value, "error_estimate": err})


def embedding_constant(
    spec: ProblemSpec, tol: float = DEFAULT_TOL, magnitude: bool = False
) -> QuadratureResult:
    """C = int_0^inf r^(N-1) w(r) G(r) dr, with the divergent endpoint identified.

    With `magnitude`, |w| stands in for w. This only serves to locate where
    the integral of a sign-changing w diverges; it is not an embedding constant.
    """
    w = _require(spec.w, "w")
    if not magnitude and w.positivity != "strictly_positive":
        raise InvalidWeightError(f"w must be strictly positive, declared {w.positivity}.")
    g1 = compute_G(spec, 1.0, tol)
    if g1.divergent:
        log.info("G diverges, so C is reported divergent at infinity.")
        return g1
    if magnitude:

        def wpos(t: float) -> float:
            return abs(w(t))

    else:
        wpos = _positive(w, "w", allow_zero=True)
    calls = 0

    def integrand(r: float) -> float:
        nonlocal calls
        g = compute_G(spec, r, tol)
        calls += g.evaluations
        if g.divergent:
            raise PreconditionError(f"G(r) diverges at r={r:g} although G(1) is finite.")
        return r ** (spec.N - 1) * wpos(r) * g.value

    res = integrate(integrand, (0.0, math.inf), tol=tol, singular_left=True)
    log.debug(f"C: {res.verdict} after {res.evaluations} outer and {calls} inner evaluations.")
    return res.model_copy(update={"evaluations": res.evaluations + calls})


def compute_F(L, r: float, tol: float = DEFAULT_TOL) -> QuadratureResult:
    """F(r) = int_0^r ds / (s L(s)); divergent verdicts point at 0."""
    if not r > 0:
        raise ValueError(f"r must be positive, got {r}.")
    lpos = _positive(L, "L")

    def integrand(s: float) -> float:
        return 1.0 / (s * lpos(s))

    return integrate(integrand, (0.0, r), tol=tol, singular_left=True)


def boundedness_integral(K, L, tol: float = DEFAULT_TOL) -> QuadratureResult:
    """int_0^inf s F(s)^2 K(s) ds, the constant in the radial sup bound.

    Raises:
        PreconditionError: K may change sign, or F already diverges at 0.
    """
    if K.positivity == "sign_changing":
        raise PreconditionError("Hypothesis K >= 0 fails: K is declared sign_changing.")
    f1 = compute_F(L, 1.0, tol)
    if f1.divergent:
        raise PreconditionError(
            "Hypothesis (r L(r))^{-1} ∈ L^1(0, ∞) fails: F diverges at 0."
        )

    unsettled: List[float] = []

    def integrand(s: float) -> float:
        k = K(s)
        if k == 0.0:
            return 0.0
        f = compute_F(L, s, tol)
        if f.divergent:
            raise PreconditionError(f"F diverges at s={s:g} although F(1) is finite.")
        if not f.convergent:
            unsettled.append(s)
        return s * f.value**2 * k

    res = integrate(integrand, (0.0, math.inf), tol=tol, singular_left=True)
    if unsettled and res.convergent:
        # The outer sum is only as good as the F values inside it.
        log.warning(f"F was inconclusive at {len(unsettled)} radii, e.g. s={unsettled[0]:g}.")
        return res.model_copy(update={"verdict": "inconclusive"})
    return res


def _strict_check(
    name: str, lhs: np.ndarray, rhs: np.ndarray, grid: np.ndarray, greater: bool
) -> Tuple[bool, Optional[ViolationRecord], List[str]]:
    """Check lhs > rhs (or <) with isolated equalities demoted to warnings."""
    with np.errstate(all="ignore"):
        gap = (lhs - rhs) / np.abs(rhs)
    if not greater:
        gap = -gap
    gap = np.where(np.isfinite(gap), gap, -math.inf)
    fail = gap < -EQUALITY_MARGIN
    equal = ~fail & (gap <= EQUALITY_MARGIN)
    run = np.zeros_like(equal)
    run[:-1] |= equal[:-1] & equal[1:]
    run[1:] |= equal[:-1] & equal[1:]
    fail |= run
    warnings = [
        f"{name}: equality at isolated sample r={grid[i]:g}"
        for i in np.flatnonzero(equal & ~run)
    ]
    if not fail.any():
        return True, None, warnings
    i = int(np.argmin(np.where(fail, gap, math.inf)))
    rec = ViolationRecord(
        check=name, r=float(grid[i]), lhs=float(lhs[i]), rhs=float(rhs[i]),
        relative_gap=float(gap[i]),
    )
    return False, rec, warnings


def _loose_check(
    name: str, lhs: np.ndarray, rhs: np.ndarray, grid: np.ndarray
) -> Tuple[bool, Optional[ViolationRecord]]:
    """Check lhs >= rhs up to the relative margin."""
    with np.errstate(all="ignore"):
        gap = (lhs - rhs) / np.maximum(np.abs(rhs), np.finfo(float).tiny)
    gap = np.where(np.isfinite(gap), gap, -math.inf)
    fail = gap < -EQUALITY_MARGIN
    if not fail.any():
        return True, None
    i = int(np.argmin(gap))
    return False, ViolationRecord(
        check=name, r=float(grid[i]), lhs=float(lhs[i]), rhs=float(rhs[i]),
        relative_gap=float(gap[i]),
    )


def _exponent_findings(spec: ProblemSpec) -> Tuple[List[str], List[str], List[str]]:
    """Endpoint power-law comparisons the sample grid cannot see.

    Returns the failed findings for the v bound, the w bound and (C1).
    """
    v, w = spec.v, spec.w
    pa, pb = -spec.p * spec.alpha, -spec.p * spec.beta
    v0, vinf = v.endpoint_exponents()
    w0, winf = w.endpoint_exponents()
    l0, linf = spec.L.endpoint_exponents()
    k0, kinf = spec.K.endpoint_exponents()
    v_f, w_f, c1_f = [], [], []
    if vinf < pa:
        v_f.append(f"v ~ r^{vinf:g} falls below r^(-p alpha) = r^{pa:g} as r -> inf")
    if v0 > pa:
        v_f.append(f"v ~ r^{v0:g} falls below r^(-p alpha) = r^{pa:g} as r -> 0")
    if w0 < pb:
        w_f.append(f"w ~ r^{w0:g} exceeds r^(-p beta) = r^{pb:g} as r -> 0")
    if winf > pb:
        w_f.append(f"w ~ r^{winf:g} exceeds r^(-p beta) = r^{pb:g} as r -> inf")
    if l0 > v0 or linf < vinf:
        c1_f.append(f"L exponents ({l0:g}, {linf:g}) cannot dominate v ({v0:g}, {vinf:g})")
    if k0 < w0 or kinf > winf:
        c1_f.append(f"|K| exponents ({k0:g}, {kinf:g}) escape w ({w0:g}, {winf:g})")
    return v_f, w_f, c1_f


def _integrable(weight, tol: float) -> bool:
    res = integrate(weight, (0.0, math.inf), tol=max(tol, 1e-8), singular_left=True)
    return res.convergent


def check_admissibility(
    spec: ProblemSpec, grid_size: int = 64, tol: float = DEFAULT_TOL
) -> AdmissibilityReport:
    """Check the pointwise conditions and the embedding integral for (v, w).

    Pointwise checks run on a log grid over [eps/10, 10 R] and are backed by
    endpoint exponent comparisons. Violations are report content, not errors.
    """
    if grid_size < 16:
        raise ValueError(f"grid_size must be at least 16, got {grid_size}.")
    v, w = _require(spec.v, "v"), _require(spec.w, "w")
    grid = np.geomspace(spec.eps / 10.0, 10.0 * spec.R, grid_size)
    p, alpha, beta = spec.p, spec.alpha, spec.beta
    vv, ww = v(grid), w(grid)
    ll, kk = spec.L(grid), np.abs(spec.K(grid))
    reasons: List[str] = []

    v_ok, v_rec, v_warn = _strict_check(
        "v > r^(-p alpha)", vv, grid ** (-p * alpha), grid, greater=True
    )
    w_pos = bool((ww > 0).all())
    w_ok, w_rec, w_warn = _strict_check(
        "w < r^(-p beta)", ww, grid ** (-p * beta), grid, greater=False
    )
    if not w_pos:
        i = int(np.argmax(~(ww > 0)))
        w_ok = False
        w_rec = ViolationRecord(
            check="w > 0", r=float(grid[i]), lhs=float(ww[i]), rhs=0.0,
            relative_gap=-math.inf,
        )
    l_ok, l_rec = _loose_check("L >= v", ll, vv, grid)
    k_ok, k_rec = _loose_check("|K| <= w", ww, kk, grid)
    c1_ok = l_ok and k_ok
    c1_rec = l_rec or k_rec

    v_f, w_f, c1_f = _exponent_findings(spec)
    v_ok = v_ok and not v_f
    w_ok = w_ok and not w_f
    c1_ok = c1_ok and not c1_f
    for flag, rec, findings, label in (
        (v_ok, v_rec, v_f, "v bound"),
        (w_ok, w_rec, w_f, "w bound"),
        (c1_ok, c1_rec, c1_f, "C1"),
    ):
        if flag:
            continue
        if rec is not None:
            reasons.append(f"{label} fails: {rec.check} at r={rec.r:g} (gap {rec.relative_gap:g})")
        reasons.extend(f"{label} fails: {f}" for f in findings)

    warnings = v_warn + w_warn
    for msg in warnings:
        log.warning(msg)

    G_curve: List[Tuple[float, float]] = []
    embedding: Optional[QuadratureResult] = None
    compact: Optional[bool] = None
    abs_w = False
    v_positive = v.positivity == "strictly_positive" and bool((vv > 0).all())
    if v_positive:
        for r in np.geomspace(spec.eps, spec.R, min(grid_size, G_CURVE_POINTS)):
            g = compute_G(spec, float(r), tol)
            G_curve.append((float(r), g.value))
            if g.divergent:
                break
    if v_positive and w_pos and w.positivity == "strictly_positive":
        embedding = embedding_constant(spec, tol)
        if not embedding.convergent:
            where = "" if embedding.endpoint is None else f" at r={embedding.endpoint:g}"
            reasons.append(f"C2 fails: embedding integral is {embedding.verdict}{where}")
        compact = _integrable(v, tol) and _integrable(w, tol)
    elif v_positive:
        reasons.append("C2 not evaluated: w must be strictly positive")
        try:
            magnitude = embedding_constant(spec, tol, magnitude=True)
        except WorkbenchError as e:
            warnings.append(f"Integral of |w| not located: {e}")
        else:
            if not magnitude.convergent:
                where = "" if magnitude.endpoint is None else f" at r={magnitude.endpoint:g}"
                reasons.append(f"C2 fails for |w| as well: {magnitude.verdict}{where}")
                embedding, abs_w = magnitude, True
    else:
        reasons.append("C2 not evaluated: v and w must both be strictly positive")

    verdict = "admissible" if not reasons else "inadmissible"
    log.info(f"Admissibility verdict: {verdict}.")
    return AdmissibilityReport(
        c1_holds=c1_ok,
        c1_violation=c1_rec,
        v_bound_holds=v_ok,
        v_bound_violation=v_rec,
        w_bound_holds=w_ok,
        w_bound_violation=w_rec,
        G_curve=G_curve,
        embedding_constant=embedding,
        embedding_of_abs_w=abs_w,
        compact_embedding=compact,
        verdict=verdict,
        reasons=reasons,
        warnings=warnings,
    )


def admissible_example_spec(eps: float = 1e-4, R: float = 10.0) -> ProblemSpec:
    """p = N = 2, alpha = -1/2, v = r(1+r), w = r^-1/2 / 2 then r^-2 / 2, L = v, K = w/2."""
    v = ProductPowerWeight(a=1.0, zeta=1.0)
    w = PiecewiseWeight(
        segments=[
            Segment(upto=1.0, weight=PowerWeight(coeff=0.5, exponent=-0.5)),
            Segment(weight=PowerWeight(coeff=0.5, exponent=-2.0)),
        ]
    )
    return ProblemSpec(N=2, p=2.0, alpha=-0.5, L=v, K=w.scaled(0.5), v=v, w=w, eps=eps, R=R)


def growth_family_spec(
    N: int = 3,
    p: float = 2.0,
    alpha: float = -0.5,
    zeta: float = 2.0,
    reading: Literal["literal", "intended"] = "intended",
    eps: float = 1e-4,
    R: float = 10.0,
) -> ProblemSpec:
    """v = r^(-p alpha + zeta), w piecewise at r = 1 with r^-(p beta + 1) beyond.

    On (0, 1] the literal reading is w = 1 / (r^(p beta) - beta), which changes
    sign and has a pole; the intended reading is w = r^-(p beta - beta).
    L = v and K = w / 2.
    """
    beta = alpha + 1.0
    if not zeta > max(1.0, p * beta - N):
        log.warning(f"zeta={zeta} is outside the family's range zeta > max(1, p beta - N).")
    v = PowerWeight(exponent=-p * alpha + zeta)
    if reading == "literal":
        head = ReciprocalWeight(a=p * beta, shift=-beta, positivity="sign_changing")
        positivity: Positivity = "sign_changing"
    else:
        head = PowerWeight(exponent=-(p * beta - beta))
        positivity = "strictly_positive"
    w = PiecewiseWeight(
        positivity=positivity,
        segments=[
            Segment(upto=1.0, weight=head),
            Segment(weight=PowerWeight(exponent=-(p * beta + 1.0))),
        ],
    )
    return ProblemSpec(
        N=N, p=p, alpha=alpha, L=v, K=w.scaled(0.5), v=v, w=w, eps=eps, R=R
    )
