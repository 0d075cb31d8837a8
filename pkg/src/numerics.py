"""Adaptive quadrature with divergence verdicts.

Every integral in the workbench goes through `integrate`. Semi-infinite domains
are compactified with t = a + s/(1-s) and integrated panel by panel on
s in [1-2^-k, 1-2^-(k+1)], i.e. dyadic panels [a+2^k-1, a+2^(k+1)-1] in t.
Singular left endpoints are handled by geometric panels toward the endpoint.
Both ends estimate the remaining piece from a fitted local power law, which is
also what decides divergence.
"""

import logging
import math
from typing import Callable, Literal, Optional, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss
from pydantic import BaseModel
from scipy.integrate import quad

from src.errors import QuadratureError

__all__ = [
    "DEFAULT_TOL",
    "QuadratureResult",
    "Verdict",
    "graded_gauss",
    "integrate",
    "local_exponent",
]

log = logging.getLogger("app.numerics")

DEFAULT_TOL = 1e-10
DIVERGENCE_MARGIN = 5e-4
DIVERGENCE_WINDOWS = 3
# Divergence sampling starts this far out (times max(1, |a|)) or this close in.
TAIL_SAMPLE_RADIUS = 2.0**20
HEAD_SAMPLE_FRACTION = 2.0**-40
# s = 1 - 2^-k stops being representable just past k = 52.
MAX_TAIL_PANELS = 50
MAX_HEAD_PANELS = 200
QUAD_LIMIT = 200

Verdict = Literal["convergent", "divergent", "inconclusive"]


class QuadratureResult(BaseModel):
    """Outcome of one integral.

    A divergent verdict carries `value = nan` and `error_estimate = inf`; only
    `endpoint` (0-side left end or `inf`) is meaningful then.
    """

    value: float
    error_estimate: float
    verdict: Verdict
    evaluations: int
    endpoint: Optional[float] = None

    @property
    def convergent(self) -> bool:
        """Whether the value can be trusted."""
        return self.verdict == "convergent"

    @property
    def divergent(self) -> bool:
        """Whether the integral was found to diverge."""
        return self.verdict == "divergent"


class _Counted:
    """Integrand wrapper that counts calls and rejects non-finite values."""

    def __init__(self, f: Callable[[float], float]):
        self.f = f
        self.calls = 0

    def __call__(self, t: float) -> float:
        self.calls += 1
        y = float(self.f(t))
        if not math.isfinite(y):
            raise QuadratureError(f"Integrand is not finite at t={t!r}: {y}.", abscissa=t)
        return y

    def magnitude(self, t: float) -> float:
        """|f(t)| for exponent fitting; blow-ups come back as inf."""
        self.calls += 1
        try:
            with np.errstate(all="ignore"):
                y = float(self.f(t))
        except (ZeroDivisionError, OverflowError, FloatingPointError):
            return math.inf
        return abs(y) if math.isfinite(y) else math.inf


def local_exponent(f_near: float, f_far: float, ratio: float) -> float:
    """Exponent e such that |f_far| = |f_near| * ratio**e.

    Zeros count as arbitrarily fast decay toward `far`, blow-ups as
    arbitrarily fast growth; the sign of the infinite exponent follows `ratio`.
    """
    f_near, f_far = abs(f_near), abs(f_far)
    sign = 1.0 if ratio > 1.0 else -1.0
    if f_far == 0.0 or math.isinf(f_near):
        return -sign * math.inf
    if f_near == 0.0 or math.isinf(f_far):
        return sign * math.inf
    return math.log(f_far / f_near) / math.log(ratio)


def _diverges_at_infinity(fc: _Counted, a: float) -> bool:
    t0 = max(1.0, abs(a)) * TAIL_SAMPLE_RADIUS
    vals = [fc.magnitude(t0 * 2.0**k) for k in range(DIVERGENCE_WINDOWS + 1)]
    exps = [local_exponent(vals[k], vals[k + 1], 2.0) for k in range(DIVERGENCE_WINDOWS)]
    log.debug(f"Tail exponents near t={t0:g}: {exps}")
    return all(e >= -1.0 - DIVERGENCE_MARGIN for e in exps)


def _diverges_at_left(fc: _Counted, a: float, width: float) -> bool:
    h0 = width * HEAD_SAMPLE_FRACTION
    vals = [fc.magnitude(a + h0 * 2.0**-k) for k in range(DIVERGENCE_WINDOWS + 1)]
    # Exponent of |f| in the distance to a, measured moving inward.
    exps = [local_exponent(vals[k], vals[k + 1], 0.5) for k in range(DIVERGENCE_WINDOWS)]
    log.debug(f"Head exponents near t={a:g}: {exps}")
    return all(e <= -1.0 + DIVERGENCE_MARGIN for e in exps)


def _panel(fc: _Counted, lo: float, hi: float, tol: float) -> Tuple[float, float]:
    res = quad(fc, lo, hi, epsabs=tol, epsrel=tol, limit=QUAD_LIMIT, full_output=1)
    return float(res[0]), float(res[1])


def _target(tol: float, value: float) -> float:
    return max(tol, tol * abs(value))


def _divergent(fc: _Counted, endpoint: float) -> QuadratureResult:
    return QuadratureResult(
        value=math.nan,
        error_estimate=math.inf,
        verdict="divergent",
        evaluations=fc.calls,
        endpoint=endpoint,
    )


def _integrate_finite(fc: _Counted, a: float, b: float, tol: float) -> QuadratureResult:
    value, err = _panel(fc, a, b, tol)
    verdict: Verdict = "convergent" if err <= _target(tol, value) else "inconclusive"
    return QuadratureResult(
        value=value, error_estimate=err, verdict=verdict, evaluations=fc.calls
    )


def _integrate_tail(fc: _Counted, a: float, tol: float) -> QuadratureResult:
    if _diverges_at_infinity(fc, a):
        return _divergent(fc, math.inf)

    def g(s: float) -> float:
        return fc(a + s / (1.0 - s)) / (1.0 - s) ** 2

    gc = _Counted(g)
    total, err = 0.0, 0.0
    prev_exp = math.nan
    for k in range(MAX_TAIL_PANELS):
        y, e = _panel(gc, 1.0 - 2.0**-k, 1.0 - 2.0 ** -(k + 1), tol)
        total += y
        err += e
        # Right end of the panel in t, and the remainder beyond it.
        t = a + 2.0 ** (k + 1) - 1.0
        f_t = fc.magnitude(t)
        exp = local_exponent(f_t, fc.magnitude(2.0 * t), 2.0)
        target = _target(tol, total)
        if f_t == 0.0 or exp == -math.inf:
            return QuadratureResult(
                value=total, error_estimate=err, verdict="convergent", evaluations=fc.calls
            )
        if exp < -1.0 and math.isfinite(prev_exp):
            signed = float(fc.f(t))
            tail = signed * t / -(exp + 1.0)
            tail_err = abs(tail) * abs(exp - prev_exp) / abs(exp + 1.0)
            if abs(tail) <= 0.1 * target:
                return QuadratureResult(
                    value=total, error_estimate=err + abs(tail), verdict="convergent",
                    evaluations=fc.calls,
                )
            if tail_err <= 0.1 * target:
                return QuadratureResult(
                    value=total + tail, error_estimate=err + tail_err,
                    verdict="convergent", evaluations=fc.calls,
                )
        prev_exp = exp
    log.warning(f"Tail quadrature from t={a:g} exhausted {MAX_TAIL_PANELS} panels.")
    return QuadratureResult(
        value=total, error_estimate=math.inf, verdict="inconclusive", evaluations=fc.calls
    )


def _integrate_head(fc: _Counted, a: float, b: float, tol: float) -> QuadratureResult:
    width = b - a
    if _diverges_at_left(fc, a, width):
        return _divergent(fc, a)

    total, err = 0.0, 0.0
    prev_exp = math.nan
    for k in range(MAX_HEAD_PANELS):
        lo, hi = a + width * 2.0 ** -(k + 1), a + width * 2.0**-k
        y, e = _panel(fc, lo, hi, tol)
        total += y
        err += e
        h = lo - a
        if h <= 0.0:
            break
        f_h = fc.magnitude(lo)
        exp = local_exponent(f_h, fc.magnitude(a + 0.5 * h), 0.5)
        target = _target(tol, total)
        if f_h == 0.0 and exp == math.inf:
            return QuadratureResult(
                value=total, error_estimate=err, verdict="convergent", evaluations=fc.calls
            )
        if exp > -1.0 and math.isfinite(exp) and math.isfinite(prev_exp):
            signed = float(fc.f(lo))
            rem = signed * h / (exp + 1.0)
            rem_err = abs(rem) * abs(exp - prev_exp) / abs(exp + 1.0)
            if abs(rem) <= 0.1 * target:
                return QuadratureResult(
                    value=total, error_estimate=err + abs(rem), verdict="convergent",
                    evaluations=fc.calls,
                )
            if rem_err <= 0.1 * target:
                return QuadratureResult(
                    value=total + rem, error_estimate=err + rem_err,
                    verdict="convergent", evaluations=fc.calls,
                )
        prev_exp = exp
    log.warning(f"Singular quadrature toward t={a:g} exhausted {MAX_HEAD_PANELS} panels.")
    return QuadratureResult(
        value=total, error_estimate=math.inf, verdict="inconclusive", evaluations=fc.calls
    )


def _combine(left: QuadratureResult, right: QuadratureResult, calls: int) -> QuadratureResult:
    for part in (left, right):
        if part.divergent:
            return part.model_copy(update={"evaluations": calls})
    verdict: Verdict = (
        "convergent" if left.convergent and right.convergent else "inconclusive"
    )
    return QuadratureResult(
        value=left.value + right.value,
        error_estimate=left.error_estimate + right.error_estimate,
        verdict=verdict,
        evaluations=calls,
    )


def integrate(
    f: Callable[[float], float],
    domain: Tuple[float, float],
    tol: float = DEFAULT_TOL,
    singular_left: bool = False,
) -> QuadratureResult:
    """Integrate a scalar function over [a, b], where b may be +inf.

    Args:
        f: Integrand, called with one float at a time.
        domain: (a, b) with a finite and a < b.
        tol: Absolute-or-relative tolerance, whichever is larger.
        singular_left: Treat `a` as a possibly singular endpoint.

    Returns:
        QuadratureResult with a convergent, divergent or inconclusive verdict.

    Raises:
        QuadratureError: `f` returned a non-finite value inside the domain.
    """
    a, b = float(domain[0]), float(domain[1])
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol}.")
    if not math.isfinite(a) or not a < b:
        raise ValueError(f"Invalid domain ({a}, {b}).")

    fc = _Counted(f)
    if math.isinf(b):
        if not singular_left:
            return _integrate_tail(fc, a, tol)
        split = a + 1.0
        left = _integrate_head(fc, a, split, tol)
        if left.divergent:
            return left.model_copy(update={"evaluations": fc.calls})
        right = _integrate_tail(fc, split, tol)
        return _combine(left, right, fc.calls)
    if singular_left:
        return _integrate_head(fc, a, b, tol)
    return _integrate_finite(fc, a, b, tol)


def graded_gauss(
    f: Callable[[np.ndarray], np.ndarray],
    a: float,
    b: float,
    levels: int = 40,
    order: int = 16,
) -> float:
    """Composite Gauss-Legendre on panels geometric toward both ends of [a, b].

    Fixed-cost and vectorized: `f` is evaluated once on the whole node array.
    Suitable for integrands that are smooth inside and behave like powers at
    the ends (the last 2^-levels of the interval at each end is dropped).
    """
    x, w = leggauss(order)
    half = 0.5 * (b - a)
    k = np.arange(levels)
    # Panel edges as distances from each end.
    outer = half * 2.0**-k
    inner = half * 2.0 ** -(k + 1)
    lo = np.concatenate([a + inner, b - outer])
    hi = np.concatenate([a + outer, b - inner])
    c = 0.5 * (hi + lo)[:, None]
    r = 0.5 * (hi - lo)[:, None]
    nodes = c + r * x[None, :]
    weights = r * w[None, :]
    with np.errstate(all="ignore"):
        vals = np.asarray(f(nodes), dtype=float)
    vals = np.where(weights > 0, vals, 0.0)
    return float(np.sum(weights * vals))

