"""Radial shooting for p = N = 2.

The radial equation [r L u']' = -lam r K u is integrated as the first-order
system in x = ln r,

    du/dx = q / L(r),    dq/dx = -lam r^2 K(r) u,    q = r L u',

with classical RK4 on a uniform x grid. Weights are sampled once per grid
(nodes and midpoints), so scanning lam costs only the RK4 sweep.
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel
from scipy.integrate import cumulative_simpson, simpson

from src.errors import BracketError, IntegrationError, InvalidWeightError, PreconditionError
from src.weights import boundedness_integral, compute_F

__all__ = [
    "Anchor",
    "AsymptoticsReport",
    "Shooter",
    "Trajectory",
    "crossing_radius",
    "find_bracket",
    "integrate_ivp",
    "shoot_eigenvalue",
    "verify_asymptotics",
]

log = logging.getLogger("app.solvers.shooting")

Anchor = Literal["origin", "infinity"]

DEFAULT_STEPS = 4000
BISECTION_REL = 1e-8
BOUND_SLACK = 1e-6


@dataclass
class Trajectory:
    """Samples (r_i, u_i, q_i) of one IVP solve at parameter lam."""

    r: np.ndarray
    u: np.ndarray
    q: np.ndarray
    lam: float
    anchor: Anchor = "origin"

    def to_csv(self, path: Union[str, Path]):
        """Write (r, u, q) columns."""
        from src.utils import write_series

        write_series(path, {"r": self.r, "u": self.u, "q": self.q})


class Shooter:
    """RK4 integrator for fixed (L, K, eps, R_big, steps); lam varies per call."""

    def __init__(self, L, K, eps: float, R_big: float, steps: int = DEFAULT_STEPS):
        """Sample the weights on the log grid and its midpoints."""
        if steps < 16:
            raise ValueError(f"steps must be at least 16, got {steps}.")
        if not 0 < eps < R_big:
            raise ValueError(f"Need 0 < eps < R_big, got eps={eps}, R_big={R_big}.")
        self.x = np.linspace(math.log(eps), math.log(R_big), steps + 1)
        self.dx = float(self.x[1] - self.x[0])
        self.r = np.exp(self.x)
        self.r[0], self.r[-1] = eps, R_big
        r_mid = np.exp(0.5 * (self.x[:-1] + self.x[1:]))
        L_nodes, L_mid = L(self.r), L(r_mid)
        if not ((L_nodes > 0).all() and (L_mid > 0).all()):
            raise InvalidWeightError("L must be positive on [eps, R_big].")
        # du/dx = a(r) q and dq/dx = -lam b(r) u.
        self.a_nodes, self.a_mid = 1.0 / L_nodes, 1.0 / L_mid
        self.b_nodes = self.r**2 * K(self.r)
        self.b_mid = r_mid**2 * K(r_mid)

    def run(
        self,
        lam: float,
        anchor: Anchor = "origin",
        initial: Tuple[float, float] = (1.0, 0.0),
        stop_on_negative: bool = False,
    ) -> Trajectory:
        """Integrate from the anchor end; optionally stop at the first u < 0."""
        n = self.r.size
        u_out = np.full(n, np.nan)
        q_out = np.full(n, np.nan)
        if anchor == "origin":
            order, h = range(n - 1), self.dx
        else:
            order, h = range(n - 1, 0, -1), -self.dx
        a_n, a_m = self.a_nodes.tolist(), self.a_mid.tolist()
        b_n = (lam * self.b_nodes).tolist()
        b_m = (lam * self.b_mid).tolist()
        u, q = float(initial[0]), float(initial[1])
        start = 0 if anchor == "origin" else n - 1
        u_out[start], q_out[start] = u, q
        for i in order:
            j = i + 1 if anchor == "origin" else i - 1
            mid = min(i, j)
            a0, am, a1 = a_n[i], a_m[mid], a_n[j]
            b0, bm, b1 = b_n[i], b_m[mid], b_n[j]
            k1u, k1q = a0 * q, -b0 * u
            k2u, k2q = am * (q + 0.5 * h * k1q), -bm * (u + 0.5 * h * k1u)
            k3u, k3q = am * (q + 0.5 * h * k2q), -bm * (u + 0.5 * h * k2u)
            k4u, k4q = a1 * (q + h * k3q), -b1 * (u + h * k3u)
            u += h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u)
            q += h / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q)
            if not (math.isfinite(u) and math.isfinite(q)):
                raise IntegrationError(
                    f"Non-finite state at r={self.r[j]:g} (lam={lam:g}).", radius=float(self.r[j])
                )
            u_out[j], q_out[j] = u, q
            if stop_on_negative and u < 0.0:
                break
        return Trajectory(r=self.r.copy(), u=u_out, q=q_out, lam=lam, anchor=anchor)

    def crossing(self, lam: float, anchor: Anchor = "origin") -> Optional[float]:
        """First radius, walking away from the anchor, where u < 0."""
        traj = self.run(lam, anchor, stop_on_negative=True)
        neg = np.flatnonzero(traj.u < 0.0)
        if neg.size == 0:
            return None
        i = int(neg[0]) if anchor == "origin" else int(neg[-1])
        return float(traj.r[i])


def integrate_ivp(
    L,
    K,
    lam: float,
    eps: float,
    R_big: float,
    steps: int = DEFAULT_STEPS,
    anchor: Anchor = "origin",
    initial: Tuple[float, float] = (1.0, 0.0),
) -> Trajectory:
    """RK4 solve of the radial system from (u, q) = initial at the anchor end.

    `anchor="origin"` starts at eps and integrates outward; `anchor="infinity"`
    starts at R_big (flux-free, q = 0) and integrates inward.

    Raises:
        IntegrationError: the state became non-finite; carries the radius.
    """
    return Shooter(L, K, eps, R_big, steps).run(lam, anchor, initial)


def crossing_radius(
    L, K, lam: float, eps: float, R_big: float,
    steps: int = DEFAULT_STEPS, anchor: Anchor = "origin",
) -> Optional[float]:
    """First radius where u turns negative, or None."""
    return Shooter(L, K, eps, R_big, steps).crossing(lam, anchor)


def find_bracket(
    L, K, eps: float, R_big: float,
    steps: int = DEFAULT_STEPS, anchor: Anchor = "origin",
    start: float = 1.0, max_doublings: int = 60,
) -> Tuple[float, float]:
    """(lam_a, lam_b) with no crossing at lam_a and a crossing at lam_b, by doubling.

    Raises:
        BracketError: no crossing after `max_doublings` doublings.
    """
    shooter = Shooter(L, K, eps, R_big, steps)
    lo, hi = 0.0, start
    for _ in range(max_doublings):
        if shooter.crossing(hi, anchor) is not None:
            log.debug(f"Bracket found: [{lo:g}, {hi:g}]")
            return lo, hi
        lo, hi = hi, 2.0 * hi
    raise BracketError(f"No sign change up to lam={lo:g}.")


def shoot_eigenvalue(
    L,
    K,
    eps: float,
    R_big: float,
    bracket: Tuple[float, float],
    steps: int = DEFAULT_STEPS,
    anchor: Anchor = "origin",
) -> float:
    """lam1 = sup {lam : u stays positive away from the anchor}, by bisection.

    Raises:
        PreconditionError: K is not declared strictly positive.
        BracketError: no crossing at bracket[1] or a crossing at bracket[0].
    """
    if K.positivity != "strictly_positive":
        raise PreconditionError("Shooting needs K > 0 (declared strictly_positive).")
    shooter = Shooter(L, K, eps, R_big, steps)
    lo, hi = bracket
    if not 0 <= lo < hi:
        raise BracketError(f"Invalid bracket {bracket}.")
    if shooter.crossing(lo, anchor) is not None:
        raise BracketError(f"u already changes sign at lam_a={lo:g}.")
    if shooter.crossing(hi, anchor) is None:
        raise BracketError(f"u stays positive at lam_b={hi:g}.")
    while hi - lo >= BISECTION_REL * bracket[1]:
        mid = 0.5 * (lo + hi)
        if shooter.crossing(mid, anchor) is None:
            lo = mid
        else:
            hi = mid
        log.debug(f"bisection bracket [{lo:.12g}, {hi:.12g}]")
    lam1 = 0.5 * (lo + hi)
    log.info(f"Shot lambda1={lam1:.10g} on [{eps:g}, {R_big:g}] ({anchor} anchor).")
    return lam1


class AsymptoticsReport(BaseModel):
    """Checks of monotonicity, the flux identity, the representation and the bound."""

    flux_identity_residual: float
    representation_residual: Optional[float] = None
    monotone_increasing: bool
    flux_nonincreasing: bool
    tail_flux: Optional[float] = None
    tail_identity_residual: Optional[float] = None
    boundedness_integral: Optional[float] = None
    bound_value: Optional[float] = None
    bound_holds: Optional[bool] = None
    normalization: Optional[float] = None
    hypotheses_hold: bool
    notes: List[str] = []


def _tail_estimate(x: np.ndarray, f: np.ndarray) -> Optional[float]:
    """int_{x_n}^inf f dx from a power-law fit of f over the last decade of r."""
    window = x >= x[-1] - math.log(10.0)
    fw = f[window]
    if fw.size < 4 or not (fw > 0).all():
        return None
    slope, _ = np.polyfit(x[window], np.log(fw), 1)
    if slope >= 0:
        return None
    return float(fw[-1] / -slope)


def verify_asymptotics(traj: Trajectory, L, K, tol: float = 1e-5) -> AsymptoticsReport:
    """Check the radial identities and the sup bound along a trajectory.

    The flux identity compares q_i with q_n + lam int_{r_i}^{r_n} s K u ds; the
    representation uses F(r) = int_0^r ds/(s L) and u(0) = u(eps) - q(eps) F(eps).
    The bound is checked after scaling u so that 2 pi int r K u^2 dr = 1.
    """
    r, u, q, lam = traj.r, traj.u, traj.q, traj.lam
    if not (np.isfinite(u).all() and np.isfinite(q).all()):
        raise ValueError("Trajectory is incomplete (was it stopped early?).")
    x = np.log(r)
    notes = []
    du = np.diff(u)
    monotone = bool((du > 0).all())
    # The flux only has to fall where u > 0.
    pos = (u[:-1] > 0) & (u[1:] > 0)
    flux_nonincreasing = bool((np.diff(q)[pos] <= 0).all())

    Ku = r**2 * K(r) * u  # s K u ds = s^2 K u dx
    J = cumulative_simpson(Ku, x=x, initial=0.0)
    J_tail = J[-1] - J  # int_{r_i}^{r_n}
    q_scale = float(np.max(np.abs(q)))
    identity = np.abs(q - q[-1] - lam * J_tail)
    flux_res = float(identity.max() / q_scale) if q_scale > 0 else float(identity.max())
    tail = _tail_estimate(x, Ku)
    tail_flux = None if tail is None else lam * tail
    # Full-plane identity at R_big: q(R_big) = lam int_{R_big}^inf s K u ds.
    tail_res = None
    if tail_flux is not None:
        gap = abs(float(q[-1]) - tail_flux)
        tail_res = gap / q_scale if q_scale > 0 else gap
        if tail_res > tol:
            notes.append(f"flux at R_big misses the estimated tail by {tail_res:.3e} (relative)")

    F0 = compute_F(L, float(r[0]), tol=1e-12)
    hypotheses = F0.convergent
    rep_res = bound_value = bound_holds = norm = B_val = None
    if not hypotheses:
        notes.append("F diverges at 0: representation and bound not evaluated")
    else:
        F = F0.value + cumulative_simpson(1.0 / L(r), x=x, initial=0.0)
        u0 = float(u[0] - q[0] * F[0])
        inner = cumulative_simpson(Ku * F, x=x, initial=0.0)
        rep = u0 + F * (q[-1] + lam * J_tail) + lam * inner
        rep_res = float(np.max(np.abs(u - rep)) / np.max(np.abs(u)))

        Z = 2.0 * math.pi * simpson(r**2 * K(r) * u**2, x=x)
        if Z > 0:
            norm = 1.0 / math.sqrt(Z)
            try:
                B = boundedness_integral(K, L)
            except PreconditionError as e:
                notes.append(str(e))
                B = None
            if B is not None and B.convergent:
                B_val = B.value
                bound_value = norm * u0 + lam * math.sqrt(B.value)
                bound_holds = bool(norm * u.max() <= bound_value * (1.0 + BOUND_SLACK))
            elif B is not None:
                notes.append(f"boundedness integral is {B.verdict}")
        else:
            notes.append("int K u^2 vanishes: trajectory cannot be normalized")

    log.info(
        f"Asymptotics: monotone={monotone} identity={flux_res:.3e} "
        f"representation={rep_res} bound_holds={bound_holds}"
    )
    return AsymptoticsReport(
        flux_identity_residual=flux_res,
        representation_residual=rep_res,
        monotone_increasing=monotone,
        flux_nonincreasing=flux_nonincreasing,
        tail_flux=tail_flux,
        tail_identity_residual=tail_res,
        boundedness_integral=B_val,
        bound_value=bound_value,
        bound_holds=bound_holds,
        normalization=norm,
        hypotheses_hold=hypotheses,
        notes=notes,
    )
