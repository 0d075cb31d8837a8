"""Principal eigenpair of the truncated weighted p-Laplacian.

`minimize_rayleigh` runs a preconditioned projected gradient (for p = 2 this
is plain inverse iteration) on {G(u) = 1}, then polishes |u| with Newton on
the bordered system [grad I - lam grad G = 0, G = 1]. `linear_oracle` solves
the p = 2 pencil densely and serves as the independent check.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Literal, Optional

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel
from scipy.linalg import LinAlgError, eigh, solve_banded
from scipy.sparse.linalg import spsolve

from src.errors import InfeasibleConstraintError, NoPrincipalEigenvalueError, PreconditionError
from src.solvers.fem import DiscreteFunction, RadialForms, RadialMesh, build_mesh

__all__ = [
    "EigenResult",
    "EigenSummary",
    "SolverOptions",
    "TruncationStep",
    "initial_bump",
    "linear_oracle",
    "minimize_rayleigh",
    "truncation_study",
    "weak_residual",
]

log = logging.getLogger("app.solvers.eigen")

MAX_BACKTRACKS = 40
TRUNCATION_REL_CHANGE = 1e-4


class SolverOptions(BaseModel):
    """Tolerances and caps for the eigensolver."""

    tol: float = 1e-9
    max_iter: int = 500
    polish_iter: int = 30
    armijo: float = 1e-4
    dirichlet_at_eps: bool = False
    dirichlet_at_R: bool = True


class TruncationStep(BaseModel):
    """One (eps, R) window of a truncation study."""

    eps: float
    R: float
    M: int
    lambda1: float


class EigenSummary(BaseModel):
    """Report-facing view of an EigenResult."""

    lambda1: float
    residual: float
    iterations: int
    converged: bool
    positive: bool
    sup_norm: float
    method: str
    mesh: dict
    truncation_study: Optional[List[TruncationStep]] = None


@dataclass
class EigenResult:
    """lambda1 with its eigenfunction normalized to G(u) = 1."""

    lambda1: float
    u: DiscreteFunction
    residual: float
    iterations: int
    converged: bool
    positive: bool
    sup_norm: float
    method: Literal["rayleigh", "linear_oracle"] = "rayleigh"
    truncation_study: Optional[List[TruncationStep]] = field(default=None)

    def summary(self) -> EigenSummary:
        """Serializable summary without the nodal values."""
        return EigenSummary(
            lambda1=self.lambda1,
            residual=self.residual,
            iterations=self.iterations,
            converged=self.converged,
            positive=self.positive,
            sup_norm=self.sup_norm,
            method=self.method,
            mesh=self.u.mesh.describe(),
            truncation_study=self.truncation_study,
        )


def weak_residual(mesh: RadialMesh, spec, lam: float, u: DiscreteFunction) -> float:
    """max over free nodes of |grad I(u) - lam grad G(u)|."""
    forms = RadialForms(mesh, spec, u.dirichlet_at_R, u.dirichlet_at_eps)
    return _residual(forms, lam, u.values)


def _residual(forms: RadialForms, lam: float, u: np.ndarray) -> float:
    r = forms.grad_energy(u) - lam * forms.grad_constraint(u)
    return float(np.max(np.abs(r[forms.free]), initial=0.0))


def initial_bump(forms: RadialForms) -> np.ndarray:
    """Positive bump on the heaviest run of elements where K > 0, with G = 1.

    Raises:
        InfeasibleConstraintError: K > 0 on no element.
    """
    positive = (forms.K_q > 0).all(axis=1)
    if not positive.any():
        raise InfeasibleConstraintError(
            "K is nonpositive on every element, so G(u) = 1 has no solution on the mesh."
        )
    weight = forms.mass_q.sum(axis=1)
    best, best_mass, start = None, -1.0, None
    for e in range(positive.size + 1):
        if e < positive.size and positive[e]:
            if start is None:
                start = e
            continue
        if start is not None:
            mass = float(weight[start:e].sum())
            if mass > best_mass:
                best, best_mass = (start, e), mass
            start = None
    e0, e1 = best
    nodes = forms.mesh.nodes
    r0, r1 = nodes[e0], nodes[e1]
    u = np.zeros(nodes.size)
    inside = slice(e0, e1 + 1)
    s = (nodes[inside] - r0) / (r1 - r0)
    if e0 == 0 and forms.free[0]:
        # Free inner end: start at the top of the bump.
        u[inside] = np.cos(0.5 * math.pi * s)
    else:
        u[inside] = np.sin(math.pi * s)
    u[e1] = 0.0
    u[~forms.free] = 0.0
    return _normalize(forms, u)


def _normalize(forms: RadialForms, u: np.ndarray) -> np.ndarray:
    g = forms.constraint(u)
    if not g > 0:
        raise InfeasibleConstraintError(f"Cannot normalize: G(u) = {g!r}.")
    return u / g ** (1.0 / forms.p)


def _rayleigh(forms: RadialForms, u: np.ndarray) -> Optional[float]:
    g = forms.constraint(u)
    if not g > 0:
        return None
    return forms.energy(u) / g


def _descend(forms: RadialForms, u: np.ndarray, opts: SolverOptions):
    """Nonlinear inverse iteration with Armijo backtracking on I/G."""
    lam = forms.energy(u)
    for it in range(1, opts.max_iter + 1):
        g = forms.grad_energy(u) - lam * forms.grad_constraint(u)
        res = float(np.max(np.abs(g[forms.free])))
        if res <= opts.tol * (1.0 + lam):
            return u, lam, it - 1
        H = forms.constrain(forms.hess_energy(u))
        d = solve_banded((1, 1), H, g)
        slope = float(g @ d)
        tau = forms.p - 1.0
        for _ in range(MAX_BACKTRACKS):
            trial = u - tau * d
            q = _rayleigh(forms, trial)
            # Steps that lose G > 0 are rejected like Armijo failures.
            if q is not None and q <= lam - opts.armijo * tau * slope:
                u, lam = _normalize(forms, trial), q
                break
            tau *= 0.5
        else:
            log.warning(f"Line search stalled at iteration {it} (residual {res:.3e}).")
            return u, lam, it
        log.debug(f"descent it={it} lam={lam:.12g} res={res:.3e} tau={tau:g}")
    return u, lam, opts.max_iter


def _polish(forms: RadialForms, u: np.ndarray, lam: float, opts: SolverOptions):
    """Newton on the bordered system in (u_free, lam)."""
    free = np.flatnonzero(forms.free)

    def system(u, lam):
        F = forms.grad_energy(u) - lam * forms.grad_constraint(u)
        return np.concatenate([F[free], [forms.constraint(u) - 1.0]])

    F = system(u, lam)
    for it in range(opts.polish_iter):
        if np.max(np.abs(F[:-1])) <= 0.1 * opts.tol * (1.0 + lam) and abs(F[-1]) <= 1e-14:
            return u, lam, it
        ab = forms.hess_energy(u) - lam * forms.hess_constraint(u)
        J = sp.diags([ab[2, :-1], ab[1], ab[0, 1:]], [-1, 0, 1], format="csr")[free][:, free]
        gG = forms.grad_constraint(u)[free]
        col = sp.csr_matrix(-gG[:, None])
        bordered = sp.bmat([[J, col], [col.T * -1.0, None]], format="csc")
        try:
            step = spsolve(bordered, -F)
        except (RuntimeError, LinAlgError) as e:
            log.warning(f"Bordered solve failed: {e}")
            return u, lam, it
        if not np.all(np.isfinite(step)):
            return u, lam, it
        alpha, norm = 1.0, np.max(np.abs(F))
        for _ in range(20):
            trial = u.copy()
            trial[free] += alpha * step[:-1]
            trial_lam = lam + alpha * step[-1]
            Ft = system(trial, trial_lam)
            if np.max(np.abs(Ft)) < norm:
                u, lam, F = trial, trial_lam, Ft
                break
            alpha *= 0.5
        else:
            return u, lam, it
    return u, lam, opts.polish_iter


def _finish(forms: RadialForms, u: np.ndarray, iterations: int, opts: SolverOptions, method):
    u = _normalize(forms, u)
    i = int(np.argmax(np.abs(u)))
    if u[i] < 0:
        u = -u
    lam = forms.energy(u)
    res = _residual(forms, lam, u)
    converged = res <= opts.tol * (1.0 + lam)
    positive = bool((u[forms.free] > 0).all())
    fn = forms.new_function(u)
    log.info(
        f"{method}: lambda1={lam:.12g} residual={res:.3e} "
        f"converged={converged} positive={positive}"
    )
    return EigenResult(
        lambda1=lam,
        u=fn,
        residual=res,
        iterations=iterations,
        converged=converged,
        positive=positive,
        sup_norm=fn.sup_norm(),
        method=method,
    )


def minimize_rayleigh(
    mesh: RadialMesh, spec, opts: Optional[SolverOptions] = None
) -> EigenResult:
    """lambda1 = inf {I(u) : G(u) = 1} on the mesh.

    Raises:
        InfeasibleConstraintError: K is nonpositive on the whole mesh.
    """
    opts = opts or SolverOptions()
    forms = RadialForms(mesh, spec, opts.dirichlet_at_R, opts.dirichlet_at_eps)
    u = initial_bump(forms)
    u, lam, it = _descend(forms, u, opts)
    u = _normalize(forms, np.abs(u))
    u, lam, polish_it = _polish(forms, u, forms.energy(u), opts)
    return _finish(forms, u, it + polish_it, opts, "rayleigh")


def linear_oracle(mesh: RadialMesh, spec, opts: Optional[SolverOptions] = None) -> EigenResult:
    """Dense p = 2 pencil: largest mu > 0 of B x = mu A x gives lambda1 = 1/mu.

    Raises:
        PreconditionError: p != 2.
        NoPrincipalEigenvalueError: B has no positive direction.
    """
    if spec.p != 2:
        raise PreconditionError(f"linear_oracle requires p = 2, got p = {spec.p}.")
    opts = opts or SolverOptions()
    forms = RadialForms(mesh, spec, opts.dirichlet_at_R, opts.dirichlet_at_eps)
    A, B = forms.stiffness_matrix(), forms.mass_matrix()
    mu, X = eigh(B, A)
    k = int(np.argmax(mu))
    if not mu[k] > 1e-14 * np.max(np.abs(mu)):
        raise NoPrincipalEigenvalueError("The pencil has no positive eigenvalue.")
    u = np.zeros(mesh.nodes.size)
    u[forms.free] = X[:, k]
    return _finish(forms, u, 1, opts, "linear_oracle")


def truncation_study(
    spec,
    M: int,
    grading: float = 1.0,
    opts: Optional[SolverOptions] = None,
    max_doublings: int = 8,
) -> EigenResult:
    """Grow R, then shrink eps, until lambda1 moves by less than 1e-4 relative.

    The element count grows by M/4 per step so resolution does not degrade.
    """
    steps: List[TruncationStep] = []
    extra = max(1, M // 4)

    def solve(s, m):
        result = minimize_rayleigh(build_mesh(s.eps, s.R, m, grading), s, opts)
        steps.append(TruncationStep(eps=s.eps, R=s.R, M=m, lambda1=result.lambda1))
        log.info(f"Truncation eps={s.eps:g} R={s.R:g} M={m}: lambda1={result.lambda1:.10g}")
        return result

    current, m = spec, M
    best = solve(current, m)
    for phase in ("R", "eps"):
        for _ in range(max_doublings):
            if phase == "R":
                nxt = current.model_copy(update={"R": 2.0 * current.R})
            else:
                nxt = current.model_copy(update={"eps": 0.1 * current.eps})
            trial = solve(nxt, m + extra)
            change = abs(trial.lambda1 - best.lambda1) / abs(trial.lambda1)
            current, m, best = nxt, m + extra, trial
            if change < TRUNCATION_REL_CHANGE:
                break
        else:
            log.warning(f"Truncation in {phase} did not settle after {max_doublings} steps.")
    best.truncation_study = steps
    return best
