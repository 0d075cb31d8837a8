"""Graded radial meshes, P1 functions and the discrete energy/constraint forms.

For u piecewise linear on [eps, R] with nodal values u_i:

    I(u) = omega * sum_e |u'_e|^p int_e L r^(N-1) dr
    G(u) = omega * int K |u|^p r^(N-1) dr   (2-point Gauss per element)

Gradients and banded Hessians are exact derivatives of these discrete sums.
Banded arrays use the `scipy.linalg.solve_banded((1, 1), ...)` layout.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import gamma

from src.errors import AssemblyError

__all__ = [
    "AssembledFunctionals",
    "DiscreteFunction",
    "RadialForms",
    "RadialMesh",
    "assemble",
    "build_mesh",
    "load_vector",
    "surface_measure",
]

log = logging.getLogger("app.solvers.fem")

_GAUSS2 = (np.array([-1.0, 1.0]) / math.sqrt(3.0), np.array([1.0, 1.0]))
LOAD_GAUSS_ORDER = 5
REG_SCALE = 1e-8


def surface_measure(N: int) -> float:
    """omega_{N-1} = 2 pi^(N/2) / Gamma(N/2), the area of the unit sphere in R^N."""
    return float(2.0 * math.pi ** (N / 2.0) / gamma(N / 2.0))


@dataclass(frozen=True)
class RadialMesh:
    """Strictly increasing nodes eps = r_0 < ... < r_M = R with 2-point Gauss data."""

    nodes: np.ndarray
    grading: float = 1.0
    quad_points: np.ndarray = field(init=False, repr=False)
    quad_weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 3:
            raise ValueError("A mesh needs at least two elements (three nodes).")
        if not (np.diff(nodes) > 0).all():
            raise ValueError("Mesh nodes must be strictly increasing.")
        if not nodes[0] > 0:
            raise ValueError(f"Inner radius must be positive, got {nodes[0]}.")
        x, w = _GAUSS2
        half = 0.5 * np.diff(nodes)[:, None]
        mid = 0.5 * (nodes[:-1] + nodes[1:])[:, None]
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "quad_points", mid + half * x[None, :])
        object.__setattr__(self, "quad_weights", half * w[None, :])

    @classmethod
    def from_nodes(cls, nodes) -> "RadialMesh":
        """Mesh on arbitrary strictly increasing nodes."""
        return cls(nodes=np.asarray(nodes, dtype=float), grading=math.nan)

    @property
    def M(self) -> int:
        """Number of elements."""
        return self.nodes.size - 1

    @property
    def eps(self) -> float:
        """Inner radius."""
        return float(self.nodes[0])

    @property
    def R(self) -> float:
        """Outer radius."""
        return float(self.nodes[-1])

    @property
    def widths(self) -> np.ndarray:
        """Element lengths."""
        return np.diff(self.nodes)

    def describe(self) -> dict:
        """Metadata for reports."""
        return {
            "eps": self.eps,
            "R": self.R,
            "M": self.M,
            "grading": None if math.isnan(self.grading) else self.grading,
            "min_width": float(self.widths.min()),
            "max_width": float(self.widths.max()),
        }


def build_mesh(eps: float, R: float, M: int, grading: float = 1.0) -> RadialMesh:
    """Geometric mesh on [eps, R]; the last element is `grading` times the first."""
    if not 0 < eps < R:
        raise ValueError(f"Need 0 < eps < R, got eps={eps}, R={R}.")
    if M < 2:
        raise ValueError(f"M must be at least 2, got {M}.")
    if not grading >= 1:
        raise ValueError(f"grading must be >= 1, got {grading}.")
    q = grading ** (1.0 / (M - 1))
    widths = q ** np.arange(M)
    edges = np.concatenate([[0.0], np.cumsum(widths)])
    nodes = eps + (R - eps) * edges / edges[-1]
    nodes[0], nodes[-1] = eps, R
    return RadialMesh(nodes=nodes, grading=float(grading))


@dataclass
class DiscreteFunction:
    """Nodal values of a continuous P1 function on a radial mesh.

    Constrained ends hold exactly 0.
    """

    mesh: RadialMesh
    values: np.ndarray
    dirichlet_at_R: bool = True
    dirichlet_at_eps: bool = False

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != self.mesh.nodes.shape:
            raise ValueError(
                f"Expected {self.mesh.nodes.size} nodal values, got {values.shape}."
            )
        if self.dirichlet_at_R:
            values[-1] = 0.0
        if self.dirichlet_at_eps:
            values[0] = 0.0
        self.values = values

    @property
    def free(self) -> np.ndarray:
        """Mask of unconstrained nodes."""
        return free_mask(self.mesh.nodes.size, self.dirichlet_at_R, self.dirichlet_at_eps)

    def with_values(self, values: np.ndarray) -> "DiscreteFunction":
        """Same mesh and boundary conditions, new nodal values."""
        return DiscreteFunction(self.mesh, values, self.dirichlet_at_R, self.dirichlet_at_eps)

    def sup_norm(self) -> float:
        """max |u_i|."""
        return float(np.max(np.abs(self.values)))

    def to_csv(self, path: Union[str, Path]):
        """Write (r, u) columns."""
        from src.utils import write_series

        write_series(path, {"r": self.mesh.nodes, "u": self.values})


def free_mask(n: int, dirichlet_at_R: bool, dirichlet_at_eps: bool) -> np.ndarray:
    """Boolean mask of nodes without a Dirichlet condition."""
    mask = np.ones(n, dtype=bool)
    if dirichlet_at_R:
        mask[-1] = False
    if dirichlet_at_eps:
        mask[0] = False
    return mask


@dataclass
class AssembledFunctionals:
    """I(u), G(u) and their nodal gradients (zero at constrained nodes)."""

    I_val: float
    G_val: float
    grad_I: np.ndarray
    grad_G: np.ndarray


def _check_finite(values: np.ndarray, name: str, mesh: RadialMesh):
    bad = ~np.isfinite(values)
    if bad.any():
        e = int(np.argwhere(bad)[0][0])
        raise AssemblyError(
            f"{name} is not finite on element {e} "
            f"[{mesh.nodes[e]:g}, {mesh.nodes[e + 1]:g}].",
            element=e,
        )


def _regularized_power(s: np.ndarray, p: float, scale: float) -> np.ndarray:
    """|s|^(p-2), replaced by (s^2 + reg^2)^((p-2)/2) when p != 2."""
    if p == 2.0:
        return np.ones_like(s)
    reg = REG_SCALE * (scale if scale > 0 else 1.0)
    return (s * s + reg * reg) ** ((p - 2.0) / 2.0)


class RadialForms:
    """Element data of one (mesh, spec) pair, reused across many evaluations."""

    def __init__(
        self,
        mesh: RadialMesh,
        spec,
        dirichlet_at_R: bool = True,
        dirichlet_at_eps: bool = False,
    ):
        """Precompute weights at the quadrature points."""
        if not (dirichlet_at_R or dirichlet_at_eps):
            raise ValueError("At least one end must carry a Dirichlet condition.")
        self.mesh = mesh
        self.p = float(spec.p)
        self.N = int(spec.N)
        self.omega = surface_measure(self.N)
        self.dirichlet_at_R = dirichlet_at_R
        self.dirichlet_at_eps = dirichlet_at_eps
        self.free = free_mask(mesh.nodes.size, dirichlet_at_R, dirichlet_at_eps)

        rq, wq = mesh.quad_points, mesh.quad_weights
        Lq, Kq = spec.L(rq), spec.K(rq)
        _check_finite(Lq, "L", mesh)
        _check_finite(Kq, "K", mesh)
        jac = rq ** (self.N - 1)
        self.h = mesh.widths
        # omega * int_e L r^(N-1), exact for element-constant |u'|^p.
        self.stiff = self.omega * np.sum(wq * Lq * jac, axis=1)
        self.mass_q = self.omega * wq * Kq * jac
        self.K_q = Kq
        self.phi_left = (mesh.nodes[1:, None] - rq) / self.h[:, None]
        self.phi_right = (rq - mesh.nodes[:-1, None]) / self.h[:, None]

    def new_function(self, values) -> "DiscreteFunction":
        """Wrap nodal values with this form's boundary conditions."""
        return DiscreteFunction(self.mesh, values, self.dirichlet_at_R, self.dirichlet_at_eps)

    def slopes(self, u: np.ndarray) -> np.ndarray:
        """Element-constant derivatives u'_e."""
        return np.diff(u) / self.h

    def at_quad(self, u: np.ndarray) -> np.ndarray:
        """u at the quadrature points, shape (M, 2)."""
        return self.phi_left * u[:-1, None] + self.phi_right * u[1:, None]

    def energy(self, u: np.ndarray) -> float:
        """I(u)."""
        return float(np.sum(self.stiff * np.abs(self.slopes(u)) ** self.p))

    def constraint(self, u: np.ndarray) -> float:
        """G(u)."""
        return float(np.sum(self.mass_q * np.abs(self.at_quad(u)) ** self.p))

    def _scatter(self, left: np.ndarray, right: np.ndarray) -> np.ndarray:
        g = np.zeros(self.mesh.nodes.size)
        g[:-1] += left
        g[1:] += right
        g[~self.free] = 0.0
        return g

    def grad_energy(self, u: np.ndarray) -> np.ndarray:
        """Nodal gradient of I."""
        s = self.slopes(u)
        t = self.stiff * self.p * np.sign(s) * np.abs(s) ** (self.p - 1.0) / self.h
        return self._scatter(-t, t)

    def grad_constraint(self, u: np.ndarray) -> np.ndarray:
        """Nodal gradient of G."""
        uq = self.at_quad(u)
        t = self.mass_q * self.p * np.sign(uq) * np.abs(uq) ** (self.p - 1.0)
        return self._scatter(np.sum(t * self.phi_left, axis=1), np.sum(t * self.phi_right, axis=1))

    def _banded(self, diag_l, diag_r, off) -> np.ndarray:
        n = self.mesh.nodes.size
        ab = np.zeros((3, n))
        ab[1, :-1] += diag_l
        ab[1, 1:] += diag_r
        ab[0, 1:] = off
        ab[2, :-1] = off
        return ab

    def hess_energy(self, u: np.ndarray) -> np.ndarray:
        """Banded Hessian of I, with the p-term regularized for p != 2."""
        s = self.slopes(u)
        rho = _regularized_power(s, self.p, float(np.max(np.abs(s))))
        c = self.stiff * self.p * (self.p - 1.0) * rho / self.h**2
        return self._banded(c, c, -c)

    def hess_constraint(self, u: np.ndarray) -> np.ndarray:
        """Banded Hessian of G, with the p-term regularized for p != 2."""
        uq = self.at_quad(u)
        rho = _regularized_power(uq, self.p, float(np.max(np.abs(uq))))
        d = self.mass_q * self.p * (self.p - 1.0) * rho
        return self._banded(
            np.sum(d * self.phi_left**2, axis=1),
            np.sum(d * self.phi_right**2, axis=1),
            np.sum(d * self.phi_left * self.phi_right, axis=1),
        )

    def constrain(self, ab: np.ndarray) -> np.ndarray:
        """Replace constrained rows and columns by the identity."""
        ab = ab.copy()
        for i in np.flatnonzero(~self.free):
            ab[1, i] = 1.0
            if i + 1 < ab.shape[1]:
                ab[0, i + 1] = 0.0
            if i > 0:
                ab[2, i - 1] = 0.0
        return ab

    def stiffness_matrix(self) -> np.ndarray:
        """Dense A with u^T A u = omega int L r^(N-1) u'^2, on free nodes."""
        c = self.stiff / self.h**2
        return self._dense_free(self._banded(c, c, -c))

    def mass_matrix(self) -> np.ndarray:
        """Dense B with u^T B u = omega int K r^(N-1) u^2 (Gauss), on free nodes."""
        d = self.mass_q
        return self._dense_free(
            self._banded(
                np.sum(d * self.phi_left**2, axis=1),
                np.sum(d * self.phi_right**2, axis=1),
                np.sum(d * self.phi_left * self.phi_right, axis=1),
            )
        )

    def _dense_free(self, ab: np.ndarray) -> np.ndarray:
        full = np.diag(ab[1]) + np.diag(ab[0, 1:], 1) + np.diag(ab[2, :-1], -1)
        idx = np.flatnonzero(self.free)
        return full[np.ix_(idx, idx)]

    def assemble(self, u: np.ndarray) -> AssembledFunctionals:
        """All four discrete quantities at u."""
        return AssembledFunctionals(
            I_val=self.energy(u),
            G_val=self.constraint(u),
            grad_I=self.grad_energy(u),
            grad_G=self.grad_constraint(u),
        )


def assemble(mesh: RadialMesh, spec, u: DiscreteFunction) -> AssembledFunctionals:
    """I(u), G(u) and their nodal gradients for one function."""
    if u.mesh is not mesh and not np.array_equal(u.mesh.nodes, mesh.nodes):
        raise ValueError("u is not defined on this mesh.")
    forms = RadialForms(mesh, spec, u.dirichlet_at_R, u.dirichlet_at_eps)
    return forms.assemble(u.values)


def load_vector(
    mesh: RadialMesh,
    h,
    N: int,
    dirichlet_at_R: bool = True,
    dirichlet_at_eps: bool = False,
) -> np.ndarray:
    """b_i = omega int h phi_i r^(N-1) dr, zero at Dirichlet nodes.

    Elements are split at the breakpoints of `h` and each piece is integrated
    with 5-point Gauss, so indicator-type profiles are integrated exactly.
    """
    cuts = [b for b in h.breakpoints() if mesh.eps < b < mesh.R]
    edges = np.unique(np.concatenate([mesh.nodes, cuts]))
    elem = np.searchsorted(mesh.nodes, 0.5 * (edges[:-1] + edges[1:])) - 1
    x, w = leggauss(LOAD_GAUSS_ORDER)
    half = 0.5 * np.diff(edges)[:, None]
    mid = 0.5 * (edges[:-1] + edges[1:])[:, None]
    r = mid + half * x[None, :]
    wt = half * w[None, :]
    hv = np.asarray(h(r), dtype=float)
    bad = ~np.isfinite(hv)
    if bad.any():
        e = int(elem[np.argwhere(bad)[0][0]])
        raise AssemblyError(f"h is not finite on element {e}.", element=e)
    lo, hi = mesh.nodes[elem][:, None], mesh.nodes[elem + 1][:, None]
    integrand = surface_measure(N) * wt * hv * r ** (N - 1)
    b = np.zeros(mesh.nodes.size)
    np.add.at(b, elem, np.sum(integrand * (hi - r) / (hi - lo), axis=1))
    np.add.at(b, elem + 1, np.sum(integrand * (r - lo) / (hi - lo), axis=1))
    b[~free_mask(b.size, dirichlet_at_R, dirichlet_at_eps)] = 0.0
    return b

