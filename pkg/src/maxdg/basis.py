"""Broken Q_k space on axis-aligned quadrilateral meshes.

Nodal Lagrange basis on tensor Gauss-Lobatto points.  Coefficients of a
scalar field are stored as a flat vector with index
``e * (k+1)**2 + i * (k+1) + j`` where ``i`` runs along x1 and ``j`` along x2;
``space.as_cells`` gives the ``(ne, k+1, k+1)`` view.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from numpy.polynomial import legendre as npleg

from .mesh import MINUS, FaceKind, Mesh2D

__all__ = [
    "DgSpace",
    "FacePolynomial",
    "MaterialParams",
    "TEState",
    "gauss_legendre",
    "gauss_lobatto",
    "kron_apply",
    "l2_project",
    "lagrange_matrix",
    "nodal_interpolate_face",
    "nodal_interpolate_volume",
    "weighted_inner_product",
    "weighted_norm",
]

ScalarField = Callable[[np.ndarray, np.ndarray], np.ndarray]


def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    return npleg.leggauss(n)


def gauss_lobatto(n: int) -> np.ndarray:
    """``n >= 2`` Gauss-Lobatto-Legendre points on [-1, 1], ascending."""
    if n < 2:
        raise ValueError("Gauss-Lobatto needs at least two points")
    interior = npleg.Legendre.basis(n - 1).deriv().roots() if n > 2 else np.array([])
    return np.concatenate([[-1.0], np.sort(interior.real), [1.0]])


def kron_apply(A: np.ndarray, B: np.ndarray, c: np.ndarray) -> np.ndarray:
    """``out[e] = A @ c[e] @ B.T`` for a stack ``c`` of shape ``(ne, n, m)``.

    Done as one flat GEMM with the Kronecker matrix, which beats batched
    small matmuls by an order of magnitude at the degrees used here.
    """
    ne = c.shape[0]
    return (c.reshape(ne, -1) @ np.kron(A, B).T).reshape(ne, A.shape[0], B.shape[0])


def lagrange_matrix(nodes: np.ndarray, points: np.ndarray, derivative: bool = False) -> np.ndarray:
    """``L[p, a] = l_a(points[p])`` (or its derivative) for the Lagrange basis on ``nodes``."""
    deg = len(nodes) - 1
    coef = np.linalg.inv(npleg.legvander(nodes, deg))  # columns: Legendre coefficients of l_a
    if derivative:
        coef = npleg.legder(coef, axis=0)
        return npleg.legvander(np.asarray(points, dtype=float), deg - 1) @ coef
    return npleg.legvander(np.asarray(points, dtype=float), deg) @ coef


@dataclass(frozen=True)
class MaterialParams:
    mu_minus: float = 1.0
    mu_plus: float = 1.0
    eps_minus: float = 1.0
    eps_plus: float = 1.0

    def __post_init__(self):
        for name in ("mu_minus", "mu_plus", "eps_minus", "eps_plus"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive and finite, got {v}")

    @property
    def c_minus(self) -> float:
        return 1.0 / math.sqrt(self.mu_minus * self.eps_minus)

    @property
    def c_plus(self) -> float:
        return 1.0 / math.sqrt(self.mu_plus * self.eps_plus)

    @property
    def delta(self) -> float:
        return min(self.mu_minus, self.mu_plus, self.eps_minus, self.eps_plus)

    def _per_element(self, mesh: Mesh2D, minus: float, plus: float) -> np.ndarray:
        return np.where(mesh.subdomain == MINUS, minus, plus).astype(float)

    def mu(self, mesh: Mesh2D) -> np.ndarray:
        return self._per_element(mesh, self.mu_minus, self.mu_plus)

    def eps(self, mesh: Mesh2D) -> np.ndarray:
        return self._per_element(mesh, self.eps_minus, self.eps_plus)

    def c(self, mesh: Mesh2D) -> np.ndarray:
        return self._per_element(mesh, self.c_minus, self.c_plus)

    def mu_c(self, mesh: Mesh2D) -> np.ndarray:
        return self.mu(mesh) * self.c(mesh)

    def eps_c(self, mesh: Mesh2D) -> np.ndarray:
        return self.eps(mesh) * self.c(mesh)

    def scaled(self, factor: float) -> "MaterialParams":
        return MaterialParams(*(factor * v for v in (self.mu_minus, self.mu_plus, self.eps_minus, self.eps_plus)))


@dataclass
class TEState:
    """Coefficient vectors of (H3, E1, E2) at time ``t``."""

    H3: np.ndarray
    E1: np.ndarray
    E2: np.ndarray
    t: float = 0.0

    @classmethod
    def zeros(cls, space: "DgSpace", t: float = 0.0) -> "TEState":
        n = space.ndof
        return cls(np.zeros(n), np.zeros(n), np.zeros(n), t)

    @classmethod
    def random(cls, space: "DgSpace", rng: np.random.Generator, t: float = 0.0) -> "TEState":
        n = space.ndof
        return cls(rng.standard_normal(n), rng.standard_normal(n), rng.standard_normal(n), t)

    def copy(self) -> "TEState":
        return TEState(self.H3.copy(), self.E1.copy(), self.E2.copy(), self.t)

    def __add__(self, other: "TEState") -> "TEState":
        return TEState(self.H3 + other.H3, self.E1 + other.E1, self.E2 + other.E2, self.t)

    def __sub__(self, other: "TEState") -> "TEState":
        return TEState(self.H3 - other.H3, self.E1 - other.E1, self.E2 - other.E2, self.t)

    def __mul__(self, a: float) -> "TEState":
        return TEState(a * self.H3, a * self.E1, a * self.E2, self.t)

    __rmul__ = __mul__

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.H3).all() and np.isfinite(self.E1).all() and np.isfinite(self.E2).all())


@dataclass(frozen=True, eq=False)
class FacePolynomial:
    """Degree-k polynomial on the interface segment x2 in [a, b], in nodal form."""

    a: float
    b: float
    nodes: np.ndarray  # physical x2 positions
    values: np.ndarray

    def __call__(self, x2) -> np.ndarray:
        s = 2.0 * (np.asarray(x2, dtype=float) - self.a) / (self.b - self.a) - 1.0
        ref = 2.0 * (self.nodes - self.a) / (self.b - self.a) - 1.0
        return lagrange_matrix(ref, np.atleast_1d(s)) @ self.values


@dataclass(frozen=True, eq=False)
class DgSpace:
    mesh: Mesh2D
    degree: int
    face_points: int | None = None  # q_f for non-polynomial face data; default k + 2
    nodes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        k = int(self.degree)
        if k < 1:
            raise ValueError("degree must be >= 1")
        object.__setattr__(self, "degree", k)
        object.__setattr__(self, "nodes", gauss_lobatto(k + 1))
        if self.face_points is None:
            object.__setattr__(self, "face_points", k + 2)
        boxes = self.mesh.boxes()
        for e in range(self.mesh.n_elements):
            c = self.mesh.element_corners(e)
            x0, x1, y0, y1 = boxes[e]
            expected = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
            if not np.allclose(np.sort(c, axis=0), np.sort(expected, axis=0), atol=1e-12) or \
                    not all(np.isclose(c[:, 0], x0) | np.isclose(c[:, 0], x1)):
                raise ValueError(f"element {e} is not an axis-aligned rectangle")
        self._check_face_matching()

    # -- geometry -----------------------------------------------------------
    @cached_property
    def _boxes(self) -> np.ndarray:
        return self.mesh.boxes()

    @property
    def x0(self) -> np.ndarray:
        return self._boxes[:, 0]

    @property
    def y0(self) -> np.ndarray:
        return self._boxes[:, 2]

    @cached_property
    def hx(self) -> np.ndarray:
        return self._boxes[:, 1] - self._boxes[:, 0]

    @cached_property
    def hy(self) -> np.ndarray:
        return self._boxes[:, 3] - self._boxes[:, 2]

    @property
    def n_elements(self) -> int:
        return self.mesh.n_elements

    @property
    def nloc(self) -> int:
        return (self.degree + 1) ** 2

    @property
    def ndof(self) -> int:
        return self.n_elements * self.nloc

    def dof_offset(self, e: int) -> int:
        return e * self.nloc

    def as_cells(self, v: np.ndarray) -> np.ndarray:
        n = self.degree + 1
        return v.reshape(self.n_elements, n, n)

    def map_to_physical(self, xi: np.ndarray, eta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Tensor images of reference coordinates: arrays ``(ne, len(xi), len(eta))``."""
        x = self.x0[:, None, None] + 0.5 * (xi[None, :, None] + 1.0) * self.hx[:, None, None]
        y = self.y0[:, None, None] + 0.5 * (eta[None, None, :] + 1.0) * self.hy[:, None, None]
        return np.broadcast_arrays(x, y)

    @cached_property
    def node_coords(self) -> tuple[np.ndarray, np.ndarray]:
        return self.map_to_physical(self.nodes, self.nodes)

    # -- 1D reference matrices ------------------------------------------------
    @cached_property
    def mass_1d(self) -> np.ndarray:
        q, w = gauss_legendre(self.degree + 2)
        B = lagrange_matrix(self.nodes, q)
        return B.T @ (w[:, None] * B)

    @cached_property
    def mass_1d_inv(self) -> np.ndarray:
        return np.linalg.inv(self.mass_1d)

    @cached_property
    def stiff_1d(self) -> np.ndarray:
        """``S[a, b] = int l_a l_b' dxi``."""
        q, w = gauss_legendre(self.degree + 2)
        B = lagrange_matrix(self.nodes, q)
        dB = lagrange_matrix(self.nodes, q, derivative=True)
        return B.T @ (w[:, None] * dB)

    def volume_quadrature(self, npts: int | None = None):
        """Tensor Gauss rule: ``(x, y, w, B)`` with physical points/weights of shape
        ``(ne, n, n)`` and the 1D basis table ``B[q, a]``."""
        n = self.degree + 2 if npts is None else npts
        q, w = gauss_legendre(n)
        x, y = self.map_to_physical(q, q)
        jac = 0.25 * self.hx * self.hy
        W = jac[:, None, None] * (w[:, None] * w[None, :])[None]
        return x, y, W, lagrange_matrix(self.nodes, q)

    # -- mass matrices --------------------------------------------------------
    def mass_matrix(self, e: int, weight: float = 1.0) -> np.ndarray:
        return weight * 0.25 * self.hx[e] * self.hy[e] * np.kron(self.mass_1d, self.mass_1d)

    def mass_matrix_inverse(self, e: int, weight: float = 1.0) -> np.ndarray:
        return (4.0 / (weight * self.hx[e] * self.hy[e])) * np.kron(self.mass_1d_inv, self.mass_1d_inv)

    @cached_property
    def _mass_2d(self) -> np.ndarray:
        return np.kron(self.mass_1d, self.mass_1d)

    @cached_property
    def _mass_2d_inv(self) -> np.ndarray:
        return np.kron(self.mass_1d_inv, self.mass_1d_inv)

    def apply_mass(self, v: np.ndarray, weight: np.ndarray | float = 1.0) -> np.ndarray:
        scale = np.asarray(weight, dtype=float) * 0.25 * self.hx * self.hy
        return ((v.reshape(self.n_elements, -1) @ self._mass_2d) * scale[:, None]).reshape(-1)

    def apply_mass_inverse(self, r: np.ndarray, weight: np.ndarray | float = 1.0) -> np.ndarray:
        scale = 4.0 / (np.asarray(weight, dtype=float) * self.hx * self.hy)
        return ((r.reshape(self.n_elements, -1) @ self._mass_2d_inv) * scale[:, None]).reshape(-1)

    # -- traces -------------------------------------------------------------
    @cached_property
    def trace_index(self) -> np.ndarray:
        """``(4, k+1)`` local DoF indices of the four edges (x-, x+, y-, y+), ordered
        by increasing tangential coordinate."""
        n = self.degree + 1
        loc = np.arange(n * n).reshape(n, n)
        return np.stack([loc[0, :], loc[-1, :], loc[:, 0], loc[:, -1]])

    def face_node_coords(self, e: int, local: int) -> np.ndarray:
        x, y = self.node_coords
        idx = self.trace_index[local]
        return np.stack([x[e].reshape(-1)[idx], y[e].reshape(-1)[idx]], axis=1)

    def _check_face_matching(self) -> None:
        for i, f in enumerate(self.mesh.faces):
            if f.left_local < 0 or (f.right is not None and f.right_local < 0):
                raise ValueError(f"face {i} is not an axis-aligned element edge")
            if f.right is None:
                continue
            a = self.face_node_coords(f.left, f.left_local)
            b = self.face_node_coords(f.right, f.right_local)
            if not np.allclose(a, b, atol=1e-12):
                raise ValueError(f"face nodes of face {i} do not match between neighbours")

    # -- evaluation ---------------------------------------------------------
    def evaluate(self, v: np.ndarray, x: np.ndarray, y: np.ndarray, elements: np.ndarray | None = None) -> np.ndarray:
        """Point values of the broken function ``v`` (elements located if not given)."""
        x = np.asarray(x, dtype=float).reshape(-1)
        y = np.asarray(y, dtype=float).reshape(-1)
        if elements is None:
            elements = self.mesh.locate(np.stack([x, y], axis=1))
        xi = 2.0 * (x - self.x0[elements]) / self.hx[elements] - 1.0
        eta = 2.0 * (y - self.y0[elements]) / self.hy[elements] - 1.0
        Lx = lagrange_matrix(self.nodes, xi)
        Ly = lagrange_matrix(self.nodes, eta)
        c = self.as_cells(v)[elements]
        return np.einsum("pa,pab,pb->p", Lx, c, Ly)


def l2_project(f: ScalarField, space: DgSpace, npts: int | None = None) -> np.ndarray:
    """Broken L2 projection: per element ``M c = b`` with ``b`` the Gauss-quadrature
    moments of ``f`` (exact for polynomial ``f`` of degree <= k)."""
    x, y, W, B = space.volume_quadrature(npts)
    fv = np.asarray(f(x, y), dtype=float) * W
    b = np.einsum("qa,eqr,rb->eab", B, np.broadcast_to(fv, W.shape), B, optimize=True)
    out = space.apply_mass_inverse(b.reshape(-1))
    if not np.isfinite(out).all():
        raise FloatingPointError("singular element mass matrix in l2_project")
    return out


def nodal_interpolate_volume(f: ScalarField, space: DgSpace) -> np.ndarray:
    x, y = space.node_coords
    return np.asarray(np.broadcast_to(f(x, y), x.shape), dtype=float).reshape(-1).copy()


def nodal_interpolate_face(g: Callable[[np.ndarray], np.ndarray], face, space: DgSpace) -> FacePolynomial:
    """Interpolate ``g(x2)`` at the Gauss-Lobatto nodes of an interface face."""
    if face.kind is not FaceKind.INTERFACE:
        raise ValueError(f"nodal face interpolation needs an interface face, got {face.kind.value}")
    a = min(face.endpoints[0][1], face.endpoints[1][1])
    b = max(face.endpoints[0][1], face.endpoints[1][1])
    nodes = a + 0.5 * (space.nodes + 1.0) * (b - a)
    values = np.asarray(np.broadcast_to(g(nodes), nodes.shape), dtype=float)
    return FacePolynomial(a, b, nodes, values)


def weighted_inner_product(u: TEState, v: TEState, materials: MaterialParams, space: DgSpace) -> float:
    """<mu H3u, H3v> + <eps E1u, E1v> + <eps E2u, E2v>."""
    for s in (u, v):
        if not (len(s.H3) == len(s.E1) == len(s.E2) == space.ndof):
            raise ValueError("state dimension does not match the space")
    mu = materials.mu(space.mesh)
    eps = materials.eps(space.mesh)
    return float(
        u.H3 @ space.apply_mass(v.H3, mu)
        + u.E1 @ space.apply_mass(v.E1, eps)
        + u.E2 @ space.apply_mass(v.E2, eps)
    )


def weighted_norm(u: TEState, materials: MaterialParams, space: DgSpace) -> float:
    return math.sqrt(max(weighted_inner_product(u, u, materials, space), 0.0))
