"""Central-flux DG curl operators for the TE system, the interface lift, and the
CFL norm estimate.

Fields are scalar broken functions; ``C_E`` maps (E1, E2) to the H3 space and
``C_H`` maps H3 to the (E1, E2) space.  All applications are matrix-free:
tensor-product volume kernels plus vectorized face loops, followed by the
element-local inverse of the weighted mass matrix.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from numpy.polynomial import legendre as npleg
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh

from .basis import DgSpace, MaterialParams, TEState, gauss_legendre, lagrange_matrix
from .mesh import FaceKind, validate_interface_alignment

__all__ = [
    "CflEstimate",
    "FluxWeights",
    "MaxwellOperators",
    "QUADRATURE",
    "INTERP",
    "weighted_average",
]

QUADRATURE = "quadrature"
INTERP = "interp"


def weighted_average(v_left, v_right, w_left, w_right, conjugate: bool = False):
    """Face average ``(w_l v_l + w_r v_r) / (w_l + w_r)``; ``conjugate`` swaps the weights."""
    if np.any(np.asarray(w_left) <= 0) or np.any(np.asarray(w_right) <= 0):
        raise ValueError("weights must be positive")
    if conjugate:
        w_left, w_right = w_right, w_left
    return (w_left * v_left + w_right * v_right) / (w_left + w_right)


@dataclass(frozen=True)
class FluxWeights:
    """Per-interior-face normalized weights ``(a_l, a_r)`` with ``a_l + a_r = 1``.

    ``H`` weights average H3 in ``C_H``; ``E`` weights average E in ``C_E``;
    the lift uses the swap of the ``H`` weights.
    """

    h_left: np.ndarray
    h_right: np.ndarray
    e_left: np.ndarray
    e_right: np.ndarray
    conjugate: bool

    @classmethod
    def build(cls, space: DgSpace, materials: MaterialParams, left, right, conjugate=False):
        mu_c = materials.mu_c(space.mesh)
        eps_c = materials.eps_c(space.mesh)
        ml, mr = mu_c[left], mu_c[right]
        el, er = eps_c[left], eps_c[right]
        if conjugate:
            ml, mr = mr, ml
            el, er = er, el
        return cls(ml / (ml + mr), mr / (ml + mr), el / (el + er), er / (el + er), conjugate)


class _FaceGroup:
    """Faces sharing the same (left_local, right_local) slot pair."""

    def __init__(self, left, right, left_local, right_local, normals, lengths, face_ids):
        self.left = np.asarray(left, dtype=int)
        self.right = None if right is None else np.asarray(right, dtype=int)
        self.left_local = left_local
        self.right_local = right_local
        self.n1 = np.asarray(normals)[:, 0]
        self.n2 = np.asarray(normals)[:, 1]
        self.half = 0.5 * np.asarray(lengths)
        self.face_ids = np.asarray(face_ids, dtype=int)
        self.weights: FluxWeights | None = None


class CflEstimate(NamedTuple):
    value: float
    converged: bool
    iterations: int


class MaxwellOperators:
    """Discrete operators on one (mesh, degree, materials) triple.

    Parameters
    ----------
    conjugate:
        Use the swapped-weight average in the curl operators (the lift then uses
        the plain ``mu c`` average).  Identical to the default for equal materials.
    """

    def __init__(self, space: DgSpace, materials: MaterialParams, conjugate: bool = False):
        self.space = space
        self.materials = materials
        self.conjugate = conjugate
        mesh = space.mesh
        self.mu = materials.mu(mesh)
        self.eps = materials.eps(mesh)
        self._interior: list[_FaceGroup] = []
        self._boundary: list[_FaceGroup] = []
        self._interface: _FaceGroup | None = None
        self._idx_cache: dict[tuple, np.ndarray] = {}
        # flat (nloc x nloc) right factors of the volume terms, inverse mass included:
        # c -> c @ (S Mi) along x2 and c -> (Mi S^T) @ c along x1
        eye = np.eye(space.degree + 1)
        self._D2 = np.kron(eye, space.stiff_1d @ space.mass_1d_inv)
        self._D1 = np.kron((space.mass_1d_inv @ space.stiff_1d.T).T, eye)
        self._build_groups()

    # -- setup ----------------------------------------------------------------
    def _build_groups(self):
        mesh = self.space.mesh
        buckets: dict[tuple, list[int]] = {}
        for i, f in enumerate(mesh.faces):
            key = (f.is_interior, f.left_local, f.right_local if f.is_interior else -1)
            buckets.setdefault(key, []).append(i)
        for (interior, ll, rl), ids in sorted(buckets.items()):
            fs = [mesh.faces[i] for i in ids]
            group = _FaceGroup(
                [f.left for f in fs],
                [f.right for f in fs] if interior else None,
                ll, rl if interior else None,
                [f.normal for f in fs], [f.measure for f in fs], ids,
            )
            if interior:
                group.weights = FluxWeights.build(
                    self.space, self.materials, group.left, group.right, self.conjugate
                )
                self._interior.append(group)
            else:
                self._boundary.append(group)

        iface = [i for i, f in enumerate(mesh.faces) if f.kind is FaceKind.INTERFACE]
        if iface:
            fs = [mesh.faces[i] for i in iface]
            locs = {(f.left_local, f.right_local) for f in fs}
            if len(locs) != 1:
                raise ValueError("interface faces must share one local slot pair")
            (ll, rl), = locs
            g = _FaceGroup([f.left for f in fs], [f.right for f in fs], ll, rl,
                           [f.normal for f in fs], [f.measure for f in fs], iface)
            g.weights = FluxWeights.build(self.space, self.materials, g.left, g.right, self.conjugate)
            self.y_lo = np.array([min(f.endpoints[0][1], f.endpoints[1][1]) for f in fs])
            self.y_hi = np.array([max(f.endpoints[0][1], f.endpoints[1][1]) for f in fs])
            self._interface = g

    @property
    def interface_faces(self) -> np.ndarray:
        return np.array([], dtype=int) if self._interface is None else self._interface.face_ids

    # -- helpers --------------------------------------------------------------
    def _index(self, elems: np.ndarray, local: int) -> np.ndarray:
        key = (elems.ctypes.data, len(elems), local)
        idx = self._idx_cache.get(key)
        if idx is None:
            idx = elems[:, None] * self.space.nloc + self.space.trace_index[local][None, :]
            self._idx_cache[key] = idx
        return idx

    def _trace(self, v: np.ndarray, elems: np.ndarray, local: int) -> np.ndarray:
        return v[self._index(elems, local)]

    def _scatter(self, res: np.ndarray, elems: np.ndarray, local: int, vals: np.ndarray):
        # (elem, local) slots are unique within a group, so fancy += is safe
        res[self._index(elems, local)] += vals

    def _face_moment(self, group: _FaceGroup, x: np.ndarray) -> np.ndarray:
        # int_F x l_j ds for face data x given at the face nodes (exact, degree <= 2k)
        return group.half[:, None] * (x @ self.space.mass_1d)

    # -- operators ------------------------------------------------------------
    def apply_CE(self, E1: np.ndarray, E2: np.ndarray) -> np.ndarray:
        """H3-space result ``C_E E`` (PEC built in: no boundary-face terms)."""
        sp = self.space
        if E1.shape != (sp.ndof,) or E2.shape != (sp.ndof,):
            raise ValueError("dimension mismatch in apply_CE")
        # volume terms with the inverse mass already applied
        ne = sp.n_elements
        vol = (2.0 / (sp.hy * self.mu))[:, None] * (E1.reshape(ne, -1) @ self._D2)
        vol -= (2.0 / (sp.hx * self.mu))[:, None] * (E2.reshape(ne, -1) @ self._D1)
        r = np.zeros(sp.ndof)
        f1, f2 = E1, E2
        for g in self._interior:
            w = g.weights
            avg1 = w.e_left[:, None] * self._trace(f1, g.left, g.left_local) \
                + w.e_right[:, None] * self._trace(f1, g.right, g.right_local)
            avg2 = w.e_left[:, None] * self._trace(f2, g.left, g.left_local) \
                + w.e_right[:, None] * self._trace(f2, g.right, g.right_local)
            m = self._face_moment(g, avg1 * g.n2[:, None] - avg2 * g.n1[:, None])
            # + int ({E1} n2 - {E2} n1) [phi], [phi] = phi_r - phi_l
            self._scatter(r, g.left, g.left_local, -m)
            self._scatter(r, g.right, g.right_local, m)
        return vol.reshape(-1) + sp.apply_mass_inverse(r, self.mu)

    def apply_CH_hat(self, H3: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(E1, E2)-space result ``C_H H3`` including the boundary-face terms."""
        sp = self.space
        if H3.shape != (sp.ndof,):
            raise ValueError("dimension mismatch in apply_CH_hat")
        c = H3.reshape(sp.n_elements, -1)
        vol1 = -(2.0 / (sp.hy * self.eps))[:, None] * (c @ self._D2)
        vol2 = (2.0 / (sp.hx * self.eps))[:, None] * (c @ self._D1)
        r1, r2 = np.zeros(sp.ndof), np.zeros(sp.ndof)
        f = H3
        for g in self._boundary:
            m = self._face_moment(g, self._trace(f, g.left, g.left_local))
            self._scatter(r1, g.left, g.left_local, g.n2[:, None] * m)
            self._scatter(r2, g.left, g.left_local, -g.n1[:, None] * m)
        for g in self._interior:
            w = g.weights
            avg = w.h_left[:, None] * self._trace(f, g.left, g.left_local) \
                + w.h_right[:, None] * self._trace(f, g.right, g.right_local)
            m = self._face_moment(g, avg)
            # - int {H3} ([psi1] n2 - [psi2] n1)
            m1 = g.n2[:, None] * m
            m2 = g.n1[:, None] * m
            self._scatter(r1, g.left, g.left_local, m1)
            self._scatter(r1, g.right, g.right_local, -m1)
            self._scatter(r2, g.left, g.left_local, -m2)
            self._scatter(r2, g.right, g.right_local, m2)
        return (vol1.reshape(-1) + sp.apply_mass_inverse(r1, self.eps),
                vol2.reshape(-1) + sp.apply_mass_inverse(r2, self.eps))

    def apply(self, u: TEState) -> TEState:
        """Combined operator ``(H, E) -> (-C_E E, C_H H)``."""
        h = -self.apply_CE(u.E1, u.E2)
        e1, e2 = self.apply_CH_hat(u.H3)
        return TEState(h, e1, e2, u.t)

    # -- interface lift ---------------------------------------------------------
    def interface_moments(self, g: Callable, mode: str = QUADRATURE, face_points: int | None = None) -> np.ndarray:
        """``m[f, j] = int_F J l_j ds`` on each interface face (J replaced by its
        face interpolant in ``interp`` mode)."""
        sp = self.space
        grp = self._interface
        if grp is None:
            return np.zeros((0, sp.degree + 1))
        lo, hi = self.y_lo, self.y_hi
        half = 0.5 * (hi - lo)
        if mode == INTERP:
            ynodes = lo[:, None] + (sp.nodes[None, :] + 1.0) * half[:, None]
            vals = np.asarray(np.broadcast_to(g(ynodes), ynodes.shape), dtype=float)
            return half[:, None] * (vals @ sp.mass_1d)
        if mode != QUADRATURE:
            raise ValueError(f"unknown lift mode {mode!r}")
        moments = getattr(g, "legendre_moments", None)
        if moments is not None:
            # exact Legendre moments supplied by the data (oscillatory currents)
            leg = moments(lo, hi, sp.degree)  # (nf, k+1): int_F J P_r(s) ds
            coef = np.linalg.inv(npleg.legvander(sp.nodes, sp.degree))  # l_j = sum_r coef[r, j] P_r
            return leg @ coef
        q, w = gauss_legendre(face_points or sp.face_points)
        yq = lo[:, None] + (q[None, :] + 1.0) * half[:, None]
        vals = np.asarray(np.broadcast_to(g(yq), yq.shape), dtype=float)
        B = lagrange_matrix(sp.nodes, q)
        return half[:, None] * ((vals * w[None, :]) @ B)

    def lift_from_moments(self, m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        sp = self.space
        r2 = np.zeros(sp.ndof)
        grp = self._interface
        if grp is not None and len(m):
            w = grp.weights
            # overlined (swapped) average of psi2: left gets the right weight
            self._scatter(r2, grp.left, grp.left_local, -w.h_right[:, None] * m)
            self._scatter(r2, grp.right, grp.right_local, -w.h_left[:, None] * m)
        return np.zeros(sp.ndof), sp.apply_mass_inverse(r2.reshape(-1), self.eps)

    def lift_interface(self, g: Callable, mode: str = QUADRATURE, face_points: int | None = None):
        """Riesz representative of ``psi -> -sum_F int_F J {psi2}^{bar mu c}`` as (E1, E2)."""
        validate_interface_alignment(self.space.mesh)
        return self.lift_from_moments(self.interface_moments(g, mode, face_points))

    # -- CFL ------------------------------------------------------------------
    def wave_operator(self, E1: np.ndarray, E2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """``C_H C_E`` on the E component (eps-self-adjoint, positive semidefinite)."""
        return self.apply_CH_hat(self.apply_CE(E1, E2))

    def eps_inner(self, a1, a2, b1, b2) -> float:
        sp = self.space
        return float(a1 @ sp.apply_mass(b1, self.eps) + a2 @ sp.apply_mass(b2, self.eps))

    def estimate_CFL_norm(self, tol: float = 1e-8, max_iters: int = 5000, seed: int = 0,
                          method: str = "power") -> CflEstimate:
        """Power iteration for ``||C_H C_E||^{1/2}`` in the eps-weighted norm.

        The square root is the quantity the leapfrog step bound is expressed in:
        stability holds for ``tau < 2 theta / value``.  ``method="lanczos"``
        solves the equivalent symmetric generalized eigenproblem with ARPACK,
        which converges much faster on fine meshes where the top of the
        spectrum is clustered.
        """
        if tol <= 0:
            raise ValueError("tol must be positive")
        if method == "lanczos":
            return self._lanczos_norm(tol, max_iters, seed)
        if method != "power":
            raise ValueError(f"unknown method {method!r}")
        rng = np.random.default_rng(seed)
        n = self.space.ndof
        x1, x2 = rng.standard_normal(n), rng.standard_normal(n)
        nrm = math.sqrt(self.eps_inner(x1, x2, x1, x2))
        x1, x2 = x1 / nrm, x2 / nrm
        lam_old = 0.0
        lam = 0.0
        for it in range(1, max_iters + 1):
            y1, y2 = self.wave_operator(x1, x2)
            lam = self.eps_inner(y1, y2, x1, x2)  # Rayleigh quotient, ||x|| = 1
            ny = math.sqrt(self.eps_inner(y1, y2, y1, y2))
            if ny == 0.0:
                return CflEstimate(0.0, True, it)
            x1, x2 = y1 / ny, y2 / ny
            if it > 1 and abs(lam - lam_old) <= tol * abs(lam):
                return CflEstimate(math.sqrt(lam), True, it)
            lam_old = lam
        warnings.warn(f"CFL power iteration did not converge in {max_iters} iterations", RuntimeWarning)
        return CflEstimate(math.sqrt(max(lam, 0.0)), False, max_iters)

    def _lanczos_norm(self, tol: float, max_iters: int, seed: int) -> CflEstimate:
        # M_eps C_H C_E is symmetric, so solve (M_eps A) x = lam M_eps x
        sp = self.space
        n = sp.ndof
        calls = [0]

        def K(x):
            calls[0] += 1
            y1, y2 = self.wave_operator(x[:n], x[n:])
            return np.concatenate([sp.apply_mass(y1, self.eps), sp.apply_mass(y2, self.eps)])

        def M(x):
            return np.concatenate([sp.apply_mass(x[:n], self.eps), sp.apply_mass(x[n:], self.eps)])

        def Minv(x):
            return np.concatenate([sp.apply_mass_inverse(x[:n], self.eps), sp.apply_mass_inverse(x[n:], self.eps)])

        op = lambda f: LinearOperator((2 * n, 2 * n), matvec=f, dtype=float)  # noqa: E731
        v0 = np.random.default_rng(seed).standard_normal(2 * n)
        try:
            lam = eigsh(op(K), k=1, M=op(M), Minv=op(Minv), which="LA", tol=tol, maxiter=max_iters,
                        v0=v0, return_eigenvectors=False)[0]
            converged = True
        except ArpackNoConvergence as exc:
            warnings.warn(f"CFL Lanczos iteration did not converge: {exc}", RuntimeWarning)
            lam = max(exc.eigenvalues, default=0.0)
            converged = False
        return CflEstimate(math.sqrt(max(float(lam), 0.0)), converged, calls[0])
