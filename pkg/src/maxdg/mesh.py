"""Interface-aligned quadrilateral meshes of Q = (-1, 1) x (0, 1).

The interface is the segment {0} x (0, 1).  Elements carry a subdomain tag
(``MINUS`` for x1 < 0, ``PLUS`` for x1 > 0) and every face stores an oriented
unit normal.  Interior normals point from the ``left`` to the ``right``
element, boundary normals point outward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

__all__ = [
    "AlignmentError",
    "Face",
    "FaceKind",
    "Mesh2D",
    "MINUS",
    "PLUS",
    "build_cartesian_mesh",
    "mesh_from_quads",
    "mesh_size",
    "validate_interface_alignment",
]

MINUS = -1
PLUS = 1

DOMAIN = ((-1.0, 1.0), (0.0, 1.0))
_GEOM_TOL = 1e-12


class AlignmentError(ValueError):
    """Raised when a mesh violates the interface-alignment assumption."""


class FaceKind(str, Enum):
    INTERIOR = "interior"
    BOUNDARY = "boundary"
    INTERFACE = "interface"


@dataclass(frozen=True)
class Face:
    kind: FaceKind
    normal: tuple[float, float]
    left: int
    right: int | None
    endpoints: tuple[tuple[float, float], tuple[float, float]]
    # local edge index of this face in the left/right element (0: x-, 1: x+, 2: y-, 3: y+
    # for axis-aligned quads; quad edge number otherwise)
    left_local: int = -1
    right_local: int = -1

    @property
    def is_interior(self) -> bool:
        return self.right is not None

    @property
    def measure(self) -> float:
        (ax, ay), (bx, by) = self.endpoints
        return math.hypot(bx - ax, by - ay)

    @property
    def midpoint(self) -> tuple[float, float]:
        (ax, ay), (bx, by) = self.endpoints
        return (0.5 * (ax + bx), 0.5 * (ay + by))


@dataclass(frozen=True, eq=False)
class Mesh2D:
    vertices: np.ndarray  # (nv, 2)
    elements: np.ndarray  # (ne, 4) counter-clockwise vertex indices
    subdomain: np.ndarray  # (ne,) MINUS / PLUS
    faces: tuple[Face, ...]
    element_faces: tuple[tuple[int, ...], ...]
    h_max: float
    h_min: float
    sigma: float
    # tensor grid lines for fast point location; None for hand-built meshes
    grid_x: np.ndarray | None = field(default=None, repr=False)
    grid_y: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    def element_corners(self, e: int) -> np.ndarray:
        return self.vertices[self.elements[e]]

    def diameters(self) -> np.ndarray:
        return np.array([_diameter(self.element_corners(e)) for e in range(self.n_elements)])

    def boxes(self) -> np.ndarray:
        """Axis-aligned bounding boxes ``(ne, 4)`` as ``x0, x1, y0, y1``."""
        c = self.vertices[self.elements]
        return np.stack(
            [c[..., 0].min(1), c[..., 0].max(1), c[..., 1].min(1), c[..., 1].max(1)], axis=1
        )

    def faces_of_kind(self, *kinds: FaceKind) -> list[int]:
        return [i for i, f in enumerate(self.faces) if f.kind in kinds]

    def locate(self, points: np.ndarray) -> np.ndarray:
        """Element index containing each point; raises if a point lies outside the mesh."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.grid_x is not None and self.grid_y is not None:
            nx = len(self.grid_x) - 1
            ny = len(self.grid_y) - 1
            ix = np.searchsorted(self.grid_x, pts[:, 0], side="right") - 1
            iy = np.searchsorted(self.grid_y, pts[:, 1], side="right") - 1
            # points on the far boundary belong to the last cell
            ix = np.where(np.isclose(pts[:, 0], self.grid_x[-1], atol=_GEOM_TOL), nx - 1, ix)
            iy = np.where(np.isclose(pts[:, 1], self.grid_y[-1], atol=_GEOM_TOL), ny - 1, iy)
            bad = (ix < 0) | (ix >= nx) | (iy < 0) | (iy >= ny)
            if bad.any():
                raise ValueError(f"point location failed for {pts[bad][0]}")
            return ix * ny + iy
        boxes = self.boxes()
        out = np.full(len(pts), -1, dtype=int)
        for start in range(0, len(pts), 4096):
            chunk = pts[start:start + 4096]
            inside = (
                (chunk[:, None, 0] >= boxes[None, :, 0] - _GEOM_TOL)
                & (chunk[:, None, 0] <= boxes[None, :, 1] + _GEOM_TOL)
                & (chunk[:, None, 1] >= boxes[None, :, 2] - _GEOM_TOL)
                & (chunk[:, None, 1] <= boxes[None, :, 3] + _GEOM_TOL)
            )
            found = inside.any(axis=1)
            out[start:start + len(chunk)] = np.where(found, inside.argmax(axis=1), -1)
        if (out < 0).any():
            raise ValueError(f"point location failed for {pts[out < 0][0]}")
        return out


def _diameter(corners: np.ndarray) -> float:
    d = corners[:, None, :] - corners[None, :, :]
    return float(np.sqrt((d**2).sum(-1)).max())


def _inscribed_diameter(corners: np.ndarray) -> float:
    # twice the smallest distance from the centroid to an edge line; exact for rectangles
    c = corners.mean(axis=0)
    dists = []
    for i in range(4):
        a, b = corners[i], corners[(i + 1) % 4]
        t = b - a
        n = np.array([t[1], -t[0]]) / np.hypot(*t)
        dists.append(abs(np.dot(c - a, n)))
    return 2.0 * min(dists)


def _canonical_normal(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    t = b - a
    n = np.array([t[1], -t[0]]) / np.hypot(*t)
    if n[0] < -_GEOM_TOL or (abs(n[0]) <= _GEOM_TOL and n[1] < 0):
        n = -n
    n[np.abs(n) < 1e-15] = 0.0
    return n


def _on_interface(a: np.ndarray, b: np.ndarray) -> bool:
    return abs(a[0]) <= _GEOM_TOL and abs(b[0]) <= _GEOM_TOL


def _axis_local_index(corners: np.ndarray, a: np.ndarray, b: np.ndarray) -> int:
    """0: x-, 1: x+, 2: y-, 3: y+ for axis-aligned quads; -1 otherwise."""
    x0, x1 = corners[:, 0].min(), corners[:, 0].max()
    y0, y1 = corners[:, 1].min(), corners[:, 1].max()
    if abs(a[0] - b[0]) <= _GEOM_TOL:
        if abs(a[0] - x0) <= _GEOM_TOL:
            return 0
        if abs(a[0] - x1) <= _GEOM_TOL:
            return 1
    if abs(a[1] - b[1]) <= _GEOM_TOL:
        if abs(a[1] - y0) <= _GEOM_TOL:
            return 2
        if abs(a[1] - y1) <= _GEOM_TOL:
            return 3
    return -1


def mesh_from_quads(vertices, elements, *, grid_x=None, grid_y=None) -> Mesh2D:
    """Build topology (faces, normals, subdomain tags) from raw quads.

    No alignment check happens here; call :func:`validate_interface_alignment`.
    Elements straddling x1 = 0 get the tag of their centroid.
    """
    vertices = np.asarray(vertices, dtype=float)
    elements = np.asarray(elements, dtype=int)
    if elements.ndim != 2 or elements.shape[1] != 4 or len(elements) == 0:
        raise ValueError("elements must be a non-empty (ne, 4) array")

    centroids = vertices[elements].mean(axis=1)
    subdomain = np.where(centroids[:, 0] < 0.0, MINUS, PLUS)

    edge_owner: dict[tuple[int, int], list[tuple[int, int]]] = {}
    for e, quad in enumerate(elements):
        for i in range(4):
            a, b = int(quad[i]), int(quad[(i + 1) % 4])
            edge_owner.setdefault((min(a, b), max(a, b)), []).append((e, i))

    faces: list[Face] = []
    element_faces: list[list[int]] = [[] for _ in range(len(elements))]
    for (a, b), owners in edge_owner.items():
        pa, pb = vertices[a], vertices[b]
        if pa[0] > pb[0] + _GEOM_TOL or (abs(pa[0] - pb[0]) <= _GEOM_TOL and pa[1] > pb[1]):
            pa, pb = pb, pa
        mid = 0.5 * (pa + pb)
        if len(owners) == 1:
            e, _ = owners[0]
            t = pb - pa
            n = np.array([t[1], -t[0]]) / np.hypot(*t)
            if np.dot(mid - centroids[e], n) < 0:
                n = -n
            n[np.abs(n) < 1e-15] = 0.0
            corners = vertices[elements[e]]
            faces.append(Face(
                kind=FaceKind.BOUNDARY, normal=(float(n[0]), float(n[1])), left=e, right=None,
                endpoints=(tuple(pa), tuple(pb)), left_local=_axis_local_index(corners, pa, pb),
            ))
        elif len(owners) == 2:
            n = _canonical_normal(pa, pb)
            (e0, _), (e1, _) = owners
            if np.dot(mid - centroids[e0], n) > 0:
                left, right = e0, e1
            else:
                left, right = e1, e0
            kind = FaceKind.INTERFACE if _on_interface(pa, pb) else FaceKind.INTERIOR
            faces.append(Face(
                kind=kind, normal=(float(n[0]), float(n[1])), left=left, right=right,
                endpoints=(tuple(pa), tuple(pb)),
                left_local=_axis_local_index(vertices[elements[left]], pa, pb),
                right_local=_axis_local_index(vertices[elements[right]], pa, pb),
            ))
        else:
            raise ValueError(f"edge {(a, b)} shared by {len(owners)} elements (non-manifold mesh)")
        for e, _ in owners:
            element_faces[e].append(len(faces) - 1)

    diam = np.array([_diameter(vertices[q]) for q in elements])
    rho = np.array([_inscribed_diameter(vertices[q]) for q in elements])
    return Mesh2D(
        vertices=vertices,
        elements=elements,
        subdomain=subdomain,
        faces=tuple(faces),
        element_faces=tuple(tuple(f) for f in element_faces),
        h_max=float(diam.max()),
        h_min=float(diam.min()),
        sigma=float((diam / rho).max()),
        grid_x=None if grid_x is None else np.asarray(grid_x, dtype=float),
        grid_y=None if grid_y is None else np.asarray(grid_y, dtype=float),
    )


def build_cartesian_mesh(n_half: int, n_y: int) -> Mesh2D:
    """Uniform tensor mesh with ``n_half`` cells per subdomain in x1 and ``n_y`` in x2.

    Element ``e = ix * n_y + iy``; the interface x1 = 0 is a grid line.
    """
    if int(n_half) < 1 or int(n_y) < 1:
        raise ValueError("n_half and n_y must be positive")
    n_half, n_y = int(n_half), int(n_y)
    xs = np.concatenate([np.linspace(-1.0, 0.0, n_half + 1), np.linspace(0.0, 1.0, n_half + 1)[1:]])
    ys = np.linspace(0.0, 1.0, n_y + 1)
    nx = 2 * n_half
    vid = lambda i, j: i * (n_y + 1) + j  # noqa: E731
    vertices = np.array([(x, y) for x in xs for y in ys])
    elements = np.array([
        (vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1))
        for i in range(nx) for j in range(n_y)
    ])
    return mesh_from_quads(vertices, elements, grid_x=xs, grid_y=ys)


def validate_interface_alignment(mesh: Mesh2D) -> None:
    """Raise :class:`AlignmentError` unless no element crosses x1 = 0 and every
    face on {x1 = 0} is an interface face with normal (1, 0)."""
    for e in range(mesh.n_elements):
        x = mesh.element_corners(e)[:, 0]
        if x.min() < -_GEOM_TOL and x.max() > _GEOM_TOL:
            raise AlignmentError(
                f"element {e} spans x1 in ({x.min():g}, {x.max():g}) across the interface"
            )
    for i, f in enumerate(mesh.faces):
        a, b = (np.asarray(p) for p in f.endpoints)
        if not _on_interface(a, b):
            if f.kind is FaceKind.INTERFACE:
                raise AlignmentError(f"face {i} is tagged interface but does not lie on x1 = 0")
            continue
        if f.kind is not FaceKind.INTERFACE or f.right is None:
            raise AlignmentError(f"face {i} lies on x1 = 0 but is not an interior interface face")
        if abs(f.normal[0] - 1.0) > 1e-14 or abs(f.normal[1]) > 1e-14:
            raise AlignmentError(f"interface face {i} has normal {f.normal}, expected (1, 0)")
        if mesh.subdomain[f.left] != MINUS or mesh.subdomain[f.right] != PLUS:
            raise AlignmentError(f"interface face {i} is not oriented from minus to plus")


def mesh_size(mesh: Mesh2D) -> tuple[float, float]:
    return mesh.h_max, mesh.h_min


def cells_for_h(h: float) -> int:
    """Square-cell count per unit length whose diagonal is closest to ``h``."""
    return max(1, int(round(math.sqrt(2.0) / h)))
