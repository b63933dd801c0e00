"""Curved surface meshes with high-order nodal geometry.

A :class:`SurfaceMesh` holds one element kind (all triangles or all
quadrilaterals) at a uniform polynomial order ``p``.  Solution fields are
plain arrays sampled at the element nodes:

* scalar field: shape ``(n_elements, n_nodes)``
* vector field: shape ``(n_elements, n_nodes, 3)`` in Cartesian components

Nodes on shared edges are duplicated per element (discontinuous layout).
The geometry is isoparametric: the element map is the degree-``p``
interpolant of the node coordinates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import InvalidInputError, InvalidMeshError
from .reference import QUAD, TRI, RefElement, reference_element

MAX_ORDER = 10


@dataclass(frozen=True)
class Geometry:
    """Geometric factors sampled at a set of reference points per element.

    ``grad_r``/``grad_s`` are the contravariant basis vectors, so the
    tangential gradient of ``f`` is ``f_r * grad_r + f_s * grad_s``.
    """

    points: np.ndarray
    jac: np.ndarray
    normal: np.ndarray
    grad_r: np.ndarray
    grad_s: np.ndarray


@dataclass(frozen=True)
class FaceData:
    """Per element, per local edge, per edge quadrature point."""

    points: np.ndarray      # (ne, nf, nq, 3)
    weights: np.ndarray     # (ne, nf, nq) arc-length weights
    conormal: np.ndarray    # (ne, nf, nq, 3) outward, tangent to the element
    neighbor: np.ndarray    # (ne, nf), -1 on the boundary
    neighbor_face: np.ndarray


def _geometry(x: np.ndarray, dr: np.ndarray, ds: np.ndarray, interp: np.ndarray) -> Geometry:
    xr = np.einsum("qj,ejc->eqc", dr, x)
    xs = np.einsum("qj,ejc->eqc", ds, x)
    g11 = np.einsum("eqc,eqc->eq", xr, xr)
    g12 = np.einsum("eqc,eqc->eq", xr, xs)
    g22 = np.einsum("eqc,eqc->eq", xs, xs)
    det = g11 * g22 - g12 ** 2
    grad_r = (g22[..., None] * xr - g12[..., None] * xs) / det[..., None]
    grad_s = (g11[..., None] * xs - g12[..., None] * xr) / det[..., None]
    cross = np.cross(xr, xs)
    jac = np.linalg.norm(cross, axis=-1)
    return Geometry(
        points=np.einsum("qj,ejc->eqc", interp, x),
        jac=jac, normal=cross / jac[..., None], grad_r=grad_r, grad_s=grad_s,
    )


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


@dataclass(frozen=True, eq=False)
class SurfaceMesh:
    """Oriented 2-manifold made of curved nodal elements.

    Parameters
    ----------
    vertices : (nv, 3) array
    elements : (ne, 3) or (ne, 4) int array
        Vertex indices, counter-clockwise about the outward normal.
    order : int
        Polynomial order ``p`` of both geometry and solution.
    nodes : (ne, Np, 3) array
        Physical coordinates of the element nodes.
    normals : (ne, Np, 3) array
        Unit surface normal ``k`` at every node.
    surface : str
        ``"plane"``, ``"sphere"`` or ``"generic"``; informational.
    radius : float, optional
        Sphere radius when ``surface == "sphere"``.
    """

    vertices: np.ndarray
    elements: np.ndarray
    order: int
    nodes: np.ndarray
    normals: np.ndarray
    surface: str = "generic"
    radius: float | None = None

    def __post_init__(self):
        kind = {3: TRI, 4: QUAD}.get(self.elements.shape[1])
        if kind is None:
            raise InvalidMeshError(f"elements must have 3 or 4 vertices, got {self.elements.shape[1]}")
        if not 1 <= self.order <= MAX_ORDER:
            raise InvalidInputError(f"order must be in [1, {MAX_ORDER}], got {self.order}")
        np_expected = reference_element(kind, self.order).n_nodes
        if self.nodes.shape != (len(self.elements), np_expected, 3):
            raise InvalidMeshError(f"nodes array has shape {self.nodes.shape}, "
                                   f"expected {(len(self.elements), np_expected, 3)}")
        if self.normals.shape != self.nodes.shape:
            raise InvalidMeshError("normals must match nodes in shape")
        for arr in (self.vertices, self.elements, self.nodes, self.normals):
            arr.setflags(write=False)
        _ = self.faces  # connectivity + orientation checks
        jac_sign = np.einsum("eqc,eqc->eq", self.cubature.normal,
                             np.einsum("qj,ejc->eqc", self.ref.cub_interp, self.normals))
        if np.any(jac_sign <= 0):
            bad = int(np.argmin(jac_sign.min(axis=1)))
            raise InvalidMeshError(f"element {bad} has non-positive Jacobian "
                                   "or is oriented against its normals")

    # -- construction ------------------------------------------------------

    @classmethod
    def from_vertices(cls, vertices, elements, order: int, normals=None,
                      surface: str = "generic", radius: float | None = None) -> "SurfaceMesh":
        """Straight-sided mesh; node coordinates from the vertex map."""
        vertices = np.asarray(vertices, dtype=float)
        elements = np.asarray(elements, dtype=np.int64)
        kind = {3: TRI, 4: QUAD}.get(elements.shape[1])
        if kind is None:
            raise InvalidMeshError(f"elements must have 3 or 4 vertices, got {elements.shape[1]}")
        ref = reference_element(kind, order)
        shape = ref.vertex_shape(ref.nodes)
        nodes = np.einsum("jv,evc->ejc", shape, vertices[elements])
        if normals is None:
            normals = discrete_normals(nodes, ref)
        return cls(vertices, elements, order, nodes, np.asarray(normals, float), surface, radius)

    def with_order(self, order: int) -> "SurfaceMesh":
        """Same geometry resampled at a different polynomial order."""
        if order == self.order:
            return self
        ref_new = reference_element(self.kind, order)
        interp = self.ref.interp(ref_new.nodes)
        nodes = np.einsum("qj,ejc->eqc", interp, self.nodes)
        if self.surface == "sphere" and self.radius:
            nodes = self.radius * _unit(nodes)
            normals = _unit(nodes)
        elif self.surface == "plane":
            normals = np.broadcast_to(self.normals[:, :1], nodes.shape).copy()
        else:
            normals = _unit(np.einsum("qj,ejc->eqc", interp, self.normals))
        return SurfaceMesh(self.vertices.copy(), self.elements.copy(), order, nodes,
                           normals, self.surface, self.radius)

    # -- basic properties --------------------------------------------------

    @property
    def kind(self) -> str:
        return TRI if self.elements.shape[1] == 3 else QUAD

    @cached_property
    def ref(self) -> RefElement:
        return reference_element(self.kind, self.order)

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def n_nodes(self) -> int:
        return self.ref.n_nodes

    @property
    def shape(self) -> tuple[int, int]:
        """Shape of a scalar field on this mesh."""
        return (self.n_elements, self.n_nodes)

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        """Chord length of every element edge, shape (ne, nfaces)."""
        v = self.vertices[self.elements]
        return np.linalg.norm(np.roll(v, -1, axis=1) - v, axis=-1)

    @property
    def h(self) -> float:
        """Maximum edge length."""
        return float(self.edge_lengths.max())

    @cached_property
    def element_h(self) -> np.ndarray:
        return self.edge_lengths.max(axis=1)

    # -- geometry ----------------------------------------------------------

    @cached_property
    def node_geometry(self) -> Geometry:
        ref = self.ref
        return _geometry(self.nodes, ref.dr, ref.ds, np.eye(ref.n_nodes))

    @cached_property
    def cubature(self) -> Geometry:
        ref = self.ref
        return _geometry(self.nodes, ref.cub_dr, ref.cub_ds, ref.cub_interp)

    @property
    def quad_points(self) -> np.ndarray:
        return self.cubature.points

    @cached_property
    def quad_weights(self) -> np.ndarray:
        """Cubature weights in area units, shape (ne, Nq)."""
        return self.ref.cub_weights[None, :] * self.cubature.jac

    @property
    def area(self) -> float:
        return float(self.quad_weights.sum())

    @cached_property
    def mass_blocks(self) -> np.ndarray:
        iq = self.ref.cub_interp
        return np.einsum("qi,eq,qj->eij", iq, self.quad_weights, iq)

    @cached_property
    def faces(self) -> FaceData:
        ref = self.ref
        nfaces = ref.n_faces
        ne = self.n_elements
        neighbor = -np.ones((ne, nfaces), dtype=np.int64)
        neighbor_face = -np.ones((ne, nfaces), dtype=np.int64)
        seen: dict[tuple[int, int], tuple[int, int, int, int]] = {}
        for e, verts in enumerate(self.elements.tolist()):
            for f in range(nfaces):
                a, b = verts[f], verts[(f + 1) % nfaces]
                if a == b:
                    raise InvalidMeshError(f"element {e} has a degenerate edge")
                key = (a, b) if a < b else (b, a)
                prev = seen.get(key)
                if prev is None:
                    seen[key] = (e, f, a, b)
                    continue
                pe, pf, pa, pb = prev
                if pe == -1:
                    raise InvalidMeshError(f"edge {key} is shared by more than two elements")
                if (pa, pb) == (a, b):
                    raise InvalidMeshError(
                        f"elements {pe} and {e} have inconsistent orientation across edge {key}")
                neighbor[e, f], neighbor_face[e, f] = pe, pf
                neighbor[pe, pf], neighbor_face[pe, pf] = e, f
                seen[key] = (-1, -1, a, b)

        x = self.nodes
        xr = np.einsum("fqj,ejc->efqc", ref.face_dr, x)
        xs = np.einsum("fqj,ejc->efqc", ref.face_ds, x)
        tangent = (xr * ref.face_dir[None, :, None, 0, None]
                   + xs * ref.face_dir[None, :, None, 1, None])
        speed = np.linalg.norm(tangent, axis=-1)
        nu = _unit(np.cross(xr, xs))
        conormal = _unit(np.cross(tangent, nu))
        return FaceData(
            points=np.einsum("fqj,ejc->efqc", ref.face_interp, x),
            weights=ref.face_weights[None, None, :] * speed,
            conormal=conormal, neighbor=neighbor, neighbor_face=neighbor_face,
        )

    @cached_property
    def point_ids(self) -> np.ndarray:
        """Global id per node; coincident nodes share an id. Shape (ne, Np)."""
        from scipy.spatial import cKDTree

        pts = self.nodes.reshape(-1, 3)
        tol = 1e-8 * max(1.0, float(np.abs(pts).max()))
        pairs = cKDTree(pts).query_pairs(tol, output_type="ndarray")
        from scipy.sparse import coo_matrix
        from scipy.sparse.csgraph import connected_components

        n = len(pts)
        graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
        _, labels = connected_components(graph, directed=False)
        return labels.reshape(self.shape)

    def check_field(self, field: np.ndarray, vector: bool = False) -> np.ndarray:
        field = np.asarray(field, dtype=float)
        expected = self.shape + ((3,) if vector else ())
        if field.shape != expected:
            raise InvalidInputError(f"field shape {field.shape} does not match mesh layout {expected}")
        return field


def discrete_normals(nodes: np.ndarray, ref: RefElement) -> np.ndarray:
    xr = np.einsum("qj,ejc->eqc", ref.dr, nodes)
    xs = np.einsum("qj,ejc->eqc", ref.ds, nodes)
    return _unit(np.cross(xr, xs))


# -- field operations ------------------------------------------------------

def differentiate(field: np.ndarray, mesh: SurfaceMesh) -> np.ndarray:
    """Tangential gradient of a nodal field, elementwise.

    A scalar field of shape (ne, Np) returns (ne, Np, 3).  A vector field of
    shape (ne, Np, 3) returns its Jacobian (ne, Np, 3, 3) with
    ``J[..., c, d] = d f_c / d x_d``.  The component along the stored
    normal is removed.
    """
    field = np.asarray(field, dtype=float)
    ref = mesh.ref
    geo = mesh.node_geometry
    k = mesh.normals
    if field.ndim == 2:
        fr = np.einsum("ij,ej->ei", ref.dr, field)
        fs = np.einsum("ij,ej->ei", ref.ds, field)
        grad = fr[..., None] * geo.grad_r + fs[..., None] * geo.grad_s
        return grad - np.einsum("eic,eic->ei", grad, k)[..., None] * k
    if field.ndim == 3:
        fr = np.einsum("ij,ejc->eic", ref.dr, field)
        fs = np.einsum("ij,ejc->eic", ref.ds, field)
        jac = fr[..., :, None] * geo.grad_r[..., None, :] + fs[..., :, None] * geo.grad_s[..., None, :]
        kn = np.einsum("eicd,eid->eic", jac, k)
        return jac - kn[..., None] * k[..., None, :]
    raise InvalidInputError(f"cannot differentiate field of shape {field.shape}")


def to_quadrature(field: np.ndarray, mesh: SurfaceMesh) -> np.ndarray:
    """Interpolate a nodal scalar or vector field to the cubature points."""
    field = np.asarray(field, dtype=float)
    if field.ndim == 2:
        return np.einsum("qj,ej->eq", mesh.ref.cub_interp, field)
    return np.einsum("qj,ej...->eq...", mesh.ref.cub_interp, field)


def integrate(field: np.ndarray, mesh: SurfaceMesh) -> float:
    return float(np.sum(mesh.quad_weights * to_quadrature(field, mesh)))


def evaluate(fn, mesh: SurfaceMesh) -> np.ndarray:
    """Sample ``fn(points)`` at the nodes; ``points`` has shape (..., 3)."""
    return np.asarray(fn(mesh.nodes), dtype=float)


# -- builders --------------------------------------------------------------

def _validate_order(p: int):
    if not isinstance(p, (int, np.integer)) or not 1 <= p <= MAX_ORDER:
        raise InvalidInputError(f"order p must be an integer in [1, {MAX_ORDER}], got {p!r}")


def build_plane_mesh(extent, h: float, p: int, kind: str = QUAD) -> SurfaceMesh:
    """Structured mesh of the rectangle ``extent = (x0, x1, y0, y1)`` at z=0.

    The grid is the coarsest one whose longest element edge (including
    triangle diagonals) does not exceed ``h``.
    """
    x0, x1, y0, y1 = map(float, extent)
    lx, ly = x1 - x0, y1 - y0
    if not (lx > 0 and ly > 0 and np.isfinite(lx) and np.isfinite(ly)):
        raise InvalidInputError(f"degenerate extent {extent}")
    if not h > 0:
        raise InvalidInputError(f"h must be positive, got {h}")
    _validate_order(p)
    if kind not in (TRI, QUAD):
        raise InvalidInputError(f"unknown element kind {kind!r}")
    nx = max(1, math.ceil(lx / h - 1e-9))
    ny = max(1, math.ceil(ly / h - 1e-9))
    if kind == TRI:
        while math.hypot(lx / nx, ly / ny) > h * (1 + 1e-12):
            if lx / nx >= ly / ny:
                nx += 1
            else:
                ny += 1
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    vertices = np.stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)], axis=1)

    def vid(i, j):
        return i * (ny + 1) + j

    elements = []
    for i in range(nx):
        for j in range(ny):
            quad = [vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)]
            if kind == QUAD:
                elements.append(quad)
            else:
                elements.append([quad[0], quad[1], quad[2]])
                elements.append([quad[0], quad[2], quad[3]])
    elements = np.array(elements, dtype=np.int64)
    ref = reference_element(kind, p)
    normals = np.zeros((len(elements), ref.n_nodes, 3))
    normals[..., 2] = 1.0
    return SurfaceMesh.from_vertices(vertices, elements, p, normals=normals, surface="plane")


# Cube faces: centre, u-axis, v-axis with u x v = centre (outward).
_CUBE_FACES = [
    ((1, 0, 0), (0, 1, 0), (0, 0, 1)),
    ((-1, 0, 0), (0, 0, 1), (0, 1, 0)),
    ((0, 1, 0), (0, 0, 1), (1, 0, 0)),
    ((0, -1, 0), (1, 0, 0), (0, 0, 1)),
    ((0, 0, 1), (1, 0, 0), (0, 1, 0)),
    ((0, 0, -1), (0, 1, 0), (1, 0, 0)),
]


def _equiangular(xi: np.ndarray) -> np.ndarray:
    t = np.tan(np.asarray(xi) * np.pi / 4)
    return np.where(np.abs(xi) == 1.0, xi, t)


def _cubed_sphere(n: int, kind: str):
    """Vertices (as integer cube-lattice keys) and elements in face params."""
    keys: dict[tuple[int, int, int], int] = {}
    lattice = []
    elements = []
    params = []   # per element: (face, list of (xi, eta) vertex params)
    for face, (c, a, b) in enumerate(_CUBE_FACES):
        c, a, b = np.array(c), np.array(a), np.array(b)

        def key(i, j):
            k = tuple(int(v) for v in c * n + (2 * i - n) * a + (2 * j - n) * b)
            if k not in keys:
                keys[k] = len(lattice)
                lattice.append(k)
            return keys[k]

        for i in range(n):
            for j in range(n):
                ij = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)]
                vid = [key(*q) for q in ij]
                par = [((2 * q[0] - n) / n, (2 * q[1] - n) / n) for q in ij]
                if kind == QUAD:
                    elements.append(vid)
                    params.append((face, par))
                else:
                    elements.append([vid[0], vid[1], vid[2]])
                    params.append((face, [par[0], par[1], par[2]]))
                    elements.append([vid[0], vid[2], vid[3]])
                    params.append((face, [par[0], par[2], par[3]]))
    lattice = np.array(lattice, dtype=float) / n
    return lattice, np.array(elements, dtype=np.int64), params


def _lattice_to_sphere(lattice: np.ndarray, radius: float) -> np.ndarray:
    cube = _equiangular(lattice)
    return radius * _unit(cube)


def build_sphere_mesh(R: float, h: float, p: int, kind: str = TRI) -> SurfaceMesh:
    """Equiangular cubed-sphere mesh of radius ``R`` with exact curved nodes.

    The subdivision is the coarsest whose longest vertex-to-vertex chord is
    at most ``h``.  Triangles are obtained by splitting each cell along a
    diagonal.
    """
    if not R > 0:
        raise InvalidInputError(f"radius must be positive, got {R}")
    if not h > 0:
        raise InvalidInputError(f"h must be positive, got {h}")
    if h >= R:
        raise InvalidInputError(f"h={h} must be smaller than the radius R={R}")
    _validate_order(p)
    if kind not in (TRI, QUAD):
        raise InvalidInputError(f"unknown element kind {kind!r}")

    n = max(1, int(np.floor(np.pi / 2 * R / h)) - 1)
    while True:
        lattice, elements, params = _cubed_sphere(n, kind)
        verts = _lattice_to_sphere(lattice, R)
        v = verts[elements]
        hmax = np.linalg.norm(np.roll(v, -1, axis=1) - v, axis=-1).max()
        if hmax <= h:
            break
        n += 1

    ref = reference_element(kind, p)
    shape = ref.vertex_shape(ref.nodes)
    nodes = np.empty((len(elements), ref.n_nodes, 3))
    for e, (face, par) in enumerate(params):
        c, a, b = (np.array(x, dtype=float) for x in _CUBE_FACES[face])
        xe = shape @ np.array(par)
        cube = c[None, :] + _equiangular(xe[:, 0])[:, None] * a + _equiangular(xe[:, 1])[:, None] * b
        nodes[e] = R * _unit(cube)
    normals = nodes / R
    return SurfaceMesh(verts, elements, p, nodes, normals, surface="sphere", radius=float(R))
