"""Connection forms and curvature of orthonormal frame fields.

For frames ``e1, e2, e3`` the connection components are

    w_ijk = e_i . ((e_k . grad) e_j)

computed from the elementwise Jacobian of the nodal frame vectors.  Only
``w211, w212, w311, w312, w321, w322`` are stored; the rest follow from
antisymmetry ``w_ijk = -w_jik``.  From them:

* Gaussian curvature ``K = w311 w322 - w312 w321``
* mean curvature ``H = (w311 + w322) / 2`` (sign set by the normal ``e3``)
* curvature of the orthonormal basis ``R = grad(w211).e2 - grad(w212).e1``
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import InvalidInputError
from .frames import ALIGNED, FrameField
from .mesh import SurfaceMesh, differentiate

COMPONENTS = ("w211", "w212", "w311", "w312", "w321", "w322")


@dataclass(frozen=True)
class ConnectionField:
    w211: np.ndarray
    w212: np.ndarray
    w311: np.ndarray
    w312: np.ndarray
    w321: np.ndarray
    w322: np.ndarray

    def as_dict(self) -> dict:
        return {c: getattr(self, c) for c in COMPONENTS}

    def component(self, i: int, j: int, k: int) -> np.ndarray:
        """Any ``w_ijk`` with indices in 1..3, via antisymmetry."""
        if i == j:
            return np.zeros_like(self.w211)
        sign = 1.0
        if i < j:
            i, j, sign = j, i, -1.0
        return sign * getattr(self, f"w{i}{j}{k}")


@dataclass(frozen=True)
class CurvatureField:
    R2121: np.ndarray
    R2121_approx: np.ndarray   # -grad(w212).e1, dropping the w211 term
    K: np.ndarray
    H: np.ndarray


def element_mask(frames: FrameField) -> np.ndarray:
    """Elements whose nodes are all flagged aligned."""
    return np.all(frames.flag == ALIGNED, axis=1)


def _masked(values: np.ndarray, keep_elements: np.ndarray) -> np.ndarray:
    out = np.array(values, dtype=float, copy=True)
    out[~keep_elements] = np.nan
    return out


def connection_component(frames: FrameField, mesh: SurfaceMesh, i: int, j: int, k: int) -> np.ndarray:
    """Directly evaluated ``w_ijk = e_i . (J(e_j) e_k)``; no antisymmetry used."""
    vec = {1: frames.e1, 2: frames.e2, 3: frames.e3}
    jac = differentiate(vec[j], mesh)
    return np.einsum("eic,eicd,eid->ei", vec[i], jac, vec[k])


def connection_form(frames: FrameField, mesh: SurfaceMesh, mask: str = "aligned") -> ConnectionField:
    """Connection components at every node.

    mask : ``"aligned"`` writes NaN on every element that has a node not
        flagged aligned; ``"none"`` keeps all values.
    """
    if mask not in ("aligned", "none"):
        raise InvalidInputError(f"unknown mask mode {mask!r}")
    j1 = differentiate(frames.e1, mesh)
    j2 = differentiate(frames.e2, mesh)
    d1 = {1: np.einsum("eicd,eid->eic", j1, frames.e1), 2: np.einsum("eicd,eid->eic", j1, frames.e2)}
    d2 = {1: np.einsum("eicd,eid->eic", j2, frames.e1), 2: np.einsum("eicd,eid->eic", j2, frames.e2)}

    def dot(a, b):
        return np.einsum("eic,eic->ei", a, b)

    vals = {
        "w211": dot(frames.e2, d1[1]), "w212": dot(frames.e2, d1[2]),
        "w311": dot(frames.e3, d1[1]), "w312": dot(frames.e3, d1[2]),
        "w321": dot(frames.e3, d2[1]), "w322": dot(frames.e3, d2[2]),
    }
    if mask == "aligned":
        keep = element_mask(frames)
        vals = {key: _masked(v, keep) for key, v in vals.items()}
    return ConnectionField(**vals)


def gauss_mean(conn: ConnectionField):
    """Gaussian and mean curvature from the normal components."""
    K = conn.w311 * conn.w322 - conn.w312 * conn.w321
    H = 0.5 * (conn.w311 + conn.w322)
    return K, H


def riemann_2121(conn: ConnectionField, frames: FrameField, mesh: SurfaceMesh):
    """``(R, R_approx)`` with ``R = grad(w211).e2 - grad(w212).e1``.

    The connection values are treated as nodal polynomials per element and
    differentiated again; NaN elements stay NaN.
    """
    g211 = differentiate(conn.w211, mesh)
    g212 = differentiate(conn.w212, mesh)
    approx = -np.einsum("eic,eic->ei", g212, frames.e1)
    full = np.einsum("eic,eic->ei", g211, frames.e2) + approx
    return full, approx


def curvature(frames: FrameField, mesh: SurfaceMesh, mask: str = "aligned",
              conn: ConnectionField | None = None) -> tuple[ConnectionField, CurvatureField]:
    conn = conn if conn is not None else connection_form(frames, mesh, mask)
    K, H = gauss_mean(conn)
    R, Ra = riemann_2121(conn, frames, mesh)
    return conn, CurvatureField(R2121=R, R2121_approx=Ra, K=K, H=H)


def gaussian_torsion(conn: ConnectionField) -> np.ndarray:
    """Wedge term ``sum_k w^2_k ^ w^k_1`` on ``(e1, e2)`` for k in {1, 2}.

    Evaluates ``a(e1) b(e2) - a(e2) b(e1)`` for each pair explicitly.  The
    diagonal forms vanish, so the result is zero by construction.
    """
    total = np.zeros_like(conn.w211)
    for k in (1, 2):
        a1, a2 = conn.component(2, k, 1), conn.component(2, k, 2)
        b1, b2 = conn.component(k, 1, 1), conn.component(k, 1, 2)
        total = total + (a1 * b2 - a2 * b1)
    return total


def interface_jump(field: np.ndarray, mesh: SurfaceMesh) -> np.ndarray:
    """Largest jump of a nodal scalar across each element's edges."""
    fi = mesh.ref.face_interp
    tr = np.einsum("fqj,ej->efq", fi, field)
    nbr, nbf = mesh.faces.neighbor, mesh.faces.neighbor_face
    jump = np.zeros(mesh.n_elements)
    for f in range(mesh.ref.n_faces):
        es = np.nonzero(nbr[:, f] >= 0)[0]
        other = tr[nbr[es, f], nbf[es, f]][:, ::-1]
        jump[es] = np.maximum(jump[es], np.abs(tr[es, f] - other).max(axis=1))
    return jump


@dataclass(frozen=True)
class ThresholdRegions:
    mask: np.ndarray      # (ne, Np) bool
    labels: np.ndarray    # (ne, Np) int, -1 outside the mask
    n_regions: int


def curvature_threshold(field: np.ndarray, tau: float, mesh: SurfaceMesh | None = None) -> ThresholdRegions:
    """Nodes where ``field > tau`` (NaN counts as below), grouped into regions.

    Two masked nodes are connected when they share an element or coincide
    geometrically.  Without a mesh every masked node is its own region
    per element.
    """
    if not tau > 0:
        raise InvalidInputError(f"threshold must be positive, got {tau}")
    field = np.asarray(field, dtype=float)
    with np.errstate(invalid="ignore"):
        mask = np.nan_to_num(field, nan=-np.inf) > tau
    ne, npe = field.shape
    idx = np.arange(ne * npe).reshape(ne, npe)
    rows, cols = [], []
    # chain masked nodes inside each element
    for e in np.nonzero(mask.any(axis=1))[0]:
        nodes = idx[e][mask[e]]
        rows.append(nodes[:-1])
        cols.append(nodes[1:])
    if mesh is not None:
        pid = mesh.point_ids.ravel()
        flat = mask.ravel()
        sel = np.nonzero(flat)[0]
        order = sel[np.argsort(pid[sel], kind="stable")]
        same = pid[order[1:]] == pid[order[:-1]]
        rows.append(order[:-1][same])
        cols.append(order[1:][same])
    n = ne * npe
    if rows:
        r = np.concatenate(rows)
        c = np.concatenate(cols)
    else:
        r = c = np.zeros(0, dtype=int)
    graph = coo_matrix((np.ones(len(r)), (r, c)), shape=(n, n))
    _, comp = connected_components(graph, directed=False)
    labels = np.full(n, -1)
    flat = mask.ravel()
    if flat.any():
        _, labels[flat] = np.unique(comp[flat], return_inverse=True)
    n_regions = int(labels.max() + 1) if flat.any() else 0
    return ThresholdRegions(mask, labels.reshape(ne, npe), n_regions)
