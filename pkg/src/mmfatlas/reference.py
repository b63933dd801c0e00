"""Nodal reference elements for triangles and quadrilaterals.

Quadrilaterals use tensor-product Gauss-Lobatto-Legendre nodes and an
orthonormal Legendre basis.  Triangles use the warp-and-blend node set with
the orthonormal Dubiner basis (Hesthaven & Warburton, *Nodal DG Methods*,
ch. 6).  Volume cubature is exact for polynomials of degree ``2p + 1``;
edge quadrature is ``p + 1`` point Gauss-Legendre.

Reference domains
-----------------
tri  : vertices (-1,-1), (1,-1), (-1,1)
quad : vertices (-1,-1), (1,-1), (1,1), (-1,1)

Edges run from vertex ``i`` to vertex ``i + 1`` (cyclic), so an element
whose vertices are counter-clockwise about its normal has its edges
traversed counter-clockwise too.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import gamma, roots_jacobi, roots_legendre

TRI = "tri"
QUAD = "quad"

# Optimised blending parameters for warp-and-blend nodes, orders 1..15.
_ALPHA_OPT = np.array([
    0.0000, 0.0000, 1.4152, 0.1001, 0.2751, 0.9800, 1.0999, 1.2832,
    1.3648, 1.4773, 1.4959, 1.5743, 1.5770, 1.6223, 1.6258,
])


def jacobi_p(x, alpha: float, beta: float, n: int) -> np.ndarray:
    """Orthonormal Jacobi polynomial ``P_n^(alpha, beta)`` evaluated at ``x``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    pl = np.zeros((n + 1, x.size))
    gamma0 = (2.0 ** (alpha + beta + 1) / (alpha + beta + 1)
              * gamma(alpha + 1) * gamma(beta + 1) / gamma(alpha + beta + 1))
    pl[0] = 1.0 / np.sqrt(gamma0)
    if n == 0:
        return pl[0]
    gamma1 = (alpha + 1) * (beta + 1) / (alpha + beta + 3) * gamma0
    pl[1] = ((alpha + beta + 2) * x / 2 + (alpha - beta) / 2) / np.sqrt(gamma1)
    if n == 1:
        return pl[1]
    aold = 2.0 / (2 + alpha + beta) * np.sqrt(
        (alpha + 1) * (beta + 1) / (alpha + beta + 3))
    for i in range(1, n):
        h1 = 2 * i + alpha + beta
        anew = 2.0 / (h1 + 2) * np.sqrt(
            (i + 1) * (i + 1 + alpha + beta) * (i + 1 + alpha) * (i + 1 + beta)
            / (h1 + 1) / (h1 + 3))
        bnew = -(alpha ** 2 - beta ** 2) / h1 / (h1 + 2)
        pl[i + 1] = (-aold * pl[i - 1] + (x - bnew) * pl[i]) / anew
        aold = anew
    return pl[n]


def grad_jacobi_p(x, alpha: float, beta: float, n: int) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if n == 0:
        return np.zeros_like(x)
    return np.sqrt(n * (n + alpha + beta + 1)) * jacobi_p(x, alpha + 1, beta + 1, n - 1)


def gauss_lobatto(n: int) -> np.ndarray:
    """The ``n + 1`` Legendre-Gauss-Lobatto points on [-1, 1]."""
    if n == 1:
        return np.array([-1.0, 1.0])
    interior, _ = roots_jacobi(n - 1, 1.0, 1.0)
    return np.concatenate(([-1.0], np.sort(interior), [1.0]))


def _warp_factor(n: int, rout: np.ndarray) -> np.ndarray:
    lgl = gauss_lobatto(n)
    req = np.linspace(-1.0, 1.0, n + 1)
    veq = np.stack([jacobi_p(req, 0, 0, i) for i in range(n + 1)], axis=1)
    pmat = np.stack([jacobi_p(rout, 0, 0, i) for i in range(n + 1)], axis=0)
    lmat = np.linalg.solve(veq.T, pmat)
    warp = lmat.T @ (lgl - req)
    zerof = (np.abs(rout) < 1.0 - 1.0e-10).astype(float)
    sf = 1.0 - (zerof * rout) ** 2
    return warp / sf + warp * (zerof - 1.0)


def warp_blend_nodes(n: int) -> np.ndarray:
    """Warp-and-blend triangle nodes of order ``n`` in reference (r, s)."""
    alpha = _ALPHA_OPT[n - 1] if n < 16 else 5.0 / 3.0
    l1, l3 = [], []
    for i in range(n + 1):
        for j in range(n + 1 - i):
            l1.append(i / n)
            l3.append(j / n)
    l1 = np.array(l1)
    l3 = np.array(l3)
    l2 = 1.0 - l1 - l3
    x = -l2 + l3
    y = (-l2 - l3 + 2 * l1) / np.sqrt(3.0)
    blend1 = 4 * l2 * l3
    blend2 = 4 * l1 * l3
    blend3 = 4 * l1 * l2
    warp1 = blend1 * _warp_factor(n, l3 - l2) * (1 + (alpha * l1) ** 2)
    warp2 = blend2 * _warp_factor(n, l1 - l3) * (1 + (alpha * l2) ** 2)
    warp3 = blend3 * _warp_factor(n, l2 - l1) * (1 + (alpha * l3) ** 2)
    x = x + warp1 + np.cos(2 * np.pi / 3) * warp2 + np.cos(4 * np.pi / 3) * warp3
    y = y + np.sin(2 * np.pi / 3) * warp2 + np.sin(4 * np.pi / 3) * warp3
    # equilateral -> right reference triangle
    b1 = (np.sqrt(3.0) * y + 1) / 3
    b2 = (-3 * x - np.sqrt(3.0) * y + 2) / 6
    b3 = (3 * x - np.sqrt(3.0) * y + 2) / 6
    r = -b2 + b3 - b1
    s = -b2 - b3 + b1
    return np.stack([r, s], axis=1)


def _rs_to_ab(r, s):
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(np.abs(s - 1.0) > 1e-14, 2 * (1 + r) / (1 - s) - 1, -1.0)
    return a, s


def _tri_basis(rs: np.ndarray, n: int):
    a, b = _rs_to_ab(rs[:, 0], rs[:, 1])
    v, vr, vs = [], [], []
    for i in range(n + 1):
        for j in range(n + 1 - i):
            h1 = jacobi_p(a, 0, 0, i)
            h2 = jacobi_p(b, 2 * i + 1, 0, j)
            v.append(np.sqrt(2.0) * h1 * h2 * (1 - b) ** i)
            fa, dfa = h1, grad_jacobi_p(a, 0, 0, i)
            gb, dgb = h2, grad_jacobi_p(b, 2 * i + 1, 0, j)
            dr = dfa * gb
            ds = dfa * gb * (0.5 * (1 + a))
            if i > 0:
                dr = dr * (0.5 * (1 - b)) ** (i - 1)
                ds = ds * (0.5 * (1 - b)) ** (i - 1)
            tmp = dgb * (0.5 * (1 - b)) ** i
            if i > 0:
                tmp = tmp - 0.5 * i * gb * (0.5 * (1 - b)) ** (i - 1)
            ds = ds + fa * tmp
            scale = 2.0 ** (i + 0.5)
            vr.append(dr * scale)
            vs.append(ds * scale)
    return np.stack(v, 1), np.stack(vr, 1), np.stack(vs, 1)


def _quad_basis(rs: np.ndarray, n: int):
    r, s = rs[:, 0], rs[:, 1]
    v, vr, vs = [], [], []
    for i in range(n + 1):
        pi, dpi = jacobi_p(r, 0, 0, i), grad_jacobi_p(r, 0, 0, i)
        for j in range(n + 1):
            pj, dpj = jacobi_p(s, 0, 0, j), grad_jacobi_p(s, 0, 0, j)
            v.append(pi * pj)
            vr.append(dpi * pj)
            vs.append(pi * dpj)
    return np.stack(v, 1), np.stack(vr, 1), np.stack(vs, 1)


@dataclass(frozen=True, eq=False)
class RefElement:
    """Reference element data for one element kind and polynomial order.

    All matrices act on nodal values: ``interp(pts) @ f_nodes`` gives the
    interpolant at ``pts``.
    """

    kind: str
    order: int
    vertices: np.ndarray
    nodes: np.ndarray
    vinv: np.ndarray
    dr: np.ndarray
    ds: np.ndarray
    cub_points: np.ndarray
    cub_weights: np.ndarray
    cub_interp: np.ndarray
    cub_dr: np.ndarray
    cub_ds: np.ndarray
    face_t: np.ndarray
    face_weights: np.ndarray
    face_interp: np.ndarray = field(repr=False)   # (nfaces, nf, np)
    face_dr: np.ndarray = field(repr=False)
    face_ds: np.ndarray = field(repr=False)
    face_dir: np.ndarray = field(repr=False)      # d(r,s)/dt per face

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_faces(self) -> int:
        return self.vertices.shape[0]

    def basis(self, rs: np.ndarray):
        rs = np.atleast_2d(rs)
        if self.kind == TRI:
            return _tri_basis(rs, self.order)
        return _quad_basis(rs, self.order)

    def interp(self, rs: np.ndarray) -> np.ndarray:
        v, _, _ = self.basis(rs)
        return v @ self.vinv

    def interp_grad(self, rs: np.ndarray):
        _, vr, vs = self.basis(rs)
        return vr @ self.vinv, vs @ self.vinv

    def vertex_shape(self, rs: np.ndarray) -> np.ndarray:
        """Linear (tri) or bilinear (quad) vertex shape functions at ``rs``."""
        r, s = np.atleast_2d(rs).T
        if self.kind == TRI:
            return np.stack([-(r + s) / 2, (1 + r) / 2, (1 + s) / 2], axis=1)
        return np.stack([(1 - r) * (1 - s), (1 + r) * (1 - s),
                         (1 + r) * (1 + s), (1 - r) * (1 + s)], axis=1) / 4

    def face_node_indices(self, face: int) -> np.ndarray:
        """Indices of nodes lying on reference edge ``face``, in edge order."""
        va = self.vertices[face]
        vb = self.vertices[(face + 1) % self.n_faces]
        d = vb - va
        rel = self.nodes - va
        cross = rel[:, 0] * d[1] - rel[:, 1] * d[0]
        idx = np.nonzero(np.abs(cross) < 1e-10)[0]
        t = rel[idx] @ d / (d @ d)
        return idx[np.argsort(t)]


def _cubature(kind: str, order: int):
    n = order + 1
    xg, wg = roots_legendre(n)
    if kind == QUAD:
        r, s = np.meshgrid(xg, xg, indexing="ij")
        w = np.outer(wg, wg)
        return np.stack([r.ravel(), s.ravel()], 1), w.ravel()
    xb, wb = roots_jacobi(n, 1.0, 0.0)
    a, b = np.meshgrid(xg, xb, indexing="ij")
    w = np.outer(wg, wb) / 2
    r = (1 + a) * (1 - b) / 2 - 1
    return np.stack([r.ravel(), b.ravel()], 1), w.ravel()


@lru_cache(maxsize=None)
def reference_element(kind: str, order: int) -> RefElement:
    if order < 1:
        raise ValueError(f"polynomial order must be >= 1, got {order}")
    if kind == TRI:
        verts = np.array([[-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0]])
        nodes = warp_blend_nodes(order)
        v, vr, vs = _tri_basis(nodes, order)
    elif kind == QUAD:
        verts = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
        g = gauss_lobatto(order)
        r, s = np.meshgrid(g, g, indexing="ij")
        nodes = np.stack([r.ravel(), s.ravel()], 1)
        v, vr, vs = _quad_basis(nodes, order)
    else:
        raise ValueError(f"unknown element kind {kind!r}")
    vinv = np.linalg.inv(v)
    dr = vr @ vinv
    ds = vs @ vinv

    cub_pts, cub_w = _cubature(kind, order)
    basis = _tri_basis if kind == TRI else _quad_basis
    cv, cvr, cvs = basis(cub_pts, order)

    ft, fw = roots_legendre(order + 1)
    nfaces = verts.shape[0]
    f_interp, f_dr, f_ds, f_dir = [], [], [], []
    for f in range(nfaces):
        va, vb = verts[f], verts[(f + 1) % nfaces]
        pts = va[None, :] * (1 - ft[:, None]) / 2 + vb[None, :] * (1 + ft[:, None]) / 2
        fv, fvr, fvs = basis(pts, order)
        f_interp.append(fv @ vinv)
        f_dr.append(fvr @ vinv)
        f_ds.append(fvs @ vinv)
        f_dir.append((vb - va) / 2)

    return RefElement(
        kind=kind, order=order, vertices=verts, nodes=nodes, vinv=vinv,
        dr=dr, ds=ds, cub_points=cub_pts, cub_weights=cub_w,
        cub_interp=cv @ vinv, cub_dr=cvr @ vinv, cub_ds=cvs @ vinv,
        face_t=ft, face_weights=fw, face_interp=np.stack(f_interp),
        face_dr=np.stack(f_dr), face_ds=np.stack(f_ds), face_dir=np.stack(f_dir),
    )
