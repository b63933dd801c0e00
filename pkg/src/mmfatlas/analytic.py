"""Closed-form frame fields used as references.

* plane, point source at ``c``: ``e1 = (x - c)/r``; then ``w212 = 1/r``,
  ``w211 = 0`` and ``R = 1/r^2``
* sphere of radius ``R``, source at the north pole: ``e1 = d/dtheta``,
  ``e2 = d/dphi`` normalised; then ``w212 = cot(theta)/R``,
  ``w311 = w322 = -1/R``, ``K = 1/R^2``, ``H = -1/R``,
  ``R2121 = 1/(R^2 sin^2 theta)``
* circular arcs about ``c`` in the plane: the unit tangent of the circle
  through each point
"""
from __future__ import annotations

import numpy as np

from .frames import ALIGNED, UNALIGNED, FrameField
from .mesh import SurfaceMesh


def _center3(center) -> np.ndarray:
    c = np.zeros(3)
    cc = np.ravel(np.asarray(center, dtype=float))
    c[:len(cc)] = cc
    return c


def elements_containing(mesh: SurfaceMesh, point, tol: float = 1e-3) -> np.ndarray:
    """Boolean per element: ``point`` lies in the element (boundary included).

    The test projects the straight-sided vertex polygon and the point onto
    the element's mean tangent plane.  ``tol`` (relative to ``h^2``) widens
    the polygon slightly so that points on a curved shared edge count for
    both neighbours.
    """
    p = _center3(point)
    verts = mesh.vertices[mesh.elements]                # (ne, nv, 3)
    normal = mesh.normals.mean(axis=1)
    normal /= np.linalg.norm(normal, axis=-1, keepdims=True)
    centroid = verts.mean(axis=1)
    near = np.abs(np.einsum("ec,ec->e", p - centroid, normal)) < mesh.element_h
    near &= np.linalg.norm(p - centroid, axis=-1) < 1.5 * mesh.element_h
    edge = np.roll(verts, -1, axis=1) - verts
    rel = p[None, None, :] - verts
    side = np.einsum("evc,ec->ev", np.cross(edge, rel), normal)
    scale = mesh.element_h[:, None] ** 2
    return near & np.all(side >= -tol * scale, axis=1)


# -- plane, radial ----------------------------------------------------------

def radial_e1(points, center=(0.0, 0.0)) -> np.ndarray:
    d = np.asarray(points, dtype=float) - _center3(center)
    d[..., 2] = 0.0
    r = np.linalg.norm(d, axis=-1, keepdims=True)
    out = np.divide(d, r, out=np.zeros_like(d), where=r > 0)
    out[(r[..., 0] == 0)] = (1.0, 0.0, 0.0)
    return out


def radial_frames(mesh: SurfaceMesh, center=(0.0, 0.0)) -> FrameField:
    """Plane polar frames; elements containing the centre are unaligned."""
    c = _center3(center)
    e1 = radial_e1(mesh.nodes, c)
    flag = np.full(mesh.shape, ALIGNED, dtype=np.int8)
    flag[elements_containing(mesh, c)] = UNALIGNED
    return FrameField.from_e1(e1, mesh.normals, flag)


def radial_exact(points, center=(0.0, 0.0)) -> dict:
    d = np.asarray(points, dtype=float) - _center3(center)
    r = np.hypot(d[..., 0], d[..., 1])
    with np.errstate(divide="ignore"):
        return {"e1": radial_e1(points, center), "w211": np.zeros_like(r), "w212": 1.0 / r,
                "R2121": 1.0 / r ** 2, "K": np.zeros_like(r), "H": np.zeros_like(r), "r": r}


# -- sphere, latitudinal --------------------------------------------------

def _spherical(points):
    x, y, z = np.moveaxis(np.asarray(points, dtype=float), -1, 0)
    rad = np.sqrt(x * x + y * y + z * z)
    theta = np.arccos(np.clip(z / rad, -1.0, 1.0))
    phi = np.arctan2(y, x)
    return rad, theta, phi


def latitudinal_e1(points) -> np.ndarray:
    _, th, ph = _spherical(points)
    return np.stack([np.cos(th) * np.cos(ph), np.cos(th) * np.sin(ph), -np.sin(th)], axis=-1)


def latitudinal_frames(mesh: SurfaceMesh) -> FrameField:
    """``e1 = d/dtheta`` frames; elements containing either pole are unaligned."""
    e1 = latitudinal_e1(mesh.nodes)
    flag = np.full(mesh.shape, ALIGNED, dtype=np.int8)
    R = mesh.radius or float(np.linalg.norm(mesh.vertices, axis=-1).mean())
    for pole in ((0, 0, R), (0, 0, -R)):
        flag[elements_containing(mesh, pole)] = UNALIGNED
    return FrameField.from_e1(e1, mesh.normals, flag)


def latitudinal_exact(points, R: float) -> dict:
    _, th, _ = _spherical(points)
    s = np.sin(th)
    with np.errstate(divide="ignore", invalid="ignore"):
        return {"e1": latitudinal_e1(points), "w211": np.zeros_like(th),
                "w212": np.cos(th) / (R * s), "w311": np.full_like(th, -1.0 / R),
                "w322": np.full_like(th, -1.0 / R), "w312": np.zeros_like(th),
                "w321": np.zeros_like(th), "K": np.full_like(th, 1.0 / R ** 2),
                "H": np.full_like(th, -1.0 / R), "R2121": 1.0 / (R * s) ** 2,
                "r": R * th}


# -- circular arcs ----------------------------------------------------------

def arc_fiber(points, center=(0.0, -25.0), magnitude=1.0) -> np.ndarray:
    """Tangent of circles about ``center``, counter-clockwise, scaled."""
    d = np.asarray(points, dtype=float) - _center3(center)
    t = np.stack([-d[..., 1], d[..., 0], np.zeros_like(d[..., 0])], axis=-1)
    n = np.linalg.norm(t, axis=-1, keepdims=True)
    t = np.divide(t, n, out=np.zeros_like(t), where=n > 0)
    return t * np.asarray(magnitude, dtype=float)[..., None] if np.ndim(magnitude) else t * magnitude


def fan_fiber(points, center=(0.0, 0.0)) -> np.ndarray:
    """Unit field diverging from ``center``."""
    return radial_e1(points, center)
