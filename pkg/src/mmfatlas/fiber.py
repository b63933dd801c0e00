"""Fiber fields: tangent projection, frames from fibers, covariant div/curl.

The covariant operators work on frame components ``f1 = f.e1``,
``f2 = f.e2`` and take the Christoffel symbols from the connection,
``Gamma^i_jk = w_ijk``::

    div f      = grad(f1).e1 + grad(f2).e2 + w212 f1 - w211 f2
    (curl f).k = grad(f2).e1 - grad(f1).e2 + w211 f1 + w212 f2
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .connection import ConnectionField
from .frames import ALIGNED, FrameField
from .mesh import SurfaceMesh, differentiate, to_quadrature


@dataclass(frozen=True)
class FiberField:
    f: np.ndarray
    f_proj: np.ndarray
    sin_theta: np.ndarray

    @property
    def magnitude(self) -> np.ndarray:
        return np.linalg.norm(self.f_proj, axis=-1)


def project_fiber(f, normals) -> FiberField:
    """Tangential part ``f - (f.k) k`` and ``sin`` of the angle to ``k``."""
    f = np.asarray(f, dtype=float)
    k = np.asarray(normals, dtype=float)
    proj = f - np.einsum("...c,...c->...", f, k)[..., None] * k
    fn = np.linalg.norm(f, axis=-1)
    pn = np.linalg.norm(proj, axis=-1)
    sin = np.divide(pn, fn, out=np.zeros_like(fn), where=fn > 0)
    return FiberField(f, proj, sin)


def fiber_to_frames(fib: FiberField, fallback: FrameField, rel_threshold: float = 1e-6):
    """Frames with ``e1`` along the projected fiber, and ``d11 = |f_proj|``.

    Nodes whose projected magnitude is at most ``rel_threshold`` times the
    median raw fiber magnitude keep ``fallback`` and get ``d11 = 1``.
    """
    mag = fib.magnitude
    raw = np.linalg.norm(fib.f, axis=-1)
    med = float(np.median(raw)) if raw.size else 0.0
    ok = mag > rel_threshold * med
    ok &= mag > 0
    e1 = fallback.e1.copy()
    e1[ok] = fib.f_proj[ok] / mag[ok, None]
    frames = FrameField.from_e1(e1, fallback.e3, fallback.flag.copy())
    # keep fallback frames untouched where the fiber is negligible
    e1f, e2f = frames.e1, frames.e2
    e1f[~ok] = fallback.e1[~ok]
    e2f[~ok] = fallback.e2[~ok]
    flag = frames.flag
    flag[ok] = ALIGNED
    d11 = np.where(ok, mag, 1.0)
    return FrameField(e1f, e2f, fallback.e3, flag), d11


def frame_components(f, frames: FrameField):
    f = np.asarray(f, dtype=float)
    return (np.einsum("eic,eic->ei", f, frames.e1), np.einsum("eic,eic->ei", f, frames.e2))


def covariant_divergence(f, frames: FrameField, conn: ConnectionField, mesh: SurfaceMesh,
                         printed: bool = False) -> np.ndarray:
    """Divergence of a tangent field through its frame components.

    ``printed=True`` evaluates the variant with ``w212 f1`` replaced by
    ``w22_1 f1 = 0``; it disagrees with the polar divergence and exists
    only for comparison.
    """
    f1, f2 = frame_components(f, frames)
    g1 = differentiate(f1, mesh)
    g2 = differentiate(f2, mesh)
    out = (np.einsum("eic,eic->ei", g1, frames.e1) + np.einsum("eic,eic->ei", g2, frames.e2)
           - conn.w211 * f2)
    if not printed:
        out = out + conn.w212 * f1
    return out


def covariant_curl_normal(f, frames: FrameField, conn: ConnectionField, mesh: SurfaceMesh) -> np.ndarray:
    """Normal component of the curl of a tangent field."""
    f1, f2 = frame_components(f, frames)
    g1 = differentiate(f1, mesh)
    g2 = differentiate(f2, mesh)
    return (np.einsum("eic,eic->ei", g2, frames.e1) - np.einsum("eic,eic->ei", g1, frames.e2)
            + conn.w211 * f1 + conn.w212 * f2)


def fiber_match(frames: FrameField, fiber) -> np.ndarray:
    """``|cos|`` of the angle between ``e1`` and the fiber; NaN where undefined."""
    fiber = np.asarray(fiber, dtype=float)
    n = np.linalg.norm(fiber, axis=-1)
    c = np.abs(np.einsum("...c,...c->...", frames.e1, fiber))
    out = np.divide(c, n, out=np.full_like(n, np.nan), where=n > 0)
    out[frames.flag != ALIGNED] = np.nan
    return out


def area_mean(field, mesh: SurfaceMesh, region=None) -> float:
    """Quadrature-weighted mean of a nodal field over finite values in ``region``.

    ``region`` is an optional per-node boolean; an element counts when all
    its nodes are in the region and finite.
    """
    field = np.asarray(field, dtype=float)
    keep = np.all(np.isfinite(field), axis=1)
    if region is not None:
        keep &= np.all(region, axis=1)
    if not np.any(keep):
        return float("nan")
    fq = to_quadrature(np.where(np.isfinite(field), field, 0.0), mesh)
    w = mesh.quad_weights * keep[:, None]
    return float(np.sum(w * fq) / np.sum(w))
