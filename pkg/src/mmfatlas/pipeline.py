"""Simulation-to-atlas pipelines shared by the command line and the tests.

A pipeline run excites a wave, accumulates gradient directions while it
travels, aligns the frames, and measures the result against the analytic
frame fields of the plane (point source) or the sphere (pole source).
"""
from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import analytic
from .connection import ConnectionField, CurvatureField, curvature, element_mask
from .errors import InvalidInputError
from .frames import (WB, WF, WINT, AlignmentConfig, FrameField, GradientAccumulator, align_frames,
                     aligned_fraction, finalize_direction, init_frames)
from .mesh import QUAD, TRI, SurfaceMesh, build_plane_mesh, build_sphere_mesh
from .pde import ApParams, ApState, RunResult, SolverConfig, make_dframes, point_initialize, run
from .report import ErrorReport, l2_error

log = logging.getLogger(__name__)

# measurement times per mode
PLANE_TIMES = {WB: 40.0, WF: 20.0}
SPHERE_TIMES = {WB: 36.0, WF: 14.0}
SPHERE_RADIUS = 10.0

# repolarizing kinetics: see ApParams.uv_sign
WAVE_PARAMS = ApParams(uv_sign=-1.0)


@dataclass
class AlignedRun:
    mesh: SurfaceMesh
    frames: FrameField
    result: RunResult
    accumulator: GradientAccumulator
    timings: dict = field(default_factory=dict)


def simulate_and_align(mesh: SurfaceMesh, state: ApState, frames0: FrameField, *,
                       d11=1.0, d22=1.0, params: ApParams | None = None,
                       solver: SolverConfig | None = None, mode: str = WB, method: str = WINT,
                       t_end: float | None = None, align: AlignmentConfig | None = None,
                       eps_rel: float = 1e-4, min_weight: float = 0.0) -> AlignedRun:
    """Run the model from ``state`` and align ``frames0`` to the wave.

    Gradients are accumulated up to ``t_end`` (default: the final time).
    The validity check, when enabled in ``align``, uses the final
    snapshot of ``u`` and the run's diffusivities.
    """
    params = params or WAVE_PARAMS
    solver = solver or SolverConfig()
    t_end = solver.t_final if t_end is None else t_end
    timings = {}
    t0 = time.perf_counter()
    dframes = make_dframes(frames0, d11, d22)
    acc = GradientAccumulator(mesh.shape, mode, method, eps_rel=eps_rel, t_end=t_end)
    result = run(mesh, state, dframes, params, solver, hooks=[acc])
    timings["simulate"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    direction, _ = finalize_direction(acc, min_weight)
    cfg = align or AlignmentConfig(delta=None)
    if cfg.delta is not None:
        cfg = AlignmentConfig(**{**cfg.__dict__, "dt": solver.dt,
                                 "d11": _scalar_or(d11, cfg.d11), "d22": _scalar_or(d22, cfg.d22)})
    frames = align_frames(frames0, direction, mesh, cfg, u=result.state.u)
    timings["align"] = time.perf_counter() - t0
    return AlignedRun(mesh, frames, result, acc, timings)


def _scalar_or(value, default):
    return float(value) if np.ndim(value) == 0 else default


# -- analytic families -------------------------------------------------------

def plane_mesh(h: float, p: int, half_width: float = 20.0, kind: str = QUAD) -> SurfaceMesh:
    return build_plane_mesh((-half_width, half_width, -half_width, half_width), h, p, kind)


def sphere_mesh(h: float, p: int, radius: float = SPHERE_RADIUS, kind: str = TRI) -> SurfaceMesh:
    return build_sphere_mesh(radius, h, p, kind)


def _plane_frames(mesh):
    return init_frames(mesh, "fixed-axis")


def _sphere_frames(mesh):
    # smooth everywhere except the south pole, which is excluded anyway
    return init_frames(mesh, "stereographic", pole=(0.0, 0.0, 1.0))


def plane_pulse(h: float, p: int, mode: str = WB, method: str = WINT, half_width: float = 20.0,
                dt: float = 0.01, t_final: float | None = None, width: float = 2.0,
                kind: str = QUAD, delta: float | None = None) -> AlignedRun:
    """Point-initiated pulse at the origin of ``[-L, L]^2``, no-flux walls."""
    mesh = plane_mesh(h, p, half_width, kind)
    t_end = PLANE_TIMES[mode]
    state = point_initialize(mesh, (0.0, 0.0), 1.0, 1.0, width=width)
    solver = SolverConfig(dt=dt, t_final=t_end if t_final is None else t_final)
    return simulate_and_align(mesh, state, _plane_frames(mesh), solver=solver, mode=mode,
                              method=method, t_end=t_end,
                              align=AlignmentConfig(delta=delta))


def sphere_pulse(h: float, p: int, mode: str = WB, method: str = WINT, radius: float = SPHERE_RADIUS,
                 dt: float = 0.01, width: float = 2.0, delta: float | None = None) -> AlignedRun:
    """Pulse initiated at the north pole of a sphere."""
    mesh = sphere_mesh(h, p, radius)
    t_end = SPHERE_TIMES[mode]
    state = point_initialize(mesh, (0.0, 0.0, radius), 1.0, 1.0, width=width)
    solver = SolverConfig(dt=dt, t_final=t_end)
    return simulate_and_align(mesh, state, _sphere_frames(mesh), solver=solver, mode=mode,
                              method=method, t_end=t_end, align=AlignmentConfig(delta=delta))


@dataclass
class Measurement:
    errors: dict
    sign: float
    area: float
    aligned: float
    conn: ConnectionField
    curv: CurvatureField


def measure(mesh: SurfaceMesh, frames: FrameField, family: str, r_ex: float = 3.0,
            r_max: float | None = None) -> Measurement:
    """L2 errors of ``e1``, ``w212`` and ``R2121`` against the family's closed form.

    ``r_ex`` drops points within that distance of the singular points;
    ``r_max`` (plane only) drops points farther than that from the source.
    The ``e1`` error uses whichever global sign fits better, and the frames
    are flipped to that sign before the connection is computed.
    """
    pts = mesh.quad_points
    if family == "plane":
        ex = analytic.radial_exact(pts)
        dist = ex["r"]
        if r_max is not None:
            dist = np.where(dist <= r_max, dist, -1.0)
    elif family == "sphere":
        R = mesh.radius or float(np.linalg.norm(mesh.vertices, axis=-1).mean())
        ex = analytic.latitudinal_exact(pts, R)
        dist = np.minimum(ex["r"], np.pi * R - ex["r"])
    else:
        raise InvalidInputError(f"unknown family {family!r}")
    keep = element_mask(frames)
    e1_err, sign, area = l2_error(frames.e1, ex["e1"], mesh, include=keep, radius_q=dist,
                                  r_ex=r_ex, vector_sign=True)
    if sign < 0:
        frames = frames.flipped()
    conn, curv = curvature(frames, mesh)
    w_err, _, _ = l2_error(conn.w212, ex["w212"], mesh, radius_q=dist, r_ex=r_ex)
    r_err, _, _ = l2_error(curv.R2121, ex["R2121"], mesh, radius_q=dist, r_ex=r_ex)
    errors = {"e1": e1_err, "w212": w_err, "R2121": r_err}
    return Measurement(errors, sign, area, aligned_fraction(frames, mesh), conn, curv)


def exact_frames(mesh: SurfaceMesh, family: str) -> FrameField:
    if family == "plane":
        return analytic.radial_frames(mesh)
    if family == "sphere":
        return analytic.latitudinal_frames(mesh)
    raise InvalidInputError(f"unknown family {family!r}")


def _level(args):
    family, h, p, mode, method, sampled, opts = args
    t0 = time.perf_counter()
    if sampled:
        mesh = plane_mesh(h, p, opts["half_width"]) if family == "plane" else sphere_mesh(h, p)
        frames = exact_frames(mesh, family)
    elif family == "plane":
        out = plane_pulse(h, p, mode, method, opts["half_width"], opts["dt"], delta=opts["delta"])
        mesh, frames = out.mesh, out.frames
    else:
        out = sphere_pulse(h, p, mode, method, dt=opts["dt"], delta=opts["delta"])
        mesh, frames = out.mesh, out.frames
    margin = opts["wall_margin"]
    r_max = opts["half_width"] - margin if family == "plane" and margin is not None else None
    m = measure(mesh, frames, family, opts["r_ex"], r_max)
    row = {"h": float(mesh.h), "p": int(p), "n_elements": mesh.n_elements, **m.errors,
           "aligned": m.aligned, "sign": m.sign, "seconds": time.perf_counter() - t0}
    log.info("%s h=%.3f p=%d: %s", family, mesh.h, p, m.errors)
    return row


def convergence_study(family: str, hs, ps, mode: str = WB, method: str = WINT, *,
                      sampled: bool = False, r_ex: float = 3.0, half_width: float = 20.0,
                      wall_margin: float | None = 5.0, dt: float = 0.01, delta: float | None = None,
                      jobs: int = 1) -> ErrorReport:
    """Errors and observed orders over the mesh levels ``hs`` for each ``p``.

    ``sampled=True`` skips the simulation and measures the interpolated
    exact frames, which isolates the connection and curvature evaluation.
    Plane errors are taken over ``r_ex <= r <= half_width - wall_margin``:
    near the no-flux walls the reflected wave bends the gradient away
    from the free-space radial field.  ``wall_margin=None`` keeps the
    whole domain.
    """
    if family not in ("plane", "sphere"):
        raise InvalidInputError(f"unknown family {family!r}")
    hs, ps = list(hs), list(ps)
    if len(hs) < 2:
        raise InvalidInputError("at least two mesh levels are needed to fit an order")
    opts = {"r_ex": r_ex, "half_width": half_width, "wall_margin": wall_margin, "dt": dt,
            "delta": delta}
    tasks = [(family, h, p, mode, method, sampled, opts) for p in ps for h in hs]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_level, tasks))
    else:
        rows = [_level(t) for t in tasks]
    note = ErrorReport.note
    if family == "plane" and wall_margin is not None:
        note += f"; plane region r <= {half_width - wall_margin:g}"
    tag = "sampled" if sampled else f"{mode}/{method}"
    return ErrorReport(f"{family} ({tag})", r_ex, rows, note=note)
