"""End-to-end acceptance checks.

Each test records a PASS/FAIL verdict that is printed in the terminal
summary.  The heavy pipeline runs take a few minutes in total on one core.
"""
from pathlib import Path

import numpy as np
import pytest

from mmfatlas.analytic import arc_fiber, latitudinal_exact, latitudinal_frames
from mmfatlas.cli import cmd_solve
from mmfatlas.connection import connection_form, curvature
from mmfatlas.fiber import (area_mean, covariant_curl_normal, covariant_divergence, fiber_match,
                            fiber_to_frames, project_fiber)
from mmfatlas.frames import (STR, WB, WF, WINT, AlignmentConfig, GradientAccumulator, align_frames,
                             finalize_direction, init_frames)
from mmfatlas.mesh import build_plane_mesh, build_sphere_mesh, evaluate
from mmfatlas.pde import (ApParams, ApState, DiffusionOperator, SolverConfig, ap_reaction,
                          make_dframes, mmf_laplacian, point_initialize, run, wall_initialize)
from mmfatlas.pipeline import WAVE_PARAMS, convergence_study, measure, plane_pulse
from mmfatlas.report import fitted_order

ROOT = Path(__file__).resolve().parents[1]


@pytest.mark.xfail(strict=True, reason="near-origin elements cap the order at about 1; "
                   "see the decisions ledger")
def test_c1_sampled_radial_connection_orders(verdict):
    rep = convergence_study("plane", [2.0, 1.0, 0.5], [2, 3, 4, 5, 6], sampled=True, r_ex=1.0,
                            half_width=10.0, wall_margin=None)
    ok, parts = True, []
    for p in range(2, 7):
        rows = [r for r in rep.rows if r["p"] == p]
        hs = [r["h"] for r in rows]
        kw = fitted_order([r["w212"] for r in rows], hs)
        kr = fitted_order([r["R2121"] for r in rows], hs)
        ok &= kw >= p - 0.5 and kr >= p - 1.5
        parts.append(f"p={p}: w212 {kw:.2f} R {kr:.2f}")
    print(rep.format())
    verdict(1, ok, "; ".join(parts))
    assert ok


def test_c2_sphere_closed_forms(verdict):
    R = 10.0
    mesh = build_sphere_mesh(R, 1.7, 4)
    frames = latitudinal_frames(mesh)
    conn, curv = curvature(frames, mesh)
    ex = latitudinal_exact(mesh.nodes, R)
    theta = ex["r"] / R
    band = np.abs(theta - np.pi / 4) < 0.05
    assert band.sum() > 20

    def rel(field, exact):
        return float(np.nanmax(np.abs(field[band] / exact[band] - 1)))

    errs = {"w212": rel(conn.w212, ex["w212"]), "w311": rel(conn.w311, ex["w311"]),
            "w322": rel(conn.w322, ex["w322"]), "K": rel(curv.K, ex["K"]),
            "R2121": rel(curv.R2121, ex["R2121"])}
    tol = {"w212": 0.01, "w311": 0.01, "w322": 0.01, "K": 0.02, "R2121": 0.05}
    ok = all(errs[k] < tol[k] for k in tol)
    verdict(2, ok, " ".join(f"{k} {v:.1e}" for k, v in errs.items()))
    assert ok


@pytest.mark.slow
def test_c3_plane_pipeline_orders(verdict):
    rep = convergence_study("plane", [4.0, 2.86, 2.0], [4], WB, WINT)
    print(rep.format())
    hs = [r["h"] for r in rep.rows]
    e = {q: [r[q] for r in rep.rows] for q in ("e1", "w212", "R2121")}
    k = {q: fitted_order(v, hs) for q, v in e.items()}
    monotone = all(a > b for a, b in zip(e["e1"], e["e1"][1:]))
    ok = monotone and k["e1"] >= 4 and k["w212"] >= 3 and k["R2121"] >= 2
    verdict(3, ok, f"e1 {e['e1'][-1]:.2e} orders e1 {k['e1']:.2f} w212 {k['w212']:.2f} "
                   f"R {k['R2121']:.2f}")
    assert ok


@pytest.mark.slow
def test_c4_waveback_beats_wavefront(verdict):
    err = {}
    for mode in (WB, WF):
        out = plane_pulse(3.0, 4, mode, STR)
        err[mode] = measure(out.mesh, out.frames, "plane", r_ex=3.0, r_max=15.0).errors["e1"]
    ratio = err[WF] / err[WB]
    ok = ratio >= 2
    verdict(4, ok, f"Str: WB {err[WB]:.2e} WF {err[WF]:.2e} ratio {ratio:.1f}")
    assert ok


def test_c5_rotation_invariance(verdict):
    mesh = build_plane_mesh((-2, 2, -2, 2), 0.5, 6)
    u = evaluate(lambda x: np.sin(x[..., 0]) * np.cos(0.7 * x[..., 1]) + 0.1 * x[..., 0] ** 2, mesh)
    base = init_frames(mesh)
    a = mmf_laplacian(u, make_dframes(base), mesh)
    b = mmf_laplacian(u, make_dframes(base.rotated(np.pi / 6)), mesh)
    diff = float(np.linalg.norm(a - b) / np.linalg.norm(a))
    ok = diff < 1e-6
    verdict(5, ok, f"relative difference {diff:.1e}")
    assert ok


def test_c6_conservation(verdict):
    mesh = build_plane_mesh((-10, 10, -10, 10), 2.0, 4)
    u0 = evaluate(lambda x: np.exp(-0.1 * ((x[..., 0] - 3) ** 2 + x[..., 1] ** 2)), mesh)
    op = DiffusionOperator(mesh, make_dframes(init_frames(mesh), 2.0, 0.5))
    res = run(mesh, ApState(u0, np.zeros_like(u0)), None,
              config=SolverConfig(dt=0.01, t_final=10.0, reaction=False, solver="direct"),
              operator=op)
    m0 = float(np.sum(op.M @ u0.ravel()))
    m1 = float(np.sum(op.M @ res.state.u.ravel()))
    drift = abs(m1 - m0) / abs(m0)
    ok = drift < 1e-8
    verdict(6, ok, f"relative drift {drift:.1e}")
    assert ok


def _disc_run(mesh, inside, frames0, fiber, dframes, state):
    acc = GradientAccumulator(mesh.shape, WF, WINT, t_end=40.0)
    run(mesh, state, dframes, WAVE_PARAMS, SolverConfig(dt=0.01, t_final=40.0), hooks=[acc])
    direction, _ = finalize_direction(acc)
    frames = align_frames(frames0, direction, mesh, AlignmentConfig(delta=None))
    return area_mean(fiber_match(frames, fiber), mesh, region=inside)


@pytest.mark.slow
def test_c7_anisotropy_following(verdict):
    mesh = build_plane_mesh((-20, 20, -20, 20), 1.5, 4)
    inside = np.hypot(mesh.nodes[..., 0], mesh.nodes[..., 1]) < 10.0
    fiber = arc_fiber(mesh.nodes) * inside[..., None]
    frames0 = init_frames(mesh)
    fframes, _ = fiber_to_frames(project_fiber(fiber, mesh.normals), frames0)
    # d11/d22 = 4 inside the disc, isotropic outside
    dframes = make_dframes(fframes, 1.0, np.where(inside, 0.25, 1.0))
    wall = _disc_run(mesh, inside, frames0, fiber, dframes, wall_initialize(mesh, 0, 1.0))
    point = _disc_run(mesh, inside, frames0, fiber, dframes,
                      point_initialize(mesh, (-10.0, 10.0), 1.0, 1.0, width=2.0))
    ok = wall > 0.95 and point < wall
    verdict(7, ok, f"mean |cos| wall {wall:.4f} point {point:.4f}")
    assert ok


def _fiber_ops(p, h):
    mesh = build_plane_mesh((1, 5, -2, 2), h, p)
    x, y = mesh.nodes[..., 0], mesh.nodes[..., 1]
    z = np.zeros_like(x)
    radial, rot = np.stack([x, y, z], -1), np.stack([-y, x, z], -1)
    # frames following the field, so the Christoffel terms are exercised
    frames, _ = fiber_to_frames(project_fiber(radial, mesh.normals), init_frames(mesh))
    conn = connection_form(frames, mesh)
    div = np.abs(covariant_divergence(radial, frames, conn, mesh) - 2).max()
    curl = np.abs(covariant_curl_normal(rot, frames, conn, mesh) - 2).max()
    curl0 = np.abs(covariant_curl_normal(radial, frames, conn, mesh)).max()
    return mesh.h, div, curl, curl0


def test_c8_fiber_div_curl(verdict):
    h, div, curl, _ = _fiber_ops(4, 0.5)
    bound = h ** 3
    # the radial curl vanishes identically; p=8 brings the frame error under 1e-6
    _, _, _, curl0 = _fiber_ops(8, 0.5)
    ok = div < bound and curl < bound and curl0 < 1e-6
    verdict(8, ok, f"p=4: div {div:.1e} curl {curl:.1e} (bound {bound:.2g}); "
                   f"p=8 radial curl {curl0:.1e}")
    assert ok


def test_c9_reaction_fixed_points(verdict):
    p = ApParams()
    du, dv = ap_reaction(np.array([0.0, p.a, 1.0]), np.zeros(3), p)
    _, dv1 = ap_reaction(1.0, 0.0, p)
    ok = np.all(du == 0) and dv[0] == 0 and float(dv1) == pytest.approx(0.0024, abs=1e-15)
    verdict(9, ok, f"du {du.tolist()} dv(1,0) {float(dv1):.6g}")
    assert ok


def test_c10_determinism(verdict, tmp_path):
    config = ROOT / "configs" / "plane_demo.ini"
    names = []
    for d in ("a", "b"):
        man = cmd_solve(config, {"output_dir": str(tmp_path / d)})
        names.append(sorted(k for k in man.outputs if k != "manifest.json"))
    same = names[0] == names[1] and all(
        (tmp_path / "a" / Path(n).name).read_bytes() == (tmp_path / "b" / Path(n).name).read_bytes()
        for n in names[0])
    snaps = [Path(n).name for n in names[0] if "snapshot" in n]
    ok = same and len(snaps) == 2
    verdict(10, ok, f"{len(names[0])} files identical: {same}")
    assert ok
