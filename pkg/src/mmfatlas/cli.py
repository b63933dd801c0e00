"""Command line entry point: ``mmfatlas <command> [options]``.

Commands
--------
solve        run the wave model from an INI config and align frames to it
atlas        connection, curvature and threshold masks of a frame file
convergence  error table and observed orders against the analytic families
fiber-match  |cos| between aligned frames and a fiber field
fiber-atlas  connection, curvature, divergence and curl of a fiber field
mesh-gen     write a plane or sphere mesh

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .connection import curvature, curvature_threshold, interface_jump
from .errors import ConfigError, MeshParseError, MMFError, NumericalError, SolverError
from .fiber import (area_mean, covariant_curl_normal, covariant_divergence, fiber_match,
                    fiber_to_frames, project_fiber)
from .frames import (STR, INT, WINT, WB, WF, AlignmentConfig, FrameField, init_frames)
from .io import load_field, load_mesh, load_point_samples, map_to_nodes, save_field, save_mesh
from .mesh import QUAD, TRI, SurfaceMesh, build_plane_mesh, build_sphere_mesh
from .pde import (SCHEMES, ApParams, FluxParams, SolverConfig, point_initialize,
                  wall_initialize)
from .pipeline import convergence_study, simulate_and_align

log = logging.getLogger("mmfatlas")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


# -- hashing and manifest ----------------------------------------------------

def blob_sha1(data: bytes) -> str:
    """Content hash in git's blob format, ``sha1("blob <n>\\0" + data)``."""
    h = hashlib.sha1(b"blob %d\0" % len(data))
    h.update(data)
    return h.hexdigest()


def file_sha1(path) -> str:
    return blob_sha1(Path(path).read_bytes())


@dataclass
class RunManifest:
    command: str
    config: dict = field(default_factory=dict)
    mesh_hash: str | None = None
    inputs: dict = field(default_factory=dict)      # path -> blob sha1
    outputs: dict = field(default_factory=dict)     # file name -> blob sha1
    timings: dict = field(default_factory=dict)     # stage -> seconds
    version: str = __version__

    def add_output(self, path):
        self.outputs[Path(path).name] = file_sha1(path)

    def write(self, path):
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")


class _Stage:
    """Time a pipeline stage and prefix errors with its name."""

    def __init__(self, manifest: RunManifest, name: str):
        self.manifest, self.name = manifest, name

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        self.manifest.timings[self.name] = round(time.perf_counter() - self.t0, 6)
        if exc is not None and isinstance(exc, MMFError) and not getattr(exc, "_staged", False):
            exc.args = (f"stage {self.name!r}: {exc}",) + exc.args[1:]
            exc._staged = True
        return False


# -- configuration -----------------------------------------------------------

DEFAULTS = {
    "mesh": "plane", "extent": "-20 20 -20 20", "h": "4.0", "radius": "10.0", "kind": "",
    "order": "4", "dt": "0.01", "t_final": "40.0", "scheme": "sbdf2", "solver": "direct",
    "snapshot_times": "", "penalty": "1.0", "d11": "1.0", "d22": "1.0", "fiber": "",
    "fiber_tolerance": "", "frames": "fixed-axis", "init": "point", "init_center": "0 0 0",
    "init_radius": "1.0", "init_strength": "1.0", "init_width": "2.0", "wall_axis": "0",
    "wall_depth": "1.0", "mode": "WB", "method": "Wint", "align_until": "", "delta": "none",
    "eps_g": "1e-4", "exclude_center": "0 0 0", "exclude_radius": "0.0", "ap_k": "8.0",
    "ap_a": "0.15", "ap_eps0": "0.002", "ap_mu1": "0.2", "ap_mu2": "0.3", "ap_uv_sign": "1.0",
    "output_dir": "mmf_out",
}


@dataclass
class RunConfig:
    values: dict
    base: Path

    def get(self, key: str) -> str:
        return self.values[key].strip()

    def num(self, key: str) -> float:
        try:
            return float(self.get(key))
        except ValueError:
            raise ConfigError(f"{key} must be a number, got {self.get(key)!r}") from None

    def integer(self, key: str) -> int:
        try:
            return int(self.get(key))
        except ValueError:
            raise ConfigError(f"{key} must be an integer, got {self.get(key)!r}") from None

    def floats(self, key: str, n: int | None = None) -> list[float]:
        try:
            vals = [float(v) for v in self.get(key).replace(",", " ").split()]
        except ValueError:
            raise ConfigError(f"{key} must be a list of numbers, got {self.get(key)!r}") from None
        if n is not None and len(vals) != n:
            raise ConfigError(f"{key} needs {n} numbers, got {len(vals)}")
        return vals

    def optional(self, key: str) -> float | None:
        v = self.get(key).lower()
        return None if v in ("", "none", "off") else self.num(key)

    def path(self, key: str) -> Path:
        p = Path(self.get(key))
        return p if p.is_absolute() else self.base / p


def read_config(path, overrides: dict | None = None) -> RunConfig:
    """Read the ``[run]`` section of an INI file over :data:`DEFAULTS`."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not parser.has_section("run"):
        raise ConfigError(f"{path}: missing [run] section")
    values = dict(DEFAULTS)
    for key, val in parser.items("run"):
        if key not in DEFAULTS:
            raise ConfigError(f"{path}: unknown key {key!r}")
        values[key] = val
    for key, val in (overrides or {}).items():
        if val is not None:
            values[key] = str(val)
    return RunConfig(values, path.parent)


def build_mesh(cfg: RunConfig) -> SurfaceMesh:
    kind_name = cfg.get("kind")
    order = cfg.integer("order")
    mesh = cfg.get("mesh")
    if mesh == "plane":
        return build_plane_mesh(cfg.floats("extent", 4), cfg.num("h"), order, kind_name or QUAD)
    if mesh == "sphere":
        return build_sphere_mesh(cfg.num("radius"), cfg.num("h"), order, kind_name or TRI)
    return load_mesh(cfg.path("mesh"), order=order)


def solver_config(cfg: RunConfig) -> SolverConfig:
    scheme = cfg.get("scheme").lower()
    if scheme not in SCHEMES:
        raise ConfigError(f"scheme must be one of {SCHEMES}, got {scheme!r}")
    snaps = cfg.floats("snapshot_times")
    return SolverConfig(dt=cfg.num("dt"), t_final=cfg.num("t_final"), scheme=scheme,
                        flux=FluxParams(penalty=cfg.num("penalty")), solver=cfg.get("solver"),
                        snapshot_times=tuple(snaps) if snaps else (cfg.num("t_final"),))


def ap_params(cfg: RunConfig) -> ApParams:
    return ApParams(k=cfg.num("ap_k"), a=cfg.num("ap_a"), eps0=cfg.num("ap_eps0"),
                    mu1=cfg.num("ap_mu1"), mu2=cfg.num("ap_mu2"), uv_sign=cfg.num("ap_uv_sign"))


def load_fiber(path, mesh: SurfaceMesh, tol=None) -> np.ndarray:
    pts, vals = load_point_samples(path, columns=3)
    return map_to_nodes(pts, vals, mesh, tol)


def _frames_fields(frames: FrameField) -> dict:
    return {"e1": frames.e1, "e2": frames.e2, "flag": frames.flag.astype(float)}


def load_frames(path, mesh: SurfaceMesh) -> FrameField:
    cols = load_field(path, mesh)
    try:
        e1 = np.stack([cols["e1x"], cols["e1y"], cols["e1z"]], axis=-1)
        e2 = np.stack([cols["e2x"], cols["e2y"], cols["e2z"]], axis=-1)
        flag = cols["flag"].astype(np.int8)
    except KeyError as exc:
        raise MeshParseError(f"frame file {path} lacks column {exc}") from None
    return FrameField(e1, e2, mesh.normals, flag)


def _snapshot_name(t: float) -> str:
    return f"snapshot_t{t:08.3f}.csv"


# -- commands ----------------------------------------------------------------

def cmd_solve(config_path, overrides: dict | None = None) -> RunManifest:
    """Simulate, accumulate gradients, align frames and write everything.

    Output directory contents: ``mesh.mmf``, one ``snapshot_t*.csv`` per
    snapshot time (``u, v``), ``direction.csv`` (accumulated direction and
    weight), ``frames.csv`` and ``manifest.json``.  The final state is
    written as a snapshot even when ``t_final`` is not a snapshot time.
    """
    cfg = read_config(config_path, overrides)
    man = RunManifest("solve", config=dict(sorted(cfg.values.items())))
    man.inputs[str(config_path)] = file_sha1(config_path)
    out = cfg.path("output_dir")

    with _Stage(man, "mesh"):
        mesh = build_mesh(cfg)
        if cfg.get("mesh") not in ("plane", "sphere"):
            man.inputs[cfg.get("mesh")] = file_sha1(cfg.path("mesh"))
    with _Stage(man, "setup"):
        solver = solver_config(cfg)
        params = ap_params(cfg)
        mode, method = cfg.get("mode"), cfg.get("method")
        if mode not in (WF, WB):
            raise ConfigError(f"mode must be WF or WB, got {mode!r}")
        if method not in (STR, INT, WINT):
            raise ConfigError(f"method must be Str, Int or Wint, got {method!r}")
        policy = cfg.get("frames")
        frames0 = init_frames(mesh, policy, pole=cfg.floats("init_center", 3))
        d11 = cfg.num("d11")
        if d11 <= 0 or cfg.num("d22") <= 0:
            raise ConfigError("d11 and d22 must be positive")
        if cfg.get("fiber"):
            man.inputs[cfg.get("fiber")] = file_sha1(cfg.path("fiber"))
            fib = project_fiber(load_fiber(cfg.path("fiber"), mesh, cfg.optional("fiber_tolerance")),
                                mesh.normals)
            frames0, mag = fiber_to_frames(fib, frames0)
            d11 = d11 * mag
        if cfg.get("init") == "point":
            state = point_initialize(mesh, cfg.floats("init_center", 3), cfg.num("init_radius"),
                                     cfg.num("init_strength"), width=cfg.num("init_width"))
        elif cfg.get("init") == "wall":
            state = wall_initialize(mesh, cfg.integer("wall_axis"), cfg.num("wall_depth"),
                                    cfg.num("init_strength"), width=cfg.num("init_width"))
        else:
            raise ConfigError(f"init must be point or wall, got {cfg.get('init')!r}")
        align = AlignmentConfig(delta=cfg.optional("delta"), exclude_center=tuple(cfg.floats("exclude_center", 3)),
                                exclude_radius=cfg.num("exclude_radius"))
    with _Stage(man, "simulate+align"):
        res = simulate_and_align(mesh, state, frames0, d11=d11, d22=cfg.num("d22"), params=params,
                                 solver=solver, mode=mode, method=method,
                                 t_end=cfg.optional("align_until"), align=align,
                                 eps_rel=cfg.num("eps_g"))
    with _Stage(man, "write"):
        out.mkdir(parents=True, exist_ok=True)
        save_mesh(out / "mesh.mmf", mesh)
        man.mesh_hash = file_sha1(out / "mesh.mmf")
        man.add_output(out / "mesh.mmf")
        snaps = dict(res.result.snapshots)
        final = res.result.state
        # the final state is always written, so T_final = 0 yields the initial state
        if not any(abs(t - final.t) < solver.dt / 2 for t in snaps):
            snaps[final.t] = final
        for t, st in sorted(snaps.items()):
            p = out / _snapshot_name(t)
            save_field(p, mesh, {"u": st.u, "v": st.v})
            man.add_output(p)
        acc = res.accumulator
        save_field(out / "direction.csv", mesh, {"dir": acc.direction, "weight": acc.weight})
        man.add_output(out / "direction.csv")
        save_field(out / "frames.csv", mesh, _frames_fields(res.frames))
        man.add_output(out / "frames.csv")
    man.outputs["manifest.json"] = None
    man.write(out / "manifest.json")
    log.info("solve: %d steps, u in [%.3g, %.3g], output in %s", res.result.steps,
             *res.result.u_range, out)
    return man


def cmd_atlas(frames_path, mesh_path, out_dir, taus=(), order=None) -> RunManifest:
    """Connection, curvature, interface jumps and threshold masks."""
    man = RunManifest("atlas", config={"taus": list(taus)})
    out = Path(out_dir)
    with _Stage(man, "load"):
        mesh = load_mesh(mesh_path, order=order)
        frames = load_frames(frames_path, mesh)
        man.inputs = {str(frames_path): file_sha1(frames_path), str(mesh_path): file_sha1(mesh_path)}
        man.mesh_hash = man.inputs[str(mesh_path)]
    with _Stage(man, "connection"):
        conn, curv = curvature(frames, mesh)
    with _Stage(man, "write"):
        out.mkdir(parents=True, exist_ok=True)
        fields = {**conn.as_dict(), "R2121": curv.R2121, "R2121_approx": curv.R2121_approx,
                  "K": curv.K, "H": curv.H}
        save_field(out / "connection.csv", mesh, fields)
        man.add_output(out / "connection.csv")
        jump = interface_jump(np.nan_to_num(conn.w212), mesh)
        save_field(out / "jumps.csv", mesh, {"w212_jump": np.repeat(jump[:, None], mesh.n_nodes, 1)})
        man.add_output(out / "jumps.csv")
        for tau in taus:
            reg = curvature_threshold(curv.R2121, tau, mesh)
            p = out / f"mask_tau{tau:g}.csv"
            save_field(p, mesh, {"mask": reg.mask.astype(float), "region": reg.labels.astype(float)})
            man.add_output(p)
            log.info("tau=%g: %d region(s)", tau, reg.n_regions)
    man.outputs["manifest.json"] = None
    man.write(out / "manifest.json")
    return man


def cmd_convergence(family, hs, ps, mode=WB, method=WINT, sampled=False, r_ex=3.0,
                    half_width=20.0, wall_margin=5.0, dt=0.01, delta=None, jobs=1):
    return convergence_study(family, hs, ps, mode, method, sampled=sampled, r_ex=r_ex,
                             half_width=half_width, wall_margin=wall_margin, dt=dt,
                             delta=delta, jobs=jobs)


def cmd_fiber_match(frames_path, mesh_path, fiber_path, out_path, tol=None, order=None) -> float:
    """Write ``|cos|`` per node and return its area mean over aligned elements."""
    mesh = load_mesh(mesh_path, order=order)
    frames = load_frames(frames_path, mesh)
    fiber = load_fiber(fiber_path, mesh, tol)
    c = fiber_match(frames, fiber)
    save_field(out_path, mesh, {"abs_cos": c})
    return area_mean(c, mesh)


def cmd_fiber_atlas(fiber_path, mesh_path, out_path, tol=None, order=None) -> dict:
    """Maps of the fiber field itself: connection, curvature, div and curl."""
    mesh = load_mesh(mesh_path, order=order)
    raw = load_fiber(fiber_path, mesh, tol)
    fib = project_fiber(raw, mesh.normals)
    fallback = init_frames(mesh, "normal-complement")
    frames, d11 = fiber_to_frames(fib, fallback)
    conn, curv = curvature(frames, mesh)
    div = covariant_divergence(fib.f_proj, frames, conn, mesh)
    curl = covariant_curl_normal(fib.f_proj, frames, conn, mesh)
    fields = {"w211": conn.w211, "w212": conn.w212, "R2121": curv.R2121, "div": div,
              "curl": curl, "magnitude": fib.magnitude, "sin_theta": fib.sin_theta, "d11": d11}
    save_field(out_path, mesh, fields)
    return {k: area_mean(v, mesh) for k, v in fields.items()}


def cmd_mesh_gen(surface, h, order, out_path, extent=(-20, 20, -20, 20), radius=10.0, kind=None):
    if surface == "plane":
        mesh = build_plane_mesh(extent, h, order, kind or QUAD)
    elif surface == "sphere":
        mesh = build_sphere_mesh(radius, h, order, kind or TRI)
    else:
        raise ConfigError(f"surface must be plane or sphere, got {surface!r}")
    save_mesh(out_path, mesh)
    return mesh


# -- argument parsing --------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mmfatlas", description=__doc__.split("\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="simulate and align frames from a config file")
    s.add_argument("--config", required=True)
    s.add_argument("--output-dir")
    s.add_argument("--t-final", type=float)
    s.add_argument("--dt", type=float)
    s.add_argument("--h", type=float)
    s.add_argument("--order", type=int)
    s.add_argument("--mode", choices=[WF, WB])
    s.add_argument("--method", choices=[STR, INT, WINT])
    s.add_argument("--delta")

    a = sub.add_parser("atlas", help="connection and curvature maps of a frame file")
    a.add_argument("--run-dir", help="solve output directory (frames.csv, mesh.mmf)")
    a.add_argument("--frames")
    a.add_argument("--mesh")
    a.add_argument("--order", type=int)
    a.add_argument("--tau", type=float, nargs="*", default=[])
    a.add_argument("--out", required=True)

    c = sub.add_parser("convergence", help="errors and orders against analytic families")
    c.add_argument("--family", choices=["plane", "sphere"], default="plane")
    c.add_argument("--h", type=float, nargs="+", required=True)
    c.add_argument("--p", type=int, nargs="+", default=[4])
    c.add_argument("--mode", choices=[WF, WB], default=WB)
    c.add_argument("--method", choices=[STR, INT, WINT], default=WINT)
    c.add_argument("--sampled", action="store_true", help="measure exact frames, no simulation")
    c.add_argument("--r-ex", type=float, default=3.0)
    c.add_argument("--half-width", type=float, default=20.0)
    c.add_argument("--wall-margin", type=float, default=5.0)
    c.add_argument("--dt", type=float, default=0.01)
    c.add_argument("--delta", type=float)
    c.add_argument("--jobs", type=int, default=1)
    c.add_argument("--out")

    f = sub.add_parser("fiber-match", help="|cos| between frames and a fiber field")
    f.add_argument("--frames", required=True)
    f.add_argument("--mesh", required=True)
    f.add_argument("--fiber", required=True)
    f.add_argument("--order", type=int)
    f.add_argument("--tol", type=float)
    f.add_argument("--out", required=True)

    g = sub.add_parser("fiber-atlas", help="geometry of a fiber field")
    g.add_argument("--fiber", required=True)
    g.add_argument("--mesh", required=True)
    g.add_argument("--order", type=int)
    g.add_argument("--tol", type=float)
    g.add_argument("--out", required=True)

    m = sub.add_parser("mesh-gen", help="write a plane or sphere mesh")
    m.add_argument("--surface", choices=["plane", "sphere"], default="plane")
    m.add_argument("--h", type=float, required=True)
    m.add_argument("--order", type=int, default=4)
    m.add_argument("--extent", type=float, nargs=4, default=[-20, 20, -20, 20])
    m.add_argument("--radius", type=float, default=10.0)
    m.add_argument("--kind", choices=[TRI, QUAD])
    m.add_argument("--out", required=True)
    return ap


def _dispatch(args) -> int:
    if args.command == "solve":
        over = {"output_dir": args.output_dir, "t_final": args.t_final, "dt": args.dt, "h": args.h,
                "order": args.order, "mode": args.mode, "method": args.method, "delta": args.delta}
        man = cmd_solve(args.config, over)
        print(f"wrote {len(man.outputs)} files to {man.config['output_dir']}")
    elif args.command == "atlas":
        frames, mesh = args.frames, args.mesh
        if args.run_dir:
            frames = frames or str(Path(args.run_dir) / "frames.csv")
            mesh = mesh or str(Path(args.run_dir) / "mesh.mmf")
        if not frames or not mesh:
            raise ConfigError("atlas needs --run-dir or both --frames and --mesh")
        man = cmd_atlas(frames, mesh, args.out, args.tau, args.order)
        print(f"wrote {len(man.outputs)} files to {args.out}")
    elif args.command == "convergence":
        rep = cmd_convergence(args.family, args.h, args.p, args.mode, args.method, args.sampled,
                              args.r_ex, args.half_width, args.wall_margin, args.dt, args.delta,
                              args.jobs)
        text = rep.format()
        print(text)
        if args.out:
            Path(args.out).write_text(text + "\n")
    elif args.command == "fiber-match":
        mean = cmd_fiber_match(args.frames, args.mesh, args.fiber, args.out, args.tol, args.order)
        print(f"mean |cos| = {mean:.6f}")
    elif args.command == "fiber-atlas":
        means = cmd_fiber_atlas(args.fiber, args.mesh, args.out, args.tol, args.order)
        for k, v in means.items():
            print(f"mean {k} = {v:.6g}")
    elif args.command == "mesh-gen":
        mesh = cmd_mesh_gen(args.surface, args.h, args.order, args.out, args.extent, args.radius,
                            args.kind)
        print(f"{mesh.n_elements} {mesh.kind} elements, h = {mesh.h:.4g}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _dispatch(args)
    except (NumericalError, SolverError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (MMFError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
