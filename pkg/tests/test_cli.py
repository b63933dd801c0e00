import json
from pathlib import Path

import numpy as np
import pytest

from mmfatlas.cli import blob_sha1, build_parser, main
from mmfatlas.io import load_field, load_mesh

CONFIG = """[run]
mesh = plane
extent = -8 8 -8 8
h = 4.0
order = 3
dt = 0.05
t_final = 2.0
snapshot_times = 1 2
init = point
init_center = 0 0 0
mode = WF
method = Wint
ap_uv_sign = -1
output_dir = out
"""


@pytest.fixture
def config(tmp_path):
    p = tmp_path / "run.ini"
    p.write_text(CONFIG)
    return p


def _write_fiber(path, mesh, vec):
    pts = mesh.nodes.reshape(-1, 3)
    np.savetxt(path, np.hstack([pts, np.broadcast_to(vec, pts.shape)]), fmt="%.17g",
               delimiter=",", header="x,y,z,fx,fy,fz", comments="")


def test_blob_sha1_matches_git():
    # `printf 'hello\n' | git hash-object --stdin`
    assert blob_sha1(b"hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a"


def test_parser_requires_subcommand():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])


def test_mesh_gen(tmp_path, capsys):
    out = tmp_path / "m.mmf"
    assert main(["mesh-gen", "--surface", "sphere", "--h", "4", "--order", "2", "--out", str(out)]) == 0
    assert "tri elements" in capsys.readouterr().out
    assert load_mesh(out).n_elements > 0


def test_solve_writes_outputs_and_manifest(config, tmp_path):
    assert main(["solve", "--config", str(config)]) == 0
    out = tmp_path / "out"
    names = sorted(p.name for p in out.iterdir())
    assert names == ["direction.csv", "frames.csv", "manifest.json", "mesh.mmf",
                     "snapshot_t0001.000.csv", "snapshot_t0002.000.csv"]
    man = json.loads((out / "manifest.json").read_text())
    for key in ("command", "config", "mesh_hash", "inputs", "outputs", "timings", "version"):
        assert key in man
    assert man["config"]["t_final"] == "2.0"
    for name, sha in man["outputs"].items():
        if sha is not None:
            assert sha == blob_sha1(Path(name).read_bytes() if Path(name).is_absolute()
                                    else (out / name).read_bytes())
    mesh = load_mesh(out / "mesh.mmf")
    snap = load_field(out / "snapshot_t0002.000.csv", mesh)
    assert np.all(np.isfinite(snap["u"]))


def test_solve_is_deterministic(config, tmp_path):
    for d in ("a", "b"):
        assert main(["solve", "--config", str(config), "--output-dir", str(tmp_path / d)]) == 0
    for name in ("frames.csv", "snapshot_t0002.000.csv", "direction.csv", "mesh.mmf"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_zero_final_time_keeps_initial_state(config, tmp_path):
    assert main(["solve", "--config", str(config), "--t-final", "0"]) == 0
    snaps = sorted((tmp_path / "out").glob("snapshot_*.csv"))
    assert [p.name for p in snaps] == ["snapshot_t0000.000.csv"]


def test_atlas_fiber_match_and_fiber_atlas(config, tmp_path, capsys):
    assert main(["solve", "--config", str(config)]) == 0
    run = tmp_path / "out"
    assert main(["atlas", "--run-dir", str(run), "--tau", "0.5", "--out", str(tmp_path / "atlas")]) == 0
    mesh = load_mesh(run / "mesh.mmf")
    conn = load_field(tmp_path / "atlas" / "connection.csv", mesh)
    assert {"w211", "w212", "R2121", "K", "H"} <= set(conn)
    assert (tmp_path / "atlas" / "mask_tau0.5.csv").exists()

    fib = tmp_path / "fib.csv"
    _write_fiber(fib, mesh, [0.0, 2.0, 0.0])
    capsys.readouterr()
    assert main(["fiber-match", "--frames", str(run / "frames.csv"), "--mesh", str(run / "mesh.mmf"),
                 "--fiber", str(fib), "--out", str(tmp_path / "match.csv")]) == 0
    assert "mean |cos|" in capsys.readouterr().out
    assert main(["fiber-atlas", "--fiber", str(fib), "--mesh", str(run / "mesh.mmf"),
                 "--out", str(tmp_path / "fa.csv")]) == 0
    fa = load_field(tmp_path / "fa.csv", mesh)
    np.testing.assert_allclose(fa["d11"], 2.0)
    np.testing.assert_allclose(fa["div"], 0.0, atol=1e-10)


def test_convergence_sampled(capsys):
    assert main(["convergence", "--family", "plane", "--sampled", "--h", "4", "2",
                 "--half-width", "12", "--wall-margin", "0"]) == 0
    out = capsys.readouterr().out
    assert "order p=4 e1:" in out


def test_missing_config_exit_code(tmp_path, capsys):
    assert main(["solve", "--config", str(tmp_path / "nope.ini")]) == 2
    assert "config file not found" in capsys.readouterr().err


def test_unknown_key_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.ini"
    p.write_text(CONFIG + "colour = blue\n")
    assert main(["solve", "--config", str(p)]) == 2
    assert "colour" in capsys.readouterr().err


def test_broken_mesh_path_is_named(config, tmp_path, capsys):
    config.write_text(CONFIG.replace("mesh = plane", "mesh = missing.mmf"))
    assert main(["solve", "--config", str(config)]) == 2
    assert "missing.mmf" in capsys.readouterr().err


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_blowup_exit_code(config, tmp_path, capsys):
    config.write_text(CONFIG.replace("dt = 0.05", "dt = 50.0").replace("t_final = 2.0", "t_final = 500")
                      .replace("snapshot_times = 1 2", "snapshot_times =") + "ap_k = 1e8\n")
    assert main(["solve", "--config", str(config)]) == 3
    assert "non-finite" in capsys.readouterr().err
