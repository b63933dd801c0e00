import numpy as np
import pytest

from mmfatlas.errors import InvalidInputError, MeshParseError
from mmfatlas.io import (load_field, load_mesh, load_point_samples, map_to_nodes, parse_mesh,
                         save_field, save_mesh)
from mmfatlas.mesh import build_plane_mesh

SQUARE = """MMFMESH 1
ORDER 2
# two triangles
VERTICES 4
0 0 0
1 0 0
1 1 0
0 1 0
ELEMENTS 2
2 0 1 2
2 0 2 3
END
"""


def test_parse_minimal_mesh():
    m = parse_mesh(SQUARE)
    assert m.n_elements == 2 and m.order == 2 and m.kind == "tri"
    assert m.area == pytest.approx(1.0)


@pytest.mark.parametrize("text, line", [
    (SQUARE.replace("MMFMESH 1", "MESH 1"), 1),
    (SQUARE.replace("2 0 2 3", "7 0 2 3"), 11),
    (SQUARE.replace("2 0 2 3", "3 0 2 3 1"), 11),
    (SQUARE.replace("2 0 2 3", "2 0 2 9"), 11),
    (SQUARE.replace("1 1 0\n", "1 x 0\n"), 7),
])
def test_parse_errors_carry_line(text, line):
    with pytest.raises(MeshParseError) as err:
        parse_mesh(text)
    assert err.value.line == line
    assert f"line {line}" in str(err.value)


def test_truncated_file():
    with pytest.raises(MeshParseError, match="unexpected end"):
        parse_mesh(SQUARE.split("ELEMENTS")[0])


def test_missing_file_names_path(tmp_path):
    p = tmp_path / "nope.mmf"
    with pytest.raises(FileNotFoundError, match="nope.mmf"):
        load_mesh(p)


@pytest.mark.parametrize("kind", ["tri", "quad"])
def test_mesh_roundtrip_exact(tmp_path, kind, sphere):
    for m in (build_plane_mesh((0, 2, 0, 1), 0.6, 3, kind=kind), sphere):
        p = tmp_path / "m.mmf"
        save_mesh(p, m)
        m2 = load_mesh(p)
        assert np.array_equal(m2.nodes, m.nodes)
        assert np.array_equal(m2.normals, m.normals)
        assert np.array_equal(m2.elements, m.elements)
        assert m2.surface == m.surface and m2.radius == m.radius


def test_load_mesh_with_order(tmp_path, sphere):
    p = tmp_path / "s.mmf"
    save_mesh(p, sphere)
    m = load_mesh(p, order=2)
    assert m.order == 2
    assert m.area == pytest.approx(4 * np.pi, rel=1e-3)


def test_field_roundtrip(tmp_path, plane_quad, rng):
    s = rng.standard_normal(plane_quad.shape)
    v = rng.standard_normal(plane_quad.shape + (3,))
    p = tmp_path / "f.csv"
    save_field(p, plane_quad, {"u": s, "g": v})
    cols = load_field(p, plane_quad)
    assert list(cols) == ["x", "y", "z", "u", "gx", "gy", "gz"]
    assert np.array_equal(cols["u"], s)
    assert np.array_equal(cols["gy"], v[..., 1])


def test_field_shape_mismatch(tmp_path, plane_quad):
    with pytest.raises(InvalidInputError):
        save_field(tmp_path / "f.csv", plane_quad, np.zeros((3, 3)))


def test_point_samples_and_mapping(tmp_path, plane_quad):
    pts = plane_quad.nodes.reshape(-1, 3)
    vals = np.column_stack([pts[:, 0], -pts[:, 1], np.ones(len(pts))])
    p = tmp_path / "fib.csv"
    np.savetxt(p, np.hstack([pts, vals]), fmt="%.17g", delimiter=",", header="x,y,z,fx,fy,fz",
               comments="")
    P, V = load_point_samples(p)
    mapped = map_to_nodes(P, V, plane_quad)
    np.testing.assert_array_equal(mapped[..., 0], plane_quad.nodes[..., 0])


def test_mapping_rejects_far_samples(plane_quad):
    with pytest.raises(InvalidInputError, match="tolerance"):
        map_to_nodes(np.array([[100.0, 0, 0]]), np.array([[1.0]]), plane_quad)
