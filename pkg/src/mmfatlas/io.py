"""Plain-text mesh and field files.

Mesh format (``MMFMESH 1``), whitespace separated, ``#`` starts a comment::

    MMFMESH 1
    ORDER <p>                      # optional, default 1
    SURFACE <plane|sphere|generic> [radius]   # optional
    VERTICES <nv>
    x y z                          # nv lines
    ELEMENTS <ne>
    <code> i0 i1 i2 [i3]           # ne lines, 0-based vertex indices
    NODES                          # optional: ne * Np lines "x y z"
    NORMALS                        # optional: ne * Np lines "nx ny nz"
    END

Element codes follow gmsh: 2 = 3-node triangle, 3 = 4-node quadrilateral.
All elements must share one code.  ``NODES`` stores the curved geometry at
the order-``p`` nodes; without it the elements are straight sided.  Without
``NORMALS`` normals come from the discrete geometry.

Field files are CSV with a header row ``x,y,z,<names...>`` and one row per
solution node, element by element.
"""
from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from .errors import InvalidInputError, MeshParseError
from .mesh import SurfaceMesh, discrete_normals
from .reference import QUAD, TRI, reference_element

ELEMENT_CODES = {2: TRI, 3: QUAD}
CODE_FOR_KIND = {TRI: 2, QUAD: 3}
_FMT = "%.17g"


def _fmt_rows(arr: np.ndarray) -> str:
    buf = io.StringIO()
    np.savetxt(buf, arr, fmt=_FMT)
    return buf.getvalue()


def save_mesh(path, mesh: SurfaceMesh) -> None:
    lines = ["MMFMESH 1", f"ORDER {mesh.order}"]
    if mesh.radius is not None:
        lines.append(f"SURFACE {mesh.surface} {mesh.radius!r}")
    else:
        lines.append(f"SURFACE {mesh.surface}")
    lines.append(f"VERTICES {len(mesh.vertices)}")
    text = "\n".join(lines) + "\n" + _fmt_rows(mesh.vertices)
    code = CODE_FOR_KIND[mesh.kind]
    elems = np.column_stack([np.full(mesh.n_elements, code), mesh.elements])
    buf = io.StringIO()
    np.savetxt(buf, elems, fmt="%d")
    text += f"ELEMENTS {mesh.n_elements}\n" + buf.getvalue()
    text += "NODES\n" + _fmt_rows(mesh.nodes.reshape(-1, 3))
    text += "NORMALS\n" + _fmt_rows(mesh.normals.reshape(-1, 3))
    text += "END\n"
    Path(path).write_text(text)


class _Lines:
    """Iterator over significant lines that remembers line numbers."""

    def __init__(self, text: str):
        self._lines = text.splitlines()
        self._i = 0
        self.lineno = 0

    def next(self, what: str) -> list[str]:
        while self._i < len(self._lines):
            raw = self._lines[self._i].split("#", 1)[0].strip()
            self._i += 1
            self.lineno = self._i
            if raw:
                return raw.split()
        raise MeshParseError(f"unexpected end of file while reading {what}", self.lineno + 1)

    def floats(self, n: int, what: str) -> np.ndarray:
        out = np.empty((n, 3))
        for r in range(n):
            tok = self.next(what)
            if len(tok) != 3:
                raise MeshParseError(f"expected 3 values in {what}, got {len(tok)}", self.lineno)
            try:
                out[r] = [float(t) for t in tok]
            except ValueError:
                raise MeshParseError(f"bad number in {what}: {' '.join(tok)}", self.lineno) from None
        return out


def _count(tok: list[str], key: str, lines: _Lines) -> int:
    if len(tok) != 2 or tok[0] != key:
        raise MeshParseError(f"expected '{key} <count>', got {' '.join(tok)!r}", lines.lineno)
    try:
        n = int(tok[1])
    except ValueError:
        raise MeshParseError(f"bad count {tok[1]!r}", lines.lineno) from None
    if n < 0:
        raise MeshParseError(f"negative count {n}", lines.lineno)
    return n


def parse_mesh(text: str) -> SurfaceMesh:
    lines = _Lines(text)
    tok = lines.next("header")
    if tok != ["MMFMESH", "1"]:
        raise MeshParseError(f"bad header {' '.join(tok)!r}, expected 'MMFMESH 1'", lines.lineno)
    order, surface, radius = 1, "generic", None
    tok = lines.next("VERTICES")
    while tok[0] in ("ORDER", "SURFACE"):
        try:
            if tok[0] == "ORDER":
                order = int(tok[1])
            else:
                surface = tok[1]
                radius = float(tok[2]) if len(tok) > 2 else None
        except (IndexError, ValueError):
            raise MeshParseError(f"malformed {tok[0]} line", lines.lineno) from None
        tok = lines.next("VERTICES")
    nv = _count(tok, "VERTICES", lines)
    vertices = lines.floats(nv, "VERTICES")

    ne = _count(lines.next("ELEMENTS"), "ELEMENTS", lines)
    elements = []
    kind = None
    for _ in range(ne):
        tok = lines.next("ELEMENTS")
        try:
            code = int(tok[0])
        except ValueError:
            raise MeshParseError(f"bad element type code {tok[0]!r}", lines.lineno) from None
        if code not in ELEMENT_CODES:
            raise MeshParseError(f"unknown element type code {code}", lines.lineno)
        if kind is None:
            kind = ELEMENT_CODES[code]
        elif ELEMENT_CODES[code] != kind:
            raise MeshParseError("mixed element types are not supported", lines.lineno)
        nvert = 3 if kind == TRI else 4
        if len(tok) != nvert + 1:
            raise MeshParseError(f"element code {code} needs {nvert} vertex indices", lines.lineno)
        try:
            idx = [int(t) for t in tok[1:]]
        except ValueError:
            raise MeshParseError("bad vertex index", lines.lineno) from None
        if min(idx) < 0 or max(idx) >= nv:
            raise MeshParseError(f"vertex index out of range in {idx}", lines.lineno)
        elements.append(idx)
    if ne == 0:
        raise MeshParseError("mesh has no elements", lines.lineno)
    elements = np.array(elements, dtype=np.int64)

    try:
        ref = reference_element(kind, order)
    except ValueError as exc:
        raise MeshParseError(str(exc)) from None
    nodes = normals = None
    while True:
        tok = lines.next("END")
        if tok == ["END"]:
            break
        if tok == ["NODES"]:
            nodes = lines.floats(ne * ref.n_nodes, "NODES").reshape(ne, ref.n_nodes, 3)
        elif tok == ["NORMALS"]:
            normals = lines.floats(ne * ref.n_nodes, "NORMALS").reshape(ne, ref.n_nodes, 3)
        else:
            raise MeshParseError(f"unexpected section {' '.join(tok)!r}", lines.lineno)

    if nodes is None:
        return SurfaceMesh.from_vertices(vertices, elements, order, normals=normals,
                                         surface=surface, radius=radius)
    if normals is None:
        normals = discrete_normals(nodes, ref)
    return SurfaceMesh(vertices, elements, order, nodes, normals, surface, radius)


def load_mesh(path, order: int | None = None) -> SurfaceMesh:
    """Read a mesh file; optionally resample to polynomial ``order``."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"mesh file not found: {path}")
    mesh = parse_mesh(path.read_text())
    if order is not None:
        mesh = mesh.with_order(order)
    return mesh


# -- CSV fields -------------------------------------------------------------

def _columns(field, name: str):
    field = np.asarray(field, dtype=float)
    if field.ndim == 2:
        return [name], field.reshape(-1, 1)
    if field.ndim == 3 and field.shape[-1] == 3:
        return [f"{name}x", f"{name}y", f"{name}z"], field.reshape(-1, 3)
    raise InvalidInputError(f"cannot write field of shape {field.shape}")


def save_field(path, mesh: SurfaceMesh, fields, name: str = "val") -> None:
    """Write one or more nodal fields as CSV.

    ``fields`` is a single scalar/vector array or a dict of name -> array.
    """
    if not isinstance(fields, dict):
        fields = {name: fields}
    header = ["x", "y", "z"]
    blocks = [mesh.nodes.reshape(-1, 3)]
    for key, arr in fields.items():
        arr = np.asarray(arr, dtype=float)
        if arr.shape[:2] != mesh.shape:
            raise InvalidInputError(f"field {key!r} shape {arr.shape} does not match mesh {mesh.shape}")
        cols, data = _columns(arr, key)
        header += cols
        blocks.append(data)
    table = np.hstack(blocks)
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    np.savetxt(buf, table, fmt=_FMT, delimiter=",")
    Path(path).write_text(buf.getvalue())


def read_csv(path) -> tuple[list[str], np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"file not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise MeshParseError("empty file", 1) from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise MeshParseError(f"expected {len(header)} columns, got {len(row)}", lineno)
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise MeshParseError("non-numeric value", lineno) from None
    return header, np.array(rows, dtype=float).reshape(-1, len(header))


def load_field(path, mesh: SurfaceMesh) -> dict[str, np.ndarray]:
    """Read a CSV written by :func:`save_field`; columns keyed by header name."""
    header, data = read_csv(path)
    n = mesh.n_elements * mesh.n_nodes
    if len(data) != n:
        raise MeshParseError(f"field has {len(data)} rows, mesh has {n} nodes")
    return {h: data[:, i].reshape(mesh.shape) for i, h in enumerate(header)}


def load_point_samples(path, columns: int = 3) -> tuple[np.ndarray, np.ndarray]:
    """Read ``x,y,z,<values>`` rows; returns (points, values)."""
    _, data = read_csv(path)
    if data.shape[1] != 3 + columns:
        raise MeshParseError(f"expected {3 + columns} columns, got {data.shape[1]}")
    return data[:, :3], data[:, 3:]


def map_to_nodes(points: np.ndarray, values: np.ndarray, mesh: SurfaceMesh,
                 tol: float | None = None) -> np.ndarray:
    """Nearest-sample mapping of scattered data onto the mesh nodes.

    Every node must have a sample within ``tol`` (default: the mesh ``h``).
    """
    from scipy.spatial import cKDTree

    tol = mesh.h if tol is None else tol
    dist, idx = cKDTree(points).query(mesh.nodes.reshape(-1, 3))
    if np.any(dist > tol):
        worst = int(np.argmax(dist))
        raise InvalidInputError(f"node {worst} is {dist[worst]:.3g} from the nearest sample "
                                f"(tolerance {tol:.3g})")
    return values[idx].reshape(mesh.shape + values.shape[1:])
