"""Error norms against closed forms and observed convergence orders."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .mesh import SurfaceMesh


def quad_values(nodal: np.ndarray, mesh: SurfaceMesh) -> np.ndarray:
    nodal = np.asarray(nodal, dtype=float)
    return np.einsum("qj,ej...->eq...", mesh.ref.cub_interp, nodal)


def l2_error(nodal, exact_q, mesh: SurfaceMesh, include=None, radius_q=None, r_ex: float = 0.0,
             vector_sign: bool = False):
    """Area-normalised L2 error over included quadrature points.

    Parameters
    ----------
    nodal : computed field at the nodes, scalar (ne, Np) or vector (ne, Np, 3)
    exact_q : reference values at the quadrature points
    include : per-element boolean; elements with NaN values are always dropped
    radius_q : distance of each quadrature point from the excluded centre
    r_ex : points with ``radius_q < r_ex`` are dropped
    vector_sign : compare against ``+exact`` or ``-exact``, whichever is
        closer over the whole domain

    Returns
    -------
    (error, sign, included_area)
    """
    comp = quad_values(nodal, mesh)
    w = mesh.quad_weights.copy()
    keep = np.ones(mesh.n_elements, dtype=bool) if include is None else np.asarray(include, bool).copy()
    bad = ~np.isfinite(comp).reshape(mesh.n_elements, -1).all(axis=1)
    keep &= ~bad
    wq = np.where(keep[:, None], w, 0.0)
    if radius_q is not None:
        wq = np.where(radius_q >= r_ex, wq, 0.0)
    area = float(wq.sum())
    if area == 0:
        return math.nan, 1.0, 0.0
    comp = np.where(np.isfinite(comp), comp, 0.0)
    exact_q = np.where(wq.reshape(wq.shape + (1,) * (comp.ndim - 2)) > 0, exact_q, 0.0)

    def err(sign):
        d = comp - sign * exact_q
        sq = np.sum(d * d, axis=-1) if d.ndim == 3 else d * d
        return math.sqrt(float(np.sum(wq * sq)) / area)

    if vector_sign:
        ep, em = err(1.0), err(-1.0)
        return (ep, 1.0, area) if ep <= em else (em, -1.0, area)
    return err(1.0), 1.0, area


def observed_orders(errors, hs):
    """``log(e_i/e_{i+1}) / log(h_i/h_{i+1})`` for successive levels.

    Undefined pairs (equal ``h`` or non-positive errors) give ``None``.
    """
    if len(errors) != len(hs):
        raise InvalidInputError("errors and h lists differ in length")
    if len(hs) < 2:
        raise InvalidInputError("at least two mesh levels are needed to fit an order")
    out = []
    for i in range(len(hs) - 1):
        e0, e1, h0, h1 = errors[i], errors[i + 1], hs[i], hs[i + 1]
        if h0 == h1 or not (e0 > 0 and e1 > 0) or not all(map(math.isfinite, (e0, e1))):
            out.append(None)
        else:
            out.append(math.log(e0 / e1) / math.log(h0 / h1))
    return out


def fitted_order(errors, hs) -> float | None:
    """Least-squares slope of ``log e`` against ``log h``."""
    pts = [(math.log(h), math.log(e)) for e, h in zip(errors, hs)
           if e is not None and math.isfinite(e) and e > 0]
    xs = {p[0] for p in pts}
    if len(xs) < 2:
        return None
    x, y = np.array(pts).T
    return float(np.polyfit(x, y, 1)[0])


@dataclass
class ErrorReport:
    family: str
    r_ex: float
    rows: list = field(default_factory=list)   # dicts: h, p, n_elements, errors...
    quantities: tuple = ("e1", "w212", "R2121")
    note: str = ("L2 norms are absolute, over quadrature points of fully aligned elements "
                 "outside the exclusion radius, normalised by the included area")

    def orders(self, quantity: str, p: int | None = None):
        rows = [r for r in self.rows if p is None or r["p"] == p]
        return observed_orders([r[quantity] for r in rows], [r["h"] for r in rows])

    def format(self) -> str:
        lines = [f"# family={self.family} exclusion_radius={self.r_ex:g}", f"# {self.note}"]
        head = ["p", "h", "Ne"] + list(self.quantities) + ["aligned"]
        lines.append(" ".join(f"{c:>12s}" for c in head))
        for r in self.rows:
            vals = [f"{r['p']:>12d}", f"{r['h']:>12.4f}", f"{r['n_elements']:>12d}"]
            vals += [f"{r[q]:>12.4e}" for q in self.quantities]
            vals.append(f"{r.get('aligned', float('nan')):>12.3f}")
            lines.append(" ".join(vals))
        for p in sorted({r["p"] for r in self.rows}):
            rows = [r for r in self.rows if r["p"] == p]
            if len(rows) < 2:
                continue
            for q in self.quantities:
                ords = self.orders(q, p)
                txt = " ".join("undefined" if o is None else f"{o:.2f}" for o in ords)
                lines.append(f"order p={p} {q}: {txt}")
        return "\n".join(lines)
