"""Orthonormal moving frames and their alignment to wave propagation.

A :class:`FrameField` stores ``(e1, e2, e3)`` at every solution node with
``e3`` the surface normal and ``e2 = e3 x e1``.  Alignment follows the
wave: gradients of ``u`` are accumulated over time where the sign of
``du/dt`` selects the wavefront (WF) or waveback (WB), the accumulated
direction becomes the new ``e1``, and the change is kept only where it
barely perturbs the discrete diffusion operator.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .mesh import SurfaceMesh

log = logging.getLogger(__name__)

UNALIGNED, ALIGNED, REJECTED = 0, 1, 2
FLAG_NAMES = {UNALIGNED: "unaligned", ALIGNED: "aligned", REJECTED: "rejected"}

WF, WB = "WF", "WB"
STR, INT, WINT = "Str", "Int", "Wint"


def _unit(v, tiny=0.0):
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    return np.divide(v, n, out=np.zeros_like(v), where=n > tiny)


@dataclass(frozen=True, eq=False)
class FrameField:
    e1: np.ndarray
    e2: np.ndarray
    e3: np.ndarray
    flag: np.ndarray

    @classmethod
    def from_e1(cls, e1, normals, flag=None) -> "FrameField":
        """Complete a tangent ``e1`` to a right-handed frame about ``normals``."""
        e3 = np.asarray(normals, dtype=float)
        e1 = np.asarray(e1, dtype=float)
        e1 = _unit(e1 - np.einsum("...c,...c->...", e1, e3)[..., None] * e3)
        e2 = np.cross(e3, e1)
        if flag is None:
            flag = np.full(e1.shape[:-1], UNALIGNED, dtype=np.int8)
        return cls(e1, e2, e3, np.asarray(flag, dtype=np.int8))

    def replace(self, **kw) -> "FrameField":
        data = {"e1": self.e1, "e2": self.e2, "e3": self.e3, "flag": self.flag}
        data.update(kw)
        return FrameField(**data)

    def orthonormality_error(self) -> float:
        e = np.stack([self.e1, self.e2, self.e3], axis=-2)
        gram = np.einsum("...ic,...jc->...ij", e, e)
        return float(np.abs(gram - np.eye(3)).max())

    def flipped(self) -> "FrameField":
        """Same frames with ``(e1, e2) -> (-e1, -e2)``; handedness kept."""
        return self.replace(e1=-self.e1, e2=-self.e2)

    def rotated(self, angle) -> "FrameField":
        """Rotate ``(e1, e2)`` by ``angle`` radians about ``e3``."""
        c = np.cos(angle)[..., None] if np.ndim(angle) else np.cos(angle)
        s = np.sin(angle)[..., None] if np.ndim(angle) else np.sin(angle)
        return self.replace(e1=c * self.e1 + s * self.e2, e2=-s * self.e1 + c * self.e2)


def init_frames(mesh: SurfaceMesh, policy: str = "fixed-axis", axis=(1.0, 0.0, 0.0),
                pole=(0.0, 0.0, 1.0)) -> FrameField:
    """Order-zero frames.

    ``fixed-axis`` projects ``axis`` onto each tangent plane; where the
    projection is degenerate the next Cartesian axis is used.
    ``normal-complement`` projects, at each node, the Cartesian axis least
    aligned with the normal.  ``stereographic`` (closed surfaces around the
    origin) follows the chart centred on ``pole``: smooth everywhere except
    the antipode, with ``e1 = axis`` at the pole.
    """
    k = mesh.normals
    if policy == "fixed-axis":
        axis = np.asarray(axis, dtype=float)
        if not np.linalg.norm(axis) > 0:
            raise InvalidInputError("axis must be nonzero")
        candidates = [axis / np.linalg.norm(axis)] + [np.eye(3)[i] for i in (1, 2, 0)]
        e1 = np.zeros_like(k)
        done = np.zeros(k.shape[:-1], dtype=bool)
        for cand in candidates:
            proj = cand - np.einsum("...c,c->...", k, cand)[..., None] * k
            ok = (np.linalg.norm(proj, axis=-1) > 1e-6) & ~done
            e1[ok] = proj[ok]
            done |= ok
    elif policy == "normal-complement":
        pick = np.argmin(np.abs(k), axis=-1)
        cand = np.eye(3)[pick]
        e1 = cand - np.einsum("...c,...c->...", k, cand)[..., None] * k
    elif policy == "stereographic":
        e1 = _stereographic_e1(mesh, pole, axis)
    else:
        raise InvalidInputError(f"unknown frame policy {policy!r}")
    return FrameField.from_e1(e1, k)


def _stereographic_e1(mesh: SurfaceMesh, pole, axis) -> np.ndarray:
    # coordinate direction d/du of the stereographic chart centred on `pole`;
    # smooth everywhere except the antipode, and equal to `axis` at the pole
    c = np.asarray(pole, dtype=float)
    if not np.linalg.norm(c) > 0:
        raise InvalidInputError("pole must be nonzero")
    c = c / np.linalg.norm(c)
    a = np.asarray(axis, dtype=float)
    a = a - (a @ c) * c
    if not np.linalg.norm(a) > 1e-12:
        raise InvalidInputError("axis must not be parallel to the pole")
    a = a / np.linalg.norm(a)
    b = np.cross(c, a)
    x = mesh.nodes / np.linalg.norm(mesh.nodes, axis=-1, keepdims=True)
    zc = np.maximum(1.0 + x @ c, 1e-300)
    u = (x @ a) / zc
    v = (x @ b) / zc
    return ((1 - u ** 2 + v ** 2)[..., None] * a - (2 * u * v)[..., None] * b
            - (2 * u)[..., None] * c)


# -- gradient accumulation -------------------------------------------------

@dataclass
class GradientAccumulator:
    """Per-node running summary of gradient directions.

    Parameters
    ----------
    shape : (n_elements, n_nodes)
    mode : ``"WF"`` (``du/dt > 0``, direction ``grad u``) or ``"WB"``
        (``du/dt < 0``, direction ``-grad u``)
    method : ``"Str"`` keeps the direction at the largest gradient seen,
        ``"Int"`` sums unit directions, ``"Wint"`` sums unit directions
        weighted by the gradient magnitude
    eps_rel : a gradient counts only if its magnitude exceeds
        ``eps_rel`` times the largest magnitude observed so far
    t_start, t_end : only steps with ``t_start <= t <= t_end`` count
    orientation : ``"gradient"`` uses the directions above; ``"propagation"``
        negates them so the result points the way the wave travels
    """

    shape: tuple
    mode: str = WB
    method: str = WINT
    eps_rel: float = 1e-4
    t_start: float = -np.inf
    t_end: float = np.inf
    orientation: str = "gradient"
    direction: np.ndarray = field(init=False)
    weight: np.ndarray = field(init=False)
    peak: np.ndarray = field(init=False)
    grad_max: float = field(init=False, default=0.0)
    steps: int = field(init=False, default=0)

    def __post_init__(self):
        if self.mode not in (WF, WB):
            raise InvalidInputError(f"mode must be WF or WB, got {self.mode!r}")
        if self.method not in (STR, INT, WINT):
            raise InvalidInputError(f"method must be Str, Int or Wint, got {self.method!r}")
        if self.orientation not in ("gradient", "propagation"):
            raise InvalidInputError(f"unknown orientation {self.orientation!r}")
        self.shape = tuple(self.shape)
        self.direction = np.zeros(self.shape + (3,))
        self.weight = np.zeros(self.shape)
        self.peak = np.zeros(self.shape)

    def __call__(self, t, u, du_dt, grad_u):
        if self.t_start <= t <= self.t_end:
            accumulate(self, u, du_dt, grad_u)


def accumulate(acc: GradientAccumulator, u, du_dt, grad_u) -> GradientAccumulator:
    """Fold one time step into ``acc`` (in place) and return it."""
    du_dt = np.asarray(du_dt, dtype=float)
    grad_u = np.asarray(grad_u, dtype=float)
    if du_dt.shape != acc.shape or grad_u.shape != acc.shape + (3,):
        raise InvalidInputError("field shapes do not match the accumulator")
    mag = np.linalg.norm(grad_u, axis=-1)
    acc.grad_max = max(acc.grad_max, float(mag.max(initial=0.0)))
    acc.steps += 1
    sel = du_dt > 0 if acc.mode == WF else du_dt < 0
    sel &= mag > acc.eps_rel * acc.grad_max
    if not np.any(sel):
        return acc
    sign = 1.0 if acc.mode == WF else -1.0
    if acc.orientation == "propagation":
        sign = -sign
    g = sign * grad_u
    if acc.method == STR:
        better = sel & (mag > acc.peak)
        acc.direction[better] = g[better] / mag[better, None]
        acc.weight[better] = 1.0
        acc.peak[better] = mag[better]
    else:
        if acc.method == INT:
            acc.direction[sel] += g[sel] / mag[sel, None]
            acc.weight[sel] += 1.0
        else:
            acc.direction[sel] += g[sel]
            acc.weight[sel] += mag[sel]
        acc.peak[sel] = np.maximum(acc.peak[sel], mag[sel])
    return acc


def finalize_direction(acc: GradientAccumulator, min_weight: float = 0.0):
    """Unit accumulated directions and the mask of nodes that have one."""
    norm = np.linalg.norm(acc.direction, axis=-1)
    ok = (acc.weight > min_weight) & (norm > 1e-300)
    out = np.zeros_like(acc.direction)
    out[ok] = acc.direction[ok] / norm[ok, None]
    return out, ok


# -- validity and alignment -------------------------------------------------

@dataclass
class AlignmentConfig:
    """Settings for :func:`align_frames`.

    delta : relative tolerance of the validity check, compared with
        ``delta * dt``; ``None`` skips the check
    exclude_center, exclude_radius : nodes within the ball stay unaligned
    d11, d22 : diffusivities of the operator used by the validity check
    """

    delta: float | None = 0.1
    dt: float = 0.01
    exclude_center: tuple | None = None
    exclude_radius: float = 0.0
    d11: float = 1.0
    d22: float = 1.0
    vacuous_rel: float = 1e-12
    max_passes: int = 3


@dataclass
class ValidityResult:
    passed: np.ndarray        # per node
    ratio: np.ndarray         # per element relative difference
    vacuous: np.ndarray       # per element: reference norm below threshold


def _element_l2(field, mesh):
    fq = np.einsum("qj,ej->eq", mesh.ref.cub_interp, field)
    return np.sqrt(np.einsum("eq,eq->e", mesh.quad_weights, fq ** 2))


def validity_check(frames_orig: FrameField, frames_new: FrameField, u, mesh: SurfaceMesh,
                   delta: float, dt: float, d11=1.0, d22=1.0, flux=None,
                   vacuous_rel: float = 1e-12) -> ValidityResult:
    """Compare ``L u`` under two frame fields, element by element.

    An element passes when ``||L_orig u - L_new u|| / ||L_orig u|| < delta*dt``
    in the element L2 norm.  Elements whose reference norm is below
    ``vacuous_rel`` times the largest element norm pass and are flagged in
    ``vacuous``.
    """
    from .pde import DiffusionOperator, make_dframes

    u = mesh.check_field(u)
    l_orig = DiffusionOperator(mesh, make_dframes(frames_orig, d11, d22), flux).apply(u)
    l_new = DiffusionOperator(mesh, make_dframes(frames_new, d11, d22), flux).apply(u)
    ref = _element_l2(l_orig, mesh)
    diff = _element_l2(l_orig - l_new, mesh)
    vacuous = ref <= vacuous_rel * max(float(ref.max()), 1e-300)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(vacuous, 0.0, diff / ref)
    ok = ratio < delta * dt
    if np.any(vacuous):
        log.info("validity check passed vacuously on %d element(s)", int(vacuous.sum()))
    return ValidityResult(np.broadcast_to(ok[:, None], mesh.shape).copy(), ratio, vacuous)


def align_frames(frames: FrameField, direction, mesh: SurfaceMesh, config: AlignmentConfig | None = None,
                 u=None) -> FrameField:
    """Rotate ``e1`` onto the tangential part of ``direction`` where valid.

    Nodes with a zero or normal-only direction, or inside the exclusion
    ball, keep their frames and flags.  Candidate frames are screened with
    :func:`validity_check` using the snapshot ``u``; elements that fail
    revert to the incoming frames bit for bit and their nodes are flagged
    ``REJECTED``.  Rejected nodes are never re-aligned, so repeated calls
    with the same inputs are idempotent.
    """
    cfg = config or AlignmentConfig()
    k = frames.e3
    direction = np.asarray(direction, dtype=float)
    if direction.shape != k.shape:
        raise InvalidInputError("direction field does not match the frame layout")
    tang = direction - np.einsum("...c,...c->...", direction, k)[..., None] * k
    tnorm = np.linalg.norm(tang, axis=-1)
    dnorm = np.linalg.norm(direction, axis=-1)
    cand = (dnorm > 0) & (tnorm > 1e-8 * np.maximum(dnorm, 1e-300)) & (frames.flag != REJECTED)
    if cfg.exclude_center is not None and cfg.exclude_radius > 0:
        c = np.zeros(3)
        ec = np.ravel(cfg.exclude_center)
        c[:len(ec)] = ec
        cand &= np.linalg.norm(mesh.nodes - c, axis=-1) >= cfg.exclude_radius

    e1 = frames.e1.copy()
    e2 = frames.e2.copy()
    e1_new = np.zeros_like(tang)
    e1_new[cand] = tang[cand] / tnorm[cand, None]
    e1[cand] = e1_new[cand]
    e2[cand] = np.cross(k[cand], e1_new[cand])
    flag = frames.flag.copy()
    flag[cand] = ALIGNED
    new = FrameField(e1, e2, frames.e3, flag)
    if cfg.delta is None or u is None or not np.any(cand):
        return new

    failed = np.zeros(mesh.n_elements, dtype=bool)
    for _ in range(max(1, cfg.max_passes)):
        res = validity_check(frames, new, u, mesh, cfg.delta, cfg.dt, cfg.d11, cfg.d22,
                             vacuous_rel=cfg.vacuous_rel)
        bad = ~res.passed[:, 0] & ~failed & cand.any(axis=1)
        if not np.any(bad):
            break
        failed |= bad
        e1[bad] = frames.e1[bad]
        e2[bad] = frames.e2[bad]
        flag[bad] = np.where(cand[bad], REJECTED, frames.flag[bad])
        new = FrameField(e1, e2, frames.e3, flag)
    return new


def aligned_fraction(frames: FrameField, mesh: SurfaceMesh) -> float:
    """Area fraction of nodes flagged aligned (quadrature weighted)."""
    ind = (frames.flag == ALIGNED).astype(float)
    fq = np.einsum("qj,ej->eq", mesh.ref.cub_interp, ind)
    return float(np.sum(mesh.quad_weights * fq) / mesh.area)
