"""Anisotropic diffusion-reaction on surfaces with frame-based mixed DG.

The diffusion tensor is expressed with two tangent vectors
``d1 = d11 * e1`` and ``d2 = d22 * e2`` so that ``D grad u = q1 d1 + q2 d2``
with ``q_m = e_m . grad u``.  Spatial discretisation is a local DG mixed
form:

1. ``(d_mm q_m, phi) = (d_m . grad u, phi)`` plus an interface jump term,
   with the trace ``u~`` taken from the owner side of each edge;
2. ``(u_t, phi) = -(sum_m q_m d_m, grad phi) + <sigma_n, phi>`` with the
   normal flux taken from the other side plus an interior penalty.

The interface flux is single valued, so ``integral(u)`` is conserved to
round-off under no-flux walls.

Time stepping is IMEX: diffusion implicit, Aliev-Panfilov kinetics
explicit.  Available schemes: ``sbdf1``, ``sbdf2``, ``sbdf3``, ``cnab2``.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InvalidInputError, NumericalError, SolverError
from .mesh import SurfaceMesh, differentiate

log = logging.getLogger(__name__)


# -- diffusion frames --------------------------------------------------------

@dataclass(frozen=True)
class DFrames:
    """Scaled orthogonal tangent vectors ``d1 = d11 e1``, ``d2 = d22 e2``."""

    d1: np.ndarray
    d2: np.ndarray

    @property
    def d11(self) -> np.ndarray:
        return np.linalg.norm(self.d1, axis=-1)

    @property
    def d22(self) -> np.ndarray:
        return np.linalg.norm(self.d2, axis=-1)


def make_dframes(frames, d11=1.0, d22=1.0) -> DFrames:
    """Scale the first two frame vectors by pointwise diffusivities."""
    d11 = np.asarray(d11, dtype=float)
    d22 = np.asarray(d22, dtype=float)
    if np.any(~(d11 > 0)) or np.any(~(d22 > 0)):
        raise InvalidInputError("diffusivities d11 and d22 must be positive")
    d11 = np.broadcast_to(d11, frames.e1.shape[:2])
    d22 = np.broadcast_to(d22, frames.e2.shape[:2])
    return DFrames(d1=frames.e1 * d11[..., None], d2=frames.e2 * d22[..., None])


# -- spatial operator --------------------------------------------------------

@dataclass(frozen=True)
class FluxParams:
    """Interface flux settings.

    penalty : scale of the interior penalty ``tau = penalty * d_max / h``
    form : ``"strong"`` or ``"weak"`` treatment of the first (gradient)
        equation.  Both are algebraically equal with exact quadrature on
        flat elements; ``strong`` annihilates constants exactly on curved
        elements too.
    """

    penalty: float = 1.0
    form: str = "strong"


def _blocks_to_csr(rows, cols, blocks, n_el: int, npe: int) -> sp.csr_matrix:
    rows = np.asarray(rows)
    cols = np.asarray(cols)
    blocks = np.asarray(blocks)
    nb = len(rows)
    li, lj = np.meshgrid(np.arange(npe), np.arange(blocks.shape[2]), indexing="ij")
    r = (rows[:, None, None] * npe + li[None]).ravel()
    c = (cols[:, None, None] * blocks.shape[2] + lj[None]).ravel()
    mat = sp.coo_matrix((blocks.reshape(nb, -1).ravel(), (r, c)),
                        shape=(n_el * npe, n_el * blocks.shape[2]))
    return mat.tocsr()


class DiffusionOperator:
    """Assembled mass ``M`` and stiffness ``S`` with ``L u = M^-1 S u``.

    ``S`` discretises ``div(D grad u)`` in weak form with no-flux walls.
    """

    def __init__(self, mesh: SurfaceMesh, dframes: DFrames, flux: FluxParams | None = None):
        self.mesh = mesh
        self.dframes = dframes
        self.flux = flux or FluxParams()
        if self.flux.form not in ("strong", "weak"):
            raise InvalidInputError(f"unknown flux form {self.flux.form!r}")
        ne, npe = mesh.shape
        self.n = ne * npe
        mass = mesh.mass_blocks
        try:
            self._mass_inv = np.linalg.inv(mass)
        except np.linalg.LinAlgError:
            from .errors import ConfigError
            raise ConfigError("singular element mass matrix") from None
        diag = np.arange(ne)
        self.M = _blocks_to_csr(diag, diag, mass, ne, npe)
        self.S = self._assemble()

    def _assemble(self) -> sp.csr_matrix:
        mesh = self.mesh
        ref = mesh.ref
        ne, npe = mesh.shape
        faces = mesh.faces
        iq = ref.cub_interp
        w = mesh.quad_weights
        cub = mesh.cubature
        nbr, nbf = faces.neighbor, faces.neighbor_face
        nfaces = ref.n_faces
        fint = ref.face_interp                       # (nf, nq, np)
        frev = fint[:, ::-1, :]

        # shared face weights: owner's, reversed onto the other side
        shared_w = faces.weights.copy()
        e_idx, f_idx = np.nonzero((nbr >= 0) & (nbr < np.arange(ne)[:, None]))
        shared_w[e_idx, f_idx] = faces.weights[nbr[e_idx, f_idx], nbf[e_idx, f_idx]][:, ::-1]

        interior = nbr >= 0
        owner = interior & (np.arange(ne)[:, None] < nbr)
        other = interior & ~owner
        # penalty per face
        d_abs = np.maximum(self.dframes.d11, self.dframes.d22).max(axis=1)
        h_el = mesh.element_h

        rows, cols, blocks = [], [], []
        diag = np.arange(ne)
        c_ops = []
        for dm in (self.dframes.d1, self.dframes.d2):
            dq = np.einsum("qj,ejc->eqc", iq, dm)
            dmm_q = np.einsum("qj,ej->eq", iq, np.linalg.norm(dm, axis=-1))
            a_op = (np.einsum("eqc,eqc->eq", dq, cub.grad_r)[..., None] * ref.cub_dr[None]
                    + np.einsum("eqc,eqc->eq", dq, cub.grad_s)[..., None] * ref.cub_ds[None])
            mdm = np.einsum("qi,eq,qj->eij", iq, w * dmm_q, iq)
            mdm_inv = np.linalg.inv(mdm)
            # n . d_m at face points, per side
            dface = np.einsum("fqj,ejc->efqc", fint, dm)
            nd = np.einsum("efqc,efqc->efq", faces.conormal, dface)

            # first equation: B_m
            b_rows, b_cols, b_blk = [diag], [diag], []
            if self.flux.form == "strong":
                vol = np.einsum("qi,eq,eqj->eij", iq, w, a_op)
                for f in range(nfaces):
                    sel = other[:, f]
                    wn = faces.weights[:, f] * nd[:, f]
                    # -u_e part on the non-owner side
                    corr = np.einsum("qi,eq,qj->eij", fint[f], wn, fint[f])
                    vol = vol - corr * sel[:, None, None]
                b_blk.append(vol)
                for f in range(nfaces):
                    es = np.nonzero(other[:, f])[0]
                    if len(es) == 0:
                        continue
                    wn = faces.weights[es, f] * nd[es, f]
                    nb_face = nbf[es, f]
                    blk = np.einsum("qi,eq,eqj->eij", fint[f], wn, frev[nb_face])
                    b_rows.append(es)
                    b_cols.append(nbr[es, f])
                    b_blk.append(blk)
            else:
                ddiv = np.trace(differentiate(dm, mesh), axis1=-2, axis2=-1)
                div_q = np.einsum("qj,ej->eq", iq, ddiv)
                vol = (-np.einsum("eqi,eq,qj->eij", a_op, w, iq)
                       - np.einsum("qi,eq,qj->eij", iq, w * div_q, iq))
                for f in range(nfaces):
                    sel = ~other[:, f]
                    wn = faces.weights[:, f] * nd[:, f]
                    vol = vol + np.einsum("qi,eq,qj->eij", fint[f], wn, fint[f]) * sel[:, None, None]
                b_blk.append(vol)
                for f in range(nfaces):
                    es = np.nonzero(other[:, f])[0]
                    if len(es) == 0:
                        continue
                    wn = faces.weights[es, f] * nd[es, f]
                    blk = np.einsum("qi,eq,eqj->eij", fint[f], wn, frev[nbf[es, f]])
                    b_rows.append(es)
                    b_cols.append(nbr[es, f])
                    b_blk.append(blk)
            bmat = _blocks_to_csr(np.concatenate(b_rows), np.concatenate(b_cols),
                                  np.concatenate(b_blk), ne, npe)

            # second equation acting on q_m: C_m
            c_vol = -np.einsum("eqi,eq,qj->eij", a_op, w, iq)
            c_rows, c_cols, c_blk = [diag], [diag], []
            for f in range(nfaces):
                sel = other[:, f]
                wn = shared_w[:, f] * nd[:, f]
                c_vol = c_vol + np.einsum("qi,eq,qj->eij", fint[f], wn, fint[f]) * sel[:, None, None]
            c_blk.append(c_vol)
            for f in range(nfaces):
                es = np.nonzero(owner[:, f])[0]
                if len(es) == 0:
                    continue
                nb, nf_ = nbr[es, f], nbf[es, f]
                wn = -shared_w[es, f] * nd[nb, nf_][:, ::-1]
                blk = np.einsum("qi,eq,eqj->eij", fint[f], wn, frev[nf_])
                c_rows.append(es)
                c_cols.append(nb)
                c_blk.append(blk)
            cmat = _blocks_to_csr(np.concatenate(c_rows), np.concatenate(c_cols),
                                  np.concatenate(c_blk), ne, npe)
            minv = _blocks_to_csr(diag, diag, mdm_inv, ne, npe)
            c_ops.append(cmat @ (minv @ bmat))

        # interior penalty, symmetric
        p_rows, p_cols, p_blk = [], [], []
        for f in range(nfaces):
            es = np.nonzero(interior[:, f])[0]
            if len(es) == 0:
                continue
            nb = nbr[es, f]
            tau = (self.flux.penalty * np.maximum(d_abs[es], d_abs[nb])
                   / np.minimum(h_el[es], h_el[nb]))
            wt = shared_w[es, f] * tau[:, None]
            p_rows += [es, es]
            p_cols += [es, nb]
            p_blk += [-np.einsum("qi,eq,qj->eij", fint[f], wt, fint[f]),
                      np.einsum("qi,eq,eqj->eij", fint[f], wt, frev[nbf[es, f]])]
        stiff = c_ops[0] + c_ops[1]
        if p_rows:
            stiff = stiff + _blocks_to_csr(np.concatenate(p_rows), np.concatenate(p_cols),
                                           np.concatenate(p_blk), ne, npe)
        stiff = stiff.tocsr()
        stiff.eliminate_zeros()
        return stiff

    def mass_solve(self, rhs: np.ndarray) -> np.ndarray:
        ne, npe = self.mesh.shape
        return np.einsum("eij,ej->ei", self._mass_inv, rhs.reshape(ne, npe))

    def apply(self, u: np.ndarray) -> np.ndarray:
        """``L u`` as a nodal field."""
        return self.mass_solve(self.S @ np.asarray(u, float).ravel())

    def mass_apply(self, u: np.ndarray) -> np.ndarray:
        return self.M @ np.asarray(u, float).ravel()


def mmf_laplacian(u, dframes: DFrames, mesh: SurfaceMesh, flux: FluxParams | None = None) -> np.ndarray:
    """Discrete ``div(D grad u)`` at the nodes, no-flux walls."""
    u = mesh.check_field(u)
    return DiffusionOperator(mesh, dframes, flux).apply(u)


# -- kinetics ----------------------------------------------------------------

@dataclass(frozen=True)
class ApParams:
    """Aliev-Panfilov constants.

    ``uv_sign`` multiplies the ``u v`` coupling in the potential equation.
    ``+1`` reproduces the formula ``-k u (u - a)(u - 1) + u v`` literally;
    the classical model uses ``-1``, which is what lets the pulse recover.
    """

    k: float = 8.0
    a: float = 0.15
    eps0: float = 0.002
    mu1: float = 0.2
    mu2: float = 0.3
    uv_sign: float = 1.0

    def __post_init__(self):
        if not self.k > 0:
            raise InvalidInputError("k must be positive")
        if not 0 < self.a < 1:
            raise InvalidInputError("a must lie in (0, 1)")
        if not self.eps0 > 0:
            raise InvalidInputError("eps0 must be positive")
        if self.uv_sign not in (1, -1, 1.0, -1.0):
            raise InvalidInputError("uv_sign must be +1 or -1")


_DEN_FLOOR = np.finfo(float).eps


def ap_reaction(u, v, params: ApParams | None = None):
    """Right-hand sides ``(du/dt, dv/dt)`` of the kinetics."""
    p = params or ApParams()
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    du = -p.k * u * (u - p.a) * (u - 1.0) + p.uv_sign * u * v
    den = u + p.mu2
    small = np.abs(den) < _DEN_FLOOR
    if np.any(small):
        log.warning("u + mu2 hit zero at %d point(s); denominator floored", int(np.sum(small)))
        den = np.where(small, np.where(den < 0, -_DEN_FLOOR, _DEN_FLOOR), den)
    dv = (p.eps0 + p.mu1 * v / den) * (-v - p.k * u * (u - p.a - 1.0))
    return du, dv


# -- state and initial conditions ------------------------------------------

@dataclass
class ApState:
    u: np.ndarray
    v: np.ndarray
    t: float = 0.0

    def copy(self) -> "ApState":
        return ApState(self.u.copy(), self.v.copy(), self.t)


def _taper(dist: np.ndarray, radius: float, width: float) -> np.ndarray:
    lo = max(0.0, radius - width / 2)
    hi = radius + width / 2
    s = np.clip((dist - lo) / (hi - lo), 0.0, 1.0)
    return 0.5 * (1.0 + np.cos(np.pi * s))


def point_initialize(mesh: SurfaceMesh, center, radius: float = 1.0, strength: float = 1.0,
                     width: float | None = None, tol: float | None = None) -> ApState:
    """Excite a ball of Euclidean ``radius`` around ``center``.

    The edge is a cosine taper over ``width`` (default one element, the
    mesh ``h``) centred on ``radius``.  ``v`` starts at zero.
    """
    if not radius > 0:
        raise InvalidInputError(f"radius must be positive, got {radius}")
    c = np.asarray(center, dtype=float).ravel()
    center = np.zeros(3)
    center[:len(c)] = c
    tol = mesh.h if tol is None else tol
    dist = np.linalg.norm(mesh.nodes - center, axis=-1)
    if dist.min() > tol:
        raise InvalidInputError(f"center {center.tolist()} is {dist.min():.3g} from the surface "
                                f"(tolerance {tol:.3g})")
    width = mesh.h if width is None else float(width)
    u = strength * _taper(dist, radius, width)
    return ApState(u=u, v=np.zeros_like(u))


def wall_initialize(mesh: SurfaceMesh, axis: int = 0, depth: float = 1.0, strength: float = 1.0,
                    width: float | None = None) -> ApState:
    """Excite the strip within ``depth`` of the low wall along ``axis``."""
    x = mesh.nodes[..., axis]
    dist = x - x.min()
    width = mesh.h if width is None else float(width)
    u = strength * _taper(dist, depth, width)
    return ApState(u=u, v=np.zeros_like(u))


# -- time stepping -----------------------------------------------------------

# implicit coefficient gamma, history weights on u, extrapolation weights on f
_SBDF = {
    1: (1.0, (1.0,), (1.0,)),
    2: (1.5, (2.0, -0.5), (2.0, -1.0)),
    3: (11.0 / 6.0, (3.0, -1.5, 1.0 / 3.0), (3.0, -3.0, 1.0)),
}
SCHEMES = ("sbdf1", "sbdf2", "sbdf3", "cnab2")


@dataclass
class SolverConfig:
    """Time integration and linear solver settings.

    solver : ``"direct"`` (sparse LU, factored once) or ``"iterative"``
        (BiCGSTAB with element block-Jacobi preconditioning)
    """

    dt: float = 0.01
    t_final: float = 0.0
    scheme: str = "sbdf2"
    flux: FluxParams = field(default_factory=FluxParams)
    solver: str = "direct"
    rtol: float = 1e-12
    snapshot_times: Sequence[float] = ()
    reaction: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise InvalidInputError("dt must be positive")
        if self.t_final < 0:
            raise InvalidInputError("t_final must be non-negative")
        if self.scheme not in SCHEMES:
            raise InvalidInputError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if self.solver not in ("direct", "iterative"):
            raise InvalidInputError(f"unknown solver {self.solver!r}")


class _Helmholtz:
    """Solves ``(gamma M - c S) x = b`` for a fixed ``gamma``, ``c``."""

    def __init__(self, op: DiffusionOperator, gamma: float, c: float, cfg: SolverConfig):
        self.mat = (gamma * op.M - c * op.S).tocsc()
        self.cfg = cfg
        if cfg.solver == "direct":
            self._lu = spla.splu(self.mat)
        else:
            ne, npe = op.mesh.shape
            dense = np.stack([self.mat[e * npe:(e + 1) * npe, e * npe:(e + 1) * npe].toarray()
                              for e in range(ne)])
            inv = np.linalg.inv(dense)
            self._prec = spla.LinearOperator(
                self.mat.shape, matvec=lambda x: np.einsum("eij,ej->ei", inv, x.reshape(ne, npe)).ravel())

    def solve(self, b: np.ndarray, x0: np.ndarray | None = None) -> np.ndarray:
        if self.cfg.solver == "direct":
            x = self._lu.solve(b)
        else:
            x, info = spla.bicgstab(self.mat, b, x0=x0, rtol=self.cfg.rtol, atol=0.0,
                                    M=self._prec, maxiter=1000)
            if info != 0:
                res = np.linalg.norm(self.mat @ x - b) / max(np.linalg.norm(b), 1e-300)
                raise SolverError("iterative Helmholtz solve did not converge", res)
        return x


Hook = Callable[[float, np.ndarray, np.ndarray, np.ndarray], None]


@dataclass
class RunResult:
    state: ApState
    snapshots: dict = field(default_factory=dict)
    steps: int = 0
    wall_time: float = 0.0
    u_range: tuple = (0.0, 0.0)


def run(mesh: SurfaceMesh, state: ApState, dframes: DFrames, params: ApParams | None = None,
        config: SolverConfig | None = None, hooks: Sequence[Hook] = (),
        operator: DiffusionOperator | None = None) -> RunResult:
    """Advance ``state`` to ``config.t_final``.

    Each hook is called after every step as ``hook(t, u, du_dt, grad_u)``
    where ``du_dt`` is the backward difference of successive steps and
    ``grad_u`` the tangential gradient.
    """
    params = params or ApParams()
    cfg = config or SolverConfig()
    op = operator or DiffusionOperator(mesh, dframes, cfg.flux)
    t0 = time.perf_counter()
    state = state.copy()
    nsteps = int(round(cfg.t_final / cfg.dt))
    snap_steps = {int(round(t / cfg.dt)): t for t in cfg.snapshot_times}
    snapshots = {}
    if 0 in snap_steps:
        snapshots[snap_steps[0]] = state.copy()
    u_lo, u_hi = float(state.u.min()), float(state.u.max())
    if nsteps == 0:
        return RunResult(state, snapshots, 0, time.perf_counter() - t0, (u_lo, u_hi))

    dt = cfg.dt
    shape = mesh.shape
    solvers: dict = {}

    def solver(order):
        if order not in solvers:
            if cfg.scheme == "cnab2" and order == 2:
                solvers[order] = _Helmholtz(op, 1.0, dt / 2, cfg)
            else:
                solvers[order] = _Helmholtz(op, _SBDF[order][0], dt, cfg)
        return solvers[order]

    def kinetics(u, v):
        if not cfg.reaction:
            return np.zeros_like(u), np.zeros_like(v)
        return ap_reaction(u, v, params)

    def euler(u, v, fu, gv, h, slv):
        return slv.solve(op.M @ (u + h * fu), x0=u), v + h * gv

    def startup(u, v, fu, gv):
        # Richardson-extrapolated IMEX Euler: second-order first step, so the
        # third-order scheme keeps its order
        u_full, v_full = euler(u, v, fu, gv, dt, solver(1))
        if "half" not in solvers:
            solvers["half"] = _Helmholtz(op, 1.0, dt / 2, cfg)
        u_h, v_h = euler(u, v, fu, gv, dt / 2, solvers["half"])
        f2, g2 = kinetics(u_h.reshape(shape), v_h.reshape(shape))
        u_h, v_h = euler(u_h, v_h, f2.ravel(), g2.ravel(), dt / 2, solvers["half"])
        return 2 * u_h - u_full, 2 * v_h - v_full

    max_order = {"sbdf1": 1, "sbdf2": 2, "sbdf3": 3, "cnab2": 2}[cfg.scheme]
    u_hist = [state.u.ravel()]
    v_hist = [state.v.ravel()]
    f_hist, g_hist = [], []
    last_good = state.t
    for n in range(nsteps):
        fu, gv = kinetics(u_hist[0].reshape(shape), v_hist[0].reshape(shape))
        f_hist.insert(0, fu.ravel())
        g_hist.insert(0, gv.ravel())
        order = min(max_order, len(u_hist))
        if max_order == 3 and n == 0:
            u_new, v_new = startup(u_hist[0], v_hist[0], fu.ravel(), gv.ravel())
        elif cfg.scheme == "cnab2" and order == 2:
            rhs = op.M @ (u_hist[0] + dt * (1.5 * f_hist[0] - 0.5 * f_hist[1])) + (dt / 2) * (op.S @ u_hist[0])
            v_new = v_hist[0] + dt * (1.5 * g_hist[0] - 0.5 * g_hist[1])
        else:
            gamma, a_u, b_f = _SBDF[order]
            hist = sum(a * u for a, u in zip(a_u, u_hist))
            fext = sum(b * f for b, f in zip(b_f, f_hist))
            rhs = op.M @ (hist + dt * fext)
            vh = sum(a * v for a, v in zip(a_u, v_hist))
            gext = sum(b * g for b, g in zip(b_f, g_hist))
            v_new = (vh + dt * gext) / gamma
        if not (max_order == 3 and n == 0):
            u_new = solver(order).solve(rhs, x0=u_hist[0])
        t_new = state.t + (n + 1) * dt
        if not (np.all(np.isfinite(u_new)) and np.all(np.isfinite(v_new))):
            raise NumericalError(f"non-finite values at step {n + 1}", last_good_time=last_good)
        last_good = t_new
        u_lo = min(u_lo, float(u_new.min()))
        u_hi = max(u_hi, float(u_new.max()))
        if hooks:
            un = u_new.reshape(shape)
            du_dt = (u_new - u_hist[0]).reshape(shape) / dt
            grad = differentiate(un, mesh)
            for hook in hooks:
                hook(t_new, un, du_dt, grad)
        u_hist.insert(0, u_new)
        v_hist.insert(0, v_new)
        del u_hist[max_order:], v_hist[max_order:], f_hist[max_order - 1:], g_hist[max_order - 1:]
        if (n + 1) in snap_steps:
            snapshots[snap_steps[n + 1]] = ApState(u_new.reshape(shape).copy(),
                                                   v_new.reshape(shape).copy(), t_new)

    final = ApState(u_hist[0].reshape(shape).copy(), v_hist[0].reshape(shape).copy(),
                    state.t + nsteps * dt)
    return RunResult(final, snapshots, nsteps, time.perf_counter() - t0, (u_lo, u_hi))


def step_imex(state: ApState, dframes: DFrames, params: ApParams | None, config: SolverConfig,
              mesh: SurfaceMesh, operator: DiffusionOperator | None = None) -> ApState:
    """One first-order IMEX step (a self-starting single step)."""
    cfg = replace(config, t_final=config.dt, scheme="sbdf1", snapshot_times=())
    return run(mesh, state, dframes, params, cfg, operator=operator).state
