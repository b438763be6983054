"""Inf-sup stable mixed finite elements on triangles.

Quadratic velocity (vertices + edge midpoints, one scalar space per
component, component-major dof layout) and linear pressure (vertices).
Assembly is vectorized over elements with a fixed degree-5 quadrature rule,
exact for every bilinear form used here and for the trilinear convective
form with quadratic velocities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DofMismatch, MissingTag, SingularSystem
from .meshing import BoundaryTag, Mesh

# degree-5 Radon rule on the reference triangle, weights sum to 1
_SQ15 = math.sqrt(15.0)
_QA = (6.0 + _SQ15) / 21.0
_QB = (6.0 - _SQ15) / 21.0
_QUAD_POINTS = np.array(
    [
        [1.0 / 3.0, 1.0 / 3.0],
        [_QA, _QA],
        [1.0 - 2.0 * _QA, _QA],
        [_QA, 1.0 - 2.0 * _QA],
        [_QB, _QB],
        [1.0 - 2.0 * _QB, _QB],
        [_QB, 1.0 - 2.0 * _QB],
    ]
)
_WA = (155.0 + _SQ15) / 1200.0
_WB = (155.0 - _SQ15) / 1200.0
_QUAD_WEIGHTS = np.array([9.0 / 40.0, _WA, _WA, _WA, _WB, _WB, _WB])


def p2_values(qp: np.ndarray) -> np.ndarray:
    """Quadratic basis values at reference points; order: 3 vertices, then
    midpoints of edges (1,2), (2,0), (0,1)."""
    xi, eta = qp[:, 0], qp[:, 1]
    lam = np.stack([1.0 - xi - eta, xi, eta], axis=1)
    v = np.empty((qp.shape[0], 6))
    for i in range(3):
        v[:, i] = lam[:, i] * (2.0 * lam[:, i] - 1.0)
    v[:, 3] = 4.0 * lam[:, 1] * lam[:, 2]
    v[:, 4] = 4.0 * lam[:, 2] * lam[:, 0]
    v[:, 5] = 4.0 * lam[:, 0] * lam[:, 1]
    return v


def p2_gradients(qp: np.ndarray) -> np.ndarray:
    """Reference gradients of the quadratic basis, shape (nq, 6, 2)."""
    xi, eta = qp[:, 0], qp[:, 1]
    lam = np.stack([1.0 - xi - eta, xi, eta], axis=1)
    dlam = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    g = np.empty((qp.shape[0], 6, 2))
    for i in range(3):
        g[:, i, :] = (4.0 * lam[:, i] - 1.0)[:, None] * dlam[i]
    pairs = ((1, 2), (2, 0), (0, 1))
    for k, (i, j) in enumerate(pairs):
        g[:, 3 + k, :] = 4.0 * (lam[:, i][:, None] * dlam[j] + lam[:, j][:, None] * dlam[i])
    return g


def p1_values(qp: np.ndarray) -> np.ndarray:
    xi, eta = qp[:, 0], qp[:, 1]
    return np.stack([1.0 - xi - eta, xi, eta], axis=1)


_TAG_PRIORITY = (
    BoundaryTag.OBSTACLE,
    BoundaryTag.WALL,
    BoundaryTag.INFLOW,
    BoundaryTag.OUTFLOW,
)


class DofMap:
    """Dof bookkeeping for the mixed pair on a mesh.

    Scalar velocity dofs are the vertices followed by the edge midpoints; a
    velocity vector stores the x-component block then the y-component block
    (2*(V+E) entries).  Pressure dofs are the vertices.
    """

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        tris = mesh.triangles
        nv = mesh.num_nodes

        # edge table: local edge k is opposite vertex k
        locals_ = np.concatenate([tris[:, [1, 2]], tris[:, [2, 0]], tris[:, [0, 1]]])
        keys = np.sort(locals_, axis=1)
        uniq, inv = np.unique(keys, axis=0, return_inverse=True)
        self.edges = uniq
        m = tris.shape[0]
        self.tri_edges = inv.reshape(3, m).T

        self.num_vertices = nv
        self.num_edges = uniq.shape[0]
        self.n_scalar = nv + self.num_edges
        self.n_velocity = 2 * self.n_scalar
        self.n_pressure = nv

        mid = 0.5 * (mesh.nodes[uniq[:, 0]] + mesh.nodes[uniq[:, 1]])
        self.scalar_coords = np.concatenate([mesh.nodes, mid], axis=0)

        # element -> scalar dof map (6 local dofs)
        self.tri_dofs = np.concatenate([tris, nv + self.tri_edges], axis=1)

        self._tag_dofs = self._build_boundary_dofs()
        self._cache = {}

    def _build_boundary_dofs(self):
        nv = self.num_vertices
        n = nv
        ekeys = self.edges[:, 0] * (n + self.num_edges) + self.edges[:, 1]
        order = np.argsort(ekeys)
        sorted_keys = ekeys[order]

        def edge_id(i, j):
            a, b = (i, j) if i < j else (j, i)
            k = a * (n + self.num_edges) + b
            pos = np.searchsorted(sorted_keys, k)
            return int(order[pos])

        per_tag: dict[int, list[int]] = {int(t): [] for t in BoundaryTag}
        for (i, j), tag in zip(self.mesh.boundary_edges, self.mesh.boundary_tags):
            per_tag[int(tag)].extend([int(i), int(j), nv + edge_id(i, j)])

        claimed: set[int] = set()
        out = {}
        for tag in _TAG_PRIORITY:
            dofs = sorted(set(per_tag[int(tag)]) - claimed)
            claimed.update(dofs)
            out[int(tag)] = np.array(dofs, dtype=np.int64)
        return out

    def boundary_scalar_dofs(self, tag: BoundaryTag) -> np.ndarray:
        return self._tag_dofs[int(tag)]

    def present_tags(self):
        return [BoundaryTag(int(t)) for t in np.unique(self.mesh.boundary_tags)]

    # ---- quadrature cache -------------------------------------------------

    def quad_data(self):
        """Per-element quadrature data: physical points, scaled weights,
        basis values and physical gradients."""
        if "quad" in self._cache:
            return self._cache["quad"]
        mesh = self.mesh
        tris = mesh.triangles
        a = mesh.nodes[tris[:, 0]]
        b = mesh.nodes[tris[:, 1]]
        c = mesh.nodes[tris[:, 2]]
        jac = np.stack([b - a, c - a], axis=2)  # (m,2,2); columns are edge vectors
        det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
        inv_jt = np.empty_like(jac)
        inv_jt[:, 0, 0] = jac[:, 1, 1]
        inv_jt[:, 0, 1] = -jac[:, 1, 0]
        inv_jt[:, 1, 0] = -jac[:, 0, 1]
        inv_jt[:, 1, 1] = jac[:, 0, 0]
        inv_jt /= det[:, None, None]

        qp = _QUAD_POINTS
        phys = a[:, None, :] + np.einsum("mdk,qk->mqd", jac, qp)
        wdet = 0.5 * np.abs(det)[:, None] * _QUAD_WEIGHTS[None, :]

        p2v = p2_values(qp)
        p2g_ref = p2_gradients(qp)
        p2g = np.einsum("mdk,qik->mqid", inv_jt, p2g_ref)
        p1v = p1_values(qp)
        data = {
            "points": phys,
            "weights": wdet,
            "p2v": p2v,
            "p2g": p2g,
            "p1v": p1v,
        }
        self._cache["quad"] = data
        return data


def build_spaces(mesh: Mesh) -> DofMap:
    """Construct the mixed dof map for a mesh."""
    return DofMap(mesh)


@dataclass
class Field:
    """Discrete velocity-pressure pair with solve provenance."""

    dofmap: DofMap
    velocity: np.ndarray
    pressure: np.ndarray
    meta: dict = dc_field(default_factory=dict)

    def component(self, c: int) -> np.ndarray:
        n = self.dofmap.n_scalar
        return self.velocity[c * n : (c + 1) * n]

    def copy(self) -> "Field":
        return Field(self.dofmap, self.velocity.copy(), self.pressure.copy(), dict(self.meta))


def require_same_dofmap(*fields):
    base = fields[0].dofmap
    for f in fields[1:]:
        if f.dofmap is not base and (
            f.dofmap.n_velocity != base.n_velocity
            or f.dofmap.mesh.num_nodes != base.mesh.num_nodes
        ):
            raise DofMismatch("fields do not share a dof map")


# ---------------------------------------------------------------------------
# assembly


def scalar_stiffness(dofmap: DofMap) -> sp.csr_matrix:
    """Stiffness of one velocity component: integral of grad(phi_i).grad(phi_j)."""
    q = dofmap.quad_data()
    ke = np.einsum("mq,mqid,mqjd->mij", q["weights"], q["p2g"], q["p2g"], optimize=True)
    return _scatter(ke, dofmap.tri_dofs, dofmap.tri_dofs, dofmap.n_scalar, dofmap.n_scalar)


def assemble_viscous(dofmap: DofMap) -> sp.csr_matrix:
    """Vector Laplacian block: block-diagonal stiffness per component."""
    k = scalar_stiffness(dofmap)
    return sp.block_diag([k, k], format="csr")


def assemble_divergence(dofmap: DofMap) -> sp.csr_matrix:
    """Pressure-velocity coupling with (B u)_q = -int q div(u)."""
    q = dofmap.quad_data()
    tris = dofmap.mesh.triangles
    blocks = []
    for c in range(2):
        be = -np.einsum("mq,qp,mqi->mpi", q["weights"], q["p1v"], q["p2g"][:, :, :, c], optimize=True)
        blocks.append(_scatter(be, tris, dofmap.tri_dofs, dofmap.n_pressure, dofmap.n_scalar))
    return sp.hstack(blocks, format="csr")


def pressure_integral_vector(dofmap: DofMap) -> np.ndarray:
    """Vector of integrals of each pressure basis function (the mean gauge)."""
    q = dofmap.quad_data()
    vals = np.einsum("mq,qp->mp", q["weights"], q["p1v"])
    out = np.zeros(dofmap.n_pressure)
    np.add.at(out, dofmap.mesh.triangles, vals)
    return out


def _scatter(elem, rows_map, cols_map, nrows, ncols):
    m, nr, nc = elem.shape
    rows = np.repeat(rows_map, nc).ravel()
    cols = np.tile(cols_map, (1, nr)).ravel()
    mat = sp.coo_matrix((elem.ravel(), (rows, cols)), shape=(nrows, ncols))
    return mat.tocsr()


def velocity_at_qp(dofmap: DofMap, velocity: np.ndarray) -> np.ndarray:
    """Velocity values at quadrature points, shape (m, nq, 2)."""
    q = dofmap.quad_data()
    n = dofmap.n_scalar
    out = np.empty((dofmap.mesh.num_triangles, _QUAD_POINTS.shape[0], 2))
    for c in range(2):
        coeffs = velocity[c * n : (c + 1) * n][dofmap.tri_dofs]
        out[:, :, c] = np.einsum("mi,qi->mq", coeffs, q["p2v"])
    return out


def velocity_gradients_at_qp(dofmap: DofMap, velocity: np.ndarray) -> np.ndarray:
    """Velocity gradients at quadrature points, shape (m, nq, 2, 2) with
    entry [..., c, d] = d(u_c)/d(x_d)."""
    q = dofmap.quad_data()
    n = dofmap.n_scalar
    out = np.empty((dofmap.mesh.num_triangles, _QUAD_POINTS.shape[0], 2, 2))
    for c in range(2):
        coeffs = velocity[c * n : (c + 1) * n][dofmap.tri_dofs]
        out[:, :, c, :] = np.einsum("mi,mqid->mqd", coeffs, q["p2g"])
    return out


def convection_matrix(dofmap: DofMap, velocity: np.ndarray) -> sp.csr_matrix:
    """Skew-symmetrized convection operator N(u) acting per component:
    N_ij = 1/2 (u.grad(phi_j), phi_i) - 1/2 (u.grad(phi_i), phi_j)."""
    q = dofmap.quad_data()
    uq = velocity_at_qp(dofmap, velocity)
    half = np.einsum("mq,qi,mqd,mqjd->mij", q["weights"], q["p2v"], uq, q["p2g"], optimize=True)
    ne = 0.5 * (half - half.transpose(0, 2, 1))
    n = _scatter(ne, dofmap.tri_dofs, dofmap.tri_dofs, dofmap.n_scalar, dofmap.n_scalar)
    return sp.block_diag([n, n], format="csr")


def convection_jacobian_extra(dofmap: DofMap, velocity: np.ndarray) -> sp.csr_matrix:
    """Cross-component Newton term: derivative of the skew form c(u; u, phi)
    with respect to the advecting slot."""
    q = dofmap.quad_data()
    uq = velocity_at_qp(dofmap, velocity)
    guq = velocity_gradients_at_qp(dofmap, velocity)
    blocks = [[None, None], [None, None]]
    for ci in range(2):  # test component
        for cj in range(2):  # trial component (direction of the perturbation)
            term1 = np.einsum(
                "mq,qi,qj,mq->mij",
                q["weights"],
                q["p2v"],
                q["p2v"],
                guq[:, :, ci, cj],
                optimize=True,
            )
            term2 = np.einsum(
                "mq,mqi,qj,mq->mij",
                q["weights"],
                q["p2g"][:, :, :, cj],
                q["p2v"],
                uq[:, :, ci],
                optimize=True,
            )
            be = 0.5 * (term1 - term2)
            blocks[ci][cj] = _scatter(
                be, dofmap.tri_dofs, dofmap.tri_dofs, dofmap.n_scalar, dofmap.n_scalar
            )
    return sp.bmat(blocks, format="csr")


def convection_form(dofmap: DofMap, u, v, phi) -> float:
    """Skew-symmetric trilinear form
    c(u; v, phi) = 1/2 int (u.grad v).phi - 1/2 int (u.grad phi).v."""
    uu = u.velocity if isinstance(u, Field) else np.asarray(u)
    vv = v.velocity if isinstance(v, Field) else np.asarray(v)
    pp = phi.velocity if isinstance(phi, Field) else np.asarray(phi)
    for arr in (uu, vv, pp):
        if arr.shape[0] != dofmap.n_velocity:
            raise DofMismatch("coefficient vector does not match the dof map")
    q = dofmap.quad_data()
    uq = velocity_at_qp(dofmap, uu)
    vq = velocity_at_qp(dofmap, vv)
    pq = velocity_at_qp(dofmap, pp)
    gv = velocity_gradients_at_qp(dofmap, vv)
    gp = velocity_gradients_at_qp(dofmap, pp)
    t1 = np.einsum("mq,mqd,mqcd,mqc->", q["weights"], uq, gv, pq, optimize=True)
    t2 = np.einsum("mq,mqd,mqcd,mqc->", q["weights"], uq, gp, vq, optimize=True)
    return 0.5 * float(t1 - t2)


def interpolate_velocity(dofmap: DofMap, fn) -> np.ndarray:
    """Interpolate a callable (pts -> (n,2) values) at the velocity dofs."""
    vals = np.asarray(fn(dofmap.scalar_coords), dtype=float)
    return np.concatenate([vals[:, 0], vals[:, 1]])


def body_force_vector(dofmap: DofMap, fn) -> np.ndarray:
    """Quadrature load vector for a body force pts -> (n,2)."""
    q = dofmap.quad_data()
    fq = np.asarray(fn(q["points"].reshape(-1, 2)), dtype=float)
    fq = fq.reshape(q["points"].shape[0], q["points"].shape[1], 2)
    out = np.zeros(dofmap.n_velocity)
    for c in range(2):
        fe = np.einsum("mq,mq,qi->mi", q["weights"], fq[:, :, c], q["p2v"])
        np.add.at(out, c * dofmap.n_scalar + dofmap.tri_dofs, fe)
    return out


# ---------------------------------------------------------------------------
# constrained saddle systems


class SaddleSystem:
    """Velocity-pressure saddle system with Dirichlet bookkeeping.

    Holds the velocity operator A (viscous plus any convection already
    added), the divergence coupling B, right-hand sides, the constrained
    velocity dofs with their values, and an optional active-pressure mask
    for subdomain solves.  The pressure gauge (zero mean over the active
    region) is enforced with a bordering multiplier.
    """

    def __init__(self, dofmap: DofMap, a_vel, b_div, rhs_vel=None, rhs_div=None):
        self.dofmap = dofmap
        self.A = a_vel.tocsr()
        self.B = b_div.tocsr()
        self.rhs_vel = np.zeros(dofmap.n_velocity) if rhs_vel is None else rhs_vel
        self.rhs_div = np.zeros(dofmap.n_pressure) if rhs_div is None else rhs_div
        self.dirichlet_dofs = np.zeros(0, dtype=np.int64)
        self.dirichlet_values = np.zeros(0)
        self.active_pressure = None  # default: all pressure dofs
        self.gauge = pressure_integral_vector(dofmap)

    def set_dirichlet(self, dofs, values):
        order = np.argsort(dofs, kind="stable")
        self.dirichlet_dofs = np.asarray(dofs, dtype=np.int64)[order]
        self.dirichlet_values = np.asarray(values, dtype=float)[order]
        return self

    def free_velocity_mask(self):
        mask = np.ones(self.dofmap.n_velocity, dtype=bool)
        mask[self.dirichlet_dofs] = False
        return mask

    def solve(self, meta=None) -> Field:
        dm = self.dofmap
        free = self.free_velocity_mask()
        act = (
            np.ones(dm.n_pressure, dtype=bool)
            if self.active_pressure is None
            else self.active_pressure
        )

        uc = np.zeros(dm.n_velocity)
        uc[self.dirichlet_dofs] = self.dirichlet_values

        # all-Dirichlet velocity leaves the pressure defined up to a constant:
        # pin the first active pressure dof, solve, then shift to zero mean
        act_idx = np.where(act)[0]
        if act_idx.size == 0:
            raise SingularSystem("no active pressure dofs")
        solve_p = act.copy()
        solve_p[act_idx[0]] = False

        a_ff = self.A[free][:, free]
        b_f = self.B[solve_p][:, free]
        rhs_f = self.rhs_vel[free] - self.A[free] @ uc
        rhs_p = self.rhs_div[solve_p] - self.B[solve_p] @ uc

        nf, npr = a_ff.shape[0], b_f.shape[0]
        mat = sp.bmat([[a_ff, b_f.T], [b_f, None]], format="csc")
        rhs = np.concatenate([rhs_f, rhs_p])

        try:
            lu = spla.splu(mat)
            sol = lu.solve(rhs)
        except Exception as exc:  # pragma: no cover - scipy error classes vary
            raise SingularSystem(f"sparse factorization failed: {exc}") from exc
        if not np.all(np.isfinite(sol)):
            raise SingularSystem("solution contains non-finite entries")

        vel = uc.copy()
        vel[free] = sol[:nf]
        pre = np.zeros(dm.n_pressure)
        pre[solve_p] = sol[nf : nf + npr]

        # full-system residual, including the pinned constraint row; this is
        # where an inconsistent divergence datum or a failed pivot shows up
        res_vel = (self.A @ vel + self.B.T @ pre - self.rhs_vel)[free]
        res_div = (self.B @ vel - self.rhs_div)[act]
        resid = math.hypot(float(np.linalg.norm(res_vel)), float(np.linalg.norm(res_div)))
        scale = max(float(np.linalg.norm(rhs)), 1e-300)
        if resid > 1e-10 * scale and resid > 1e-13:
            raise SingularSystem(
                f"direct solve residual {resid:.2e} exceeds 1e-10 * |rhs| = {1e-10 * scale:.2e}"
            )

        # zero-mean pressure gauge over the active region
        total = float(self.gauge[act].sum())
        if total > 0.0:
            pre[act] -= (self.gauge[act] @ pre[act]) / total
        return Field(dm, vel, pre, dict(meta or {}))


def apply_dirichlet(system: SaddleSystem, bc: dict) -> SaddleSystem:
    """Attach interpolated Dirichlet velocity data per boundary tag.

    `bc` maps BoundaryTag to either a constant pair or a callable
    pts -> (n, 2) values.  Every tag present in the mesh must be covered;
    otherwise MissingTag is raised.
    """
    dm = system.dofmap
    dofs, values = [], []
    for tag in dm.present_tags():
        if tag not in bc:
            raise MissingTag(f"no Dirichlet datum for boundary tag {tag.name}")
    for tag, datum in bc.items():
        sdofs = dm.boundary_scalar_dofs(tag)
        if sdofs.size == 0:
            continue
        pts = dm.scalar_coords[sdofs]
        if callable(datum):
            vals = np.asarray(datum(pts), dtype=float)
        else:
            vals = np.broadcast_to(np.asarray(datum, dtype=float), (sdofs.size, 2))
        dofs.append(sdofs)
        values.append(vals[:, 0])
        dofs.append(sdofs + dm.n_scalar)
        values.append(vals[:, 1])
    if dofs:
        system.set_dirichlet(np.concatenate(dofs), np.concatenate(values))
    return system


def solve_saddle(system: SaddleSystem, meta=None) -> Field:
    """Solve the constrained saddle system; pressure comes back mean-free."""
    return system.solve(meta=meta)


# ---------------------------------------------------------------------------
# quadrature-based norms and errors


def gradient_norm_squared(dofmap: DofMap, velocity: np.ndarray) -> float:
    g = velocity_gradients_at_qp(dofmap, velocity)
    q = dofmap.quad_data()
    return float(np.einsum("mq,mqcd,mqcd->", q["weights"], g, g, optimize=True))


def velocity_l2_error(dofmap: DofMap, velocity: np.ndarray, exact_fn) -> float:
    q = dofmap.quad_data()
    uq = velocity_at_qp(dofmap, velocity)
    ex = exact_fn(q["points"].reshape(-1, 2)).reshape(uq.shape)
    diff = uq - ex
    return math.sqrt(float(np.einsum("mq,mqc,mqc->", q["weights"], diff, diff)))


def velocity_h1_error(dofmap: DofMap, velocity: np.ndarray, exact_grad_fn) -> float:
    q = dofmap.quad_data()
    gq = velocity_gradients_at_qp(dofmap, velocity)
    ex = exact_grad_fn(q["points"].reshape(-1, 2)).reshape(gq.shape)
    diff = gq - ex
    return math.sqrt(float(np.einsum("mq,mqcd,mqcd->", q["weights"], diff, diff)))


def pressure_l2_error(dofmap: DofMap, pressure: np.ndarray, exact_fn) -> float:
    q = dofmap.quad_data()
    pq = np.einsum("mp,qp->mq", pressure[dofmap.mesh.triangles], q["p1v"])
    ex = exact_fn(q["points"].reshape(-1, 2)).reshape(pq.shape)
    diff = pq - ex
    return math.sqrt(float(np.einsum("mq,mq,mq->", q["weights"], diff, diff)))


def divergence_l2_norm(dofmap: DofMap, velocity: np.ndarray) -> float:
    """Elementwise quadrature L2 norm of the pointwise divergence."""
    g = velocity_gradients_at_qp(dofmap, velocity)
    div = g[:, :, 0, 0] + g[:, :, 1, 1]
    q = dofmap.quad_data()
    return math.sqrt(float(np.einsum("mq,mq,mq->", q["weights"], div, div)))


def pressure_mean(dofmap: DofMap, pressure: np.ndarray) -> float:
    return float(pressure_integral_vector(dofmap) @ pressure)
