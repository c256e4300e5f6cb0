"""Assembly and direct solution of one linearized mixed boundary-value problem.

The bilinear form is the cell-corner (trapezoid) quadrature of the weak
integrals with per-cell edge-difference gradients. Coefficients are sampled
at the quadrature points, which coincide with grid nodes, so the coupling
cancellation between the two equations and the coercivity bound hold
algebraically on the discrete level, not just in the refinement limit.

Unknown layout: stacked vector [v_tilde; W_tilde] over all nodes. Dirichlet
rows (v on the entrance plane, W on both end planes) are identity rows with
zero right-hand side; the full solution W adds the boundary lift back.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import DomainError, NotSubsonicError, SingularAssemblyError
from .gas import GasLaw
from .grid import Nozzle
from .ode1d import BackgroundSolution


# ---------------------------------------------------------------------------
# quadrature over cells (corner rule) and boundary faces (trapezoid rule)


@dataclass(frozen=True)
class Quadrature:
    G: tuple                 # per-axis gradient maps, (nq x N) CSR
    P: sp.csr_matrix         # nodal sampling at quadrature points
    qnode: np.ndarray        # node index of each quadrature point
    w: np.ndarray            # quadrature weights
    exit_idx: np.ndarray     # exit-plane node indices (C-order of the cross grid)
    exit_w: np.ndarray       # surface weights on the exit plane
    entrance_idx: np.ndarray
    wall_faces: tuple        # (axis, outward_sign, node_idx, surface_w) per face


def _face_weights(grid: Nozzle, axes_used):
    weight = np.ones(1)
    for a in axes_used:
        n = grid.shape[a]
        tr = np.full(n, grid.spacing[a])
        tr[0] *= 0.5
        tr[-1] *= 0.5
        weight = np.multiply.outer(weight, tr).ravel()
    return weight


def build_quadrature(grid: Nozzle) -> Quadrature:
    d = grid.dim
    shape = grid.shape
    n_nodes = grid.n_nodes
    cell_shape = tuple(n - 1 for n in shape)
    n_cells = int(np.prod(cell_shape))
    cell_idx = np.stack(
        [ix.ravel() for ix in np.indices(cell_shape)], axis=0
    )  # (d, n_cells)
    corners = list(itertools.product((0, 1), repeat=d))
    nq = n_cells * len(corners)
    w_point = float(np.prod(grid.spacing)) / len(corners)

    qnode = np.empty(nq, dtype=np.int64)
    g_rows = [[] for _ in range(d)]
    g_cols = [[] for _ in range(d)]
    g_vals = [[] for _ in range(d)]
    for c_id, kappa in enumerate(corners):
        q_ids = np.arange(n_cells) * len(corners) + c_id
        node_multi = cell_idx + np.asarray(kappa)[:, None]
        qnode[q_ids] = np.ravel_multi_index(node_multi, shape)
        for a in range(d):
            plus = node_multi.copy()
            plus[a] = cell_idx[a] + 1
            minus = node_multi.copy()
            minus[a] = cell_idx[a]
            n_plus = np.ravel_multi_index(plus, shape)
            n_minus = np.ravel_multi_index(minus, shape)
            inv_h = 1.0 / grid.spacing[a]
            g_rows[a].append(np.concatenate([q_ids, q_ids]))
            g_cols[a].append(np.concatenate([n_plus, n_minus]))
            g_vals[a].append(
                np.concatenate([np.full(n_cells, inv_h), np.full(n_cells, -inv_h)])
            )

    G = tuple(
        sp.csr_matrix(
            (np.concatenate(g_vals[a]), (np.concatenate(g_rows[a]), np.concatenate(g_cols[a]))),
            shape=(nq, n_nodes),
        )
        for a in range(d)
    )
    P = sp.csr_matrix(
        (np.ones(nq), (np.arange(nq), qnode)), shape=(nq, n_nodes)
    )

    idx = np.indices(shape)
    exit_sel = (idx[-1] == shape[-1] - 1).ravel()
    exit_idx = np.flatnonzero(exit_sel)
    entrance_idx = np.flatnonzero((idx[-1] == 0).ravel())
    exit_w = _face_weights(grid, range(d - 1))

    faces = []
    for a in range(d - 1):
        for side, sign in ((0, -1.0), (shape[a] - 1, 1.0)):
            sel = (idx[a] == side).ravel()
            fidx = np.flatnonzero(sel)
            fw = _face_weights(grid, [ax for ax in range(d) if ax != a])
            faces.append((a, sign, fidx, fw))

    return Quadrature(
        G=G, P=P, qnode=qnode, w=np.full(nq, w_point),
        exit_idx=exit_idx, exit_w=exit_w,
        entrance_idx=entrance_idx, wall_faces=tuple(faces),
    )


# ---------------------------------------------------------------------------
# frozen linearization coefficients on the grid


@dataclass(frozen=True)
class BackgroundCoeffs:
    """Background fields and linearization coefficients sampled at the nodes."""

    law: GasLaw
    Phi0: np.ndarray
    u: np.ndarray
    E: np.ndarray
    phi0: np.ndarray
    rho_bg: np.ndarray
    pprime: np.ndarray
    aii: np.ndarray          # (d, N) diagonal coefficients
    dzA: np.ndarray          # (d, N)
    dqB: np.ndarray          # (d, N) = -dzA, shared-negation exact
    dzB: np.ndarray          # (N,)
    b_bg: np.ndarray         # background charge on the nodes
    J0: float
    lam: float
    nu_bg: float
    delta1: float
    delta2: float
    delta3: float
    exit_scale: np.ndarray   # conormal scale on the exit plane
    exit_wflux: np.ndarray   # J0 / p'(rho_bg) on the exit plane


def make_coeffs(law: GasLaw, sol: BackgroundSolution, grid: Nozzle) -> BackgroundCoeffs:
    axial = grid.coords[:, -1]
    k = sol.index_of(axial)
    Phi0 = sol.Phi0[k]
    u = sol.u[k]
    E = sol.E[k]
    phi0 = sol.phi0[k]
    rho_bg = sol.rho[k]
    b_bg = sol.b_values()[k]
    pprime = law.dpressure(rho_bg)
    nu_bg = float(np.min(pprime - u * u))
    if nu_bg <= 0.0:
        raise NotSubsonicError("background is not uniformly subsonic on the grid")

    d = grid.dim
    aii = np.tile(rho_bg, (d, 1))
    aii[-1] = rho_bg * (1.0 - u * u / pprime)
    if np.min(aii[-1]) <= 0.0:
        raise NotSubsonicError("axial coefficient nonpositive")
    dzB = rho_bg / pprime
    dzA = np.zeros((d, grid.n_nodes))
    dzA[-1] = dzB * u
    dqB = -dzA

    # operational admissibility radii: keep the density-closure argument well
    # above the floor and preserve half of the subsonic margin
    h_bg = Phi0 - 0.5 * u * u
    m_vac = float(np.min(h_bg) - law.enthalpy(100.0 * law.rho_floor))
    c_arg = 1.0 + float(np.max(np.abs(u)))
    c_sub = (
        float(np.max(rho_bg * law.d2pressure(rho_bg) / pprime)) * c_arg
        + 2.0 * float(np.max(np.abs(u)))
        + 1.0
    )
    delta1 = min(1.0, m_vac / (2.0 * c_arg), nu_bg / (2.0 * c_sub)) / 3.0
    m_vac_ex = float(np.min(h_bg[grid.gammaL]) - law.enthalpy(100.0 * law.rho_floor))
    nu_ex = float(np.min((pprime - u * u)[grid.gammaL]))
    delta2 = min(1.0, m_vac_ex / (2.0 * c_arg), nu_ex / (2.0 * c_sub)) / 3.0
    delta3 = min(delta1, delta2, 1.0)

    exit_idx = np.flatnonzero(grid.gammaL)
    exit_scale = aii[-1][exit_idx] * pprime[exit_idx] / sol.J0
    exit_wflux = sol.J0 / pprime[exit_idx]

    return BackgroundCoeffs(
        law=law, Phi0=Phi0, u=u, E=E, phi0=phi0, rho_bg=rho_bg, pprime=pprime,
        aii=aii, dzA=dzA, dqB=dqB, dzB=dzB, b_bg=b_bg,
        J0=float(sol.J0), lam=float(np.min(aii)), nu_bg=nu_bg,
        delta1=float(delta1), delta2=float(delta2), delta3=float(delta3),
        exit_scale=exit_scale, exit_wflux=exit_wflux,
    )


# ---------------------------------------------------------------------------
# boundary lift


@dataclass(frozen=True)
class LiftField:
    values: np.ndarray
    compat_violation: float


def lift_boundary(W_en, W_ex, grid: Nozzle, warn_tol: float | None = None) -> LiftField:
    """Linear-in-axial interpolant of the end-plane Dirichlet data."""
    cross_shape = grid.cross_shape()
    W_en = np.asarray(W_en, dtype=float).reshape(cross_shape)
    W_ex = np.asarray(W_ex, dtype=float).reshape(cross_shape)
    if warn_tol is None:
        # one-sided edge stencils see O(h^3) on compatible smooth data
        h = max(grid.spacing[:-1])
        scale = 1.0 + float(np.max(np.abs(W_en))) + float(np.max(np.abs(W_ex)))
        warn_tol = 50.0 * h ** 3 * scale
    t = (grid.axes[-1] / grid.L).reshape((1,) * (grid.dim - 1) + (-1,))
    values = (1.0 - t) * W_en[..., None] + t * W_ex[..., None]

    # wall-normal derivative of the end data at the wall edges
    violation = 0.0
    for data in (W_en, W_ex):
        if grid.dim == 2:
            gr = np.gradient(data, grid.axes[0], edge_order=2)
            violation = max(violation, abs(gr[0]), abs(gr[-1]))
        else:
            gx = np.gradient(data, grid.axes[0], axis=0, edge_order=2)
            gy = np.gradient(data, grid.axes[1], axis=1, edge_order=2)
            violation = max(
                violation,
                float(np.max(np.abs(gx[[0, -1], :]))),
                float(np.max(np.abs(gy[:, [0, -1]]))),
            )
    if violation > warn_tol:
        warnings.warn(
            f"end-plane data violate the wall compatibility condition "
            f"(max wall-normal derivative {violation:.3e})",
            stacklevel=2,
        )
    return LiftField(values=values.ravel(), compat_violation=float(violation))


# ---------------------------------------------------------------------------
# linear data and system


@dataclass
class LinearData:
    """Right-hand-side data of one linearized solve.

    F enters in divergence form against the first equation; s1/f are plain
    volume sources; g_exit is the exit datum converted to a conormal flux by
    the background scale; F2 is a divergence-form source of the second
    equation. Wall fluxes are outward-oriented extra conormal data, given per
    wall face in the order of Quadrature.wall_faces.
    """

    W_en: np.ndarray
    W_ex: np.ndarray
    F: np.ndarray | None = None
    s1: np.ndarray | None = None
    f: np.ndarray | None = None
    g_exit: np.ndarray | None = None
    F2: np.ndarray | None = None
    wall_flux_v: list | None = None
    wall_flux_W: list | None = None


@dataclass
class WeakSystem:
    operator: sp.csr_matrix
    rhs: np.ndarray
    blocks: dict
    lift: LiftField
    dirichlet_v: np.ndarray
    dirichlet_W: np.ndarray
    grid: Nozzle
    coeffs: BackgroundCoeffs
    quad: Quadrature
    lu: object = None


class DiscreteOperator:
    """Cacheable operator part of the weak system (background-dependent only)."""

    def __init__(self, coeffs: BackgroundCoeffs, grid: Nozzle, quad: Quadrature | None = None):
        self.coeffs = coeffs
        self.grid = grid
        self.quad = quad or build_quadrature(grid)
        q = self.quad
        wq = q.w
        qn = q.qnode
        d = grid.dim
        N = grid.n_nodes

        def row_scaled(mat, c):
            return mat.multiply(c[:, None]).tocsr()

        Kvv = sum(
            (q.G[a].T @ row_scaled(q.G[a], wq * coeffs.aii[a][qn]) for a in range(d)),
            start=sp.csr_matrix((N, N)),
        )
        KvW = sum(
            (q.G[a].T @ row_scaled(q.P, wq * coeffs.dzA[a][qn]) for a in range(d)),
            start=sp.csr_matrix((N, N)),
        )
        KWv = sum(
            (q.P.T @ row_scaled(q.G[a], wq * coeffs.dqB[a][qn]) for a in range(d)),
            start=sp.csr_matrix((N, N)),
        )
        Dsemi = sum(
            (q.G[a].T @ row_scaled(q.G[a], wq) for a in range(d)),
            start=sp.csr_matrix((N, N)),
        )
        KWW = Dsemi + q.P.T @ row_scaled(q.P, wq * coeffs.dzB[qn])

        self.blocks = {"Kvv": Kvv.tocsr(), "KvW": KvW.tocsr(),
                       "KWv": KWv.tocsr(), "KWW": KWW.tocsr(), "Dsemi": Dsemi.tocsr()}

        idx = np.indices(grid.shape)
        self.dirichlet_v = (idx[-1] == 0).ravel()
        self.dirichlet_W = ((idx[-1] == 0) | (idx[-1] == grid.shape[-1] - 1)).ravel()
        dir_mask = np.concatenate([self.dirichlet_v, self.dirichlet_W])
        K = sp.bmat(
            [[self.blocks["Kvv"], self.blocks["KvW"]],
             [self.blocks["KWv"], self.blocks["KWW"]]],
            format="csr",
        )
        keep = sp.diags((~dir_mask).astype(float))
        self.K = (keep @ K + sp.diags(dir_mask.astype(float))).tocsr()
        self._lu = None

    @property
    def lu(self):
        if self._lu is None:
            try:
                self._lu = splu(self.K.tocsc())
            except RuntimeError as exc:
                raise SingularAssemblyError(str(exc)) from exc
        return self._lu


def assemble_rhs(op: DiscreteOperator, data: LinearData):
    grid, q, coeffs = op.grid, op.quad, op.coeffs
    N = grid.n_nodes
    d = grid.dim
    wq, qn = q.w, q.qnode
    bv = np.zeros(N)
    bW = np.zeros(N)

    lift = lift_boundary(data.W_en, data.W_ex, grid)
    Wbd = lift.values

    if data.F is not None:
        F = np.asarray(data.F, dtype=float)
        for a in range(d):
            bv += q.G[a].T @ (wq * F[qn, a])
        for axis, sign, fidx, fw in q.wall_faces:
            bv[fidx] -= fw * (sign * F[fidx, axis])
        bv[q.exit_idx] -= q.exit_w * F[q.exit_idx, -1]
    if data.s1 is not None:
        bv -= np.bincount(qn, weights=wq * np.asarray(data.s1)[qn], minlength=N)
    if data.g_exit is not None:
        bv[q.exit_idx] -= q.exit_w * coeffs.exit_scale * np.asarray(data.g_exit)
    # exit surface term of the coupling flux, determined by the exit trace of W
    bv[q.exit_idx] += q.exit_w * coeffs.exit_wflux * Wbd[q.exit_idx]
    # lift contributions moved to the right-hand side
    for a in range(d):
        bv -= q.G[a].T @ (wq * coeffs.dzA[a][qn] * Wbd[qn])
        bW -= q.G[a].T @ (wq * (q.G[a] @ Wbd))
    bW -= np.bincount(qn, weights=wq * coeffs.dzB[qn] * Wbd[qn], minlength=N)

    if data.f is not None:
        bW -= np.bincount(qn, weights=wq * np.asarray(data.f)[qn], minlength=N)
    if data.F2 is not None:
        F2 = np.asarray(data.F2, dtype=float)
        for a in range(d):
            bW += q.G[a].T @ (wq * F2[qn, a])
        for axis, sign, fidx, fw in q.wall_faces:
            bW[fidx] -= fw * (sign * F2[fidx, axis])
    if data.wall_flux_v is not None:
        for (axis, sign, fidx, fw), flux in zip(q.wall_faces, data.wall_flux_v):
            if flux is not None:
                bv[fidx] += fw * np.asarray(flux)
    if data.wall_flux_W is not None:
        for (axis, sign, fidx, fw), flux in zip(q.wall_faces, data.wall_flux_W):
            if flux is not None:
                bW[fidx] += fw * np.asarray(flux)

    rhs = np.concatenate([bv, bW])
    rhs[np.concatenate([op.dirichlet_v, op.dirichlet_W])] = 0.0
    return rhs, lift


def assemble(coeffs: BackgroundCoeffs, grid: Nozzle, data: LinearData,
             op: DiscreteOperator | None = None) -> WeakSystem:
    """Build the full weak system (operator, right-hand side, lift)."""
    op = op or DiscreteOperator(coeffs, grid)
    rhs, lift = assemble_rhs(op, data)
    return WeakSystem(
        operator=op.K, rhs=rhs, blocks=op.blocks, lift=lift,
        dirichlet_v=op.dirichlet_v, dirichlet_W=op.dirichlet_W,
        grid=grid, coeffs=coeffs, quad=op.quad, lu=op.lu,
    )


def solve(system: WeakSystem):
    """Direct sparse solve; returns (v, W) with the lift added back, and stats."""
    lu = system.lu if system.lu is not None else splu(system.operator.tocsc())
    U = lu.solve(system.rhs)
    res = system.operator @ U - system.rhs
    scale = max(float(np.max(np.abs(system.rhs))), 1e-300)
    rel = float(np.max(np.abs(res))) / scale
    if not np.all(np.isfinite(U)):
        raise SingularAssemblyError("non-finite solution from the factorization")
    # identity rows hold exactly; scrub factorization dust
    U[np.concatenate([system.dirichlet_v, system.dirichlet_W])] = 0.0
    N = system.grid.n_nodes
    v = U[:N]
    W = U[N:] + system.lift.values
    return v, W, {"algebraic_residual": rel, "unknowns": 2 * N}


def quadratic_form(system_or_op, xi, eta):
    """Discrete bilinear form at a test pair and its seminorm denominator."""
    blocks = system_or_op.blocks
    cross_1 = float(xi @ (blocks["KvW"] @ eta))
    cross_2 = float(eta @ (blocks["KWv"] @ xi))
    Q = (
        float(xi @ (blocks["Kvv"] @ xi))
        + cross_1
        + cross_2
        + float(eta @ (blocks["KWW"] @ eta))
    )
    D = float(xi @ (blocks["Dsemi"] @ xi)) + float(eta @ (blocks["Dsemi"] @ eta))
    return Q, D, cross_1, cross_2


def cross_term_sum(system_or_op, quad: Quadrature, coeffs: BackgroundCoeffs, xi, eta):
    """Coupling contributions evaluated with identical quadrature weights.

    Returns (sum, |first| + |second|); the two terms are exact negations of
    each other whenever the pointwise identity holds.
    """
    wq, qn = quad.w, quad.qnode
    eta_q = eta[qn]
    total_1 = 0.0
    total_2 = 0.0
    for a in range(len(quad.G)):
        gxi = quad.G[a] @ xi
        total_1 += float(np.sum(wq * coeffs.dzA[a][qn] * eta_q * gxi))
        total_2 += float(np.sum(wq * coeffs.dqB[a][qn] * eta_q * gxi))
    return total_1 + total_2, abs(total_1) + abs(total_2)


def coercivity_check(system: WeakSystem, trials: int = 100, seed: int = 42):
    """Min Rayleigh ratio of the quadratic form over random admissible pairs."""
    rng = np.random.default_rng(seed)
    N = system.grid.n_nodes
    best = np.inf
    for _ in range(trials):
        xi = rng.standard_normal(N)
        eta = rng.standard_normal(N)
        xi[system.dirichlet_v] = 0.0
        eta[system.dirichlet_W] = 0.0
        Q, D, _, _ = quadratic_form(system, xi, eta)
        if D <= 0.0:
            raise DomainError("degenerate (zero) test pair")
        best = min(best, Q / D)
    return best


def dump_coo(system: WeakSystem, path):
    """Operator and right-hand side in coordinate text format."""
    coo = system.operator.tocoo()
    with open(path, "w") as fh:
        fh.write(f"# {coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        for i, j, val in zip(coo.row, coo.col, coo.data):
            fh.write(f"{i} {j} {val:.17g}\n")
        fh.write("# rhs\n")
        for i, val in enumerate(system.rhs):
            fh.write(f"{i} {val:.17g}\n")
