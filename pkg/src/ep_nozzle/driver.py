"""Nonlinear fixed-point loop around the linearized solver.

Each step evaluates the Taylor remainders at the current iterate, assembles
the right-hand side against the frozen background operator, and solves one
linear mixed boundary-value problem. The loop is plain successive
substitution from the zero pair; contraction factors, subsonic margins, and
strong-form residuals are recorded along the way.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import coeffs as cf
from . import elliptic, grid as gridmod
from .errors import (
    AdmissibilityError,
    MaxIterationsError,
    NonContractionError,
)
from .gas import GasLaw
from .grid import Nozzle
from .ode1d import BackgroundSolution


@dataclass(frozen=True)
class IterationConfig:
    ball_multiplier: float = 8.0   # radius multiplier M of the iteration ball
    max_iter: int = 30
    tol_floor: float = 1e-10
    tol_scale: float = 1e-3        # tolerance = max(tol_floor, tol_scale*sigma*h^2)
    seed: int = 42


@dataclass(frozen=True)
class Amplitudes:
    """Relative sizes of the data perturbations (all bounded by one)."""

    phi_en: float = 0.5
    phi_ex: float = 1.0
    pex: float = 1.0
    bernoulli: float = 0.25
    charge: float = 0.5


@dataclass
class BoundaryData:
    """Perturbed boundary data and charge field at magnitude sigma."""

    sigma: float
    B0: float                 # one-point Bernoulli datum
    phi_en: np.ndarray        # entrance potential difference (cross grid)
    phi_ex: np.ndarray        # exit potential difference (cross grid)
    pex: np.ndarray           # exit pressure (cross grid)
    b: np.ndarray             # charge on all nodes
    Psi_en: np.ndarray
    Psi_ex: np.ndarray
    exit: cf.ExitData


@dataclass
class FieldPair:
    psi: np.ndarray
    Psi: np.ndarray

    def copy(self):
        return FieldPair(self.psi.copy(), self.Psi.copy())

    def sup(self):
        return float(np.max(np.abs(self.psi)) + np.max(np.abs(self.Psi)))


@dataclass
class SolveReport:
    iterations: int
    converged: bool
    diffs: list
    contraction_factors: list
    subsonic_margin: float
    nonlinear_residual: float
    residual_components: dict
    norm_summary: dict
    sigma: float
    tol: float
    meta: dict = field(default_factory=dict)

    def to_json(self, **extra):
        payload = {
            "iterations": self.iterations,
            "converged": self.converged,
            "diffs": list(map(float, self.diffs)),
            "contraction_factors": list(map(float, self.contraction_factors)),
            "subsonic_margin": self.subsonic_margin,
            "nonlinear_residual": self.nonlinear_residual,
            "residual_components": self.residual_components,
            "norm_summary": self.norm_summary,
            "sigma": self.sigma,
            "tol": self.tol,
        }
        payload.update(self.meta)
        payload.update(extra)
        return json.dumps(payload, indent=2, sort_keys=True)


def _cross_mode(grid: Nozzle):
    """Cosine cross-section mode with vanishing wall-normal derivative."""
    mode = np.ones(grid.cross_shape())
    for a, (lo, hi) in enumerate(grid.cross_extents):
        x = (grid.axes[a] - lo) / (hi - lo)
        shape = [1] * (grid.dim - 1)
        shape[a] = -1
        mode = mode * np.cos(np.pi * x).reshape(shape)
    return mode


def perturb_data(
    background: BackgroundSolution,
    grid: Nozzle,
    sigma: float,
    amplitudes: Amplitudes | None = None,
) -> BoundaryData:
    """Smooth compatible data perturbations with sup norm bounded by sigma."""
    if sigma < 0.0:
        raise AdmissibilityError("sigma must be nonnegative")
    amp = amplitudes or Amplitudes()
    for name in ("phi_en", "phi_ex", "pex", "bernoulli", "charge"):
        if abs(getattr(amp, name)) > 1.0:
            raise AdmissibilityError(f"amplitude {name} exceeds one")
    mode = _cross_mode(grid)
    phi_en0, B00, pex0 = background.boundary_triple
    phi_en = phi_en0 + sigma * amp.phi_en * mode
    phi_ex = sigma * amp.phi_ex * mode
    pex = pex0 + sigma * amp.pex * mode
    B0 = B00 + sigma * amp.bernoulli

    axial_mode = np.cos(np.pi * grid.coords[:, -1] / grid.L)
    cross_on_nodes = np.broadcast_to(
        mode[..., None], grid.shape
    ).ravel()
    b_bg = background.b_values()[background.index_of(grid.coords[:, -1])]
    b = b_bg + sigma * amp.charge * axial_mode * cross_on_nodes

    Psi_en = (B0 - B00) + (phi_en - phi_en0)
    Psi_ex = (B0 - B00) + phi_ex
    exit_data = cf.ExitData(pex=pex.ravel(), Psi_ex=Psi_ex.ravel(), Psi_en=Psi_en.ravel())
    return BoundaryData(
        sigma=float(sigma), B0=float(B0), phi_en=phi_en, phi_ex=phi_ex,
        pex=pex, b=b, Psi_en=Psi_en, Psi_ex=Psi_ex, exit=exit_data,
    )


class PicardState:
    """Frozen background, quadrature and factorized operator for one grid."""

    def __init__(self, law: GasLaw, background: BackgroundSolution, grid: Nozzle):
        self.law = law
        self.background = background
        self.grid = grid
        self.coeffs = elliptic.make_coeffs(law, background, grid)
        self.op = elliptic.DiscreteOperator(self.coeffs, grid)
        self.exit_idx = self.op.quad.exit_idx
        d = grid.dim
        q0 = np.zeros((grid.n_nodes, d))
        q0[:, -1] = self.coeffs.u
        self._q0 = q0
        self._h_min = min(grid.spacing)

    def exit_datum(self, Dpsi, data: BoundaryData, pex_shift=None):
        """Exit datum of the conormal condition at the current gradient."""
        c = self.coeffs
        idx = self.exit_idx
        q = Dpsi[idx]
        q_tot = q + self._q0[idx]
        z_tot = c.Phi0[idx] + data.Psi_ex.ravel()
        rho_t = self.law.density(z_tot, np.einsum("ni,ni->n", q_tot, q_tot))
        drho = rho_t - c.rho_bg[idx]
        chord = c.pprime[idx].copy()
        safe = np.abs(drho) >= cf.CHORD_FALLBACK
        chord[safe] = (
            self.law.pressure(rho_t[safe]) - self.law.pressure(c.rho_bg[idx][safe])
        ) / drho[safe]
        pex = data.pex.ravel()
        if pex_shift is not None:
            pex = pex + pex_shift
        pex0 = self.law.pressure(c.rho_bg[idx])
        # dqB restricted to the exit plane, dotted with the tangential+axial q
        bq_dot_q = np.einsum("an,na->n", c.dqB[:, idx], q)
        ghat2 = bq_dot_q - drho
        return (pex - pex0) / chord + ghat2

    def step(self, pair: FieldPair, data: BoundaryData, corrections=None) -> FieldPair:
        """One application of the iteration map."""
        c = self.coeffs
        Dpsi = gridmod.gradient(self.grid, pair.psi)
        ball = np.abs(pair.Psi) + np.linalg.norm(Dpsi, axis=1)
        if np.max(ball) >= 3.0 * c.delta1:
            raise AdmissibilityError("iterate outside the remainder-definition ball")
        if np.max(np.linalg.norm(Dpsi[self.exit_idx], axis=1)) >= 2.0 * c.delta2:
            raise AdmissibilityError("exit gradient outside the admissible ball")

        F, f, _ = cf.remainder_fields(self.law, c.Phi0, c.u, pair.Psi, Dpsi)
        f_tot = f + (c.b_bg - data.b)
        extra = None
        if corrections is not None:
            extra = corrections(pair, Dpsi)
            F = F + extra.H1
            f_tot = f_tot + extra.src2
        g = self.exit_datum(Dpsi, data, None if extra is None else extra.g3)

        lin = elliptic.LinearData(
            W_en=data.Psi_en, W_ex=data.Psi_ex, F=F, f=f_tot, g_exit=g,
        )
        if extra is not None:
            # recast wall conditions: conormal data from the map corrections
            lin.F2 = extra.H2
            lin.wall_flux_v = [
                sign * extra.H1[fidx, axis]
                for (axis, sign, fidx, fw) in self.op.quad.wall_faces
            ]
            lin.wall_flux_W = [
                sign * extra.H2[fidx, axis]
                for (axis, sign, fidx, fw) in self.op.quad.wall_faces
            ]
        rhs, lift = elliptic.assemble_rhs(self.op, lin)
        U = self.op.lu.solve(rhs)
        U[np.concatenate([self.op.dirichlet_v, self.op.dirichlet_W])] = 0.0
        N = self.grid.n_nodes
        return FieldPair(psi=U[:N], Psi=U[N:] + lift.values)

    def subsonic_margin(self, pair: FieldPair) -> float:
        q_tot = self._q0 + gridmod.gradient(self.grid, pair.psi)
        speed = np.einsum("ni,ni->n", q_tot, q_tot)
        rho = self.law.density(self.coeffs.Phi0 + pair.Psi, speed)
        return float(np.min(self.law.dpressure(rho) - speed))

    def tolerance(self, scale: float, config: IterationConfig) -> float:
        return max(config.tol_floor, config.tol_scale * scale * self._h_min ** 2)


def iteration_step(state: PicardState, pair: FieldPair, data: BoundaryData) -> FieldPair:
    return state.step(pair, data)


def run_fixed_point(
    config: IterationConfig,
    data: BoundaryData,
    state: PicardState,
    start: FieldPair | None = None,
    corrections=None,
    scale: float | None = None,
    on_iterate=None,
):
    """Successive substitution from the zero pair until the sup difference
    drops below the tolerance. Raises on non-contraction, admissibility exit
    or iteration-budget exhaustion."""
    c = state.coeffs
    scale = data.sigma if scale is None else scale
    if scale > 0.0 and config.ball_multiplier * scale > c.delta3:
        raise AdmissibilityError(
            f"M*sigma = {config.ball_multiplier * scale:.3e} exceeds "
            f"delta3 = {c.delta3:.3e}; refusing to iterate"
        )
    tol = state.tolerance(scale, config)
    N = state.grid.n_nodes
    pair = start.copy() if start is not None else FieldPair(np.zeros(N), np.zeros(N))
    diffs = []
    ratios = []
    converged = False
    for k in range(config.max_iter):
        new = state.step(pair, data, corrections)
        d = float(
            np.max(np.abs(new.psi - pair.psi)) + np.max(np.abs(new.Psi - pair.Psi))
        )
        if diffs and diffs[-1] > 10.0 * tol:
            ratios.append(d / diffs[-1])
        diffs.append(d)
        pair = new
        if on_iterate is not None:
            on_iterate(k + 1, pair)
        ball = pair.sup() + float(
            np.max(np.linalg.norm(gridmod.gradient(state.grid, pair.psi), axis=1))
        )
        if scale > 0.0 and ball > 2.0 * config.ball_multiplier * scale:
            raise AdmissibilityError("iterate left the iteration ball")
        if len(ratios) >= 3 and all(r >= 1.0 for r in ratios[-3:]):
            raise NonContractionError(
                f"difference ratios {ratios[-3:]} show no contraction"
            )
        if d < tol:
            converged = True
            break
    if not converged:
        raise MaxIterationsError(f"no convergence within {config.max_iter} steps")

    margin = state.subsonic_margin(pair)
    resid, components = nonlinear_residual(state, pair, data)
    report = SolveReport(
        iterations=len(diffs),
        converged=True,
        diffs=diffs,
        contraction_factors=ratios,
        subsonic_margin=margin,
        nonlinear_residual=resid,
        residual_components=components,
        norm_summary=pair_norms(pair, state.grid, seed=config.seed),
        sigma=data.sigma,
        tol=tol,
        meta={"grid": list(state.grid.shape)},
    )
    return pair, report


# ---------------------------------------------------------------------------
# strong-form residuals


def edge_divergence(grid: Nozzle, scalar, flux_fn, z=None):
    """Compact conservative divergence of a flux built from edge states.

    For each axis the gradient of ``scalar`` at edge midpoints uses the
    two-point compact difference along the edge and averaged nodal central
    differences across it; ``flux_fn(coords_mid, z_mid, q_mid)`` returns the
    full flux vector at the edges and its axis component is differenced.
    Valid on interior nodes.
    """
    shape = grid.shape
    d = grid.dim
    f_m = np.asarray(scalar, dtype=float).reshape(shape)
    z_m = None if z is None else np.asarray(z, dtype=float).reshape(shape)
    grad_nodal = gridmod.gradient(grid, scalar).reshape(shape + (d,))
    coords = grid.coords.reshape(shape + (d,))
    div = np.zeros(shape)
    for a in range(d):
        h = grid.spacing[a]
        sl_lo = [slice(None)] * d
        sl_hi = [slice(None)] * d
        sl_lo[a] = slice(0, -1)
        sl_hi[a] = slice(1, None)
        sl_lo, sl_hi = tuple(sl_lo), tuple(sl_hi)
        q_e = np.empty(f_m[sl_lo].shape + (d,))
        q_e[..., a] = (f_m[sl_hi] - f_m[sl_lo]) / h
        for bax in range(d):
            if bax != a:
                q_e[..., bax] = 0.5 * (
                    grad_nodal[sl_lo + (bax,)] + grad_nodal[sl_hi + (bax,)]
                )
        z_e = None if z_m is None else 0.5 * (z_m[sl_lo] + z_m[sl_hi])
        mid = 0.5 * (coords[sl_lo] + coords[sl_hi])
        flux = flux_fn(mid.reshape(-1, d), None if z_e is None else z_e.ravel(),
                       q_e.reshape(-1, d))
        flux_a = flux[:, a].reshape(q_e.shape[:-1])
        inner = [slice(None)] * d
        inner[a] = slice(1, -1)
        take_hi = [slice(None)] * d
        take_hi[a] = slice(1, None)
        take_lo = [slice(None)] * d
        take_lo[a] = slice(0, -1)
        div[tuple(inner)] += (flux_a[tuple(take_hi)] - flux_a[tuple(take_lo)]) / h
    return div.ravel()


def _edge_flux_divergence(state: PicardState, phi, Phi):
    """Conservative flux-difference residual of the mass equation, interior."""
    law = state.law

    def flat_flux(coords_mid, z_e, q_e):
        rho_e = law.density(z_e, np.einsum("ni,ni->n", q_e, q_e))
        return rho_e[:, None] * q_e

    return edge_divergence(state.grid, phi, flat_flux, z=Phi)


def _compact_laplacian(grid: Nozzle, f):
    shape = grid.shape
    fm = np.asarray(f).reshape(shape)
    out = np.zeros(shape)
    d = grid.dim
    for a in range(d):
        h = grid.spacing[a]
        inner = [slice(None)] * d
        inner[a] = slice(1, -1)
        hi = [slice(None)] * d
        hi[a] = slice(2, None)
        lo = [slice(None)] * d
        lo[a] = slice(0, -2)
        out[tuple(inner)] += (fm[tuple(hi)] - 2.0 * fm[tuple(inner)] + fm[tuple(lo)]) / h ** 2
    return out.ravel()


def nonlinear_residual(state: PicardState, pair: FieldPair, data: BoundaryData):
    """Strong-form residuals of the nonlinear problem at (phi0+psi, Phi0+Psi).

    Interior equations use compact conservative stencils; boundary rows check
    the exit pressure, the wall-normal derivatives, and the Dirichlet traces.
    Returns the max residual and a per-component dictionary.
    """
    g = state.grid
    law = state.law
    c = state.coeffs
    phi = c.phi0 + pair.psi
    Phi = c.Phi0 + pair.Psi

    grad_phi = gridmod.gradient(g, phi)
    speed = np.einsum("ni,ni->n", grad_phi, grad_phi)
    rho = law.density(Phi, speed)

    interior = gridmod.interior_mask(g)
    mass = _edge_flux_divergence(state, phi, Phi)
    poisson = _compact_laplacian(g, Phi) - (rho - data.b)

    exit_idx = state.exit_idx
    exit_pressure = np.abs(law.pressure(rho[exit_idx]) - data.pex.ravel())

    grad_Phi = gridmod.gradient(g, Phi)
    wall_phi = 0.0
    wall_Phi = 0.0
    for axis, sign, fidx, _ in state.op.quad.wall_faces:
        wall_phi = max(wall_phi, float(np.max(np.abs(grad_phi[fidx, axis]))))
        wall_Phi = max(wall_Phi, float(np.max(np.abs(grad_Phi[fidx, axis]))))

    en_idx = state.op.quad.entrance_idx
    dirichlet_phi = float(np.max(np.abs(phi[en_idx])))
    dirichlet_Phi = max(
        float(np.max(np.abs(Phi[en_idx] - (data.B0 + data.phi_en.ravel())))),
        float(np.max(np.abs(Phi[exit_idx] - (data.B0 + data.phi_ex.ravel())))),
    )

    components = {
        "interior_mass": float(np.max(np.abs(mass[interior]))),
        "interior_poisson": float(np.max(np.abs(poisson[interior]))),
        "exit_pressure": float(np.max(exit_pressure)),
        "wall_flux_phi": wall_phi,
        "wall_flux_Phi": wall_Phi,
        "dirichlet_phi": dirichlet_phi,
        "dirichlet_Phi": dirichlet_Phi,
    }
    return max(components.values()), components


def residual_floor(state: PicardState, amplitudes: Amplitudes | None = None):
    """Pure-discretization residual: unperturbed data, zero perturbation pair."""
    data0 = perturb_data(state.background, state.grid, 0.0, amplitudes)
    N = state.grid.n_nodes
    return nonlinear_residual(state, FieldPair(np.zeros(N), np.zeros(N)), data0)


# ---------------------------------------------------------------------------
# diagnostics: norms and sweeps


def field_norms(f, grid: Nozzle, alpha: float = 0.5, seed: int = 42, n_pairs: int = 2000):
    """Diagnostic norms: sup, discrete H1 seminorm, sampled Holder seminorms."""
    f = np.asarray(f, dtype=float)
    quad = elliptic.build_quadrature(grid)
    h1_sq = 0.0
    for a in range(grid.dim):
        gf = quad.G[a] @ f
        h1_sq += float(np.sum(quad.w * gf * gf))
    rng = np.random.default_rng(seed)
    i = rng.integers(0, grid.n_nodes, size=n_pairs)
    j = rng.integers(0, grid.n_nodes, size=n_pairs)
    keep = i != j
    i, j = i[keep], j[keep]
    dist = np.linalg.norm(grid.coords[i] - grid.coords[j], axis=1)
    quot = np.abs(f[i] - f[j]) / dist ** alpha
    delta = gridmod.corner_distance(grid)
    weighted = np.minimum(delta[i], delta[j]) ** (1.0 + alpha) * quot
    return {
        "sup": float(np.max(np.abs(f))),
        "h1_seminorm": float(np.sqrt(h1_sq)),
        "calpha_sampled": float(np.max(quot)) if quot.size else 0.0,
        "weighted_calpha_sampled": float(np.max(weighted)) if quot.size else 0.0,
        "alpha": alpha,
    }


def pair_norms(pair: FieldPair, grid: Nozzle, alpha: float = 0.5, seed: int = 42):
    return {
        "psi": field_norms(pair.psi, grid, alpha, seed),
        "Psi": field_norms(pair.Psi, grid, alpha, seed),
    }


@dataclass
class SweepReport:
    sigmas: list
    sup_norms: list
    contraction: list
    slope_norm: float
    slope_contraction: float
    reports: list


def stability_sweep(
    config: IterationConfig,
    state: PicardState,
    sigmas,
    amplitudes: Amplitudes | None = None,
) -> SweepReport:
    """Fixed-point solves over a sigma ladder with log-log slope fits."""
    sigmas = [s for s in sigmas if s > 0.0]
    sups, contractions, reports = [], [], []
    for s in sigmas:
        data = perturb_data(state.background, state.grid, s, amplitudes)
        pair, report = run_fixed_point(config, data, state)
        sups.append(pair.sup())
        contractions.append(
            report.contraction_factors[0] if report.contraction_factors else np.nan
        )
        reports.append(report)
    slope_norm = float(np.polyfit(np.log(sigmas), np.log(sups), 1)[0])
    contr = np.asarray(contractions, dtype=float)
    good = np.isfinite(contr) & (contr > 0.0)
    if np.sum(good) >= 2:
        slope_contraction = float(
            np.polyfit(np.log(np.asarray(sigmas)[good]), np.log(contr[good]), 1)[0]
        )
    else:
        slope_contraction = float("nan")
    return SweepReport(
        sigmas=list(map(float, sigmas)),
        sup_norms=list(map(float, sups)),
        contraction=list(map(float, contractions)),
        slope_norm=slope_norm,
        slope_contraction=slope_contraction,
        reports=reports,
    )
