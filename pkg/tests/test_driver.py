import numpy as np
import pytest

from ep_nozzle import driver
from ep_nozzle.driver import (
    Amplitudes,
    FieldPair,
    IterationConfig,
    PicardState,
    field_norms,
    nonlinear_residual,
    perturb_data,
    residual_floor,
    run_fixed_point,
    stability_sweep,
)
from ep_nozzle.errors import AdmissibilityError
from ep_nozzle.gas import GasLaw
from ep_nozzle.grid import build_grid
from ep_nozzle.ode1d import OneDParams, integrate_ivp

LAW = GasLaw(gamma=2.0, k0=1.0)


def _background(n_axial_intervals, params=OneDParams(0.5, 1.2, 0.1, 1.0, 1.0)):
    n = n_axial_intervals * max(1, round(1024 / n_axial_intervals))
    return integrate_ivp(LAW, params, n)


@pytest.fixture(scope="module")
def state_small():
    g = build_grid(dim=2, shape=(17, 33))
    return PicardState(LAW, _background(32), g)


@pytest.fixture(scope="module")
def state_medium():
    g = build_grid(dim=2, shape=(33, 65))
    return PicardState(LAW, _background(64), g)


class TestPerturbData:
    def test_zero_sigma_is_unperturbed(self, state_small):
        data = perturb_data(state_small.background, state_small.grid, 0.0)
        assert np.max(np.abs(data.Psi_en)) == 0.0
        assert np.max(np.abs(data.Psi_ex)) == 0.0
        assert np.max(np.abs(data.b - state_small.coeffs.b_bg)) == 0.0
        assert np.max(np.abs(data.pex - state_small.background.pex0)) == 0.0

    def test_magnitudes_bounded_by_sigma(self, state_small):
        bg, g = state_small.background, state_small.grid
        s = 2e-3
        tol = s * (1 + 1e-12)
        data = perturb_data(bg, g, s)
        assert np.max(np.abs(data.phi_en - bg.phi_en0)) <= tol
        assert np.max(np.abs(data.phi_ex)) <= tol
        assert np.max(np.abs(data.pex - bg.pex0)) <= tol
        assert abs(data.B0 - bg.B00) <= tol
        assert np.max(np.abs(data.b - state_small.coeffs.b_bg)) <= tol

    def test_compatibility_of_modes(self, state_small):
        # cosine modes: wall-normal derivative vanishes analytically at edges
        g = state_small.grid
        data = perturb_data(state_small.background, g, 1e-3)
        edge = np.gradient(data.phi_ex, g.axes[0], edge_order=2)
        h = g.spacing[0]
        assert abs(edge[0]) < 10 * h ** 2 * 1e-3 / h  # O(h^2) * amplitude scale
        assert abs(edge[-1]) < 10 * h ** 2 * 1e-3 / h

    def test_amplitude_validation(self, state_small):
        with pytest.raises(AdmissibilityError):
            perturb_data(state_small.background, state_small.grid, 1e-3,
                         Amplitudes(pex=1.5))
        with pytest.raises(AdmissibilityError):
            perturb_data(state_small.background, state_small.grid, -1.0)


class TestFixedPoint:
    def test_sigma_zero_trivial(self, state_small):
        data = perturb_data(state_small.background, state_small.grid, 0.0)
        pair, report = run_fixed_point(IterationConfig(), data, state_small)
        assert report.iterations == 1
        assert pair.sup() < 1e-12

    def test_first_step_scales_with_sigma(self, state_small):
        s = 1e-3
        data = perturb_data(state_small.background, state_small.grid, s)
        N = state_small.grid.n_nodes
        out = state_small.step(FieldPair(np.zeros(N), np.zeros(N)), data)
        assert out.sup() < 50 * s
        assert out.sup() > 0.05 * s

    def test_contraction_of_the_map(self, state_small):
        s = 1e-3
        data = perturb_data(state_small.background, state_small.grid, s)
        N = state_small.grid.n_nodes
        rng = np.random.default_rng(0)
        base = FieldPair(np.zeros(N), np.zeros(N))
        bump = FieldPair(
            1e-4 * np.cos(np.pi * state_small.grid.coords[:, 0])
            * state_small.grid.coords[:, 1] ** 2,
            1e-4 * rng.standard_normal(N) * 0.0,
        )
        out1 = state_small.step(base, data)
        out2 = state_small.step(bump, data)
        din = bump.sup()
        dout = float(
            np.max(np.abs(out1.psi - out2.psi)) + np.max(np.abs(out1.Psi - out2.Psi))
        )
        assert dout < din  # contraction
        assert dout < 100 * s * din  # linear-in-sigma Lipschitz scale

    def test_geometric_convergence_and_margin(self, state_medium):
        data = perturb_data(state_medium.background, state_medium.grid, 1e-3)
        pair, report = run_fixed_point(IterationConfig(), data, state_medium)
        assert report.iterations <= 15
        assert all(r < 1.0 for r in report.contraction_factors)
        assert report.subsonic_margin > 0.0
        assert pair.sup() == pytest.approx(report.diffs[0], rel=0.1)

    def test_uniqueness_from_two_starts(self, state_small):
        s = 5e-4
        cfg = IterationConfig()
        data = perturb_data(state_small.background, state_small.grid, s)
        g = state_small.grid
        N = g.n_nodes
        pair1, _ = run_fixed_point(cfg, data, state_small)
        amp = cfg.ball_multiplier * s / 4.0
        start = FieldPair(
            amp * np.cos(np.pi * g.coords[:, 0]) * (g.coords[:, 1] / g.L) ** 2,
            amp * np.cos(np.pi * g.coords[:, 0]) * np.sin(np.pi * g.coords[:, 1] / g.L),
        )
        pair2, _ = run_fixed_point(cfg, data, state_small, start=start)
        assert np.max(np.abs(pair1.psi - pair2.psi)) < 1e-8
        assert np.max(np.abs(pair1.Psi - pair2.Psi)) < 1e-8

    def test_oversized_sigma_refused(self, state_small):
        sigma = state_small.coeffs.delta3  # M * sigma far beyond delta3
        data = perturb_data(state_small.background, state_small.grid, min(sigma, 0.2))
        with pytest.raises(AdmissibilityError):
            run_fixed_point(IterationConfig(), data, state_small)

    def test_grid_and_sigma_independent_response(self, state_small, state_medium):
        # Theta(sigma) with grid-stable constants
        ratios = []
        for state in (state_small, state_medium):
            for s in (5e-4, 1e-3):
                data = perturb_data(state.background, state.grid, s)
                pair, _ = run_fixed_point(IterationConfig(), data, state)
                ratios.append(pair.sup() / s)
        assert max(ratios) / min(ratios) < 1.3


class TestResidual:
    def test_floor_is_pure_discretization(self, state_small, state_medium):
        f_small, parts_small = residual_floor(state_small)
        f_medium, parts_medium = residual_floor(state_medium)
        assert f_small > 0
        # second-order floor: refining by 2 shrinks it by about 4
        assert f_small / f_medium == pytest.approx(4.0, rel=0.5)

    def test_converged_residual_near_floor(self, state_medium):
        floor, _ = residual_floor(state_medium)
        data = perturb_data(state_medium.background, state_medium.grid, 1e-3)
        pair, report = run_fixed_point(IterationConfig(), data, state_medium)
        assert report.nonlinear_residual <= 4.0 * floor

    def test_exit_pressure_component(self, state_medium):
        floor, _ = residual_floor(state_medium)
        data = perturb_data(state_medium.background, state_medium.grid, 1e-3)
        pair, report = run_fixed_point(IterationConfig(), data, state_medium)
        assert report.residual_components["exit_pressure"] <= 10.0 * floor

    def test_manufactured_pair_sees_quadratic_remainder(self, state_small):
        # inserting a pair that solves the linear problem only, the nonlinear
        # residual is dominated by the dropped quadratic terms
        s = 2e-3
        data = perturb_data(state_small.background, state_small.grid, s)
        N = state_small.grid.n_nodes
        one_step = state_small.step(FieldPair(np.zeros(N), np.zeros(N)), data)
        pair, report = run_fixed_point(IterationConfig(), data, state_small)
        r_one = nonlinear_residual(state_small, one_step, data)[0]
        r_fix = report.nonlinear_residual
        assert r_fix <= r_one


class TestNorms:
    def test_constant_field(self, state_small):
        g = state_small.grid
        n = field_norms(np.full(g.n_nodes, 3.0), g)
        assert n["sup"] == 3.0
        assert n["h1_seminorm"] < 1e-12
        assert n["calpha_sampled"] < 1e-12

    def test_linear_axial_field_h1(self, state_small):
        g = state_small.grid
        n = field_norms(g.coords[:, -1].copy(), g)
        volume = 1.0  # unit cross-section times unit length
        assert n["h1_seminorm"] ** 2 == pytest.approx(volume, rel=1e-12)

    def test_lipschitz_bound_on_sampled_seminorm(self, state_small):
        g = state_small.grid
        f = 2.0 * g.coords[:, 0] + 1.0 * g.coords[:, 1]
        lip = np.sqrt(5.0)
        alpha = 0.5
        diam = np.sqrt(2.0)
        n = field_norms(f, g, alpha=alpha)
        assert n["calpha_sampled"] <= lip * diam ** (1 - alpha) + 1e-12


class TestSweep:
    def test_slopes(self, state_medium):
        sweep = stability_sweep(
            IterationConfig(), state_medium, [1e-4, 2e-4, 4e-4, 8e-4]
        )
        assert sweep.slope_norm == pytest.approx(1.0, abs=0.1)
        assert sweep.slope_contraction == pytest.approx(1.0, abs=0.2)

    def test_zero_sigma_excluded(self, state_small):
        sweep = stability_sweep(IterationConfig(), state_small, [0.0, 1e-4, 2e-4])
        assert sweep.sigmas == [1e-4, 2e-4]


def test_3d_fixed_point_smoke():
    g = build_grid(dim=3, cross_extents=((0, 1), (0, 1)), shape=(9, 9, 17))
    state = PicardState(LAW, _background(16), g)
    data = perturb_data(state.background, g, 2e-4)
    pair, report = run_fixed_point(IterationConfig(), data, state)
    assert report.converged
    assert all(r < 1.0 for r in report.contraction_factors)
    assert report.subsonic_margin > 0.0
    floor, _ = residual_floor(state)
    assert report.nonlinear_residual <= 4.0 * floor
