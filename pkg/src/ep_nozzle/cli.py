"""Command-line front end.

Subcommands: background | solve | sweep | perturb-domain | verify.
Exit codes: 0 success, 1 failed verification/usage, 2 background breakdown,
3 non-contraction or iteration budget, 4 admissibility refusal/exit.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import domainmap, driver, elliptic, export, grid as gridmod, ode1d
from .errors import (
    AdmissibilityError,
    EPError,
    MaxIterationsError,
    NonContractionError,
    SonicBreakdown,
    VacuumBreakdown,
)
from .gas import GasLaw

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_BREAKDOWN = 2
EXIT_NONCONTRACTION = 3
EXIT_ADMISSIBILITY = 4


def _add_common(parser):
    parser.add_argument("--config", type=Path, default=None, help="config file (INI sections)")
    parser.add_argument("--out", type=Path, default=None, help="output directory")
    parser.add_argument("--format", choices=("csv", "vtk"), default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--emit-template", action="store_true",
                        help="print the documented config template and exit")


def _load(args):
    cfg = cfgmod.load_config(args.config) if args.config else cfgmod.default_config()
    if args.out is not None:
        cfg.values["output"]["directory"] = str(args.out)
    if args.format is not None:
        cfg.values["output"]["format"] = args.format
    if args.seed is not None:
        cfg.values["output"]["seed"] = int(args.seed)
    return cfg


def _law(cfg):
    g = cfg.values["gas"]
    return GasLaw(gamma=g["gamma"], k0=g["k0"], rho_floor=g["rho_floor"])


def _grid(cfg):
    n = cfg.values["nozzle"]
    if n["dim"] == 2:
        extents = ((n["cross_min"], n["cross_max"]),)
        shape = (n["nodes_cross"], n["nodes_axial"])
    else:
        extents = ((n["cross_min"], n["cross_max"]), (n["cross2_min"], n["cross2_max"]))
        shape = (n["nodes_cross"], n["nodes_cross2"], n["nodes_axial"])
    return gridmod.build_grid(dim=n["dim"], cross_extents=extents, L=n["length"], shape=shape)


def _ode_steps(cfg, grid):
    # the PDE grid's axial stations must land on ODE nodes
    base = cfg.values["background"]["ode_steps"]
    intervals = grid.shape[-1] - 1
    return intervals * max(1, round(base / intervals))


def _background(cfg, grid=None):
    b = cfg.values["background"]
    law = _law(cfg)
    n_steps = _ode_steps(cfg, grid) if grid is not None else b["ode_steps"]
    params = ode1d.OneDParams(J0=b["J0"], rho0=b["rho0"], E0=b["E0"],
                              L=cfg.values["nozzle"]["length"], b=b["b0"])
    return ode1d.integrate_ivp(law, params, n_steps)


def _amplitudes(cfg):
    p = cfg.values["perturbation"]
    return driver.Amplitudes(phi_en=p["c_phi_en"], phi_ex=p["c_phi_ex"],
                             pex=p["c_pex"], bernoulli=p["c_bernoulli"],
                             charge=p["c_charge"])


def _iteration_config(cfg):
    it = cfg.values["iteration"]
    return driver.IterationConfig(
        ball_multiplier=it["ball_multiplier"], max_iter=it["max_iter"],
        tol_floor=it["tol_floor"], tol_scale=it["tol_scale"],
        seed=cfg.values["output"]["seed"],
    )


def _outdir(cfg):
    out = Path(cfg.values["output"]["directory"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_fields(cfg, grid, fields, path_base, coords=None):
    if cfg.values["output"]["format"] == "vtk":
        if coords is None:
            export.export_field_vtk(grid, fields, path_base.with_suffix(".vtk"))
        else:
            export.export_deformed_vtk(grid, coords, fields, path_base.with_suffix(".vtk"))
    else:
        export.export_field_csv(grid, fields, path_base.with_suffix(".csv"), coords=coords)


def _echo_config(cfg, outdir):
    (outdir / "config_echo.ini").write_text(cfgmod.serialize_config(cfg))


def cmd_background(args) -> int:
    cfg = _load(args)
    outdir = _outdir(cfg)
    _echo_config(cfg, outdir)
    law = _law(cfg)
    try:
        sol = _background(cfg)
    except (SonicBreakdown, VacuumBreakdown) as exc:
        print(f"background breakdown: {exc}", file=sys.stderr)
        return EXIT_BREAKDOWN
    rows = {
        "x": sol.xs, "rho": sol.rho, "u": sol.u, "E": sol.E,
        "phi0": sol.phi0, "Phi0": sol.Phi0,
    }
    with open(outdir / "profiles.csv", "w") as fh:
        fh.write(",".join(rows) + "\n")
        for vals in zip(*rows.values()):
            fh.write(",".join(format(v, ".17g") for v in vals) + "\n")
    ok, margins = ode1d.appendixA_admissible(
        law, sol.params.b, sol.params.rho0, sol.params.E0, sol.J0,
        cfg.values["nozzle"]["length"],
    )
    summary = {
        "Phi_en0": sol.phi_en0, "B00": sol.B00, "pex0": sol.pex0,
        "nu0": sol.nu0, "monotone_margins": margins, "monotone_admissible": ok,
    }
    (outdir / "background.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK if sol.nu0 > 0.0 else EXIT_BREAKDOWN


def _solve_common(cfg, corrections_map=None, outdir=None):
    law = _law(cfg)
    grid = _grid(cfg)
    background = _background(cfg, grid)
    state = driver.PicardState(law, background, grid)
    data = driver.perturb_data(background, grid,
                               cfg.values["perturbation"]["sigma"], _amplitudes(cfg))
    itcfg = _iteration_config(cfg)
    on_iterate = None
    if outdir is not None and cfg.values["output"]["snapshots"]:
        def on_iterate(k, pair):
            _write_fields(cfg, grid, {"psi": pair.psi, "Psi": pair.Psi},
                          outdir / f"snapshot_{k:03d}")
    if corrections_map is None:
        pair, report = driver.run_fixed_point(itcfg, data, state, on_iterate=on_iterate)
    else:
        pair, report = domainmap.solve_perturbed(corrections_map, itcfg, data, state)
    return law, grid, state, data, pair, report


def _report_exit(exc) -> int:
    if isinstance(exc, (NonContractionError, MaxIterationsError)):
        print(f"iteration failure: {exc}", file=sys.stderr)
        return EXIT_NONCONTRACTION
    if isinstance(exc, AdmissibilityError):
        print(f"admissibility: {exc}", file=sys.stderr)
        return EXIT_ADMISSIBILITY
    if isinstance(exc, (SonicBreakdown, VacuumBreakdown)):
        print(f"background breakdown: {exc}", file=sys.stderr)
        return EXIT_BREAKDOWN
    raise exc


def cmd_solve(args) -> int:
    cfg = _load(args)
    outdir = _outdir(cfg)
    _echo_config(cfg, outdir)
    try:
        law, grid, state, data, pair, report = _solve_common(cfg, outdir=outdir)
    except EPError as exc:
        return _report_exit(exc)
    fields = {
        "psi": pair.psi, "Psi": pair.Psi,
        "phi": state.coeffs.phi0 + pair.psi, "Phi": state.coeffs.Phi0 + pair.Psi,
    }
    _write_fields(cfg, grid, fields, outdir / "fields")
    (outdir / "report.json").write_text(report.to_json())
    print(report.to_json())
    return EXIT_OK if report.converged and report.subsonic_margin > 0.0 else EXIT_NONCONTRACTION


def cmd_sweep(args) -> int:
    cfg = _load(args)
    outdir = _outdir(cfg)
    _echo_config(cfg, outdir)
    law = _law(cfg)
    grid = _grid(cfg)
    try:
        background = _background(cfg, grid)
        state = driver.PicardState(law, background, grid)
        sweep = driver.stability_sweep(_iteration_config(cfg), state,
                                       cfg.values["sweep"]["sigmas"], _amplitudes(cfg))
    except EPError as exc:
        return _report_exit(exc)
    payload = {
        "sigmas": sweep.sigmas,
        "sup_norms": sweep.sup_norms,
        "contraction_factors": sweep.contraction,
        "slope_norm": sweep.slope_norm,
        "slope_contraction": sweep.slope_contraction,
    }
    tag = hashlib.sha256(json.dumps(payload["sigmas"]).encode()).hexdigest()[:10]
    (outdir / f"sweep_{tag}.json").write_text(json.dumps(payload, indent=2, sort_keys=True))
    print(json.dumps(payload, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_perturb_domain(args) -> int:
    cfg = _load(args)
    outdir = _outdir(cfg)
    _echo_config(cfg, outdir)
    grid = _grid(cfg)
    eps = cfg.values["domain_map"]["eps"]
    dmap = domainmap.shear_map(
        eps, cfg.values["nozzle"]["length"], dim=grid.dim,
        cross_extents=grid.cross_extents,
    )
    try:
        law, grid, state, data, pair, report = _solve_common(cfg, corrections_map=dmap)
    except EPError as exc:
        return _report_exit(exc)
    resid, parts = domainmap.pushforward_residual(dmap, state, pair, data)
    report.meta["pushforward_residual"] = parts
    coords = dmap.map_coords(grid.coords)
    fields = {"psi": pair.psi, "Psi": pair.Psi}
    _write_fields(cfg, grid, fields, outdir / "fields_deformed", coords=coords)
    (outdir / "report_perturbed.json").write_text(report.to_json())
    print(report.to_json())
    return EXIT_OK


def _verify_battery(cfg):
    """Small-scale invariant battery; returns list of (name, passed, detail)."""
    rng = np.random.default_rng(cfg.values["output"]["seed"])
    results = []
    law = GasLaw(gamma=2.0, k0=1.0)

    # structural identity of the flux/charge derivatives
    from . import coeffs as cfmod
    z = rng.uniform(0.1, 1.0, size=2000)
    q = rng.uniform(-0.4, 0.4, size=(2000, 2))
    der = cfmod.derivatives(law, z, q)
    worst = float(np.max(np.abs(der.dA_dz + der.dB_dq)))
    results.append(("structural_identity", worst < 1e-13, f"max |dA_dz + dB_dq| = {worst:.2e}"))

    # enthalpy roundtrip
    s = rng.uniform(-1.0, 3.0, size=10000)
    err = float(np.max(np.abs(law.enthalpy(law.enthalpy_inverse(s)) - s)))
    results.append(("enthalpy_roundtrip", err < 1e-12, f"max roundtrip error = {err:.2e}"))

    # equilibrium preservation and RK4 order
    const = ode1d.integrate_ivp(law, ode1d.OneDParams(0.5, 1.0, 0.0, 1.0, 1.0), 256)
    drift = float(np.max(np.abs(const.rho - 1.0)) + np.max(np.abs(const.E)))
    results.append(("equilibrium_exact", drift < 1e-12, f"drift = {drift:.2e}"))
    params = ode1d.OneDParams(0.5, 1.2, 0.1, 1.0, 1.0)
    ref = ode1d.integrate_ivp(law, params, 4096).rho[-1]
    errs = [abs(ode1d.integrate_ivp(law, params, n).rho[-1] - ref) for n in (32, 64, 128)]
    orders = [np.log2(errs[i] / errs[i + 1]) for i in range(2)]
    ok = all(3.7 <= p <= 4.3 for p in orders)
    results.append(("rk4_order", ok, f"observed orders = {['%.2f' % p for p in orders]}"))

    # discrete cancellation and coercivity on a small grid
    grid = gridmod.build_grid(dim=2, shape=(17, 33))
    bg = ode1d.integrate_ivp(law, params, 1024)
    coeffs = elliptic.make_coeffs(law, bg, grid)
    op = elliptic.DiscreteOperator(coeffs, grid)
    worst_cross = 0.0
    for _ in range(20):
        xi = rng.standard_normal(grid.n_nodes)
        eta = rng.standard_normal(grid.n_nodes)
        xi[op.dirichlet_v] = 0.0
        eta[op.dirichlet_W] = 0.0
        total, scale = elliptic.cross_term_sum(op, op.quad, coeffs, xi, eta)
        worst_cross = max(worst_cross, abs(total) / max(scale, 1e-30))
    results.append(("coupling_cancellation", worst_cross < 1e-12,
                    f"relative cross-term sum = {worst_cross:.2e}"))
    data0 = driver.perturb_data(bg, grid, 0.0)
    system = elliptic.assemble(
        coeffs, grid,
        elliptic.LinearData(W_en=data0.Psi_en, W_ex=data0.Psi_ex), op=op,
    )
    ratio = elliptic.coercivity_check(system, trials=40, seed=cfg.values["output"]["seed"])
    lam0 = min(coeffs.lam, 1.0)
    results.append(("coercivity", ratio >= 0.9 * lam0,
                    f"min Rayleigh ratio = {ratio:.4f}, bound = {0.9 * lam0:.4f}"))

    # sigma = 0 fixed point is the background
    state = driver.PicardState(law, bg, grid)
    pair, report = driver.run_fixed_point(driver.IterationConfig(), data0, state)
    ok = report.iterations == 1 and pair.sup() < 1e-12
    results.append(("trivial_fixed_point", ok,
                    f"iterations = {report.iterations}, sup = {pair.sup():.2e}"))
    return results


def cmd_verify(args) -> int:
    cfg = _load(args)
    results = _verify_battery(cfg)
    failed = 0
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        failed += 0 if ok else 1
    return EXIT_OK if failed == 0 else EXIT_FAIL


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ep-nozzle",
        description="Steady subsonic Euler-Poisson nozzle flows: backgrounds, "
                    "fixed-point solves, stability sweeps, wall perturbations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    handlers = {
        "background": cmd_background,
        "solve": cmd_solve,
        "sweep": cmd_sweep,
        "perturb-domain": cmd_perturb_domain,
        "verify": cmd_verify,
    }
    for name in handlers:
        _add_common(sub.add_parser(name))
    args = parser.parse_args(argv)
    if args.emit_template:
        print(cfgmod.TEMPLATE, end="")
        return EXIT_OK
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
