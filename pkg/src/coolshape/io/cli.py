"""Command-line driver: solve, optimize, verify and compare."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from ..adjoint import CostConfig, evaluate_cost, heat_transfer
from ..compare import compare_states
from ..fem import Integrator
from ..mesh import FacetMarker, MeshError
from ..optimizer import OptimizationError, run
from ..physics import boundary_mass_flux, channel_mass_fluxes, solve_state
from ..verification import (
    convergence_study,
    finite_difference_check,
    l2_errors,
    manufactured_forcing,
    taylor_test,
)
from . import config as cfgmod
from .vtk import atomic_write, state_fields, write_state, write_vtk

logger = logging.getLogger("coolshape")

# pass/fail thresholds of the verification report
ORDER_TARGETS = {"velocity_order": 3.0, "pressure_order": 2.0, "temperature_order": 2.0}
ORDER_TOL = 0.3
FD_TOL = 1e-3
TAYLOR_MIN_SLOPE = 1.8
FD_KAPPA_SCALE = 100.0


def _json_default(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not serializable: {type(x).__name__}")


def write_json(path, data):
    atomic_write(path, json.dumps(data, indent=2, default=_json_default) + "\n")


def _flux_bins(cfg, mesh):
    """Cut strips for the porous block: the generator's channel count when known."""
    if mesh.n_channels:
        return mesh.n_channels
    gen = cfg.mesh.generator
    return int(gen.n_channels) if cfg.mesh.path is None and gen is not None else None


def _fluxes(state, n_bins):
    try:
        return channel_mass_fluxes(state, n_bins=n_bins).tolist()
    except (MeshError, ValueError) as exc:
        logger.warning("per-channel fluxes unavailable: %s", exc)
        return []


def _cost_for(cfg, state, itg):
    return CostConfig.initialize(
        state, q_des=cfg.cost.q_des, q_des_relative=cfg.cost.q_des_relative or 0.0, itg=itg
    )


def _state_summary(state, values, n_bins):
    return {
        "Q": values.Q,
        "J": values.J,
        "J1": values.J1,
        "J2": values.J2,
        "J3": values.J3,
        "inflow": -boundary_mass_flux(state, FacetMarker.INLET),
        "outflow": boundary_mass_flux(state, FacetMarker.OUTLET),
        "channel_mass_fluxes": _fluxes(state, n_bins),
    }


def cmd_solve(cfg, out):
    mesh = cfg.build_mesh()
    forcing = None
    if cfg.verification.body_force == "manufactured":
        try:
            forcing = manufactured_forcing(mesh, cfg.physical)
        except ValueError as exc:
            raise cfgmod.ConfigError("/verification/body_force", str(exc)) from exc
    itg = Integrator(mesh)
    state = solve_state(mesh, cfg.physical, cfg.darcy, supg=cfg.supg, forcing=forcing, itg=itg)
    summary = {"model": cfg.model, "n_vertices": mesh.n_vertices, "n_cells": mesh.n_cells}
    try:
        cost = _cost_for(cfg, state, itg)
    except MeshError as exc:
        # e.g. a verification mesh without channels: no target velocity, so no cost
        logger.warning("cost functional unavailable: %s", exc)
        summary.update(
            Q=heat_transfer(state, itg),
            inflow=-boundary_mass_flux(state, FacetMarker.INLET),
            outflow=boundary_mass_flux(state, FacetMarker.OUTLET),
            notes=[f"cost functional unavailable: {exc}"],
        )
    else:
        summary.update(_state_summary(state, evaluate_cost(state, cost, itg), _flux_bins(cfg, mesh)))
        summary.update(q_des=cost.q_des, weights=[cost.lambda1, cost.lambda2, cost.lambda3], notes=list(cost.notes))
    if forcing is not None:
        eu, ep, eT = l2_errors(state)
        summary["manufactured_l2_errors"] = {"velocity": eu, "pressure": ep, "temperature": eT}
    write_state(out / "state_0000.vtk", state)
    write_json(out / "summary.json", summary)
    return summary


def cmd_optimize(cfg, out):
    def save(k, ev):
        scalars, vectors = state_fields(ev.state)
        write_vtk(out / f"mesh_{k:04d}.vtk", ev.mesh, scalars, vectors, title=f"iterate {k}")

    mesh0 = cfg.build_mesh()
    bins = _flux_bins(cfg, mesh0)
    result = run(
        mesh0,
        cfg.physical,
        cfg.darcy,
        elas=cfg.elasticity,
        opt=cfg.optimizer,
        supg=cfg.supg,
        q_des=cfg.cost.q_des,
        q_des_relative=cfg.cost.q_des_relative or 0.0,
        callback=save,
    )
    atomic_write(out / "history.csv", result.history.to_csv())
    summary = {
        "model": cfg.model,
        "iterations": len(result.history) - 1,
        "q_des": result.cost.q_des,
        "weights": [result.cost.lambda1, result.cost.lambda2, result.cost.lambda3],
        "step_scale": result.step_scale,
        "initial": _state_summary(result.initial.state, result.initial.cost, bins),
        "final": _state_summary(result.final.state, result.final.cost, bins),
        "termination_reason": result.history.reason,
    }
    write_json(out / "summary.json", summary)
    return summary


def cmd_verify(cfg, out):
    checks = []

    study = convergence_study(supg=False)
    for key, target in ORDER_TARGETS.items():
        value = study[key]
        checks.append({"name": key, "value": value, "target": target, "tolerance": ORDER_TOL,
                       "passed": abs(value - target) <= ORDER_TOL})

    mesh = cfg.build_mesh()
    stiff = dataclasses.replace(cfg.physical, kappa=cfg.physical.kappa * FD_KAPPA_SCALE)
    fd = finite_difference_check(mesh, stiff, cfg.darcy, supg=False)
    worst = max(r["rel_error"] for r in fd)
    checks.append({"name": "fd_gradient_rel_error", "value": worst, "tolerance": FD_TOL,
                   "passed": worst <= FD_TOL, "directions": fd})

    taylor = taylor_test(mesh, cfg.physical, cfg.darcy, supg=cfg.supg)
    checks.append({"name": "taylor_slope", "value": taylor["slope"], "minimum": TAYLOR_MIN_SLOPE,
                   "passed": taylor["slope"] >= TAYLOR_MIN_SLOPE, **taylor})

    report = {
        "model": cfg.model,
        "passed": all(c["passed"] for c in checks),
        "convergence": study,
        "checks": checks,
    }
    write_json(out / "verify.json", report)
    return report


def compare_rows(report):
    rows = []
    for field in ("pressure", "temperature"):
        for norm in ("l2", "l1", "linf"):
            rows.append((field, norm, "", report[field][norm]))
    fl = report.get("channel_fluxes")
    if fl:
        for k, (a, b) in enumerate(zip(fl["reference"], fl["other"])):
            rows.append(("channel_flux", "reference", k, a))
            rows.append(("channel_flux", "other", k, b))
            rows.append(("channel_flux", "relative", k, (b - a) / a if a else b - a))
        rows.append(("channel_flux", "max_relative", "", fl["max_relative"]))
    return rows


def cmd_compare(cfgs, out):
    a, b = cfgs
    if a.physical != b.physical:
        logger.warning("the two configurations use different physical parameters")
    meshes = [c.build_mesh() for c in cfgs]
    states = [solve_state(m, c.physical, c.darcy, supg=c.supg) for m, c in zip(meshes, cfgs)]
    bins = _flux_bins(a, meshes[0]) or _flux_bins(b, meshes[1])
    report = compare_states(*states, n_bins=bins)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("quantity", "measure", "channel", "value"))
    for field, measure, channel, value in compare_rows(report):
        writer.writerow((field, measure, channel, repr(float(value))))
    atomic_write(out / "compare.csv", buf.getvalue())
    return report


def build_parser():
    parser = argparse.ArgumentParser(prog="coolshape", description="Microchannel cooler shape optimization.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("solve", "solve the state equations and write fields and a summary"),
        ("optimize", "run the shape optimization"),
        ("verify", "run convergence, finite-difference and Taylor checks"),
    ):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="JSON configuration (defaults when omitted)")
        p.add_argument("--output-dir", help="overrides output_dir of the configuration")
    p = sub.add_parser("compare", help="compare two models on matching geometry")
    p.add_argument("--config", action="append", required=True, help="give exactly twice; the first is the reference")
    p.add_argument("--output-dir", help="overrides output_dir of the first configuration")
    return parser


def _load(path):
    return cfgmod.load(path) if path else cfgmod.RunConfig()


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "compare":
            if len(args.config) != 2:
                parser.error("compare needs exactly two --config arguments")
            cfgs = [_load(p) for p in args.config]
            primary = cfgs[0]
        else:
            primary = _load(args.config)
        out = Path(args.output_dir or primary.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / f"config_{args.command}.json", json.loads(primary.dumps()))
        if args.command == "solve":
            cmd_solve(primary, out)
        elif args.command == "optimize":
            cmd_optimize(primary, out)
        elif args.command == "verify":
            report = cmd_verify(primary, out)
            print("verification", "passed" if report["passed"] else "FAILED")
        else:
            cmd_compare(cfgs, out)
    except cfgmod.ConfigError as exc:
        print(f"configuration error at {exc}", file=sys.stderr)
        return 2
    except (OptimizationError, MeshError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"outputs written to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
