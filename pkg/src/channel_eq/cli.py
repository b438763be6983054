"""Command-line experiment drivers.

Subcommands: solve, forces, equilibrium, certify, convergence, wbound,
mesh.  A flat key=value config file (see config module) sets defaults;
flags override.  Exit codes: 0 success, 1 config/input error, 2 solver
non-convergence, 3 geometry or meshing error.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import equilibrium as eqm
from . import flow, forces, manufactured
from .config import RunConfig, load_config, validate_config
from .errors import GeometryError, InputError, MeshFailure, NoConvergence
from .flow import AuxKind, SolveConfig
from .geometry import DomainSpec, Rotation, Translation
from .meshing import generate_mesh
from .meshio import write_mesh
from .springs import TorsionSpring, VerticalSpring
from .vtkio import write_vtk


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # map usage errors onto exit code 1
        raise InputError(message)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return format(v, ".12g")
    return str(v)


def _write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="channel-eq", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("solve", "forces", "equilibrium", "certify", "convergence", "wbound", "mesh"):
        p = sub.add_parser(name)
        p.add_argument("--config", type=str, default=None)
        p.add_argument("--out", type=str, default=None)
        p.add_argument("--mode", choices=("translation", "rotation"), default=None)
        p.add_argument("--R", type=float, default=None)
        p.add_argument("--lambda", dest="lam", type=float, default=None)
        p.add_argument("--position", type=float, default=None)
        p.add_argument("--refine", type=int, default=None)
        p.add_argument("--grid", type=int, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--target-h", dest="target_h", type=float, default=None)
        p.add_argument("--grading", type=float, default=None)
        p.add_argument("--symmetrize", action="store_true", default=None)
    return parser


def _load(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        cfg = load_config(args.config, cfg)
    if args.out is not None:
        cfg.output.directory = args.out
    if args.mode is not None:
        cfg.geometry.mode = args.mode
    if args.R is not None:
        cfg.solver.R = args.R
    if args.lam is not None:
        cfg.solver.lam = args.lam
    if args.position is not None:
        cfg.geometry.position = args.position
    if args.refine is not None:
        cfg.mesh.refinements = args.refine
    if args.grid is not None:
        cfg.experiment.grid = args.grid
    if args.seed is not None:
        cfg.experiment.seed = args.seed
    if args.target_h is not None:
        cfg.mesh.target_h = args.target_h
    if args.grading is not None:
        cfg.mesh.grading = args.grading
    if args.symmetrize is not None:
        cfg.mesh.symmetrize = args.symmetrize
    return validate_config(cfg)


def _state(cfg: RunConfig):
    if cfg.geometry.mode == "translation":
        return Translation(cfg.geometry.position)
    return Rotation(cfg.geometry.position)


def _spec(cfg: RunConfig) -> DomainSpec:
    g = cfg.geometry
    return DomainSpec(g.L, g.d, g.X, _state(cfg), cfg.mesh.symmetrize)


def _solve_config(cfg: RunConfig) -> SolveConfig:
    s = cfg.solver
    return SolveConfig(
        R=s.R,
        lam=s.lam,
        newton_tol=s.newton_tol,
        max_newton=s.max_newton,
        picard_warmup=s.picard_warmup,
        continuation_steps=s.continuation_steps,
        initial=s.initial,
    )


def _resolution(cfg: RunConfig) -> eqm.Resolution:
    return eqm.Resolution(
        L=cfg.geometry.L,
        d=cfg.geometry.d,
        X=cfg.geometry.X,
        target_h=cfg.mesh.target_h,
        grading=cfg.mesh.grading,
        symmetrize=cfg.mesh.symmetrize,
        picard_warmup=cfg.solver.picard_warmup,
        continuation_steps=cfg.solver.continuation_steps,
        newton_tol=cfg.solver.newton_tol,
    )


def _force_family(cfg: RunConfig):
    if cfg.geometry.mode == "translation":
        return VerticalSpring(cfg.experiment.kappa, cfg.experiment.p, cfg.geometry.L - 1.0)
    return TorsionSpring(cfg.experiment.kappa)


def _positions(cfg: RunConfig):
    if cfg.experiment.positions:
        return list(cfg.experiment.positions)
    amp = (
        cfg.geometry.L - 1.0 if cfg.geometry.mode == "translation" else math.pi / 2.0
    ) - cfg.experiment.margin
    return list(eqm._symmetric_grid(amp, cfg.experiment.grid))


def run_solve(cfg: RunConfig) -> int:
    out = Path(cfg.output.directory)
    mesh = generate_mesh(_spec(cfg), cfg.mesh.target_h, cfg.mesh.grading)
    disc = flow.discretize(mesh)
    field = flow.solve_navier_stokes(mesh, _solve_config(cfg), disc)
    ext = flow.build_extension(mesh, disc)
    energy = flow.energy_norm(field, cfg.solver.lam, ext)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.output.vtk:
        write_vtk(field, out / "solution.vtk")
    if cfg.output.mesh_file:
        write_mesh(mesh, out / "mesh.txt")
    _write_csv(
        out / "summary.csv",
        ["R", "lambda", "mode", "position", "residual", "energy_norm", "iterations"],
        [
            [
                cfg.solver.R,
                cfg.solver.lam,
                cfg.geometry.mode,
                cfg.geometry.position,
                field.meta["residual"],
                energy,
                field.meta["iterations"],
            ]
        ],
    )
    print(f"solve: residual={_fmt(field.meta['residual'])} energy_norm={_fmt(energy)}")
    return 0


def run_forces(cfg: RunConfig) -> int:
    out = Path(cfg.output.directory)
    kind = AuxKind.LIFT if cfg.geometry.mode == "translation" else AuxKind.TORQUE
    rows = []
    for pos in _positions(cfg):
        spec = DomainSpec(
            cfg.geometry.L,
            cfg.geometry.d,
            cfg.geometry.X,
            Translation(pos) if cfg.geometry.mode == "translation" else Rotation(pos),
            cfg.mesh.symmetrize,
        )
        mesh = generate_mesh(spec, cfg.mesh.target_h, cfg.mesh.grading)
        disc = flow.discretize(mesh)
        field = flow.solve_navier_stokes(mesh, _solve_config(cfg), disc)
        w = flow.solve_aux_w(mesh, kind, disc)
        fr = forces.force_result(field, w, disc, kind)
        rows.append(
            [
                pos,
                cfg.solver.R,
                cfg.solver.lam,
                fr.kind,
                fr.boundary_value,
                fr.volume_value,
                fr.discrepancy,
            ]
        )
    _write_csv(
        out / "forces.csv",
        ["position", "R", "lambda", "kind", "boundary", "volume", "discrepancy"],
        rows,
    )
    print(f"forces: {len(rows)} rows -> {out / 'forces.csv'}")
    return 0


def run_equilibrium(cfg: RunConfig) -> int:
    out = Path(cfg.output.directory)
    report = eqm.find_roots(
        cfg.geometry.mode,
        cfg.solver.R,
        cfg.solver.lam,
        _force_family(cfg),
        grid_n=cfg.experiment.grid,
        root_tol=cfg.experiment.root_tol,
        resolution=_resolution(cfg),
        margin=cfg.experiment.margin,
    )
    _write_csv(
        out / "samples.csv",
        ["position", "value", "restoring", "volume", "boundary", "discrepancy", "converged", "error"],
        [
            [s.position, s.value, s.restoring, s.volume, s.boundary, s.discrepancy,
             s.converged, s.error or ""]
            for s in report.samples
        ],
    )
    _write_csv(
        out / "roots.csv",
        ["position", "bracket_lo", "bracket_hi", "residual"],
        [[r.position, r.bracket[0], r.bracket[1], r.residual] for r in report.roots],
    )
    if report.verdict is eqm.Verdict.UNIQUE_AT_ZERO:
        print(f"UNIQUE-AT-ZERO root={_fmt(report.roots[0].position)}")
    elif report.verdict is eqm.Verdict.MULTIPLE_ROOTS:
        print("MULTIPLE-ROOTS " + " ".join(_fmt(r.position) for r in report.roots))
    else:
        flagged = " ".join(_fmt(p) for p in report.regime["failed_points"])
        print(f"INCONCLUSIVE flagged=[{flagged}]")
    return 0


def run_certify(cfg: RunConfig) -> int:
    out = Path(cfg.output.directory)
    report = eqm.certify_uniqueness(
        cfg.geometry.mode,
        cfg.experiment.r_list,
        cfg.experiment.lambda_list,
        _force_family(cfg),
        grid_n=cfg.experiment.grid,
        resolution=_resolution(cfg),
        margin=cfg.experiment.margin,
    )
    _write_csv(
        out / "certification.csv",
        ["R", "lambda", "verdict", "root", "endpoint_dominance", "min_dominance_factor", "flags"],
        [
            [c.reynolds, c.lam, c.verdict.value,
             c.root if c.root is not None else "",
             c.endpoint_dominance, c.min_dominance_factor, ";".join(c.flags)]
            for c in report.cells
        ],
    )
    for c in report.cells:
        print(f"R={_fmt(c.reynolds)} lambda={_fmt(c.lam)}: {c.verdict.value}")
    return 0


def run_convergence(cfg: RunConfig) -> int:
    out = Path(cfg.output.directory)
    if cfg.mesh.refinements < 2:
        raise InputError("convergence study cannot fit rates with fewer than 2 refinements")
    study = manufactured.stokes_convergence_study(cfg.mesh.refinements)
    _write_csv(
        out / "rates.csv",
        ["level", "h", "velocity_l2", "velocity_grad", "pressure_l2",
         "rate_velocity_l2", "rate_velocity_grad", "rate_pressure_l2"],
        [
            [r.level, r.h, r.velocity_l2, r.velocity_grad, r.pressure_l2,
             study.rate_velocity_l2, study.rate_velocity_grad, study.rate_pressure_l2]
            for r in study.rows
        ],
    )
    print(
        f"rates: grad={_fmt(study.rate_velocity_grad)} "
        f"value={_fmt(study.rate_velocity_l2)} pressure={_fmt(study.rate_pressure_l2)}"
    )
    return 0


def run_wbound(cfg: RunConfig) -> int:
    out = Path(cfg.output.directory)
    res = _resolution(cfg)
    if cfg.geometry.mode == "translation":
        eps = cfg.experiment.epsilons
        if not eps:
            raise InputError("empty clearance ladder")
        hs = [cfg.geometry.L - 1.0 - 2.0 * e for e in eps]
        if any(h < 0 for h in hs):
            raise InputError("clearance exceeds the admissible interval")
        report = eqm.wbound_study(hs, res)
        _write_csv(
            out / "wbound.csv",
            ["position", "epsilon", "norm", "slope"],
            [[r.position, r.epsilon, r.norm, report.slope] for r in report.rows],
        )
        print(f"slope={_fmt(report.slope)}")
    else:
        thetas = cfg.experiment.thetas
        if not thetas:
            raise InputError("empty angle list")
        rows, ratio = eqm.wbound_rotation_study(thetas, res)
        _write_csv(
            out / "wbound.csv",
            ["position", "norm", "ratio"],
            [[r.position, r.norm, ratio] for r in rows],
        )
        print(f"ratio={_fmt(ratio)}")
    return 0


def run_mesh(cfg: RunConfig) -> int:
    out = Path(cfg.output.directory)
    mesh = generate_mesh(_spec(cfg), cfg.mesh.target_h, cfg.mesh.grading)
    out.mkdir(parents=True, exist_ok=True)
    write_mesh(mesh, out / "mesh.txt")
    print(
        f"mesh: nodes={mesh.num_nodes} triangles={mesh.num_triangles} "
        f"min_angle={_fmt(mesh.min_angle)}"
    )
    return 0


_COMMANDS = {
    "solve": run_solve,
    "forces": run_forces,
    "equilibrium": run_equilibrium,
    "certify": run_certify,
    "convergence": run_convergence,
    "wbound": run_wbound,
    "mesh": run_mesh,
}


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
        cfg = _load(args)
        return _COMMANDS[args.command](cfg)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NoConvergence as exc:
        print(
            f"error: no convergence: {exc} "
            f"(last residual {exc.residual}, R reached {exc.reynolds})",
            file=sys.stderr,
        )
        return 2
    except (GeometryError, MeshFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
