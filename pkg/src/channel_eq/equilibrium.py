"""Equilibrium functions of the coupled fluid-obstacle problem and their
numerical certification.

psi(h) = restoring(h) + volume lift, chi(theta) = restoring(theta) - volume
torque; zeros are steady equilibria.  The volume formulas carry an explicit
Reynolds prefactor, so creeping flow reduces both functions to the bare
restoring force.  Grid scans pair +/- positions on mirrored meshes, which
makes the odd symmetry of the sampled functions a solver check rather than
a discretization accident.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.optimize import brentq

from . import flow, forces
from .errors import InputError, MeshFailure, NoConvergence
from .flow import AuxKind, SolveConfig
from .geometry import DomainSpec, Rotation, Translation
from .meshing import Mesh, generate_mesh, mirror_mesh


class Verdict(Enum):
    UNIQUE_AT_ZERO = "UNIQUE-AT-ZERO"
    MULTIPLE_ROOTS = "MULTIPLE-ROOTS"
    INCONCLUSIVE = "INCONCLUSIVE"


@dataclass(frozen=True)
class Resolution:
    """Geometry and discretization knobs for equilibrium evaluations."""

    L: float = 2.0
    d: float = 0.5
    X: float = 6.0
    target_h: float = 0.1
    grading: float = 0.25
    symmetrize: bool = True
    picard_warmup: int = 3
    continuation_steps: int | None = None
    newton_tol: float = 1e-10

    def spec(self, state) -> DomainSpec:
        return DomainSpec(self.L, self.d, self.X, state, self.symmetrize)

    def solve_config(self, reynolds, lam) -> SolveConfig:
        return SolveConfig(
            R=reynolds,
            lam=lam,
            newton_tol=self.newton_tol,
            picard_warmup=self.picard_warmup,
            continuation_steps=self.continuation_steps,
        )


@dataclass
class Sample:
    """One equilibrium-function evaluation with its force breakdown."""

    position: float
    value: float = math.nan
    restoring: float = math.nan
    volume: float = math.nan
    boundary: float = math.nan
    discrepancy: float = math.nan
    converged: bool = False
    error: str | None = None

    def __float__(self):
        return self.value


@dataclass
class RootInfo:
    position: float
    bracket: tuple[float, float]
    residual: float


@dataclass
class EquilibriumReport:
    mode: str
    samples: list[Sample]
    roots: list[RootInfo]
    verdict: Verdict
    regime: dict = field(default_factory=dict)


def _worker_count(n_tasks: int) -> int:
    cap = os.environ.get("CHANNEL_EQ_THREADS")
    try:
        cap = int(cap) if cap else (os.cpu_count() or 1)
    except ValueError:
        raise InputError(f"CHANNEL_EQ_THREADS must be an integer, got {cap!r}")
    return max(1, min(cap, n_tasks))


def _state(mode: str, position: float):
    if mode == "translation":
        return Translation(position)
    if mode == "rotation":
        return Rotation(position)
    raise InputError(f"mode must be 'translation' or 'rotation', got {mode!r}")


def _evaluate_on_mesh(mode, position, reynolds, lam, force, resolution, mesh) -> Sample:
    sample = Sample(position=position, restoring=float(force.value(position)))
    try:
        disc = flow.discretize(mesh)
        u = flow.solve_navier_stokes(mesh, resolution.solve_config(reynolds, lam), disc)
        kind = AuxKind.LIFT if mode == "translation" else AuxKind.TORQUE
        w = flow.solve_aux_w(mesh, kind, disc)
        fr = forces.force_result(u, w, disc, kind)
    except (NoConvergence, MeshFailure) as exc:
        sample.error = f"{type(exc).__name__}: {exc}"
        return sample
    sample.volume = fr.volume_value
    sample.boundary = fr.boundary_value
    sample.discrepancy = fr.discrepancy
    if mode == "translation":
        sample.value = sample.restoring + fr.volume_value
    else:
        sample.value = sample.restoring - fr.volume_value
    sample.converged = True
    return sample


def _evaluate(mode, position, reynolds, lam, force, resolution) -> Sample:
    spec = resolution.spec(_state(mode, position))
    try:
        mesh = generate_mesh(spec, resolution.target_h, resolution.grading)
    except MeshFailure as exc:
        return Sample(
            position=position,
            restoring=float(force.value(position)),
            error=f"MeshFailure: {exc}",
        )
    return _evaluate_on_mesh(mode, position, reynolds, lam, force, resolution, mesh)


def psi(h, reynolds, lam, force, resolution: Resolution = Resolution()) -> Sample:
    """Vertical equilibrium function: restoring force plus volume lift.

    Exactly the restoring force in creeping flow (the volume lift carries a
    Reynolds prefactor).  The returned sample records the volume and
    boundary lift values and their gap.
    """
    return _evaluate("translation", float(h), reynolds, lam, force, resolution)


def chi(theta, reynolds, lam, force, resolution: Resolution = Resolution()) -> Sample:
    """Torsional equilibrium function: restoring torque minus volume torque."""
    return _evaluate("rotation", float(theta), reynolds, lam, force, resolution)


def _symmetric_grid(amplitude: float, n: int) -> np.ndarray:
    """Uniform grid on [-amplitude, amplitude] with exact +/- pairing."""
    if n < 2:
        raise InputError("grid needs at least 2 points")
    if n % 2:
        half = np.linspace(0.0, amplitude, n // 2 + 1)
        return np.concatenate([-half[:0:-1], half])
    step = 2.0 * amplitude / (n - 1)
    half = amplitude - step * np.arange(n // 2)[::-1]
    return np.concatenate([-half[::-1], half])


def _scan(mode, reynolds, lam, force, grid, resolution) -> list[Sample]:
    """Evaluate the equilibrium function on a +/- paired grid; the negative
    member of each pair runs on the mirrored mesh of its partner."""
    nonneg = [p for p in grid if p >= 0.0]

    def eval_pair(p):
        spec = resolution.spec(_state(mode, p))
        try:
            mesh = generate_mesh(spec, resolution.target_h, resolution.grading)
        except MeshFailure as exc:
            bad = f"MeshFailure: {exc}"
            out = [Sample(position=p, restoring=float(force.value(p)), error=bad)]
            if p > 0.0 and -p in grid:
                out.append(Sample(position=-p, restoring=float(force.value(-p)), error=bad))
            return out
        out = [_evaluate_on_mesh(mode, p, reynolds, lam, force, resolution, mesh)]
        if p > 0.0 and -p in grid:
            out.append(
                _evaluate_on_mesh(
                    mode, -p, reynolds, lam, force, resolution, mirror_mesh(mesh, "x2")
                )
            )
        return out

    results = {}
    with ThreadPoolExecutor(max_workers=_worker_count(len(nonneg))) as pool:
        for group in pool.map(eval_pair, nonneg):
            for s in group:
                results[s.position] = s
    return [results[p] for p in grid]


def find_roots(
    mode: str,
    reynolds: float,
    lam: float,
    force,
    grid_n: int = 17,
    root_tol: float = 1e-4,
    resolution: Resolution = Resolution(),
    margin: float = 0.02,
) -> EquilibriumReport:
    """Scan the admissible interval, bracket sign changes, and polish each
    root to root_tol with a bisection-secant hybrid.

    The verdict is UNIQUE-AT-ZERO only when every sample converged, exactly
    one root was found, it sits within root_tol of the origin, and the
    function agrees in sign with the position at all other samples.
    """
    if grid_n < 8:
        raise InputError(f"grid_n must be at least 8, got {grid_n}")
    amp = (resolution.L - 1.0 if mode == "translation" else math.pi / 2.0) - margin
    if amp <= 0:
        raise InputError("margin leaves no admissible interval")
    grid = _symmetric_grid(amp, grid_n)
    samples = _scan(mode, reynolds, lam, force, grid, resolution)

    failures = [s for s in samples if not s.converged]
    roots: list[RootInfo] = []
    polish_failed = False
    for left, right in zip(samples[:-1], samples[1:]):
        if not (left.converged and right.converged):
            continue
        if left.value == 0.0:
            roots.append(RootInfo(left.position, (left.position, left.position), 0.0))
            continue
        if left.value * right.value < 0.0:
            recorded = {}

            def func(x):
                s = _evaluate(mode, x, reynolds, lam, force, resolution)
                if not s.converged:
                    raise NoConvergence(s.error or "evaluation failed")
                recorded[x] = s.value
                return s.value

            recorded[left.position] = left.value
            recorded[right.position] = right.value
            try:
                root = brentq(
                    func,
                    left.position,
                    right.position,
                    xtol=root_tol,
                    rtol=8.0 * np.finfo(float).eps,
                )
            except NoConvergence:
                polish_failed = True
                continue
            nearest = min(recorded, key=lambda x: abs(x - root))
            roots.append(
                RootInfo(float(root), (left.position, right.position), abs(recorded[nearest]))
            )

    verdict = Verdict.INCONCLUSIVE
    if not failures and not polish_failed:
        sign_ok = all(
            s.value * s.position > 0.0 for s in samples if abs(s.position) > root_tol
        )
        if len(roots) == 1 and abs(roots[0].position) <= root_tol and sign_ok:
            verdict = Verdict.UNIQUE_AT_ZERO
        elif len(roots) > 1:
            verdict = Verdict.MULTIPLE_ROOTS

    return EquilibriumReport(
        mode=mode,
        samples=samples,
        roots=roots,
        verdict=verdict,
        regime={
            "R": reynolds,
            "lambda": lam,
            "resolution": resolution,
            "failed_points": [s.position for s in failures],
            "margin": margin,
        },
    )


def derivative_probe(
    mode: str,
    reynolds: float,
    lam: float,
    force,
    position: float = 0.0,
    step: float = 0.05,
    resolution: Resolution = Resolution(),
) -> float:
    """Central finite difference of the equilibrium function; the +/- pair
    shares a mirrored mesh, every call re-meshes from scratch."""
    lo, hi = position - step, position + step
    # constructing the specs validates that both probe positions are admissible
    resolution.spec(_state(mode, lo))
    resolution.spec(_state(mode, hi))
    if position == 0.0:
        mesh = generate_mesh(
            resolution.spec(_state(mode, hi)), resolution.target_h, resolution.grading
        )
        s_hi = _evaluate_on_mesh(mode, hi, reynolds, lam, force, resolution, mesh)
        s_lo = _evaluate_on_mesh(
            mode, lo, reynolds, lam, force, resolution, mirror_mesh(mesh, "x2")
        )
    else:
        s_hi = _evaluate(mode, hi, reynolds, lam, force, resolution)
        s_lo = _evaluate(mode, lo, reynolds, lam, force, resolution)
    for s in (s_lo, s_hi):
        if not s.converged:
            raise NoConvergence(s.error or "probe evaluation failed")
    return (s_hi.value - s_lo.value) / (2.0 * step)


@dataclass
class CertificationCell:
    reynolds: float
    lam: float
    verdict: Verdict
    root: float | None
    endpoint_dominance: bool
    min_dominance_factor: float
    flags: list[str]


@dataclass
class CertificationReport:
    mode: str
    cells: list[CertificationCell]

    @property
    def all_unique(self) -> bool:
        return all(c.verdict is Verdict.UNIQUE_AT_ZERO for c in self.cells)


def certify_uniqueness(
    mode: str,
    reynolds_list,
    lam_list,
    force,
    grid_n: int = 9,
    resolution: Resolution = Resolution(),
    margin: float = 0.02,
) -> CertificationReport:
    """Uniqueness table over a regime grid: root scan verdict plus the
    endpoint-dominance audit (the restoring force must beat twice the
    measured fluid load at the most extreme admissible samples)."""
    cells = []
    for reynolds in reynolds_list:
        for lam in lam_list:
            rep = find_roots(mode, reynolds, lam, force, grid_n, 1e-4, resolution, margin)
            flags = [f"non-converged@{p:+.3f}" for p in rep.regime["failed_points"]]
            ends = [rep.samples[0], rep.samples[-1]]
            factors = []
            for s in ends:
                if s.converged:
                    load = abs(s.value - s.restoring)
                    factors.append(abs(s.restoring) / max(load, 1e-300))
                else:
                    flags.append(f"endpoint-unavailable@{s.position:+.3f}")
            dominance = bool(factors) and all(f >= 2.0 for f in factors)
            root = rep.roots[0].position if len(rep.roots) == 1 else None
            cells.append(
                CertificationCell(
                    reynolds=reynolds,
                    lam=lam,
                    verdict=rep.verdict,
                    root=root,
                    endpoint_dominance=dominance,
                    min_dominance_factor=min(factors) if factors else math.nan,
                    flags=flags,
                )
            )
    return CertificationReport(mode=mode, cells=cells)


@dataclass
class WboundRow:
    position: float
    epsilon: float
    norm: float


@dataclass
class WboundReport:
    rows: list[WboundRow]
    slope: float


def wbound_study(h_list, resolution: Resolution = Resolution()) -> WboundReport:
    """Dirichlet norm of the lift auxiliary field along a wall-approach
    ladder, with the least-squares exponent of norm against clearance.

    Raises InputError when the clearance values are degenerate (no fit).
    """
    h_list = [float(h) for h in h_list]
    if not h_list:
        raise InputError("empty position list")
    eps = [(resolution.L - 1.0 - abs(h)) / 2.0 for h in h_list]
    if len(set(eps)) < 2:
        raise InputError("degenerate clearance ladder: exponent fit undefined")
    rows = []
    for h, e in zip(h_list, eps):
        mesh = generate_mesh(
            resolution.spec(Translation(h)), resolution.target_h, resolution.grading
        )
        w = flow.solve_aux_w(mesh, AuxKind.LIFT)
        rows.append(WboundRow(position=h, epsilon=e, norm=forces.gradient_norm(w)))
    slope = float(
        np.polyfit(np.log([r.epsilon for r in rows]), np.log([r.norm for r in rows]), 1)[0]
    )
    return WboundReport(rows=rows, slope=slope)


def wbound_rotation_study(theta_list, resolution: Resolution = Resolution()):
    """Norm ladder of the torque auxiliary field over rotation angles;
    returns (rows, max/min ratio) to audit the uniform bound."""
    theta_list = [float(t) for t in theta_list]
    if not theta_list:
        raise InputError("empty angle list")
    rows = []
    for t in theta_list:
        mesh = generate_mesh(
            resolution.spec(Rotation(t)), resolution.target_h, resolution.grading
        )
        w = flow.solve_aux_w(mesh, AuxKind.TORQUE)
        rows.append(WboundRow(position=t, epsilon=math.nan, norm=forces.gradient_norm(w)))
    norms = [r.norm for r in rows]
    return rows, max(norms) / min(norms)
