"""CLI front end: configuration, presets, quasi-static stepping, outputs.

Configs are YAML files; a ``preset:`` key merges one of the built-in
benchmark setups before applying the file's own overrides.  Outputs per
run:

* ``load_displacement.csv``  -- one row per completed time step;
* ``stats.csv``              -- one row per solver iteration, labelled by
  phase (mono / balance / plastic / damage / damage_hf / damage_al /
  outer);
* ``summary.csv``            -- per-step feasibility and iteration
  summary (constraint gaps, duals, complementarity, max delta, energy);
* ``snapshot_XXXX.vtk``      -- legacy-ASCII unstructured-grid fields
  (alpha, kappa, |eps_p|, displacement vector).

Exit codes: 0 on full completion, 2 on solver failure (partial outputs
are still written).
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, field, replace

import numpy as np
import yaml

from fracip.assembly import Discretization, SystemState, assemble_system
from fracip.errors import FracipError, ParseError, ValidationError
from fracip.ip_core import IpParams, SolveStats, monolithic_solve
from fracip.material import MaterialParams, tensor_norm_strain
from fracip.mesh import Mesh, generate_benchmark
from fracip.staggered import StaggeredParams, alternate_minimize

__all__ = [
    "RunConfig",
    "RunOutputs",
    "PRESETS",
    "load_config",
    "config_from_mapping",
    "run_simulation",
    "write_outputs",
    "mesh_convergence_study",
    "main",
]

SCHEMES = ("mono_ip", "stag_ip", "stag_hf", "stag_al", "mono_ip_ip", "stag_ip_ip", "stag_ip_hf")
PLASTIC_SCHEMES = ("mono_ip_ip", "stag_ip_ip", "stag_ip_hf")
HF_SCHEMES = ("stag_hf", "stag_ip_hf")


@dataclass(frozen=True)
class RunConfig:
    """Full simulation description."""

    material: MaterialParams
    scheme: str
    load_step: float
    n_steps: int
    tol: float
    benchmark: str | None = None
    h_c: float | None = None
    mesh_path: str | None = None
    driven_set: str = "top"
    driven_component: str = "y"
    selective_reduced_volumetric: bool = False
    snapshot_every: int = 0
    output_dir: str = "out"
    ip_max_iter: int = 400
    tau: float = 0.999
    crtol: float = 0.999
    max_outer: int = 1000
    al_gamma: float = 2.6e6
    tol_schedule: dict[int, float] = field(default_factory=dict)
    name: str = "run"

    @property
    def with_plasticity(self) -> bool:
        return self.scheme in PLASTIC_SCHEMES

    def ip_params(self, tol: float) -> IpParams:
        return IpParams(tol=tol, max_iter=self.ip_max_iter, tau=self.tau, crtol=self.crtol)

    def staggered_params(self, tol: float) -> StaggeredParams:
        damage = {
            "stag_ip": "interior_point",
            "stag_ip_ip": "interior_point",
            "stag_hf": "history_field",
            "stag_ip_hf": "history_field",
            "stag_al": "augmented_lagrangian",
        }[self.scheme]
        return StaggeredParams(
            tol=tol,
            max_outer=self.max_outer,
            ip=self.ip_params(tol),
            damage_scheme=damage,
            al_gamma=self.al_gamma,
        )

    def validate(self) -> None:
        if self.scheme not in SCHEMES:
            raise ValidationError(f"scheme: unknown scheme {self.scheme!r}")
        if self.load_step == 0.0:
            raise ValidationError("load_step: must be nonzero")
        if self.n_steps < 1:
            raise ValidationError("n_steps: must be >= 1")
        if self.tol <= 0:
            raise ValidationError("tol: must be positive")
        if self.scheme in HF_SCHEMES and self.selective_reduced_volumetric:
            raise ValidationError(
                "selective_reduced_volumetric: the history-field scheme is "
                "incompatible with selective reduced integration"
            )
        if self.benchmark is None and self.mesh_path is None:
            raise ValidationError("benchmark: either a benchmark or a mesh path is required")
        if self.benchmark is not None and self.h_c is None:
            raise ValidationError("h_c: required with a benchmark geometry")
        if self.driven_component not in ("x", "y"):
            raise ValidationError("driven_component: must be 'x' or 'y'")

    def build_mesh(self) -> Mesh:
        if self.mesh_path is not None:
            return Mesh.load(self.mesh_path)
        return generate_benchmark(self.benchmark, self.h_c)


_BRITTLE = dict(K=175000.0, G=80769.23, w0=101.25, model="AT2")
_DUCTILE = dict(K=71659.46, G=27296.28, w0=79.35, model="AT1", sigma_p=345.0, eta_p=4.0)


def _eta_d(ell_d: float, w0: float) -> float:
    return ell_d * np.sqrt(2.0 * w0)


PRESETS: dict[str, dict] = {
    # paper-resolution setups (heavy; not exercised by the test suite)
    "sen_tension": dict(
        benchmark="sen_tension",
        material=dict(_BRITTLE, eta_d=0.142),
        h_c=0.0025,
        scheme="stag_ip",
        load_step=1e-4,
        n_steps=70,
        tol=1e-5,
        driven_component="y",
    ),
    "sen_shear": dict(
        benchmark="sen_shear",
        material=dict(_BRITTLE, eta_d=0.142),
        h_c=0.0027,
        scheme="stag_ip",
        load_step=3e-4,
        n_steps=50,
        tol=1e-5,
        driven_component="x",
        selective_reduced_volumetric=True,
    ),
    "asym_notch": dict(
        benchmark="asym_notch",
        material=dict(_DUCTILE, eta_d=2.217),
        h_c=0.0533,
        scheme="stag_ip_ip",
        load_step=1e-2,
        n_steps=50,
        tol=1e-3,
        driven_component="y",
    ),
    # desk-scale setups: same geometry, enlarged damage length scale
    # (ell_d = 0.05 mm tension / 0.055 mm shear / 0.6 mm notch)
    "sen_tension_desk": dict(
        benchmark="sen_tension",
        material=dict(_BRITTLE, eta_d=_eta_d(0.05, 101.25)),
        h_c=0.025,
        scheme="stag_ip",
        load_step=2.5e-4,
        n_steps=62,
        tol=1e-5,
        driven_component="y",
    ),
    "sen_shear_desk": dict(
        benchmark="sen_shear",
        material=dict(_BRITTLE, eta_d=_eta_d(0.055, 101.25)),
        h_c=0.03,
        scheme="stag_ip",
        load_step=7e-4,
        n_steps=45,
        tol=1e-5,
        driven_component="x",
        selective_reduced_volumetric=True,
    ),
    "asym_notch_desk": dict(
        benchmark="asym_notch",
        material=dict(_DUCTILE, eta_d=_eta_d(0.6, 79.35)),
        h_c=0.3636,
        scheme="stag_ip_ip",
        load_step=2e-2,
        n_steps=55,
        tol=1e-3,
        driven_component="y",
    ),
}


def config_from_mapping(data: dict, name: str = "run") -> RunConfig:
    """Build and validate a RunConfig from a plain mapping (preset-aware)."""
    data = dict(data or {})
    preset = data.pop("preset", None)
    merged: dict = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ValidationError(f"preset: unknown preset {preset!r}")
        merged.update(PRESETS[preset])
        name = preset
    mat_map = dict(merged.pop("material", {}))
    mat_override = data.pop("material", {})
    if not isinstance(mat_override, dict):
        raise ValidationError("material: expected a mapping")
    mat_map.update(mat_override)
    merged.update(data)

    schedule = merged.pop("tol_schedule", {}) or {}
    try:
        schedule = {int(k): float(v) for k, v in schedule.items()}
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"tol_schedule: {exc}") from exc

    try:
        material = MaterialParams(**mat_map)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"material: {exc}") from exc

    known = {f for f in RunConfig.__dataclass_fields__ if f not in ("material", "tol_schedule", "name")}
    unknown = set(merged) - known
    if unknown:
        raise ValidationError(f"{sorted(unknown)[0]}: unknown configuration key")
    try:
        cfg = RunConfig(material=material, tol_schedule=schedule, name=name, **merged)
    except TypeError as exc:
        raise ValidationError(str(exc)) from exc
    cfg.validate()
    return cfg


def load_config(path) -> RunConfig:
    """Parse a YAML run configuration."""
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    except OSError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ParseError(f"{path}: top level must be a mapping")
    return config_from_mapping(data, name=os.path.splitext(os.path.basename(path))[0])


@dataclass
class StepSummary:
    step: int
    u_imposed: float
    force: float
    n_iterations: int
    n_outer: int
    energy: float
    max_delta: float
    min_gap_kappa: float
    min_gap_alpha_lo: float
    min_gap_alpha_hi: float
    min_dual: float
    max_complementarity: float
    max_kappa: float
    max_alpha: float
    force_balance_error: float


@dataclass
class RunOutputs:
    config: RunConfig
    load_disp: list[tuple[int, float, float]] = field(default_factory=list)
    stats_rows: list[tuple] = field(default_factory=list)
    summaries: list[StepSummary] = field(default_factory=list)
    snapshots: list[tuple[int, np.ndarray, np.ndarray, np.ndarray, np.ndarray]] = field(
        default_factory=list
    )
    outer_records: dict[int, list] = field(default_factory=dict)
    failed_step: int | None = None
    failure_message: str = ""
    mesh: Mesh | None = None
    final_state: SystemState | None = None

    @property
    def completed(self) -> bool:
        return self.failed_step is None


STATS_HEADER = (
    "step,phase,iteration,res_u,res_kappa,res_alpha,mu,sigma,delta,t_prim,t_dual,energy"
)


def _stats_rows_from(step: int, stats: SolveStats):
    for r in stats.iterations:
        yield (
            step, r.phase, r.iteration, r.res_u, r.res_kappa, r.res_alpha,
            r.mu, r.sigma, r.delta, r.t_prim, r.t_dual, r.energy,
        )


def _nodal_eps_p_norm(disc: Discretization, state: SystemState) -> np.ndarray:
    norms = np.sqrt(
        state.eps_p_n[..., 0] ** 2
        + state.eps_p_n[..., 1] ** 2
        + state.eps_p_n[..., 2] ** 2
        + 2.0 * (0.5 * state.eps_p_n[..., 3]) ** 2
    ).mean(axis=1)
    acc = np.zeros(disc.n_nodes)
    cnt = np.zeros(disc.n_nodes)
    for c in range(4):
        np.add.at(acc, disc.mesh.elements[:, c], norms)
        np.add.at(cnt, disc.mesh.elements[:, c], 1.0)
    return acc / np.maximum(cnt, 1.0)


def run_simulation(config: RunConfig) -> RunOutputs:
    """Apply the load program step by step with the configured scheme."""
    config.validate()
    mesh = config.build_mesh()
    disc = Discretization(mesh, selective_reduced=config.selective_reduced_volumetric)
    state = SystemState.zeros(disc)
    plastic = config.with_plasticity
    history = np.zeros((disc.n_elements, 4)) if config.scheme in HF_SCHEMES else None
    outputs = RunOutputs(config=config, mesh=mesh)

    driven = disc.driven_dofs(config.driven_set, config.driven_component)
    if "bottom" in mesh.dirichlet_sets and config.driven_set != "bottom":
        opposite = disc.driven_dofs("bottom", config.driven_component)
    else:
        opposite = np.empty(0, dtype=np.int64)

    for step in range(1, config.n_steps + 1):
        u_imposed = step * config.load_step
        state.u[driven] = u_imposed
        tol_step = config.tol_schedule.get(step, config.tol)
        try:
            if config.scheme.startswith("mono"):
                stats = monolithic_solve(
                    disc, state, config.material, config.ip_params(tol_step),
                    with_plasticity=plastic,
                )
                records = []
            else:
                records, stats, history = alternate_minimize(
                    disc, state, config.material, config.staggered_params(tol_step),
                    with_plasticity=plastic, history=history,
                )
        except FracipError as exc:
            outputs.failed_step = step
            outputs.failure_message = f"step {step}: {exc}"
            break

        asm = assemble_system(
            disc, state, config.material, with_plasticity=plastic, need_jacobian=False
        )
        force = float(asm.r_u[driven].sum())
        force_opposite = float(asm.r_u[opposite].sum()) if opposite.size else -force

        gaps_k = state.kappa - state.kappa_n
        gaps_lo = state.alpha - state.alpha_n
        gaps_hi = 1.0 - state.alpha
        comp = max(
            float(np.abs(state.lam_kappa * gaps_k).max()),
            float(np.abs(state.lam_d * gaps_lo).max()),
            float(np.abs(state.lam_at * gaps_hi).max()),
        )
        min_dual = min(
            float(state.lam_kappa.min()), float(state.lam_d.min()), float(state.lam_at.min())
        )

        outputs.load_disp.append((step, u_imposed, force))
        outputs.stats_rows.extend(_stats_rows_from(step, stats))
        for rec in records:
            outputs.stats_rows.append(
                (
                    step, "outer", rec.iteration, rec.res_u, rec.res_kappa, rec.res_alpha,
                    rec.mu_damage, 0.0, 0.0, 0.0, 0.0, rec.energy,
                )
            )
        outputs.outer_records[step] = records
        outputs.summaries.append(
            StepSummary(
                step=step,
                u_imposed=u_imposed,
                force=force,
                n_iterations=stats.n_iterations,
                n_outer=len(records),
                energy=asm.energy,
                max_delta=stats.max_delta,
                min_gap_kappa=float(gaps_k.min()),
                min_gap_alpha_lo=float(gaps_lo.min()),
                min_gap_alpha_hi=float(gaps_hi.min()),
                min_dual=min_dual,
                max_complementarity=comp,
                max_kappa=float(state.kappa.max()),
                max_alpha=float(state.alpha.max()),
                force_balance_error=abs(force + force_opposite),
            )
        )
        if config.snapshot_every and step % config.snapshot_every == 0:
            outputs.snapshots.append(
                (
                    step,
                    state.alpha.copy(),
                    state.kappa.copy(),
                    _nodal_eps_p_norm(disc, state),
                    state.u.copy(),
                )
            )
        state.commit(disc, config.material, with_plasticity=plastic)

    outputs.final_state = state
    return outputs


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _write_csv(path, header: str, rows) -> None:
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_vtk(path, mesh: Mesh, alpha, kappa, eps_p_norm, u) -> None:
    """Legacy-ASCII VTK unstructured grid with the nodal fields."""
    nn, ne = mesh.n_nodes, mesh.n_elements
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write("fracip snapshot\n")
        fh.write("ASCII\n")
        fh.write("DATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {nn} double\n")
        for x, y in mesh.nodes:
            fh.write(f"{x!r} {y!r} 0.0\n")
        fh.write(f"CELLS {ne} {5 * ne}\n")
        for el in mesh.elements:
            fh.write("4 " + " ".join(str(int(i)) for i in el) + "\n")
        fh.write(f"CELL_TYPES {ne}\n")
        for _ in range(ne):
            fh.write("9\n")
        fh.write(f"POINT_DATA {nn}\n")
        for name, data in (("alpha", alpha), ("kappa", kappa), ("eps_p_norm", eps_p_norm)):
            fh.write(f"SCALARS {name} double\n")
            fh.write("LOOKUP_TABLE default\n")
            for v in data:
                fh.write(f"{v!r}\n")
        fh.write("VECTORS displacement double\n")
        for n in range(nn):
            fh.write(f"{u[2 * n]!r} {u[2 * n + 1]!r} 0.0\n")


def write_outputs(outputs: RunOutputs, out_dir) -> None:
    """Write load-displacement, stats, summary CSVs and VTK snapshots."""
    os.makedirs(out_dir, exist_ok=True)
    _write_csv(
        os.path.join(out_dir, "load_displacement.csv"),
        "step,u_imposed_mm,force_N",
        outputs.load_disp,
    )
    _write_csv(os.path.join(out_dir, "stats.csv"), STATS_HEADER, outputs.stats_rows)
    _write_csv(
        os.path.join(out_dir, "summary.csv"),
        "step,u_imposed_mm,force_N,n_iterations,n_outer,energy,max_delta,"
        "min_gap_kappa,min_gap_alpha_lo,min_gap_alpha_hi,min_dual,"
        "max_complementarity,max_kappa,max_alpha,force_balance_error",
        (
            (
                s.step, s.u_imposed, s.force, s.n_iterations, s.n_outer, s.energy,
                s.max_delta, s.min_gap_kappa, s.min_gap_alpha_lo, s.min_gap_alpha_hi,
                s.min_dual, s.max_complementarity, s.max_kappa, s.max_alpha,
                s.force_balance_error,
            )
            for s in outputs.summaries
        ),
    )
    for step, alpha, kappa, epn, u in outputs.snapshots:
        write_vtk(
            os.path.join(out_dir, f"snapshot_{step:04d}.vtk"),
            outputs.mesh, alpha, kappa, epn, u,
        )
    if outputs.failed_step is not None:
        with open(os.path.join(out_dir, "FAILED"), "w") as fh:
            fh.write(outputs.failure_message + "\n")


def mesh_convergence_study(config: RunConfig, h_fractions, out_dir=None):
    """Re-run the configured staggered benchmark at several mesh sizes.

    ``h_fractions`` are critical element sizes as fractions of the damage
    length ell_d.  Returns (list of RunOutputs, list of study rows).
    """
    if config.scheme.startswith("mono"):
        raise ValidationError("scheme: the convergence study expects a staggered scheme")
    all_outputs = []
    rows = []
    for frac in h_fractions:
        h_c = float(frac) * config.material.ell_d
        cfg = replace(config, h_c=h_c, name=f"{config.name}_h{frac}")
        out = run_simulation(cfg)
        all_outputs.append(out)
        if out_dir is not None:
            write_outputs(out, os.path.join(out_dir, f"h_{frac}"))
        forces = np.array([r[2] for r in out.load_disp])
        drops = -np.diff(forces)
        drop_step = int(np.argmax(drops)) + 2 if len(forces) > 1 else 1
        max_kappa_at_drop = next(
            (s.max_kappa for s in out.summaries if s.step == drop_step), 0.0
        )
        n_outer = sum(s.n_outer for s in out.summaries)
        n_damage = sum(
            rec.n_damage for recs in out.outer_records.values() for rec in recs
        )
        n_plastic = sum(
            rec.n_plastic for recs in out.outer_records.values() for rec in recs
        )
        rows.append(
            (
                frac, h_c, out.mesh.n_elements, out.mesh.n_nodes,
                float(forces.max()) if len(forces) else 0.0, drop_step,
                max_kappa_at_drop, n_outer, n_damage,
                (n_damage / n_outer) if n_outer else 0.0, n_plastic,
            )
        )
    if out_dir is not None:
        _write_csv(
            os.path.join(out_dir, "study_summary.csv"),
            "h_fraction,h_c_mm,n_elements,n_nodes,peak_force_N,drop_step,"
            "max_kappa_at_drop,total_staggered_iterations,total_damage_subiters,"
            "avg_damage_subiters_per_staggered,total_plastic_subiters",
            rows,
        )
    return all_outputs, rows


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="fracip",
        description="Phase-field fracture solver with interior-point constraint handling.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one simulation from a YAML config")
    p_run.add_argument("config")
    p_run.add_argument("--output", default=None, help="output directory (default: from config)")

    p_study = sub.add_parser("study", help="mesh-convergence study over h_c/ell_d fractions")
    p_study.add_argument("config")
    p_study.add_argument("--h", required=True, help="comma-separated h_c/ell_d fractions")
    p_study.add_argument("--output", default=None)

    sub.add_parser("presets", help="list the built-in benchmark presets")

    args = parser.parse_args(argv)
    threads = os.environ.get("FRACIP_THREADS")
    if threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, threads)

    if args.command == "presets":
        for name, preset in PRESETS.items():
            mat = preset["material"]
            print(
                f"{name}: {preset['benchmark']} scheme={preset['scheme']} "
                f"model={mat['model']} h_c={preset['h_c']} step={preset['load_step']} "
                f"n_steps={preset['n_steps']} tol={preset['tol']}"
            )
        return 0

    try:
        config = load_config(args.config)
    except (ParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    if args.command == "run":
        out_dir = args.output or config.output_dir
        outputs = run_simulation(config)
        write_outputs(outputs, out_dir)
        if not outputs.completed:
            print(f"error: {outputs.failure_message}", file=sys.stderr)
            return 2
        print(f"completed {config.n_steps} steps -> {out_dir}")
        return 0

    # study
    try:
        fractions = [float(tok) for tok in args.h.split(",") if tok]
    except ValueError:
        print("error: --h expects comma-separated numbers", file=sys.stderr)
        return 1
    out_dir = args.output or config.output_dir
    all_outputs, _rows = mesh_convergence_study(config, fractions, out_dir)
    if any(not o.completed for o in all_outputs):
        print("error: at least one study run failed", file=sys.stderr)
        return 2
    print(f"study completed -> {out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
