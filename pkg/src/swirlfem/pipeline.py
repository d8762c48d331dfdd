"""Pipeline stages behind the CLI: mesh -> run -> analyze, plus verify.

cmd_run is resumable: checkpoints carry the solver state and the diagnostics
rows accumulated so far, so an interrupted run continues from the latest
checkpoint and finishes with byte-identical outputs.  cmd_analyze recomputes
diagnostics from saved snapshots; because snapshots round-trip every float
exactly, its CSV matches the in-run one byte for byte (at equal cadences).
"""

import os
import re
from pathlib import Path

from . import vtkio
from .config import RunConfig
from .diagnostics import compute_record
from .geometry import DomainKind, DomainSpec, build_straight_mesh, \
    cross_section_planes, map_to_torus
from .initcond import sample_initial_state
from .solver import StepOperator
from .verify import convergence_study
from .vtkio import record_to_row, row_to_record

OUTPUT_ROOT_ENV = "SWIRLFEM_OUTPUT_ROOT"

_CHECKPOINT_RE = re.compile(r"checkpoint_(\d{6})\.npz$")


def resolve_output_dir(cfg: RunConfig, out_dir=None) -> Path:
    """Output directory: explicit argument, else config value, optionally
    rooted at $SWIRLFEM_OUTPUT_ROOT."""
    path = Path(out_dir) if out_dir is not None else Path(cfg.output_dir)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not path.is_absolute():
        path = Path(root) / path
    path.mkdir(parents=True, exist_ok=True)
    return path


def build_mesh(cfg: RunConfig):
    """(spec, mesh) from a config: straight lattice, bent if curved, with
    cross-section planes bound to the mesh."""
    spec = cfg.domain_spec()
    if spec.kind is DomainKind.CURVED:
        straight = DomainSpec(DomainKind.STRAIGHT, r_max=cfg.r_max, a=cfg.a)
        mesh = map_to_torus(build_straight_mesh(straight, cfg.n_r, cfg.n_z),
                            spec)
    else:
        mesh = build_straight_mesh(spec, cfg.n_r, cfg.n_z)
    cross_section_planes(spec, cfg.n_planes, mesh=mesh)
    return spec, mesh


def initial_state(cfg: RunConfig, mesh, spec):
    return sample_initial_state(mesh, cfg.profile(), spec,
                                cfg.profile_params(),
                                frame_radius=cfg.frame_radius)


def cmd_mesh(cfg: RunConfig, out_dir=None) -> Path:
    """Build the mesh and export it as legacy VTK."""
    out = resolve_output_dir(cfg, out_dir)
    _, mesh = build_mesh(cfg)
    path = out / "mesh.vtk"
    vtkio.write_mesh_vtk(path, mesh)
    return path


def _latest_checkpoint(out: Path):
    best = None
    for p in out.iterdir():
        m = _CHECKPOINT_RE.match(p.name)
        if m:
            step = int(m.group(1))
            if best is None or step > best[0]:
                best = (step, p)
    return best


def cmd_run(cfg: RunConfig, out_dir=None, max_steps=None):
    """Advance the configured simulation, emitting snapshots, checkpoints and
    the diagnostics CSV; resumes from the latest checkpoint if one exists.

    max_steps limits the number of new steps this invocation takes (used to
    exercise interruption/resume); the diagnostics CSV is flushed even when
    stopping early or on error.
    """
    out = resolve_output_dir(cfg, out_dir)
    spec, mesh = build_mesh(cfg)
    solver_cfg = cfg.solver_config()
    diag_steps = cfg.steps_per(cfg.diagnostics_interval, "diagnostics_interval")
    snap_steps = cfg.steps_per(cfg.snapshot_interval, "snapshot_interval")
    chk_steps = cfg.steps_per(cfg.checkpoint_interval, "checkpoint_interval")

    resume = _latest_checkpoint(out)
    rows = []
    if resume is not None:
        state, stored_rows = vtkio.read_checkpoint(resume[1], mesh.n_nodes)
        if stored_rows is not None:
            rows = [list(r) for r in stored_rows]
    else:
        state = initial_state(cfg, mesh, spec)

    prev_rec = None
    if rows:
        prev_rec = row_to_record(rows[-1], cfg.q_thresholds,
                                 (spec.z_min, spec.z_max))

    def sink(st):
        nonlocal prev_rec
        if st.step_index % diag_steps == 0:
            rec = compute_record(st, mesh, spec,
                                 q_thresholds=cfg.q_thresholds,
                                 region_thresholds=cfg.region_thresholds,
                                 prev=prev_rec)
            rows.append(record_to_row(rec, cfg.q_thresholds))
            prev_rec = rec
        if st.step_index % snap_steps == 0:
            vtkio.write_snapshot_vtk(
                out / f"snapshot_{st.step_index:06d}.vtk", mesh, st)

    def checkpoint(st):
        vtkio.write_checkpoint(out / f"checkpoint_{st.step_index:06d}.npz",
                               st, record_rows=rows)

    op = StepOperator(mesh, solver_cfg)
    csv_path = out / "diagnostics.csv"
    try:
        state = _run_limited(mesh, state, solver_cfg, op, sink, checkpoint,
                             chk_steps, max_steps)
    finally:
        _flush_csv(csv_path, rows, cfg)
    return state


def _run_limited(mesh, state, solver_cfg, op, sink, checkpoint, chk_steps,
                 max_steps):
    from .solver import time_step

    if state.step_index == 0:
        sink(state)
    start = state.step_index
    for k in range(state.step_index + 1, solver_cfg.n_steps + 1):
        state = time_step(mesh, state, solver_cfg, operator=op)
        sink(state)
        if chk_steps > 0 and k % chk_steps == 0:
            checkpoint(state)
        if max_steps is not None and k - start >= max_steps:
            break
    return state


def _flush_csv(path, rows, cfg: RunConfig):
    lines = [",".join(vtkio.csv_columns(cfg.q_thresholds))]
    for row in rows:
        lines.append(",".join(repr(float(v)) for v in row))
    vtkio._atomic_write(path, "\n".join(lines) + "\n")


_SNAP_TITLE_RE = re.compile(r"step=(\d+) t=([^\s]+)")


def read_snapshot(path, mesh):
    """Load a snapshot VTK back into a FieldState (exact values)."""
    from .solver import FieldState

    nodes, tets, pdata, _ = vtkio.read_vtk(path)
    if len(nodes) != mesh.n_nodes:
        raise ValueError(
            f"{path}: snapshot has {len(nodes)} nodes, mesh has {mesh.n_nodes}"
        )
    with open(path) as fh:
        fh.readline()
        title = fh.readline()
    m = _SNAP_TITLE_RE.search(title)
    if not m:
        raise ValueError(f"{path}: snapshot title lacks step/time metadata")
    return FieldState(step_index=int(m.group(1)), time=float(m.group(2)),
                      velocity=pdata["velocity"], pressure=pdata["pressure"])


def cmd_analyze(cfg: RunConfig, snapshot_paths, out_dir=None) -> Path:
    """Recompute the diagnostics series from saved snapshots."""
    out = resolve_output_dir(cfg, out_dir)
    spec, mesh = build_mesh(cfg)
    states = [read_snapshot(p, mesh) for p in snapshot_paths]
    states.sort(key=lambda s: s.step_index)
    rows, prev = [], None
    for st in states:
        rec = compute_record(st, mesh, spec,
                             q_thresholds=cfg.q_thresholds,
                             region_thresholds=cfg.region_thresholds,
                             prev=prev)
        rows.append(record_to_row(rec, cfg.q_thresholds))
        prev = rec
    path = out / "diagnostics.csv"
    _flush_csv(path, rows, cfg)
    return path


def cmd_verify(cfg: RunConfig, out_dir=None):
    """Manufactured-solution convergence study; writes the report and
    returns it."""
    out = resolve_output_dir(cfg, out_dir)
    report = convergence_study()
    vtkio._atomic_write(out / "verify_report.txt", report.format())
    return report
