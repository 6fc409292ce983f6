"""Executes experiment configs and writes their CSV/SVG artifacts."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis import density_map, find_modes, sds_loss_estimate, stat_sweep
from .config import ExperimentConfig, ExperimentUnit
from .simulate import DivergenceError, run_trajectory
from .svgplot import render_density_svg

__all__ = ["RunReport", "plan_artifacts", "run_config"]


@dataclass
class RunReport:
    rows: list = field(default_factory=list)
    artifacts: list = field(default_factory=list)
    diverged: bool = False

    def add(self, label, kind, status, detail, paths=()):
        self.rows.append((label, kind, status, detail))
        self.artifacts.extend(paths)


def _unit_paths(unit: ExperimentUnit, seeds, base: Path) -> list[Path]:
    if unit.kind in ("trajectory", "trap_escape"):
        return [base / f"{unit.label}_seed{s}.csv" for s in seeds]
    if unit.kind == "density_map":
        return [base / f"{unit.label}.csv", base / f"{unit.label}.svg"]
    return [base / f"{unit.label}.csv"]


def plan_artifacts(config: ExperimentConfig, out_dir) -> list[Path]:
    base = Path(out_dir) / config.name
    paths: list[Path] = []
    for unit in config.experiments:
        paths.extend(_unit_paths(unit, config.seeds, base))
    return paths


def run_config(
    config: ExperimentConfig,
    out_dir,
    overwrite: bool = False,
    quiet: bool = False,
    seed_override: int | None = None,
) -> RunReport:
    """Run every experiment unit and write its artifacts under out_dir/<name>/.

    Existing artifact files abort the run unless ``overwrite`` is set.
    Trajectory-like units run once per seed; analysis units use the first
    seed as their master seed. A divergence is recorded (with the partial
    trajectory written) and flagged on the report instead of aborting the
    remaining units.
    """
    seeds = [int(seed_override)] if seed_override is not None else config.seeds
    base = Path(out_dir) / config.name
    planned = []
    for unit in config.experiments:
        planned.extend(_unit_paths(unit, seeds, base))
    existing = [str(p) for p in planned if p.exists()]
    if existing and not overwrite:
        raise FileExistsError(
            "refusing to overwrite existing artifacts (pass --overwrite): "
            + ", ".join(existing)
        )
    base.mkdir(parents=True, exist_ok=True)

    report = RunReport()
    mixture, schedule = config.mixture, config.schedule
    trajectories: dict[str, list[np.ndarray]] = {}

    for unit in config.experiments:
        if unit.kind not in ("trajectory", "trap_escape"):
            continue
        spec = unit.estimator_spec()
        kept = []
        for seed in seeds:
            path = base / f"{unit.label}_seed{seed}.csv"
            try:
                traj = run_trajectory(mixture, schedule, spec, unit.optimizer_config(seed))
            except DivergenceError as exc:
                exc.trajectory.write_csv(path)
                report.add(unit.label, unit.kind, "divergence",
                           f"seed {seed}: {exc}", [path])
                report.diverged = True
                continue
            traj.write_csv(path)
            kept.append(traj.points)
            final = np.array2string(traj.final, precision=4)
            report.add(unit.label, unit.kind, "ok", f"seed {seed}: final {final}", [path])
        trajectories[unit.label] = kept

    for unit in config.experiments:
        if unit.kind in ("trajectory", "trap_escape"):
            continue
        path = base / f"{unit.label}.csv"
        if unit.kind == "sweep":
            sweep = stat_sweep(
                mixture, schedule, unit.params["probe_x0"], unit.params["timesteps"],
                unit.params["n_samples"], seed=seeds[0],
            )
            sweep.write_csv(path)
            detail = f"{len(sweep.timesteps)} timesteps, n={sweep.n_samples}"
            if sweep.violations:
                detail += f"; {len(sweep.violations)} bracketing violations"
            report.add(unit.label, unit.kind, "ok", detail, [path])
        elif unit.kind == "modes":
            modes = find_modes(
                _noised_conditional(mixture, schedule, unit.params["t"]),
                unit.params["region"], unit.params["resolution"],
            )
            modes.write_csv(path)
            report.add(unit.label, unit.kind, "ok", f"{len(modes)} modes at t={unit.params['t']}",
                       [path])
        elif unit.kind == "loss_probe":
            rows = []
            for point in unit.params["points"]:
                loss = sds_loss_estimate(
                    mixture, schedule, point, unit.params["t"],
                    unit.params["n_samples"], seed=seeds[0],
                )
                rows.append((point, loss))
            _write_loss_csv(path, unit.params["t"], rows)
            report.add(unit.label, unit.kind, "ok",
                       f"{len(rows)} probe points at t={unit.params['t']}", [path])
        elif unit.kind == "density_map":
            dmap = density_map(mixture, schedule, unit.params["t"],
                               unit.params["region"], unit.params["resolution"])
            dmap.write_csv(path)
            overlays = [
                (label, points)
                for label in unit.params.get("overlay", [])
                for points in trajectories.get(label, [])
            ]
            svg_path = base / f"{unit.label}.svg"
            svg = render_density_svg(
                dmap, trajectories=overlays,
                title=f"{config.name}: conditional marginal log-density, t={unit.params['t']}",
            )
            svg_path.write_text(svg)
            report.add(unit.label, unit.kind, "ok",
                       f"grid {dmap.values.shape[1]}x{dmap.values.shape[0]} at t={unit.params['t']}",
                       [path, svg_path])

    if not quiet:
        _print_summary(config, report)
    return report


def _noised_conditional(mixture, schedule, t):
    from .gmm import conditional_view, noised_marginal

    return noised_marginal(conditional_view(mixture), schedule, t)


def _write_loss_csv(path, t, rows):
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        d = len(rows[0][0])
        writer.writerow([f"x_{i}" for i in range(d)] + ["t", "loss"])
        for point, loss in rows:
            writer.writerow([repr(float(v)) for v in point] + [t, repr(float(loss))])


def _print_summary(config, report):
    width = max((len(r[0]) for r in report.rows), default=10)
    print(f"== {config.name} ==")
    for label, kind, status, detail in report.rows:
        print(f"  {label:<{width}}  {kind:<12} {status:<10} {detail}")
    print(f"  artifacts: {len(report.artifacts)} file(s)")
