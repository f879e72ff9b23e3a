"""Deterministic result files: CSV tables, SVG plots, and .meta sidecars.

Every numeric cell is written with 12 significant digits so a written value
re-parses to within 1e-10 of the original. Files use UTF-8 with LF line
endings on every platform. SVG output is deterministic for a fixed
configuration: the id-hash salt is pinned and the creation date is dropped.
"""

from __future__ import annotations

import io
import os

import numpy as np

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from . import __version__ as _version
from .experiments import SweepResult, format_value, serialize_config
from .modular import witness_threshold

__all__ = ["emit_csv", "emit_trajectory_csv", "emit_plot", "emit_meta", "emit_all"]

_SVG_SALT = "dopocluster"


def _format_cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.11e}"


def _record_columns(points: list) -> list:
    """Canonical record column order, tolerant of per-mode column counts."""
    if not points:
        return []
    keys = set(points[0])
    keys.discard("config_hash")
    keys.discard("trajectory")
    sites = sorted(
        (k for k in keys if k.startswith("site_")), key=lambda k: int(k[5:])
    )
    modes = sorted(
        (k for k in keys if k.startswith("n_mode_")), key=lambda k: int(k[7:])
    )
    order = (
        ["W"]
        + sites
        + ["purity", "fidelity_to_ideal", "fidelity_pump_end", "reduced_fidelity"]
        + modes
        + ["wall_time"]
    )
    known = [k for k in order if k in keys]
    extra = sorted(keys - set(known))
    return known + extra


def _write_text(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(text)


def emit_csv(result: SweepResult, path: str) -> None:
    """Sweep table: one row per grid point, axis columns first. A sweep with
    no points still writes the header line."""
    columns = list(result.axis_names) + _record_columns(result.points)
    if not result.points:
        columns = list(result.axis_names)
    lines = [",".join(columns)]
    for axis_values, point in zip(result.axis_values, result.points):
        cells = [_format_cell(v) for v in axis_values]
        cells += [
            _format_cell(point[k]) for k in columns[len(result.axis_names) :]
        ]
        lines.append(",".join(cells))
    _write_text(path, "\n".join(lines) + "\n")


def emit_trajectory_csv(result: SweepResult, path: str) -> None:
    """Time-resolved table for a single-point run with trajectory recording."""
    trajectory = result.trajectory
    if trajectory is None:
        raise ValueError("this result holds no trajectory")
    names = sorted(trajectory.records)
    preferred = ["fidelity_to_ideal", "W"]
    names = [n for n in preferred if n in names] + [
        n for n in names if n not in preferred
    ]
    lines = [",".join(["time"] + names)]
    for idx, t in enumerate(trajectory.times):
        cells = [_format_cell(float(t))]
        cells += [_format_cell(float(trajectory.records[name][idx])) for name in names]
        lines.append(",".join(cells))
    _write_text(path, "\n".join(lines) + "\n")


def _witness_grid(result: SweepResult) -> np.ndarray:
    shape = tuple(
        len(result.config.values[f"axis.{name}"]) for name in result.axis_names
    )
    values = np.asarray([p["W"] for p in result.points], dtype=float)
    return values.reshape(shape)


def _save(fig, path: str) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def emit_plot(result: SweepResult, path: str) -> None:
    """Render the sweep: trajectory line(s) for a recorded run, a marker for
    a single point, witness-vs-axis line for one axis (dashed threshold),
    and a heatmap with the threshold contour for two axes."""
    threshold = witness_threshold(int(result.config["n_modes"]))
    with plt.rc_context({"svg.hashsalt": _SVG_SALT, "figure.figsize": (6.0, 4.0)}):
        fig, ax = plt.subplots()
        if result.trajectory is not None:
            traj = result.trajectory
            ax.plot(traj.times, traj.records["fidelity_to_ideal"], label="fidelity")
            if "W" in traj.records:
                scale = max(1.0, float(np.max(np.abs(traj.records["W"]))))
                ax.plot(traj.times, traj.records["W"] / scale, label=f"W / {scale:g}")
            ax.set_xlabel("time")
            ax.set_ylabel("record")
            ax.legend(loc="best")
        elif len(result.axis_names) == 0:
            w = result.points[0]["W"] if result.points else 0.0
            ax.plot([0.0], [w], marker="o")
            ax.axhline(threshold, linestyle="--", color="gray")
            ax.set_xticks([0.0])
            ax.set_xticklabels([result.scenario])
            ax.set_ylabel("W")
        elif len(result.axis_names) == 1:
            xs = [v[0] for v in result.axis_values]
            ws = [p["W"] for p in result.points]
            ax.plot(xs, ws, marker="o")
            ax.axhline(threshold, linestyle="--", color="gray")
            ax.set_xlabel(result.axis_names[0])
            ax.set_ylabel("W")
        elif len(result.axis_names) == 2:
            grid = _witness_grid(result)
            xs = np.asarray(result.config.values[f"axis.{result.axis_names[0]}"], float)
            ys = np.asarray(result.config.values[f"axis.{result.axis_names[1]}"], float)
            mesh = ax.pcolormesh(xs, ys, grid.T, shading="nearest")
            fig.colorbar(mesh, ax=ax, label="W")
            if grid.min() < threshold < grid.max() and min(grid.shape) >= 2:
                ax.contour(
                    xs,
                    ys,
                    grid.T,
                    levels=[threshold],
                    colors="white",
                    linestyles="--",
                )
            ax.set_xlabel(result.axis_names[0])
            ax.set_ylabel(result.axis_names[1])
        else:
            ws = [p["W"] for p in result.points]
            ax.plot(range(len(ws)), ws, marker=".")
            ax.axhline(threshold, linestyle="--", color="gray")
            ax.set_xlabel("grid point")
            ax.set_ylabel("W")
        ax.set_title(result.scenario)
        _save(fig, path)


def emit_meta(result: SweepResult, path: str) -> None:
    """Re-parseable resolved configuration plus provenance comments."""
    header = io.StringIO()
    header.write(f"# configuration hash {result.config_hash}\n")
    header.write(f"# toolkit version {_version}\n")
    header.write(f"# wall time {result.wall_time:.3f} s\n")
    for key in sorted(result.resolved_notes):
        header.write(
            f"# resolved {key} = {format_value(result.resolved_notes[key])}\n"
        )
    _write_text(path, header.getvalue() + serialize_config(result.config.values))


def emit_all(result: SweepResult, out_dir: str, stem: str | None = None) -> list:
    """Write csv (+ trajectory csv when present), svg, and meta; returns the
    written paths."""
    os.makedirs(out_dir, exist_ok=True)
    stem = stem or result.scenario
    paths = []

    csv_path = os.path.join(out_dir, f"{stem}.csv")
    emit_csv(result, csv_path)
    paths.append(csv_path)

    if result.trajectory is not None:
        traj_path = os.path.join(out_dir, f"{stem}_trajectory.csv")
        emit_trajectory_csv(result, traj_path)
        paths.append(traj_path)

    svg_path = os.path.join(out_dir, f"{stem}.svg")
    emit_plot(result, svg_path)
    paths.append(svg_path)

    meta_path = os.path.join(out_dir, f"{stem}.meta")
    emit_meta(result, meta_path)
    paths.append(meta_path)
    return paths
