"""Run artifacts: trajectory CSV, stats JSON, plot-ready series.

Trajectory files are plain CSV with a single metadata comment line.
Values are written with %.17g so float64 round-trips exactly; save/load
then save again is byte-identical.  Stats files are canonical JSON and
carry the SHA-256 of the scenario they came from, the seeds, and the tool
version, so a result can always be traced back to its inputs.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from . import __version__ as _version
from .errors import ValidationError
from .manifold import Tube
from .scenario import scenario_to_json
from .solver import Trajectory
from .wind import WindSeries

__all__ = [
    "save_trajectory",
    "load_trajectory",
    "save_wind_series",
    "load_wind_series",
    "scenario_hash",
    "save_stats",
    "load_stats",
    "RunArtifact",
    "emit_plot_data",
]

_MAGIC = "# slowfast-trajectory v1"
_FMT = "%.17g"


def _fmt(x: float) -> str:
    return _FMT % x


_BLOCKS = ("z_c", "x_bar", "y_bar", "z_d")
_DEFAULT_PREFIX = {"z_c": "zc", "x_bar": "x", "y_bar": "y", "z_d": "zd"}


def _block_labels(labels: Mapping, widths: tuple[int, int, int, int]) -> list[list[str]]:
    """Column names per block, generating placeholders where labels are missing."""
    out: list[list[str]] = []
    for block, width in zip(_BLOCKS, widths):
        got = list(labels.get(block, []))
        if len(got) != width:
            got = [f"{_DEFAULT_PREFIX[block]}{i}" for i in range(width)]
        out.append(got)
    return out


def save_trajectory(traj: Trajectory, path: str | Path) -> Path:
    """Write a trajectory as CSV: metadata comment, header, one row per sample."""
    path = Path(path)
    dims = (
        traj.z_c.shape[1],
        traj.x_bar.shape[1],
        traj.y_bar.shape[1],
        traj.z_d.shape[1],
    )
    names: list[str] = ["tau", "t"]
    for block in _block_labels(traj.labels, dims):
        names.extend(block)
    seed = traj.seed if traj.seed is not None else (-1, -1)
    meta = (
        f"{_MAGIC} epsilon={_fmt(traj.epsilon)} mode={traj.mode} "
        f"n_zc={dims[0]} n_xbar={dims[1]} n_ybar={dims[2]} n_zd={dims[3]} "
        f"seed={seed[0]} stream={seed[1]}"
    )
    lines = [meta, ",".join(names)]
    t = traj.t
    for i in range(len(traj)):
        row = [_fmt(traj.tau[i]), _fmt(t[i])]
        row.extend(_fmt(v) for v in traj.z_c[i])
        row.extend(_fmt(v) for v in traj.x_bar[i])
        row.extend(_fmt(v) for v in traj.y_bar[i])
        row.extend(_fmt(v) for v in traj.z_d[i])
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    return path


def load_trajectory(path: str | Path) -> Trajectory:
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        meta_line = fh.readline().rstrip("\n")
        if not meta_line.startswith(_MAGIC):
            raise ValidationError(f"{path}: not a slowfast trajectory file")
        meta = dict(
            item.split("=", 1) for item in meta_line[len(_MAGIC):].split() if "=" in item
        )
        header = fh.readline().rstrip("\n").split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    n_zc = int(meta["n_zc"])
    n_xbar = int(meta["n_xbar"])
    n_ybar = int(meta["n_ybar"])
    n_zd = int(meta["n_zd"])
    if data.shape[1] != 2 + n_zc + n_xbar + n_ybar + n_zd:
        raise ValidationError(f"{path}: column count does not match metadata")
    offsets = np.cumsum([2, n_zc, n_xbar, n_ybar, n_zd])
    z_c = data[:, 2:offsets[1]]
    x_bar = data[:, offsets[1]:offsets[2]]
    y_bar = data[:, offsets[2]:offsets[3]]
    z_d = data[:, offsets[3]:offsets[4]]
    labels = {
        "z_c": header[2:offsets[1]],
        "x_bar": header[offsets[1]:offsets[2]],
        "y_bar": header[offsets[2]:offsets[3]],
        "z_d": header[offsets[3]:offsets[4]],
    }
    seed_pair = (int(meta["seed"]), int(meta["stream"]))
    return Trajectory(
        tau=data[:, 0],
        z_c=z_c,
        x_bar=x_bar,
        y_bar=y_bar,
        z_d=z_d,
        epsilon=float(meta["epsilon"]),
        mode=meta["mode"],
        labels=labels,
        event_log=[],
        seed=None if seed_pair == (-1, -1) else seed_pair,
    )


def save_wind_series(series: WindSeries, path: str | Path) -> Path:
    """Wind sample path as CSV: time_s, driving Gaussian state, speed in m/s."""
    path = Path(path)
    # times is a derived array; grab it once instead of per row
    times, eta, speed = series.times, series.eta_values, series.values
    lines = ["time_s,eta,speed_mps"]
    for i in range(times.size):
        lines.append(",".join((_fmt(times[i]), _fmt(eta[i]), _fmt(speed[i]))))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    return path


def load_wind_series(path: str | Path) -> WindSeries:
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        header = fh.readline().rstrip("\n")
        if header != "time_s,eta,speed_mps":
            raise ValidationError(f"{path}: not a slowfast wind series file")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    times = data[:, 0]
    dt = float(times[1] - times[0]) if times.size > 1 else 0.0
    return WindSeries(dt=dt, values=data[:, 2], eta_values=data[:, 1])


def scenario_hash(scenario: Mapping) -> str:
    data = scenario.data if hasattr(scenario, "data") else scenario
    return hashlib.sha256(scenario_to_json(data).encode("utf-8")).hexdigest()


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def save_stats(
    stats: Mapping,
    path: str | Path,
    scenario: Mapping | None = None,
    config: Mapping | None = None,
) -> Path:
    """Stats JSON with provenance: tool version, scenario digest, config echo."""
    doc = {
        "tool": "slowfast",
        "version": _version,
        "stats": _jsonable(dict(stats)),
    }
    if scenario is not None:
        data = scenario.data if hasattr(scenario, "data") else scenario
        doc["scenario_sha256"] = scenario_hash(data)
        doc["scenario_name"] = data.get("name", "unnamed")
        doc["seed"] = data.get("seed", 0)
    if config is not None:
        doc["config"] = _jsonable(dict(config))
    path = Path(path)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_stats(path: str | Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True)
class RunArtifact:
    """Paths plus digests tying one run's outputs to its scenario."""

    scenario: dict
    trajectory_path: Path | None
    stats_path: Path | None

    def verify(self) -> bool:
        """Check that the stats file still references this scenario."""
        if self.stats_path is None:
            return True
        doc = load_stats(self.stats_path)
        return doc.get("scenario_sha256") == scenario_hash(self.scenario)


def emit_plot_data(
    outdir: str | Path,
    det: Trajectory,
    stoch: Trajectory | None = None,
    tube: Tube | None = None,
) -> list[Path]:
    """Per-fast-variable CSV ready for plotting.

    Columns: tau, deterministic, then optionally one stochastic sample and
    the tube envelope center +- h * sqrt(diag L).
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    widths = (
        det.z_c.shape[1],
        det.x_bar.shape[1],
        det.y_bar.shape[1],
        det.z_d.shape[1],
    )
    fast_labels = _block_labels(det.labels, widths)[1]
    written: list[Path] = []
    if tube is not None:
        idx = tube.indices_for(det.tau)
    for col, label in enumerate(fast_labels):
        names = ["tau", "deterministic"]
        columns = [det.tau, det.x_bar[:, col]]
        if stoch is not None:
            if stoch.tau.shape != det.tau.shape or not np.allclose(stoch.tau, det.tau):
                raise ValidationError("stochastic and deterministic grids differ")
            names.append("stochastic")
            columns.append(stoch.x_bar[:, col])
        if tube is not None:
            widths = tube.h * np.sqrt(tube.sections[idx, col, col])
            centers = tube.centers[idx, col]
            names.extend(["tube_lower", "tube_upper"])
            columns.extend([centers - widths, centers + widths])
        lines = [",".join(names)]
        for i in range(det.tau.size):
            lines.append(",".join(_fmt(c[i]) for c in columns))
        path = outdir / f"fast_{label}.csv"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
        written.append(path)
    return written
