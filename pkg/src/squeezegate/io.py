"""Structured-text artifacts: JSON documents and CSV tables with explicit units.

JSON is written with sorted keys and a fixed layout, so identical inputs give
byte-identical files. Every writer has a matching loader.
"""

from __future__ import annotations

import csv
import json
import warnings
from pathlib import Path

import numpy as np

from squeezegate.errors import InputError
from squeezegate.phasespace import polar_decompose
from squeezegate.propagator import ControlWaveform
from squeezegate.units import US


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def write_json(path, data) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_plain(data), indent=2, sort_keys=True, allow_nan=True) + "\n")
    return path


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from None


def write_waveforms(path, waveforms, role: str | None = None) -> Path:
    doc = {"waveforms": [w.to_dict() for w in waveforms]}
    if role:
        doc["role"] = role
    return write_json(path, doc)


def read_waveforms(path) -> list:
    data = read_json(path)
    if "waveforms" not in data:
        raise InputError(f"{path} has no 'waveforms' list")
    return [ControlWaveform.from_dict(d) for d in data["waveforms"]]


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) for v in row])
    return path


def read_csv(path) -> tuple:
    """(header, float array of shape (rows, columns))."""
    try:
        with Path(path).open(newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    if not rows:
        raise InputError(f"{path} is empty")
    data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    return rows[0], data.reshape(len(rows) - 1, len(rows[0]))


# Plot tables -------------------------------------------------------------------


def waveform_table(waveforms, t_start: float = 0.0) -> tuple:
    """Quadratures vs time: one row per segment edge pair (step plot data)."""
    header = ["time_us"]
    for w in waveforms:
        header += [f"ion{w.ion}_omega_x_rad_s", f"ion{w.ion}_omega_y_rad_s"]
    rows = []
    n = waveforms[0].num_segments
    tau = waveforms[0].segment_duration
    for p in range(n):
        for edge in (p, p + 1):
            row = [(t_start + edge * tau) / US]
            for w in waveforms:
                row += [w.omega_x[p], w.omega_y[p]]
            rows.append(row)
    return header, rows


def squeeze_trajectory_table(traj, config_id: int, num_modes: int) -> tuple:
    """Per-mode r_kk and theta_kk (rotating frame) at every segment boundary of one configuration."""
    header = ["time_us"] + [f"r_{k}{k}" for k in range(1, num_modes + 1)] + [
        f"theta_{k}{k}_rad" for k in range(1, num_modes + 1)]
    rows = []
    for idx, t in enumerate(traj.times):
        with warnings.catch_warnings():  # theta = pi on the target mode is expected
            warnings.simplefilter("ignore", RuntimeWarning)
            pf = polar_decompose(traj.rotating(config_id, idx))
        rows.append([(traj.t_start + t) / US] + list(np.diag(pf.r).real) + list(
            np.diag(pf.theta).real))
    return header, rows


def displacement_trajectory_table(traj, sign: int = 1) -> tuple:
    m = traj.alpha.shape[1]
    header = ["time_us"] + [f"alpha_{k}_re" for k in range(1, m + 1)] + [
        f"alpha_{k}_im" for k in range(1, m + 1)]
    rows = [[(traj.t_start + t) / US] + list((sign * a).real) + list((sign * a).imag)
            for t, a in zip(traj.times, traj.alpha)]
    return header, rows
