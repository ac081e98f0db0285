"""Least-norm synthesis of single-ion displacement waveforms.

For piecewise-constant quadratures on segments of length tau the final
amplitude of mode k is linear in the controls. With
S_k = sinc(delta_k tau / 2) and phases (p + 1/2) delta_k tau + delta_k t0,

    Re alpha_k = tau/2 sum_p d_kp Omega_x,p + dt_kp Omega_y,p
    Im alpha_k = tau/2 sum_p dt_kp Omega_x,p - d_kp Omega_y,p

with d_kp = -eta_nk S_k cos(.) and dt_kp = +eta_nk S_k sin(.).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from squeezegate.errors import InfeasibleTarget, InputError
from squeezegate.propagator import ControlWaveform, DriveSpec, propagate_displacement
from squeezegate.units import DEFAULT_AMPLITUDE_BOUND

RCOND = 1e-10
RESIDUAL_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class DisplacementTarget:
    mode_targets: np.ndarray  # complex, length M
    ion: int  # 1-based
    num_segments: int
    duration: float  # s
    drive_freq: float  # rad/s
    t_start: float = 0.0

    def __post_init__(self):
        t = np.asarray(self.mode_targets, dtype=complex).copy()
        t.setflags(write=False)
        object.__setattr__(self, "mode_targets", t)
        if int(self.num_segments) < 1:
            raise InputError("num_segments must be positive")
        if not self.duration > 0:
            raise InputError("duration must be positive")
        if int(self.ion) < 1:
            raise InputError("ion labels are 1-based")

    @property
    def segment_duration(self) -> float:
        return self.duration / self.num_segments


def build_displacement_matrix(t: DisplacementTarget, modes) -> np.ndarray:
    """2M x 2N_d real matrix mapping (Omega_x; Omega_y) to (Re alpha; Im alpha)."""
    if t.mode_targets.shape != (modes.num_modes,):
        raise InputError(f"expected {modes.num_modes} mode targets, got {t.mode_targets.shape}")
    eta = modes.eta_for_ion(t.ion)
    tau = t.segment_duration
    delta = t.drive_freq - modes.omega
    s = np.sinc(delta * tau / (2 * np.pi))  # numpy sinc is sin(pi x)/(pi x)
    ph = (np.arange(t.num_segments)[None, :] + 0.5) * (delta * tau)[:, None] + (
        delta * t.t_start
    )[:, None]
    d = -(eta * s)[:, None] * np.cos(ph)
    dt = (eta * s)[:, None] * np.sin(ph)
    return 0.5 * tau * np.block([[d, dt], [dt, -d]])


def solve_least_norm(
    t: DisplacementTarget, modes, bound: float = DEFAULT_AMPLITUDE_BOUND, verify: bool = True
) -> ControlWaveform:
    mat = build_displacement_matrix(t, modes)
    rhs = np.concatenate([t.mode_targets.real, t.mode_targets.imag])
    u, sv, vh = np.linalg.svd(mat, full_matrices=False)
    keep = sv > RCOND * (sv[0] if sv.size and sv[0] > 0 else 1.0)
    coeffs = (u[:, keep].T @ rhs) / sv[keep]
    x = vh[keep].T @ coeffs
    resid = mat @ x - rhs
    scale = max(1.0, float(np.max(np.abs(rhs))))
    m = modes.num_modes
    if np.max(np.abs(resid)) > RESIDUAL_TOL * scale:
        bad = np.abs(resid[:m] + 1j * resid[m:]) > RESIDUAL_TOL * scale
        unreachable = [int(k) + 1 for k in np.flatnonzero(bad)]
        raise InfeasibleTarget(
            f"displacement target not reachable from ion {t.ion}; modes {unreachable} "
            "are not addressable with this segment grid",
            unreachable,
        )
    n = t.num_segments
    wf = ControlWaveform(
        ion=t.ion,
        segment_duration=t.segment_duration,
        omega_x=x[:n],
        omega_y=x[n:],
        drive_freq=t.drive_freq,
        kind="displacement",
    )
    wf.check_bound(bound)
    if verify:
        traj = propagate_displacement(
            DriveSpec.from_waveforms([wf], modes), modes, 1, t_start=t.t_start
        )
        err = np.max(np.abs(traj.alpha[-1] - t.mode_targets))
        if err > RESIDUAL_TOL * scale:
            raise InfeasibleTarget(
                f"forward propagation misses the target by {err:.3g}", []
            )
    return wf


def single_mode_target(modes, ion: int, mode: int, alpha: complex, duration: float,
                       num_segments: int, t_start: float = 0.0) -> DisplacementTarget:
    """Target alpha on one mode (1-based), zero on all others, drive resonant with it."""
    if not 1 <= mode <= modes.num_modes:
        raise InputError(f"mode {mode} out of range 1..{modes.num_modes}")
    targets = np.zeros(modes.num_modes, dtype=complex)
    targets[mode - 1] = alpha
    return DisplacementTarget(targets, ion, num_segments, duration, float(modes.omega[mode - 1]),
                              t_start)
