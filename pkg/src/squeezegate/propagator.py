"""Exact piecewise-constant propagation of squeezing and displacement drives.

Conventions
-----------
* A drive on ion ``n`` with amplitude Omega and phase mu is written through its
  quadratures Omega_x = Omega sin mu, Omega_y = -Omega cos mu, so that
  Omega e^{i mu} = -Omega_y + i Omega_x.
* Squeezing (second sideband, drive frequency nu): Delta_k = nu/2 - omega_k. In
  the frame rotating with Delta, the stacked columns (psi~; chi~*) obey
  d/dt X~ = G X~ with the constant generator

      G = i s_z (x) Delta - 1/2 sum_n sigma_n (Omega_x s_x + Omega_y s_y) (x) eta_n eta_n^T.

  The lab (mode interaction picture) map is psi = e^{-i Delta t} psi~.
* Displacement (first sideband): delta_k = nu - omega_k and the coherent
  amplitude produced by H_D is

      alpha_k(t) = 1/2 sum_n sigma_n eta_nk int (i Omega_y - Omega_x) e^{-i delta_k t'} dt'.

* Stages carry an absolute start time t0; drive phases are referenced to the
  absolute clock, which conjugates a stage map by the free phases at t0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from squeezegate.errors import BoundViolation, InputError, PropagationAccuracyError
from squeezegate.phasespace import MixingState, SpinConfigSet
from squeezegate.units import DEFAULT_AMPLITUDE_BOUND

KINDS = ("displacement", "squeezing")
ACCURACY_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class ControlWaveform:
    ion: int  # 1-based
    segment_duration: float  # s
    omega_x: np.ndarray  # rad/s
    omega_y: np.ndarray  # rad/s
    drive_freq: float  # nu, rad/s
    kind: str

    def __post_init__(self):
        ox = np.asarray(self.omega_x, dtype=float).copy()
        oy = np.asarray(self.omega_y, dtype=float).copy()
        if ox.ndim != 1 or ox.shape != oy.shape or ox.size == 0:
            raise InputError("omega_x and omega_y must be equal-length non-empty lists")
        if not self.segment_duration > 0:
            raise InputError("segment duration must be positive")
        if self.kind not in KINDS:
            raise InputError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if int(self.ion) < 1:
            raise InputError("ion labels are 1-based")
        if not (np.all(np.isfinite(ox)) and np.all(np.isfinite(oy))):
            raise InputError("waveform contains non-finite values")
        ox.setflags(write=False)
        oy.setflags(write=False)
        object.__setattr__(self, "ion", int(self.ion))
        object.__setattr__(self, "omega_x", ox)
        object.__setattr__(self, "omega_y", oy)

    @property
    def num_segments(self) -> int:
        return self.omega_x.size

    @property
    def duration(self) -> float:
        return self.segment_duration * self.num_segments

    @property
    def peak_quadrature(self) -> float:
        return float(max(np.max(np.abs(self.omega_x)), np.max(np.abs(self.omega_y))))

    def check_bound(self, bound: float = DEFAULT_AMPLITUDE_BOUND) -> None:
        if self.peak_quadrature > bound * (1 + 1e-12):
            raise BoundViolation(
                f"ion {self.ion}: peak quadrature {self.peak_quadrature:.4g} rad/s exceeds "
                f"bound {bound:.4g} rad/s; use a longer duration or more segments"
            )

    def negated(self) -> "ControlWaveform":
        return ControlWaveform(
            self.ion, self.segment_duration, -self.omega_x, -self.omega_y, self.drive_freq, self.kind
        )

    def scaled(self, factor: float) -> "ControlWaveform":
        return ControlWaveform(
            self.ion,
            self.segment_duration,
            factor * self.omega_x,
            factor * self.omega_y,
            self.drive_freq,
            self.kind,
        )

    def to_dict(self) -> dict:
        return {
            "ion": self.ion,
            "kind": self.kind,
            "nu_rad_s": float(self.drive_freq),
            "num_segments": self.num_segments,
            "segment_duration_s": float(self.segment_duration),
            "tau_s": float(self.duration),
            "omega_x_rad_s": [float(v) for v in self.omega_x],
            "omega_y_rad_s": [float(v) for v in self.omega_y],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ControlWaveform":
        try:
            ox = data["omega_x_rad_s"] if "omega_x_rad_s" in data else data["omega_x"]
            oy = data["omega_y_rad_s"] if "omega_y_rad_s" in data else data["omega_y"]
            seg = data.get("segment_duration_s")
            if seg is None:
                seg = float(data["tau_s"]) / len(ox)
            return cls(
                ion=int(data["ion"]),
                segment_duration=float(seg),
                omega_x=ox,
                omega_y=oy,
                drive_freq=float(data["nu_rad_s"]),
                kind=data["kind"],
            )
        except KeyError as exc:
            raise InputError(f"waveform missing field {exc}") from None


@dataclass(frozen=True, eq=False)
class DriveSpec:
    waveforms: tuple
    detunings: np.ndarray  # rad/s, per mode
    kind: str

    @classmethod
    def from_waveforms(cls, waveforms, modes) -> "DriveSpec":
        waveforms = tuple(waveforms)
        if not waveforms:
            raise InputError("a drive needs at least one waveform")
        kinds = {w.kind for w in waveforms}
        if len(kinds) != 1:
            raise InputError("waveforms in one drive must share their kind")
        kind = kinds.pop()
        w0 = waveforms[0]
        for w in waveforms[1:]:
            if w.num_segments != w0.num_segments or not np.isclose(
                w.segment_duration, w0.segment_duration, rtol=1e-12, atol=0
            ):
                raise InputError("waveforms in one drive must share the segment grid")
            if w.drive_freq != w0.drive_freq:
                raise InputError("waveforms in one drive must share the drive frequency")
        ions = [w.ion for w in waveforms]
        if len(set(ions)) != len(ions):
            raise InputError("one waveform per ion")
        for ion in ions:
            if ion > modes.num_ions:
                raise InputError(f"ion {ion} out of range 1..{modes.num_ions}")
        nu = w0.drive_freq
        det = (nu / 2 if kind == "squeezing" else nu) - modes.omega
        return cls(waveforms, det, kind)

    @property
    def ions(self) -> tuple:
        return tuple(w.ion for w in self.waveforms)

    @property
    def num_segments(self) -> int:
        return self.waveforms[0].num_segments

    @property
    def segment_duration(self) -> float:
        return self.waveforms[0].segment_duration

    @property
    def duration(self) -> float:
        return self.waveforms[0].duration

    def quadratures(self) -> tuple:
        """Arrays (Omega_x, Omega_y) of shape (num_ions_driven, num_segments)."""
        ox = np.array([w.omega_x for w in self.waveforms])
        oy = np.array([w.omega_y for w in self.waveforms])
        return ox, oy


# Squeezing ------------------------------------------------------------------


def drift(detunings) -> np.ndarray:
    d = np.asarray(detunings, dtype=float)
    return np.diag(np.concatenate([1j * d, -1j * d]))


def control_block(ox: float, oy: float, k: np.ndarray) -> np.ndarray:
    """-1/2 (ox s_x + oy s_y) (x) K."""
    up = -0.5 * (ox - 1j * oy) * k
    lo = -0.5 * (ox + 1j * oy) * k
    z = np.zeros_like(k, dtype=complex)
    return np.block([[z, up], [lo, z]])


def _signs_for(spec: DriveSpec, config) -> np.ndarray:
    if isinstance(config, dict):
        try:
            return np.array([config[i] for i in spec.ions], dtype=float)
        except KeyError as exc:
            raise InputError(f"no spin sign given for driven ion {exc}") from None
    s = np.asarray(config, dtype=float)
    if s.shape != (len(spec.ions),):
        raise InputError(
            f"config has {s.size} signs but the drive addresses {len(spec.ions)} ions"
        )
    return s


def build_generator(spec: DriveSpec, modes, config, segment: int) -> np.ndarray:
    """Constant generator of segment ``segment`` for one spin configuration.

    ``config`` is a mapping ion -> +-1 or a sign array in waveform order.
    """
    if spec.kind != "squeezing":
        raise InputError("build_generator needs a squeezing drive")
    if not 0 <= segment < spec.num_segments:
        raise InputError(f"segment {segment} out of range")
    signs = _signs_for(spec, config)
    g = drift(spec.detunings)
    ox, oy = spec.quadratures()
    for b, w in enumerate(spec.waveforms):
        eta = modes.eta_for_ion(w.ion)
        g = g + signs[b] * control_block(ox[b, segment], oy[b, segment], np.outer(eta, eta))
    return g


def frame_phase(detunings, t) -> np.ndarray:
    """R(t) = exp(-i s_z Delta t), diagonal of the rotating -> lab conversion."""
    d = np.asarray(detunings, dtype=float)
    return np.concatenate([np.exp(-1j * d * t), np.exp(1j * d * t)])


def rotating_to_stage_map(x_rot: np.ndarray, detunings, t_local: float, t_start: float):
    """Lab-frame map of a stage that started at absolute time ``t_start``."""
    r0 = frame_phase(detunings, t_start)
    rt = frame_phase(detunings, t_local)
    return (r0 * rt)[:, None] * x_rot * r0.conj()[None, :]


def max_symplectic_residual(x: np.ndarray) -> float:
    m = x.shape[0] // 2
    psi, chi = x[:m, :m], x[:m, m:]
    a = np.linalg.norm(psi @ psi.conj().T - chi @ chi.conj().T - np.eye(m))
    s = psi @ chi.T
    b = np.linalg.norm(s - s.T)
    return float(max(a, b))


@dataclass(frozen=True, eq=False)
class MixingTrajectory:
    """Rotating-frame block matrices at every segment boundary, per spin config."""

    configs: SpinConfigSet
    times: np.ndarray  # local times, shape (N+1,)
    blocks: np.ndarray  # shape (n_configs, N+1, 2M, 2M), rotating frame
    detunings: np.ndarray
    t_start: float = 0.0

    def rotating(self, config_id: int, index: int = -1) -> MixingState:
        return MixingState.from_block(
            self.blocks[config_id, index], time=float(self.times[index]), frame="rotating"
        )

    def stage_map(self, config_id: int, index: int = -1) -> MixingState:
        """Lab-frame Bogoliubov map from the stage start to boundary ``index``."""
        x = rotating_to_stage_map(
            self.blocks[config_id, index], self.detunings, self.times[index], self.t_start
        )
        return MixingState.from_block(x, time=float(self.t_start + self.times[index]), frame="lab")

    def final(self, config_id: int) -> MixingState:
        return self.stage_map(config_id, -1)


def propagate_mixing(
    spec: DriveSpec, modes, configs: SpinConfigSet, t_start: float = 0.0, check: bool = True
) -> MixingTrajectory:
    if spec.kind != "squeezing":
        raise InputError("propagate_mixing needs a squeezing drive")
    if set(configs.driven_ions) != set(spec.ions):
        raise InputError(
            f"driven ions {configs.driven_ions} do not match waveform ions {spec.ions}"
        )
    m = modes.num_modes
    n = spec.num_segments
    tau = spec.segment_duration
    ks = [np.outer(modes.eta_for_ion(i), modes.eta_for_ion(i)) for i in spec.ions]
    ox, oy = spec.quadratures()
    d0 = drift(spec.detunings)
    blocks = np.empty((len(configs), n + 1, 2 * m, 2 * m), dtype=complex)
    for cid in range(len(configs)):
        signs = configs.signs(cid)
        s = np.array([signs[i] for i in spec.ions], dtype=float)
        x = np.eye(2 * m, dtype=complex)
        blocks[cid, 0] = x
        for p in range(n):
            g = d0.copy()
            for b in range(len(ks)):
                g += s[b] * control_block(ox[b, p], oy[b, p], ks[b])
            x = sla.expm(g * tau) @ x
            blocks[cid, p + 1] = x
            if check:
                res = max_symplectic_residual(x)
                if res > ACCURACY_TOL:
                    raise PropagationAccuracyError(
                        f"symplectic residual {res:.3g} after segment {p} (config {cid})"
                    )
    times = np.arange(n + 1) * tau
    return MixingTrajectory(configs, times, blocks, np.array(spec.detunings), float(t_start))


# Displacement ---------------------------------------------------------------


def _segment_integral(z: np.ndarray, tau: float) -> np.ndarray:
    """int_0^tau e^{z s / tau} ds = tau (e^z - 1)/z, series near z = 0."""
    small = np.abs(z) < 1e-4
    zs = np.where(small, 1.0, z)
    exact = tau * np.expm1(zs) / zs
    series = tau * (1 + z / 2 + z**2 / 6 + z**3 / 24)
    return np.where(small, series, exact)


def _segment_area(z: np.ndarray, tau: float) -> np.ndarray:
    """tau^2 (e^z - 1 - z)/z^2, series near z = 0."""
    small = np.abs(z) < 1e-3
    zs = np.where(small, 1.0, z)
    exact = tau**2 * (np.expm1(zs) - zs) / zs**2
    series = tau**2 * (0.5 + z / 6 + z**2 / 24 + z**3 / 120)
    return np.where(small, series, exact)


@dataclass(frozen=True, eq=False)
class DisplacementVector:
    alpha: np.ndarray  # complex, per mode, for the given spin sign(s)
    time: float
    sign: int = 1

    def for_sign(self, sign: int) -> "DisplacementVector":
        """Linearity in sigma_x: alpha(-s) = -alpha(s)."""
        return DisplacementVector(self.alpha * (sign * self.sign), self.time, sign)


@dataclass(frozen=True, eq=False)
class DisplacementTrajectory:
    times: np.ndarray  # local, shape (N+1,)
    alpha: np.ndarray  # shape (N+1, M)
    phase: np.ndarray  # accumulated phase phi with U = e^{i phi} D(alpha)
    t_start: float = 0.0
    metadata: dict = field(default_factory=dict)

    def final(self) -> DisplacementVector:
        return DisplacementVector(self.alpha[-1].copy(), float(self.t_start + self.times[-1]))

    @property
    def final_phase(self) -> float:
        return float(self.phase[-1])


def propagate_displacement(
    spec: DriveSpec, modes, ion_sign=1, t_start: float = 0.0
) -> DisplacementTrajectory:
    """Coherent amplitudes and the accompanying phase for a displacement drive.

    ``ion_sign`` is the sigma_x eigenvalue of a single driven ion, or a mapping
    ion -> +-1 when several ions are driven.
    """
    if spec.kind != "displacement":
        raise InputError("propagate_displacement needs a displacement drive")
    if isinstance(ion_sign, dict):
        signs = _signs_for(spec, ion_sign)
    else:
        if int(ion_sign) not in (1, -1):
            raise InputError("spin sign must be +1 or -1")
        signs = np.full(len(spec.ions), float(ion_sign))
    m = modes.num_modes
    n = spec.num_segments
    tau = spec.segment_duration
    delta = np.asarray(spec.detunings)
    eta = np.array([modes.eta_for_ion(i) for i in spec.ions])  # (n_ions, M)
    ox, oy = spec.quadratures()
    z = -1j * delta * tau
    e_int = _segment_integral(z, tau)
    e_area = _segment_area(z, tau)
    alpha = np.zeros((n + 1, m), dtype=complex)
    phase = np.zeros(n + 1)
    a = np.zeros(m, dtype=complex)
    ph = 0.0
    for p in range(n):
        t0 = t_start + p * tau
        e0 = np.exp(-1j * delta * t0)
        # amplitude of d(alpha)/dt = f e^{-i delta t} within this segment
        f = 0.5 * (signs * (1j * oy[:, p] - ox[:, p])) @ eta
        ph += float(np.sum((f * e0 * np.conj(a) * e_int + np.abs(f) ** 2 * e_area).imag))
        a = a + f * e0 * e_int
        alpha[p + 1] = a
        phase[p + 1] = ph
    times = np.arange(n + 1) * tau
    return DisplacementTrajectory(times, alpha, phase, float(t_start))
