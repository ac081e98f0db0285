"""Brute-force truncated Fock-space integrator for one or two modes.

The squeezing and displacement Hamiltonians are integrated literally, in the
interaction picture of the modes, with the explicit phases e^{i(Delta_l + Delta_m) t}
and e^{i delta_k t}:

    H_S = 1/4 sum_n sigma_n sum_{l,m} eta_nl eta_nm Omega_n e^{i[(Delta_l + Delta_m) t + mu_n]} a_l a_m + h.c.
    H_D = 1/2 sum_n sigma_n sum_k eta_nk Omega_n e^{i(delta_k t + mu_n)} a_k + h.c.

with Omega_n e^{i mu_n} = -Omega_y + i Omega_x and the (l, m) sum over ordered
pairs. Spins enter as fixed sigma_x eigenvalues. Time stepping uses the
fourth-order commutator-free Magnus integrator

    U(t + h, t) = exp(-i h (a1 H1 + a2 H2)) exp(-i h (a2 H1 + a1 H2)),

H_{1,2} = H(t + (1/2 -+ sqrt(3)/6) h), a1 = (3 - 2 sqrt 3)/12, a2 = (3 + 2 sqrt 3)/12.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply

from squeezegate.errors import InputError, NumericalError, TruncationLeakage
from squeezegate.phasespace import MixingState, vacuum_fidelity

_S3 = np.sqrt(3.0)
_C1, _C2 = 0.5 - _S3 / 6, 0.5 + _S3 / 6
_A1, _A2 = (3 - 2 * _S3) / 12, (3 + 2 * _S3) / 12
LEAKAGE_TOL = 1e-8
DEFAULT_STEP_FRACTION = 0.008


def annihilation(n_max: int) -> sp.csr_matrix:
    return sp.diags(np.sqrt(np.arange(1, n_max + 1, dtype=float)), 1, format="csr")


def mode_operators(num_modes: int, n_max: int) -> list:
    a = annihilation(n_max)
    eye = sp.identity(n_max + 1, format="csr")
    if num_modes == 1:
        return [a.astype(complex)]
    return [sp.kron(a, eye, format="csr").astype(complex),
            sp.kron(eye, a, format="csr").astype(complex)]


@dataclass(frozen=True, eq=False)
class FockSystem:
    """A drive on at most two modes and four spins, with fixed spin signs.

    ``lamb_dicke[b, k]`` couples driven ion b to mode k; ``omega_x``/``omega_y``
    have shape (n_driven, n_segments). ``detunings`` are Delta_k (squeezing) or
    delta_k (displacement) in rad/s.
    """

    kind: str
    n_max: int
    lamb_dicke: np.ndarray
    detunings: np.ndarray
    omega_x: np.ndarray
    omega_y: np.ndarray
    segment_duration: float
    signs: np.ndarray
    ops: list = field(init=False, repr=False)
    _pairs: dict = field(init=False, repr=False)

    def __post_init__(self):
        eta = np.atleast_2d(np.asarray(self.lamb_dicke, dtype=float))
        det = np.atleast_1d(np.asarray(self.detunings, dtype=float))
        ox = np.atleast_2d(np.asarray(self.omega_x, dtype=float))
        oy = np.atleast_2d(np.asarray(self.omega_y, dtype=float))
        signs = np.atleast_1d(np.asarray(self.signs, dtype=float))
        if self.kind not in ("squeezing", "displacement"):
            raise InputError(f"unknown drive kind {self.kind!r}")
        if eta.shape[1] not in (1, 2) or det.shape != (eta.shape[1],):
            raise InputError("the oracle handles one or two modes")
        if eta.shape[0] > 4 or signs.shape != (eta.shape[0],):
            raise InputError("the oracle handles at most four spins, one sign each")
        if ox.shape != oy.shape or ox.shape[0] != eta.shape[0]:
            raise InputError("quadrature arrays must be (n_driven, n_segments)")
        if int(self.n_max) < 2:
            raise InputError("n_max must be at least 2")
        for name, val in (("lamb_dicke", eta), ("detunings", det), ("omega_x", ox),
                          ("omega_y", oy), ("signs", signs)):
            object.__setattr__(self, name, val)
        ops = mode_operators(eta.shape[1], int(self.n_max))
        object.__setattr__(self, "ops", ops)
        k = eta.shape[1]
        object.__setattr__(self, "_pairs", {(l, m): (ops[l] @ ops[m]).tocsr()
                                            for l in range(k) for m in range(k)})

    @classmethod
    def from_drive(cls, spec, modes, signs, n_max: int = 40, mode_indices=None) -> "FockSystem":
        """Oracle for a DriveSpec restricted to ``mode_indices`` (1-based, at most two)."""
        idx = list(range(modes.num_modes)) if mode_indices is None else [
            int(k) - 1 for k in mode_indices]
        ox, oy = spec.quadratures()
        if isinstance(signs, dict):
            signs = [signs[i] for i in spec.ions]
        eta = np.array([modes.eta_for_ion(i)[idx] for i in spec.ions])
        return cls(spec.kind, n_max, eta, np.asarray(spec.detunings)[idx], ox, oy,
                   spec.segment_duration, np.asarray(signs, dtype=float))

    @property
    def num_modes(self) -> int:
        return self.lamb_dicke.shape[1]

    @property
    def dim(self) -> int:
        return (self.n_max + 1) ** self.num_modes

    @property
    def num_segments(self) -> int:
        return self.omega_x.shape[1]

    @property
    def duration(self) -> float:
        return self.num_segments * self.segment_duration

    def max_rate(self) -> float:
        peak = float(np.max(np.abs(self.omega_x) + np.abs(self.omega_y), initial=0.0))
        eta = float(np.max(np.abs(self.lamb_dicke)))
        coupling = (eta**2 if self.kind == "squeezing" else eta) * peak
        spread = 2 * float(np.max(np.abs(self.detunings)))
        return max(spread, coupling)

    def hamiltonian(self, t_local: float, t_start: float = 0.0) -> sp.csr_matrix:
        """H at local time t_local: controls from the local segment, phases from t_start + t_local."""
        seg = min(int(t_local // self.segment_duration), self.num_segments - 1)
        c = (-self.omega_y[:, seg] + 1j * self.omega_x[:, seg]) * self.signs
        t = t_start + t_local
        k = self.num_modes
        h = sp.csr_matrix((self.dim, self.dim), dtype=complex)
        if self.kind == "squeezing":
            for l in range(k):
                for m in range(k):
                    coef = 0.25 * np.sum(c * self.lamb_dicke[:, l] * self.lamb_dicke[:, m])
                    coef *= np.exp(1j * (self.detunings[l] + self.detunings[m]) * t)
                    if coef != 0:
                        h = h + coef * self._pairs[(l, m)]
        else:
            for l in range(k):
                coef = 0.5 * np.sum(c * self.lamb_dicke[:, l]) * np.exp(1j * self.detunings[l] * t)
                if coef != 0:
                    h = h + coef * self.ops[l]
        return (h + h.conj().T).tocsr()

    def leakage(self, state: np.ndarray) -> float:
        """Population in the top two Fock levels of any mode."""
        n = self.n_max + 1
        cols = state.reshape(state.shape[0], -1)
        worst = 0.0
        for col in cols.T:
            prob = np.abs(col.reshape((n,) * self.num_modes)) ** 2
            for ax in range(self.num_modes):
                marg = prob.sum(axis=tuple(a for a in range(self.num_modes) if a != ax))
                worst = max(worst, float(marg[-2:].sum()))
        return worst


@dataclass(frozen=True, eq=False)
class FockTrajectory:
    times: np.ndarray
    states: np.ndarray  # (n_times, dim)
    max_leakage: float
    norm_drift: float
    valid: bool

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def evolve(system: FockSystem, initial: np.ndarray, dt: float, strict: bool = True,
           t_start: float = 0.0) -> FockTrajectory:
    """Integrate from ``initial``; states are stored at every segment boundary.

    ``initial`` may be a single state or a (dim, n_states) array of states.

    Steps are aligned to the segment grid with size at most ``dt``. ``t_start``
    is the absolute time of the first segment (phases use the absolute clock).
    """
    psi = np.asarray(initial, dtype=complex).copy()
    if psi.shape[0] != system.dim or psi.ndim > 2:
        raise InputError(f"initial state must have dimension {system.dim}")
    if not dt > 0:
        raise InputError("dt must be positive")
    if dt * system.max_rate() >= 0.01 * 1.000001:
        raise InputError(
            f"dt={dt:.3g} s does not resolve the fastest rate {system.max_rate():.3g} rad/s "
            "(need dt * rate < 0.01)"
        )
    norm0 = np.linalg.norm(psi, axis=0)
    tau = system.segment_duration
    nsub = max(1, int(np.ceil(tau / dt - 1e-9)))
    h = tau / nsub
    states = [psi.copy()]
    times = [0.0]
    leak = system.leakage(psi)
    for seg in range(system.num_segments):
        for j in range(nsub):
            t = seg * tau + j * h
            h1 = system.hamiltonian(t + _C1 * h, t_start)
            h2 = system.hamiltonian(t + _C2 * h, t_start)
            psi = expm_multiply(-1j * h * (_A2 * h1 + _A1 * h2), psi)
            psi = expm_multiply(-1j * h * (_A1 * h1 + _A2 * h2), psi)
        leak = max(leak, system.leakage(psi))
        states.append(psi.copy())
        times.append((seg + 1) * tau)
    drift = float(np.max(np.abs(np.linalg.norm(psi, axis=0) - norm0)))
    valid = leak < LEAKAGE_TOL and drift < 1e-8
    if strict:
        if leak >= LEAKAGE_TOL:
            raise TruncationLeakage(
                f"population {leak:.3g} in the top two Fock levels; increase n_max"
            )
        if drift >= 1e-8:
            raise NumericalError(f"norm drift {drift:.3g}")
    return FockTrajectory(np.array(times), np.array(states), leak, drift, bool(valid))


# States and moments ---------------------------------------------------------


def fock_state(num_modes: int, n_max: int, occupations) -> np.ndarray:
    n = n_max + 1
    v = np.zeros(n**num_modes, dtype=complex)
    idx = 0
    for occ in occupations:
        idx = idx * n + int(occ)
    v[idx] = 1.0
    return v


def coherent_state(num_modes: int, n_max: int, amplitudes) -> np.ndarray:
    from math import factorial

    n = n_max + 1
    vecs = []
    for a in np.broadcast_to(np.asarray(amplitudes, dtype=complex), (num_modes,)):
        k = np.arange(n)
        c = np.array([a**j / np.sqrt(float(factorial(j))) for j in k], dtype=complex)
        vecs.append(c * np.exp(-abs(a) ** 2 / 2))
    v = vecs[0]
    for w in vecs[1:]:
        v = np.kron(v, w)
    return v / np.linalg.norm(v)


def ladder_vector(system: FockSystem) -> list:
    """Operators A = (a_1..a_K, a_1^dag..a_K^dag)."""
    return list(system.ops) + [op.conj().T.tocsr() for op in system.ops]


def moments(system: FockSystem, state: np.ndarray):
    """First moments <A_i> and second moments <A_i A_j>."""
    ops = ladder_vector(system)
    applied = [op @ state for op in ops]
    first = np.array([np.vdot(state, v) for v in applied])
    second = np.array([[np.vdot(state, ops[i] @ applied[j]) for j in range(len(ops))]
                       for i in range(len(ops))])
    return first, second


def predicted_moments(x: np.ndarray, shift: np.ndarray, first0, second0):
    """Moments after A -> X A + (d; d*) from the initial moments."""
    d = np.concatenate([shift, np.conj(shift)])
    m1 = x @ first0
    first = m1 + d
    second = x @ second0 @ x.T + np.outer(d, m1) + np.outer(m1, d) + np.outer(d, d)
    return first, second


@dataclass
class BogoliubovCheck:
    passed: bool
    rows: list  # (state label, observable, oracle, predicted, deviation)
    max_deviation: float
    leakage: float


def check_bogoliubov(system: FockSystem, mixing: MixingState | None, tol: float,
                     shift=None, dt: float | None = None, t_start: float = 0.0,
                     test_states=None) -> BogoliubovCheck:
    """Compare oracle moments with the (psi, chi[, shift]) prediction on test states."""
    k = system.num_modes
    mixing = mixing or MixingState.identity(k)
    x = mixing.block()
    shift = np.zeros(k, dtype=complex) if shift is None else np.asarray(shift, dtype=complex)
    if dt is None:
        dt = DEFAULT_STEP_FRACTION / max(system.max_rate(), 1.0)
    if test_states is None:
        test_states = {
            "vacuum": fock_state(k, system.n_max, [0] * k),
            "coherent": coherent_state(k, system.n_max, [0.3 + 0.2j] * k),
            "fock1": fock_state(k, system.n_max, [1] * k),
        }
    labels = [f"<a{i + 1}>" for i in range(k)]
    names = [f"a{i + 1}" for i in range(k)] + [f"a{i + 1}^dag" for i in range(k)]
    rows = []
    worst = 0.0
    batch = np.stack(list(test_states.values()), axis=1)
    traj = evolve(system, batch, dt, strict=False, t_start=t_start)
    leak = traj.max_leakage
    for col, (label, psi0) in enumerate(test_states.items()):
        f0, s0 = moments(system, psi0)
        f1, s1 = moments(system, traj.final[:, col])
        pf, ps = predicted_moments(x, shift, f0, s0)
        for i in range(k):
            dev = abs(f1[i] - pf[i])
            rows.append((label, labels[i], complex(f1[i]), complex(pf[i]), float(dev)))
            worst = max(worst, dev)
        for i in range(2 * k):
            for j in range(2 * k):
                # a_j a_k and a_j^dag a_k families (others follow by conjugation)
                if (i < k and j < k and i <= j) or (i >= k and j < k):
                    dev = abs(s1[i, j] - ps[i, j])
                    rows.append((label, f"<{names[i]} {names[j]}>", complex(s1[i, j]),
                                 complex(ps[i, j]), float(dev)))
                    worst = max(worst, dev)
    passed = worst < tol and leak < LEAKAGE_TOL
    return BogoliubovCheck(bool(passed), rows, float(worst), float(leak))


def vacuum_overlap(system: FockSystem, dt: float | None = None, t_start: float = 0.0) -> float:
    """|<0| U |0>|^2 from the oracle."""
    k = system.num_modes
    if dt is None:
        dt = DEFAULT_STEP_FRACTION / max(system.max_rate(), 1.0)
    vac = fock_state(k, system.n_max, [0] * k)
    traj = evolve(system, vac, dt, t_start=t_start)
    return float(abs(np.vdot(vac, traj.final)) ** 2)


def symplectic_vacuum_fidelity(mixing: MixingState, shift=None) -> float:
    return vacuum_fidelity(mixing, shift)


# Named validation cases ------------------------------------------------------

ORACLE_CASES = ("single-mode-squeeze", "two-mode-squeeze", "displacement", "fidelity")
_ETA = 0.1


@dataclass
class OracleReport:
    case: str
    rows: list  # (state, observable, oracle, predicted, deviation)
    max_deviation: float
    tolerance: float
    leakage: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "case": self.case,
            "passed": self.passed,
            "max_deviation": self.max_deviation,
            "tolerance": self.tolerance,
            "leakage": self.leakage,
            "rows": [
                {"state": s, "observable": o, "oracle_re": a.real, "oracle_im": a.imag,
                 "predicted_re": b.real, "predicted_im": b.imag, "deviation": d}
                for s, o, a, b, d in self.rows
            ],
        }


def evolve_sequence(stages, initial: np.ndarray, strict: bool = True) -> np.ndarray:
    """Apply (system, t_start) stages in order and return the final state(s)."""
    psi = np.asarray(initial, dtype=complex)
    for system, t_start in stages:
        dt = DEFAULT_STEP_FRACTION / max(system.max_rate(), 1.0)
        psi = evolve(system, psi, dt, strict=strict, t_start=t_start).final
    return psi


def _case_drive(case: str, gt: float, n_max: int):
    """(modes, spec, signs) for a named case; gt is the nominal eta^2 Omega T / 2."""
    from squeezegate.chain import tabulated_modes
    from squeezegate.propagator import ControlWaveform, DriveSpec

    num_seg = 8
    if case == "single-mode-squeeze":
        modes = tabulated_modes([3.0], _ETA, 3.0)
        duration = 100e-6
        omega = 2 * gt / (_ETA**2 * duration)
        wf = ControlWaveform(1, duration / num_seg, np.full(num_seg, omega), np.zeros(num_seg),
                             2 * modes.omega[0], "squeezing")
        return modes, DriveSpec.from_waveforms([wf], modes), {1: 1}
    if case in ("two-mode-squeeze", "fidelity"):
        modes = tabulated_modes([3.0, 2.99], _ETA, 3.0)
        duration = 60e-6
        omega = 2 * gt / (_ETA**2 * duration)
        rng = np.random.default_rng(11)
        shape = 1 + 0.3 * rng.standard_normal((2, num_seg))
        wfs = [ControlWaveform(i + 1, duration / num_seg, omega * shape[i],
                               0.5 * omega * shape[1 - i][::-1], float(modes.omega.sum()),
                               "squeezing") for i in range(2)]
        return modes, DriveSpec.from_waveforms(wfs, modes), {1: 1, 2: -1}
    if case == "displacement":
        modes = tabulated_modes([3.0], _ETA, 3.0)
        duration = 50e-6
        omega = 2 * gt / (_ETA * duration)
        wf = ControlWaveform(1, duration / num_seg, np.full(num_seg, omega),
                             np.linspace(-omega, omega, num_seg), float(modes.omega[0]),
                             "displacement")
        return modes, DriveSpec.from_waveforms([wf], modes), {1: 1}
    raise InputError(f"unknown oracle case {case!r}; choose from {', '.join(ORACLE_CASES)}")


def run_oracle_case(case: str, gt: float = 0.5, n_max: int = 40,
                    tol: float | None = None) -> OracleReport:
    """Compare the Fock oracle against the symplectic propagator on a named case."""
    from squeezegate.phasespace import SpinConfigSet
    from squeezegate.propagator import (ControlWaveform, DriveSpec, propagate_displacement,
                                        propagate_mixing)

    if not np.isfinite(gt) or gt < 0:
        raise InputError("gt must be a non-negative number")
    modes, spec, signs = _case_drive(case, gt, n_max)
    system = FockSystem.from_drive(spec, modes, signs, n_max=n_max)
    k = modes.num_modes
    if case == "displacement":
        tol = 1e-6 if tol is None else tol
        traj = propagate_displacement(spec, modes, signs)
        alpha0 = 0.4 - 0.3j
        states = {"coherent": coherent_state(k, n_max, [alpha0])}
        chk = check_bogoliubov(system, None, tol, shift=traj.alpha[-1], test_states=states)
        return OracleReport(case, chk.rows, chk.max_deviation, tol, chk.leakage, chk.passed)
    configs = SpinConfigSet(spec.ions)
    mixing = propagate_mixing(spec, modes, configs).final(configs.index_of(signs))
    if case != "fidelity":
        tol = 1e-5 if tol is None else tol
        chk = check_bogoliubov(system, mixing, tol)
        return OracleReport(case, chk.rows, chk.max_deviation, tol, chk.leakage, chk.passed)
    # fidelity: squeeze, then a displacement on mode 1 from ion 1 starting at the squeeze end
    tol = 1e-6 if tol is None else tol
    t1 = spec.duration
    wf = ControlWaveform(1, 5e-6, np.full(4, 2 * np.pi * 20e3), np.full(4, -2 * np.pi * 10e3),
                         float(modes.omega[0]), "displacement")
    dspec = DriveSpec.from_waveforms([wf], modes)
    dsys = FockSystem.from_drive(dspec, modes, {1: signs[1]}, n_max=n_max)
    shift = propagate_displacement(dspec, modes, signs[1], t_start=t1).alpha[-1]
    vac = fock_state(k, n_max, [0] * k)
    final = evolve_sequence([(system, 0.0), (dsys, t1)], vac, strict=False)
    oracle = float(abs(np.vdot(vac, final)) ** 2)
    predicted = float(vacuum_fidelity(mixing, shift))
    leak = max(system.leakage(final), dsys.leakage(final))
    dev = abs(oracle - predicted)
    rows = [("vacuum", "|<0|U|0>|^2", complex(oracle), complex(predicted), float(dev))]
    return OracleReport(case, rows, float(dev), tol, float(leak),
                        bool(dev < tol and leak < LEAKAGE_TOL))
