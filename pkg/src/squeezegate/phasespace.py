"""Bogoliubov mixing matrices and their phase-space pictures.

A Gaussian motional unitary S acts in the Heisenberg picture as

    S^dag a_k S = sum_j psi_kj a_j + chi_kj a_j^dag.

The block matrix X = [[psi, chi], [chi*, psi*]] is a homomorphism of the
operator product (X(S1 S2) = X(S1) X(S2)); ``compose`` and ``inverse`` work on
that representation.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from squeezegate.errors import InputError

SYMPLECTIC_TOL = 1e-9
BRANCH_TOL = 1e-6


@dataclass(frozen=True)
class SpinConfigSet:
    """All sigma_x eigenvalue assignments of a set of driven ions.

    Config ``i`` assigns ``-1`` to ion ``driven_ions[b]`` when bit ``b`` of ``i``
    is set and ``+1`` otherwise.
    """

    driven_ions: tuple

    def __post_init__(self):
        ions = tuple(int(i) for i in self.driven_ions)
        if len(set(ions)) != len(ions):
            raise InputError(f"driven ions must be distinct, got {ions}")
        if any(i < 1 for i in ions):
            raise InputError("ion labels are 1-based")
        object.__setattr__(self, "driven_ions", ions)

    def __len__(self):
        return 2 ** len(self.driven_ions)

    @property
    def configs(self) -> np.ndarray:
        n = len(self.driven_ions)
        idx = np.arange(2**n)
        bits = (idx[:, None] >> np.arange(n)[None, :]) & 1
        return 1 - 2 * bits

    def signs(self, config_id: int) -> dict:
        return dict(zip(self.driven_ions, (int(s) for s in self.configs[config_id])))

    def index_of(self, signs) -> int:
        """Config id of a mapping ion -> +-1 (extra ions are ignored)."""
        cid = 0
        for b, ion in enumerate(self.driven_ions):
            if signs[ion] == -1:
                cid |= 1 << b
        return cid

    def flipped(self, config_id: int) -> int:
        return (~config_id) & (len(self) - 1)

    def validate_against(self, num_ions: int) -> None:
        bad = [i for i in self.driven_ions if i > num_ions]
        if bad:
            raise InputError(f"ions {bad} out of range 1..{num_ions}")


@dataclass(frozen=True, eq=False)
class MixingState:
    psi: np.ndarray
    chi: np.ndarray
    time: float = 0.0
    frame: str = "lab"  # "lab" or "rotating"

    @classmethod
    def identity(cls, m: int, time: float = 0.0, frame: str = "lab") -> "MixingState":
        return cls(np.eye(m, dtype=complex), np.zeros((m, m), dtype=complex), time, frame)

    @classmethod
    def from_block(cls, x: np.ndarray, time: float = 0.0, frame: str = "lab") -> "MixingState":
        m = x.shape[0] // 2
        return cls(np.array(x[:m, :m]), np.array(x[:m, m:]), time, frame)

    @property
    def num_modes(self) -> int:
        return self.psi.shape[0]

    def block(self) -> np.ndarray:
        return np.block([[self.psi, self.chi], [self.chi.conj(), self.psi.conj()]])

    def residuals(self) -> dict:
        m = self.num_modes
        pp = self.psi @ self.psi.conj().T - self.chi @ self.chi.conj().T - np.eye(m)
        sym = self.psi @ self.chi.T
        return {
            "unitarity": float(np.linalg.norm(pp)),
            "symmetry": float(np.linalg.norm(sym - sym.T)),
            "lambda": float(np.linalg.norm(symplectic_residual(to_lambda(self)))),
        }

    def max_residual(self) -> float:
        return max(self.residuals().values())

    def check(self, tol: float = SYMPLECTIC_TOL) -> None:
        res = self.residuals()
        if max(res["unitarity"], res["symmetry"]) > tol:
            raise InputError(f"not a valid Bogoliubov transformation: {res}")

    def to_lab(self, detunings) -> "MixingState":
        """psi = e^{-i Delta t} psi_tilde, chi = e^{-i Delta t} chi_tilde."""
        if self.frame == "lab":
            return self
        ph = np.exp(-1j * np.asarray(detunings) * self.time)[:, None]
        return MixingState(ph * self.psi, ph * self.chi, self.time, "lab")

    def to_rotating(self, detunings) -> "MixingState":
        if self.frame == "rotating":
            return self
        ph = np.exp(1j * np.asarray(detunings) * self.time)[:, None]
        return MixingState(ph * self.psi, ph * self.chi, self.time, "rotating")


def compose(second: MixingState, first: MixingState) -> MixingState:
    """Bogoliubov map of applying ``first`` and then ``second``."""
    x = second.block() @ first.block()
    return MixingState.from_block(x, time=second.time, frame=second.frame)


def inverse(m: MixingState) -> MixingState:
    return MixingState(m.psi.conj().T, -m.chi.T, m.time, m.frame)


def symplectic_form(m: int) -> np.ndarray:
    return np.block([[np.zeros((m, m)), np.eye(m)], [-np.eye(m), np.zeros((m, m))]])


def symplectic_residual(lam: np.ndarray) -> np.ndarray:
    j = symplectic_form(lam.shape[0] // 2)
    return lam.T @ j @ lam - j


def to_lambda(m: MixingState) -> np.ndarray:
    """Real 2M x 2M map acting on (x_1..x_M, p_1..p_M), with x = (a + a^dag)/2."""
    s = m.psi + m.chi
    d = m.psi - m.chi
    return np.block([[s.real, -d.imag], [s.imag, d.real]])


def from_lambda(lam: np.ndarray, time: float = 0.0, frame: str = "lab") -> MixingState:
    m = lam.shape[0] // 2
    s = lam[:m, :m] + 1j * lam[m:, :m]
    d = lam[m:, m:] - 1j * lam[:m, m:]
    return MixingState((s + d) / 2, (s - d) / 2, time, frame)


# Matrix functions -----------------------------------------------------------


def _herm_fn(a: np.ndarray, fn) -> np.ndarray:
    a = 0.5 * (a + a.conj().T)
    w, v = np.linalg.eigh(a)
    return (v * fn(w)) @ v.conj().T


def herm_sqrt(a):
    return _herm_fn(a, lambda w: np.sqrt(np.clip(w, 0.0, None)))


def herm_log(a):
    return _herm_fn(a, np.log)


def unitary_log(u: np.ndarray):
    """Principal logarithm of a unitary matrix; returns (-i log u, eigenphases)."""
    t, z = sla.schur(u, output="complex")
    phases = np.angle(np.diag(t))
    phases = np.where(phases <= -np.pi, phases + 2 * np.pi, phases)
    theta = (z * phases) @ z.conj().T
    return 0.5 * (theta + theta.conj().T), phases


def unitary_exp(h: np.ndarray) -> np.ndarray:
    """exp(i h) for Hermitian h."""
    return _herm_fn(h, lambda w: np.exp(1j * w))


def _polar_unitary(w: np.ndarray) -> np.ndarray:
    """Unitary factor of w, acting as the identity where w has no support."""
    u, s, vh = np.linalg.svd(w)
    tol = 1e-12 * max(1.0, s[0] if s.size else 0.0)
    null_w = np.abs(s) <= tol
    if not np.any(null_w):
        return u @ vh
    q = u[:, ~null_w] @ vh[~null_w]
    p_out = u[:, null_w] @ u[:, null_w].conj().T
    p_in = vh[null_w].conj().T @ vh[null_w]
    u2, _, vh2 = np.linalg.svd(w + p_out @ p_in)
    comp = u2 @ vh2
    if np.linalg.norm(q + p_out @ comp @ p_in - comp) < 1e-8:
        return comp
    return u @ vh


@dataclass(frozen=True, eq=False)
class PolarForm:
    r: np.ndarray
    theta: np.ndarray
    vartheta: np.ndarray
    time: float = 0.0
    warnings: tuple = field(default=())

    @property
    def z(self) -> np.ndarray:
        return self.r @ unitary_exp(self.vartheta)

    def theta_eigenphases(self) -> np.ndarray:
        return np.linalg.eigvalsh(0.5 * (self.theta + self.theta.conj().T))


def polar_decompose(m: MixingState) -> PolarForm:
    """(psi, chi) -> (r, theta, vartheta) with psi = cosh r e^{i theta},
    chi = sinh r e^{i vartheta} e^{-i theta^T}."""
    cosh_r = herm_sqrt(m.psi @ m.psi.conj().T)
    sinh_r = herm_sqrt(m.chi @ m.chi.conj().T)
    r = herm_log(cosh_r + sinh_r)
    r = _herm_fn(r, lambda w: np.clip(w, 0.0, None))
    rot = np.linalg.solve(cosh_r, m.psi)
    theta, phases = unitary_log(rot)
    notes = []
    if np.any(np.abs(np.abs(phases) - np.pi) < BRANCH_TOL):
        notes.append("theta eigenphase at the +-pi branch cut; sign of theta is ambiguous")
        warnings.warn(notes[-1], RuntimeWarning, stacklevel=2)
    q = _polar_unitary(m.chi @ unitary_exp(theta.T))
    vartheta, _ = unitary_log(q)
    return PolarForm(r=r, theta=theta, vartheta=vartheta, time=m.time, warnings=tuple(notes))


def reconstruct(p: PolarForm, frame: str = "lab") -> MixingState:
    cosh_r = _herm_fn(p.r, np.cosh)
    sinh_r = _herm_fn(p.r, np.sinh)
    psi = cosh_r @ unitary_exp(p.theta)
    chi = sinh_r @ unitary_exp(p.vartheta) @ unitary_exp(p.theta.T).conj().T
    return MixingState(psi, chi, p.time, frame)


def angle_to(value: float, target: float) -> float:
    """Distance between two angles on the circle."""
    d = (value - target + np.pi) % (2 * np.pi) - np.pi
    return float(abs(d))


# Vacuum overlap -------------------------------------------------------------


def vacuum_fidelity(m: MixingState, residual_disp=None) -> float:
    """|<0| D(delta) S |0>|^2 for the Gaussian unitary with Bogoliubov map ``m``
    followed by a displacement with coherent amplitude ``delta``.

    S|0> is proportional to exp(a^dag Z a^dag / 2)|0> with Z = (psi^dag)^-1 chi^T,
    normalized by |det psi|^-1/2.
    """
    det = abs(np.linalg.det(m.psi))
    fid = 1.0 / det
    if residual_disp is not None:
        d = np.asarray(residual_disp, dtype=complex)
        if np.any(d):
            z = np.linalg.solve(m.psi.conj().T, m.chi.T)
            fid *= np.exp(-np.vdot(d, d).real + (d.conj() @ z @ d.conj()).real)
    return float(fid)


def vacuum_disentanglement_infidelity(m: MixingState, residual_disp=None) -> float:
    return float(min(1.0, max(0.0, 1.0 - vacuum_fidelity(m, residual_disp))))


def random_mixing_state(m: int, rng, scale: float = 0.5) -> MixingState:
    """exp of a random quadratic generator; used for property tests."""
    h = rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))
    h = 0.5 * (h + h.conj().T)
    k = rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))
    k = 0.5 * (k + k.T)
    g = np.block([[-1j * h, -1j * k], [1j * k.conj(), 1j * h.conj()]]) * scale
    return MixingState.from_block(sla.expm(g))


def config_product(signs, ions) -> int:
    return int(np.prod([signs[i] for i in ions])) if ions else 1


def all_sign_assignments(ions):
    for combo in itertools.product((1, -1), repeat=len(ions)):
        yield dict(zip(ions, combo))
