"""Equilibrium crystal and radial normal modes of a linear ion chain.

Positions are in units of the Coulomb length (e^2 / 4 pi eps0 m omega_z^2)^(1/3).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from squeezegate.errors import ChainUnstable, InputError, SolverFailure
from squeezegate.units import MHZ

# Radial spectrum tabulated for an 11-ion chain at omega_r = 3 MHz (cyclic).
ELEVEN_ION_TABLE_MHZ = (3.0, 2.981, 2.954, 2.919, 2.878, 2.830, 2.775, 2.713, 2.645, 2.569, 2.484)


@dataclass(frozen=True)
class TrapConfig:
    num_ions: int
    axial_freq: float  # MHz, cyclic
    radial_freq: float  # MHz, cyclic
    base_lamb_dicke: float

    def __post_init__(self):
        if int(self.num_ions) != self.num_ions or self.num_ions < 1:
            raise InputError(f"num_ions must be a positive integer, got {self.num_ions}")
        if not self.axial_freq > 0:
            raise InputError("axial_freq must be positive")
        if not self.radial_freq > self.axial_freq:
            raise InputError("radial_freq must exceed axial_freq")
        if not self.base_lamb_dicke > 0:
            raise InputError("base_lamb_dicke must be positive")


@dataclass(frozen=True, eq=False)
class ModeData:
    """Radial mode spectrum of a chain.

    ``eigenvectors[n, k]`` is the participation of ion ``n`` in mode ``k`` and
    ``lamb_dicke[n, k]`` the corresponding coupling. Modes are ordered by
    decreasing frequency. Ion and mode labels exposed to users are 1-based;
    array indices here are 0-based.
    """

    frequencies: np.ndarray  # MHz, cyclic, descending
    eigenvectors: np.ndarray
    lamb_dicke: np.ndarray
    positions: np.ndarray | None = None
    base_lamb_dicke: float | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def num_modes(self) -> int:
        return len(self.frequencies)

    @property
    def num_ions(self) -> int:
        return self.eigenvectors.shape[0]

    @property
    def omega(self) -> np.ndarray:
        """Mode frequencies in rad/s."""
        return np.asarray(self.frequencies) * MHZ

    def eta_for_ion(self, ion: int) -> np.ndarray:
        """Lamb-Dicke row of a 1-based ion label."""
        if not 1 <= ion <= self.num_ions:
            raise InputError(f"ion {ion} out of range 1..{self.num_ions}")
        return self.lamb_dicke[ion - 1]

    def to_dict(self) -> dict:
        out = {
            "frequencies_mhz": [float(f) for f in self.frequencies],
            "eigenvectors": self.eigenvectors.tolist(),
            "lamb_dicke": self.lamb_dicke.tolist(),
        }
        if self.positions is not None:
            out["positions"] = [float(u) for u in self.positions]
        if self.base_lamb_dicke is not None:
            out["base_lamb_dicke"] = float(self.base_lamb_dicke)
        if self.metadata:
            out["metadata"] = dict(self.metadata)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ModeData":
        try:
            freqs = np.asarray(data["frequencies_mhz"], dtype=float)
            vecs = np.asarray(data["eigenvectors"], dtype=float)
        except KeyError as exc:
            raise InputError(f"mode table missing field {exc}") from None
        if vecs.shape != (len(freqs), len(freqs)):
            raise InputError(f"eigenvectors must be {len(freqs)}x{len(freqs)}, got {vecs.shape}")
        eta = data.get("base_lamb_dicke")
        if "lamb_dicke" in data:
            ld = np.asarray(data["lamb_dicke"], dtype=float)
        elif eta is not None:
            radial = data.get("radial_freq_mhz", float(np.max(freqs)))
            ld = lamb_dicke_matrix(vecs, freqs, eta, radial)
        else:
            raise InputError("mode table needs 'lamb_dicke' or 'base_lamb_dicke'")
        pos = data.get("positions")
        return cls(
            frequencies=freqs,
            eigenvectors=vecs,
            lamb_dicke=ld,
            positions=None if pos is None else np.asarray(pos, dtype=float),
            base_lamb_dicke=eta,
            metadata=dict(data.get("metadata", {})),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "ModeData":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read mode table {path}: {exc}") from None
        return cls.from_dict(data)


def _potential_gradient(u):
    d = u[:, None] - u[None, :]
    np.fill_diagonal(d, 1.0)
    f = np.sign(d) / d**2
    np.fill_diagonal(f, 0.0)
    return u - f.sum(axis=1)


def _potential_hessian(u):
    d = np.abs(u[:, None] - u[None, :])
    np.fill_diagonal(d, np.inf)
    c = 2.0 / d**3
    hess = -c
    np.fill_diagonal(hess, 1.0 + c.sum(axis=1))
    return hess


def _potential(u):
    d = np.abs(u[:, None] - u[None, :])
    iu = np.triu_indices(len(u), 1)
    return 0.5 * np.sum(u**2) + np.sum(1.0 / d[iu])


def equilibrium_positions(num_ions: int, tol: float = 1e-12, max_iter: int = 500) -> np.ndarray:
    """Dimensionless equilibrium positions of ``num_ions`` ions, ascending.

    Damped Newton iteration on sum(u^2)/2 + sum_{i<j} 1/|u_i - u_j| from a
    uniformly spaced seed. The returned set is symmetrized about zero.
    """
    if int(num_ions) != num_ions or num_ions < 1:
        raise InputError(f"num_ions must be a positive integer, got {num_ions}")
    m = int(num_ions)
    if m == 1:
        return np.zeros(1)
    spacing = 2.018 / m**0.559
    u = (np.arange(m) - (m - 1) / 2) * spacing
    energy = _potential(u)
    for _ in range(max_iter):
        g = _potential_gradient(u)
        if np.linalg.norm(g) < tol:
            break
        step = -np.linalg.solve(_potential_hessian(u), g)
        t = 1.0
        while t > 1e-8:
            trial = u + t * step
            if np.all(np.diff(trial) > 0):
                e_trial = _potential(trial)
                if e_trial <= energy + 1e-14 * abs(energy):
                    break
            t *= 0.5
        else:
            raise SolverFailure("line search stalled while relaxing the crystal")
        u = 0.5 * (trial - trial[::-1])
        energy = _potential(u)
    else:
        raise SolverFailure(f"equilibrium solver did not converge in {max_iter} iterations")
    return u


def coulomb_coupling(positions: np.ndarray) -> np.ndarray:
    """Matrix with off-diagonal |u_n - u_m|^-3 and diagonal -sum_p |u_n - u_p|^-3."""
    d = np.abs(positions[:, None] - positions[None, :])
    np.fill_diagonal(d, np.inf)
    c = d**-3.0
    np.fill_diagonal(c, -c.sum(axis=1))
    return c


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    out = vectors.copy()
    for k in range(out.shape[1]):
        col = out[:, k]
        nz = np.flatnonzero(np.abs(col) > 1e-10)
        if nz.size and col[nz[0]] < 0:
            out[:, k] = -col
    return out


def lamb_dicke_matrix(eigenvectors, frequencies, eta, radial_freq) -> np.ndarray:
    freqs = np.asarray(frequencies, dtype=float)
    return eta * np.sqrt(radial_freq / freqs)[None, :] * np.asarray(eigenvectors)


def radial_modes(cfg: TrapConfig) -> ModeData:
    """Radial normal modes along one transverse axis, sorted by decreasing frequency."""
    u = equilibrium_positions(cfg.num_ions)
    a = coulomb_coupling(u) + np.eye(cfg.num_ions) * (cfg.radial_freq / cfg.axial_freq) ** 2
    mu, b = np.linalg.eigh(a)
    if np.any(mu <= 0):
        raise ChainUnstable(
            "chain unstable at these trap parameters (radial eigenvalue <= 0, zigzag transition)"
        )
    order = np.argsort(mu)[::-1]
    mu = mu[order]
    b = _fix_signs(b[:, order])
    freqs = cfg.axial_freq * np.sqrt(mu)
    return ModeData(
        frequencies=freqs,
        eigenvectors=b,
        lamb_dicke=lamb_dicke_matrix(b, freqs, cfg.base_lamb_dicke, cfg.radial_freq),
        positions=u,
        base_lamb_dicke=cfg.base_lamb_dicke,
        metadata={
            "source": "solver",
            "axial_freq_mhz": cfg.axial_freq,
            "radial_freq_mhz": cfg.radial_freq,
        },
    )


def tabulated_modes(frequencies_mhz, eta: float, radial_freq: float | None = None) -> ModeData:
    """Modes with externally given frequencies and solver eigenvectors.

    In a harmonic trap the radial eigenvectors depend only on the crystal
    geometry, not on the axial frequency, so a tabulated spectrum can be paired
    with them consistently.
    """
    freqs = np.asarray(frequencies_mhz, dtype=float)
    if np.any(np.diff(freqs) > 0) or np.any(freqs <= 0):
        raise InputError("tabulated frequencies must be positive and descending")
    u = equilibrium_positions(len(freqs))
    kappa, b = np.linalg.eigh(coulomb_coupling(u))
    order = np.argsort(kappa)[::-1]
    b = _fix_signs(b[:, order])
    radial = float(freqs[0]) if radial_freq is None else float(radial_freq)
    return ModeData(
        frequencies=freqs,
        eigenvectors=b,
        lamb_dicke=lamb_dicke_matrix(b, freqs, eta, radial),
        positions=u,
        base_lamb_dicke=eta,
        metadata={"source": "table", "radial_freq_mhz": radial},
    )
