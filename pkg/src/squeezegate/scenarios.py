"""Scenario files and the end-to-end pipeline.

A scenario is a JSON document::

    {
      "trap": {"num_ions": 11, "axial_freq_mhz": 0.39, "radial_freq_mhz": 3.0,
               "base_lamb_dicke": 0.1, "mode_table_mhz": [...]},   # table optional
      "scenario": "stabilizer" | "polynomial" | "custom",
      "ions": [3, 5, 7, 9],            # gate ions (spins whose product is targeted)
      "squeeze_ions": [3, 9],          # ions carrying the squeezing drive
      "alpha_ion": 5, "beta_ion": 7,   # displacement ions
      "mode": 8, "A": 1.0, "B": 1.0, "xi": [0.5, ...],
      "durations_us": {"tau_d": 50, "tau_s": 550},
      "segments": {"N_d": 40, "N_s": 70},
      "seed": 7,
      "tolerances": {"infidelity": 1e-3, "truth_table": 0.02, "relative": false,
                     "budget_s": 1800, "restarts": 5},
      "phase_table": {"+-+-": 2.0, ...}   # custom scenarios only
    }

Defaults: stabilizer scenarios squeeze the first and last gate ion and
displace with the two middle ones; polynomial scenarios squeeze all gate ions
and displace with ``aux_ion``. With ``mode_table_mhz`` the tabulated spectrum
is used with solver eigenvectors; otherwise the chain is solved.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

from squeezegate import io
from squeezegate.chain import ModeData, TrapConfig, radial_modes, tabulated_modes
from squeezegate.composer import GateProtocol, GateTarget, compose, verify_truth_table
from squeezegate.displacement import solve_least_norm, single_mode_target
from squeezegate.errors import InputError, SqueezegateError, StageError
from squeezegate.phasespace import SpinConfigSet
from squeezegate.propagator import DriveSpec, propagate_displacement, propagate_mixing
from squeezegate.squeeze import make_polynomial_target, make_stabilizer_target, optimize
from squeezegate.units import US

SCENARIO_KINDS = ("stabilizer", "polynomial", "custom")


@dataclass(frozen=True)
class ScenarioFile:
    trap: TrapConfig
    scenario: str
    ions: tuple
    mode: int
    squeeze_ions: tuple
    alpha_ion: int
    beta_ion: int
    A: float = 1.0
    B: float = 1.0
    xi: tuple = ()
    tau_d: float = 50e-6  # s
    tau_s: float = 550e-6  # s
    n_d: int = 40
    n_s: int = 70
    seed: int = 0
    infidelity_tol: float = 1e-3
    truth_table_tol: float = 2e-2
    relative: bool = False
    budget_s: float = 1800.0
    restarts: int = 5
    mode_table_mhz: tuple | None = None
    phase_table: dict = field(default_factory=dict)
    squeeze_kind: str | None = None

    def __post_init__(self):
        n = self.trap.num_ions
        if self.scenario not in SCENARIO_KINDS:
            raise InputError(f"scenario must be one of {SCENARIO_KINDS}, got {self.scenario!r}")
        if len(set(self.ions)) != len(self.ions):
            raise InputError("gate ions must be distinct")
        for label, group in (("ions", self.ions), ("squeeze_ions", self.squeeze_ions),
                             ("alpha_ion", (self.alpha_ion,)), ("beta_ion", (self.beta_ion,))):
            bad = [i for i in group if not 1 <= int(i) <= n]
            if bad:
                raise InputError(f"{label} {bad} out of range 1..{n} for a {n}-ion chain")
        if len(set(self.squeeze_ions)) != len(self.squeeze_ions):
            raise InputError("squeeze ions must be distinct")
        if not 1 <= self.mode <= n:
            raise InputError(f"mode {self.mode} out of range 1..{n}")
        if not (self.tau_d > 0 and self.tau_s > 0):
            raise InputError("durations must be positive")
        if self.n_d < 1 or self.n_s < 1:
            raise InputError("segment counts must be positive")
        if self.mode_table_mhz is not None and len(self.mode_table_mhz) != n:
            raise InputError(f"mode table needs {n} frequencies")
        if self.scenario == "polynomial" and len(self.xi) not in (1, len(self.ions)):
            raise InputError("xi needs one value or one per gate ion")

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioFile":
        try:
            tr = data["trap"]
            trap = TrapConfig(int(tr["num_ions"]), float(tr["axial_freq_mhz"]),
                              float(tr["radial_freq_mhz"]), float(tr["base_lamb_dicke"]))
            kind = data["scenario"]
            ions = tuple(int(i) for i in data["ions"])
            mode = int(data["mode"])
        except KeyError as exc:
            raise InputError(f"scenario missing field {exc}") from None
        except (TypeError, ValueError) as exc:
            raise InputError(f"malformed scenario: {exc}") from None
        if not ions:
            raise InputError("scenario needs at least one gate ion")
        dur = data.get("durations_us", {})
        seg = data.get("segments", {})
        tol = data.get("tolerances", {})
        if kind == "stabilizer":
            if len(ions) < 4 and "squeeze_ions" not in data:
                raise InputError("stabilizer scenarios need four gate ions or explicit roles")
            squeeze = tuple(data.get("squeeze_ions", (ions[0], ions[-1])))
            alpha_ion = int(data.get("alpha_ion", ions[1] if len(ions) > 1 else ions[0]))
            beta_ion = int(data.get("beta_ion", ions[2] if len(ions) > 2 else ions[-1]))
            default_tau_s = 550.0
        else:
            squeeze = tuple(data.get("squeeze_ions", ions))
            aux = data.get("aux_ion")
            alpha_ion = int(data.get("alpha_ion", aux if aux is not None else ions[0]))
            beta_ion = int(data.get("beta_ion", aux if aux is not None else ions[0]))
            default_tau_s = 102.0
        xi = data.get("xi", ())
        xi = tuple(float(v) for v in (xi if isinstance(xi, (list, tuple)) else [xi]))
        table = data.get("trap", {}).get("mode_table_mhz")
        try:
            return cls(
                trap=trap, scenario=kind, ions=ions, mode=mode,
                squeeze_ions=tuple(int(i) for i in squeeze), alpha_ion=alpha_ion,
                beta_ion=beta_ion, A=float(data.get("A", 1.0)), B=float(data.get("B", 1.0)),
                xi=xi,
                tau_d=float(dur.get("tau_d", 50.0)) * US,
                tau_s=float(dur.get("tau_s", default_tau_s)) * US,
                n_d=int(seg.get("N_d", 40)), n_s=int(seg.get("N_s", 70)),
                seed=int(data.get("seed", 0)),
                infidelity_tol=float(tol.get("infidelity", 1e-3)),
                truth_table_tol=float(tol.get("truth_table", 2e-2)),
                relative=bool(tol.get("relative", kind == "polynomial")),
                budget_s=float(tol.get("budget_s", 1800.0)),
                restarts=int(tol.get("restarts", 5)),
                mode_table_mhz=None if table is None else tuple(float(f) for f in table),
                phase_table=dict(data.get("phase_table", {})),
                squeeze_kind=data.get("squeeze_kind"),
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, InputError):
                raise
            raise InputError(f"malformed scenario: {exc}") from None

    @classmethod
    def load(cls, path) -> "ScenarioFile":
        return cls.from_dict(io.read_json(path))

    def gate_target(self) -> GateTarget:
        phibar = 2 * self.A * self.B
        if self.scenario == "stabilizer":
            return GateTarget("stabilizer", self.ions, phibar)
        if self.scenario == "polynomial":
            return GateTarget("polynomial", self.ions, phibar, self.xi)
        return GateTarget("custom", self.ions, phibar, table=self.phase_table)


def _stage(name):
    """Return a runner that wraps package errors raised by ``fn`` with the stage name."""

    def run(fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except StageError:
            raise
        except SqueezegateError as exc:
            raise StageError(name, exc) from exc

    return run


@dataclass
class ScenarioResult:
    passed: bool
    report: dict
    timing: dict
    out_dir: Path
    artifacts: list


def build_modes(sc: ScenarioFile) -> ModeData:
    if sc.mode_table_mhz is not None:
        return tabulated_modes(sc.mode_table_mhz, sc.trap.base_lamb_dicke, sc.trap.radial_freq)
    return radial_modes(sc.trap)


def run_scenario(sc: ScenarioFile, out_dir, seed: int | None = None,
                 verbose: bool = False) -> ScenarioResult:
    """modes -> synth-disp -> synth-squeeze -> compose -> verify, writing artifacts as it goes."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = sc.seed if seed is None else seed
    timing: dict = {}
    files: list = []

    def timed(name, fn, *args, **kwargs):
        t0 = time.perf_counter()
        res = _stage(name)(fn, *args, **kwargs)
        key = f"{name}_s"
        timing[key] = timing.get(key, 0.0) + time.perf_counter() - t0
        return res

    modes = timed("modes", build_modes, sc)
    files.append(io.write_json(out / "modes.json", modes.to_dict()))

    # squeezing first: the beta stage starts after it
    if sc.scenario == "stabilizer" or (sc.scenario == "custom" and sc.squeeze_kind == "stabilizer"):
        target = timed("synth-squeeze", make_stabilizer_target, sc.mode, sc.squeeze_ions, modes,
                       duration=sc.tau_s, num_segments=sc.n_s, tolerance=sc.infidelity_tol)
    else:
        xi = sc.xi if sc.xi else (0.5,)
        target = timed("synth-squeeze", make_polynomial_target, sc.mode, sc.squeeze_ions, xi,
                       modes, duration=sc.tau_s, num_segments=sc.n_s,
                       tolerance=sc.infidelity_tol)
    sq_wfs, sq_report = timed("synth-squeeze", optimize, target, modes, seed=seed,
                              restarts=sc.restarts, time_budget_s=sc.budget_s, verbose=verbose)
    timing["optimizer_wall_s"] = sq_report.wall_time_s
    files.append(io.write_waveforms(out / "squeeze_waveforms.json", sq_wfs, "squeeze"))
    files.append(io.write_json(out / "squeeze_report.json", sq_report.to_dict(include_timing=False)))

    t_beta = sc.tau_d + sc.tau_s
    wa = timed("synth-disp", solve_least_norm,
               single_mode_target(modes, sc.alpha_ion, sc.mode, -sc.A, sc.tau_d, sc.n_d), modes)
    wb = timed("synth-disp", solve_least_norm,
               single_mode_target(modes, sc.beta_ion, sc.mode, 1j * sc.B, sc.tau_d, sc.n_d,
                                  t_start=t_beta), modes)
    files.append(io.write_waveforms(out / "alpha_waveform.json", [wa], "alpha"))
    files.append(io.write_waveforms(out / "beta_waveform.json", [wb], "beta"))

    gate = sc.gate_target()
    protocol = _stage("compose")(GateProtocol.build, wa, wb, sq_wfs, gate)
    rep = timed("compose", compose, protocol, modes)
    truth = verify_truth_table(rep, gate, sc.truth_table_tol, relative=sc.relative)

    # plot data
    files.append(io.write_csv(out / "waveform_squeeze.csv", *io.waveform_table(sq_wfs, sc.tau_d)))
    files.append(io.write_csv(out / "waveform_alpha.csv", *io.waveform_table([wa])))
    files.append(io.write_csv(out / "waveform_beta.csv", *io.waveform_table([wb], t_beta)))
    sq_cfg = SpinConfigSet(tuple(w.ion for w in sq_wfs))
    sq_traj = propagate_mixing(DriveSpec.from_waveforms(sq_wfs, modes), modes, sq_cfg,
                               t_start=sc.tau_d)
    aligned = sq_cfg.index_of({i: 1 for i in sq_cfg.driven_ions})
    files.append(io.write_csv(out / "squeeze_trajectory_aligned.csv",
                              *io.squeeze_trajectory_table(sq_traj, aligned, modes.num_modes)))
    for name, wf, t0 in (("alpha", wa, 0.0), ("beta", wb, t_beta)):
        tr = propagate_displacement(DriveSpec.from_waveforms([wf], modes), modes, 1, t_start=t0)
        files.append(io.write_csv(out / f"displacement_trajectory_{name}.csv",
                                  *io.displacement_trajectory_table(tr)))

    report = {
        "scenario": sc.scenario,
        "seed": seed,
        "target": gate.to_dict(),
        "squeeze": {
            "converged": sq_report.converged,
            "mean_infidelity": sq_report.mean_infidelity,
            "iterations": sq_report.iterations,
        },
        "gate": rep.to_dict(),
        "truth_table": truth.to_dict(),
        "passed": truth.passed,
    }
    files.append(io.write_json(out / "report.json", report))
    files.append(io.write_json(out / "timing.json", timing))
    return ScenarioResult(bool(truth.passed), report, timing, out, [str(f) for f in files])


def verify_report(report: dict, tol: float | None = None, relative: bool | None = None):
    """Recheck a report.json against its embedded target; returns a TruthTableResult."""
    from squeezegate.composer import TruthTableResult

    try:
        target = GateTarget.from_dict(report["target"])
        rows = report["gate"]["configs"]
        tt = report.get("truth_table", {})
    except (KeyError, TypeError) as exc:
        raise InputError(f"report lacks field {exc}") from None
    tol = float(tt.get("tolerance", 2e-2)) if tol is None else tol
    relative = bool(tt.get("relative", False)) if relative is None else relative
    expected, measured, dev = [], [], []
    for row in rows:
        signs = {int(k): int(v) for k, v in row["signs"].items()}
        e = target.expected(signs)
        g = float(row["geometric_phase_rad"])
        d = abs(g - e) / (max(abs(e), 1e-300) if relative else 1.0)
        expected.append(e)
        measured.append(g)
        dev.append(d)
    return TruthTableResult(bool(dev and max(dev) < tol), dev, expected, measured, tol, relative)


def default_scenario(kind: str) -> dict:
    """Ready-to-run 11-ion scenarios on the tabulated spectrum."""
    from squeezegate.chain import ELEVEN_ION_TABLE_MHZ

    trap = {"num_ions": 11, "axial_freq_mhz": 0.39, "radial_freq_mhz": 3.0,
            "base_lamb_dicke": 0.1, "mode_table_mhz": list(ELEVEN_ION_TABLE_MHZ)}
    if kind == "stabilizer":
        return {"trap": trap, "scenario": "stabilizer", "ions": [3, 5, 7, 9], "mode": 8,
                "A": 1.0, "B": 1.0, "durations_us": {"tau_d": 50, "tau_s": 550},
                "segments": {"N_d": 40, "N_s": 70}, "seed": 7,
                "tolerances": {"infidelity": 1e-3, "truth_table": 0.02, "relative": False}}
    if kind == "polynomial":
        return {"trap": trap, "scenario": "polynomial", "ions": [4, 5, 7, 8], "aux_ion": 3,
                "mode": 10, "A": 1.0, "B": 1.0, "xi": [0.5, 0.5, 0.5, 0.5],
                "durations_us": {"tau_d": 50, "tau_s": 102},
                "segments": {"N_d": 40, "N_s": 70}, "seed": 7,
                "tolerances": {"infidelity": 1e-3, "truth_table": 0.02, "relative": True}}
    raise InputError(f"no default scenario {kind!r}")


__all__ = ["ScenarioFile", "ScenarioResult", "run_scenario", "verify_report",
           "default_scenario", "build_modes", "SCENARIO_KINDS"]
