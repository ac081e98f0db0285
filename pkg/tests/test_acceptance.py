"""Acceptance gate: every criterion at its stated tolerance.

Each test carries a ``criterion`` marker; the run ends with one PASS/FAIL line
per criterion (see conftest.py). Criteria that need the 11-ion squeezing
waveforms share them through module-scoped scenario runs (seed 7).
"""

import time

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from squeezegate import io
from squeezegate.algebra import (
    a,
    aa,
    ad,
    adad,
    closure,
    commutator,
    expected_squeezing_dimension,
    n_half,
    one,
    squeezing_generators,
)
from squeezegate.chain import ELEVEN_ION_TABLE_MHZ, TrapConfig, radial_modes
from squeezegate.displacement import build_displacement_matrix, single_mode_target, solve_least_norm
from squeezegate.fock import run_oracle_case
from squeezegate.phasespace import (
    SpinConfigSet,
    from_lambda,
    polar_decompose,
    random_mixing_state,
    reconstruct,
    to_lambda,
)
from squeezegate.propagator import ControlWaveform, DriveSpec, propagate_displacement, propagate_mixing
from squeezegate.scenarios import ScenarioFile, build_modes, default_scenario, run_scenario
from squeezegate.squeeze import (
    SqueezeProblem,
    make_polynomial_target,
    make_stabilizer_target,
    spectator_gauge,
)
from squeezegate.units import MHZ

TABLE = np.array(ELEVEN_ION_TABLE_MHZ)


def spectrum_deviation(axial_mhz: float) -> float:
    md = radial_modes(TrapConfig(11, axial_mhz, 3.0, 0.1))
    return float(np.max(np.abs(md.frequencies - TABLE)))


# 1. Mode spectrum -------------------------------------------------------------------

@pytest.mark.criterion("1 mode spectrum (axial 0.39 MHz, +-0.002 MHz per mode)")
def test_c1_mode_spectrum(record_property):
    t0 = time.perf_counter()
    md = radial_modes(TrapConfig(11, 0.39, 3.0, 0.1))
    elapsed = time.perf_counter() - t0
    dev = np.abs(md.frequencies - TABLE)
    record_property("detail", f"max deviation {dev.max():.4f} MHz (mode {dev.argmax() + 1}), "
                              f"{elapsed:.3f} s")
    assert elapsed < 1.0
    assert dev.max() < 2e-3, (
        "the tabulated spectrum is not the 0.39 MHz solution; see the decisions ledger")


@pytest.mark.criterion("1b tabulated spectrum reproduced at the fitted axial frequency")
def test_c1b_table_matches_a_single_axial_frequency(record_property):
    """Diagnostic for criterion 1: the table is a physical chain spectrum, for another axial frequency."""
    fit = minimize_scalar(spectrum_deviation, bounds=(0.25, 0.45), method="bounded",
                          options={"xatol": 1e-6})
    record_property("detail", f"best axial {fit.x:.4f} MHz gives max deviation {fit.fun:.4f} MHz")
    assert fit.fun < 2e-3
    assert abs(fit.x - 0.39) > 0.03


# 2. Displacement synthesis ------------------------------------------------------------

@pytest.mark.criterion("2 displacement synthesis (ion 5, alpha_8 = 1)")
def test_c2_displacement(eleven_modes, record_property):
    t0 = time.perf_counter()
    tgt = single_mode_target(eleven_modes, 5, 8, 1.0, 50e-6, 40)
    wf = solve_least_norm(tgt, eleven_modes)
    alpha = propagate_displacement(DriveSpec.from_waveforms([wf], eleven_modes), eleven_modes,
                                   1).alpha[-1]
    elapsed = time.perf_counter() - t0
    others = float(np.max(np.abs(np.delete(alpha, 7))))
    err8 = float(abs(alpha[7] - 1))
    peak = wf.peak_quadrature
    record_property("detail", f"|alpha_8 - 1| = {err8:.1e}, max other {others:.1e}, "
                              f"peak {peak / MHZ:.4f} x 2pi MHz, {elapsed:.3f} s")
    assert err8 < 1e-9 and others < 1e-9
    assert peak < 2 * np.pi * 1e6
    assert elapsed < 1.0


# Shared 11-ion scenario runs -------------------------------------------------------------

@pytest.fixture(scope="module")
def stabilizer_run(tmp_path_factory):
    sc = ScenarioFile.from_dict(default_scenario("stabilizer"))
    t0 = time.perf_counter()
    res = run_scenario(sc, tmp_path_factory.mktemp("stabilizer"))
    return sc, res, time.perf_counter() - t0


@pytest.fixture(scope="module")
def polynomial_run(tmp_path_factory):
    sc = ScenarioFile.from_dict(default_scenario("polynomial"))
    t0 = time.perf_counter()
    res = run_scenario(sc, tmp_path_factory.mktemp("polynomial"))
    return sc, res, time.perf_counter() - t0


def final_maps(sc, res, target):
    """Lab-frame stage maps of the synthesized squeeze, one per target configuration."""
    modes = build_modes(sc)
    wfs = io.read_waveforms(res.out_dir / "squeeze_waveforms.json")
    traj = propagate_mixing(DriveSpec.from_waveforms(wfs, modes), modes, target.configs)
    return [traj.final(c) for c in range(len(target.configs))]


# 3. Stabilizer squeeze ----------------------------------------------------------------

@pytest.mark.criterion("3 stabilizer squeeze (ions 3, 9; mode 8; 550 us; 70 segments)")
def test_c3_stabilizer_squeeze(stabilizer_run, record_property):
    sc, res, _ = stabilizer_run
    modes = build_modes(sc)
    target = make_stabilizer_target(8, (3, 9), modes, 550e-6, 70)
    maps = final_maps(sc, res, target)
    worst = 0.0
    for c, m in enumerate(maps):
        s = target.configs.signs(c)
        theta = float(np.real(polar_decompose(m).theta[7, 7]))
        want = np.pi if s[3] == s[9] else 0.0
        worst = max(worst, abs(np.angle(np.exp(1j * (theta - want)))))
    infid = res.report["squeeze"]["mean_infidelity"]
    wall = res.timing["optimizer_wall_s"]
    record_property("detail", f"mean infidelity {infid:.2e}, max |theta_88 - target| "
                              f"{worst:.1e} rad, optimizer {wall:.0f} s")
    assert res.report["squeeze"]["converged"]
    assert infid < 1e-3
    assert worst < 1e-2
    assert wall <= 1800


# 4. Polynomial squeeze -----------------------------------------------------------------

def polynomial_maps(polynomial_run):
    sc, res, _ = polynomial_run
    modes = build_modes(sc)
    target = make_polynomial_target(10, (4, 5, 7, 8), 0.5, modes, 102e-6, 70)
    return target, final_maps(sc, res, target)


def spectator_deviation(target, maps, gauge_fixed: bool) -> float:
    """max |psi - psi_target|, |chi - chi_target| over entries touching a spectator mode."""
    m = target.num_modes
    p = target.mode - 1
    spect = np.ones(m, dtype=bool)
    spect[p] = False
    touch = np.ones((m, m), dtype=bool)
    touch[p, p] = False
    worst = 0.0
    for c, fm in enumerate(maps):
        x = fm.block()[None]
        tg = target.state(c).block()[None]
        if gauge_fixed:
            tg = spectator_gauge(x, tg, spect)
        d_psi = np.abs(x[0, :m, :m] - tg[0, :m, :m])[touch]
        d_chi = np.abs(x[0, :m, m:] - tg[0, :m, m:])[touch]
        worst = max(worst, float(d_psi.max()), float(d_chi.max()))
    return worst


@pytest.mark.criterion("4a polynomial squeeze: r_10,10 = |sum xi s| (ions 4,5,7,8; 102 us)")
def test_c4a_polynomial_target_mode(polynomial_run, record_property):
    target, maps = polynomial_maps(polynomial_run)
    worst = 0.0
    for c, fm in enumerate(maps):
        s = target.configs.signs(c)
        want = abs(0.5 * sum(s.values()))
        r = float(np.real(polar_decompose(fm).r[9, 9]))
        worst = max(worst, abs(r - want))
    _, res, _ = polynomial_run
    wall = res.timing["optimizer_wall_s"]
    record_property("detail", f"max |r_10,10 - |sum xi s|| = {worst:.1e}, "
                              f"mean infidelity {res.report['squeeze']['mean_infidelity']:.2e}, "
                              f"optimizer {wall:.0f} s")
    assert res.report["squeeze"]["converged"]
    assert worst < 1e-2
    assert wall <= 1800


@pytest.mark.criterion("4b polynomial squeeze: spectator (psi, chi) modulo free mode rotations")
def test_c4b_polynomial_spectators_gauge_fixed(polynomial_run, record_property):
    target, maps = polynomial_maps(polynomial_run)
    dev = spectator_deviation(target, maps, gauge_fixed=True)
    record_property("detail", f"max deviation {dev:.1e} after removing one phase per spectator mode")
    assert dev < 1e-2


@pytest.mark.criterion("4c polynomial squeeze: raw spectator (psi, chi) deviation < 1e-2")
def test_c4c_polynomial_spectators_literal(polynomial_run, record_property):
    """Literal reading: spectator modes return to the identity including their phases.

    Spectator light shifts scale with Omega^2 and keep the sign of each mode's
    detuning, so they cannot be cancelled within this pulse area; see the
    decisions ledger for the numerical evidence. Expected to fail.
    """
    target, maps = polynomial_maps(polynomial_run)
    dev = spectator_deviation(target, maps, gauge_fixed=False)
    record_property("detail", f"max raw deviation {dev:.2e}")
    assert dev < 1e-2


# 5. Gate truth tables -------------------------------------------------------------------

@pytest.mark.criterion("5a stabilizer truth table: -2AB prod s within 2e-2 rad")
def test_c5a_stabilizer_truth_table(stabilizer_run, record_property):
    _, res, wall = stabilizer_run
    tt = res.report["truth_table"]
    record_property("detail", f"{len(tt['deviations'])} configs, max deviation "
                              f"{tt['max_deviation']:.2e} rad, pipeline {wall:.0f} s")
    assert len(tt["deviations"]) == 16
    assert not tt["relative"] and tt["tolerance"] == 2e-2
    assert tt["max_deviation"] < 2e-2
    for e, row in zip(tt["expected_rad"], res.report["gate"]["configs"]):
        prod = np.prod([row["signs"][str(i)] for i in (3, 5, 7, 9)])
        assert e == pytest.approx(-2.0 * prod)


@pytest.mark.criterion("5b polynomial truth table: 2AB exp(sum xi s) within 2% relative")
def test_c5b_polynomial_truth_table(polynomial_run, record_property):
    _, res, wall = polynomial_run
    tt = res.report["truth_table"]
    distinct = {tuple(sorted((k, v) for k, v in row["signs"].items() if k != "3"))
                for row in res.report["gate"]["configs"]}
    record_property("detail", f"{len(distinct)} gate configs (x2 auxiliary spin), max relative "
                              f"deviation {tt['max_deviation']:.2e}, pipeline {wall:.0f} s")
    assert len(distinct) == 16
    assert tt["relative"] and tt["tolerance"] == 2e-2
    assert tt["max_deviation"] < 2e-2
    for e, row in zip(tt["expected_rad"], res.report["gate"]["configs"]):
        total = 0.5 * sum(row["signs"][str(i)] for i in (4, 5, 7, 8))
        assert e == pytest.approx(2.0 * np.exp(total))


# 6. Oracle equivalence ------------------------------------------------------------------

@pytest.mark.criterion("6 Fock oracle vs symplectic propagation (n_max 40)")
def test_c6_oracle_equivalence(record_property):
    t0 = time.perf_counter()
    reports = [run_oracle_case(c, gt=0.5, n_max=40)
               for c in ("single-mode-squeeze", "two-mode-squeeze", "fidelity")]
    elapsed = time.perf_counter() - t0
    record_property("detail", ", ".join(f"{r.case} {r.max_deviation:.1e}" for r in reports)
                    + f"; {elapsed:.1f} s")
    assert reports[0].tolerance == 1e-5 and reports[1].tolerance == 1e-5
    assert reports[2].tolerance == 1e-6
    assert all(r.passed for r in reports)
    assert elapsed < 60


# 7. Property suites ---------------------------------------------------------------------

@pytest.mark.criterion("7a symplectic residuals < 1e-9 on propagated states")
def test_c7a_symplectic_residuals(eleven_modes, record_property):
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(5):
        wfs = [ControlWaveform(i, 2e-6, rng.normal(size=20) * 2 * np.pi * 100e3,
                               rng.normal(size=20) * 2 * np.pi * 100e3,
                               2 * eleven_modes.omega[7], "squeezing") for i in (3, 9)]
        cs = SpinConfigSet((3, 9))
        tr = propagate_mixing(DriveSpec.from_waveforms(wfs, eleven_modes), eleven_modes, cs)
        for c in range(len(cs)):
            for k in range(len(tr.times)):
                worst = max(worst, tr.rotating(c, k).max_residual())
    record_property("detail", f"max residual {worst:.1e}")
    assert worst < 1e-9


@pytest.mark.criterion("7b polar decomposition roundtrip < 1e-10")
def test_c7b_polar_roundtrip(record_property):
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(50):
        m = random_mixing_state(int(rng.integers(1, 5)), rng)
        back = reconstruct(polar_decompose(m))
        worst = max(worst, float(np.max(np.abs(back.block() - m.block()))))
        worst = max(worst, float(np.max(np.abs(from_lambda(to_lambda(m)).block() - m.block()))))
    record_property("detail", f"max roundtrip error {worst:.1e}")
    assert worst < 1e-10


@pytest.mark.criterion("7c optimizer gradient vs finite differences < 1e-5 relative")
def test_c7c_gradient(eleven_modes, record_property):
    target = make_polynomial_target(10, (4, 5, 7, 8), 0.5, eleven_modes, 102e-6, 12)
    prob = SqueezeProblem(target, eleven_modes)
    rng = np.random.default_rng(7)
    u = rng.normal(scale=0.3, size=prob.num_params)
    _, g = prob.cost_and_grad(u)
    worst = 0.0
    for _ in range(10):
        d = rng.normal(size=u.size)
        d /= np.linalg.norm(d)
        h = 1e-5
        fd = (prob.cost_and_grad(u + h * d)[0] - prob.cost_and_grad(u - h * d)[0]) / (2 * h)
        worst = max(worst, abs(fd - g @ d) / abs(fd))
    record_property("detail", f"max relative error {worst:.1e} over 10 directions")
    assert worst < 1e-5


@pytest.mark.criterion("7d least-norm property on 100 random null-space perturbations")
def test_c7d_least_norm(eleven_modes, record_property):
    tgt = single_mode_target(eleven_modes, 5, 8, 1.0, 50e-6, 40)
    wf = solve_least_norm(tgt, eleven_modes)
    x = np.concatenate([wf.omega_x, wf.omega_y])
    mat = build_displacement_matrix(tgt, eleven_modes)
    _, sv, vh = np.linalg.svd(mat)
    null = vh[np.sum(sv > 1e-10 * sv[0]):]
    rng = np.random.default_rng(7)
    xn = np.linalg.norm(x)
    held = 0
    for _ in range(100):
        y = x + null.T @ rng.normal(size=null.shape[0]) * xn * rng.uniform(0.01, 1.0)
        same = np.allclose(mat @ y, mat @ x, atol=1e-9 * max(1.0, np.max(np.abs(mat @ x))))
        held += bool(same and np.linalg.norm(y) >= xn)
    record_property("detail", f"{held}/100 perturbations reach the same target with larger norm")
    assert held == 100


@pytest.mark.criterion("7e algebra Jacobi identity < 1e-12")
def test_c7e_jacobi(record_property):
    rng = np.random.default_rng(7)
    builders = [lambda j, k, s: aa(j, k, s), lambda j, k, s: adad(j, k, s),
                lambda j, k, s: n_half(j, k, s), lambda j, k, s: a(j, s),
                lambda j, k, s: ad(k, s), lambda j, k, s: one(s)]

    def element():
        out = None
        for _ in range(3):
            b = builders[int(rng.integers(len(builders)))]
            ions = tuple(int(i) for i in rng.choice(4, size=rng.integers(0, 3), replace=False) + 1)
            term = b(int(rng.integers(1, 4)), int(rng.integers(1, 4)), ions) * complex(
                rng.normal(), rng.normal())
            out = term if out is None else out + term
        return out

    worst = 0.0
    for _ in range(200):
        x, y, z = element(), element(), element()
        j = (commutator(x, commutator(y, z)) + commutator(y, commutator(z, x))
             + commutator(z, commutator(x, y)))
        worst = max(worst, j.norm())
    record_property("detail", f"max Jacobi residual {worst:.1e} over 200 triples")
    assert worst < 1e-12


@pytest.mark.criterion("7f squeezing closure grading and dimension for M <= 3")
def test_c7f_closure_grading(record_property):
    dims = []
    for m in (1, 2, 3):
        for s in (1, 2):
            r = closure(squeezing_generators(m, list(range(1, s + 1))))
            assert r.converged
            assert not r.report.violations
            assert not r.report.has_linear and not r.report.has_identity_boson
            assert r.report.dimension == expected_squeezing_dimension(m, s)
            dims.append(f"M{m}S{s}={r.report.dimension}")
    record_property("detail", ", ".join(dims))
