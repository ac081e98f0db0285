import json

import numpy as np
import pytest

from squeezegate import io
from squeezegate.chain import ModeData, tabulated_modes
from squeezegate.cli import EXIT_FAIL, EXIT_INPUT, EXIT_NUMERICAL, EXIT_PASS, main
from squeezegate.errors import InputError
from squeezegate.propagator import ControlWaveform
from squeezegate.scenarios import ScenarioFile, default_scenario, run_scenario, verify_report

SMALL = {
    "trap": {"num_ions": 3, "axial_freq_mhz": 0.39, "radial_freq_mhz": 3.0,
             "base_lamb_dicke": 0.1, "mode_table_mhz": [3.0, 2.97, 2.93]},
    "scenario": "polynomial", "ions": [1, 2], "aux_ion": 3, "mode": 1, "xi": 0.15,
    "A": 1.0, "B": 1.0, "durations_us": {"tau_d": 40, "tau_s": 150},
    "segments": {"N_d": 10, "N_s": 20}, "seed": 3,
    "tolerances": {"restarts": 3, "budget_s": 120},
}


@pytest.fixture
def small_scenario(tmp_path):
    path = tmp_path / "small.json"
    path.write_text(json.dumps(SMALL))
    return path


# Loaders ----------------------------------------------------------------------------

def test_json_roundtrip_is_stable(tmp_path):
    data = {"b": np.arange(3), "a": {"x": np.float64(1.5), "flag": np.bool_(True)}, "c": 1 + 2j}
    p = io.write_json(tmp_path / "d.json", data)
    first = p.read_bytes()
    back = io.read_json(p)
    assert back == {"a": {"flag": True, "x": 1.5}, "b": [0, 1, 2], "c": {"im": 2.0, "re": 1.0}}
    io.write_json(p, data)
    assert p.read_bytes() == first


def test_waveform_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    wfs = [ControlWaveform(i, 1.25e-6, rng.normal(size=5) * 1e5, rng.normal(size=5) * 1e5,
                           2 * np.pi * 6e6, "squeezing") for i in (1, 4)]
    p = io.write_waveforms(tmp_path / "w.json", wfs, "squeeze")
    back = io.read_waveforms(p)
    for w, b in zip(wfs, back):
        assert (w.ion, w.kind, w.segment_duration, w.drive_freq) == (
            b.ion, b.kind, b.segment_duration, b.drive_freq)
        np.testing.assert_array_equal(w.omega_x, b.omega_x)
        np.testing.assert_array_equal(w.omega_y, b.omega_y)


def test_mode_data_roundtrip(tmp_path):
    md = tabulated_modes([3.0, 2.97, 2.93], 0.1, 3.0)
    p = io.write_json(tmp_path / "modes.json", md.to_dict())
    back = ModeData.load(p)
    np.testing.assert_array_equal(back.omega, md.omega)
    np.testing.assert_array_equal(back.lamb_dicke, md.lamb_dicke)
    np.testing.assert_array_equal(back.eigenvectors, md.eigenvectors)


def test_csv_roundtrip_is_exact(tmp_path):
    rows = [[0.1, 1 / 3], [2.0, -np.pi]]
    header, data = io.read_csv(io.write_csv(tmp_path / "t.csv", ["a", "b"], rows))
    assert header == ["a", "b"]
    np.testing.assert_array_equal(data, np.array(rows))


def test_loader_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(InputError):
        io.read_json(bad)
    with pytest.raises(InputError):
        io.read_json(tmp_path / "missing.json")
    io.write_json(bad, {"other": 1})
    with pytest.raises(InputError):
        io.read_waveforms(bad)
    with pytest.raises(InputError):
        io.read_csv(tmp_path / "missing.csv")


def test_waveform_table_is_a_step_plot():
    w = ControlWaveform(2, 1e-6, [1.0, 2.0], [0.0, -1.0], 1.0, "displacement")
    header, rows = io.waveform_table([w], t_start=1e-6)
    assert header == ["time_us", "ion2_omega_x_rad_s", "ion2_omega_y_rad_s"]
    assert [r[0] for r in rows] == pytest.approx([1.0, 2.0, 2.0, 3.0])
    assert [r[1] for r in rows] == [1.0, 1.0, 2.0, 2.0]


# Scenario files -------------------------------------------------------------------

def test_scenario_defaults():
    stab = ScenarioFile.from_dict(default_scenario("stabilizer"))
    assert stab.squeeze_ions == (stab.ions[0], stab.ions[-1])
    assert (stab.alpha_ion, stab.beta_ion) == stab.ions[1:3]
    assert not stab.relative and stab.tau_s == pytest.approx(550e-6)
    poly = ScenarioFile.from_dict(default_scenario("polynomial"))
    assert poly.relative and poly.tau_s == pytest.approx(102e-6)
    assert poly.alpha_ion == poly.beta_ion
    assert stab.gate_target().phibar == pytest.approx(2 * stab.A * stab.B)


@pytest.mark.parametrize("patch", [
    {"ions": [4, 5, 7, 12]},
    {"scenario": "teleport"},
    {"mode": 0},
    {"ions": [1, 1]},
    {"xi": [0.1, 0.2, 0.3]},
    {"durations_us": {"tau_d": -1}},
    {"trap": {"num_ions": 3}},
])
def test_malformed_scenarios_rejected(patch):
    data = {**SMALL, **patch}
    with pytest.raises(InputError):
        ScenarioFile.from_dict(data)


def test_run_scenario_writes_artifacts_deterministically(tmp_path):
    sc = ScenarioFile.from_dict(SMALL)
    r1 = run_scenario(sc, tmp_path / "a")
    r2 = run_scenario(sc, tmp_path / "b")
    assert r1.passed and r2.passed
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    for required in ("modes.json", "squeeze_waveforms.json", "alpha_waveform.json",
                     "beta_waveform.json", "report.json", "timing.json",
                     "waveform_squeeze.csv", "squeeze_trajectory_aligned.csv"):
        assert required in names
    for name in names:
        if name != "timing.json":  # wall-clock times are kept out of every other artifact
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name
    rep = io.read_json(tmp_path / "a" / "report.json")
    assert verify_report(rep, None, None).passed
    assert not verify_report(rep, 1e-9, None).passed


# CLI ------------------------------------------------------------------------------

def test_cli_run_and_verify(small_scenario, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["--threads", "1", "--out-dir", str(out), "run", str(small_scenario)]) == EXIT_PASS
    assert "truth table PASS" in capsys.readouterr().out
    assert main(["verify", str(out / "report.json")]) == EXIT_PASS
    assert main(["verify", str(out / "report.json"), "--tol", "1e-9"]) == EXIT_FAIL


def test_cli_staged_pipeline_matches_run(small_scenario, tmp_path):
    """modes -> synth-disp -> synth-squeeze -> compose through the subcommands."""
    d = tmp_path / "staged"
    g = ["--out-dir", str(d)]
    assert main(g + ["modes", "--ions", "3", "--table", "3.0", "2.97", "2.93"]) == EXIT_PASS
    m = str(d / "modes.json")
    assert main(g + ["synth-disp", "--modes", m, "--ion", "3", "--mode", "1", "--alpha", "-1",
                     "--duration-us", "40", "--segments", "10", "--output", "a.json"]) == EXIT_PASS
    assert main(g + ["synth-disp", "--modes", m, "--ion", "3", "--mode", "1", "--alpha", "1j",
                     "--duration-us", "40", "--segments", "10", "--t-start-us", "190",
                     "--output", "b.json"]) == EXIT_PASS
    assert main(g + ["--seed", "3", "synth-squeeze", "--modes", m, "--kind", "polynomial",
                     "--ions", "1", "2", "--mode", "1", "--xi", "0.15", "--duration-us", "150",
                     "--segments", "20", "--restarts", "3"]) == EXIT_PASS
    assert main(g + ["compose", "--modes", m, "--alpha", str(d / "a.json"), "--beta",
                     str(d / "b.json"), "--squeeze", str(d / "squeeze_waveforms.json"),
                     "--target", "polynomial", "--ions", "1", "2", "--xi", "0.15",
                     "--relative"]) == EXIT_PASS
    rep = io.read_json(d / "report.json")
    assert rep["passed"] and len(rep["gate"]["configs"]) == 8


def test_cli_input_errors(small_scenario, tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({**SMALL, "ions": [1, 12]}))
    assert main(["--out-dir", str(tmp_path), "run", str(bad)]) == EXIT_INPUT
    assert "out of range" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "nope.json")]) == EXIT_INPUT
    assert main(["--threads", "0", "algebra"]) == EXIT_INPUT
    assert main(["--out-dir", str(tmp_path), "oracle", "--case", "bogus"]) == EXIT_INPUT
    with pytest.raises(SystemExit):
        main(["frobnicate"])


def test_cli_numerical_failure_exit_code(tmp_path, capsys):
    assert main(["--out-dir", str(tmp_path), "modes", "--ions", "30"]) == EXIT_NUMERICAL
    assert "numerical failure" in capsys.readouterr().err


def test_cli_algebra_and_oracle(tmp_path, capsys):
    assert main(["--out-dir", str(tmp_path), "algebra", "--modes", "2", "--spins", "2"]) == EXIT_PASS
    text = (tmp_path / "closure.txt").read_text()
    assert "dimension: 20" in text and "grading (odd: AA/DD, even: N): holds" in text
    assert main(["--out-dir", str(tmp_path), "algebra", "--generators", "squeeze+disp",
                 "--spins", "2"]) == EXIT_PASS
    assert main(["--out-dir", str(tmp_path), "algebra", "--modes", "2", "--spins", "2",
                 "--max-iters", "1"]) == EXIT_FAIL
    assert main(["--out-dir", str(tmp_path), "oracle", "--case", "displacement", "--nmax",
                 "20", "--gt", "0.3"]) == EXIT_PASS
    assert io.read_json(tmp_path / "oracle.json")["passed"]


def test_global_flags_after_subcommand(tmp_path):
    assert main(["algebra", "--out-dir", str(tmp_path), "--report", "c.txt"]) == EXIT_PASS
    assert (tmp_path / "c.txt").exists()
