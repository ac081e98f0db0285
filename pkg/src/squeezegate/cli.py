"""Command-line entry point.

Exit codes: 0 pass, 1 verification failure, 2 input error, 3 numerical failure.
Heavy modules are imported after argument parsing so that ``--threads`` can
pin the BLAS thread pools before numpy loads.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

EXIT_PASS, EXIT_FAIL, EXIT_INPUT, EXIT_NUMERICAL = 0, 1, 2, 3
_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    """Global flags, accepted before or after the subcommand."""
    g = argparse.ArgumentParser(add_help=False)
    dflt = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    g.add_argument("--seed", type=int, default=dflt(None),
                   help="random seed (default: 0, or the scenario's seed)")
    g.add_argument("--threads", type=int, default=dflt(None),
                   help="BLAS threads; 1 forces deterministic mode")
    g.add_argument("--out-dir", type=Path, default=dflt(Path(".")),
                   help="directory for artifacts")
    return g


def _parser() -> argparse.ArgumentParser:
    common = _global_flags(suppress=True)
    p = argparse.ArgumentParser(prog="squeezegate", parents=[_global_flags(suppress=False)],
                                description="Pulse synthesis and verification for spin-dependent "
                                            "squeezing gates on trapped-ion chains.")
    sub = p.add_subparsers(dest="command", required=True)

    m = sub.add_parser("modes", parents=[common], help="radial normal modes of a chain")
    m.add_argument("--ions", type=int, default=11)
    m.add_argument("--axial-mhz", type=float, default=0.39)
    m.add_argument("--radial-mhz", type=float, default=3.0)
    m.add_argument("--eta", type=float, default=0.1, help="base Lamb-Dicke parameter")
    m.add_argument("--table", type=float, nargs="+", default=None, metavar="MHZ",
                   help="use these tabulated frequencies with solver eigenvectors")
    m.add_argument("--output", default="modes.json")

    d = sub.add_parser("synth-disp", parents=[common], help="least-norm displacement waveform")
    d.add_argument("--modes", type=Path, required=True, help="modes.json")
    d.add_argument("--ion", type=int, required=True)
    d.add_argument("--mode", type=int, required=True, help="target mode (1-based)")
    d.add_argument("--alpha", type=complex, default=1.0, help="target amplitude, e.g. 1 or -1j")
    d.add_argument("--duration-us", type=float, default=50.0)
    d.add_argument("--segments", type=int, default=40)
    d.add_argument("--t-start-us", type=float, default=0.0)
    d.add_argument("--bound-mhz", type=float, default=1.0)
    d.add_argument("--output", default="displacement_waveform.json")

    s = sub.add_parser("synth-squeeze", parents=[common], help="optimize squeezing waveforms")
    s.add_argument("--modes", type=Path, required=True)
    s.add_argument("--kind", choices=("stabilizer", "polynomial"), required=True)
    s.add_argument("--ions", type=int, nargs="+", required=True, help="squeezed ions")
    s.add_argument("--mode", type=int, required=True)
    s.add_argument("--xi", type=float, nargs="+", default=[0.5])
    s.add_argument("--duration-us", type=float, default=None)
    s.add_argument("--segments", type=int, default=70)
    s.add_argument("--tol", type=float, default=1e-3)
    s.add_argument("--restarts", type=int, default=5)
    s.add_argument("--budget-s", type=float, default=1800.0)
    s.add_argument("--verbose", action="store_true")
    s.add_argument("--output", default="squeeze_waveforms.json")

    c = sub.add_parser("compose", parents=[common], help="compose the eight-stage protocol")
    c.add_argument("--modes", type=Path, required=True)
    c.add_argument("--alpha", type=Path, required=True, help="alpha waveform json")
    c.add_argument("--beta", type=Path, required=True, help="beta waveform json")
    c.add_argument("--squeeze", type=Path, required=True, help="squeeze waveforms json")
    c.add_argument("--target", choices=("stabilizer", "polynomial"), required=True)
    c.add_argument("--ions", type=int, nargs="+", required=True, help="gate ions")
    c.add_argument("--xi", type=float, nargs="+", default=[0.5])
    c.add_argument("--phibar", type=float, default=2.0)
    c.add_argument("--tol", type=float, default=2e-2)
    c.add_argument("--relative", action="store_true")
    c.add_argument("--output", default="report.json")

    v = sub.add_parser("verify", parents=[common], help="recheck a report's truth table")
    v.add_argument("report", type=Path)
    v.add_argument("--tol", type=float, default=None)
    v.add_argument("--relative", action="store_true", default=None)

    o = sub.add_parser("oracle", parents=[common], help="Fock-space oracle comparison")
    o.add_argument("--case", default="single-mode-squeeze")
    o.add_argument("--gt", type=float, default=0.5)
    o.add_argument("--nmax", type=int, default=40)
    o.add_argument("--tol", type=float, default=None)

    a = sub.add_parser("algebra", parents=[common], help="Lie closure of the drive operators")
    a.add_argument("--modes", type=int, default=1)
    a.add_argument("--spins", type=int, default=1)
    a.add_argument("--generators", choices=("squeeze", "squeeze+disp", "disp"), default="squeeze")
    a.add_argument("--max-iters", type=int, default=50)
    a.add_argument("--report", default="closure.txt")

    r = sub.add_parser("run", parents=[common], help="run a scenario file end to end")
    r.add_argument("scenario", help="scenario json, or 'stabilizer'/'polynomial' for the built-ins")
    r.add_argument("--verbose", action="store_true")
    return p


def _out(args, name) -> Path:
    args.out_dir.mkdir(parents=True, exist_ok=True)
    return args.out_dir / name


def _cmd_modes(args) -> int:
    from squeezegate import io
    from squeezegate.chain import TrapConfig, radial_modes, tabulated_modes

    if args.table:
        md = tabulated_modes(args.table, args.eta, args.radial_mhz)
    else:
        md = radial_modes(TrapConfig(args.ions, args.axial_mhz, args.radial_mhz, args.eta))
    path = io.write_json(_out(args, args.output), md.to_dict())
    for k, f in enumerate(md.frequencies, 1):
        print(f"mode {k:2d}: {f:.6f} MHz")
    print(f"wrote {path}")
    return EXIT_PASS


def _cmd_synth_disp(args) -> int:
    import numpy as np

    from squeezegate import io
    from squeezegate.chain import ModeData
    from squeezegate.displacement import solve_least_norm, single_mode_target
    from squeezegate.units import MHZ, US

    md = ModeData.load(args.modes)
    t = single_mode_target(md, args.ion, args.mode, args.alpha, args.duration_us * US,
                           args.segments, t_start=args.t_start_us * US)
    wf = solve_least_norm(t, md, bound=args.bound_mhz * MHZ)
    path = io.write_waveforms(_out(args, args.output), [wf], "displacement")
    print(f"peak quadrature {wf.peak_quadrature / MHZ:.6f} MHz; "
          f"nonzero segments {int(np.count_nonzero(wf.omega_x) + np.count_nonzero(wf.omega_y))}")
    print(f"wrote {path}")
    return EXIT_PASS


def _cmd_synth_squeeze(args) -> int:
    from squeezegate import io
    from squeezegate.chain import ModeData
    from squeezegate.squeeze import make_polynomial_target, make_stabilizer_target, optimize
    from squeezegate.units import US

    md = ModeData.load(args.modes)
    if args.kind == "stabilizer":
        dur = (args.duration_us or 550.0) * US
        tg = make_stabilizer_target(args.mode, args.ions, md, dur, args.segments, args.tol)
    else:
        dur = (args.duration_us or 102.0) * US
        xi = args.xi if len(args.xi) > 1 else args.xi * len(args.ions)
        tg = make_polynomial_target(args.mode, args.ions, xi, md, dur, args.segments, args.tol)
    wfs, rep = optimize(tg, md, seed=args.seed or 0, restarts=args.restarts,
                        time_budget_s=args.budget_s, verbose=args.verbose)
    io.write_waveforms(_out(args, args.output), wfs, "squeeze")
    io.write_json(_out(args, "squeeze_report.json"), rep.to_dict(include_timing=False))
    io.write_json(_out(args, "timing.json"), {"optimizer_wall_s": rep.wall_time_s})
    print(f"converged={rep.converged} mean infidelity={rep.mean_infidelity:.3e} "
          f"iterations={rep.iterations}: {rep.message}")
    return EXIT_PASS if rep.converged else EXIT_FAIL


def _cmd_compose(args) -> int:
    from squeezegate import io
    from squeezegate.chain import ModeData
    from squeezegate.composer import GateProtocol, GateTarget, compose, verify_truth_table

    md = ModeData.load(args.modes)
    wa = io.read_waveforms(args.alpha)
    wb = io.read_waveforms(args.beta)
    ws = io.read_waveforms(args.squeeze)
    if len(wa) != 1 or len(wb) != 1:
        from squeezegate.errors import InputError

        raise InputError("alpha and beta files must hold one waveform each")
    xi = args.xi if len(args.xi) > 1 else args.xi * len(args.ions)
    target = GateTarget(args.target, tuple(args.ions), args.phibar,
                        tuple(xi) if args.target == "polynomial" else ())
    rep = compose(GateProtocol.build(wa[0], wb[0], ws, target), md)
    truth = verify_truth_table(rep, target, args.tol, relative=args.relative)
    io.write_json(_out(args, args.output), {"target": target.to_dict(), "gate": rep.to_dict(),
                                            "truth_table": truth.to_dict(),
                                            "passed": truth.passed})
    _print_truth(truth)
    return EXIT_PASS if truth.passed else EXIT_FAIL


def _print_truth(truth) -> None:
    unit = "relative" if truth.relative else "rad"
    for e, g, d in zip(truth.expected, truth.measured, truth.deviations):
        print(f"expected {e:+.6f}  measured {g:+.6f}  deviation {d:.2e} ({unit})")
    print(f"truth table {'PASS' if truth.passed else 'FAIL'}: max deviation "
          f"{truth.max_deviation:.3e} (tol {truth.tolerance:g})")


def _cmd_verify(args) -> int:
    from squeezegate import io
    from squeezegate.scenarios import verify_report

    truth = verify_report(io.read_json(args.report), args.tol, args.relative)
    _print_truth(truth)
    return EXIT_PASS if truth.passed else EXIT_FAIL


def _cmd_oracle(args) -> int:
    from squeezegate import io
    from squeezegate.fock import run_oracle_case

    rep = run_oracle_case(args.case, args.gt, args.nmax, args.tol)
    print(f"{'state':10s} {'observable':16s} {'oracle':>28s} {'symplectic':>28s} {'deviation':>10s}")
    for state, obs, orc, pred, dev in rep.rows:
        print(f"{state:10s} {obs:16s} {orc.real:+.6e}{orc.imag:+.6e}j "
              f"{pred.real:+.6e}{pred.imag:+.6e}j {dev:10.2e}")
    print(f"max deviation {rep.max_deviation:.3e} (tol {rep.tolerance:g}); "
          f"leakage {rep.leakage:.2e}: {'PASS' if rep.passed else 'FAIL'}")
    io.write_json(_out(args, "oracle.json"), rep.to_dict())
    return EXIT_PASS if rep.passed else EXIT_FAIL


def _cmd_algebra(args) -> int:
    from squeezegate import algebra

    spins = list(range(1, args.spins + 1))
    gens = []
    if "squeeze" in args.generators:
        gens += algebra.squeezing_generators(args.modes, spins)
    if "disp" in args.generators:
        gens += algebra.displacement_generators(args.modes, spins)
    res = algebra.closure(gens, args.max_iters)
    text = (f"generators: {args.generators}; modes {args.modes}; spins {args.spins}\n"
            f"status: {res.message} after {res.iterations} iterations\n" + res.report.to_text())
    if args.generators == "squeeze":
        expect = algebra.expected_squeezing_dimension(args.modes, args.spins)
        text += f"expected squeezing dimension M(2M+1) 2^(S-1): {expect}\n"
    path = _out(args, args.report)
    path.write_text(text)
    print(text, end="")
    if not res.converged:
        return EXIT_FAIL
    return EXIT_PASS if not res.report.violations or "disp" in args.generators else EXIT_FAIL


def _cmd_run(args) -> int:
    from squeezegate.scenarios import ScenarioFile, default_scenario, run_scenario

    if args.scenario in ("stabilizer", "polynomial") and not Path(args.scenario).exists():
        sc = ScenarioFile.from_dict(default_scenario(args.scenario))
    else:
        sc = ScenarioFile.load(args.scenario)
    res = run_scenario(sc, args.out_dir, seed=args.seed, verbose=args.verbose)
    tt = res.report["truth_table"]
    print(f"squeeze converged={res.report['squeeze']['converged']} "
          f"mean infidelity={res.report['squeeze']['mean_infidelity']:.3e}")
    print(f"truth table {'PASS' if res.passed else 'FAIL'}: max deviation "
          f"{tt['max_deviation']:.3e} (tol {tt['tolerance']:g}, "
          f"{'relative' if tt['relative'] else 'rad'})")
    print(f"artifacts in {res.out_dir}")
    return EXIT_PASS if res.passed else EXIT_FAIL


_COMMANDS = {
    "modes": _cmd_modes,
    "synth-disp": _cmd_synth_disp,
    "synth-squeeze": _cmd_synth_squeeze,
    "compose": _cmd_compose,
    "verify": _cmd_verify,
    "oracle": _cmd_oracle,
    "algebra": _cmd_algebra,
    "run": _cmd_run,
}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.threads is not None:
        if args.threads < 1:
            print("error: --threads must be positive", file=sys.stderr)
            return EXIT_INPUT
        for var in _THREAD_VARS:
            os.environ[var] = str(args.threads)
    from squeezegate.errors import InputError, NumericalError, StageError

    try:
        return _COMMANDS[args.command](args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT if isinstance(exc.cause, InputError) else EXIT_NUMERICAL
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
