"""Command-line entry point: single runs, convergence studies, pulse demo.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
Heavy imports happen after argument parsing so that --threads can cap the
BLAS thread pools before numpy is loaded.
"""
from __future__ import annotations

import argparse
import os
import sys


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="elacu",
        description="Coupled elastic / nonlinear-acoustic wave simulator",
    )
    parser.add_argument("--output-dir", default=".", help="directory for result files")
    parser.add_argument("--quiet", action="store_true", help="suppress progress output")
    parser.add_argument("--threads", type=int, default=None,
                        help="cap BLAS threads (1 gives the deterministic reference path)")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="single simulation, appends one error row")
    run.add_argument("--config", required=True)

    conv = sub.add_parser("converge", help="refinement study over mesh levels")
    conv.add_argument("--config", required=True)
    conv.add_argument("--levels", type=int, required=True)

    demo = sub.add_parser("demo", help="physical-material pulse propagation demo")
    demo.add_argument("--config", required=True)
    return parser


def _load_config(path: str):
    from .errors import ConfigError
    from .io_formats import parse_config

    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def _say(args, message: str) -> None:
    if not args.quiet:
        print(message)


def _cmd_run(args) -> int:
    import numpy as np

    from . import driver
    from .io_formats import ErrorRow, write_csv

    cfg = _load_config(args.config)
    problem = driver.build_problem(cfg)
    _say(args, f"level {problem.level}: {problem.n_dofs} dofs, h_max={problem.h_max:.6g}")
    result = driver.run_problem(problem)
    if result.error is not None:
        row = result.error_row
        if not np.isfinite(row.err_rel):
            _say(args, f"abs L-inf-E error {row.err_abs:.12g} "
                       "(exact solution has zero norm; no relative error)")
        else:
            _say(args, f"rel L-inf-E error {row.err_rel:.12g} "
                       f"(abs {row.err_abs:.12g})")
        csv_path = cfg.csv_path or os.path.join(args.output_dir, "errors.csv")
        write_csv([row], csv_path)
        _say(args, f"wrote {csv_path}")
    _write_fields(args, cfg, result, basename="run")
    return 0


def _cmd_converge(args) -> int:
    from . import driver
    from .io_formats import write_csv

    cfg = _load_config(args.config)
    csv_path = cfg.csv_path or os.path.join(args.output_dir, "convergence.csv")
    # flush after every level so a failure leaves a partial table behind
    rows, rates = driver.run_convergence(
        cfg, args.levels, partial_sink=lambda rows_: write_csv(rows_, csv_path)
    )
    for row in rows:
        rate = "" if row.rate is None else f"  rate {row.rate:.4f}"
        _say(args, f"level {row.level}: h={row.h_max:.6g} dofs={row.n_dofs} "
                   f"rel_err={row.err_rel:.6e}{rate}")
    print(f"final observed rate: {rates[-1]:.6g}")
    _say(args, f"wrote {csv_path}")
    return 0


def _cmd_demo(args) -> int:
    import numpy as np

    from . import driver

    cfg = _load_config(args.config)
    probe_point = cfg.probe or (0.0, 0.0, 2.5 * np.pi)
    result, probe = driver.run_demo_with_probe(cfg, probe_point)
    _say(args, f"probe at {np.array2string(probe.location, precision=4)}")
    probe_path = os.path.join(args.output_dir, "probe.csv")
    with open(probe_path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write("t,p_ac\n")
        for t, v in zip(probe.times, probe.values):
            fh.write(f"{t:.12g},{v:.12g}\n")
    _say(args, f"wrote {probe_path}")

    centerline_path = os.path.join(args.output_dir, "centerline.csv")
    _write_centerline(result.problem, result.trajectory.final, centerline_path)
    _say(args, f"wrote {centerline_path}")
    _write_fields(args, cfg, result, basename="demo")
    return 0


def _write_centerline(problem, state, path) -> None:
    import numpy as np

    rows = []
    for bd in problem.acoustic_space.blocks:
        rho = problem.params.acoustic[bd.tag].rho
        phi = problem.acoustic_space.block_values(state.phi, bd.tag)[:, 0]
        r = np.linalg.norm(bd.nodes[:, :2], axis=1)
        mask = r <= r.min() + 1e-12
        for z, v in zip(bd.nodes[mask, 2], rho * phi[mask]):
            rows.append((z, v))
    rows.sort()
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write("z,p_ac\n")
        for z, v in rows:
            fh.write(f"{z:.12g},{v:.12g}\n")


def _write_fields(args, cfg, result, basename: str) -> None:
    if cfg.vtk_stride <= 0:
        return
    from .io_formats import write_vtk
    from .norms import postprocess_pressure

    problem = result.problem
    state = result.trajectory.final
    pressure = postprocess_pressure(
        problem.elastic_space, problem.acoustic_space, problem.params, state
    )
    displacement = {
        bd.tag: problem.elastic_space.block_values(state.u, bd.tag)
        for bd in problem.elastic_space.blocks
    }
    blocks = list(problem.elastic_space.blocks) + list(problem.acoustic_space.blocks)
    path = os.path.join(args.output_dir, f"{basename}_final.vtk")
    write_vtk(blocks, pressure, displacement, path)
    _say(args, f"wrote {path}")


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.threads is not None:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                    "NUMEXPR_NUM_THREADS"):
            os.environ[var] = str(max(1, args.threads))
    os.makedirs(args.output_dir, exist_ok=True)

    from .errors import ConfigError, SolverError

    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "converge":
            return _cmd_converge(args)
        if args.command == "demo":
            return _cmd_demo(args)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
