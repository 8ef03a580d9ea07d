"""Command-line interface: ``lmshoot {register,synth,eval,bench,warp}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import reduction as R
from .bench import run_bench
from .errors import DivergenceError, LandmarkFormatError, MemoryBudgetError, ShapeMismatchError
from .flow import FlowField, export_frames, warp_points
from .hamiltonian import ShootingConfig, integrate_forward
from .landmarks import LandmarkSet, average_dist, check_pair, load_landmarks, max_dist, save_landmarks
from .registration import ResultDocumentError, load_result, register, save_result
from .synth import SynthSpec, make_pair

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3

log = logging.getLogger("lmshoot")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _positive_int(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _int_list(s):
    try:
        vals = [int(x) for x in s.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}") from None
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError("sizes must be positive")
    return vals


def _name_list(choices):
    def parse(s):
        vals = [x.strip() for x in s.split(",") if x.strip()]
        bad = [v for v in vals if v not in choices]
        if bad or not vals:
            raise argparse.ArgumentTypeError(f"invalid choice(s) {bad or s!r}; choose from {sorted(choices)}")
        return vals
    return parse


_BACKENDS = sorted(R.ALIASES)


def _shooting_flags(p):
    p.add_argument("--sigma", type=float, default=1.5, help="kernel width in mm (default 1.5)")
    p.add_argument("--timesteps", type=_positive_int, default=40, help="Euler steps T (default 40)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lmshoot", description="Landmark registration by geodesic shooting.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("register", help="register a template landmark file onto a target")
    p.add_argument("--template", required=True)
    p.add_argument("--target", required=True)
    _shooting_flags(p)
    p.add_argument("--lambda", dest="lam", type=float, default=500000.0, help="matching weight (default 5e5)")
    p.add_argument("--max-iter", type=_positive_int, default=400)
    p.add_argument("--precision", choices=("f32", "f64"), default="f64")
    p.add_argument("--backend", choices=_BACKENDS, default="blocked")
    p.add_argument("--block-size", type=int, default=256, choices=R.BLOCK_SIZES)
    p.add_argument("--threads", type=_positive_int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--memory-budget", type=int, default=R.DEFAULT_MEMORY_BUDGET, help="bytes allowed for the matrix backend")
    p.add_argument("--procrustes", action="store_true", help="rigidly align the target to the template first")
    p.add_argument("--out", help="write the result document here")
    p.add_argument("--frames", help="directory for trajectory frames")
    p.add_argument("--stride", type=_positive_int, default=1)

    p = sub.add_parser("synth", help="generate a reachable synthetic template/target pair")
    p.add_argument("--kind", choices=("sphere", "grid", "file"), default="sphere")
    p.add_argument("--n", type=_positive_int, default=1847)
    p.add_argument("--dim", type=int, choices=(2, 3), default=3)
    p.add_argument("--extent", type=float, default=24.0, help="sphere diameter or grid side in mm")
    p.add_argument("--momentum-scale", type=float, default=0.75, help="RMS momentum per landmark in mm")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--input", help="template points for --kind file")
    _shooting_flags(p)
    p.add_argument("--out-template", required=True)
    p.add_argument("--out-target", required=True)

    p = sub.add_parser("eval", help="average and max pointwise distance of two landmark files")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)

    p = sub.add_parser("bench", help="time and compare the reduction backends")
    p.add_argument("--sizes", type=_int_list, default=[500, 1000, 2000])
    p.add_argument("--backends", type=_name_list(set(_BACKENDS)), default=["seq", "matrix", "blocked"])
    p.add_argument("--precisions", type=_name_list({"f32", "f64"}), default=["f32", "f64"])
    p.add_argument("--repeats", type=_positive_int, default=5)
    p.add_argument("--sigma", type=float, default=1.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--block-size", type=int, default=256, choices=R.BLOCK_SIZES)
    p.add_argument("--threads", type=_positive_int, default=None)
    p.add_argument("--memory-budget", type=int, default=R.DEFAULT_MEMORY_BUDGET)
    p.add_argument("--out", help="report file (.json for JSON, otherwise CSV)")

    p = sub.add_parser("warp", help="warp points through a stored registration")
    p.add_argument("--result", required=True)
    p.add_argument("--points", required=True)
    p.add_argument("--out", required=True)
    return parser


def _cmd_register(a, out):
    template = load_landmarks(a.template)
    target = load_landmarks(a.target)
    check_pair(template, target)
    cfg = ShootingConfig(sigma=a.sigma, timesteps=a.timesteps, lam=a.lam, max_iter=a.max_iter,
                         precision=a.precision, backend=a.backend, block_size=a.block_size,
                         threads=a.threads, seed=a.seed, memory_budget=a.memory_budget)
    res = register(template, target, cfg, procrustes=a.procrustes)
    m = res.metrics
    print(f"before: avg {m['avg_before']:.6g} max {m['max_before']:.6g}", file=out)
    print(f"after:  avg {m['avg_after']:.6g} max {m['max_after']:.6g}", file=out)
    print(f"iterations {res.history.iterations} ({res.history.termination}), "
          f"{res.wall_times['total']:.3g} s", file=out)
    if a.out:
        save_result(res, a.out)
    if a.frames:
        traj = integrate_forward(res.template.points, res.p0, cfg, cfg.make_backend())
        export_frames(FlowField(traj, cfg.make_backend()), a.frames, a.stride)
    return EXIT_OK


def _cmd_synth(a, out):
    spec = SynthSpec(kind=a.kind, n=a.n, dim=a.dim, extent=a.extent, momentum_scale=a.momentum_scale,
                     seed=a.seed, path=a.input)
    pair = make_pair(spec, ShootingConfig(sigma=a.sigma, timesteps=a.timesteps))
    save_landmarks(pair.template, a.out_template)
    save_landmarks(pair.target, a.out_target)
    print(f"N {pair.template.count} avg {average_dist(pair.template, pair.target):.6g} "
          f"max {max_dist(pair.template, pair.target):.6g}", file=out)
    return EXIT_OK


def _cmd_eval(a, out):
    x = load_landmarks(a.a)
    y = load_landmarks(a.b)
    check_pair(x, y)
    # repr is the shortest string that round-trips the float64 exactly
    print(f"avg {average_dist(x, y)!r} max {max_dist(x, y)!r}", file=out)
    return EXIT_OK


def _cmd_bench(a, out):
    report = run_bench(a.sizes, a.backends, a.precisions, a.repeats, sigma=a.sigma, seed=a.seed,
                       block_size=a.block_size, threads=a.threads, memory_budget=a.memory_budget)
    print(report.table(), file=out)
    if a.out:
        text = report.to_json() if a.out.endswith(".json") else report.to_csv()
        with open(a.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    return EXIT_OK


def _cmd_warp(a, out):
    doc = load_result(a.result)
    cfg = doc["config"]
    backend = cfg.make_backend()
    traj = integrate_forward(doc["template"], doc["momenta"], cfg, backend)
    scale = max(float(np.max(np.abs(doc["warped"]))), 1.0)
    if float(np.max(np.abs(traj.final - doc["warped"]))) > 1e-9 * scale:
        raise ResultDocumentError(f"{a.result}: stored warped landmarks do not match the re-integrated trajectory")
    pts = load_landmarks(a.points, expected_dim=traj.q.shape[2])
    warped = warp_points(pts.points, FlowField(traj, backend))
    save_landmarks(LandmarkSet(warped), a.out)
    return EXIT_OK


_COMMANDS = {"register": _cmd_register, "synth": _cmd_synth, "eval": _cmd_eval, "bench": _cmd_bench, "warp": _cmd_warp}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if a.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return _COMMANDS[a.command](a, out)
    except (DivergenceError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (FileNotFoundError, IsADirectoryError, PermissionError, LandmarkFormatError, ShapeMismatchError,
            ResultDocumentError, MemoryBudgetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        # invalid parameter combinations that argparse cannot see (e.g. sigma <= 0)
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
