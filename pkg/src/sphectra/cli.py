"""Command-line front end.

Exit status: 0 success, 1 numerical failure, 2 invalid configuration,
3 derivative methods disagree.
"""

from __future__ import annotations

import argparse
import contextlib
import io
import json
import logging
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .asymptotics import (
    ConeError,
    arc_cone,
    arc_exponent,
    excursion_exponent,
    exponent_ladder,
    heat_kernel,
    rationality_scan,
    reflection_quarter_plane,
    triangle_cone,
)
from .continuation import read_curve_csv, trace_curve, write_curve_csv
from .eigensolve import SolverError, SolverSettings
from .fem import DEGENERACY_MARGIN, assemble, build_mesh, write_matrix_market
from .geometry import Digon, DomainError, Triangle, digon_spectrum
from .shape_derivative import (
    ShapeDerivativeError,
    feynman_hellmann_extrapolated,
    hadamard_extrapolated,
    multiplet_extrapolated,
)

log = logging.getLogger("sphectra")

EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_MISMATCH = 3

DEFAULTS = {"mesh": 64, "gamma": 2.0, "tol": 1e-10, "k": 4}


class ConfigError(ValueError):
    pass


class MismatchError(RuntimeError):
    def __init__(self, message, payload):
        super().__init__(message)
        self.payload = payload


def _g17(x) -> str:
    return f"{x:.17g}"


def _g6(x) -> str:
    return f"{x:.6g}"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


# ---------------------------------------------------------------- validation


def _angle(args, value, name):
    if value is None:
        return None
    value = float(value)
    if args.degrees:
        value = math.radians(value)
    return value


def _triangle(args) -> Triangle:
    alpha, beta = _angle(args, args.alpha, "alpha"), _angle(args, args.beta, "beta")
    if alpha is None or beta is None:
        raise ConfigError("both --alpha and --beta are required")
    for name, a in (("alpha", alpha), ("beta", beta)):
        if not (DEGENERACY_MARGIN <= a <= math.pi - DEGENERACY_MARGIN):
            raise ConfigError(f"{name} out of range")
    return Triangle(alpha, beta)


def _settings(args) -> SolverSettings:
    if args.mesh < 4:
        raise ConfigError("mesh out of range (need >= 4)")
    if args.gamma < 1:
        raise ConfigError("gamma out of range (need >= 1)")
    if not (0 < args.tol <= 1e-4):
        raise ConfigError("tol out of range (need 0 < tol <= 1e-4)")
    return SolverSettings(n=args.mesh, gamma=args.gamma, tol=args.tol, k=getattr(args, "k", DEFAULTS["k"]))


# ---------------------------------------------------------------- commands


@dataclass
class Output:
    """Human text and a machine-readable object for one command run."""

    text: str
    data: dict


def cmd_spectrum(args) -> Output:
    if args.k < 1:
        raise ConfigError("k out of range (need >= 1)")
    if args.digon:
        beta = _angle(args, args.beta, "beta")
        if beta is None or not (0 < beta <= math.pi):
            raise ConfigError("beta out of range")
        domain = Digon(beta)
    else:
        domain = _triangle(args)
    settings = _settings(args)
    spec = settings.spectrum(domain, k=args.k)
    if args.dump_matrices:
        problem = assemble(build_mesh(domain, 4 * settings.n, 4 * settings.n, settings.gamma))
        write_matrix_market(f"{args.dump_matrices}_K.mtx", problem.K)
        write_matrix_market(f"{args.dump_matrices}_M.mtx", problem.M)
    rows = []
    lines = [f"{'j':>3} {'lambda':>12} {'error':>10} {'order':>7}"]
    for j, (v, e, p) in enumerate(zip(spec.eigenvalues, spec.errors, spec.observed_order), start=1):
        rows.append({"j": j, "lambda": v, "error": e, "observed_order": p})
        lines.append(f"{j:>3} {_g6(v):>12} {_g6(e):>10} {_g6(p):>7}")
    data = {
        "domain": {"kind": "digon" if args.digon else "triangle", "alpha": domain.alpha, "beta": domain.beta},
        "mesh": [settings.n, 2 * settings.n, 4 * settings.n],
        "eigenvalues": rows,
        "multiplets": [[i + 1 for i in g] for g in spec.multiplets],
    }
    if args.digon:
        exact = digon_spectrum(domain, args.k)
        data["closed_form"] = exact
        lines.append("closed form: " + ", ".join(_g6(v) for v in exact))
    lines.append("multiplets: " + " ".join("{" + ",".join(str(i + 1) for i in g) + "}" for g in spec.multiplets))
    return Output("\n".join(lines), data)


def cmd_derivative(args) -> Output:
    tri = _triangle(args)
    settings = _settings(args)
    direction = tuple(float(x) for x in args.direction)
    if direction == (0.0, 0.0):
        raise ConfigError("direction must be nonzero")
    if args.multiplet is not None:
        if args.multiplet < 1:
            raise ConfigError("multiplet out of range")
        spec = settings.spectrum(tri, k=max(args.k, args.multiplet + 2))
        group = next((g for g in spec.multiplets if args.multiplet - 1 in g), None)
        if group is None or len(group) < 2:
            raise ConfigError(f"eigenvalue {args.multiplet} is not part of a resolved multiplet")
        res = multiplet_extrapolated(spec, group, direction)
        data = {
            "eigenvalue": float(spec.eigenvalues[group[0]]),
            "indices": [i + 1 for i in group],
            "direction": list(direction),
            "branch_derivatives": res.eigenvalues,
            "errors": res.errors,
            "matrix": res.matrix,
        }
        text = (
            f"multiplet {{{','.join(str(i + 1) for i in group)}}} at lambda = {_g6(data['eigenvalue'])}\n"
            f"direction {direction}: branch derivatives "
            + ", ".join(f"{_g6(v)} +- {_g6(e)}" for v, e in zip(res.eigenvalues, res.errors))
        )
        return Output(text, data)

    index = args.index - 1
    if index < 0:
        raise ConfigError("index out of range")
    spec = settings.spectrum(tri, k=max(args.k, index + 2))
    had = hadamard_extrapolated(spec, index)
    fh_a, fh_a_err = feynman_hellmann_extrapolated(spec, index, (1.0, 0.0), args.fd_step)
    fh_b, fh_b_err = feynman_hellmann_extrapolated(spec, index, (0.0, 1.0), args.fd_step)
    had_dir = had.directional(direction)
    fh_dir = direction[0] * fh_a + direction[1] * fh_b
    data = {
        "eigenvalue": float(spec.eigenvalues[index]),
        "index": args.index,
        "hadamard": {"d_alpha": had.d_alpha, "d_beta": had.d_beta, "error_alpha": had.error_alpha, "error_beta": had.error_beta},
        "feynman_hellmann": {"d_alpha": fh_a, "d_beta": fh_b, "error_alpha": fh_a_err, "error_beta": fh_b_err},
        "direction": list(direction),
        "directional": {"hadamard": had_dir, "feynman_hellmann": fh_dir},
    }
    text = "\n".join(
        [
            f"lambda_{args.index} = {_g6(data['eigenvalue'])}",
            f"{'method':<18} {'d_alpha':>12} {'d_beta':>12} {'along dir':>12}",
            f"{'hadamard':<18} {_g6(had.d_alpha):>12} {_g6(had.d_beta):>12} {_g6(had_dir):>12}",
            f"{'feynman-hellmann':<18} {_g6(fh_a):>12} {_g6(fh_b):>12} {_g6(fh_dir):>12}",
        ]
    )
    for name, x, y in (("d_alpha", had.d_alpha, fh_a), ("d_beta", had.d_beta, fh_b)):
        if abs(x - y) > args.rtol * max(abs(x), abs(y)):
            raise MismatchError(
                f"methods disagree on {name}: hadamard={_g17(x)} feynman_hellmann={_g17(y)}", data
            )
    return Output(text, data)


def cmd_level_curve(args) -> Output:
    if not args.c > 2:
        raise ConfigError("c out of range: must exceed 2")
    if args.samples < 3:
        raise ConfigError("samples out of range (need >= 3)")
    settings = _settings(args)
    curve = trace_curve(args.c, args.samples, settings)
    buf = io.StringIO()
    write_curve_csv(curve, buf)
    if args.output:
        Path(args.output).write_text(buf.getvalue())
    data = {
        "c": args.c,
        "alpha_c": curve.alpha_c,
        "samples": [dict(zip(["alpha", "beta", "lambda1", "lambda2", "lambda3", "err1", "err2", "err3"], s.row())) for s in curve.samples],
    }
    text = buf.getvalue().rstrip("\n") if not args.output else f"wrote {len(curve.samples)} samples to {args.output}"
    return Output(text, data)


def _point(values, d, name):
    if values is None or len(values) != d:
        raise ConfigError(f"{name} must have {d} coordinates")
    return np.array([float(v) for v in values])


def cmd_heat_kernel(args) -> Output:
    d = args.dim
    if d not in (2, 3):
        raise ConfigError("dim out of range (2 or 3)")
    if args.J < 1:
        raise ConfigError("J out of range (need >= 1)")
    ts = [float(t) for t in args.t]
    if not ts or min(ts) <= 0:
        raise ConfigError("t out of range (need positive times)")
    x = _point(args.x, d, "x")
    y = _point(args.y, d, "y")
    if d == 2:
        beta = _angle(args, args.beta, "beta")
        if beta is None:
            beta = 0.5 * math.pi
        if not (0 < beta < math.pi):
            raise ConfigError("beta out of range")
        cone = arc_cone(beta, count=max(args.J, 1))
    else:
        tri = _triangle(args)
        settings = _settings(args)
        if args.J > args.k:
            raise ConfigError(f"J={args.J} exceeds the number of computed eigenpairs (k={args.k})")
        spec = settings.spectrum(tri, k=args.k)
        cone = triangle_cone(spec.finest, spec.eigenvalues)
    for name, p in (("x", x), ("y", y)):
        if not cone.contains(p)[0]:
            raise ConfigError(f"{name} is not strictly inside the cone")
    rows = []
    for t in ts:
        hk = heat_kernel(cone, x, y, t, args.J)
        row = {"t": t, "p": hk.value, "tail": hk.tail}
        if args.verify_reflection:
            if d != 2 or abs(cone_beta(args) - 0.5 * math.pi) > 1e-15:
                raise ConfigError("--verify-reflection requires the quarter plane (dim 2, beta = pi/2)")
            ref = reflection_quarter_plane(x, y, t)
            row["reflection"] = ref
            row["relative_deviation"] = abs(hk.value - ref) / abs(ref)
        rows.append(row)
    buf = io.StringIO()
    cols = ["t", "p", "tail"] + (["reflection", "relative_deviation"] if args.verify_reflection else [])
    buf.write(",".join(cols) + "\n")
    for row in rows:
        buf.write(",".join(_g17(row[c]) for c in cols) + "\n")
    if args.output:
        Path(args.output).write_text(buf.getvalue())
    data = {"dim": d, "x": x, "y": y, "J": args.J, "rows": rows}
    text = buf.getvalue().rstrip("\n")
    if args.verify_reflection:
        dev = max(r["relative_deviation"] for r in rows)
        data["max_relative_deviation"] = dev
        text += f"\nmax relative deviation from reflection principle: {dev:.3e}"
    return Output(text, data)


def cone_beta(args):
    beta = _angle(args, args.beta, "beta")
    return 0.5 * math.pi if beta is None else beta


def cmd_exponents(args) -> Output:
    if args.depth < 1:
        raise ConfigError("depth out of range (need >= 1)")
    d = args.dim
    if args.arc_r is not None:
        if not -1 < args.arc_r < 1:
            raise ConfigError("arc-r out of range (|r| < 1)")
        d = 2
        beta = math.acos(-args.arc_r)
        lam = [(j * math.pi / beta) ** 2 for j in range(1, args.depth + 2)]
    elif args.lambdas:
        lam = sorted(float(v) for v in args.lambdas)
        if lam[0] <= 0:
            raise ConfigError("eigenvalues must be positive")
    elif args.alpha is not None:
        tri = _triangle(args)
        settings = _settings(args)
        d = 3
        lam = list(settings.spectrum(tri, k=args.k).eigenvalues)
    else:
        raise ConfigError("give --lambda values, --arc-r, or --alpha/--beta")
    alpha = excursion_exponent(lam[0], d)
    ladder = exponent_ladder(lam, d, args.depth, q_max=args.q_max, tol=args.tol_rational)
    entries = [
        {
            "value": e.value,
            "j": e.j,
            "k": e.k,
            "verdict": e.verdict.verdict,
            "best_rational": f"{e.verdict.best_rational.numerator}/{e.verdict.best_rational.denominator}",
            "distance": e.verdict.distance,
        }
        for e in ladder.entries
    ]
    data = {"dim": d, "eigenvalues": lam, "excursion_exponent": alpha, "ladder": entries}
    if args.arc_r is not None:
        data["arc_exponent"] = arc_exponent(args.arc_r)
    lines = [f"excursion exponent: {_g6(alpha)}", f"{'value':>12} {'j':>3} {'k':>3} {'best p/q':>12}  verdict"]
    for e in entries:
        lines.append(f"{_g6(e['value']):>12} {e['j']:>3} {e['k']:>3} {e['best_rational']:>12}  {e['verdict']}")
    lines.append("candidate exponents; verdicts are numerical, not proofs")
    return Output("\n".join(lines), data)


def cmd_rationality_scan(args) -> Output:
    if args.depth < 1 or args.q_max < 1 or not args.tol_rational > 0:
        raise ConfigError("depth, q-max and tol-rational must be positive")
    try:
        curve = read_curve_csv(args.curve, c=args.c)
    except FileNotFoundError:
        raise ConfigError(f"curve file not found: {args.curve}") from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    report = rationality_scan(curve, d=3, depth=args.depth, q_max=args.q_max, tol=args.tol_rational)
    lines = [json.dumps(_jsonable(rec), allow_nan=False) for rec in report]
    if args.output:
        Path(args.output).write_text("".join(line + "\n" for line in lines))
    text = "\n".join(lines)
    text += "\n# verdicts are numerical: lambda_2 carries a discretisation error bar (field lambda2_error)"
    return Output(text, {"c": curve.c, "samples": report})


# ---------------------------------------------------------------- parser


def _add_mesh_opts(p, k=True):
    p.add_argument("--mesh", type=int, default=DEFAULTS["mesh"], help="coarsest resolution per direction (meshes n, 2n, 4n)")
    p.add_argument("--gamma", type=float, default=DEFAULTS["gamma"], help="grading exponent")
    p.add_argument("--tol", type=float, default=DEFAULTS["tol"], help="eigensolver relative residual tolerance")
    if k:
        p.add_argument("-k", type=int, default=DEFAULTS["k"], help="number of eigenpairs")


def _add_triangle_opts(p):
    p.add_argument("--alpha", type=float, help="angle at A* (radians unless --degrees)")
    p.add_argument("--beta", type=float, help="angle at B* (radians unless --degrees)")


def build_parser() -> argparse.ArgumentParser:
    def shared(top):
        # the subcommand copies must not overwrite values given before the verb
        kw = {} if top else {"default": argparse.SUPPRESS}
        p = argparse.ArgumentParser(add_help=False)
        p.add_argument("--json", action="store_true", help="print a single JSON object", **kw)
        p.add_argument("--degrees", action="store_true", help="angles are given in degrees", **kw)
        p.add_argument("--config", help="TOML file with defaults for the same keys", **kw)
        p.add_argument("-v", "--verbose", action="count", **({"default": 0} if top else kw))
        return p

    common = shared(top=False)
    parser = argparse.ArgumentParser(prog="sphectra", description=__doc__.splitlines()[0], parents=[shared(top=True)])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", parents=[common], help="extrapolated low eigenvalues")
    _add_triangle_opts(p)
    p.add_argument("--digon", action="store_true", help="solve on the lune of opening --beta")
    p.add_argument("--dump-matrices", metavar="PREFIX", help="write finest K and M as MatrixMarket")
    _add_mesh_opts(p)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("derivative", parents=[common], help="eigenvalue derivatives in (alpha, beta)")
    _add_triangle_opts(p)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--index", type=int, default=1, help="1-based index of a simple eigenvalue")
    g.add_argument("--multiplet", type=int, help="1-based index of an eigenvalue in a multiplet")
    p.add_argument("--direction", type=float, nargs=2, default=(1.0, 0.0), metavar=("DA", "DB"))
    p.add_argument("--fd-step", type=float, default=1e-4)
    p.add_argument("--rtol", type=float, default=0.015, help="allowed relative disagreement between methods")
    _add_mesh_opts(p)
    p.set_defaults(func=cmd_derivative)

    p = sub.add_parser("level-curve", parents=[common], help="trace lambda_1 = c")
    p.add_argument("-c", type=float, required=False, default=12.0, help="level value")
    p.add_argument("-n", "--samples", type=int, default=33)
    p.add_argument("-o", "--output", help="CSV output path (stdout if omitted)")
    _add_mesh_opts(p)
    p.set_defaults(func=cmd_level_curve)

    p = sub.add_parser("heat-kernel", parents=[common], help="cone heat kernel on a time grid")
    p.add_argument("--dim", type=int, default=2)
    _add_triangle_opts(p)
    p.add_argument("--x", type=float, nargs="+", required=False)
    p.add_argument("--y", type=float, nargs="+", required=False)
    p.add_argument("--t", type=float, nargs="+", default=[0.5, 1.0, 2.0])
    p.add_argument("-J", type=int, default=50, help="number of series terms")
    p.add_argument("--verify-reflection", action="store_true")
    p.add_argument("-o", "--output")
    _add_mesh_opts(p)
    p.set_defaults(func=cmd_heat_kernel)

    p = sub.add_parser("exponents", parents=[common], help="excursion exponent and exponent ladder")
    p.add_argument("--dim", type=int, default=3)
    p.add_argument("--lambda", dest="lambdas", type=float, nargs="+")
    p.add_argument("--arc-r", type=float)
    _add_triangle_opts(p)
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--q-max", type=int, default=1000)
    p.add_argument("--tol-rational", type=float, default=1e-9)
    _add_mesh_opts(p)
    p.set_defaults(func=cmd_exponents)

    p = sub.add_parser("rationality-scan", parents=[common], help="ladder rationality along a curve CSV")
    p.add_argument("curve", help="CSV written by level-curve")
    p.add_argument("-c", type=float, help="level value (default: lambda1 of the first row)")
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--q-max", type=int, default=1000)
    p.add_argument("--tol-rational", type=float, default=1e-9)
    p.add_argument("-o", "--output", help="JSON-lines output path")
    p.set_defaults(func=cmd_rationality_scan)
    return parser


def _load_config(path: str, command: str) -> dict:
    import tomli

    try:
        with open(path, "rb") as fh:
            raw = tomli.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config file: {exc}") from None
    # top-level keys apply to every command, a [command] table overrides them
    out = {k.replace("-", "_"): v for k, v in raw.items() if not isinstance(v, dict)}
    out.update({k.replace("-", "_"): v for k, v in raw.get(command, {}).items()})
    return out


def _parse(parser, argv):
    args = parser.parse_args(argv)
    if args.config:
        cfg = _load_config(args.config, args.command)
        subparser = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in subparser._actions}
        unknown = sorted(set(cfg) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        subparser.set_defaults(**cfg)
        args = parser.parse_args(argv)
    return args


def _thread_limit():
    value = os.environ.get("SPHECTRA_THREADS")
    if not value:
        return contextlib.nullcontext()
    try:
        n = int(value)
    except ValueError:
        raise ConfigError(f"SPHECTRA_THREADS must be an integer, got {value!r}") from None
    if n < 1:
        raise ConfigError("SPHECTRA_THREADS must be >= 1")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _parse(parser, argv)
    except ConfigError as exc:
        print(f"sphectra: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        with _thread_limit():
            out = args.func(args)
    except (ConfigError, DomainError, ConeError) as exc:
        print(f"sphectra: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MismatchError as exc:
        print(f"sphectra: error: {exc}", file=sys.stderr)
        if args.json:
            print(json.dumps(_jsonable({"error": str(exc), **exc.payload})))
        return EXIT_MISMATCH
    except (SolverError, ShapeDerivativeError, RuntimeError) as exc:
        print(f"sphectra: error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    if args.json:
        sys.stdout.write(json.dumps(_jsonable({"command": args.command, **out.data})) + "\n")
    else:
        sys.stdout.write(out.text + "\n")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
