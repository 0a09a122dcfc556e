"""Command-line front end: solve, verify, curve, free-energy and correlators."""
import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
from numpy.linalg import LinAlgError

from . import __version__
from .bethe import (
    BetheSolution,
    b_matrix,
    componentwise_residual,
    compute_u,
    leading_data,
    solve_bethe,
)
from .errors import ConfigError, TwoMatrixError
from .kernel import DEFAULT_DEPTH, compat_check, solve_K, verify_G
from .model import load_model
from .records import dumps, encode_complex
from .recursion import CorrelatorStore, verify_loop_g, w1_genus_one_diagnostics
from .spectral import (
    build_E,
    projection_residuals,
    sample_points,
    verify_companion,
    verify_loop_g0,
    verify_quantum_curve,
)
from .yangyang import W2_variational, W3_variational, action_and_f0, build_frame, f1_from_hessian

log = logging.getLogger(__name__)

ALL_CHECKS = (
    "bethe", "ukirec", "compat", "ode", "companion", "loop_g0", "frame", "hessian",
    "kernel", "loop_g1", "loop_g1_n1", "w2_routes", "w3_routes", "symmetry",
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


# --- Lazy pipeline ---

class Session:
    """Everything derived from one model, computed on first use."""

    def __init__(self, model, solution_path=None, perturb=None, seed=0):
        self.model = model
        self.settings = model.settings.with_overrides(seed=seed)
        self.solution_path = solution_path
        self.perturb = perturb
        self._cache = {}

    def _get(self, name, build):
        if name not in self._cache:
            self._cache[name] = build()
        return self._cache[name]

    @property
    def sol(self):
        return self._get("sol", self._solve)

    def _solve(self):
        sol = None
        if self.solution_path:
            sol = load_solution(self.solution_path)
            if sol.model_hash != self.model.digest():
                log.warning("solution %s belongs to another model; re-solving", self.solution_path)
                sol = None
        if sol is None:
            sol = solve_bethe(self.model, self.settings)
        if self.perturb:
            s = sol.s + self.perturb
            sol = BetheSolution(s=s, B=b_matrix(s, self.model.V1p, self.model.g),
                                u=sol.u, residual=sol.residual, model_hash=sol.model_hash)
            sol.u = compute_u(sol, self.model, check=False)
            log.info("roots perturbed by %g", self.perturb)
        return sol

    @property
    def leading(self):
        return self._get("leading", lambda: leading_data(self.sol, self.model))

    @property
    def curve(self):
        return self._get("curve", lambda: build_E(self.leading, self.model))

    @property
    def frame(self):
        return self._get("frame", lambda: build_frame(self.sol, self.model, self.settings, check=False))

    @property
    def table(self):
        return self._get("table", lambda: solve_K(self.sol, self.model).ensure(DEFAULT_DEPTH))

    @property
    def store(self):
        return self._get("store", lambda: CorrelatorStore(self.sol, self.model, self.leading, self.table))

    def points(self, count, check):
        """Sample points for one check, from a generator seeded by (seed, check) alone."""
        rng = np.random.default_rng((self.settings.seed, ALL_CHECKS.index(check)))
        return sample_points(rng, count, radius=2.0 * self.sol.scale)

    def point_pairs(self, count, check):
        xs = self.points(2 * count, check)
        return list(zip(xs[:count], xs[count:]))


def load_solution(path):
    import json

    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read solution file {path}: {exc}") from exc
    return BetheSolution.from_record(raw.get("solution", raw))


def manifest(args, model, command):
    params = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "verbose", "out") and v is not None}
    return {"command": command, "model_hash": model.digest(), "parameters": params, "version": __version__}


def _emit(payload, out):
    text = dumps(payload) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
        log.info("wrote %s", out)
    else:
        sys.stdout.write(text)


# --- Commands ---

def cmd_solve(args, session):
    sol = session.sol
    return {"solution": sol.to_record(), "homotopy": sol.trace}, 0


def _grid(sol, count=5):
    c = complex(np.mean(sol.s))
    radius = 1.0 + float(np.max(np.abs(sol.s - c))) + 0.5
    return [c + radius * np.exp(2j * np.pi * (k + 0.25) / count) for k in range(count)]


def _check_table(session):
    s = session
    model, settings = s.model, s.settings
    scale = s.sol.scale
    d = max(model.d2, 1)

    def w2_routes():
        kernel_route = s.store.W(2, 0)
        variational = W2_variational(s.frame, s.sol, model)
        grid = _grid(s.sol)
        return max(abs(kernel_route(x, xp) - variational(x, xp)) for x in grid for xp in grid)

    def w3_routes():
        recursion_route = s.store.W(3, 0)
        variational = W3_variational(s.frame, s.sol, model, settings=settings)
        grid = _grid(s.sol, 3)
        worst = 0.0
        for x in grid:
            for xp in grid:
                for xpp in grid:
                    ref = variational(x, xp, xpp)
                    worst = max(worst, abs(recursion_route(x, xp, xpp) - ref) / max(1.0, abs(ref)))
        return worst

    def symmetry():
        tensors = [s.store.W(2, 0), W3_variational(s.frame, s.sol, model, settings=settings), s.store.W(2, 1)]
        return max(t.symmetry_defect() for t in tensors)

    return {
        "bethe": (lambda: s.sol.residual, settings.tol(model.bethe.tol)),
        "ukirec": (lambda: componentwise_residual(s.sol, model), settings.tol(1e-9, scale**d)),
        "compat": (lambda: compat_check(s.sol, model, check=False), settings.tol(1e-9, scale**d)),
        "ode": (lambda: verify_quantum_curve(s.curve, s.leading.psi, model, check=False), settings.tol(1e-8)),
        "companion": (
            lambda: verify_companion(s.curve, model, s.point_pairs(20, "companion"), check=False),
            settings.tol(1e-9),
        ),
        "loop_g0": (
            lambda: verify_loop_g0(s.leading, s.curve, model, s.points(5, "loop_g0"), check=False),
            settings.tol(1e-9, scale),
        ),
        "frame": (lambda: s.frame.diagnostics["gradient"], settings.tol(1e-8, scale ** max(model.d1, d))),
        "hessian": (lambda: s.frame.diagnostics["hessian_fd"], settings.tol(1e-5)),
        "kernel": (lambda: verify_G(s.table, check=False), settings.tol(1e-8, scale**d)),
        "loop_g1": (lambda: verify_loop_g(s.store, 0, 1, check=False), settings.tol(1e-7, scale**d)),
        "loop_g1_n1": (lambda: verify_loop_g(s.store, 1, 1, check=False), settings.tol(1e-7, scale**d)),
        "w2_routes": (w2_routes, settings.tol(1e-6)),
        "w3_routes": (w3_routes, settings.tol(1e-5)),
        "symmetry": (symmetry, settings.tol(1e-7)),
    }


def cmd_verify(args, session):
    table = _check_table(session)
    wanted = ALL_CHECKS if not args.checks else [c.strip() for c in args.checks.split(",") if c.strip()]
    unknown = [c for c in wanted if c not in table]
    if unknown:
        raise ConfigError(f"unknown checks {unknown}; available: {', '.join(ALL_CHECKS)}")
    records = []
    for name in wanted:
        run, threshold = table[name]
        try:
            residual = float(run())
            ok = bool(residual <= threshold)
            rec = {"name": name, "residual": residual, "threshold": threshold, "pass": ok}
        except (TwoMatrixError, LinAlgError, ValueError, ArithmeticError) as exc:
            log.warning("check %s raised %s: %s", name, type(exc).__name__, exc)
            rec = {"name": name, "residual": None, "threshold": threshold, "pass": False, "error": str(exc)}
        log.info("check %s: %s", name, "pass" if rec["pass"] else "FAIL")
        records.append(rec)
    failed = [r["name"] for r in records if not r["pass"]]
    return {"checks": records, "passed": not failed}, (3 if failed else 0)


def cmd_curve(args, session):
    s = session
    curve = s.curve
    residuals = {
        "ode": verify_quantum_curve(curve, s.leading.psi, s.model, check=False),
        "companion": verify_companion(curve, s.model, s.point_pairs(20, "companion"), check=False),
        "loop_g0": verify_loop_g0(s.leading, curve, s.model, s.points(5, "loop_g0"), check=False),
        "loop_g0_per_power": projection_residuals(s.leading, curve, s.model),
    }
    return {"curve": curve.to_record(), "residuals": residuals}, 0


def cmd_free_energy(args, session):
    s = session
    frame = s.frame
    energies = action_and_f0(frame, s.sol, s.model)
    f1 = f1_from_hessian(frame.H, s.model.N)
    return {
        "Shat": encode_complex(energies["Shat"]),
        "f0": encode_complex(energies["f0"]),
        "f1": encode_complex(f1["f1"]),
        "f1_reduced": encode_complex(f1["f1_reduced"]),
        "f1_note": "defined up to an additive potential-independent constant",
        "det_H": encode_complex(f1["det"]),
        "condition": frame.diagnostics["hessian_cond"],
    }, 0


def _parse_eval(text, arity):
    points = []
    for chunk in text.split(";"):
        values = [v.split("=", 1)[-1].strip() for v in chunk.split(",") if v.strip()]
        if len(values) != arity:
            raise ConfigError(f"--eval point {chunk!r} needs {arity} values")
        try:
            points.append([complex(v.replace(" ", "")) for v in values])
        except ValueError as exc:
            raise ConfigError(f"--eval: {exc}") from exc
    return points


def cmd_correlators(args, session):
    s = session
    if args.n < 1 or args.g < 0:
        raise ConfigError("--n must be at least 1 and --g non-negative")
    W = s.store.W(args.n, args.g)
    route = "leading order" if (args.n, args.g) == (1, 0) else s.store.get(args.n - 1, args.g).route
    payload = {"n": args.n, "g": args.g, "route": route, "W": W.to_record()}
    if (args.n, args.g) == (1, 1):
        payload["diagnostics"] = w1_genus_one_diagnostics(s.store, s.frame, check=False)
    if args.eval:
        payload["evaluations"] = [
            {"point": [encode_complex(z) for z in pt], "value": encode_complex(W(*pt))}
            for pt in _parse_eval(args.eval, args.n)
        ]
    return payload, 0


# --- Entry point ---

def build_parser():
    parser = _Parser(prog="twomatrix", description="Arbitrary-beta two-matrix model engine")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for info, -vv for debug")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--model", required=True, help="model JSON file")
        p.add_argument("--out", help="output file (default: stdout)")
        p.add_argument("--solution", help="cached solution file to reuse when its model hash matches")
        p.add_argument("--precision", type=float, help="precision factor scaling every tolerance")
        p.add_argument("--seed", type=int, default=0, help="seed for verification sample points")

    for name, func, help_text in (
        ("solve", cmd_solve, "solve the Bethe system and write the solution cache"),
        ("verify", cmd_verify, "run the identity checks"),
        ("curve", cmd_curve, "spectral curve coefficients and residuals"),
        ("free-energy", cmd_free_energy, "f0, f1 and the Hessian determinant"),
        ("correlators", cmd_correlators, "W_n^(g) as pole tensors"),
    ):
        p = sub.add_parser(name, help=help_text)
        common(p)
        p.set_defaults(func=func)
        if name == "verify":
            p.add_argument("--checks", help=f"comma-separated subset of: {', '.join(ALL_CHECKS)}")
            p.add_argument("--perturb", type=float, help="shift every root by this amount (negative control)")
        if name == "correlators":
            p.add_argument("--n", type=int, required=True, help="number of arguments of W_n^(g)")
            p.add_argument("--g", type=int, required=True, help="genus")
            p.add_argument("--eval", help="points 'x=..,xp=..;..' at which to evaluate W")
    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return exc.exit_code
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        model = load_model(args.model)
        if args.precision is not None:
            model = replace(model, precision=args.precision)
        session = Session(model, args.solution, getattr(args, "perturb", None), args.seed)
        payload, code = args.func(args, session)
    except TwoMatrixError as exc:
        log.error("%s", exc)
        return exc.exit_code
    _emit({"manifest": manifest(args, model, args.command), **payload}, args.out)
    return code
