"""Command-line front end: JSON problem configs in, JSON/CSV reports and exit codes out."""

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import dataclass, fields
from importlib import resources

import numpy as np

from .certificates import RadialProfile, certify, default_grid, mu_profile
from .errors import LipinvError
from .linalg import LinearMap, NormTag
from .problems import builtin
from .pseudo_jacobian import PointMap, linear_map, pj_validate
from .solver import SolveOptions, solve, uniqueness_certificate
from .volterra import (build_map, check_phi, export_solution_csv, fixed_point_solve,
                       problem_from_config, verify_inverse_lipschitz)

EXIT_OK = 0
EXIT_IO = 1
EXIT_INCONCLUSIVE = 2
EXIT_FAILS = 3
EXIT_CRITICAL = 4
EXIT_ESCAPE = 5
EXIT_ITER_CAP = 6
EXIT_BOUND_VIOLATION = 7
EXIT_PJ_INVALID = 8
EXIT_STALLED = 9

STATUS_EXIT = {
    "solved": EXIT_OK,
    "critical_nonsolution": EXIT_CRITICAL,
    "ps_escape": EXIT_ESCAPE,
    "iteration_cap": EXIT_ITER_CAP,
    "stalled": EXIT_STALLED,
}
VERDICT_EXIT = {
    "divergent_certified": EXIT_OK,
    "divergent_empirical": EXIT_OK,
    "inconclusive": EXIT_INCONCLUSIVE,
    "fails": EXIT_FAILS,
}

EPILOG = """\
commands:
  certify        build mu, its lsc envelope m, rho(r) = int_0^r m and the divergence verdict
  solve          Armijo descent on |f(x) - y|; --starts K adds a K-start uniqueness check
  invert-scan    compare difference quotients of the inverse with 1/m(|x|) (Volterra configs)
  volterra-demo  certify, solve, invert-scan and validate-pj on one Volterra config
  validate-pj    sample-check the pseudo-Jacobian inequality at seeded points

configs:
  --config takes a JSON file path or the name of a shipped config
  (%s).
  Volterra:  {"N", "p", "phi": {"family", "params", "decay"}, "theta", "y"}
  linear:    {"type": "linear", "matrix", "y", "x0"}
  builtin:   {"type": "builtin", "name", "params", "y", "x0", "points"}
  profile:   {"type": "profile", "m": {"family", "params"}}   (certify only)
  Optional keys: "options" (solver overrides), "points" (validate-pj),
  "n_pairs" and "delta" (invert-scan), "corrupt_bound_factor" (scales the
  inverse-Lipschitz bound; values below 1 make a deliberately wrong bound).

exit codes:
  0  success (solved, divergent verdict, bound respected, pseudo-Jacobian valid)
  1  I/O error, malformed config or failed computation
  2  certify: verdict inconclusive
  3  certify: verdict fails
  4  solve: critical non-solution (criticality vanished away from a solution)
  5  solve: Palais-Smale escape (iterates run off with vanishing criticality)
  6  solve: iteration cap reached
  7  invert-scan: some difference quotient exceeds the bound
  8  validate-pj: the pseudo-Jacobian inequality failed at a sampled point
  9  solve: line search stalled
"""


def shipped_configs():
    root = resources.files("lipinv") / "configs"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_config(source):
    if os.path.exists(source):
        with open(source) as fh:
            return json.load(fh)
    name = source[:-5] if source.endswith(".json") else source
    if os.sep not in source and name in shipped_configs():
        return json.loads((resources.files("lipinv") / "configs" / f"{name}.json").read_text())
    raise FileNotFoundError(f"no such config file or shipped config: {source}")


@dataclass
class Problem:
    kind: str
    config: dict
    pmap: PointMap = None
    volterra: object = None
    y: np.ndarray = None
    x0: np.ndarray = None
    m: RadialProfile = None


def _vector(obj, n=None):
    v = np.atleast_1d(np.asarray(obj, dtype=float))
    if n is not None and v.size == 1 and n > 1:
        v = np.full(n, float(v[0]))
    return v


def build_problem(cfg, target=None):
    if not isinstance(cfg, dict):
        raise ValueError("a config must be a JSON object")
    kind = cfg.get("type", "volterra" if "N" in cfg else None)
    if kind == "volterra":
        if target is not None:
            cfg = dict(cfg, y={"constant": float(target)} if np.ndim(target) == 0 else {"samples": list(target)})
        vp = problem_from_config(cfg)
        return Problem(kind, cfg, build_map(vp), vp, np.array(vp.y), np.zeros(vp.N), vp.m_profile())
    if kind == "linear":
        T = LinearMap(np.asarray(cfg["matrix"], dtype=float),
                      NormTag.from_json(cfg.get("domain_norm", "l2")),
                      NormTag.from_json(cfg.get("codomain_norm", "l2")))
        pmap = linear_map(T)
    elif kind == "builtin":
        pmap = builtin(cfg["name"], **cfg.get("params", {}))
    elif kind == "profile":
        m = cfg["m"]
        return Problem(kind, cfg, m=RadialProfile.analytic(m["family"], m["params"], float(cfg.get("r_max", 100.0))))
    else:
        raise ValueError("config needs 'N' (Volterra) or a 'type' of linear, builtin or profile")
    n = pmap.dim
    y = _vector(target if target is not None else cfg.get("y", np.zeros(n)))
    x0 = _vector(cfg.get("x0", np.zeros(n)), n)
    return Problem(kind, cfg, pmap, None, y, x0)


def _options(prob, args):
    over = dict(prob.config.get("options", {}))
    if args.tol is not None:
        over["tol_residual"] = args.tol
    known = {f.name for f in fields(SolveOptions)}
    bad = sorted(set(over) - known)
    if bad:
        raise ValueError(f"unknown solver options {bad}")
    over.setdefault("seed", args.seed)
    return SolveOptions(**over)


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_clean(obj), fh, sort_keys=True, indent=2)
        fh.write("\n")


def _say(args, msg):
    if not args.quiet:
        print(msg)


def _certificate(prob, args):
    extra = {}
    if prob.kind == "volterra":
        cert = certify(prob.m)
        extra["phi_check"] = check_phi(prob.volterra, seed=args.seed).to_json()
    elif prob.kind == "profile":
        cert = certify(prob.m)
    else:
        r_max = float(prob.config.get("r_max", 10.0))
        mu = mu_profile(prob.pmap, default_grid(r_max, int(prob.config.get("n_grid", 32))), seed=args.seed)
        cert = certify(mu)
    return cert, extra


def cmd_certify(args, prob):
    cert, extra = _certificate(prob, args)
    out = cert.to_json()
    out.update(extra)
    write_json(os.path.join(args.out, "certificate.json"), out)
    _say(args, f"certify: verdict {cert.verdict}, m(0) = {cert.m0:.6g}")
    return VERDICT_EXIT[cert.verdict]


def cmd_solve(args, prob):
    if prob.pmap is None:
        raise ValueError("solve needs a map, not a bare profile")
    opts = _options(prob, args)
    cert = None
    if prob.kind == "volterra":
        c = certify(prob.m)
        cert = c if c.divergent else None
    rep = solve(prob.pmap, prob.y, prob.x0, opts, cert)
    out = rep.to_json()
    if prob.kind == "volterra":
        oracle = fixed_point_solve(prob.volterra)
        out["oracle_distance"] = prob.volterra.norm.norm(rep.x_final - oracle)
        export_solution_csv(prob.volterra, rep.x_final, os.path.join(args.out, "solution.csv"))
    if args.starts:
        sols = [rep.x_final] if rep.status == "solved" else []
        uc = uniqueness_certificate(prob.pmap, prob.y, sols, n_starts=args.starts, seed=args.seed,
                                    cert=cert, radius=prob.config.get("radius"), opts=opts)
        out["uniqueness"] = uc.to_json()
    write_json(os.path.join(args.out, "solve_report.json"), out)
    _say(args, f"solve: {rep.status} after {rep.iterations} iterations, residual {rep.residual:.3e}")
    return STATUS_EXIT[rep.status]


def cmd_invert_scan(args, prob):
    if prob.kind != "volterra":
        raise ValueError("invert-scan needs a certified Volterra config")
    if not certify(prob.m).divergent:
        raise ValueError("invert-scan needs a certified problem")
    factor = float(prob.config.get("corrupt_bound_factor", 1.0))
    rep = verify_inverse_lipschitz(prob.volterra, n_pairs=int(prob.config.get("n_pairs", 8)),
                                   delta=float(prob.config.get("delta", 1e-3)), seed=args.seed,
                                   bound_factor=factor)
    with open(os.path.join(args.out, "invert_scan.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["pair", "ratio", "bound", "x_norm", "ok"])
        for row in rep.rows:
            w.writerow([row["pair"], repr(row["ratio"]), repr(row["bound"]), repr(row["x_norm"]), int(row["ok"])])
    out = rep.to_json()
    out["bound_factor"] = factor
    write_json(os.path.join(args.out, "invert_scan.json"), out)
    _say(args, f"invert-scan: max ratio {rep.max_ratio:.6g}, {'pass' if rep.passed else 'BOUND VIOLATED'}")
    return EXIT_OK if rep.passed else EXIT_BOUND_VIOLATION


def cmd_validate_pj(args, prob):
    if prob.pmap is None:
        raise ValueError("validate-pj needs a map")
    pts = prob.config.get("points")
    if pts is None:
        rng = np.random.default_rng(args.seed)
        n = prob.pmap.dim
        pts = [np.zeros(n)] + [rng.standard_normal(n) for _ in range(2)]
    reports = []
    ok = True
    for k, x in enumerate(pts):
        rep = pj_validate(prob.pmap, np.asarray(x, dtype=float), seed=args.seed + k)
        ok = ok and rep.passed
        reports.append({"point_index": k, "passed": rep.passed, "worst_margin": rep.worst_margin,
                        "n_pairs": rep.n_pairs, "tol": rep.tol})
    write_json(os.path.join(args.out, "validate_pj.json"), {"passed": ok, "points": reports})
    worst = max(r["worst_margin"] for r in reports)
    _say(args, f"validate-pj: {'pass' if ok else 'FAIL'}, worst margin {worst:.3e}")
    return EXIT_OK if ok else EXIT_PJ_INVALID


def cmd_volterra_demo(args, prob):
    if prob.kind != "volterra":
        raise ValueError("volterra-demo needs a Volterra config")
    base = args.out
    codes = {}
    for name, fn in (("certify", cmd_certify), ("solve", cmd_solve),
                     ("invert-scan", cmd_invert_scan), ("validate-pj", cmd_validate_pj)):
        args.out = os.path.join(base, name)
        os.makedirs(args.out, exist_ok=True)
        codes[name] = fn(args, prob)
    args.out = base
    write_json(os.path.join(base, "summary.json"), {"exit_codes": codes})
    return next((c for c in codes.values() if c != EXIT_OK), EXIT_OK)


COMMANDS = {
    "certify": cmd_certify,
    "solve": cmd_solve,
    "invert-scan": cmd_invert_scan,
    "volterra-demo": cmd_volterra_demo,
    "validate-pj": cmd_validate_pj,
}


def _parse_target(text):
    if os.path.exists(text):
        with open(text) as fh:
            return json.load(fh)
    return json.loads(text)


def make_parser():
    parser = argparse.ArgumentParser(
        prog="lipinv", description="Certified global inversion of nonsmooth Lipschitz maps.",
        epilog=EPILOG % ", ".join(shipped_configs()), formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("command", choices=sorted(COMMANDS), help="what to run (see below)")
    parser.add_argument("--config", required=True, metavar="PATH", help="problem JSON file or shipped config name")
    parser.add_argument("--out", default="lipinv-out", metavar="DIR", help="output directory (default: lipinv-out)")
    parser.add_argument("--seed", type=int, default=42, help="seed for every random draw (default: 42)")
    parser.add_argument("--tol", type=float, default=None, help="residual tolerance for solve (default: 1e-8)")
    parser.add_argument("--starts", type=int, default=0, metavar="K",
                        help="solve: number of random starts for the uniqueness check (volterra-demo default: 10)")
    parser.add_argument("--target", default=None, metavar="Y",
                        help="target y as inline JSON (number or list) or a JSON file; overrides the config")
    parser.add_argument("--quiet", action="store_true", help="print nothing on success")
    return parser


def main(argv=None):
    parser = make_parser()
    args = parser.parse_args(argv)
    if args.command == "volterra-demo" and not args.starts:
        args.starts = 10
    try:
        cfg = load_config(args.config)
        target = _parse_target(args.target) if args.target is not None else None
        prob = build_problem(cfg, target)
        os.makedirs(args.out, exist_ok=True)
    except (OSError, ValueError, KeyError, TypeError, LipinvError) as exc:
        print(f"lipinv: cannot load problem: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        return COMMANDS[args.command](args, prob)
    except (OSError, ValueError, KeyError, LipinvError, ArithmeticError, RuntimeError) as exc:
        print(f"lipinv {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
