"""Command-line entry point: solve, sweep, fiber, verify-algebra, nonexist.

Every run writes ``report.json`` (config echo, results, gates) plus CSV
artifacts into the output directory, which defaults to ``./out`` and can
be overridden by ``--out`` or the ``KIRCHHOFF_OUTPUT_DIR`` variable.
Exit status: 0 when every gate passes, 1 on numerical failure, 2 on
usage or configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
import time
from dataclasses import asdict
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__, algebra, fiber, nonexist, radial, solver
from . import functional as F
from .errors import KirchhoffError

log = logging.getLogger("kirchhoff")

ENV_OUT = "KIRCHHOFF_OUTPUT_DIR"
EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class ConfigError(ValueError):
    pass


# -- output -------------------------------------------------------------------


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _jsonable(x):
    if isinstance(x, Fraction):
        return algebra.rational_json(x)
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, float) and not np.isfinite(x):
        return None
    raise TypeError(f"not serializable: {type(x).__name__}")


def write_json(path: Path, record: dict) -> None:
    atomic_write(path, json.dumps(record, indent=2, sort_keys=True, default=_jsonable) + "\n")


def write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    atomic_write(path, buf.getvalue())


def write_profile(path: Path, u: radial.RadialFunction) -> None:
    g = u.grid
    lines = [f"# r_max={g.r_max!r} n={g.n}", "r,value"]
    lines += [f"{r!r},{v!r}" for r, v in zip(g.nodes.tolist(), u.values.tolist())]
    atomic_write(path, "\n".join(lines) + "\n")


def _record(command: str, config: dict, results: dict, passed: bool, started: float) -> dict:
    return {
        "artifact": {"name": "kirchhoff", "version": __version__},
        "command": command,
        "config": config,
        "results": results,
        "passed": passed,
        "timestamps": {"started": started, "finished": time.time()},
    }


# -- configuration ------------------------------------------------------------------


_PARAM_KEYS = ("a", "b", "p", "lam", "delta")
_SOLVER_KEYS = ("max_iters", "grad_tol", "step_init", "armijo_c", "enforce_positivity")


def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(cfg) - {"command", "params", "potential", "grid", "solver", "output_dir", "seed", "options"}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return cfg


def _merged(cfg: dict, section: str, args, keys, rename=None) -> dict:
    out = dict(cfg.get(section, {}))
    bad = set(out) - set(keys)
    if bad:
        raise ConfigError(f"unknown keys in '{section}': {sorted(bad)}")
    for k in keys:
        v = getattr(args, (rename or {}).get(k, k), None)
        if v is not None:
            out[k] = v
    return out


def build_params(cfg, args, defaults=None) -> F.ProblemParams:
    vals = dict(defaults or {})
    vals.update(_merged(cfg, "params", args, _PARAM_KEYS))
    try:
        return F.ProblemParams(**{k: float(v) for k, v in vals.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid parameters: {exc}") from exc


def build_options(cfg, args) -> solver.SolverOptions:
    vals = _merged(cfg, "solver", args, _SOLVER_KEYS)
    try:
        return solver.SolverOptions(**vals)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid solver options: {exc}") from exc


def build_grid(cfg, args):
    g = _merged(cfg, "grid", args, ("r_max", "n"))
    if not g:
        return None
    if set(g) != {"r_max", "n"}:
        raise ConfigError("grid needs both r_max and n")
    try:
        return radial.make_grid(float(g["r_max"]), int(g["n"]))
    except KirchhoffError as exc:
        raise ConfigError(str(exc)) from exc


def build_potential(cfg, args) -> F.PotentialSpec:
    pot = dict(cfg.get("potential", {}))
    for key, attr in (("kind", "potential"), ("v_inf", "vinf"), ("v1", "v1"), ("file", "potential_csv")):
        v = getattr(args, attr, None)
        if v is not None:
            pot[key] = v
    if "file" in pot:
        pot.setdefault("kind", "file")
    kind = pot.get("kind", "constant")
    try:
        if kind == "constant":
            return F.PotentialSpec.constant(float(pot.get("v_inf", 1.0)))
        if kind == "well":
            return F.PotentialSpec.inverse_distance_well(float(pot.get("v1", 2.0)))
        if kind == "file":
            path = Path(pot["file"])
            if not path.exists():
                raise ConfigError(f"potential file not found: {path}")
            v_inf = pot.get("v_inf")
            return F.read_potential_csv(path, None if v_inf is None else float(v_inf))
    except KirchhoffError as exc:
        raise ConfigError(f"invalid potential: {exc}") from exc
    raise ConfigError(f"unknown potential kind {kind!r} (constant, well, file)")


def output_dir(cfg, args) -> Path:
    d = args.out or os.environ.get(ENV_OUT) or cfg.get("output_dir") or "out"
    return Path(d)


# -- commands -------------------------------------------------------------------


def cmd_solve(args, cfg) -> int:
    params = build_params(cfg, args)
    V = build_potential(cfg, args)
    grid = build_grid(cfg, args)
    opts = build_options(cfg, args)
    out = output_dir(cfg, args)
    started = time.time()
    if V.is_constant:
        rep = solver.solve_limit_ground_state(params, V.v_inf, grid, opts)
    else:
        rep = solver.solve_V_ground_state(params, V, grid, opts)
    config = {"params": asdict(params), "potential": V.label or V.kind,
              "grid": {"r_max": rep.profile.grid.r_max, "n": rep.profile.grid.n}, "solver": opts.echo()}
    passed = rep.converged and rep.gates_passed
    write_json(out / "report.json", _record("solve", config, rep.to_dict(), passed, started))
    write_profile(out / "profile.csv", rep.profile)
    print(f"energy={rep.energy!r} converged={rep.converged} g={rep.g_residual:.3e} "
          f"pohozaev={rep.pohozaev_residual:.3e} pde={rep.pde_residual:.3e}")
    return EXIT_OK if passed else EXIT_FAIL


def _lambda_list(args, cfg, delta) -> list[float]:
    lams = args.lambdas if args.lambdas is not None else cfg.get("options", {}).get("lambdas")
    if lams is None:
        lams = np.round(np.arange(delta, 1.0 + 1e-9, 0.1), 12).tolist()
    return [float(x) for x in lams]


def cmd_sweep(args, cfg) -> int:
    params = build_params(cfg, args)
    V = build_potential(cfg, args) if (args.potential or cfg.get("potential")) else F.PotentialSpec.inverse_distance_well()
    grid = build_grid(cfg, args)
    opts = build_options(cfg, args)
    lams = _lambda_list(args, cfg, params.delta)
    out = output_dir(cfg, args)
    started = time.time()
    try:
        rows = solver.lambda_sweep(params, lams, V, grid, opts, workers=args.workers)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    write_csv(out / "sweep.csv", ["lambda", "c_lambda", "m_inf", "gap"],
              [(r.lam, r.c_lambda, r.m_inf, r.gap) for r in rows])
    c = [r.c_lambda for r in rows]
    m = [r.m_inf for r in rows]
    monotone_c = all(y <= x * (1 + 1e-4) for x, y in zip(c, c[1:]))
    monotone_m = all(y <= x * (1 + 1e-4) for x, y in zip(m, m[1:]))
    gaps = all(r.gap > 0 for r in rows)
    passed = all(r.ok for r in rows) and gaps and monotone_c and monotone_m
    results = {"rows": [r.to_dict() for r in rows], "c_nonincreasing": monotone_c,
               "m_inf_nonincreasing": monotone_m, "all_gaps_positive": gaps}
    config = {"params": asdict(params), "potential": V.label or V.kind, "lambdas": lams, "solver": opts.echo()}
    write_json(out / "report.json", _record("sweep", config, results, passed, started))
    for r in rows:
        print(f"lambda={r.lam:.3f} c={r.c_lambda:.10g} m_inf={r.m_inf:.10g} gap={r.gap:.6g} ok={r.ok}")
    return EXIT_OK if passed else EXIT_FAIL


def cmd_fiber(args, cfg) -> int:
    params = build_params(cfg, args)
    out = output_dir(cfg, args)
    started = time.time()
    if args.coeffs is not None:
        fp = fiber.FiberPolynomial(*args.coeffs, params.p)
        source = {"coeffs": list(args.coeffs)}
    else:
        V = build_potential(cfg, args)
        if not V.is_constant:
            raise ConfigError("the closed-form fiber needs a constant potential")
        if args.profile:
            u = radial.read_profile_csv(args.profile)
            source = {"profile": str(args.profile)}
        else:
            grid = build_grid(cfg, args) or radial.make_grid()
            u = radial.gaussian(grid, args.width)
            source = {"gaussian_width": args.width}
        fp = fiber.fiber_poly(F.breakdown(u, params, V), params)
    fm = fiber.fiber_max(fp)
    t_hi = args.t_max or 2.0 * fm.t_star
    ts = np.linspace(0.0, t_hi, args.points)
    write_csv(out / "fiber.csv", ["t", "gamma"], zip(ts, fiber.fiber_curve(fp, ts)))
    results = {"t_star": fm.t_star, "value": fm.value,
               "coefficients": [fp.c1, fp.c2, fp.c3, fp.c4], "sign_changes": fiber.count_sign_changes(fp, t_hi)}
    write_json(out / "report.json", _record("fiber", {"params": asdict(params), **source}, results, True, started))
    print(f"t_star={fm.t_star!r} value={fm.value!r}")
    return EXIT_OK


def _fraction_arg(s: str) -> Fraction:
    try:
        return Fraction(s)
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"not a rational number: {s!r}") from exc


def algebra_table(ps, lams, k) -> tuple[list[dict], bool]:
    rows = []
    ok_all = True
    for p in ps:
        crit = algebra.critical_multiplier(p)
        for lam in list(lams) + [crit]:
            row = {"p": p, "lambda": lam, "k": k}
            try:
                row["det_A"] = algebra.det_A(lam, p)
                row["step3"] = algebra.step3_solve(k, p).to_dict()
                v = algebra.step4_case_analysis(lam, p, k)
                row["step4"] = v.to_dict()
                row["bracket"] = algebra.multiplier_bracket_holds(p)
                # every nonzero multiplier must be excluded
                row["pass"] = (lam == 0) == (v.contradiction is None) and row["bracket"] \
                    and row["step3"]["contradiction"] is not None
            except algebra.ClaimViolation as exc:
                row["pass"] = False
                row["error"] = str(exc)
            ok_all &= row["pass"]
            rows.append(row)
    return rows, ok_all


def cmd_verify_algebra(args, cfg) -> int:
    out = output_dir(cfg, args)
    started = time.time()
    ps = args.p_values or [Fraction(p, 4) for p in range(9, 20)]
    lams = args.lambda_values or [Fraction(n, 10) for n in range(-5, 16)]
    k = args.k
    for p in ps:
        if not 2 < p < 5:
            raise ConfigError(f"p must lie in (2, 5), got {p}")
    if not k > 0:
        raise ConfigError("k must be positive")
    rows, ok = algebra_table(ps, lams, k)
    s2 = algebra.step2_solve(k, 1, 1, 3)
    results = {"table": rows, "step2_example": {"mu": s2[0], "delta": s2[1]}}
    write_json(out / "report.json", _record("verify-algebra", {"p": ps, "lambda": lams, "k": k}, results, ok, started))
    print(f"{'p':>8} {'lambda':>10} {'det A':>14} {'case':>20}  result")
    for r in rows:
        case = r.get("step4", {}).get("case", "-")
        det = r.get("det_A", "")
        print(f"{str(r['p']):>8} {str(r['lambda']):>10} {str(det):>14} {case:>20}  {'PASS' if r['pass'] else 'FAIL'}")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_nonexist(args, cfg) -> int:
    params = _merged(cfg, "params", args, ("a", "b", "p"))
    a, b, p = float(params.get("a", 2.0)), float(params.get("b", 1.0)), float(params.get("p", 2.0))
    try:
        nonexist.check_hypotheses(a, b, p)
    except KirchhoffError as exc:
        raise ConfigError(str(exc)) from exc
    grid = build_grid(cfg, args) or radial.make_grid()
    V = build_potential(cfg, args)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    out = output_dir(cfg, args)
    started = time.time()
    C = F.sobolev_constant(grid, V, q=3.0, a=1.0)
    scans, ok = [], True
    for factor in args.lam_factors:
        res = nonexist.nonexist_scan(a, b, p, lam_factor=factor, grid=grid, V=V,
                                     samples=args.samples, seed=seed, C=C)
        d = res.to_dict()
        d["lambda_factor"] = factor
        d["above_threshold"] = factor >= 1
        scans.append(d)
        if factor >= 1:
            ok &= res.passed
        for i, (u, _) in enumerate(res.counterexamples[:10]):
            write_profile(out / f"counterexample_{factor:g}_{i}.csv", u)
        verdict = "PASS" if res.passed else ("FAIL" if factor >= 1 else "violations found (below lambda_0)")
        print(f"lambda={res.lam:.6g} ({factor:g} lambda_0): {verdict}, min margin {res.min_margin:.4g}")
    lam0 = nonexist.threshold(a, b, C)
    print(f"C={C!r} lambda_0={lam0!r}")
    config = {"a": a, "b": b, "p": p, "grid": {"r_max": grid.r_max, "n": grid.n}, "samples": args.samples,
              "seed": seed, "lam_factors": args.lam_factors}
    write_json(out / "report.json",
               _record("nonexist", config, {"sobolev_C": C, "lambda0": lam0, "scans": scans}, ok, started))
    return EXIT_OK if ok else EXIT_FAIL


# -- parser ---------------------------------------------------------------------


def _common(sp, params=True, potential=True, grid=True):
    sp.add_argument("--config", help="JSON config; flags override its values")
    sp.add_argument("--out", help=f"output directory (env {ENV_OUT})")
    if params:
        sp.add_argument("--a", type=float)
        sp.add_argument("--b", type=float)
        sp.add_argument("--p", type=float)
        sp.add_argument("--lambda", dest="lam", type=float)
        sp.add_argument("--delta", type=float, help="left end of the lambda interval")
    if potential:
        sp.add_argument("--potential", choices=("constant", "well", "file"))
        sp.add_argument("--vinf", type=float, help="V_inf (constant potential value)")
        sp.add_argument("--v1", type=float, help="V_1 in V = V_1 - 1/(r+1)")
        sp.add_argument("--potential-csv", help="CSV with columns r,V,rVprime")
    if grid:
        sp.add_argument("--r-max", dest="r_max", type=float)
        sp.add_argument("--n", type=int)


def _solver_flags(sp):
    sp.add_argument("--max-iters", dest="max_iters", type=int)
    sp.add_argument("--grad-tol", dest="grad_tol", type=float)
    sp.add_argument("--step-init", dest="step_init", type=float)
    sp.add_argument("--armijo-c", dest="armijo_c", type=float)
    sp.add_argument("--no-positivity", dest="enforce_positivity", action="store_const", const=False)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kirchhoff", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("solve", help="ground state for a constant or radial potential")
    _common(sp)
    _solver_flags(sp)

    sp = sub.add_parser("sweep", help="c_lambda and m_lambda^inf over a lambda grid")
    _common(sp)
    _solver_flags(sp)
    sp.add_argument("--lambdas", type=float, nargs="+")
    sp.add_argument("--workers", type=int, default=1)

    sp = sub.add_parser("fiber", help="fiber polynomial curve and its maximum")
    _common(sp)
    sp.add_argument("--coeffs", type=float, nargs=4, metavar=("C1", "C2", "C3", "C4"))
    sp.add_argument("--profile", help="profile CSV written by 'solve'")
    sp.add_argument("--width", type=float, default=1.0, help="Gaussian probe width")
    sp.add_argument("--t-max", dest="t_max", type=float)
    sp.add_argument("--points", type=int, default=401)

    sp = sub.add_parser("verify-algebra", help="exact checks of the manifold algebra")
    _common(sp, params=False, potential=False, grid=False)
    sp.add_argument("--p", dest="p_values", type=_fraction_arg, nargs="+")
    sp.add_argument("--lambda", dest="lambda_values", type=_fraction_arg, nargs="+")
    sp.add_argument("--k", type=_fraction_arg, default=Fraction(1))

    sp = sub.add_parser("nonexist", help="falsification search above the nonexistence threshold")
    _common(sp, params=False)
    sp.add_argument("--a", type=float)
    sp.add_argument("--b", type=float)
    sp.add_argument("--p", type=float)
    sp.add_argument("--samples", type=int, default=1000)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--lam-factors", dest="lam_factors", type=float, nargs="+", default=[1.0, 2.0])
    return ap


COMMANDS = {
    "solve": cmd_solve,
    "sweep": cmd_sweep,
    "fiber": cmd_fiber,
    "verify-algebra": cmd_verify_algebra,
    "nonexist": cmd_nonexist,
}


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if cfg.get("command", args.command) != args.command:
            raise ConfigError(f"config is for '{cfg['command']}', not '{args.command}'")
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except KirchhoffError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
