"""Command-line front end ``aniso-tv``.

Exit codes: 0 all checks pass, 1 checks failed, 2 usage or config error,
3 solver non-convergence or detected unboundedness.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .errors import AnisoTVError, ConfigError

log = logging.getLogger("anisotv")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_SOLVER = 0, 1, 2, 3


def _seed(args) -> int:
    env = os.environ.get("ANISO_TV_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"ANISO_TV_SEED must be an integer, got {env!r}") from None
    return int(getattr(args, "seed", 0) or 0)


def _emit(payload: dict, out: str | None):
    text = json.dumps(_jsonable(payload), indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, float) and not np.isfinite(x):
        return repr(x)
    return x


def _scenario(args):
    from .config import Scenario

    if not args.scenario:
        raise ConfigError("a scenario file is required")
    return Scenario.load(args.scenario).with_overrides(getattr(args, "set", None))


def _shape_arg(text: str):
    from .exactgeo.shapes import from_literal

    try:
        return from_literal(json.loads(text))
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad shape literal: {exc}") from None


# ---------------------------------------------------------------------------
# subcommands


def cmd_perimeter(args) -> int:
    from .exactgeo.shapes import aniso_perimeter
    from .integrand import by_name

    if args.shape:
        shapes = [_shape_arg(s) for s in args.shape]
        integrand = by_name(args.integrand)
    else:
        sc = _scenario(args)
        shapes = sc.exact()[0]
        integrand = by_name(args.integrand) if args.integrand_given else sc.integrand()
    if not shapes:
        raise ConfigError("no shapes given")
    rows = [{"kind": s.kind, "perimeter": aniso_perimeter(s, integrand), "area": s.area}
            for s in shapes]
    _emit({"schema_version": 1, "integrand": integrand.name, "shapes": rows}, args.out)
    return EXIT_OK


def cmd_measure(args) -> int:
    from .exactgeo.measures import measure_of_detailed, total_mass

    sc = _scenario(args)
    shapes, mu, nu = sc.exact()
    rows = []
    for s in shapes:
        r = measure_of_detailed(mu, s, args.side)
        rows.append({"kind": s.kind, "mass": r.value, "approximate": r.approximate_membership})
    _emit({"schema_version": 1, "side": args.side, "total_mass": total_mass(mu),
           "shapes": rows}, args.out)
    return EXIT_OK


def _small_volume(text):
    if not text:
        return None, None
    try:
        eps, delta = (float(t) for t in text.split(","))
    except ValueError:
        raise ConfigError("--small-volume expects eps,delta") from None
    return eps, delta


def cmd_ic_check(args) -> int:
    if args.mode == "certificate":
        return _ic_certificate(args)
    from .icheck import ICQuery, brute_force_ic, dual_ic

    sc = _scenario(args)
    eps, delta = _small_volume(args.small_volume)
    dom = sc.domain(args.h)
    C = args.constant if args.constant is not None else float(sc.raw.get("constant", 1.0))
    direction = args.direction or sc.raw.get("direction", "forward")
    query = ICQuery(sc.measure(dom), sc.integrand(), C, direction, eps, delta)
    if args.mode == "dual":
        if query.small_volume:
            raise ConfigError("the dual route has no small-volume variant; use exhaustive or anneal")
        rep = dual_ic(query, dom)
    else:
        rep = brute_force_ic(query, dom, args.mode, seed=_seed(args))
    payload = {"schema_version": 1, **rep.to_dict(), "constant": C, "n_cells": dom.n_cells}
    _emit(payload, args.out)
    return EXIT_OK if rep.verdict == "holds" else EXIT_FAIL


def _ic_certificate(args) -> int:
    from .exactgeo import check_certificate, shape_battery
    from .exactgeo.certificates import certificate_by_name
    from .exactgeo.measures import ic_score
    from .exactgeo.shapes import aniso_perimeter

    if args.certificate:
        field, target, integrand, kind = certificate_by_name(args.certificate, args.level,
                                                             args.theta)
        rep = check_certificate(field, target, shape_battery(kind, args.shapes, _seed(args)),
                                integrand)
        _emit({"schema_version": 1, "mode": "certificate", "field": field.name, **rep.to_dict()},
              args.out)
        return EXIT_OK if rep.passed else EXIT_FAIL
    # exact scores of the scenario's shapes
    sc = _scenario(args)
    shapes, mu, nu = sc.exact()
    integrand = sc.integrand()
    if (args.direction or sc.raw.get("direction", "forward")) == "mirrored":
        integrand = integrand.mirrored()
    C = args.constant if args.constant is not None else float(sc.raw.get("constant", 1.0))
    rows = []
    for s in shapes:
        score = ic_score(mu, nu, s, integrand, C)
        rows.append({"kind": s.kind, "lhs": score + C * aniso_perimeter(s, integrand),
                     "rhs": C * aniso_perimeter(s, integrand), "score": score})
    worst = max((r["score"] for r in rows), default=0.0)
    verdict = "violated" if worst > 1e-12 else "holds on tested shapes"
    _emit({"schema_version": 1, "mode": "certificate", "verdict": verdict, "shapes": rows},
          args.out)
    return EXIT_OK if worst <= 1e-12 else EXIT_FAIL


def cmd_certificate(args) -> int:
    from .exactgeo import check_certificate, shape_battery
    from .exactgeo.certificates import certificate_by_name

    field, target, integrand, kind = certificate_by_name(args.name, args.level, args.theta)
    rep = check_certificate(field, target, shape_battery(kind, args.shapes, _seed(args)),
                            integrand)
    _emit({"schema_version": 1, "field": field.name, "pieces": list(field.pieces),
           **rep.to_dict()}, args.out)
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_solve(args) -> int:
    from .grid import GridFunction, to_csv
    from .solve import minimize_phi, minimize_phi_hat, oracle_minimize

    sc = _scenario(args)
    dom = sc.domain(args.h)
    cfg = sc.solve_config(seed=_seed(args), snapshot_stride=args.snapshot_stride,
                          backend=args.backend, dc_restarts=args.dc_restarts)
    integrand, mu, datum = sc.integrand(), sc.measure(dom), sc.datum(dom)
    fn = minimize_phi if args.functional == "phi" else minimize_phi_hat
    rep = fn(dom, integrand, mu, datum, cfg)
    if args.oracle:
        o = oracle_minimize(dom, integrand, mu, datum,
                            functional="phi" if args.functional == "phi" else "phi_hat",
                            step=cfg.quantization_step)
        rep.oracle_value, rep.oracle_band = o.value, o.error_band
    payload = {"schema_version": 1, "n_cells": dom.n_cells, "h": dom.h, **rep.to_dict()}
    _emit(payload, args.report)
    if args.csv:
        to_csv(GridFunction(rep.minimizer.values, datum), dom, args.csv)
    return EXIT_OK if rep.converged else EXIT_SOLVER


def cmd_coarea(args) -> int:
    from .grid import GridDomain, GridFunction, coarea_tv, tv_phi
    from .integrand import by_name

    rng = np.random.default_rng(_seed(args))
    integrand = by_name(args.integrand)
    worst = 0.0
    for _ in range(args.cases):
        nx, ny = rng.integers(1, args.max_side + 1, 2)
        dom = GridDomain.box(int(nx), int(ny), float(rng.uniform(0.1, 2.0)))
        # integer-valued samples exercise ties between level sets
        vals = rng.integers(-3, 4, dom.n_cells).astype(float) if rng.random() < 0.3 else \
            rng.normal(size=dom.n_cells)
        w = GridFunction(vals, rng.normal(size=len(dom.boundary_edges)))
        a, b = coarea_tv(w, dom, integrand), tv_phi(w, dom, integrand)
        worst = max(worst, abs(a - b) / max(1.0, abs(b)))
    ok = worst <= 1e-10
    _emit({"schema_version": 1, "cases": args.cases, "integrand": integrand.name,
           "max_relative_defect": worst, "passed": ok}, args.out)
    return EXIT_OK if ok else EXIT_FAIL


def _run_one(name, overrides):
    from .gallery import run

    rep = run(name, overrides)
    return name, rep.passed, rep.to_json()


def cmd_gallery(args) -> int:
    from .config import load_overrides
    from .gallery import CATALOG, list_scenarios, run

    if args.action == "list":
        for name, title in list_scenarios():
            print(f"{name:22s} {title}")
        return EXIT_OK
    overrides = load_overrides(args.config) if args.config else None
    if args.all:
        names = list(CATALOG)
    elif args.name:
        names = [args.name]
    else:
        raise ConfigError("gallery run needs a scenario name or --all")
    if len(names) == 1:
        rep = run(names[0], overrides)
        results = [(names[0], rep.passed, rep.to_json())]
    elif args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            results = list(pool.map(_run_one, names, [overrides] * len(names)))
    else:
        results = [_run_one(n, overrides) for n in names]
    if len(results) == 1:
        text = results[0][2]
    else:
        text = json.dumps({"schema_version": 1,
                           "reports": {n: json.loads(t) for n, _, t in results}},
                          indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    for n, ok, _ in results:
        log.info("%s: %s", n, "pass" if ok else "FAIL")
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_FAIL


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aniso-tv", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    p.add_argument("--seed", type=int, default=0, help="overridden by ANISO_TV_SEED")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, scenario=True):
        if scenario:
            sp.add_argument("scenario", nargs="?", help="JSON scenario file")
            sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                            help="override a scenario entry (dotted keys)")
        sp.add_argument("--out", help="write the JSON report here instead of stdout")

    sp = sub.add_parser("perimeter", help="exact anisotropic perimeters")
    common(sp)
    sp.add_argument("--shape", action="append", help="shape literal as JSON")
    sp.add_argument("--integrand", default="isotropic")
    sp.set_defaults(func=cmd_perimeter)

    sp = sub.add_parser("measure", help="curve-measure masses of shapes")
    common(sp)
    sp.add_argument("--side", choices=("closure", "interior"), default="closure")
    sp.set_defaults(func=cmd_measure)

    sp = sub.add_parser("ic-check", help="isoperimetric condition checks")
    common(sp)
    sp.add_argument("--mode", choices=("exhaustive", "anneal", "dual", "certificate"),
                    default="dual")
    sp.add_argument("--constant", type=float)
    sp.add_argument("--direction", choices=("forward", "mirrored"))
    sp.add_argument("--small-volume", metavar="EPS,DELTA")
    sp.add_argument("--h", type=float, help="grid step, overriding the scenario")
    sp.add_argument("--certificate", choices=("signed-ic", "non-finite", "fractal"))
    sp.add_argument("--level", type=int, default=1)
    sp.add_argument("--theta", type=float, default=1.0)
    sp.add_argument("--shapes", type=int, default=24)
    sp.set_defaults(func=cmd_ic_check)

    sp = sub.add_parser("certificate", help="check a named divergence-field certificate")
    sp.add_argument("name", choices=("signed-ic", "non-finite", "fractal"))
    sp.add_argument("--level", type=int, default=1)
    sp.add_argument("--theta", type=float, default=1.0)
    sp.add_argument("--shapes", type=int, default=24)
    common(sp, scenario=False)
    sp.set_defaults(func=cmd_certificate)

    sp = sub.add_parser("solve", help="minimize phi or phi-hat on a grid scenario")
    sp.add_argument("--scenario", required=True)
    sp.add_argument("--set", action="append", metavar="KEY=VALUE")
    sp.add_argument("--functional", choices=("phi", "phi-hat"), default="phi")
    sp.add_argument("--h", type=float)
    sp.add_argument("--report", help="write the SolveReport JSON here")
    sp.add_argument("--csv", help="write the minimizer as CSV")
    sp.add_argument("--snapshot-stride", type=int, default=0)
    sp.add_argument("--backend", choices=("pdhg", "highs"))
    sp.add_argument("--dc-restarts", type=int)
    sp.add_argument("--oracle", action="store_true", help="also run the exact oracle (tiny grids)")
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("gallery", help="worked scenarios")
    sp.add_argument("action", choices=("run", "list"))
    sp.add_argument("name", nargs="?")
    sp.add_argument("--all", action="store_true")
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--config", help="JSON object of scenario parameter overrides")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_gallery)

    sp = sub.add_parser("coarea-test", help="randomized coarea identity check")
    sp.add_argument("--cases", type=int, default=200)
    sp.add_argument("--integrand", default="quadrant")
    sp.add_argument("--max-side", type=int, default=6)
    common(sp, scenario=False)
    sp.set_defaults(func=cmd_coarea)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    args.integrand_given = "--integrand" in (argv if argv is not None else sys.argv[1:])
    try:
        return args.func(args)
    except AnisoTVError as exc:
        print(f"aniso-tv: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (KeyError, ValueError, TypeError) as exc:
        print(f"aniso-tv: invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"aniso-tv: {exc}", file=sys.stderr)
        return EXIT_USAGE


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
