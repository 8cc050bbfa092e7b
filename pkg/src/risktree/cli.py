"""Command-line entry point: ``risktree eval|check|conjugate``.

Exit codes: 0 success, 1 a check failed (inverted by ``--expect-fail``),
2 parse or usage error, 3 input does not fit the tree, 4 too few
non-vacuous pairs for a weak check.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import report as rpt
from .conditions import (StructuredModel, check_bifurcation_closure, check_cocycle,
                         check_discount_bifurcation, check_joint_pasting, check_locality,
                         check_pasting_closure, check_positivity, verify_theorem_tc)
from .dynamic import (DualModel, RiskModel, check_dynamic_axioms, check_regularity,
                      minimal_penalty_dynamic, penalty_aggregation_check)
from .errors import (InsufficientNonVacuousPairs, NotMeasurable, ParseError,
                     RiskTreeError, SpaceMismatch)
from .fileformat import load_model
from .fixtures import fixture_names, fixture_path
from .putpremium import MAX_DUAL_LEAVES, PutPremiumModel
from .static import (StaticRiskMeasure, check_static_axioms, conjugate_grid_oracle,
                     minimal_penalty_static, oracle_diverges)
from .timecons import (check_strong_tc, check_tc_implications, check_weak_star_tc,
                       check_weak_tc, random_battery)
from .tree import DEFAULT_TOL

EXIT_OK, EXIT_FAIL, EXIT_PARSE, EXIT_SPACE, EXIT_VACUOUS = 0, 1, 2, 3, 4
CHECKS = ("axioms", "regularity", "cocycle", "locality", "pasting", "strong", "weak",
          "weakstar", "theorem", "implications")


class UsageError(Exception):
    pass


def _default_tol():
    env = os.environ.get("RISKTREE_TOL")
    if env is None:
        return DEFAULT_TOL
    try:
        return float(env)
    except ValueError:
        raise UsageError(f"RISKTREE_TOL={env!r} is not a number") from None


def _parser():
    p = argparse.ArgumentParser(prog="risktree", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        src = sp.add_mutually_exclusive_group(required=True)
        src.add_argument("--model", type=Path, help="model file")
        src.add_argument("--fixture", choices=fixture_names(), help="shipped model")
        xs = sp.add_mutually_exclusive_group()
        xs.add_argument("--x", type=Path, help="file with one position per line")
        xs.add_argument("--x-inline", help="comma separated leaf values")
        sp.add_argument("--t", type=int, default=0)
        sp.add_argument("--u", type=int, default=None)
        sp.add_argument("--tol", type=float, default=None)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--format", choices=("table", "csv", "json"), default="table")

    e = sub.add_parser("eval", help="evaluate rho_{t,u}(X) per atom")
    common(e)
    c = sub.add_parser("check", help="run checker suites")
    common(c)
    c.add_argument("checks", nargs="+", choices=CHECKS + ("all",))
    c.add_argument("--battery", type=int, default=100, help="random battery size")
    c.add_argument("--expect-fail", action="store_true",
                   help="exit 0 only if some selected check fails")
    c.add_argument("--jobs", type=int, default=1)
    c.add_argument("--min-pairs", type=int, default=None,
                   help="floor on non-vacuous pairs for weak checks")
    j = sub.add_parser("conjugate", help="minimal penalty values")
    common(j)
    j.add_argument("--mu", type=Path, help="file with raw leaf weights")
    j.add_argument("--mu-inline", help="comma separated raw leaf weights")
    j.add_argument("--pair", action="append", help="pair name or index (dynamic)")
    j.add_argument("--oracle", action="store_true")
    j.add_argument("--box", type=float, default=10.0)
    j.add_argument("--grid", type=int, default=21)
    return p


def _vectors(text: str, where: str) -> np.ndarray:
    rows = []
    for i, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].replace(",", " ").strip()
        if not line:
            continue
        try:
            rows.append([float(v) for v in line.split()])
        except ValueError:
            raise ParseError(f"bad number in {line!r}", i, where) from None
    if not rows or len({len(r) for r in rows}) != 1:
        raise ParseError("positions must be non-empty rows of equal length", None, where)
    return np.array(rows)


def _load(args):
    if args.model is not None:
        return load_model(args.model)
    return load_model(fixture_path(args.fixture))


def _positions(args, space):
    if args.x is not None:
        X = _vectors(args.x.read_text(), str(args.x))
    elif args.x_inline is not None:
        X = _vectors(args.x_inline, "--x-inline")
    else:
        return None
    if X.shape[1] != space.n_leaves:
        raise SpaceMismatch(f"position has {X.shape[1]} entries, tree has "
                            f"{space.n_leaves} leaves")
    return X


def _emit(text):
    sys.stdout.write(text)
    if not text.endswith("\n"):
        sys.stdout.write("\n")


def _fmtv(v):
    return "+inf" if np.isinf(v) else repr(float(v))


# -- eval ------------------------------------------------------------------

def cmd_eval(args) -> int:
    lm = _load(args)
    X = _positions(args, lm.space)
    if X is None:
        raise UsageError("eval needs --x or --x-inline")
    sp = lm.space
    rows = []
    if isinstance(lm.model, StaticRiskMeasure):
        for k, x in enumerate(X):
            rows.append({"id": k, "t": 0, "u": sp.T, "atom": 0,
                         "value": float(lm.model(x)) + 0.0})
    elif isinstance(lm.model, RiskModel):
        u = sp.T if args.u is None else args.u
        for k, x in enumerate(X):
            vals = sp.node_values(lm.model.rho(x, args.t, u), args.t)
            rows.extend({"id": k, "t": args.t, "u": u, "atom": a, "value": float(v) + 0.0}
                        for a, v in enumerate(vals))
    else:
        raise UsageError("a bare tree has nothing to evaluate")
    if args.format == "json":
        _emit(json.dumps({"schema": "risktree.eval/1", "rows": rows}, indent=2))
    elif args.format == "csv":
        _emit("id,t,u,atom,value\n" + "".join(
            f"{r['id']},{r['t']},{r['u']},{r['atom']},{_fmtv(r['value'])}\n" for r in rows))
    else:
        _emit("".join(f"X[{r['id']}] rho_{{{r['t']},{r['u']}}} atom {r['atom']}: "
                      f"{r['value']:.12g}\n" for r in rows))
    return EXIT_OK


# -- check -----------------------------------------------------------------

def _dual(model, check):
    if isinstance(model, DualModel):
        return model
    if isinstance(model, PutPremiumModel) and model.space.n_leaves <= MAX_DUAL_LEAVES:
        return model.to_dual()
    raise UsageError(f"check '{check}' needs a dual model")


def _regularity_battery(space, B, rng):
    out = []
    for k in range(len(B)):
        t = int(rng.integers(space.T + 1))
        atoms = np.flatnonzero(rng.integers(2, size=space.n_atoms(t)))
        out.append((B[k], B[(k + 1) % len(B)], space.event(t, atoms), t))
    return out


def _run_check(name, model, B, args, tol):
    sp = model.space
    rng = np.random.default_rng([args.seed, CHECKS.index(name)])
    if isinstance(model, StaticRiskMeasure):
        if name != "axioms":
            raise UsageError(f"check '{name}' is not defined for static dictionaries")
        return [check_static_axioms(model, sp, B, tol=min(tol, 1e-12), name="axioms")]
    if name == "axioms":
        return [check_dynamic_axioms(model, B, seed=args.seed, tol=min(tol, 1e-12))]
    if name == "regularity":
        return [check_regularity(model, _regularity_battery(sp, B, rng), tol=tol)]
    if name == "cocycle":
        return [check_cocycle(_dual(model, name), tol=tol)]
    if name == "locality":
        return [check_locality(_dual(model, name), tol=tol)]
    if name == "pasting":
        m = _dual(model, name)
        return [check_positivity(m), check_pasting_closure(m),
                check_bifurcation_closure(m), check_discount_bifurcation(m),
                check_joint_pasting(m)]
    if name == "strong":
        return [check_strong_tc(model, B, tol=tol)]
    if name == "weak":
        floor = 100 if args.min_pairs is None else args.min_pairs
        return [check_weak_tc(model, battery=B, seed=args.seed, min_nonvacuous=floor)]
    if name == "weakstar":
        floor = 20 if args.min_pairs is None else args.min_pairs
        return [check_weak_star_tc(model, battery=B, seed=args.seed, min_nonvacuous=floor)]
    if name == "theorem":
        sm = StructuredModel(_dual(model, name))
        return [verify_theorem_tc(sm, B, tol=tol, raise_on_precondition=False)]
    if name == "implications":
        return [check_tc_implications(model, B, seed=args.seed, tol=tol)]
    raise UsageError(f"unknown check {name!r}")  # pragma: no cover


def cmd_check(args) -> int:
    lm = _load(args)
    if lm.model is None:
        raise UsageError("a bare tree has nothing to check")
    tol = args.tol if args.tol is not None else _default_tol()
    sp = lm.space
    B = _positions(args, sp)
    if B is None:
        B = random_battery(sp, args.battery, np.random.default_rng(args.seed))
    names = list(CHECKS) if "all" in args.checks else list(dict.fromkeys(args.checks))
    if isinstance(lm.model, StaticRiskMeasure) and "all" in args.checks:
        names = ["axioms"]
    jobs = max(1, args.jobs)
    if jobs == 1:
        results = [_run_check(n, lm.model, B, args, tol) for n in names]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(lambda n: _run_check(n, lm.model, B, args, tol), names))
    reports = [r for rs in results for r in rs]
    if args.format == "json":
        _emit(rpt.to_json(reports))
    elif args.format == "csv":
        _emit(rpt.to_csv(reports))
    else:
        _emit(rpt.to_table(reports))
    failed = any(not r.passed for r in reports)
    if args.expect_fail:
        return EXIT_OK if failed else EXIT_FAIL
    return EXIT_FAIL if failed else EXIT_OK


# -- conjugate -------------------------------------------------------------

def _pair_ids(model: DualModel, wanted):
    if not wanted:
        return list(range(model.n_pairs))
    out = []
    for w in wanted:
        if w in model.names:
            out.append(model.names.index(w))
        elif w.isdigit() and int(w) < model.n_pairs:
            out.append(int(w))
        else:
            raise UsageError(f"unknown pair {w!r}")
    return out


def cmd_conjugate(args) -> int:
    lm = _load(args)
    sp = lm.space
    rows = []
    if isinstance(lm.model, StaticRiskMeasure):
        if args.mu is not None:
            mus = _vectors(args.mu.read_text(), str(args.mu))
        elif args.mu_inline is not None:
            mus = _vectors(args.mu_inline, "--mu-inline")
        else:
            mus = lm.model.dictionary.measures
        if mus.shape[1] != sp.n_leaves:
            raise SpaceMismatch(f"measure has {mus.shape[1]} entries, tree has "
                                f"{sp.n_leaves} leaves")
        step = 2 * args.box / (args.grid - 1)
        for k, mu in enumerate(mus):
            row = {"id": k, "atom": 0, "penalty": minimal_penalty_static(lm.model, mu)}
            if args.oracle:
                if np.isfinite(row["penalty"]):
                    o = conjugate_grid_oracle(lm.model, mu, args.box, args.grid,
                                              seed=args.seed)
                    row.update(oracle=o, discrepancy=abs(row["penalty"] - o),
                               bound=2 * step)
                else:
                    div, vals = oracle_diverges(lm.model, mu, args.grid, seed=args.seed)
                    row.update(oracle=vals[-1], oracle_boxes=vals, divergent=div)
            rows.append(row)
    elif isinstance(lm.model, (DualModel, PutPremiumModel)):
        model = _dual(lm.model, "conjugate")
        u = sp.T if args.u is None else args.u
        for i in _pair_ids(model, args.pair):
            vals = sp.node_values(minimal_penalty_dynamic(model, i, args.t, u), args.t)
            extra = {}
            if args.oracle:
                v = penalty_aggregation_check(model, i, args.t, u)
                extra = {"aggregate_lhs": v.lhs, "aggregate_rhs": v.rhs,
                         "discrepancy": v.gap}
            for a, v in enumerate(vals):
                rows.append({"id": i, "pair": model.names[i], "t": args.t, "u": u,
                             "atom": a, "penalty": float(v), **extra})
    else:
        raise UsageError("a bare tree has no conjugate")

    if args.format == "json":
        _emit(json.dumps({"schema": "risktree.conjugate/1", "rows": rpt._plain(rows)},
                         indent=2, sort_keys=True))
    elif args.format == "csv":
        keys = sorted({k for r in rows for k in r if not isinstance(r[k], list)})
        lines = [",".join(keys)]
        for r in rows:
            lines.append(",".join(_fmtv(r[k]) if isinstance(r.get(k), float)
                                  else str(r.get(k, "")) for k in keys))
        _emit("\n".join(lines))
    else:
        out = []
        for r in rows:
            head = f"[{r['id']}]" + (f" {r['pair']} atom {r['atom']}" if "pair" in r else "")
            line = f"{head} minimal penalty {_fmtv(r['penalty'])}"
            if "discrepancy" in r and "oracle" in r:
                line += (f"  oracle {r['oracle']:.9g}  discrepancy {r['discrepancy']:.3e}"
                         f"  (bound {r['bound']:.3g})")
            elif "divergent" in r:
                line += "  oracle " + " ".join(f"{v:.6g}" for v in r["oracle_boxes"]) + \
                        ("  divergent" if r["divergent"] else "  bounded")
            elif "aggregate_rhs" in r:
                line += (f"  E_P[penalty] {_fmtv(r['aggregate_lhs'])}"
                         f"  aggregated {_fmtv(r['aggregate_rhs'])}")
            out.append(line)
        _emit("\n".join(out))
    return EXIT_OK


def main(argv=None) -> int:
    parser = _parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    # inline vectors often start with '-', which argparse would take for a flag
    for k in range(len(argv) - 2, -1, -1):
        if argv[k] in ("--x-inline", "--mu-inline"):
            argv[k:k + 2] = [f"{argv[k]}={argv[k + 1]}"]
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARSE if exc.code else EXIT_OK
    handler = {"eval": cmd_eval, "check": cmd_check, "conjugate": cmd_conjugate}[args.command]
    try:
        return handler(args)
    except ParseError as exc:
        print(f"risktree: parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (SpaceMismatch, NotMeasurable) as exc:
        print(f"risktree: input does not fit the tree: {exc}", file=sys.stderr)
        return EXIT_SPACE
    except InsufficientNonVacuousPairs as exc:
        print(f"risktree: {exc}", file=sys.stderr)
        return EXIT_VACUOUS
    except (UsageError, FileNotFoundError) as exc:
        print(f"risktree: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except RiskTreeError as exc:
        print(f"risktree: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
