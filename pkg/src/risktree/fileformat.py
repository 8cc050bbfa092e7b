"""Line-based text format for trees, static dictionaries and dynamic models.

Grammar (one directive per line, ``#`` starts a comment)::

    risktree-model 1
    kind tree | static | dual | put-premium
    horizon T
    branching k1 k2 ...          # children per non-leaf node, depth-first
    weights p1 p2 ...            # one per leaf, depth-first
    normalize check | off | shift
    # kind static
    entry a c q1 ... qL          # c may be inf / +inf
    # kind dual
    pair NAME
    measure q1 ... qL
    discount t u v1 ... vn       # one value per atom of time t
    penalty t u v1 ... vn        # inf allowed
    end
    # kind put-premium
    gamma t v1 ... vn

Unlisted discounts default to 1 and unlisted penalties to 0.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dynamic import DualModel, RiskModel
from .errors import ParseError, RiskTreeError
from .putpremium import PutPremiumModel
from .static import DualDictionary, StaticRiskMeasure
from .tree import FilteredSpace, TreeSpec, build_tree

MAGIC = "risktree-model"
VERSION = 1
KINDS = ("tree", "static", "dual", "put-premium")


@dataclass
class LoadedModel:
    kind: str
    space: FilteredSpace
    model: object = None
    meta: dict = field(default_factory=dict)


def _num(tok, lineno, path):
    t = tok.lower()
    if t in ("inf", "+inf"):
        return np.inf
    try:
        v = float(tok)
    except ValueError:
        raise ParseError(f"expected a number, got {tok!r}", lineno, path) from None
    if np.isnan(v) or v == -np.inf:
        raise ParseError(f"invalid number {tok!r}", lineno, path)
    return v


def _int(tok, lineno, path):
    try:
        return int(tok)
    except ValueError:
        raise ParseError(f"expected an integer, got {tok!r}", lineno, path) from None


def _fmt(v) -> str:
    v = float(v)
    if np.isinf(v):
        return "inf"
    return repr(v)


def parse_model(text: str, path=None) -> LoadedModel:
    lines = []
    for i, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if body:
            lines.append((i, body.split()))
    if not lines or lines[0][1][0] != MAGIC:
        raise ParseError(f"missing '{MAGIC} {VERSION}' header", lines[0][0] if lines else 1, path)
    if len(lines[0][1]) != 2 or _int(lines[0][1][1], lines[0][0], path) != VERSION:
        raise ParseError("unsupported format version", lines[0][0], path)

    kind, horizon, branching, weights, normalize = None, None, None, None, "check"
    entries, pairs, gamma = [], [], {}
    current = None
    seen_line = {}
    for lineno, toks in lines[1:]:
        key, args = toks[0], toks[1:]
        if current is not None and key not in ("measure", "discount", "penalty", "end"):
            raise ParseError(f"'{key}' inside pair block (missing 'end'?)", lineno, path)
        if key == "kind":
            if len(args) != 1 or args[0] not in KINDS:
                raise ParseError(f"kind must be one of {', '.join(KINDS)}", lineno, path)
            kind = args[0]
        elif key == "horizon":
            if len(args) != 1:
                raise ParseError("horizon takes one integer", lineno, path)
            horizon = _int(args[0], lineno, path)
        elif key == "branching":
            branching = [_int(a, lineno, path) for a in args]
            seen_line["branching"] = lineno
        elif key == "weights":
            weights = [_num(a, lineno, path) for a in args]
            seen_line["weights"] = lineno
        elif key == "normalize":
            if len(args) != 1 or args[0] not in ("check", "off", "shift"):
                raise ParseError("normalize must be check, off or shift", lineno, path)
            normalize = args[0]
        elif key == "entry":
            if len(args) < 3:
                raise ParseError("entry needs a, c and leaf weights", lineno, path)
            entries.append((lineno, [_num(a, lineno, path) for a in args]))
        elif key == "pair":
            if len(args) != 1:
                raise ParseError("pair takes one name", lineno, path)
            current = {"name": args[0], "line": lineno, "measure": None,
                       "discount": {}, "penalty": {}}
        elif key in ("measure", "discount", "penalty"):
            if current is None:
                raise ParseError(f"'{key}' outside a pair block", lineno, path)
            if key == "measure":
                current["measure"] = (lineno, [_num(a, lineno, path) for a in args])
            else:
                if len(args) < 3:
                    raise ParseError(f"{key} needs t, u and atom values", lineno, path)
                t, u = _int(args[0], lineno, path), _int(args[1], lineno, path)
                current[key][(t, u)] = (lineno, [_num(a, lineno, path) for a in args[2:]])
        elif key == "end":
            if current is None:
                raise ParseError("'end' without 'pair'", lineno, path)
            pairs.append(current)
            current = None
        elif key == "gamma":
            if len(args) < 2:
                raise ParseError("gamma needs t and atom values", lineno, path)
            gamma[_int(args[0], lineno, path)] = (lineno, [_num(a, lineno, path)
                                                          for a in args[1:]])
        else:
            raise ParseError(f"unknown directive {key!r}", lineno, path)
    if current is not None:
        raise ParseError("unterminated pair block", current["line"], path)
    if kind is None:
        raise ParseError("missing 'kind'", None, path)
    if horizon is None or weights is None:
        raise ParseError("tree needs 'horizon' and 'weights'", None, path)
    try:
        space = build_tree(TreeSpec(horizon, tuple(branching or ()), tuple(weights)))
    except RiskTreeError as exc:
        raise ParseError(str(exc), seen_line.get("weights"), path) from exc

    L, T1 = space.n_leaves, space.T + 1
    if kind == "tree":
        return LoadedModel(kind, space)
    if kind == "static":
        if not entries:
            raise ParseError("static dictionary has no entries", None, path)
        a, c, Q = [], [], []
        for lineno, vals in entries:
            if len(vals) != L + 2:
                raise ParseError(f"entry has {len(vals) - 2} weights, tree has {L} leaves",
                                 lineno, path)
            a.append(vals[0])
            c.append(vals[1])
            Q.append(vals[2:])
        try:
            rm = StaticRiskMeasure(space, DualDictionary(np.array(a), np.array(Q), np.array(c)),
                                   normalize=normalize)
        except RiskTreeError as exc:
            raise ParseError(str(exc), entries[0][0], path) from exc
        except ValueError as exc:
            raise ParseError(str(exc), entries[0][0], path) from exc
        return LoadedModel(kind, space, rm, {"normalize": normalize})
    if kind == "put-premium":
        g = np.empty((T1, L))
        for t in range(T1):
            if t not in gamma:
                raise ParseError(f"missing gamma for time {t}", None, path)
            lineno, vals = gamma[t]
            if len(vals) != space.n_atoms(t):
                raise ParseError(f"gamma at time {t} needs {space.n_atoms(t)} values",
                                 lineno, path)
            g[t] = space.expand(np.array(vals), t)
        try:
            return LoadedModel(kind, space, PutPremiumModel(space, g))
        except RiskTreeError as exc:
            raise ParseError(str(exc), gamma[0][0], path) from exc
    # dual
    if not pairs:
        raise ParseError("dual model has no pairs", None, path)
    N = len(pairs)
    D = np.ones((N, T1, T1, L))
    c = np.zeros((N, T1, T1, L))
    Q = np.empty((N, L))
    for i, p in enumerate(pairs):
        if p["measure"] is None:
            raise ParseError(f"pair {p['name']} has no measure", p["line"], path)
        lineno, q = p["measure"]
        if len(q) != L:
            raise ParseError(f"measure has {len(q)} weights, tree has {L} leaves", lineno, path)
        Q[i] = q
        for key, arr in (("discount", D), ("penalty", c)):
            for (t, u), (lineno, vals) in p[key].items():
                if not 0 <= t <= u < T1:
                    raise ParseError(f"bad time pair ({t},{u})", lineno, path)
                if len(vals) != space.n_atoms(t):
                    raise ParseError(f"{key} ({t},{u}) needs {space.n_atoms(t)} values",
                                     lineno, path)
                arr[i, t, u] = space.expand(np.array(vals), t)
    try:
        model = DualModel(space, D, Q, c, normalize=normalize if normalize != "shift" else "off",
                          names=[p["name"] for p in pairs])
    except (RiskTreeError, ValueError) as exc:
        raise ParseError(str(exc), pairs[0]["line"], path) from exc
    return LoadedModel(kind, space, model, {"normalize": normalize})


def load_model(path) -> LoadedModel:
    path = Path(path)
    return parse_model(path.read_text(), str(path))


def _tree_lines(space: FilteredSpace):
    return [f"horizon {space.T}",
            "branching " + " ".join(str(b) for b in space.branching),
            "weights " + " ".join(_fmt(p) for p in space.P)]


def serialize_tree(space: FilteredSpace) -> str:
    return "\n".join([f"{MAGIC} {VERSION}", "kind tree", *_tree_lines(space)]) + "\n"


def serialize_model(obj, normalize: str | None = None) -> str:
    """Text form of a space, static measure, dual model or put-premium model."""
    if isinstance(obj, FilteredSpace):
        return serialize_tree(obj)
    space = obj.space
    out = [f"{MAGIC} {VERSION}"]
    if isinstance(obj, StaticRiskMeasure):
        d = obj.dictionary
        out += ["kind static", *_tree_lines(space), f"normalize {normalize or 'check'}"]
        for a, c, q in zip(d.a, d.c, d.Q):
            out.append(f"entry {_fmt(a)} {_fmt(c)} " + " ".join(_fmt(v) for v in q))
    elif isinstance(obj, PutPremiumModel):
        out += ["kind put-premium", *_tree_lines(space)]
        for t in space.times:
            out.append(f"gamma {t} " + " ".join(_fmt(v) for v in
                                               space.node_values(obj.gamma[t], t)))
    elif isinstance(obj, DualModel):
        out += ["kind dual", *_tree_lines(space),
                f"normalize {normalize or obj.normalize}"]
        for i, name in enumerate(obj.names):
            out.append(f"pair {name}")
            out.append("measure " + " ".join(_fmt(v) for v in obj.Q[i]))
            for t in space.times:
                for u in range(t, space.T + 1):
                    d = space.node_values(obj.D[i, t, u], t)
                    c = space.node_values(obj.c[i, t, u], t)
                    if t == u and np.all(d == 1) and np.all(c == 0):
                        continue
                    out.append(f"discount {t} {u} " + " ".join(_fmt(v) for v in d))
                    out.append(f"penalty {t} {u} " + " ".join(_fmt(v) for v in c))
            out.append("end")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")
    return "\n".join(out) + "\n"


def models_equal(a, b) -> bool:
    """Structural equality used by round-trip tests (t <= u slices only)."""
    if isinstance(a, FilteredSpace) or isinstance(b, FilteredSpace):
        return type(a) is type(b) and a == b
    if type(a) is not type(b) or a.space != b.space:
        return False
    if isinstance(a, StaticRiskMeasure):
        da, db = a.dictionary, b.dictionary
        return all(np.array_equal(x, y) for x, y in
                   ((da.a, db.a), (da.Q, db.Q), (da.c, db.c)))
    if isinstance(a, PutPremiumModel):
        return np.array_equal(a.gamma, b.gamma)
    if isinstance(a, DualModel):
        iu = np.triu_indices(a.space.T + 1)
        return (a.names == b.names and np.array_equal(a.Q, b.Q)
                and np.array_equal(a.D[:, iu[0], iu[1]], b.D[:, iu[0], iu[1]])
                and np.array_equal(a.c[:, iu[0], iu[1]], b.c[:, iu[0], iu[1]]))
    return isinstance(a, RiskModel) and a is b
