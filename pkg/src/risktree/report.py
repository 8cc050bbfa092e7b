"""Check reports: per-scope verdicts, worst violations and witnesses."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np

SCHEMA = "risktree.report/1"


def _plain(obj):
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if np.isinf(v):
            return "+inf" if v > 0 else "-inf"
        if np.isnan(v):
            return "nan"
        return v
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


@dataclass
class ReportItem:
    scope: str
    violation: float
    passed: bool
    witness: dict = field(default_factory=dict)
    vacuous: bool = False
    informational: bool = False

    def to_dict(self):
        return _plain({"scope": self.scope, "violation": self.violation,
                       "passed": self.passed, "vacuous": self.vacuous,
                       "informational": self.informational,
                       "witness": self.witness})


@dataclass
class ConsistencyReport:
    check: str
    tol: float
    items: list = field(default_factory=list)
    info: dict = field(default_factory=dict)

    def add(self, scope, violation, witness=None, *, tol=None, vacuous=False,
            informational=False) -> ReportItem:
        tol = self.tol if tol is None else tol
        violation = float(violation)
        passed = vacuous or not (violation > tol)
        item = ReportItem(str(scope), violation, passed, witness or {},
                          vacuous, informational)
        self.items.append(item)
        return item

    @property
    def required(self):
        return [i for i in self.items if not i.informational and not i.vacuous]

    @property
    def passed(self) -> bool:
        return all(i.passed for i in self.required)

    @property
    def worst(self) -> float:
        vals = [i.violation for i in self.required]
        return max(vals) if vals else 0.0

    @property
    def worst_item(self) -> ReportItem | None:
        req = self.required
        if not req:
            return None
        return max(req, key=lambda i: i.violation)

    @property
    def witness(self) -> dict:
        item = self.worst_item
        return item.witness if item else {}

    def item(self, scope) -> ReportItem:
        for i in self.items:
            if i.scope == str(scope):
                return i
        raise KeyError(scope)

    def merge(self, other: "ConsistencyReport") -> "ConsistencyReport":
        """Union of two reports for the same check (order independent)."""
        if other.check != self.check:
            raise ValueError("can only merge reports of the same check")
        out = ConsistencyReport(self.check, max(self.tol, other.tol),
                                self.items + other.items,
                                {**self.info, **other.info})
        out.items.sort(key=lambda i: i.scope)
        return out

    def summary(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"{self.check}: {verdict} (worst violation {self.worst:.3e})"

    def to_dict(self) -> dict[str, Any]:
        return _plain({"check": self.check, "tol": self.tol,
                       "passed": self.passed, "worst_violation": self.worst,
                       "info": self.info,
                       "items": [i.to_dict() for i in self.items]})


def canonical(reports):
    return sorted(reports, key=lambda r: r.check)


def to_json(reports) -> str:
    doc = {"schema": SCHEMA, "reports": [r.to_dict() for r in canonical(reports)]}
    return json.dumps(doc, indent=2, sort_keys=True)


def to_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["check", "scope", "witness_id", "violation", "passed",
                "vacuous", "informational"])
    for r in canonical(reports):
        for it in sorted(r.items, key=lambda i: i.scope):
            wid = it.witness.get("id", "")
            w.writerow([r.check, it.scope, wid, repr(float(it.violation)),
                        int(it.passed), int(it.vacuous), int(it.informational)])
    return buf.getvalue()


def to_table(reports) -> str:
    lines = []
    for r in canonical(reports):
        lines.append(r.summary())
        for it in sorted(r.items, key=lambda i: i.scope):
            flag = "ok" if it.passed else "FAIL"
            if it.vacuous:
                flag = "vacuous"
            elif it.informational:
                flag = "info:" + ("holds" if not it.violation > r.tol else "fails")
            lines.append(f"  {it.scope:<32} {it.violation:>12.4e}  {flag}")
    return "\n".join(lines) + "\n"
