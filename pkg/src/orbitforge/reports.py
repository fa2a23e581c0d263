"""Verification reports: named checks with measured values and violation lists."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np

MAX_LISTED_VIOLATIONS = 25


def _plain(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    return v


@dataclass
class Check:
    name: str
    passed: bool
    violations: list = field(default_factory=list)
    values: dict = field(default_factory=dict)
    heuristic: bool = False
    note: str = ""

    @property
    def violation_count(self) -> int:
        return int(self.values.get("violation_count", len(self.violations)))

    def to_dict(self) -> dict[str, Any]:
        out = {
            "name": self.name,
            "passed": bool(self.passed),
            "violation_count": self.violation_count,
            "values": _plain(self.values),
            "violations": _plain(self.violations[:MAX_LISTED_VIOLATIONS]),
        }
        if self.heuristic:
            out["heuristic"] = True
        if self.note:
            out["note"] = self.note
        return out


def check_from_violations(name: str, violations: list, **values) -> Check:
    values.setdefault("violation_count", len(violations))
    return Check(name=name, passed=len(violations) == 0, violations=violations, values=values)


@dataclass
class Report:
    subject: str
    checks: list = field(default_factory=list)

    def add(self, check: Check) -> Check:
        self.checks.append(check)
        return check

    def extend(self, other: "Report") -> None:
        self.checks.extend(other.checks)

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def violations(self) -> list:
        return [v for c in self.checks if not c.passed for v in c.violations]

    @property
    def violation_count(self) -> int:
        return sum(c.violation_count for c in self.checks if not c.passed)

    def to_dict(self) -> dict[str, Any]:
        return {
            "subject": self.subject,
            "passed": self.passed,
            "violation_count": self.violation_count,
            "checks": [c.to_dict() for c in self.checks],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"
