"""Structured verification reports."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np


def _plain(v: Any) -> Any:
    if isinstance(v, (np.floating, float)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, np.ndarray):
        return _plain(v.tolist())
    if isinstance(v, complex):
        return [v.real, v.imag]
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    return v


@dataclass
class CheckRecord:
    name: str
    passed: bool
    measured: Any = None
    tolerance: Any = None
    details: Any = None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "pass": bool(self.passed),
            "measured": _plain(self.measured),
            "tolerance": _plain(self.tolerance),
            "details": _plain(self.details),
        }


@dataclass
class Report:
    """Ordered list of check records; passes iff every record passes."""

    title: str
    records: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def add(self, rec: CheckRecord) -> CheckRecord:
        self.records.append(rec)
        return rec

    def extend(self, other: "Report", prefix: str | None = None) -> None:
        for r in other.records:
            name = f"{prefix}.{r.name}" if prefix else r.name
            self.records.append(CheckRecord(name, r.passed, r.measured, r.tolerance, r.details))

    @property
    def ok(self) -> bool:
        return all(r.passed for r in self.records)

    def failures(self) -> list:
        return [r for r in self.records if not r.passed]

    def __getitem__(self, name: str) -> CheckRecord:
        for r in self.records:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "title": self.title,
            "status": "pass" if self.ok else "fail",
            "checks": [r.to_dict() for r in self.records],
            "provenance": _plain(self.provenance),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def content_hash(obj: Any) -> str:
    """SHA-256 of the canonical JSON form of ``obj``."""
    text = json.dumps(_plain(obj), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()
