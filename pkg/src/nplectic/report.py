"""Check results and deterministic report rendering."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

SCHEMA_VERSION = 1


@dataclass
class Check:
    """One verified statement.

    ``kind`` is ``"max"`` when the residual must stay at or below the
    threshold, ``"min"`` for fault-injection checks whose residual must reach
    it, and ``"expect"`` for outcomes compared against a declared expectation
    (``passed`` is then supplied by the caller).
    """

    id: str
    anchor: str
    residual: float
    threshold: float
    samples: int
    seed: int
    kind: str = "max"
    passed: bool | None = None
    detail: dict = field(default_factory=dict)

    def __post_init__(self):
        self.residual = float(self.residual)
        self.detail = {k: float(v) if isinstance(v, (int, float)) and not isinstance(v, bool) else v
                       for k, v in self.detail.items()}
        if self.passed is None:
            if not math.isfinite(self.residual):
                self.passed = False
            elif self.kind == "min":
                self.passed = self.residual >= self.threshold
            else:
                self.passed = self.residual <= self.threshold

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"

    def as_dict(self) -> dict:
        out = {
            "id": self.id,
            "anchor": self.anchor,
            "max_residual": self.residual,
            "threshold": self.threshold,
            "kind": self.kind,
            "verdict": self.verdict,
            "samples": self.samples,
            "seed": self.seed,
        }
        if self.detail:
            out["detail"] = self.detail
        return out


@dataclass
class Report:
    model: str
    suite: str
    checks: list = field(default_factory=list)
    seed: int = 0
    samples: int = 0
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"

    def extend(self, other: "Report") -> None:
        self.checks.extend(other.checks)
        self.notes.extend(other.notes)

    def max_residual(self) -> float:
        return max((c.residual for c in self.checks if c.kind == "max"), default=0.0)

    def as_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "model": self.model,
            "suite": self.suite,
            "seed": self.seed,
            "samples": self.samples,
            "checks": [c.as_dict() for c in self.checks],
            "verdict": self.verdict,
            "notes": list(self.notes),
        }


def dumps(obj: Any, indent: int = 2) -> str:
    """JSON with sorted keys and floats printed to 17 significant digits."""
    return _emit(obj, indent, 0) + "\n"


def _emit(obj: Any, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        if math.isnan(obj):
            return '"nan"'
        if math.isinf(obj):
            return '"inf"' if obj > 0 else '"-inf"'
        return format(obj, ".17g")
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_emit(obj[k], indent, level + 1)}" for k in sorted(obj)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [pad + _emit(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if hasattr(obj, "item"):
        return _emit(obj.item(), indent, level)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def render_text(reports: list) -> str:
    lines = []
    for rep in reports:
        lines.append(f"== {rep.model} [{rep.suite}] seed={rep.seed} samples={rep.samples}")
        for c in rep.checks:
            rel = ">=" if c.kind == "min" else "<="
            lines.append(
                f"  {c.verdict.upper():4}  {c.id:<34} {c.residual:.3e} {rel} {c.threshold:.1e}  ({c.anchor})"
            )
        for note in rep.notes:
            lines.append(f"  note: {note}")
        lines.append(f"  overall: {rep.verdict}")
    overall = "pass" if all(r.passed for r in reports) else "fail"
    lines.append(f"VERDICT: {overall}")
    return "\n".join(lines) + "\n"


def render_json(reports: list) -> str:
    overall = "pass" if all(r.passed for r in reports) else "fail"
    return dumps({"schema": SCHEMA_VERSION, "reports": [r.as_dict() for r in reports], "verdict": overall})
