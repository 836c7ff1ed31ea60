"""Deterministic report serialization for the command-line front end.

Reports are emitted as JSON with a fixed key order and 17-significant-
digit float formatting, and tabular output as CSV with the same float
format.  No clocks, hostnames, or other environment-dependent data are
recorded, so a report is byte-stable across reruns of the same
configuration.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

SPEC_VERSION = "1.0"


def format_float(x):
    """17-significant-digit decimal text for a float; stable tokens for
    non-finite values."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _json_scalar(obj):
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x) or math.isinf(x):
            return json.dumps(format_float(x))
        return format_float(x)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent=0):
    """Serialize nested dict/list/scalar data to JSON text.

    Insertion order of dict keys is preserved; floats go through
    :func:`format_float`.
    """
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        parts = [f"{inner}{json.dumps(str(k))}: {dumps(v, indent + 1)}"
                 for k, v in obj.items()]
        return "{\n" + ",\n".join(parts) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        parts = [f"{inner}{dumps(v, indent + 1)}" for v in seq]
        return "[\n" + ",\n".join(parts) + "\n" + pad + "]"
    return _json_scalar(obj)


@dataclass
class CheckResult:
    """One named residual check against its tolerance."""

    name: str
    max_residual: float
    tolerance: float

    @property
    def passed(self):
        x = float(self.max_residual)
        return math.isfinite(x) and x <= float(self.tolerance)

    def as_dict(self):
        return {
            "name": self.name,
            "max_residual": float(self.max_residual),
            "tolerance": float(self.tolerance),
            "pass": self.passed,
        }


@dataclass
class ResidualReport:
    """Machine-readable result of one CLI run."""

    command: str
    model: Optional[str] = None
    params: dict = field(default_factory=dict)
    seed: Optional[int] = None
    checks: List[CheckResult] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)

    def add_check(self, name, max_residual, tolerance):
        check = CheckResult(name=name, max_residual=float(max_residual),
                            tolerance=float(tolerance))
        self.checks.append(check)
        return check

    def add_note(self, text):
        self.notes.append(str(text))

    @property
    def all_pass(self):
        return all(c.passed for c in self.checks)

    def as_dict(self):
        params = {}
        for k, v in self.params.items():
            if isinstance(v, (list, tuple, np.ndarray)):
                params[k] = [float(x) for x in v]
            elif isinstance(v, str):
                params[k] = v
            else:
                params[k] = float(v)
        return {
            "spec_version": SPEC_VERSION,
            "command": self.command,
            "model": self.model,
            "params": params,
            "seed": self.seed,
            "checks": [c.as_dict() for c in self.checks],
            "notes": list(self.notes),
        }

    def to_json(self):
        return dumps(self.as_dict()) + "\n"


def _csv_cell(value):
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format_float(value)


def csv_text(header, rows):
    """CSV text with a header row and 17-significant-digit floats."""
    lines = [",".join(str(h) for h in header)]
    for row in rows:
        lines.append(",".join(_csv_cell(v) for v in row))
    return "\n".join(lines) + "\n"


def write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
