"""Uniform result record for property and inequality verifications."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Mapping


@dataclass
class CheckReport:
    """Outcome of one verified property.

    ``margin`` is the worst signed slack observed (bound minus value for an
    upper bound, value minus bound for a lower bound): a check fails exactly
    when ``margin < -tolerance``.
    """

    check_id: str
    passed: bool
    margin: float
    tolerance: float
    samples: int
    provenance: str = ""
    details: Mapping[str, Any] = field(default_factory=dict)

    @classmethod
    def from_margin(
        cls,
        check_id: str,
        margin: float,
        tolerance: float,
        samples: int,
        provenance: str = "",
        **details: Any,
    ) -> "CheckReport":
        return cls(
            check_id=check_id,
            passed=bool(margin >= -tolerance),
            margin=float(margin),
            tolerance=float(tolerance),
            samples=int(samples),
            provenance=provenance,
            details=details,
        )

    def to_json(self) -> str:
        payload = {
            "check_id": self.check_id,
            "passed": self.passed,
            "margin": self.margin,
            "tolerance": self.tolerance,
            "samples": self.samples,
            "provenance": self.provenance,
            "details": _plain(self.details),
        }
        return json.dumps(payload, sort_keys=True)


def _plain(obj: Any) -> Any:
    if isinstance(obj, Mapping):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if hasattr(obj, "item"):
        return obj.item()
    return obj
