"""Certificate outcomes shared by the verifier, kernel and moving-plane checks."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .errors import ContractError

VERDICTS = ("pass", "pass-strict", "pass-zero", "fail", "hypothesis-failure")
EXIT_CODES = {"pass": 0, "pass-strict": 0, "pass-zero": 0, "fail": 1, "hypothesis-failure": 2}


@dataclass
class CheckReport:
    verdict: str
    witness: tuple | None = None
    margin: float = 0.0
    notes: str = ""
    data: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.verdict not in VERDICTS:
            raise ContractError(f"unknown verdict {self.verdict!r}")
        if self.verdict == "fail" and self.witness is None:
            raise ContractError("a failing report must carry a witness")
        if self.witness is not None:
            self.witness = tuple(float(v) for v in self.witness)
        self.margin = float(self.margin)

    @property
    def passed(self):
        return self.verdict.startswith("pass")

    @property
    def exit_code(self):
        return EXIT_CODES[self.verdict]

    @classmethod
    def hypothesis_failure(cls, clause, detail="", witness=None, **data):
        note = f"hypothesis failed: {clause}" + (f" ({detail})" if detail else "")
        return cls("hypothesis-failure", witness, 0.0, note, dict(clause=clause, **data))

    @property
    def clause(self):
        return self.data.get("clause")

    def to_dict(self):
        margin = self.margin if math.isfinite(self.margin) else None
        return {
            "verdict": self.verdict,
            "witness": list(self.witness) if self.witness is not None else None,
            "margin": margin,
            "notes": self.notes,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)
