"""Chat prompt templates for the endpoint simulator (template version v1).

The intervention prompt is a wire contract: tests compare emitted request
bodies byte for byte, so any change here must bump ``TEMPLATE_VERSION``.
"""

from __future__ import annotations

import json
import re
from typing import Sequence

from .base import ConceptDiagnosis, Level

TEMPLATE_VERSION = "v1"
SYSTEM_MESSAGE = "You are an expert mathematician."
SOLVE_LINE = "Solve the problem. Put the final answer in \\boxed{}."


def _messages(user: str) -> list[dict[str, str]]:
    return [{"role": "system", "content": SYSTEM_MESSAGE}, {"role": "user", "content": user}]


def baseline_messages(statement: str) -> list[dict[str, str]]:
    return _messages(f"{statement}\n\n{SOLVE_LINE}")


def intervention_messages(statement: str, concepts: Sequence[str]) -> list[dict[str, str]]:
    assumptions = "".join(f"Assume mastery of {c}.\n" for c in concepts)
    return _messages(f"{statement}\n\n{assumptions}{SOLVE_LINE}")


def lens_messages(statement: str, lens: str) -> list[dict[str, str]]:
    return _messages(f"{statement}\n\nApproach the problem using this perspective: {lens}.\n{SOLVE_LINE}")


def diagnostic_messages(statement: str, failed_answer: str) -> list[dict[str, str]]:
    user = (
        f"{statement}\n\n"
        f"A previous attempt gave this incorrect answer:\n{failed_answer}\n\n"
        "List the mathematical concepts needed to solve the problem and rate how well the previous "
        "attempt understood each one. Write one concept per line in the form\n"
        "<concept>: <HIGH|MEDIUM|LOW>"
    )
    return _messages(user)


def request_body(model: str, messages: list[dict[str, str]], temperature: float, max_tokens: int,
                 seed: int | None = None) -> bytes:
    """Canonical JSON body: fixed key order, compact separators, UTF-8."""
    doc: dict = {"model": model, "messages": messages, "temperature": temperature, "max_tokens": max_tokens}
    if seed is not None:
        doc["seed"] = seed
    return json.dumps(doc, ensure_ascii=False, separators=(",", ":")).encode("utf-8")


_DIAG_LINE = re.compile(r"^\s*(?:[-*•]|\d+[.)])?\s*(.+?)\s*[:–—-]\s*\**\s*(HIGH|MEDIUM|LOW)\b", re.IGNORECASE)


def parse_diagnosis(text: str) -> list[ConceptDiagnosis]:
    out = []
    seen = set()
    for line in text.splitlines():
        m = _DIAG_LINE.match(line)
        if not m:
            continue
        concept = m.group(1).strip().strip("*`\"'").strip()
        if concept and concept not in seen:
            seen.add(concept)
            out.append(ConceptDiagnosis(concept, Level(m.group(2).upper())))
    return out
