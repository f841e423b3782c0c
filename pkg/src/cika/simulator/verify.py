"""Final-answer extraction and comparison.

The last ``\\boxed{...}`` in a completion is the answer.  Two verdicts are
produced: *strict* (exact string equality after trimming) and *normalized*
(the one that counts).  Normalization trims, unwraps ``\\text{}`` and
``\\mathrm{}``, drops ``$`` delimiters and thin-space macros, collapses
whitespace and a trailing period.  If both sides then parse as exact
rationals they are compared numerically at 1e-9 relative tolerance,
otherwise as strings.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction

_BOXED = re.compile(r"\\(?:boxed|fbox)\s*\{")
_WRAPPERS = re.compile(r"\\(?:text|mathrm|textbf|mbox)\s*\{([^{}]*)\}")
_SPACING = re.compile(r"\\[,;!:]|\\quad|\\qquad|~")
_FRAC = re.compile(r"^(-?)\\[dt]?frac\s*\{\s*([^{}]+?)\s*\}\s*\{\s*([^{}]+?)\s*\}$")
_NUMBER = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")
REL_TOL = 1e-9


def extract_boxed(text: str) -> str | None:
    """Contents of the last ``\\boxed{...}``, braces balanced; None if absent."""
    last = None
    for match in _BOXED.finditer(text):
        depth, start = 1, match.end()
        i = start
        while i < len(text) and depth:
            if text[i] == "{":
                depth += 1
            elif text[i] == "}":
                depth -= 1
            i += 1
        if depth == 0:
            last = text[start:i - 1]
    return last


def normalize(answer: str) -> str:
    s = answer.strip()
    prev = None
    while prev != s:
        prev = s
        s = _WRAPPERS.sub(r"\1", s)
    s = s.replace("$", "")
    s = _SPACING.sub(" ", s)
    s = re.sub(r"\s+", " ", s).strip()
    if s.endswith("."):
        s = s[:-1].rstrip()
    return s


def parse_rational(s: str) -> Fraction | None:
    s = s.replace(" ", "")
    if not s:
        return None
    m = _FRAC.match(s)
    if m:
        num, den = parse_rational(m.group(2)), parse_rational(m.group(3))
        if num is None or den is None or den == 0:
            return None
        value = num / den
        return -value if m.group(1) else value
    if s.count("/") == 1:
        num, den = (parse_rational(part) for part in s.split("/"))
        if num is None or den is None or den == 0:
            return None
        return num / den
    if _NUMBER.match(s):
        return Fraction(s)
    return None


def answers_match(a: str, b: str) -> bool:
    na, nb = normalize(a), normalize(b)
    ra, rb = parse_rational(na), parse_rational(nb)
    if ra is not None and rb is not None:
        if ra == rb:
            return True
        return abs(ra - rb) <= REL_TOL * max(abs(ra), abs(rb))
    return na == nb


@dataclass(frozen=True)
class Verdict:
    extracted: str | None
    strict: int
    normalized: int


def verify(completion: str, gold: str) -> Verdict:
    answer = extract_boxed(completion)
    if answer is None:
        return Verdict(None, 0, 0)
    return Verdict(answer, int(answer.strip() == gold.strip()), int(answers_match(answer, gold)))
