"""Tiny term language for building design matrices from named columns.

A term list is written ``"x1, x2, log(x3), x1*x3, x2^2"``: comma-separated
terms, each either a product of columns raised to integer powers or the log
of a single column (optionally shifted, ``log(x3+1.001)``, so strictly
positive support is not required of the raw column). Both the propensity
basis and the outcome-model covariate lists use this language.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .data import Dataset
from .errors import SchemaError

_LOG_RE = re.compile(
    r"^log\(\s*(?P<col>[A-Za-z_][A-Za-z0-9_.]*)\s*"
    r"(?:(?P<sign>[+-])\s*(?P<shift>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)\s*)?\)$"
)
_FACTOR_RE = re.compile(r"^(?P<col>[A-Za-z_][A-Za-z0-9_.]*)(?:\^(?P<pow>-?\d+))?$")


@dataclass(frozen=True)
class Term:
    """One design column: either log(col + shift) or a monomial in columns.

    Exactly one of the two shapes is active: ``log_col`` set (with ``shift``),
    or ``factors`` as a tuple of (column, power) pairs.
    """

    factors: Tuple[Tuple[str, int], ...] = ()
    log_col: str = ""
    shift: float = 0.0

    @property
    def is_log(self) -> bool:
        return bool(self.log_col)

    def label(self) -> str:
        if self.is_log:
            if self.shift > 0:
                return f"log({self.log_col}+{self.shift:g})"
            if self.shift < 0:
                return f"log({self.log_col}{self.shift:g})"
            return f"log({self.log_col})"
        parts = []
        for col, power in self.factors:
            parts.append(col if power == 1 else f"{col}^{power}")
        return "*".join(parts)

    def evaluate(self, data: Dataset) -> np.ndarray:
        if self.is_log:
            raw = data.column(self.log_col) + self.shift
            if np.any(raw <= 0):
                raise SchemaError(
                    f"term {self.label()}: log of a non-positive value; "
                    "add a shift, e.g. log(col+1.0)"
                )
            return np.log(raw)
        out = np.ones(data.n)
        for col, power in self.factors:
            out = out * data.column(col) ** power
        return out


def parse_term(text: str) -> Term:
    text = text.strip()
    if not text:
        raise SchemaError("empty term in basis specification")
    m = _LOG_RE.match(text)
    if m:
        shift = float(m.group("shift")) if m.group("shift") else 0.0
        if m.group("sign") == "-":
            shift = -shift
        return Term(log_col=m.group("col"), shift=shift)
    factors = []
    for piece in text.split("*"):
        piece = piece.strip()
        fm = _FACTOR_RE.match(piece)
        if not fm:
            raise SchemaError(f"cannot parse term {text!r} (offending factor {piece!r})")
        power = int(fm.group("pow")) if fm.group("pow") else 1
        factors.append((fm.group("col"), power))
    return Term(factors=tuple(factors))


def parse_terms(text: str) -> Tuple[Term, ...]:
    """Parse a comma-separated term list; empty/whitespace input means no terms."""
    text = text.strip()
    if not text:
        return ()
    return tuple(parse_term(piece) for piece in text.split(","))


def terms_from(spec) -> Tuple[Term, ...]:
    """Coerce a spec (string, iterable of strings/Terms) into a Term tuple."""
    if isinstance(spec, str):
        return parse_terms(spec)
    out = []
    for item in spec:
        out.append(item if isinstance(item, Term) else parse_term(str(item)))
    return tuple(out)


def build_columns(data: Dataset, terms: Sequence[Term]) -> np.ndarray:
    """Evaluate terms into an (n, len(terms)) matrix."""
    if len(terms) == 0:
        return np.empty((data.n, 0))
    return np.column_stack([t.evaluate(data) for t in terms])


def terms_label(terms: Sequence[Term]) -> str:
    return ", ".join(t.label() for t in terms)
