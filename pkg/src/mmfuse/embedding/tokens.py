"""64-value feature tokens and their text form."""

import math
from dataclasses import dataclass

from ..errors import DimensionError, FormatError, ParseError, ValidationError

TOKEN_DIM = 64
MAX_NORM = 1000.0


@dataclass(frozen=True)
class FeatureToken:
    values: tuple

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if len(vals) != TOKEN_DIM:
            raise DimensionError(f"feature token needs {TOKEN_DIM} values, got {len(vals)}")
        if not all(math.isfinite(v) for v in vals):
            raise ValidationError("feature token contains non-finite values")
        object.__setattr__(self, "values", vals)

    @property
    def norm(self):
        return math.sqrt(sum(v * v for v in self.values))

    def check_norm(self):
        n = self.norm
        if not 0.0 < n <= MAX_NORM:
            raise ValidationError(f"feature token L2 norm {n} outside (0, {MAX_NORM}]")
        return self

    def __len__(self):
        return TOKEN_DIM


def format_token(values, decimals=None):
    """Bracketed comma-separated list; ``repr`` floats unless ``decimals`` is given."""
    if decimals is None:
        parts = (repr(float(v)) for v in values)
    else:
        parts = (f"{v:.{decimals}f}" for v in values)
    return "[" + ", ".join(parts) + "]"


def _first_bracket_span(text):
    start = text.find("[")
    if start < 0:
        raise FormatError(f"no '[' in response {text[:60]!r}", offset=None)
    depth = 0
    for pos in range(start, len(text)):
        ch = text[pos]
        if ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
            if depth == 0:
                return text[start + 1 : pos]
    raise FormatError(f"unbalanced bracket span {text[start:start + 60]!r}", offset=start)


def parse_token(response_text):
    """Extract exactly 64 finite numbers from the first balanced ``[...]`` span."""
    body = _first_bracket_span(response_text)
    parts = [p.strip() for p in body.split(",")] if body.strip() else []
    values = []
    for part in parts:
        try:
            v = float(part)
        except ValueError:
            raise ParseError(f"non-numeric entry {part!r}") from None
        if not math.isfinite(v):
            raise ParseError(f"non-finite entry {part!r}")
        values.append(v)
    if len(values) != TOKEN_DIM:
        raise DimensionError(f"expected {TOKEN_DIM} values, got {len(values)} in [{body[:60]}]")
    return FeatureToken(tuple(values))
