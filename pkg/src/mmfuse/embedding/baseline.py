"""Simple-normalisation (SN) baseline embedding."""

from .records import RANGES
from .tokens import TOKEN_DIM, FeatureToken

NUMERIC_FIELDS = ("age", "education_years", "mmse", "adas_cog", "csf_abeta")


def baseline_embed_sn(record):
    """Min-max scaled numeric fields + one-hot categoricals, zero padded to 64.

    Layout: age, education_years, mmse, adas_cog, csf_abeta, sex (M, F),
    apoe4_count (0, 1, 2), family_history (no, yes) -> 12 values.
    """
    record.validate(strict_csf=True)
    values = []
    for name in NUMERIC_FIELDS:
        lo, hi = RANGES[name]
        values.append((getattr(record, name) - lo) / (hi - lo))
    values += [1.0 if record.sex == "M" else 0.0, 1.0 if record.sex == "F" else 0.0]
    values += [1.0 if record.apoe4_count == k else 0.0 for k in range(3)]
    values += [0.0, 1.0] if record.family_history else [1.0, 0.0]
    values += [0.0] * (TOKEN_DIM - len(values))
    return FeatureToken(tuple(values))
