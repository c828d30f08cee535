"""Prompt construction for LLM feature extraction.

The wording and grouping here are this package's own template; nothing in
it is meant to reproduce a published prompt.
"""

from dataclasses import dataclass

from ..errors import ConfigurationError
from ..fusion import format_summary
from .tokens import TOKEN_DIM, format_token

ALLOWED_SHOTS = (0, 1, 5)
DEFAULT_GROUPS = ("demographics", "genetics", "cognition", "csf")

HEADER = (
    "You convert a patient's clinical record into a numeric feature embedding.\n"
    f"Reply with exactly {TOKEN_DIM} comma-separated numbers inside square brackets, "
    "like [v1, v2, ...], and nothing else.\n"
)
EXAMPLE_MARK = "### Example"
SUBJECT_MARK = "### Subject"


def _f3(x):
    return f"{x:.3f}"


def _render_group(record, group):
    if group == "demographics":
        return (
            f"age: {_f3(record.age)}; sex: {record.sex}; "
            f"education_years: {record.education_years}; "
            f"family_history: {'yes' if record.family_history else 'no'}"
        )
    if group == "genetics":
        return f"apoe4_count: {record.apoe4_count}"
    if group == "cognition":
        return f"mmse: {record.mmse}; adas_cog: {_f3(record.adas_cog)}"
    if group == "csf":
        return f"csf_abeta: {_f3(record.csf_abeta)}"
    raise ConfigurationError(f"unknown field group {group!r}")


@dataclass(frozen=True)
class PromptSpec:
    shots: int = 5
    groups: tuple = DEFAULT_GROUPS
    include_image_summary: bool = True

    def __post_init__(self):
        if self.shots not in ALLOWED_SHOTS:
            raise ConfigurationError(f"shots must be one of {ALLOWED_SHOTS}, got {self.shots}")
        for g in self.groups:
            if g not in DEFAULT_GROUPS:
                raise ConfigurationError(f"unknown field group {g!r}")


def render_record(record, groups=DEFAULT_GROUPS):
    return "".join(f"[{g}] {_render_group(record, g)}\n" for g in groups)


def build_prompt(record, image_summary, spec, shot_bank=()):
    """Deterministic prompt text: header, ``spec.shots`` examples, then the subject."""
    if len(shot_bank) < spec.shots:
        raise ConfigurationError(f"{spec.shots} shots requested but shot bank holds {len(shot_bank)}")
    parts = [HEADER]
    for i, (ex_record, ex_token) in enumerate(shot_bank[: spec.shots], start=1):
        parts.append(f"\n{EXAMPLE_MARK} {i}\n")
        parts.append(render_record(ex_record, spec.groups))
        parts.append(f"embedding: {format_token(ex_token.values, decimals=3)}\n")
    parts.append(f"\n{SUBJECT_MARK}\n")
    parts.append(render_record(record, spec.groups))
    if spec.include_image_summary and image_summary is not None:
        parts.append(f"[image_features] {format_summary(image_summary)}\n")
    parts.append("embedding:")
    return "".join(parts)


def count_examples(prompt):
    return prompt.count(f"{EXAMPLE_MARK} ")
