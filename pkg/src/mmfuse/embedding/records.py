"""Tabular non-image subject data."""

from dataclasses import asdict, dataclass

from ..errors import ValidationError

# Bounds used for validation and for min-max scaling in the baseline embedder.
RANGES = {
    "age": (50.0, 95.0),
    "education_years": (0, 25),
    "mmse": (0, 30),
    "adas_cog": (0.0, 70.0),
    "csf_abeta": (200.0, 1700.0),
}
SEXES = ("M", "F")


@dataclass(frozen=True)
class SubjectRecord:
    id: str
    age: float
    sex: str
    education_years: int
    apoe4_count: int
    mmse: int
    adas_cog: float
    csf_abeta: float
    family_history: bool

    def validate(self, strict_csf=False):
        """Raise ValidationError on any out-of-range field.

        ``csf_abeta`` only has to be positive for a valid record;
        ``strict_csf`` additionally enforces the scaling bounds.
        """
        for name in ("age", "education_years", "mmse", "adas_cog"):
            lo, hi = RANGES[name]
            value = getattr(self, name)
            if not lo <= value <= hi:
                raise ValidationError(f"{self.id}: {name}={value} outside [{lo}, {hi}]")
        if self.csf_abeta <= 0:
            raise ValidationError(f"{self.id}: csf_abeta={self.csf_abeta} must be positive")
        if strict_csf:
            lo, hi = RANGES["csf_abeta"]
            if not lo <= self.csf_abeta <= hi:
                raise ValidationError(f"{self.id}: csf_abeta={self.csf_abeta} outside [{lo}, {hi}]")
        if self.sex not in SEXES:
            raise ValidationError(f"{self.id}: sex={self.sex!r} not in {SEXES}")
        if self.apoe4_count not in (0, 1, 2):
            raise ValidationError(f"{self.id}: apoe4_count={self.apoe4_count} not in 0..2")
        if not isinstance(self.family_history, bool):
            raise ValidationError(f"{self.id}: family_history must be a bool")
        return self

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(
            id=str(d["id"]),
            age=float(d["age"]),
            sex=str(d["sex"]),
            education_years=int(d["education_years"]),
            apoe4_count=int(d["apoe4_count"]),
            mmse=int(d["mmse"]),
            adas_cog=float(d["adas_cog"]),
            csf_abeta=float(d["csf_abeta"]),
            family_history=bool(d["family_history"]),
        )
