"""Synthetic ADNI-shaped datasets with planted class signal.

All class-conditional parameters below are inventions loosely shaped after
the clinical picture (lower MMSE, higher ADAS-Cog, lower CSF amyloid and
more APOE4 alleles with severity).  They are not clinical reference values.

Each class-dependent quantity is interpolated between its across-class
average (``signal_strength = 0``) and its class value (``= 1``).

On disk::

    <root>/manifest.jsonl          one JSON object per subject
    <root>/shots.jsonl             few-shot exemplars (record + token)
    <root>/sub/<id>_mri.mmt        [1, S, S] float32 tensor
    <root>/sub/<id>_pet.mmt
"""

import json
import os
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .data_io import read_tensor, write_tensor
from .embedding.baseline import baseline_embed_sn
from .embedding.records import SubjectRecord
from .embedding.tokens import FeatureToken
from .errors import StorageError, StratificationError, ValidationError
from .rng import Rng, derive_seed


class ClassLabel(IntEnum):
    NC = 0
    EMCI = 1
    LMCI = 2
    AD = 3


CLASS_MEANS = {
    "mmse": (29.0, 27.0, 24.0, 20.0),
    "adas_cog": (6.0, 12.0, 18.0, 26.0),
    "csf_abeta": (1100.0, 950.0, 800.0, 600.0),
    "apoe4_allele_p": (0.10, 0.20, 0.30, 0.45),
}
FIELD_SD = {"mmse": 1.2, "adas_cog": 2.5, "csf_abeta": 70.0}
MRI_RADIUS_SHRINK = 0.15  # fractional blob radius loss per severity step
MRI_RADIUS_JITTER = 0.04
PET_LEVEL_STEP = 0.30  # mean intensity gain per severity step
PET_LEVEL_JITTER = 0.04
SHOT_SALT = 0x5EED_5407
NUM_SHOTS = 5

MANIFEST = "manifest.jsonl"
SHOTS = "shots.jsonl"


@dataclass(frozen=True)
class SyntheticConfig:
    per_class: int
    image_size: int = 32
    seed: int = 0
    signal_strength: float = 0.8
    noise_sigma: float = 0.1

    def __post_init__(self):
        if self.per_class < 1:
            raise ValidationError("per_class must be >= 1")
        if not 0.0 <= self.signal_strength <= 1.0:
            raise ValidationError("signal_strength must lie in [0, 1]")
        if self.image_size < 2:
            raise ValidationError("image_size must be >= 2")


@dataclass
class Entry:
    id: str
    label: int
    mri_path: str
    pet_path: str
    record: SubjectRecord

    def to_dict(self):
        return {
            "id": self.id,
            "label": self.label,
            "mri_path": self.mri_path,
            "pet_path": self.pet_path,
            "record": self.record.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["id"], int(d["label"]), d["mri_path"], d["pet_path"], SubjectRecord.from_dict(d["record"]))


def _class_value(name, label, s):
    values = CLASS_MEANS[name]
    avg = sum(values) / len(values)
    return avg + s * (values[label] - avg)


def _clip(x, lo, hi):
    return min(max(x, lo), hi)


def sample_record(rng, sid, label, s):
    """Draw one record; fields are drawn in declaration order from ``rng``."""
    age = round(_clip(rng.normal(73.0, 7.0), 50.0, 95.0), 1)
    sex = "F" if rng.bernoulli(0.5) else "M"
    education = int(round(_clip(rng.normal(15.0, 3.0), 0, 25)))
    p = _class_value("apoe4_allele_p", label, s)
    apoe4 = int(rng.bernoulli(p)) + int(rng.bernoulli(p))
    mmse = int(round(_clip(rng.normal(_class_value("mmse", label, s), FIELD_SD["mmse"]), 0, 30)))
    adas = round(_clip(rng.normal(_class_value("adas_cog", label, s), FIELD_SD["adas_cog"]), 0.0, 70.0), 1)
    csf = round(_clip(rng.normal(_class_value("csf_abeta", label, s), FIELD_SD["csf_abeta"]), 200.0, 1700.0), 1)
    family = rng.bernoulli(0.25)
    return SubjectRecord(sid, age, sex, education, apoe4, mmse, adas, csf, family).validate()


def _severity(label, s):
    # Centred severity so that signal_strength scales spread around the mean.
    return s * (label - 1.5)


def mri_image(rng, label, size, s, sigma):
    """Centred Gaussian blob whose radius shrinks with severity, plus pixel noise."""
    base = size / 4.0
    radius = base * (1.0 - MRI_RADIUS_SHRINK * _severity(label, s)) * (1.0 + MRI_RADIUS_JITTER * rng.normal())
    cy = (size - 1) / 2.0 + rng.uniform(-1.0, 1.0)
    cx = (size - 1) / 2.0 + rng.uniform(-1.0, 1.0)
    yy, xx = np.mgrid[0:size, 0:size]
    blob = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * radius**2))
    noise = rng.normal(0.0, sigma, size=(size, size))
    return (blob + noise).reshape(1, size, size).astype(np.float32)


def pet_image(rng, label, size, s, sigma):
    """Horizontal intensity ramp whose mean rises with severity, plus pixel noise."""
    level = 0.5 + PET_LEVEL_STEP * _severity(label, s) + PET_LEVEL_JITTER * rng.normal()
    slope = rng.uniform(-0.2, 0.2)
    ramp = level + slope * (np.arange(size) / max(size - 1, 1) - 0.5)
    img = np.broadcast_to(ramp, (size, size))
    noise = rng.normal(0.0, sigma, size=(size, size))
    return (img + noise).reshape(1, size, size).astype(np.float32)


def subject_id(index):
    return f"S{index:05d}"


def make_subject(config, index, label):
    rng = Rng(derive_seed(config.seed, index))
    sid = subject_id(index)
    record = sample_record(rng, sid, label, config.signal_strength)
    mri = mri_image(rng, label, config.image_size, config.signal_strength, config.noise_sigma)
    pet = pet_image(rng, label, config.image_size, config.signal_strength, config.noise_sigma)
    return record, mri, pet


def make_shot_bank(config):
    """Few-shot exemplars: synthetic records (one per class, then NC again) with SN tokens."""
    bank = []
    for i in range(NUM_SHOTS):
        label = i % len(ClassLabel)
        rng = Rng(derive_seed(config.seed ^ SHOT_SALT, i))
        record = sample_record(rng, f"shot{i}", label, config.signal_strength)
        token = FeatureToken(tuple(round(v, 3) for v in baseline_embed_sn(record).values))
        bank.append((record, token))
    return bank


def generate(config, out_dir):
    """Write a dataset under ``out_dir`` and return its manifest entries."""
    entries = []
    try:
        os.makedirs(os.path.join(out_dir, "sub"), exist_ok=True)
        for label in ClassLabel:
            for j in range(config.per_class):
                index = int(label) * config.per_class + j
                record, mri, pet = make_subject(config, index, int(label))
                mri_rel = f"sub/{record.id}_mri.mmt"
                pet_rel = f"sub/{record.id}_pet.mmt"
                write_tensor(os.path.join(out_dir, mri_rel), mri)
                write_tensor(os.path.join(out_dir, pet_rel), pet)
                entries.append(Entry(record.id, int(label), mri_rel, pet_rel, record))
        write_jsonl(os.path.join(out_dir, MANIFEST), [e.to_dict() for e in entries])
        write_jsonl(
            os.path.join(out_dir, SHOTS),
            [{"record": r.to_dict(), "token": list(t.values)} for r, t in make_shot_bank(config)],
        )
    except OSError as exc:
        raise StorageError(f"cannot write dataset to {out_dir}: {exc}") from exc
    return entries


def write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def read_jsonl(path):
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def load_manifest(root):
    """Read and check a manifest: ids unique, referenced tensors present."""
    entries = [Entry.from_dict(d) for d in read_jsonl(os.path.join(root, MANIFEST))]
    seen = set()
    for e in entries:
        if e.id in seen:
            raise ValidationError(f"duplicate subject id {e.id}")
        seen.add(e.id)
        for rel in (e.mri_path, e.pet_path):
            if not os.path.exists(os.path.join(root, rel)):
                raise ValidationError(f"{e.id}: missing file {rel}")
    return entries


def load_shot_bank(root):
    path = os.path.join(root, SHOTS)
    if not os.path.exists(path):
        return []
    return [(SubjectRecord.from_dict(d["record"]), FeatureToken(tuple(d["token"]))) for d in read_jsonl(path)]


def load_images(root, entries):
    """Stack images into ``[n, 1, S, S]`` arrays (MRI, PET)."""
    mri = np.stack([read_tensor(os.path.join(root, e.mri_path)) for e in entries])
    pet = np.stack([read_tensor(os.path.join(root, e.pet_path)) for e in entries])
    return mri, pet


# ---------------------------------------------------------------- splitting

SPLIT_NAMES = ("train", "val", "test")


def allocate(n, fractions, deficits):
    """Largest-remainder allocation of ``n`` items over the splits.

    Each split gets ``floor(n * f)``; leftover units go to the largest
    fractional parts.  Ties go to the split furthest behind its cumulative
    target (``deficits``), then to the earlier split.
    """
    raw = [n * f for f in fractions]
    counts = [int(np.floor(r + 1e-9)) for r in raw]
    rema = [r - c for r, c in zip(raw, counts)]
    order = sorted(range(len(fractions)), key=lambda i: (-round(rema[i], 9), -round(deficits[i], 9), i))
    for i in order[: n - sum(counts)]:
        counts[i] += 1
    return counts


def split(entries, fractions=(0.7, 0.15, 0.15), seed=0):
    """Stratified, seeded train/val/test partition of manifest entries."""
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValidationError(f"split fractions {fractions} do not sum to 1")
    by_label = {}
    for e in entries:
        by_label.setdefault(e.label, []).append(e)
    for label, members in sorted(by_label.items()):
        if len(members) < 3:
            raise StratificationError(f"class {label} has {len(members)} subjects, need at least 3")
    rng = Rng(seed)
    parts = [[] for _ in fractions]
    target = [0.0] * len(fractions)
    assigned = [0] * len(fractions)
    for label in sorted(by_label):
        members = sorted(by_label[label], key=lambda e: e.id)
        rng.shuffle(members)
        n = len(members)
        target = [t + n * f for t, f in zip(target, fractions)]
        floors = [int(np.floor(n * f + 1e-9)) for f in fractions]
        deficits = [t - a - fl for t, a, fl in zip(target, assigned, floors)]
        counts = allocate(n, fractions, deficits)
        start = 0
        for i, c in enumerate(counts):
            parts[i].extend(members[start : start + c])
            start += c
            assigned[i] += c
    return tuple(parts)


# ---------------------------------------------------------------- embeddings

EMBEDDINGS = "embeddings.jsonl"
EMBED_META = "embeddings.meta.json"


def write_embeddings(root, tokens, meta):
    """``tokens`` maps subject id -> FeatureToken; rows are written in id order."""
    write_jsonl(os.path.join(root, EMBEDDINGS), [{"id": i, "token": list(tokens[i].values)} for i in sorted(tokens)])
    with open(os.path.join(root, EMBED_META), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, sort_keys=True)
        fh.write("\n")


def read_embeddings(root):
    """Return ``(tokens_by_id, meta)``; both empty when nothing was embedded yet."""
    path = os.path.join(root, EMBEDDINGS)
    if not os.path.exists(path):
        return {}, {}
    tokens = {d["id"]: FeatureToken(tuple(d["token"])) for d in read_jsonl(path)}
    meta_path = os.path.join(root, EMBED_META)
    meta = {}
    if os.path.exists(meta_path):
        with open(meta_path, encoding="utf-8") as fh:
            meta = json.load(fh)
    return tokens, meta
