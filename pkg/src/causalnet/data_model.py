"""Domain types shared across the package: key frames, samples, labels."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Optional, Tuple, Union

import numpy as np

EXCLUDED = "excluded"


class DatasetId(str, enum.Enum):
    CASME2 = "CASME2"
    SAMM = "SAMM"
    SMIC = "SMIC"
    SYNTH = "SYNTH"


class CompositeLabel(str, enum.Enum):
    """Three-class composite labels. Declaration order is the class index."""

    NEGATIVE = "negative"
    POSITIVE = "positive"
    SURPRISE = "surprise"

    @property
    def index(self) -> int:
        return list(CompositeLabel).index(self)

    @classmethod
    def from_index(cls, i: int) -> "CompositeLabel":
        return list(cls)[i]


N_CLASSES = len(CompositeLabel)


class UnknownEmotionError(KeyError):
    def __init__(self, raw: str):
        super().__init__(raw)
        self.raw = raw

    def __str__(self) -> str:
        return f"unknown emotion {self.raw!r}"


class LabelMappingError(ValueError):
    pass


@dataclass(frozen=True)
class KeyFrames:
    """0-based onset/apex/offset frame indexes."""

    onset: int
    apex: int
    offset: int

    def violations(self, length: Optional[int]) -> list:
        out = []
        for name in ("onset", "apex", "offset"):
            if getattr(self, name) < 0:
                out.append(f"{name} < 0")
        if self.apex < self.onset:
            out.append("apex < onset")
        if self.offset < self.apex:
            out.append("offset < apex")
        if length is not None:
            for name in ("onset", "apex", "offset"):
                if getattr(self, name) >= length:
                    out.append(f"{name} out of range")
        return out

    def as_tuple(self) -> Tuple[int, int, int]:
        return (self.onset, self.apex, self.offset)


@dataclass(frozen=True)
class LabelMapping:
    table: Mapping[str, str]

    @classmethod
    def parse(cls, text: str, source: str = "<string>") -> "LabelMapping":
        allowed = {c.value for c in CompositeLabel} | {EXCLUDED}
        table = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise LabelMappingError(f"{source}:{lineno}: expected raw_emotion=class")
            raw, cls_name = (s.strip().lower() for s in line.split("=", 1))
            if cls_name not in allowed:
                raise LabelMappingError(f"{source}:{lineno}: unknown class {cls_name!r}")
            table[raw] = cls_name
        return cls(table)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "LabelMapping":
        path = Path(path)
        return cls.parse(path.read_text(), source=str(path))

    @classmethod
    def default(cls) -> "LabelMapping":
        text = resources.files("causalnet").joinpath("resources/megc2019_labels.txt").read_text()
        return cls.parse(text, source="megc2019_labels.txt")


def map_emotion(raw: str, mapping: Optional[LabelMapping] = None):
    """Return the CompositeLabel for ``raw``, or ``EXCLUDED``.

    Raises UnknownEmotionError when ``raw`` is not in the mapping vocabulary.
    """
    mapping = mapping or LabelMapping.default()
    key = raw.strip().lower()
    if key not in mapping.table:
        raise UnknownEmotionError(raw)
    value = mapping.table[key]
    return EXCLUDED if value == EXCLUDED else CompositeLabel(value)


def _frozen(a: Optional[np.ndarray]) -> Optional[np.ndarray]:
    if a is None:
        return None
    a = np.asarray(a)
    if a.flags.writeable:
        a = a.copy()
        a.flags.writeable = False
    return a


@dataclass(frozen=True)
class MESample:
    """One micro-expression clip.

    ``frames`` is a (T, H, W) grayscale stack. When ``flows`` is given it holds
    precomputed (onset->apex, apex->offset) flow fields as (u, v) array pairs and
    ``frames`` may be None; ``length`` then gives the sequence length.
    """

    keyframes: KeyFrames
    subject_id: str
    dataset_id: DatasetId
    frame_rate: int
    raw_emotion: str
    composite_label: CompositeLabel
    frames: Optional[np.ndarray] = None
    flows: Optional[tuple] = None
    length: Optional[int] = None
    clip_id: str = ""
    metadata: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "frames", _frozen(self.frames))
        if self.flows is not None:
            flows = tuple(tuple(_frozen(c) for c in f) for f in self.flows)
            object.__setattr__(self, "flows", flows)
        object.__setattr__(self, "dataset_id", DatasetId(self.dataset_id))
        object.__setattr__(self, "composite_label", CompositeLabel(self.composite_label))

    @property
    def n_frames(self) -> Optional[int]:
        if self.frames is not None:
            return int(self.frames.shape[0])
        return self.length

    @property
    def uid(self) -> str:
        return f"{self.dataset_id.value}/{self.subject_id}/{self.clip_id}"

    def with_keyframes(self, keyframes: KeyFrames) -> "MESample":
        from dataclasses import replace

        return replace(self, keyframes=keyframes)


@dataclass(frozen=True)
class ValidationResult:
    violations: Tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def validate_sample(sample: MESample) -> ValidationResult:
    out = []
    if sample.flows is None:
        if sample.frames is None or sample.frames.shape[0] == 0:
            out.append("frames empty")
        elif sample.frames.ndim != 3:
            out.append("frames must be (T, H, W)")
        elif min(sample.frames.shape[1:]) < 28:
            out.append("frames smaller than 28x28")
        elif not np.isfinite(sample.frames).all():
            out.append("frames not finite")
    else:
        if len(sample.flows) != 2 or any(len(f) != 2 for f in sample.flows):
            out.append("flows must be two (u, v) pairs")
        else:
            for name, (u, v) in zip(("onset-apex", "apex-offset"), sample.flows):
                if u.shape != v.shape or u.ndim != 2:
                    out.append(f"{name} flow u/v shape mismatch")
                elif not (np.isfinite(u).all() and np.isfinite(v).all()):
                    out.append(f"{name} flow not finite")
    if not isinstance(sample.frame_rate, (int, np.integer)) or sample.frame_rate <= 0:
        out.append("frame_rate must be a positive integer")
    out.extend(sample.keyframes.violations(sample.n_frames))
    return ValidationResult(tuple(out))
