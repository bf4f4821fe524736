"""Synthetic micro-expression clips.

Each clip is a warped face template. A class-specific set of Gaussian motion
blobs displaces the face along a contraction direction while the activation
rises from onset to apex, then returns along the opposite direction as it decays
toward offset. Outside [onset, offset] the frame equals the neutral template.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import cv2
import numpy as np

from .data_model import CompositeLabel, DatasetId, KeyFrames, MESample

FRAME_SIZE = 56


@dataclass(frozen=True)
class MotionBlob:
    x: float
    y: float
    dx: float
    dy: float


def _unit(dx, dy):
    n = np.hypot(dx, dy)
    return dx / n, dy / n


# (x, y) centres on the 56x56 canvas; directions are the onset->apex motion
CLASS_BLOBS = {
    # brow lowerer: inner brows pulled down and together
    CompositeLabel.NEGATIVE: (
        MotionBlob(22, 16, *_unit(0.5, 1.0)),
        MotionBlob(34, 16, *_unit(-0.5, 1.0)),
    ),
    # lip corner puller: mouth corners pulled up and out
    CompositeLabel.POSITIVE: (
        MotionBlob(18, 42, *_unit(-1.0, -0.6)),
        MotionBlob(38, 42, *_unit(1.0, -0.6)),
    ),
    # brow raiser: outer brows lifted
    CompositeLabel.SURPRISE: (
        MotionBlob(13, 15, 0.0, -1.0),
        MotionBlob(43, 15, 0.0, -1.0),
    ),
}

RAW_EMOTION = {
    CompositeLabel.NEGATIVE: "disgust",
    CompositeLabel.POSITIVE: "happiness",
    CompositeLabel.SURPRISE: "surprise",
}


def face_template(rng: np.random.Generator, size: int = FRAME_SIZE) -> np.ndarray:
    """Neutral aligned face with subject-specific texture, tone and feature jitter."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    s = size / FRAME_SIZE
    jx, jy = rng.uniform(-1.0, 1.0, size=2) * s
    img = 150.0 + 20.0 * np.exp(-(((xx - 28 * s) / (20 * s)) ** 2 + ((yy - 30 * s) / (26 * s)) ** 2))

    def bar(x0, x1, y, width, depth):
        xs = np.clip(xx, x0 * s + jx, x1 * s + jx)
        d2 = (xx - xs) ** 2 + (yy - (y * s + jy)) ** 2
        return depth * np.exp(-d2 / (2 * (width * s) ** 2))

    def spot(x, y, rx, ry, depth):
        d2 = ((xx - x * s - jx) / (rx * s)) ** 2 + ((yy - y * s - jy) / (ry * s)) ** 2
        return depth * np.exp(-d2)

    img -= bar(9, 25, 15.5, 1.4, 70)   # brows
    img -= bar(31, 47, 15.5, 1.4, 70)
    img -= spot(17, 22, 4.0, 2.0, 80)  # eyes
    img -= spot(39, 22, 4.0, 2.0, 80)
    img -= bar(28, 28, 31, 1.2, 30) + bar(25, 31, 34, 1.2, 35)  # nose
    img -= bar(19, 37, 42, 1.3, 75)    # mouth

    texture = cv2.GaussianBlur(rng.normal(0.0, 1.0, (size, size)), (0, 0), 1.2 * s)
    texture /= texture.std()
    img += 12.0 * texture
    contrast = rng.uniform(0.85, 1.15)
    offset = rng.uniform(-15.0, 15.0)
    return np.clip((img - 128.0) * contrast + 128.0 + offset, 0, 255)


def activation(t: np.ndarray, kf: KeyFrames) -> np.ndarray:
    """Expression intensity in [0, 1]: 0 outside (onset, offset), 1 at apex."""
    t = np.asarray(t, dtype=np.float64)
    a = np.zeros_like(t)
    rise = (t > kf.onset) & (t <= kf.apex)
    fall = (t > kf.apex) & (t < kf.offset)
    a[rise] = np.sin(0.5 * np.pi * (t[rise] - kf.onset) / max(kf.apex - kf.onset, 1)) ** 2
    a[fall] = np.cos(0.5 * np.pi * (t[fall] - kf.apex) / max(kf.offset - kf.apex, 1)) ** 2
    return a


def displacement_field(blobs: Sequence[MotionBlob], amplitude: float, sigma: float,
                       size: int = FRAME_SIZE) -> Tuple[np.ndarray, np.ndarray]:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    s = size / FRAME_SIZE
    dx = np.zeros((size, size))
    dy = np.zeros((size, size))
    for b in blobs:
        g = np.exp(-((xx - b.x * s) ** 2 + (yy - b.y * s) ** 2) / (2 * (sigma * s) ** 2))
        dx += amplitude * b.dx * g
        dy += amplitude * b.dy * g
    return dx, dy


def shading_field(blobs: Sequence[MotionBlob], depth: float, sigma: float,
                  size: int = FRAME_SIZE) -> np.ndarray:
    """Darkening at full activation (contraction furrows) around the motion blobs."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    s = size / FRAME_SIZE
    out = np.zeros((size, size))
    for b in blobs:
        out += depth * np.exp(-((xx - b.x * s) ** 2 + (yy - b.y * s) ** 2) / (2 * (sigma * s) ** 2))
    return out


def render_clip(template: np.ndarray, dx: np.ndarray, dy: np.ndarray,
                kf: KeyFrames, length: int, shade: Optional[np.ndarray] = None) -> np.ndarray:
    size = template.shape[0]
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float32)
    neutral = np.rint(template).astype(np.uint8)
    src = template.astype(np.float32)
    frames = np.empty((length, size, size), dtype=np.uint8)
    for t, a in enumerate(activation(np.arange(length), kf)):
        if a == 0.0:
            frames[t] = neutral
            continue
        # content at x moves to x + a*d: sample the template at x - a*d
        warped = cv2.remap(src, xx - np.float32(a) * dx.astype(np.float32),
                           yy - np.float32(a) * dy.astype(np.float32),
                           interpolation=cv2.INTER_CUBIC, borderMode=cv2.BORDER_REFLECT)
        if shade is not None:
            warped = warped - np.float32(a) * shade.astype(np.float32)
        frames[t] = np.clip(np.rint(warped), 0, 255).astype(np.uint8)
    return frames


def synth_dataset(n_subjects: int, samples_per_subject: int, seed: int,
                  frame_rate: int = 200, dataset_id: DatasetId = DatasetId.SYNTH,
                  min_length: int = 120, amplitude: Tuple[float, float] = (1.5, 3.0),
                  sigma: float = 4.0, shading: float = 45.0,
                  subject_prefix: str = "s") -> List[MESample]:
    """Balanced three-class synthetic dataset; bit-identical for a given seed.

    Key-frame spacing scales with ``frame_rate`` relative to 200 fps so that a
    clip spans the same duration in seconds.
    """
    if n_subjects < 2:
        raise ValueError("LOSO requires >= 2 subjects")
    if samples_per_subject < 1:
        raise ValueError("samples_per_subject must be >= 1")
    labels = list(CompositeLabel)
    scale = frame_rate / 200.0
    root = np.random.SeedSequence(seed)
    samples = []
    for si, sub_seq in enumerate(root.spawn(n_subjects)):
        rng = np.random.default_rng(sub_seq)
        template = face_template(rng)
        subject_id = f"{subject_prefix}{si + 1:02d}"
        for k in range(samples_per_subject):
            label = labels[(k + si) % len(labels)]
            onset = int(round(rng.integers(40, 61) * scale))
            apex = onset + max(1, int(round(rng.integers(12, 21) * scale)))
            offset = apex + max(1, int(round(rng.integers(15, 26) * scale)))
            length = max(int(round(min_length * scale)), offset + int(round(rng.integers(20, 41) * scale)))
            kf = KeyFrames(onset, apex, offset)
            blobs = CLASS_BLOBS[label]
            dx, dy = displacement_field(blobs, rng.uniform(*amplitude), sigma)
            shade = shading_field(blobs, shading, 0.75 * sigma) if shading else None
            frames = render_clip(template, dx, dy, kf, length, shade)
            samples.append(MESample(
                keyframes=kf, subject_id=subject_id, dataset_id=dataset_id,
                frame_rate=frame_rate, raw_emotion=RAW_EMOTION[label],
                composite_label=label, frames=frames, clip_id=f"c{k:03d}",
            ))
    return samples
