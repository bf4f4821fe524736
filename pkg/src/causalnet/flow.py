"""Optical flow, optical strain, flow images and direction maps.

All model inputs are 28x28 grids. Flow fields follow the image convention:
``u`` is the horizontal displacement (positive right), ``v`` the vertical one
(positive down).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, NamedTuple, Optional, Tuple

import cv2
import numpy as np

from .data_model import MESample

INPUT_SIZE = 28
DEFAULT_TAU = 0.1


@dataclass(frozen=True)
class FlowField:
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.float64)
        v = np.asarray(self.v, dtype=np.float64)
        if u.shape != v.shape or u.ndim != 2:
            raise ValueError(f"u and v must be 2-D with equal shape, got {u.shape} and {v.shape}")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.u.shape

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.u).all() and np.isfinite(self.v).all())

    @classmethod
    def zeros(cls, shape) -> "FlowField":
        return cls(np.zeros(shape), np.zeros(shape))


@dataclass(frozen=True)
class FlowImage:
    """(28, 28, 3) array: horizontal, vertical, strain; each channel in [0, 1]."""

    data: np.ndarray


@dataclass(frozen=True)
class DirectionMap:
    """(28, 28, 2) array of (cos, sin) of the flow angle; zero where gated off."""

    data: np.ndarray
    magnitude_gate: np.ndarray


class SampleInputs(NamedTuple):
    flow_oa: FlowImage
    flow_ao: FlowImage
    dir_oa: DirectionMap
    dir_ao: DirectionMap


# --- estimators -------------------------------------------------------------

def _to_uint8(frame: np.ndarray) -> np.ndarray:
    frame = np.asarray(frame)
    if frame.dtype == np.uint8:
        return frame
    return np.clip(np.rint(frame), 0, 255).astype(np.uint8)


def farneback(frame_a: np.ndarray, frame_b: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Pyramidal polynomial-expansion dense flow (OpenCV Farneback)."""
    flow = cv2.calcOpticalFlowFarneback(
        _to_uint8(frame_a), _to_uint8(frame_b), None,
        pyr_scale=0.5, levels=3, winsize=15, iterations=3,
        poly_n=5, poly_sigma=1.2, flags=0,
    )
    return flow[..., 0], flow[..., 1]


ESTIMATORS: Dict[str, Callable[[np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]]] = {
    "farneback": farneback,
}


def compute_flow(frame_a, frame_b, estimator: str = "farneback",
                 precomputed: Optional[FlowField] = None) -> FlowField:
    """Dense displacement field taking ``frame_a`` toward ``frame_b``.

    ``precomputed`` short-circuits estimation and is returned unchanged.
    Identical frames yield an exactly zero field.
    """
    if precomputed is not None:
        return precomputed
    frame_a = np.asarray(frame_a)
    frame_b = np.asarray(frame_b)
    if frame_a.shape != frame_b.shape:
        raise ValueError(f"frame shape mismatch: {frame_a.shape} vs {frame_b.shape}")
    if frame_a.ndim != 2:
        raise ValueError("frames must be 2-D grayscale images")
    if np.array_equal(frame_a, frame_b):
        return FlowField.zeros(frame_a.shape)
    try:
        fn = ESTIMATORS[estimator]
    except KeyError:
        raise ValueError(f"unknown flow estimator {estimator!r}; known: {sorted(ESTIMATORS)}") from None
    u, v = fn(frame_a, frame_b)
    return FlowField(u, v)


# --- derived maps -----------------------------------------------------------

def compute_strain(flow: FlowField) -> np.ndarray:
    """Optical strain magnitude sqrt(exx^2 + eyy^2 + (exy + eyx)^2 / 2)."""
    # np.gradient: central differences inside, one-sided at the borders
    du_dy, du_dx = np.gradient(flow.u)
    dv_dy, dv_dx = np.gradient(flow.v)
    return np.sqrt(du_dx ** 2 + dv_dy ** 2 + 0.5 * (du_dy + dv_dx) ** 2)


def resample(channel: np.ndarray, size: int = INPUT_SIZE) -> np.ndarray:
    channel = np.asarray(channel, dtype=np.float64)
    if channel.shape == (size, size):
        return channel.copy()
    return cv2.resize(channel, (size, size), interpolation=cv2.INTER_AREA)


def minmax(channel: np.ndarray) -> np.ndarray:
    lo, hi = channel.min(), channel.max()
    if hi == lo:
        return np.zeros_like(channel)
    return (channel - lo) / (hi - lo)


def build_flow_image(flow: FlowField, size: int = INPUT_SIZE) -> FlowImage:
    if not flow.is_finite():
        raise ValueError("flow contains non-finite values")
    strain = compute_strain(flow)
    channels = [minmax(resample(c, size)) for c in (flow.u, flow.v, strain)]
    return FlowImage(np.stack(channels, axis=-1))


def compute_direction_map(flow: FlowField, tau: float = DEFAULT_TAU,
                          size: int = INPUT_SIZE) -> DirectionMap:
    """Unit direction (cos, sin) per cell of the resampled flow.

    Cells whose resampled magnitude is below ``tau`` are gated off and set to (0, 0).
    """
    u = resample(flow.u, size)
    v = resample(flow.v, size)
    mag = np.hypot(u, v)
    gate = mag >= tau
    data = np.zeros((size, size, 2))
    data[gate, 0] = u[gate] / mag[gate]
    data[gate, 1] = v[gate] / mag[gate]
    return DirectionMap(data, gate)


def frame_image(frame: np.ndarray, size: int = INPUT_SIZE) -> FlowImage:
    """A single frame as a 3-channel input (for apex-frame-only models)."""
    g = minmax(resample(frame, size))
    return FlowImage(np.stack([g, g, g], axis=-1))


def sample_flows(sample: MESample, estimator: str = "farneback") -> Tuple[FlowField, FlowField]:
    """(onset->apex, apex->offset) flow fields of a sample."""
    if sample.flows is not None:
        (u1, v1), (u2, v2) = sample.flows
        return FlowField(u1, v1), FlowField(u2, v2)
    kf = sample.keyframes
    frames = sample.frames
    oa = compute_flow(frames[kf.onset], frames[kf.apex], estimator)
    ao = compute_flow(frames[kf.apex], frames[kf.offset], estimator)
    return oa, ao


def build_sample_inputs(sample: MESample, estimator: str = "farneback",
                        tau: float = DEFAULT_TAU) -> SampleInputs:
    oa, ao = sample_flows(sample, estimator)
    return SampleInputs(
        build_flow_image(oa), build_flow_image(ao),
        compute_direction_map(oa, tau), compute_direction_map(ao, tau),
    )


def direction_agreement(a: DirectionMap, b: DirectionMap) -> Tuple[float, int]:
    """Mean cosine between two direction maps over cells gated on in both.

    Returns (mean, count); mean is nan when no cell is shared.
    """
    both = a.magnitude_gate & b.magnitude_gate
    n = int(both.sum())
    if n == 0:
        return float("nan"), 0
    dots = (a.data[both] * b.data[both]).sum(axis=-1)
    return float(dots.mean()), n
