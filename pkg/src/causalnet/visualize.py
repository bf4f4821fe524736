"""PNG renderings of flow images and direction maps."""

from __future__ import annotations

from pathlib import Path
from typing import Dict, Union

import cv2
import numpy as np

from .flow import DirectionMap, FlowImage


def direction_hue_degrees(dmap: DirectionMap) -> np.ndarray:
    """Hue in degrees per cell, NaN where gated off.

    Upward motion (negative v in image coordinates) is red (0 degrees); hue
    grows with the flow angle.
    """
    theta = np.degrees(np.arctan2(dmap.data[..., 1], dmap.data[..., 0]))
    hue = np.mod(theta + 90.0, 360.0)
    return np.where(dmap.magnitude_gate, hue, np.nan)


def direction_hue_image(dmap: DirectionMap, scale: int = 8) -> np.ndarray:
    """BGR uint8 image: hue from angle, full value where gated on, black elsewhere."""
    hue = direction_hue_degrees(dmap)
    hsv = np.zeros(dmap.data.shape[:2] + (3,), dtype=np.uint8)
    on = dmap.magnitude_gate
    # OpenCV 8-bit hue spans 0..179
    hsv[..., 0] = np.where(on, np.round(np.nan_to_num(hue) / 2.0) % 180, 0).astype(np.uint8)
    hsv[..., 1] = 255
    hsv[..., 2] = np.where(on, 255, 0).astype(np.uint8)
    bgr = cv2.cvtColor(hsv, cv2.COLOR_HSV2BGR)
    if scale > 1:
        bgr = cv2.resize(bgr, None, fx=scale, fy=scale, interpolation=cv2.INTER_NEAREST)
    return bgr


def flow_channel_images(img: FlowImage, scale: int = 8) -> Dict[str, np.ndarray]:
    out = {}
    for i, name in enumerate(("horizontal", "vertical", "strain")):
        ch = np.rint(img.data[..., i] * 255).astype(np.uint8)
        out[name] = cv2.resize(ch, None, fx=scale, fy=scale, interpolation=cv2.INTER_NEAREST)
    return out


def write_png(path: Union[str, Path], image: np.ndarray) -> None:
    if not cv2.imwrite(str(path), image):
        raise OSError(f"failed to write {path}")
