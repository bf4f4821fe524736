"""Read and write the on-disk dataset layout.

    <root>/<dataset_id>/<subject_id>/<clip_id>/frames/*.png
    <root>/<dataset_id>/<subject_id>/<clip_id>/meta.txt

``meta.txt`` holds ``key=value`` lines (onset, apex, offset, emotion,
frame_rate) with 1-based frame indexes as in the public annotation sheets.
An optional ``flows.npz`` (u_oa, v_oa, u_ao, v_ao) supplies precomputed flows.
"""

from __future__ import annotations

import logging
import re
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import cv2
import numpy as np

from .data_model import (EXCLUDED, DatasetId, KeyFrames, LabelMapping, MESample, map_emotion,
                         validate_sample)

log = logging.getLogger(__name__)

META_KEYS = ("onset", "apex", "offset", "emotion", "frame_rate")


class DatasetError(ValueError):
    pass


def _natural_key(path: Path):
    return [int(t) if t.isdigit() else t for t in re.split(r"(\d+)", path.stem)]


def read_meta(path: Path) -> Dict[str, str]:
    meta = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DatasetError(f"{path}:{lineno}: expected key=value")
        k, v = (s.strip() for s in line.split("=", 1))
        meta[k] = v
    missing = [k for k in META_KEYS if k not in meta]
    if missing:
        raise DatasetError(f"{path}: missing key(s) {', '.join(missing)}")
    return meta


def load_clip(clip_dir: Union[str, Path], dataset_id: Optional[str] = None,
              subject_id: Optional[str] = None, mapping: Optional[LabelMapping] = None) -> Optional[MESample]:
    """Load one clip; returns None when its emotion maps to ``excluded``."""
    clip_dir = Path(clip_dir)
    subject_id = subject_id or clip_dir.parent.name
    dataset_id = dataset_id or clip_dir.parent.parent.name
    try:
        dataset_id = DatasetId(dataset_id)
    except ValueError:
        raise DatasetError(f"{clip_dir}: unknown dataset id {dataset_id!r}") from None
    meta = read_meta(clip_dir / "meta.txt")
    label = map_emotion(meta["emotion"], mapping)
    if label == EXCLUDED:
        return None
    try:
        # annotation files are 1-based
        kf = KeyFrames(*(int(meta[k]) - 1 for k in ("onset", "apex", "offset")))
        frame_rate = int(meta["frame_rate"])
    except ValueError as e:
        raise DatasetError(f"{clip_dir}/meta.txt: {e}") from None

    frames = flows = length = None
    flow_file = clip_dir / "flows.npz"
    if flow_file.exists():
        with np.load(flow_file) as z:
            flows = ((z["u_oa"], z["v_oa"]), (z["u_ao"], z["v_ao"]))
        length = int(meta.get("length", kf.offset + 1))
    else:
        paths = sorted((clip_dir / "frames").glob("*.png"), key=_natural_key)
        if not paths:
            raise DatasetError(f"{clip_dir}: no frames and no flows.npz")
        imgs = [cv2.imread(str(p), cv2.IMREAD_GRAYSCALE) for p in paths]
        if any(im is None for im in imgs):
            raise DatasetError(f"{clip_dir}: unreadable frame")
        frames = np.stack(imgs)

    sample = MESample(keyframes=kf, subject_id=subject_id, dataset_id=dataset_id,
                      frame_rate=frame_rate, raw_emotion=meta["emotion"], composite_label=label,
                      frames=frames, flows=flows, length=length, clip_id=clip_dir.name)
    result = validate_sample(sample)
    if not result.ok:
        raise DatasetError(f"{clip_dir}: invalid sample: {'; '.join(result.violations)}")
    return sample


def load_dataset(root: Union[str, Path], mapping: Optional[LabelMapping] = None) -> List[MESample]:
    """Load every clip under ``root``.

    ``root`` is either a single dataset directory (named after a dataset id)
    or a directory containing such dataset directories.
    """
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"{root}: not a directory")
    ids = {d.value for d in DatasetId}
    dataset_dirs = [root] if root.name in ids else sorted(p for p in root.iterdir() if p.is_dir() and p.name in ids)
    if not dataset_dirs:
        raise DatasetError(f"{root}: no dataset directories ({', '.join(sorted(ids))})")
    samples, excluded = [], 0
    for ddir in dataset_dirs:
        for sdir in sorted(p for p in ddir.iterdir() if p.is_dir()):
            for cdir in sorted(p for p in sdir.iterdir() if p.is_dir()):
                s = load_clip(cdir, ddir.name, sdir.name, mapping)
                if s is None:
                    excluded += 1
                else:
                    samples.append(s)
    if excluded:
        log.info("%s: %d clips excluded by the label mapping", root, excluded)
    return samples


def write_clip(sample: MESample, clip_dir: Union[str, Path]) -> None:
    clip_dir = Path(clip_dir)
    kf = sample.keyframes
    meta = {
        "onset": kf.onset + 1, "apex": kf.apex + 1, "offset": kf.offset + 1,
        "emotion": sample.raw_emotion, "frame_rate": sample.frame_rate,
    }
    if sample.frames is None:
        meta["length"] = sample.n_frames
    clip_dir.mkdir(parents=True, exist_ok=True)
    (clip_dir / "meta.txt").write_text("".join(f"{k}={meta[k]}\n" for k in meta))
    if sample.frames is not None:
        fdir = clip_dir / "frames"
        fdir.mkdir(exist_ok=True)
        for t, frame in enumerate(sample.frames):
            if not cv2.imwrite(str(fdir / f"img{t + 1:04d}.png"), frame):
                raise OSError(f"failed to write frame {t + 1} of {clip_dir}")
    if sample.flows is not None:
        (u1, v1), (u2, v2) = sample.flows
        np.savez(clip_dir / "flows.npz", u_oa=u1, v_oa=v1, u_ao=u2, v_ao=v2)


def write_dataset(samples: Sequence[MESample], root: Union[str, Path]) -> None:
    root = Path(root)
    for s in samples:
        write_clip(s, root / s.dataset_id.value / s.subject_id / s.clip_id)
