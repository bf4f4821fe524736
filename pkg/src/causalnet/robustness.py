"""Key-frame index noise and robustness sweeps over noise levels."""

from __future__ import annotations

import csv
import io
import logging
import zlib
from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np

from .config import INPUT_MODES, Config
from .data_model import KeyFrames, MESample
from .evaluation import COMPOSITE, RunSummary, evaluate_cde, summarize_runs

log = logging.getLogger(__name__)

REFERENCE_RATE = 200
DEFAULT_LEVELS = (0.0, 10.0, 20.0, 30.0)
SPOTTING_HALF_WIDTH = 25


@dataclass(frozen=True)
class NoiseSpec:
    """Gaussian key-frame noise; ``std_frames`` is expressed at 200 fps."""

    std_frames: float
    seed: int = 0
    reference_rate: int = REFERENCE_RATE

    def __post_init__(self):
        if self.std_frames < 0:
            raise ValueError("std_frames must be >= 0")

    def effective_std(self, frame_rate: int) -> float:
        return self.std_frames * frame_rate / self.reference_rate


def round_half_away(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def noise_stream(seed: int, level: float, run: int, stream_id: str) -> np.random.Generator:
    """Private generator keyed by (seed, level, run, sample id)."""
    key = [int(seed), int(round(level * 1000)), int(run), zlib.crc32(stream_id.encode())]
    return np.random.default_rng(np.random.SeedSequence(key))


def inject_noise(kf: KeyFrames, spec: NoiseSpec, length: int, frame_rate: int = REFERENCE_RATE,
                 stream_id: str = "", run: int = 0) -> KeyFrames:
    """Perturb onset, apex and offset independently, clamp to the clip, then sort."""
    std = spec.effective_std(frame_rate)
    if std == 0:
        return kf
    rng = noise_stream(spec.seed, spec.std_frames, run, stream_id)
    idx = np.asarray(kf.as_tuple(), dtype=np.float64)
    noisy = round_half_away(rng.normal(idx, std))
    noisy = np.sort(np.clip(noisy, 0, length - 1)).astype(int)
    return KeyFrames(*(int(i) for i in noisy))


def simulate_spotting(kf: KeyFrames, spec: NoiseSpec, length: int, frame_rate: int = REFERENCE_RATE,
                      stream_id: str = "", run: int = 0,
                      half_width: int = SPOTTING_HALF_WIDTH) -> KeyFrames:
    """Stand-in for an automatic apex spotter: a noisy apex with onset/offset a
    fixed ``half_width`` frames either side, all within the annotated onset-offset range."""
    rng = noise_stream(spec.seed, spec.std_frames, run, "spot:" + stream_id)
    std = spec.effective_std(frame_rate)
    apex = int(round_half_away(rng.normal(kf.apex, std)) if std > 0 else kf.apex)
    lo, hi = kf.onset, min(kf.offset, length - 1)
    apex = int(np.clip(apex, lo, hi))
    return KeyFrames(max(lo, apex - half_width), apex, min(hi, apex + half_width))


def perturb_samples(samples: Sequence[MESample], spec: NoiseSpec, run: int = 0,
                    spotting: bool = False) -> List[MESample]:
    """Copies of ``samples`` with noisy key frames. Samples carrying precomputed
    flows cannot be re-sliced and pass through unchanged."""
    fn = simulate_spotting if spotting else inject_noise
    out = []
    for s in samples:
        if s.flows is not None or s.frames is None:
            out.append(s)
            continue
        kf = fn(s.keyframes, spec, s.n_frames, s.frame_rate, stream_id=s.uid, run=run)
        out.append(s if kf == s.keyframes else s.with_keyframes(kf))
    return out


@dataclass
class LevelResult:
    level: float
    summary: RunSummary


@dataclass
class RobustnessReport:
    levels: List[float]
    protocol: str
    inputs_mode: str
    n_runs: int
    base_seed: int
    config: dict
    results: List[LevelResult] = field(default_factory=list)
    spotting: bool = False

    def metric(self, level: float, name: str = "uf1", dataset: str = COMPOSITE) -> float:
        for r in self.results:
            if r.level == level:
                return getattr(r.summary.mean[dataset], name)
        raise KeyError(level)

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol,
            "inputs_mode": self.inputs_mode,
            "spotting": self.spotting,
            "n_runs": self.n_runs,
            "base_seed": self.base_seed,
            "config": self.config,
            "levels": [
                {"level": r.level, "seeds": r.summary.seeds, "datasets": r.summary.to_dict()}
                for r in self.results
            ],
        }

    def csv_rows(self, dataset: str = COMPOSITE) -> List[tuple]:
        rows = []
        for r in self.results:
            mean, std = r.summary.mean[dataset], r.summary.std[dataset]
            for label, attr in (("UF1", "uf1"), ("UAR", "uar"), ("ACC", "acc")):
                rows.append((r.level, label, getattr(mean, attr), getattr(std, attr)))
        return rows

    def to_csv(self, dataset: str = COMPOSITE) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["level", "metric", "mean", "std"])
        for level, metric, mean, std in self.csv_rows(dataset):
            w.writerow([f"{level:g}", metric, f"{mean:.6f}", f"{std:.6f}"])
        return buf.getvalue()


def evaluate_level(samples: Sequence[MESample], config: Config, level: float, seed: int,
                   run: int, spotting: bool = False):
    spec = NoiseSpec(level, seed=seed)
    noisy = perturb_samples(samples, spec, run=run, spotting=spotting)
    if config.noise_protocol == "test_only":
        return evaluate_cde(samples, config, seed, test_samples=noisy)
    return evaluate_cde(noisy, config, seed)


def run_sweep(samples: Sequence[MESample], config: Config, levels: Sequence[float] = DEFAULT_LEVELS,
              n_runs: int = 1, base_seed: int = 0, spotting: bool = False) -> RobustnessReport:
    """Evaluate at each noise level; run i uses seed ``base_seed + i``."""
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    levels = sorted(float(x) for x in levels)
    if any(x < 0 for x in levels):
        raise ValueError("noise levels must be >= 0")
    report = RobustnessReport(levels, config.noise_protocol, config.inputs_mode, n_runs, base_seed,
                              config.to_dict(), spotting=spotting)
    for level in levels:
        runs, seeds = [], []
        for r in range(n_runs):
            seed = base_seed + r
            try:
                res = evaluate_level(samples, config, level, seed, r, spotting)
            except Exception as e:
                raise RuntimeError(f"noise level {level:g}, run {r}: {e}") from e
            runs.append(res.metrics)
            seeds.append(seed)
            log.info("level %g run %d: %s", level, r, res.metrics[COMPOSITE])
        report.results.append(LevelResult(level, summarize_runs(runs, seeds)))
    return report


def degradation_comparison(samples: Sequence[MESample], config: Config, level: float,
                           modes: Sequence[str] = INPUT_MODES, n_runs: int = 1,
                           base_seed: int = 0) -> Dict[str, RunSummary]:
    """Same noise draws, same architecture; only the input range differs per mode."""
    out = {}
    for mode in modes:
        rep = run_sweep(samples, config.replace(inputs_mode=mode), [level], n_runs, base_seed)
        out[mode] = rep.results[0].summary
    return out
