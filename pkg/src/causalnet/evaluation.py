"""Leave-one-subject-out evaluation over a composite of datasets."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .config import Config
from .data_model import MESample
from .flow import (DirectionMap, FlowImage, SampleInputs, build_sample_inputs, frame_image,
                   INPUT_SIZE, sample_flows, build_flow_image, compute_direction_map)
from .metrics import ConfusionMatrix, Metrics, compute_metrics, summarize
from .model import TrainingError, predict, save_checkpoint, train

log = logging.getLogger(__name__)

COMPOSITE = "composite"


def subject_key(sample: MESample) -> str:
    return f"{sample.dataset_id.value}/{sample.subject_id}"


def _blank_image() -> FlowImage:
    return FlowImage(np.zeros((INPUT_SIZE, INPUT_SIZE, 3)))


def _blank_direction() -> DirectionMap:
    return DirectionMap(np.zeros((INPUT_SIZE, INPUT_SIZE, 2)), np.zeros((INPUT_SIZE, INPUT_SIZE), bool))


def build_mode_inputs(sample: MESample, config: Config) -> SampleInputs:
    """Model inputs restricted to the configured input range.

    ``full`` uses both flows; ``onset_apex`` blanks the apex->offset branch;
    ``apex_only`` feeds the apex frame in place of the onset->apex flow image
    and blanks everything else. All modes share one architecture.
    """
    mode = config.inputs_mode
    if mode == "full":
        return build_sample_inputs(sample, config.flow_estimator, config.tau)
    if mode == "onset_apex":
        oa, _ = sample_flows(sample, config.flow_estimator)
        return SampleInputs(build_flow_image(oa), _blank_image(),
                            compute_direction_map(oa, config.tau), _blank_direction())
    if mode == "apex_only":
        if sample.frames is None:
            raise ValueError(f"{sample.uid}: apex_only mode needs frames")
        apex = sample.frames[sample.keyframes.apex]
        return SampleInputs(frame_image(apex), _blank_image(), _blank_direction(), _blank_direction())
    raise ValueError(f"unknown inputs mode {mode!r}")


@dataclass(frozen=True)
class Fold:
    subject: str
    train: Tuple[int, ...]
    test: Tuple[int, ...]


def loso_split(samples: Sequence[MESample]) -> List[Fold]:
    """One fold per subject (sorted); indexes refer to ``samples``."""
    keys = [subject_key(s) for s in samples]
    subjects = sorted(set(keys))
    if len(subjects) < 2:
        raise ValueError("LOSO requires >= 2 subjects")
    folds = []
    for subj in subjects:
        test = tuple(i for i, k in enumerate(keys) if k == subj)
        train = tuple(i for i, k in enumerate(keys) if k != subj)
        folds.append(Fold(subj, train, test))
    return folds


@dataclass
class FoldResult:
    subject: str
    uids: List[str]
    datasets: List[str]
    y_true: List[int]
    y_pred: List[int]


@dataclass
class CDEResult:
    folds: List[FoldResult]
    n_classes: int
    confusion: Dict[str, ConfusionMatrix] = field(default_factory=dict)
    metrics: Dict[str, Metrics] = field(default_factory=dict)

    @classmethod
    def from_folds(cls, folds: List[FoldResult], n_classes: int) -> "CDEResult":
        res = cls(folds, n_classes)
        t = [y for f in folds for y in f.y_true]
        p = [y for f in folds for y in f.y_pred]
        d = [x for f in folds for x in f.datasets]
        res.confusion[COMPOSITE] = ConfusionMatrix.from_pairs(t, p, n_classes)
        for name in sorted(set(d)):
            idx = [i for i, x in enumerate(d) if x == name]
            res.confusion[name] = ConfusionMatrix.from_pairs(
                [t[i] for i in idx], [p[i] for i in idx], n_classes)
        res.metrics = {k: compute_metrics(cm) for k, cm in res.confusion.items()}
        return res


def fold_seed(seed: int, fold_index: int) -> int:
    return int(np.random.SeedSequence([seed, fold_index]).generate_state(1)[0])


def evaluate_cde(samples: Sequence[MESample], config: Config, seed: int,
                 test_samples: Optional[Sequence[MESample]] = None,
                 checkpoint_dir: Optional[Path] = None) -> CDEResult:
    """LOSO over the union of subjects with predictions pooled across folds.

    ``test_samples`` optionally replaces the held-out samples (same order,
    e.g. with perturbed key frames) while training uses ``samples``.
    """
    test_samples = samples if test_samples is None else test_samples
    if len(test_samples) != len(samples):
        raise ValueError("test_samples must align with samples")
    folds = loso_split(samples)
    labels = [s.composite_label.index for s in samples]
    if config.oracle:
        train_inputs = test_inputs = None
    else:
        train_inputs = [build_mode_inputs(s, config) for s in samples]
        test_inputs = (train_inputs if test_samples is samples
                       else [build_mode_inputs(s, config) for s in test_samples])
    results = []
    for fi, fold in enumerate(folds):
        y_true = [labels[i] for i in fold.test]
        if config.oracle:
            y_pred = list(y_true)
        else:
            try:
                trained = train([train_inputs[i] for i in fold.train],
                                [labels[i] for i in fold.train], config, fold_seed(seed, fi))
            except TrainingError as e:
                raise TrainingError(f"fold {fold.subject}: {e}", e.epoch) from e
            y_pred = [int(p) for p in predict(trained.model, [test_inputs[i] for i in fold.test])]
            if checkpoint_dir is not None:
                name = fold.subject.replace("/", "_")
                save_checkpoint(Path(checkpoint_dir) / f"fold_{name}.pt", trained.model, config,
                                seed=seed, fold=fold.subject, losses=trained.losses)
        log.info("fold %s: %d/%d correct", fold.subject,
                 sum(a == b for a, b in zip(y_true, y_pred)), len(y_true))
        results.append(FoldResult(
            fold.subject, [samples[i].uid for i in fold.test],
            [samples[i].dataset_id.value for i in fold.test], y_true, y_pred))
    return CDEResult.from_folds(results, config.n_classes)


@dataclass
class RunSummary:
    seeds: List[int]
    runs: List[Dict[str, Metrics]]
    mean: Dict[str, Metrics]
    std: Dict[str, Metrics]

    def to_dict(self) -> dict:
        return {
            name: {**self.mean[name].to_dict(), "std": self.std[name].to_dict()}
            for name in self.mean
        }


def summarize_runs(runs: List[Mapping[str, Metrics]], seeds: List[int]) -> RunSummary:
    mean, std = {}, {}
    for name in runs[0]:
        cols = list(zip(*(r[name] for r in runs)))
        stats = [summarize(c) for c in cols]
        mean[name] = Metrics(*(m for m, _ in stats))
        std[name] = Metrics(*(s for _, s in stats))
    return RunSummary(seeds, [dict(r) for r in runs], mean, std)


def repeat_runs(run: Callable[[int], Mapping[str, Metrics]], n_runs: int, base_seed: int) -> RunSummary:
    """Call ``run(base_seed + i)`` for i < n_runs; mean and population STD per metric."""
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    seeds = [base_seed + i for i in range(n_runs)]
    return summarize_runs([run(s) for s in seeds], seeds)
