"""Command-line interface: synth, train-eval, robustness, visualize.

Exit codes: 0 success, 1 usage error, 2 data error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections import Counter
from datetime import datetime, timezone
from pathlib import Path
from typing import List, Optional

from . import __version__
from .config import DESK_SCALE, INPUT_MODES, NOISE_PROTOCOLS, Config, ConfigError
from .data_model import DatasetId, LabelMapping, LabelMappingError, UnknownEmotionError
from .dataset_io import DatasetError, load_clip, load_dataset, write_dataset
from .evaluation import COMPOSITE, evaluate_cde, repeat_runs
from .flow import build_flow_image, compute_direction_map, sample_flows
from .model import TrainingError
from .robustness import DEFAULT_LEVELS, run_sweep
from .synth import synth_dataset
from .visualize import direction_hue_image, flow_channel_images, write_png

log = logging.getLogger("causalnet")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3
PRESETS = {"reference": Config(), "desk": DESK_SCALE}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _levels(text: str) -> List[float]:
    try:
        levels = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid level list {text!r}") from None
    if not levels:
        raise argparse.ArgumentTypeError("no levels given")
    bad = [x for x in levels if x < 0]
    if bad:
        raise argparse.ArgumentTypeError(f"noise level must be >= 0, got {bad[0]:g}")
    return levels


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--config", type=Path, help="complete key=value config file")
    common.add_argument("--out", type=Path, default=Path("runs"))
    common.add_argument("-q", "--quiet", action="store_true")

    model_opts = _Parser(add_help=False)
    model_opts.add_argument("--data", type=Path, action="append", default=[],
                            help="dataset root (repeatable)")
    model_opts.add_argument("--labels", type=Path, help="raw emotion -> class mapping file")
    model_opts.add_argument("--preset", choices=sorted(PRESETS), default="reference",
                            help="defaults used when --config is not given")
    model_opts.add_argument("--epochs", type=_positive_int, help="override epochs")
    model_opts.add_argument("--inputs-mode", choices=INPUT_MODES)
    model_opts.add_argument("--runs", type=_positive_int, default=1)
    model_opts.add_argument("--oracle", action="store_true",
                            help="debug: predict true labels to check the harness")
    model_opts.add_argument("--dump-config", action="store_true",
                            help="print the resolved configuration and exit")

    p = _Parser(prog="causalnet", description="Micro-expression recognition with CausalNet.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", parents=[common], help="write a synthetic dataset")
    s.add_argument("--subjects", type=int, default=5)
    s.add_argument("--per-subject", type=_positive_int, default=12)
    s.add_argument("--frame-rate", type=_positive_int, default=200)
    s.add_argument("--dataset-id", choices=[d.value for d in DatasetId], default="SYNTH")
    s.add_argument("--subject-prefix", default="s")

    sub.add_parser("train-eval", parents=[common, model_opts],
                   help="LOSO composite evaluation with repeated runs")

    r = sub.add_parser("robustness", parents=[common, model_opts],
                       help="sweep key-frame noise levels")
    r.add_argument("--levels", type=_levels, default=list(DEFAULT_LEVELS))
    r.add_argument("--protocol", choices=NOISE_PROTOCOLS)
    r.add_argument("--spotting", action="store_true",
                   help="simulate apex spotting (onset/offset 25 frames from a noisy apex)")

    v = sub.add_parser("visualize", parents=[common], help="render flows and direction hue maps")
    v.add_argument("--sample", type=Path, required=True, help="clip directory")
    v.add_argument("--tau", type=float, default=0.1)
    v.add_argument("--labels", type=Path)
    return p


def resolve_config(args) -> Config:
    config = Config.load(args.config) if args.config else PRESETS[args.preset]
    changes = {}
    if args.epochs:
        changes["epochs"] = args.epochs
    if args.inputs_mode:
        changes["inputs_mode"] = args.inputs_mode
    if args.oracle:
        changes["oracle"] = True
    if getattr(args, "protocol", None):
        changes["noise_protocol"] = args.protocol
    return config.replace(**changes) if changes else config


def _mapping(args) -> Optional[LabelMapping]:
    return LabelMapping.load(args.labels) if args.labels else None


def _load_samples(args):
    if not args.data:
        raise UsageError("at least one --data root is required")
    mapping = _mapping(args)
    samples = []
    for root in args.data:
        samples.extend(load_dataset(root, mapping))
    log.info("loaded %d samples from %d root(s)", len(samples), len(args.data))
    return samples


def _run_id(seed: int) -> str:
    return f"{datetime.now(timezone.utc).strftime('%Y%m%dT%H%M%SZ')}-seed{seed}"


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cmd_synth(args) -> int:
    if args.subjects < 2:
        raise UsageError("LOSO requires >= 2 subjects")
    samples = synth_dataset(args.subjects, args.per_subject, args.seed, frame_rate=args.frame_rate,
                            dataset_id=DatasetId(args.dataset_id), subject_prefix=args.subject_prefix)
    write_dataset(samples, args.out)
    counts = Counter(s.composite_label.value for s in samples)
    print(f"wrote {len(samples)} clips from {args.subjects} subjects to {args.out / args.dataset_id}")
    for label in sorted(counts):
        print(f"  {label}: {counts[label]}")
    return EXIT_OK


def cmd_train_eval(args) -> int:
    config = resolve_config(args)
    if args.dump_config:
        sys.stdout.write(config.dumps())
        return EXIT_OK
    samples = _load_samples(args)
    run_id = _run_id(args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    ckpt_root = args.out / "checkpoints"
    checkpoints = []

    def run(seed):
        ckpt_dir = None
        if not config.oracle:
            ckpt_dir = ckpt_root / f"seed{seed}"
            ckpt_dir.mkdir(parents=True, exist_ok=True)
        try:
            res = evaluate_cde(samples, config, seed, checkpoint_dir=ckpt_dir)
        except TrainingError as e:
            raise TrainingError(f"run seed={seed}: {e}", e.epoch) from e
        if ckpt_dir is not None:
            checkpoints.extend(sorted(str(p.relative_to(args.out)) for p in ckpt_dir.glob("*.pt")))
        log.info("seed %d: %s", seed, res.metrics[COMPOSITE])
        return res.metrics

    summary = repeat_runs(run, args.runs, args.seed)
    (args.out / "config.txt").write_text(config.dumps())
    metrics = {"run_id": run_id, "config": config.to_dict(), "seeds": summary.seeds,
               "datasets": summary.to_dict()}
    _write_json(args.out / "metrics.json", metrics)
    _write_json(args.out / "manifest.json", {
        "run_id": run_id, "tool_version": __version__, "config": config.to_dict(),
        "data": [str(d) for d in args.data], "seed": args.seed, "runs": args.runs,
        "artifacts": {"metrics": "metrics.json", "config": "config.txt", "checkpoints": checkpoints},
    })
    for name, entry in summary.to_dict().items():
        print(f"{name}: " + "  ".join(
            f"{k} {entry[k] * 100:.2f}_{{{entry['std'][k] * 100:.2f}}}" for k in ("UF1", "UAR", "ACC")))
    return EXIT_OK


def plot_report(report, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = report.csv_rows()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for metric in ("UF1", "UAR", "ACC"):
        pts = [(lvl, m, s) for lvl, name, m, s in rows if name == metric]
        xs = [p[0] for p in pts]
        ax.errorbar(xs, [p[1] for p in pts], yerr=[p[2] for p in pts], marker="o", capsize=3, label=metric)
    ax.set_xlabel("key-frame error STD (frames @ 200 fps)")
    ax.set_ylabel("score")
    ax.set_ylim(0, 1.05)
    ax.set_xticks(report.levels)
    ax.legend()
    ax.set_title(f"{report.inputs_mode} inputs, {report.protocol} noise")
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)


def cmd_robustness(args) -> int:
    config = resolve_config(args)
    if args.dump_config:
        sys.stdout.write(config.dumps())
        return EXIT_OK
    samples = _load_samples(args)
    report = run_sweep(samples, config, args.levels, args.runs, args.seed, spotting=args.spotting)
    args.out.mkdir(parents=True, exist_ok=True)
    _write_json(args.out / "robustness.json", {"run_id": _run_id(args.seed), "tool_version": __version__,
                                               **report.to_dict()})
    (args.out / "robustness.csv").write_text(report.to_csv())
    plot_report(report, args.out / "robustness.png")
    print(report.to_csv(), end="")
    return EXIT_OK


def cmd_visualize(args) -> int:
    sample = load_clip(args.sample, mapping=_mapping(args))
    if sample is None:
        raise DatasetError(f"{args.sample}: clip excluded by the label mapping")
    args.out.mkdir(parents=True, exist_ok=True)
    for phase, flow in zip(("onset_apex", "apex_offset"), sample_flows(sample)):
        write_png(args.out / f"{phase}_direction.png", direction_hue_image(compute_direction_map(flow, args.tau)))
        for name, img in flow_channel_images(build_flow_image(flow)).items():
            write_png(args.out / f"{phase}_{name}.png", img)
    print(f"wrote direction and flow maps for {sample.uid} to {args.out}")
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "train-eval": cmd_train_eval,
    "robustness": cmd_robustness,
    "visualize": cmd_visualize,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(asctime)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as e:
        print(f"causalnet {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DatasetError, UnknownEmotionError, LabelMappingError, FileNotFoundError) as e:
        print(f"causalnet {args.command}: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except Exception as e:  # noqa: BLE001 - surfaced as a runtime failure exit code
        log.debug("runtime failure", exc_info=True)
        print(f"causalnet {args.command}: runtime failure: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
