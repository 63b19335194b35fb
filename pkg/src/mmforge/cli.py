"""Command-line entry point: ``mmforge <subcommand> [flags]``.

Exit status: 0 on full success, 1 when some samples (or other work) failed,
2 on configuration or usage errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import signal
import sys
import threading
from pathlib import Path
from typing import Sequence

from . import __version__
from .backends.gateway import BackendEndpoint, Gateway, HttpTransport
from .backends.mocks import mock_suite
from .backends.types import EmbedRequest, StageKind
from .coco import load_dataset, validate_dataset, write_diagnostics
from .config import OUTPUT_ROOT_ENV, PipelineConfig, apply_env, load_config
from .errors import ConfigInvalid, IngestError, MMForgeError, SizeExceedsDataset
from .evaluation import (
    CountingResult,
    EvalReport,
    Taxonomy,
    VqaResult,
    accumulate_class_iou,
    answer_wup,
    embed_score,
    evaluate_counting,
    read_jsonl,
    render_report,
    seg_report,
)
from .masks import RleMask, merge_instances, rle_decode
from .orchestrator import execute_run
from .store import (
    DEFAULT_TRAIN_SIZE,
    DEFAULT_VAL_SIZE,
    ExportConfig,
    Supervision,
    SubsetSpec,
    export_training_set,
    read_dataset,
    split,
    subset,
    write_dataset,
    write_export,
)

logger = logging.getLogger("mmforge")

EXIT_OK, EXIT_PARTIAL, EXIT_USAGE = 0, 1, 2


class UsageError(MMForgeError):
    pass


# One table drives both parsing and --help. Each entry: flag -> argparse kwargs.
FLAGS: dict[str, dict] = {
    "--config": dict(metavar="PATH", type=Path, help="pipeline config file (TOML)"),
    "--mock": dict(action="store_true", help="use the seeded mock backends for every stage"),
    "--seed": dict(metavar="INT", type=int, help="seed for generation, subsets and splits"),
    "--limit": dict(metavar="INT", type=int, help="only process the first N images in id order"),
    "--workers": dict(metavar="INT", type=int, help="samples generated concurrently"),
    "--supervision": dict(choices=[s.value for s in Supervision], help="training configuration to export"),
    "--counting-qa": dict(action="store_true", help="add per-category and total counting questions"),
    "--out": dict(metavar="PATH", type=Path, help="output file or directory"),
    "--task": dict(choices=["counting", "vqa", "segmentation"], help="metric family to evaluate"),
    "--dataset": dict(metavar="PATH", type=Path,
                      help=f"dataset root (default: config output_root, or ${OUTPUT_ROOT_ENV})"),
    "--size": dict(metavar="INT", type=int, help="number of samples to draw"),
    "--train-size": dict(metavar="INT", type=int, default=DEFAULT_TRAIN_SIZE, help="training samples"),
    "--val-size": dict(metavar="INT", type=int, default=DEFAULT_VAL_SIZE, help="validation samples"),
    "--format": dict(choices=["markdown", "csv"], default="markdown", help="report format"),
}

SUBCOMMANDS: dict[str, tuple[str, list[str], list[tuple[str, dict]]]] = {
    "ingest": ("parse a COCO instances file and report violations", ["--out"],
               [("annotations", dict(type=Path, help="COCO instances JSON"))]),
    "generate": ("run the generation pipeline",
                 ["--config", "--mock", "--seed", "--limit", "--workers", "--out"], []),
    "export": ("write a supervision-specific training JSONL",
               ["--config", "--dataset", "--supervision", "--counting-qa", "--out"], []),
    "subset": ("draw a seeded subset of a dataset", ["--config", "--dataset", "--size", "--seed", "--out"], []),
    "split": ("split a dataset into disjoint train/val manifests",
              ["--config", "--dataset", "--train-size", "--val-size", "--seed", "--out"], []),
    "evaluate": ("score predictions and write report files",
                 ["--config", "--dataset", "--task", "--mock", "--seed", "--out"],
                 [("inputs", dict(type=Path, nargs="+",
                                  help="counting: prediction JSONL per model; vqa: taxonomy edge list then "
                                       "prediction JSONL per model; segmentation: baseline and ours, each a "
                                       "per-class IoU JSON map or a mask prediction JSONL"))]),
    "report": ("render a saved evaluation report", ["--format", "--out"],
               [("report_json", dict(type=Path, help="eval_report.json written by evaluate"))]),
    "inspect": ("pretty-print one sample manifest", ["--config", "--dataset"],
                [("image_id", dict(type=int, help="image id to show"))]),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mmforge", description="Synthetic multimodal video dataset pipeline and metrics.")
    parser.add_argument("--version", action="version", version=f"mmforge {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True, metavar="SUBCOMMAND")
    for name, (help_text, flags, positionals) in SUBCOMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        for pos, kwargs in positionals:
            p.add_argument(pos, **kwargs)
        for flag in flags:
            p.add_argument(flag, **FLAGS[flag])
    return parser


# --- helpers ----------------------------------------------------------------

def _config(args) -> PipelineConfig:
    if getattr(args, "config", None):
        return load_config(args.config)
    return apply_env(PipelineConfig(), os.environ)


def _dataset_root(args) -> Path:
    if getattr(args, "dataset", None):
        return args.dataset
    if getattr(args, "config", None) or os.environ.get(OUTPUT_ROOT_ENV):
        return _config(args).output_root
    raise UsageError(f"no dataset given: pass --dataset, --config or set ${OUTPUT_ROOT_ENV}")


def _read(root: Path):
    if not any(root.glob("manifest-*.jsonl")):
        raise UsageError(f"no dataset manifest under {root}")
    return read_dataset(root)


def _print_json(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


# --- subcommands ------------------------------------------------------------

def cmd_ingest(args) -> int:
    index = load_dataset(args.annotations)
    violations = validate_dataset(index)
    n_ann = sum(len(v) for v in index.annotations_by_image.values())
    if args.out:
        write_diagnostics(violations, args.out)
    _print_json({"images": len(index.images), "annotations": n_ann, "categories": len(index.categories),
                 "violations": len(violations)})
    return EXIT_OK


def cmd_generate(args) -> int:
    if not args.config:
        raise UsageError("generate needs --config")
    cfg = load_config(args.config)
    cfg = cfg.with_overrides(seed=args.seed, max_workers=args.workers, output_root=args.out)
    if args.mock:
        cfg.mock = True
    if cfg.annotations is None:
        raise ConfigInvalid("config has no 'annotations' path")
    try:
        index = load_dataset(cfg.annotations)
    except (OSError, IngestError) as exc:
        raise ConfigInvalid(f"cannot load annotations {cfg.annotations}: {exc}") from exc
    ids = index.image_ids()
    if args.limit is not None:
        if args.limit < 0:
            raise UsageError("--limit must be >= 0")
        ids = ids[: args.limit]

    stop = threading.Event()

    def drain(signum, frame):
        logger.warning("signal %s: finishing in-flight samples, starting no new ones", signum)
        stop.set()

    previous = {s: signal.signal(s, drain) for s in (signal.SIGINT, signal.SIGTERM)}
    try:
        report = execute_run(cfg, index, ids, stop_event=stop)
    finally:
        for s, h in previous.items():
            signal.signal(s, h)
    _print_json(report.to_json())
    return EXIT_OK if report.ok and report.samples_pending == 0 else EXIT_PARTIAL


def cmd_export(args) -> int:
    if not args.supervision:
        raise UsageError("export needs --supervision")
    root = _dataset_root(args)
    dataset = _read(root)
    records = export_training_set(dataset, ExportConfig(args.supervision, args.counting_qa))
    if args.out:
        path = args.out
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("".join(json.dumps(r, sort_keys=True, separators=(",", ":"), ensure_ascii=False) + "\n"
                                for r in records), encoding="utf-8")
    else:
        path = write_export(records, root, args.supervision)
    _print_json({"records": len(records), "path": str(path)})
    return EXIT_OK


def cmd_subset(args) -> int:
    if args.size is None or args.out is None:
        raise UsageError("subset needs --size and --out")
    root = _dataset_root(args)
    dataset = _read(root)
    drawn = subset(dataset, SubsetSpec(args.size, args.seed or 0))
    write_dataset(drawn, args.out, source_root=root)
    _print_json({"samples": len(drawn), "out": str(args.out)})
    return EXIT_OK


def cmd_split(args) -> int:
    if args.out is None:
        raise UsageError("split needs --out")
    root = _dataset_root(args)
    dataset = _read(root)
    train, val = split(dataset, args.train_size, args.val_size, args.seed or 0)
    write_dataset(train, args.out / "train", source_root=root)
    write_dataset(val, args.out / "val", source_root=root)
    _print_json({"train": len(train), "val": len(val), "out": str(args.out)})
    return EXIT_OK


def _embed_gateway(args) -> Gateway:
    if args.mock:
        suite = mock_suite(args.seed or 0)
        return Gateway({StageKind.EMBED: BackendEndpoint(StageKind.EMBED)}, {StageKind.EMBED: suite[StageKind.EMBED]})
    cfg = _config(args)
    if StageKind.EMBED not in cfg.endpoints:
        raise ConfigInvalid("vqa evaluation needs an [endpoints.embed] entry or --mock")
    return Gateway({StageKind.EMBED: cfg.endpoints[StageKind.EMBED]},
                   {StageKind.EMBED: HttpTransport(token=cfg.token)})


def _gt_masks(dataset) -> dict[tuple[int, int], dict]:
    """(image_id, frame) -> class -> merged ground-truth mask."""
    out = {}
    for s in dataset.samples:
        for t in range(len(s.video)):
            inst = [(tr.category, rle_decode(tr.frames[t])) for tr in s.tracks]
            out[(s.image_id, t)] = merge_instances(inst)
    return out


def _pred_masks(path: Path) -> dict[tuple[int, int], dict]:
    grouped: dict[tuple[int, int], list] = {}
    for rec in read_jsonl(path):
        for m in rec.get("masks", []):
            key = (int(rec["image_id"]), int(m.get("frame", 0)))
            grouped.setdefault(key, []).append((str(m["category"]), rle_decode(RleMask.from_coco(m))))
    return {k: merge_instances(v) for k, v in grouped.items()}


def _class_ious(path: Path, gt: dict | None) -> dict[str, float]:
    if path.suffix == ".json":
        return {str(k): float(v) for k, v in json.loads(path.read_text(encoding="utf-8")).items()}
    if gt is None:
        raise UsageError(f"{path}: mask predictions need a dataset (--dataset/--config)")
    pred = _pred_masks(path)
    return accumulate_class_iou((pred.get(k, {}), g) for k, g in gt.items())


def cmd_evaluate(args) -> int:
    if not args.task:
        raise UsageError("evaluate needs --task")
    report = EvalReport()
    if args.task == "segmentation":
        if len(args.inputs) != 2:
            raise UsageError("segmentation takes exactly two inputs: baseline and ours")
        needs_gt = any(p.suffix != ".json" for p in args.inputs)
        gt = _gt_masks(_read(_dataset_root(args))) if needs_gt else None
        base, ours = (_class_ious(p, gt) for p in args.inputs)
        report.segmentation = seg_report(base, ours, baseline_label=args.inputs[0].stem,
                                         ours_label=args.inputs[1].stem)
    elif args.task == "counting":
        root = _dataset_root(args)
        dataset = _read(root)
        gt = {s.image_id: s.count_label.total for s in dataset.samples}
        for path in args.inputs:
            m, s = evaluate_counting(read_jsonl(path), gt)
            report.counting.append(CountingResult(root.name, path.stem, m, s))
    else:
        if len(args.inputs) < 2:
            raise UsageError("vqa takes a taxonomy edge list followed by prediction files")
        taxonomy = Taxonomy.from_file(args.inputs[0])
        root = _dataset_root(args)
        dataset = _read(root)
        gateway = _embed_gateway(args)
        for path in args.inputs[1:]:
            wups, scores = [], []
            for rec in read_jsonl(path):
                sample = dataset.get(int(rec["image_id"]))
                expected = sample.vqa.pairs[int(rec.get("pair", 0))].answer
                wups.append(answer_wup(taxonomy, str(rec["answer"]), expected))
                u = gateway.call(EmbedRequest(text=str(rec["answer"]))).vector
                v = gateway.call(EmbedRequest(image_ref=sample.video[0])).vector
                scores.append(embed_score(u, v))
            if not wups:
                raise UsageError(f"{path}: no predictions")
            report.vqa.append(VqaResult(root.name, path.stem, sum(scores) / len(scores), sum(wups) / len(wups)))

    out = args.out or Path(".")
    out.mkdir(parents=True, exist_ok=True)
    (out / "eval_report.json").write_text(json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n",
                                          encoding="utf-8")
    (out / "report.md").write_text(render_report(report, "markdown"), encoding="utf-8")
    (out / "report.csv").write_text(render_report(report, "csv"), encoding="utf-8")
    sys.stdout.write(render_report(report, "markdown"))
    return EXIT_OK


def cmd_report(args) -> int:
    report = EvalReport.from_json(json.loads(args.report_json.read_text(encoding="utf-8")))
    text = render_report(report, args.format)
    if args.out:
        args.out.write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def cmd_inspect(args) -> int:
    dataset = _read(_dataset_root(args))
    try:
        sample = dataset.get(args.image_id)
    except KeyError:
        raise UsageError(f"image {args.image_id} is not in the dataset") from None
    obj = sample.to_json()
    obj["tracks"] = [
        {"object_id": t.object_id, "category": t.category, "frames": len(t), "areas": t.areas()}
        for t in sample.tracks
    ]
    _print_json(obj)
    return EXIT_OK


COMMANDS = {
    "ingest": cmd_ingest, "generate": cmd_generate, "export": cmd_export, "subset": cmd_subset,
    "split": cmd_split, "evaluate": cmd_evaluate, "report": cmd_report, "inspect": cmd_inspect,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigInvalid, SizeExceedsDataset) as exc:
        print(f"mmforge {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (MMForgeError, OSError) as exc:
        print(f"mmforge {args.command}: {exc}", file=sys.stderr)
        return EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())
