"""Sample manifests on disk, training-set export, subsets and splits.

Layout under a dataset root::

    manifest-<shard>.jsonl        one sample per line, shard = image_id // 1000
    assets/<image_id>/tracks.json mask tracks referenced from the manifest
    exports/<supervision>.jsonl   training records {image_id, inputs, target}

Asset paths inside a manifest are relative to the dataset root (URLs are
left untouched).
"""

from __future__ import annotations

import enum
import json
import logging
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .annotations import CaptionRecord, VqaPair, VqaSet, counts_to_qa
from .coco import CountLabel
from .errors import InvariantViolation, IoFailure, SizeExceedsDataset
from .masks import MaskTrack

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SHARD_SIZE = 1000
DEFAULT_TRAIN_SIZE = 5000
DEFAULT_VAL_SIZE = 1000


def shard_name(image_id: int) -> str:
    return f"manifest-{image_id // SHARD_SIZE:05d}.jsonl"


def is_remote(ref: str) -> bool:
    return "://" in ref


@dataclass
class SampleManifest:
    image_id: int
    image_ref: str
    caption: CaptionRecord
    count_label: CountLabel
    vqa: VqaSet
    counting_qa: list[VqaPair]
    video: list[str]
    tracks: list[MaskTrack] = field(default_factory=list)
    audio_ref: str | None = None

    def check(self) -> None:
        if len(self.vqa.pairs) != 3:
            raise InvariantViolation(f"sample {self.image_id}: {len(self.vqa.pairs)} VQA pairs")
        if not self.video:
            raise InvariantViolation(f"sample {self.image_id}: empty video")
        for t in self.tracks:
            if len(t) != len(self.video):
                raise InvariantViolation(
                    f"sample {self.image_id}: track {t.object_id} has {len(t)} frames, video has {len(self.video)}")
        if self.caption.image_id != self.image_id or self.count_label.image_id != self.image_id:
            raise InvariantViolation(f"sample {self.image_id}: annotation records belong to another image")

    def tracks_path(self) -> str:
        return f"assets/{self.image_id}/tracks.json"

    def to_json(self) -> dict:
        return {
            "image_id": self.image_id,
            "image_ref": self.image_ref,
            "caption": self.caption.to_json(),
            "count_label": self.count_label.to_json(),
            "vqa": self.vqa.to_json(),
            "counting_qa": [p.to_json() for p in self.counting_qa],
            "video": list(self.video),
            "tracks": [
                {"object_id": t.object_id, "category": t.category, "ref": self.tracks_path()}
                for t in self.tracks
            ],
            "audio_ref": self.audio_ref,
        }

    @classmethod
    def from_json(cls, obj: dict, root: str | Path) -> "SampleManifest":
        tracks: list[MaskTrack] = []
        refs = obj.get("tracks", [])
        if refs:
            by_id = _read_tracks(Path(root) / refs[0]["ref"])
            tracks = [by_id[int(r["object_id"])] for r in refs]
        return cls(
            image_id=int(obj["image_id"]),
            image_ref=obj["image_ref"],
            caption=CaptionRecord.from_json(obj["caption"]),
            count_label=CountLabel.from_json(obj["count_label"]),
            vqa=VqaSet.from_json(obj["vqa"]),
            counting_qa=[VqaPair.from_json(p) for p in obj["counting_qa"]],
            video=list(obj["video"]),
            tracks=tracks,
            audio_ref=obj.get("audio_ref"),
        )


def _read_tracks(path: Path) -> dict[int, MaskTrack]:
    doc = json.loads(path.read_text(encoding="utf-8"))
    return {int(t["object_id"]): MaskTrack.from_json(t) for t in doc["tracks"]}


@dataclass
class DatasetManifest:
    samples: list[SampleManifest] = field(default_factory=list)
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        ids = [s.image_id for s in self.samples]
        if any(b <= a for a, b in zip(ids, ids[1:])):
            raise InvariantViolation("dataset samples must be sorted by strictly increasing image_id")

    def __len__(self) -> int:
        return len(self.samples)

    def image_ids(self) -> list[int]:
        return [s.image_id for s in self.samples]

    def get(self, image_id: int) -> SampleManifest:
        for s in self.samples:
            if s.image_id == image_id:
                return s
        raise KeyError(image_id)


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(f".{path.name}.{os.getpid()}.{threading.get_ident()}.tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def remove_stale_temp(root: str | Path) -> int:
    """Delete temp files left by writers that were killed before their rename."""
    root = Path(root)
    stale = [*root.glob(".*.tmp"), *root.glob("assets/*/.*.tmp"), *root.glob("exports/.*.tmp")]
    for path in stale:
        path.unlink(missing_ok=True)
    return len(stale)


_shard_locks: dict[str, threading.Lock] = {}
_shard_locks_guard = threading.Lock()


def _shard_lock(path: Path) -> threading.Lock:
    key = str(path.resolve())
    with _shard_locks_guard:
        return _shard_locks.setdefault(key, threading.Lock())


def write_sample(manifest: SampleManifest, root: str | Path) -> Path:
    """Append ``manifest`` as one line to its shard under ``root``.

    The tracks file is published first (atomic rename), then the manifest
    line is appended with a single ``write`` so readers never see a partial
    record.
    """
    manifest.check()
    root = Path(root)
    try:
        asset_dir = root / "assets" / str(manifest.image_id)
        asset_dir.mkdir(parents=True, exist_ok=True)
        tracks_doc = {"tracks": [t.to_json() for t in manifest.tracks]}
        _atomic_write(root / manifest.tracks_path(), (_dumps(tracks_doc) + "\n").encode("utf-8"))
        line = (_dumps(manifest.to_json()) + "\n").encode("utf-8")
        path = root / shard_name(manifest.image_id)
        with _shard_lock(path):
            fd = os.open(path, os.O_RDWR | os.O_APPEND | os.O_CREAT, 0o644)
            try:
                size = os.fstat(fd).st_size
                # a crash can leave a torn last line; terminate it so it cannot swallow ours
                if size and os.pread(fd, 1, size - 1) != b"\n":
                    line = b"\n" + line
                os.write(fd, line)
            finally:
                os.close(fd)
    except OSError as exc:
        raise IoFailure(f"could not write sample {manifest.image_id} under {root}: {exc}") from exc
    return path


def _iter_shard_lines(path: Path) -> Iterable[dict]:
    with open(path, "rb") as fh:
        for raw in fh:
            if not raw.endswith(b"\n"):
                logger.warning("%s: ignoring incomplete trailing line", path)
                break
            try:
                yield json.loads(raw)
            except ValueError:
                logger.warning("%s: skipping unreadable line", path)


def read_dataset(root: str | Path) -> DatasetManifest:
    """Load every shard under ``root``; later lines win for repeated image ids."""
    root = Path(root)
    records: dict[int, dict] = {}
    for path in sorted(root.glob("manifest-*.jsonl")):
        for obj in _iter_shard_lines(path):
            records[int(obj["image_id"])] = obj
    return DatasetManifest([SampleManifest.from_json(records[i], root) for i in sorted(records)])


def finalize_dataset(root: str | Path) -> DatasetManifest:
    """Rewrite every shard in canonical order (sorted, one line per image id)."""
    root = Path(root)
    by_shard: dict[Path, dict[int, dict]] = {}
    for path in sorted(root.glob("manifest-*.jsonl")):
        recs = by_shard.setdefault(path, {})
        for obj in _iter_shard_lines(path):
            recs[int(obj["image_id"])] = obj
    for path, recs in by_shard.items():
        text = "".join(_dumps(recs[i]) + "\n" for i in sorted(recs))
        with _shard_lock(path):
            _atomic_write(path, text.encode("utf-8"))
    return read_dataset(root)


def _rebase(ref: str, src: Path, dst: Path) -> str:
    if is_remote(ref) or os.path.isabs(ref):
        return ref
    return os.path.relpath(src / ref, dst)


def write_dataset(dataset: DatasetManifest, root: str | Path, source_root: str | Path | None = None) -> Path:
    """Write a whole manifest under ``root`` in canonical shard layout.

    When the samples were read from ``source_root``, relative asset paths are
    rewritten so they still resolve from the new root.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for old in root.glob("manifest-*.jsonl"):
        old.unlink()
    src = Path(source_root) if source_root is not None else root
    shards: dict[str, list[str]] = {}
    for s in dataset.samples:
        s.check()
        obj = s.to_json()
        obj["video"] = [_rebase(r, src, root) for r in s.video]
        if s.audio_ref:
            obj["audio_ref"] = _rebase(s.audio_ref, src, root)
        (root / "assets" / str(s.image_id)).mkdir(parents=True, exist_ok=True)
        _atomic_write(root / s.tracks_path(),
                      (_dumps({"tracks": [t.to_json() for t in s.tracks]}) + "\n").encode("utf-8"))
        shards.setdefault(shard_name(s.image_id), []).append(_dumps(obj) + "\n")
    for name, lines in shards.items():
        _atomic_write(root / name, "".join(lines).encode("utf-8"))
    (root / "dataset.json").write_text(_dumps({"schema_version": dataset.schema_version,
                                               "samples": len(dataset)}) + "\n", encoding="utf-8")
    return root


# --- export -----------------------------------------------------------------

class Supervision(str, enum.Enum):
    CAPTIONS = "captions"
    CAPTIONS_PLUS_VQA = "captions_plus_vqa"
    VQA_ONLY = "vqa_only"


@dataclass(frozen=True)
class ExportConfig:
    supervision: Supervision = Supervision.CAPTIONS_PLUS_VQA
    include_counting_qa: bool = False

    def __post_init__(self):
        object.__setattr__(self, "supervision", Supervision(self.supervision))


CAPTION_INSTRUCTION = "Describe what happens in this video."


def _qa_record(sample: SampleManifest, pair: VqaPair, source: str) -> dict:
    return {
        "image_id": sample.image_id,
        "inputs": {"video": list(sample.video), "image": sample.image_ref, "question": pair.question},
        "target": pair.answer,
        "source": source,
    }


def export_training_set(dataset: DatasetManifest, config: ExportConfig) -> list[dict]:
    """Supervision records in canonical order.

    Per sample: ``captions`` gives 1 record; ``captions_plus_vqa`` gives
    1 + 3 (+ counting QA); ``vqa_only`` gives 3 (+ counting QA).
    """
    out: list[dict] = []
    for s in dataset.samples:
        if config.supervision in (Supervision.CAPTIONS, Supervision.CAPTIONS_PLUS_VQA):
            out.append({
                "image_id": s.image_id,
                "inputs": {"video": list(s.video), "image": s.image_ref, "question": CAPTION_INSTRUCTION},
                "target": s.caption.text,
                "source": "caption",
            })
        if config.supervision == Supervision.CAPTIONS:
            continue
        out.extend(_qa_record(s, p, "vqa") for p in s.vqa.pairs)
        if config.include_counting_qa:
            pairs = s.counting_qa or counts_to_qa(s.count_label)
            out.extend(_qa_record(s, p, "counting") for p in pairs)
    return out


def write_export(records: Sequence[dict], root: str | Path, supervision: Supervision | str) -> Path:
    path = Path(root) / "exports" / f"{Supervision(supervision).value}.jsonl"
    path.parent.mkdir(parents=True, exist_ok=True)
    _atomic_write(path, "".join(_dumps(r) + "\n" for r in records).encode("utf-8"))
    return path


# --- subsets and splits -----------------------------------------------------

@dataclass(frozen=True)
class SubsetSpec:
    size: int
    seed: int = 0


def _permutation(n: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).permutation(n)


def subset(dataset: DatasetManifest, spec: SubsetSpec) -> DatasetManifest:
    """Seeded shuffle, then a prefix of ``spec.size``, so smaller draws nest in larger ones."""
    n = len(dataset)
    if spec.size < 0 or spec.size > n:
        raise SizeExceedsDataset(f"subset of {spec.size} requested from {n} samples")
    chosen = np.sort(_permutation(n, spec.seed)[: spec.size])
    return DatasetManifest([dataset.samples[i] for i in chosen], dataset.schema_version)


def split(dataset: DatasetManifest, train_size: int = DEFAULT_TRAIN_SIZE, val_size: int = DEFAULT_VAL_SIZE,
          seed: int = 0) -> tuple[DatasetManifest, DatasetManifest]:
    n = len(dataset)
    if train_size < 0 or val_size < 0 or train_size + val_size > n:
        raise SizeExceedsDataset(f"split {train_size}+{val_size} requested from {n} samples")
    perm = _permutation(n, seed)
    train_idx = np.sort(perm[:train_size])
    val_idx = np.sort(perm[train_size:train_size + val_size])
    train = DatasetManifest([dataset.samples[i] for i in train_idx], dataset.schema_version)
    val = DatasetManifest([dataset.samples[i] for i in val_idx], dataset.schema_version)
    leaks = find_leaks(train, val)
    if leaks:
        logger.warning("train/val share %d source image(s): %s", len(leaks), leaks[:10])
    return train, val


def find_leaks(train: DatasetManifest, val: DatasetManifest) -> list[str]:
    """Source images that appear on both sides of a split."""
    train_refs = {s.image_ref for s in train.samples}
    return sorted({s.image_ref for s in val.samples} & train_refs)
