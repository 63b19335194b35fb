"""Per-sample stage DAG with a content-addressed, resumable cache.

Every stage output is stored under a digest of its canonical request and
the keys of the stages it was conditioned on::

    <output_root>/cache/<stage>/<key[:2]>/<key>/response.json (+ assets)

Entries are published by renaming a fully written staging directory, so
an entry is either complete or absent. Run state is nothing more than the
set of published entries; resuming a run is running it again.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import shutil
import threading
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from .annotations import (
    EXACTLY_THREE_REMINDER,
    build_caption_prompt,
    build_vqa_prompt,
    counts_to_qa,
    parse_caption_response,
    parse_vqa_response,
)
from .backends.gateway import BackendEndpoint, Gateway, HttpTransport
from .backends.mocks import mock_suite
from .backends.types import (
    RESPONSE_TYPES,
    AudioRequest,
    CaptionRequest,
    ConditioningMode,
    PropagateRequest,
    SegmentRequest,
    StageKind,
    StageRequest,
    StageResponse,
    VideoRequest,
    VqaRequest,
)
from .coco import DatasetIndex, ImageRecord, count_labels
from .config import PipelineConfig
from .errors import BadResponse, ConfigInvalid, OutputRootUnwritable, UnknownImage, WrongPairCount
from .store import SampleManifest, finalize_dataset, is_remote, remove_stale_temp, write_sample

logger = logging.getLogger(__name__)

# (stage, stages it must come after)
STAGE_DEPENDENCIES: dict[StageKind, tuple[StageKind, ...]] = {
    StageKind.CAPTION: (),
    StageKind.VQA: (StageKind.CAPTION,),
    StageKind.VIDEO: (StageKind.CAPTION,),
    StageKind.SEGMENT: (StageKind.VIDEO,),
    StageKind.PROPAGATE: (StageKind.VIDEO, StageKind.SEGMENT),
    StageKind.AUDIO: (StageKind.VIDEO, StageKind.CAPTION),
}
STAGE_ORDER = (
    StageKind.CAPTION, StageKind.VQA, StageKind.VIDEO, StageKind.SEGMENT, StageKind.PROPAGATE, StageKind.AUDIO,
)


def plan_sample(image: ImageRecord, config: PipelineConfig) -> list[StageKind]:
    return [k for k in STAGE_ORDER if k != StageKind.AUDIO or config.audio_enabled]


def stage_key(kind: StageKind, canonical_request: bytes, upstream: Sequence[str] = (), salt: str = "") -> str:
    h = hashlib.sha256()
    h.update(StageKind(kind).value.encode("ascii"))
    h.update(b"\x00")
    h.update(salt.encode("utf-8"))
    h.update(b"\x00")
    h.update(len(canonical_request).to_bytes(8, "big"))
    h.update(canonical_request)
    for key in upstream:
        h.update(b"\x00")
        h.update(key.encode("ascii"))
    return h.hexdigest()


def sample_seed(seed: int, image_id: int) -> int:
    """Run seed mixed with a digest of the image id (adding images never shifts others)."""
    digest = hashlib.sha256(f"image:{image_id}".encode()).digest()
    return (seed ^ int.from_bytes(digest[:4], "big")) & 0xFFFFFFFF


class StageCache:
    def __init__(self, output_root: str | Path):
        self.root = Path(output_root) / "cache"
        self.staging = self.root / ".staging"
        self._locks: dict[str, threading.Lock] = {}
        self._guard = threading.Lock()

    def entry_dir(self, kind: StageKind, key: str) -> Path:
        return self.root / kind.value / key[:2] / key

    def lock(self, key: str) -> threading.Lock:
        with self._guard:
            return self._locks.setdefault(key, threading.Lock())

    def load(self, kind: StageKind, key: str) -> dict | None:
        path = self.entry_dir(kind, key) / "response.json"
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            return None

    def publish(self, kind: StageKind, key: str, produce: Callable[[Path], dict]) -> dict:
        """Run ``produce(staging_dir)`` and atomically move the result into place."""
        final = self.entry_dir(kind, key)
        stage_dir = self.staging / f"{key}.{uuid.uuid4().hex}"
        stage_dir.mkdir(parents=True)
        try:
            reply = produce(stage_dir)
            (stage_dir / "response.json").write_text(
                json.dumps(reply, sort_keys=True, separators=(",", ":"), ensure_ascii=False), encoding="utf-8")
            final.parent.mkdir(parents=True, exist_ok=True)
            try:
                os.rename(stage_dir, final)
            except OSError:
                if not (final / "response.json").exists():
                    raise
                # another writer published first; keep theirs
                shutil.rmtree(stage_dir, ignore_errors=True)
        except BaseException:
            shutil.rmtree(stage_dir, ignore_errors=True)
            raise
        return reply

    def clear_staging(self) -> None:
        """Drop leftovers of writers that died mid-publish."""
        shutil.rmtree(self.staging, ignore_errors=True)


@dataclass
class Failure:
    image_id: int
    stage: str
    error: str

    def to_json(self) -> dict:
        return {"image_id": self.image_id, "stage": self.stage, "error": self.error}


@dataclass
class RunReport:
    samples_total: int = 0
    samples_succeeded: int = 0
    samples_failed: int = 0
    samples_pending: int = 0
    cache_hits: int = 0
    backend_calls: int = 0
    wall_time: float = 0.0
    failures: list[Failure] = field(default_factory=list)

    def merge(self, other: "RunReport") -> None:
        self.samples_total += other.samples_total
        self.samples_succeeded += other.samples_succeeded
        self.samples_failed += other.samples_failed
        self.samples_pending += other.samples_pending
        self.cache_hits += other.cache_hits
        self.backend_calls += other.backend_calls
        self.failures.extend(other.failures)

    @property
    def ok(self) -> bool:
        return self.samples_failed == 0

    def to_json(self) -> dict:
        return {
            "samples_total": self.samples_total,
            "samples_succeeded": self.samples_succeeded,
            "samples_failed": self.samples_failed,
            "samples_pending": self.samples_pending,
            "cache_hits": self.cache_hits,
            "backend_calls": self.backend_calls,
            "wall_time": round(self.wall_time, 3),
            "failures": [f.to_json() for f in sorted(self.failures, key=lambda f: f.image_id)],
        }


class StageFailed(Exception):
    def __init__(self, stage: StageKind, cause: BaseException):
        super().__init__(f"{stage.value}: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


def build_gateway(config: PipelineConfig) -> Gateway:
    if config.mock:
        suite = mock_suite(config.seed)
        endpoints = {k: BackendEndpoint(k, base_url=f"mock://seed-{config.seed}") for k in suite}
        return Gateway(endpoints, suite)
    transport = HttpTransport(token=config.token)
    return Gateway(config.endpoints, {k: transport for k in config.endpoints})


@dataclass
class _Stage:
    key: str
    response: StageResponse
    rel_dir: str


class Pipeline:
    """Executes the stage chain for one sample at a time; safe to share across threads."""

    def __init__(self, config: PipelineConfig, index: DatasetIndex, gateway: Gateway):
        self.config = config
        self.index = index
        self.gateway = gateway
        self.root = Path(config.output_root)
        self.cache = StageCache(self.root)

    def _salt(self, kind: StageKind) -> str:
        return self.gateway.endpoint(kind).base_url

    def _run_stage(self, request: StageRequest, upstream: Sequence[str], report: RunReport) -> _Stage:
        kind = request.kind
        key = stage_key(kind, request.canonical(), upstream, self._salt(kind))
        rel_dir = self.cache.entry_dir(kind, key).relative_to(self.root).as_posix()
        with self.cache.lock(key):
            reply = self.cache.load(kind, key)
            if reply is not None:
                report.cache_hits += 1
            else:
                def produce(stage_dir: Path) -> dict:
                    report.backend_calls += 1
                    return self.gateway.call(request, asset_dir=stage_dir).to_json()
                reply = self.cache.publish(kind, key, produce)
        return _Stage(key, RESPONSE_TYPES[kind].from_json(reply), rel_dir)

    def _asset(self, stage: _Stage, ref: str) -> str:
        return ref if is_remote(ref) or os.path.isabs(ref) else f"{stage.rel_dir}/{ref}"

    def _image_ref(self, image: ImageRecord) -> str:
        if self.config.image_root:
            return f"{self.config.image_root.rstrip('/')}/{image.file_name}"
        return image.file_name

    def run_sample(self, image_id: int, report: RunReport) -> SampleManifest:
        cfg = self.config
        image = self.index.images.get(image_id)
        if image is None:
            raise UnknownImage(image_id)
        label = count_labels(image_id, self.index)
        categories = sorted(label.per_category)
        seed = sample_seed(cfg.seed, image_id)
        image_ref = self._image_ref(image)
        stage = StageKind.CAPTION
        try:
            caption_req = CaptionRequest(build_caption_prompt(image, categories), image_ref, seed)
            caption = self._run_stage(caption_req, (), report)
            caption_rec = parse_caption_response(image_id, caption.response.text)

            stage = StageKind.VQA
            vqa = self._run_vqa(image, caption_rec, image_ref, seed, caption.key, report)

            stage = StageKind.VIDEO
            video_req = VideoRequest(
                caption=caption_rec.text if cfg.conditioning_mode != ConditioningMode.IMAGE_ONLY else "",
                image_ref=image_ref if cfg.conditioning_mode != ConditioningMode.TEXT_ONLY else None,
                conditioning_mode=cfg.conditioning_mode,
                num_frames=cfg.num_frames,
                fps=cfg.fps,
                seed=seed,
                width=cfg.frame_width,
                height=cfg.frame_height,
            )
            video = self._run_stage(video_req, (caption.key,), report)
            frames = [self._asset(video, r) for r in video.response.frame_refs]

            stage = StageKind.SEGMENT
            seg_req = SegmentRequest(frames[0], tuple(categories), cfg.frame_width, cfg.frame_height, seed)
            seg = self._run_stage(seg_req, (video.key,), report)

            stage = StageKind.PROPAGATE
            prop_req = PropagateRequest(tuple(frames), seg.response.objects, seed)
            prop = self._run_stage(prop_req, (video.key, seg.key), report)

            audio_ref = None
            if cfg.audio_enabled:
                stage = StageKind.AUDIO
                audio = self._run_stage(AudioRequest(tuple(frames), caption_rec.text, seed),
                                        (video.key, caption.key), report)
                audio_ref = self._asset(audio, audio.response.audio_ref)
        except Exception as exc:
            raise StageFailed(stage, exc) from exc

        return SampleManifest(
            image_id=image_id,
            image_ref=image_ref,
            caption=caption_rec,
            count_label=label,
            vqa=vqa,
            counting_qa=counts_to_qa(label),
            video=frames,
            tracks=sorted(prop.response.tracks, key=lambda t: t.object_id),
            audio_ref=audio_ref,
        )

    def _run_vqa(self, image, caption_rec, image_ref, seed, caption_key, report):
        prompt = build_vqa_prompt(image, caption_rec)
        request = VqaRequest(prompt, image_ref, seed)
        try:
            stage = self._run_stage(request, (caption_key,), report)
        except BadResponse as exc:
            if not isinstance(exc.__cause__, WrongPairCount):
                raise
            logger.info("image %s: VQA reply had the wrong pair count, asking once more", image.id)
            retry = VqaRequest(f"{prompt}\n{EXACTLY_THREE_REMINDER}", image_ref, seed)
            stage = self._run_stage(retry, (caption_key,), report)
        return parse_vqa_response(stage.response.text, image.id)


def _check_output_root(root: Path) -> None:
    try:
        root.mkdir(parents=True, exist_ok=True)
        probe = root / f".write-probe-{uuid.uuid4().hex}"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as exc:
        raise OutputRootUnwritable(f"cannot write to {root}: {exc}") from exc


def execute_run(
    config: PipelineConfig,
    index: DatasetIndex,
    image_ids: Sequence[int],
    gateway: Gateway | None = None,
    stop_event: threading.Event | None = None,
) -> RunReport:
    """Generate every sample in ``image_ids`` and write the dataset manifest.

    Samples run concurrently (``config.max_workers``); stages within a sample
    run in order. A failing stage fails only its sample. Setting
    ``stop_event`` drains the run: samples already started finish, the rest
    are reported as pending.
    """
    config.validate()
    missing = [i for i in image_ids if i not in index.images]
    if missing:
        raise ConfigInvalid(f"image ids not in the dataset: {missing[:10]}")
    root = Path(config.output_root)
    _check_output_root(root)
    gateway = gateway or build_gateway(config)
    pipeline = Pipeline(config, index, gateway)
    pipeline.cache.clear_staging()
    remove_stale_temp(root)

    started = time.monotonic()
    total = RunReport()
    merge_lock = threading.Lock()

    def work(image_id: int) -> None:
        part = RunReport()
        if stop_event is not None and stop_event.is_set():
            part.samples_pending = 1
        else:
            part.samples_total = 1
            try:
                manifest = pipeline.run_sample(image_id, part)
                write_sample(manifest, root)
                part.samples_succeeded = 1
            except StageFailed as exc:
                logger.warning("image %s failed at %s: %s", image_id, exc.stage.value, exc.cause)
                part.samples_failed = 1
                part.failures.append(Failure(image_id, exc.stage.value, f"{type(exc.cause).__name__}: {exc.cause}"))
            except Exception as exc:
                logger.warning("image %s failed while writing: %s", image_id, exc)
                part.samples_failed = 1
                part.failures.append(Failure(image_id, "store", f"{type(exc).__name__}: {exc}"))
        with merge_lock:
            total.merge(part)

    ordered = sorted(dict.fromkeys(image_ids))
    if config.max_workers == 1:
        for image_id in ordered:
            work(image_id)
    else:
        with ThreadPoolExecutor(max_workers=config.max_workers, thread_name_prefix="sample") as pool:
            for fut in [pool.submit(work, i) for i in ordered]:
                fut.result()

    if any(root.glob("manifest-*.jsonl")):
        finalize_dataset(root)
    total.wall_time = time.monotonic() - started
    (root / "run_report.json").write_text(json.dumps(total.to_json(), indent=2) + "\n", encoding="utf-8")
    return total
