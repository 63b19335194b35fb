"""Request/response contracts for every generation stage.

Each request serializes to the JSON body posted to ``/v1/<stage>``; each
response knows how to check itself against the request that produced it.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from typing import Any, ClassVar, Mapping, Sequence

from ..annotations import parse_vqa_response
from ..errors import AnnotationError, BadResponse, InvalidRequest
from ..masks import MaskTrack, RleMask

DEFAULT_NUM_FRAMES = 16
DEFAULT_FPS = 8
DEFAULT_FRAME_SIZE = (32, 32)
EMBED_DIM = 64


class StageKind(str, enum.Enum):
    CAPTION = "caption"
    VQA = "vqa"
    VIDEO = "video"
    SEGMENT = "segment"
    PROPAGATE = "propagate"
    AUDIO = "audio"
    # not part of the per-sample DAG; used by evaluation
    EMBED = "embed"

    @property
    def path(self) -> str:
        return f"/v1/{self.value}"


class ConditioningMode(str, enum.Enum):
    TEXT_ONLY = "text_only"
    IMAGE_ONLY = "image_only"
    BOTH = "both"


def canonical_json(obj: Any) -> bytes:
    """Deterministic serialization: sorted keys, no whitespace, UTF-8."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def _require(cond: bool, msg: str, exc=InvalidRequest):
    if not cond:
        raise exc(msg)


class StageRequest:
    kind: ClassVar[StageKind]

    def validate(self) -> None:
        pass

    def to_json(self) -> dict:
        raise NotImplementedError

    def canonical(self) -> bytes:
        return canonical_json(self.to_json())


class StageResponse:
    @classmethod
    def from_json(cls, obj: Mapping) -> "StageResponse":
        raise NotImplementedError

    def to_json(self) -> dict:
        raise NotImplementedError

    def validate(self, request: StageRequest) -> None:
        pass


# --- caption / vqa ----------------------------------------------------------

@dataclass(frozen=True)
class CaptionRequest(StageRequest):
    kind: ClassVar[StageKind] = StageKind.CAPTION
    prompt: str
    image_ref: str | None = None
    seed: int = 0

    def validate(self):
        _require(bool(self.prompt), "caption prompt is empty")

    def to_json(self):
        return {"prompt": self.prompt, "image_ref": self.image_ref, "seed": self.seed}


@dataclass(frozen=True)
class CaptionResponse(StageResponse):
    text: str

    @classmethod
    def from_json(cls, obj):
        return cls(str(obj["text"]))

    def to_json(self):
        return {"text": self.text}

    def validate(self, request):
        _require(bool(self.text.strip()), "caption reply is empty", BadResponse)


@dataclass(frozen=True)
class VqaRequest(StageRequest):
    kind: ClassVar[StageKind] = StageKind.VQA
    prompt: str
    image_ref: str | None = None
    seed: int = 0

    def validate(self):
        _require(bool(self.prompt), "vqa prompt is empty")

    def to_json(self):
        return {"prompt": self.prompt, "image_ref": self.image_ref, "seed": self.seed}


@dataclass(frozen=True)
class VqaResponse(StageResponse):
    text: str

    @classmethod
    def from_json(cls, obj):
        return cls(str(obj["text"]))

    def to_json(self):
        return {"text": self.text}

    def validate(self, request):
        try:
            parse_vqa_response(self.text)
        except AnnotationError as exc:
            raise BadResponse(f"vqa reply rejected: {exc}") from exc


# --- video ------------------------------------------------------------------

@dataclass(frozen=True)
class VideoRequest(StageRequest):
    kind: ClassVar[StageKind] = StageKind.VIDEO
    caption: str
    image_ref: str | None = None
    conditioning_mode: ConditioningMode = ConditioningMode.BOTH
    num_frames: int = DEFAULT_NUM_FRAMES
    fps: int = DEFAULT_FPS
    seed: int = 0
    width: int = DEFAULT_FRAME_SIZE[0]
    height: int = DEFAULT_FRAME_SIZE[1]

    def __post_init__(self):
        object.__setattr__(self, "conditioning_mode", ConditioningMode(self.conditioning_mode))

    def validate(self):
        _require(self.num_frames >= 1, "num_frames must be >= 1")
        _require(self.fps > 0, "fps must be positive")
        _require(self.width > 0 and self.height > 0, "frame size must be positive")
        if self.conditioning_mode != ConditioningMode.TEXT_ONLY:
            _require(bool(self.image_ref), f"{self.conditioning_mode.value} conditioning needs an image_ref")
        if self.conditioning_mode != ConditioningMode.IMAGE_ONLY:
            _require(bool(self.caption), f"{self.conditioning_mode.value} conditioning needs a caption")

    def to_json(self):
        return {
            "image_ref": self.image_ref,
            "caption": self.caption,
            "conditioning_mode": self.conditioning_mode.value,
            "num_frames": self.num_frames,
            "fps": self.fps,
            "seed": self.seed,
            "width": self.width,
            "height": self.height,
        }


@dataclass(frozen=True)
class VideoResponse(StageResponse):
    frame_refs: tuple[str, ...]

    @classmethod
    def from_json(cls, obj):
        return cls(tuple(str(r) for r in obj["frame_refs"]))

    def to_json(self):
        return {"frame_refs": list(self.frame_refs)}

    def validate(self, request):
        _require(len(self.frame_refs) == request.num_frames,
                 f"video reply has {len(self.frame_refs)} frames, requested {request.num_frames}", BadResponse)
        _require(all(self.frame_refs), "empty frame reference", BadResponse)


# --- segment / propagate ----------------------------------------------------

@dataclass(frozen=True)
class SegmentedObject:
    object_id: int
    category: str
    mask: RleMask

    def to_json(self):
        return {"object_id": self.object_id, "category": self.category, "mask": self.mask.to_coco()}

    @classmethod
    def from_json(cls, obj):
        return cls(int(obj["object_id"]), str(obj["category"]), RleMask.from_coco(obj["mask"]))


def _check_objects(objects: Sequence[SegmentedObject], width: int, height: int, exc):
    ids = [o.object_id for o in objects]
    _require(len(ids) == len(set(ids)), f"duplicate object ids {ids}", exc)
    for o in objects:
        _require((o.mask.width, o.mask.height) == (width, height),
                 f"object {o.object_id} mask is {o.mask.width}x{o.mask.height}, expected {width}x{height}", exc)
        _require(o.mask.is_canonical(), f"object {o.object_id} mask is not canonical RLE", exc)


@dataclass(frozen=True)
class SegmentRequest(StageRequest):
    kind: ClassVar[StageKind] = StageKind.SEGMENT
    frame_ref: str
    categories: tuple[str, ...] = ()
    width: int = DEFAULT_FRAME_SIZE[0]
    height: int = DEFAULT_FRAME_SIZE[1]
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "categories", tuple(self.categories))

    def validate(self):
        _require(bool(self.frame_ref), "segment request needs a frame reference")
        _require(self.width > 0 and self.height > 0, "frame size must be positive")

    def to_json(self):
        return {
            "frame_ref": self.frame_ref,
            "categories": list(self.categories),
            "width": self.width,
            "height": self.height,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class SegmentResponse(StageResponse):
    objects: tuple[SegmentedObject, ...]

    @classmethod
    def from_json(cls, obj):
        return cls(tuple(SegmentedObject.from_json(o) for o in obj["objects"]))

    def to_json(self):
        return {"objects": [o.to_json() for o in self.objects]}

    def validate(self, request):
        _check_objects(self.objects, request.width, request.height, BadResponse)


@dataclass(frozen=True)
class PropagateRequest(StageRequest):
    kind: ClassVar[StageKind] = StageKind.PROPAGATE
    frame_refs: tuple[str, ...]
    objects: tuple[SegmentedObject, ...] = ()
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "frame_refs", tuple(self.frame_refs))
        object.__setattr__(self, "objects", tuple(self.objects))

    def validate(self):
        _require(len(self.frame_refs) >= 1, "propagate request needs at least one frame")
        if self.objects:
            m = self.objects[0].mask
            _check_objects(self.objects, m.width, m.height, InvalidRequest)

    def to_json(self):
        return {
            "frame_refs": list(self.frame_refs),
            "objects": [o.to_json() for o in self.objects],
            "seed": self.seed,
        }


@dataclass(frozen=True)
class PropagateResponse(StageResponse):
    tracks: tuple[MaskTrack, ...]

    @classmethod
    def from_json(cls, obj):
        return cls(tuple(MaskTrack.from_json(t) for t in obj["tracks"]))

    def to_json(self):
        return {"tracks": [t.to_json() for t in self.tracks]}

    def validate(self, request):
        want = sorted(o.object_id for o in request.objects)
        got = sorted(t.object_id for t in self.tracks)
        _require(want == got, f"propagate reply tracks {got}, expected {want}", BadResponse)
        n = len(request.frame_refs)
        for t in self.tracks:
            _require(len(t) == n, f"track {t.object_id} has {len(t)} frames, expected {n}", BadResponse)
            _require(all(f.is_canonical() for f in t.frames), f"track {t.object_id} has non-canonical RLE",
                     BadResponse)


# --- embed / audio ----------------------------------------------------------

@dataclass(frozen=True)
class EmbedRequest(StageRequest):
    kind: ClassVar[StageKind] = StageKind.EMBED
    text: str | None = None
    image_ref: str | None = None

    def validate(self):
        _require((self.text is None) != (self.image_ref is None), "embed exactly one of text or image_ref")

    def to_json(self):
        return {"text": self.text, "image_ref": self.image_ref}


@dataclass(frozen=True)
class EmbedResponse(StageResponse):
    vector: tuple[float, ...]
    dim: int = EMBED_DIM

    @classmethod
    def from_json(cls, obj):
        vec = tuple(float(x) for x in obj["vector"])
        return cls(vec, int(obj.get("dim", len(vec))))

    def to_json(self):
        return {"vector": list(self.vector), "dim": self.dim}

    def validate(self, request):
        _require(len(self.vector) == self.dim, f"embedding has {len(self.vector)} values, advertised {self.dim}",
                 BadResponse)
        norm = math.sqrt(math.fsum(x * x for x in self.vector))
        _require(abs(norm - 1.0) <= 1e-6, f"embedding norm {norm} is not 1", BadResponse)


@dataclass(frozen=True)
class AudioRequest(StageRequest):
    kind: ClassVar[StageKind] = StageKind.AUDIO
    frame_refs: tuple[str, ...]
    caption: str = ""
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "frame_refs", tuple(self.frame_refs))

    def validate(self):
        _require(len(self.frame_refs) >= 1, "audio request needs frames")

    def to_json(self):
        return {"frame_refs": list(self.frame_refs), "caption": self.caption, "seed": self.seed}


@dataclass(frozen=True)
class AudioResponse(StageResponse):
    audio_ref: str

    @classmethod
    def from_json(cls, obj):
        return cls(str(obj["audio_ref"]))

    def to_json(self):
        return {"audio_ref": self.audio_ref}

    def validate(self, request):
        _require(bool(self.audio_ref), "empty audio reference", BadResponse)


RESPONSE_TYPES: dict[StageKind, type[StageResponse]] = {
    StageKind.CAPTION: CaptionResponse,
    StageKind.VQA: VqaResponse,
    StageKind.VIDEO: VideoResponse,
    StageKind.SEGMENT: SegmentResponse,
    StageKind.PROPAGATE: PropagateResponse,
    StageKind.EMBED: EmbedResponse,
    StageKind.AUDIO: AudioResponse,
}

REQUEST_TYPES: dict[StageKind, type[StageRequest]] = {
    StageKind.CAPTION: CaptionRequest,
    StageKind.VQA: VqaRequest,
    StageKind.VIDEO: VideoRequest,
    StageKind.SEGMENT: SegmentRequest,
    StageKind.PROPAGATE: PropagateRequest,
    StageKind.EMBED: EmbedRequest,
    StageKind.AUDIO: AudioRequest,
}


def request_from_json(kind: StageKind, obj: Mapping) -> StageRequest:
    """Decode a request body (the server side of the wire protocol)."""
    kind = StageKind(kind)
    if kind == StageKind.SEGMENT:
        return SegmentRequest(obj["frame_ref"], tuple(obj.get("categories", ())), int(obj["width"]),
                              int(obj["height"]), int(obj.get("seed", 0)))
    if kind == StageKind.PROPAGATE:
        return PropagateRequest(tuple(obj["frame_refs"]),
                                tuple(SegmentedObject.from_json(o) for o in obj.get("objects", ())),
                                int(obj.get("seed", 0)))
    if kind == StageKind.AUDIO:
        return AudioRequest(tuple(obj["frame_refs"]), obj.get("caption", ""), int(obj.get("seed", 0)))
    return REQUEST_TYPES[kind](**obj)
