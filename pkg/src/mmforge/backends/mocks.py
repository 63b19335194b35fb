"""Deterministic stand-ins for every generation backend.

Each mock answers from ``(suite seed, request body)`` alone, so a repeated
request always gets a byte-identical reply. Assets (frames, audio) are
written into the ``asset_dir`` handed over by the caller and referenced by
bare file name.
"""

from __future__ import annotations

import hashlib
import re
import wave
from pathlib import Path

import numpy as np

from ..annotations import VqaPair, render_vqa
from ..errors import InvalidRequest
from ..masks import BinaryMask, MaskTrack, rle_decode, rle_encode
from .gateway import BackendEndpoint
from .types import EMBED_DIM, SegmentedObject, StageKind, canonical_json, request_from_json

_FUTURES = [
    "begins to move slowly across the frame",
    "turns toward the light as the scene brightens",
    "is joined by a gust of wind that stirs the background",
    "shifts position while the camera drifts closer",
    "settles into place as the moment passes",
]
_PLACES = ["indoors", "outdoors", "on a street", "in a park", "in a kitchen", "near the water"]


def _digest(*parts) -> bytes:
    h = hashlib.sha256()
    for p in parts:
        h.update(p if isinstance(p, bytes) else str(p).encode("utf-8"))
        h.update(b"\x00")
    return h.digest()


def _rng(*parts) -> np.random.Generator:
    return np.random.default_rng(int.from_bytes(_digest(*parts)[:8], "little"))


def _prompt_field(prompt: str, label: str) -> str:
    m = re.search(rf"^{label}:\s*(.*)$", prompt, flags=re.MULTILINE)
    return m.group(1).strip() if m else ""


class MockBackend:
    """Base class: decode the body, dispatch to :meth:`handle`."""

    kind: StageKind

    def __init__(self, seed: int = 0):
        self.seed = seed

    def rng(self, payload: dict, *extra) -> np.random.Generator:
        return _rng(self.seed, self.kind.value, canonical_json(payload), *extra)

    def send(self, endpoint: BackendEndpoint | None, payload: dict, asset_dir: Path | None = None) -> dict:
        return self.handle(payload, asset_dir)

    def handle(self, payload: dict, asset_dir: Path | None) -> dict:
        raise NotImplementedError


class MockCaption(MockBackend):
    kind = StageKind.CAPTION

    def handle(self, payload, asset_dir):
        rng = self.rng(payload)
        objects = _prompt_field(payload["prompt"], "Objects present") or "the scene"
        if objects == "none annotated":
            objects = "the scene"
        subject = objects.split(",")[0].strip()
        future = _FUTURES[int(rng.integers(len(_FUTURES)))]
        place = _PLACES[int(rng.integers(len(_PLACES)))]
        return {"text": f"A few seconds later, {place}, the {subject} {future}, with {objects} still in view."}


class MockVqa(MockBackend):
    kind = StageKind.VQA

    def handle(self, payload, asset_dir):
        rng = self.rng(payload)
        caption = _prompt_field(payload["prompt"], "Caption")
        subject = re.search(r"\bthe ([a-z]+)", caption.lower())
        pairs = [
            VqaPair("What is the main subject of the video?", subject.group(1) if subject else "the scene"),
            VqaPair("Where does the scene take place?", _PLACES[int(rng.integers(len(_PLACES)))]),
            VqaPair("Does the scene change over time?", "yes" if rng.random() < 0.8 else "no"),
        ]
        return {"text": render_vqa(pairs)}


def write_ppm(path: Path, width: int, height: int, rgb: tuple[int, int, int]) -> None:
    header = f"P6\n{width} {height}\n255\n".encode("ascii")
    path.write_bytes(header + bytes(rgb) * (width * height))


class MockVideo(MockBackend):
    kind = StageKind.VIDEO

    def handle(self, payload, asset_dir):
        if asset_dir is None:
            raise InvalidRequest("mock video backend needs an asset directory")
        asset_dir = Path(asset_dir)
        asset_dir.mkdir(parents=True, exist_ok=True)
        rng = self.rng(payload)
        base = rng.integers(0, 256, size=3)
        refs = []
        for t in range(int(payload["num_frames"])):
            name = f"frame_{t:04d}.ppm"
            colour = tuple(int(c) for c in (base + 4 * t) % 256)
            write_ppm(asset_dir / name, int(payload["width"]), int(payload["height"]), colour)
            refs.append(name)
        return {"frame_refs": refs}


class MockSegment(MockBackend):
    """One rectangle per requested category; object ids follow sorted category order."""

    kind = StageKind.SEGMENT

    def handle(self, payload, asset_dir):
        width, height = int(payload["width"]), int(payload["height"])
        objects = []
        for object_id, category in enumerate(sorted(set(payload.get("categories", []))), start=1):
            rng = self.rng(payload, category)
            w = int(rng.integers(max(1, width // 4), max(1, width // 2) + 1))
            h = int(rng.integers(max(1, height // 4), max(1, height // 2) + 1))
            x0 = int(rng.integers(0, width - w + 1))
            y0 = int(rng.integers(0, height - h + 1))
            mask = BinaryMask.from_box(width, height, x0, y0, x0 + w, y0 + h)
            objects.append(SegmentedObject(object_id, category, rle_encode(mask)).to_json())
        return {"objects": objects}


def translate_clamped(mask: BinaryMask, dx: int) -> BinaryMask:
    """Shift right by ``dx`` columns; pixels pushed past the edge pile up in the last column."""
    if dx <= 0:
        return mask
    w = mask.width
    out = np.zeros_like(mask.bits)
    if dx < w:
        out[:, dx:] = mask.bits[:, : w - dx]
    out[:, w - 1] |= mask.bits[:, max(w - 1 - dx, 0):].any(axis=1)
    return BinaryMask(out)


class MockPropagate(MockBackend):
    """Moves every first-frame mask one pixel to the right per frame."""

    kind = StageKind.PROPAGATE

    def handle(self, payload, asset_dir):
        request = request_from_json(self.kind, payload)
        tracks = []
        for obj in request.objects:
            first = rle_decode(obj.mask)
            frames = [rle_encode(translate_clamped(first, t)) for t in range(len(request.frame_refs))]
            tracks.append(MaskTrack(obj.object_id, obj.category, frames).to_json())
        return {"tracks": tracks}


def hash_embedding(seed: int, key: str, dim: int = EMBED_DIM) -> np.ndarray:
    vec = _rng(seed, "embed", key).standard_normal(dim)
    return vec / np.linalg.norm(vec)


class MockEmbed(MockBackend):
    kind = StageKind.EMBED

    def __init__(self, seed: int = 0, dim: int = EMBED_DIM):
        super().__init__(seed)
        self.dim = dim

    def handle(self, payload, asset_dir):
        if payload.get("text") is not None:
            key = "text:" + payload["text"]
        else:
            key = "image:" + str(payload["image_ref"])
        return {"vector": hash_embedding(self.seed, key, self.dim).tolist(), "dim": self.dim}


class MockAudio(MockBackend):
    """A short sine tone whose pitch depends on the request."""

    kind = StageKind.AUDIO
    sample_rate = 8000

    def handle(self, payload, asset_dir):
        if asset_dir is None:
            raise InvalidRequest("mock audio backend needs an asset directory")
        asset_dir = Path(asset_dir)
        asset_dir.mkdir(parents=True, exist_ok=True)
        freq = 220.0 + float(self.rng(payload).integers(0, 440))
        n = self.sample_rate // 10
        samples = (0.2 * np.sin(2 * np.pi * freq * np.arange(n) / self.sample_rate) * 32767).astype("<i2")
        with wave.open(str(asset_dir / "audio.wav"), "wb") as fh:
            fh.setnchannels(1)
            fh.setsampwidth(2)
            fh.setframerate(self.sample_rate)
            fh.writeframes(samples.tobytes())
        return {"audio_ref": "audio.wav"}


MOCK_TYPES = {
    cls.kind: cls
    for cls in (MockCaption, MockVqa, MockVideo, MockSegment, MockPropagate, MockEmbed, MockAudio)
}


def mock_suite(seed: int = 0) -> dict[StageKind, MockBackend]:
    return {kind: cls(seed) for kind, cls in MOCK_TYPES.items()}
