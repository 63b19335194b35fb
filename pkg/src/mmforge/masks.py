"""Binary masks, COCO-compatible uncompressed RLE, IoU and mask-track checks.

Masks are stored as ``(height, width)`` boolean arrays. RLE counts follow the
COCO uncompressed convention: runs are read in column-major order and start
with a background run, which may be empty.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import DimensionMismatch, EmptyTrack, LengthMismatch, NonCanonicalRle


class BinaryMask:
    """A ``height x width`` foreground/background grid."""

    __slots__ = ("bits",)

    def __init__(self, bits):
        arr = np.asarray(bits, dtype=bool)
        if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
            raise DimensionMismatch(f"mask must be a non-empty 2-D grid, got shape {arr.shape}")
        self.bits = arr

    @classmethod
    def zeros(cls, width: int, height: int) -> "BinaryMask":
        return cls(np.zeros((height, width), dtype=bool))

    @classmethod
    def from_box(cls, width: int, height: int, x0: int, y0: int, x1: int, y1: int) -> "BinaryMask":
        """Filled rectangle covering columns ``[x0, x1)`` and rows ``[y0, y1)``."""
        bits = np.zeros((height, width), dtype=bool)
        bits[max(y0, 0):max(y1, 0), max(x0, 0):max(x1, 0)] = True
        return cls(bits)

    @property
    def width(self) -> int:
        return int(self.bits.shape[1])

    @property
    def height(self) -> int:
        return int(self.bits.shape[0])

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape  # type: ignore[return-value]

    def area(self) -> int:
        return int(np.count_nonzero(self.bits))

    def is_empty(self) -> bool:
        return not self.bits.any()

    def __or__(self, other: "BinaryMask") -> "BinaryMask":
        _check_dims(self, other)
        return BinaryMask(self.bits | other.bits)

    def __and__(self, other: "BinaryMask") -> "BinaryMask":
        _check_dims(self, other)
        return BinaryMask(self.bits & other.bits)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.bits, other.bits))

    def __hash__(self) -> int:
        return hash((self.shape, np.packbits(self.bits).tobytes()))

    def __repr__(self) -> str:
        return f"BinaryMask({self.width}x{self.height}, area={self.area()})"


@dataclass(frozen=True)
class RleMask:
    width: int
    height: int
    counts: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))

    def area(self) -> int:
        """Foreground pixel count, read straight from the odd-indexed runs."""
        return sum(self.counts[1::2])

    def is_canonical(self) -> bool:
        return (
            all(c >= 0 for c in self.counts)
            and all(c > 0 for c in self.counts[1:])
            and sum(self.counts) == self.width * self.height
        )

    def to_coco(self) -> dict:
        return {"size": [self.height, self.width], "counts": list(self.counts)}

    @classmethod
    def from_coco(cls, obj: Mapping) -> "RleMask":
        height, width = obj["size"]
        counts = obj["counts"]
        if isinstance(counts, (str, bytes)):
            raise NonCanonicalRle("compressed COCO RLE strings are not supported")
        return cls(width=int(width), height=int(height), counts=tuple(counts))


def _check_dims(a: BinaryMask, b: BinaryMask) -> None:
    if a.shape != b.shape:
        raise DimensionMismatch(f"mask shapes differ: {a.width}x{a.height} vs {b.width}x{b.height}")


def rle_encode(mask: BinaryMask) -> RleMask:
    flat = mask.bits.ravel(order="F")
    # positions where the value flips, plus both ends
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], change, [flat.size]))
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return RleMask(mask.width, mask.height, tuple(runs))


def rle_decode(rle: RleMask) -> BinaryMask:
    total = rle.width * rle.height
    if sum(rle.counts) != total:
        raise LengthMismatch(f"RLE counts sum to {sum(rle.counts)}, expected {total}")
    if any(c < 0 for c in rle.counts) or any(c == 0 for c in rle.counts[1:]):
        raise NonCanonicalRle(f"interior zero or negative run in {list(rle.counts)}")
    values = np.arange(len(rle.counts)) % 2 == 1
    flat = np.repeat(values, rle.counts)
    return BinaryMask(flat.reshape((rle.height, rle.width), order="F"))


def iou(a: BinaryMask, b: BinaryMask) -> float:
    """Intersection over union; two empty masks count as a perfect match."""
    _check_dims(a, b)
    union = np.count_nonzero(a.bits | b.bits)
    if union == 0:
        return 1.0
    return np.count_nonzero(a.bits & b.bits) / union


def merge_instances(instances: Sequence[tuple[str, BinaryMask]]) -> dict[str, BinaryMask]:
    """Pixel-union of all instance masks that share a class name."""
    merged: dict[str, BinaryMask] = {}
    for name, mask in instances:
        merged[name] = merged[name] | mask if name in merged else mask
    return merged


def per_class_iou(pred: Mapping[str, BinaryMask], gt: Mapping[str, BinaryMask]) -> dict[str, float]:
    out = {}
    for name, gt_mask in gt.items():
        if name not in pred:
            out[name] = 0.0
        else:
            out[name] = iou(pred[name], gt_mask)
    return out


def miou(scores: Mapping[str, float], gt: Mapping[str, BinaryMask] | None = None) -> float:
    """Unweighted class mean. Classes whose ground truth is empty are skipped."""
    keep = [
        v for k, v in scores.items()
        if gt is None or k not in gt or not gt[k].is_empty()
    ]
    if not keep:
        return float("nan")
    return sum(keep) / len(keep)


@dataclass
class MaskTrack:
    object_id: int
    category: str
    frames: list[RleMask] = field(default_factory=list)

    def __post_init__(self):
        if self.frames:
            dims = {(f.width, f.height) for f in self.frames}
            if len(dims) != 1:
                raise DimensionMismatch(f"track {self.object_id} mixes frame sizes {sorted(dims)}")

    def __len__(self) -> int:
        return len(self.frames)

    def areas(self) -> list[int]:
        return [f.area() for f in self.frames]

    def to_json(self) -> dict:
        return {
            "object_id": self.object_id,
            "category": self.category,
            "frames": [f.to_coco() for f in self.frames],
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "MaskTrack":
        return cls(
            object_id=int(obj["object_id"]),
            category=str(obj["category"]),
            frames=[RleMask.from_coco(f) for f in obj["frames"]],
        )


@dataclass(frozen=True)
class TrackDiagnostics:
    object_id: int
    max_area_change_ratio: float
    empty_frame_indices: tuple[int, ...]


def track_diagnostics(track: MaskTrack) -> TrackDiagnostics:
    if not track.frames:
        raise EmptyTrack(f"track {track.object_id} has no frames")
    areas = track.areas()
    ratios = [abs(b - a) / max(a, 1) for a, b in zip(areas, areas[1:])]
    return TrackDiagnostics(
        object_id=track.object_id,
        max_area_change_ratio=max(ratios, default=0.0),
        empty_frame_indices=tuple(i for i, a in enumerate(areas) if a == 0),
    )
