"""COCO ``instances`` ingestion: indexing, validation and per-image count labels."""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .errors import MalformedDocument, MissingSection, UnknownImage
from .masks import BinaryMask, RleMask, rle_decode

REQUIRED_SECTIONS = ("images", "annotations", "categories")

# Violation kinds
OUT_OF_BOUNDS = "OutOfBounds"
DUPLICATE_ID = "DuplicateId"
DANGLING_REFERENCE = "DanglingReference"
DUPLICATE_NAME = "DuplicateName"
INVALID_RECORD = "InvalidRecord"


def normalize_name(name: str) -> str:
    return re.sub(r"\s+", " ", str(name)).strip().lower()


@dataclass(frozen=True)
class ImageRecord:
    id: int
    file_name: str
    width: int
    height: int

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"image {self.id}: non-positive size {self.width}x{self.height}")


@dataclass(frozen=True)
class CategoryDef:
    id: int
    name: str


@dataclass
class InstanceAnnotation:
    id: int
    image_id: int
    category_id: int
    bbox: tuple[float, float, float, float]
    segmentation: Any = None
    iscrowd: bool = False
    area: float = 0.0
    # bbox as found in the source document, before clamping
    raw_bbox: tuple[float, float, float, float] | None = None

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "image_id": self.image_id,
            "category_id": self.category_id,
            "bbox": list(self.raw_bbox if self.raw_bbox is not None else self.bbox),
            "segmentation": self.segmentation,
            "iscrowd": int(self.iscrowd),
            "area": self.area,
        }


@dataclass(frozen=True)
class Violation:
    kind: str
    entity: str
    id: Any
    detail: str = ""

    def to_json(self) -> dict:
        return {"kind": self.kind, "entity": self.entity, "id": self.id, "detail": self.detail}


@dataclass
class CountLabel:
    image_id: int
    per_category: dict[str, int]
    total: int

    def __post_init__(self):
        if any(v < 1 for v in self.per_category.values()):
            raise ValueError("count labels may not contain zero entries")
        if self.total != sum(self.per_category.values()):
            raise ValueError(f"total {self.total} != sum of per-category counts")

    def to_json(self) -> dict:
        return {
            "image_id": self.image_id,
            "per_category": dict(sorted(self.per_category.items())),
            "total": self.total,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "CountLabel":
        return cls(int(obj["image_id"]), {str(k): int(v) for k, v in obj["per_category"].items()},
                   int(obj["total"]))


@dataclass
class DatasetIndex:
    images: dict[int, ImageRecord] = field(default_factory=dict)
    categories: dict[int, CategoryDef] = field(default_factory=dict)
    annotations_by_image: dict[int, list[InstanceAnnotation]] = field(default_factory=dict)
    diagnostics: list[Violation] = field(default_factory=list)

    def image_ids(self) -> list[int]:
        return sorted(self.images)

    def annotations(self) -> Iterable[InstanceAnnotation]:
        for image_id in sorted(self.annotations_by_image):
            yield from self.annotations_by_image[image_id]

    def category_name(self, category_id: int) -> str:
        return self.categories[category_id].name

    def to_document(self) -> dict:
        """Re-serialize into a COCO ``instances`` document (source bboxes kept)."""
        return {
            "images": [
                {"id": im.id, "file_name": im.file_name, "width": im.width, "height": im.height}
                for im in (self.images[i] for i in sorted(self.images))
            ],
            "annotations": [ann.to_json() for ann in self.annotations()],
            "categories": [
                {"id": c.id, "name": c.name} for c in (self.categories[i] for i in sorted(self.categories))
            ],
        }


def _clamp_bbox(bbox, width, height):
    x, y, w, h = bbox
    x0 = min(max(x, 0.0), width)
    y0 = min(max(y, 0.0), height)
    x1 = min(max(x + w, 0.0), width)
    y1 = min(max(y + h, 0.0), height)
    return (x0, y0, max(x1 - x0, 0.0), max(y1 - y0, 0.0))


def _bbox_in_bounds(bbox, width, height) -> bool:
    x, y, w, h = bbox
    return x >= 0 and y >= 0 and w >= 0 and h >= 0 and x + w <= width and y + h <= height


def parse_dataset(data: bytes | str) -> DatasetIndex:
    """Build a :class:`DatasetIndex` from the contents of a COCO instances file.

    Records that cannot be indexed (duplicate ids, dangling references, bad
    sizes) are dropped and reported in ``index.diagnostics``; out-of-bounds
    boxes are clamped and reported.
    """
    try:
        doc = json.loads(data)
    except (ValueError, UnicodeDecodeError) as exc:
        raise MalformedDocument(f"annotation file is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise MalformedDocument("annotation document must be a JSON object")
    missing = [s for s in REQUIRED_SECTIONS if s not in doc]
    if missing:
        raise MissingSection(f"missing section(s): {', '.join(missing)}")

    index = DatasetIndex()
    diag = index.diagnostics

    for raw in doc["images"]:
        try:
            image = ImageRecord(int(raw["id"]), str(raw["file_name"]), int(raw["width"]), int(raw["height"]))
        except (KeyError, TypeError, ValueError) as exc:
            diag.append(Violation(INVALID_RECORD, "image", raw.get("id") if isinstance(raw, dict) else None, str(exc)))
            continue
        if image.id in index.images:
            diag.append(Violation(DUPLICATE_ID, "image", image.id, "later record dropped"))
            continue
        index.images[image.id] = image

    seen_names: dict[str, int] = {}
    for raw in doc["categories"]:
        try:
            cat = CategoryDef(int(raw["id"]), normalize_name(raw["name"]))
        except (KeyError, TypeError, ValueError) as exc:
            diag.append(Violation(INVALID_RECORD, "category", None, str(exc)))
            continue
        if not cat.name:
            diag.append(Violation(INVALID_RECORD, "category", cat.id, "empty name"))
            continue
        if cat.id in index.categories:
            diag.append(Violation(DUPLICATE_ID, "category", cat.id, "later record dropped"))
            continue
        if cat.name in seen_names:
            diag.append(Violation(DUPLICATE_NAME, "category", cat.id,
                                  f"name {cat.name!r} already used by category {seen_names[cat.name]}"))
        seen_names.setdefault(cat.name, cat.id)
        index.categories[cat.id] = cat

    seen_ann: set[int] = set()
    for raw in doc["annotations"]:
        try:
            ann_id = int(raw["id"])
            image_id = int(raw["image_id"])
            category_id = int(raw["category_id"])
            bbox = tuple(float(v) for v in raw.get("bbox", (0, 0, 0, 0)))
            if len(bbox) != 4:
                raise ValueError(f"bbox has {len(bbox)} values")
        except (KeyError, TypeError, ValueError) as exc:
            diag.append(Violation(INVALID_RECORD, "annotation", None, str(exc)))
            continue
        if ann_id in seen_ann:
            diag.append(Violation(DUPLICATE_ID, "annotation", ann_id, "later record dropped"))
            continue
        if image_id not in index.images:
            diag.append(Violation(DANGLING_REFERENCE, "annotation", ann_id, f"image_id {image_id} not found"))
            continue
        if category_id not in index.categories:
            diag.append(Violation(DANGLING_REFERENCE, "annotation", ann_id, f"category_id {category_id} not found"))
            continue
        seen_ann.add(ann_id)
        image = index.images[image_id]
        clamped = bbox
        if not _bbox_in_bounds(bbox, image.width, image.height):
            clamped = _clamp_bbox(bbox, image.width, image.height)
            diag.append(Violation(OUT_OF_BOUNDS, "annotation", ann_id, f"bbox {list(bbox)} clamped to {list(clamped)}"))
        ann = InstanceAnnotation(
            id=ann_id,
            image_id=image_id,
            category_id=category_id,
            bbox=clamped,
            segmentation=raw.get("segmentation"),
            iscrowd=bool(raw.get("iscrowd", 0)),
            area=float(raw.get("area", 0.0)),
            raw_bbox=bbox,
        )
        index.annotations_by_image.setdefault(image_id, []).append(ann)
    return index


def load_dataset(path: str | Path) -> DatasetIndex:
    return parse_dataset(Path(path).read_bytes())


def validate_dataset(index: DatasetIndex) -> list[Violation]:
    """Every invariant breach in ``index``: ingest-time findings plus a structural re-check."""
    found = list(index.diagnostics)
    seen = {(v.kind, v.entity, v.id) for v in found}

    def report(v: Violation):
        if (v.kind, v.entity, v.id) not in seen:
            seen.add((v.kind, v.entity, v.id))
            found.append(v)

    for key, image in index.images.items():
        if key != image.id:
            report(Violation(INVALID_RECORD, "image", key, f"indexed under {key} but id is {image.id}"))

    ann_ids: set[int] = set()
    for image_id, anns in index.annotations_by_image.items():
        image = index.images.get(image_id)
        for ann in anns:
            if ann.id in ann_ids:
                report(Violation(DUPLICATE_ID, "annotation", ann.id))
            ann_ids.add(ann.id)
            if image is None or ann.image_id != image_id:
                report(Violation(DANGLING_REFERENCE, "annotation", ann.id, f"image_id {ann.image_id} not found"))
                continue
            if ann.category_id not in index.categories:
                report(Violation(DANGLING_REFERENCE, "annotation", ann.id, f"category_id {ann.category_id} not found"))
            if not _bbox_in_bounds(ann.bbox, image.width, image.height):
                report(Violation(OUT_OF_BOUNDS, "annotation", ann.id, f"bbox {list(ann.bbox)}"))
    return found


def write_diagnostics(violations: Sequence[Violation], path: str | Path) -> None:
    """JSONL sidecar, one violation per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for v in violations:
            fh.write(json.dumps(v.to_json(), sort_keys=True) + "\n")


def count_labels(image_id: int, index: DatasetIndex) -> CountLabel:
    if image_id not in index.images:
        raise UnknownImage(image_id)
    # crowd regions have no instance count; each contributes 1
    tally = Counter(index.category_name(a.category_id) for a in index.annotations_by_image.get(image_id, ()))
    per_category = dict(sorted(tally.items()))
    return CountLabel(image_id, per_category, sum(per_category.values()))


def annotation_mask(ann: InstanceAnnotation, image: ImageRecord) -> BinaryMask:
    """Rasterize an annotation's segmentation (polygons or uncompressed RLE)."""
    seg = ann.segmentation
    if isinstance(seg, dict):
        return rle_decode(RleMask.from_coco(seg))
    if isinstance(seg, list) and seg:
        from PIL import Image, ImageDraw

        canvas = Image.new("1", (image.width, image.height), 0)
        draw = ImageDraw.Draw(canvas)
        for poly in seg:
            pts = [(float(poly[i]), float(poly[i + 1])) for i in range(0, len(poly) - 1, 2)]
            if len(pts) >= 3:
                draw.polygon(pts, fill=1, outline=1)
        return BinaryMask(np.array(canvas, dtype=bool))
    x, y, w, h = ann.bbox
    return BinaryMask.from_box(image.width, image.height, int(x), int(y), int(np.ceil(x + w)), int(np.ceil(y + h)))
