import json
import random

import pytest

from mmforge.coco import parse_dataset

CATEGORY_NAMES = ["person", "dog", "cat", "car", "bicycle", "toilet", "sink", "cake", "knife", "train"]


def make_coco(n_images: int, seed: int = 0, max_annotations: int = 6) -> dict:
    """Random but well-formed COCO instances document."""
    rng = random.Random(seed)
    images, annotations = [], []
    ann_id = 1
    for i in range(n_images):
        image_id = 1000 + 7 * i
        w, h = rng.randint(200, 640), rng.randint(200, 480)
        images.append({"id": image_id, "file_name": f"{image_id:012d}.jpg", "width": w, "height": h})
        for _ in range(rng.randint(0, max_annotations)):
            bw, bh = rng.randint(1, w // 2), rng.randint(1, h // 2)
            x, y = rng.randint(0, w - bw), rng.randint(0, h - bh)
            annotations.append({
                "id": ann_id, "image_id": image_id, "category_id": rng.randint(1, len(CATEGORY_NAMES)),
                "bbox": [x, y, bw, bh], "area": bw * bh, "iscrowd": int(rng.random() < 0.1),
                "segmentation": [[x, y, x + bw, y, x + bw, y + bh, x, y + bh]],
            })
            ann_id += 1
    categories = [{"id": i + 1, "name": n} for i, n in enumerate(CATEGORY_NAMES)]
    return {"images": images, "annotations": annotations, "categories": categories}


@pytest.fixture
def coco50():
    return make_coco(50, seed=7)


@pytest.fixture
def index50(coco50):
    return parse_dataset(json.dumps(coco50))


def make_sample(image_id: int, per_category: dict | None = None, n_frames: int = 2, with_tracks: bool = True):
    """Small but fully valid SampleManifest built without running the pipeline."""
    from mmforge.annotations import CaptionRecord, VqaPair, VqaSet, counts_to_qa
    from mmforge.coco import CountLabel
    from mmforge.masks import BinaryMask, MaskTrack, rle_encode
    from mmforge.store import SampleManifest

    per_category = dict(per_category if per_category is not None else {"dog": 1})
    label = CountLabel(image_id, per_category, sum(per_category.values()))
    pairs = tuple(VqaPair(f"Question {k} about {image_id}?", f"answer {k}") for k in range(3))
    tracks = []
    if with_tracks:
        for oid, name in enumerate(sorted(per_category), start=1):
            frames = [rle_encode(BinaryMask.from_box(4, 4, 0, 0, 1 + (t % 3), 2)) for t in range(n_frames)]
            tracks.append(MaskTrack(oid, name, frames))
    return SampleManifest(
        image_id=image_id,
        image_ref=f"{image_id:012d}.jpg",
        caption=CaptionRecord(image_id, f"Later on, image {image_id} shows movement."),
        count_label=label,
        vqa=VqaSet(image_id, pairs),
        counting_qa=counts_to_qa(label),
        video=[f"cache/video/{image_id}/frame_{t:04d}.ppm" for t in range(n_frames)],
        tracks=tracks,
    )


def synthetic_dataset(n: int, seed: int = 0, with_tracks: bool = False):
    from mmforge.store import DatasetManifest

    rng = random.Random(seed)
    samples = []
    for i in range(n):
        cats = rng.sample(CATEGORY_NAMES, rng.randint(0, 4))
        samples.append(make_sample(i + 1, {c: rng.randint(1, 5) for c in cats}, with_tracks=with_tracks))
    return DatasetManifest(samples)


def tree_snapshot(root, exclude=("run_report.json",)) -> dict:
    """Relative path -> bytes for every file under ``root`` (staging and excluded names skipped)."""
    from pathlib import Path

    root = Path(root)
    out = {}
    for path in sorted(root.rglob("*")):
        rel = path.relative_to(root).as_posix()
        if path.is_file() and path.name not in exclude and ".staging" not in rel.split("/"):
            out[rel] = path.read_bytes()
    return out


def manifest_bytes(root) -> dict:
    from pathlib import Path

    root = Path(root)
    snap = {p.name: p.read_bytes() for p in sorted(root.glob("manifest-*.jsonl"))}
    snap.update({p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.glob("assets/*/tracks.json"))})
    return snap


# Acceptance verdicts, printed in the terminal summary so they show without -s.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
