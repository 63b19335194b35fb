#!/usr/bin/env python
# End-to-end generation with the seeded mock backends.
#
# Builds a small random COCO file, runs the pipeline twice (the second run is
# served entirely from the stage cache), then exports the three supervision
# configurations.

import json
import random
import sys
import tempfile
from pathlib import Path

from mmforge.coco import parse_dataset
from mmforge.config import PipelineConfig
from mmforge.orchestrator import execute_run
from mmforge.store import ExportConfig, export_training_set, read_dataset, write_export

NAMES = ["person", "dog", "cat", "car", "bicycle"]


def tiny_coco(n, seed=0):
    rng = random.Random(seed)
    images, anns = [], []
    for i in range(n):
        iid = 100 + i
        images.append({"id": iid, "file_name": f"{iid:012d}.jpg", "width": 320, "height": 240})
        for _ in range(rng.randint(1, 4)):
            x, y, w, h = rng.randint(0, 200), rng.randint(0, 120), rng.randint(10, 100), rng.randint(10, 100)
            anns.append({"id": len(anns) + 1, "image_id": iid, "category_id": rng.randint(1, len(NAMES)),
                         "bbox": [x, y, w, h], "area": w * h, "iscrowd": 0,
                         "segmentation": [[x, y, x + w, y, x + w, y + h, x, y + h]]})
    return {"images": images, "annotations": anns,
            "categories": [{"id": i + 1, "name": n} for i, n in enumerate(NAMES)]}


out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="mmforge-demo-"))
index = parse_dataset(json.dumps(tiny_coco(8)))
config = PipelineConfig(output_root=out, seed=7, num_frames=8, max_workers=4, mock=True)

first = execute_run(config, index, index.image_ids())
print("first run: ", first.samples_succeeded, "samples,", first.backend_calls, "backend calls")
second = execute_run(config, index, index.image_ids())
print("second run:", second.cache_hits, "cache hits,", second.backend_calls, "backend calls")

ds = read_dataset(out)
s = ds.samples[0]
print("\nsample", s.image_id)
print("  counts:", s.count_label.per_category, "total", s.count_label.total)
print("  caption:", s.caption.text)
for pair in s.vqa.pairs:
    print("  Q:", pair.question, "A:", pair.answer)
print("  frames:", len(s.video), "tracks:", [(t.category, t.areas()) for t in s.tracks])

for sup in ("captions", "captions_plus_vqa", "vqa_only"):
    records = export_training_set(ds, ExportConfig(sup, include_counting_qa=(sup != "captions")))
    path = write_export(records, out, sup)
    print(f"{sup:18s} {len(records):4d} records -> {path}")
