#!/usr/bin/env python
# Metrics and report rendering.
#
# Counting error, WUP similarity on a toy taxonomy, the embedding score, and a
# per-class segmentation comparison built from the bundled 74-class fixture.

import json
from pathlib import Path

import numpy as np

from mmforge.evaluation import (
    CountingResult,
    EvalReport,
    Taxonomy,
    VqaResult,
    answer_wup,
    embed_score,
    mae,
    mse,
    render_report,
    seg_report,
)

FIXTURE = Path(__file__).resolve().parents[1] / "tests" / "data" / "segmentation_74.json"

pred, gt = [3, 5, 9, 0], [4, 7, 9, 1]
print(f"MAE {mae(pred, gt):.2f}  MSE {mse(pred, gt):.2f}")

tax = Taxonomy([("animal", "entity"), ("dog", "animal"), ("cat", "animal"),
                ("vehicle", "entity"), ("car", "vehicle")])
for answer, expected in [("a dog", "dog"), ("two cats", "dog"), ("a red car", "dog"), ("seventeen", "dog")]:
    print(f"wup({answer!r}, {expected!r}) = {answer_wup(tax, answer, expected):.3f}")

rng = np.random.default_rng(0)
u = rng.normal(size=8)
u /= np.linalg.norm(u)
v = u + 0.5 * rng.normal(size=8)
v /= np.linalg.norm(v)
print(f"embed_score = {embed_score(u, v):.2f}")

fx = json.loads(FIXTURE.read_text())
report = EvalReport(
    counting=[CountingResult("toy", "model-a", mae(pred, gt), mse(pred, gt))],
    vqa=[VqaResult("toy", "model-a", embed_score(u, v), 0.5)],
    segmentation=seg_report(fx["baseline"], fx["synthetic_5k"]),
)
print()
print(render_report(report))
