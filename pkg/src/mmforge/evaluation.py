"""Counting, VQA and segmentation metrics plus table rendering.

Score conventions:

* counting: MAE and MSE over per-video object totals;
* VQA: an embedding score ``100 * max(cos, 0)`` between unit vectors, and
  Wu-Palmer similarity on a rooted taxonomy with ``depth(root) == 1``;
  answers that map to no taxonomy node score 0;
* segmentation: per-class IoU, unweighted mIoU, and an improved / degraded /
  unchanged tally against a baseline with an absolute tolerance.
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
import string
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    ClassSetMismatch,
    DimensionMismatch,
    EmptyInput,
    LengthMismatch,
    NotNormalized,
    TaxonomyError,
    UnknownTerm,
)

UNCHANGED_EPSILON = 0.005
NORM_TOLERANCE = 1e-6


# --- counting ---------------------------------------------------------------

def _paired(pred: Sequence[float], gt: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    if len(pred) != len(gt):
        raise LengthMismatch(f"{len(pred)} predictions for {len(gt)} ground-truth values")
    if len(gt) == 0:
        raise EmptyInput("no values to compare")
    return np.asarray(pred, dtype=np.float64), np.asarray(gt, dtype=np.float64)


def mae(pred: Sequence[float], gt: Sequence[float]) -> float:
    p, g = _paired(pred, gt)
    return math.fsum(np.abs(p - g).tolist()) / len(g)


def mse(pred: Sequence[float], gt: Sequence[float]) -> float:
    p, g = _paired(pred, gt)
    return math.fsum(((p - g) ** 2).tolist()) / len(g)


@dataclass(frozen=True)
class CountPrediction:
    image_id: int
    predicted_total: int
    predicted_per_category: Mapping[str, int] | None = None

    def __post_init__(self):
        if self.predicted_total < 0:
            raise ValueError(f"image {self.image_id}: negative predicted count")


# --- taxonomy and WUP -------------------------------------------------------

class Taxonomy:
    """A single rooted tree of terms, built from ``child -> parent`` edges."""

    def __init__(self, edges: Iterable[tuple[str, str]]):
        self.parent: dict[str, str | None] = {}
        for child, parent in edges:
            child, parent = _norm_term(child), _norm_term(parent)
            if child in self.parent and self.parent[child] is not None and self.parent[child] != parent:
                raise TaxonomyError(f"{child!r} has two parents ({self.parent[child]!r}, {parent!r})")
            self.parent[child] = parent
            self.parent.setdefault(parent, None)
        roots = [n for n, p in self.parent.items() if p is None]
        if len(roots) != 1:
            raise TaxonomyError(f"taxonomy needs exactly one root, found {sorted(roots)}")
        self.root = roots[0]
        self._depth: dict[str, int] = {}
        for node in self.parent:
            self.depth(node)

    @classmethod
    def from_file(cls, path: str | Path) -> "Taxonomy":
        """Load a ``child<TAB>parent`` edge list; blank lines and ``#`` comments are skipped."""
        edges = []
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 2:
                raise TaxonomyError(f"{path}:{lineno}: expected child<TAB>parent")
            edges.append((parts[0], parts[1]))
        return cls(edges)

    def __contains__(self, name: str) -> bool:
        return _norm_term(name) in self.parent

    @property
    def nodes(self) -> list[str]:
        return list(self.parent)

    def depth(self, node: str) -> int:
        node = _norm_term(node)
        if node not in self.parent:
            raise UnknownTerm(node)
        if node in self._depth:
            return self._depth[node]
        chain = []
        cur: str | None = node
        seen = set()
        while cur is not None and cur not in self._depth:
            if cur in seen:
                raise TaxonomyError(f"cycle through {cur!r}")
            seen.add(cur)
            chain.append(cur)
            cur = self.parent[cur]
        d = self._depth[cur] if cur is not None else 0
        for n in reversed(chain):
            d += 1
            self._depth[n] = d
        return self._depth[node]

    def ancestors(self, node: str) -> list[str]:
        """``node`` followed by its ancestors up to the root."""
        node = _norm_term(node)
        if node not in self.parent:
            raise UnknownTerm(node)
        out = []
        cur: str | None = node
        while cur is not None:
            out.append(cur)
            cur = self.parent[cur]
        return out

    def lcs(self, a: str, b: str) -> str:
        mine = set(self.ancestors(a))
        for node in self.ancestors(b):
            if node in mine:
                return node
        raise TaxonomyError("no common ancestor")  # unreachable in a rooted tree


def _norm_term(name: str) -> str:
    return " ".join(str(name).lower().split())


def wup(taxonomy: Taxonomy, a: str, b: str) -> float:
    common = taxonomy.lcs(a, b)
    return 2.0 * taxonomy.depth(common) / (taxonomy.depth(a) + taxonomy.depth(b))


_PUNCT = re.compile(f"[{re.escape(string.punctuation)}]")


def _singular(token: str) -> str:
    if len(token) > 3 and token.endswith("s") and not token.endswith("ss"):
        return token[:-1]
    return token


def answer_to_node(answer: str, taxonomy: Taxonomy) -> str | None:
    """Map a free-text answer to a taxonomy term, or ``None`` when nothing matches.

    Exact match of the whole normalized answer wins; otherwise the longest
    token run (by characters) that names a node, earliest on ties.
    """
    tokens = [_singular(t) for t in _PUNCT.sub(" ", answer.lower()).split()]
    if not tokens:
        return None
    whole = " ".join(tokens)
    if whole in taxonomy.parent:
        return whole
    raw_whole = " ".join(_PUNCT.sub(" ", answer.lower()).split())
    if raw_whole in taxonomy.parent:
        return raw_whole
    best: str | None = None
    for i in range(len(tokens)):
        for j in range(i + 1, len(tokens) + 1):
            cand = " ".join(tokens[i:j])
            if cand in taxonomy.parent and (best is None or len(cand) > len(best)):
                best = cand
    return best


def answer_wup(taxonomy: Taxonomy, predicted: str, expected: str) -> float:
    a, b = answer_to_node(predicted, taxonomy), answer_to_node(expected, taxonomy)
    if a is None or b is None:
        return 0.0
    return wup(taxonomy, a, b)


# --- embedding score --------------------------------------------------------

def embed_score(u: Sequence[float], v: Sequence[float]) -> float:
    a, b = np.asarray(u, dtype=np.float64), np.asarray(v, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise DimensionMismatch(f"embedding shapes differ: {a.shape} vs {b.shape}")
    for name, vec in (("u", a), ("v", b)):
        norm = float(np.linalg.norm(vec))
        if abs(norm - 1.0) > NORM_TOLERANCE:
            raise NotNormalized(f"{name} has norm {norm}")
    cos = float(np.dot(a, b))
    return 100.0 * min(max(cos, 0.0), 1.0)


# --- segmentation -----------------------------------------------------------

@dataclass(frozen=True)
class SegReportRow:
    name: str
    baseline_iou: float
    ours_iou: float

    @property
    def delta(self) -> float:
        return self.ours_iou - self.baseline_iou


@dataclass
class SegmentationSummary:
    rows: list[SegReportRow]
    miou_baseline: float
    miou_ours: float
    improved: int
    degraded: int
    unchanged: int
    epsilon: float = UNCHANGED_EPSILON
    baseline_label: str = "Baseline"
    ours_label: str = "Ours"

    @property
    def miou_delta(self) -> float:
        return self.miou_ours - self.miou_baseline

    def to_json(self) -> dict:
        return {
            "rows": [{"class": r.name, "baseline": r.baseline_iou, "ours": r.ours_iou} for r in self.rows],
            "miou_baseline": self.miou_baseline,
            "miou_ours": self.miou_ours,
            "improved": self.improved,
            "degraded": self.degraded,
            "unchanged": self.unchanged,
            "epsilon": self.epsilon,
            "baseline_label": self.baseline_label,
            "ours_label": self.ours_label,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "SegmentationSummary":
        rows = [SegReportRow(r["class"], float(r["baseline"]), float(r["ours"])) for r in obj["rows"]]
        return cls(rows, float(obj["miou_baseline"]), float(obj["miou_ours"]), int(obj["improved"]),
                   int(obj["degraded"]), int(obj["unchanged"]), float(obj.get("epsilon", UNCHANGED_EPSILON)),
                   obj.get("baseline_label", "Baseline"), obj.get("ours_label", "Ours"))


def seg_report(baseline: Mapping[str, float], ours: Mapping[str, float], epsilon: float = UNCHANGED_EPSILON,
               baseline_label: str = "Baseline", ours_label: str = "Ours") -> SegmentationSummary:
    if set(baseline) != set(ours):
        only_b = sorted(set(baseline) - set(ours))
        only_o = sorted(set(ours) - set(baseline))
        raise ClassSetMismatch(f"class sets differ (baseline only: {only_b}, ours only: {only_o})")
    if not baseline:
        raise EmptyInput("no classes to report")
    rows = [SegReportRow(name, float(baseline[name]), float(ours[name])) for name in baseline]
    improved = sum(r.delta > epsilon for r in rows)
    degraded = sum(r.delta < -epsilon for r in rows)
    n = len(rows)
    return SegmentationSummary(
        rows=rows,
        miou_baseline=math.fsum(r.baseline_iou for r in rows) / n,
        miou_ours=math.fsum(r.ours_iou for r in rows) / n,
        improved=improved,
        degraded=degraded,
        unchanged=n - improved - degraded,
        epsilon=epsilon,
        baseline_label=baseline_label,
        ours_label=ours_label,
    )


# --- report -----------------------------------------------------------------

@dataclass(frozen=True)
class CountingResult:
    dataset: str
    model: str
    mae: float
    mse: float


@dataclass(frozen=True)
class VqaResult:
    dataset: str
    model: str
    embed_score: float
    wup: float


@dataclass
class EvalReport:
    counting: list[CountingResult] = field(default_factory=list)
    vqa: list[VqaResult] = field(default_factory=list)
    segmentation: SegmentationSummary | None = None

    def __post_init__(self):
        seg = self.segmentation
        if seg is not None and seg.improved + seg.degraded + seg.unchanged != len(seg.rows):
            raise ValueError("segmentation tally does not cover every class")

    def to_json(self) -> dict:
        return {
            "counting": [vars(r) for r in self.counting],
            "vqa": [vars(r) for r in self.vqa],
            "segmentation": self.segmentation.to_json() if self.segmentation else None,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "EvalReport":
        seg = obj.get("segmentation")
        return cls(
            counting=[CountingResult(**r) for r in obj.get("counting", [])],
            vqa=[VqaResult(**r) for r in obj.get("vqa", [])],
            segmentation=SegmentationSummary.from_json(seg) if seg else None,
        )


def _markdown_table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> list[str]:
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
    lines += ["| " + " | ".join(r) + " |" for r in rows]
    return lines


def classification_line(seg: SegmentationSummary) -> str:
    return f"Improved: {seg.improved}  Degraded: {seg.degraded}  Unchanged: {seg.unchanged}"


def render_report(report: EvalReport, fmt: str = "markdown") -> str:
    """Render the non-empty sections as tables.

    Counting and VQA numbers use 2 decimals, per-class IoU 2 decimals and
    the mIoU footer 4 decimals with a signed delta.
    """
    if fmt not in ("markdown", "csv"):
        raise ValueError(f"unknown report format {fmt!r}")
    sections: list[tuple[str, list[str], list[list[str]], list[list[str]]]] = []
    if report.counting:
        rows = [[r.dataset, r.model, f"{r.mae:.2f}", f"{r.mse:.2f}"] for r in report.counting]
        sections.append(("Counting", ["Dataset", "Model", "MAE", "MSE"], rows, []))
    if report.vqa:
        rows = [[r.dataset, r.model, f"{r.embed_score:.2f}", f"{r.wup:.2f}"] for r in report.vqa]
        sections.append(("VQA", ["Dataset", "Model", "Clip-Score", "WUP"], rows, []))
    seg = report.segmentation
    if seg is not None:
        rows = [[r.name, f"{r.baseline_iou:.2f}", f"{r.ours_iou:.2f}", f"{r.delta:+.2f}"] for r in seg.rows]
        footer = [["mIoU", f"{seg.miou_baseline:.4f}", f"{seg.miou_ours:.4f}", f"{seg.miou_delta:+.4f}"]]
        sections.append(("Segmentation", ["Class", seg.baseline_label, seg.ours_label, "Delta"], rows, footer))

    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        for title, header, rows, footer in sections:
            writer.writerow(["section", *header])
            for r in rows + footer:
                writer.writerow([title.lower(), *r])
        if seg is not None:
            writer.writerow(["segmentation", "Improved", seg.improved, "Degraded", seg.degraded,
                             "Unchanged", seg.unchanged])
        return buf.getvalue()

    lines: list[str] = []
    for title, header, rows, footer in sections:
        if lines:
            lines.append("")
        lines.append(f"## {title}")
        lines.append("")
        lines += _markdown_table(header, rows + footer)
        if title == "Segmentation":
            lines.append("")
            lines.append(classification_line(seg))
    return "\n".join(lines) + "\n" if lines else ""


# --- dataset-level evaluation ------------------------------------------------

def read_jsonl(path: str | Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def evaluate_counting(predictions: Sequence[Mapping], ground_truth: Mapping[int, int]) -> tuple[float, float]:
    """MAE/MSE of ``predicted_total`` against ground-truth totals keyed by image id."""
    preds = {int(p["image_id"]): CountPrediction(int(p["image_id"]), int(p["predicted_total"])) for p in predictions}
    missing = sorted(set(ground_truth) - set(preds))
    if missing:
        raise LengthMismatch(f"no prediction for image ids {missing[:10]}")
    ids = sorted(ground_truth)
    pred = [preds[i].predicted_total for i in ids]
    gt = [ground_truth[i] for i in ids]
    return mae(pred, gt), mse(pred, gt)


def accumulate_class_iou(pairs: Iterable[tuple[Mapping, Mapping]]) -> dict[str, float]:
    """Dataset-level per-class IoU: summed intersections over summed unions.

    ``pairs`` yields ``(pred, gt)`` maps of class name to
    :class:`~mmforge.masks.BinaryMask`, one pair per frame. Classes whose
    ground truth is empty everywhere are left out.
    """
    inter: dict[str, int] = {}
    union: dict[str, int] = {}
    gt_area: dict[str, int] = {}
    for pred, gt in pairs:
        for name, g in gt.items():
            p = pred.get(name)
            gb = g.bits
            pb = p.bits if p is not None else np.zeros_like(gb)
            if pb.shape != gb.shape:
                raise DimensionMismatch(f"class {name}: {pb.shape} vs {gb.shape}")
            inter[name] = inter.get(name, 0) + int(np.count_nonzero(pb & gb))
            union[name] = union.get(name, 0) + int(np.count_nonzero(pb | gb))
            gt_area[name] = gt_area.get(name, 0) + int(np.count_nonzero(gb))
    return {name: inter[name] / union[name] for name in sorted(union) if gt_area[name] > 0}
