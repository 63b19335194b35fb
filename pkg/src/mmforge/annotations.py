"""Prompt construction and response parsing for the caption/VQA backends.

VQA replies use a fixed line protocol: repeated ``Q: <question>`` /
``A: <answer>`` line pairs, exactly three pairs per image.
"""

from __future__ import annotations

import re
import string
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .coco import CountLabel, ImageRecord
from .errors import MalformedPair, MismatchedImage, UnresolvedPlaceholder, WrongPairCount

VQA_PAIRS_PER_IMAGE = 3
CAPTION_KIND = "future_plausible"
PLACEHOLDERS = frozenset({"file_name", "caption", "categories"})

CAPTION_INSTRUCTION = "Describe a plausible future scene that could unfold from this image"
EXACTLY_THREE_REMINDER = "Reply with exactly three Q:/A: pairs, no more and no fewer."


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    body: str
    placeholders: frozenset[str] = PLACEHOLDERS

    def fields(self) -> list[str]:
        return [f for _, f, _, _ in string.Formatter().parse(self.body) if f is not None]

    def render(self, **values: str) -> str:
        for name in self.fields():
            if name not in self.placeholders or name not in values:
                raise UnresolvedPlaceholder(f"template {self.name!r} references unknown field {{{name}}}")
        return self.body.format(**values)

    @classmethod
    def from_file(cls, path: str | Path, name: str | None = None) -> "PromptTemplate":
        path = Path(path)
        return cls(name or path.stem, path.read_text(encoding="utf-8"))


CAPTION_TEMPLATE = PromptTemplate(
    "caption",
    "Image: {file_name}\n"
    "Objects present: {categories}\n"
    f"{CAPTION_INSTRUCTION}. Write one short paragraph describing what happens next, "
    "keeping every listed object in the scene.",
)

VQA_TEMPLATE = PromptTemplate(
    "vqa",
    "Image: {file_name}\n"
    "Caption: {caption}\n"
    "Using the image and the caption, write exactly three visual question-answer pairs "
    "about the video content. Use this format and nothing else:\n"
    "Q: <question>\nA: <answer>",
)

COUNT_CATEGORY_TEMPLATE = "How many {name} are in the video?"
COUNT_TOTAL_QUESTION = "How many objects are in the video in total?"


@dataclass(frozen=True)
class CaptionRecord:
    image_id: int
    text: str
    kind: str = CAPTION_KIND

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("caption text is empty")
        if re.search(r"\n\s*\n", self.text):
            raise ValueError("caption must be a single paragraph")

    def to_json(self) -> dict:
        return {"image_id": self.image_id, "text": self.text, "kind": self.kind}

    @classmethod
    def from_json(cls, obj: Mapping) -> "CaptionRecord":
        return cls(int(obj["image_id"]), str(obj["text"]), str(obj.get("kind", CAPTION_KIND)))


@dataclass(frozen=True)
class VqaPair:
    question: str
    answer: str

    def __post_init__(self):
        q, a = self.question.strip(), self.answer.strip()
        if not q.endswith("?"):
            raise ValueError(f"question must end with '?': {self.question!r}")
        if not a:
            raise ValueError("answer is empty")
        object.__setattr__(self, "question", q)
        object.__setattr__(self, "answer", a)

    def to_json(self) -> dict:
        return {"question": self.question, "answer": self.answer}

    @classmethod
    def from_json(cls, obj: Mapping) -> "VqaPair":
        return cls(str(obj["question"]), str(obj["answer"]))


@dataclass(frozen=True)
class VqaSet:
    image_id: int | None
    pairs: tuple[VqaPair, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(self.pairs))
        if len(self.pairs) != VQA_PAIRS_PER_IMAGE:
            raise WrongPairCount(len(self.pairs))

    def to_json(self) -> dict:
        return {"image_id": self.image_id, "pairs": [p.to_json() for p in self.pairs]}

    @classmethod
    def from_json(cls, obj: Mapping) -> "VqaSet":
        return cls(obj.get("image_id"), tuple(VqaPair.from_json(p) for p in obj["pairs"]))


def build_caption_prompt(image: ImageRecord, categories: Sequence[str],
                         template: PromptTemplate = CAPTION_TEMPLATE) -> str:
    cats = ", ".join(categories) if categories else "none annotated"
    return template.render(file_name=image.file_name, categories=cats)


def build_vqa_prompt(image: ImageRecord, caption: CaptionRecord,
                     template: PromptTemplate = VQA_TEMPLATE) -> str:
    if caption.image_id != image.id:
        raise MismatchedImage(f"caption belongs to image {caption.image_id}, not {image.id}")
    return template.render(file_name=image.file_name, caption=caption.text)


def parse_caption_response(image_id: int, text: str) -> CaptionRecord:
    """Collapse the reply into one paragraph; empty replies raise ``ValueError``."""
    return CaptionRecord(image_id, " ".join(text.split()))


_LINE = re.compile(r"^(Q|A):\s*(.*)$")


def parse_vqa_response(text: str, image_id: int | None = None) -> VqaSet:
    pairs: list[VqaPair] = []
    question: str | None = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        m = _LINE.match(line)
        if m is None:
            raise MalformedPair(f"line {lineno} lacks a Q:/A: prefix: {line!r}")
        tag, body = m.group(1), m.group(2).strip()
        if tag == "Q":
            if question is not None:
                raise MalformedPair(f"line {lineno}: question without an answer before it")
            question = body
            continue
        if question is None:
            raise MalformedPair(f"line {lineno}: answer without a question")
        try:
            pairs.append(VqaPair(question, body))
        except ValueError as exc:
            raise MalformedPair(f"line {lineno}: {exc}") from exc
        question = None
    if question is not None:
        raise MalformedPair("trailing question without an answer")
    if len(pairs) != VQA_PAIRS_PER_IMAGE:
        raise WrongPairCount(len(pairs))
    return VqaSet(image_id, tuple(pairs))


def render_vqa(vqa: VqaSet | Sequence[VqaPair]) -> str:
    pairs = vqa.pairs if isinstance(vqa, VqaSet) else vqa
    return "".join(f"Q: {p.question}\nA: {p.answer}\n" for p in pairs)


def counts_to_qa(label: CountLabel, category_template: str = COUNT_CATEGORY_TEMPLATE,
                 total_question: str = COUNT_TOTAL_QUESTION) -> list[VqaPair]:
    pairs = [
        VqaPair(category_template.format(name=name), str(count))
        for name, count in sorted(label.per_category.items())
    ]
    pairs.append(VqaPair(total_question, str(label.total)))
    return pairs
