import pytest
from hypothesis import given
from hypothesis import strategies as st

from mmforge.annotations import (
    CAPTION_INSTRUCTION,
    CaptionRecord,
    PromptTemplate,
    VqaPair,
    VqaSet,
    build_caption_prompt,
    build_vqa_prompt,
    counts_to_qa,
    parse_caption_response,
    parse_vqa_response,
    render_vqa,
)
from mmforge.coco import CountLabel, ImageRecord
from mmforge.errors import MalformedPair, MismatchedImage, UnresolvedPlaceholder, WrongPairCount

IMAGE = ImageRecord(123, "000123.jpg", 640, 480)


def test_caption_prompt_substitution_and_determinism():
    p = build_caption_prompt(IMAGE, ["dog"])
    assert "000123.jpg" in p and CAPTION_INSTRUCTION in p and "dog" in p
    assert build_caption_prompt(IMAGE, ["dog"]) == p


def test_unknown_placeholder():
    tpl = PromptTemplate("bad", "Image {file_name} and {missing}")
    with pytest.raises(UnresolvedPlaceholder):
        build_caption_prompt(IMAGE, ["dog"], tpl)


def test_template_from_file(tmp_path):
    path = tmp_path / "short.txt"
    path.write_text("Look at {file_name}; objects: {categories}")
    tpl = PromptTemplate.from_file(path)
    assert tpl.name == "short"
    assert build_caption_prompt(IMAGE, ["cat", "dog"], tpl) == "Look at 000123.jpg; objects: cat, dog"


def test_vqa_prompt():
    cap = CaptionRecord(123, "The dog jumps over the fence.")
    p = build_vqa_prompt(IMAGE, cap)
    assert cap.text in p
    assert build_vqa_prompt(IMAGE, cap) == p
    with pytest.raises(MismatchedImage):
        build_vqa_prompt(IMAGE, CaptionRecord(124, "other"))


def test_caption_record_invariants():
    with pytest.raises(ValueError):
        CaptionRecord(1, "   ")
    with pytest.raises(ValueError):
        CaptionRecord(1, "one\n\ntwo")
    assert parse_caption_response(1, "  A dog\n runs.  ").text == "A dog runs."


def test_parse_vqa_example():
    text = "Q: How many dogs?\nA: two\nQ: Where is it?\nA: park\nQ: What color?\nA: brown"
    vqa = parse_vqa_response(text, 5)
    assert vqa.image_id == 5
    assert [p.answer for p in vqa.pairs] == ["two", "park", "brown"]


def test_parse_vqa_errors():
    with pytest.raises(WrongPairCount):
        parse_vqa_response("Q: a?\nA: b\nQ: c?\nA: d")
    with pytest.raises(MalformedPair):
        parse_vqa_response("How many dogs\nA: two")
    with pytest.raises(MalformedPair):
        parse_vqa_response("A: two")
    with pytest.raises(MalformedPair):
        parse_vqa_response("Q: one?\nQ: two?")
    with pytest.raises(MalformedPair):
        parse_vqa_response("Q: no question mark\nA: x")


def test_vqa_set_needs_three_pairs():
    with pytest.raises(WrongPairCount):
        VqaSet(1, (VqaPair("a?", "b"),))


def test_counts_to_qa_examples():
    qa = counts_to_qa(CountLabel(1, {"dog": 2, "cat": 1}, 3))
    assert [p.answer for p in qa] == ["1", "2", "3"]
    assert "cat" in qa[0].question and "dog" in qa[1].question
    empty = counts_to_qa(CountLabel(1, {}, 0))
    assert len(empty) == 1 and empty[0].answer == "0"
    assert [p.answer for p in counts_to_qa(CountLabel(1, {"car": 7}, 7))] == ["7", "7"]


text_piece = st.text(alphabet=st.characters(whitelist_categories=("L", "N"), whitelist_characters=" ,.'-"),
                     min_size=1, max_size=30).filter(lambda s: s.strip())
pair = st.builds(lambda q, a: VqaPair(q.strip() + "?", a), text_piece, text_piece)


@given(st.lists(pair, min_size=3, max_size=3), st.integers(0, 10**6))
def test_vqa_wire_round_trip(pairs, image_id):
    vqa = VqaSet(image_id, tuple(pairs))
    assert parse_vqa_response(render_vqa(vqa), image_id) == vqa


@given(st.dictionaries(st.sampled_from(["dog", "cat", "car", "person", "traffic light"]), st.integers(1, 50)))
def test_counts_to_qa_reaggregates(per_category):
    label = CountLabel(9, per_category, sum(per_category.values()))
    qa = counts_to_qa(label)
    assert len(qa) == len(per_category) + 1
    rebuilt = {name: int(p.answer) for name, p in zip(sorted(per_category), qa)}
    assert rebuilt == per_category
    assert int(qa[-1].answer) == label.total
