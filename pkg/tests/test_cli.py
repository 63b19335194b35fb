import json
import subprocess
import sys
from pathlib import Path

import pytest

from conftest import make_coco
from mmforge.cli import EXIT_OK, EXIT_PARTIAL, EXIT_USAGE, SUBCOMMANDS, build_parser, main
from mmforge.config import OUTPUT_ROOT_ENV
from mmforge.store import read_dataset

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="module")
def generated(tmp_path_factory):
    """A 6-sample mock dataset generated once through the CLI."""
    base = tmp_path_factory.mktemp("cli")
    (base / "coco.json").write_text(json.dumps(make_coco(10, seed=3)))
    (base / "mmforge.toml").write_text('output_root = "out"\nannotations = "coco.json"\nnum_frames = 4\n'
                                       "frame_width = 32\nframe_height = 24\nmax_workers = 2\n")
    code = main(["generate", "--config", str(base / "mmforge.toml"), "--mock", "--limit", "6", "--seed", "5"])
    assert code == EXIT_OK
    return base


def test_every_subcommand_has_help():
    parser = build_parser()
    for name in SUBCOMMANDS:
        with pytest.raises(SystemExit) as exc:
            parser.parse_args([name, "--help"])
        assert exc.value.code == 0


def test_console_entry_point_runs():
    out = subprocess.run([sys.executable, "-m", "mmforge.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.startswith("mmforge ")


def test_unknown_flag_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["generate", "--bogus"])
    assert exc.value.code == EXIT_USAGE


def test_ingest(tmp_path, capsys):
    doc = make_coco(5, seed=1)
    doc["annotations"][0]["bbox"] = [-5, 0, 10, 10]
    (tmp_path / "c.json").write_text(json.dumps(doc))
    assert main(["ingest", str(tmp_path / "c.json"), "--out", str(tmp_path / "diag.jsonl")]) == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["images"] == 5 and summary["violations"] >= 1
    assert (tmp_path / "diag.jsonl").read_text().count("\n") == summary["violations"]


def test_ingest_malformed_is_not_usage_error(tmp_path):
    (tmp_path / "c.json").write_text("{not json")
    assert main(["ingest", str(tmp_path / "c.json")]) == EXIT_PARTIAL


def test_generate_output(generated):
    ds = read_dataset(generated / "out")
    assert len(ds) == 6
    for s in ds.samples:
        assert len(s.video) == 4 and len(s.vqa.pairs) == 3
        assert all(len(t) == 4 for t in s.tracks)
    report = json.loads((generated / "out" / "run_report.json").read_text())
    assert report["samples_succeeded"] == 6


def test_generate_rerun_is_all_cache_hits(generated, capsys):
    assert main(["generate", "--config", str(generated / "mmforge.toml"), "--mock", "--limit", "6",
                 "--seed", "5"]) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["backend_calls"] == 0 and report["cache_hits"] > 0


def test_generate_config_errors(tmp_path):
    assert main(["generate"]) == EXIT_USAGE
    (tmp_path / "a.toml").write_text('output_root = "out"\n')
    assert main(["generate", "--config", str(tmp_path / "a.toml"), "--mock"]) == EXIT_USAGE
    (tmp_path / "b.toml").write_text('annotations = "missing.json"\n')
    assert main(["generate", "--config", str(tmp_path / "b.toml"), "--mock"]) == EXIT_USAGE
    (tmp_path / "coco.json").write_text(json.dumps(make_coco(2)))
    (tmp_path / "c.toml").write_text('annotations = "coco.json"\n')
    # no endpoints and no --mock
    assert main(["generate", "--config", str(tmp_path / "c.toml")]) == EXIT_USAGE
    assert main(["generate", "--config", str(tmp_path / "c.toml"), "--mock", "--workers", "0"]) == EXIT_USAGE


@pytest.mark.parametrize("supervision,per_sample", [("captions", 1), ("vqa_only", 3), ("captions_plus_vqa", 4)])
def test_export(generated, tmp_path, capsys, supervision, per_sample):
    out = tmp_path / f"{supervision}.jsonl"
    assert main(["export", "--dataset", str(generated / "out"), "--supervision", supervision,
                 "--out", str(out)]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["records"] == 6 * per_sample
    assert len(out.read_text().splitlines()) == 6 * per_sample


def test_export_counting_and_default_location(generated, monkeypatch, capsys):
    monkeypatch.setenv(OUTPUT_ROOT_ENV, str(generated / "out"))
    assert main(["export", "--supervision", "vqa_only", "--counting-qa"]) == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    ds = read_dataset(generated / "out")
    assert summary["records"] == sum(3 + len(s.counting_qa) for s in ds.samples)
    assert Path(summary["path"]) == generated / "out" / "exports" / "vqa_only.jsonl"


def test_export_needs_dataset(tmp_path, monkeypatch):
    monkeypatch.delenv(OUTPUT_ROOT_ENV, raising=False)
    assert main(["export", "--supervision", "captions"]) == EXIT_USAGE
    assert main(["export", "--supervision", "captions", "--dataset", str(tmp_path)]) == EXIT_USAGE


def test_subset_and_split(generated, tmp_path):
    root = str(generated / "out")
    assert main(["subset", "--dataset", root, "--size", "4", "--seed", "2", "--out", str(tmp_path / "s4")]) == 0
    assert main(["subset", "--dataset", root, "--size", "2", "--seed", "2", "--out", str(tmp_path / "s2")]) == 0
    s4, s2 = read_dataset(tmp_path / "s4"), read_dataset(tmp_path / "s2")
    assert len(s4) == 4 and set(s2.image_ids()) <= set(s4.image_ids())
    assert (tmp_path / "s4" / s4.samples[0].video[0]).exists()
    assert main(["subset", "--dataset", root, "--size", "7", "--out", str(tmp_path / "s7")]) == EXIT_USAGE

    assert main(["split", "--dataset", root, "--train-size", "4", "--val-size", "2",
                 "--out", str(tmp_path / "sp")]) == EXIT_OK
    train, val = read_dataset(tmp_path / "sp" / "train"), read_dataset(tmp_path / "sp" / "val")
    assert (len(train), len(val)) == (4, 2)
    assert not set(train.image_ids()) & set(val.image_ids())
    assert main(["split", "--dataset", root, "--out", str(tmp_path / "big")]) == EXIT_USAGE


def test_inspect(generated, capsys):
    ds = read_dataset(generated / "out")
    image_id = ds.image_ids()[0]
    assert main(["inspect", str(image_id), "--dataset", str(generated / "out")]) == EXIT_OK
    shown = json.loads(capsys.readouterr().out)
    assert shown["image_id"] == image_id and len(shown["vqa"]["pairs"]) == 3
    assert main(["inspect", "424242", "--dataset", str(generated / "out")]) == EXIT_USAGE


def test_evaluate_segmentation_fixture(tmp_path, capsys):
    fx = json.loads((DATA / "segmentation_74.json").read_text())
    for key in ("baseline", "synthetic_5k"):
        (tmp_path / f"{key}.json").write_text(json.dumps(fx[key]))
    out = tmp_path / "rep"
    assert main(["evaluate", "--task", "segmentation", str(tmp_path / "baseline.json"),
                 str(tmp_path / "synthetic_5k.json"), "--out", str(out)]) == EXIT_OK
    text = capsys.readouterr().out
    assert "+0.0528" in text and "Improved: 36  Degraded: 26  Unchanged: 12" in text
    assert (out / "report.md").read_text() == text
    assert main(["report", str(out / "eval_report.json"), "--format", "csv",
                 "--out", str(tmp_path / "r.csv")]) == EXIT_OK
    assert "+0.0528" in capsys.readouterr().out
    assert "+0.0528" in (tmp_path / "r.csv").read_text()


def test_evaluate_segmentation_from_masks(generated, tmp_path, capsys):
    ds = read_dataset(generated / "out")
    perfect, empty = tmp_path / "perfect.jsonl", tmp_path / "empty.jsonl"
    with open(perfect, "w") as fh:
        for s in ds.samples:
            masks = [dict(t.frames[f].to_coco(), frame=f, category=t.category)
                     for t in s.tracks for f in range(len(t))]
            fh.write(json.dumps({"image_id": s.image_id, "masks": masks}) + "\n")
    empty.write_text("")
    assert main(["evaluate", "--task", "segmentation", str(empty), str(perfect),
                 "--dataset", str(generated / "out"), "--out", str(tmp_path / "rep")]) == EXIT_OK
    capsys.readouterr()
    seg = json.loads((tmp_path / "rep" / "eval_report.json").read_text())["segmentation"]
    assert seg["miou_ours"] == 1.0 and seg["miou_baseline"] == 0.0


def test_evaluate_counting(generated, tmp_path, capsys):
    ds = read_dataset(generated / "out")
    exact = tmp_path / "exact.jsonl"
    off = tmp_path / "off.jsonl"
    exact.write_text("".join(json.dumps({"image_id": s.image_id, "predicted_total": s.count_label.total}) + "\n"
                             for s in ds.samples))
    off.write_text("".join(json.dumps({"image_id": s.image_id, "predicted_total": s.count_label.total + 2}) + "\n"
                           for s in ds.samples))
    assert main(["evaluate", "--task", "counting", str(exact), str(off), "--dataset", str(generated / "out"),
                 "--out", str(tmp_path / "rep")]) == EXIT_OK
    text = capsys.readouterr().out
    assert "| exact | 0.00 | 0.00 |" in text and "| off | 2.00 | 4.00 |" in text


def test_evaluate_vqa_mock(generated, tmp_path, capsys):
    ds = read_dataset(generated / "out")
    subjects = {s.vqa.pairs[0].answer for s in ds.samples}
    tax = tmp_path / "tax.tsv"
    tax.write_text("".join(f"{w}\tentity\n" for w in sorted(subjects) if " " not in w) + "scene\tentity\n")
    preds = tmp_path / "echo.jsonl"
    preds.write_text("".join(json.dumps({"image_id": s.image_id, "pair": 0, "answer": s.vqa.pairs[0].answer}) + "\n"
                             for s in ds.samples))
    assert main(["evaluate", "--task", "vqa", str(tax), str(preds), "--mock", "--dataset", str(generated / "out"),
                 "--out", str(tmp_path / "rep")]) == EXIT_OK
    capsys.readouterr()
    vqa = json.loads((tmp_path / "rep" / "eval_report.json").read_text())["vqa"][0]
    assert vqa["wup"] == 1.0
    assert 0.0 <= vqa["embed_score"] <= 100.0


def test_evaluate_usage_errors(tmp_path):
    p = tmp_path / "a.json"
    p.write_text("{}")
    assert main(["evaluate", str(p)]) == EXIT_USAGE
    assert main(["evaluate", "--task", "segmentation", str(p)]) == EXIT_USAGE
    assert main(["evaluate", "--task", "vqa", str(p)]) == EXIT_USAGE
