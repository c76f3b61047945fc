import hashlib
import json
import os

import numpy as np
import pytest
from PIL import Image

from selfiegen import cli
from selfiegen.config import ConfigError, PipelineConfig

from conftest import (paint, save_png, write_augment_inputs, write_head_volumes, write_rank_inputs,
                      write_selfie_inputs)


def tree_hashes(root):
    out = {}
    for dirpath, _, files in os.walk(root):
        for f in files:
            p = os.path.join(dirpath, f)
            out[os.path.relpath(p, root)] = hashlib.sha256(open(p, "rb").read()).hexdigest()
    return out


def manifest_complete(out):
    manifest = json.loads((out / "manifest.json").read_text())
    listed = [f for e in manifest["entries"] for f in e.get("files", [])]
    on_disk = sorted(p.name for p in out.iterdir() if p.name != "manifest.json")
    assert sorted(listed) == on_disk
    return manifest


@pytest.fixture(scope="module")
def volumes(tmp_path_factory):
    return write_head_volumes(tmp_path_factory.mktemp("vol") / "volumes", 2)


def test_help_lists_subcommands(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["--help"])
    assert exc.value.code == 0
    text = capsys.readouterr().out
    for name in ("gen-pairs", "simulate-selfies", "rank-poses", "canny-target", "make-mask", "augment"):
        assert name in text


def test_gen_pairs(volumes, tmp_path):
    out = tmp_path / "out"
    rc = cli.main(["gen-pairs", "--volumes", str(volumes), "--iso-level", "0", "--resolution", "96",
                   "--out", str(out)])
    assert rc == 0
    manifest = manifest_complete(out)
    assert len(manifest["entries"]) == 2
    for e in manifest["entries"]:
        assert len(e["pairs"]) == 4 and e["aligned"]
        assert [p["distance"] for p in e["pairs"]] == [1.0, 1.3, 1.6, 1.9]
    assert manifest["parameters"]["focal_f0"] == 2.9
    assert Image.open(out / "head000_gt.png").size == (96, 96)


def test_gen_pairs_without_landmarks_and_with_jobs(tmp_path):
    vols = write_head_volumes(tmp_path / "v", 3, landmarks=False)
    a, b = tmp_path / "a", tmp_path / "b"
    base = ["gen-pairs", "--volumes", str(vols), "--iso-level", "0", "--resolution", "64"]
    assert cli.main(base + ["--out", str(a)]) == 0
    assert cli.main(base + ["--out", str(b), "--jobs", "2"]) == 0
    assert tree_hashes(a) == tree_hashes(b)
    assert not json.loads((a / "manifest.json").read_text())["entries"][0]["aligned"]


def test_gen_pairs_errors(tmp_path, capsys):
    (tmp_path / "empty").mkdir()
    assert cli.main(["gen-pairs", "--volumes", str(tmp_path / "empty"), "--iso-level", "0",
                     "--out", str(tmp_path / "o")]) == 1
    assert "no volumes" in capsys.readouterr().err
    assert cli.main(["gen-pairs", "--volumes", str(tmp_path / "missing"), "--iso-level", "0"]) == 1
    vols = write_head_volumes(tmp_path / "v", 1)
    assert cli.main(["gen-pairs", "--volumes", str(vols), "--out", str(tmp_path / "o")]) == 1
    assert "--iso-level" in capsys.readouterr().err


def test_gen_pairs_skips_bad_volume(tmp_path):
    vols = write_head_volumes(tmp_path / "v", 2, landmarks=False)
    (vols / "broken.raw").write_bytes(b"\0" * 10)
    (vols / "broken.json").write_text(json.dumps({"dims": [4, 4, 4], "origin": [0, 0, 0], "spacing": [1, 1, 1]}))
    out = tmp_path / "o"
    assert cli.main(["gen-pairs", "--volumes", str(vols), "--iso-level", "0", "--resolution", "32",
                     "--out", str(out)]) == 2
    manifest = manifest_complete(out)
    assert [s["id"] for s in manifest["skipped"]] == ["broken"]
    assert manifest["counts"] == {"entries": 2, "files": 12, "skipped": 1}


def test_config_file_and_flag_override(volumes, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"volumes_dir": str(volumes), "iso_level": 0.0, "resolution": 48,
                               "input_distances": [1.0, 2.0]}))
    out = tmp_path / "o"
    assert cli.main(["gen-pairs", "--config", str(cfg), "--resolution", "40", "--out", str(out)]) == 0
    m = manifest_complete(out)
    assert m["parameters"]["resolution"] == 40
    assert m["parameters"]["input_distances"] == [1.0, 2.0]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"nonsense": 1}))
    assert cli.main(["gen-pairs", "--config", str(bad)]) == 1


def test_pipeline_config_defaults():
    c = PipelineConfig()
    assert (c.focal_f0, c.input_distances, c.gt_distance) == (2.9, [1.0, 1.3, 1.6, 1.9], 10.0)
    assert (c.selfie_min_pixels, c.reference_min_pixels, c.bbox_factor, c.dilate_radius) == (21, 5, 1.1, 21)
    assert (c.blend_s, c.total_steps, c.pool_size, c.finetune_outputs, c.dreambooth_outputs) == (0.4, 50, 20, 200, 50)
    with pytest.raises(ConfigError):
        PipelineConfig(jobs=0).check_paths()


def test_simulate_selfies(tmp_path):
    images, typical = write_selfie_inputs(tmp_path / "in", 2, drop_lower_for=1)
    out = tmp_path / "out"
    rc = cli.main(["simulate-selfies", "--images", str(images), "--typical", str(typical),
                   "--size", "64", "--out", str(out)])
    assert rc == 2
    m = manifest_complete(out)
    assert m["entries"][0]["files"] == [f"body0_{p}.png" for p in ("face", "upper", "lower", "shoes")]
    assert len(m["entries"][1]["files"]) == 3
    assert [(s["id"], s["part"]) for s in m["skipped"]] == [("body1", "lower")]
    assert Image.open(out / "body0_upper.png").size == (64, 64)


def test_simulate_selfies_typical_from_examples(tmp_path):
    images, typical = write_selfie_inputs(tmp_path / "in", 1)
    # replace one typical file with a directory of examples
    ex_dir = typical / "upper"
    ex_dir.mkdir()
    (ex_dir / "a.json").write_text((typical / "typical_upper.json").read_text())
    (typical / "typical_upper.json").unlink()
    assert cli.main(["simulate-selfies", "--images", str(images), "--typical", str(typical),
                     "--size", "32", "--out", str(tmp_path / "o")]) == 0
    (ex_dir / "a.json").unlink()
    assert cli.main(["simulate-selfies", "--images", str(images), "--typical", str(typical),
                     "--out", str(tmp_path / "o2")]) == 1


def test_rank_poses(tmp_path):
    tax, coll = write_rank_inputs(tmp_path / "in")
    root = tmp_path / "in"
    out = tmp_path / "out"
    args = ["rank-poses", "--selfie-upper", str(root / "upper.png"), "--selfie-lower", str(root / "lower.png"),
            "--selfie-shoes", str(root / "shoes.png"), "--taxonomy", str(tax)]
    assert cli.main(args + ["--collection", str(coll), "--out", str(out)]) == 0
    manifest_complete(out)
    ranked = json.loads((out / "ranked.json").read_text())
    scores = [r["score"] for r in ranked]
    assert scores == sorted(scores, reverse=True)
    assert np.asarray(Image.open(out / "top_mask.png")).shape == (64, 64)
    (tmp_path / "none").mkdir()
    out2 = tmp_path / "out2"
    assert cli.main(args + ["--collection", str(tmp_path / "none"), "--out", str(out2)]) == 0
    assert json.loads((out2 / "ranked.json").read_text()) == []


def test_make_mask_and_canny(tmp_path):
    labels = paint((64, 48), [(3, 10, 40, 10, 30), (6, 40, 60, 12, 28)])
    save_png(labels, tmp_path / "map.png")
    from conftest import write_taxonomy
    tax = write_taxonomy(tmp_path / "tax.json")
    out = tmp_path / "o"
    assert cli.main(["make-mask", "--map", str(tmp_path / "map.png"), "--taxonomy", str(tax),
                     "--out", str(out)]) == 0
    mask = np.asarray(Image.open(out / "map_mask.png")) > 0
    ys, xs = np.nonzero(mask)
    # person box [10, 30) x [10, 60), 1.1x about (20, 35) -> [9, 31) x [8, 63)
    assert (xs.min(), xs.max() + 1, ys.min(), ys.max() + 1) == (9, 31, 8, 63)
    assert cli.main(["make-mask", "--map", str(tmp_path / "map.png"), "--kind", "foreground", "--radius", "2",
                     "--out", str(out)]) == 0
    fg = np.asarray(Image.open(out / "map_foreground.png")) > 0
    # 34x24 and 24x20 dilated boxes overlapping in a 4x20 strip
    assert fg.sum() == 34 * 24 + 24 * 20 - 4 * 20
    out2 = tmp_path / "c"
    assert cli.main(["canny-target", "--map", str(tmp_path / "map.png"), "--out", str(out2)]) == 0
    edges = np.asarray(Image.open(out2 / "map_canny.png"))
    assert set(np.unique(edges)) == {0, 255}
    assert cli.main(["canny-target", "--map", str(tmp_path / "map.png"), "--low", "1e6", "--high", "1e6",
                     "--out", str(tmp_path / "c2")]) == 0
    assert not np.asarray(Image.open(tmp_path / "c2" / "map_canny.png")).any()
    save_png(np.zeros((16, 16)), tmp_path / "flat.png")
    assert cli.main(["canny-target", "--map", str(tmp_path / "flat.png"), "--out", str(tmp_path / "c3")]) == 0
    assert not np.asarray(Image.open(tmp_path / "c3" / "flat_canny.png")).any()


def test_augment_modes(tmp_path):
    bg, pool, tax, selfies = write_augment_inputs(tmp_path / "in")
    out = tmp_path / "ft"
    args = ["augment", "--background", str(bg), "--pool", str(pool), "--taxonomy", str(tax),
            "--upper", str(selfies["upper"]), "--lower", str(selfies["lower"]), "--count", "12"]
    assert cli.main(args + ["--out", str(out)]) == 0
    m = manifest_complete(out)
    assert len(m["entries"]) == 12
    assert {e["source_part"] for e in m["entries"]} <= {"upper", "lower"}
    db = tmp_path / "db"
    assert cli.main(["augment", "--mode", "dreambooth", "--face", str(selfies["face"]), "--count", "3",
                     "--out", str(db)]) == 0
    m = manifest_complete(db)
    assert [e["file"] for e in m["entries"]] == ["face_000.png", "face_001.png", "face_002.png"]
    assert cli.main(["augment", "--mode", "dreambooth", "--out", str(tmp_path / "x")]) == 1


def test_seed_changes_output(tmp_path):
    bg, pool, tax, selfies = write_augment_inputs(tmp_path / "in")
    base = ["augment", "--mode", "dreambooth", "--face", str(selfies["face"]), "--count", "2"]
    cli.main(base + ["--seed", "1", "--out", str(tmp_path / "a")])
    cli.main(base + ["--seed", "2", "--out", str(tmp_path / "b")])
    assert tree_hashes(tmp_path / "a") != tree_hashes(tmp_path / "b")
