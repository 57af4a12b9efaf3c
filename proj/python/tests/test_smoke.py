import math
import os
import subprocess

import numpy as np
import pytest

import mtface


def read_ppm(path):
    with open(path, "rb") as f:
        data = f.read()
    magic, w, h, maxval, rest = data.split(maxsplit=4)
    assert magic == b"P6" and maxval == b"255"
    return np.frombuffer(rest, dtype=np.uint8).reshape(int(h), int(w), 3)


@pytest.fixture(scope="module")
def weights(tmp_path_factory):
    cli = os.environ.get("MTFACE_CLI")
    if not cli:
        pytest.skip("MTFACE_CLI not set")
    root = tmp_path_factory.mktemp("weights")
    cfg = root / "train.cfg"
    cfg.write_text("landmark.input_size = 32\nlandmark.heatmap_size = 8\nlandmark.num_stacks = 1\n"
                   "landmark.channels = 8\nbackbone.features = 16\nmax_steps = 1\nbatch.landmark = 4\n"
                   "batch.au = 4\nbatch.gaze = 4\nbatch.emotion = 4\n"
                   f"manifest.landmark = {root}/c/landmarks.csv\nmanifest.au = {root}/c/au.csv\n"
                   f"manifest.gaze = {root}/c/gaze.csv\nmanifest.emotion = {root}/c/emotion.csv\n")
    mtface.synth(str(root / "c"), n=4, seed=3, size=32)
    subprocess.run([cli, "train", "--config", str(cfg), "--stage", "all", "--out", str(root / "m.bin")],
                   check=True, capture_output=True)
    return root


def test_synth_manifests(tmp_path):
    paths = mtface.synth(str(tmp_path), n=3, seed=1, tasks={"au", "gaze"}, size=32)
    assert sorted(paths) == ["au", "gaze"]
    with open(paths["au"]) as f:
        assert len(f.read().splitlines()) == 4
    img = read_ppm(tmp_path / "images" / "0000.ppm")
    assert img.shape == (32, 32, 3)


def test_inference(weights):
    model = mtface.Model.load(str(weights / "m.bin"))
    assert model.input_size == 32
    img = read_ppm(weights / "c" / "images" / "0001.ppm")
    rows = model.infer(img)
    assert len(rows) == 1 and rows[0]["success"]
    r = rows[0]
    assert r["landmarks"].shape == (68, 2)
    assert len(r["au_probs"]) == len(model.au_ids)
    assert math.isclose(sum(r["emotion_probs"]), 1.0, rel_tol=1e-9)
    assert r["emotion_label"] == int(np.argmax(r["emotion_probs"]))
    two = model.infer(img, boxes=[(4, 4, 30, 30), (0, 0, 0, 5)])
    assert [row["success"] for row in two] == [True, False]


def test_inspect_matches_model(weights):
    per_module, total = mtface.inspect(str(weights / "m.bin"))
    assert total == sum(per_module.values())
    assert total == mtface.Model.load(str(weights / "m.bin")).parameter_count()


def test_numerics():
    assert mtface.combined_loss((1.0, 2.0, 3.0)) == pytest.approx(3.0, abs=1e-12)
    assert mtface.orientation_bin(10) == "easy"
    assert mtface.orientation_bin(30) == "medium"
    assert mtface.orientation_bin(60) == "hard"
    assert mtface.angles_to_vector(0.0, 0.0)[2] == -1.0
    assert mtface.angular_error_deg((math.pi / 2, 0, math.pi / 2, 0), (0, 0, 0, 0)) == pytest.approx(90.0)


def test_errors(tmp_path):
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"nope" + bytes(20))
    with pytest.raises(mtface.Error, match="magic"):
        mtface.Model.load(str(bad))
    with pytest.raises(mtface.Error):
        mtface.combined_loss((float("nan"), 0.0, 0.0))
