import json
import math
from pathlib import Path

import pytest

import svip

TINY_SPEC = {
    "grid": 2,
    "num_attributes": 4,
    "seen_classes": 3,
    "unseen_classes": 2,
    "samples_per_class": 6,
    "train_fraction": 0.5,
    "min_active": 1,
    "max_active": 2,
    "word_dim": 6,
    "seed": 3,
}

TINY_CONFIG = {
    "patch_size": 8,
    "embed_dim": 8,
    "num_layers": 1,
    "num_heads": 2,
    "mlp_ratio": 2,
    "epochs": 2,
    "batch_size": 4,
    "word_dim": 6,
    "seed": 11,
}


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    digest = svip.generate(TINY_SPEC, str(out))
    return out, digest


@pytest.fixture(scope="module")
def checkpoint(dataset, tmp_path_factory):
    data_dir, _ = dataset
    ckpt = tmp_path_factory.mktemp("ckpt") / "model.ckpt"
    log = ckpt.with_suffix(".jsonl")
    result = svip.train(TINY_CONFIG, str(data_dir), str(ckpt), str(log))
    return ckpt, log, result


def test_generate_is_deterministic(dataset, tmp_path):
    _, digest = dataset
    assert svip.generate(TINY_SPEC, str(tmp_path)) == digest
    assert (tmp_path / "meta.txt").exists()


def test_generate_rejects_unknown_key(tmp_path):
    with pytest.raises(ValueError):
        svip.generate({**TINY_SPEC, "bogus": 1}, str(tmp_path))


def test_train_and_evaluate(dataset, checkpoint):
    data_dir, _ = dataset
    ckpt, log, result = checkpoint
    assert ckpt.exists()
    assert result["steps"] > 0
    assert len(result["epoch_loss"]) == 2
    last = result["last"]
    assert math.isclose(
        last["total"], last["cls"] + last["jsd"] + 3 * last["patch"], rel_tol=1e-12
    )
    lines = log.read_text().splitlines()
    assert len(lines) == result["steps"]
    json.loads(lines[0])

    report = svip.evaluate(str(ckpt), str(data_dir))
    for key in ("T1", "U", "S", "H"):
        assert 0.0 <= report[key] <= 100.0
    assert math.isclose(report["H"], svip.harmonic_mean(report["U"], report["S"]))


def test_evaluate_missing_data(checkpoint, tmp_path):
    ckpt, _, _ = checkpoint
    with pytest.raises(svip.DataError):
        svip.evaluate(str(ckpt), str(tmp_path / "absent"))


def test_inspect(dataset, checkpoint, tmp_path):
    data_dir, _ = dataset
    ckpt, _, _ = checkpoint
    image = next((Path(data_dir) / "preview").glob("*.pgm"))
    out = tmp_path / "inspect"
    ins = svip.inspect(str(ckpt), str(image), str(out), str(data_dir))
    assert ins["grid"] == 2
    assert len(ins["pseudo"]) == 4
    assert 1 <= len(ins["selected"]) <= 4
    assert len(ins["pooled"]) == 4
    assert ins["zsl_class"] is not None
    assert (out / "summary.json").exists()


def test_harmonic_mean():
    assert svip.harmonic_mean(80.0, 60.0) == pytest.approx(2 * 80 * 60 / 140)
    assert svip.harmonic_mean(0.0, 0.0) == 0.0


def test_attention_aggregation():
    t1 = [[0.5, 0.5], [0.25, 0.75]]
    t2 = [[1.0, 0.0], [0.0, 1.0]]
    w = svip.aggregate_attention([t1, t2])
    assert w[0] == pytest.approx([1.0, 1.0])
    assert w[1] == pytest.approx([0.5, 1.5])
    assert svip.pseudo_scores([[0.0, 0.2, 0.3, 0.4], [0] * 4, [0] * 4, [0] * 4]) == (
        pytest.approx([0.0, 0.5, 1.0])
    )


def test_selection_and_losses():
    assert svip.select_top_m([0.1, 0.9, 0.5, 0.9], 2) == [1, 3]
    assert svip.jsd([0.3, 0.7], [0.3, 0.7]) == 0.0
    assert svip.jsd([0.75, 0.25], [0.25, 0.75]) == pytest.approx(0.5 * math.log(3))
    assert svip.patch_loss([0.5, 0.5], [1.0, 0.0]) == pytest.approx(math.log(2))
    with pytest.raises(ValueError):
        svip.jsd([0.5, 0.5], [0.5, 0.5], mode="other")


def test_classify():
    probs = svip.classify([1.0, 0.0], [[1.0, 0.0], [0.0, 1.0]], sigma=5.0)
    assert sum(probs) == pytest.approx(1.0)
    assert probs[0] > probs[1]


def test_gradcheck():
    result = svip.gradcheck()
    assert result["passed"]
    assert result["max_rel_error"] < 1e-4
