import json
from pathlib import Path

import numpy as np
import pytest
import torch

from conftest import WEIGHTS, synthetic_image, write_pose_file
from topomap_extractor.extract import ExtractionJob, export_head, extract_stream
from topomap_extractor.model import pooled_features

# The primary artifact is the consumer of everything this package writes;
# its loaders and classifiers validate the wire formats end to end.
from topomap.classifiers import DEFAULT_OBJECT_SUBSET, head_logits, load_head, resolve_subset
from topomap.dataset import load_stream


def run_job(image_dir, tmp_path, backbone, frame_ids, out_name="stream", labels=None):
    pose_file = write_pose_file(tmp_path / "poses.txt", frame_ids)
    label_file = None
    if labels:
        label_file = tmp_path / "labels.txt"
        label_file.write_text("".join(f"{k} {v}\n" for k, v in labels.items()))
    job = ExtractionJob(
        image_dir=image_dir,
        pose_file=pose_file,
        out_path=tmp_path / out_name,
        label_file=label_file,
        weights=WEIGHTS,
        batch_size=2,
    )
    return job, extract_stream(job, backbone=backbone)


def test_three_images_give_three_1024d_frames(image_dir, tmp_path, backbone):
    frame_ids = ["frame-0.png", "frame-1.png", "frame-2.png"]
    _, result = run_job(image_dir, tmp_path, backbone, frame_ids)
    stream = load_stream(result.out_path)  # primary loader validates the format
    assert len(stream) == 3
    assert stream.feature_dim == 1024
    assert stream.frame_ids == frame_ids
    assert np.allclose(stream.positions[:, 0], [0.0, 0.5, 1.0])


def test_same_image_twice_gives_identical_features(image_dir, tmp_path, backbone):
    frame_ids = ["frame-0.png", "frame-0.png", "frame-3.png"]
    _, result = run_job(image_dir, tmp_path, backbone, frame_ids, out_name="twice")
    stream = load_stream(result.out_path)
    assert np.array_equal(stream.features[0], stream.features[1])
    assert not np.array_equal(stream.features[0], stream.features[2])


def test_frame_order_matches_pose_order(image_dir, tmp_path, backbone):
    frame_ids = ["frame-3.png", "frame-1.png", "frame-4.png", "frame-0.png"]
    _, result = run_job(image_dir, tmp_path, backbone, frame_ids, out_name="order")
    stream = load_stream(result.out_path)
    assert stream.frame_ids == frame_ids
    # batch boundaries (batch_size=2) must not reorder anything; only batch
    # reduction-order noise may differ between batch sizes
    solo_ids = ["frame-1.png"]
    _, solo = run_job(image_dir, tmp_path, backbone, solo_ids, out_name="solo")
    assert np.allclose(load_stream(solo.out_path).features[0], stream.features[1], atol=1e-4)


def test_labels_attach_by_frame_id(image_dir, tmp_path, backbone):
    frame_ids = ["frame-0.png", "frame-1.png", "frame-2.png"]
    labels = {"frame-0.png": "kitchen", "frame-2.png": "hall"}
    _, result = run_job(image_dir, tmp_path, backbone, frame_ids, out_name="lab", labels=labels)
    stream = load_stream(result.out_path)
    assert stream.label_names == ["kitchen", "hall"]
    assert list(stream.labels) == [0, -1, 1]


def test_undecodable_image_skipped_and_recorded(image_dir, tmp_path, backbone):
    (image_dir / "broken.png").write_text("this is not an image")
    frame_ids = ["frame-0.png", "broken.png", "missing.png", "frame-1.png"]
    _, result = run_job(image_dir, tmp_path, backbone, frame_ids, out_name="skips")
    assert result.skipped == ["broken.png", "missing.png"]
    stream = load_stream(result.out_path)
    assert stream.frame_ids == ["frame-0.png", "frame-1.png"]
    manifest = json.loads((result.out_path / "manifest.json").read_text())
    assert manifest["meta"]["extraction"]["skipped_frames"] == ["broken.png", "missing.png"]


def test_stream_bytes_deterministic(image_dir, tmp_path, backbone):
    frame_ids = ["frame-0.png", "frame-1.png"]
    _, a = run_job(image_dir, tmp_path, backbone, frame_ids, out_name="det-a")
    _, b = run_job(image_dir, tmp_path, backbone, frame_ids, out_name="det-b")
    tree_a = {p.name: p.read_bytes() for p in sorted(a.out_path.iterdir())}
    tree_b = {p.name: p.read_bytes() for p in sorted(b.out_path.iterdir())}
    assert tree_a == tree_b


def test_exported_head_shape_and_vocabulary(tmp_path, backbone):
    head_path = export_head(tmp_path / "head", backbone=backbone)
    manifest = json.loads((head_path / "manifest.json").read_text())
    assert manifest["meta"]["out_dim"] == 1000
    assert manifest["meta"]["in_dim"] == 1024
    head = load_head(head_path)
    assert head.weights.shape == (1000, 1024)
    # the 13 evaluation object classes resolve against the vocabulary by name
    indices = resolve_subset(head.class_names, DEFAULT_OBJECT_SUBSET)
    assert len(indices) == 13


def test_cross_component_logit_equivalence(image_dir, tmp_path, backbone):
    """Primary head_logits over extracted features matches the model's own
    logits within 1e-4 absolute (float32 serialization slack)."""
    frame_ids = [f"frame-{i}.png" for i in range(5)]
    _, result = run_job(image_dir, tmp_path, backbone, frame_ids, out_name="eq")
    stream = load_stream(result.out_path)
    head = load_head(export_head(tmp_path / "eq-head", backbone=backbone))

    from PIL import Image

    batch = torch.stack(
        [backbone.preprocess(Image.open(image_dir / f)) for f in frame_ids]
    )
    _, reference_logits = pooled_features(backbone, batch)
    reference = reference_logits.numpy()
    for i in range(5):
        ours = head_logits(head, np.asarray(stream.features[i], dtype=np.float64))
        assert np.max(np.abs(ours - reference[i])) < 1e-4


def test_pose_table_validation(tmp_path):
    from topomap_extractor.extract import read_pose_table

    bad = tmp_path / "bad.txt"
    bad.write_text("frame-0.png 0.0\n")
    with pytest.raises(ValueError):
        read_pose_table(bad)
    nonfinite = tmp_path / "nan.txt"
    nonfinite.write_text("frame-0.png nan 1.0\n")
    with pytest.raises(ValueError):
        read_pose_table(nonfinite)


def test_cli_round_trip(image_dir, tmp_path, capsys):
    from topomap_extractor.cli import main

    pose_file = write_pose_file(tmp_path / "poses.txt", ["frame-0.png", "frame-1.png"])
    code = main(
        [
            "extract",
            "--images", str(image_dir),
            "--poses", str(pose_file),
            "--weights", WEIGHTS,
            "--out", str(tmp_path / "cli-stream"),
        ]
    )
    assert code == 0
    stream = load_stream(tmp_path / "cli-stream")
    assert len(stream) == 2 and stream.feature_dim == 1024
    assert main(["export-head", "--weights", WEIGHTS, "--out", str(tmp_path / "cli-head")]) == 0
    assert load_head(tmp_path / "cli-head").out_dim == 1000


def test_cli_reports_usage_errors(tmp_path, capsys):
    from topomap_extractor.cli import main

    empty_poses = tmp_path / "poses.txt"
    empty_poses.write_text("# nothing\n")
    code = main(
        ["extract", "--images", str(tmp_path), "--poses", str(empty_poses),
         "--weights", WEIGHTS, "--out", str(tmp_path / "out")]
    )
    assert code == 1
    assert "error[" in capsys.readouterr().err


def _pretrained_cached() -> bool:
    hub = Path(torch.hub.get_dir()) / "checkpoints" / "googlenet-1378be20.pth"
    return hub.is_file()


@pytest.mark.skipif(
    not _pretrained_cached(),
    reason="pretrained checkpoint not cached (offline sandbox); see README for the fetch recipe",
)
def test_monitor_like_photo_classifies_as_display_device(tmp_path):
    # Requires the ImageNet checkpoint; with it, a photo dominated by a
    # monitor should land on a display-device class.
    from topomap_extractor.model import load_backbone

    backbone = load_backbone("pretrained")
    image = synthetic_image(seed=0)
    batch = torch.stack([backbone.preprocess(image)])
    _, logits = pooled_features(backbone, batch)
    top1 = backbone.class_names[int(torch.argmax(logits[0]))]
    assert any(k in top1 for k in ("monitor", "screen", "television"))
