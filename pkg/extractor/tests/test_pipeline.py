import json
import logging
import struct

import numpy as np
import pytest

from svec_extractor.encoders import StubEncoder
from svec_extractor.pipeline import ExtractionJob, run_extraction
from svec_extractor.video import mean_pool, sample_indices


def read_back(vp, mp):
    raw = vp.read_bytes()
    _, _, dim, count, _ = struct.unpack("<4sIIQ16s", raw[:36])
    vectors = np.frombuffer(raw[36:], dtype="<f4").reshape(count, dim)
    manifest = json.loads(mp.read_text())
    return vectors, manifest


def caption_job(captions_file, tmp_path, **kw):
    return ExtractionJob(model_id="stub",
                         out_vectors=tmp_path / "v.svec",
                         out_manifest=tmp_path / "m.json",
                         captions=captions_file.read_text().splitlines(), **kw)


def test_captions_extraction(tmp_path, captions_file):
    job = caption_job(captions_file, tmp_path, batch_size=3)
    n = run_extraction(job, encoder=StubEncoder(dim=16))
    assert n == 4
    vectors, manifest = read_back(job.out_vectors, job.out_manifest)
    assert manifest["dim"] == 16 and manifest["count"] == 4
    norms = np.linalg.norm(vectors.astype(np.float64), axis=1)
    assert np.abs(norms - 1.0).max() < 1e-4
    captions = [it["caption"] for it in manifest["items"]]
    assert captions == captions_file.read_text().splitlines()  # order preserved


def test_duplicate_captions_get_distinct_ids(tmp_path, captions_file):
    job = caption_job(captions_file, tmp_path)
    run_extraction(job, encoder=StubEncoder(dim=16))
    vectors, manifest = read_back(job.out_vectors, job.out_manifest)
    ids = [it["id"] for it in manifest["items"]]
    assert len(set(ids)) == len(ids)
    # identical captions encode to identical rows
    np.testing.assert_array_equal(vectors[0], vectors[2])


def test_rerun_is_bit_identical(tmp_path, captions_file):
    job1 = caption_job(captions_file, tmp_path)
    run_extraction(job1, encoder=StubEncoder(dim=16))
    first = job1.out_vectors.read_bytes()
    run_extraction(caption_job(captions_file, tmp_path),
                   encoder=StubEncoder(dim=16))
    assert job1.out_vectors.read_bytes() == first


def test_images_extraction_order_and_ids(tmp_path, image_dir):
    paths = sorted(image_dir.iterdir())
    job = ExtractionJob(model_id="stub", out_vectors=tmp_path / "v.svec",
                        out_manifest=tmp_path / "m.json",
                        image_paths=paths, batch_size=2)
    n = run_extraction(job, encoder=StubEncoder(dim=32))
    assert n == len(paths)
    _, manifest = read_back(job.out_vectors, job.out_manifest)
    assert [it["id"].split("-", 2)[2] for it in manifest["items"]] == \
        [p.stem for p in paths]


def test_unreadable_image_skipped_with_log(tmp_path, image_dir, caplog):
    paths = sorted(image_dir.iterdir())
    broken = tmp_path / "broken.png"
    broken.write_bytes(b"not an image")
    job = ExtractionJob(model_id="stub", out_vectors=tmp_path / "v.svec",
                        out_manifest=tmp_path / "m.json",
                        image_paths=[paths[0], broken, paths[1]])
    with caplog.at_level(logging.WARNING):
        n = run_extraction(job, encoder=StubEncoder(dim=16))
    assert n == 2
    assert any("skipping unreadable image" in r.message for r in caplog.records)
    _, manifest = read_back(job.out_vectors, job.out_manifest)
    assert [it["id"].split("-", 2)[2] for it in manifest["items"]] == \
        [paths[0].stem, paths[1].stem]


def test_labels_alignment(tmp_path, captions_file):
    lines = captions_file.read_text().splitlines()
    job = ExtractionJob(model_id="stub", out_vectors=tmp_path / "v.svec",
                        out_manifest=tmp_path / "m.json", captions=lines,
                        labels=[["dog"], ["cat"], ["dog"], ["street"]])
    run_extraction(job, encoder=StubEncoder(dim=8))
    _, manifest = read_back(job.out_vectors, job.out_manifest)
    assert [it["labels"] for it in manifest["items"]] == \
        [["dog"], ["cat"], ["dog"], ["street"]]


def test_job_validation(tmp_path):
    with pytest.raises(ValueError):
        ExtractionJob(model_id="stub", out_vectors=tmp_path / "v",
                      out_manifest=tmp_path / "m")
    with pytest.raises(ValueError):
        ExtractionJob(model_id="stub", out_vectors=tmp_path / "v",
                      out_manifest=tmp_path / "m", captions=["a"],
                      image_paths=[tmp_path / "x.png"])
    with pytest.raises(ValueError):
        ExtractionJob(model_id="stub", out_vectors=tmp_path / "v",
                      out_manifest=tmp_path / "m", captions=["a"], labels=[])


# --- video ---

def test_sample_indices_uniform():
    assert sample_indices(100, 5) == [0, 25, 50, 74, 99]
    assert sample_indices(3, 8) == [0, 1, 2]
    assert sample_indices(10, 1) == [5]
    with pytest.raises(ValueError):
        sample_indices(0, 4)
    with pytest.raises(ValueError):
        sample_indices(10, 0)


def test_mean_pool():
    feats = np.array([[1.0, 0.0], [0.0, 1.0]])
    np.testing.assert_allclose(mean_pool(feats), [0.5, 0.5])
    with pytest.raises(ValueError):
        mean_pool(np.zeros((0, 4)))


def test_video_extraction_end_to_end(tmp_path):
    cv2 = pytest.importorskip("cv2")
    video_path = tmp_path / "clip.avi"
    writer = cv2.VideoWriter(str(video_path),
                             cv2.VideoWriter_fourcc(*"MJPG"), 5.0, (32, 24))
    if not writer.isOpened():
        pytest.skip("no usable video codec in this environment")
    rng = np.random.default_rng(3)
    for _ in range(20):
        writer.write(rng.integers(0, 255, size=(24, 32, 3), dtype=np.uint8))
    writer.release()

    job = ExtractionJob(model_id="stub", out_vectors=tmp_path / "v.svec",
                        out_manifest=tmp_path / "m.json",
                        video_paths=[video_path], frames_per_video=4)
    n = run_extraction(job, encoder=StubEncoder(dim=16))
    assert n == 1
    vectors, manifest = read_back(job.out_vectors, job.out_manifest)
    assert manifest["items"][0]["id"].startswith("vid-000000-clip")
    assert abs(float(np.linalg.norm(vectors[0].astype(np.float64))) - 1.0) < 1e-4


def test_video_pooling_matches_manual(tmp_path):
    # pooled row == normalized mean of the per-frame embeddings
    frames = [np.full((4, 4, 3), fill, dtype=np.uint8) for fill in (10, 200)]
    encoder = StubEncoder(dim=8)

    class OneVideoReader:
        def __call__(self, path, n):
            return frames

    import svec_extractor.pipeline as pl
    job = ExtractionJob(model_id="stub", out_vectors=tmp_path / "v.svec",
                        out_manifest=tmp_path / "m.json",
                        video_paths=[tmp_path / "fake.avi"], frames_per_video=2)
    original = pl.read_frames
    pl.read_frames = OneVideoReader()
    try:
        run_extraction(job, encoder=encoder)
    finally:
        pl.read_frames = original
    vectors, _ = read_back(job.out_vectors, job.out_manifest)
    expected = encoder.encode_images(frames).mean(axis=0)
    expected = expected / np.linalg.norm(expected)
    np.testing.assert_allclose(vectors[0], expected.astype(np.float32),
                               rtol=0, atol=1e-7)
