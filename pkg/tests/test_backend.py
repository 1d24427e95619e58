import json
import threading

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wastescan.backend import (
    ActivationStack,
    BackendConfig,
    BackendError,
    ClassifierOutput,
    ImageTooSmall,
    answer_pending_request,
    classify_batch,
    heuristic_score,
    read_batch_response,
    write_batch_request,
)

from conftest import checkerboard, make_raster


def variance_oracle(block_pixels):
    """Direct population variance over one grayscale block."""
    vals = [float(v) for row in block_pixels for v in row]
    mean = sum(vals) / len(vals)
    return sum((v - mean) ** 2 for v in vals) / len(vals)


def test_checkerboard_block_variance_value():
    # one 8x8 block of a single-pixel 0/255 checkerboard
    block = [[0 if (r + c) % 2 == 0 else 255 for c in range(8)] for r in range(8)]
    assert variance_oracle(block) == 16256.25
    assert 127.5 ** 2 == 16256.25


class TestHeuristic:
    def test_uniform_scores_zero(self):
        out = heuristic_score(make_raster(w=32, h=32, value=90))
        assert out.score == 0.0
        assert (out.activations.values == 0).all()
        assert out.channel_weights == [1.0]

    def test_checkerboard_scores_one(self):
        img = make_raster(pixels=checkerboard(32, 32))
        out = heuristic_score(img)
        assert out.score == 1.0
        # every block variance equals the hand-computed value
        assert (out.activations.values == 16256.25).all()

    def test_half_and_half_scores_half(self):
        px = np.full((32, 64, 3), 128, dtype=np.uint8)
        px[:, :32] = checkerboard(32, 32)
        out = heuristic_score(make_raster(pixels=px))
        assert out.score == 0.5

    def test_activation_grid_shape(self):
        out = heuristic_score(make_raster(w=40, h=24), block=8)
        assert (out.activations.K, out.activations.h, out.activations.w) == (1, 3, 5)

    def test_trailing_pixels_ignored(self):
        px = np.full((19, 19, 3), 50, dtype=np.uint8)
        px[16:, :] = 255  # perturb only the remainder strip
        px[:, 16:] = 255
        out = heuristic_score(make_raster(pixels=px), block=8)
        assert out.score == 0.0

    def test_image_too_small(self):
        with pytest.raises(ImageTooSmall):
            heuristic_score(make_raster(w=4, h=4), block=8)

    @given(base=st.integers(0, 160), shift=st.integers(0, 75))
    def test_translation_invariance(self, base, shift):
        # non-saturating by construction: base + noise + shift <= 254
        rng = np.random.default_rng(base * 100 + shift)
        noise = rng.integers(0, 20, (16, 16, 3)).astype(np.uint8)
        img = make_raster(pixels=(noise + base).astype(np.uint8))
        shifted = make_raster(pixels=(noise + base + shift).astype(np.uint8))
        assert heuristic_score(img).score == heuristic_score(shifted).score

    def test_monotone_in_high_variance_blocks(self):
        scores = []
        for k in range(5):
            px = np.full((8, 40, 3), 128, dtype=np.uint8)
            px[:, :8 * k] = checkerboard(8, 8 * k) if k else px[:, :0]
            scores.append(heuristic_score(make_raster(pixels=px)).score)
        assert scores == sorted(scores)
        assert scores == [k / 5 for k in range(5)]


class TestClassifyBatch:
    def test_empty_list(self):
        assert classify_batch([], BackendConfig()) == []

    def test_uniform_and_checkerboard(self):
        imgs = [make_raster(w=32, h=32, value=10),
                make_raster(pixels=checkerboard(32, 32))]
        outs = classify_batch(imgs, BackendConfig())
        assert [o.score for o in outs] == [0.0, 1.0]

    def test_batching_is_transparent(self):
        rng = np.random.default_rng(42)
        imgs = [make_raster(pixels=rng.integers(0, 256, (16, 16, 3), dtype=np.uint8))
                for _ in range(7)]
        whole = classify_batch(imgs, BackendConfig())
        singles = [classify_batch([im], BackendConfig())[0] for im in imgs]
        assert [o.score for o in whole] == [o.score for o in singles]

    def test_mixed_dimensions_rejected(self):
        imgs = [make_raster(w=16, h=16), make_raster(w=32, h=32)]
        with pytest.raises(ValueError):
            classify_batch(imgs, BackendConfig())

    def test_scores_in_unit_interval(self):
        rng = np.random.default_rng(9)
        imgs = [make_raster(pixels=rng.integers(0, 256, (24, 24, 3), dtype=np.uint8))
                for _ in range(5)]
        for out in classify_batch(imgs, BackendConfig()):
            assert 0.0 <= out.score <= 1.0
            assert np.isfinite(out.activations.values).all()


class TestTypes:
    def test_score_range_enforced(self):
        with pytest.raises(ValueError):
            ClassifierOutput(score=1.2)

    def test_weights_must_match_channels(self):
        acts = ActivationStack(np.zeros((2, 3, 3)))
        with pytest.raises(ValueError):
            ClassifierOutput(score=0.5, activations=acts, channel_weights=[1.0])

    def test_non_finite_activations_rejected(self):
        with pytest.raises(ValueError):
            ActivationStack(np.array([[[np.nan]]]))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            BackendConfig(variance_threshold=0)
        with pytest.raises(ValueError):
            BackendConfig(block=1)
        with pytest.raises(ValueError):
            BackendConfig(kind="external")


class TestExchange:
    def cfg(self, tmp_path, timeout=5.0):
        return BackendConfig(kind="external", exchange_dir=tmp_path, timeout_s=timeout,
                             poll_s=0.01)

    def test_round_trip_with_responder(self, tmp_path):
        imgs = [make_raster(w=16, h=16, value=30),
                make_raster(pixels=checkerboard(16, 16))]
        done = threading.Event()

        def responder():
            while not done.is_set():
                if answer_pending_request(tmp_path):
                    return
                done.wait(0.005)

        worker = threading.Thread(target=responder)
        worker.start()
        try:
            outs = classify_batch(imgs, self.cfg(tmp_path))
        finally:
            done.set()
            worker.join()
        assert [o.score for o in outs] == [0.0, 1.0]
        assert outs[1].activations is not None
        assert outs[1].channel_weights == [1.0]
        # exchange dir cleaned up for the next batch
        assert not (tmp_path / "request.json").exists()
        assert not (tmp_path / "response.done").exists()

    def test_request_files_written(self, tmp_path):
        imgs = [make_raster(w=8, h=8), make_raster(w=8, h=8)]
        request = write_batch_request(imgs, tmp_path, batch_id="batch-00042")
        manifest = json.loads((tmp_path / "request.json").read_text())
        assert manifest == request
        assert len(manifest["entries"]) == 2
        for entry in manifest["entries"]:
            assert (tmp_path / entry["image_file"]).exists()

    def test_missing_record_is_protocol_violation(self, tmp_path):
        imgs = [make_raster(w=8, h=8), make_raster(w=8, h=8)]
        request = write_batch_request(imgs, tmp_path)
        entries = [{"tile_id": request["entries"][0]["tile_id"], "score": 0.5}]
        (tmp_path / "response.json").write_text(
            json.dumps({"batch_id": request["batch_id"], "entries": entries}))
        (tmp_path / "response.done").write_text("")
        with pytest.raises(BackendError):
            read_batch_response(tmp_path, request, timeout_s=1.0)

    def test_out_of_range_score_rejected(self, tmp_path):
        imgs = [make_raster(w=8, h=8)]
        request = write_batch_request(imgs, tmp_path)
        entries = [{"tile_id": request["entries"][0]["tile_id"], "score": 1.2}]
        (tmp_path / "response.json").write_text(
            json.dumps({"batch_id": request["batch_id"], "entries": entries}))
        (tmp_path / "response.done").write_text("")
        with pytest.raises(BackendError):
            read_batch_response(tmp_path, request, timeout_s=1.0)

    def test_activation_length_mismatch_rejected(self, tmp_path):
        imgs = [make_raster(w=8, h=8)]
        request = write_batch_request(imgs, tmp_path)
        tid = request["entries"][0]["tile_id"]
        (tmp_path / "acts.bin").write_bytes(b"\x00" * 10)  # not K*h*w*4
        entries = [{"tile_id": tid, "score": 0.5, "activations_file": "acts.bin",
                    "K": 1, "h": 2, "w": 2, "channel_weights": [1.0]}]
        (tmp_path / "response.json").write_text(
            json.dumps({"batch_id": request["batch_id"], "entries": entries}))
        (tmp_path / "response.done").write_text("")
        with pytest.raises(BackendError, match="bytes"):
            read_batch_response(tmp_path, request, timeout_s=1.0)

    def test_timeout(self, tmp_path):
        imgs = [make_raster(w=8, h=8)]
        with pytest.raises(BackendError, match="no response"):
            classify_batch(imgs, self.cfg(tmp_path, timeout=0.05))

    def test_batch_id_attached_to_error(self, tmp_path):
        imgs = [make_raster(w=8, h=8)]
        try:
            classify_batch(imgs, self.cfg(tmp_path, timeout=0.05))
        except BackendError as err:
            assert err.batch_id == "batch-00000"
            assert err.tile_ids == ["t000000"]

    def test_chunked_batches(self, tmp_path):
        imgs = [make_raster(w=8, h=8, value=v) for v in (10, 20, 30)]
        done = threading.Event()

        def responder():
            answered = 0
            while answered < 2 and not done.wait(0.005):
                if answer_pending_request(tmp_path, include_activations=False):
                    answered += 1

        cfg = BackendConfig(kind="external", exchange_dir=tmp_path, batch_size=2,
                            timeout_s=5.0, poll_s=0.01)
        worker = threading.Thread(target=responder)
        worker.start()
        try:
            outs = classify_batch(imgs, cfg)
        finally:
            done.set()
            worker.join()
        assert len(outs) == 3
        assert all(o.score == 0.0 for o in outs)
        assert all(o.activations is None for o in outs)
