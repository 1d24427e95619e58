"""Classifier backends behind one batch-scoring contract.

Two kinds ship: a deterministic variance heuristic (waste piles are
high-texture anomalies, so block variance of the luma channel is a usable
analytically-testable stand-in) and a directory-based file exchange that lets
an external trained model, in any runtime, answer batches of tiles.

Exchange layout (all inside one directory, one batch at a time):
  request.json    {"batch_id", "entries": [{"tile_id", "image_file"}]}
  <tile PNGs>
  response.json   {"batch_id", "entries": [{"tile_id", "score",
                   "activations_file"?, "K"?, "h"?, "w"?, "channel_weights"?}]}
  <activation files: raw little-endian float32, channel-major row-major>
  response.done   empty marker, written last by the responder
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .georaster import GeoRaster, write_png


class ImageTooSmall(Exception):
    """Image smaller than one variance block."""


class BackendError(Exception):
    """External backend timeout or protocol violation."""

    def __init__(self, message, batch_id=None, tile_ids=None):
        super().__init__(message)
        self.batch_id = batch_id
        self.tile_ids = tile_ids or []


@dataclass
class ActivationStack:
    """(K, h, w) activation channels feeding the saliency map."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 3:
            raise ValueError(f"expected (K, h, w) activations, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1 or arr.shape[2] < 1:
            raise ValueError(f"degenerate activation shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("activations must be finite")
        self.values = arr

    @property
    def K(self) -> int:
        return self.values.shape[0]

    @property
    def h(self) -> int:
        return self.values.shape[1]

    @property
    def w(self) -> int:
        return self.values.shape[2]


@dataclass
class ClassifierOutput:
    score: float
    activations: ActivationStack | None = None
    channel_weights: list[float] | None = None

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"score {self.score} outside [0, 1]")
        if self.activations is not None:
            if self.channel_weights is None or len(self.channel_weights) != self.activations.K:
                raise ValueError("channel_weights must match activation channel count")


@dataclass
class BackendConfig:
    kind: str = "heuristic"
    exchange_dir: Path | None = None
    variance_threshold: float = 100.0
    block: int = 8
    batch_size: int = 120
    timeout_s: float = 30.0
    poll_s: float = 0.05

    def __post_init__(self):
        if self.kind not in ("heuristic", "external"):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.kind == "external" and self.exchange_dir is None:
            raise ValueError("external backend needs an exchange_dir")
        if self.variance_threshold <= 0:
            raise ValueError("variance_threshold must be > 0")
        if self.block < 2:
            raise ValueError("block must be >= 2")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def _pixels(img) -> np.ndarray:
    return img.pixels if isinstance(img, GeoRaster) else np.asarray(img, dtype=np.uint8)


def heuristic_score(img, variance_threshold: float = 100.0, block: int = 8) -> ClassifierOutput:
    """Fraction of blocks whose luma population variance reaches the
    threshold; the block-variance grid doubles as the activation map."""
    arr = _pixels(img)
    if arr.shape[0] < block or arr.shape[1] < block:
        raise ImageTooSmall(f"image {arr.shape[1]}x{arr.shape[0]} smaller than block {block}")
    gray = kernels.gray_u8(arr)
    var = kernels.block_variance(gray, block)
    score = int((var >= variance_threshold).sum()) / var.size
    return ClassifierOutput(
        score=score,
        activations=ActivationStack(var[None, :, :]),
        channel_weights=[1.0],
    )


def classify_batch(images, cfg: BackendConfig, pool=None) -> list[ClassifierOutput]:
    """Score a list of tiles, positionally aligned with the input.

    Batching is semantically transparent: the list is chunked internally by
    cfg.batch_size only for the external exchange round-trips. ``pool`` may
    be a concurrent.futures executor to parallelize the heuristic path.
    """
    if not images:
        return []
    dims = {(_pixels(im).shape[0], _pixels(im).shape[1]) for im in images}
    if len(dims) != 1:
        raise ValueError(f"mixed image dimensions in one batch: {sorted(dims)}")

    if cfg.kind == "heuristic":
        score = lambda im: heuristic_score(im, cfg.variance_threshold, cfg.block)
        if pool is not None:
            return list(pool.map(score, images))
        return [score(im) for im in images]

    outputs = []
    for seq, start in enumerate(range(0, len(images), cfg.batch_size)):
        chunk = images[start:start + cfg.batch_size]
        batch_id = f"batch-{seq:05d}"
        tile_ids = [f"t{start + k:06d}" for k in range(len(chunk))]
        request = write_batch_request(chunk, cfg.exchange_dir, batch_id=batch_id,
                                      tile_ids=tile_ids)
        try:
            outputs.extend(read_batch_response(cfg.exchange_dir, request,
                                               timeout_s=cfg.timeout_s, poll_s=cfg.poll_s))
        except BackendError as err:
            err.tile_ids = tile_ids
            raise
        _cleanup_exchange(cfg.exchange_dir, request)
    return outputs


def write_batch_request(images, exchange_dir, *, batch_id: str = "batch-00000",
                        tile_ids: list[str] | None = None) -> dict:
    """Write tile PNGs and request.json; returns the request manifest."""
    exchange_dir = Path(exchange_dir)
    exchange_dir.mkdir(parents=True, exist_ok=True)
    if tile_ids is None:
        tile_ids = [f"t{k:06d}" for k in range(len(images))]
    if len(tile_ids) != len(images):
        raise ValueError("tile_ids and images differ in length")
    entries = []
    for tid, img in zip(tile_ids, images):
        name = f"{batch_id}_{tid}.png"
        write_png(_pixels(img), exchange_dir / name)
        entries.append({"tile_id": tid, "image_file": name})
    request = {"batch_id": batch_id, "entries": entries}
    (exchange_dir / "request.json").write_text(json.dumps(request, indent=1))
    return request


def read_batch_response(exchange_dir, request: dict, *, timeout_s: float = 30.0,
                        poll_s: float = 0.05) -> list[ClassifierOutput]:
    """Wait for response.done, then parse and validate the batch response."""
    exchange_dir = Path(exchange_dir)
    batch_id = request["batch_id"]
    done = exchange_dir / "response.done"
    deadline = time.monotonic() + timeout_s
    while not done.exists():
        if time.monotonic() > deadline:
            raise BackendError(f"batch {batch_id}: no response within {timeout_s}s",
                               batch_id=batch_id)
        time.sleep(poll_s)

    try:
        response = json.loads((exchange_dir / "response.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise BackendError(f"batch {batch_id}: unreadable response.json ({exc})",
                           batch_id=batch_id) from None
    if response.get("batch_id") != batch_id:
        raise BackendError(
            f"batch {batch_id}: response carries batch_id {response.get('batch_id')!r}",
            batch_id=batch_id)
    by_tile = {e.get("tile_id"): e for e in response.get("entries", [])}
    wanted = [e["tile_id"] for e in request["entries"]]
    if set(by_tile) != set(wanted) or len(response.get("entries", [])) != len(wanted):
        raise BackendError(
            f"batch {batch_id}: response entries do not match request "
            f"({len(response.get('entries', []))} records for {len(wanted)} tiles)",
            batch_id=batch_id)

    outputs = []
    for tid in wanted:
        entry = by_tile[tid]
        if "score" not in entry:
            raise BackendError(f"batch {batch_id}: tile {tid} has no score", batch_id=batch_id)
        score = entry["score"]
        if not isinstance(score, (int, float)) or not (0.0 <= score <= 1.0):
            raise BackendError(f"batch {batch_id}: tile {tid} score {score!r} outside [0, 1]",
                               batch_id=batch_id)
        acts = None
        weights = None
        if entry.get("activations_file"):
            try:
                k, h, w = int(entry["K"]), int(entry["h"]), int(entry["w"])
            except (KeyError, TypeError, ValueError):
                raise BackendError(f"batch {batch_id}: tile {tid} activation shape missing",
                                   batch_id=batch_id) from None
            raw = (exchange_dir / entry["activations_file"]).read_bytes()
            if len(raw) != k * h * w * 4:
                raise BackendError(
                    f"batch {batch_id}: tile {tid} activation file is {len(raw)} bytes, "
                    f"expected {k * h * w * 4}", batch_id=batch_id)
            values = np.frombuffer(raw, dtype="<f4").reshape(k, h, w).astype(np.float64)
            if not np.isfinite(values).all():
                raise BackendError(f"batch {batch_id}: tile {tid} activations not finite",
                                   batch_id=batch_id)
            weights = entry.get("channel_weights")
            if not isinstance(weights, list) or len(weights) != k:
                raise BackendError(f"batch {batch_id}: tile {tid} channel_weights must list "
                                   f"{k} values", batch_id=batch_id)
            acts = ActivationStack(values)
            weights = [float(x) for x in weights]
        outputs.append(ClassifierOutput(score=float(score), activations=acts,
                                        channel_weights=weights))
    return outputs


def _cleanup_exchange(exchange_dir, request: dict) -> None:
    exchange_dir = Path(exchange_dir)
    try:
        response = json.loads((exchange_dir / "response.json").read_text())
        extra = [e["activations_file"] for e in response.get("entries", [])
                 if e.get("activations_file")]
    except (OSError, json.JSONDecodeError):
        extra = []
    names = ["request.json", "response.json", "response.done"]
    names += [e["image_file"] for e in request["entries"]]
    names += extra
    for name in names:
        (exchange_dir / name).unlink(missing_ok=True)


def answer_pending_request(exchange_dir, cfg: BackendConfig | None = None,
                           include_activations: bool = True) -> bool:
    """Reference responder: answer one pending request with the heuristic.

    Returns False when no request is waiting. External model wrappers should
    mirror exactly this sequence: response.json and activation files first,
    response.done last.
    """
    exchange_dir = Path(exchange_dir)
    req_path = exchange_dir / "request.json"
    if not req_path.exists() or (exchange_dir / "response.done").exists():
        return False
    cfg = cfg or BackendConfig()
    request = json.loads(req_path.read_text())
    entries = []
    for entry in request["entries"]:
        from .georaster import _read_png  # local import to keep module surface clean
        arr = _read_png(exchange_dir / entry["image_file"])
        out = heuristic_score(arr, cfg.variance_threshold, cfg.block)
        rec = {"tile_id": entry["tile_id"], "score": out.score}
        if include_activations and out.activations is not None:
            name = f"{request['batch_id']}_{entry['tile_id']}_acts.bin"
            (exchange_dir / name).write_bytes(
                out.activations.values.astype("<f4").tobytes())
            rec.update({"activations_file": name, "K": out.activations.K,
                        "h": out.activations.h, "w": out.activations.w,
                        "channel_weights": out.channel_weights})
        entries.append(rec)
    (exchange_dir / "response.json").write_text(
        json.dumps({"batch_id": request["batch_id"], "entries": entries}, indent=1))
    (exchange_dir / "response.done").write_text("")
    return True
