"""Adapters that talk to detection backends.

Every downstream stage sees the same interface — ``detect(image, record_id)
-> list[Detection]`` — whether the backend is a remote HTTP service, a child
process speaking newline-delimited JSON, or the built-in deterministic mock.
Both wire transports carry identical payloads:

    request:   {"req_id": ..., "image": {"path"|"png_b64": ...},
                "score_threshold": ...}
    response:  {"req_id": ..., "detections": [{"box": [x1,y1,x2,y2],
                "objectness": f, "class_probs": [..]?}]}
    handshake: {"protocol": 1, "accepts": ["path", "png_b64"]}

The handshake (first stdout line of a subprocess backend, or GET
/capabilities of an HTTP one) negotiates how images cross the wire: as a
file path when the backend is local, else as a base64-encoded PNG.
"""
from __future__ import annotations

import json
import math
import subprocess
import tempfile
import threading
import time
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np
import requests

from .dataset import DatasetManifest, ImageRecord, load_manifest
from .geometry import BBox, Detection
from .imgio import encode_png_b64, intensity, load_image, save_image

ImageLike = Union[np.ndarray, str, Path]

PROTOCOL_VERSION = 1
_RETRY_ATTEMPTS = 3
_BACKOFF_BASE = 0.5  # seconds; doubles per attempt


class DetectorError(Exception):
    """Base class for adapter failures."""


class ProtocolError(DetectorError):
    """Fatal: the backend sent something malformed. Not retried."""


class RetryableDetectorError(DetectorError):
    """Transport-level failure (timeout, dropped connection) after retries."""


@dataclass(frozen=True)
class MockDetectorSpec:
    """What the mock believes: a reference manifest and a visibility cutoff.

    The mock re-detects a reference box on a perturbed image when the mean
    intensity ratio over the box region stays at or above
    ``visibility_threshold``.
    """

    manifest: DatasetManifest
    visibility_threshold: float = 0.5

    def __post_init__(self) -> None:
        t = self.visibility_threshold
        if not (0.0 < t <= 1.0):
            raise ValueError(f"visibility_threshold must be in (0, 1], got {t}")


@dataclass(frozen=True)
class DetectorConfig:
    kind: str  # "http" | "subprocess" | "mock"
    endpoint: str | None = None
    command: tuple[str, ...] | None = None
    manifest: str | None = None  # mock only: beliefs manifest path
    visibility_threshold: float = 0.5  # mock only
    score_threshold: float = 0.5
    request_parallelism: int = 1
    timeout: float = 30.0

    def __post_init__(self) -> None:
        if self.kind not in ("http", "subprocess", "mock"):
            raise ValueError(f"unknown detector kind {self.kind!r}")
        if not (0.0 <= self.score_threshold <= 1.0):
            raise ValueError(f"score_threshold must be in [0, 1], got {self.score_threshold}")
        if self.request_parallelism < 1:
            raise ValueError("request_parallelism must be >= 1")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.kind == "http" and not self.endpoint:
            raise ValueError("http detector needs an endpoint")
        if self.kind == "subprocess" and not self.command:
            raise ValueError("subprocess detector needs a command")
        if self.kind == "mock" and not self.manifest:
            raise ValueError("mock detector needs a reference manifest path")

    def to_json_dict(self) -> dict:
        out = {
            "kind": self.kind,
            "score_threshold": self.score_threshold,
            "request_parallelism": self.request_parallelism,
            "timeout": self.timeout,
        }
        if self.kind == "http":
            out["endpoint"] = self.endpoint
        elif self.kind == "subprocess":
            out["command"] = list(self.command)
        else:
            out["manifest"] = self.manifest
            out["visibility_threshold"] = self.visibility_threshold
        return out

    @classmethod
    def from_json_dict(cls, data: dict, base_dir: str | Path | None = None) -> "DetectorConfig":
        if not isinstance(data, dict):
            raise ValueError("detector config must be a JSON object")
        known = {
            "kind", "endpoint", "command", "manifest", "visibility_threshold",
            "score_threshold", "request_parallelism", "timeout",
        }
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown detector config keys: {sorted(unknown)}")
        kwargs = dict(data)
        if "command" in kwargs and kwargs["command"] is not None:
            kwargs["command"] = tuple(str(c) for c in kwargs["command"])
        if base_dir is not None and kwargs.get("manifest"):
            p = Path(kwargs["manifest"])
            if not p.is_absolute():
                kwargs["manifest"] = str(Path(base_dir) / p)
        return cls(**kwargs)


def load_detector_config(path: str | Path) -> DetectorConfig:
    path = Path(path)
    with open(path) as fh:
        data = json.load(fh)
    return DetectorConfig.from_json_dict(data, base_dir=path.parent)


# --- wire helpers -----------------------------------------------------------


def parse_handshake(payload: object) -> tuple[str, ...]:
    """Validate a capabilities handshake; return the accepted image forms."""
    if not isinstance(payload, dict):
        raise ProtocolError(f"handshake must be a JSON object, got {type(payload).__name__}")
    if payload.get("protocol") != PROTOCOL_VERSION:
        raise ProtocolError(
            f"protocol: expected {PROTOCOL_VERSION}, backend sent {payload.get('protocol')!r}"
        )
    accepts = payload.get("accepts")
    if not isinstance(accepts, list) or not accepts:
        raise ProtocolError(f"accepts: expected a non-empty list, got {accepts!r}")
    bad = [a for a in accepts if a not in ("path", "png_b64")]
    if bad:
        raise ProtocolError(f"accepts: unknown image forms {bad}")
    return tuple(accepts)


def _image_payload(image: ImageLike, accepts: Sequence[str]) -> tuple[dict, Path | None]:
    """Encode an image for the wire.

    Returns (payload, tempfile) where tempfile is a path the caller must
    unlink after the request completes (set only when an in-memory image had
    to be spilled to disk for a path-only backend).
    """
    if isinstance(image, (str, Path)):
        if "path" in accepts:
            return {"path": str(image)}, None
        return {"png_b64": encode_png_b64(load_image(image))}, None
    if "png_b64" in accepts:
        return {"png_b64": encode_png_b64(image)}, None
    fd = tempfile.NamedTemporaryFile(suffix=".png", delete=False)
    fd.close()
    save_image(image, fd.name)
    return {"path": fd.name}, Path(fd.name)


def parse_response(payload: object, req_id: str) -> list[Detection]:
    """Turn a backend response into Detections, or raise ProtocolError.

    Error messages name the offending field so a misbehaving backend can be
    fixed from the traceback alone.
    """
    if not isinstance(payload, dict):
        raise ProtocolError(f"response must be a JSON object, got {type(payload).__name__}")
    got_id = payload.get("req_id")
    if got_id != req_id:
        raise ProtocolError(f"req_id: expected {req_id!r}, backend sent {got_id!r}")
    raw = payload.get("detections")
    if not isinstance(raw, list):
        raise ProtocolError(f"detections: expected a list, got {raw!r}")
    out = []
    for i, entry in enumerate(raw):
        if not isinstance(entry, dict):
            raise ProtocolError(f"detections[{i}]: expected an object, got {entry!r}")
        box = entry.get("box")
        if (
            not isinstance(box, list)
            or len(box) != 4
            or not all(isinstance(v, (int, float)) and math.isfinite(v) for v in box)
        ):
            raise ProtocolError(f"detections[{i}].box: expected 4 finite numbers, got {box!r}")
        objectness = entry.get("objectness")
        if not isinstance(objectness, (int, float)) or not (0.0 <= objectness <= 1.0):
            raise ProtocolError(
                f"detections[{i}].objectness: expected a number in [0, 1], got {objectness!r}"
            )
        probs = entry.get("class_probs")
        if probs is not None:
            if not isinstance(probs, list) or not all(
                isinstance(v, (int, float)) and math.isfinite(v) for v in probs
            ):
                raise ProtocolError(
                    f"detections[{i}].class_probs: expected a list of numbers, got {probs!r}"
                )
            probs = tuple(float(v) for v in probs)
        try:
            out.append(
                Detection(
                    box=BBox.from_list(box),
                    objectness=float(objectness),
                    class_probs=probs,
                )
            )
        except ValueError as exc:
            raise ProtocolError(f"detections[{i}].box: {exc}") from exc
    return out


# --- adapters ---------------------------------------------------------------


class DetectorAdapter:
    """Base adapter. Subclasses implement ``_detect``; the public ``detect``
    enforces the score threshold uniformly, whatever the backend returned."""

    def __init__(self, score_threshold: float = 0.5, request_parallelism: int = 1):
        self.score_threshold = float(score_threshold)
        self.request_parallelism = int(request_parallelism)

    def detect(self, image: ImageLike, record_id: str) -> list[Detection]:
        found = self._detect(image, record_id)
        return [d for d in found if d.objectness >= self.score_threshold]

    def _detect(self, image: ImageLike, record_id: str) -> list[Detection]:
        raise NotImplementedError

    def close(self) -> None:
        pass

    def __enter__(self) -> "DetectorAdapter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def _region_slice(box: BBox, height: int, width: int):
    y1 = max(0, math.floor(box.y1))
    y2 = min(height, math.ceil(box.y2))
    x1 = max(0, math.floor(box.x1))
    x2 = min(width, math.ceil(box.x2))
    if y2 <= y1 or x2 <= x1:
        return None
    return slice(y1, y2), slice(x1, x2)


def _visible_fraction(perturbed: np.ndarray, original: np.ndarray, box: BBox) -> float | None:
    region = _region_slice(box, *perturbed.shape[:2])
    if region is None:
        return None
    ys, xs = region
    ratio = perturbed[ys, xs] / np.maximum(1.0, original[ys, xs])
    return float(ratio.mean())


def mock_detect(
    spec: MockDetectorSpec,
    perturbed: np.ndarray,
    original: np.ndarray,
    record_id: str,
) -> list[Detection]:
    """Deterministic stand-in for a trained model.

    For each reference box of ``record_id``, the per-pixel intensity ratio
    perturbed/max(1, original) is averaged over the box region; the box is
    re-emitted with that fraction as objectness iff it reaches the spec's
    visibility threshold. The mock sees only pixels — it rides the same
    wire path a real detector would, never the mask itself.
    """
    record = _reference_record(spec.manifest, record_id)
    pi = intensity(perturbed) if perturbed.ndim == 3 else np.asarray(perturbed, dtype=np.float64)
    oi = intensity(original) if original.ndim == 3 else np.asarray(original, dtype=np.float64)
    if pi.shape != oi.shape:
        raise DetectorError(
            f"dimension mismatch for record {record_id!r}: "
            f"reference is {oi.shape[1]}x{oi.shape[0]}, got {pi.shape[1]}x{pi.shape[0]}"
        )
    out = []
    for gt in record.counted_boxes():
        fraction = _visible_fraction(pi, oi, gt.box)
        if fraction is None:
            continue
        if fraction >= spec.visibility_threshold:
            out.append(Detection(box=gt.box, objectness=min(1.0, fraction)))
    return out


def _reference_record(manifest: DatasetManifest, record_id: str) -> ImageRecord:
    try:
        return manifest.get(record_id)
    except KeyError:
        raise DetectorError(f"unknown record id {record_id!r}") from None


class MockDetector(DetectorAdapter):
    """In-process mock backend (see :func:`mock_detect`).

    Reference images are loaded from the spec manifest's paths and their
    intensity planes cached, since a saliency run probes the same record
    thousands of times.
    """

    def __init__(
        self,
        spec: MockDetectorSpec,
        score_threshold: float = 0.5,
        request_parallelism: int = 1,
    ):
        super().__init__(score_threshold, request_parallelism)
        self.spec = spec
        self._cache: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    def _original_intensity(self, record: ImageRecord) -> np.ndarray:
        with self._lock:
            cached = self._cache.get(record.id)
        if cached is not None:
            return cached
        plane = intensity(load_image(record.path))
        with self._lock:
            self._cache[record.id] = plane
        return plane

    def _detect(self, image: ImageLike, record_id: str) -> list[Detection]:
        record = _reference_record(self.spec.manifest, record_id)
        original = self._original_intensity(record)
        arr = load_image(image) if isinstance(image, (str, Path)) else image
        pi = intensity(arr) if arr.ndim == 3 else np.asarray(arr, dtype=np.float64)
        if pi.shape != original.shape:
            raise DetectorError(
                f"dimension mismatch for record {record_id!r}: "
                f"reference is {original.shape[1]}x{original.shape[0]}, "
                f"got {pi.shape[1]}x{pi.shape[0]}"
            )
        out = []
        for gt in record.counted_boxes():
            fraction = _visible_fraction(pi, original, gt.box)
            if fraction is None:
                continue
            if fraction >= self.spec.visibility_threshold:
                out.append(Detection(box=gt.box, objectness=min(1.0, fraction)))
        return out


class HTTPDetector(DetectorAdapter):
    """Talks to a remote backend over HTTP POST.

    Timeouts and dropped connections are retried 3x with exponential backoff
    before surfacing as RetryableDetectorError; anything malformed is a
    ProtocolError immediately.
    """

    def __init__(
        self,
        endpoint: str,
        score_threshold: float = 0.5,
        request_parallelism: int = 1,
        timeout: float = 30.0,
        session: requests.Session | None = None,
        sleep=time.sleep,
    ):
        super().__init__(score_threshold, request_parallelism)
        self._endpoint = endpoint.rstrip("/")
        self._timeout = float(timeout)
        self._session = session or requests.Session()
        self._sleep = sleep
        self.accepts = self._handshake()

    def _handshake(self) -> tuple[str, ...]:
        try:
            resp = self._session.get(f"{self._endpoint}/capabilities", timeout=self._timeout)
        except (requests.Timeout, requests.ConnectionError) as exc:
            raise RetryableDetectorError(f"capabilities handshake failed: {exc}") from exc
        if resp.status_code != 200:
            raise ProtocolError(f"capabilities handshake returned HTTP {resp.status_code}")
        try:
            payload = resp.json()
        except ValueError as exc:
            raise ProtocolError(f"capabilities handshake is not JSON: {exc}") from exc
        return parse_handshake(payload)

    def _detect(self, image: ImageLike, record_id: str) -> list[Detection]:
        req_id = uuid.uuid4().hex
        image_payload, spilled = _image_payload(image, self.accepts)
        request = {
            "req_id": req_id,
            "image": image_payload,
            "score_threshold": self.score_threshold,
        }
        try:
            last_exc: Exception | None = None
            for attempt in range(_RETRY_ATTEMPTS):
                try:
                    resp = self._session.post(
                        f"{self._endpoint}/detect", json=request, timeout=self._timeout
                    )
                    break
                except (requests.Timeout, requests.ConnectionError) as exc:
                    last_exc = exc
                    if attempt < _RETRY_ATTEMPTS - 1:
                        self._sleep(_BACKOFF_BASE * 2**attempt)
            else:
                raise RetryableDetectorError(
                    f"detect failed after {_RETRY_ATTEMPTS} attempts: {last_exc}"
                ) from last_exc
        finally:
            if spilled is not None:
                spilled.unlink(missing_ok=True)
        if resp.status_code != 200:
            raise ProtocolError(f"detect returned HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            payload = resp.json()
        except ValueError as exc:
            raise ProtocolError(f"detect response is not JSON: {exc}") from exc
        return parse_response(payload, req_id)

    def close(self) -> None:
        self._session.close()


class SubprocessDetector(DetectorAdapter):
    """Runs the backend as a child process speaking the line protocol.

    The child prints the capabilities handshake as its first stdout line,
    then answers one JSON request per line with one JSON response per line.
    Requests are serialized under a lock; responses are still verified by
    req_id, never trusted by arrival order alone.
    """

    def __init__(
        self,
        command: Sequence[str],
        score_threshold: float = 0.5,
        request_parallelism: int = 1,
    ):
        super().__init__(score_threshold, request_parallelism)
        try:
            self._proc = subprocess.Popen(
                list(command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise DetectorError(f"failed to start backend {command[0]!r}: {exc}") from exc
        self._lock = threading.Lock()
        first = self._proc.stdout.readline()
        if not first:
            raise ProtocolError(
                f"backend exited before handshake; stderr: {self._drain_stderr()!r}"
            )
        try:
            payload = json.loads(first)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"handshake is not JSON: {first!r}") from exc
        self.accepts = parse_handshake(payload)

    def _drain_stderr(self) -> str:
        try:
            self._proc.kill()
            _, err = self._proc.communicate(timeout=5)
        except Exception:
            return ""
        return (err or "")[-2000:]

    def _detect(self, image: ImageLike, record_id: str) -> list[Detection]:
        req_id = uuid.uuid4().hex
        image_payload, spilled = _image_payload(image, self.accepts)
        request = {
            "req_id": req_id,
            "image": image_payload,
            "score_threshold": self.score_threshold,
        }
        try:
            with self._lock:
                if self._proc.poll() is not None:
                    raise ProtocolError(
                        f"backend exited with code {self._proc.returncode}; "
                        f"stderr: {self._drain_stderr()!r}"
                    )
                self._proc.stdin.write(json.dumps(request) + "\n")
                self._proc.stdin.flush()
                line = self._proc.stdout.readline()
        finally:
            if spilled is not None:
                spilled.unlink(missing_ok=True)
        if not line:
            raise ProtocolError(
                f"backend closed stdout mid-request; stderr: {self._drain_stderr()!r}"
            )
        try:
            payload = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"invalid JSON from backend: {line!r}") from exc
        return parse_response(payload, req_id)

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()
                self._proc.wait(timeout=5)
            except Exception:
                self._proc.kill()
        for stream in (self._proc.stdout, self._proc.stderr):
            if stream is not None:
                stream.close()


def create_adapter(config: DetectorConfig) -> DetectorAdapter:
    """Build the adapter a config describes. Mock configs load their
    reference manifest here, so callers hold a ready-to-use adapter."""
    if config.kind == "mock":
        manifest = load_manifest(config.manifest)
        spec = MockDetectorSpec(
            manifest=manifest, visibility_threshold=config.visibility_threshold
        )
        return MockDetector(
            spec,
            score_threshold=config.score_threshold,
            request_parallelism=config.request_parallelism,
        )
    if config.kind == "http":
        return HTTPDetector(
            config.endpoint,
            score_threshold=config.score_threshold,
            request_parallelism=config.request_parallelism,
            timeout=config.timeout,
        )
    return SubprocessDetector(
        config.command,
        score_threshold=config.score_threshold,
        request_parallelism=config.request_parallelism,
    )
