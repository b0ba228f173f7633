"""The five built-in processors: deterministic desk-scale stand-ins that
exercise the full processor contract (boxes, text, descriptions, remote
calls) without real model weights.
"""
from __future__ import annotations

import base64
import math
import os
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
import requests
from scipy import ndimage

from . import glyphs
from .framework import (
    BadOptions,
    Processor,
    ProcessorDescriptor,
    ProcessorOptions,
    ProcessorRegistry,
    ResultBody,
)
from .model import (
    Annotation,
    AnnotationKind,
    ContractViolation,
    Frame,
    PixelFormat,
    Priority,
    egocentric_direction,
    luma,
)

# Vectorized integer luma, same arithmetic as model.luma.
_LUMA_WEIGHTS = np.array([77, 150, 29], dtype=np.uint32)


def frame_luma(frame: Frame) -> np.ndarray:
    """Frame pixels as a 2-D uint8 grayscale array (integer luma for RGB)."""
    if frame.format is PixelFormat.GRAY8:
        return np.frombuffer(frame.pixels, dtype=np.uint8).reshape(
            frame.height, frame.width)
    rgb = np.frombuffer(frame.pixels, dtype=np.uint8).reshape(
        frame.height, frame.width, 3).astype(np.uint32)
    return ((rgb @ _LUMA_WEIGHTS + 128) >> 8).astype(np.uint8)


def mad(a: np.ndarray, b: np.ndarray) -> float:
    """Mean absolute pixel difference, in double precision."""
    if a.shape != b.shape:
        raise ContractViolation(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.mean(np.abs(a.astype(np.float64) - b.astype(np.float64))))


@dataclass(frozen=True)
class Blob:
    bbox: Tuple[int, int, int, int]  # min_x, min_y, max_x, max_y (inclusive)
    area: int
    id: int


# 4-connectivity structuring element
_CROSS = ndimage.generate_binary_structure(2, 1)


def blobs(frame: Frame, threshold: int = 128) -> List[Blob]:
    """Connected bright components, largest first, at most 10.

    Components smaller than 0.1% of the frame are dropped. Ties on area
    break by the component's (min-y, min-x).
    """
    gray = frame_luma(frame)
    fg = gray >= threshold
    labeled, count = ndimage.label(fg, structure=_CROSS)
    if count == 0:
        return []
    min_area = math.ceil(0.001 * frame.width * frame.height)
    slices = ndimage.find_objects(labeled)
    areas = ndimage.sum_labels(fg, labeled, index=np.arange(1, count + 1))
    found = []
    for i, sl in enumerate(slices):
        area = int(areas[i])
        if area < min_area:
            continue
        ys, xs = sl
        found.append((area, ys.start, xs.start, xs.stop - 1, ys.stop - 1))
    found.sort(key=lambda t: (-t[0], t[1], t[2]))
    return [
        Blob(bbox=(min_x, min_y, max_x, max_y), area=area, id=idx)
        for idx, (area, min_y, min_x, max_x, max_y) in enumerate(found[:10])
    ]


def _norm_box(bbox: Tuple[int, int, int, int], width: int, height: int,
              label: str, confidence: float) -> Annotation:
    min_x, min_y, max_x, max_y = bbox
    return Annotation(
        kind=AnnotationKind.BOX,
        label=label,
        confidence=confidence,
        coords=((min_x / width, min_y / height),
                ((max_x + 1) / width, (max_y + 1) / height)),
    )


def _parse_threshold(opts: ProcessorOptions, default: float) -> float:
    raw = opts.get("threshold")
    if raw is None:
        return default
    try:
        value = float(raw)
    except ValueError:
        raise BadOptions(f"threshold must be numeric, got {raw!r}") from None
    if not math.isfinite(value) or value < 0:
        raise BadOptions(f"threshold out of range: {raw!r}")
    return value


class SceneChangeProcessor(Processor):
    """Emits "scene changed" when the mean absolute luma difference against
    the previous frame reaches the threshold (default 12.0 of 255)."""

    def __init__(self, options: ProcessorOptions):
        super().__init__(options)
        options.warn_unrecognized({"threshold"})
        self.threshold = _parse_threshold(options, 12.0)
        self.prev_luma: Optional[np.ndarray] = None

    def process(self, frame: Frame) -> ResultBody:
        gray = frame_luma(frame)
        prev = self.prev_luma
        self.prev_luma = gray
        if prev is None or prev.shape != gray.shape:
            return ResultBody()
        if mad(prev, gray) >= self.threshold:
            return ResultBody(
                annotations=(Annotation(AnnotationKind.LABEL, "scene changed",
                                        1.0, ((0.5, 0.5),)),),
                description=("scene changed", Priority.ROUTINE),
            )
        return ResultBody()


class BlobDetectProcessor(Processor):
    """BOX per bright blob; speaks the object count only when it changes."""

    def __init__(self, options: ProcessorOptions):
        super().__init__(options)
        options.warn_unrecognized({"threshold"})
        self.threshold = int(_parse_threshold(options, 128))
        self.prev_count: Optional[int] = None

    def process(self, frame: Frame) -> ResultBody:
        found = blobs(frame, self.threshold)
        annotations = []
        for blob in found:
            min_x, min_y, max_x, max_y = blob.bbox
            bbox_area = (max_x - min_x + 1) * (max_y - min_y + 1)
            annotations.append(_norm_box(blob.bbox, frame.width, frame.height,
                                         "object", blob.area / bbox_area))
        description = None
        if len(found) != self.prev_count:
            description = (f"{len(found)} objects visible", Priority.ROUTINE)
        self.prev_count = len(found)
        return ResultBody(annotations=tuple(annotations), description=description)


class GlyphOcrProcessor(Processor):
    """Reads 5x7 glyph text; speaks the joined text only when it changes."""

    def __init__(self, options: ProcessorOptions):
        super().__init__(options)
        options.warn_unrecognized(set())
        self.prev_text: Optional[str] = None

    def process(self, frame: Frame) -> ResultBody:
        tokens = glyphs.recognize(frame_luma(frame))
        annotations = tuple(
            _norm_box(bbox, frame.width, frame.height, text, 1.0)
            for text, bbox in tokens
        )
        joined = " ".join(text for text, _ in tokens)
        description = None
        if joined and joined != self.prev_text:
            description = (joined, Priority.ROUTINE)
        self.prev_text = joined
        return ResultBody(annotations=annotations, description=description)


class FindItemProcessor(Processor):
    """Silent OCR search; an exact token match interrupts with the item's
    egocentric direction."""

    def __init__(self, options: ProcessorOptions):
        super().__init__(options)
        options.warn_unrecognized({"term"})
        term = options.get("term")
        if not term:
            raise BadOptions("find_item requires a non-empty term")
        self.term = term.upper()

    def process(self, frame: Frame) -> ResultBody:
        for text, bbox in glyphs.recognize(frame_luma(frame)):
            if text == self.term:
                box = _norm_box(bbox, frame.width, frame.height, self.term, 1.0)
                (x0, y0), (x1, y1) = box.coords
                direction = egocentric_direction((x0 + x1) / 2, (y0 + y1) / 2)
                text = f"{self.term} at {direction.hband.value}, {direction.vband.value}"
                return ResultBody(annotations=(box,),
                                  description=(text, Priority.INTERRUPT))
        return ResultBody()


@dataclass
class VlmConfig:
    endpoint: str
    model: str = "mock-model"
    prompt: str = "Describe this scene for a blind user in one sentence."
    timeout_ms: int = 10000
    token: Optional[str] = None

    def __post_init__(self):
        if self.timeout_ms < 100:
            raise ContractViolation("vlm timeout_ms must be >= 100")


def frame_to_ppm(frame: Frame) -> bytes:
    """Serialize as binary PPM (P6, maxval 255); GRAY8 expands to RGB."""
    header = f"P6\n{frame.width} {frame.height}\n255\n".encode("ascii")
    if frame.format is PixelFormat.RGB8:
        return header + frame.pixels
    gray = np.frombuffer(frame.pixels, dtype=np.uint8)
    return header + np.repeat(gray, 3).tobytes()


class RemoteVlmProcessor(Processor):
    """Sends the frame to a chat-completions endpoint and relays the reply.

    A timeout or non-200 degrades to an audible INTERRUPT notice; the
    instance stays usable for later frames.
    """

    UNAVAILABLE = "description service unavailable"

    def __init__(self, options: ProcessorOptions, config: VlmConfig):
        super().__init__(options)
        options.warn_unrecognized({"prompt", "model"})
        self.config = config
        self.prompt = options.get("prompt") or config.prompt
        self.model = options.get("model") or config.model
        self.error_count = 0

    def build_request(self, frame: Frame) -> dict:
        b64 = base64.b64encode(frame_to_ppm(frame)).decode("ascii")
        return {
            "model": self.model,
            "messages": [{
                "role": "user",
                "content": [
                    {"type": "text", "text": self.prompt},
                    {"type": "image_url", "image_url": {
                        "url": f"data:image/x-portable-pixmap;base64,{b64}"}},
                ],
            }],
        }

    def process(self, frame: Frame) -> ResultBody:
        headers = {}
        if self.config.token:
            headers["Authorization"] = f"Bearer {self.config.token}"
        try:
            resp = requests.post(
                f"{self.config.endpoint}/v1/chat/completions",
                json=self.build_request(frame),
                headers=headers,
                timeout=self.config.timeout_ms / 1000,
            )
            if resp.status_code != 200:
                raise RuntimeError(f"status {resp.status_code}")
            content = resp.json()["choices"][0]["message"]["content"]
        except Exception:
            self.error_count += 1
            return ResultBody(description=(self.UNAVAILABLE, Priority.INTERRUPT))
        text = content.encode("utf-8")[:1024].decode("utf-8", errors="ignore")
        return ResultBody(description=(text, Priority.ROUTINE))


def build_registry(vlm_config: Optional[VlmConfig] = None) -> ProcessorRegistry:
    """Register the five built-ins in their canonical order."""
    if vlm_config is None:
        endpoint = os.environ.get("RELAY_VLM_ENDPOINT", "http://127.0.0.1:7010")
        vlm_config = VlmConfig(
            endpoint=endpoint,
            model=os.environ.get("RELAY_VLM_MODEL", "mock-model"),
            timeout_ms=int(os.environ.get("RELAY_VLM_TIMEOUT_MS", "10000")),
            token=os.environ.get("RELAY_VLM_TOKEN"),
        )
    registry = ProcessorRegistry()
    registry.register(ProcessorDescriptor("scene_change", "Scene Change"),
                      SceneChangeProcessor)
    registry.register(ProcessorDescriptor("blob_detect", "Object Detection"),
                      BlobDetectProcessor)
    registry.register(ProcessorDescriptor("glyph_ocr", "Text Recognition"),
                      GlyphOcrProcessor)
    registry.register(ProcessorDescriptor("find_item", "Find Item"),
                      FindItemProcessor)
    registry.register(ProcessorDescriptor("remote_vlm", "Live Description", remote=True),
                      lambda opts: RemoteVlmProcessor(opts, vlm_config))
    return registry
