"""Shared value types and pure pixel/geometry helpers.

Everything here is an immutable value object or a pure function; instances
are safe to share across threads without locking.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple


class ContractViolation(ValueError):
    """An argument or field broke a stated contract."""


MAX_DIMENSION = 4096
MAX_ANNOTATIONS = 256
MAX_DESCRIPTION_BYTES = 1024

COORD_SCALE = 65535
CONFIDENCE_SCALE = 10000


class PixelFormat(enum.IntEnum):
    GRAY8 = 0
    RGB8 = 1

    @property
    def bytes_per_pixel(self) -> int:
        return 1 if self is PixelFormat.GRAY8 else 3


class AnnotationKind(enum.IntEnum):
    BOX = 0
    POINT = 1
    POLYLINE = 2
    LABEL = 3


class Priority(enum.IntEnum):
    ROUTINE = 0
    INTERRUPT = 1


class HBand(enum.Enum):
    LEFT = "left"
    CENTER = "center"
    RIGHT = "right"


class VBand(enum.Enum):
    TOP = "top"
    MIDDLE = "middle"
    BOTTOM = "bottom"


@dataclass(frozen=True)
class EgocentricDirection:
    hband: HBand
    vband: VBand


def quantize_coord(v: float) -> float:
    """Snap a [0,1] coordinate to the 1/65535 wire grid."""
    if not 0.0 <= v <= 1.0:
        raise ContractViolation(f"coordinate {v!r} outside [0,1]")
    return round(v * COORD_SCALE) / COORD_SCALE


def quantize_confidence(v: float) -> float:
    """Snap a [0,1] confidence to the 1/10000 wire grid."""
    if not 0.0 <= v <= 1.0:
        raise ContractViolation(f"confidence {v!r} outside [0,1]")
    return round(v * CONFIDENCE_SCALE) / CONFIDENCE_SCALE


_COORD_COUNT_RULE = {
    AnnotationKind.BOX: (2, 2),
    AnnotationKind.POINT: (1, 1),
    AnnotationKind.POLYLINE: (2, None),
    AnnotationKind.LABEL: (1, 1),
}


@dataclass(frozen=True)
class Annotation:
    """One overlay element with normalized, wire-quantized coordinates."""

    kind: AnnotationKind
    label: str
    confidence: float
    coords: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        lo, hi = _COORD_COUNT_RULE[self.kind]
        n = len(self.coords)
        if n < lo or (hi is not None and n > hi):
            raise ContractViolation(
                f"{self.kind.name} requires {lo}{'+' if hi is None else ''} coords, got {n}"
            )
        object.__setattr__(self, "confidence", quantize_confidence(self.confidence))
        q = tuple((quantize_coord(x), quantize_coord(y)) for x, y in self.coords)
        object.__setattr__(self, "coords", q)
        if self.kind is AnnotationKind.BOX:
            (x0, y0), (x1, y1) = self.coords
            if x0 > x1 or y0 > y1:
                raise ContractViolation("BOX min-corner must be <= max-corner")


@dataclass(frozen=True)
class Description:
    """Text destined for speech output."""

    text: str
    priority: Priority
    source: str
    frame_seq: int

    def __post_init__(self):
        if not self.text:
            raise ContractViolation("description text must be non-empty")
        if len(self.text.encode("utf-8")) > MAX_DESCRIPTION_BYTES:
            raise ContractViolation("description text exceeds 1024 bytes")


@dataclass(frozen=True)
class TimingBreakdown:
    recv_to_dispatch_us: int
    process_us: int

    def __post_init__(self):
        cap = 0xFFFFFFFF
        object.__setattr__(self, "recv_to_dispatch_us", min(max(self.recv_to_dispatch_us, 0), cap))
        object.__setattr__(self, "process_us", min(max(self.process_us, 0), cap))


@dataclass(frozen=True)
class ProcessResult:
    frame_seq: int
    processor: str
    annotations: Tuple[Annotation, ...]
    description: Optional[Description]
    timing: TimingBreakdown

    def __post_init__(self):
        if len(self.annotations) > MAX_ANNOTATIONS:
            raise ContractViolation("more than 256 annotations")
        if self.description is not None and self.description.source != self.processor:
            raise ContractViolation("description source must match processor")


@dataclass(frozen=True)
class Frame:
    """One captured image. Pixels are row-major with no padding."""

    seq: int
    capture_ts_us: int
    width: int
    height: int
    format: PixelFormat
    pixels: bytes

    def __post_init__(self):
        problem = frame_violation(self.width, self.height, self.format, len(self.pixels))
        if problem is not None:
            raise ContractViolation(f"invalid frame: {problem}")


def frame_violation(width: int, height: int, format: PixelFormat, payload_len: int) -> Optional[str]:
    """Return None if the frame header is valid, else the failed check name."""
    if not (1 <= width <= MAX_DIMENSION and 1 <= height <= MAX_DIMENSION):
        return "dims"
    if format not in (PixelFormat.GRAY8, PixelFormat.RGB8):
        return "format"
    if payload_len != width * height * PixelFormat(format).bytes_per_pixel:
        return "length"
    return None


def validate_frame(width: int, height: int, format: PixelFormat, payload_len: int) -> bool:
    return frame_violation(width, height, format, payload_len) is None


def luma(r: int, g: int, b: int) -> int:
    """Integer Rec.601-style grayscale reduction; exact and platform-stable."""
    return (77 * r + 150 * g + 29 * b + 128) >> 8


def egocentric_direction(cx: float, cy: float) -> EgocentricDirection:
    """Map a normalized center point onto a 3x3 thirds grid.

    Boundary values (exactly 1/3 or 2/3) fall in the center band.
    """
    if not (0.0 <= cx <= 1.0 and 0.0 <= cy <= 1.0):
        raise ContractViolation(f"center ({cx}, {cy}) outside the unit square")
    if cx < 1 / 3:
        hband = HBand.LEFT
    elif cx > 2 / 3:
        hband = HBand.RIGHT
    else:
        hband = HBand.CENTER
    if cy < 1 / 3:
        vband = VBand.TOP
    elif cy > 2 / 3:
        vband = VBand.BOTTOM
    else:
        vband = VBand.MIDDLE
    return EgocentricDirection(hband, vband)


def annotation_center(a: Annotation) -> Tuple[float, float]:
    """Center point of a BOX or POINT annotation."""
    if a.kind is AnnotationKind.BOX:
        (x0, y0), (x1, y1) = a.coords
        return ((x0 + x1) / 2, (y0 + y1) / 2)
    if a.kind is AnnotationKind.POINT:
        return a.coords[0]
    raise ContractViolation(f"no center defined for {a.kind.name}")
