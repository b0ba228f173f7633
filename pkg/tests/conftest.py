import random
import string

import numpy as np
import pytest

from framerelay import wire
from framerelay.model import Annotation, AnnotationKind, Frame, PixelFormat


def gray_frame(pixels: np.ndarray, seq: int = 1, ts: int = 0) -> Frame:
    h, w = pixels.shape
    return Frame(seq=seq, capture_ts_us=ts, width=w, height=h,
                 format=PixelFormat.GRAY8, pixels=pixels.astype(np.uint8).tobytes())


def solid_frame(width: int, height: int, value: int = 0, seq: int = 1) -> Frame:
    return gray_frame(np.full((height, width), value, dtype=np.uint8), seq=seq)


def random_string(rng: random.Random, max_len: int = 32) -> str:
    n = rng.randint(0, max_len)
    return "".join(rng.choice(string.ascii_letters + string.digits + " _-")
                   for _ in range(n))


def random_annotation(rng: random.Random) -> Annotation:
    kind = rng.choice(list(AnnotationKind))
    if kind == AnnotationKind.BOX:
        x0, x1 = sorted(rng.random() for _ in range(2))
        y0, y1 = sorted(rng.random() for _ in range(2))
        coords = ((x0, y0), (x1, y1))
    elif kind == AnnotationKind.POLYLINE:
        coords = tuple((rng.random(), rng.random())
                       for _ in range(rng.randint(2, 6)))
    else:
        coords = ((rng.random(), rng.random()),)
    return Annotation(kind=kind, label=random_string(rng, 12),
                      confidence=rng.random(), coords=coords)


def random_message(rng: random.Random) -> wire.WireMessage:
    """One random valid message of any type, for round-trip checks."""
    u32 = lambda: rng.randint(0, 0xFFFFFFFF)
    u64 = lambda: rng.randint(0, 0xFFFFFFFFFFFFFFFF)
    choice = rng.randrange(17)
    if choice == 0:
        return wire.Hello(version=rng.randint(0, 255), role=rng.randint(0, 1),
                          name=random_string(rng))
    if choice == 1:
        return wire.HelloAck(session_id=u32(), server_version=rng.randint(0, 255))
    if choice == 2:
        return wire.ListProcessors()
    if choice == 3:
        return wire.ProcessorList(tuple(
            wire.ProcessorEntry(random_string(rng, 8), random_string(rng, 16),
                                rng.randint(0, 255))
            for _ in range(rng.randint(0, 8))))
    if choice == 4:
        return wire.SetProcessor(target_session=u32(), id=random_string(rng, 16),
                                 options=random_string(rng))
    if choice == 5:
        return wire.SetProcessorAck(target_session=u32(), id=random_string(rng, 16),
                                    status=rng.randint(0, 4))
    if choice == 6:
        w, h = rng.randint(1, 16), rng.randint(1, 16)
        fmt = rng.choice([0, 1])
        payload = rng.randbytes(w * h * (1 if fmt == 0 else 3))
        return wire.FrameMsg(seq=u32(), capture_ts_us=u64(), width=w, height=h,
                             format=fmt, payload=payload)
    if choice == 7:
        desc = None
        if rng.random() < 0.5:
            desc = wire.ResultDescription(priority=rng.randint(0, 1),
                                          text=random_string(rng, 64))
        return wire.ResultMsg(
            frame_seq=u32(), processor_id=random_string(rng, 16),
            recv_to_dispatch_us=u32(), process_us=u32(),
            annotations=tuple(random_annotation(rng)
                              for _ in range(rng.randint(0, 5))),
            description=desc)
    if choice == 8:
        return wire.ErrorMsg(code=rng.randint(0, 255), message=random_string(rng))
    if choice == 9:
        return wire.Ping(token=rng.randbytes(8))
    if choice == 10:
        return wire.Pong(token=rng.randbytes(8))
    if choice == 11:
        return wire.StatsRequest(target_session=u32())
    if choice == 12:
        return wire.StatsMsg(session_id=u32(), frames_received=u64(),
                             frames_processed=u64(), frames_dropped=u64(),
                             descriptions_suppressed=u64())
    if choice == 13:
        return wire.SessionListRequest()
    if choice == 14:
        return wire.SessionList(tuple(
            wire.SessionEntry(u32(), random_string(rng, 12), random_string(rng, 12))
            for _ in range(rng.randint(0, 6))))
    if choice == 15:
        return wire.Subscribe(target_session=u32())
    return wire.SubscribeAck(target_session=u32(), status=rng.choice([0, 3]))


@pytest.fixture
def rng():
    return random.Random(0xC0FFEE)
