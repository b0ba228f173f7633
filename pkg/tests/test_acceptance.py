"""End-to-end acceptance suite. One test per criterion; each prints a
single PASS line on success (pytest fails it otherwise).
"""
import json
import math
import random
import time

import numpy as np
import pytest

from framerelay import glyphs, wire
from framerelay.framework import Processor, ProcessorDescriptor, ResultBody
from framerelay.mock_inference import MockInferenceServer, fnv1a32
from framerelay.model import PixelFormat, Priority
from framerelay.processors import VlmConfig, blobs, build_registry
from framerelay.server import DedupPolicy, RelayServer, ServerConfig
from conftest import gray_frame, random_message
from netutil import TcpPeer
from test_processors import flood_fill_blobs
from test_server import frame_msg, text_frame


def ok(name):
    print(f"\nACCEPTANCE PASS: {name}")


class SlowProcessor(Processor):
    """Fixed 50 ms per frame."""

    def process(self, frame):
        time.sleep(0.05)
        return ResultBody()


class FastAProcessor(Processor):
    def process(self, frame):
        return ResultBody()


class FastBProcessor(Processor):
    def process(self, frame):
        return ResultBody()


class SameTextProcessor(Processor):
    def process(self, frame):
        return ResultBody(description=("same text", Priority.ROUTINE))


class SameInterruptProcessor(Processor):
    def process(self, frame):
        return ResultBody(description=("alert", Priority.INTERRUPT))


def start_server(default="scene_change", vlm_endpoint="http://127.0.0.1:1",
                 vlm_timeout_ms=10000, dedup_ms=5000):
    registry = build_registry(VlmConfig(endpoint=vlm_endpoint,
                                        timeout_ms=vlm_timeout_ms))
    registry.register(ProcessorDescriptor("slow50", "Slow 50ms"), SlowProcessor)
    registry.register(ProcessorDescriptor("fast_a", "Fast A"), FastAProcessor)
    registry.register(ProcessorDescriptor("fast_b", "Fast B"), FastBProcessor)
    registry.register(ProcessorDescriptor("same_text", "Same Text"),
                      SameTextProcessor)
    registry.register(ProcessorDescriptor("same_interrupt", "Same Interrupt"),
                      SameInterruptProcessor)
    server = RelayServer(
        ServerConfig(tcp_listen="127.0.0.1:0", ws_listen="127.0.0.1:0",
                     default_processor=default, dedup_ms=dedup_ms),
        registry=registry)
    server.start()
    return server


def test_codec_round_trip_and_fuzz():
    start = time.monotonic()
    rng = random.Random(20260823)
    for _ in range(10_000):
        m = random_message(rng)
        body = wire.encode_message(m)
        out = wire.decode_message(wire.LENGTH_PREFIX.pack(len(body)) + body)
        assert isinstance(out, wire.Complete)
        assert out.message == m
        assert wire.encode_message(out.message) == body

    for i in range(1_000_000):
        buf = rng.randbytes(rng.randint(0, 40))
        out = wire.decode_message(buf)
        assert isinstance(out, (wire.Complete, wire.NeedMore, wire.Malformed))
    elapsed = time.monotonic() - start
    assert elapsed < 60, f"codec criterion took {elapsed:.1f}s"
    ok(f"codec round trip (10k messages) + fuzz (1M buffers) in {elapsed:.1f}s")


def test_prefix_safety():
    rng = random.Random(31337)
    violations = 0
    for _ in range(1_000):
        e = wire.encode_framed(random_message(rng))
        for k in range(len(e)):
            out = wire.decode_message(e[:k])
            if not (isinstance(out, wire.NeedMore)
                    and out.minimum_additional_bytes >= 1):
                violations += 1
    assert violations == 0
    ok("prefix safety: 1000 encodings, all strict prefixes NeedMore")


def test_backpressure_conservation_and_freshness():
    server = start_server(default="slow50")
    try:
        peer = TcpPeer(server.tcp_port)
        peer.hello()
        payload = bytes(64)
        interval = 1 / 100
        next_send = time.monotonic()
        deadline = next_send + 10.0
        sent = 0
        while time.monotonic() < deadline:
            now = time.monotonic()
            if now < next_send:
                time.sleep(next_send - now)
            sent += 1
            peer.send(wire.FrameMsg(seq=sent, capture_ts_us=sent, width=8,
                                    height=8, format=0, payload=payload))
            next_send += interval
        # quiesce: wait for the pending mailbox frame to drain
        last_result_seq = 0
        stats = None
        for _ in range(100):
            peer.send(wire.StatsRequest(target_session=0))
            got = peer.drain(0.3)
            for m in got:
                if isinstance(m, wire.ResultMsg):
                    last_result_seq = m.frame_seq
                if isinstance(m, wire.StatsMsg):
                    stats = m
            if (stats and stats.frames_received == sent
                    and stats.frames_processed + stats.frames_dropped == sent):
                break
        assert stats is not None
        assert stats.frames_received == sent
        assert stats.frames_processed + stats.frames_dropped == sent
        assert stats.frames_dropped > 0
        assert last_result_seq == sent, "newest frame was starved"
        peer.close()
        ok(f"backpressure: received={sent} == processed={stats.frames_processed}"
           f" + dropped={stats.frames_dropped}; final seq processed")
    finally:
        server.stop()


def test_switch_boundary():
    server = start_server(default="fast_a")
    try:
        peer = TcpPeer(server.tcp_port)
        peer.hello()
        violations = 0
        seq = 0
        current, other = "fast_a", "fast_b"
        for rep in range(100):
            seq += 1
            peer.send(frame_msg(seq))
            peer.recv_until(lambda m: isinstance(m, wire.ResultMsg))
            peer.send(wire.SetProcessor(target_session=0, id=other))
            # everything until the ACK must still name the old processor
            while True:
                msg = peer.recv()
                if isinstance(msg, wire.SetProcessorAck):
                    assert msg.status == wire.AckStatus.OK
                    break
                if isinstance(msg, wire.ResultMsg) and msg.processor_id == other:
                    violations += 1
            seq += 1
            peer.send(frame_msg(seq))
            result = peer.recv_until(
                lambda m: isinstance(m, wire.ResultMsg) and m.frame_seq == seq)
            if result.processor_id != other:
                violations += 1
            current, other = other, current
        assert violations == 0
        peer.close()
        ok("switch boundary: 100 repetitions, zero violations")
    finally:
        server.stop()


def test_ocr_round_trip():
    start = time.monotonic()
    rng = random.Random(555)
    charset = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789"
    checked = 0
    while checked < 1_000:
        n = rng.randint(1, 16)
        chars = [rng.choice(charset) for _ in range(n)]
        for i in range(1, n - 1):
            # single separators only: rendered spacing beyond one cell is
            # not recoverable from pixels
            if rng.random() < 0.15 and chars[i - 1] != " ":
                chars[i] = " "
        text = "".join(chars).strip()
        if not text:
            continue
        w = glyphs.text_width_px(text)
        canvas = np.zeros((32, w + 24), dtype=np.uint8)
        x = rng.randint(0, 23)
        y = rng.randint(0, 24)
        glyphs.render_text(text, x, y, canvas)
        tokens = glyphs.recognize(canvas)
        assert " ".join(t for t, _ in tokens) == " ".join(text.split()), text
        checked += 1
    elapsed = time.monotonic() - start
    assert elapsed < 30, f"OCR criterion took {elapsed:.1f}s"
    ok(f"OCR round trip: 1000 random strings recovered exactly in {elapsed:.1f}s")


def test_blob_oracle_equivalence():
    rng = np.random.default_rng(909)
    for _ in range(1_000):
        h = int(rng.integers(1, 65))
        w = int(rng.integers(1, 65))
        binary = rng.random((h, w)) < rng.uniform(0.05, 0.95)
        canvas = np.where(binary, 255, 0).astype(np.uint8)
        found = blobs(gray_frame(canvas))
        expected = flood_fill_blobs(binary, math.ceil(0.001 * w * h))
        assert [(b.bbox, b.area) for b in found] == expected
    ok("blob oracle equivalence: 1000 random frames, zero mismatches")


def test_find_item_egocentric_mapping():
    from framerelay.framework import ProcessorOptions
    from framerelay.processors import FindItemProcessor

    size = 300
    term = "KEYS"
    w = glyphs.text_width_px(term)
    h = glyphs.GLYPH_H
    centers = {0: size / 6, 1: size / 2, 2: 5 * size / 6}
    expected_h = {0: "left", 1: "center", 2: "right"}
    expected_v = {0: "top", 1: "middle", 2: "bottom"}
    for i in range(3):
        for j in range(3):
            x = round(centers[i] - w / 2)
            y = round(centers[j] - h / 2)
            canvas = np.zeros((size, size), dtype=np.uint8)
            glyphs.render_text(term, x, y, canvas)
            p = FindItemProcessor(ProcessorOptions.parse(f"term={term}"))
            r = p.process(gray_frame(canvas))
            assert r.description is not None, (i, j)
            text, priority = r.description
            assert priority == Priority.INTERRUPT
            assert text == f"{term} at {expected_h[i]}, {expected_v[j]}", (i, j)
    ok("find_item egocentric mapping: all 9 band positions, INTERRUPT priority")


def test_remote_vlm_loop():
    mock = MockInferenceServer(port=0, latency_ms=0)
    mock.start()
    server = start_server(default="remote_vlm", vlm_endpoint=mock.endpoint,
                          dedup_ms=0)
    try:
        peer = TcpPeer(server.tcp_port)
        peer.hello()
        descriptions = []
        for i in range(5):
            peer.send(frame_msg(i + 1, value=i * 40))
            result = peer.recv_until(lambda m: isinstance(m, wire.ResultMsg))
            assert result.description is not None
            descriptions.append(result.description.text)
        assert len(mock.request_bodies) == 5
        for text, body in zip(descriptions, mock.request_bodies):
            n = fnv1a32(body) % 1000
            assert text == f"mock description {n}"
        peer.close()
    finally:
        server.stop()
        mock.stop()

    # timeout path: mock latency 12 s vs processor timeout 10 s
    slow_mock = MockInferenceServer(port=0, latency_ms=12000)
    slow_mock.start()
    server = start_server(default="remote_vlm", vlm_endpoint=slow_mock.endpoint,
                          vlm_timeout_ms=10000)
    try:
        peer = TcpPeer(server.tcp_port)
        peer.hello()
        start = time.monotonic()
        peer.send(frame_msg(1))
        result = peer.recv_until(lambda m: isinstance(m, wire.ResultMsg),
                                 timeout=12)
        elapsed = time.monotonic() - start
        assert result.description.text == "description service unavailable"
        assert elapsed < 11.0, f"timeout result took {elapsed:.1f}s"
        peer.close()
        ok("remote VLM loop: FNV-1a oracle matched 5/5; timeout path "
           f"degraded audibly in {elapsed:.1f}s")
    finally:
        server.stop()
        slow_mock.stop()


def test_dedup_policy():
    # scripted timeline: identical ROUTINE text at exactly 1 s spacing
    policy = DedupPolicy(window_ms=5000)
    passes = [t for t in range(0, 20_000, 1000)
              if policy.filter("same text", Priority.ROUTINE, t)]
    assert passes == [0, 5000, 10000, 15000]
    for a, b in zip(passes, passes[1:]):
        assert b - a >= 5000  # exactly one pass per 5 s window
    interrupt_policy = DedupPolicy(window_ms=5000)
    assert all(interrupt_policy.filter("alert", Priority.INTERRUPT, t)
               for t in range(0, 10_000, 1000))

    # counter fidelity end-to-end
    server = start_server(default="same_text", dedup_ms=60000)
    try:
        peer = TcpPeer(server.tcp_port)
        peer.hello()
        observed_suppressions = 0
        for i in range(6):
            peer.send(frame_msg(i + 1, value=i))
            result = peer.recv_until(lambda m: isinstance(m, wire.ResultMsg))
            if result.description is None:
                observed_suppressions += 1
        peer.send(wire.StatsRequest(target_session=0))
        stats = peer.recv_until(lambda m: isinstance(m, wire.StatsMsg))
        assert observed_suppressions == 5
        assert stats.descriptions_suppressed == observed_suppressions
        peer.close()
        ok("dedup policy: windowed suppression exact, INTERRUPT bypass, "
           "counter matches observed suppressions")
    finally:
        server.stop()


def _measure_latencies(port, count, fps, start_seq=0):
    peer = TcpPeer(port)
    peer.hello()
    payload = bytes(64)
    latencies = []
    interval = 1 / fps
    for i in range(count):
        seq = start_seq + i + 1
        sent_at = time.monotonic()
        peer.send(wire.FrameMsg(seq=seq, capture_ts_us=i, width=8, height=8,
                                format=0, payload=payload))
        result = peer.recv_until(
            lambda m: isinstance(m, wire.ResultMsg) and m.frame_seq == seq)
        latencies.append(time.monotonic() - sent_at)
        remaining = interval - (time.monotonic() - sent_at)
        if remaining > 0:
            time.sleep(remaining)
    peer.close()
    return latencies


def test_session_isolation():
    server = start_server(default="fast_a")
    try:
        n, fps = 200, 60
        baseline = _measure_latencies(server.tcp_port, n, fps)

        # flood from a second session at 200 fps
        import threading
        stop = threading.Event()

        def flood():
            flooder = TcpPeer(server.tcp_port)
            flooder.hello(name="flooder")
            flooder.send(wire.SetProcessor(target_session=0, id="slow50"))
            payload = bytes(64)
            seq = 0
            while not stop.is_set():
                seq += 1
                flooder.send(wire.FrameMsg(seq=seq, capture_ts_us=seq, width=8,
                                           height=8, format=0, payload=payload))
                flooder.drain(0.0)
                time.sleep(1 / 200)
            flooder.close()

        t = threading.Thread(target=flood, daemon=True)
        t.start()
        time.sleep(0.3)
        try:
            flooded = _measure_latencies(server.tcp_port, n, fps)
        finally:
            stop.set()
            t.join(timeout=5)

        p95 = lambda xs: sorted(xs)[int(len(xs) * 0.95)]
        delta_ms = abs(p95(flooded) - p95(baseline)) * 1000
        assert delta_ms < 50, f"p95 latency shifted {delta_ms:.1f} ms under flood"
        ok(f"session isolation: p95 shift {delta_ms:.1f} ms < 50 ms "
           f"(baseline {p95(baseline)*1000:.1f} ms over {n} results)")
    finally:
        server.stop()
