import random

import pytest

from framerelay import wire
from conftest import random_message


class TestStatedLayouts:
    def test_ping_bytes(self):
        body = wire.encode_message(wire.Ping(token=bytes([1, 2, 3, 4, 5, 6, 7, 8])))
        assert body == bytes([0x0A, 1, 2, 3, 4, 5, 6, 7, 8])
        framed = wire.encode_framed(wire.Ping(token=bytes([1, 2, 3, 4, 5, 6, 7, 8])))
        assert framed[:4] == bytes([0x09, 0, 0, 0])

    def test_hello_bytes(self):
        body = wire.encode_message(wire.Hello(version=1, role=0, name=""))
        assert body == bytes([0x01, 0x01, 0x00, 0x00, 0x00])

    def test_set_processor_round_trip(self):
        m = wire.SetProcessor(target_session=0, id="find_item", options="term=KEYS")
        out = wire.decode_message(wire.encode_framed(m))
        assert isinstance(out, wire.Complete)
        assert out.message == m


class TestDecodeOutcomes:
    def test_incomplete_prefix(self):
        out = wire.decode_message(bytes([0x09, 0x00, 0x00]))
        assert isinstance(out, wire.NeedMore)
        assert out.minimum_additional_bytes >= 1

    def test_unknown_type(self):
        framed = bytes([1, 0, 0, 0, 0xFF])
        out = wire.decode_message(framed)
        assert isinstance(out, wire.Malformed)
        assert "0xFF" in out.reason

    def test_body_cap(self):
        out = wire.decode_message((17 * 1024 * 1024).to_bytes(4, "little"))
        assert isinstance(out, wire.Malformed)

    def test_trailing_bytes_untouched(self):
        framed = wire.encode_framed(wire.ListProcessors()) + b"extra"
        out = wire.decode_message(framed)
        assert isinstance(out, wire.Complete)
        assert out.bytes_consumed == len(framed) - 5

    def test_string_overrun(self):
        # HELLO declaring a 10-byte name with only 2 bytes present
        body = bytes([0x01, 1, 0, 10, 0]) + b"ab"
        with pytest.raises(wire.MalformedMessage):
            wire.decode_body(body)

    def test_annotation_count_cap(self):
        body = bytearray(wire.encode_message(wire.ResultMsg(
            frame_seq=1, processor_id="x", recv_to_dispatch_us=0, process_us=0,
            annotations=(), description=None)))
        # patch annotation_count to 300
        idx = 1 + 4 + 2 + 1 + 4 + 4
        body[idx:idx + 2] = (300).to_bytes(2, "little")
        with pytest.raises(wire.MalformedMessage):
            wire.decode_body(bytes(body))


class TestRoundTrip:
    def test_many_random_messages(self):
        rng = random.Random(1234)
        for _ in range(2000):
            m = random_message(rng)
            body = wire.encode_message(m)
            out = wire.decode_message(wire.LENGTH_PREFIX.pack(len(body)) + body)
            assert isinstance(out, wire.Complete), (m, out)
            assert out.message == m
            assert out.bytes_consumed == 4 + len(body)
            # canonical form: re-encoding is byte-identical
            assert wire.encode_message(out.message) == body

    def test_prefix_safety(self):
        rng = random.Random(99)
        for _ in range(100):
            e = wire.encode_framed(random_message(rng))
            for k in range(len(e)):
                out = wire.decode_message(e[:k])
                assert isinstance(out, wire.NeedMore), (k, out)
                assert out.minimum_additional_bytes >= 1

    def test_fuzz_never_crashes(self):
        rng = random.Random(7)
        for _ in range(20000):
            buf = rng.randbytes(rng.randint(0, 64))
            out = wire.decode_message(buf)
            assert isinstance(out, (wire.Complete, wire.NeedMore, wire.Malformed))


class TestEncodeErrors:
    def test_oversize_string(self):
        with pytest.raises(wire.EncodeError):
            wire.encode_message(wire.ErrorMsg(code=1, message="x" * 70000))

    def test_bad_token_length(self):
        with pytest.raises(wire.EncodeError):
            wire.encode_message(wire.Ping(token=b"short"))

    def test_field_range(self):
        with pytest.raises(wire.EncodeError):
            wire.encode_message(wire.HelloAck(session_id=2 ** 32))
