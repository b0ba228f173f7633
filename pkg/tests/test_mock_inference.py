import time

import pytest
import requests

from framerelay.mock_inference import MockInferenceServer, fnv1a32


class TestFnv1a32:
    def test_offset_basis(self):
        assert fnv1a32(b"") == 2166136261

    def test_single_byte(self):
        # value frozen from an independent one-liner before the build
        assert fnv1a32(b"a") == 3826002220

    def test_deterministic(self):
        data = b"some request body"
        assert fnv1a32(data) == fnv1a32(data)


@pytest.fixture
def server():
    s = MockInferenceServer(port=0)
    s.start()
    yield s
    s.stop()


def post(server, body=b'{"x":1}'):
    return requests.post(f"{server.endpoint}/v1/chat/completions",
                         data=body, timeout=5)


class TestHandleCompletion:
    def test_content_is_hash_of_body(self, server):
        body = b'{"model":"m","messages":[]}'
        resp = post(server, body)
        assert resp.status_code == 200
        n = fnv1a32(body) % 1000
        assert resp.json() == {"choices": [{"message": {
            "content": f"mock description {n}"}}]}

    def test_identical_bodies_identical_content(self, server):
        assert post(server).json() == post(server).json()

    def test_different_bodies_differ(self, server):
        a = post(server, b"one").json()
        b = post(server, b"two").json()
        assert a != b

    def test_wrong_path_404(self, server):
        resp = requests.post(f"{server.endpoint}/nope", data=b"x", timeout=5)
        assert resp.status_code == 404

    def test_get_404(self, server):
        resp = requests.get(f"{server.endpoint}/v1/chat/completions", timeout=5)
        assert resp.status_code == 404

    def test_latency_floor(self):
        s = MockInferenceServer(port=0, latency_ms=150)
        s.start()
        try:
            start = time.monotonic()
            post(s)
            assert time.monotonic() - start >= 0.15
        finally:
            s.stop()

    def test_fail_every_third(self):
        s = MockInferenceServer(port=0, fail_every=3)
        s.start()
        try:
            codes = [post(s).status_code for _ in range(9)]
            assert codes == [200, 200, 500] * 3
            assert post(s, b"x").status_code == 200
        finally:
            s.stop()
