import random

import httpx
import pytest

from gazepick.errors import ConfigError, DetectionError, ProtocolError
from gazepick.perception import (
    BoundingBox,
    DetectionSet,
    ExternalDetector,
    ImageResolution,
    SyntheticDetector,
    View,
    confidence_gate,
    hit_test,
    rescale,
)

from . import oracles


def mkbox(label="mouse", conf=0.9, u1=0.0, v1=0.0, u2=10.0, v2=10.0, id="b0"):
    return BoundingBox(label=label, confidence=conf, u1=u1, v1=v1, u2=u2, v2=v2, instance_id=id)


def mkset(boxes, w=200, h=200, view=View.USER):
    return DetectionSet(
        view=view, resolution=ImageResolution(w, h), boxes=tuple(boxes), captured_at_ms=0
    )


HD = ImageResolution(1920, 1080)


class TestRescale:
    def test_identity_resolution_is_exact(self):
        assert rescale(960, 540, HD, HD) == (960.0, 540.0)

    def test_exact_halving(self):
        assert rescale(100, 200, HD, ImageResolution(960, 540)) == (50.0, 100.0)

    def test_derived_720p_case(self):
        assert rescale(123, 456, HD, ImageResolution(1280, 720)) == (82.0, 304.0)

    def test_out_of_range_input(self):
        with pytest.raises(ValueError):
            rescale(2000, 10, HD, HD)
        with pytest.raises(ValueError):
            rescale(10, -1, HD, HD)

    def test_chain_composes_within_1e9(self):
        rng = random.Random(4)
        for _ in range(500):
            a = ImageResolution(rng.randrange(1, 4000), rng.randrange(1, 4000))
            b = ImageResolution(rng.randrange(1, 4000), rng.randrange(1, 4000))
            c = ImageResolution(rng.randrange(1, 4000), rng.randrange(1, 4000))
            u = rng.uniform(0, a.width_px)
            v = rng.uniform(0, a.height_px)
            via_b = rescale(*rescale(u, v, a, b), b, c)
            direct = rescale(u, v, a, c)
            for got, want in zip(via_b, direct):
                assert got == pytest.approx(want, rel=1e-9, abs=1e-12)


class TestHitTest:
    def test_single_box_containment(self):
        dets = mkset([mkbox(label="mouse")])
        assert hit_test((5, 5), dets).label == "mouse"

    def test_boundary_is_inclusive(self):
        dets = mkset([mkbox()])
        assert hit_test((10, 10), dets) is not None
        assert hit_test((0, 0), dets) is not None
        assert hit_test((10.000001, 10), dets) is None

    def test_smallest_area_wins_on_overlap(self):
        a = mkbox(label="pad", conf=0.9, u1=0, v1=0, u2=20, v2=20, id="a")
        b = mkbox(label="mouse", conf=0.5, u1=4, v1=4, u2=6, v2=6, id="b")
        assert hit_test((5, 5), mkset([a, b])).instance_id == "b"

    def test_ties_break_by_confidence_then_id(self):
        a = mkbox(conf=0.5, u1=0, v1=0, u2=10, v2=10, id="z")
        b = mkbox(conf=0.9, u1=2, v1=2, u2=12, v2=12, id="y")
        assert hit_test((5, 5), mkset([a, b])).instance_id == "y"
        c = mkbox(conf=0.9, u1=0, v1=0, u2=10, v2=10, id="m")
        d = mkbox(conf=0.9, u1=2, v1=2, u2=12, v2=12, id="k")
        assert hit_test((5, 5), mkset([c, d])).instance_id == "k"

    def test_none_when_no_box_contains(self):
        assert hit_test((50, 50), mkset([mkbox()])) is None

    @pytest.mark.parametrize("seed", range(30))
    def test_matches_brute_force_on_random_sets(self, seed):
        rng = random.Random(seed)
        boxes = []
        for i in range(rng.randrange(1, 50)):
            if boxes and rng.random() < 0.2:
                # duplicate geometry with fresh confidence/id to force ties
                t = rng.choice(boxes)
                boxes.append(mkbox(label=t.label, conf=round(rng.random(), 2),
                                   u1=t.u1, v1=t.v1, u2=t.u2, v2=t.v2, id=f"b{i}"))
                continue
            u1 = rng.uniform(0, 180)
            v1 = rng.uniform(0, 180)
            boxes.append(
                mkbox(
                    label=rng.choice(["mouse", "pen", "cup"]),
                    conf=round(rng.random(), 2),
                    u1=u1, v1=v1,
                    u2=min(u1 + rng.uniform(0.5, 60), 200.0),
                    v2=min(v1 + rng.uniform(0.5, 60), 200.0),
                    id=f"b{i}",
                )
            )
        dets = mkset(boxes)
        queries = [(rng.uniform(0, 200), rng.uniform(0, 200)) for _ in range(60)]
        for b in boxes[:10]:  # exact corners exercise boundary inclusion
            queries.extend([(b.u1, b.v1), (b.u2, b.v2), (b.u1, b.v2)])
        for q in queries:
            got = hit_test(q, dets)
            want = oracles.hit_test(q, boxes)
            assert (got.instance_id if got else None) == (
                want.instance_id if want else None
            )


class TestConfidenceGate:
    def test_zero_threshold_is_identity(self):
        dets = mkset([mkbox(conf=0.1, id="a"), mkbox(conf=0.9, id="b")])
        assert confidence_gate(dets, 0.0).boxes == dets.boxes

    def test_filters_below_threshold(self):
        dets = mkset([mkbox(conf=0.9, id="a"), mkbox(conf=0.4, id="b")])
        kept = confidence_gate(dets, 0.5)
        assert [b.instance_id for b in kept.boxes] == ["a"]

    def test_output_is_subsequence(self):
        rng = random.Random(8)
        boxes = [mkbox(conf=round(rng.random(), 3), id=f"b{i}") for i in range(30)]
        dets = mkset(boxes)
        kept = confidence_gate(dets, 0.6).boxes
        it = iter(dets.boxes)
        assert all(any(b is k for b in it) for k in kept)  # order preserved

    def test_bad_threshold(self):
        with pytest.raises(ConfigError):
            confidence_gate(mkset([mkbox()]), 1.5)


class TestSyntheticDetector:
    def test_zero_noise_equals_ground_truth(self, demo_scene):
        det = SyntheticDetector(demo_scene, sigma_px=0.0, p_miss=0.0, seed=3)
        got = det.detect(View.USER, captured_at_ms=5, capture_index=1)
        truth = demo_scene.project(View.USER, captured_at_ms=5)
        assert [(b.instance_id, b.u1, b.v1, b.u2, b.v2) for b in got.boxes] == [
            (b.instance_id, b.u1, b.v1, b.u2, b.v2) for b in truth.boxes
        ]

    def test_seeded_determinism(self, demo_scene):
        a = SyntheticDetector(demo_scene, sigma_px=4.0, seed=7)
        b = SyntheticDetector(demo_scene, sigma_px=4.0, seed=7)
        for view in (View.USER, View.ROBOT):
            da = a.detect(view, captured_at_ms=0, capture_index=2)
            db = b.detect(view, captured_at_ms=0, capture_index=2)
            assert da.boxes == db.boxes

    def test_views_and_captures_use_distinct_streams(self, demo_scene):
        det = SyntheticDetector(demo_scene, sigma_px=4.0, seed=7)
        u = det.detect(View.USER, captured_at_ms=0, capture_index=1)
        r = det.detect(View.ROBOT, captured_at_ms=0, capture_index=1)
        u2 = det.detect(View.USER, captured_at_ms=0, capture_index=2)
        assert u.boxes != r.boxes
        assert u.boxes != u2.boxes

    def test_confidence_band_respected(self, demo_scene):
        det = SyntheticDetector(demo_scene, conf_lo=0.88, conf_hi=0.99, seed=1)
        for k in range(50):
            dets = det.detect(View.ROBOT, captured_at_ms=0, capture_index=k)
            assert all(0.88 <= b.confidence <= 0.99 for b in dets.boxes)

    def test_p_miss_one_drops_everything(self, demo_scene):
        det = SyntheticDetector(demo_scene, p_miss=1.0, seed=1)
        assert det.detect(View.USER, captured_at_ms=0, capture_index=0).boxes == ()

    def test_noise_keeps_boxes_in_frame(self, demo_scene):
        det = SyntheticDetector(demo_scene, sigma_px=300.0, seed=5)
        for k in range(10):
            dets = det.detect(View.USER, captured_at_ms=0, capture_index=k)
            w, h = dets.resolution.width_px, dets.resolution.height_px
            for b in dets.boxes:
                assert 0 <= b.u1 <= b.u2 <= w
                assert 0 <= b.v1 <= b.v2 <= h


class TestExternalDetector:
    RES = {View.USER: ImageResolution(1280, 720), View.ROBOT: ImageResolution(600, 900)}

    def make(self, handler):
        client = httpx.Client(transport=httpx.MockTransport(handler))
        return ExternalDetector("http://det.test", self.RES, scene_id="s1", client=client)

    def test_request_and_reply_schema(self):
        seen = {}

        def handler(request):
            seen.update(
                url=str(request.url),
                body=request.content.decode(),
            )
            return httpx.Response(
                200,
                json={
                    "boxes": [
                        {"label": "mouse", "confidence": 0.93,
                         "u1": 10, "v1": 20, "u2": 110, "v2": 90},
                        {"label": "pen", "confidence": 0.9,
                         "u1": 200, "v1": 50, "u2": 260, "v2": 80},
                    ]
                },
            )

        det = self.make(handler)
        got = det.detect(View.USER, captured_at_ms=7, capture_index=0)
        assert seen["url"] == "http://det.test/detect"
        import json

        body = json.loads(seen["body"])
        assert body == {
            "view": "user", "width": 1280, "height": 720,
            "image_b64": None, "scene_id": "s1",
        }
        assert [b.instance_id for b in got.boxes] == ["user-0", "user-1"]
        assert got.boxes[0].label == "mouse"
        assert got.captured_at_ms == 7

    def test_unreachable_service_is_retryable_detection_error(self):
        def handler(request):
            raise httpx.ConnectError("boom")

        det = self.make(handler)
        with pytest.raises(DetectionError) as exc:
            det.detect(View.USER, captured_at_ms=0, capture_index=0)
        assert exc.value.retryable

    def test_malformed_reply_is_protocol_error(self):
        def handler(request):
            return httpx.Response(200, json={"boxen": []})

        with pytest.raises(ProtocolError):
            self.make(handler).detect(View.USER, captured_at_ms=0, capture_index=0)

    def test_bad_box_geometry_is_protocol_error(self):
        def handler(request):
            return httpx.Response(
                200,
                json={"boxes": [{"label": "x", "confidence": 0.5,
                                 "u1": 50, "v1": 0, "u2": 10, "v2": 10}]},
            )

        with pytest.raises(ProtocolError):
            self.make(handler).detect(View.USER, captured_at_ms=0, capture_index=0)

    def test_http_500_is_retryable(self):
        def handler(request):
            return httpx.Response(503, text="overloaded")

        with pytest.raises(DetectionError) as exc:
            self.make(handler).detect(View.USER, captured_at_ms=0, capture_index=0)
        assert exc.value.retryable


def test_detection_set_rejects_duplicate_ids():
    with pytest.raises(ConfigError):
        mkset([mkbox(id="a"), mkbox(id="a")])


def test_detection_set_rejects_out_of_bounds_boxes():
    with pytest.raises(ConfigError):
        mkset([mkbox(u2=500.0)], w=200, h=200)
