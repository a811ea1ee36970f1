import json
import threading

import pytest
import requests
from hypothesis import given, strategies as st

from spatialrl.judge import (
    JudgeConfig,
    JudgeGrades,
    JudgeResponseError,
    JudgeTransportError,
    build_judge_prompt,
    query_judge,
    render_reward,
    stub_grades,
)
from spatialrl.judge_server import grades_for_request, make_server, parse_multipart
from spatialrl.physics import PhysicsReport

ratios = st.floats(min_value=0.0, max_value=1.0, allow_nan=False)


class TestRenderReward:
    def test_all_tens_is_perfect(self):
        assert render_reward(JudgeGrades(10, 10, 10, 10, 10)).value == 1.0

    def test_mixed_grades_sum(self):
        assert render_reward(JudgeGrades(8, 6, 7, 5, 5)).value == pytest.approx(0.62)

    def test_unknown_resolves_to_midpoint(self):
        assert render_reward(JudgeGrades(None, 6, 7, 5, 5)).value == pytest.approx(0.56)

    def test_value_range(self):
        assert render_reward(JudgeGrades(1, 1, 1, 1, 1)).value == pytest.approx(0.1)

    def test_grade_validation(self):
        with pytest.raises(ValueError):
            JudgeGrades(0, 5, 5, 5, 5)
        with pytest.raises(ValueError):
            JudgeGrades(11, 5, 5, 5, 5)

    def test_wire_round_trip(self):
        grades = JudgeGrades(9, None, 7, 8, 6)
        doc = grades.to_dict()
        assert doc["functionality"] == "unknown"
        assert JudgeGrades.from_dict(doc) == grades


class TestStubGrades:
    def test_clean_scene(self):
        grades = stub_grades(0.0, 0.0)
        assert grades.as_tuple() == (10, 10, 10, 8, 10)
        assert render_reward(grades).value == pytest.approx(0.96)

    def test_everything_wrong(self):
        grades = stub_grades(1.0, 1.0)
        assert grades.as_tuple() == (1, 1, 1, 8, 1)
        assert render_reward(grades).value == pytest.approx(0.24)

    def test_determinism(self):
        assert stub_grades(0.3, 0.7) == stub_grades(0.3, 0.7)

    @given(ratios, ratios, ratios)
    def test_realism_monotone_in_collisions(self, lo, hi, vr):
        lo, hi = sorted((lo, hi))
        assert stub_grades(lo, vr).realism >= stub_grades(hi, vr).realism

    @given(ratios, ratios, ratios)
    def test_functionality_monotone_in_constraints(self, lo, hi, cr):
        lo, hi = sorted((lo, hi))
        assert stub_grades(cr, lo).functionality >= stub_grades(cr, hi).functionality

    @given(ratios, ratios)
    def test_grades_always_valid(self, cr, vr):
        grades = stub_grades(cr, vr)
        assert all(1 <= g <= 10 for g in grades.as_tuple())
        assert 0.1 <= render_reward(grades).value <= 1.0


def test_prompt_interpolates_preference_and_example():
    prompt = build_judge_prompt("a sunny atelier", '{"realism": 5}')
    assert "```a sunny atelier```" in prompt
    assert '{"realism": 5}' in prompt
    assert "Give a grade from 1 to 10 or unknown" in prompt
    assert "{user_preference}" not in prompt


def test_stub_mode_scores_from_physics():
    report = PhysicsReport.from_ratios(0.0, 0.0)
    grades = query_judge(None, "pref", JudgeConfig(mode="stub"), physics=report)
    assert grades.as_tuple() == (10, 10, 10, 8, 10)


def test_stub_mode_without_stats_is_an_error(small_task):
    with pytest.raises(Exception):
        query_judge(None, "pref", JudgeConfig(mode="stub"))


@pytest.fixture()
def stub_server():
    server = make_server(0)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield f"http://127.0.0.1:{server.server_address[1]}"
    finally:
        server.shutdown()
        server.server_close()


class TestJudgeServer:
    def test_health(self, stub_server):
        doc = requests.get(f"{stub_server}/health", timeout=5).json()
        assert "version" in doc

    def test_judge_round_trip_through_remote_client(self, stub_server):
        config = JudgeConfig(mode="remote", endpoint=f"{stub_server}/judge", retries=0)
        report = PhysicsReport.from_ratios(0.0, 0.0)
        grades = query_judge(b"\x89PNG fake image", "minimalist loft", config, physics=report)
        assert grades.as_tuple() == (10, 10, 10, 8, 10)

    def test_judge_grades_follow_the_stats(self, stub_server):
        config = JudgeConfig(mode="remote", endpoint=f"{stub_server}/judge", retries=0)
        report = PhysicsReport.from_ratios(1.0, 1.0)
        grades = query_judge(None, "pref", config, physics=report)
        assert grades.as_tuple() == (1, 1, 1, 8, 1)

    def test_malformed_request_is_rejected(self, stub_server):
        response = requests.post(
            f"{stub_server}/judge",
            files=[("stats", (None, "{not json"))],
            timeout=5,
        )
        assert response.status_code == 400
        assert "error" in response.json()

    def test_missing_stats_is_rejected(self, stub_server):
        response = requests.post(
            f"{stub_server}/judge", files=[("prompt", (None, "hi"))], timeout=5
        )
        assert response.status_code == 400

    def test_out_of_range_ratio_is_rejected(self, stub_server):
        response = requests.post(
            f"{stub_server}/judge",
            files=[("stats", (None, '{"collision_ratio": 2, "constraint_ratio": 0}'))],
            timeout=5,
        )
        assert response.status_code == 400

    def test_unknown_path_is_404(self, stub_server):
        assert requests.get(f"{stub_server}/nope", timeout=5).status_code == 404

    def test_json_body_also_accepted(self, stub_server):
        response = requests.post(
            f"{stub_server}/judge",
            json={"stats": {"collision_ratio": 0.5, "constraint_ratio": 0.0}},
            timeout=5,
        )
        assert response.status_code == 200
        assert response.json()["realism"] == 5


def test_remote_transport_failure_raises_after_retries():
    config = JudgeConfig(
        mode="remote", endpoint="http://127.0.0.1:1", timeout_s=0.2,
        retries=1, backoff_s=0.01,
    )
    with pytest.raises(JudgeTransportError):
        query_judge(None, "pref", config, physics=PhysicsReport.from_ratios(0, 0))


def test_unparsable_judge_response_carries_the_body(stub_server):
    config = JudgeConfig(mode="remote", endpoint=f"{stub_server}/health", retries=0)
    # /health answers 200 with a non-grade body via GET only; POST gives 404,
    # so point at a tiny local server that returns junk instead.
    import http.server

    class Junk(http.server.BaseHTTPRequestHandler):
        def do_POST(self):
            self.rfile.read(int(self.headers.get("Content-Length", 0)))
            body = b"not a grade object"
            self.send_response(200)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def log_message(self, *args):
            pass

    server = http.server.ThreadingHTTPServer(("127.0.0.1", 0), Junk)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        config = JudgeConfig(
            mode="remote",
            endpoint=f"http://127.0.0.1:{server.server_address[1]}/judge",
            retries=0,
        )
        with pytest.raises(JudgeResponseError) as err:
            query_judge(None, "pref", config, physics=PhysicsReport.from_ratios(0, 0))
        assert "not a grade object" in err.value.body
    finally:
        server.shutdown()
        server.server_close()


def test_multipart_parser_extracts_fields_and_files():
    boundary = "deadbeef"
    body = (
        f"--{boundary}\r\n"
        'Content-Disposition: form-data; name="prompt"\r\n\r\n'
        "grade this\r\n"
        f"--{boundary}\r\n"
        'Content-Disposition: form-data; name="image"; filename="scene.png"\r\n'
        "Content-Type: application/octet-stream\r\n\r\n"
        "BYTES\r\n"
        f"--{boundary}--\r\n"
    ).encode()
    fields = parse_multipart(f'multipart/form-data; boundary="{boundary}"', body)
    assert fields["prompt"] == "grade this"
    assert fields["image"] == b"BYTES"


def test_grades_for_request_validates(small_task):
    doc = grades_for_request(
        {"stats": json.dumps({"collision_ratio": 0.0, "constraint_ratio": 0.0})}
    )
    assert doc["realism"] == 10
