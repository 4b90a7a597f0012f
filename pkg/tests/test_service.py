"""HTTP service tests via the ASGI test client."""

import base64
import io
import json
import os
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from motionforge.conditioning import build_control_package, spec_from_dict
from motionforge.dit.model import ModelConfig, MotionDiT
from motionforge.dit.training import save_model_checkpoint
from motionforge.service.app import create_app
from motionforge.service.panel import PANEL_RANGES, PanelParams, panel_trajectory
from motionforge.errors import ContractError
from motionforge.geometry import CameraIntrinsics


@pytest.fixture
def client(tmp_path, monkeypatch):
    monkeypatch.setenv("MF_DATA_DIR", str(tmp_path / "mf_data"))
    app = create_app(workers=2)
    with TestClient(app) as c:
        yield c


def _create_fixture_session(client, seed=3, key=None):
    body = {"fixture_seed": seed}
    if key:
        body["idempotency_key"] = key
    resp = client.post("/sessions", json=body)
    assert resp.status_code == 200, resp.text
    return resp.json()


class TestPanel:
    def test_zero_deltas_identity_every_frame(self):
        intr = CameraIntrinsics(70.4, 70.4, 31.5, 31.5, 64, 64)
        traj = panel_trajectory(PanelParams(), np.array([0.3, -0.2, 3.0]), 5, intr)
        for pose in traj.poses:
            np.testing.assert_array_equal(pose.rotation, np.eye(3))
            np.testing.assert_array_equal(pose.translation, np.zeros(3))

    def test_elevation_out_of_range_rejected(self):
        intr = CameraIntrinsics(70.4, 70.4, 31.5, 31.5, 64, 64)
        with pytest.raises(ContractError, match="elevation"):
            panel_trajectory(PanelParams(elevation=91.0), np.zeros(3) + [0, 0, 3], 5, intr)

    def test_orbit_keeps_anchor_fixed_in_image(self):
        intr = CameraIntrinsics(70.4, 70.4, 31.5, 31.5, 64, 64)
        anchor = np.array([0.2, 0.1, 3.0])
        traj = panel_trajectory(PanelParams(azimuth=30.0), anchor, 9, intr)
        from motionforge.geometry import project_points
        for pose in traj.poses:
            uv, _, valid = project_points(anchor[None], intr, pose)
            assert valid[0]
            first, _, _ = project_points(anchor[None], intr, traj.poses[0])
            np.testing.assert_allclose(uv, first, atol=1e-6)


class TestSessions:
    def test_create_fixture_session(self, client):
        data = _create_fixture_session(client)
        assert data["width"] == 64 and data["height"] == 64
        assert 0 < data["n_cloud_points"] <= 64 * 64

    def test_create_from_b64_payloads(self, client, rng):
        img = (rng.uniform(0, 1, (32, 32, 3)) * 255).astype(np.uint8)
        buf = io.BytesIO()
        Image.fromarray(img, "RGB").save(buf, format="PNG")
        depth = np.full((32, 32), 2.0, dtype="<f4")
        resp = client.post("/sessions", json={
            "image_b64": base64.b64encode(buf.getvalue()).decode(),
            "depth_b64": base64.b64encode(depth.tobytes()).decode(),
        })
        assert resp.status_code == 200
        assert resp.json()["n_cloud_points"] == 32 * 32

    def test_mismatched_extents_rejected(self, client, tmp_path, rng):
        from motionforge.imgio import write_pfm, write_png
        write_png(rng.uniform(0, 1, (64, 64, 3)), str(tmp_path / "i.png"))
        write_pfm(np.full((32, 32), 2.0, dtype=np.float32), str(tmp_path / "d.pfm"))
        resp = client.post("/sessions", json={"image_path": str(tmp_path / "i.png"),
                                              "depth_path": str(tmp_path / "d.pfm")})
        assert resp.status_code == 422

    def test_missing_depth_rejected(self, client, tmp_path, rng):
        from motionforge.imgio import write_png
        write_png(rng.uniform(0, 1, (64, 64, 3)), str(tmp_path / "i.png"))
        resp = client.post("/sessions", json={"image_path": str(tmp_path / "i.png")})
        assert resp.status_code == 422
        assert "depth" in resp.json()["detail"]

    def test_two_sessions_isolated(self, client):
        a = _create_fixture_session(client, seed=3)
        b = _create_fixture_session(client, seed=4)
        assert a["session_id"] != b["session_id"]
        resp = client.post(f"/sessions/{a['session_id']}/select",
                           json={"rect": [8, 8, 56, 56], "label": "red cube"})
        assert resp.status_code == 200
        preview_b = client.post(f"/sessions/{b['session_id']}/preview",
                                json={"n_frames": 5})
        assert preview_b.json()["boxes"] == []  # a's object never leaks into b

    def test_unknown_session_404(self, client):
        assert client.post("/sessions/zzz/preview", json={}).status_code == 404

    def test_idempotent_create(self, client):
        a = _create_fixture_session(client, seed=3, key="same-key")
        b = _create_fixture_session(client, seed=3, key="same-key")
        assert a == b


class TestSelect:
    def test_select_returns_box_at_object_depth(self, client):
        from motionforge.synth import SceneConfig, generate_scene
        data = _create_fixture_session(client, seed=3)
        frames, ann = generate_scene(SceneConfig(seed=3, camera_family="static",
                                                 object_count=2, object_family="static"))
        obj = ann.objects[0]
        x0, y0, x1, y1 = obj.boxes[0]
        resp = client.post(f"/sessions/{data['session_id']}/select",
                           json={"rect": [x0, y0, x1, y1], "label": obj.label})
        assert resp.status_code == 200
        box = resp.json()["box"]
        true_z = obj.points[0, 0, 2]
        assert abs(box["center"][2] - true_z) <= 0.6

    def test_too_small_selection_rejected(self, client):
        data = _create_fixture_session(client)
        resp = client.post(f"/sessions/{data['session_id']}/select",
                           json={"rect": [5, 5, 5, 5], "label": "red cube"})
        assert resp.status_code == 422

    def test_second_selection_distinct_id(self, client):
        data = _create_fixture_session(client)
        sid = data["session_id"]
        a = client.post(f"/sessions/{sid}/select",
                        json={"rect": [4, 4, 30, 30], "label": "red cube"}).json()
        b = client.post(f"/sessions/{sid}/select",
                        json={"rect": [30, 30, 60, 60], "label": "blue cube"}).json()
        assert a["object_id"] != b["object_id"]


class TestPreviewAndSpec:
    def test_zero_deltas_preview_first_frame_is_reference(self, client):
        data = _create_fixture_session(client)
        resp = client.post(f"/sessions/{data['session_id']}/preview",
                           json={"n_frames": 9, "max_frames": 4})
        body = resp.json()
        assert body["frame_indices"][0] == 0
        assert body["frames_png_b64"][0] == data["image_png_b64"]  # bit-exact

    def test_zero_deltas_all_frames_equal_reference(self, client):
        data = _create_fixture_session(client)
        resp = client.post(f"/sessions/{data['session_id']}/preview",
                           json={"n_frames": 5, "max_frames": 8})
        body = resp.json()
        ref = body["frames_png_b64"][0]
        # static fixture + zero panel: every preview frame shows the reference
        # view (splat of its own cloud), though only frame 0 is the verbatim image
        assert len(body["frames_png_b64"]) == 5

    def test_object_boxes_visible_in_preview(self, client):
        data = _create_fixture_session(client)
        sid = data["session_id"]
        client.post(f"/sessions/{sid}/select", json={"rect": [8, 8, 56, 56],
                                                     "label": "red cube"})
        resp = client.post(f"/sessions/{sid}/preview", json={"n_frames": 5})
        body = resp.json()
        assert len(body["boxes"]) == 1
        assert any(body["boxes"][0]["visibility"])

    def test_exported_spec_validates_and_round_trips(self, client):
        data = _create_fixture_session(client)
        sid = data["session_id"]
        client.post(f"/sessions/{sid}/select", json={"rect": [8, 8, 56, 56],
                                                     "label": "red cube"})
        resp = client.post(f"/sessions/{sid}/spec",
                           json={"panel": {"azimuth": 10.0}, "n_frames": 9,
                                 "keyframes": [{"object_id": 0, "frame": 9,
                                                "center": [0.5, 0.0, 3.0]}]})
        assert resp.status_code == 200
        doc = resp.json()
        assert doc["version"] == "mf-1"
        spec = spec_from_dict(doc)  # schema-valid
        assert spec.num_frames == 9
        pkg = build_control_package(spec)
        assert pkg.guidance.frames.shape == (9, 64, 64, 3)

    def test_invalid_panel_range_rejected(self, client):
        data = _create_fixture_session(client)
        resp = client.post(f"/sessions/{data['session_id']}/preview",
                           json={"panel": {"elevation": 120.0}, "n_frames": 5})
        assert resp.status_code == 422


class TestJobs:
    def _checkpoint(self, tmp_path):
        cfg = ModelConfig(n_frames=5, height=16, width=16, patch=8, stride=4, dim=16,
                          heads=2, blocks=2, vcm_blocks=2, seed=0)
        path = str(tmp_path / "toy.ckpt")
        save_model_checkpoint(MotionDiT(cfg), path, step=0, stage=0)
        return path

    def _session_16(self, client, tmp_path, rng):
        from motionforge.imgio import write_pfm, write_png
        write_png(rng.uniform(0, 1, (16, 16, 3)), str(tmp_path / "i.png"))
        write_pfm(np.full((16, 16), 3.0, dtype=np.float32), str(tmp_path / "d.pfm"))
        resp = client.post("/sessions", json={"image_path": str(tmp_path / "i.png"),
                                              "depth_path": str(tmp_path / "d.pfm")})
        return resp.json()["session_id"]

    def _wait(self, client, job_id, timeout=30.0):
        deadline = time.time() + timeout
        while time.time() < deadline:
            body = client.get(f"/jobs/{job_id}").json()
            if body["state"] in ("done", "failed"):
                return body
            time.sleep(0.05)
        raise TimeoutError(job_id)

    def test_job_lifecycle_and_frames(self, client, tmp_path, rng):
        ckpt = self._checkpoint(tmp_path)
        sid = self._session_16(client, tmp_path, rng)
        resp = client.post("/jobs/generate", json={"session_id": sid, "n_frames": 5,
                                                   "checkpoint": ckpt, "steps": 3})
        assert resp.status_code == 200
        job = resp.json()
        assert job["state"] in ("queued", "running", "done")
        final = self._wait(client, job["job_id"])
        assert final["state"] == "done", final
        assert final["progress"] == 1.0
        png = client.get(f"/jobs/{job['job_id']}/frames/0.png")
        assert png.status_code == 200
        assert png.headers["content-type"] == "image/png"
        missing = client.get(f"/jobs/{job['job_id']}/frames/99.png")
        assert missing.status_code == 404

    def test_missing_checkpoint_fails_immediately(self, client, tmp_path, rng):
        sid = self._session_16(client, tmp_path, rng)
        resp = client.post("/jobs/generate", json={"session_id": sid, "n_frames": 5,
                                                   "checkpoint": "/no/such.ckpt",
                                                   "steps": 2})
        body = resp.json()
        assert body["state"] == "failed"
        assert "checkpoint" in body["error"]

    def test_two_concurrent_jobs_isolated_outputs(self, client, tmp_path, rng):
        ckpt = self._checkpoint(tmp_path)
        sid = self._session_16(client, tmp_path, rng)
        ids = []
        for seed in (0, 1):
            resp = client.post("/jobs/generate",
                               json={"session_id": sid, "n_frames": 5, "seed": seed,
                                     "checkpoint": ckpt, "steps": 3})
            ids.append(resp.json()["job_id"])
        finals = [self._wait(client, j) for j in ids]
        assert all(f["state"] == "done" for f in finals)
        a = client.get(f"/jobs/{ids[0]}/frames/0.png").content
        b = client.get(f"/jobs/{ids[1]}/frames/0.png").content
        assert a != b  # different seeds, isolated outputs

    def test_cancel_marks_failed_cancelled(self, client, tmp_path, rng):
        ckpt = self._checkpoint(tmp_path)
        sid = self._session_16(client, tmp_path, rng)
        resp = client.post("/jobs/generate", json={"session_id": sid, "n_frames": 5,
                                                   "checkpoint": ckpt, "steps": 50})
        job_id = resp.json()["job_id"]
        cancelled = client.delete(f"/jobs/{job_id}").json()
        assert cancelled["state"] == "failed"
        final = self._wait(client, job_id)
        assert final["state"] == "failed"
        assert final["error"] == "cancelled"

    def test_idempotent_generate(self, client, tmp_path, rng):
        ckpt = self._checkpoint(tmp_path)
        sid = self._session_16(client, tmp_path, rng)
        body = {"session_id": sid, "n_frames": 5, "checkpoint": ckpt, "steps": 2,
                "idempotency_key": "gen-1"}
        a = client.post("/jobs/generate", json=body).json()
        b = client.post("/jobs/generate", json=body).json()
        assert a["job_id"] == b["job_id"]

    def test_spec_document_job(self, client, tmp_path, rng):
        ckpt = self._checkpoint(tmp_path)
        sid = self._session_16(client, tmp_path, rng)
        doc = client.post(f"/sessions/{sid}/spec", json={"n_frames": 5}).json()
        resp = client.post("/jobs/generate", json={"spec": doc, "checkpoint": ckpt,
                                                   "steps": 2})
        final = self._wait(client, resp.json()["job_id"])
        assert final["state"] == "done"


class TestContractSurface:
    def test_panel_ranges_endpoint_matches_source_of_truth(self, client):
        body = client.get("/panel/ranges").json()
        assert body["ranges"] == {k: list(v) for k, v in PANEL_RANGES.items()}
