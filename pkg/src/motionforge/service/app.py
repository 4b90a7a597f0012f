"""FastAPI service exposing the conditioning/generation pipeline to the studio UI."""

from __future__ import annotations

import base64
import io
import json
import os
import threading
from typing import Dict, Optional

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.responses import FileResponse, JSONResponse, Response
from PIL import Image

from ..conditioning import spec_from_dict, spec_to_dict
from ..errors import ContractError, ShapeError, SpecValidationError
from ..geometry import CameraIntrinsics, CameraTrajectory, canonicalize, render_trajectory
from ..conditioning import fit_boxes, overlay_boxes, project_trajectory, \
    resolve_object_trajectory
from ..imgio import read_pfm, read_png
from ..synth import SceneConfig, generate_scene
from .panel import PANEL_RANGES, PanelParams
from .schemas import (Box3DModel, BoxOverlayModel, GenerateRequest, IntrinsicsModel,
                      JobModel, PanelRangesResponse, PreviewRequest, PreviewResponse,
                      SelectRequest, SelectResponse, SessionCreateRequest,
                      SessionCreateResponse, SpecExportRequest)
from .state import (JobManager, SessionStore, fit_box_from_selection, materialize_spec)

DEFAULT_PORT = 8787


def data_dir() -> str:
    return os.environ.get("MF_DATA_DIR", os.path.join(os.getcwd(), "mf_data"))


def _png_b64(image: np.ndarray) -> str:
    arr = np.clip(np.asarray(image, dtype=np.float64) * 255.0 + 0.5, 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr, mode="RGB").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def _b64_png(data: str) -> np.ndarray:
    with Image.open(io.BytesIO(base64.b64decode(data))) as img:
        return np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0


def create_app(workers: int = 1) -> FastAPI:
    app = FastAPI(title="motionforge", version="0.1.0")
    root = data_dir()
    os.makedirs(root, exist_ok=True)
    sessions = SessionStore(root)
    jobs = JobManager(root, workers=workers)
    idempotent: Dict[str, dict] = {}
    idem_lock = threading.Lock()

    def remembered(key: Optional[str]):
        if key is None:
            return None
        with idem_lock:
            return idempotent.get(key)

    def remember(key: Optional[str], payload: dict):
        if key is not None:
            with idem_lock:
                idempotent[key] = payload
        return payload

    def fail(status: int, message: str):
        raise HTTPException(status_code=status, detail=message)

    def get_session(session_id: str):
        try:
            return sessions.get(session_id)
        except KeyError:
            fail(404, f"unknown session {session_id}")

    @app.get("/panel/ranges", response_model=PanelRangesResponse)
    def panel_ranges():
        return {"ranges": PANEL_RANGES}

    @app.post("/sessions", response_model=SessionCreateResponse)
    def create_session(req: SessionCreateRequest):
        cached = remembered(req.idempotency_key)
        if cached:
            return cached
        try:
            if req.fixture_seed is not None:
                frames, ann = generate_scene(SceneConfig(seed=req.fixture_seed,
                                                         camera_family="static",
                                                         object_count=2,
                                                         object_family="static"))
                image, depth, intr = frames[0], ann.depth0, ann.intrinsics
            else:
                if req.image_path:
                    image = read_png(req.image_path)
                elif req.image_b64:
                    image = _b64_png(req.image_b64)
                else:
                    fail(422, "need image_path, image_b64, or fixture_seed")
                if req.depth_path:
                    depth = read_pfm(req.depth_path)
                elif req.depth_b64:
                    depth = np.frombuffer(base64.b64decode(req.depth_b64), dtype="<f4")
                    depth = depth.reshape(image.shape[:2])
                else:
                    fail(422, "need a paired depth map (depth_path or depth_b64)")
                if req.intrinsics:
                    intr = CameraIntrinsics(**req.intrinsics.model_dump())
                else:
                    from ..synth import default_intrinsics
                    intr = default_intrinsics(image.shape[1], image.shape[0])
            session = sessions.create(image, depth, intr)
        except HTTPException:
            raise
        except FileNotFoundError as exc:
            fail(422, f"unreadable file: {exc}")
        except (ContractError, ShapeError, ValueError) as exc:
            fail(422, str(exc))
        payload = SessionCreateResponse(
            session_id=session.session_id,
            width=intr.width, height=intr.height,
            intrinsics=IntrinsicsModel(**intr.to_dict()),
            n_cloud_points=session.cloud.size,
            image_png_b64=_png_b64(session.image),
        ).model_dump()
        return remember(req.idempotency_key, payload)

    @app.post("/sessions/{session_id}/select", response_model=SelectResponse)
    def select_object(session_id: str, req: SelectRequest):
        cached = remembered(req.idempotency_key)
        if cached:
            return cached
        session = get_session(session_id)
        with session.lock:
            try:
                mask = None
                if req.mask_b64:
                    mask = _b64_png(req.mask_b64).mean(axis=-1) > 0.5
                box = fit_box_from_selection(session, rect=req.rect, mask=mask)
            except ContractError as exc:
                fail(422, str(exc))
            oid = session.next_object_id
            session.next_object_id += 1
            from .state import SessionObject
            session.objects[oid] = SessionObject(oid, req.label, box)
        payload = SelectResponse(
            object_id=oid, label=req.label,
            box=Box3DModel(center=tuple(box.center), half_extents=tuple(box.half_extents)),
        ).model_dump()
        return remember(req.idempotency_key, payload)

    def _spec_for(session, panel_model, n_frames, keyframes, caption="", seed=0):
        panel = PanelParams(**panel_model.model_dump())
        with session.lock:
            for kf in keyframes:
                if kf.object_id not in session.objects:
                    fail(404, f"unknown object {kf.object_id}")
            for oid in session.objects:
                session.objects[oid].keyframes = [
                    (kf.frame, np.asarray(kf.center)) for kf in keyframes
                    if kf.object_id == oid]
            try:
                return materialize_spec(session, panel, n_frames, caption=caption, seed=seed)
            except ContractError as exc:
                fail(422, str(exc))

    @app.post("/sessions/{session_id}/preview", response_model=PreviewResponse)
    def preview(session_id: str, req: PreviewRequest):
        cached = remembered(req.idempotency_key)
        if cached:
            return cached
        session = get_session(session_id)
        spec = _spec_for(session, req.panel, req.n_frames, req.keyframes)
        trajectory = canonicalize(CameraTrajectory(spec.camera, spec.intrinsics))
        guidance = render_trajectory(session.cloud, trajectory, session.image)
        box_models = []
        seqs = []
        for obj in spec.objects:
            traj = resolve_object_trajectory(obj, spec.num_frames)
            uv, valid = project_trajectory(traj, trajectory)
            seq = fit_boxes(uv, valid, spec.intrinsics, object_id=obj.prompt.object_id)
            seqs.append(seq)
            box_models.append(BoxOverlayModel(object_id=obj.prompt.object_id,
                                              boxes=[tuple(b) for b in seq.boxes],
                                              visibility=list(map(bool, seq.visibility))))
        if seqs:
            guidance = overlay_boxes(guidance, seqs)
        count = min(req.max_frames, req.n_frames)
        indices = np.unique(np.linspace(0, req.n_frames - 1, count).astype(int)).tolist()
        payload = PreviewResponse(
            frame_indices=indices,
            frames_png_b64=[_png_b64(guidance.frames[j]) for j in indices],
            boxes=box_models,
        ).model_dump()
        return remember(req.idempotency_key, payload)

    @app.post("/sessions/{session_id}/spec")
    def export_spec(session_id: str, req: SpecExportRequest):
        cached = remembered(req.idempotency_key)
        if cached:
            return JSONResponse(cached)
        session = get_session(session_id)
        spec = _spec_for(session, req.panel, req.n_frames, req.keyframes,
                         caption=req.caption, seed=req.seed)
        payload = spec_to_dict(spec)
        return JSONResponse(remember(req.idempotency_key, payload))

    @app.post("/jobs/generate", response_model=JobModel)
    def generate_job(req: GenerateRequest):
        cached = remembered(req.idempotency_key)
        if cached:
            return cached
        if req.spec is not None:
            try:
                spec = spec_from_dict(req.spec)
            except SpecValidationError as exc:
                fail(422, str(exc))
        elif req.session_id is not None:
            session = get_session(req.session_id)
            spec = _spec_for(session, req.panel, req.n_frames, req.keyframes, seed=req.seed)
        else:
            fail(422, "need session_id or spec")
        job = jobs.submit_generate(spec, req.checkpoint, req.steps)
        return remember(req.idempotency_key, job.snapshot())

    @app.get("/jobs/{job_id}", response_model=JobModel)
    def job_status(job_id: str):
        try:
            return jobs.get(job_id).snapshot()
        except KeyError:
            fail(404, f"unknown job {job_id}")

    @app.get("/jobs/{job_id}/frames/{k}.png")
    def job_frame(job_id: str, k: int):
        try:
            job = jobs.get(job_id)
        except KeyError:
            fail(404, f"unknown job {job_id}")
        path = os.path.join(job.result_dir or "", "frames", f"{k:03d}.png")
        if job.state != "done" or not os.path.exists(path):
            fail(404, f"frame {k} not available (job state: {job.state})")
        return FileResponse(path, media_type="image/png")

    @app.delete("/jobs/{job_id}", response_model=JobModel)
    def cancel_job(job_id: str):
        try:
            return jobs.cancel(job_id).snapshot()
        except KeyError:
            fail(404, f"unknown job {job_id}")

    return app


def serve(port: int = DEFAULT_PORT, host: str = "127.0.0.1", workers: int = 1) -> None:
    import uvicorn

    uvicorn.run(create_app(workers=workers), host=host, port=port, log_level="warning")
