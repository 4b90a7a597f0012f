"""In-memory session and job state for the motion-design service."""

from __future__ import annotations

import os
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..conditioning import (Box3D, ControlObject, ControlSpec, EntityPrompt,
                            box_keyframes_to_trajectory)
from ..errors import ContractError
from ..geometry import CameraIntrinsics, PointCloud, unproject_depth
from ..imgio import write_pfm, write_png
from .. import vocab
from .panel import PanelParams, panel_trajectory


@dataclass
class SessionObject:
    object_id: int
    label: str
    box: Box3D
    keyframes: List[Tuple[int, np.ndarray]] = field(default_factory=list)


@dataclass
class Session:
    session_id: str
    image: np.ndarray
    depth: np.ndarray
    intrinsics: CameraIntrinsics
    cloud: PointCloud
    pixel_valid: np.ndarray
    data_dir: str
    objects: Dict[int, SessionObject] = field(default_factory=dict)
    next_object_id: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock)

    @property
    def anchor(self) -> np.ndarray:
        """Orbit anchor: last selected object center, else cloud centroid."""
        if self.objects:
            last = max(self.objects)
            return self.objects[last].box.center
        if self.cloud.size:
            return self.cloud.points.mean(axis=0)
        return np.array([0.0, 0.0, 1.0])


class SessionStore:
    def __init__(self, data_dir: str):
        self.data_dir = data_dir
        self._sessions: Dict[str, Session] = {}
        self._lock = threading.Lock()

    def create(self, image: np.ndarray, depth: np.ndarray,
               intrinsics: CameraIntrinsics) -> Session:
        if image.shape[:2] != (intrinsics.height, intrinsics.width):
            raise ContractError(f"session: image {image.shape[:2]} disagrees with intrinsics "
                                f"{(intrinsics.height, intrinsics.width)}")
        if depth.shape != image.shape[:2]:
            raise ContractError(f"session: depth {depth.shape} vs image {image.shape[:2]}")
        session_id = uuid.uuid4().hex[:12]
        session_dir = os.path.join(self.data_dir, "sessions", session_id)
        os.makedirs(session_dir, exist_ok=True)
        # the cloud is derived exactly once from the loaded depth
        from ..geometry import CameraPose
        cloud = unproject_depth(depth, intrinsics, CameraPose.identity(), image)
        valid = np.isfinite(depth) & (depth > 0)
        write_png(image, os.path.join(session_dir, "reference.png"))
        write_pfm(depth, os.path.join(session_dir, "depth.pfm"))
        session = Session(session_id, image, depth, intrinsics, cloud, valid, session_dir)
        with self._lock:
            self._sessions[session_id] = session
        return session

    def get(self, session_id: str) -> Session:
        with self._lock:
            if session_id not in self._sessions:
                raise KeyError(session_id)
            return self._sessions[session_id]


def fit_box_from_selection(session: Session, rect: Optional[Tuple[float, float, float, float]] = None,
                           mask: Optional[np.ndarray] = None) -> Box3D:
    """Lift a 2D selection onto the cloud and fit an axis-aligned 3D box.

    Uses the 5th-95th percentile span per axis so depth outliers at object
    silhouettes do not blow up the box.
    """
    h, w = session.depth.shape
    if mask is not None:
        sel = np.asarray(mask, dtype=bool)
        if sel.shape != (h, w):
            raise ContractError(f"selection mask {sel.shape} vs image {(h, w)}")
    elif rect is not None:
        x0, y0, x1, y1 = rect
        sel = np.zeros((h, w), dtype=bool)
        xs = slice(int(np.clip(min(x0, x1), 0, w - 1)), int(np.clip(max(x0, x1), 0, w - 1)) + 1)
        ys = slice(int(np.clip(min(y0, y1), 0, h - 1)), int(np.clip(max(y0, y1), 0, h - 1)) + 1)
        sel[ys, xs] = True
    else:
        raise ContractError("selection: need a rectangle or a mask")

    chosen = sel & session.pixel_valid
    if chosen.sum() < 4:
        raise ContractError(f"selection covers {int(chosen.sum())} valid-depth pixels; need >= 4")
    uu, vv = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    z = session.depth[chosen].astype(np.float64)
    intr = session.intrinsics
    pts = np.stack([(uu[chosen] - intr.cx) * z / intr.fx,
                    (vv[chosen] - intr.cy) * z / intr.fy, z], axis=-1)
    lo = np.percentile(pts, 5, axis=0)
    hi = np.percentile(pts, 95, axis=0)
    center = (lo + hi) / 2.0
    half = np.maximum((hi - lo) / 2.0, 1e-3)
    return Box3D(center, half)


def materialize_spec(session: Session, panel: PanelParams, n_frames: int,
                     caption: str = "", seed: int = 0, n_points: int = 9) -> ControlSpec:
    """Freeze the session's draft state into a ControlSpec on disk paths."""
    trajectory = panel_trajectory(panel, session.anchor, n_frames, session.intrinsics)
    objects = []
    for oid in sorted(session.objects):
        so = session.objects[oid]
        keyframes = so.keyframes or [(1, so.box.center)]
        if keyframes[0][0] != 1:
            keyframes = [(1, so.box.center)] + list(keyframes)
        prompt = EntityPrompt(oid, so.label, vocab.label_index(so.label))
        objects.append(ControlObject(prompt, box=so.box, keyframes=list(keyframes)))
    if not caption:
        labels = " and ".join(f"a {session.objects[oid].label}" for oid in sorted(session.objects))
        caption = f"{labels} in a scene" if labels else "a static scene"
    return ControlSpec(
        reference_image=os.path.join(session.data_dir, "reference.png"),
        depth_map=os.path.join(session.data_dir, "depth.pfm"),
        intrinsics=session.intrinsics,
        num_frames=n_frames,
        camera=trajectory.poses,
        objects=objects,
        caption=caption,
        seed=seed,
    )


class JobCancelled(Exception):
    pass


@dataclass
class Job:
    job_id: str
    state: str = "queued"  # queued | running | done | failed
    progress: float = 0.0
    error: Optional[str] = None
    result_dir: Optional[str] = None
    n_frames: int = 0
    cancel_event: threading.Event = field(default_factory=threading.Event)
    lock: threading.Lock = field(default_factory=threading.Lock)

    def snapshot(self) -> dict:
        with self.lock:
            return {"job_id": self.job_id, "state": self.state,
                    "progress": round(self.progress, 4), "error": self.error,
                    "n_frames": self.n_frames}

    def _advance(self, state: str, error: Optional[str] = None) -> None:
        order = ["queued", "running", "done", "failed"]
        with self.lock:
            if order.index(state) < order.index(self.state):
                return  # states are monotone
            self.state = state
            if error:
                self.error = error

    def set_progress(self, fraction: float) -> None:
        with self.lock:
            self.progress = max(self.progress, float(fraction))


class JobManager:
    def __init__(self, data_dir: str, workers: int = 1):
        self.data_dir = data_dir
        self._jobs: Dict[str, Job] = {}
        self._pool = ThreadPoolExecutor(max_workers=workers)
        self._lock = threading.Lock()

    def get(self, job_id: str) -> Job:
        with self._lock:
            if job_id not in self._jobs:
                raise KeyError(job_id)
            return self._jobs[job_id]

    def submit_generate(self, spec: ControlSpec, checkpoint: str, steps: int) -> Job:
        job = Job(uuid.uuid4().hex[:12], n_frames=spec.num_frames)
        job.result_dir = os.path.join(self.data_dir, "jobs", job.job_id)
        with self._lock:
            self._jobs[job.job_id] = job
        if not os.path.exists(checkpoint):
            job._advance("running")
            job._advance("failed", f"missing checkpoint: {checkpoint}")
            return job

        def run():
            from ..dit.generation import generate
            job._advance("running")
            try:
                def cb(fraction):
                    if job.cancel_event.is_set():
                        raise JobCancelled()
                    job.set_progress(fraction)

                generate(spec, steps=steps, checkpoint=checkpoint,
                         out_dir=job.result_dir, progress_cb=cb)
                job.set_progress(1.0)
                job._advance("done")
            except JobCancelled:
                job._advance("failed", "cancelled")
            except Exception as exc:  # surfaced through the job API
                job._advance("failed", f"{type(exc).__name__}: {exc}")

        self._pool.submit(run)
        return job

    def cancel(self, job_id: str) -> Job:
        job = self.get(job_id)
        job.cancel_event.set()
        with job.lock:
            if job.state in ("queued", "running"):
                job.state = "failed"
                job.error = "cancelled"
        return job
