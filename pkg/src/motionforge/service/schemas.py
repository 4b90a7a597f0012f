"""Pydantic request/response models for the HTTP API."""

from __future__ import annotations

from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, Field


class IntrinsicsModel(BaseModel):
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int


class SessionCreateRequest(BaseModel):
    # one of: server-side paths, base64 payloads, or a synthetic fixture seed
    image_path: Optional[str] = None
    depth_path: Optional[str] = None
    image_b64: Optional[str] = None
    depth_b64: Optional[str] = None
    fixture_seed: Optional[int] = None
    intrinsics: Optional[IntrinsicsModel] = None
    idempotency_key: Optional[str] = None


class SessionCreateResponse(BaseModel):
    session_id: str
    width: int
    height: int
    intrinsics: IntrinsicsModel
    n_cloud_points: int
    image_png_b64: str


class SelectRequest(BaseModel):
    rect: Optional[Tuple[float, float, float, float]] = None
    mask_b64: Optional[str] = None
    label: str = "red cube"
    idempotency_key: Optional[str] = None


class Box3DModel(BaseModel):
    center: Tuple[float, float, float]
    half_extents: Tuple[float, float, float]


class SelectResponse(BaseModel):
    object_id: int
    label: str
    box: Box3DModel


class PanelModel(BaseModel):
    distance: float = 1.0
    elevation: float = 0.0
    azimuth: float = 0.0
    offset_x: float = 0.0
    offset_y: float = 0.0
    offset_z: float = 0.0


class KeyframeModel(BaseModel):
    object_id: int
    frame: int = Field(ge=1)
    center: Tuple[float, float, float]


class PreviewRequest(BaseModel):
    panel: PanelModel = PanelModel()
    n_frames: int = 17
    max_frames: int = 8
    keyframes: List[KeyframeModel] = []
    idempotency_key: Optional[str] = None


class BoxOverlayModel(BaseModel):
    object_id: int
    boxes: List[Tuple[float, float, float, float]]
    visibility: List[bool]


class PreviewResponse(BaseModel):
    frame_indices: List[int]
    frames_png_b64: List[str]
    boxes: List[BoxOverlayModel]


class SpecExportRequest(BaseModel):
    panel: PanelModel = PanelModel()
    n_frames: int = 17
    keyframes: List[KeyframeModel] = []
    caption: str = ""
    seed: int = 0
    idempotency_key: Optional[str] = None


class GenerateRequest(BaseModel):
    session_id: Optional[str] = None
    spec: Optional[dict] = None  # full mf-1 spec document (alternative to session)
    panel: PanelModel = PanelModel()
    n_frames: int = 17
    keyframes: List[KeyframeModel] = []
    checkpoint: str
    steps: int = Field(default=20, ge=1)
    seed: int = 0
    idempotency_key: Optional[str] = None


class JobModel(BaseModel):
    job_id: str
    state: str
    progress: float
    error: Optional[str] = None
    n_frames: int


class PanelRangesResponse(BaseModel):
    ranges: Dict[str, Tuple[float, float]]
