"""Pydantic request/response models for the HTTP service.

Rasters travel as base64-encoded PFM blobs: grayscale or color images
as 'Pf'/'PF', disparity maps as 'Pf' with +Inf marking invalid pixels.
Non-finite metric values (empty evaluation regions) serialize as null.
"""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field


class MatchRequest(BaseModel):
    left_pfm: str
    right_pfm: str
    d_max: int = Field(gt=0)
    mode: Literal["F", "H", "Q"] = "F"
    budget_ms: float | None = None
    config_text: str | None = Field(
        default=None, description="key=value decoder config overriding the tuned default"
    )
    threads: int = Field(default=1, ge=1)


class StageOut(BaseModel):
    stage: int
    level_index: int
    elapsed_ms: float
    work_cells: int
    disparity_pfm: str


class MatchResponse(BaseModel):
    stages: list[StageOut]
    d_max: int
    mode: str


class EvalRequest(BaseModel):
    pred_pfm: str
    gt_pfm: str
    baseline: float | None = Field(default=None, gt=0, description="meters")
    focal: float | None = Field(default=None, gt=0, description="pixels")
    taus: list[float] = [1.0, 2.0, 4.0]


class RangeMetrics(BaseModel):
    bad: dict[str, float]
    avgerr: float
    rms: float
    quantiles: dict[str, float]
    n_valid: int


class EvalResponse(BaseModel):
    ranges: dict[str, RangeMetrics]
    csv: str


class AugmentRequest(BaseModel):
    left_pfm: str
    right_pfm: str
    seed: int = 0
    preset: Literal["identity", "training", "sweep"] = "training"


class AugmentResponse(BaseModel):
    left_pfm: str
    right_pfm: str
    spec: dict


class SynthRequest(BaseModel):
    kind: Literal["constant", "plane", "step", "two_plane"]
    height: int = Field(default=512, ge=64)
    width: int = Field(default=640, ge=64)
    seed: int = 0
    params: dict[str, float] = {}


class SynthResponse(BaseModel):
    left_pfm: str
    right_pfm: str
    gt_pfm: str
    descriptor: dict


class HealthResponse(BaseModel):
    status: str
    version: str
