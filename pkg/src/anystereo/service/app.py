"""FastAPI app exposing the matcher, evaluation, augmentation and synthesis.

The service is a thin wrapper over the package: every endpoint decodes
PFM blobs, calls the same functions the CLI uses, and encodes results
back.  Malformed payloads and config errors return 400 with the
underlying message.
"""

from __future__ import annotations

import base64
import binascii

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import __version__
from ..augment import apply_spec, identity_spec, sample_spec, spec_to_dict, SWEEP_RANGES
from ..config import ConfigError, MatcherConfig, config_from_text, tuned_decoder_config
from ..evaluation import compute_metrics, evaluate_protocol, metrics_csv
from ..pipeline import match
from ..raster_io import DisparityMap, FormatError, Image, read_pfm, write_pfm
from ..synthetic import generate
from .schemas import (
    AugmentRequest,
    AugmentResponse,
    EvalRequest,
    EvalResponse,
    HealthResponse,
    MatchRequest,
    MatchResponse,
    RangeMetrics,
    StageOut,
    SynthRequest,
    SynthResponse,
)

app = FastAPI(title="anystereo", version=__version__)

_CLIENT_ERRORS = (ConfigError, FormatError, ValueError)


def _decode_blob(b64: str, what: str) -> bytes:
    try:
        return base64.b64decode(b64, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise HTTPException(400, f"{what}: invalid base64 ({exc})")


def _decode_image(b64: str, what: str) -> Image:
    raster = read_pfm(_decode_blob(b64, what))
    if isinstance(raster, DisparityMap):
        if not raster.valid.all():
            raise HTTPException(400, f"{what}: image payload has non-finite pixels")
        return Image(raster.disparity, pfm_scale=raster.pfm_scale)
    return raster


def _decode_disparity(b64: str, what: str) -> DisparityMap:
    raster = read_pfm(_decode_blob(b64, what))
    if not isinstance(raster, DisparityMap):
        raise HTTPException(400, f"{what}: expected a single-channel 'Pf' raster")
    return raster


def _encode(raster) -> str:
    return base64.b64encode(write_pfm(raster)).decode("ascii")


def _metrics_out(m) -> RangeMetrics:
    return RangeMetrics(
        bad={f"{t:g}": v for t, v in m.bad.items()},
        avgerr=m.avgerr,
        rms=m.rms,
        quantiles={f"{q:g}": v for q, v in m.quantiles.items()},
        n_valid=m.n_valid,
    )


@app.get("/health", response_model=HealthResponse)
def health() -> HealthResponse:
    return HealthResponse(status="ok", version=__version__)


@app.post("/match", response_model=MatchResponse)
def match_endpoint(req: MatchRequest) -> MatchResponse:
    left = _decode_image(req.left_pfm, "left_pfm")
    right = _decode_image(req.right_pfm, "right_pfm")
    decoder = tuned_decoder_config()
    strides = None
    try:
        if req.config_text is not None:
            decoder, strides = config_from_text(req.config_text)
        kwargs = dict(
            d_max=req.d_max,
            input_mode=req.mode,
            decoder=decoder,
            threads=req.threads,
        )
        if strides is not None:
            kwargs["strides"] = strides
        cfg = MatcherConfig(**kwargs)
        cfg.validate()
        reports = match(left, right, cfg, budget_ms=req.budget_ms)
    except _CLIENT_ERRORS as exc:
        raise HTTPException(400, str(exc))
    stages = [
        StageOut(
            stage=rep.stage,
            level_index=rep.level_index,
            elapsed_ms=rep.elapsed_ms,
            work_cells=rep.work_cells,
            disparity_pfm=_encode(rep.disparity),
        )
        for rep in reports
    ]
    return MatchResponse(stages=stages, d_max=req.d_max, mode=req.mode)


@app.post("/eval", response_model=EvalResponse)
def eval_endpoint(req: EvalRequest) -> EvalResponse:
    pred = _decode_disparity(req.pred_pfm, "pred_pfm")
    gt = _decode_disparity(req.gt_pfm, "gt_pfm")
    taus = tuple(req.taus)
    try:
        if req.baseline is not None and req.focal is not None:
            ranges = evaluate_protocol(pred, gt, req.baseline, req.focal, taus).ranges
        else:
            ranges = {"All": compute_metrics(pred, gt, taus)}
        csv_text = metrics_csv(ranges, taus)
    except _CLIENT_ERRORS as exc:
        raise HTTPException(400, str(exc))
    return EvalResponse(
        ranges={name: _metrics_out(m) for name, m in ranges.items()}, csv=csv_text
    )


@app.post("/augment", response_model=AugmentResponse)
def augment_endpoint(req: AugmentRequest) -> AugmentResponse:
    left = _decode_image(req.left_pfm, "left_pfm")
    right = _decode_image(req.right_pfm, "right_pfm")
    try:
        if req.preset == "identity":
            spec = identity_spec(req.seed)
        elif req.preset == "training":
            spec = sample_spec(req.seed, (left.height, left.width))
        else:
            spec = sample_spec(req.seed, (left.height, left.width), ranges=SWEEP_RANGES)
        out_l, out_r = apply_spec(left, right, spec)
    except _CLIENT_ERRORS as exc:
        raise HTTPException(400, str(exc))
    return AugmentResponse(
        left_pfm=_encode(out_l), right_pfm=_encode(out_r), spec=spec_to_dict(spec)
    )


@app.post("/synth", response_model=SynthResponse)
def synth_endpoint(req: SynthRequest) -> SynthResponse:
    try:
        scene = generate(
            req.kind, hw=(req.height, req.width), seed=req.seed, **req.params
        )
    except (_CLIENT_ERRORS + (TypeError,)) as exc:
        raise HTTPException(400, str(exc))
    descriptor = {
        k: (v.item() if isinstance(v, np.generic) else v)
        for k, v in scene.descriptor.items()
    }
    return SynthResponse(
        left_pfm=_encode(scene.left),
        right_pfm=_encode(scene.right),
        gt_pfm=_encode(scene.gt),
        descriptor=descriptor,
    )
