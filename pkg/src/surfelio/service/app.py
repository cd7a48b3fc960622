"""FastAPI application exposing the odometry pipeline over HTTP.

Sessions are in-memory pipelines keyed by id: create one, stream IMU rows
and scans into it, read back the trajectory and map.  Stateless helpers
(normal estimation, trajectory evaluation) take their whole input in one
request.  Every deliberate error maps to a 4xx with a plain-text detail.
"""

import base64
import binascii
import uuid

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..config import RunConfig, parse_config
from ..core import ImuSample
from ..errors import ServiceError, SurfelioError
from ..evaluate import ate_rmse, match_by_time
from ..formats import parse_trajectory_tum, scan_from_bytes
from ..pca_normals import angles_between, knn_pca_normals
from ..pipeline import OdometryPipeline
from ..ring_normals import build_structure_table, scan_normals
from .schemas import (CreateSessionRequest, CreateSessionResponse,
                      EvalRequest, EvalResponse, HealthResponse, ImuRequest,
                      ImuResponse, MapResponse, NormalsRequest,
                      NormalsResponse, NormalsScanResult, PoseEntry,
                      ScanRequest, ScanResponse, TrajectoryResponse)

_MAX_MAP_POINTS = 200_000


def _decode_scan(b64: str, what: str = "scan"):
    try:
        raw = base64.b64decode(b64, validate=True)
    except (binascii.Error, ValueError):
        raise ServiceError(f"{what}: invalid base64") from None
    return scan_from_bytes(raw, source=what)


def _imu_rows(rows) -> list[ImuSample]:
    samples = []
    for i, row in enumerate(rows):
        if len(row) != 7:
            raise ServiceError(f"imu row {i}: expected 7 values, got {len(row)}")
        samples.append(ImuSample(row[0], row[1:4], row[4:7]))
    return samples


def _pose_entry(timestamp, pose) -> PoseEntry:
    q = pose.rotation.quat
    p = pose.translation
    return PoseEntry(timestamp=timestamp, tx=p[0], ty=p[1], tz=p[2],
                     qx=q[1], qy=q[2], qz=q[3], qw=q[0])


def create_app() -> FastAPI:
    app = FastAPI(title="surfelio", version=__version__)
    sessions: dict[str, OdometryPipeline] = {}

    @app.exception_handler(SurfelioError)
    async def _surfelio_error(request: Request, exc: SurfelioError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    def get_session(session_id: str) -> OdometryPipeline:
        pipe = sessions.get(session_id)
        if pipe is None:
            raise HTTPException(status_code=404,
                                detail=f"unknown session '{session_id}'")
        return pipe

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(status="ok", version=__version__)

    @app.post("/sessions", response_model=CreateSessionResponse)
    def create_session(req: CreateSessionRequest):
        cfg = parse_config(req.config_text) if req.config_text.strip() \
            else RunConfig.default()
        session_id = uuid.uuid4().hex[:12]
        sessions[session_id] = OdometryPipeline(cfg)
        return CreateSessionResponse(session_id=session_id)

    @app.delete("/sessions/{session_id}")
    def delete_session(session_id: str):
        get_session(session_id)
        del sessions[session_id]
        return {"deleted": session_id}

    @app.post("/sessions/{session_id}/imu", response_model=ImuResponse)
    def add_imu(session_id: str, req: ImuRequest):
        pipe = get_session(session_id)
        return ImuResponse(added=pipe.add_imu(_imu_rows(req.samples)))

    @app.post("/sessions/{session_id}/scans", response_model=ScanResponse)
    def push_scan(session_id: str, req: ScanRequest):
        pipe = get_session(session_id)
        if req.imu:
            pipe.add_imu(_imu_rows(req.imu))
        scan = _decode_scan(req.scan_b64)
        result = pipe.process_scan(scan)
        return ScanResponse(pose=_pose_entry(result.timestamp, result.pose),
                            diagnostics=result.diagnostics)

    @app.get("/sessions/{session_id}/trajectory",
             response_model=TrajectoryResponse)
    def trajectory(session_id: str):
        pipe = get_session(session_id)
        entries = [_pose_entry(t, pose) for t, pose in pipe.trajectory]
        return TrajectoryResponse(entries=entries)

    @app.get("/sessions/{session_id}/map", response_model=MapResponse)
    def map_snapshot(session_id: str, max_points: int = _MAX_MAP_POINTS):
        pipe = get_session(session_id)
        pts, _ = pipe.map.retained_points()
        truncated = len(pts) > max_points
        if truncated:
            pts = pts[:max_points]
        return MapResponse(voxels=len(pipe.map),
                           retained_points=pipe.map.retained_count,
                           surfels=pipe.map.surfel_count(),
                           points=[[float(v) for v in p] for p in pts],
                           truncated=truncated)

    @app.post("/normals", response_model=NormalsResponse)
    def normals(req: NormalsRequest):
        scans = [_decode_scan(b, f"scan[{i}]")
                 for i, b in enumerate(req.scans_b64)]
        if not scans:
            raise ServiceError("no scans supplied")
        table = build_structure_table(scans, window=req.window,
                                      cond_cap=req.condition_cap)
        out = []
        for scan in scans:
            pn, _, _ = scan_normals(scan, table,
                                    min_occupancy=req.min_occupancy)
            valid = np.all(np.isfinite(pn), axis=1)
            entry = NormalsScanResult(
                points=len(scan), valid=int(valid.sum()),
                normals_b64=base64.b64encode(
                    pn.astype(np.float32).tobytes()).decode("ascii"))
            if req.oracle:
                ref = knn_pca_normals(scan.positions, k=req.oracle_k)
                ang = np.rad2deg(angles_between(pn[valid], ref[valid]))
                if len(ang):
                    entry.oracle_median_angle_deg = float(np.median(ang))
                    entry.oracle_mean_angle_deg = float(np.mean(ang))
            out.append(entry)
        return NormalsResponse(scans=out)

    @app.post("/eval", response_model=EvalResponse)
    def evaluate(req: EvalRequest):
        est = parse_trajectory_tum(req.estimate_tum)
        truth = parse_trajectory_tum(req.truth_tum)
        est_p, _ = match_by_time(est, truth, req.max_dt)
        rmse = ate_rmse(est, truth, req.max_dt)
        return EvalResponse(ate_rmse=rmse, matched_pairs=len(est_p))

    return app


app = create_app()
