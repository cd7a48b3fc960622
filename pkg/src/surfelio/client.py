"""Thin client for the odometry service.

By default the client runs the service in-process (no sockets), which is
how the CLI works when no ``--server`` is given; pass a base URL to talk
to a running server instead.  All methods raise :class:`ServiceError`
with the server's detail message on any non-2xx response.
"""

import base64

import numpy as np

from .core import Pose, Rotation
from .errors import ServiceError
from .formats import Trajectory, scan_to_bytes
from .scan import RingScan


class OdometryClient:
    def __init__(self, base_url: str | None = None, http=None):
        if http is not None:
            self._http = http
        elif base_url:
            import httpx
            self._http = httpx.Client(base_url=base_url, timeout=600.0)
        else:
            from fastapi.testclient import TestClient
            from .service.app import create_app
            self._http = TestClient(create_app())

    def close(self) -> None:
        self._http.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _call(self, method: str, path: str, **kwargs):
        try:
            resp = self._http.request(method, path, **kwargs)
        except Exception as exc:  # connection refused, DNS, timeout, ...
            raise ServiceError(f"service unreachable: {exc}") from exc
        if resp.status_code >= 400:
            try:
                detail = resp.json().get("detail", resp.text)
            except ValueError:
                detail = resp.text
            raise ServiceError(f"{method} {path} -> {resp.status_code}: {detail}")
        return resp.json()

    # -- endpoints --

    def health(self) -> dict:
        return self._call("GET", "/health")

    def create_session(self, config_text: str = "") -> str:
        data = self._call("POST", "/sessions",
                          json={"config_text": config_text})
        return data["session_id"]

    def delete_session(self, session_id: str) -> None:
        self._call("DELETE", f"/sessions/{session_id}")

    def add_imu(self, session_id: str, samples) -> int:
        rows = [[float(s.timestamp), *map(float, s.angular_velocity),
                 *map(float, s.linear_acceleration)] for s in samples]
        data = self._call("POST", f"/sessions/{session_id}/imu",
                          json={"samples": rows})
        return data["added"]

    def push_scan(self, session_id: str, scan: RingScan) -> dict:
        payload = {"scan_b64": base64.b64encode(scan_to_bytes(scan)).decode()}
        return self._call("POST", f"/sessions/{session_id}/scans",
                          json=payload)

    def trajectory(self, session_id: str) -> Trajectory:
        data = self._call("GET", f"/sessions/{session_id}/trajectory")
        traj = Trajectory()
        for e in data["entries"]:
            quat = np.array([e["qw"], e["qx"], e["qy"], e["qz"]])
            traj.append(e["timestamp"],
                        Pose(Rotation(quat / np.linalg.norm(quat)),
                             (e["tx"], e["ty"], e["tz"])))
        return traj

    def map_snapshot(self, session_id: str, max_points: int | None = None) -> dict:
        params = {} if max_points is None else {"max_points": max_points}
        return self._call("GET", f"/sessions/{session_id}/map", params=params)

    def normals(self, scans, window: int = 5, min_occupancy: float = 0.6,
                condition_cap: float = 1e6, oracle: bool = False) -> list[dict]:
        payload = {
            "scans_b64": [base64.b64encode(scan_to_bytes(s)).decode()
                          for s in scans],
            "window": window, "min_occupancy": min_occupancy,
            "condition_cap": condition_cap, "oracle": oracle,
        }
        data = self._call("POST", "/normals", json=payload)
        out = []
        for entry in data["scans"]:
            raw = base64.b64decode(entry["normals_b64"])
            entry["normals"] = np.frombuffer(
                raw, dtype=np.float32).reshape(-1, 3).astype(np.float64)
            out.append(entry)
        return out

    def evaluate(self, estimate_tum: str, truth_tum: str,
                 max_dt: float = 0.010) -> dict:
        return self._call("POST", "/eval",
                          json={"estimate_tum": estimate_tum,
                                "truth_tum": truth_tum, "max_dt": max_dt})
