"""HTTP service tests against the in-process FastAPI app."""

import base64

import numpy as np
import pytest
from fastapi.testclient import TestClient

from surfelio.formats import Trajectory, format_trajectory_tum, scan_to_bytes
from surfelio.service.app import create_app


@pytest.fixture()
def client():
    return TestClient(create_app())


def b64_scan(scan) -> str:
    return base64.b64encode(scan_to_bytes(scan)).decode("ascii")


def imu_rows(samples):
    return [[s.timestamp, *s.angular_velocity, *s.linear_acceleration]
            for s in samples]


def test_health(client):
    r = client.get("/health")
    assert r.status_code == 200
    body = r.json()
    assert body["status"] == "ok"
    assert body["version"]


def test_session_lifecycle(client):
    r = client.post("/sessions", json={})
    assert r.status_code == 200
    sid = r.json()["session_id"]

    r = client.get(f"/sessions/{sid}/trajectory")
    assert r.status_code == 200 and r.json()["entries"] == []

    assert client.delete(f"/sessions/{sid}").status_code == 200
    assert client.get(f"/sessions/{sid}/trajectory").status_code == 404
    assert client.delete(f"/sessions/{sid}").status_code == 404


def test_bad_config_rejected(client):
    r = client.post("/sessions", json={"config_text": "voxel_size=-1"})
    assert r.status_code == 400
    assert "voxel_size" in r.json()["detail"]


def test_odometry_roundtrip(client, corner_fixture):
    fx = corner_fixture
    r = client.post("/sessions", json={"config_text": "table_scans=3"})
    sid = r.json()["session_id"]

    r = client.post(f"/sessions/{sid}/imu",
                    json={"samples": imu_rows(fx.imu)})
    assert r.status_code == 200
    assert r.json()["added"] == len(fx.imu)

    poses = []
    for scan in fx.scans[:6]:
        r = client.post(f"/sessions/{sid}/scans",
                        json={"scan_b64": b64_scan(scan)})
        assert r.status_code == 200, r.text
        body = r.json()
        assert body["diagnostics"]["status"] in ("bootstrap", "updated")
        poses.append(body["pose"])

    # static scene: pose stays near the origin
    assert abs(poses[-1]["tx"]) < 0.02 and abs(poses[-1]["tz"]) < 0.02

    r = client.get(f"/sessions/{sid}/trajectory")
    entries = r.json()["entries"]
    assert len(entries) == 6
    assert entries[-1] == poses[-1]

    r = client.get(f"/sessions/{sid}/map")
    body = r.json()
    assert body["voxels"] > 0
    assert body["retained_points"] == len(body["points"])
    assert not body["truncated"]

    r = client.get(f"/sessions/{sid}/map", params={"max_points": 5})
    body = r.json()
    assert body["truncated"] and len(body["points"]) == 5


def test_scan_with_inline_imu(client, corner_fixture):
    fx = corner_fixture
    sid = client.post("/sessions", json={}).json()["session_id"]
    rows = imu_rows(fx.imu)
    r = client.post(f"/sessions/{sid}/scans",
                    json={"scan_b64": b64_scan(fx.scans[0]), "imu": rows})
    assert r.status_code == 200
    assert r.json()["diagnostics"]["status"] == "bootstrap"


def test_scan_error_paths(client, corner_fixture):
    sid = client.post("/sessions", json={}).json()["session_id"]
    r = client.post(f"/sessions/{sid}/scans", json={"scan_b64": "!!!"})
    assert r.status_code == 400 and "base64" in r.json()["detail"]

    bogus = base64.b64encode(b"NOPE" + bytes(60)).decode("ascii")
    r = client.post(f"/sessions/{sid}/scans", json={"scan_b64": bogus})
    assert r.status_code == 400 and "magic" in r.json()["detail"].lower()

    # scan without any IMU to propagate against
    r = client.post(f"/sessions/{sid}/scans",
                    json={"scan_b64": b64_scan(corner_fixture.scans[0])})
    assert r.status_code == 400

    r = client.post(f"/sessions/{sid}/imu", json={"samples": [[0.0, 1.0]]})
    assert r.status_code == 400 and "7 values" in r.json()["detail"]


def test_normals_endpoint(client, corner_fixture):
    scans = corner_fixture.scans[:2]
    r = client.post("/normals", json={"scans_b64": [b64_scan(s) for s in scans],
                                      "oracle": True})
    assert r.status_code == 200
    body = r.json()
    assert len(body["scans"]) == 2
    for entry, scan in zip(body["scans"], scans):
        assert entry["points"] == len(scan)
        assert 0 < entry["valid"] <= entry["points"]
        raw = base64.b64decode(entry["normals_b64"])
        normals = np.frombuffer(raw, dtype=np.float32).reshape(-1, 3)
        assert len(normals) == entry["points"]
        valid = np.all(np.isfinite(normals), axis=1)
        assert int(valid.sum()) == entry["valid"]
        np.testing.assert_allclose(np.linalg.norm(normals[valid], axis=1),
                                   1.0, atol=1e-5)
        assert entry["oracle_median_angle_deg"] < 10.0

    r = client.post("/normals", json={"scans_b64": []})
    assert r.status_code == 400


def test_eval_endpoint(client):
    rng = np.random.default_rng(7)
    truth = Trajectory()
    est = Trajectory()
    from surfelio.core import Pose, Rotation
    for i in range(50):
        t = 0.1 * i
        p = np.array([np.cos(t), np.sin(t), 0.1 * t])
        pose = Pose(Rotation.identity(), p)
        truth.append(t, pose)
        est.append(t, Pose(Rotation.identity(), p + rng.normal(0, 0.01, 3)))
    r = client.post("/eval", json={"estimate_tum": format_trajectory_tum(est),
                                   "truth_tum": format_trajectory_tum(truth)})
    assert r.status_code == 200
    body = r.json()
    assert body["matched_pairs"] == 50
    assert 0 < body["ate_rmse"] < 0.05

    r = client.post("/eval", json={"estimate_tum": "not a trajectory",
                                   "truth_tum": format_trajectory_tum(truth)})
    assert r.status_code == 400
