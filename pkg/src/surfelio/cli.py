"""Command-line interface.

Everything that operates on recorded data (normals, odom, eval) goes
through the HTTP service via :class:`OdometryClient` — in-process by
default, or against a running server with ``--server URL``.  Data
generation (sim) and timing (bench) run locally: shipping synthetic
scans or wall-clock measurements through HTTP would only add noise.

Exit codes: 0 success, 1 any handled failure, 2 usage errors.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bench import format_table, time_stages
from .client import OdometryClient
from .config import default_config_text, load_config, RunConfig
from .errors import SurfelioError
from .formats import (Trajectory, read_imu_csv, read_scan_file,
                      write_diagnostics, write_imu_csv, write_scan_file,
                      write_trajectory_tum)


def _scan_paths(directory: str) -> list[Path]:
    paths = sorted(Path(directory).glob("*.rscn"))
    if not paths:
        raise SurfelioError(f"no .rscn files in {directory}")
    return paths


def _load_cfg(path: str | None) -> RunConfig:
    return load_config(path) if path else RunConfig.default()


def _cmd_sim(args) -> int:
    from .simulator import generate_fixture
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        data = generate_fixture(args.fixture, seed=args.seed)
    except KeyError as exc:
        raise SurfelioError(str(exc.args[0])) from None
    for i, scan in enumerate(data.scans):
        write_scan_file(out / f"scan_{i:05d}.rscn", scan)
    write_imu_csv(out / "imu.csv", data.imu)
    truth = Trajectory(zip(data.gt_times, data.gt_poses))
    write_trajectory_tum(out / "groundtruth.tum", truth)
    (out / "config.txt").write_text(default_config_text())
    print(f"wrote {len(data.scans)} scans, {len(data.imu)} imu samples, "
          f"ground truth to {out}")
    return 0


def _cmd_normals(args) -> int:
    cfg = _load_cfg(args.config)
    paths = _scan_paths(args.scans)
    scans = [read_scan_file(p) for p in paths]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with OdometryClient(args.server) as client:
        results = client.normals(scans, window=cfg.normal_window,
                                 min_occupancy=cfg.min_occupancy,
                                 condition_cap=cfg.condition_cap,
                                 oracle=args.oracle)
    medians = []
    for path, entry in zip(paths, results):
        dest = out / (path.stem + ".normals.txt")
        with open(dest, "w") as fh:
            for row in entry["normals"]:
                fh.write("%.9g %.9g %.9g\n" % tuple(row))
        line = f"{path.name}: {entry['valid']}/{entry['points']} normals"
        if args.oracle and entry.get("oracle_median_angle_deg") is not None:
            line += (f", vs oracle median {entry['oracle_median_angle_deg']:.3f}"
                     f" deg, mean {entry['oracle_mean_angle_deg']:.3f} deg")
            medians.append(entry["oracle_median_angle_deg"])
        print(line)
    if medians:
        print(f"overall median angular error: {np.median(medians):.3f} deg")
    return 0


def _cmd_odom(args) -> int:
    cfg_text = Path(args.config).read_text() if args.config else ""
    if args.config:
        load_config(args.config)  # validate before shipping to the service
    paths = _scan_paths(args.scans)
    imu = read_imu_csv(args.imu)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    diagnostics = []
    with OdometryClient(args.server) as client:
        session = client.create_session(cfg_text)
        try:
            client.add_imu(session, imu)
            for path in paths:
                result = client.push_scan(session, read_scan_file(path))
                diagnostics.append(result["diagnostics"])
            traj = client.trajectory(session)
        finally:
            client.delete_session(session)
    write_trajectory_tum(out / "estimate.tum", traj)
    write_diagnostics(out / "diagnostics.jsonl", diagnostics)
    updated = sum(1 for d in diagnostics if d["status"] == "updated")
    print(f"processed {len(paths)} scans ({updated} updated) -> "
          f"{out / 'estimate.tum'}")
    return 0


def _cmd_eval(args) -> int:
    est_text = Path(args.est).read_text()
    gt_text = Path(args.gt).read_text()
    with OdometryClient(args.server) as client:
        result = client.evaluate(est_text, gt_text, max_dt=args.max_dt)
    print(f"ATE RMSE: {result['ate_rmse']:.3f} m "
          f"({result['matched_pairs']} matched poses)")
    return 0


def _cmd_bench(args) -> int:
    cfg = _load_cfg(args.config)
    scans = [read_scan_file(p) for p in _scan_paths(args.scans)]
    results = time_stages(scans, window=cfg.normal_window,
                          min_occupancy=cfg.min_occupancy,
                          cond_cap=cfg.condition_cap)
    print(format_table(results))
    return 0


def _cmd_serve(args) -> int:
    import uvicorn
    from .service.app import create_app
    uvicorn.run(create_app(), host=args.host, port=args.port)
    return 0


def _cmd_config(args) -> int:
    print(default_config_text(), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="surfelio",
        description="LiDAR-inertial odometry with range-image normals "
                    "and a surfel voxel map")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sim", help="generate a synthetic dataset")
    p.add_argument("--fixture", required=True,
                   help="corridor-60s | openfield-sparse | corner-room")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_sim)

    p = sub.add_parser("normals", help="estimate per-point normals")
    p.add_argument("--scans", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--oracle", action="store_true",
                   help="also run the kNN-PCA baseline and report errors")
    p.add_argument("--server", default=None)
    p.set_defaults(func=_cmd_normals)

    p = sub.add_parser("odom", help="run odometry over a recorded sequence")
    p.add_argument("--scans", required=True)
    p.add_argument("--imu", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--server", default=None)
    p.set_defaults(func=_cmd_odom)

    p = sub.add_parser("eval", help="compare a trajectory against truth")
    p.add_argument("--est", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--max-dt", type=float, default=0.010)
    p.add_argument("--server", default=None)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("bench", help="time the normal-estimation stages")
    p.add_argument("--scans", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("config", help="print the default configuration")
    p.set_defaults(func=_cmd_config)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SurfelioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
