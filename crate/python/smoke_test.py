"""Smoke test for the arthronav extension module.

Build first, e.g. `maturin develop -m crates/py/Cargo.toml --release`, then run
`python python/smoke_test.py`.
"""

import math
import tempfile
from pathlib import Path

import arthronav as an


def check(cond, what):
    if not cond:
        raise SystemExit(f"FAIL: {what}")
    print(f"ok: {what}")


def main():
    # distortion round trip
    coeffs = [-0.2, 0.05, 0.001, -0.002, 0.0]
    p = an.distort((0.2, -0.1), coeffs)
    q = an.undistort(p, coeffs)
    check(math.dist(q, (0.2, -0.1)) < 1e-8, "undistort inverts distort")

    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        script = an.standard_script(seed=5, frames=20, degraded=True)
        script["resolution"] = [128, 128]
        manifest = an.generate_sequence(script, tmp / "seq")
        check(isinstance(manifest, dict), "sequence generated")

        frame = an.Image.read_ppm(tmp / "seq" / "frames" / "000000.ppm")
        truth = an.Mask.read_pgm(tmp / "seq" / "masks" / "000000.pgm")
        check((frame.width, frame.height) == (128, 128), "frame size")
        check(len(frame.to_bytes()) == 128 * 128 * 3, "raw rgb bytes")

        mask = an.segment(frame)
        check(mask.iou(truth) > 0.95, f"first-frame segmentation iou {mask.iou(truth):.3f}")
        cx, cy = mask.centroid()
        check(0 <= cx < 128 and 0 <= cy < 128, "centroid inside the frame")

        session = an.TrackingSession(seed=7)
        _, diag = session.initialize(frame, mask, t=0)
        check(diag["working_len"] == 1, "initial frame stored")
        for t in range(1, 10):
            img = an.Image.read_ppm(tmp / "seq" / "frames" / f"{t:06d}.ppm")
            out, diag = session.track_frame(img, t)
        last = an.Mask.read_pgm(tmp / "seq" / "masks" / "000009.pgm")
        check(out.iou(last) > 0.8, f"tracked mask iou {out.iou(last):.3f}")
        check("store" in session.snapshot(), "snapshot")

        result = an.track_directory(tmp / "seq", outdir=tmp / "pred")
        check(result["summary"]["frames"] == 20, "directory tracking")
        report = an.evaluate_dirs(tmp / "pred", tmp / "seq")
        check(report["iou"]["mean"] > 0.8, f"evaluation mean iou {report['iou']['mean']:.3f}")

        rows = an.run_ablation(script, ["full", "single_level"])["rows"]
        check([r["variant"] for r in rows] == ["full", "single_level"], "ablation rows")

    cam = an.Camera.look_at(256, 256, [0.0, 0.0, -3.5], [0.0, 0.0, 0.0])
    u, v = cam.project([0.0, 0.0, 0.0])
    check(abs(u - 128) < 1e-9 and abs(v - 128) < 1e-9, "target projects to the principal point")

    side = an.Camera.look_at(256, 256, [-1.0, -0.85, -3.0], [-1.0, -0.85, 0.0]).to_json()
    grid = an.Grid.from_json(
        {"m": 4, "n": 4, "z0": 3.0, "blumensaat_length": 2.0, "height": 1.7, "camera_S": side}
    )
    pts = grid.project(cam)
    check(len(pts) == len(grid) == 16, "grid projection")

    try:
        an.TrackingSession(variant="bogus")
    except ValueError:
        print("ok: invalid variant raises ValueError")
    else:
        raise SystemExit("FAIL: invalid variant accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
