"""Compare the compiled ray-cast kernel against the numpy fallback.

Usage: python benchmarks/bench_raycast.py [--frames N]
"""

import argparse
import time
from pathlib import Path

from teletwin.raycast import CameraIntrinsics, look_at, render_hits, set_backend
from teletwin.scene import load_scene

SCENE = Path(__file__).resolve().parents[1] / "configs" / "scene_tube.toml"

RESOLUTIONS = [
    ("320x240", CameraIntrinsics(width=320, height=240, fx=300, fy=300, cx=160, cy=120)),
    ("640x480", CameraIntrinsics()),
    ("960x720", CameraIntrinsics(width=960, height=720, fx=900, fy=900, cx=480, cy=360)),
]


def bench(backend: str, intr: CameraIntrinsics, scene, pose, frames: int) -> float:
    set_backend(backend)
    render_hits(scene, pose, intr)  # warm-up
    t0 = time.perf_counter()
    for _ in range(frames):
        render_hits(scene, pose, intr)
    return (time.perf_counter() - t0) / frames


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--frames", type=int, default=10)
    args = parser.parse_args()

    scene = load_scene(SCENE)
    pose = look_at([0.22, -0.30, 0.20], [0.22, 0.22, 0.20])

    try:
        set_backend("compiled")
        have_compiled = True
    except ImportError:
        have_compiled = False
        print("compiled kernel not built; only timing the python fallback\n")

    print(f"{'resolution':<10} {'python':>12} {'compiled':>12} {'speedup':>9}")
    for label, intr in RESOLUTIONS:
        t_py = bench("python", intr, scene, pose, args.frames)
        if have_compiled:
            t_cy = bench("compiled", intr, scene, pose, args.frames)
            print(f"{label:<10} {t_py*1000:>9.2f} ms {t_cy*1000:>9.2f} ms "
                  f"{t_py/t_cy:>8.1f}x")
        else:
            print(f"{label:<10} {t_py*1000:>9.2f} ms {'-':>12} {'-':>9}")


if __name__ == "__main__":
    main()
