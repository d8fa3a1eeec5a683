"""Compare the compiled raycaster against the pure-Python fallback.

Renders the same deterministic pose sweep through both backends, checks the
frames are bit-identical, and reports per-frame timings.  Run from a checkout:

    python3 benchmarks/bench_kernels.py --frames 200 --size 42
"""

import argparse
import sys
import time

import numpy as np

from clustercount import _raycast_py
from clustercount.envsim import generate
from clustercount.rng import np_generator

try:
    from clustercount import _raycast
except ImportError:
    _raycast = None


def pose_sweep(spec, n_frames: int, seed: int):
    """Deterministic random walk over free space, one pose per frame."""
    rng = np_generator(seed, "bench-poses")
    free = np.argwhere(spec.occupancy == 0)
    poses = []
    for _ in range(n_frames):
        r, c = free[rng.integers(0, free.shape[0])]
        x = float(c) + float(rng.uniform(0.2, 0.8))
        y = float(r) + float(rng.uniform(0.2, 0.8))
        heading = float(rng.uniform(0.0, 360.0))
        poses.append((x, y, heading))
    return poses


def run_backend(impl, spec, poses, height: int, width: int):
    occ = np.ascontiguousarray(spec.occupancy, dtype=np.uint8)
    tex = np.ascontiguousarray(spec.texgrid, dtype=np.int32)
    pal = np.ascontiguousarray(spec.palettes, dtype=np.float64)
    out = np.empty((height, width, 3), dtype=np.float32)
    frames = np.empty((len(poses), height, width, 3), dtype=np.float32)
    t0 = time.perf_counter()
    for i, (x, y, heading) in enumerate(poses):
        agent_tex = int(tex[int(y), int(x)])
        impl.render_columns(occ, tex, pal, x, y, heading, 66.0, agent_tex, out)
        frames[i] = out
    elapsed = time.perf_counter() - t0
    return frames, elapsed


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--frames", type=int, default=200)
    parser.add_argument("--size", type=int, default=42, help="frame height and width")
    parser.add_argument("--rooms", type=int, default=9)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args(argv)

    spec = generate(args.seed, n_rooms=args.rooms, room_size=5,
                    episode_length=100, frame_skip=1,
                    move_quantum=0.25, turn_quantum=90.0)
    poses = pose_sweep(spec, args.frames, args.seed)

    pure_frames, pure_s = run_backend(_raycast_py, spec, poses, args.size, args.size)
    print(f"pure     {args.frames} frames in {pure_s:.3f}s "
          f"({1e3 * pure_s / args.frames:.2f} ms/frame)")

    if _raycast is None:
        print("compiled backend not built; nothing to compare")
        return 0

    comp_frames, comp_s = run_backend(_raycast, spec, poses, args.size, args.size)
    print(f"compiled {args.frames} frames in {comp_s:.3f}s "
          f"({1e3 * comp_s / args.frames:.2f} ms/frame)")
    print(f"speedup  {pure_s / comp_s:.1f}x")

    if not np.array_equal(pure_frames, comp_frames):
        bad = int(np.sum(np.any(pure_frames != comp_frames, axis=(1, 2, 3))))
        print(f"MISMATCH: {bad} of {args.frames} frames differ", file=sys.stderr)
        return 1
    print("frames bit-identical across backends")
    return 0


if __name__ == "__main__":
    sys.exit(main())
