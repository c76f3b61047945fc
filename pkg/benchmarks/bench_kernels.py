"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N] [--size S]

Each workload runs on every available backend; outputs are compared so a
speedup never hides a divergence.
"""

import argparse
import time

import numpy as np

from selfiegen import _backend, renderer, segmap, volumesh


def sphere_volume(n):
    g = np.indices((n, n, n)).astype(np.float64)
    c = (n - 1) / 2.0
    density = 0.3 * n - np.sqrt(((g - c) ** 2).sum(axis=0))
    return volumesh.DensityVolume.from_density(density)


def workloads(size):
    vol = sphere_volume(96)
    mesh = volumesh.marching_cubes(vol, 0.0)
    mesh.colors[:] = 0.8
    cam = renderer.Camera(distance=3.0 * 96, focal_f0=1.0, image_size=size, subject_center=vol.center())
    labels = np.zeros((size, size), dtype=np.int64)
    rng = np.random.default_rng(0)
    for k in range(1, 12):
        y0, x0 = rng.integers(0, size - 64, 2)
        labels[y0:y0 + rng.integers(16, 160), x0:x0 + rng.integers(16, 160)] = k
    return {
        "marching_cubes 96^3": lambda: volumesh.marching_cubes(vol, 0.0).triangles,
        f"rasterize_phong {size}^2 ({mesh.n_triangles} tris)": lambda: renderer.rasterize_phong(mesh, cam).rgb,
        f"canny_from_semantic {size}^2": lambda: segmap.canny_from_semantic(labels),
    }


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--size", type=int, default=512)
    args = ap.parse_args()

    backends = _backend.available()
    print(f"backends: {', '.join(backends)}")
    header = f"{'workload':<48}" + "".join(f"{b:>12}" for b in backends)
    if len(backends) > 1:
        header += f"{'speedup':>10}{'equal':>8}"
    print(header)
    for name, fn in workloads(args.size).items():
        times, outs = [], []
        for b in backends:
            prev = _backend.use(b)
            try:
                t, out = best_of(fn, args.repeat)
            finally:
                _backend.use(prev)
            times.append(t)
            outs.append(out)
        row = f"{name:<48}" + "".join(f"{t * 1e3:>10.1f}ms" for t in times)
        if len(backends) > 1:
            same = all(np.array_equal(outs[0], o) for o in outs[1:])
            row += f"{times[-1] / times[0]:>9.1f}x{str(same):>8}"
        print(row)


if __name__ == "__main__":
    main()
