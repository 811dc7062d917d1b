"""Time the compiled and pure-Python kernels on the same workloads.

    python benchmarks/bench_kernels.py [--rays 20000] [--repeat 3]

Prints one line per workload with both timings, the speedup and the
largest difference between the two results.
"""
import argparse
import time

import numpy as np

from momray import backend
from momray import symtensor as st
from momray.fields import BlobField, GridSpec
from momray.inversion import invert_scalar_xray
from momray.raytransform import field_moments, parallel_beam


def _best(func, repeat):
    best, out = np.inf, None
    for _ in range(repeat):
        t = time.perf_counter()
        out = func()
        best = min(best, time.perf_counter() - t)
    return best, out


def workloads(n_rays, rng):
    n, m = 2, 2
    nc = st.component_count(m, n)
    blob = BlobField(m, n, rng.uniform(-0.3, 0.3, (4, n)), np.full(4, 0.3), rng.standard_normal((4, nc)),
                     0.5 * rng.standard_normal((4, n, nc)))
    R = blob.support_radius
    X = rng.uniform(-0.5, 0.5, (n_rays, n)) * R
    XI = rng.standard_normal((n_rays, n))
    grid_field = blob.sample(GridSpec.covering(n, R, 96))
    rays, phis, offsets = parallel_beam(180, 129, R)
    sino = field_moments([BlobField(0, n, blob.centers, blob.widths, blob.amps[:, :1])], rays.X, rays.XI, 0)[0]
    pts = GridSpec.covering(2, R, 96).nodes().reshape(-1, 2)
    return {
        f"blob moments, {n_rays} rays, K=2": lambda k: field_moments([blob], X, XI, 2, kernels=k),
        f"grid moments, {n_rays} rays, K=2": lambda k: field_moments([grid_field], X, XI, 2, kernels=k),
        "filtered backprojection, 180x129 -> 96^2": lambda k: invert_scalar_xray(
            sino.reshape(180, 129), phis, offsets, pts, kernels=k),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--rays", type=int, default=20000)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()
    try:
        compiled = backend.get_kernels("compiled")
    except RuntimeError:
        raise SystemExit("compiled kernels are not built; run `pip install -e . --no-build-isolation`")
    python = backend.get_kernels("python")
    print(f"{'workload':<44} {'compiled s':>11} {'python s':>10} {'speedup':>8} {'max diff':>10}")
    for name, run in workloads(args.rays, np.random.default_rng(0)).items():
        tc, vc = _best(lambda: run(compiled), args.repeat)
        tp, vp = _best(lambda: run(python), args.repeat)
        diff = float(np.max(np.abs(np.asarray(vc) - np.asarray(vp))))
        print(f"{name:<44} {tc:>11.4f} {tp:>10.4f} {tp / tc:>8.1f} {diff:>10.2e}")


if __name__ == "__main__":
    main()
