"""Compare the compiled and numpy element kernels.

    python benchmarks/bench_kernels.py [--h 0.01] [--repeat 5]

Both backends are run on the same mesh and field; results are checked for
agreement before timings are printed.
"""

import argparse
import timeit

import numpy as np

from wulff_lab import kernels
from wulff_lab.cones import ConeSpec
from wulff_lab.finsler import NormSpec
from wulff_lab.mesh import generate_mesh


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--h", type=float, default=0.01)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    norms = {"euclidean": NormSpec.euclidean(),
             "ellipse": NormSpec.ellipse([[4.0, 0.0], [0.0, 1.0]]),
             "smoothed-q": NormSpec.smoothed_q(4.0, 0.2)}
    mesh = generate_mesh(ConeSpec.full(), NormSpec.euclidean(), 1.0, args.h)
    r2 = np.sum(mesh.vertices**2, axis=1)
    u = (1.0 - r2) / 4.0 + 0.01 * np.sin(5.0 * mesh.vertices[:, 0])
    W = mesh.areas
    print(f"mesh: {mesh.n_vertices} vertices, {len(mesh.triangles)} triangles")
    try:
        kernels.backend_module("cython")
        backends = ["cython", "python"]
    except ImportError:
        print("compiled kernels not built; timing the numpy backend only")
        backends = ["python"]

    print(f"{'kernel':<28}{'backend':<10}{'best ms':>10}")
    for name, H in norms.items():
        code, prm = H.kernel_code()
        ref = None
        times = {}
        for be in backends:
            def run():
                return kernels.psi_energy_grad(mesh.triangles, mesh.dphi, W, u, code, prm,
                                               3.0, 1e-3, backend=be)
            e, g = run()
            if ref is None:
                ref = (e, g)
            else:
                assert abs(e - ref[0]) <= 1e-12 * abs(ref[0])
                assert np.allclose(g, ref[1], rtol=1e-10, atol=1e-14)
            times[be] = min(timeit.repeat(run, number=1, repeat=args.repeat))
            print(f"{'psi_energy_grad/' + name:<28}{be:<10}{1e3 * times[be]:>10.2f}")
        if len(times) == 2:
            print(f"{'':<28}{'speedup':<10}{times['python'] / times['cython']:>10.1f}x")

    times = {}
    for be in backends:
        def run():
            return kernels.level_crossings(mesh.triangles, mesh.tri_edges, mesh.edges,
                                           mesh.vertices, u, 0.1, backend=be)
        run()
        times[be] = min(timeit.repeat(run, number=1, repeat=args.repeat))
        print(f"{'level_crossings':<28}{be:<10}{1e3 * times[be]:>10.2f}")
    if len(times) == 2:
        print(f"{'':<28}{'speedup':<10}{times['python'] / times['cython']:>10.1f}x")


if __name__ == "__main__":
    main()
