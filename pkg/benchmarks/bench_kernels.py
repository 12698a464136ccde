"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from anchorlab import _pykernels

try:
    from anchorlab import _ckernels
except ImportError:
    _ckernels = None


def _boxes(rng, n):
    xy = rng.uniform(0, 1000, (n, 2))
    wh = rng.uniform(10, 200, (n, 2))
    return np.hstack([xy, xy + wh])


def cases(rng):
    a, b = _boxes(rng, 500), _boxes(rng, 500)
    dets = _boxes(rng, 2000)
    order = np.argsort(-rng.random(2000), kind="stable")
    pts = rng.uniform(5, 400, (20000, 2))
    cents = rng.uniform(5, 400, (9, 2))
    grid = rng.random((38, 125, 64))
    return {
        "iou_matrix 500x500": lambda m: m.iou_matrix(a, b),
        "nms_keep 2000": lambda m: m.nms_keep(dets, order, 0.5),
        "nearest_centroids 20000x9": lambda m: m.nearest_centroids(pts, cents),
        "roi_max_pool 7x7x64": lambda m: m.roi_max_pool(grid, 10.3, 4.2, 60.8, 30.1, 7, 7),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    backends = [("numpy", _pykernels)] + ([("cython", _ckernels)] if _ckernels else [])
    print(f"{'kernel':28s}" + "".join(f"{name:>12s}" for name, _ in backends) + ("     speedup" if len(backends) == 2 else ""))
    for label, fn in cases(np.random.default_rng(0)).items():
        times = []
        for _, mod in backends:
            number = max(1, int(0.2 / max(timeit.timeit(lambda: fn(mod), number=1), 1e-6)))
            times.append(min(timeit.repeat(lambda: fn(mod), number=number, repeat=args.repeat)) / number)
        row = f"{label:28s}" + "".join(f"{t * 1e3:10.3f}ms" for t in times)
        if len(times) == 2:
            row += f"{times[0] / times[1]:11.1f}x"
        print(row)
    if _ckernels is None:
        print("compiled kernels not built; only the fallback was timed")


if __name__ == "__main__":
    main()
