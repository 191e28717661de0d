"""Time the compiled kernels against the pure-numpy fallback on the shapes
the training loop actually hits.

    python benchmarks/benchmark_kernels.py

The dispatcher in freqpatch._kernels routes conv calls by reduction size
(direct compiled loops for small cin*k*k, BLAS-backed im2col otherwise);
this table shows why.
"""

import time

import numpy as np

from freqpatch import _kernels as K
from freqpatch._kernels import bilinear_coords, numpy_backend as nb


def timeit(fn, *args, repeat=5):
    fn(*args)  # warm up
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best * 1e3


def bench_conv():
    rng = np.random.default_rng(0)
    cases = [
        ("conv 128px 3->16 s2", (4, 128, 128, 3), 16, 3, 2, 1),
        ("conv 64px 16->32 s2", (4, 64, 64, 16), 32, 3, 2, 1),
        ("conv 32px 32->48 s2", (4, 32, 32, 32), 48, 3, 2, 1),
        ("conv 16px 48->48 s1", (4, 16, 16, 48), 48, 3, 1, 1),
    ]
    for name, xs, cout, k, s, p in cases:
        x = rng.normal(size=xs)
        w = rng.normal(size=(k, k, xs[3], cout))
        b = np.zeros(cout)
        if K.BACKEND == "compiled":
            tc = timeit(K._impl.conv2d_forward, x, w, b, s, p)
        else:
            tc = float("nan")
        tn = timeit(nb.conv2d_forward, x, w, b, s, p)
        y = nb.conv2d_forward(x, w, b, s, p)
        gy = rng.normal(size=y.shape)
        if K.BACKEND == "compiled":
            tcb = timeit(K._impl.conv2d_backward_input, gy, w, s, p, xs[1], xs[2])
        else:
            tcb = float("nan")
        tnb = timeit(nb.conv2d_backward_input, gy, w, s, p, xs[1], xs[2])
        print(f"{name:24s} fwd compiled {tc:7.2f}ms numpy {tn:7.2f}ms | "
              f"bwd_in compiled {tcb:7.2f}ms numpy {tnb:7.2f}ms")


def bench_resize():
    rng = np.random.default_rng(1)
    for (h, w), (oh, ow) in [((950, 950), (30, 30)), ((64, 64), (9, 9)),
                             ((64, 64), (35, 35))]:
        x = rng.uniform(size=(h, w, 3))
        y0, y1, wy = bilinear_coords(h, oh)
        x0, x1, wx = bilinear_coords(w, ow)
        gy = rng.normal(size=(oh, ow, 3))
        if K.BACKEND == "compiled":
            tc = timeit(K._impl.resize_forward, x, y0, y1, wy, x0, x1, wx)
            tca = timeit(K._impl.resize_adjoint, gy, y0, y1, wy, x0, x1, wx, h, w)
        else:
            tc = tca = float("nan")
        tn = timeit(nb.resize_forward, x, y0, y1, wy, x0, x1, wx)
        tna = timeit(nb.resize_adjoint, gy, y0, y1, wy, x0, x1, wx, h, w)
        print(f"resize {h}x{w}->{oh}x{ow}: fwd compiled {tc:7.3f}ms numpy {tn:7.3f}ms"
              f" | adjoint compiled {tca:7.3f}ms numpy {tna:7.3f}ms")


def bench_tv():
    rng = np.random.default_rng(2)
    for side in (64, 256, 950):
        x = rng.uniform(size=(side, side, 3))
        if K.BACKEND == "compiled":
            tc = timeit(K._impl.tv_r_loss_and_grad, x, 1e-8, repeat=3)
        else:
            tc = float("nan")
        tn = timeit(nb.tv_r_loss_and_grad, x, 1e-8, repeat=3)
        print(f"tv_r {side}x{side}: compiled {tc:8.2f}ms numpy {tn:8.2f}ms")


if __name__ == "__main__":
    print(f"active backend: {K.BACKEND}")
    bench_conv()
    bench_resize()
    bench_tv()
