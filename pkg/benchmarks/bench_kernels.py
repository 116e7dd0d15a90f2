"""Benchmark the compiled kernels against the pure-numpy fallback.

Times each hot kernel on representative shapes plus one full training epoch
of the TCN task model, for every available backend. Medians over repeated
timed calls; shapes follow the small-profile models used in the tests.

Usage:
    python benchmarks/bench_kernels.py [--repeats 30] [--epoch-records 64]
"""

import argparse
import statistics
import time

import numpy as np

from steerlab.autodiff import kernels


def _time(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def kernel_cases(rng):
    """(name, callable factory) pairs on clinical-model shapes."""
    B, H, T = 32, 32, 72
    C_in, C_out, K, D = 32, 32, 3, 4
    preact = rng.normal(size=(B, 4 * H))
    c_prev = rng.normal(size=(B, H))
    _, c, act = kernels.lstm_pointwise_forward(preact, c_prev)
    dh = rng.normal(size=(B, H))
    dc = rng.normal(size=(B, H))

    x = rng.normal(size=(B, C_in, T))
    w = rng.normal(size=(C_out, C_in, K))
    dy = rng.normal(size=(B, C_out, T))

    p = rng.normal(size=C_out * C_in * K)
    g = rng.normal(size=p.shape)
    m = np.zeros_like(p)
    v = np.zeros_like(p)

    return [
        ("lstm_pointwise_forward (32x128)",
         lambda: kernels.lstm_pointwise_forward(preact, c_prev)),
        ("lstm_pointwise_backward (32x128)",
         lambda: kernels.lstm_pointwise_backward(dh, dc, act, c_prev, c)),
        (f"causal_conv1d_forward ({B}x{C_in}x{T}, k{K} d{D})",
         lambda: kernels.causal_conv1d_forward(x, w, D)),
        (f"causal_conv1d_dx ({B}x{C_out}x{T})",
         lambda: kernels.causal_conv1d_dx(dy, w, D)),
        (f"causal_conv1d_dw ({B}x{C_out}x{T})",
         lambda: kernels.causal_conv1d_dw(dy, x, K, D)),
        ("adam_step (3072 params)",
         lambda: kernels.adam_step(p, g, m, v, 1e-3, 0.9, 0.999, 1e-8, 0.9, 0.99)),
    ]


def epoch_case(n_records):
    from steerlab.data import split
    from steerlab.data.synthetic import SynthConfig, generate_cohort
    from steerlab.seqmodels import EncoderConfig, TaskModel
    from steerlab.training import TrainConfig, train_task

    cfg = SynthConfig(n_records=n_records, m=4, t_range=(26, 40), seed=0,
                      dataset_tag="bench")
    parts = split(generate_cohort(cfg), seed=0)

    def run():
        model = TaskModel(
            EncoderConfig(kind="tcn", in_channels=4, scale=0.0625),
            "sofa", np.random.default_rng(0),
        )
        train_task(model, parts, "sofa",
                   TrainConfig(lr=1e-3, epochs=1, batch_size=16, seed=0))

    return run


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=30,
                    help="timed calls per kernel (median reported)")
    ap.add_argument("--epoch-records", type=int, default=64,
                    help="cohort size for the one-epoch end-to-end case")
    ap.add_argument("--epoch-repeats", type=int, default=3)
    args = ap.parse_args()

    backends = kernels.available_backends()
    print(f"backends: {', '.join(backends)} (default: {kernels.backend_name()})\n")

    rng = np.random.default_rng(0)
    cases = kernel_cases(rng)
    results = {}
    for backend in backends:
        kernels.use_backend(backend)
        for name, fn in cases:
            fn()  # warm up
            results[(name, backend)] = _time(fn, args.repeats)
        results[("one training epoch (tcn, end to end)", backend)] = _time(
            epoch_case(args.epoch_records), args.epoch_repeats)
    kernels.use_backend(kernels.available_backends()[0])

    names = [n for n, _ in cases] + ["one training epoch (tcn, end to end)"]
    width = max(len(n) for n in names)
    header = f"{'case':<{width}}" + "".join(f"{b:>12}" for b in backends)
    if len(backends) > 1:
        header += f"{'speedup':>10}"
    print(header)
    for name in names:
        row = f"{name:<{width}}"
        for backend in backends:
            row += f"{results[(name, backend)] * 1e3:>10.3f}ms"
        if len(backends) > 1:
            ratio = results[(name, "numpy")] / results[(name, "cython")]
            row += f"{ratio:>9.2f}x"
        print(row)


if __name__ == "__main__":
    main()
