#!/usr/bin/env python3
"""Compare the numba loop kernels with their pure-numpy fallbacks.

Kernel timings run in-process (both variants are importable side by side).
The end-to-end timing runs a short training job twice in subprocesses, once
with POLARADMIT_DISABLE_NUMBA=1.

    python3 benchmarks/bench_kernels.py [--repeat 20] [--skip-train]
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from polaradmit import kernels
from polaradmit._accel import HAVE_NUMBA
from polaradmit.stokes import DEFAULT_CALIBRATION as C

TRAIN_SNIPPET = """
import time
import numpy as np
from polaradmit.synth import SynthSpec, synth_admissible, synth_rgb
from polaradmit.tinygan import TrainConfig, train
x = np.stack([synth_admissible(SynthSpec(16, 16, seed=1), k).transpose(2, 0, 1) for k in range(16)])
y = np.stack([synth_rgb(16, 16, 2, k).transpose(2, 0, 1) for k in range(16)])
train(TrainConfig(steps_per_epoch=2), x, y)  # warm up / compile
t = time.perf_counter()
train(TrainConfig(steps_per_epoch=40), x, y)
print(time.perf_counter() - t)
"""


def best_ms(fn, repeat):
    fn()  # compile / warm caches
    return 1e3 * min(timeit.repeat(fn, number=1, repeat=repeat))


def kernel_cases(rng):
    x = rng.normal(size=(4, 16, 16, 16)).astype(np.float32)
    w = rng.normal(size=(16, 16, 3, 3)).astype(np.float32)
    b = rng.normal(size=16).astype(np.float32)
    gy = rng.normal(size=(4, 16, 16, 16)).astype(np.float32)
    px = rng.uniform(0, 255, size=(512 * 512, 4))
    return [
        ("conv2d forward  (4x16x16x16, f32)",
         lambda: kernels._conv2d_forward_loop(x, w, b), lambda: kernels._conv2d_forward_np(x, w, b)),
        ("conv2d backward (4x16x16x16, f32)",
         lambda: kernels._conv2d_backward_loop(x, w, gy), lambda: kernels._conv2d_backward_np(x, w, gy)),
        ("pixel stats     (512x512 px, f64)",
         lambda: kernels._pixel_stats_loop(px, C.a, C.a_pinv), lambda: kernels._pixel_stats_np(px, C.a, C.a_pinv)),
    ]


def train_seconds(disable):
    env = dict(os.environ, POLARADMIT_DISABLE_NUMBA="1" if disable else "0")
    out = subprocess.run([sys.executable, "-c", TRAIN_SNIPPET], env=env, capture_output=True, text=True, check=True)
    return float(out.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--skip-train", action="store_true")
    args = ap.parse_args()

    loop_label = "numba" if HAVE_NUMBA else "python loop (numba off)"
    print(f"{'kernel':36s} {loop_label:>12s} {'numpy':>10s} {'speedup':>8s}")
    for name, loop, vec in kernel_cases(np.random.default_rng(0)):
        t_loop, t_np = best_ms(loop, args.repeat if HAVE_NUMBA else 1), best_ms(vec, args.repeat)
        print(f"{name:36s} {t_loop:10.2f}ms {t_np:8.2f}ms {t_np / t_loop:7.2f}x")

    if not args.skip_train:
        fast, slow = train_seconds(False), train_seconds(True)
        print(f"\n40 training steps (16x16 patches, width 16): numba {fast:.2f}s, numpy {slow:.2f}s, "
              f"speedup {slow / fast:.2f}x")


if __name__ == "__main__":
    main()
