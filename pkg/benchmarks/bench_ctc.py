#!/usr/bin/env python3
"""Benchmark the compiled CTC kernel against the pure-numpy fallback.

Runs the same forward-backward workload through both backends, checks they
agree to near machine precision, and reports wall time plus speedup across
a range of lattice sizes.  Lattice shapes bracket the toolkit's real use:
short toy-language clips (a few hundred frames, ~10 symbols) up to
full-length utterances (15 s at 100 frames/s, larger vocabularies).

Usage:
    python3 benchmarks/bench_ctc.py [--repeats N]

The compiled backend must be importable (build it with
``pip install -e . --no-build-isolation``); otherwise only the fallback is
timed.
"""

import argparse
import math
import time

import numpy as np

from lrasr.kernels import pure

try:
    from lrasr.kernels import _ctc_core as compiled
except ImportError:
    compiled = None


def make_case(rng, T, V, L):
    """Random log-softmax lattice and a feasible blank-free target."""
    logits = rng.normal(size=(T, V))
    logp = logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))
    labels = rng.integers(1, V, size=L)
    # collapse adjacent repeats until feasible: T >= L + #repeats
    while L + int(np.sum(labels[1:] == labels[:-1])) > T:
        labels = labels[:-1]
    return np.ascontiguousarray(logp), np.ascontiguousarray(labels)


def time_backend(fn, cases, repeats):
    best = math.inf
    for _ in range(repeats):
        start = time.perf_counter()
        for logp, labels in cases:
            fn(logp, labels)
        best = min(best, time.perf_counter() - start)
    return best / len(cases)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5,
                        help="timing repeats; best run is reported")
    parser.add_argument("--cases", type=int, default=20,
                        help="random lattices per size")
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    sizes = [
        (50, 6, 8),      # tiny oracle-test scale
        (300, 10, 30),   # ~3 s toy-language clip
        (600, 10, 60),   # ~6 s toy-language clip
        (1500, 30, 150), # 15 s clip, larger vocabulary
    ]

    print(f"backends: pure=numpy, compiled="
          f"{'available' if compiled else 'NOT BUILT'}")
    print(f"{'T':>6} {'V':>4} {'L':>4} {'pure (ms)':>10} "
          f"{'compiled (ms)':>14} {'speedup':>8} {'max|dgrad|':>11}")
    for T, V, L in sizes:
        cases = [make_case(rng, T, V, L) for _ in range(args.cases)]
        t_pure = time_backend(pure.ctc_forward_backward, cases, args.repeats)
        if compiled is None:
            print(f"{T:>6} {V:>4} {L:>4} {t_pure * 1e3:>10.3f} "
                  f"{'-':>14} {'-':>8} {'-':>11}")
            continue
        t_comp = time_backend(compiled.ctc_forward_backward, cases,
                              args.repeats)
        worst = 0.0
        for logp, labels in cases:
            loss_p, grad_p = pure.ctc_forward_backward(logp, labels)
            loss_c, grad_c = compiled.ctc_forward_backward(logp, labels)
            worst = max(worst, abs(loss_p - loss_c),
                        float(np.max(np.abs(grad_p - grad_c))))
        print(f"{T:>6} {V:>4} {L:>4} {t_pure * 1e3:>10.3f} "
              f"{t_comp * 1e3:>14.3f} {t_pure / t_comp:>7.1f}x "
              f"{worst:>11.2e}")


if __name__ == "__main__":
    main()
