#!/usr/bin/env python3
"""Benchmark: compiled Cython solver kernels vs the pure-NumPy fallback.

Grounds synthetic KGs at a few scales and times both backends on the same
packed programs, for both the ADMM (default) and projected-subgradient
methods.

Usage:
    python benchmarks/bench_solver.py [--iterations 500]
"""

import argparse
import time

import numpy as np

from kgrefine.noise import NoiseSpec, assign_extraction_scores, corrupt_kg
from kgrefine.psl import RuleWeights, ground
from kgrefine.psl import _hinge_py
from kgrefine.psl.solve import SolverConfig, _step_sizes
from kgrefine.synth import SynthSpec, generate_kg

try:
    from kgrefine.psl import _hinge
    BACKENDS = [("compiled", _hinge), ("pure-python", _hinge_py)]
except ImportError:
    print("compiled kernel unavailable; benchmarking the fallback only")
    BACKENDS = [("pure-python", _hinge_py)]


def build_program(n_entities, n_facts, seed=0):
    kg = generate_kg(SynthSpec(n_entities=n_entities, n_facts=n_facts, seed=seed))
    kg = assign_extraction_scores(corrupt_kg(kg, NoiseSpec(seed=seed)), NoiseSpec(seed=seed))
    return ground(kg, RuleWeights()).pack()


def bench(fn, repeats=3):
    best = float("inf")
    result = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - t0)
    return best, result


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--iterations", type=int, default=500)
    args = parser.parse_args()

    scales = [(60, 300), (200, 2000), (400, 6000)]
    header = f"{'scale':>16} {'rules':>8} {'method':>12} {'backend':>12} {'time':>9} {'it/s':>10} {'objective':>12}"
    print(header)
    print("-" * len(header))
    for n_entities, n_facts in scales:
        packed = build_program(n_entities, n_facts)
        x0 = np.full(packed.n_vars, 0.5)
        cfg = SolverConfig(max_iterations=args.iterations, tolerance=0.0)
        steps = _step_sizes(cfg, packed)
        for method in ("admm", "subgradient"):
            for name, kernel in BACKENDS:
                if method == "admm":
                    fn = lambda: kernel.solve_admm(
                        packed.indptr, packed.var_idx, packed.coefs, packed.bias,
                        packed.weights, packed.power, packed.n_vars, x0, 1.0,
                        args.iterations, 0.0)
                else:
                    fn = lambda: kernel.solve_hinge(
                        packed.indptr, packed.var_idx, packed.coefs, packed.bias,
                        packed.weights, packed.power, packed.n_vars, x0, steps,
                        0.0, 10 ** 9)
                elapsed, (_, obj, iters, _) = bench(fn)
                print(f"{n_entities}e/{n_facts}f".rjust(16),
                      f"{packed.n_rules:>8}",
                      f"{method:>12}", f"{name:>12}",
                      f"{elapsed:>8.3f}s", f"{iters / elapsed:>10.0f}",
                      f"{obj:>12.4f}")


if __name__ == "__main__":
    main()
