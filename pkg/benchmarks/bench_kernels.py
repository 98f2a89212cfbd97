"""Time full-clip simulation with each available kernel backend.

    python benchmarks/bench_kernels.py --scenes 20 --repeat 3
"""

import argparse
import time

import numpy as np

from dynreason import kernels, physics
from dynreason.generator import GeneratorConfig, sample_scene
from dynreason.scene import SceneConfig, event_keys


def run(backend, worlds, config):
    physics.kernels.step, physics.kernels.detect = backend.step, backend.detect
    t0 = time.perf_counter()
    results = [physics.simulate(w, config) for w in worlds]
    return time.perf_counter() - t0, results


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenes", type=int, default=20)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    config = SceneConfig()
    worlds = [sample_scene(GeneratorConfig(), config, args.seed + k) for k in range(args.scenes)]
    saved = kernels.step, kernels.detect
    timings, outputs = {}, {}
    try:
        for name, mod in kernels.available_backends().items():
            best = min(run(mod, worlds, config)[0] for _ in range(args.repeat))
            timings[name] = best
            outputs[name] = run(mod, worlds, config)[1]
    finally:
        physics.kernels.step, physics.kernels.detect = saved

    frames = args.scenes * config.n_frames
    for name, t in timings.items():
        print(f"{name:8s} {t:8.3f} s  {1e6 * t / frames:8.1f} us/frame")
    if "cython" in timings:
        print(f"speedup  {timings['python'] / timings['cython']:.1f}x")
        same = all(
            event_keys(a.collisions) == event_keys(b.collisions)
            and all(np.array_equal(ta.positions, tb.positions) for ta, tb in zip(a.trajectories, b.trajectories))
            for a, b in zip(outputs["python"], outputs["cython"])
        )
        print(f"bit-identical trajectories: {same}")


if __name__ == "__main__":
    main()
