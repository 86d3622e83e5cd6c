"""Compare the compiled and numpy policy kernels.

    python benchmarks/bench_kernels.py [--repeat 20] [--batch 32]
"""
import argparse
import time

import numpy as np

from promptmatch import init_policy
from promptmatch.kernels import backends


def _time(fn, repeat):
    fn()
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--batch", type=int, default=32)
    args = ap.parse_args(argv)

    shapes = {"full-size (1024, 600, 15)": (1024, 600, 15), "bandit (64, 32, 15)": (64, 32, 15)}
    found = backends()
    if "cython" not in found:
        print("compiled extension not built; only the numpy backend is available")
    print(f"{'shape':<22} {'kernel':<14} " + " ".join(f"{name:>12}" for name in found) + "   speedup")
    for label, (sd, hd, ad) in shapes.items():
        p = init_policy(sd, hd, ad, 0)
        rng = np.random.default_rng(0)
        s = rng.normal(size=sd)
        S = rng.normal(size=(args.batch, sd))
        A = rng.integers(ad, size=args.batch)
        R = rng.normal(size=args.batch)
        g = rng.normal(size=p.w1.shape)
        cases = {
            "forward": lambda k: lambda: k.forward(p.w1, p.w2, s),
            "loss_and_grad": lambda k: lambda: k.loss_and_grad(p.w1, p.w2, S, A, R, 0.06),
            "adamw_step": lambda k: lambda: k.adamw_step(p.w1.copy(), g, np.zeros_like(g), np.zeros_like(g), 1,
                                                         1e-3, 0.9, 0.999, 1e-5, 0.01),
        }
        for kname, make in cases.items():
            times = {name: _time(make(mod), args.repeat) for name, mod in found.items()}
            cells = " ".join(f"{times[n] * 1e6:10.1f}us" for n in found)
            speed = f"{times['python'] / times['cython']:8.2f}x" if "cython" in times else ""
            print(f"{label:<22} {kname:<14} {cells} {speed}")


if __name__ == "__main__":
    main()
