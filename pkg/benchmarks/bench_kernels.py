"""Time the compiled and pure-Python kernels on inputs of typical size.

    python benchmarks/bench_kernels.py [--repeat N]

Prints per-call time for each backend, the speedup, and the largest
absolute difference between their outputs.
"""
import argparse
import timeit

import numpy as np

from bpsynth import kernels
from bpsynth.discount_volatility import _bartlett_factors


def _spd(rng, n):
    a = rng.standard_normal((n, n))
    return a @ a.T + n * np.eye(n)


def theta_case(rng, T=180, J=5, q=6):
    p = (J + 1) * q
    return (rng.standard_normal((T, q)), rng.standard_normal((T, J, q)),
            np.stack([_spd(rng, q) for _ in range(T)]), np.zeros(p), np.eye(p), 0.99,
            rng.standard_normal((T + 1, p)))


def states_case(rng, T=180, J=5, q=6):
    p = (J + 1) * q
    return (rng.standard_normal((T, q)), rng.standard_normal((T, p)),
            np.stack([_spd(rng, q) for _ in range(T)]),
            np.stack([[_spd(rng, q) for _ in range(J)] for _ in range(T)]),
            rng.standard_normal((T, J, q)), np.ones((T, J)), rng.standard_normal((T, J * q)))


def vol_case(rng, T=180, q=6, beta=0.99):
    D = np.stack([_spd(rng, q) for _ in range(T + 1)])
    h = np.linspace(q + 6.0, 100.0, T + 1)
    return D, beta, _bartlett_factors(np.r_[(1 - beta) * h[:T], h[T]], q, rng)


CASES = {"theta_ffbs": theta_case, "gaussian_states": states_case, "vol_backward": vol_case}


def _flat(out):
    return out if isinstance(out, tuple) else (out,)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)
    backends = {name: kernels.load_backend(name) for name in kernels.available_backends()}
    if "cython" not in backends:
        print("compiled extension not built; timing the Python backend only")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<16} {'backend':<8} {'ms/call':>9} {'speedup':>8} {'max |diff|':>11}")
    for kernel, make in CASES.items():
        args_k = make(rng)
        times, outs = {}, {}
        for name, mod in backends.items():
            fn = getattr(mod, kernel)
            outs[name] = _flat(fn(*args_k))
            times[name] = min(timeit.repeat(lambda: fn(*args_k), number=1, repeat=args.repeat))
        diff = 0.0
        if len(outs) == 2:
            diff = max(float(np.max(np.abs(a - b))) for a, b in zip(outs["cython"], outs["python"]))
        for name in backends:
            speed = times["python"] / times[name]
            print(f"{kernel:<16} {name:<8} {1e3 * times[name]:9.3f} {speed:8.1f}x {diff:11.2e}")


if __name__ == "__main__":
    main()
