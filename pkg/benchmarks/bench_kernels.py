"""Time the numba kernels against their numpy twins.

    python benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Each kernel is warmed up once (so JIT compilation is excluded), then timed
``repeat`` times; the best time is reported. Outputs of the two backends are
compared on the same inputs.
"""
import argparse
import json
import time

import numpy as np

from solitonq import _accel, kernels
from solitonq.bethe import PulseCenterState
from solitonq.model import SolitonParams
from solitonq.sampler import McmcConfig, run_chains


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases():
    rng = np.random.default_rng(0)

    params = SolitonParams(n=3, m=3)
    state = PulseCenterState(0.5, 0.0, params.N)
    mcmc = McmcConfig(chains=4, samples_per_chain=50_000, burn_in=5_000, seed=1)
    yield "mcmc 4x50k, N=6", lambda: run_chains(params, state, mcmc, workers=1).samples

    M = 96
    f = rng.normal(size=(M, M, M)) + 1j * rng.normal(size=(M, M, M))
    delta = np.triu(np.full((3, 3), 0.4), 1)
    yield "H apply 96^3", lambda: kernels.apply_hamiltonian(f, 3, 2.5, delta)

    u0 = rng.normal(size=2 ** 16) + 1j * rng.normal(size=2 ** 16)
    v0 = rng.normal(size=2 ** 16) + 1j * rng.normal(size=2 ** 16)

    def kerr():
        u, v = u0.copy(), v0.copy()
        for _ in range(20):
            kernels.kerr_step(u, v, 1e-3, 2 / 3)
        return u
    yield "Kerr step 2^16 x20", kerr


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", default=None)
    args = ap.parse_args()
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    rows = []
    print(f"{'kernel':<22}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}  agree")
    for name, fn in cases():
        out = {}
        for be in ("numba", "numpy"):
            with _accel.forced_backend(be):
                out[be] = (best_of(fn, args.repeat), fn())
        tn, tp = out["numba"][0], out["numpy"][0]
        agree = bool(np.allclose(out["numba"][1], out["numpy"][1], rtol=1e-13, atol=0))
        rows.append({"kernel": name, "numba_s": tn, "numpy_s": tp, "speedup": tp / tn, "agree": agree})
        print(f"{name:<22}{tn:>12.4f}{tp:>12.4f}{tp / tn:>9.1f}x  {agree}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
