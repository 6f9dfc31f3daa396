#!/usr/bin/env python3
"""
Benchmark the numba kernels against their pure-numpy twins.

Kernels timed on workloads taken from the simulator:
1. Jacobi eigensolver (4x4 dressed Hamiltonians, random 16x16 hermitian)
2. Matrix-free RK4 Lindblad integration (two sites, three targets + control)
3. Batched complex solves (a 401-point detuning sweep)
4. Time-dependent propagation march (80 cells, 15000 steps)

Usage:
    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --repeat 5 --output results.json
"""

import argparse
import json
import platform
import time
from datetime import datetime

import numpy as np

from fitsim import kernels
from fitsim import lindblad as lb
from fitsim import propagation as pr
from fitsim.config import SystemConfig
from fitsim.dressed import dressed_hamiltonian
from fitsim.hilbert import DriveParams, InteractionSpec, build_hamiltonian
from fitsim.observables import RingGeometry


def _random_hermitian(n, rng):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return (a + a.conj().T) / 2


def workloads():
    rng = np.random.default_rng(7)
    dressed = [dressed_hamiltonian(3.0, 3.0, dc, 15.0) for dc in np.linspace(-30, 15, 500)]
    herm16 = [_random_hermitian(16, rng) for _ in range(20)]

    two = SystemConfig().liouvillian()
    ring = RingGeometry(3)
    space = ring.space()
    h = build_hamiltonian(space, DriveParams(0.5, 5.0, 5.0), InteractionSpec(pair_overrides=ring.pair_overrides(15.0, 10.0)))
    big = lb.Liouvillian(space, h, SystemConfig().dissipators(space))

    cfg = SystemConfig()
    sp, static, det, vdw, spec = cfg.parts()
    grid = np.linspace(-30, 15, 401)
    params = np.column_stack([grid, np.full_like(grid, 15.0)])
    m0, dirs = lb.superoperator_parts(sp, static, [det, vdw], spec)
    n2 = m0.shape[0]
    mats = np.broadcast_to(m0, (len(grid), n2, n2)).copy()
    idx = np.arange(n2)
    for j, sd in enumerate(dirs):
        mats[:, idx, idx] += params[:, j:j + 1] * sd[None, :]
    rhs = np.zeros((len(grid), n2), dtype=np.complex128)
    rhs[:, 0] = 1.0

    td_cfg = pr.PropagationConfig(pr.Grid1D(0, 40, 80), SystemConfig(omega_p=0.01, omega=3, omega_c=3),
                                  kappa=0.0897, ramp=pr.RampSpec(50, 0, 10, 3))

    def pulse(tau):
        return np.exp(-((tau - 150) / 50) ** 2)

    return {
        "jacobi_4x4_x500": lambda: [kernels.jacobi_eigh(m) for m in dressed],
        "jacobi_16x16_x20": lambda: [kernels.jacobi_eigh(m) for m in herm16],
        "rk4_dim6_2000": lambda: lb.evolve(two, lb.ground_state(two.space), 20.0, 0.01, store_every=2000, check=False),
        "rk4_dim54_500": lambda: lb.evolve(big, lb.ground_state(space), 5.0, 0.01, store_every=500, check=False),
        "solve_batch_401x36": lambda: kernels.solve_batch(mats, rhs),
        "td_march_80x15000": lambda: pr.propagate_td(td_cfg, pulse, 300.0, 0.02, n_slices=0),
    }


def time_call(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[1])
    parser.add_argument("--repeat", type=int, default=3, help="timings per kernel (best is kept)")
    parser.add_argument("--output", help="write results as JSON")
    args = parser.parse_args()

    backends = kernels.available_backends()
    jobs = workloads()
    results = {}
    for backend in backends:
        kernels.set_backend(backend)
        print(f"Warming up {backend}...")
        for fn in jobs.values():
            fn()
        results[backend] = {name: time_call(fn, args.repeat) for name, fn in jobs.items()}

    print(f"\n{'kernel':<22}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}")
    for name in jobs:
        row = "".join(f"{results[b][name] * 1e3:>10.2f}ms" for b in backends)
        speed = ""
        if "numba" in results and "numpy" in results:
            speed = f"{results['numpy'][name] / results['numba'][name]:>9.2f}x"
        print(f"{name:<22}{row}{speed}")

    if args.output:
        payload = {
            "timestamp": datetime.now().isoformat(timespec="seconds"),
            "python": platform.python_version(),
            "numpy": np.__version__,
            "results_s": results,
        }
        with open(args.output, "w") as fh:
            json.dump(payload, fh, indent=2)
        print(f"\nResults saved to {args.output}")


if __name__ == "__main__":
    main()
