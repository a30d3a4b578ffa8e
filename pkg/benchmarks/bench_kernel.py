"""Slot-engine throughput: numba-compiled kernel vs the same code run as plain Python.

    python3 benchmarks/bench_kernel.py [--stas 32] [--sim-ms 500] [--repeats 3]

Both paths consume identical uniform buffers, so the script also checks that
they return identical period metrics.
"""
import argparse
import time

import numpy as np

from d3pg_wifi import NUMBA_ENABLED
from d3pg_wifi.macsim import MacControl, SimConfig, Simulator
from d3pg_wifi.macsim import kernel as K


def run(kernel, n, sim_us, control):
    K.run_slots = kernel
    sim = Simulator(SimConfig(n_stas=n), seed=0)
    if control:
        sim.apply_control(MacControl(np.full(n, 255), np.full(n, 64)))
    t0 = time.perf_counter()
    m = sim.run_for(sim_us)
    return time.perf_counter() - t0, m


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--stas", type=int, default=32)
    ap.add_argument("--sim-ms", type=float, default=500.0)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()
    fast = K.run_slots
    slow = getattr(fast, "py_func", K._run_slots)
    if not NUMBA_ENABLED:
        print("numba disabled; both columns run the Python kernel")
    run(fast, 2, 1000.0, False)  # compile outside the timed region
    print(f"{'mode':<10} {'path':<8} {'best_s':>9} {'events':>9} {'Mev/s':>8}")
    for control in (False, True):
        mode = "fixed" if control else "beb"
        results = {}
        for name, kern in (("numba", fast), ("python", slow)):
            best, m = min((run(kern, args.stas, args.sim_ms * 1000, control) for _ in range(args.repeats)),
                          key=lambda r: r[0])
            results[name] = m
            print(f"{mode:<10} {name:<8} {best:9.4f} {m.events:9d} {m.events / best / 1e6:8.3f}")
        assert results["numba"].csv_row() == results["python"].csv_row(), "paths diverged"
    K.run_slots = fast


if __name__ == "__main__":
    main()
