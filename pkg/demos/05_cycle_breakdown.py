#!/usr/bin/env python3
"""Per-category cycle breakdown of the large resident-mode workload.

Loads the shipped calibration (configs/tableiii.cfg: B=16, L=32, V=126000,
VLEN=2048, R=1, whole rows resident in Vector SRAM) and prints the split
between vector, memory, scalar and control cycles.  Expect a couple of
seconds of simulated work: about 426k instructions and 66 MB of HBM traffic.
"""
from pathlib import Path

from diffnpu import cli
from diffnpu.runner import simulate_sampling

ROOT = Path(__file__).resolve().parents[1]
settings = cli.load_settings(str(ROOT / "configs" / "tableiii.cfg"), [])
cfg = settings.config
print(f"workload: B={cfg.B} T={cfg.T} L={cfg.L} V={cfg.V} VLEN={cfg.VLEN} mode={cfg.mode}")
print("building the logits image and simulating...")

run = simulate_sampling(cfg, settings.params, settings.timings)
r = run.report
total = r.total_cycles
print(f"\n{'category':>10} {'cycles':>10} {'share':>8}")
for name, cycles in r.category_cycles.items():
    print(f"{name:>10} {cycles:>10} {cycles / total:>7.1%}")
print(f"{'total':>10} {total:>10}")
print(f"\nlatency at 1 GHz: {r.latency_ms():.3f} ms")
print(f"HBM traffic: {r.hbm_bytes_moved / 1e6:.1f} MB, "
      f"{r.achieved_bandwidth() / 1e9:.1f} GB/s achieved")
print(f"instructions executed: {r.instructions}")
