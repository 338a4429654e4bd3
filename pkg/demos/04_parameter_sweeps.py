#!/usr/bin/env python3
"""Scaling behavior: latency is linear in B, T and V; chunk size saturates.

Writes one CSV + gnuplot script per axis next to this file (desk-scale
values so the whole demo stays under a minute).
"""
from pathlib import Path

from diffnpu import cli

HERE = Path(__file__).resolve().parent

SWEEPS = [
    ("B", "2,4,8,16", ["T=1", "L=64", "V=2048", "V_chunk=128", "VLEN=64", "seed=6"]),
    ("T", "2,4,8,16", ["B=2", "L=64", "V=2048", "V_chunk=128", "VLEN=64", "seed=6"]),
    ("V", "2048,4096,8192,16384", ["B=2", "T=1", "L=64", "V_chunk=128", "VLEN=64", "seed=6"]),
    ("V_chunk", "128,512,2048,8192", ["B=2", "T=1", "L=64", "V=16384", "VLEN=64", "seed=6"]),
]

for axis, values, overrides in SWEEPS:
    csv_path = HERE / f"sweep_{axis}.csv"
    gp_path = HERE / f"sweep_{axis}.gp"
    code = cli.main([
        "sweep", "--axis", axis, "--values", values,
        "--out", str(csv_path), "--gnuplot", str(gp_path), *overrides,
    ])
    assert code == 0, f"sweep over {axis} failed"
    lines = csv_path.read_text().strip().splitlines()
    print(f"axis {axis:8} -> {csv_path.name} ({len(lines) - 1} rows), plot {gp_path.name}")
    header = lines[0].split(",")
    for row in lines[1:]:
        vals = dict(zip(header, row.split(",")))
        print(f"    {axis}={vals[axis]:>6}  cycles={vals['total_cycles']:>9}  "
              f"bw={vals['hbm_bw_gb_per_s']} GB/s")
print("\nrender any plot with: gnuplot -p demos/sweep_B.gp")
