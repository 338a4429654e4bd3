"""Command-line front end: single runs, sweeps, equivalence checks, asm tools.

Subcommands:

  run      simulate one config, co-run the reference sampler, emit a report row
  sweep    one row per value of a swept axis, plus fit/saturation summaries
  verify   step-by-step diff of simulator vs reference traces
  asm      assemble a UTF-8 assembly file and write its canonical text
  disasm   write the canonical assembly of the generated sampling program

Configs are key=value text files (``#``/``;`` comments); any key can be
overridden with trailing ``key=value`` arguments.  The DIFFNPU_CONFIG
environment variable names a default config file.  Output is deterministic
for a fixed seed.

Exit codes: 0 success, 1 config error, 2 equivalence failure,
3 simulation fault, 4 timeout.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .codegen import ConfigError, SamplingConfig, gen_sampling_program
from .core import SimTimeout
from .isa import AsmError, assemble, disassemble
from .logits import build_hbm_image
from .machine import MemoryParams, SimFault, sram_footprint
from .oracle import oracle_sample
from .runner import simulate_sampling
from .units import UnitTimings

SCHEMA_VERSION = 1
ENV_CONFIG = "DIFFNPU_CONFIG"

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_EQUIVALENCE = 2
EXIT_FAULT = 3
EXIT_TIMEOUT = 4

_CONFIG_KEYS = ("B", "T", "L", "V", "V_chunk", "VLEN", "R", "mask_id", "seed", "mode")
_MEMORY_KEYS = (
    "hbm_peak_bandwidth",
    "hbm_fixed_latency",
    "double_buffering",
    "vector_sram_bytes",
    "fp_sram_bytes",
    "int_sram_bytes",
)
_TIMING_KEYS = (
    "elementwise_latency",
    "fp_exp_latency",
    "fp_recip_latency",
    "topk_per_element",
    "scalar_latency",
    "reduction_fill",
)

CSV_COLUMNS = (
    "schema_version",
    "mode",
    "B",
    "T",
    "L",
    "V",
    "V_chunk",
    "VLEN",
    "R",
    "seed",
    "total_cycles",
    "latency_ms",
    "vector_cycles",
    "memory_cycles",
    "scalar_cycles",
    "other_cycles",
    "hbm_bytes_moved",
    "hbm_bw_bytes_per_cycle",
    "hbm_bw_gb_per_s",
    "vector_sram_bytes",
    "fp_sram_bytes",
    "int_sram_bytes",
    "equivalence_pass",
)


@dataclass
class Settings:
    config: SamplingConfig
    params: MemoryParams = field(default_factory=MemoryParams)
    timings: UnitTimings = field(default_factory=UnitTimings)
    clock_ghz: float = 1.0


def parse_config_text(text: str, source: str = "<config>") -> dict[str, object]:
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].split(";", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


def _coerce(key: str, value: object):
    if key == "mode":
        return str(value)
    if key == "clock_ghz":
        return float(value)
    if key == "double_buffering":
        if isinstance(value, bool):
            return value
        text = str(value).lower()
        if text in ("1", "true", "on", "yes"):
            return True
        if text in ("0", "false", "off", "no"):
            return False
        raise ConfigError(f"bad boolean for double_buffering: {value!r}")
    if key == "reduction_fill":
        if value in (None, "", "none", "auto"):
            return None
        return int(str(value), 0)
    return int(str(value), 0)


def load_settings(config_path: str | None, overrides: list[str]) -> Settings:
    """Merge (env-default config file, --config file, key=value overrides)."""
    merged: dict[str, object] = {}
    env_path = os.environ.get(ENV_CONFIG)
    for path in (env_path, config_path):
        if path:
            try:
                text = Path(path).read_text(encoding="utf-8")
            except OSError as err:
                raise ConfigError(f"cannot read config {path}: {err}") from None
            merged.update(parse_config_text(text, source=str(path)))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must be key=value, got {item!r}")
        key, _, value = item.partition("=")
        merged[key.strip()] = value.strip()

    known = set(_CONFIG_KEYS) | set(_MEMORY_KEYS) | set(_TIMING_KEYS) | {"clock_ghz"}
    unknown = set(merged) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")

    cfg_kwargs = {k: _coerce(k, v) for k, v in merged.items() if k in _CONFIG_KEYS}
    mem_kwargs = {k: _coerce(k, v) for k, v in merged.items() if k in _MEMORY_KEYS}
    tim_kwargs = {k: _coerce(k, v) for k, v in merged.items() if k in _TIMING_KEYS}
    clock = float(merged.get("clock_ghz", 1.0))
    try:
        config = SamplingConfig(**cfg_kwargs)
    except TypeError as err:
        raise ConfigError(str(err)) from None
    params = MemoryParams(**mem_kwargs)
    params.validate()
    return Settings(config, params, UnitTimings(**tim_kwargs), clock)


# ---------------------------------------------------------------------------
# report rows
# ---------------------------------------------------------------------------

def build_report_row(settings: Settings, report, equivalence_pass: bool) -> dict:
    cfg = settings.config
    clock_hz = settings.clock_ghz * 1e9
    foot = sram_footprint(cfg)
    bw_cycle = report.hbm_bytes_moved / report.total_cycles if report.total_cycles else 0.0
    return {
        "schema_version": SCHEMA_VERSION,
        "mode": cfg.mode,
        "B": cfg.B,
        "T": cfg.T,
        "L": cfg.L,
        "V": cfg.V,
        "V_chunk": cfg.V_chunk,
        "VLEN": cfg.VLEN,
        "R": cfg.R,
        "seed": cfg.seed,
        "total_cycles": report.total_cycles,
        "latency_ms": round(report.latency_ms(clock_hz), 9),
        "vector_cycles": report.vector_cycles,
        "memory_cycles": report.memory_cycles,
        "scalar_cycles": report.scalar_cycles,
        "other_cycles": report.other_cycles,
        "hbm_bytes_moved": report.hbm_bytes_moved,
        "hbm_bw_bytes_per_cycle": round(bw_cycle, 6),
        "hbm_bw_gb_per_s": round(report.achieved_bandwidth(clock_hz) / 1e9, 6),
        "vector_sram_bytes": foot["vector_bytes"],
        "fp_sram_bytes": foot["fp_bytes"],
        "int_sram_bytes": foot["int_bytes"],
        "equivalence_pass": equivalence_pass,
    }


def format_row_text(row: dict) -> str:
    lines = []
    for key in CSV_COLUMNS:
        lines.append(f"{key:>24} = {row[key]}")
    return "\n".join(lines)


def rows_to_csv(rows: list[dict]) -> str:
    out = [",".join(CSV_COLUMNS)]
    for row in rows:
        out.append(",".join(str(row[c]) for c in CSV_COLUMNS))
    return "\n".join(out) + "\n"


def _write_output(text: str, path: str | None) -> None:
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _run_one(settings: Settings, max_cycles: int | None = None, trace=None) -> tuple[dict, bool]:
    """Simulate + oracle co-run; returns (report row, equivalence flag)."""
    cfg = settings.config
    image = build_hbm_image(cfg)
    run = simulate_sampling(
        cfg, settings.params, settings.timings, image=image,
        max_cycles=max_cycles, trace=trace,
    )
    reference = oracle_sample(cfg, image=image)
    ok = bool(np.array_equal(run.tokens, reference.x))
    return build_report_row(settings, run.report, ok), ok


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_run(ns) -> int:
    settings = load_settings(ns.config, ns.overrides)
    if ns.trace:
        with open(ns.trace, "w", encoding="utf-8") as trace:
            row, ok = _run_one(settings, ns.max_cycles, trace)
    else:
        row, ok = _run_one(settings, ns.max_cycles)
    if ns.format == "json":
        text = json.dumps({"schema_version": SCHEMA_VERSION, "rows": [row]}, indent=2) + "\n"
    elif ns.format == "csv":
        text = rows_to_csv([row])
    else:
        text = format_row_text(row) + "\n"
    _write_output(text, ns.out)
    return EXIT_OK if ok else EXIT_EQUIVALENCE


def _fit_r_squared(xs: list[float], ys: list[float]) -> float:
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    slope, intercept = np.polyfit(x, y, 1)
    residual = y - (slope * x + intercept)
    ss_res = float(np.sum(residual ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    return 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot


def cmd_sweep(ns) -> int:
    settings = load_settings(ns.config, ns.overrides)
    values = [int(v) for v in ns.values.split(",")]
    if sorted(values) != values or len(set(values)) != len(values):
        raise ConfigError("sweep values must be strictly increasing")
    rows = []
    for value in values:
        kwargs = {name: getattr(settings.config, name) for name in _CONFIG_KEYS}
        kwargs[ns.axis] = value
        kwargs["mode"] = ""  # re-infer edge/performance per point
        point = Settings(SamplingConfig(**kwargs), settings.params, settings.timings, settings.clock_ghz)
        row, ok = _run_one(point)
        rows.append(row)
        if not ok:
            sys.stderr.write(f"equivalence failure at {ns.axis}={value}\n")
            _write_output(rows_to_csv(rows), ns.out)
            return EXIT_EQUIVALENCE

    summary: dict[str, object] = {"axis": ns.axis, "values": values}
    cycles = [r["total_cycles"] for r in rows]
    bws = [r["hbm_bw_bytes_per_cycle"] for r in rows]
    if ns.axis in ("B", "T", "V") and len(values) >= 2:
        summary["fit_r_squared"] = round(_fit_r_squared(values, cycles), 8)
    if ns.axis == "V_chunk":
        final = cycles[-1]
        sat = next(v for v, c in zip(values, cycles) if c <= 1.05 * final)
        summary["saturation_v_chunk"] = sat
        summary["monotone_non_increasing"] = all(
            a >= b for a, b in zip(cycles, cycles[1:])
        )
    if min(bws) > 0:
        summary["bw_variation"] = round(max(bws) / min(bws) - 1.0, 8)

    if ns.format == "json":
        _write_output(
            json.dumps(
                {"schema_version": SCHEMA_VERSION, "rows": rows, "summary": summary},
                indent=2,
            )
            + "\n",
            ns.out,
        )
    else:
        _write_output(rows_to_csv(rows), ns.out)
        sys.stdout.write(json.dumps({"summary": summary}) + "\n")
    if ns.gnuplot:
        _write_gnuplot(ns.gnuplot, ns.out or "sweep.csv", ns.axis)
    return EXIT_OK


def _write_gnuplot(path: str, csv_path: str, axis: str) -> None:
    col = CSV_COLUMNS.index(axis) + 1
    lat = CSV_COLUMNS.index("latency_ms") + 1
    bw = CSV_COLUMNS.index("hbm_bw_gb_per_s") + 1
    script = (
        "set datafile separator ','\n"
        f"set xlabel '{axis}'\n"
        "set ylabel 'latency (ms)'\n"
        "set y2label 'HBM bandwidth (GB/s)'\n"
        "set y2tics\n"
        "set key top left\n"
        f"plot '{csv_path}' every ::1 using {col}:{lat} with linespoints title 'latency', \\\n"
        f"     '{csv_path}' every ::1 using {col}:{bw} axes x1y2 with linespoints title 'bandwidth'\n"
    )
    Path(path).write_text(script, encoding="utf-8")


def cmd_verify(ns) -> int:
    settings = load_settings(ns.config, ns.overrides)
    cfg = settings.config
    image = build_hbm_image(cfg)
    run = simulate_sampling(
        cfg, settings.params, settings.timings, image=image, collect_step_tokens=True
    )
    reference = oracle_sample(cfg, image=image, _tie_break=ns.tie_break)
    for t, (snap, rec) in enumerate(zip(run.step_tokens, reference.trace)):
        if not np.array_equal(snap, rec.tokens):
            b, l = map(int, np.argwhere(snap != rec.tokens)[0])
            sys.stdout.write(
                f"DIVERGED at step {t} batch {b} position {l}: "
                f"simulator={snap[b, l]} reference={rec.tokens[b, l]}\n"
            )
            return EXIT_EQUIVALENCE
    if not np.array_equal(run.tokens, reference.x):
        sys.stdout.write("DIVERGED in final tokens\n")
        return EXIT_EQUIVALENCE
    sys.stdout.write(
        f"PASS: {cfg.T} step(s), {cfg.B}x{cfg.L} tokens identical to the reference\n"
    )
    return EXIT_OK


def cmd_asm(ns) -> int:
    source = Path(ns.input).read_text(encoding="utf-8")
    program = assemble(source)
    _write_output(disassemble(program), ns.out)
    return EXIT_OK


def cmd_disasm(ns) -> int:
    settings = load_settings(ns.config, ns.overrides)
    program = gen_sampling_program(settings.config, settings.params)
    _write_output(disassemble(program), ns.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="diffnpu",
        description="Cycle-level simulator for diffusion-LLM sampling on a vector-scalar NPU",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key=value config file (or set DIFFNPU_CONFIG)")
        p.add_argument("--out", help="write output to this file instead of stdout")
        p.add_argument("overrides", nargs="*", help="key=value overrides")

    p_run = sub.add_parser("run", help="simulate one config and report")
    common(p_run)
    p_run.add_argument("--format", choices=("text", "csv", "json"), default="text")
    p_run.add_argument("--trace", help="write a per-instruction trace to this file")
    p_run.add_argument("--max-cycles", type=int, help="abort past this many cycles (exit 4)")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="sweep one axis, one report row per value")
    common(p_sweep)
    p_sweep.add_argument("--axis", required=True, choices=("B", "T", "V", "V_chunk", "VLEN"))
    p_sweep.add_argument("--values", required=True, help="comma-separated increasing values")
    p_sweep.add_argument("--format", choices=("csv", "json"), default="csv")
    p_sweep.add_argument("--gnuplot", help="also write a gnuplot script to this path")
    p_sweep.set_defaults(func=cmd_sweep)

    p_verify = sub.add_parser("verify", help="step-by-step diff against the reference")
    common(p_verify)
    p_verify.add_argument(
        "--tie-break",
        choices=("low", "high"),
        default="low",
        help="reference tie rule (high is a debug fixture that must diverge)",
    )
    p_verify.set_defaults(func=cmd_verify)

    p_asm = sub.add_parser("asm", help="assemble a file and write canonical text")
    p_asm.add_argument("input")
    p_asm.add_argument("--out")
    p_asm.set_defaults(func=cmd_asm)

    p_dis = sub.add_parser("disasm", help="emit the generated sampling program")
    common(p_dis)
    p_dis.set_defaults(func=cmd_disasm)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        return ns.func(ns)
    except (ConfigError, AsmError, OSError) as err:
        sys.stderr.write(f"error: {err}\n")
        return EXIT_CONFIG
    except SimTimeout as err:
        sys.stderr.write(f"error: {err}\n")
        return EXIT_TIMEOUT
    except SimFault as err:
        sys.stderr.write(f"error: {err}\n")
        return EXIT_FAULT


if __name__ == "__main__":
    sys.exit(main())
