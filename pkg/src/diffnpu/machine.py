"""Architectural state: HBM image, decoupled SRAM domains, registers, FIFO.

Three on-chip memories are modeled with disjoint address spaces:

  Vector SRAM  bulk BF16 elements (2 bytes each), fed from HBM through the
               dequantizer; byte-addressed at element granularity.
  FP SRAM      scalar BF16 confidences (2 bytes each).
  Int SRAM     INT32 token ids and select operands (4 bytes each); only
               S_ST_INT, V_SELECT_INT and FIFO_PUSH may touch it, and the
               separation is structural (separate arrays, separate bounds).

HBM holds a stream of MXFP8 blocks (1 scale byte + 32 element bytes) and is
modeled parametrically: a fixed latency plus peak-bandwidth term per
transfer, optionally overlapped with compute accumulated since the previous
transfer (double buffering).

BF16-valued SRAM is stored as float32 arrays whose every element is exactly
BF16-representable; the byte-level accessors convert to and from the
little-endian 2-byte wire form.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .numerics import (
    MX_BLOCK,
    MX_BLOCK_BYTES,
    bf16_bits,
    bf16_from_bits,
    bf16_round,
    mx_decode_stream_fast,
)

VECTOR_ELEM_BYTES = 2
FP_ELEM_BYTES = 2
INT_ELEM_BYTES = 4


class SimFault(RuntimeError):
    """Datapath or memory fault raised during simulation."""

    def __init__(self, kind: str, detail: str, pc: int | None = None):
        self.kind = kind
        self.detail = detail
        self.pc = pc
        where = f" at pc {pc}" if pc is not None else ""
        super().__init__(f"{kind}{where}: {detail}")


@dataclass
class MemoryParams:
    """HBM timing model and SRAM capacities (bytes)."""

    hbm_peak_bandwidth: int = 64     # bytes per cycle
    hbm_fixed_latency: int = 100     # cycles per transfer
    double_buffering: bool = True
    vector_sram_bytes: int = 16 * 1024 * 1024
    fp_sram_bytes: int = 64 * 1024
    int_sram_bytes: int = 64 * 1024

    def validate(self) -> None:
        if self.hbm_peak_bandwidth <= 0:
            raise ValueError("hbm_peak_bandwidth must be positive")
        if self.hbm_fixed_latency < 0:
            raise ValueError("hbm_fixed_latency must be non-negative")
        for name in ("vector_sram_bytes", "fp_sram_bytes", "int_sram_bytes"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class CycleCounters:
    vector: int = 0
    memory: int = 0
    scalar: int = 0
    other: int = 0
    hbm_bytes_moved: int = 0

    @property
    def total(self) -> int:
        return self.vector + self.memory + self.scalar + self.other


class MachineState:
    """One simulation's register files, SRAM domains, HBM image and FIFO."""

    def __init__(self, params: MemoryParams | None = None, hbm_image=None):
        self.params = params or MemoryParams()
        self.params.validate()
        self.gp = [0] * 32
        self.fp = np.zeros(32, dtype=np.float32)
        self.vector_sram = np.zeros(self.params.vector_sram_bytes // VECTOR_ELEM_BYTES, dtype=np.float32)
        self.fp_sram = np.zeros(self.params.fp_sram_bytes // FP_ELEM_BYTES, dtype=np.float32)
        self.int_sram = np.zeros(self.params.int_sram_bytes // INT_ELEM_BYTES, dtype=np.int32)
        self.hbm = np.zeros(0, dtype=np.uint8) if hbm_image is None else np.asarray(hbm_image, dtype=np.uint8)
        self.fifo_out: list[int] = []
        self.pc = 0
        self.cycles = CycleCounters()
        self.highwater = {"vector": 0, "fp": 0, "int": 0}
        # compute cycles accumulated since the last prefetch; double
        # buffering hides up to this much of the next transfer's cost
        self.compute_credit = 0

    # -- register helpers --------------------------------------------------

    def write_gp(self, idx: int, value: int) -> None:
        if idx != 0:  # x0 is hardwired zero
            self.gp[idx] = int(np.int32(value))

    # -- vector SRAM -------------------------------------------------------

    def _vector_slice(self, base_byte: int, count: int) -> slice:
        if base_byte % VECTOR_ELEM_BYTES:
            raise SimFault("sram-alignment", f"vector byte address {base_byte} not element-aligned")
        start = base_byte // VECTOR_ELEM_BYTES
        if base_byte < 0 or base_byte + count * VECTOR_ELEM_BYTES > self.params.vector_sram_bytes:
            raise SimFault(
                "sram-bounds",
                f"vector SRAM access [{base_byte}, {base_byte + count * VECTOR_ELEM_BYTES})"
                f" outside capacity {self.params.vector_sram_bytes}",
            )
        end_byte = base_byte + count * VECTOR_ELEM_BYTES
        if end_byte > self.highwater["vector"]:
            self.highwater["vector"] = end_byte
        return slice(start, start + count)

    def sram_read_vector(self, base_byte: int, count: int) -> np.ndarray:
        return self.vector_sram[self._vector_slice(base_byte, count)]

    def sram_write_vector(self, base_byte: int, values) -> None:
        vals = np.atleast_1d(np.asarray(values, dtype=np.float32))
        self.vector_sram[self._vector_slice(base_byte, vals.size)] = bf16_round(vals)

    def sram_read_vector_bytes(self, base_byte: int, nbytes: int) -> bytes:
        if nbytes % VECTOR_ELEM_BYTES:
            raise SimFault("sram-alignment", f"byte count {nbytes} not element-aligned")
        vals = self.sram_read_vector(base_byte, nbytes // VECTOR_ELEM_BYTES)
        return bf16_bits(vals).astype("<u2").tobytes()

    def sram_write_vector_bytes(self, base_byte: int, data: bytes) -> None:
        if len(data) % VECTOR_ELEM_BYTES:
            raise SimFault("sram-alignment", f"byte count {len(data)} not element-aligned")
        bits = np.frombuffer(data, dtype="<u2")
        self.vector_sram[self._vector_slice(base_byte, bits.size)] = bf16_from_bits(bits)

    # -- FP SRAM -----------------------------------------------------------

    def _fp_index(self, byte_addr: int) -> int:
        if byte_addr % FP_ELEM_BYTES:
            raise SimFault("sram-alignment", f"fp byte address {byte_addr} not element-aligned")
        if byte_addr < 0 or byte_addr + FP_ELEM_BYTES > self.params.fp_sram_bytes:
            raise SimFault("sram-bounds", f"fp SRAM address {byte_addr} outside capacity {self.params.fp_sram_bytes}")
        if byte_addr + FP_ELEM_BYTES > self.highwater["fp"]:
            self.highwater["fp"] = byte_addr + FP_ELEM_BYTES
        return byte_addr // FP_ELEM_BYTES

    def fp_sram_write(self, byte_addr: int, value) -> None:
        self.fp_sram[self._fp_index(byte_addr)] = bf16_round(np.float32(value))

    def fp_sram_read(self, byte_addr: int, count: int) -> np.ndarray:
        start = self._fp_index(byte_addr)
        self._fp_index(byte_addr + (count - 1) * FP_ELEM_BYTES)
        return self.fp_sram[start : start + count]

    # -- Int SRAM ----------------------------------------------------------

    def _int_slice(self, base_byte: int, count: int) -> slice:
        if base_byte % INT_ELEM_BYTES:
            raise SimFault("sram-alignment", f"int byte address {base_byte} not element-aligned")
        if base_byte < 0 or base_byte + count * INT_ELEM_BYTES > self.params.int_sram_bytes:
            raise SimFault(
                "sram-bounds",
                f"int SRAM access [{base_byte}, {base_byte + count * INT_ELEM_BYTES})"
                f" outside capacity {self.params.int_sram_bytes}",
            )
        end = base_byte + count * INT_ELEM_BYTES
        if end > self.highwater["int"]:
            self.highwater["int"] = end
        start = base_byte // INT_ELEM_BYTES
        return slice(start, start + count)

    def int_sram_write(self, byte_addr: int, value: int) -> None:
        self.int_sram[self._int_slice(byte_addr, 1)] = np.int32(value)

    def int_sram_write_array(self, byte_addr: int, values) -> None:
        vals = np.asarray(values, dtype=np.int32)
        self.int_sram[self._int_slice(byte_addr, vals.size)] = vals

    def int_sram_read(self, byte_addr: int, count: int = 1) -> np.ndarray:
        return self.int_sram[self._int_slice(byte_addr, count)]

    # -- HBM ---------------------------------------------------------------

    def hbm_prefetch(self, hbm_byte_offset: int, element_count: int, vector_sram_dest: int) -> int:
        """Stream MX blocks from HBM through the dequantizer into Vector SRAM.

        Returns the exposed cycle cost (memory category).  Raw cost is
        fixed latency + ceil(bytes / peak bandwidth); with double buffering
        the transfer overlaps compute accumulated since the previous one.
        """
        if element_count <= 0 or element_count % MX_BLOCK:
            raise SimFault("hbm-arg", f"element count {element_count} not a positive multiple of {MX_BLOCK}")
        if hbm_byte_offset % MX_BLOCK_BYTES:
            raise SimFault("hbm-alignment", f"HBM offset {hbm_byte_offset} not block-aligned")
        nbytes = element_count * MX_BLOCK_BYTES // MX_BLOCK
        if hbm_byte_offset < 0 or hbm_byte_offset + nbytes > self.hbm.size:
            raise SimFault(
                "hbm-bounds",
                f"HBM read [{hbm_byte_offset}, {hbm_byte_offset + nbytes}) outside image of {self.hbm.size} bytes",
            )
        raw = self.hbm[hbm_byte_offset : hbm_byte_offset + nbytes]
        decoded = mx_decode_stream_fast(raw)
        self.vector_sram[self._vector_slice(vector_sram_dest, element_count)] = decoded

        self.cycles.hbm_bytes_moved += nbytes
        cost = self.params.hbm_fixed_latency + -(-nbytes // self.params.hbm_peak_bandwidth)
        if self.params.double_buffering:
            cost = max(0, cost - self.compute_credit)
        self.compute_credit = 0
        return cost


# ---------------------------------------------------------------------------
# SRAM footprint closed forms
# ---------------------------------------------------------------------------

def sram_footprint(config) -> dict[str, int]:
    """Element counts and byte sizes per SRAM domain for a sampling config.

    Int elements   = 2 * B * L                     (token array + candidates)
    FP elements    = max(L, VLEN)
    Vector elements= 3 * B * L + V_chunk           (chunked / edge)
                   = 3 * B * L + V * L * R         (resident / performance)
    """
    int_elements = 2 * config.B * config.L
    fp_elements = max(config.L, config.VLEN)
    if config.V_chunk < config.V:
        vector_elements = 3 * config.B * config.L + config.V_chunk
    else:
        vector_elements = 3 * config.B * config.L + config.V * config.L * config.R
    return {
        "int_elements": int_elements,
        "fp_elements": fp_elements,
        "vector_elements": vector_elements,
        "int_bytes": int_elements * INT_ELEM_BYTES,
        "fp_bytes": fp_elements * FP_ELEM_BYTES,
        "vector_bytes": vector_elements * VECTOR_ELEM_BYTES,
    }


# ---------------------------------------------------------------------------
# HBM image file I/O (raw MX block stream)
# ---------------------------------------------------------------------------

def load_hbm_image(path) -> np.ndarray:
    data = np.fromfile(Path(path), dtype=np.uint8)
    if data.size % MX_BLOCK_BYTES:
        raise ValueError(f"{path}: size {data.size} is not a whole number of MX blocks")
    return data


def save_hbm_image(path, image) -> None:
    np.asarray(image, dtype=np.uint8).tofile(Path(path))
