"""Functional and timing models of the execution units.

Reduction, Elementwise, scalar FP, streaming Top-k and Int select.  All
functions are stateless apart from TopKState, which one simulation owns for
the duration of a V_TOPK_MASK instruction.

Arithmetic contract (shared with the software reference):

* reductions accumulate in float32; sums use a fixed pairwise tree
  (balanced halving, odd element passed through) so results are
  deterministic and independent of how a row was chunked into SRAM;
* elementwise results are rounded to BF16 when written back, because the
  destination is Vector SRAM;
* max/argmax ties resolve to the lowest absolute index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import bf16_round, exp32


@dataclass
class UnitTimings:
    """Per-unit cycle costs; defaults are the uncalibrated model.

    reduction cost is ceil(log2(vlen)) + 1 unless ``reduction_fill``
    overrides the tree-fill term; elementwise ops cost
    ``elementwise_latency + 1`` per chunk of up to VLEN lanes.  These are
    calibration knobs, loadable from the same config file as the memory
    parameters.
    """

    elementwise_latency: int = 4
    fp_exp_latency: int = 4
    fp_recip_latency: int = 4
    topk_per_element: int = 1
    scalar_latency: int = 1
    reduction_fill: int | None = None

    def reduction_latency(self, vlen: int) -> int:
        fill = self.reduction_fill
        if fill is None:
            fill = max(1, math.ceil(math.log2(max(vlen, 2))))
        return fill + 1

    def elementwise_cost(self) -> int:
        return self.elementwise_latency + 1


def reduce_max_idx(values: np.ndarray, base_index: int = 0) -> tuple[np.float32, int]:
    """Max value and its absolute index over one chunk; ties -> lowest index."""
    if len(values) == 0:
        raise ValueError("reduce_max_idx over empty input")
    local = int(np.argmax(values))  # argmax returns the first maximum
    return np.float32(values[local]), base_index + local


def reduce_max(values: np.ndarray) -> np.float32:
    if len(values) == 0:
        raise ValueError("reduce_max over empty input")
    return np.float32(np.max(values))


def tree_sum(values: np.ndarray) -> np.float32:
    """Deterministic pairwise float32 sum: halve, odd element passes through."""
    acc = np.asarray(values, dtype=np.float32)
    if acc.size == 0:
        raise ValueError("reduce_sum over empty input")
    while acc.size > 1:
        half = acc.size // 2
        paired = acc[: 2 * half : 2] + acc[1 : 2 * half : 2]
        if acc.size % 2:
            paired = np.append(paired, acc[-1])
        acc = paired
    return np.float32(acc[0])


reduce_sum = tree_sum


def elementwise_sub_scalar(values: np.ndarray, scalar) -> np.ndarray:
    """values - scalar per lane, rounded to BF16 for the SRAM write-back."""
    return bf16_round(np.asarray(values, dtype=np.float32) - np.float32(scalar))


def elementwise_exp(values: np.ndarray) -> np.ndarray:
    """e^values per lane, rounded to BF16 for the SRAM write-back."""
    return bf16_round(exp32(np.asarray(values, dtype=np.float32)))


@dataclass
class TopKState:
    """Sorted keep-list of the k largest (value, index) pairs seen so far.

    Ordering is value-descending with index-ascending tie break, mirroring
    the comparator/shift-register structure: each insertion scans the k
    slots once, so a full mask costs O(L*k) comparisons.
    """

    k: int
    entries: list[tuple[float, int]] = field(default_factory=list)

    def insert(self, value: float, index: int) -> None:
        if self.k == 0:
            return
        pos = 0
        for pos, (ev, ei) in enumerate(self.entries):
            if value > ev or (value == ev and index < ei):
                break
        else:
            pos = len(self.entries)
        self.entries.insert(pos, (value, index))
        if len(self.entries) > self.k:
            self.entries.pop()


def topk_mask(confidence: np.ndarray, eligible: np.ndarray, k: int) -> np.ndarray:
    """Boolean transfer mask of the k highest-confidence eligible positions.

    Exactly min(k, #eligible) positions come out true; ineligible positions
    never win regardless of value.
    """
    if k < 0:
        raise ValueError("k must be non-negative")
    n = len(confidence)
    if len(eligible) != n:
        raise ValueError("confidence/eligible length mismatch")
    state = TopKState(k)
    for i in range(n):
        if eligible[i]:
            state.insert(float(confidence[i]), i)
    mask = np.zeros(n, dtype=bool)
    for _, idx in state.entries:
        mask[idx] = True
    return mask


def select_int(mask: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """out[i] = a[i] where mask[i] else b[i], on int32 lanes."""
    if not (len(mask) == len(a) == len(b)):
        raise ValueError("select_int operand length mismatch")
    return np.where(np.asarray(mask, dtype=bool), a, b).astype(np.int32)
