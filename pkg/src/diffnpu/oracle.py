"""Plain-software reference sampler used as the equivalence oracle.

Two confidence routes live here:

``softmax_confidence``
    The standard single-pass softmax (max-subtracted exponentials in
    float32, dense sum).  This is the independent reference the streaming
    Stable-Max must match to within 2^-7 relative after BF16 rounding.

``row_confidence``
    The architectural-contract computation: the same BF16-quantized,
    VLEN-windowed arithmetic the datapath performs (window max + running
    rescale, BF16 rounding at every SRAM write-back, fixed pairwise sums).
    ``oracle_sample`` ranks these confidences so its token decisions are
    bit-identical to the machine's, while sharing none of the ISA, SRAM or
    unit code.  The spread between the two routes is what the Stable-Max
    tolerance check measures.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .codegen import KSchedule, SamplingConfig
from .logits import build_hbm_image, decoded_row
from .numerics import bf16_round, exp32, recip32


def softmax_confidence(logits_row: np.ndarray) -> tuple[int, np.float32]:
    """argmax (ties to the lowest index) and its softmax probability.

    Computed as p = e^(z - max) / sum(e^(z - max)) in float32; the returned
    probability is p[argmax] = 1 / sum.
    """
    row = np.asarray(logits_row, dtype=np.float32)
    if row.size == 0:
        raise ValueError("empty logits row")
    idx = int(np.argmax(row))
    shifted = exp32(row - row[idx])
    total = np.float32(np.sum(shifted, dtype=np.float32))
    return idx, np.float32(1.0) / total


def _window_tree_sums(ex: np.ndarray) -> np.ndarray:
    """Per-row balanced pairwise float32 sums over the last axis."""
    acc = ex
    while acc.shape[1] > 1:
        if acc.shape[1] % 2:
            carry = acc[:, -1:]
            acc = acc[:, 0:-1:2] + acc[:, 1::2]
            acc = np.concatenate([acc, carry], axis=1)
        else:
            acc = acc[:, 0::2] + acc[:, 1::2]
    return acc[:, 0]


_M_INIT = np.float32(-1.0) * exp32(np.float32(88.0))


def row_confidence(row: np.ndarray, vlen: int) -> tuple[int, np.float32]:
    """Datapath-contract confidence of one dequantized logits row.

    Mirrors the streaming program exactly: VLEN windows in order, running
    max with lowest-index ties, shifted exponentials rounded to BF16 on
    write-back, per-window pairwise sums, online rescale by e^(m_old-m_new).
    Pad lanes beyond the row behave as the poisoned lanes do in SRAM:
    excluded from the max, exactly 0.0 in the sums.
    """
    row = np.asarray(row, dtype=np.float32)
    n = row.size
    if n == 0:
        raise ValueError("empty logits row")
    windows = -(-n // vlen)
    mat = np.zeros((windows, vlen), dtype=np.float32)
    mat.reshape(-1)[:n] = row

    pad_mask = np.zeros((windows, vlen), dtype=bool)
    pad_mask.reshape(-1)[n:] = True
    maxmat = np.where(pad_mask, np.float32(-np.inf), mat)
    wmax = maxmat.max(axis=1).astype(np.float32)

    run = np.empty(windows + 1, dtype=np.float32)
    run[0] = _M_INIT
    np.maximum.accumulate(np.concatenate([[_M_INIT], wmax]).astype(np.float32), out=run)

    shifted = bf16_round(mat - run[1:, None])
    ex = bf16_round(exp32(shifted))
    ex[pad_mask] = 0.0
    wsums = _window_tree_sums(ex)

    s = np.float32(0.0)
    neg1 = np.float32(-1.0)
    for w in range(windows):
        m_old, m_new = run[w], run[w + 1]
        s = np.float32(s * exp32(np.float32(m_old + neg1 * m_new)))
        s = np.float32(s + wsums[w])
    return int(np.argmax(row)), recip32(s)


@dataclass
class StepRecord:
    step: int
    committed: list[list[int]]              # per batch: positions committed
    confidences: np.ndarray                 # (B, L) BF16-valued float32
    tokens: np.ndarray                      # (B, L) int32 after the commit


@dataclass
class OracleResult:
    x: np.ndarray                           # (B, L) final tokens
    trace: list[StepRecord] = field(default_factory=list)


def oracle_sample(
    config: SamplingConfig,
    image: np.ndarray | None = None,
    _tie_break: str = "low",
) -> OracleResult:
    """Full blocked-sampling reference over the same MX-encoded logits.

    Per step: confidences and argmax candidates for every position, top-k
    over the still-masked positions per batch (ties to the lower index, or
    higher under the test-only perturbed rule), masked commit, trace record.
    """
    cfg = config
    if image is None:
        image = build_hbm_image(cfg)
    x = np.full((cfg.B, cfg.L), cfg.mask_id, dtype=np.int32)
    masked = np.ones((cfg.B, cfg.L), dtype=bool)
    schedule = KSchedule.for_config(cfg)
    trace: list[StepRecord] = []

    for t in range(cfg.T):
        conf = np.zeros((cfg.B, cfg.L), dtype=np.float32)
        cand = np.zeros((cfg.B, cfg.L), dtype=np.int32)
        for b in range(cfg.B):
            for l in range(cfg.L):
                row = decoded_row(image, cfg, t, b, l)
                idx, c = row_confidence(row, cfg.VLEN)
                cand[b, l] = idx
                conf[b, l] = bf16_round(c)
        committed: list[list[int]] = []
        for b in range(cfg.B):
            k = schedule.counts[t][b]
            eligible = np.flatnonzero(masked[b])
            if _tie_break == "low":
                order = sorted(eligible, key=lambda i: (-conf[b, i], i))
            else:
                order = sorted(eligible, key=lambda i: (-conf[b, i], -i))
            chosen = [int(i) for i in order[: min(k, len(order))]]
            for i in chosen:
                x[b, i] = cand[b, i]
                masked[b, i] = False
            committed.append(sorted(chosen))
        trace.append(StepRecord(t, committed, conf.copy(), x.copy()))
    return OracleResult(x, trace)


def format_trace(result: OracleResult) -> str:
    """Structured text, one record per step, for the CLI diff command."""
    lines = []
    for rec in result.trace:
        for b, positions in enumerate(rec.committed):
            toks = " ".join(f"{p}:{rec.tokens[b, p]}" for p in positions)
            lines.append(f"step {rec.step} batch {b} commit [{toks}]")
    return "\n".join(lines) + ("\n" if lines else "")
