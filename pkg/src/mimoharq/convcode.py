"""Rate-1/2, 64-state binary convolutional code with soft-input Viterbi decoding.

Octal generators (133, 171), constraint length 7. The shift register is
held as a 7-bit word with the newest input bit in the MSB; the 6-bit state
is the register without its oldest bit. Encoding is batched over packets,
as is the decoder (path metrics vectorized over the batch).
"""

from __future__ import annotations

import numpy as np

G0 = 0o133
G1 = 0o171
K_CONSTRAINT = 7
N_STATES = 64
TAIL_BITS = K_CONSTRAINT - 1

_POP = np.array([bin(i).count("1") for i in range(128)], dtype=np.uint8)

# transition tables: register = (input << 6) | state
_REG = (np.arange(2)[:, None] << 6) | np.arange(N_STATES)[None, :]   # (2, 64)
_OUT0 = (_POP[_REG & G0] & 1).astype(np.int8)
_OUT1 = (_POP[_REG & G1] & 1).astype(np.int8)
_NEXT = (_REG >> 1).astype(np.int64)

# predecessor view: new state ns has register candidates (ns<<1) and (ns<<1)|1
_PRED_REG = ((np.arange(N_STATES)[:, None] << 1) | np.arange(2)[None, :])  # (64, 2)
_PRED_STATE = (_PRED_REG & (N_STATES - 1)).astype(np.int64)
_PRED_IN = (_PRED_REG >> 6).astype(np.int64)          # input bit of the transition = ns >> 5
_PRED_O0 = (_POP[_PRED_REG & G0] & 1).astype(np.int64)
_PRED_O1 = (_POP[_PRED_REG & G1] & 1).astype(np.int64)


def conv_encode(bits: np.ndarray) -> np.ndarray:
    """Encode batched bit rows (B, L) -> coded bits (B, 2L), zero initial state.

    Termination is the caller's concern: append six zero bits to return the
    encoder to state 0.
    """
    bits = np.asarray(bits, dtype=np.int64)
    if bits.ndim == 1:
        return conv_encode(bits[None])[0]
    b, length = bits.shape
    out = np.empty((b, 2 * length), dtype=np.uint8)
    state = np.zeros(b, dtype=np.int64)
    for t in range(length):
        inp = bits[:, t]
        out[:, 2 * t] = _OUT0[inp, state]
        out[:, 2 * t + 1] = _OUT1[inp, state]
        state = _NEXT[inp, state]
    return out


def viterbi_decode_soft(llrs: np.ndarray) -> np.ndarray:
    """ML sequence decoding from bit LLRs, batched (B, 2L) -> (B, L).

    LLR convention: positive favors bit 0. Paths start and end in state 0
    (terminated transmission); the branch metric is the LLR correlation
    0.5 * sum llr * (1 - 2*coded_bit).
    """
    llrs = np.asarray(llrs, dtype=float)
    if llrs.ndim == 1:
        return viterbi_decode_soft(llrs[None])[0]
    b, two_l = llrs.shape
    if two_l % 2:
        raise ValueError("LLR count must be even for a rate-1/2 code")
    length = two_l // 2
    sign0 = (1 - 2 * _PRED_O0).astype(float)  # (64, 2)
    sign1 = (1 - 2 * _PRED_O1).astype(float)
    pm = np.full((b, N_STATES), -np.inf)
    pm[:, 0] = 0.0
    choice = np.empty((b, length, N_STATES), dtype=np.uint8)
    for t in range(length):
        l0 = llrs[:, 2 * t, None, None]
        l1 = llrs[:, 2 * t + 1, None, None]
        cand = pm[:, _PRED_STATE] + 0.5 * (l0 * sign0 + l1 * sign1)  # (B, 64, 2)
        pick = np.argmax(cand, axis=2)
        choice[:, t] = pick.astype(np.uint8)
        pm = np.take_along_axis(cand, pick[:, :, None], axis=2)[:, :, 0]
    decoded = np.empty((b, length), dtype=np.uint8)
    state = np.zeros(b, dtype=np.int64)
    rows = np.arange(b)
    for t in range(length - 1, -1, -1):
        decoded[:, t] = (state >> 5).astype(np.uint8)
        j = choice[rows, t, state]
        state = _PRED_STATE[state, j]
    return decoded
