"""Packet-level HARQ link simulation with joint ML detection per round.

Quasi-static operation: one channel draw per packet, held across all ARQ
rounds. Detection always uses the accumulated signal prefix. Success is a
genie comparison against the transmitted payload (stands in for CRC), and
ACK/NACK feedback is error-free and instantaneous.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .channel import SnrPoint, channel_stream, sample_channels, _as_matrix
from .convcode import TAIL_BITS, conv_encode, viterbi_decode_soft
from .errprob import SymbolSet
from .ldc import LdcCode, codewords

__all__ = [
    "LinkConfig",
    "SnrPointStats",
    "SimStats",
    "qpsk_map",
    "qpsk_demap",
    "ml_detect",
    "run_uncoded",
    "run_coded",
]


def qpsk_map(bits) -> np.ndarray:
    """Gray-coded QPSK, unit energy: pair (b0, b1) -> ((1-2b0) + j(1-2b1))/sqrt(2).

    Adjacent constellation points differ in exactly one bit; 00 maps to the
    first quadrant.
    """
    bits = np.asarray(bits)
    if bits.shape[-1] % 2:
        raise ValueError("QPSK needs an even number of bits")
    pairs = bits.reshape(*bits.shape[:-1], -1, 2)
    return ((1 - 2 * pairs[..., 0]) + 1j * (1 - 2 * pairs[..., 1])) / math.sqrt(2.0)


def qpsk_demap(symbols) -> np.ndarray:
    """Hard inverse of qpsk_map."""
    s = np.asarray(symbols)
    b0 = (s.real < 0).astype(np.uint8)
    b1 = (s.imag < 0).astype(np.uint8)
    return np.stack([b0, b1], axis=-1).reshape(*s.shape[:-1], -1)


def ml_detect(y_prefix, h, code: LdcCode, symbol_set: SymbolSet, snr: SnrPoint, n: int) -> int:
    """Exhaustive ML decision from the accumulated round-n observation.

    Returns the index minimizing ||Y^(n) - sqrt(snr/lt) H X^(n)(s_i)||_F^2;
    ties resolve to the lowest index.
    """
    if not 1 <= n <= code.n_rounds:
        raise ValueError(f"round index must be in [1, {code.n_rounds}], got {n}")
    tn = int(code.t_cum[n - 1])
    h = _as_matrix(h)
    y = np.asarray(y_prefix, dtype=complex)
    if y.shape != (h.shape[0], tn):
        raise ValueError(f"expected observation of shape {(h.shape[0], tn)}, got {y.shape}")
    cand = math.sqrt(snr.linear / code.lt) * np.einsum(
        "rt,mtc->mrc", h, codewords(code, symbol_set.vectors)[:, :, :tn])
    metrics = np.sum(np.abs(y[None] - cand) ** 2, axis=(1, 2))
    return int(np.argmin(metrics))


@dataclass(frozen=True)
class LinkConfig:
    """Simulation setup for one PER / average-rate sweep."""

    code: LdcCode
    snr_db: tuple
    lr: int = 1
    n_max: int = 2
    packet_symbols: int = 100
    coded: bool = False
    trials: int = 10_000
    seed: int = 0
    min_errors: int | None = 100     # stop a point early once this many packets fail
    chunk: int = 2048
    interleaver_rows: int = 10
    interleaver_cols: int = 20
    track_joint: bool = False        # also decode round 2 for packets ACKed at round 1

    def __post_init__(self):
        if self.packet_symbols % self.code.k:
            raise ValueError(
                f"packet_symbols={self.packet_symbols} must be divisible by K={self.code.k}")
        if not 1 <= self.n_max <= self.code.n_rounds:
            raise ValueError(f"n_max must be in [1, {self.code.n_rounds}]")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if len(self.snr_db) == 0:
            raise ValueError("need at least one SNR point")
        if self.coded:
            n_coded = 2 * self.packet_symbols
            if self.interleaver_rows * self.interleaver_cols != n_coded:
                raise ValueError(
                    f"interleaver {self.interleaver_rows}x{self.interleaver_cols} does not hold "
                    f"{n_coded} coded bits")
            if self.packet_symbols <= TAIL_BITS:
                raise ValueError("coded packets need more info bits than the termination tail")
        if self.track_joint and self.n_max != 2:
            raise ValueError("joint-event tracking is defined for n_max = 2")
        object.__setattr__(self, "snr_db", tuple(float(v) for v in self.snr_db))

    @property
    def codewords_per_packet(self) -> int:
        return self.packet_symbols // self.code.k

    @property
    def bits_per_packet(self) -> int:
        # coded: rate 1/2 over 2 bits/symbol; termination loss ignored in accounting
        return self.packet_symbols * (1 if self.coded else 2)


@dataclass(frozen=True)
class SnrPointStats:
    snr_db: float
    trials: int
    failures: int
    round_success: tuple      # packets first ACKed at round n, n = 1..N
    accepted_bits: int
    channel_uses: int
    a1_not_a2: int | None = None   # round-1 decode right but joint round-2 decode wrong

    @property
    def per(self) -> float:
        return self.failures / self.trials

    @property
    def per_stderr(self) -> float:
        p = self.per
        return math.sqrt(max(p * (1 - p), 0.0) / self.trials)

    @property
    def avg_rate(self) -> float:
        return self.accepted_bits / self.channel_uses

    @property
    def round_fracs(self) -> tuple:
        return tuple(c / self.trials for c in self.round_success)


@dataclass(frozen=True)
class SimStats:
    config: LinkConfig
    points: tuple

    def point(self, snr_db: float) -> SnrPointStats:
        for p in self.points:
            if p.snr_db == float(snr_db):
                return p
        raise KeyError(f"no stats at {snr_db} dB")


def _interleaver_perm(rows: int, cols: int) -> np.ndarray:
    """Read order of a row-in column-out block interleaver."""
    return np.arange(rows * cols).reshape(rows, cols).T.ravel()


def _exact_bit_llrs(metric: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Exact per-bit LLRs log P(b=0|Y) - log P(b=1|Y) from ML metrics.

    metric: (B, P, M) squared distances; hypothesis likelihoods are
    proportional to exp(-metric) for unit-variance complex noise.
    """
    neg = -metric
    n_bits = labels.shape[1]
    out = np.empty(metric.shape[:2] + (n_bits,))
    for j in range(n_bits):
        mask0 = labels[:, j] == 0
        out[:, :, j] = logsumexp(neg[:, :, mask0], axis=2) - logsumexp(neg[:, :, ~mask0], axis=2)
    return out


class _Tally:
    def __init__(self, n_max: int):
        self.trials = 0
        self.failures = 0
        self.round_success = np.zeros(n_max, dtype=np.int64)
        self.a1_not_a2 = 0


def _finalize(tally: _Tally, cfg: LinkConfig, snr_db: float) -> SnrPointStats:
    t_cum = cfg.code.t_cum
    p = cfg.codewords_per_packet
    uses = sum(int(tally.round_success[n]) * p * int(t_cum[n]) for n in range(cfg.n_max))
    uses += tally.failures * p * int(t_cum[cfg.n_max - 1])
    bits = int(tally.round_success.sum()) * cfg.bits_per_packet
    return SnrPointStats(
        snr_db=snr_db,
        trials=tally.trials,
        failures=tally.failures,
        round_success=tuple(int(c) for c in tally.round_success),
        accepted_bits=bits,
        channel_uses=uses,
        a1_not_a2=tally.a1_not_a2 if cfg.track_joint else None,
    )


def _simulate_chunk(cfg: LinkConfig, tally: _Tally, snr: SnrPoint, h, z, tx,
                    x_full, symbol_set: SymbolSet, perm, info) -> None:
    """Run one batch of packets through all ARQ rounds and update the tally."""
    b, p = tx.shape
    m = symbol_set.m
    scale = math.sqrt(snr.linear / cfg.code.lt)
    t_cum = np.concatenate([[0], cfg.code.t_cum]).astype(int)
    metric = np.zeros((b, p, m))
    resolved = np.zeros(b, dtype=bool)
    ok_rounds = []
    for n in range(1, cfg.n_max + 1):
        if cfg.track_joint:
            act = np.arange(b)
        else:
            act = np.flatnonzero(~resolved)
            if act.size == 0:
                break
        cols = slice(int(t_cum[n - 1]), int(t_cum[n]))
        x_blk = x_full[:, :, cols]
        h_act = h[act]
        y_blk = (scale * np.einsum("brt,bptc->bprc", h_act, x_blk[tx[act]])
                 + z[act][..., cols])
        cand = scale * np.einsum("brt,mtc->bmrc", h_act, x_blk)
        inner = np.einsum("bprc,bmrc->bpm", y_blk, cand.conj())
        inc = (np.sum(np.abs(y_blk) ** 2, axis=(2, 3))[:, :, None]
               - 2.0 * inner.real
               + np.sum(np.abs(cand) ** 2, axis=(2, 3))[:, None, :])
        metric_act = metric[act] + inc
        metric[act] = metric_act
        if cfg.coded:
            llr = _exact_bit_llrs(metric_act, symbol_set.labels).reshape(act.size, -1)
            deint = np.empty_like(llr)
            deint[:, perm] = llr
            decoded = viterbi_decode_soft(deint)
            ok = np.all(decoded == info[act], axis=1)
        else:
            det = np.argmin(metric_act, axis=2)
            ok = np.all(det == tx[act], axis=1)
        newly = ok & ~resolved[act]
        tally.round_success[n - 1] += int(newly.sum())
        resolved[act[newly]] = True
        ok_rounds.append(ok)
    tally.failures += int((~resolved).sum())
    if cfg.track_joint:
        tally.a1_not_a2 += int(np.sum(ok_rounds[0] & ~ok_rounds[1]))


def _run(cfg: LinkConfig) -> SimStats:
    code = cfg.code
    p = cfg.codewords_per_packet
    t_total = int(code.t_cum[cfg.n_max - 1])
    symbol_set = SymbolSet.qpsk(code.k)
    x_full = codewords(code, symbol_set.vectors)
    n_bits_cw = 2 * code.k
    bit_weights = 1 << np.arange(n_bits_cw - 1, -1, -1)
    perm = _interleaver_perm(cfg.interleaver_rows, cfg.interleaver_cols) if cfg.coded else None

    points = []
    for idx, snr_db in enumerate(cfg.snr_db):
        snr = SnrPoint.from_db(snr_db)
        # independent substreams per SNR point: channel, noise, payload
        h_stream = channel_stream(cfg.seed, 3 * idx)
        z_stream = channel_stream(cfg.seed, 3 * idx + 1)
        data_stream = channel_stream(cfg.seed, 3 * idx + 2)
        tally = _Tally(cfg.n_max)
        while tally.trials < cfg.trials:
            b = min(cfg.chunk, cfg.trials - tally.trials)
            h = sample_channels(code.lt, cfg.lr, b, h_stream)
            z = (z_stream.standard_normal((b, p, cfg.lr, t_total))
                 + 1j * z_stream.standard_normal((b, p, cfg.lr, t_total))) / math.sqrt(2.0)
            info = None
            if cfg.coded:
                payload = data_stream.integers(0, 2, (b, cfg.packet_symbols - TAIL_BITS))
                info = np.concatenate(
                    [payload, np.zeros((b, TAIL_BITS), dtype=payload.dtype)], axis=1)
                interleaved = conv_encode(info)[:, perm]
                tx = (interleaved.reshape(b, p, n_bits_cw) * bit_weights).sum(axis=2)
            else:
                tx = data_stream.integers(0, symbol_set.m, (b, p))
            _simulate_chunk(cfg, tally, snr, h, z, tx, x_full, symbol_set, perm, info)
            tally.trials += b
            if cfg.min_errors is not None and tally.failures >= cfg.min_errors:
                break
        points.append(_finalize(tally, cfg, snr_db))
    return SimStats(config=cfg, points=tuple(points))


def run_uncoded(config: LinkConfig) -> SimStats:
    """Uncoded QPSK transmission: per-codeword joint ML, genie-checked packets."""
    if config.coded:
        config = dataclasses.replace(config, coded=False)
    return _run(config)


def run_coded(config: LinkConfig) -> SimStats:
    """BICM transmission: convolutional code, block interleaver, exact bit
    LLRs from the accumulated rounds, soft Viterbi decoding."""
    if not config.coded:
        config = dataclasses.replace(config, coded=True)
    return _run(config)
