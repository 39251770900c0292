"""Average-rate analysis of HARQ protocols over quasi-static MIMO channels.

Implements the general average-rate evaluator, equivalent capacities for
incremental redundancy and Chase combining, and the rate optimizers under
an isotropic Gaussian input.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.random import Generator

from .channel import (
    CapacitySampleSet,
    SnrPoint,
    gram_eigenvalues,
    mimo_mutual_info,
    mutual_info_from_eigs,
    sample_channels,
    _as_matrix,
)

__all__ = [
    "RoundRates",
    "AvgRateResult",
    "avg_rate_from_probs",
    "ir_equiv_capacity",
    "cc_equiv_capacity",
    "optimize_ir_rates",
    "optimize_cc_rate",
    "ergodic_capacity",
]

_MONO_TOL = 1e-12


@dataclass(frozen=True)
class RoundRates:
    """Per-round transmission rates R(1) >= R(2) >= ... >= R(N) >= 0.

    The boundary conventions R(0) = inf and R(N+1) = 0 are implicit in
    every consumer of this type.
    """

    rates: tuple

    def __post_init__(self):
        rates = tuple(float(r) for r in self.rates)
        if len(rates) < 1:
            raise ValueError("need at least one round")
        if any(r < 0 for r in rates):
            raise ValueError(f"rates must be nonnegative: {rates}")
        for a, b in zip(rates, rates[1:]):
            if b > a + _MONO_TOL:
                raise ValueError(f"rates must be nonincreasing: {rates}")
        object.__setattr__(self, "rates", rates)

    @property
    def n_max(self) -> int:
        return len(self.rates)


@dataclass(frozen=True)
class AvgRateResult:
    """Optimizer output: the rate assignment, its value, and P(success by round n)."""

    optimal_rates: RoundRates
    avg_rate: float
    success_probs: np.ndarray
    samples_used: int

    def __post_init__(self):
        probs = np.asarray(self.success_probs, dtype=float)
        if probs.shape != (self.optimal_rates.n_max,):
            raise ValueError("one success probability per round required")
        if np.any(np.diff(probs) < -_MONO_TOL):
            raise ValueError(f"success probabilities must be nondecreasing: {probs}")
        probs.setflags(write=False)
        object.__setattr__(self, "success_probs", probs)


def avg_rate_from_probs(rates, success_probs) -> float:
    """Average rate sum_n (R(n) - R(n+1)) * P(A_n), with R(N+1) = 0.

    P(A_n) is the probability of successful decoding by the end of round n;
    the events are nested so the probabilities must be nondecreasing.
    """
    if not isinstance(rates, RoundRates):
        rates = RoundRates(tuple(rates))
    p = np.asarray(success_probs, dtype=float)
    if p.shape != (rates.n_max,):
        raise ValueError(f"expected {rates.n_max} probabilities, got shape {p.shape}")
    if np.any(p < -_MONO_TOL) or np.any(p > 1 + _MONO_TOL):
        raise ValueError(f"probabilities must lie in [0, 1]: {p}")
    if np.any(np.diff(p) < -_MONO_TOL):
        raise ValueError(f"success probabilities must be nondecreasing: {p}")
    r = np.asarray(rates.rates + (0.0,))
    return float(np.dot(r[:-1] - r[1:], p))


def ir_equiv_capacity(h, snr: SnrPoint) -> float:
    """IR equivalent capacity: plain MIMO mutual information, round-independent."""
    return mimo_mutual_info(h, snr)


def cc_equiv_capacity(h, snr: SnrPoint, n: int) -> float:
    """Chase-combining equivalent capacity after n rounds.

    Repetition stacks n copies of H; the Kronecker structure collapses to
    (1/n) log2 det(I + n*snr/lt * H H^H).
    """
    if n < 1 or int(n) != n:
        raise ValueError(f"round index must be a positive integer, got {n}")
    mat = _as_matrix(h)
    eigs = gram_eigenvalues(mat[None])[0]
    return float(mutual_info_from_eigs(eigs, snr.linear, mat.shape[1], boost=float(n))) / n


def _ir_free_optimum(values: np.ndarray, n_max: int):
    """Exact maximization of sum_n (R(n)-R(n+1)) * Phat(C >= R(n)) over
    nonincreasing rate vectors, on the empirical measure.

    Candidate thresholds are the sample values themselves: raising any rate
    to the next sample value never lowers a survival probability, so no
    interior point beats a quantile. The round-by-round DP maximizes

        B[t][i] = u[i]*q[i] + max_{i' <= i} (B[t+1][i'] - u[i']*q[i])

    where u are the distinct sample values and q their survival weights.
    The inner maximum is an upper envelope of lines a - u[i']*x queried at
    decreasing x = q[i] while lines arrive with decreasing slope, which the
    monotone convex hull trick resolves in linear time per round.
    """
    m = values.size
    u, first = np.unique(values, return_index=True)
    q = (m - np.searchsorted(values, u, side="left")) / m
    r = u.size

    levels = [None] * (n_max + 1)  # levels[t] = B[t], 1-indexed rounds
    b_next = u * q
    levels[n_max] = b_next
    for t in range(n_max - 1, 0, -1):
        env = np.empty(r)
        hull_a: list[float] = []
        hull_b: list[float] = []
        ptr = 0
        bn = b_next
        for i in range(r):
            a2, b2 = bn[i], -u[i]
            # pop back lines dominated once (a2, b2) joins the envelope
            while len(hull_a) >= 2:
                a0, b0 = hull_a[-2], hull_b[-2]
                a1, b1 = hull_a[-1], hull_b[-1]
                if (a2 - a0) * (b0 - b1) >= (a1 - a0) * (b0 - b2):
                    hull_a.pop()
                    hull_b.pop()
                else:
                    break
            hull_a.append(a2)
            hull_b.append(b2)
            if ptr >= len(hull_a):
                ptr = len(hull_a) - 1
            x = q[i]
            while ptr + 1 < len(hull_a) and (
                hull_a[ptr + 1] + hull_b[ptr + 1] * x >= hull_a[ptr] + hull_b[ptr] * x
            ):
                ptr += 1
            env[i] = hull_a[ptr] + hull_b[ptr] * x
        b_next = u * q + env
        levels[t] = b_next

    # forward reconstruction; first argmax yields the lexicographically
    # smallest rate vector among maximizers
    idx = int(np.argmax(levels[1]))
    best = float(levels[1][idx])
    chosen = [idx]
    for t in range(2, n_max + 1):
        prev = chosen[-1]
        cand = levels[t][: prev + 1] - u[: prev + 1] * q[chosen[-1]]
        chosen.append(int(np.argmax(cand)))
    rates = u[chosen]
    probs = q[chosen]
    return rates, probs, best


def _staircase_scalar_optimum(per_round_sorted: Sequence[np.ndarray], t_cum: np.ndarray,
                              m: int):
    """Maximize R * sum_n coef_n * Phat(C_n >= R / T^(n)) over the scalar R.

    coef_n = T_{n+1} / (T^(n) T^(n+1)) with the T^(N+1) = inf convention,
    so the final coefficient is 1/T^(N). The objective is piecewise linear
    and increasing between threshold crossings, so the optimum sits where
    some round threshold coincides with a sample; evaluating at the
    crossing set {T^(n) * c : c sample of round n} is exact.
    Returns (r_star, value, success_probs).
    """
    n_max = len(per_round_sorted)
    coef = np.empty(n_max)
    coef[: n_max - 1] = np.diff(t_cum) / (t_cum[:-1] * t_cum[1:])
    coef[n_max - 1] = 1.0 / t_cum[-1]

    cands = np.unique(np.concatenate([t_cum[n] * per_round_sorted[n] for n in range(n_max)]))
    obj = np.zeros_like(cands)
    for n in range(n_max):
        surv = m - np.searchsorted(per_round_sorted[n], cands / t_cum[n], side="left")
        obj += coef[n] * (surv / m)
    obj *= cands
    best = int(np.argmax(obj))  # first maximizer = smallest R
    r_star = float(cands[best])
    probs = np.array([
        (m - np.searchsorted(per_round_sorted[n], r_star / t_cum[n], side="left")) / m
        for n in range(n_max)
    ])
    return r_star, float(obj[best]), probs


def optimize_ir_rates(capacity_samples: CapacitySampleSet, n_max: int,
                      round_weights=None) -> AvgRateResult:
    """Optimal IR rate assignment on an empirical capacity distribution.

    With round_weights=None the per-round rates are free (subject only to
    monotonicity) and the search is exact on the sample measure. A weights
    vector fixes the per-round slot lengths, constraining the rates to
    R / T^(n) with T^(n) the cumulative length, and reduces the problem to
    a one-dimensional search; "uniform" means unit slots per round.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    values = capacity_samples.values
    if round_weights is None:
        rates, probs, best = _ir_free_optimum(values, n_max)
        return AvgRateResult(
            optimal_rates=RoundRates(tuple(rates)),
            avg_rate=best,
            success_probs=probs,
            samples_used=capacity_samples.count,
        )
    if isinstance(round_weights, str):
        if round_weights != "uniform":
            raise ValueError(f"unknown round_weights spec: {round_weights!r}")
        round_weights = [1.0] * n_max
    w = np.asarray(round_weights, dtype=float)
    if w.shape != (n_max,) or np.any(w <= 0):
        raise ValueError("round_weights must be n_max positive slot lengths")
    t_cum = np.cumsum(w)
    r_star, best, probs = _staircase_scalar_optimum([values] * n_max, t_cum,
                                                    capacity_samples.count)
    return AvgRateResult(
        optimal_rates=RoundRates(tuple(r_star / t_cum)),
        avg_rate=best,
        success_probs=probs,
        samples_used=capacity_samples.count,
    )


def optimize_cc_rate(snr: SnrPoint, lt: int, lr: int, n_max: int, mc: int,
                     stream: Generator) -> AvgRateResult:
    """Optimal Chase-combining initial rate by Monte Carlo.

    Each channel draw is held fixed across rounds; round n succeeds when
    log2 det(I + n*snr/lt * H H^H) reaches the initial rate R, so the
    terminating round is a deterministic function of (H, R) and the
    objective sum_n (R/n) * Phat(first success at n) is evaluated exactly
    on the sample set at every crossing candidate.
    """
    if mc < 1000:
        raise ValueError("mc must be at least 1e3")
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    eigs = gram_eigenvalues(sample_channels(lt, lr, mc, stream))
    # accumulated (un-normalized) capacity through round n, increasing in n
    m_sorted = [np.sort(mutual_info_from_eigs(eigs, snr.linear, lt, boost=float(n)))
                for n in range(1, n_max + 1)]

    cands = np.unique(np.concatenate(m_sorted))
    cnt_prev = np.where(cands > 0, mc, 0)  # round 0 capacity is 0
    obj = np.zeros_like(cands)
    counts = []
    for n in range(n_max):
        cnt = np.searchsorted(m_sorted[n], cands, side="left")
        counts.append(cnt)
        obj += (cands / (n + 1)) * (cnt_prev - cnt) / mc
        cnt_prev = cnt
    best = int(np.argmax(obj))
    r_star = float(cands[best])
    probs = np.array([(mc - counts[n][best]) / mc for n in range(n_max)])
    return AvgRateResult(
        optimal_rates=RoundRates(tuple(r_star / n for n in range(1, n_max + 1))),
        avg_rate=float(obj[best]),
        success_probs=probs,
        samples_used=mc,
    )


def ergodic_capacity(snr: SnrPoint, lt: int, lr: int, mc: int, stream: Generator) -> float:
    """Monte Carlo ergodic capacity, the upper reference for every protocol."""
    if mc < 1000:
        raise ValueError("mc must be at least 1e3")
    eigs = gram_eigenvalues(sample_channels(lt, lr, mc, stream))
    return float(np.mean(mutual_info_from_eigs(eigs, snr.linear, lt)))
