"""Rayleigh MIMO channel primitives and capacity distributions.

Every rate or capacity in this package is expressed in bits per channel
use (base-2 logarithms throughout).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.random import Generator, Philox

__all__ = [
    "SnrPoint",
    "ChannelMatrix",
    "CapacitySampleSet",
    "channel_stream",
    "sample_channel",
    "sample_channels",
    "gram_eigenvalues",
    "mutual_info_from_eigs",
    "mimo_mutual_info",
    "chi2_cdf",
    "miso_capacity_cdf",
]

LOG2 = math.log(2.0)


def channel_stream(seed: int, stream: int = 0) -> Generator:
    """Counter-based random stream.

    (seed, stream) fully determines every draw, independent of what other
    streams do, so Monte Carlo batches keyed on distinct stream ids are
    reproducible and could run in parallel.
    """
    if seed < 0 or stream < 0:
        raise ValueError("seed and stream must be nonnegative integers")
    return Generator(Philox(key=np.array([seed, stream], dtype=np.uint64)))


@dataclass(frozen=True)
class SnrPoint:
    """Average SNR per receive antenna, stored as a linear power ratio."""

    linear: float

    def __post_init__(self):
        if not (self.linear >= 0.0):
            raise ValueError(f"SNR must be nonnegative, got {self.linear}")

    @classmethod
    def from_db(cls, db: float) -> "SnrPoint":
        return cls(10.0 ** (db / 10.0))

    @classmethod
    def from_linear(cls, linear: float) -> "SnrPoint":
        return cls(float(linear))

    @property
    def db(self) -> float:
        if self.linear == 0.0:
            return -math.inf
        return 10.0 * math.log10(self.linear)


@dataclass(frozen=True)
class ChannelMatrix:
    """One quasi-static fading realization, an lr x lt complex gain matrix."""

    h: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.h, dtype=complex)
        if h.ndim != 2 or h.shape[0] < 1 or h.shape[1] < 1:
            raise ValueError(f"channel matrix must be 2-D with positive dims, got shape {h.shape}")
        h.setflags(write=False)
        object.__setattr__(self, "h", h)

    @property
    def lr(self) -> int:
        return self.h.shape[0]

    @property
    def lt(self) -> int:
        return self.h.shape[1]


def _as_matrix(h) -> np.ndarray:
    if isinstance(h, ChannelMatrix):
        return h.h
    arr = np.asarray(h, dtype=complex)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"expected an lr x lt matrix, got shape {arr.shape}")
    return arr


def sample_channels(lt: int, lr: int, count: int, stream: Generator) -> np.ndarray:
    """Draw `count` i.i.d. Rayleigh channel matrices, shape (count, lr, lt).

    Entries are circularly symmetric complex Gaussian with unit variance
    (real and imaginary parts each of variance 1/2).
    """
    if lt < 1 or lr < 1:
        raise ValueError(f"antenna counts must be >= 1, got lt={lt}, lr={lr}")
    if count < 1:
        raise ValueError("count must be >= 1")
    re = stream.standard_normal((count, lr, lt))
    im = stream.standard_normal((count, lr, lt))
    return (re + 1j * im) / math.sqrt(2.0)


def sample_channel(lt: int, lr: int, stream: Generator) -> ChannelMatrix:
    """Draw a single Rayleigh channel realization."""
    return ChannelMatrix(sample_channels(lt, lr, 1, stream)[0])


def gram_eigenvalues(h_batch: np.ndarray) -> np.ndarray:
    """Eigenvalues of H H^H per matrix, shape (count, min(lr, lt)).

    Uses whichever Gram matrix is smaller; the nonzero spectrum is the same
    and zero eigenvalues contribute nothing to log-det capacities.
    """
    h_batch = np.asarray(h_batch, dtype=complex)
    if h_batch.ndim == 2:
        h_batch = h_batch[None]
    lr, lt = h_batch.shape[-2:]
    if lr <= lt:
        gram = h_batch @ h_batch.conj().swapaxes(-1, -2)
    else:
        gram = h_batch.conj().swapaxes(-1, -2) @ h_batch
    eigs = np.linalg.eigvalsh(gram)
    return np.maximum(eigs, 0.0)


def mutual_info_from_eigs(eigs: np.ndarray, snr_linear: float, lt: int, boost: float = 1.0) -> np.ndarray:
    """log2 det(I + boost*snr/lt * H H^H) from precomputed Gram eigenvalues."""
    return np.log1p((boost * snr_linear / lt) * eigs).sum(axis=-1) / LOG2


def mimo_mutual_info(h, snr: SnrPoint) -> float:
    """Mutual information of H under isotropic Gaussian input.

    Returns log2 det(I_lr + (snr/lt) H H^H) in bits per channel use,
    computed through the Hermitian eigendecomposition for stability.
    """
    mat = _as_matrix(h)
    eigs = gram_eigenvalues(mat[None])[0]
    return float(mutual_info_from_eigs(eigs, snr.linear, mat.shape[1]))


def chi2_cdf(g, lt: int):
    """CDF of the squared channel norm sum_i |h_i|^2 over lt antennas.

    F(g) = 1 - exp(-g) * sum_{k=0}^{lt-1} g^k / k!, the chi-square law with
    2*lt degrees of freedom (unit-mean exponentials per antenna).
    """
    if lt < 1 or int(lt) != lt:
        raise ValueError(f"lt must be a positive integer, got {lt}")
    g_arr = np.asarray(g, dtype=float)
    if np.any(g_arr < 0):
        raise ValueError("g must be nonnegative")
    term = np.ones_like(g_arr)
    total = np.ones_like(g_arr)
    for k in range(1, int(lt)):
        term = term * g_arr / k
        total = total + term
    with np.errstate(invalid="ignore"):
        out = 1.0 - np.exp(-g_arr) * total
    # g = inf makes exp(-g)*poly -> 0 * inf; the limit is 1
    out = np.where(np.isinf(g_arr), 1.0, out)
    out = np.clip(out, 0.0, 1.0)
    if np.isscalar(g) or np.ndim(g) == 0:
        return float(out)
    return out


def miso_capacity_cdf(rate, snr: SnrPoint, lt: int):
    """P(C <= rate) for an (lt, 1) MISO channel under isotropic input.

    Closed form F_G((2^rate - 1) * lt / snr); at snr = 0 any positive rate
    is in outage with probability one.
    """
    rate_arr = np.asarray(rate, dtype=float)
    if np.any(rate_arr < 0):
        raise ValueError("rate must be nonnegative")
    if snr.linear == 0.0:
        out = np.where(rate_arr > 0, 1.0, 0.0)
    else:
        out = chi2_cdf((np.exp2(rate_arr) - 1.0) * lt / snr.linear, lt)
    if np.isscalar(rate) or np.ndim(rate) == 0:
        return float(out)
    return np.asarray(out, dtype=float)


@dataclass(frozen=True)
class CapacitySampleSet:
    """Empirical capacity distribution: sorted nonnegative samples plus provenance."""

    values: np.ndarray
    seed: int
    count: int

    def __post_init__(self):
        values = np.sort(np.asarray(self.values, dtype=float))
        if values.size == 0:
            raise ValueError("sample set must be nonempty")
        if values[0] < 0:
            raise ValueError("capacity samples must be nonnegative")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "count", int(values.size))

    @classmethod
    def sample(cls, lt: int, lr: int, snr: SnrPoint, count: int, seed: int,
               stream_id: int = 0) -> "CapacitySampleSet":
        """Monte Carlo capacity samples of an (lt, lr) Rayleigh channel."""
        stream = channel_stream(seed, stream_id)
        h = sample_channels(lt, lr, count, stream)
        vals = mutual_info_from_eigs(gram_eigenvalues(h), snr.linear, lt)
        return cls(values=vals, seed=seed, count=count)

    def survival(self, rate) -> np.ndarray:
        """Empirical P(C >= rate)."""
        idx = np.searchsorted(self.values, np.asarray(rate, dtype=float), side="left")
        return (self.count - idx) / self.count

    def ecdf(self, rate) -> np.ndarray:
        """Empirical P(C <= rate)."""
        idx = np.searchsorted(self.values, np.asarray(rate, dtype=float), side="right")
        return idx / self.count
