"""Multi-round pairwise error probability machinery.

Joint maximum-likelihood decisions across ARQ rounds share the same noise,
so the per-round decision metrics form a correlated Gaussian vector. This
module builds that covariance, estimates the induced orthant probabilities,
aggregates them into union bounds on the round-n error probability, and
provides diversity-order tools.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.random import Generator
from scipy import stats

from .channel import SnrPoint, _as_matrix, sample_channels
from .ldc import LdcCode, codewords

__all__ = [
    "SymbolSet",
    "PairwiseCovariance",
    "QnEstimate",
    "UnionBoundEstimate",
    "DiversityFit",
    "WorkBudgetError",
    "qpsk_point",
    "pairwise_distance",
    "build_covariance",
    "q_n",
    "union_bound",
    "optimal_diversity",
    "diversity_estimate",
]


class WorkBudgetError(RuntimeError):
    def __init__(self, required: float, budget: float):
        super().__init__(
            f"enumeration needs ~{required:.3g} elementary terms, over the budget of {budget:.3g}; "
            "reduce the constellation, the round count, or the channel samples"
        )
        self.required = required
        self.budget = budget


def qpsk_point(b0: int, b1: int) -> complex:
    """Gray-labeled unit-energy QPSK: bit pair (b0, b1) -> ((1-2b0) + j(1-2b1))/sqrt(2)."""
    return ((1 - 2 * b0) + 1j * (1 - 2 * b1)) / math.sqrt(2.0)


@dataclass(frozen=True)
class SymbolSet:
    """Enumerated transmit vectors with their bit labels.

    vectors: (M, K) complex, labels: (M, bits) in {0, 1}. Index order is the
    label read as a binary number, most significant bit first.
    """

    vectors: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=complex)
        lab = np.asarray(self.labels, dtype=np.uint8)
        if v.ndim != 2 or lab.ndim != 2 or v.shape[0] != lab.shape[0]:
            raise ValueError("vectors and labels must be (M, K) and (M, bits)")
        if len({tuple(np.round(row, 12)) for row in v}) != v.shape[0]:
            raise ValueError("symbol vectors must be distinct")
        v.setflags(write=False)
        lab.setflags(write=False)
        object.__setattr__(self, "vectors", v)
        object.__setattr__(self, "labels", lab)

    @property
    def m(self) -> int:
        return self.vectors.shape[0]

    @property
    def k(self) -> int:
        return self.vectors.shape[1]

    @classmethod
    def qpsk(cls, k: int) -> "SymbolSet":
        """All 4^k QPSK vectors over k symbols, unit energy per symbol."""
        if k < 1:
            raise ValueError("k must be >= 1")
        m = 4 ** k
        n_bits = 2 * k
        idx = np.arange(m)
        labels = (idx[:, None] >> np.arange(n_bits - 1, -1, -1)) & 1
        vectors = np.empty((m, k), dtype=complex)
        for sym in range(k):
            b0 = labels[:, 2 * sym]
            b1 = labels[:, 2 * sym + 1]
            vectors[:, sym] = ((1 - 2 * b0) + 1j * (1 - 2 * b1)) / math.sqrt(2.0)
        return cls(vectors=vectors, labels=labels.astype(np.uint8))


@dataclass(frozen=True)
class PairwiseCovariance:
    """Covariance of the per-round metric noise plus the decision thresholds.

    r_w[k, l] = 2 Re<D^(min), D^(min)>_F at the earlier round's prefix;
    the diagonal is 2 d_E^(k)^2 and thresholds[k] = d_E^(k)^2.
    """

    r_w: np.ndarray
    thresholds: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.r_w, dtype=float)
        t = np.asarray(self.thresholds, dtype=float)
        n = t.size
        if r.shape != (n, n):
            raise ValueError("covariance must be square, one row per round")
        scale = max(1.0, float(np.abs(r).max()))
        if np.abs(r - r.T).max() > 1e-12 * scale:
            raise ValueError("covariance must be symmetric")
        if np.abs(np.diag(r) - 2 * t).max() > 1e-9 * scale:
            raise ValueError("diagonal must equal twice the squared distances")
        eigs = np.linalg.eigvalsh(r)
        if eigs[0] < -1e-10 * max(1.0, eigs[-1]):
            raise RuntimeError(f"covariance not PSD (min eig {eigs[0]:.3g}); construction bug")
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "r_w", r)
        object.__setattr__(self, "thresholds", t)

    @property
    def n(self) -> int:
        return self.thresholds.size


def _diff_matrix(h: np.ndarray, code: LdcCode, snr: SnrPoint, s_a, s_b, tn: int) -> np.ndarray:
    """sqrt(snr/lt) * H * (X(s_a) - X(s_b)) over the first tn columns."""
    delta = np.asarray(s_a, dtype=complex) - np.asarray(s_b, dtype=complex)
    dx = (np.einsum("k,kij->ij", delta, code.c_mats[:, :, :tn])
          + np.einsum("k,kij->ij", delta.conj(), code.d_mats[:, :, :tn]))
    return math.sqrt(snr.linear / code.lt) * (h @ dx)


def pairwise_distance(h, code: LdcCode, snr: SnrPoint, s_i, s_j, n: int) -> float:
    """Squared Euclidean distance between received codewords after round n."""
    if not 1 <= n <= code.n_rounds:
        raise ValueError(f"round index must be in [1, {code.n_rounds}], got {n}")
    tn = int(code.t_cum[n - 1])
    d = _diff_matrix(_as_matrix(h), code, snr, s_i, s_j, tn)
    return float(np.sum(np.abs(d) ** 2))


def build_covariance(h, code: LdcCode, snr: SnrPoint, s_j, competitors) -> PairwiseCovariance:
    """Joint statistics of the metric noise for one competitor per round.

    competitors[l] is the erroneous hypothesis at round l+1; all must differ
    from the transmitted s_j. The (k, l) entry with l >= k evaluates the
    Frobenius inner product at the earlier prefix T^(k).
    """
    h = _as_matrix(h)
    comp = [np.asarray(c, dtype=complex) for c in competitors]
    n = len(comp)
    if not 1 <= n <= code.n_rounds:
        raise ValueError(f"need between 1 and {code.n_rounds} competitors, got {n}")
    s_j = np.asarray(s_j, dtype=complex)
    for c in comp:
        if np.allclose(c, s_j):
            raise ValueError("competitors must differ from the transmitted vector")
    t_full = int(code.t_cum[n - 1])
    diffs = np.stack([_diff_matrix(h, code, snr, c, s_j, t_full) for c in comp])
    t_cum = code.t_cum
    r_w = np.zeros((n, n))
    thresholds = np.zeros(n)
    for k in range(n):
        tk = int(t_cum[k])
        dk = diffs[k][:, :tk]
        thresholds[k] = np.sum(np.abs(dk) ** 2)
        for l in range(k, n):
            inner = np.sum(dk * diffs[l][:, :tk].conj())
            r_w[k, l] = 2.0 * inner.real
            r_w[l, k] = r_w[k, l]
    return PairwiseCovariance(r_w=r_w, thresholds=thresholds)


@dataclass(frozen=True)
class QnEstimate:
    value: float
    stderr: float
    draws: int


def q_n(cov: PairwiseCovariance, mc: int = 100_000, stream: Generator | None = None,
        method: str = "auto") -> QnEstimate:
    """P(W_k < -d_k^2 for all k) for the zero-mean Gaussian metric noise.

    The single-round case reduces to the Gaussian tail Q(sqrt(d^2/2)) and is
    returned in closed form; otherwise the orthant probability is estimated
    by Monte Carlo through an eigen-factor of the covariance, sampling only
    the positive-eigenvalue subspace (degenerate directions are deterministic
    and resolved by direct comparison).
    """
    if method not in ("auto", "mc"):
        raise ValueError(f"unknown method {method!r}")
    t = cov.thresholds
    if method == "auto" and cov.n == 1:
        d2 = t[0]
        if d2 == 0.0:
            return QnEstimate(0.0, 0.0, 0)
        return QnEstimate(float(stats.norm.sf(math.sqrt(d2 / 2.0))), 0.0, 0)
    if stream is None:
        raise ValueError("Monte Carlo estimation needs a random stream")
    if mc < 1:
        raise ValueError("mc must be positive")
    eigs, vecs = np.linalg.eigh(cov.r_w)
    keep = eigs > max(eigs[-1], 0.0) * 1e-12
    factor = vecs[:, keep] * np.sqrt(eigs[keep])
    draws = stream.standard_normal((mc, int(keep.sum())))
    w = draws @ factor.T
    hits = np.all(w < -t, axis=1)
    p = float(hits.mean())
    return QnEstimate(p, math.sqrt(max(p * (1 - p), 0.0) / mc), mc)


@dataclass(frozen=True)
class UnionBoundEstimate:
    value: float
    stderr: float
    n: int
    h_samples: int


def union_bound(code: LdcCode, symbol_set: SymbolSet, snr: SnrPoint, lr: int, n: int,
                h_samples: int, mc_per_h: int, stream: Generator,
                work_budget: float = 1e8) -> UnionBoundEstimate:
    """Union bound on the probability that all of rounds 1..n decode wrongly.

    (1/M) sum_j sum_{i_1 != j} ... sum_{i_n != j} E_H[Q_n(d^2, R_w)]. The sum
    over competitor tuples factorizes per noise draw: sharing the draws gives
    E_Z[prod_k sum_{i != j} 1{W_i^(k) < -d_k(i)^2}], an unbiased estimator of
    the same quantity; n = 1 uses the closed-form tail instead. The standard
    error is taken across the per-channel means.
    """
    if not 1 <= n <= code.n_rounds:
        raise ValueError(f"n must be in [1, {code.n_rounds}], got {n}")
    m = symbol_set.m
    required = float(m) ** n * (m - 1) * h_samples
    if required > work_budget:
        raise WorkBudgetError(required, work_budget)

    t_cum = code.t_cum[:n].astype(int)
    t_n = int(t_cum[-1])
    scale = math.sqrt(snr.linear / code.lt)
    # X(s_i) over the first T^(n) columns, all hypotheses at once
    x_all = codewords(code, symbol_set.vectors)[:, :, :t_n]
    if n == 1:
        per_h = np.empty(h_samples)
        done = 0
        while done < h_samples:
            batch = min(4096, h_samples - done)
            h = sample_channels(code.lt, lr, batch, stream)
            y_all = scale * np.einsum("srt,mtc->smrc", h, x_all)  # (B, M, lr, t_n)
            diff = y_all[:, :, None] - y_all[:, None, :]
            d2 = np.sum(np.abs(diff) ** 2, axis=(3, 4))
            d2[:, np.arange(m), np.arange(m)] = np.inf  # i == j contributes nothing
            per_h[done:done + batch] = stats.norm.sf(np.sqrt(d2 / 2.0)).sum(axis=(1, 2)) / m
            done += batch
        value = float(per_h.mean())
        stderr = float(per_h.std(ddof=1) / math.sqrt(h_samples)) if h_samples > 1 else 0.0
        return UnionBoundEstimate(value=value, stderr=stderr, n=1, h_samples=h_samples)
    per_h = np.empty(h_samples)
    for hs in range(h_samples):
        h = sample_channels(code.lt, lr, 1, stream)[0]
        y_all = scale * np.einsum("rt,mtc->mrc", h, x_all)  # (M, lr, t_n)
        total_j = 0.0
        for j in range(m):
            d = np.delete(y_all - y_all[j], j, axis=0)  # (M-1, lr, t_n)
            z = (stream.standard_normal((mc_per_h, lr, t_n))
                 + 1j * stream.standard_normal((mc_per_h, lr, t_n))) / math.sqrt(2.0)
            prod = np.ones(mc_per_h)
            for k in range(n):
                tk = int(t_cum[k])
                dk = d[:, :, :tk].reshape(m - 1, -1)
                zk = z[:, :, :tk].reshape(mc_per_h, -1)
                w = 2.0 * (dk @ zk.conj().T).real  # (M-1, mc)
                d2k = np.sum(np.abs(dk) ** 2, axis=1)
                prod *= (w < -d2k[:, None]).sum(axis=0)
            total_j += float(prod.mean())
        per_h[hs] = total_j / m
    value = float(per_h.mean())
    stderr = float(per_h.std(ddof=1) / math.sqrt(h_samples)) if h_samples > 1 else 0.0
    return UnionBoundEstimate(value=value, stderr=stderr, n=n, h_samples=h_samples)


def optimal_diversity(lt: int, lr: int, t_cum: int) -> int:
    """Best achievable diversity order after accumulating t_cum slots."""
    if lt < 1 or lr < 1 or t_cum < 1:
        raise ValueError("antenna counts and cumulative slots must be positive")
    return lr * min(t_cum, lt)


@dataclass(frozen=True)
class DiversityFit:
    slope: float
    ci_low: float
    ci_high: float
    stderr: float
    points_used: int


def diversity_estimate(snr_db, per, window_db: float = 6.0,
                       confidence: float = 0.95) -> DiversityFit:
    """Diversity order as the high-SNR slope of -log10(PER) vs SNR/10 dB.

    Fits ordinary least squares over the points within `window_db` of the
    largest SNR; the confidence interval comes from the regression residuals.
    """
    snr_db = np.asarray(snr_db, dtype=float)
    per = np.asarray(per, dtype=float)
    if snr_db.shape != per.shape:
        raise ValueError("snr and PER arrays must align")
    sel = snr_db >= snr_db.max() - window_db
    if np.any(per[sel] <= 0):
        raise ValueError("zero PER estimate in the fit window; insufficient trials")
    x = snr_db[sel] / 10.0
    y = -np.log10(per[sel])
    if x.size < 3:
        raise ValueError("need at least 3 points in the fit window")
    fit = stats.linregress(x, y)
    half = stats.t.ppf(0.5 + confidence / 2.0, x.size - 2) * fit.stderr
    return DiversityFit(slope=float(fit.slope), ci_low=float(fit.slope - half),
                        ci_high=float(fit.slope + half), stderr=float(fit.stderr),
                        points_used=int(x.size))
