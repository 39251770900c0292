"""Linear dispersion codes for HARQ: representation, per-round mutual
information, optimality certificates, power checks, and the built-in zoo.

A codeword is X = sum_k s_k C_k + conj(s_k) D_k with spreading matrices
C_k, D_k of shape (lt, T). Columns are partitioned into ARQ rounds; round n
transmits the columns in [T^(n-1), T^(n)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.random import Generator

from .channel import SnrPoint, _as_matrix, sample_channels
from .harq import AvgRateResult, RoundRates, _staircase_scalar_optimum

__all__ = [
    "LdcCode",
    "UnknownCodeError",
    "prefix",
    "codewords",
    "real_equivalent_channels",
    "ldc_mutual_info",
    "ldc_mutual_info_samples",
    "Criterion1Report",
    "ResidualReport",
    "PowerReport",
    "check_criterion1",
    "check_theorem1",
    "check_corollary2",
    "check_power",
    "avg_rate_ldc",
    "optimal_ldc_avg_rate",
    "zoo",
    "ZOO_NAMES",
    "save_code",
    "load_code",
]


class UnknownCodeError(KeyError):
    pass


@dataclass(frozen=True)
class LdcCode:
    name: str
    lt: int
    t_total: int
    k: int
    round_lengths: tuple
    c_mats: np.ndarray
    d_mats: np.ndarray

    def __post_init__(self):
        rounds = tuple(int(t) for t in self.round_lengths)
        if any(t < 1 for t in rounds):
            raise ValueError(f"round lengths must be positive integers: {rounds}")
        if sum(rounds) != self.t_total:
            raise ValueError(f"round lengths {rounds} must sum to t_total={self.t_total}")
        c = np.ascontiguousarray(np.asarray(self.c_mats, dtype=complex))
        d = np.ascontiguousarray(np.asarray(self.d_mats, dtype=complex))
        want = (self.k, self.lt, self.t_total)
        if c.shape != want or d.shape != want:
            raise ValueError(f"spreading matrices must have shape {want}, got {c.shape}/{d.shape}")
        c.setflags(write=False)
        d.setflags(write=False)
        object.__setattr__(self, "round_lengths", rounds)
        object.__setattr__(self, "c_mats", c)
        object.__setattr__(self, "d_mats", d)

    @property
    def n_rounds(self) -> int:
        return len(self.round_lengths)

    @property
    def t_cum(self) -> np.ndarray:
        """Cumulative slot counts T^(n), n = 1..N."""
        return np.cumsum(self.round_lengths)

    @property
    def a_mats(self) -> np.ndarray:
        return self.c_mats + self.d_mats

    @property
    def b_mats(self) -> np.ndarray:
        return self.c_mats - self.d_mats


def prefix(code: LdcCode, n: int) -> LdcCode:
    """Truncate the code to its first n ARQ rounds (column prefix T^(n))."""
    if not 1 <= n <= code.n_rounds:
        raise ValueError(f"round index must be in [1, {code.n_rounds}], got {n}")
    tn = int(code.t_cum[n - 1])
    return LdcCode(
        name=code.name,
        lt=code.lt,
        t_total=tn,
        k=code.k,
        round_lengths=code.round_lengths[:n],
        c_mats=code.c_mats[:, :, :tn],
        d_mats=code.d_mats[:, :, :tn],
    )


def codewords(code: LdcCode, symbols: np.ndarray) -> np.ndarray:
    """Map symbol vectors (..., K) to codeword matrices (..., lt, T)."""
    s = np.asarray(symbols, dtype=complex)
    return np.einsum("...k,kij->...ij", s, code.c_mats) + np.einsum(
        "...k,kij->...ij", s.conj(), code.d_mats
    )


def real_equivalent_channels(h_batch: np.ndarray, code: LdcCode, n: int) -> np.ndarray:
    """Real channel G mapping the 2K symbol coordinates to the received signal.

    The accumulated round-n observation is a linear map of the real and
    imaginary symbol parts: stacking Re/Im of vec(Y^(n)) gives a real
    (2*lr*T^(n)) x (2K) matrix; column k comes from H A_k^(n) and column
    K+k from j H B_k^(n).
    """
    h_batch = np.asarray(h_batch, dtype=complex)
    squeeze = h_batch.ndim == 2
    if squeeze:
        h_batch = h_batch[None]
    tn = int(code.t_cum[n - 1])
    a = code.a_mats[:, :, :tn]
    b = code.b_mats[:, :, :tn]
    ha = np.einsum("srt,ktc->skrc", h_batch, a).reshape(h_batch.shape[0], code.k, -1)
    hb = 1j * np.einsum("srt,ktc->skrc", h_batch, b).reshape(h_batch.shape[0], code.k, -1)
    cols = np.concatenate([ha, hb], axis=1)  # (S, 2K, lr*tn), row per symbol coordinate
    g = np.concatenate([cols.real, cols.imag], axis=2)  # (S, 2K, 2*lr*tn)
    if squeeze:
        return g[0].T.copy()
    return g.swapaxes(1, 2)


def ldc_mutual_info_samples(h_batch: np.ndarray, code: LdcCode, snr: SnrPoint, n: int) -> np.ndarray:
    """Per-channel-use mutual information of the round-n prefix, batched over H.

    (1 / (2 T^(n))) * log2 det(I + (snr/lt) G G^T), evaluated through the
    smaller Gram matrix.
    """
    g = real_equivalent_channels(h_batch, code, n)
    if g.ndim == 2:
        g = g[None]
    rows, cols = g.shape[-2:]
    if cols <= rows:
        gram = g.swapaxes(-1, -2) @ g
    else:
        gram = g @ g.swapaxes(-1, -2)
    eigs = np.maximum(np.linalg.eigvalsh(gram), 0.0)
    tn = int(code.t_cum[n - 1])
    return np.log1p((snr.linear / code.lt) * eigs).sum(axis=-1) / math.log(2.0) / (2 * tn)


def ldc_mutual_info(h, code: LdcCode, snr: SnrPoint, n: int) -> float:
    """Mutual information of the dispersion structure after round n, one channel."""
    if not 1 <= n <= code.n_rounds:
        raise ValueError(f"round index must be in [1, {code.n_rounds}], got {n}")
    return float(ldc_mutual_info_samples(_as_matrix(h)[None], code, snr, n)[0])


# ---------------------------------------------------------------------------
# certificates


@dataclass(frozen=True)
class Criterion1Report:
    """Per-round capacity-losslessness audit against the MIMO channel."""

    code_name: str
    lr: int
    tol: float
    mi_gaps: tuple        # max over sampled (H, snr) of C_mimo - C_ld, per round
    passes: tuple

    def round_pass(self, n: int) -> bool:
        return self.passes[n - 1]


@dataclass(frozen=True)
class ResidualReport:
    """Structural unitarity certificate (spreading-matrix test)."""

    code_name: str
    applicable: bool
    reason: str
    residuals: tuple | None   # Frobenius residual per round, None if not applicable
    tol: float
    regime_ok: bool | None = None   # lr >= lt hypothesis, when lr was supplied
    full_rate: bool | None = None   # K == lt * T

    @property
    def passed(self) -> bool:
        return bool(self.applicable and self.residuals is not None
                    and max(self.residuals) < self.tol)


@dataclass(frozen=True)
class PowerReport:
    level: str
    residuals: tuple
    tol: float

    @property
    def passed(self) -> bool:
        return max(self.residuals) < self.tol


def check_criterion1(code: LdcCode, lr: int, snr_db_points=(0.0, 10.0, 20.0),
                     mc: int = 200, tol: float = 1e-6, stream: Generator | None = None,
                     seed: int = 0) -> Criterion1Report:
    """Audit C_ld^(n) == C_mimo for every round over sampled channels.

    The gap is two-sided: a round can also *exceed* the isotropic-input
    capacity when the code concentrates its per-round power (antenna
    switching does), and that too breaks capacity losslessness.
    """
    from .channel import channel_stream, gram_eigenvalues, mutual_info_from_eigs

    if stream is None:
        stream = channel_stream(seed, 3)
    h = sample_channels(code.lt, lr, mc, stream)
    eigs = gram_eigenvalues(h)
    gaps = np.zeros(code.n_rounds)
    for snr_db in snr_db_points:
        snr = SnrPoint.from_db(snr_db)
        c_mimo = mutual_info_from_eigs(eigs, snr.linear, code.lt)
        for n in range(1, code.n_rounds + 1):
            c_ld = ldc_mutual_info_samples(h, code, snr, n)
            gaps[n - 1] = max(gaps[n - 1], float(np.max(np.abs(c_mimo - c_ld))))
    return Criterion1Report(
        code_name=code.name, lr=lr, tol=tol,
        mi_gaps=tuple(gaps), passes=tuple(bool(g < tol) for g in gaps),
    )


def _stacked_dispersion(code: LdcCode, n: int, conjugate_block: bool) -> np.ndarray:
    """U^(n) (and the conjugation block when requested) from vectorized prefixes."""
    tn = int(code.t_cum[n - 1])
    u = code.c_mats[:, :, :tn].reshape(code.k, -1).T  # (lt*tn, K), column per symbol
    if not conjugate_block:
        return u
    v = code.d_mats[:, :, :tn].reshape(code.k, -1).T
    top = np.concatenate([u, v], axis=1)
    bot = np.concatenate([v.conj(), u.conj()], axis=1)
    return np.concatenate([top, bot], axis=0)


def check_theorem1(code: LdcCode, lr: int | None = None, tol: float = 1e-9) -> ResidualReport:
    """Unitarity certificate F^(n) F^(n)H = I for general (conjugating) codes.

    Stated for K = lt*T with lr >= lt; a code outside that regime gets a
    not-applicable report rather than an error.
    """
    if code.k != code.lt * code.t_total:
        return ResidualReport(code.name, False, f"requires K = lt*T (K={code.k}, lt*T={code.lt * code.t_total})",
                              None, tol, regime_ok=None if lr is None else bool(lr >= code.lt),
                              full_rate=False)
    res = []
    for n in range(1, code.n_rounds + 1):
        f = _stacked_dispersion(code, n, conjugate_block=True)
        eye = np.eye(f.shape[0])
        res.append(float(np.linalg.norm(f @ f.conj().T - eye)))
    regime = None if lr is None else bool(lr >= code.lt)
    applicable = regime is not False
    reason = "" if applicable else f"requires lr >= lt (lr={lr}, lt={code.lt})"
    return ResidualReport(code.name, applicable, reason, tuple(res), tol,
                          regime_ok=regime, full_rate=True)


def check_corollary2(code: LdcCode, tol: float = 1e-9) -> ResidualReport:
    """Unitarity certificate U^(n) U^(n)H = I for conjugation-free codes.

    Residuals are reported for any code with all D_k = 0; the iff semantics
    hold when K = lt*T (recorded in full_rate).
    """
    if np.any(np.abs(code.d_mats) > 0):
        return ResidualReport(code.name, False, "code uses conjugation (some D_k != 0)",
                              None, tol, full_rate=code.k == code.lt * code.t_total)
    res = []
    for n in range(1, code.n_rounds + 1):
        u = _stacked_dispersion(code, n, conjugate_block=False)
        eye = np.eye(u.shape[0])
        res.append(float(np.linalg.norm(u @ u.conj().T - eye)))
    return ResidualReport(code.name, True, "", tuple(res), tol,
                          full_rate=code.k == code.lt * code.t_total)


def check_power(code: LdcCode, level: str = "per-round", tol: float = 1e-9) -> PowerReport:
    """Transmit-power constraint residuals per ARQ round.

    per-round:  trace sum_k (A A^H + B B^H) = 2 lt T_n
    per-symbol: trace A_k A_k^H = trace B_k B_k^H = lt T_n / K, each k
    isotropic:  A_k A_k^H = B_k B_k^H = (T_n / K) I, each k
    The levels are strictly nested (isotropic => per-symbol => per-round).
    """
    bounds = np.concatenate([[0], code.t_cum])
    res = []
    for n in range(code.n_rounds):
        sl = slice(int(bounds[n]), int(bounds[n + 1]))
        a = code.a_mats[:, :, sl]
        b = code.b_mats[:, :, sl]
        t_n = code.round_lengths[n]
        if level == "per-round":
            total = np.sum(np.abs(a) ** 2) + np.sum(np.abs(b) ** 2)
            res.append(abs(total - 2 * code.lt * t_n))
        elif level == "per-symbol":
            target = code.lt * t_n / code.k
            ra = np.abs(np.sum(np.abs(a) ** 2, axis=(1, 2)) - target)
            rb = np.abs(np.sum(np.abs(b) ** 2, axis=(1, 2)) - target)
            res.append(float(np.max(np.concatenate([ra, rb]))))
        elif level == "isotropic":
            target = (t_n / code.k) * np.eye(code.lt)
            ga = a @ a.conj().swapaxes(-1, -2) - target
            gb = b @ b.conj().swapaxes(-1, -2) - target
            res.append(float(max(np.linalg.norm(ga, axis=(1, 2)).max(),
                                 np.linalg.norm(gb, axis=(1, 2)).max())))
        else:
            raise ValueError(f"unknown power level {level!r}")
    return PowerReport(level=level, residuals=tuple(res), tol=tol)


# ---------------------------------------------------------------------------
# average rate


def avg_rate_ldc(code: LdcCode, snr: SnrPoint, lr: int, n_max: int, mc: int,
                 stream: Generator, optimize_r: bool = True,
                 rate: float | None = None) -> AvgRateResult:
    """Average rate of the dispersion-coded protocol over Monte Carlo channels.

    Rbar = sum_n (R T_{n+1} / (T^(n) T^(n+1))) * Phat(C_ld^(n) >= R / T^(n)),
    with the final coefficient R / T^(N). When optimize_r, the scalar R is
    maximized exactly on the per-round sample measure; otherwise `rate`
    supplies R.
    """
    if not 1 <= n_max <= code.n_rounds:
        raise ValueError(f"n_max must be in [1, {code.n_rounds}], got {n_max}")
    h = sample_channels(code.lt, lr, mc, stream)
    per_round = [np.sort(ldc_mutual_info_samples(h, code, snr, n))
                 for n in range(1, n_max + 1)]
    t_cum = code.t_cum[:n_max].astype(float)
    if optimize_r:
        r_star, best, probs = _staircase_scalar_optimum(per_round, t_cum, mc)
    else:
        if rate is None:
            raise ValueError("rate is required when optimize_r is False")
        r_star = float(rate)
        probs = np.array([(mc - np.searchsorted(per_round[n], r_star / t_cum[n], side="left")) / mc
                          for n in range(n_max)])
        coef = np.empty(n_max)
        coef[: n_max - 1] = np.diff(t_cum) / (t_cum[:-1] * t_cum[1:])
        coef[n_max - 1] = 1.0 / t_cum[-1]
        best = float(r_star * np.dot(coef, probs))
    return AvgRateResult(
        optimal_rates=RoundRates(tuple(r_star / t_cum)),
        avg_rate=best,
        success_probs=probs,
        samples_used=mc,
    )


def optimal_ldc_avg_rate(snr: SnrPoint, lt: int, lr: int, n_max: int,
                         round_lengths=None, mc: int = 100_000,
                         stream: Generator | None = None, seed: int = 0) -> AvgRateResult:
    """Average rate of a capacity-lossless dispersion protocol (the reference).

    Uses plain MIMO mutual-information samples in place of C_ld; with unit
    round lengths the coefficients are R/(n(n+1)) and finally R/N.
    """
    from .channel import channel_stream, gram_eigenvalues, mutual_info_from_eigs

    if stream is None:
        stream = channel_stream(seed, 0)
    if round_lengths is None:
        round_lengths = [1] * n_max
    w = np.asarray(round_lengths, dtype=float)
    if w.shape != (n_max,) or np.any(w < 1):
        raise ValueError("round_lengths must give n_max positive slot counts")
    eigs = gram_eigenvalues(sample_channels(lt, lr, mc, stream))
    values = np.sort(mutual_info_from_eigs(eigs, snr.linear, lt))
    t_cum = np.cumsum(w)
    r_star, best, probs = _staircase_scalar_optimum([values] * n_max, t_cum, mc)
    return AvgRateResult(
        optimal_rates=RoundRates(tuple(r_star / t_cum)),
        avg_rate=best,
        success_probs=probs,
        samples_used=mc,
    )


# ---------------------------------------------------------------------------
# code zoo


def _alamouti() -> LdcCode:
    c1 = np.array([[1, 0], [0, 0]], dtype=complex)
    d1 = np.array([[0, 0], [0, 1]], dtype=complex)
    c2 = np.array([[0, 0], [1, 0]], dtype=complex)
    d2 = np.array([[0, -1], [0, 0]], dtype=complex)
    return LdcCode("alamouti", lt=2, t_total=2, k=2, round_lengths=(1, 1),
                   c_mats=np.stack([c1, c2]), d_mats=np.stack([d1, d2]))


def _sm_repetition(lt: int, n_rounds: int) -> LdcCode:
    # spatial multiplexing vector repeated in every slot
    c = np.zeros((lt, lt, n_rounds), dtype=complex)
    for k in range(lt):
        c[k, k, :] = 1.0
    return LdcCode("sm_repetition", lt=lt, t_total=n_rounds, k=lt,
                   round_lengths=(1,) * n_rounds,
                   c_mats=c, d_mats=np.zeros_like(c))


def _antenna_switching(lt: int) -> LdcCode:
    # one active antenna per slot; sqrt(lt) keeps the per-round power at 2*lt
    c = np.zeros((1, lt, lt), dtype=complex)
    for t in range(lt):
        c[0, t, t] = math.sqrt(lt)
    return LdcCode("antenna_switching", lt=lt, t_total=lt, k=1,
                   round_lengths=(1,) * lt,
                   c_mats=c, d_mats=np.zeros_like(c))


def _cdd(lt: int) -> LdcCode:
    # slot t transmits the symbol vector cyclically shifted by t
    c = np.zeros((lt, lt, lt), dtype=complex)
    for k in range(lt):
        for t in range(lt):
            c[k, (k + t) % lt, t] = 1.0
    return LdcCode("cdd", lt=lt, t_total=lt, k=lt, round_lengths=(1,) * lt,
                   c_mats=c, d_mats=np.zeros_like(c))


def _golden() -> LdcCode:
    theta = (1 + math.sqrt(5)) / 2
    theta_bar = (1 - math.sqrt(5)) / 2
    alpha = 1 + 1j * (1 - theta)
    alpha_bar = 1 + 1j * (1 - theta_bar)
    s = 1 / math.sqrt(5)
    c = np.zeros((4, 2, 2), dtype=complex)
    c[0] = s * np.array([[alpha, 0], [0, alpha_bar]])
    c[1] = s * np.array([[alpha * theta, 0], [0, alpha_bar * theta_bar]])
    c[2] = s * np.array([[0, alpha], [1j * alpha_bar, 0]])
    c[3] = s * np.array([[0, alpha * theta], [1j * alpha_bar * theta_bar, 0]])
    return LdcCode("golden", lt=2, t_total=2, k=4, round_lengths=(1, 1),
                   c_mats=c, d_mats=np.zeros_like(c))


ZOO_NAMES = ("alamouti", "sm_repetition", "antenna_switching", "cdd", "golden")


def zoo(name: str, lt: int = 2, n_rounds: int | None = None) -> LdcCode:
    """Built-in codes by name; `lt` and `n_rounds` apply where meaningful."""
    if name == "alamouti":
        if lt != 2:
            raise ValueError("alamouti is a 2-antenna code")
        return _alamouti()
    if name == "sm_repetition":
        return _sm_repetition(lt, 2 if n_rounds is None else n_rounds)
    if name == "antenna_switching":
        return _antenna_switching(lt)
    if name == "cdd":
        return _cdd(lt)
    if name == "golden":
        if lt != 2:
            raise ValueError("the golden code is a 2-antenna code")
        return _golden()
    raise UnknownCodeError(f"unknown code {name!r}; known codes: {', '.join(ZOO_NAMES)}")


# ---------------------------------------------------------------------------
# text code format
#
# Grammar (whitespace separated, '#' starts a comment to end of line):
#   name <token>
#   lt <int>
#   t_total <int>
#   k <int>
#   round_lengths <int> ... <int>
#   matrix C <k> / matrix D <k>, each followed by lt rows of t_total
#   "re,im" entries. All K C-matrices and K D-matrices must appear.
# Floats are written with repr(), so save -> load round-trips bit-exactly.


def save_code(code: LdcCode, path) -> None:
    lines = [
        f"name {code.name}",
        f"lt {code.lt}",
        f"t_total {code.t_total}",
        f"k {code.k}",
        "round_lengths " + " ".join(str(t) for t in code.round_lengths),
    ]
    for label, mats in (("C", code.c_mats), ("D", code.d_mats)):
        for k in range(code.k):
            lines.append(f"matrix {label} {k + 1}")
            for row in mats[k]:
                lines.append("  " + " ".join(f"{float(z.real)!r},{float(z.imag)!r}" for z in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_code(path) -> LdcCode:
    with open(path) as fh:
        raw = fh.read()
    tokens_by_line = []
    for line in raw.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            tokens_by_line.append(line.split())
    header: dict = {}
    mats: dict = {}
    i = 0
    while i < len(tokens_by_line):
        tok = tokens_by_line[i]
        key = tok[0]
        if key == "matrix":
            if "lt" not in header or "t_total" not in header:
                raise ValueError("matrix block before lt/t_total header")
            label, k = tok[1], int(tok[2])
            rows = []
            for r in range(header["lt"]):
                i += 1
                entries = tokens_by_line[i]
                if len(entries) != header["t_total"]:
                    raise ValueError(f"matrix {label} {k}: expected {header['t_total']} entries per row")
                row = []
                for ent in entries:
                    re_s, im_s = ent.split(",")
                    row.append(complex(float(re_s), float(im_s)))
                rows.append(row)
            mats[(label, k)] = np.array(rows, dtype=complex)
        elif key == "name":
            header["name"] = tok[1]
        elif key == "round_lengths":
            header["round_lengths"] = tuple(int(t) for t in tok[1:])
        elif key in ("lt", "t_total", "k"):
            header[key] = int(tok[1])
        else:
            raise ValueError(f"unrecognized directive {key!r}")
        i += 1
    for field_name in ("name", "lt", "t_total", "k", "round_lengths"):
        if field_name not in header:
            raise ValueError(f"missing header field {field_name!r}")
    kk = header["k"]
    try:
        c = np.stack([mats[("C", k + 1)] for k in range(kk)])
        d = np.stack([mats[("D", k + 1)] for k in range(kk)])
    except KeyError as exc:
        raise ValueError(f"missing matrix block: {exc.args[0]}") from None
    return LdcCode(name=header["name"], lt=header["lt"], t_total=header["t_total"],
                   k=kk, round_lengths=header["round_lengths"], c_mats=c, d_mats=d)
