"""Figure rendering for the CLI report path (PNG next to each CSV)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_capacity_cdf(rows, path):
    """rows: dicts with snr_db, rate, empirical_cdf, optional closed_form_cdf."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    snrs = sorted({r["snr_db"] for r in rows})
    for snr in snrs:
        sub = [r for r in rows if r["snr_db"] == snr]
        rates = [r["rate"] for r in sub]
        ax.plot(rates, [r["empirical_cdf"] for r in sub], label=f"{snr:g} dB empirical")
        if "closed_form_cdf" in sub[0]:
            ax.plot(rates, [r["closed_form_cdf"] for r in sub], "--",
                    label=f"{snr:g} dB closed form")
    ax.set_xlabel("rate [bits per channel use]")
    ax.set_ylabel("P(C <= rate)")
    ax.grid(True, alpha=0.4)
    ax.legend()
    _save(fig, path)


def plot_avg_rate(rows, path):
    """rows: dicts with protocol, snr_db, avg_rate."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for proto in sorted({r["protocol"] for r in rows}):
        sub = sorted((r for r in rows if r["protocol"] == proto), key=lambda r: r["snr_db"])
        ax.plot([r["snr_db"] for r in sub], [r["avg_rate"] for r in sub],
                marker="o", ms=3, label=proto)
    ax.set_xlabel("SNR [dB]")
    ax.set_ylabel("average rate [bits per channel use]")
    ax.grid(True, alpha=0.4)
    ax.legend()
    _save(fig, path)


def plot_pwep(rows, path):
    """rows: dicts with n, snr_db, bound."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for n in sorted({r["n"] for r in rows}):
        sub = sorted((r for r in rows if r["n"] == n), key=lambda r: r["snr_db"])
        ax.semilogy([r["snr_db"] for r in sub], [r["bound"] for r in sub],
                    marker="o", ms=3, label=f"union bound, n={n}")
    ax.set_xlabel("SNR [dB]")
    ax.set_ylabel("error probability bound")
    ax.grid(True, which="both", alpha=0.4)
    ax.legend()
    _save(fig, path)


def plot_linksim(rows, path):
    """rows: dicts with code, coded, snr_db, per, avg_rate."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10.5, 4.2))
    curves = sorted({(r["code"], r["coded"]) for r in rows})
    for code, coded in curves:
        sub = sorted((r for r in rows if r["code"] == code and r["coded"] == coded),
                     key=lambda r: r["snr_db"])
        label = f"{code} ({'coded' if coded else 'uncoded'})"
        snr = [r["snr_db"] for r in sub]
        per = [r["per"] for r in sub]
        if any(p > 0 for p in per):
            ax1.semilogy(snr, [max(p, 1e-12) for p in per], marker="o", ms=3, label=label)
        ax2.plot(snr, [r["avg_rate"] for r in sub], marker="o", ms=3, label=label)
    ax1.set_xlabel("SNR [dB]")
    ax1.set_ylabel("packet error rate")
    ax1.grid(True, which="both", alpha=0.4)
    ax1.legend()
    ax2.set_xlabel("SNR [dB]")
    ax2.set_ylabel("average rate [bits per channel use]")
    ax2.grid(True, alpha=0.4)
    ax2.legend()
    _save(fig, path)
