"""Matplotlib renders for the reproduction recipes (Agg backend, files only)."""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .imaging import DensityImage  # noqa: E402

TWO_PI = 2 * math.pi


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def _show_image(ax, img: DensityImage, lim=None, gamma=0.5, cmap="jet"):
    g = img.grid
    ext = [g.x[0], g.x[-1], g.y[0], g.y[-1]]
    vmax = float(np.max(img.values)) or 1.0
    ax.imshow(np.clip(img.values / vmax, 0, 1) ** gamma, extent=ext, origin="lower", cmap=cmap)
    if lim is not None:
        ax.set_xlim(-lim, lim)
        ax.set_ylim(-lim, lim)
    ax.set_xlabel("x / r_S")
    ax.set_ylabel("y / r_S")


def ring_states(states, path):
    """Unwrapped phase and density of ring eigenstates against theta."""
    fig, (a, b) = plt.subplots(1, 2, figsize=(10, 4))
    for st in states:
        label = f"kappa={st.kappa:g}"
        a.plot(st.theta_grid / math.pi, st.unwrapped_phase() / math.pi, label=label)
        b.plot(st.theta_grid / math.pi, st.density * TWO_PI, label=label)
    a.set_xlabel("theta / pi")
    a.set_ylabel("arg phi / pi")
    b.set_xlabel("theta / pi")
    b.set_ylabel("2 pi |phi|^2")
    a.legend(fontsize=8)
    return _save(fig, path)


def image_panels(images, titles, path, lim=None, ncols=None):
    n = len(images)
    ncols = ncols or n
    nrows = int(math.ceil(n / ncols))
    fig, axes = plt.subplots(nrows, ncols, figsize=(4 * ncols, 4 * nrows), squeeze=False)
    for ax, img, title in zip(axes.ravel(), images, titles):
        _show_image(ax, img, lim)
        ax.set_title(title, fontsize=9)
    for ax in axes.ravel()[n:]:
        ax.axis("off")
    return _save(fig, path)


def spacing_vs_time(series, path, length_unit_um, line_slope_um_per_ms):
    """series: {label: [(t_ms, delta_um, err_um), ...]}"""
    fig, ax = plt.subplots(figsize=(5.5, 4))
    t_max = max(max(p[0] for p in pts) for pts in series.values())
    tt = np.linspace(0, 1.1 * t_max, 50)
    ax.plot(tt, line_slope_um_per_ms * tt, "k-", label="2 pi hbar t / (m r_S)")
    markers = iter("osd^v")
    for label, pts in series.items():
        t, d, e = (np.array(v) for v in zip(*pts))
        ax.errorbar(t, d, yerr=e, fmt=next(markers), ms=5, capsize=2, label=label)
    ax.set_xlabel("expansion time (ms)")
    ax.set_ylabel("fringe spacing (um)")
    ax.set_xlim(0, tt[-1])
    ax.set_ylim(0, None)
    ax.legend(fontsize=8)
    return _save(fig, path)


def ratio_vs_gamma(gamma_imprinted, ratio, ratio_err, path, n=0):
    fig, ax = plt.subplots(figsize=(5.5, 4))
    g = np.linspace(-math.pi, math.pi, 100)
    ax.plot(g, n - g / TWO_PI, "k-", label="Delta/delta = n - gamma / (2 pi)")
    ax.errorbar(gamma_imprinted, ratio, yerr=ratio_err, fmt="o", capsize=2, label="mean field")
    ax.set_xlabel("imprinted phase drop gamma (rad)")
    ax.set_ylabel("Delta / delta")
    ax.legend(fontsize=8)
    return _save(fig, path)


def analysis_overlay(img: DensityImage, report, path, barrier_theta=0.0, ridge=None, lim=None):
    """Image with the radial window, exclusion wedge and fitted ridge."""
    fig, ax = plt.subplots(figsize=(5.5, 5.5))
    _show_image(ax, img, lim)
    th = np.linspace(0, TWO_PI, 361)
    w = report.fit_windows
    for r in (w.get("r_lo"), w.get("r_hi")):
        if r is not None:
            ax.plot(r * np.cos(th), r * np.sin(th), "w--", lw=0.8)
    half = w.get("exclusion", 0.4)
    r_hi = w.get("r_hi", 1.0)
    for s in (-1, 1):
        a = barrier_theta + s * half
        ax.plot([0, r_hi * math.cos(a)], [0, r_hi * math.sin(a)], "w:", lw=0.8)
    if ridge is not None:
        v, r = ridge
        t = barrier_theta + math.pi + v
        ax.plot(r * np.cos(t), r * np.sin(t), "m-", lw=1.2)
    ax.set_title(f"n={report.winding_n}  Delta/delta={report.ratio:.3f}  gamma={report.gamma:.3f}",
                 fontsize=9)
    return _save(fig, path)


def scaling_plot(result, path):
    fig, (a, b) = plt.subplots(1, 2, figsize=(10, 4))
    a.plot(result.omega_t, result.width_ratio, "o-")
    a.axhline(1.0, color="k", lw=0.8)
    a.set_xlabel("omega t")
    a.set_ylabel("width / (w0 lambda)")
    b.plot(result.visibility_t / result.onset_predicted, result.visibility, "o-")
    b.axvline(1.0, color="k", lw=0.8, label="predicted onset")
    b.axvline(result.onset_ratio, color="r", lw=0.8, label="measured onset")
    b.set_xlabel("t / predicted onset")
    b.set_ylabel("circle visibility")
    b.legend(fontsize=8)
    return _save(fig, path)
