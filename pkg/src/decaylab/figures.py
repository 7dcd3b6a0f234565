"""Figure rendering for pipeline reports.

Every report stage that writes delimited output can also render the
matching figure next to it; these helpers keep the styling in one
place. All figures are written to files (PNG), never shown.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "save_decay_curve_figure",
    "save_comparison_figure",
    "save_functionals_figure",
    "save_event_study_figure",
    "save_field_profile_figure",
]

_DPI = 150


def _finish(fig, path: str | Path) -> str:
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return str(path)


def save_decay_curve_figure(path: str | Path, curve_rows: list[dict], model_names: list[str]) -> str:
    """Binned means with CIs and the fitted curves on one axis."""
    d = np.array([row["d_km"] for row in curve_rows])
    mean = np.array([row["binned_mean"] for row in curve_rows], dtype=float)
    lo = np.array([row["binned_ci_lo"] for row in curve_rows], dtype=float)
    hi = np.array([row["binned_ci_hi"] for row in curve_rows], dtype=float)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.errorbar(
        d, mean, yerr=[mean - lo, hi - mean], fmt="o", ms=3.5, lw=0.8,
        color="0.35", ecolor="0.7", label="binned mean (95% CI)",
    )
    for name in model_names:
        fitted = np.array([row[f"fitted_{name}"] for row in curve_rows], dtype=float)
        ax.plot(d, fitted, lw=1.6, label=name.replace("_", " "))
    ax.set_xlabel("distance to nearest source (km)")
    ax.set_ylabel("outcome")
    ax.legend(frameon=False, fontsize=8)
    return _finish(fig, path)


def save_comparison_figure(path: str | Path, comparison_rows: list[dict]) -> str:
    """Delta-AIC per model family."""
    names = [row["model"] for row in comparison_rows]
    deltas = [row["delta_aic"] for row in comparison_rows]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    bars = ax.bar(range(len(names)), deltas, color="0.55")
    for bar, row in zip(bars, comparison_rows):
        if row.get("best"):
            bar.set_color("tab:blue")
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels([n.replace("_", " ") for n in names], fontsize=8)
    ax.set_ylabel("delta AIC")
    return _finish(fig, path)


def save_functionals_figure(path: str | Path, functionals: dict) -> str:
    """Boundary, its evolution and velocity, gradient, and exposure panels."""
    kappa = functionals["kappa"]
    q = functionals["q"]
    d_star = functionals["boundary"]["d_star_km"]
    epsilon = functionals["boundary"]["epsilon"]
    xi_star = functionals["diffusion"]["xi_star"]
    horizon = functionals["exposure"]["horizon_years"]
    fig, axes = plt.subplots(2, 3, figsize=(11, 6.5))

    d = np.linspace(0, max(3.0 * d_star, 1.0), 300)
    tau = q * np.exp(-kappa * d)
    ax = axes[0, 0]
    ax.plot(d, tau, lw=1.6)
    ax.axvline(d_star, color="tab:red", lw=1.0, ls="--")
    ax.axhline(epsilon * q, color="0.6", lw=0.8, ls=":")
    ax.set_title(f"decay and boundary d*={d_star:.1f} km", fontsize=9)
    ax.set_xlabel("distance (km)")

    t = np.linspace(0.05, max(horizon, 1.0), 200)
    ax = axes[0, 1]
    ax.plot(t, xi_star * np.sqrt(t), lw=1.6)
    ax.set_title(f"boundary evolution, xi*={xi_star:.1f} km per sqrt(yr)", fontsize=9)
    ax.set_xlabel("time (yr)")

    ax = axes[0, 2]
    ax.plot(t, xi_star / (2.0 * np.sqrt(t)), lw=1.6)
    ax.set_title("boundary velocity (km/yr)", fontsize=9)
    ax.set_xlabel("time (yr)")

    ax = axes[1, 0]
    ax.plot(d, kappa * q * np.exp(-kappa * d), lw=1.6)
    ax.set_title("gradient magnitude (per km)", fontsize=9)
    ax.set_xlabel("distance (km)")

    ax = axes[1, 1]
    ax.plot(d, horizon * q * np.exp(-kappa * d), lw=1.6)
    ax.set_title(f"cumulative exposure over {horizon:g} yr", fontsize=9)
    ax.set_xlabel("distance (km)")

    ax = axes[1, 2]
    ax.axis("off")
    nu = functionals["diffusion"]["nu"]
    sens = functionals["diffusion"]["sensitivity_d_nu"]
    lines = [
        f"kappa = {kappa:.6f} /km",
        f"implied nu = {nu:,.0f} km^2/yr",
        f"d d*/d nu = {sens:.3e}",
        "elasticity of d* w.r.t. nu = 0.5",
    ]
    ax.text(0.02, 0.85, "\n".join(lines), transform=ax.transAxes, fontsize=9, va="top")
    return _finish(fig, path)


def save_event_study_figure(path: str | Path, coefficients: dict[int, tuple[float, float]]) -> str:
    ks = sorted(coefficients)
    betas = np.array([coefficients[k][0] for k in ks])
    ses = np.array([coefficients[k][1] for k in ks])
    fig, ax = plt.subplots(figsize=(6.5, 4))
    ax.errorbar(ks, betas, yerr=1.96 * ses, fmt="o", ms=4, lw=1.0, capsize=2)
    ax.axhline(0.0, color="0.6", lw=0.8)
    ax.axvline(-0.5, color="0.8", lw=0.8, ls="--")
    ax.set_xlabel("event time (years since opening)")
    ax.set_ylabel("effect")
    return _finish(fig, path)


def save_field_profile_figure(
    path: str | Path,
    radii: np.ndarray,
    values: np.ndarray,
    kappa_eff: float | None = None,
    window_km: tuple[float, float] | None = None,
) -> str:
    """Radial log-profile of a simulated field with the fitted tail."""
    mask = values > 0
    r = radii[mask]
    u = values[mask]
    order = np.argsort(r)
    r, u = r[order], u[order]
    fig, ax = plt.subplots(figsize=(6.5, 4))
    ax.semilogy(r, u, ".", ms=2, color="0.4", label="field")
    if kappa_eff is not None and window_km is not None and r.size:
        lo, hi = window_km
        inside = (r >= lo) & (r <= hi)
        if inside.any():
            anchor_r = r[inside][0]
            anchor_u = u[inside][0]
            rr = np.linspace(lo, hi, 100)
            ax.semilogy(
                rr,
                anchor_u * np.exp(-kappa_eff * (rr - anchor_r)),
                lw=1.5,
                color="tab:red",
                label=f"exp fit, kappa_eff={kappa_eff:.4g}/km",
            )
        ax.axvspan(lo, hi, color="tab:blue", alpha=0.08)
    ax.set_xlabel("radius (km)")
    ax.set_ylabel("field value")
    ax.legend(frameon=False, fontsize=8)
    return _finish(fig, path)
