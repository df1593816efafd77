"""Figure builders: one kind per analysis plot, rendered from archives.

Every builder returns (fig, aggregates) where ``aggregates`` holds exactly
the numbers drawn — means, standard errors, histogram fractions — computed
with the same statistics the experiment summaries use, so plots can be
checked against the archived CSVs without touching the image.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from .io import RunDirError, load_many_summaries, load_rates, load_trajectories  # noqa: E402

PROTOCOL_ORDER = ("curriculum", "random-order", "no-fading")
PROTOCOL_COLOR = {"curriculum": "tab:blue", "random-order": "tab:red",
                  "no-fading": "tab:orange"}

KINDS = ("loss-vs-sigma", "coverage-hist", "loss-trajectories",
         "theta-alignment", "rate-heatmap", "coverage-by-k", "gap-vs-sigma",
         "loss-gap-vs-sigma", "transition-heatmap", "relevant-norms")


@dataclass
class FigureSpec:
    kind: str
    runs: list[str]
    out: str
    dpi: int = 150
    title: str = ""
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}; "
                             f"known: {', '.join(KINDS)}")
        if not self.runs:
            raise RunDirError("at least one run directory is required")


def _se(x) -> float:
    x = np.asarray(x, dtype=float)
    if len(x) < 2:
        return 0.0
    return float(x.std(ddof=1) / np.sqrt(len(x)))


def render(spec: FigureSpec):
    """Render one figure to spec.out; returns the plotted aggregates."""
    builder = _BUILDERS[spec.kind]
    fig, aggregates = builder(spec)
    if spec.title:
        fig.suptitle(spec.title)
    fig.savefig(spec.out, dpi=spec.dpi, bbox_inches="tight")
    plt.close(fig)
    return aggregates


# ---------------------------------------------------------------------------


def loss_vs_sigma(spec: FigureSpec):
    """Mean final population loss vs sigma, one curve per width K."""
    df = load_many_summaries(spec.runs)
    fig, ax = plt.subplots(figsize=(5, 3.4))
    agg = {}
    for kk, dk in sorted(df.groupby("k")):
        sigmas, means, ses = [], [], []
        for sg, dg in sorted(dk.groupby("sigma")):
            sigmas.append(sg)
            means.append(float(dg["final_loss"].mean()))
            ses.append(_se(dg["final_loss"]))
        ax.errorbar(sigmas, means, yerr=ses, marker="o", capsize=2,
                    label=f"K={int(kk)}")
        agg[int(kk)] = {"sigma": sigmas, "mean_loss": means, "se": ses}
    ax.set_xlabel(r"noise level $\sigma$")
    ax.set_ylabel("population loss (final)")
    ax.axhline(np.log(2), color="gray", lw=0.8, ls=":", label="chance")
    ax.legend()
    return fig, agg


def coverage_hist(spec: FigureSpec):
    """Grouped bars: fraction of runs at each coverage level per protocol."""
    df = load_many_summaries(spec.runs)
    protos = [p for p in PROTOCOL_ORDER if p in set(df["protocol"])]
    if not protos:
        raise RunDirError("no known protocols in the given runs")
    fig, ax = plt.subplots(figsize=(5, 3.4))
    width = 0.8 / len(protos)
    agg = {}
    for i, proto in enumerate(protos):
        cov = df.loc[df["protocol"] == proto, "final_coverage"].to_numpy()
        fracs = [float((cov == lvl).mean()) for lvl in range(5)]
        agg[proto] = {"fractions": fracs, "n_runs": int(len(cov)),
                      "mean_coverage": float(cov.mean())}
        ax.bar(np.arange(5) + (i - (len(protos) - 1) / 2) * width, fracs,
               width=width, label=proto, color=PROTOCOL_COLOR.get(proto))
    ax.set_xticks(range(5))
    ax.set_xlabel("cluster coverage")
    ax.set_ylabel("fraction of runs")
    ax.legend()
    return fig, agg


def loss_trajectories(spec: FigureSpec):
    """Loss-vs-time fans per protocol, with the ensemble mean highlighted."""
    df = pd.concat([load_trajectories(d) for d in spec.runs], ignore_index=True)
    protos = [p for p in PROTOCOL_ORDER if p in set(df["protocol"])]
    fig, axes = plt.subplots(1, len(protos), figsize=(3.2 * len(protos), 3.0),
                             sharey=True, squeeze=False)
    agg = {}
    for ax, proto in zip(axes[0], protos):
        dp = df[df["protocol"] == proto]
        for _, run in dp.groupby("run_id"):
            ax.plot(run["t"], run["loss"], color=PROTOCOL_COLOR.get(proto),
                    alpha=0.25, lw=0.7)
        mean = dp.groupby("t")["loss"].mean()
        ax.plot(mean.index, mean.to_numpy(), color="black", lw=1.6)
        ax.set_title(proto)
        ax.set_xlabel("time")
        agg[proto] = {"t": [float(x) for x in mean.index],
                      "mean_loss": [float(x) for x in mean.to_numpy()]}
    axes[0][0].set_ylabel("population loss")
    return fig, agg


def theta_alignment(spec: FigureSpec):
    """Final alignment with the left-out centroid vs initial angle."""
    df = load_many_summaries(spec.runs, required=("theta1", "final_m11",
                                                  "final_rho1"))
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(7.2, 3.0))
    agg = {}
    for proto, dp in sorted(df.groupby("protocol")):
        thetas, m_mean, m_se, r_mean = [], [], [], []
        for th, dg in sorted(dp.groupby("theta1")):
            thetas.append(float(th))
            m_mean.append(float(dg["final_m11"].mean()))
            m_se.append(_se(dg["final_m11"]))
            r_mean.append(float(dg["final_rho1"].mean()))
        color = PROTOCOL_COLOR.get(proto)
        ax1.errorbar(thetas, m_mean, yerr=m_se, marker="o", ms=3,
                     capsize=2, label=proto, color=color)
        ax2.plot(thetas, r_mean, marker="o", ms=3, label=proto, color=color)
        agg[proto] = {"theta1": thetas, "mean_m11": m_mean, "se_m11": m_se,
                      "mean_rho1": r_mean}
    ax1.axhline(0.0, color="gray", lw=0.8, ls=":")
    ax1.set_xlabel(r"initial angle $\theta_1$")
    ax1.set_ylabel(r"final $M_{11}$")
    ax2.set_xlabel(r"initial angle $\theta_1$")
    ax2.set_ylabel(r"final $\rho_1$")
    ax1.legend()
    return fig, agg


def rate_heatmap(spec: FigureSpec):
    """Heatmaps of the uncommitted-step rates over (phi, grid value)."""
    df = load_rates(spec.runs[0])
    mode = df["rate_mode"].iloc[0]
    phis = np.array(sorted(df["phi"].unique()))
    vals = np.array(sorted(df["value"].unique()))
    agg = {"phi": [float(p) for p in phis], "value": [float(v) for v in vals],
           "rate_mode": mode}
    fig, axes = plt.subplots(1, 2, figsize=(7.6, 3.0))
    for ax, col, label in ((axes[0], "d_m11", r"$dM_{11}$"),
                           (axes[1], "d_rho1", r"$d\rho_1$")):
        grid = np.full((len(vals), len(phis)), np.nan)
        for _, row in df.iterrows():
            i = int(np.argmin(np.abs(vals - row["value"])))
            j = int(np.argmin(np.abs(phis - row["phi"])))
            grid[i, j] = row[col]
        im = ax.imshow(grid, origin="lower", aspect="auto",
                       extent=(phis.min(), phis.max(), vals.min(), vals.max()),
                       cmap="RdBu_r",
                       vmin=-np.nanmax(np.abs(grid)),
                       vmax=np.nanmax(np.abs(grid)))
        fig.colorbar(im, ax=ax, label=label)
        ax.set_xlabel(r"fading factor $\varphi$")
        ax.set_ylabel(r"$M_{11}$" if mode == "m11" else r"$\rho_1$")
        agg[col] = grid.tolist()
    return fig, agg


def coverage_by_k(spec: FigureSpec):
    """Coverage histograms per width K (one panel per K, bars per protocol)."""
    df = load_many_summaries(spec.runs)
    ks = sorted(int(k) for k in df["k"].unique())
    protos = [p for p in PROTOCOL_ORDER if p in set(df["protocol"])]
    fig, axes = plt.subplots(1, len(ks), figsize=(3.0 * len(ks), 3.0),
                             sharey=True, squeeze=False)
    width = 0.8 / len(protos)
    agg = {}
    for ax, kk in zip(axes[0], ks):
        dk = df[df["k"] == kk]
        agg[kk] = {}
        for i, proto in enumerate(protos):
            cov = dk.loc[dk["protocol"] == proto, "final_coverage"].to_numpy()
            fracs = [float((cov == lvl).mean()) for lvl in range(5)]
            agg[kk][proto] = fracs
            ax.bar(np.arange(5) + (i - (len(protos) - 1) / 2) * width, fracs,
                   width=width, label=proto, color=PROTOCOL_COLOR.get(proto))
        ax.set_title(f"K = {kk}")
        ax.set_xticks(range(5))
        ax.set_xlabel("coverage")
    axes[0][0].set_ylabel("fraction of runs")
    axes[0][0].legend()
    return fig, agg


def _gap_curves(spec: FigureSpec, metric: str, ylabel: str):
    df = load_many_summaries(spec.runs)
    fig, ax = plt.subplots(figsize=(5.2, 3.4))
    agg = {}
    for kk, dk in sorted(df.groupby("k")):
        for other, style in (("curriculum", "-"), ("random-order", ":")):
            if other not in set(dk["protocol"]) or "no-fading" not in set(dk["protocol"]):
                continue
            sigmas, gaps, ses = [], [], []
            for sg, dg in sorted(dk.groupby("sigma")):
                nf = dg.loc[dg["protocol"] == "no-fading", metric]
                ot = dg.loc[dg["protocol"] == other, metric]
                if nf.empty or ot.empty:
                    continue
                sigmas.append(float(sg))
                gaps.append(float(nf.mean() - ot.mean()))
                ses.append(float(np.hypot(_se(nf), _se(ot))))
            label = f"K={int(kk)} {other}"
            line = ax.errorbar(sigmas, gaps, yerr=ses, marker="o", ms=3,
                               ls=style, capsize=2, label=label)
            agg[label] = {"sigma": sigmas, "gap": gaps, "se": ses}
    ax.axhline(0.0, color="gray", lw=0.8, ls=":")
    ax.set_xlabel(r"noise level $\sigma$")
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=7)
    return fig, agg


def gap_vs_sigma(spec: FigureSpec):
    """Gap in zero-noise error: no-fading minus curriculum / random order."""
    return _gap_curves(spec, "final_zero_noise_error",
                       "zero-noise error gap vs no-fading")


def loss_gap_vs_sigma(spec: FigureSpec):
    """Same comparison measured on the population loss."""
    return _gap_curves(spec, "final_loss", "loss gap vs no-fading")


def transition_heatmap(spec: FigureSpec):
    """Seed-paired coverage transition matrices between two noise levels."""
    df = load_many_summaries(spec.runs)
    sigmas = sorted(df["sigma"].unique())
    if len(sigmas) != 2:
        raise RunDirError(f"need exactly two sigma levels, got {sigmas}")
    lo, hi = sigmas
    protos = [p for p in PROTOCOL_ORDER if p in set(df["protocol"])]
    fig, axes = plt.subplots(1, len(protos), figsize=(3.2 * len(protos), 3.2),
                             squeeze=False)
    agg = {"sigma_from": float(lo), "sigma_to": float(hi)}
    for ax, proto in zip(axes[0], protos):
        dp = df[df["protocol"] == proto]
        a = dp[np.isclose(dp["sigma"], lo)].set_index("seed")["final_coverage"]
        b = dp[np.isclose(dp["sigma"], hi)].set_index("seed")["final_coverage"]
        seeds = sorted(set(a.index) & set(b.index))
        mat = np.zeros((5, 5))
        counts = np.zeros(5)
        for sd in seeds:
            i, j = int(a[sd]), int(b[sd])
            mat[i, j] += 1
            counts[i] += 1
        nz = counts > 0
        mat[nz] /= counts[nz, None]
        im = ax.imshow(mat, origin="lower", cmap="viridis", vmin=0, vmax=1)
        ax.set_title(proto, fontsize=9)
        ax.set_xlabel(f"coverage at {hi}")
        ax.set_ylabel(f"coverage at {lo}")
        agg[proto] = {"matrix": mat.tolist(),
                      "counts": [int(c) for c in counts],
                      "n_pairs": len(seeds)}
        fig.colorbar(im, ax=ax, fraction=0.046)
    return fig, agg


def relevant_norms(spec: FigureSpec):
    """Final per-unit relevant-manifold norms, units sorted per run."""
    df = load_trajectories(spec.runs[0])
    last = df[df["step"] == df["step"].max()]
    k = int(last["k"].iloc[0])
    cols = [f"relnorm_{i+1}" for i in range(k)]
    for c in cols:
        if c not in last.columns:
            raise RunDirError(f"{spec.runs[0]}: missing column {c}")
    norms = np.sort(last[cols].to_numpy(), axis=1)[:, ::-1]
    mean = norms.mean(axis=0)
    fig, ax = plt.subplots(figsize=(4.6, 3.0))
    for row in norms:
        ax.plot(range(1, k + 1), row, color="gray", alpha=0.25, lw=0.7)
    ax.plot(range(1, k + 1), mean, color="black", marker="o", ms=3, lw=1.6)
    ax.set_xlabel("hidden unit (sorted)")
    ax.set_ylabel("relevant-manifold norm")
    agg = {"mean_sorted_norms": [float(x) for x in mean],
           "n_runs": int(norms.shape[0])}
    return fig, agg


_BUILDERS = {
    "loss-vs-sigma": loss_vs_sigma,
    "coverage-hist": coverage_hist,
    "loss-trajectories": loss_trajectories,
    "theta-alignment": theta_alignment,
    "rate-heatmap": rate_heatmap,
    "coverage-by-k": coverage_by_k,
    "gap-vs-sigma": gap_vs_sigma,
    "loss-gap-vs-sigma": loss_gap_vs_sigma,
    "transition-heatmap": transition_heatmap,
    "relevant-norms": relevant_norms,
}
