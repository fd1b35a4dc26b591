"""Figure construction and deterministic file output.

Byte stability: the SVG id hash salt is pinned and the SVG date field is
suppressed, so re-rendering the same frame with the same matplotlib
version reproduces both formats bit-for-bit.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .frame import SchemaError, SweepFrame  # noqa: E402

matplotlib.rcParams["svg.hashsalt"] = "feelab-plots"

FORMATS = ("png", "svg")
DPI = 100


def _fmt(v: float) -> str:
    return format(v, "g")


def save_figure(fig, out_dir: str, stem: str, formats=FORMATS) -> list:
    paths = []
    for ext in formats:
        if ext not in FORMATS:
            raise ValueError(f"unknown format {ext!r}")
        path = os.path.join(out_dir, f"{stem}.{ext}")
        metadata = {"Date": None} if ext == "svg" else None
        fig.savefig(path, format=ext, dpi=DPI, metadata=metadata)
        paths.append(path)
    plt.close(fig)
    return paths


def build_penalty_figure(frame: SweepFrame, B: float):
    """Mean scheduled volume against the overshoot penalty for one target
    size, with a horizontal reference line at exactly B."""
    rows = frame.rows_for_b(B)
    if not rows:
        raise SchemaError(f"no sweep rows with B={_fmt(B)}")
    x = [r.c_over for r in rows]
    y = [r.mean_q_sched for r in rows]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(x, y, marker="o", color="tab:blue", label="mean scheduled volume")
    ax.axhline(B, linestyle="--", color="tab:red", label=f"target B = {_fmt(B)}")
    ax.set_xlabel("overshoot penalty c_over")
    ax.set_ylabel("mean scheduled volume (size units)")
    ax.set_title(f"Scheduled volume vs penalty, B = {_fmt(B)}")
    ax.legend()
    fig.tight_layout()
    return fig


def plot_volume_vs_penalty(frame: SweepFrame, B: float, out_dir: str,
                           formats=FORMATS) -> list:
    return save_figure(build_penalty_figure(frame, B), out_dir,
                       f"volume_vs_penalty_B{_fmt(B)}", formats)


def build_capacity_figure(frame: SweepFrame):
    """Mean scheduled volume against the target size, one curve per
    penalty level."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for c_over in frame.c_over_values():
        rows = frame.rows_for_c_over(c_over)
        ax.plot([r.B for r in rows], [r.mean_q_sched for r in rows],
                marker="o", label=f"c_over = {_fmt(c_over)}")
    ax.set_xlabel("target block size B (size units)")
    ax.set_ylabel("mean scheduled volume (size units)")
    ax.set_title("Scheduled volume vs target size")
    ax.legend()
    fig.tight_layout()
    return fig


def plot_volume_vs_capacity(frame: SweepFrame, out_dir: str,
                            formats=FORMATS) -> list:
    return save_figure(build_capacity_figure(frame), out_dir,
                       "volume_vs_capacity", formats)
