"""Plot data tables (CSV) and the matching matplotlib figures (PNG)."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

KINDS = ("bloch_trajectory", "bar_per_unitary", "cumulative_average", "density_matrix_city")

_FMT = ".12g"


def _write(path: Path, header: list[str], rows: list[list]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([format(v, _FMT) if isinstance(v, float) else v for v in r])
    return path


def emit_plot_data(data, kind: str, out_dir: str | Path, name: str | None = None, figure: bool = True) -> list[Path]:
    """Write the table behind one figure kind, plus a PNG rendering of it.

    ``data`` is a list of result rows for the per-unitary kinds, a dict with
    ``prep``/``evolved``/``reset``/``no_reset`` Bloch vectors for trajectories,
    and a square complex matrix for city plots.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown plot kind {kind!r}")
    out_dir = Path(out_dir)
    stem = name or kind
    written = []
    if kind == "bar_per_unitary":
        rows = [[r.unitary_index, float(r.p_success), float(r.trace_distance)] for r in data]
        written.append(_write(out_dir / f"{stem}.csv", ["unitary_index", "p_success", "trace_distance"], rows))
        if figure:
            written.append(_bar_figure(rows, out_dir / f"{stem}.png"))
    elif kind == "cumulative_average":
        ps = np.array([r.p_success for r in data], dtype=float)
        cum = np.cumsum(ps) / np.arange(1, len(ps) + 1)
        rows = [[i + 1, float(c)] for i, c in enumerate(cum)]
        written.append(_write(out_dir / f"{stem}.csv", ["n_unitaries", "cumulative_mean_p_success"], rows))
        if figure:
            written.append(_cumulative_figure(cum, out_dir / f"{stem}.png"))
    elif kind == "bloch_trajectory":
        pts = [("prep", data["prep"]), ("evolved", data["evolved"]), ("reset", data["reset"])]
        pts += [(f"no_reset_{k + 1}", v) for k, v in enumerate(data["no_reset"])]
        rows = [[label, *(float(c) for c in v)] for label, v in pts]
        written.append(_write(out_dir / f"{stem}.csv", ["label", "x", "y", "z"], rows))
        if figure:
            written.append(_bloch_figure(rows, out_dir / f"{stem}.png"))
    else:
        m = np.asarray(data, dtype=complex)
        rows = [[i, j, float(m[i, j].real), float(m[i, j].imag)] for i in range(m.shape[0]) for j in range(m.shape[1])]
        written.append(_write(out_dir / f"{stem}.csv", ["row", "col", "re", "im"], rows))
        if figure:
            written.append(_city_figure(m, out_dir / f"{stem}.png"))
    return written


def _bar_figure(rows, path: Path) -> Path:
    idx = [r[0] for r in rows]
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(8, 5), sharex=True)
    ax1.bar(idx, [r[1] for r in rows], color="tab:brown")
    ax1.set_ylabel("success probability")
    ax2.bar(idx, [r[2] for r in rows], color="tab:blue")
    ax2.set_ylabel("trace distance")
    ax2.set_xlabel("random unitary")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def _cumulative_figure(cum, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(np.arange(1, len(cum) + 1), cum, "--", color="tab:brown")
    ax.set_xlabel("number of random unitaries")
    ax.set_ylabel("cumulative mean success probability")
    ax.set_ylim(0, 1)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def _bloch_figure(rows, path: Path) -> Path:
    fig = plt.figure(figsize=(5, 5))
    ax = fig.add_subplot(projection="3d")
    u, v = np.mgrid[0 : 2 * np.pi : 30j, 0 : np.pi : 15j]
    ax.plot_wireframe(np.cos(u) * np.sin(v), np.sin(u) * np.sin(v), np.cos(v), color="0.85", linewidth=0.5)
    for label, x, y, z in rows:
        color = "tab:blue" if label.startswith("no_reset") else "tab:red"
        ax.scatter([x], [y], [z], color=color)
        ax.text(x, y, z, label, fontsize=7)
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_zlabel("z")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def _city_figure(m: np.ndarray, path: Path) -> Path:
    d = m.shape[0]
    fig = plt.figure(figsize=(8, 4))
    xs, ys = np.meshgrid(np.arange(d), np.arange(d), indexing="ij")
    for k, (part, title) in enumerate(((m.real, "Re"), (m.imag, "Im"))):
        ax = fig.add_subplot(1, 2, k + 1, projection="3d")
        ax.bar3d(xs.ravel(), ys.ravel(), np.zeros(d * d), 0.6, 0.6, part.ravel(), shade=True)
        ax.set_title(title)
        ax.set_zlim(min(0, part.min()), max(1e-3, part.max()))
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
