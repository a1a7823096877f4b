#!/usr/bin/env python3
"""Render publication-style figures from degparlog run reports.

    render_figures.py --report DIR --kind KIND --out FILE.png

KIND is one of psweep, longtime, profile, coincidence, diagram. The
script reads only the run's documented outputs (report.json, the metric
CSVs, field CSVs, active_set.csv); it never recomputes solver
quantities. Axes policy is fixed: log axes for norms and the p-sweep
error curve, linear axes for profiles and set measures. The obstacle
level and the omega0 extent are taken from the manifest. Rendering is
deterministic: the same report directory produces byte-identical images.
"""

import argparse
import csv
import json
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

KINDS = ("psweep", "longtime", "profile", "coincidence", "diagram")

# Which documented CSV columns each figure kind consumes. The test suite
# checks this registry against the full documented column list, so every
# column is either drawn by some kind or called out in IGNORED_COLUMNS.
COLUMNS_CONSUMED = {
    "psweep": {"psweep.csv": {"p", "E", "sup_excess"}},
    "longtime": {
        "longtime.csv": {"t", "l2", "h1", "sup"},
        "observables.csv": {"t", "sup", "l2", "h1", "dtu_l2", "cum_bupp1",
                            "active_measure"},
    },
    "profile": {
        "final.csv": {"x", "y", "value"},
        "active_set.csv": {"x", "y", "active"},
    },
    "coincidence": {"coincidence.csv": {"t", "sym_diff", "active_measure"}},
    "diagram": {"diagram.csv": {"x", "y", "corner_A", "corner_B"}},
}
IGNORED_COLUMNS = {}  # every documented column is consumed by some kind

SAVE_OPTS = dict(dpi=120, metadata={"Software": "render_figures"})


class RenderError(RuntimeError):
    pass


def load_report(report_dir: Path) -> dict:
    path = report_dir / "report.json"
    if not path.exists():
        raise RenderError(f"missing report.json in {report_dir}")
    return json.loads(path.read_text())


def load_table(path: Path, required=()) -> dict:
    if not path.exists():
        raise RenderError(f"missing table {path}")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    table = {name: np.array([float(r[i]) for r in body])
             for i, name in enumerate(header)}
    for name in required:
        if name not in table:
            raise RenderError(f"missing column {name!r} in {path}")
    return table


def load_field_csv(path: Path):
    """Headerless node dump: x[,y],value per line."""
    if not path.exists():
        raise RenderError(f"missing field file {path}")
    rows = [[float(tok) for tok in line.split(",")]
            for line in path.read_text().splitlines() if line.strip()]
    arr = np.array(rows)
    if arr.shape[1] == 2:
        return arr[:, :1], arr[:, 1]
    return arr[:, :2], arr[:, 2]


def parse_boxes(text: str, dim: int):
    text = (text or "").strip()
    if not text:
        return []
    boxes = []
    for part in text.split(";"):
        nums = [float(tok) for tok in part.split()]
        boxes.append([(nums[2 * k], nums[2 * k + 1]) for k in range(dim)])
    return boxes


def manifest_geometry(report: dict):
    try:
        cfg = report["config"]
        dim = int(cfg["grid"]["dim"])
        boxes = parse_boxes(cfg["domain"]["omega0"], dim)
        obstacle = float(report["obstacle_level"])
    except KeyError as exc:
        raise RenderError(f"manifest lacks {exc} (needed for geometry)") from None
    return dim, boxes, obstacle


def shade_omega0(ax, boxes):
    for box in boxes:
        ax.axvspan(box[0][0], box[0][1], color="0.85", zorder=0)


def fig_psweep(report_dir, report):
    table = load_table(report_dir / "psweep.csv", required=("p", "E", "sup_excess"))
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.loglog(table["p"], table["E"], "o-", color="k", label="trajectory gap E(p)")
    positive = table["sup_excess"] > 0
    if positive.any():
        ax.loglog(table["p"][positive], table["sup_excess"][positive], "s--",
                  color="0.45", label="constraint excess")
    ax.set_xlabel("p")
    ax.set_ylabel("error")
    ax.set_title("large-exponent limit")
    ax.legend()
    return fig


def fig_longtime(report_dir, report):
    path = report_dir / "longtime.csv"
    if not path.exists():
        path = report_dir / "observables.csv"
    table = load_table(path, required=("t",))
    norm_cols = [c for c in ("sup", "l2", "h1", "dtu_l2") if c in table]
    extra_cols = [c for c in ("cum_bupp1", "active_measure") if c in table]
    if not norm_cols:
        raise RenderError(f"missing column 'l2' in {path}")
    rows = 2 if extra_cols else 1
    fig, axes = plt.subplots(rows, 1, figsize=(6, 3.2 * rows), sharex=True,
                             squeeze=False)
    ax = axes[0][0]
    styles = {"sup": "-", "l2": "--", "h1": "-.", "dtu_l2": ":"}
    for col in norm_cols:
        positive = table[col] > 0
        if positive.any():
            ax.semilogy(table["t"][positive], table[col][positive],
                        styles[col], label=col)
    ax.set_ylabel("norms")
    ax.legend(loc="best")
    ax.set_title("long-time behaviour")
    if extra_cols:
        ax2 = axes[1][0]
        for col in extra_cols:
            ax2.plot(table["t"], table[col], label=col)
        ax2.set_ylabel("measures")
        ax2.legend(loc="best")
        ax2.set_xlabel("t")
    else:
        ax.set_xlabel("t")
    return fig


def fig_profile(report_dir, report):
    dim, boxes, obstacle = manifest_geometry(report)
    coords, values = load_field_csv(report_dir / "final.csv")
    fig, ax = plt.subplots(figsize=(6, 4.5))
    if dim == 1:
        x = coords[:, 0]
        shade_omega0(ax, boxes)
        ax.plot(x, values, "k-", label="solution")
        ax.axhline(obstacle, color="0.3", linestyle="--", linewidth=1,
                   label=f"obstacle = {obstacle:g}")
        active_path = report_dir / "active_set.csv"
        if active_path.exists():
            table = load_table(active_path, required=("x", "active"))
            on = table["active"] > 0.5
            if on.any():
                ax.plot(table["x"][on], np.full(on.sum(), obstacle), ".",
                        color="0.1", markersize=3, label="active set")
        ax.set_xlabel("x")
        ax.set_ylabel("u")
        ax.legend()
    else:
        n = [int(v) for v in report["config"]["grid"]["n"]]
        if len(n) == 1:
            n = n * 2
        img = values.reshape(n)
        extents = report["config"]["grid"]["extents"]
        im = ax.imshow(img.T, origin="lower", aspect="auto",
                       extent=(extents[0], extents[1], extents[2], extents[3]))
        fig.colorbar(im, ax=ax)
        ax.set_xlabel("x")
        ax.set_ylabel("y")
    ax.set_title("solution profile")
    return fig


def fig_coincidence(report_dir, report):
    table = load_table(report_dir / "coincidence.csv",
                       required=("t", "sym_diff", "active_measure"))
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.plot(table["t"], table["sym_diff"], "k-", label="|{u=1} Δ {w=1}|")
    ax.plot(table["t"], table["active_measure"], "--", color="0.45",
            label="|{u=1}|")
    ax.set_xlabel("t")
    ax.set_ylabel("measure")
    ax.set_title("coincidence-set convergence")
    ax.legend()
    return fig


def fig_diagram(report_dir, report):
    dim, boxes, obstacle = manifest_geometry(report)
    required = ("x", "corner_A", "corner_B") if dim == 1 else (
        "x", "y", "corner_A", "corner_B")
    table = load_table(report_dir / "diagram.csv", required=required)
    fig, ax = plt.subplots(figsize=(6, 4.5))
    if dim == 1:
        shade_omega0(ax, boxes)
        ax.plot(table["x"], table["corner_A"], "k-",
                label="long-time limit at p_max")
        ax.plot(table["x"], table["corner_B"], "--", color="0.4",
                label="obstacle long-time limit")
        ax.axhline(obstacle, color="0.3", linestyle=":", linewidth=1)
        ax.set_xlabel("x")
        ax.set_ylabel("u")
    else:
        diff = np.abs(table["corner_A"] - table["corner_B"])
        order = np.lexsort((table["y"], table["x"]))
        nx = len(np.unique(table["x"]))
        ny = len(np.unique(table["y"]))
        im = ax.imshow(diff[order].reshape(nx, ny).T, origin="lower",
                       aspect="auto")
        fig.colorbar(im, ax=ax)
    gap = report.get("metrics", {}).get("discrepancy_l2")
    title = "commuting limit diagram"
    if gap is not None:
        title += f" (l2 gap {gap:.3g})"
    ax.set_title(title)
    if dim == 1:
        ax.legend()
    return fig


RENDERERS = {
    "psweep": fig_psweep,
    "longtime": fig_longtime,
    "profile": fig_profile,
    "coincidence": fig_coincidence,
    "diagram": fig_diagram,
}


def render(report_dir, kind, out_path) -> None:
    report_dir = Path(report_dir)
    report = load_report(report_dir)
    fig = RENDERERS[kind](report_dir, report)
    fig.savefig(out_path, **SAVE_OPTS)
    plt.close(fig)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--report", required=True, help="run output directory")
    parser.add_argument("--kind", required=True, choices=KINDS)
    parser.add_argument("--out", required=True, help="output image path")
    args = parser.parse_args(argv)
    try:
        render(args.report, args.kind, args.out)
    except RenderError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
