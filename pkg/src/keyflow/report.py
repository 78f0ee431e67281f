"""Report rendering: every report path writes JSON plus a CSV table and a
matplotlib figure next to it (same stem, .csv/.png extensions)."""

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def _stem_paths(out_path):
    out = Path(out_path)
    return out, out.with_suffix(".csv"), out.with_suffix(".png")


def write_json(doc, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)


def write_csv(rows, header, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def save_loss_curve(curve, out_dir, name="loss_curve"):
    """Training curve: <dir>/<name>.csv and .png."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(
        [(i, float(v)) for i, v in enumerate(curve)], ["epoch", "loss"], out / f"{name}.csv"
    )
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(range(len(curve)), curve)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_title(name.replace("_", " "))
    fig.tight_layout()
    fig.savefig(out / f"{name}.png", dpi=120)
    plt.close(fig)


def save_eval_report(report, out_path):
    """Joint-position error report: JSON + CSV + grouped bar figure."""
    json_path, csv_path, png_path = _stem_paths(out_path)
    write_json(report, json_path)

    rows = []
    for metric in ("dtw_jpe", "dtw_pa_jpe"):
        for part in ("body", "hand"):
            rows.append((metric, part, report[metric][part]))
    write_csv(rows, ["metric", "part", "value"], csv_path)

    fig, ax = plt.subplots(figsize=(6, 4))
    labels = [f"{m}\n{p}" for m, p, _ in rows]
    ax.bar(labels, [v for _, _, v in rows], color=["#4878d0"] * 2 + ["#ee854a"] * 2)
    ax.set_ylabel("mean joint position error (m)")
    ax.set_title(f"DTW joint position errors (n={report['n_items']})")
    fig.tight_layout()
    fig.savefig(png_path, dpi=120)
    plt.close(fig)


def save_ablation_report(suite, rows, header, out_path, ylabel="DTW-JPE (m)"):
    """Ablation table: JSON + CSV + figure (line for steps suite, bars otherwise)."""
    json_path, csv_path, png_path = _stem_paths(out_path)
    write_json({"v": 1, "suite": suite, "header": header, "rows": rows}, json_path)
    write_csv(rows, header, csv_path)

    fig, ax = plt.subplots(figsize=(7, 4.5))
    if suite == "steps":
        xs = [r[0] for r in rows]
        for col in range(1, len(header)):
            ax.plot(xs, [r[col] for r in rows], marker="o", label=header[col])
        ax.set_xscale("log")
        ax.set_xlabel(header[0])
    else:
        xs = range(len(rows))
        width = 0.8 / (len(header) - 1)
        for col in range(1, len(header)):
            offs = [x + (col - 1) * width for x in xs]
            ax.bar(offs, [r[col] for r in rows], width=width, label=header[col])
        ax.set_xticks([x + 0.4 - width / 2 for x in xs])
        ax.set_xticklabels([str(r[0]) for r in rows], rotation=15, ha="right")
    ax.set_ylabel(ylabel)
    ax.set_title(f"{suite} ablation")
    ax.legend()
    fig.tight_layout()
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
