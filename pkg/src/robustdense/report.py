"""Report files: JSON, degradation-curve CSV, and matplotlib figures."""

import csv
import json
import re
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .errors import ValidationError
from .sweep import RobustnessReport


def _slug(name: str) -> str:
    return re.sub(r"[^a-z0-9]", "", name.lower())


def csv_header(class_names) -> list:
    return ["fraction", "oa", "mean_f1"] + [f"f1_{_slug(n)}" for n in class_names]


def write_curves_csv(report: RobustnessReport, path) -> Path:
    path = Path(path)
    class_names = report.rows[0]["class_names"]
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(csv_header(class_names))
        for row in report.rows:
            writer.writerow([repr(row["damage_fraction"]), repr(row["oa"]),
                             repr(row["mean_f1"])] + [repr(v) for v in row["per_class_f1"]])
    return path


def _curve_plot(fractions, values, ylabel, title, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(fractions, values, marker="o")
    ax.set_xlabel("damage fraction")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.set_ylim(0.0, 1.0)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def emit_report(report: RobustnessReport, out_dir) -> dict:
    """Write report.json, curves.csv and the OA / mean-F1 degradation plots."""
    if not report.rows:
        raise ValidationError("cannot emit an empty report")
    report.validate()
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OSError(f"cannot create report directory {out_dir}: {e}") from e

    json_path = out_dir / "report.json"
    json_path.write_text(json.dumps(report.to_dict(), indent=2))
    csv_path = write_curves_csv(report, out_dir / "curves.csv")

    fractions = [row["damage_fraction"] for row in report.rows]
    oa_path = _curve_plot(fractions, [row["oa"] for row in report.rows],
                          "overall accuracy", "OA vs damage fraction",
                          out_dir / "oa_curve.png")
    f1_path = _curve_plot(fractions, [row["mean_f1"] for row in report.rows],
                          "mean F1", "Mean F1 vs damage fraction",
                          out_dir / "mean_f1_curve.png")
    return {"json": json_path, "csv": csv_path, "oa_plot": oa_path, "mean_f1_plot": f1_path}


def load_report(path) -> RobustnessReport:
    return RobustnessReport.from_dict(json.loads(Path(path).read_text()))


def render_comparison_table(doc: dict) -> str:
    """Fixed-width comparison table: one column block per method, one column per
    damage degree, one row per class plus OA and mean F1.

    Expects {"degrees": [...], "rows": [...], "methods": {name: {row: [values]}}}.
    """
    degrees = doc["degrees"]
    row_names = doc["rows"]
    methods = doc["methods"]
    if not methods:
        raise ValidationError("comparison table needs at least one method")
    for name, rows in methods.items():
        for row_name in row_names:
            if row_name not in rows or len(rows[row_name]) != len(degrees):
                raise ValidationError(f"method {name!r} is missing values for {row_name!r}")

    label_w = max(len(s) for s in row_names + ["Method", "Degree"])
    cell_w = max(5, max(len(d) for d in degrees),
                 max(len(f"{v:.1f}") for rows in methods.values()
                     for vals in rows.values() for v in vals))

    def block(cells):
        return "  ".join(f"{c:>{cell_w}}" for c in cells)

    lines = []
    header = [f"{'Method':<{label_w}}"]
    degree_line = [f"{'Degree':<{label_w}}"]
    for name in methods:
        width = len(block(degrees))
        header.append(f"{name:^{width}}")
        degree_line.append(block(degrees))
    lines.append(" | ".join(header))
    lines.append(" | ".join(degree_line))
    lines.append("-" * len(lines[-1]))
    for row_name in row_names:
        cells = [f"{row_name:<{label_w}}"]
        for name in methods:
            cells.append(block([f"{v:.1f}" for v in methods[name][row_name]]))
        lines.append(" | ".join(cells))
    return "\n".join(lines) + "\n"
