"""Figure rendering from simulator metric CSVs.

Empirical CDFs use the midpoint convention: the i-th of n sorted values
is plotted at probability (i - 0.5) / n.  Rendering is deterministic:
groups are sorted, colors follow the fixed matplotlib cycle, and file
metadata that would embed timestamps or tool versions is suppressed.
"""

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

KINDS = ("cdf_se", "cdf_ber", "ber_vs_order", "sinr_cdf")

_KIND_METRICS = {
    "cdf_se": ("se_ber", "se_hardening", "se_upper"),
    "cdf_ber": ("ber",),
    "sinr_cdf": ("sinr_hardening", "sinr_upper", "sinr_cf", "snr_cf", "sinr_emp"),
    "ber_vs_order": ("ber",),
}

_KIND_XLABEL = {
    "cdf_se": "per-UE spectral efficiency (bit/s/Hz)",
    "cdf_ber": "per-UE bit error rate",
    "sinr_cdf": "per-UE SINR",
    "ber_vs_order": "modulation order",
}


class RenderError(ValueError):
    """Raised for malformed specs, missing columns, or empty groups."""


@dataclass
class PlotSpec:
    csv_paths: list
    kind: str
    group_by: tuple = ("scheme", "alpha_rad", "L_k", "precoder")
    out_path: Path = Path("figure")
    metric: str = None  # explicit metric filter; default inferred from kind
    title: str = None
    logx: bool = False
    figsize: tuple = (5.0, 3.6)
    dpi: int = 150
    orders: list = None  # modulation order per CSV for ber_vs_order


def ecdf_points(values):
    """Sorted values with midpoint plotting positions (i - 0.5) / n."""
    values = np.sort(np.asarray(values, dtype=float))
    n = values.size
    if n == 0:
        raise RenderError("cannot build a CDF from an empty group")
    return values, (np.arange(1, n + 1) - 0.5) / n


def read_csv_columns(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    if not rows:
        raise RenderError(f"{path}: no data rows")
    return rows


def _group_rows(rows, group_by, metrics, path):
    header = rows[0].keys()
    for key in group_by:
        if key not in header:
            raise RenderError(f"{path}: grouping key {key!r} not in CSV header")
    groups = {}
    for row in rows:
        if row["metric"] not in metrics:
            continue
        label = tuple((key, row[key]) for key in group_by)
        groups.setdefault(label, []).append(float(row["value"]))
    return groups


def _label_text(label, with_metric=None):
    parts = [f"{key}={value}" for key, value in label]
    if with_metric:
        parts.append(f"metric={with_metric}")
    return ", ".join(parts)


def _modulation_order(csv_path, fallback=None):
    """Modulation order from the run manifest written next to the CSV."""
    manifest = Path(csv_path).with_name(Path(csv_path).stem + "_manifest.json")
    if manifest.exists():
        config = json.loads(manifest.read_text()).get("config", {})
        if "M_o" in config:
            return int(config["M_o"])
    if fallback is not None:
        return int(fallback)
    raise RenderError(
        f"{csv_path}: no manifest with M_o found; pass explicit orders"
    )


def render(spec: PlotSpec):
    """Render the figure and return the list of written paths."""
    if spec.kind not in KINDS:
        raise RenderError(f"kind must be one of {KINDS}")
    metrics = (spec.metric,) if spec.metric else _KIND_METRICS[spec.kind]

    fig, ax = plt.subplots(figsize=spec.figsize)
    if spec.kind == "ber_vs_order":
        _render_ber_vs_order(spec, ax, metrics)
    else:
        _render_cdf(spec, ax, metrics)
    if spec.logx:
        ax.set_xscale("log")
    ax.grid(True, alpha=0.4)
    if spec.title:
        ax.set_title(spec.title)
    ax.legend(fontsize=7)
    fig.tight_layout()
    paths = _save(fig, spec)
    plt.close(fig)
    return paths


def _render_cdf(spec, ax, metrics):
    # pool rows across input CSVs; per-metric curves keep groups comparable
    rows = []
    for path in spec.csv_paths:
        rows.extend(read_csv_columns(path))
    present_metrics = sorted({r["metric"] for r in rows} & set(metrics))
    if not present_metrics:
        raise RenderError(f"no rows with metric in {metrics}")
    for metric in present_metrics:
        groups = _group_rows(rows, spec.group_by, (metric,), spec.csv_paths)
        if not groups:
            raise RenderError(f"no rows with metric {metric!r}")
        metric_tag = metric if len(present_metrics) > 1 else None
        for label in sorted(groups):
            x, y = ecdf_points(groups[label])
            ax.step(x, y, where="post", label=_label_text(label, metric_tag))
    ax.set_xlabel(_KIND_XLABEL[spec.kind])
    ax.set_ylabel("CDF")
    ax.set_ylim(0.0, 1.0)


def _render_ber_vs_order(spec, ax, metrics):
    curves = {}
    for idx, path in enumerate(spec.csv_paths):
        fallback = spec.orders[idx] if spec.orders else None
        order = _modulation_order(path, fallback)
        rows = read_csv_columns(path)
        groups = _group_rows(rows, spec.group_by, metrics, path)
        if not groups:
            raise RenderError(f"{path}: no BER rows")
        for label, values in groups.items():
            curves.setdefault(label, {}).setdefault(order, []).append(
                float(np.mean(values))
            )
    for label in sorted(curves):
        orders = sorted(curves[label])
        means = [float(np.mean(curves[label][o])) for o in orders]
        ax.plot(orders, means, marker="o", label=_label_text(label))
    ax.set_xlabel(_KIND_XLABEL["ber_vs_order"])
    ax.set_ylabel("average BER")
    ax.set_yscale("log")


def _save(fig, spec):
    out = Path(spec.out_path)
    png_meta = {"Software": None}
    pdf_meta = {"CreationDate": None, "Producer": None, "Creator": None}
    written = []
    if out.suffix.lower() == ".png":
        targets = [(out, png_meta)]
    elif out.suffix.lower() == ".pdf":
        targets = [(out, pdf_meta)]
    else:
        targets = [
            (out.with_suffix(".png"), png_meta),
            (out.with_suffix(".pdf"), pdf_meta),
        ]
    for path, metadata in targets:
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, dpi=spec.dpi, metadata=metadata)
        written.append(path)
    return written
