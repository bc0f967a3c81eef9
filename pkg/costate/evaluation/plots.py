"""
SVG 图: 病人出现-AP 相关系数直方图、按真实标签着色的 t-SNE 散点图

使用 Agg 后端；固定 svg.hashsalt 并去掉日期元数据，相同输入输出逐字节相同。
"""

from pathlib import Path
from typing import List, Mapping, Optional, Sequence, Tuple, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ..utils.logger import get_logger  # noqa: E402

logger = get_logger("plots")

SVG_SALT = "costate"
HIST_BINS = np.linspace(-1.0, 1.0, 21)
LABEL_STYLE = {1: ("IH", "#d62728", "points-ih"), -1: ("non-IH", "#1f77b4", "points-non-ih")}

_RC = {
    "svg.hashsalt": SVG_SALT,
    "svg.fonttype": "path",
    "figure.figsize": (6.0, 4.5),
    "font.size": 9,
}


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def correlation_histogram(
    correlations: Sequence[Optional[float]], path: Union[str, Path], subtitle: str = ""
) -> Path:
    """只统计已定义的相关系数；空列表时输出没有柱子的坐标轴"""
    values = np.asarray([r for r in correlations if r is not None], dtype=np.float64)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        if values.size:
            ax.hist(values, bins=HIST_BINS, color="#7f7f7f", edgecolor="white", gid="correlation-bars")
        ax.set_xlim(-1.0, 1.0)
        ax.set_xlabel("Pearson r (training-set presence vs. mean AP)")
        ax.set_ylabel("patients")
        ax.set_title(f"Presence correlation (n={values.size}){subtitle}")
        return _save(fig, Path(path))


def projection_scatter(
    coords: np.ndarray, labels: np.ndarray, path: Union[str, Path], title: str = ""
) -> Path:
    coords = np.asarray(coords, dtype=np.float64)
    labels = np.asarray(labels)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        for value in (-1, 1):
            mask = labels == value
            if not mask.any():
                continue
            name, color, gid = LABEL_STYLE[value]
            ax.scatter(coords[mask, 0], coords[mask, 1], s=4, c=color, label=name, gid=gid, linewidths=0)
        if labels.size:
            ax.legend(loc="best", markerscale=3)
        ax.set_xticks([])
        ax.set_yticks([])
        ax.set_title(title)
        return _save(fig, Path(path))


def render_plots(
    report,
    correlations: Sequence[Optional[float]],
    projections: Mapping[str, Tuple[np.ndarray, np.ndarray]],
    outdir: Union[str, Path],
) -> List[Path]:
    """
    correlations -> correlations.svg；projections: {名称: (坐标, 标签)} -> tsne_<名称>.svg。
    report 非空时在直方图标题中注明各轮平均 AP。
    """
    outdir = Path(outdir)
    subtitle = ""
    if report is not None and report.aggregate["ap"].mean is not None:
        subtitle = f", mean AP {report.aggregate['ap'].mean:.3f}"
    written = [correlation_histogram(correlations, outdir / "correlations.svg", subtitle)]
    for name, (coords, labels) in projections.items():
        written.append(projection_scatter(coords, labels, outdir / f"tsne_{name}.svg", title=f"t-SNE: {name}"))
    logger.info("plots written", outdir=str(outdir), files=[p.name for p in written])
    return written
