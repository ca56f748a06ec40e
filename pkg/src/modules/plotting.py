"""
Módulo plotting - Gráficas SVG de T/n a partir de los CSV de barrido
"""

from dataclasses import dataclass
from typing import Optional

import matplotlib

matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from modules.experiment_harness import read_records, summarize_frame  # noqa: E402
from modules.implication_analysis import Verdict  # noqa: E402
from utils.logger import setup_logger  # noqa: E402

logger = setup_logger('walksat_lab')

FIGURE_SIZE = (8.0, 5.0)
SVG_HASH_SALT = 'walksat-lab'


@dataclass
class PlotSummary:
    axis: str
    points: int
    series: int
    out_path: str


def choose_axis(frame: pd.DataFrame) -> str:
    """'alpha' si el CSV recorre más densidades que tamaños; si no, 'n'."""
    if frame.empty:
        return 'n'
    return 'alpha' if frame['alpha'].nunique() > frame['n'].nunique() else 'n'


def plot_frame(frame: pd.DataFrame, out_path: str, axis: Optional[str] = None,
               title: Optional[str] = None) -> PlotSummary:
    """
    Dibuja T/n frente a n (escala logarítmica, una serie por α) o frente a α
    (una serie por n): un punto por ejecución y la media de las instancias SAT.

    Args:
        frame: Filas con el esquema del CSV de barrido
        out_path: Ruta del SVG
        axis: 'n' o 'alpha'; por defecto se deduce de los datos
        title: Título opcional

    Returns:
        PlotSummary con el número de puntos dibujados
    """
    axis = axis or choose_axis(frame)
    if axis not in ('n', 'alpha'):
        raise ValueError(f"Eje desconocido: {axis}")
    group_key = 'alpha' if axis == 'n' else 'n'

    plt.rcParams['svg.hashsalt'] = SVG_HASH_SALT
    fig, ax = plt.subplots(figsize=FIGURE_SIZE)
    points = 0
    series = 0
    summary = summarize_frame(frame)
    colors = plt.rcParams['axes.prop_cycle'].by_key()['color']

    for index, (key, group) in enumerate(frame.groupby(group_key, sort=True)):
        color = colors[index % len(colors)]
        label = f"α = {key:g}" if group_key == 'alpha' else f"n = {int(key)}"
        sat = group[group['sat'] == Verdict.SAT.value]
        unsat = group[group['sat'] != Verdict.SAT.value]
        ax.scatter(sat[axis], sat['flips_per_n'], s=10, alpha=0.5, color=color, label=label)
        if not unsat.empty:
            ax.scatter(unsat[axis], unsat['flips_per_n'], s=14, marker='x', color='gray', alpha=0.6)
        points += len(group)

        means = summary[np.isclose(summary[group_key], key)].dropna(subset=['mean_flips_per_n'])
        means = means.sort_values(axis)
        if not means.empty:
            ax.plot(means[axis], means['mean_flips_per_n'], color=color, linewidth=1.5)
        series += 1

    if axis == 'n':
        ax.set_xscale('log', base=2)
        ax.set_xlabel('n')
    else:
        ax.set_xlabel('α = m/n')
    ax.set_ylabel('T / n')
    ax.set_title(title or ('Tiempo normalizado de WalkSAT frente a n' if axis == 'n'
                           else 'Tiempo normalizado de WalkSAT frente a α'))
    ax.grid(True, alpha=0.3)
    if series:
        ax.legend(fontsize='small')

    fig.tight_layout()
    fig.savefig(out_path, format='svg', metadata={'Date': None})
    plt.close(fig)
    logger.info(f"Gráfica guardada en {out_path} ({points} puntos, {series} series)")
    return PlotSummary(axis=axis, points=points, series=series, out_path=out_path)


def cmd_plot(csv_path: str, out_path: str, axis: Optional[str] = None) -> PlotSummary:
    return plot_frame(read_records(csv_path), out_path, axis=axis)
