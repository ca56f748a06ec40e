"""
Módulo experiment_harness - Barridos reproducibles de WalkSAT sobre 2-CNF aleatorias
===================================================================================

Orquesta generación, oráculo exacto, WalkSAT, instrumentación y estadísticos para
reproducir a escala de escritorio el tiempo de ejecución normalizado T/n:

- sweep_n: T/n frente a n (rejilla geométrica) para varias densidades α
- sweep_alpha: T/n frente a α ∈ [0.5, 1 - 2⁻¹⁰] para n fijo
- single_run: una ejecución con instrumentación opcional
- ucp_stats: X, Y, tamaños de sub-fórmulas y cola empírica para una fórmula

Cada celda (n, α, réplica) tiene su propia semilla derivada de la semilla base,
por lo que el CSV no depende del número de procesos ni del orden de ejecución.
Las instancias insatisfacibles se registran pero no cuentan en las medias de T/n.

COLUMNAS DEL CSV (orden fijo):
    n,m,alpha,seed,sat,status,flips,flips_per_n,wall_ns,x_stat,y_stat,
    max_subformula,max_component,persistence_violations,drift_mean,drift_stderr,
    case1,case2,case3,case4
"""

import json
import math
import os
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy import stats
from tqdm import tqdm

from modules.cnf_core import Formula, clauses_for_density, generate_random_2cnf
from modules.implication_analysis import (SubformulaProfile, Verdict, solve_2sat,
                                          subformula_profile, variable_graph_components)
from modules.martingale_instrumentation import (Case, InstrumentationContext, InstrumentationSummary,
                                                choose_tracked_roots)
from modules.walksat_engine import RunOutcome, RunStatus, default_cap, run
from utils.logger import setup_logger
from utils.rng import STREAM_ROOTS, STREAM_WALKSAT, derive_seed, make_generator, make_stream
from utils.validation import validate_experiment_config

logger = setup_logger('walksat_lab')

CSV_COLUMNS = ['n', 'm', 'alpha', 'seed', 'sat', 'status', 'flips', 'flips_per_n', 'wall_ns',
               'x_stat', 'y_stat', 'max_subformula', 'max_component', 'persistence_violations',
               'drift_mean', 'drift_stderr', 'case1', 'case2', 'case3', 'case4']

DEFAULT_BASE_SEED = 20240601


class ConfigurationError(ValueError):
    """Configuración de experimento inválida; `errors` contiene todos los problemas."""

    def __init__(self, errors: Sequence[str]):
        super().__init__("Configuración inválida: " + "; ".join(errors))
        self.errors = list(errors)


@dataclass
class ExperimentConfig:
    """
    Configuración de un experimento. Los valores por defecto son los de escritorio.

    Rejillas: n_values/alpha_values explícitos, o (n_min, n_max, n_points) geométrica y
    (alpha_min, alpha_max, alpha_points) equiespaciada. m, si se indica, sustituye a α·n.
    unsat_cap limita las inversiones en las instancias que el oráculo declara UNSAT (0: no se
    recorren; None: se usa cap).
    """
    mode: str = 'sweep_n'
    n_values: Optional[List[int]] = None
    n_min: int = 2 ** 10
    n_max: int = 2 ** 18
    n_points: int = 16
    alpha_values: Optional[List[float]] = field(default_factory=lambda: [0.1, 0.3, 0.5, 0.7, 0.9])
    alpha_min: float = 0.5
    alpha_max: float = 1 - 2 ** -10
    alpha_points: int = 32
    m: Optional[int] = None
    replicates: int = 8
    base_seed: int = DEFAULT_BASE_SEED
    cap: Optional[int] = None
    unsat_cap: Optional[int] = 0
    track_vars: int = 64
    instrument: bool = False
    compute_stats: bool = True
    workers: int = 1
    out: Optional[str] = None
    summary_out: Optional[str] = None
    quiet: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ExperimentConfig':
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError([f"Clave desconocida: {k}" for k in unknown])
        return cls(**data)

    @classmethod
    def from_json(cls, path: str, defaults: Optional['ExperimentConfig'] = None,
                  **overrides) -> 'ExperimentConfig':
        """
        Carga un JSON de configuración.

        Precedencia: `defaults` (p. ej. los del modo), después las claves del archivo y por
        último los `overrides` distintos de None.
        """
        with open(path, 'r', encoding='utf-8') as f:
            loaded = json.load(f)
        if not isinstance(loaded, dict):
            raise ConfigurationError([f"{path} no contiene un objeto JSON"])
        data = defaults.to_dict() if defaults is not None else {}
        data.update(loaded)
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(data)

    def validate(self) -> 'ExperimentConfig':
        errors = validate_experiment_config(self.to_dict())
        if errors:
            raise ConfigurationError(errors)
        return self

    def n_grid(self) -> List[int]:
        if self.n_values:
            return [int(n) for n in self.n_values]
        grid = np.geomspace(self.n_min, self.n_max, self.n_points)
        return sorted(set(int(round(v)) for v in grid))

    def alpha_grid(self) -> List[float]:
        if self.alpha_values:
            return [float(a) for a in self.alpha_values]
        return [float(a) for a in np.linspace(self.alpha_min, self.alpha_max, self.alpha_points)]


def create_default_config(mode: str = 'sweep_n') -> ExperimentConfig:
    """
    Configuración de escritorio por modo.

    sweep_n: n ∈ [2¹⁰, 2¹⁸] geométrica (16 puntos), α ∈ {0.1, 0.3, 0.5, 0.7, 0.9}, 8 réplicas.
    sweep_alpha: n = 10⁶, 32 valores de α ∈ [0.5, 1 - 2⁻¹⁰], 4 réplicas.
    """
    if mode == 'sweep_alpha':
        return ExperimentConfig(mode=mode, n_values=[10 ** 6], alpha_values=None, replicates=4)
    if mode == 'single_run':
        return ExperimentConfig(mode=mode, n_values=[1000], alpha_values=[0.8], replicates=1,
                                instrument=True)
    if mode == 'ucp_stats':
        return ExperimentConfig(mode=mode, n_values=[10 ** 5], alpha_values=[0.5], replicates=1)
    return ExperimentConfig(mode=mode)


@dataclass
class RunRecord:
    """Un punto de datos del experimento (una fila del CSV)."""
    n: int
    m: int
    alpha: float
    seed: int
    sat: str
    status: str
    flips: int
    flips_per_n: float
    wall_ns: int
    x_stat: Optional[int] = None
    y_stat: Optional[float] = None
    max_subformula: Optional[int] = None
    max_component: Optional[int] = None
    persistence_violations: Optional[int] = None
    drift_mean: Optional[float] = None
    drift_stderr: Optional[float] = None
    case1: Optional[int] = None
    case2: Optional[int] = None
    case3: Optional[int] = None
    case4: Optional[int] = None

    def to_row(self) -> Dict[str, Any]:
        return {column: getattr(self, column) for column in CSV_COLUMNS}


@dataclass
class Cell:
    index: int
    n: int
    m: int
    alpha: float
    alpha_index: int
    replicate: int
    seed: int


@dataclass
class RunResult:
    """RunRecord más los objetos que sólo interesan en memoria (ejecución individual)."""
    record: RunRecord
    outcome: RunOutcome
    instrumentation: Optional[InstrumentationSummary] = None
    context: Optional[InstrumentationContext] = None


def build_cells(config: ExperimentConfig) -> List[Cell]:
    """Celdas del barrido en orden determinista (α, n, réplica)."""
    cells = []
    for alpha_index, alpha in enumerate(config.alpha_grid()):
        for n in config.n_grid():
            m = config.m if config.m is not None else clauses_for_density(n, alpha)
            for replicate in range(config.replicates):
                seed = derive_seed(config.base_seed, n, m, alpha_index, replicate)
                cells.append(Cell(len(cells), n, m, alpha, alpha_index, replicate, seed))
    return cells


def execute_formula(formula: Formula, seed: int, alpha: Optional[float] = None,
                    cap: Optional[int] = None, instrument: bool = False, track_vars: int = 64,
                    compute_stats: bool = True, keep_context: bool = False,
                    collect_trace: bool = False, unsat_cap: Optional[int] = None,
                    keep_history: Optional[bool] = None) -> RunResult:
    """
    Oráculo, WalkSAT e instrumentación sobre una fórmula ya construida.

    Con instrumentación y Φ satisfacible, σ* es la asignación del oráculo SCC. Si el
    oráculo declara UNSAT y se indica unsat_cap, el paseo se corta en min(cap, unsat_cap)
    y la fila queda como CapReached. keep_history (por defecto igual a keep_context)
    conserva la serie de Δ* de cada variable seguida.
    """
    n, m = formula.num_variables, formula.num_clauses
    alpha = m / n if alpha is None else alpha
    certificate = solve_2sat(formula)

    context = None
    if instrument and certificate.verdict is Verdict.SAT:
        roots = choose_tracked_roots(formula, track_vars, make_generator(seed, STREAM_ROOTS))
        if keep_history is None:
            keep_history = keep_context
        context = InstrumentationContext(formula, certificate.assignment, roots,
                                         keep_history=keep_history)
    if certificate.verdict is Verdict.UNSAT and unsat_cap is not None:
        cap = min(default_cap(n) if cap is None else cap, unsat_cap)
    outcome = run(formula, cap=cap, trace=context, collect_trace=collect_trace,
                  stream=make_stream(seed, STREAM_WALKSAT))

    if outcome.status is RunStatus.SATISFIED and certificate.verdict is Verdict.UNSAT:
        raise RuntimeError(f"WalkSAT declara satisfecha una fórmula UNSAT (semilla {seed})")

    record = RunRecord(n=n, m=m, alpha=float(alpha), seed=int(seed),
                       sat=certificate.verdict.value, status=outcome.status.value,
                       flips=outcome.flips, flips_per_n=outcome.flips / n,
                       wall_ns=int(outcome.wall_time_ns))
    if compute_stats:
        profile = subformula_profile(formula)
        record.x_stat = profile.x_statistic()
        record.y_stat = profile.y_statistic()
        record.max_subformula = profile.max_size()
        record.max_component = variable_graph_components(formula).largest

    summary = None
    if context is not None:
        summary = context.summary()
        record.persistence_violations = summary.persistence_violations
        record.drift_mean = summary.drift.mean
        record.drift_stderr = summary.drift.stderr
        record.case1, record.case2, record.case3, record.case4 = (
            summary.histogram.counts[c] for c in Case)

    logger.debug(f"n={n} m={m} semilla={seed} {record.sat} {record.status} T={record.flips} "
                 f"({record.wall_ns / 1e6:.1f} ms)")
    if certificate.verdict is Verdict.SAT and outcome.status is RunStatus.CAP_REACHED:
        logger.warning(f"Límite de inversiones alcanzado en una instancia SAT (n={n}, semilla={seed})")
    return RunResult(record=record, outcome=outcome, instrumentation=summary,
                     context=context if keep_context else None)


def execute_cell(cell: Cell, config: ExperimentConfig) -> Tuple[RunRecord, Optional[InstrumentationSummary]]:
    formula = generate_random_2cnf(cell.n, cell.m, cell.seed)
    result = execute_formula(formula, cell.seed, alpha=cell.alpha, cap=config.cap,
                             instrument=config.instrument, track_vars=config.track_vars,
                             compute_stats=config.compute_stats,
                             unsat_cap=config.unsat_cap, keep_history=False)
    return result.record, result.instrumentation


class CsvSink:
    """Escribe filas del CSV a medida que llegan (las filas ya escritas sobreviven a una interrupción)."""

    def __init__(self, path: Optional[str]):
        self.path = path
        if path:
            directory = os.path.dirname(os.path.abspath(path))
            os.makedirs(directory, exist_ok=True)
            pd.DataFrame(columns=CSV_COLUMNS).to_csv(path, index=False)

    def write(self, record: RunRecord) -> None:
        if self.path:
            pd.DataFrame([record.to_row()], columns=CSV_COLUMNS).to_csv(
                self.path, mode='a', header=False, index=False)


def iter_results(cells: Sequence[Cell], config: ExperimentConfig) -> Iterator[Tuple[RunRecord, Optional[InstrumentationSummary]]]:
    """Resultados en orden de celda, con `workers` procesos."""
    if config.workers <= 1:
        for cell in cells:
            yield execute_cell(cell, config)
        return
    parallel = Parallel(n_jobs=config.workers, return_as='generator')
    yield from parallel(delayed(execute_cell)(cell, config) for cell in cells)


def run_sweep(config: ExperimentConfig) -> Tuple[List[RunRecord], Optional[InstrumentationSummary]]:
    """
    Ejecuta todas las celdas del barrido y escribe el CSV fila a fila.

    Returns:
        (registros en orden de celda, resumen agregado de instrumentación o None)
    """
    config.validate()
    cells = build_cells(config)
    logger.info(f"Barrido {config.mode}: {len(cells)} ejecuciones, n={config.n_grid()}, "
                f"{len(config.alpha_grid())} valores de alpha, {config.workers} procesos")
    sink = CsvSink(config.out)
    records: List[RunRecord] = []
    pooled: Optional[InstrumentationSummary] = None
    progress = tqdm(total=len(cells), desc=config.mode, unit="run", disable=config.quiet)
    try:
        for record, summary in iter_results(cells, config):
            sink.write(record)
            records.append(record)
            if summary is not None:
                pooled = summary if pooled is None else pooled.merge(summary)
            progress.update(1)
    except KeyboardInterrupt:
        logger.warning(f"Interrumpido tras {len(records)} de {len(cells)} ejecuciones; "
                       f"CSV parcial en {config.out}")
        raise
    finally:
        progress.close()

    filtered = sum(1 for r in records if r.sat == Verdict.UNSAT.value)
    if filtered:
        logger.warning(f"{filtered} instancias insatisfacibles excluidas de las medias de T/n")
    logger.info(f"Barrido completado: {len(records)} filas")
    return records, pooled


def cmd_sweep(config: ExperimentConfig,
              mode: Optional[str] = None) -> Tuple[List[RunRecord], pd.DataFrame]:
    """Barrido completo (sweep_n o sweep_alpha): CSV fila a fila y resumen por (n, α)."""
    if mode is not None:
        config.mode = mode
    records, _ = run_sweep(config)
    summary = summarize_records(records)
    _write_summary(summary, config.summary_out)
    return records, summary


def cmd_sweep_n(config: ExperimentConfig) -> Tuple[List[RunRecord], pd.DataFrame]:
    return cmd_sweep(config, 'sweep_n')


def cmd_sweep_alpha(config: ExperimentConfig) -> Tuple[List[RunRecord], pd.DataFrame]:
    return cmd_sweep(config, 'sweep_alpha')


def _write_summary(summary: pd.DataFrame, path: Optional[str]) -> None:
    if path:
        summary.to_csv(path, index=False)
        logger.info(f"Resumen guardado en {path}")


# --- Resúmenes ------------------------------------------------------------------

SUMMARY_COLUMNS = ['n', 'alpha', 'runs', 'sat_runs', 'unsat_fraction', 'success_rate',
                   'mean_flips_per_n', 'median_flips_per_n', 'p10_flips_per_n', 'p90_flips_per_n',
                   'mean_x_per_n', 'mean_flips_scaled', 'mean_x_scaled']


@dataclass
class SummaryStats:
    """Estadísticos de T/n en un punto de la rejilla (sólo instancias satisfacibles)."""
    n: int
    alpha: float
    runs: int
    sat_runs: int
    unsat_fraction: float
    success_rate: Optional[float]
    mean_flips_per_n: Optional[float]
    median_flips_per_n: Optional[float]
    p10_flips_per_n: Optional[float]
    p90_flips_per_n: Optional[float]
    mean_x_per_n: Optional[float]
    mean_flips_scaled: Optional[float]
    mean_x_scaled: Optional[float]


def records_frame(records: Iterable[RunRecord]) -> pd.DataFrame:
    return pd.DataFrame([r.to_row() for r in records], columns=CSV_COLUMNS)


def read_records(path: str) -> pd.DataFrame:
    """Lee un CSV de barrido y comprueba la cabecera."""
    frame = pd.read_csv(path)
    if list(frame.columns) != CSV_COLUMNS:
        raise ValueError(f"Esquema CSV inesperado en {path}: {list(frame.columns)}")
    return frame


def summarize_frame(frame: pd.DataFrame) -> pd.DataFrame:
    """
    Resumen por (n, α): medias y percentiles de T/n sobre las filas SAT, tasa de éxito
    (Satisfied entre las SAT), fracción filtrada y los estadísticos escalados por (1-α)²/n.
    """
    rows = []
    if frame.empty:
        return pd.DataFrame(columns=SUMMARY_COLUMNS)
    for (n, alpha), group in frame.groupby(['n', 'alpha'], sort=True):
        sat = group[group['sat'] == Verdict.SAT.value]
        runs, sat_runs = len(group), len(sat)
        flips = sat['flips_per_n'].astype(float)
        scale = (1 - alpha) ** 2
        x_per_n = (sat['x_stat'].astype(float) / n) if sat_runs and sat['x_stat'].notna().any() else None
        stats_point = SummaryStats(
            n=int(n), alpha=float(alpha), runs=runs, sat_runs=sat_runs,
            unsat_fraction=(runs - sat_runs) / runs,
            success_rate=float((sat['status'] == RunStatus.SATISFIED.value).mean()) if sat_runs else None,
            mean_flips_per_n=float(flips.mean()) if sat_runs else None,
            median_flips_per_n=float(flips.median()) if sat_runs else None,
            p10_flips_per_n=float(flips.quantile(0.1)) if sat_runs else None,
            p90_flips_per_n=float(flips.quantile(0.9)) if sat_runs else None,
            mean_x_per_n=float(x_per_n.mean()) if x_per_n is not None else None,
            mean_flips_scaled=float(flips.mean() * scale) if sat_runs else None,
            mean_x_scaled=float(x_per_n.mean() * scale) if x_per_n is not None else None,
        )
        rows.append(asdict(stats_point))
    return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)


def summarize_records(records: Iterable[RunRecord]) -> pd.DataFrame:
    return summarize_frame(records_frame(records))


def scaling_ratio(summary: pd.DataFrame, alpha: float) -> Optional[float]:
    """max/min de la media de T/n entre los valores de n para una α dada."""
    means = summary.loc[np.isclose(summary['alpha'], alpha), 'mean_flips_per_n'].dropna()
    if means.empty or means.min() <= 0:
        return None
    return float(means.max() / means.min())


def scaling_slope(summary: pd.DataFrame, alpha: float) -> Optional[float]:
    """Pendiente de log(media T/n) frente a log n (≈ 0 si el tiempo es lineal)."""
    points = summary.loc[np.isclose(summary['alpha'], alpha)].dropna(subset=['mean_flips_per_n'])
    points = points[points['mean_flips_per_n'] > 0]
    if len(points) < 2:
        return None
    fit = stats.linregress(np.log(points['n'].astype(float)), np.log(points['mean_flips_per_n']))
    return float(fit.slope)


def x_density_exponent(frame: pd.DataFrame) -> Optional[float]:
    """Pendiente de log(X/n) frente a log(1-α); la forma (1-α)⁻² da ≈ -2."""
    data = frame.dropna(subset=['x_stat'])
    data = data[data['alpha'] < 1]
    if data['alpha'].nunique() < 2:
        return None
    fit = stats.linregress(np.log(1 - data['alpha'].astype(float)),
                           np.log(data['x_stat'].astype(float) / data['n']))
    return float(fit.slope)


# --- Estadísticos de UCP ----------------------------------------------------------

@dataclass
class TailPoint:
    t: int
    empirical: float
    bound: float

    @property
    def ok(self) -> bool:
        return self.empirical <= self.bound


def tail_bound_check(profile: SubformulaProfile, alpha: float, t_max: int = 100,
                     slack: float = 3.0) -> List[TailPoint]:
    """
    Cola empírica Pr[|V(Φ,{l})| > t] sobre los 2n literales frente a slack·exp(-αt/20),
    para los enteros 4/(1-α) < t ≤ t_max.
    """
    if not 0 < alpha < 1:
        raise ValueError(f"La cota de cola requiere 0 < alpha < 1 (alpha={alpha})")
    t_min = math.floor(4 / (1 - alpha)) + 1
    return [TailPoint(t, profile.tail_probability(t), slack * math.exp(-alpha * t / 20))
            for t in range(t_min, t_max + 1)]


def ucp_stats(formula: Formula, alpha: Optional[float] = None, t_max: int = 100) -> Dict[str, Any]:
    """X, Y, tamaños de sub-fórmulas, mayor componente de Γ(Φ) y cola empírica."""
    n = formula.num_variables
    alpha = formula.alpha if alpha is None else alpha
    profile = subformula_profile(formula)
    components = variable_graph_components(formula)
    report = {
        'n': n, 'm': formula.num_clauses, 'alpha': alpha,
        'x_stat': profile.x_statistic(), 'y_stat': profile.y_statistic(),
        'x_per_n': profile.x_statistic() / n,
        'x_scaled': profile.x_statistic() * (1 - alpha) ** 2 / n if alpha < 1 else None,
        'max_subformula': profile.max_size(),
        'max_component': components.largest,
        'components': components.count,
        'size_histogram': profile.size_histogram(),
    }
    if 0 < alpha < 1:
        tail = tail_bound_check(profile, alpha, t_max)
        report['tail'] = [{'t': p.t, 'empirical': p.empirical, 'bound': p.bound, 'ok': p.ok} for p in tail]
        report['tail_ok'] = all(p.ok for p in tail)
    return report
