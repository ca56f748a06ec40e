"""
Módulo martingale_instrumentation - Verificación en línea sobre trazas de WalkSAT
=================================================================================

Consume los FlipRecord de una ejecución (en orden) y comprueba las propiedades
estructurales del proceso:

- Δ*(Φ,x,t): número de literales de L(Φ,{σ*(x)·x}) en desacuerdo con σ* en el
  instante t, forzado a 0 cuando σ(t) satisface Φ. Es una supermartingala hasta
  su tiempo de llegada T*(Φ,x).
- Persistencia de 𝔈(Φ,l,σ): una vez que todos los literales de L(Φ,{l}) son
  verdaderos, lo siguen siendo hasta el final de la ejecución.
- Casos 1-4 de cada paso según |l1|, |l2| ∈ V(Φ,{σ*(x)·x}) y tabla de transiciones:
      Caso 1 (fuera, fuera) → 0
      Caso 2 (dentro, fuera) → -1 si h = 1, si no 0
      Caso 3 (fuera, dentro) → -1 si h = 2, si no 0
      Caso 4 (dentro, dentro) → ±1
  La tabla se comprueba sobre el recuento sin indicador; la deriva agregada usa Δ*.
- Contadores N(Φ,l) de inversiones dentro de V(Φ,{l}) y la cota T ≤ Σ_x N(Φ,σ*(x)·x).

Un contexto de instrumentación por ejecución; los agregados entre ejecuciones se
combinan con merge() (asociativo y conmutativo).
"""

import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from modules.cnf_core import Assignment, Formula, Literal, evaluate
from modules.implication_analysis import UcpScratch, ucp
from modules.walksat_engine import FlipRecord, RunOutcome


class InstrumentationError(RuntimeError):
    """Entrada inválida para la instrumentación (σ* no satisface Φ, registros desordenados...)."""


class Case(IntEnum):
    CASE1 = 1
    CASE2 = 2
    CASE3 = 3
    CASE4 = 4


def classify_flip(record: FlipRecord, vset) -> Case:
    """Caso del paso según la pertenencia de |l1| y |l2| al conjunto de variables."""
    first_in = record.first_variable in vset
    second_in = record.second_variable in vset
    if first_in and second_in:
        return Case.CASE4
    if first_in:
        return Case.CASE2
    if second_in:
        return Case.CASE3
    return Case.CASE1


def allowed_transition(case: Case, h: int, raw_delta: int) -> bool:
    """Tabla de transiciones realizadas por caso."""
    if case is Case.CASE1:
        return raw_delta == 0
    if case is Case.CASE2:
        return raw_delta == (-1 if h == 1 else 0)
    if case is Case.CASE3:
        return raw_delta == (-1 if h == 2 else 0)
    return raw_delta in (-1, 1)


def _require_satisfying(formula: Formula, sigma_star: Assignment) -> None:
    satisfied, unsat = evaluate(formula, sigma_star)
    if not satisfied:
        raise InstrumentationError(f"σ* no satisface la fórmula (cláusulas {unsat[:5]})")


def delta_star(formula: Formula, x: int, sigma_star: Assignment, sigma: Assignment,
               scratch: Optional[UcpScratch] = None) -> int:
    """
    Δ*(Φ,x,σ) calculado desde cero.

    Returns:
        0 si σ satisface Φ; si no, el número de literales de L(Φ,{σ*(x)·x}) cuyo
        valor bajo σ difiere del valor bajo σ*
    """
    _require_satisfying(formula, sigma_star)
    if evaluate(formula, sigma)[0]:
        return 0
    root = sigma_star.true_literal(x)
    literals = ucp(formula, [root], scratch).literals
    return sum(1 for l in literals if sigma.value_of_literal(l) != sigma_star.value_of_literal(l))


# --- Estadística agregable ----------------------------------------------------

@dataclass
class RunningStats:
    """Media y error estándar con suma, suma de cuadrados y recuento (combinables)."""
    count: int = 0
    total: float = 0.0
    total_sq: float = 0.0
    moves: int = 0

    def add(self, value: float) -> None:
        self.count += 1
        self.total += value
        self.total_sq += value * value
        if value != 0:
            self.moves += 1

    def merge(self, other: 'RunningStats') -> 'RunningStats':
        return RunningStats(self.count + other.count, self.total + other.total,
                            self.total_sq + other.total_sq, self.moves + other.moves)

    @property
    def mean(self) -> Optional[float]:
        return self.total / self.count if self.count else None

    @property
    def stderr(self) -> Optional[float]:
        if self.count < 2:
            return None
        mean = self.total / self.count
        var = max(self.total_sq / self.count - mean * mean, 0.0) * self.count / (self.count - 1)
        return math.sqrt(var / self.count)

    @property
    def move_frequency(self) -> Optional[float]:
        return self.moves / self.count if self.count else None


# --- Seguidores -------------------------------------------------------------------

class LiteralSetWatch:
    """
    Número de literales falsos de L(Φ,{l}) bajo la asignación actual.

    Para cada variable se guardan los signos de sus literales en L (dos si UCP
    propagó ambas polaridades).
    """

    def __init__(self, root: Literal, literals: Iterable[Literal], assignment: Assignment):
        self.root = root
        self.literals = frozenset(literals)
        self.variables = frozenset(l.variable for l in self.literals)
        self.signs_by_variable: Dict[int, Tuple[int, ...]] = {}
        for l in self.literals:
            self.signs_by_variable[l.variable] = self.signs_by_variable.get(l.variable, ()) + (l.sign,)
        self.false_count = sum(1 for l in self.literals if assignment.value_of_literal(l) < 0)

    def on_flip(self, variable: int, new_value: int) -> int:
        """Actualiza el recuento tras invertir `variable` a `new_value`. Devuelve el cambio."""
        signs = self.signs_by_variable.get(variable)
        if not signs:
            return 0
        change = 0
        for sign in signs:
            change += 1 if sign * new_value < 0 else -1
        self.false_count += change
        return change

    @property
    def holds(self) -> bool:
        return self.false_count == 0

    def __len__(self):
        return len(self.literals)


@dataclass
class StepObservation:
    """Un paso observado por un DeltaTracker antes de su tiempo de llegada."""
    t: int
    case: Case
    h: int
    raw_delta: int
    delta_before: int
    delta_after: int

    @property
    def drift(self) -> int:
        return self.delta_after - self.delta_before


class DeltaTracker:
    """
    Δ*(Φ,x,t) para una variable x con actualización O(1) por inversión.

    Atributos:
        root_literal: σ*(x)·x
        mismatch_count: Recuento sin indicador (literales de L falsos bajo σ(t))
        delta: Δ* con el indicador de satisfacción aplicado
        hit_time: T*(Φ,x), primera t con Δ* = 0 (None si aún no ha llegado)
        history: Observaciones de los pasos t < T*
    """

    def __init__(self, variable: int, root_literal: Literal, literals: Iterable[Literal],
                 assignment: Assignment, initially_satisfied: bool, keep_history: bool = True):
        self.variable = variable
        self.root_literal = root_literal
        self.watch = LiteralSetWatch(root_literal, literals, assignment)
        self.keep_history = keep_history
        self.history: List[StepObservation] = []
        self.delta = 0 if initially_satisfied else self.watch.false_count
        self.hit_time: Optional[int] = 0 if self.delta == 0 else None
        self.max_delta = self.delta

    @property
    def literal_set(self) -> frozenset:
        return self.watch.literals

    @property
    def vset(self) -> frozenset:
        return self.watch.variables

    @property
    def mismatch_count(self) -> int:
        return self.watch.false_count

    def on_flip(self, record: FlipRecord, new_value: int) -> Optional[StepObservation]:
        """Procesa un paso; devuelve la observación si el paso ocurrió antes de T*."""
        active = self.hit_time is None
        case = classify_flip(record, self.watch.variables) if active else None
        before = self.delta
        raw_delta = self.watch.on_flip(record.flipped_variable, new_value)
        self.delta = self.watch.false_count if record.unsat_count_after > 0 else 0
        self.max_delta = max(self.max_delta, self.delta)
        if not active:
            return None
        observation = StepObservation(t=record.t, case=case, h=record.h, raw_delta=raw_delta,
                                      delta_before=before, delta_after=self.delta)
        if self.keep_history:
            self.history.append(observation)
        if self.delta == 0:
            self.hit_time = record.t + 1
        return observation


@dataclass
class PersistenceViolation:
    literal: Literal
    t_established: int
    t_violated: int


class PersistenceMonitor:
    """
    Vigila 𝔈(Φ,l,σ(t)) para cada literal seguido. Una vez establecido debe
    mantenerse hasta el final; cualquier ruptura queda en `violations`.

    lock_in_fraction sólo cuenta los literales registrados con counted=True (las raíces
    σ*(x)·x); las polaridades opuestas se vigilan pero no entran en la fracción.
    """

    def __init__(self):
        self.watches: List[LiteralSetWatch] = []
        self.became_true_at: List[Optional[int]] = []
        self.counted: List[bool] = []
        self.by_variable: Dict[int, List[int]] = {}
        self.violations: List[PersistenceViolation] = []

    def track(self, watch: LiteralSetWatch, counted: bool = True) -> None:
        index = len(self.watches)
        self.watches.append(watch)
        self.counted.append(counted)
        self.became_true_at.append(0 if watch.holds else None)
        for v in watch.variables:
            self.by_variable.setdefault(v, []).append(index)

    def on_flip(self, record: FlipRecord, new_value: int) -> None:
        t_after = record.t + 1
        for index in self.by_variable.get(record.flipped_variable, ()):
            watch = self.watches[index]
            watch.on_flip(record.flipped_variable, new_value)
            established = self.became_true_at[index]
            if established is not None and not watch.holds:
                self.violations.append(PersistenceViolation(watch.root, established, t_after))
                self.became_true_at[index] = None
            elif established is None and watch.holds:
                self.became_true_at[index] = t_after

    def lock_in_fraction(self) -> float:
        counted = [t for t, c in zip(self.became_true_at, self.counted) if c]
        if not counted:
            return 0.0
        return sum(1 for t in counted if t is not None) / len(counted)


@dataclass
class FlipCaseHistogram:
    """Recuento de casos y de transiciones (caso, h, ΔΔ*) observadas; registra las que violan la tabla."""
    counts: Dict[Case, int] = field(default_factory=lambda: {c: 0 for c in Case})
    transitions: Dict[Tuple[Case, int, int], int] = field(default_factory=dict)
    table_violations: List[Tuple[int, Case, int, int]] = field(default_factory=list)

    def add(self, observation: StepObservation) -> None:
        case = observation.case
        self.counts[case] += 1
        key = (case, observation.h, observation.raw_delta)
        self.transitions[key] = self.transitions.get(key, 0) + 1
        if not allowed_transition(case, observation.h, observation.raw_delta):
            self.table_violations.append((observation.t, case, observation.h, observation.raw_delta))

    def merge(self, other: 'FlipCaseHistogram') -> 'FlipCaseHistogram':
        merged = FlipCaseHistogram()
        for c in Case:
            merged.counts[c] = self.counts[c] + other.counts[c]
        for source in (self.transitions, other.transitions):
            for key, value in source.items():
                merged.transitions[key] = merged.transitions.get(key, 0) + value
        merged.table_violations = self.table_violations + other.table_violations
        return merged


class NCounter:
    """N(Φ,l): pasos cuya variable invertida pertenece a V(Φ,{l}), para cada literal seguido."""

    def __init__(self):
        self.literals: List[Literal] = []
        self.counts: List[int] = []
        self.by_variable: Dict[int, List[int]] = {}

    def track(self, literal: Literal, variables: Iterable[int]) -> None:
        index = len(self.literals)
        self.literals.append(literal)
        self.counts.append(0)
        for v in variables:
            self.by_variable.setdefault(v, []).append(index)

    def on_flip(self, record: FlipRecord) -> None:
        for index in self.by_variable.get(record.flipped_variable, ()):
            self.counts[index] += 1

    def count_of(self, literal: Literal) -> int:
        return self.counts[self.literals.index(literal)]


def update_on_flip(trackers: Sequence[DeltaTracker], monitor: PersistenceMonitor,
                   counter: NCounter, histogram: FlipCaseHistogram, drift: RunningStats,
                   record: FlipRecord, assignment: Assignment) -> None:
    """
    Procesa un FlipRecord con la asignación posterior al paso.

    Cada tracker activo clasifica el paso; sólo los seguidores que contienen la
    variable invertida cambian de estado.
    """
    new_value = assignment[record.flipped_variable]
    for tracker in trackers:
        observation = tracker.on_flip(record, new_value)
        if observation is not None:
            histogram.add(observation)
            drift.add(observation.drift)
    monitor.on_flip(record, new_value)
    counter.on_flip(record)


# --- Contexto por ejecución ------------------------------------------------------

@dataclass
class InstrumentationSummary:
    """Resumen combinable de la instrumentación de una o varias ejecuciones."""
    runs: int = 0
    tracked_roots: int = 0
    persistence_violations: int = 0
    table_violations: int = 0
    bound_violations: int = 0
    stopped_violations: int = 0
    drift: RunningStats = field(default_factory=RunningStats)
    histogram: FlipCaseHistogram = field(default_factory=FlipCaseHistogram)
    lock_in_fraction: float = 0.0
    flip_budget_ratio_mean: Optional[float] = None
    flip_budget_ratio_max: Optional[float] = None

    @property
    def exact_failures(self) -> int:
        return (self.persistence_violations + self.table_violations
                + self.bound_violations + self.stopped_violations)

    def merge(self, other: 'InstrumentationSummary') -> 'InstrumentationSummary':
        runs = self.runs + other.runs
        ratio_means = [(s.flip_budget_ratio_mean, s.tracked_roots) for s in (self, other)
                       if s.flip_budget_ratio_mean is not None]
        ratio_mean = None
        if ratio_means:
            weight = sum(w for _, w in ratio_means)
            ratio_mean = sum(m * w for m, w in ratio_means) / weight if weight else None
        ratio_maxes = [s.flip_budget_ratio_max for s in (self, other) if s.flip_budget_ratio_max is not None]
        return InstrumentationSummary(
            runs=runs,
            tracked_roots=self.tracked_roots + other.tracked_roots,
            persistence_violations=self.persistence_violations + other.persistence_violations,
            table_violations=self.table_violations + other.table_violations,
            bound_violations=self.bound_violations + other.bound_violations,
            stopped_violations=self.stopped_violations + other.stopped_violations,
            drift=self.drift.merge(other.drift),
            histogram=self.histogram.merge(other.histogram),
            lock_in_fraction=((self.lock_in_fraction * self.runs + other.lock_in_fraction * other.runs)
                              / runs) if runs else 0.0,
            flip_budget_ratio_mean=ratio_mean,
            flip_budget_ratio_max=max(ratio_maxes) if ratio_maxes else None,
        )


class InstrumentationContext:
    """
    Sumidero de traza que mantiene Δ*, 𝔈, N y los casos a lo largo de una ejecución.

    Se sigue, para cada variable raíz x, el literal σ*(x)·x (Δ*, N) y ambas
    polaridades de x (persistencia).

    Args:
        formula: Fórmula satisfacible
        sigma_star: Asignación satisfactoria (la del oráculo)
        root_variables: Variables raíz a seguir
        keep_history: Conserva las observaciones por tracker (necesario para drift_report)
    """

    def __init__(self, formula: Formula, sigma_star: Assignment, root_variables: Iterable[int],
                 keep_history: bool = True):
        _require_satisfying(formula, sigma_star)
        self.formula = formula
        self.sigma_star = sigma_star
        self.assignment = Assignment.all_true(formula.num_variables)
        initially_satisfied = evaluate(formula, self.assignment)[0]
        scratch = UcpScratch(formula.num_variables)

        self.trackers: List[DeltaTracker] = []
        self.monitor = PersistenceMonitor()
        self.counter = NCounter()
        self.histogram = FlipCaseHistogram()
        self.drift = RunningStats()
        self.bound_violations = 0
        self.stopped_violations = 0
        self._last_t = -1

        for x in sorted(set(int(v) for v in root_variables)):
            root = sigma_star.true_literal(x)
            literals = ucp(formula, [root], scratch).literals
            tracker = DeltaTracker(x, root, literals, self.assignment, initially_satisfied, keep_history)
            self.trackers.append(tracker)
            self.counter.track(root, tracker.vset)
            self.monitor.track(LiteralSetWatch(root, literals, self.assignment))
            negated = root.negate()
            self.monitor.track(LiteralSetWatch(negated, ucp(formula, [negated], scratch).literals,
                                               self.assignment), counted=False)

    def __call__(self, record: FlipRecord) -> None:
        if record.t != self._last_t + 1:
            raise InstrumentationError(f"Registro fuera de orden: t={record.t} tras t={self._last_t}")
        self._last_t = record.t
        self.assignment.flip(record.flipped_variable)
        update_on_flip(self.trackers, self.monitor, self.counter, self.histogram, self.drift,
                       record, self.assignment)
        for tracker in self.trackers:
            if tracker.delta > len(tracker.literal_set):
                self.bound_violations += 1
            if tracker.hit_time is not None and tracker.hit_time <= record.t + 1 and tracker.delta != 0:
                self.stopped_violations += 1

    def histories(self) -> List[List[StepObservation]]:
        return [tracker.history for tracker in self.trackers]

    def flip_budget_ratios(self) -> List[float]:
        """N(Φ,σ*(x)·x) / |L(Φ,{σ*(x)·x})|² por raíz seguida."""
        return [self.counter.counts[i] / len(tracker.literal_set) ** 2
                for i, tracker in enumerate(self.trackers)]

    def summary(self) -> InstrumentationSummary:
        ratios = self.flip_budget_ratios()
        return InstrumentationSummary(
            runs=1,
            tracked_roots=len(self.trackers),
            persistence_violations=len(self.monitor.violations),
            table_violations=len(self.histogram.table_violations),
            bound_violations=self.bound_violations,
            stopped_violations=self.stopped_violations,
            drift=self.drift,
            histogram=self.histogram,
            lock_in_fraction=self.monitor.lock_in_fraction(),
            flip_budget_ratio_mean=float(np.mean(ratios)) if ratios else None,
            flip_budget_ratio_max=float(np.max(ratios)) if ratios else None,
        )


def choose_tracked_roots(formula: Formula, count: int, generator: np.random.Generator) -> List[int]:
    """
    Variables raíz: `count` elecciones uniformes sin reemplazo más las variables
    de la primera cláusula no satisfecha por la asignación todo-verdadero.
    """
    n = formula.num_variables
    picks = generator.choice(n, size=min(count, n), replace=False) + 1 if count > 0 else []
    roots = set(int(v) for v in picks)
    _, unsat = evaluate(formula, Assignment.all_true(n))
    if unsat:
        a, b = formula.clause(unsat[0])
        roots.update((a.variable, b.variable))
    return sorted(roots)


# --- Comprobaciones fuera de línea -------------------------------------------

@dataclass
class FlipBoundCheck:
    """T ≤ Σ_x N(Φ,σ*(x)·x)."""
    holds: bool
    flips: int
    bound: int
    tight: bool


def check_flip_bound(outcome: RunOutcome, sigma_star: Assignment, formula: Formula) -> FlipBoundCheck:
    """
    Comprueba la cota de inversiones a partir de los recuentos por variable:
    N(Φ,l) = Σ_{v ∈ V(Φ,{l})} inversiones(v).
    """
    _require_satisfying(formula, sigma_star)
    flips_per_variable = np.asarray(outcome.per_variable_flip_counts, dtype=np.int64)
    scratch = UcpScratch(formula.num_variables)
    bound = 0
    for x in range(1, formula.num_variables + 1):
        variables = ucp(formula, [sigma_star.true_literal(x)], scratch).variables
        bound += int(sum(flips_per_variable[v - 1] for v in variables))
    return FlipBoundCheck(holds=outcome.flips <= bound, flips=int(outcome.flips),
                          bound=bound, tight=outcome.flips == bound)


@dataclass
class DriftReport:
    """Deriva media de un paso de Δ* (t < T*), global y por caso."""
    overall: RunningStats
    per_case: Dict[Case, RunningStats]
    case2_h1_frequency: Optional[float]

    def case_mean(self, case: Case) -> Optional[float]:
        return self.per_case[case].mean

    def as_dict(self) -> dict:
        def pack(stats: RunningStats) -> dict:
            return {'count': stats.count, 'mean': stats.mean, 'stderr': stats.stderr,
                    'move_frequency': stats.move_frequency}
        return {'overall': pack(self.overall),
                'per_case': {f'case{int(c)}': pack(s) for c, s in self.per_case.items()},
                'case2_h1_frequency': self.case2_h1_frequency}


def drift_report(histories: Iterable[Sequence[StepObservation]]) -> DriftReport:
    """
    Estima E[Δ*(t+1) - Δ*(t)] restringido a t < T*(Φ,x).

    La deriva global usa Δ* con el indicador; la deriva por caso usa el recuento
    sin indicador, que es el que describe la tabla de transiciones.

    Raises:
        InstrumentationError: Si no se recibe ninguna historia
    """
    histories = list(histories)
    if not histories:
        raise InstrumentationError("drift_report() sin historias")
    overall = RunningStats()
    per_case = {c: RunningStats() for c in Case}
    case2_h1 = 0
    for history in histories:
        for obs in history:
            overall.add(obs.drift)
            per_case[obs.case].add(obs.raw_delta)
            if obs.case is Case.CASE2 and obs.h == 1:
                case2_h1 += 1
    case2 = per_case[Case.CASE2].count
    return DriftReport(overall=overall, per_case=per_case,
                       case2_h1_frequency=case2_h1 / case2 if case2 else None)
