"""
Módulo walksat_engine - WalkSAT para 2-CNF
==========================================

Implementación exacta del algoritmo WalkSAT:

    σ(0) = asignación todo-verdadero, t = 0
    mientras σ(t) no satisfaga Φ y t < cap (por defecto 100·n²):
        elegir uniformemente una cláusula no satisfecha a(t) = l1 ∨ l2
        elegir uniformemente h ∈ {1, 2}
        invertir la variable |l_h|
    devolver σ(t)

El conjunto de cláusulas no satisfechas se mantiene como array de índices +
mapa de posiciones con borrado por intercambio (swap-remove): inserción, borrado
y muestreo uniforme en O(1). Cada inversión sólo revisa las listas de apariciones
de los dos literales de la variable invertida.

Hay dos caminos de ejecución que consumen el mismo flujo de uniformes en el mismo
orden (cláusula, luego h), por lo que una semilla produce la misma trayectoria:
    - step() en Python, que entrega cada FlipRecord a un sumidero de traza
    - _flip_loop compilado (Numba), usado por run() cuando no hay traza
"""

import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, List, Optional, Tuple

import numpy as np

from modules.cnf_core import Assignment, Formula, evaluate
from utils.acceleration import njit
from utils.rng import STREAM_WALKSAT, UniformStream, make_stream

TraceSink = Callable[['FlipRecord'], None]


class EngineContractError(RuntimeError):
    """Uso del motor fuera de contrato (paso con Φ satisfecha, en el límite, conjunto vacío...)."""


class RunStatus(str, Enum):
    SATISFIED = 'Satisfied'
    CAP_REACHED = 'CapReached'


def default_cap(num_variables: int) -> int:
    return 100 * num_variables * num_variables


# --- Núcleo compilado -------------------------------------------------------

@njit
def _clause_unsat(literals, values, clause):
    a = literals[clause, 0]
    b = literals[clause, 1]
    va = values[a >> 1]
    if a & 1:
        va = -va
    vb = values[b >> 1]
    if b & 1:
        vb = -vb
    return va < 0 and vb < 0


@njit
def _repair_after_flip(literals, occ_start, occ_clause, values, members, position, size, var):
    """Recalcula la pertenencia de las cláusulas que contienen `var` (0-based). Devuelve el nuevo tamaño."""
    for side in range(2):
        lit = 2 * var + side
        for j in range(occ_start[lit], occ_start[lit + 1]):
            clause = occ_clause[j]
            unsat = _clause_unsat(literals, values, clause)
            slot = position[clause]
            if unsat and slot < 0:
                members[size] = clause
                position[clause] = size
                size += 1
            elif not unsat and slot >= 0:
                last = members[size - 1]
                members[slot] = last
                position[last] = slot
                position[clause] = -1
                size -= 1
    return size


@njit
def _flip_loop(literals, occ_start, occ_clause, values, members, position, size,
               flip_counts, t, cap, uniforms, u_pos):
    """
    Bucle de WalkSAT sin traza. Se detiene al satisfacer Φ, al llegar a cap o al
    agotar el bloque de uniformes (cada paso consume dos).
    """
    u_end = uniforms.shape[0]
    while size > 0 and t < cap and u_pos + 2 <= u_end:
        idx = int(uniforms[u_pos] * size)
        if idx >= size:
            idx = size - 1
        clause = members[idx]
        h = 0 if uniforms[u_pos + 1] < 0.5 else 1
        u_pos += 2
        var = literals[clause, h] >> 1
        values[var] = -values[var]
        flip_counts[var] += 1
        t += 1
        size = _repair_after_flip(literals, occ_start, occ_clause, values,
                                  members, position, size, var)
    return size, t, u_pos


# --- Tipos --------------------------------------------------------------------

class UnsatClauseSet:
    """
    Conjunto indexado de cláusulas no satisfechas con muestreo uniforme en O(1).

    i ∈ members[:size]  ⇔  position[i] ≥ 0
    """

    def __init__(self, num_clauses: int):
        self.members = np.empty(num_clauses, dtype=np.int64)
        self.position = np.full(num_clauses, -1, dtype=np.int64)
        self.size = 0

    def add(self, clause: int) -> None:
        if self.position[clause] >= 0:
            return
        self.members[self.size] = clause
        self.position[clause] = self.size
        self.size += 1

    def remove(self, clause: int) -> None:
        slot = self.position[clause]
        if slot < 0:
            raise KeyError(f"La cláusula {clause} no está en el conjunto")
        last = self.members[self.size - 1]
        self.members[slot] = last
        self.position[last] = slot
        self.position[clause] = -1
        self.size -= 1

    def sample(self, stream: UniformStream) -> int:
        if self.size == 0:
            raise EngineContractError("Muestreo sobre un conjunto vacío")
        return int(self.members[stream.next_index(self.size)])

    def __contains__(self, clause: int) -> bool:
        return 0 <= clause < self.position.shape[0] and self.position[clause] >= 0

    def __len__(self):
        return self.size

    def __iter__(self):
        return iter(self.members[:self.size].tolist())

    def to_set(self) -> set:
        return set(self.members[:self.size].tolist())


@dataclass
class FlipRecord:
    """
    Un paso de WalkSAT: la transición σ(t) → σ(t+1).

    Atributos:
        t: Índice del paso (0 para la primera inversión)
        clause_index: Cláusula elegida a(t)
        h: Posición elegida (1 o 2)
        flipped_variable: |l_h|
        unsat_count_after: Cláusulas no satisfechas tras la inversión
        literals: Códigos (l1, l2) de la cláusula elegida
    """
    t: int
    clause_index: int
    h: int
    flipped_variable: int
    unsat_count_after: int
    literals: Tuple[int, int]

    @property
    def first_variable(self) -> int:
        return (self.literals[0] >> 1) + 1

    @property
    def second_variable(self) -> int:
        return (self.literals[1] >> 1) + 1


@dataclass
class EngineState:
    formula: Formula
    assignment: Assignment
    unsat: UnsatClauseSet
    cap: int
    t: int = 0
    flip_counts: np.ndarray = None

    def __post_init__(self):
        if self.flip_counts is None:
            self.flip_counts = np.zeros(self.formula.num_variables, dtype=np.int64)

    @property
    def satisfied(self) -> bool:
        return self.unsat.size == 0


@dataclass
class RunOutcome:
    """
    Resumen de una ejecución.

    Invariantes: status SATISFIED ⇒ final_assignment satisface Φ;
    sum(per_variable_flip_counts) == flips.
    """
    status: RunStatus
    flips: int
    final_assignment: Assignment
    per_variable_flip_counts: np.ndarray
    cap: int
    wall_time_ns: int = 0
    trace: Optional[List[FlipRecord]] = field(default=None, repr=False)


# --- Operaciones ------------------------------------------------------------

def init_engine(formula: Formula, cap: Optional[int] = None) -> EngineState:
    """
    Estado inicial: σ(0) = todo-verdadero, t = 0, unsat = cláusulas con dos literales negativos.

    Args:
        formula: Fórmula válida
        cap: Máximo de inversiones; por defecto 100·n²
    """
    if cap is None:
        cap = default_cap(formula.num_variables)
    if cap < 0:
        raise ValueError(f"Límite de inversiones negativo: {cap}")
    assignment = Assignment.all_true(formula.num_variables)
    unsat = UnsatClauseSet(formula.num_clauses)
    _, unsat_indices = evaluate(formula, assignment)
    for clause in unsat_indices:
        unsat.add(clause)
    return EngineState(formula=formula, assignment=assignment, unsat=unsat, cap=int(cap))


def sample_unsat_clause(state: EngineState, stream: UniformStream) -> int:
    """Cláusula uniforme entre las no satisfechas."""
    return state.unsat.sample(stream)


def apply_flip(state: EngineState, variable: int, repair: bool = True) -> None:
    """
    Invierte `variable` (1-based) y repara el conjunto de no satisfechas revisando
    sólo las listas de apariciones de x y ¬x.

    Args:
        repair: False omite la reparación (sólo para el control negativo de verificación)
    """
    if not 1 <= variable <= state.formula.num_variables:
        raise EngineContractError(f"Variable fuera de rango: {variable}")
    var = variable - 1
    values = state.assignment.values
    values[var] = -values[var]
    if repair:
        f = state.formula
        state.unsat.size = _repair_after_flip(f.literals, f.occ_start, f.occ_clause, values,
                                              state.unsat.members, state.unsat.position,
                                              state.unsat.size, var)


def step(state: EngineState, stream: UniformStream, repair: bool = True) -> FlipRecord:
    """
    Un paso de WalkSAT: cláusula uniforme de unsat, h uniforme, inversión de |l_h|.

    Raises:
        EngineContractError: Si σ ya satisface Φ o t alcanzó el límite
    """
    if state.unsat.size == 0:
        raise EngineContractError("step() sobre una asignación que ya satisface la fórmula")
    if state.t >= state.cap:
        raise EngineContractError(f"step() con t = cap = {state.cap}")
    clause = sample_unsat_clause(state, stream)
    h = 1 if stream.next_uniform() < 0.5 else 2
    first, second = (int(c) for c in state.formula.literals[clause])
    variable = ((first, second)[h - 1] >> 1) + 1
    apply_flip(state, variable, repair=repair)
    state.flip_counts[variable - 1] += 1
    record = FlipRecord(t=state.t, clause_index=clause, h=h, flipped_variable=variable,
                        unsat_count_after=state.unsat.size, literals=(first, second))
    state.t += 1
    return record


def unsat_consistent(state: EngineState) -> bool:
    """Compara el conjunto incremental con una reevaluación completa."""
    _, unsat_indices = evaluate(state.formula, state.assignment)
    return set(unsat_indices) == state.unsat.to_set()


def run(formula: Formula, seed: Optional[int] = None, cap: Optional[int] = None,
        trace: Optional[TraceSink] = None, collect_trace: bool = False,
        stream: Optional[UniformStream] = None) -> RunOutcome:
    """
    Ejecuta WalkSAT hasta satisfacer Φ o llegar a cap.

    Args:
        formula: Fórmula de entrada
        seed: Semilla del flujo de WalkSAT (ignorada si se pasa `stream`)
        cap: Límite de inversiones (por defecto 100·n²)
        trace: Sumidero llamado con cada FlipRecord, en orden
        collect_trace: Guarda además la traza completa en el resultado (instancias pequeñas)
        stream: Flujo de uniformes ya construido

    Returns:
        RunOutcome con σ(T) en ambos casos, como el pseudocódigo
    """
    if stream is None:
        stream = make_stream(seed, STREAM_WALKSAT)
    state = init_engine(formula, cap)
    records: Optional[List[FlipRecord]] = [] if collect_trace else None

    if trace is None and records is None:
        start = time.perf_counter_ns()
        _run_compiled(state, stream)
        elapsed = time.perf_counter_ns() - start
    else:
        # Sólo se cronometra el paso; el sumidero queda fuera
        elapsed = 0
        while state.unsat.size > 0 and state.t < state.cap:
            start = time.perf_counter_ns()
            record = step(state, stream)
            elapsed += time.perf_counter_ns() - start
            if records is not None:
                records.append(record)
            if trace is not None:
                trace(record)

    status = RunStatus.SATISFIED if state.unsat.size == 0 else RunStatus.CAP_REACHED
    return RunOutcome(status=status, flips=state.t, final_assignment=state.assignment,
                      per_variable_flip_counts=state.flip_counts, cap=state.cap,
                      wall_time_ns=elapsed, trace=records)


def _run_compiled(state: EngineState, stream: UniformStream) -> None:
    f = state.formula
    unsat = state.unsat
    while unsat.size > 0 and state.t < state.cap:
        if stream.available() < 2:
            stream.refill(2)
        size, t, position = _flip_loop(f.literals, f.occ_start, f.occ_clause,
                                       state.assignment.values, unsat.members, unsat.position,
                                       unsat.size, state.flip_counts, state.t, state.cap,
                                       stream.buffer, stream.position)
        unsat.size, state.t, stream.position = int(size), int(t), int(position)
