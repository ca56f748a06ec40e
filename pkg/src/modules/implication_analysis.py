"""
Módulo implication_analysis - Propagación unitaria y sub-fórmulas de implicación
================================================================================

Contenido:
- UCP (propagación de cláusulas unitarias): cierre de un conjunto de literales L bajo
  la regla "l ∈ L y existe la cláusula ¬l ∨ l'  ⇒  l' ∈ L". No detecta conflictos:
  L puede contener x y ¬x.
- Sub-fórmula de implicación Φ(l) = (V(Φ,{l}), C(Φ,{l})).
- Estadísticos X(Φ) = Σ_x |V(x)|² + |V(¬x)|² e Y(Φ) (versión truncada en (ln n)⁴).
- Grafo de variables Γ(Φ) (una arista por cláusula, sin signos) y sus componentes.
- Oráculos exactos de 2-SAT: componentes fuertemente conexas del grafo de implicación
  (Tarjan iterativo) y enumeración exhaustiva para instancias pequeñas.

Todas las operaciones son funciones puras de sus entradas.
"""

import math
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from modules.cnf_core import Assignment, Formula, Literal, evaluate
from utils.acceleration import njit

BRUTE_FORCE_MAX_VARIABLES = 24


class Verdict(str, Enum):
    SAT = 'SAT'
    UNSAT = 'UNSAT'


@dataclass(frozen=True)
class UcpResult:
    """
    Resultado de UCP(Φ, semillas).

    Atributos:
        literals: L (cierre de las semillas)
        clauses: C, una cláusula disparadora por cada literal añadido más allá de las semillas
        variables: V, variables subyacentes de L
    """
    literals: FrozenSet[Literal]
    clauses: FrozenSet[int]
    variables: FrozenSet[int]

    @property
    def contradictory(self) -> bool:
        return len(self.literals) > len(self.variables)


@dataclass(frozen=True)
class ImplicationSubformula:
    root: Literal
    variables: FrozenSet[int]
    clause_indices: FrozenSet[int]
    literals: FrozenSet[Literal]

    @property
    def size(self) -> int:
        return len(self.variables)


@dataclass
class SatCertificate:
    """
    Veredicto de satisfacibilidad.

    SAT ⇒ assignment satisface Φ (comprobado con evaluate antes de devolverlo).
    UNSAT ⇒ witness_variable es una x con x y ¬x en la misma componente fuerte
    (None para el oráculo por enumeración).
    """
    verdict: Verdict
    assignment: Optional[Assignment] = None
    witness_variable: Optional[int] = None

    @property
    def satisfiable(self) -> bool:
        return self.verdict is Verdict.SAT


# --- UCP ----------------------------------------------------------------------

class UcpScratch:
    """
    Marcas reutilizables con época: evita reservar memoria en cada llamada a UCP.
    Una instancia por hilo.
    """

    def __init__(self, num_variables: int):
        self.stamp = np.zeros(2 * num_variables, dtype=np.int64)
        self.epoch = 0

    def next_epoch(self) -> int:
        self.epoch += 1
        return self.epoch


def _seed_codes(seeds: Iterable) -> List[int]:
    return [s.code if isinstance(s, Literal) else int(s) for s in seeds]


def ucp(formula: Formula, seeds: Iterable, scratch: Optional[UcpScratch] = None) -> UcpResult:
    """
    Propagación de cláusulas unitarias desde un conjunto de literales semilla.

    Cola FIFO sobre los literales nuevos; para cada l extraído se recorren las
    cláusulas donde aparece ¬l y cada ¬l ∨ l' añade l'. L es el menor punto fijo
    (independiente del orden); C registra la primera cláusula disparadora.

    Args:
        formula: Fórmula Φ
        seeds: Literales (Literal o códigos) sobre variables de Φ
        scratch: Marcas reutilizables opcionales

    Returns:
        UcpResult con L, C y V
    """
    if scratch is None:
        scratch = UcpScratch(formula.num_variables)
    epoch = scratch.next_epoch()
    stamp = scratch.stamp
    lits, occ_start = formula.literals, formula.occ_start
    occ_clause, occ_position = formula.occ_clause, formula.occ_position

    found: List[int] = []
    clauses: List[int] = []
    queue = deque()
    for code in _seed_codes(seeds):
        if not 0 <= code < stamp.shape[0]:
            raise ValueError(f"Literal semilla fuera de rango: {code}")
        if stamp[code] != epoch:
            stamp[code] = epoch
            found.append(code)
            queue.append(code)

    while queue:
        code = queue.popleft()
        neg = code ^ 1
        for j in range(occ_start[neg], occ_start[neg + 1]):
            clause = int(occ_clause[j])
            implied = int(lits[clause, 1 - occ_position[j]])
            if stamp[implied] != epoch:
                stamp[implied] = epoch
                found.append(implied)
                clauses.append(clause)
                queue.append(implied)

    literals = frozenset(Literal.from_code(c) for c in found)
    return UcpResult(literals=literals, clauses=frozenset(clauses),
                     variables=frozenset(l.variable for l in literals))


def implication_subformula(formula: Formula, literal: Literal,
                           scratch: Optional[UcpScratch] = None) -> ImplicationSubformula:
    result = ucp(formula, [literal], scratch)
    return ImplicationSubformula(root=literal, variables=result.variables,
                                 clause_indices=result.clauses, literals=result.literals)


def implied_literals_true(formula: Formula, literal: Literal, assignment: Assignment,
                          scratch: Optional[UcpScratch] = None) -> bool:
    """𝔈(Φ, l, σ): todos los literales de L(Φ,{l}) son verdaderos bajo σ."""
    result = ucp(formula, [literal], scratch)
    return all(assignment.value_of_literal(l) == 1 for l in result.literals)


# --- Estadísticos X / Y -----------------------------------------------------

@njit
def _subformula_sizes(literals, occ_start, occ_clause, occ_position, num_variables):
    """|L(Φ,{l})| y |V(Φ,{l})| para los 2n literales, con marcas de época."""
    num_literals = 2 * num_variables
    lit_stamp = np.zeros(num_literals, dtype=np.int64)
    var_stamp = np.zeros(num_variables, dtype=np.int64)
    queue = np.empty(num_literals, dtype=np.int64)
    lit_sizes = np.zeros(num_literals, dtype=np.int64)
    var_sizes = np.zeros(num_literals, dtype=np.int64)
    for seed in range(num_literals):
        epoch = seed + 1
        head = 0
        tail = 1
        queue[0] = seed
        lit_stamp[seed] = epoch
        var_stamp[seed >> 1] = epoch
        n_vars = 1
        while head < tail:
            code = queue[head]
            head += 1
            neg = code ^ 1
            for j in range(occ_start[neg], occ_start[neg + 1]):
                implied = literals[occ_clause[j], 1 - occ_position[j]]
                if lit_stamp[implied] != epoch:
                    lit_stamp[implied] = epoch
                    queue[tail] = implied
                    tail += 1
                    if var_stamp[implied >> 1] != epoch:
                        var_stamp[implied >> 1] = epoch
                        n_vars += 1
        lit_sizes[seed] = tail
        var_sizes[seed] = n_vars
    return lit_sizes, var_sizes


@dataclass
class SubformulaProfile:
    """Tamaños de las 2n sub-fórmulas de implicación, indexados por código de literal."""
    literal_sizes: np.ndarray
    variable_sizes: np.ndarray

    @property
    def num_variables(self) -> int:
        return self.variable_sizes.shape[0] // 2

    def x_statistic(self) -> int:
        return int(np.sum(self.variable_sizes.astype(np.int64) ** 2))

    def y_statistic(self) -> float:
        n = self.num_variables
        if n < 2:
            # ln 1 = 0: todos los términos truncados valen 0
            return 0.0
        squares = self.variable_sizes.astype(np.float64) ** 2
        per_variable = squares[0::2] + squares[1::2]
        return float(np.sum(np.minimum(per_variable, math.log(n) ** 4)))

    def max_size(self) -> int:
        return int(self.variable_sizes.max()) if self.variable_sizes.size else 0

    def tail_probability(self, t: int) -> float:
        """Fracción de literales con |V(Φ,{l})| > t."""
        return float(np.mean(self.variable_sizes > t))

    def size_histogram(self) -> dict:
        values, counts = np.unique(self.variable_sizes, return_counts=True)
        return {int(v): int(c) for v, c in zip(values, counts)}


def subformula_profile(formula: Formula) -> SubformulaProfile:
    lit_sizes, var_sizes = _subformula_sizes(formula.literals, formula.occ_start,
                                             formula.occ_clause, formula.occ_position,
                                             formula.num_variables)
    return SubformulaProfile(literal_sizes=lit_sizes, variable_sizes=var_sizes)


def x_statistic(formula: Formula) -> int:
    """X(Φ): suma de los cuadrados de |V(Φ,{x})| y |V(Φ,{¬x})| sobre todas las variables."""
    return subformula_profile(formula).x_statistic()


def y_statistic(formula: Formula) -> float:
    """Y(Φ) = Σ_x min{|V(x)|² + |V(¬x)|², (ln n)⁴} (logaritmo natural); 0 si n = 1."""
    return subformula_profile(formula).y_statistic()


# --- Grafo de implicación y SCC ----------------------------------------------

def implication_digraph(formula: Formula) -> Tuple[np.ndarray, np.ndarray]:
    """
    Grafo de implicación en CSR sobre los 2n literales: cada l1 ∨ l2 aporta ¬l1→l2 y ¬l2→l1.

    Returns:
        (adj_start de tamaño 2n+1, adj_target de tamaño 2m)
    """
    lits = formula.literals
    sources = np.concatenate([lits[:, 0] ^ 1, lits[:, 1] ^ 1])
    targets = np.concatenate([lits[:, 1], lits[:, 0]])
    order = np.argsort(sources, kind='stable')
    adj_target = targets[order].astype(np.int64)
    counts = np.bincount(sources, minlength=2 * formula.num_variables)
    adj_start = np.zeros(2 * formula.num_variables + 1, dtype=np.int64)
    np.cumsum(counts, out=adj_start[1:])
    return adj_start, adj_target


@njit
def _tarjan_scc(adj_start, adj_target, num_vertices):
    """Tarjan iterativo. Las componentes se numeran en orden topológico inverso (sumideros primero)."""
    index = np.full(num_vertices, -1, dtype=np.int64)
    low = np.zeros(num_vertices, dtype=np.int64)
    on_stack = np.zeros(num_vertices, dtype=np.bool_)
    stack = np.empty(num_vertices, dtype=np.int64)
    call_vertex = np.empty(num_vertices, dtype=np.int64)
    call_edge = np.empty(num_vertices, dtype=np.int64)
    comp = np.full(num_vertices, -1, dtype=np.int64)
    counter = 0
    n_comp = 0
    sp = 0
    for root in range(num_vertices):
        if index[root] != -1:
            continue
        index[root] = counter
        low[root] = counter
        counter += 1
        stack[sp] = root
        sp += 1
        on_stack[root] = True
        call_vertex[0] = root
        call_edge[0] = adj_start[root]
        depth = 1
        while depth > 0:
            v = call_vertex[depth - 1]
            e = call_edge[depth - 1]
            if e < adj_start[v + 1]:
                call_edge[depth - 1] = e + 1
                w = adj_target[e]
                if index[w] == -1:
                    index[w] = counter
                    low[w] = counter
                    counter += 1
                    stack[sp] = w
                    sp += 1
                    on_stack[w] = True
                    call_vertex[depth] = w
                    call_edge[depth] = adj_start[w]
                    depth += 1
                elif on_stack[w] and index[w] < low[v]:
                    low[v] = index[w]
            else:
                if low[v] == index[v]:
                    while True:
                        sp -= 1
                        w = stack[sp]
                        on_stack[w] = False
                        comp[w] = n_comp
                        if w == v:
                            break
                    n_comp += 1
                depth -= 1
                if depth > 0:
                    u = call_vertex[depth - 1]
                    if low[v] < low[u]:
                        low[u] = low[v]
    return comp, n_comp


def strongly_connected_components(formula: Formula) -> np.ndarray:
    """Identificador de componente fuerte por código de literal (orden topológico inverso)."""
    adj_start, adj_target = implication_digraph(formula)
    comp, _ = _tarjan_scc(adj_start, adj_target, 2 * formula.num_variables)
    return comp


def solve_2sat(formula: Formula) -> SatCertificate:
    """
    Oráculo exacto de 2-SAT por componentes fuertes del grafo de implicación.

    UNSAT si alguna variable comparte componente con su negación. Si no, x es
    verdadera si su componente va después que la de ¬x en orden topológico
    (menor número de Tarjan). Los literales positivos se visitan primero, de modo
    que las variables sin restricciones quedan a +1.
    """
    comp = strongly_connected_components(formula)
    positive, negative = comp[0::2], comp[1::2]
    clash = np.flatnonzero(positive == negative)
    if clash.size:
        return SatCertificate(verdict=Verdict.UNSAT, witness_variable=int(clash[0]) + 1)
    values = np.where(positive < negative, 1, -1).astype(np.int8)
    assignment = Assignment(values)
    satisfied, unsat = evaluate(formula, assignment)
    if not satisfied:
        raise RuntimeError(f"Certificado SCC inválido: cláusulas no satisfechas {unsat[:5]}")
    return SatCertificate(verdict=Verdict.SAT, assignment=assignment)


def brute_force_sat(formula: Formula, chunk_bits: int = 16) -> SatCertificate:
    """
    Enumeración exhaustiva de las 2ⁿ asignaciones en orden lexicográfico
    (-1 < +1, la variable 1 es la más significativa).

    Raises:
        ValueError: Si n > 24
    """
    n = formula.num_variables
    if n > BRUTE_FORCE_MAX_VARIABLES:
        raise ValueError(f"Enumeración limitada a n ≤ {BRUTE_FORCE_MAX_VARIABLES} (n={n})")
    total = 1 << n
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    lits = formula.literals
    var = lits >> 1
    neg = (lits & 1).astype(bool)
    chunk = 1 << min(chunk_bits, n)
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total), dtype=np.int64)
        bits = (idx[:, None] >> shifts[None, :]) & 1
        if lits.shape[0] == 0:
            ok = np.ones(idx.shape[0], dtype=bool)
        else:
            truth = bits[:, var].astype(bool) ^ neg[None, :, :]
            ok = np.all(truth[:, :, 0] | truth[:, :, 1], axis=1)
        hits = np.flatnonzero(ok)
        if hits.size:
            values = np.where(bits[hits[0]] == 1, 1, -1).astype(np.int8)
            return SatCertificate(verdict=Verdict.SAT, assignment=Assignment(values))
    return SatCertificate(verdict=Verdict.UNSAT)


def brute_force_batch(formulas: Sequence[Formula]) -> List[SatCertificate]:
    """
    brute_force_sat para un lote de fórmulas con el mismo n y el mismo m, evaluadas
    a la vez sobre las 2ⁿ asignaciones. Devuelve la misma asignación que brute_force_sat.

    Raises:
        ValueError: Si el lote mezcla tamaños o n > 16
    """
    if not formulas:
        return []
    n, m = formulas[0].num_variables, formulas[0].num_clauses
    if any(f.num_variables != n or f.num_clauses != m for f in formulas):
        raise ValueError("El lote debe tener fórmulas del mismo tamaño (n, m)")
    if n > 16:
        raise ValueError(f"Enumeración por lotes limitada a n ≤ 16 (n={n})")
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    bits = (np.arange(1 << n, dtype=np.int64)[:, None] >> shifts[None, :]) & 1
    if m == 0:
        ok = np.ones((len(formulas), 1 << n), dtype=bool)
    else:
        lits = np.stack([f.literals for f in formulas])
        # truth[k, a, c, j]: literal j de la cláusula c de la fórmula k bajo la asignación a
        truth = bits.astype(bool)[:, lits >> 1].transpose(1, 0, 2, 3) ^ (lits & 1).astype(bool)[:, None]
        ok = np.all(truth[..., 0] | truth[..., 1], axis=2)
    first = np.argmax(ok, axis=1)
    certificates = []
    for k in range(len(formulas)):
        if ok[k, first[k]]:
            values = np.where(bits[first[k]] == 1, 1, -1).astype(np.int8)
            certificates.append(SatCertificate(verdict=Verdict.SAT, assignment=Assignment(values)))
        else:
            certificates.append(SatCertificate(verdict=Verdict.UNSAT))
    return certificates


# --- Grafo de variables Γ(Φ) -----------------------------------------------

@njit
def _find(parent, x):
    while parent[x] != x:
        parent[x] = parent[parent[x]]
        x = parent[x]
    return x


@njit
def _union_pairs(parent, size, us, vs):
    for i in range(us.shape[0]):
        a = _find(parent, us[i])
        b = _find(parent, vs[i])
        if a == b:
            continue
        if size[a] < size[b]:
            a, b = b, a
        parent[b] = a
        size[a] += size[b]


@njit
def _all_roots(parent):
    roots = np.empty(parent.shape[0], dtype=np.int64)
    for i in range(parent.shape[0]):
        roots[i] = _find(parent, i)
    return roots


class UnionFind:
    """
    Conjuntos disjuntos sobre 0..n-1 con unión por tamaño y compresión de caminos (halving).
    """

    def __init__(self, n: int):
        self.parent = np.arange(n, dtype=np.int64)
        self.size = np.ones(n, dtype=np.int64)

    def find(self, x: int) -> int:
        return int(_find(self.parent, x))

    def union(self, x: int, y: int) -> None:
        self.union_many(np.array([x], dtype=np.int64), np.array([y], dtype=np.int64))

    def union_many(self, xs: np.ndarray, ys: np.ndarray) -> None:
        _union_pairs(self.parent, self.size, np.asarray(xs, dtype=np.int64),
                     np.asarray(ys, dtype=np.int64))

    def roots(self) -> np.ndarray:
        return _all_roots(self.parent)


@dataclass
class ComponentTable:
    """
    Componentes de Γ(Φ).

    Atributos:
        labels: Identificador compacto de componente por variable (labels[v-1])
        sizes: Tamaño de cada componente (sizes[id])
    """
    labels: np.ndarray
    sizes: np.ndarray

    def component_of(self, variable: int) -> int:
        return int(self.labels[variable - 1])

    def size_of(self, variable: int) -> int:
        return int(self.sizes[self.labels[variable - 1]])

    @property
    def largest(self) -> int:
        return int(self.sizes.max()) if self.sizes.size else 0

    @property
    def count(self) -> int:
        return int(self.sizes.shape[0])


def variable_graph_components(formula: Formula) -> ComponentTable:
    """Componentes conexas de Γ(Φ): se unen las dos variables de cada cláusula."""
    uf = UnionFind(formula.num_variables)
    if formula.num_clauses:
        uf.union_many(formula.literals[:, 0] >> 1, formula.literals[:, 1] >> 1)
    _, labels, sizes = np.unique(uf.roots(), return_inverse=True, return_counts=True)
    return ComponentTable(labels=labels.astype(np.int64), sizes=sizes.astype(np.int64))

