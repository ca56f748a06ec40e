"""
Módulo cnf_core - Fórmulas 2-CNF aleatorias
===========================================

Representación indexada de fórmulas 2-CNF, el modelo aleatorio de fórmulas
(cada cláusula se extrae de forma independiente y uniforme entre las 4n(n-1)
2-cláusulas posibles), evaluación de asignaciones y lectura/escritura DIMACS.

CODIFICACIÓN DE LITERALES:
    código = 2·(v-1) + (1 si el literal es negativo, 0 si es positivo)
    - negación:       código ^ 1
    - variable (0-b): código >> 1
    Los 2n códigos indexan directamente las listas de apariciones.

ESTRUCTURAS:
    Formula.literals      (m, 2) int64  códigos por cláusula, posición 0/1 = h 1/2
    Formula.occ_start     (2n+1,) int64 inicio de cada lista de apariciones (CSR)
    Formula.occ_clause    (2m,)  int64  índice de cláusula de cada aparición
    Formula.occ_position  (2m,)  int64  posición (0/1) dentro de la cláusula

Todas las estructuras son inmutables tras la construcción (arrays de sólo lectura)
y pueden compartirse entre hilos.
"""

import re
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from utils.rng import STREAM_FORMULA, make_generator


class DimacsFormatError(ValueError):
    """Error de formato DIMACS; line_number indica la línea ofensiva (1-based) si se conoce."""

    def __init__(self, message: str, line_number: Optional[int] = None):
        if line_number is not None:
            message = f"línea {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


@dataclass(frozen=True, order=True)
class Literal:
    """
    Literal (+1)·x o (-1)·x.

    Atributos:
        variable: Índice de variable en [1, n]
        sign: +1 para x, -1 para ¬x
    """
    variable: int
    sign: int

    def __post_init__(self):
        if self.variable < 1:
            raise ValueError(f"Variable fuera de rango: {self.variable}")
        if self.sign not in (1, -1):
            raise ValueError(f"Signo inválido: {self.sign}")

    def negate(self) -> 'Literal':
        return Literal(self.variable, -self.sign)

    def __neg__(self) -> 'Literal':
        return self.negate()

    @property
    def code(self) -> int:
        return encode_literal(self.variable, self.sign)

    @classmethod
    def from_code(cls, code: int) -> 'Literal':
        return cls((int(code) >> 1) + 1, -1 if int(code) & 1 else 1)

    @classmethod
    def from_dimacs(cls, value: int) -> 'Literal':
        if value == 0:
            raise ValueError("El literal DIMACS 0 es el terminador de cláusula")
        return cls(abs(int(value)), 1 if value > 0 else -1)

    def to_dimacs(self) -> int:
        return self.sign * self.variable

    def __str__(self):
        return f"x{self.variable}" if self.sign > 0 else f"¬x{self.variable}"


def encode_literal(variable: int, sign: int) -> int:
    return 2 * (int(variable) - 1) + (1 if sign < 0 else 0)


def literal_variable(code: int) -> int:
    """Variable (1-based) de un código de literal."""
    return (int(code) >> 1) + 1


def literal_sign(code: int) -> int:
    return -1 if int(code) & 1 else 1


@dataclass(frozen=True)
class Clause:
    """Cláusula l1 ∨ l2 como par ordenado (la posición importa para h ∈ {1, 2})."""
    first: Literal
    second: Literal

    def __post_init__(self):
        if self.first.variable == self.second.variable:
            raise ValueError(f"La cláusula repite la variable x{self.first.variable}")

    def __iter__(self):
        yield self.first
        yield self.second

    def __str__(self):
        return f"({self.first} ∨ {self.second})"


ClauseLike = Union[Clause, Tuple[int, int], Sequence[int]]


class Formula:
    """
    Fórmula 2-CNF indexada Φ con n variables y m cláusulas.

    Se admiten cláusulas duplicadas (el modelo muestrea con reemplazo); cada una
    conserva su propio índice.
    """

    def __init__(self, num_variables: int, literals: np.ndarray):
        literals = np.array(literals, dtype=np.int64).reshape(-1, 2)
        if num_variables < 1:
            raise ValueError(f"Número de variables inválido: {num_variables}")
        if literals.size:
            if literals.min() < 0 or literals.max() >= 2 * num_variables:
                raise ValueError("Literal fuera de rango para la fórmula")
            same = (literals[:, 0] >> 1) == (literals[:, 1] >> 1)
            if np.any(same):
                bad = int(np.flatnonzero(same)[0])
                raise ValueError(f"La cláusula {bad} repite variable")

        self.num_variables = int(num_variables)
        self.literals = literals
        self.literals.setflags(write=False)
        self._build_occurrences()
        self._clauses = None

    def _build_occurrences(self):
        m = self.literals.shape[0]
        flat = self.literals.reshape(-1)
        # Orden estable: dentro de cada literal, por (cláusula, posición)
        order = np.argsort(flat, kind='stable')
        counts = np.bincount(flat, minlength=2 * self.num_variables)
        self.occ_start = np.zeros(2 * self.num_variables + 1, dtype=np.int64)
        np.cumsum(counts, out=self.occ_start[1:])
        self.occ_clause = (order // 2).astype(np.int64)
        self.occ_position = (order % 2).astype(np.int64)
        for arr in (self.occ_start, self.occ_clause, self.occ_position):
            arr.setflags(write=False)
        assert self.occ_clause.shape[0] == 2 * m

    @classmethod
    def from_clauses(cls, num_variables: int, clauses: Iterable[ClauseLike]) -> 'Formula':
        """
        Construye una fórmula a partir de objetos Clause o pares DIMACS (p. ej. (1, -2)).
        """
        codes = []
        for clause in clauses:
            if isinstance(clause, Clause):
                first, second = clause.first, clause.second
            else:
                a, b = clause
                first, second = Literal.from_dimacs(a), Literal.from_dimacs(b)
            if first.variable > num_variables or second.variable > num_variables:
                raise ValueError(f"Variable fuera de rango en la cláusula {first} ∨ {second}")
            Clause(first, second)  # valida variables distintas
            codes.append((first.code, second.code))
        return cls(num_variables, np.array(codes, dtype=np.int64).reshape(-1, 2))

    @property
    def num_clauses(self) -> int:
        return int(self.literals.shape[0])

    @property
    def alpha(self) -> float:
        return self.num_clauses / self.num_variables

    @property
    def clauses(self) -> List[Clause]:
        if self._clauses is None:
            self._clauses = [Clause(Literal.from_code(a), Literal.from_code(b))
                             for a, b in self.literals.tolist()]
        return self._clauses

    def clause(self, index: int) -> Clause:
        a, b = self.literals[index]
        return Clause(Literal.from_code(a), Literal.from_code(b))

    def occurrences(self, literal: Union[Literal, int]) -> List[Tuple[int, int]]:
        """Lista de (índice de cláusula, posición 0/1) donde aparece el literal."""
        code = literal.code if isinstance(literal, Literal) else int(literal)
        lo, hi = self.occ_start[code], self.occ_start[code + 1]
        return list(zip(self.occ_clause[lo:hi].tolist(), self.occ_position[lo:hi].tolist()))

    def clause_variables(self) -> np.ndarray:
        """Variables (1-based) de cada cláusula, forma (m, 2)."""
        return (self.literals >> 1) + 1

    def to_dimacs_pairs(self) -> np.ndarray:
        signs = np.where(self.literals & 1, -1, 1)
        return signs * ((self.literals >> 1) + 1)

    def __len__(self):
        return self.num_clauses

    def __eq__(self, other):
        return (isinstance(other, Formula) and self.num_variables == other.num_variables
                and np.array_equal(self.literals, other.literals))

    def __hash__(self):
        return hash((self.num_variables, self.literals.tobytes()))

    def __repr__(self):
        return f"Formula(n={self.num_variables}, m={self.num_clauses})"


class Assignment:
    """
    Asignación σ ∈ {-1, +1}^n (+1 = verdadero). Las variables se indexan desde 1.
    """

    def __init__(self, values):
        values = np.asarray(values, dtype=np.int8).copy()
        if values.ndim != 1:
            raise ValueError("La asignación debe ser un vector")
        if values.size and not np.all(np.abs(values) == 1):
            raise ValueError("Los valores de la asignación deben ser -1 o +1")
        self.values = values

    @classmethod
    def all_true(cls, num_variables: int) -> 'Assignment':
        return cls(np.ones(num_variables, dtype=np.int8))

    def __len__(self):
        return int(self.values.shape[0])

    def __getitem__(self, variable: int) -> int:
        return int(self.values[variable - 1])

    def value_of_literal(self, literal: Union[Literal, int]) -> int:
        if isinstance(literal, Literal):
            return literal.sign * int(self.values[literal.variable - 1])
        return literal_sign(literal) * int(self.values[int(literal) >> 1])

    def true_literal(self, variable: int) -> Literal:
        """σ(x)·x: el literal de x que σ hace verdadero."""
        return Literal(variable, self[variable])

    def flip(self, variable: int) -> None:
        self.values[variable - 1] = -self.values[variable - 1]

    def copy(self) -> 'Assignment':
        return Assignment(self.values)

    def hamming(self, other: 'Assignment') -> int:
        return int(np.count_nonzero(self.values != other.values))

    def __eq__(self, other):
        return isinstance(other, Assignment) and np.array_equal(self.values, other.values)

    def __repr__(self):
        return f"Assignment({self.values.tolist()})"


def clauses_for_density(num_variables: int, alpha: float) -> int:
    """m = round(α·n), redondeando las mitades hacia arriba."""
    return int(np.floor(alpha * num_variables + 0.5))


def generate_random_2cnf(n: int, m: Optional[int] = None, seed: int = 0,
                         alpha: Optional[float] = None) -> Formula:
    """
    Genera Φ con m cláusulas i.i.d. uniformes sobre las 4n(n-1) 2-cláusulas ordenadas.

    Args:
        n: Número de variables (≥ 2)
        m: Número de cláusulas; si es None se usa round(alpha·n)
        seed: Semilla de 64 bits; (n, m, seed) idénticos dan la misma fórmula
        alpha: Densidad m/n alternativa a m

    Returns:
        Formula con exactamente m cláusulas

    Raises:
        ValueError: Si n < 2 o m < 0
    """
    if n < 2:
        raise ValueError(f"Se necesitan al menos 2 variables (n={n})")
    if m is None:
        if alpha is None:
            raise ValueError("Debe indicarse m o alpha")
        m = clauses_for_density(n, alpha)
    if m < 0:
        raise ValueError(f"Número de cláusulas negativo: {m}")

    return sample_random_2cnf(n, m, make_generator(seed, STREAM_FORMULA, n, m))


def sample_random_2cnf(n: int, m: int, rng: np.random.Generator) -> Formula:
    """
    Extrae una 2-CNF uniforme de un generador ya construido.

    Varias llamadas sobre el mismo generador dan fórmulas independientes; sirve para
    lotes grandes de fórmulas pequeñas sin crear un generador por fórmula.
    """
    first = rng.integers(0, n, size=m, dtype=np.int64)
    # Segunda variable uniforme entre las n-1 restantes
    second = rng.integers(0, n - 1, size=m, dtype=np.int64)
    second += second >= first
    signs = rng.integers(0, 2, size=(m, 2), dtype=np.int64)
    literals = np.stack([2 * first + signs[:, 0], 2 * second + signs[:, 1]], axis=1)
    return Formula(n, literals)


def literal_values(formula: Formula, assignment: Assignment) -> np.ndarray:
    """Valor (±1) de cada literal de cada cláusula, forma (m, 2)."""
    lits = formula.literals
    signs = np.where(lits & 1, -1, 1).astype(np.int8)
    return signs * assignment.values[lits >> 1]


def evaluate(formula: Formula, assignment: Assignment) -> Tuple[bool, List[int]]:
    """
    Evalúa Φ bajo σ.

    Returns:
        (satisfecha, índices de las cláusulas con ambos literales a -1)

    Raises:
        ValueError: Si la longitud de la asignación no coincide con n
    """
    if len(assignment) != formula.num_variables:
        raise ValueError(f"La asignación tiene {len(assignment)} variables; "
                         f"la fórmula tiene {formula.num_variables}")
    if formula.num_clauses == 0:
        return True, []
    values = literal_values(formula, assignment)
    unsat = np.flatnonzero((values[:, 0] < 0) & (values[:, 1] < 0))
    return unsat.size == 0, unsat.tolist()


# --- DIMACS -----------------------------------------------------------------

_HEADER = re.compile(r'^p\s+cnf\s+(-?\d+)\s+(-?\d+)\s*$')


def parse_dimacs(text: str) -> Formula:
    """
    Lee una fórmula DIMACS CNF con exactamente 2 literales por cláusula.

    Las cláusulas pueden ocupar varias líneas; se ignoran comentarios ('c') y líneas vacías.

    Raises:
        DimacsFormatError: Cabecera ausente o mal formada, literal fuera de rango,
            anchura ≠ 2, variable repetida o número de cláusulas distinto del declarado
    """
    n = m = None
    pairs = []
    current: List[int] = []
    current_line = None
    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith('c') or line.startswith('%'):
            continue
        if line.startswith('p'):
            if n is not None:
                raise DimacsFormatError("cabecera duplicada", line_number)
            match = _HEADER.match(line)
            if not match:
                raise DimacsFormatError(f"cabecera mal formada: {line!r}", line_number)
            n, m = int(match.group(1)), int(match.group(2))
            if n < 1 or m < 0:
                raise DimacsFormatError(f"cabecera con valores inválidos: n={n}, m={m}", line_number)
            continue
        if n is None:
            raise DimacsFormatError("cláusula antes de la cabecera 'p cnf'", line_number)
        for token in line.split():
            try:
                value = int(token)
            except ValueError:
                raise DimacsFormatError(f"token no entero: {token!r}", line_number) from None
            if value == 0:
                if len(current) != 2:
                    raise DimacsFormatError(f"cláusula de anchura {len(current)} (se esperaba 2)",
                                            current_line or line_number)
                if abs(current[0]) == abs(current[1]):
                    raise DimacsFormatError(f"variable repetida en la cláusula {current}",
                                            current_line or line_number)
                pairs.append((current[0], current[1]))
                current = []
                current_line = None
                continue
            if abs(value) > n:
                raise DimacsFormatError(f"literal {value} fuera de rango (n={n})", line_number)
            if not current:
                current_line = line_number
            current.append(value)
    if n is None:
        raise DimacsFormatError("falta la cabecera 'p cnf'")
    if current:
        raise DimacsFormatError("cláusula sin terminador 0", current_line)
    if len(pairs) != m:
        raise DimacsFormatError(f"la cabecera declara {m} cláusulas y hay {len(pairs)}")
    return Formula.from_clauses(n, pairs)


def write_dimacs(formula: Formula, comments: Sequence[str] = ()) -> str:
    """Forma canónica: comentarios opcionales, cabecera y una cláusula por línea en orden de índice."""
    lines = [f"c {c}" for c in comments]
    lines.append(f"p cnf {formula.num_variables} {formula.num_clauses}")
    lines.extend(f"{a} {b} 0" for a, b in formula.to_dimacs_pairs().tolist())
    return '\n'.join(lines) + '\n'


def read_dimacs_file(path: str) -> Formula:
    with open(path, 'r', encoding='utf-8') as f:
        return parse_dimacs(f.read())


def write_dimacs_file(formula: Formula, path: str, comments: Sequence[str] = ()) -> None:
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        f.write(write_dimacs(formula, comments))
