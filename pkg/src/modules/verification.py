"""
Módulo verification - Baterías de comprobación del laboratorio WalkSAT
======================================================================

Comprobaciones exactas (tolerancia cero):
    - oracle_equivalence: SCC frente a enumeración exhaustiva
    - ucp_closure: L(Φ,{l}) frente a alcanzabilidad en el grafo de implicación
    - oracle_literals_true: todos los literales implicados por σ*(x)·x son verdaderos bajo σ*
    - component_domination: |V(Φ,{l})| ≤ tamaño de la componente de |l| en Γ(Φ)
    - persistence / flip_bound / case_table / delta_bookkeeping sobre ejecuciones instrumentadas
    - engine_consistency: conjunto incremental = reevaluación completa tras cada paso
    - path_agreement: el bucle compilado y el trazado recorren la misma trayectoria
    - fault_injection: sin reparación del conjunto, la comprobación anterior debe fallar

Comprobaciones estadísticas:
    - sampler_uniformity, drift_sign, case2_drift, case4_balance, tail_bound, x_concentration

Código de salida: 0 todo correcto, 1 falla alguna exacta, 3 sólo fallan estadísticas.
"""

import math
import time
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from modules.cnf_core import (Assignment, Formula, clauses_for_density, evaluate, generate_random_2cnf,
                              sample_random_2cnf)
from modules.experiment_harness import tail_bound_check
from modules.implication_analysis import (UcpScratch, brute_force_batch, implication_digraph,
                                          implied_literals_true, solve_2sat, subformula_profile, ucp,
                                          variable_graph_components)
from modules.martingale_instrumentation import (Case, InstrumentationContext, StepObservation,
                                                check_flip_bound, choose_tracked_roots, drift_report)
from modules.walksat_engine import (RunStatus, UnsatClauseSet, init_engine, run, step,
                                    unsat_consistent)
from utils.logger import setup_logger
from utils.rng import STREAM_ROOTS, STREAM_WALKSAT, derive_seed, make_generator, make_stream

logger = setup_logger('walksat_lab')

EXACT = 'exact'
STATISTICAL = 'statistical'

EXIT_OK = 0
EXIT_EXACT_FAILURE = 1
EXIT_STATISTICAL_FAILURE = 3


@dataclass
class CheckResult:
    name: str
    kind: str
    passed: bool
    cases: int
    failures: int = 0
    details: Dict = field(default_factory=dict)
    elapsed_s: float = 0.0


@dataclass
class VerificationReport:
    checks: List[CheckResult] = field(default_factory=list)

    def add(self, result: CheckResult) -> None:
        self.checks.append(result)

    def get(self, name: str) -> CheckResult:
        for check in self.checks:
            if check.name == name:
                return check
        raise KeyError(name)

    @property
    def exact_failed(self) -> List[str]:
        return [c.name for c in self.checks if c.kind == EXACT and not c.passed]

    @property
    def statistical_failed(self) -> List[str]:
        return [c.name for c in self.checks if c.kind == STATISTICAL and not c.passed]

    @property
    def exit_code(self) -> int:
        if self.exact_failed:
            return EXIT_EXACT_FAILURE
        if self.statistical_failed:
            return EXIT_STATISTICAL_FAILURE
        return EXIT_OK

    def as_dict(self) -> dict:
        return {'exit_code': self.exit_code,
                'exact_failed': self.exact_failed,
                'statistical_failed': self.statistical_failed,
                'checks': [asdict(c) for c in self.checks]}


@dataclass
class VerificationPlan:
    """Tamaños de cada batería. Los valores por defecto son los criterios de aceptación."""
    base_seed: int = 20240601
    oracle_max_n: int = 8
    oracle_max_m: int = 16
    oracle_formulas: int = 500
    closure_formulas: int = 200
    closure_max_n: int = 10
    domination_instances: int = 100
    domination_n: int = 10_000
    domination_alphas: tuple = (0.5, 0.9)
    instrumented_runs: int = 50
    instrumented_n: int = 1000
    instrumented_alpha: float = 0.8
    track_vars: int = 64
    consistency_instances: int = 100
    consistency_max_n: int = 100
    consistency_steps: int = 2000
    path_instances: int = 20
    sampler_size: int = 10
    sampler_draws: int = 200_000
    tail_n: int = 100_000
    tail_alpha: float = 0.5
    tail_t_max: int = 100
    concentration_instances: int = 20
    concentration_n: int = 100_000
    concentration_alpha: float = 0.9

    @classmethod
    def quick(cls, base_seed: int = 20240601) -> 'VerificationPlan':
        """Versión reducida para pruebas y comprobaciones rápidas."""
        return cls(base_seed=base_seed, oracle_max_n=5, oracle_max_m=8, oracle_formulas=10,
                   closure_formulas=30, domination_instances=4, domination_n=2000,
                   instrumented_runs=4, instrumented_n=200, track_vars=16,
                   consistency_instances=10, consistency_max_n=40, consistency_steps=300,
                   path_instances=5, sampler_draws=40_000, tail_n=20_000,
                   concentration_instances=6, concentration_n=20_000)


def _timed(check: Callable[..., CheckResult]) -> Callable[..., CheckResult]:
    def wrapper(*args, **kwargs) -> CheckResult:
        start = time.perf_counter()
        result = check(*args, **kwargs)
        result.elapsed_s = time.perf_counter() - start
        return result
    wrapper.__name__ = check.__name__
    wrapper.__doc__ = check.__doc__
    return wrapper


# --- Comprobaciones exactas: oráculo y UCP ---------------------------------------

@_timed
def check_oracle_equivalence(plan: VerificationPlan) -> CheckResult:
    """
    Mismo veredicto SCC/enumeración y certificados SAT válidos para n ∈ [2, max_n], m ∈ [0, max_m].

    Las fórmulas de cada celda (n, m) salen de un único flujo y se enumeran en lote.
    """
    cases = failures = sat = 0
    mismatches = []
    for n in range(2, plan.oracle_max_n + 1):
        for m in range(plan.oracle_max_m + 1):
            generator = make_generator(derive_seed(plan.base_seed, 'oracle', n, m))
            batch = [sample_random_2cnf(n, m, generator) for _ in range(plan.oracle_formulas)]
            for k, (formula, slow) in enumerate(zip(batch, brute_force_batch(batch))):
                fast = solve_2sat(formula)
                cases += 1
                ok = fast.verdict is slow.verdict
                if fast.satisfiable:
                    sat += 1
                    ok = ok and evaluate(formula, fast.assignment)[0]
                if slow.satisfiable:
                    ok = ok and evaluate(formula, slow.assignment)[0]
                if not ok:
                    failures += 1
                    mismatches.append((n, m, k))
    return CheckResult('oracle_equivalence', EXACT, failures == 0, cases, failures,
                       {'satisfiable': sat, 'first_mismatches': mismatches[:5]})


def _closure_formulas(plan: VerificationPlan) -> List[Formula]:
    generator = make_generator(plan.base_seed, 11)
    formulas = []
    for k in range(plan.closure_formulas):
        n = int(generator.integers(2, plan.closure_max_n + 1))
        m = int(generator.integers(0, 2 * n + 1))
        formulas.append(generate_random_2cnf(n, m, derive_seed(plan.base_seed, 'closure', k)))
    return formulas


def reachable_literals(adj_start: np.ndarray, adj_target: np.ndarray, source: int) -> set:
    """Códigos alcanzables desde `source` (incluido) por BFS en el grafo de implicación."""
    seen = {source}
    queue = deque([source])
    while queue:
        code = queue.popleft()
        for target in adj_target[adj_start[code]:adj_start[code + 1]].tolist():
            if target not in seen:
                seen.add(target)
                queue.append(target)
    return seen


@_timed
def check_ucp_closure(plan: VerificationPlan, formulas: Optional[List[Formula]] = None) -> CheckResult:
    """L(Φ,{l}) coincide con la alcanzabilidad desde l para las 2n semillas."""
    formulas = _closure_formulas(plan) if formulas is None else formulas
    cases = failures = 0
    for formula in formulas:
        adj_start, adj_target = implication_digraph(formula)
        scratch = UcpScratch(formula.num_variables)
        for code in range(2 * formula.num_variables):
            result = ucp(formula, [code], scratch)
            cases += 1
            expected = reachable_literals(adj_start, adj_target, code)
            if {l.code for l in result.literals} != expected or len(result.clauses) > len(expected) - 1:
                failures += 1
    return CheckResult('ucp_closure', EXACT, failures == 0, cases, failures,
                       {'formulas': len(formulas)})


@_timed
def check_oracle_literals_true(plan: VerificationPlan, formulas: Optional[List[Formula]] = None) -> CheckResult:
    """Con σ* del oráculo, todos los literales de L(Φ,{σ*(x)·x}) son verdaderos, para toda x."""
    formulas = _closure_formulas(plan) if formulas is None else formulas
    cases = failures = instances = 0
    for formula in formulas:
        certificate = solve_2sat(formula)
        if not certificate.satisfiable:
            continue
        instances += 1
        sigma_star = certificate.assignment
        scratch = UcpScratch(formula.num_variables)
        for x in range(1, formula.num_variables + 1):
            cases += 1
            if not implied_literals_true(formula, sigma_star.true_literal(x), sigma_star, scratch):
                failures += 1
    return CheckResult('oracle_literals_true', EXACT, failures == 0, cases, failures,
                       {'satisfiable_instances': instances})


@_timed
def check_component_domination(plan: VerificationPlan) -> CheckResult:
    """|V(Φ,{l})| ≤ |C(Γ(Φ), |l|)| para los 2n literales."""
    cases = failures = 0
    for alpha in plan.domination_alphas:
        m = clauses_for_density(plan.domination_n, alpha)
        for k in range(plan.domination_instances):
            formula = generate_random_2cnf(plan.domination_n, m,
                                           derive_seed(plan.base_seed, 'domination', alpha, k))
            sizes = subformula_profile(formula).variable_sizes
            components = variable_graph_components(formula)
            bound = np.repeat(components.sizes[components.labels], 2)
            cases += sizes.shape[0]
            failures += int(np.count_nonzero(sizes > bound))
    return CheckResult('component_domination', EXACT, failures == 0, cases, failures,
                       {'n': plan.domination_n, 'alphas': list(plan.domination_alphas)})


# --- Ejecuciones instrumentadas -------------------------------------------------

@dataclass
class InstrumentedBatch:
    runs: int = 0
    unsat_skipped: int = 0
    cap_reached: int = 0
    tracked_roots: int = 0
    persistence_violations: int = 0
    table_violations: int = 0
    bound_violations: int = 0
    stopped_violations: int = 0
    flip_bound_failures: int = 0
    accounting_failures: int = 0
    lock_in_fractions: List[float] = field(default_factory=list)
    histories: List = field(default_factory=list)


def run_instrumented_batch(plan: VerificationPlan) -> InstrumentedBatch:
    """Ejecuciones instrumentadas con σ* del oráculo; las instancias UNSAT se omiten."""
    batch = InstrumentedBatch()
    m = clauses_for_density(plan.instrumented_n, plan.instrumented_alpha)
    for k in range(plan.instrumented_runs):
        seed = derive_seed(plan.base_seed, 'instrumented', k)
        formula = generate_random_2cnf(plan.instrumented_n, m, seed)
        certificate = solve_2sat(formula)
        if not certificate.satisfiable:
            batch.unsat_skipped += 1
            continue
        roots = choose_tracked_roots(formula, plan.track_vars, make_generator(seed, STREAM_ROOTS))
        context = InstrumentationContext(formula, certificate.assignment, roots)
        outcome = run(formula, trace=context, stream=make_stream(seed, STREAM_WALKSAT))
        summary = context.summary()

        batch.runs += 1
        batch.cap_reached += outcome.status is RunStatus.CAP_REACHED
        batch.tracked_roots += summary.tracked_roots
        batch.persistence_violations += summary.persistence_violations
        batch.table_violations += summary.table_violations
        batch.bound_violations += summary.bound_violations
        batch.stopped_violations += summary.stopped_violations
        batch.lock_in_fractions.append(summary.lock_in_fraction)
        batch.histories.extend(context.histories())
        if not check_flip_bound(outcome, certificate.assignment, formula).holds:
            batch.flip_bound_failures += 1
        if int(outcome.per_variable_flip_counts.sum()) != outcome.flips:
            batch.accounting_failures += 1
    logger.debug(f"Lote instrumentado: {batch.runs} ejecuciones, {batch.unsat_skipped} UNSAT omitidas")
    return batch


def instrumented_checks(batch: InstrumentedBatch) -> List[CheckResult]:
    report = drift_report(batch.histories) if batch.histories else None
    results = [
        CheckResult('persistence', EXACT, batch.persistence_violations == 0,
                    batch.tracked_roots * 2, batch.persistence_violations,
                    {'runs': batch.runs, 'unsat_skipped': batch.unsat_skipped,
                     'mean_lock_in_fraction': float(np.mean(batch.lock_in_fractions))
                     if batch.lock_in_fractions else None}),
        CheckResult('flip_bound', EXACT,
                    batch.flip_bound_failures == 0 and batch.accounting_failures == 0,
                    batch.runs, batch.flip_bound_failures + batch.accounting_failures,
                    {'accounting_failures': batch.accounting_failures}),
        CheckResult('case_table', EXACT, batch.table_violations == 0,
                    report.overall.count if report else 0, batch.table_violations),
        CheckResult('delta_bookkeeping', EXACT,
                    batch.bound_violations == 0 and batch.stopped_violations == 0,
                    batch.tracked_roots, batch.bound_violations + batch.stopped_violations,
                    {'bound_violations': batch.bound_violations,
                     'stopped_violations': batch.stopped_violations}),
    ]
    results.extend(_drift_checks(report))
    results.append(_case4_balance_check(batch.histories))
    return results


def case4_down_moves(histories: Iterable[Sequence[StepObservation]]) -> Tuple[int, int]:
    """(pasos del caso 4, pasos del caso 4 con ΔΔ* sin indicador = -1)."""
    total = down = 0
    for history in histories:
        for observation in history:
            if observation.case is Case.CASE4:
                total += 1
                down += observation.raw_delta == -1
    return total, down


def _case4_balance_check(histories) -> CheckResult:
    """En el caso 4 la bajada ocurre con h = 2: su frecuencia debe ser ≥ 1/2 - 3 errores estándar."""
    total, down = case4_down_moves(histories)
    if total == 0:
        return CheckResult('case4_balance', STATISTICAL, True, 0, 0, {'inconclusive': True})
    frequency = down / total
    threshold = 0.5 - 3 * math.sqrt(0.25 / total)
    passed = frequency >= threshold
    return CheckResult('case4_balance', STATISTICAL, passed, total, int(not passed),
                       {'down_frequency': frequency, 'threshold': threshold})


def _drift_checks(report) -> List[CheckResult]:
    if report is None or report.overall.stderr is None:
        details = {'inconclusive': True}
        return [CheckResult('drift_sign', STATISTICAL, True, 0, 0, details),
                CheckResult('case2_drift', STATISTICAL, True, 0, 0, details)]
    overall = report.overall
    drift_ok = overall.mean <= 3 * overall.stderr
    case2 = report.per_case[Case.CASE2]
    details2 = {'mean': case2.mean, 'stderr': case2.stderr, 'count': case2.count,
                'h1_frequency': report.case2_h1_frequency}
    if case2.stderr is None or case2.stderr == 0:
        case2_ok = True
        details2['inconclusive'] = True
    else:
        case2_ok = abs(case2.mean + 0.5) <= 3 * case2.stderr
    return [
        CheckResult('drift_sign', STATISTICAL, drift_ok, overall.count, int(not drift_ok),
                    {'mean': overall.mean, 'stderr': overall.stderr,
                     'per_case': report.as_dict()['per_case']}),
        CheckResult('case2_drift', STATISTICAL, case2_ok, case2.count, int(not case2_ok), details2),
    ]


# --- Motor -----------------------------------------------------------------------

def first_inconsistent_step(formula: Formula, seed: int, steps: int, repair: bool = True) -> Optional[int]:
    """Paso tras el cual el conjunto incremental difiere de la reevaluación (None si nunca)."""
    state = init_engine(formula, cap=steps)
    stream = make_stream(seed, STREAM_WALKSAT)
    while not state.satisfied and state.t < state.cap:
        step(state, stream, repair=repair)
        if not unsat_consistent(state):
            return state.t
    return None


def _small_instance(plan: VerificationPlan, k: int, label: str) -> Formula:
    generator = make_generator(derive_seed(plan.base_seed, label, k))
    n = int(generator.integers(2, plan.consistency_max_n + 1))
    alpha = float(generator.uniform(0.1, 1.2))
    return generate_random_2cnf(n, clauses_for_density(n, alpha), derive_seed(plan.base_seed, label, 'f', k))


@_timed
def check_engine_consistency(plan: VerificationPlan) -> CheckResult:
    failures = 0
    for k in range(plan.consistency_instances):
        formula = _small_instance(plan, k, 'consistency')
        if first_inconsistent_step(formula, derive_seed(plan.base_seed, 'walk', k),
                                   plan.consistency_steps) is not None:
            failures += 1
    return CheckResult('engine_consistency', EXACT, failures == 0, plan.consistency_instances, failures)


@_timed
def check_path_agreement(plan: VerificationPlan) -> CheckResult:
    """Misma semilla ⇒ mismo T, σ(T) y recuentos por variable en el bucle compilado y el trazado."""
    failures = 0
    for k in range(plan.path_instances):
        formula = _small_instance(plan, k, 'path')
        seed = derive_seed(plan.base_seed, 'path-walk', k)
        fast = run(formula, seed=seed, cap=plan.consistency_steps)
        traced = run(formula, seed=seed, cap=plan.consistency_steps, collect_trace=True)
        same = (fast.flips == traced.flips and fast.status is traced.status
                and fast.final_assignment == traced.final_assignment
                and np.array_equal(fast.per_variable_flip_counts, traced.per_variable_flip_counts))
        failures += not same
    return CheckResult('path_agreement', EXACT, failures == 0, plan.path_instances, failures)


@_timed
def check_fault_injection(plan: VerificationPlan) -> CheckResult:
    """Control negativo: sin reparar el conjunto, la comprobación de consistencia debe detectarlo."""
    for k in range(100):
        formula = generate_random_2cnf(50, 25, derive_seed(plan.base_seed, 'fault', k))
        if evaluate(formula, Assignment.all_true(50))[0]:
            continue
        detected_at = first_inconsistent_step(formula, derive_seed(plan.base_seed, 'fault-walk', k),
                                              plan.consistency_steps, repair=False)
        return CheckResult('fault_injection', EXACT, detected_at is not None, 1,
                           int(detected_at is None), {'detected_at_step': detected_at})
    return CheckResult('fault_injection', EXACT, False, 0, 1, {'reason': 'sin instancia de control'})


# --- Comprobaciones estadísticas ------------------------------------------------

@_timed
def check_sampler_uniformity(plan: VerificationPlan) -> CheckResult:
    """χ² sobre las cláusulas muestreadas de un conjunto fijo y sobre h."""
    unsat = UnsatClauseSet(plan.sampler_size * 3)
    for clause in range(0, plan.sampler_size * 3, 3):
        unsat.add(clause)
    stream = make_stream(derive_seed(plan.base_seed, 'sampler'), STREAM_WALKSAT)
    draws = np.array([unsat.sample(stream) for _ in range(plan.sampler_draws)])
    _, clause_counts = np.unique(draws, return_counts=True)
    h_ones = sum(1 for _ in range(plan.sampler_draws) if stream.next_uniform() < 0.5)
    clause_p = float(stats.chisquare(clause_counts).pvalue)
    h_p = float(stats.chisquare([h_ones, plan.sampler_draws - h_ones]).pvalue)
    passed = clause_counts.shape[0] == plan.sampler_size and min(clause_p, h_p) > 1e-3
    return CheckResult('sampler_uniformity', STATISTICAL, passed, plan.sampler_draws, int(not passed),
                       {'clause_pvalue': clause_p, 'h_pvalue': h_p})


@_timed
def check_tail_bound(plan: VerificationPlan) -> CheckResult:
    """Pr[|V(Φ,{l})| > t] ≤ 3·exp(-αt/20) para 4/(1-α) < t ≤ t_max."""
    m = clauses_for_density(plan.tail_n, plan.tail_alpha)
    formula = generate_random_2cnf(plan.tail_n, m, derive_seed(plan.base_seed, 'tail'))
    points = tail_bound_check(subformula_profile(formula), plan.tail_alpha, plan.tail_t_max)
    bad = [p.t for p in points if not p.ok]
    margin = min((p.bound - p.empirical for p in points), default=math.inf)
    return CheckResult('tail_bound', STATISTICAL, not bad, len(points), len(bad),
                       {'violating_t': bad[:10], 'min_margin': margin})


@_timed
def check_x_concentration(plan: VerificationPlan) -> CheckResult:
    """Desviación relativa de X(Φ)/n entre instancias ≤ 20%."""
    m = clauses_for_density(plan.concentration_n, plan.concentration_alpha)
    values = np.array([
        subformula_profile(generate_random_2cnf(plan.concentration_n, m,
                                                derive_seed(plan.base_seed, 'concentration', k))
                           ).x_statistic() / plan.concentration_n
        for k in range(plan.concentration_instances)])
    relative = float(values.std(ddof=1) / values.mean()) if values.size > 1 else 0.0
    passed = relative <= 0.2
    return CheckResult('x_concentration', STATISTICAL, passed, int(values.size), int(not passed),
                       {'mean_x_per_n': float(values.mean()), 'relative_std': relative})


# --- Orquestación ----------------------------------------------------------------

def run_verification(plan: Optional[VerificationPlan] = None) -> VerificationReport:
    """Ejecuta todas las baterías y devuelve el informe (no termina el proceso)."""
    plan = plan or VerificationPlan()
    report = VerificationReport()

    def record(result: CheckResult) -> None:
        report.add(result)
        message = (f"[{result.kind}] {result.name}: {'OK' if result.passed else 'FALLO'} "
                   f"({result.cases} casos, {result.failures} fallos, {result.elapsed_s:.2f} s)")
        if result.passed:
            logger.info(message)
        elif result.kind == EXACT:
            logger.error(message)
        else:
            logger.warning(message)

    record(check_oracle_equivalence(plan))
    closure = _closure_formulas(plan)
    record(check_ucp_closure(plan, closure))
    record(check_oracle_literals_true(plan, closure))
    record(check_component_domination(plan))

    start = time.perf_counter()
    batch = run_instrumented_batch(plan)
    elapsed = time.perf_counter() - start
    for result in instrumented_checks(batch):
        result.elapsed_s = elapsed
        record(result)

    record(check_engine_consistency(plan))
    record(check_path_agreement(plan))
    record(check_fault_injection(plan))
    record(check_sampler_uniformity(plan))
    record(check_tail_bound(plan))
    record(check_x_concentration(plan))

    logger.info(f"Verificación terminada: código {report.exit_code} "
                f"(exactas fallidas: {report.exact_failed or 'ninguna'}, "
                f"estadísticas fallidas: {report.statistical_failed or 'ninguna'})")
    return report
