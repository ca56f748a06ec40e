"""
Laboratorio WalkSAT para 2-SAT aleatorio - punto de entrada de línea de comandos.

Subcomandos:
    gen          Genera una 2-CNF aleatoria en formato DIMACS
    run          Oráculo + WalkSAT (+ instrumentación) sobre una fórmula; fila CSV en stdout
    sweep-n      T/n frente a n para varias densidades
    sweep-alpha  T/n frente a α para n fijo
    verify       Baterías de comprobación exactas y estadísticas
    ucp-stats    X, Y, tamaños de sub-fórmulas de implicación y cola empírica
    plot         SVG a partir de un CSV de barrido

Códigos de salida: 0 éxito, 1 fallo exacto, 2 error de uso/configuración/entrada,
3 sólo fallos estadísticos, 130 interrumpido.
"""

import argparse
import json
import logging
import os
import sys
from typing import List, Optional

import pandas as pd

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from modules.cnf_core import (DimacsFormatError, clauses_for_density, generate_random_2cnf,  # noqa: E402
                              read_dimacs_file, write_dimacs, write_dimacs_file)
from modules.experiment_harness import (CSV_COLUMNS, DEFAULT_BASE_SEED, ConfigurationError,  # noqa: E402
                                        ExperimentConfig, cmd_sweep,
                                        create_default_config, execute_formula, scaling_slope,
                                        ucp_stats)
from modules.martingale_instrumentation import drift_report  # noqa: E402
from modules.plotting import cmd_plot  # noqa: E402
from modules.verification import VerificationPlan, run_verification  # noqa: E402
from utils.logger import setup_logger  # noqa: E402

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INTERRUPTED = 130

logger = setup_logger('walksat_lab')


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--log-file', default='walksat_lab.log', help='Archivo de log ("" para desactivarlo)')
    parser.add_argument('--verbose', action='store_true', help='Nivel DEBUG')


def _add_formula_source(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--input', help='Fórmula DIMACS (si no se indica, se genera una)')
    parser.add_argument('--n', type=int, help='Número de variables')
    parser.add_argument('--alpha', type=float, help='Densidad de cláusulas m/n')
    parser.add_argument('--m', type=int, help='Número de cláusulas (sustituye a --alpha)')
    parser.add_argument('--seed', type=int, default=DEFAULT_BASE_SEED, help='Semilla')


def _add_sweep(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--config', help='JSON con claves de ExperimentConfig')
    parser.add_argument('--n', type=int, nargs='+', help='Valores de n')
    parser.add_argument('--alpha', type=float, nargs='+', help='Valores de α')
    parser.add_argument('--m', type=int, help='Número de cláusulas fijo')
    parser.add_argument('--seed', type=int, help='Semilla base')
    parser.add_argument('--replicates', type=int, help='Réplicas por punto')
    parser.add_argument('--cap', type=int, help='Límite de inversiones (por defecto 100·n²)')
    parser.add_argument('--unsat-cap', type=int,
                        help='Límite de inversiones en instancias UNSAT según el oráculo (por defecto 0)')
    parser.add_argument('--workers', type=int, help='Procesos en paralelo')
    parser.add_argument('--track-vars', type=int, help='Variables raíz seguidas por ejecución')
    parser.add_argument('--instrument', action='store_true', help='Instrumentación en cada ejecución')
    parser.add_argument('--out', help='CSV de salida')
    parser.add_argument('--summary-out', help='CSV con el resumen por punto')
    parser.add_argument('--quiet', action='store_true', help='Sin barra de progreso')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='walksat-lab', description='Laboratorio WalkSAT para 2-SAT aleatorio')
    sub = parser.add_subparsers(dest='command', required=True)

    gen = sub.add_parser('gen', help='Genera una 2-CNF aleatoria')
    gen.add_argument('--n', type=int, required=True)
    gen.add_argument('--alpha', type=float)
    gen.add_argument('--m', type=int)
    gen.add_argument('--seed', type=int, default=DEFAULT_BASE_SEED)
    gen.add_argument('--out', help='Archivo DIMACS (stdout si se omite)')
    _add_common(gen)

    run = sub.add_parser('run', help='Una ejecución de WalkSAT')
    _add_formula_source(run)
    run.add_argument('--cap', type=int)
    run.add_argument('--track-vars', type=int, default=64)
    run.add_argument('--instrument', action='store_true')
    run.add_argument('--trace', help='CSV con cada paso (t, cláusula, h, variable, no satisfechas)')
    run.add_argument('--json', action='store_true', help='Resumen extendido en JSON')
    _add_common(run)

    for name in ('sweep-n', 'sweep-alpha'):
        sweep = sub.add_parser(name, help=f'Barrido {name[6:]}')
        _add_sweep(sweep)
        _add_common(sweep)

    verify = sub.add_parser('verify', help='Baterías de comprobación')
    verify.add_argument('--seed', type=int, default=DEFAULT_BASE_SEED)
    verify.add_argument('--track-vars', type=int)
    verify.add_argument('--quick', action='store_true', help='Tamaños reducidos')
    verify.add_argument('--json', action='store_true')
    _add_common(verify)

    stats = sub.add_parser('ucp-stats', help='Estadísticos de UCP de una fórmula')
    _add_formula_source(stats)
    stats.add_argument('--t-max', type=int, default=100)
    stats.add_argument('--out', help='JSON de salida')
    _add_common(stats)

    plot = sub.add_parser('plot', help='SVG a partir de un CSV de barrido')
    plot.add_argument('csv')
    plot.add_argument('--out', required=True, help='Archivo SVG')
    plot.add_argument('--axis', choices=('n', 'alpha'))
    _add_common(plot)
    return parser


def _resolve_m(n: int, alpha: Optional[float], m: Optional[int]) -> int:
    if m is not None:
        return m
    if alpha is None:
        raise ValueError("Se necesita --alpha o --m")
    return clauses_for_density(n, alpha)


def _load_formula(args):
    if args.input:
        return read_dimacs_file(args.input), None
    defaults = create_default_config('single_run')
    n = args.n if args.n is not None else defaults.n_values[0]
    alpha = args.alpha if args.alpha is not None or args.m is not None else defaults.alpha_values[0]
    m = _resolve_m(n, alpha, args.m)
    return generate_random_2cnf(n, m, args.seed), alpha


# --- Comandos ---------------------------------------------------------------------

def command_gen(args) -> int:
    m = _resolve_m(args.n, args.alpha, args.m)
    formula = generate_random_2cnf(args.n, m, args.seed)
    comments = [f"walksat-lab gen n={args.n} m={m} seed={args.seed}"]
    if args.out:
        write_dimacs_file(formula, args.out, comments)
        print(f"n={args.n} m={m} seed={args.seed} -> {args.out}")
    else:
        sys.stdout.write(write_dimacs(formula, comments))
        logger.info(f"n={args.n} m={m} seed={args.seed}")
    return EXIT_OK


def command_run(args) -> int:
    formula, alpha = _load_formula(args)
    result = execute_formula(formula, args.seed, alpha=alpha, cap=args.cap,
                             instrument=args.instrument, track_vars=args.track_vars,
                             keep_context=True, collect_trace=bool(args.trace))
    if args.trace:
        trace = pd.DataFrame([(r.t, r.clause_index, r.h, r.flipped_variable, r.unsat_count_after)
                              for r in result.outcome.trace],
                             columns=['t', 'clause', 'h', 'variable', 'unsat_after'])
        trace.to_csv(args.trace, index=False)
        logger.info(f"Traza de {len(trace)} pasos guardada en {args.trace}")

    if args.json:
        payload = {'record': result.record.to_row(), 'cap': result.outcome.cap}
        if result.context is not None:
            summary = result.instrumentation
            payload['instrumentation'] = {
                'tracked_roots': summary.tracked_roots,
                'persistence_violations': summary.persistence_violations,
                'table_violations': summary.table_violations,
                'bound_violations': summary.bound_violations,
                'stopped_violations': summary.stopped_violations,
                'lock_in_fraction': summary.lock_in_fraction,
                'flip_budget_ratio_mean': summary.flip_budget_ratio_mean,
                'flip_budget_ratio_max': summary.flip_budget_ratio_max,
                'drift': drift_report(result.context.histories()).as_dict(),
            }
        print(json.dumps(payload, indent=2, default=str))
    else:
        pd.DataFrame([result.record.to_row()], columns=CSV_COLUMNS).to_csv(sys.stdout, index=False)
    return EXIT_OK


def _sweep_config(args, mode: str) -> ExperimentConfig:
    overrides = {
        'n_values': args.n, 'alpha_values': args.alpha, 'm': args.m, 'base_seed': args.seed,
        'replicates': args.replicates, 'cap': args.cap, 'unsat_cap': args.unsat_cap,
        'workers': args.workers, 'track_vars': args.track_vars, 'out': args.out,
        'summary_out': args.summary_out,
    }
    defaults = create_default_config(mode)
    if args.config:
        config = ExperimentConfig.from_json(args.config, defaults=defaults, mode=mode, **overrides)
    else:
        config = defaults
        for key, value in overrides.items():
            if value is not None:
                setattr(config, key, value)
    if args.instrument:
        config.instrument = True
    if args.quiet:
        config.quiet = True
    if config.out is None:
        config.out = f"{mode}.csv"
    return config.validate()


def command_sweep(args, mode: str) -> int:
    config = _sweep_config(args, mode)
    records, summary = cmd_sweep(config, mode)
    if not summary.empty:
        print(summary.to_string(index=False))
    if mode == 'sweep_n':
        for alpha in config.alpha_grid():
            slope = scaling_slope(summary, alpha)
            if slope is not None:
                logger.info(f"alpha={alpha:g}: pendiente log(T/n) frente a log n = {slope:.3f}")
    logger.info(f"{len(records)} filas en {config.out}")
    return EXIT_OK


def command_verify(args) -> int:
    plan = VerificationPlan.quick(args.seed) if args.quick else VerificationPlan(base_seed=args.seed)
    if args.track_vars is not None:
        plan.track_vars = args.track_vars
    report = run_verification(plan)
    if args.json:
        print(json.dumps(report.as_dict(), indent=2, default=str))
    else:
        for check in report.checks:
            print(f"{check.kind:12s} {check.name:24s} {'OK' if check.passed else 'FALLO':6s} "
                  f"casos={check.cases} fallos={check.failures}")
    return report.exit_code


def command_ucp_stats(args) -> int:
    formula, alpha = _load_formula(args)
    report = ucp_stats(formula, alpha, t_max=args.t_max)
    text = json.dumps(report, indent=2)
    if args.out:
        with open(args.out, 'w', encoding='utf-8') as f:
            f.write(text)
        logger.info(f"Estadísticos de UCP guardados en {args.out}")
    print(text)
    if report.get('tail_ok') is False:
        logger.warning("La cola empírica supera 3·exp(-αt/20) en algún t")
    return EXIT_OK


def command_plot(args) -> int:
    cmd_plot(args.csv, args.out, axis=args.axis)
    return EXIT_OK


COMMANDS = {
    'gen': command_gen,
    'run': command_run,
    'sweep-n': lambda args: command_sweep(args, 'sweep_n'),
    'sweep-alpha': lambda args: command_sweep(args, 'sweep_alpha'),
    'verify': command_verify,
    'ucp-stats': command_ucp_stats,
    'plot': command_plot,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK

    setup_logger('walksat_lab', args.log_file or None, logging.DEBUG if args.verbose else logging.INFO)
    logger.info(f"Comando {args.command}")
    try:
        return COMMANDS[args.command](args)
    except ConfigurationError as e:
        for message in e.errors:
            logger.error(message)
        return EXIT_USAGE
    except DimacsFormatError as e:
        logger.error(f"Entrada DIMACS inválida: {e}")
        return EXIT_USAGE
    except (ValueError, OSError) as e:
        logger.error(f"Error: {e}")
        return EXIT_USAGE
    except KeyboardInterrupt:
        logger.warning("Interrumpido por el usuario")
        return EXIT_INTERRUPTED


if __name__ == "__main__":
    sys.exit(main())
