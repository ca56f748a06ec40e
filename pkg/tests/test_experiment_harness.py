"""
Pruebas del orquestador de experimentos: configuración, celdas, ejecuciones, barridos y resúmenes.
"""

import json

import numpy as np
import pandas as pd
import pytest

from modules import experiment_harness
from modules.cnf_core import Formula, evaluate, generate_random_2cnf
from modules.experiment_harness import (CSV_COLUMNS, ConfigurationError, ExperimentConfig,
                                        RunRecord, build_cells, cmd_sweep, cmd_sweep_alpha,
                                        cmd_sweep_n, create_default_config, execute_formula,
                                        read_records, records_frame, run_sweep, scaling_ratio,
                                        scaling_slope, summarize_frame, tail_bound_check,
                                        ucp_stats, x_density_exponent)
from modules.implication_analysis import solve_2sat, subformula_profile

UNSAT_GADGET = [(1, 2), (1, -2), (-1, 2), (-1, -2)]


def small_config(tmp_path, **kwargs):
    settings = dict(mode='sweep_n', n_values=[64, 128], alpha_values=[0.5], replicates=2,
                    quiet=True, out=str(tmp_path / 'sweep.csv'))
    settings.update(kwargs)
    return ExperimentConfig(**settings)


def without_wall_time(records):
    return [{k: v for k, v in r.to_row().items() if k != 'wall_ns'} for r in records]


class TestConfig:
    """
    Pruebas de ExperimentConfig y de los valores por defecto
    """

    def test_default_sweep_n(self):
        """
        Test: 16 puntos geométricos en [2¹⁰, 2¹⁸] y α ∈ {0.1, 0.3, 0.5, 0.7, 0.9}
        """
        print("🔧 Test: Configuración por defecto")
        config = create_default_config('sweep_n')
        grid = config.n_grid()
        assert grid[0] == 2 ** 10 and grid[-1] == 2 ** 18
        assert len(grid) == 16 and grid == sorted(grid)
        assert config.alpha_grid() == [0.1, 0.3, 0.5, 0.7, 0.9]
        assert config.replicates == 8
        print("✅ Configuración correcta")

    def test_default_sweep_alpha(self):
        config = create_default_config('sweep_alpha')
        grid = config.alpha_grid()
        assert config.n_grid() == [10 ** 6]
        assert len(grid) == 32
        assert grid[0] == 0.5 and grid[-1] == pytest.approx(1 - 2 ** -10)
        assert config.replicates == 4

    @pytest.mark.parametrize('changes', [
        {'replicates': 0},
        {'alpha_values': [0.0]},
        {'n_values': [1]},
        {'mode': 'otro'},
        {'workers': 0},
        {'m': -1},
        {'unsat_cap': -1},
    ])
    def test_validation_errors(self, changes):
        config = ExperimentConfig(**changes)
        with pytest.raises(ConfigurationError) as info:
            config.validate()
        assert info.value.errors

    def test_json_round_trip_and_overrides(self, tmp_path):
        path = tmp_path / 'config.json'
        path.write_text(json.dumps({'mode': 'sweep_n', 'n_values': [32], 'replicates': 3}))
        config = ExperimentConfig.from_json(str(path), replicates=None, base_seed=7)
        assert config.n_values == [32] and config.replicates == 3 and config.base_seed == 7
        assert ExperimentConfig.from_dict(config.to_dict()) == config

    def test_json_starts_from_mode_defaults(self, tmp_path):
        """
        Test: Un JSON parcial conserva los valores por defecto del modo
        """
        path = tmp_path / 'config.json'
        path.write_text(json.dumps({'n_values': [40]}))
        config = ExperimentConfig.from_json(str(path), defaults=create_default_config('sweep_alpha'),
                                            mode='sweep_alpha', replicates=None)
        assert config.n_values == [40]
        assert config.replicates == 4
        assert len(config.alpha_grid()) == 32
        assert config.alpha_grid()[-1] == pytest.approx(1 - 2 ** -10)

    def test_json_must_be_object(self, tmp_path):
        path = tmp_path / 'config.json'
        path.write_text(json.dumps([1, 2]))
        with pytest.raises(ConfigurationError):
            ExperimentConfig.from_json(str(path))

    def test_unknown_key(self):
        with pytest.raises(ConfigurationError):
            ExperimentConfig.from_dict({'mode': 'sweep_n', 'nn': [4]})


class TestCells:

    def test_cells_are_deterministic(self, tmp_path):
        config = small_config(tmp_path)
        a, b = build_cells(config), build_cells(config)
        assert [c.seed for c in a] == [c.seed for c in b]
        assert len(a) == 4
        assert len({c.seed for c in a}) == 4
        assert [c.index for c in a] == list(range(4))

    def test_seed_depends_on_base_seed(self, tmp_path):
        a = build_cells(small_config(tmp_path, base_seed=1))
        b = build_cells(small_config(tmp_path, base_seed=2))
        assert [c.seed for c in a] != [c.seed for c in b]

    def test_fixed_m_overrides_alpha(self, tmp_path):
        cells = build_cells(small_config(tmp_path, m=10))
        assert all(c.m == 10 for c in cells)


class TestExecuteFormula:
    """
    Pruebas de una ejecución individual (oráculo + WalkSAT + estadísticos)
    """

    def test_unsat_gadget(self):
        result = execute_formula(Formula.from_clauses(2, UNSAT_GADGET), seed=3)
        assert result.record.sat == 'UNSAT'
        assert result.record.status == 'CapReached'
        assert result.record.flips == 400

    def test_unsat_cap_shortens_unsat_walk(self):
        gadget = Formula.from_clauses(2, UNSAT_GADGET)
        record = execute_formula(gadget, seed=3, unsat_cap=10).record
        assert record.status == 'CapReached' and record.flips == 10
        assert execute_formula(gadget, seed=3, cap=5, unsat_cap=10).record.flips == 5
        assert execute_formula(gadget, seed=3, unsat_cap=0).record.flips == 0

    def test_unsat_cap_ignored_on_sat_instances(self):
        formula = Formula.from_clauses(3, [(-1, 2), (-2, -3)])
        result = execute_formula(formula, seed=5, unsat_cap=0)
        assert result.record.status == 'Satisfied' and result.record.flips >= 1

    def test_positive_clauses_need_no_flips(self):
        result = execute_formula(Formula.from_clauses(3, [(1, 2), (2, 3)]), seed=3)
        assert result.record.sat == 'SAT'
        assert result.record.flips == 0
        assert result.record.flips_per_n == 0.0

    def test_chain_with_unsat_clause(self):
        formula = Formula.from_clauses(3, [(-1, 2), (-2, -3)])
        result = execute_formula(formula, seed=5)
        assert result.record.status == 'Satisfied'
        assert result.record.flips >= 1
        assert evaluate(formula, result.outcome.final_assignment)[0]

    def test_record_fields(self):
        formula = generate_random_2cnf(500, 350, seed=8)
        result = execute_formula(formula, seed=8, alpha=0.7)
        record = result.record
        assert list(record.to_row()) == CSV_COLUMNS
        assert record.flips_per_n == record.flips / 500
        assert record.x_stat == subformula_profile(formula).x_statistic()
        assert record.max_subformula <= record.max_component
        assert record.persistence_violations is None and record.case1 is None

    def test_instrumented_run(self):
        seed = 0
        while not solve_2sat(generate_random_2cnf(300, 240, seed)).satisfiable:
            seed += 1
        formula = generate_random_2cnf(300, 240, seed)
        result = execute_formula(formula, seed=seed, instrument=True, track_vars=16, keep_context=True)
        record = result.record
        assert record.persistence_violations == 0
        assert result.instrumentation.exact_failures == 0
        total_cases = record.case1 + record.case2 + record.case3 + record.case4
        assert total_cases == result.instrumentation.drift.count
        assert result.context is not None
        assert any(tracker.history for tracker in result.context.trackers)

    def test_context_without_history(self):
        seed = 0
        while not solve_2sat(generate_random_2cnf(300, 240, seed)).satisfiable:
            seed += 1
        formula = generate_random_2cnf(300, 240, seed)
        result = execute_formula(formula, seed=seed, instrument=True, track_vars=16,
                                 keep_context=True, keep_history=False)
        assert result.instrumentation.drift.count > 0
        assert all(tracker.history == [] for tracker in result.context.trackers)

    def test_same_seed_same_record(self):
        formula = generate_random_2cnf(200, 160, seed=2)
        a = execute_formula(formula, seed=11).record
        b = execute_formula(formula, seed=11).record
        assert a.flips == b.flips and a.status == b.status


class TestSweeps:
    """
    Pruebas de run_sweep y de los comandos de barrido
    """

    def test_single_row(self, tmp_path):
        config = small_config(tmp_path, n_values=[100], replicates=1)
        records, summary = cmd_sweep_n(config)
        assert len(records) == 1
        assert len(read_records(config.out)) == 1
        assert len(summary) == 1

    def test_csv_matches_records(self, tmp_path):
        """
        Test: El CSV tiene la cabecera fija y una fila por celda en orden
        """
        print("🔧 Test: CSV del barrido")
        config = small_config(tmp_path, summary_out=str(tmp_path / 'summary.csv'))
        records, summary = cmd_sweep_n(config)
        frame = read_records(config.out)
        assert list(frame.columns) == CSV_COLUMNS
        assert len(frame) == len(build_cells(config)) == 4
        assert frame['flips'].tolist() == [r.flips for r in records]
        assert frame['seed'].tolist() == [c.seed for c in build_cells(config)]
        assert (tmp_path / 'summary.csv').exists()
        assert (frame.loc[frame['status'] == 'Satisfied', 'sat'] == 'SAT').all()
        print("✅ CSV consistente")

    def test_repeated_sweep_is_identical(self, tmp_path):
        first, _ = run_sweep(small_config(tmp_path, out=str(tmp_path / 'a.csv')))
        second, _ = run_sweep(small_config(tmp_path, out=str(tmp_path / 'b.csv')))
        assert without_wall_time(first) == without_wall_time(second)

    def test_worker_count_does_not_change_results(self, tmp_path):
        serial, _ = run_sweep(small_config(tmp_path, out=str(tmp_path / 'a.csv')))
        parallel, _ = run_sweep(small_config(tmp_path, out=str(tmp_path / 'b.csv'), workers=2))
        assert without_wall_time(serial) == without_wall_time(parallel)

    def test_sweep_alpha_rows(self, tmp_path):
        config = ExperimentConfig(mode='sweep_alpha', n_values=[50], alpha_values=None,
                                  alpha_points=8, replicates=4, cap=5000, quiet=True,
                                  compute_stats=False, out=str(tmp_path / 'alpha.csv'))
        records, summary = cmd_sweep_alpha(config)
        assert len(records) == 32
        assert len(summary) == 8
        assert summary['unsat_fraction'].between(0, 1).all()

    def test_instrumented_sweep_pools_summaries(self, tmp_path):
        config = small_config(tmp_path, instrument=True, track_vars=8)
        records, pooled = run_sweep(config)
        sat_runs = sum(1 for r in records if r.sat == 'SAT')
        if sat_runs:
            assert pooled.runs == sat_runs
            assert pooled.persistence_violations == 0

    def test_unsat_cells_are_not_walked_to_full_cap(self, tmp_path):
        """
        Test: Un barrido con celdas UNSAT termina con a lo sumo unsat_cap inversiones en ellas
        """
        print("🔧 Test: Celdas UNSAT en un barrido")
        config = ExperimentConfig(mode='sweep_alpha', n_values=[50], alpha_values=[0.5, 3.0],
                                  replicates=3, unsat_cap=100, compute_stats=False, quiet=True,
                                  out=str(tmp_path / 'unsat.csv'))
        records, summary = cmd_sweep_alpha(config)
        unsat = [r for r in records if r.sat == 'UNSAT']
        assert unsat
        assert all(r.status == 'CapReached' and r.flips <= 100 for r in unsat)
        assert ExperimentConfig().unsat_cap == 0
        print("✅ Celdas UNSAT acotadas")

    def test_sweep_contexts_keep_no_history(self, tmp_path, monkeypatch):
        requested = []
        original = experiment_harness.InstrumentationContext

        def recording_context(*args, **kwargs):
            requested.append(kwargs.get('keep_history'))
            return original(*args, **kwargs)

        monkeypatch.setattr(experiment_harness, 'InstrumentationContext', recording_context)
        records, _ = run_sweep(small_config(tmp_path, instrument=True, track_vars=8))
        assert len(requested) == sum(1 for r in records if r.sat == 'SAT') > 0
        assert all(keep is False for keep in requested)

    def test_cmd_sweep_sets_mode(self, tmp_path):
        config = small_config(tmp_path, n_values=[60], replicates=1)
        records, summary = cmd_sweep(config, 'sweep_alpha')
        assert config.mode == 'sweep_alpha'
        assert len(records) == len(summary) == 1
        other = small_config(tmp_path, n_values=[60], replicates=1, out=str(tmp_path / 'b.csv'))
        assert without_wall_time(cmd_sweep_n(other)[0]) == without_wall_time(records)

    def test_invalid_config_rejected(self, tmp_path):
        with pytest.raises(ConfigurationError):
            run_sweep(small_config(tmp_path, replicates=0))


class TestSummaries:
    """
    Pruebas de los resúmenes por punto de la rejilla
    """

    @staticmethod
    def record(flips, sat='SAT', status='Satisfied', n=100, alpha=0.5, x=400):
        return RunRecord(n=n, m=int(alpha * n), alpha=alpha, seed=1, sat=sat, status=status,
                         flips=flips, flips_per_n=flips / n, wall_ns=1, x_stat=x)

    def test_unsat_rows_excluded(self):
        frame = records_frame([self.record(50), self.record(150),
                               self.record(40_000, sat='UNSAT', status='CapReached')])
        summary = summarize_frame(frame)
        row = summary.iloc[0]
        assert row['runs'] == 3 and row['sat_runs'] == 2
        assert row['unsat_fraction'] == pytest.approx(1 / 3)
        assert row['mean_flips_per_n'] == pytest.approx(1.0)
        assert row['success_rate'] == 1.0
        assert row['p10_flips_per_n'] <= row['median_flips_per_n'] <= row['p90_flips_per_n']
        assert row['mean_x_per_n'] == pytest.approx(4.0)
        assert row['mean_flips_scaled'] == pytest.approx(0.25)

    def test_empty_frame(self):
        summary = summarize_frame(records_frame([]))
        assert summary.empty

    def test_scaling_helpers(self):
        summary = summarize_frame(records_frame([self.record(100, n=100), self.record(400, n=200),
                                                 self.record(1600, n=400)]))
        assert scaling_ratio(summary, 0.5) == pytest.approx(4.0)
        assert scaling_slope(summary, 0.5) == pytest.approx(1.0)
        assert scaling_ratio(summary, 0.9) is None

    def test_read_records_schema_mismatch(self, tmp_path):
        path = tmp_path / 'bad.csv'
        pd.DataFrame({'n': [1]}).to_csv(path, index=False)
        with pytest.raises(ValueError):
            read_records(str(path))

    def test_x_density_exponent(self):
        """
        Test: X/n crece al acercarse α a 1 (pendiente negativa en log(1-α))
        """
        rows = []
        for alpha in (0.5, 0.7, 0.9):
            for seed in range(2):
                formula = generate_random_2cnf(20_000, alpha=alpha, seed=seed)
                rows.append(execute_formula(formula, seed=seed, alpha=alpha, cap=0).record)
        exponent = x_density_exponent(records_frame(rows))
        assert exponent is not None and exponent < 0


class TestUcpStats:

    def test_tail_bound_at_half_density(self):
        formula = generate_random_2cnf(20_000, alpha=0.5, seed=4)
        tail = tail_bound_check(subformula_profile(formula), 0.5)
        assert tail[0].t == 9 and tail[-1].t == 100
        assert all(point.ok for point in tail)

    def test_tail_requires_subcritical_alpha(self):
        profile = subformula_profile(generate_random_2cnf(10, 5, seed=1))
        with pytest.raises(ValueError):
            tail_bound_check(profile, 1.0)

    def test_report_keys(self):
        report = ucp_stats(Formula.from_clauses(3, [(-1, 2), (-2, 3)]))
        assert report['x_stat'] == 28
        assert report['max_subformula'] == 3
        assert report['max_component'] == 3 and report['components'] == 1
        assert sum(report['size_histogram'].values()) == 6
        assert report['tail_ok'] is True
        json.dumps(report)

    def test_no_tail_above_threshold(self):
        report = ucp_stats(generate_random_2cnf(10, 12, seed=1))
        assert 'tail' not in report and report['x_scaled'] is None


@pytest.mark.slow
class TestDeskScaleReproduction:
    """
    Reproducción a escala de escritorio de las tendencias de T/n
    """

    def test_linear_scaling_at_high_density(self, tmp_path):
        """
        Test: α = 0.9, n ∈ {2¹², 2¹⁵, 2¹⁸}, 8 réplicas satisfacibles: max/min de la media de T/n ≤ 2
        """
        config = ExperimentConfig(mode='sweep_n', n_values=[2 ** 12, 2 ** 15, 2 ** 18],
                                  alpha_values=[0.9], replicates=12, compute_stats=False,
                                  quiet=True, out=str(tmp_path / 'scaling.csv'))
        cmd_sweep_n(config)
        frame = read_records(config.out)
        means = []
        for n in config.n_values:
            sat = frame[(frame['n'] == n) & (frame['sat'] == 'SAT')].head(8)
            assert len(sat) == 8
            means.append(sat['flips_per_n'].mean())
        assert max(means) / min(means) <= 2.0

    def test_growth_in_alpha(self, tmp_path):
        """
        Test: n = 10⁶, media de T/n en α = 0.95 mayor que en α = 0.5
        """
        config = ExperimentConfig(mode='sweep_alpha', n_values=[10 ** 6], alpha_values=[0.5, 0.95],
                                  replicates=4, compute_stats=False, quiet=True,
                                  out=str(tmp_path / 'growth.csv'))
        _, summary = cmd_sweep_alpha(config)
        means = dict(zip(summary['alpha'], summary['mean_flips_per_n']))
        assert means[0.95] > means[0.5]
        assert np.all(summary['sat_runs'] > 0)
