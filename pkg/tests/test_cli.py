"""
Pruebas de la línea de comandos (main) y de las gráficas SVG.
"""

import io
import json

import pandas as pd
import pytest

from main import _sweep_config, build_parser, main
from modules.cnf_core import read_dimacs_file
from modules.experiment_harness import CSV_COLUMNS
from modules.plotting import choose_axis, cmd_plot

UNSAT_GADGET_DIMACS = "p cnf 2 4\n1 2 0\n1 -2 0\n-1 2 0\n-1 -2 0\n"


@pytest.fixture
def log_args(tmp_path):
    return ['--log-file', str(tmp_path / 'lab.log')]


def read_stdout_csv(text):
    return pd.read_csv(io.StringIO(text))


class TestGen:
    """
    Pruebas del subcomando gen
    """

    def test_density_rounding(self, tmp_path, log_args):
        out = tmp_path / 'f.cnf'
        assert main(['gen', '--n', '1000', '--alpha', '0.9', '--seed', '3', '--out', str(out)] + log_args) == 0
        formula = read_dimacs_file(str(out))
        assert formula.num_variables == 1000 and formula.num_clauses == 900

    def test_byte_identical(self, tmp_path, log_args):
        """
        Test: Misma semilla ⇒ archivo DIMACS idéntico byte a byte
        """
        print("🔧 Test: Determinismo de gen")
        a, b = tmp_path / 'a.cnf', tmp_path / 'b.cnf'
        for path in (a, b):
            main(['gen', '--n', '300', '--m', '250', '--seed', '9', '--out', str(path)] + log_args)
        assert a.read_bytes() == b.read_bytes()
        print("✅ Archivos idénticos")

    def test_empty_formula_to_stdout(self, capsys, log_args):
        assert main(['gen', '--n', '2', '--m', '0'] + log_args) == 0
        out = capsys.readouterr().out
        assert 'p cnf 2 0' in out
        assert out.strip().splitlines()[-1] == 'p cnf 2 0'

    def test_invalid_n(self, log_args):
        assert main(['gen', '--n', '1', '--m', '0'] + log_args) == 2

    def test_missing_density(self, log_args):
        assert main(['gen', '--n', '10'] + log_args) == 2


class TestRun:
    """
    Pruebas del subcomando run
    """

    def test_csv_row(self, capsys, log_args):
        assert main(['run', '--n', '200', '--alpha', '0.5', '--seed', '1'] + log_args) == 0
        frame = read_stdout_csv(capsys.readouterr().out)
        assert list(frame.columns) == CSV_COLUMNS
        assert len(frame) == 1
        assert frame.loc[0, 'n'] == 200 and frame.loc[0, 'm'] == 100

    def test_unsat_gadget(self, tmp_path, capsys, log_args):
        path = tmp_path / 'gadget.cnf'
        path.write_text(UNSAT_GADGET_DIMACS)
        assert main(['run', '--input', str(path)] + log_args) == 0
        frame = read_stdout_csv(capsys.readouterr().out)
        assert frame.loc[0, 'sat'] == 'UNSAT'
        assert frame.loc[0, 'status'] == 'CapReached'

    def test_json_with_instrumentation(self, capsys, log_args):
        code = main(['run', '--n', '200', '--alpha', '0.5', '--seed', '2', '--instrument',
                     '--track-vars', '8', '--json'] + log_args)
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload['cap'] == 100 * 200 ** 2
        if payload['record']['sat'] == 'SAT':
            assert payload['instrumentation']['persistence_violations'] == 0
            assert 'overall' in payload['instrumentation']['drift']

    def test_trace_file(self, tmp_path, capsys, log_args):
        trace = tmp_path / 'trace.csv'
        assert main(['run', '--n', '100', '--alpha', '0.6', '--seed', '4', '--trace', str(trace)] + log_args) == 0
        frame = read_stdout_csv(capsys.readouterr().out)
        steps = pd.read_csv(trace)
        assert list(steps.columns) == ['t', 'clause', 'h', 'variable', 'unsat_after']
        assert len(steps) == frame.loc[0, 'flips']

    def test_single_variable_input(self, tmp_path, capsys, log_args):
        path = tmp_path / 'one.cnf'
        path.write_text("p cnf 1 0\n")
        assert main(['run', '--input', str(path)] + log_args) == 0
        frame = read_stdout_csv(capsys.readouterr().out)
        assert frame.loc[0, 'n'] == 1 and frame.loc[0, 'status'] == 'Satisfied'
        assert frame.loc[0, 'y_stat'] == 0.0

    def test_malformed_dimacs(self, tmp_path, log_args):
        path = tmp_path / 'bad.cnf'
        path.write_text("p cnf 2 1\n1 1 0\n")
        assert main(['run', '--input', str(path)] + log_args) == 2

    def test_missing_input(self, tmp_path, log_args):
        assert main(['run', '--input', str(tmp_path / 'nope.cnf')] + log_args) == 2


class TestOtherCommands:

    def test_usage_errors(self):
        assert main([]) == 2
        assert main(['desconocido']) == 2
        assert main(['plot']) == 2

    def test_parser_lists_all_commands(self):
        parser = build_parser()
        args = parser.parse_args(['sweep-n', '--n', '64', '128', '--alpha', '0.5', '--workers', '2'])
        assert args.n == [64, 128] and args.workers == 2
        assert parser.parse_args(['plot', 'x.csv', '--out', 'y.svg']).axis is None
        assert parser.parse_args(['run', '--trace', 't.csv']).track_vars == 64
        assert parser.parse_args(['verify', '--quick']).quick
        assert parser.parse_args(['ucp-stats']).t_max == 100
        assert parser.parse_args(['gen', '--n', '10']).log_file == 'walksat_lab.log'

    def test_sweep_n(self, tmp_path, capsys, log_args):
        out = tmp_path / 'sweep.csv'
        code = main(['sweep-n', '--n', '64', '128', '--alpha', '0.5', '--replicates', '2',
                     '--quiet', '--out', str(out)] + log_args)
        assert code == 0
        frame = pd.read_csv(out)
        assert list(frame.columns) == CSV_COLUMNS and len(frame) == 4

    def test_sweep_config_file_keeps_mode_defaults(self, tmp_path):
        """
        Test: --config parcial + flags: valores del modo, después el archivo, después la línea de comandos
        """
        path = tmp_path / 'config.json'
        path.write_text(json.dumps({'n_values': [40], 'replicates': 2}))
        args = build_parser().parse_args(['sweep-alpha', '--config', str(path), '--replicates', '3',
                                          '--unsat-cap', '50'])
        config = _sweep_config(args, 'sweep_alpha')
        assert config.mode == 'sweep_alpha'
        assert config.n_values == [40]
        assert len(config.alpha_grid()) == 32
        assert config.replicates == 3
        assert config.unsat_cap == 50
        assert config.out == 'sweep_alpha.csv'

    def test_sweep_config_errors(self, tmp_path, log_args):
        config = tmp_path / 'config.json'
        config.write_text(json.dumps({'clave': 1}))
        assert main(['sweep-n', '--config', str(config), '--out', str(tmp_path / 'x.csv')] + log_args) == 2
        assert main(['sweep-n', '--replicates', '0', '--out', str(tmp_path / 'x.csv')] + log_args) == 2

    def test_ucp_stats(self, tmp_path, capsys, log_args):
        out = tmp_path / 'stats.json'
        assert main(['ucp-stats', '--n', '2000', '--alpha', '0.5', '--seed', '1',
                     '--out', str(out)] + log_args) == 0
        report = json.loads(out.read_text())
        assert report['n'] == 2000 and report['m'] == 1000
        assert report['tail_ok'] is True
        assert json.loads(capsys.readouterr().out) == report

    def test_verify_quick(self, capsys, log_args):
        code = main(['verify', '--quick', '--json', '--seed', '5'] + log_args)
        payload = json.loads(capsys.readouterr().out)
        assert payload['exact_failed'] == []
        assert code == payload['exit_code'] and code in (0, 3)


class TestPlot:
    """
    Pruebas de las gráficas SVG
    """

    @pytest.fixture
    def alpha_csv(self, tmp_path, log_args):
        path = tmp_path / 'alpha.csv'
        code = main(['sweep-alpha', '--n', '40', '--replicates', '1', '--cap', '2000',
                     '--quiet', '--out', str(path)] + log_args)
        assert code == 0
        return path

    def test_empty_csv(self, tmp_path, log_args):
        csv = tmp_path / 'empty.csv'
        pd.DataFrame(columns=CSV_COLUMNS).to_csv(csv, index=False)
        svg = tmp_path / 'empty.svg'
        assert main(['plot', str(csv), '--out', str(svg)] + log_args) == 0
        assert '<svg' in svg.read_text()
        assert cmd_plot(str(csv), str(svg)).points == 0

    def test_one_point_per_run(self, tmp_path, alpha_csv):
        """
        Test: 32 filas de sweep-alpha ⇒ 32 puntos en el eje α
        """
        frame = pd.read_csv(alpha_csv)
        assert len(frame) == 32
        assert choose_axis(frame) == 'alpha'
        summary = cmd_plot(str(alpha_csv), str(tmp_path / 'alpha.svg'))
        assert summary.points == 32 and summary.axis == 'alpha'

    def test_deterministic_svg(self, tmp_path, alpha_csv, log_args):
        a, b = tmp_path / 'a.svg', tmp_path / 'b.svg'
        for path in (a, b):
            assert main(['plot', str(alpha_csv), '--out', str(path)] + log_args) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_schema_mismatch(self, tmp_path, log_args):
        csv = tmp_path / 'other.csv'
        pd.DataFrame({'a': [1]}).to_csv(csv, index=False)
        assert main(['plot', str(csv), '--out', str(tmp_path / 'x.svg')] + log_args) == 2
