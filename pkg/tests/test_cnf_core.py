"""
Pruebas del módulo cnf_core: literales, fórmulas, generador aleatorio, evaluación y DIMACS.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from scipy import stats

from modules.cnf_core import (Assignment, Clause, DimacsFormatError, Formula, Literal,
                              clauses_for_density, evaluate, generate_random_2cnf, parse_dimacs,
                              read_dimacs_file, write_dimacs, write_dimacs_file)
from strategies import formulas, seeds


class TestLiteral:
    """
    Pruebas de la codificación de literales
    """

    def test_literal_codes(self):
        """
        Test: Código 2(v-1) + (1 si negativo) y negación
        """
        print("🔧 Test: Codificación de literales")
        assert Literal(1, 1).code == 0
        assert Literal(1, -1).code == 1
        assert Literal(3, -1).code == 5
        assert Literal.from_code(5) == Literal(3, -1)
        assert -Literal(2, 1) == Literal(2, -1)
        assert Literal(2, 1).negate().code == Literal(2, 1).code ^ 1
        assert Literal.from_dimacs(-4).to_dimacs() == -4
        print("✅ Codificación correcta")

    def test_invalid_literals(self):
        with pytest.raises(ValueError):
            Literal(0, 1)
        with pytest.raises(ValueError):
            Literal(1, 0)
        with pytest.raises(ValueError):
            Literal.from_dimacs(0)

    def test_clause_rejects_repeated_variable(self):
        with pytest.raises(ValueError):
            Clause(Literal(1, 1), Literal(1, -1))
        with pytest.raises(ValueError):
            Formula.from_clauses(2, [(1, -1)])


class TestGenerator:
    """
    Pruebas del generador de 2-CNF aleatorias
    """

    def test_empty_formula(self):
        """
        Test: n=2, m=0 da una fórmula vacía
        """
        formula = generate_random_2cnf(2, 0, seed=7)
        assert formula.num_variables == 2
        assert formula.num_clauses == 0

    def test_single_clause_uses_both_variables(self):
        for seed in range(20):
            formula = generate_random_2cnf(2, 1, seed=seed)
            assert set(formula.clause_variables()[0].tolist()) == {1, 2}

    @given(seed=seeds)
    @settings(max_examples=25, deadline=None)
    def test_determinism(self, seed):
        a = generate_random_2cnf(50, 120, seed)
        b = generate_random_2cnf(50, 120, seed)
        assert a == b
        assert a.num_clauses == 120

    def test_different_seeds_differ(self):
        assert generate_random_2cnf(1000, 1000, 1) != generate_random_2cnf(1000, 1000, 2)

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            generate_random_2cnf(1, 0, 0)
        with pytest.raises(ValueError):
            generate_random_2cnf(5, -1, 0)
        with pytest.raises(ValueError):
            generate_random_2cnf(5)

    def test_density_rounding(self):
        assert clauses_for_density(1000, 0.9) == 900
        assert clauses_for_density(3, 0.5) == 2
        assert generate_random_2cnf(1000, alpha=0.9, seed=3).num_clauses == 900

    def test_uniform_over_ordered_clauses(self):
        """
        Test: Las 4·5·4 = 80 cláusulas ordenadas aparecen con frecuencia uniforme
        """
        print("🔧 Test: Uniformidad del generador")
        formula = generate_random_2cnf(5, 200_000, seed=12345)
        keys = formula.literals[:, 0] * 10 + formula.literals[:, 1]
        values, counts = np.unique(keys, return_counts=True)
        assert values.shape[0] == 80
        assert np.allclose(counts / counts.sum(), 1 / 80, atol=0.0025)
        assert stats.chisquare(counts).pvalue > 1e-4
        print("✅ Distribución uniforme")

    def test_variable_and_sign_marginals(self):
        n = 20
        formula = generate_random_2cnf(n, 100_000, seed=99)
        for slot in range(2):
            variables = formula.literals[:, slot] >> 1
            frequency = np.bincount(variables, minlength=n) / formula.num_clauses
            assert np.allclose(frequency, 1 / n, atol=0.005)
            assert abs(np.mean(formula.literals[:, slot] & 1) - 0.5) < 0.01

    @given(formula=formulas())
    @settings(max_examples=60, deadline=None)
    def test_occurrence_lists_invert_clause_list(self, formula):
        total = 0
        for code in range(2 * formula.num_variables):
            occurrences = formula.occurrences(code)
            total += len(occurrences)
            for clause, position in occurrences:
                assert formula.literals[clause, position] == code
        assert total == 2 * formula.num_clauses


class TestEvaluate:
    """
    Pruebas de evaluate()
    """

    def test_positive_clause_all_true(self):
        formula = Formula.from_clauses(2, [(1, 2)])
        assert evaluate(formula, Assignment.all_true(2)) == (True, [])

    def test_negative_clause_all_true(self):
        formula = Formula.from_clauses(2, [(-1, -2)])
        assert evaluate(formula, Assignment.all_true(2)) == (False, [0])

    def test_mixed_clauses(self):
        formula = Formula.from_clauses(2, [(-1, 2), (-2, -1)])
        assert evaluate(formula, Assignment([-1, 1])) == (True, [])

    def test_length_mismatch(self):
        formula = Formula.from_clauses(3, [(1, 2)])
        with pytest.raises(ValueError):
            evaluate(formula, Assignment.all_true(2))


class TestAssignment:

    def test_indexing_and_flip(self):
        sigma = Assignment([1, -1, 1])
        assert sigma[2] == -1
        assert sigma.value_of_literal(Literal(2, -1)) == 1
        assert sigma.value_of_literal(Literal(3, 1).code) == 1
        assert sigma.true_literal(2) == Literal(2, -1)
        other = sigma.copy()
        other.flip(1)
        assert other[1] == -1 and sigma[1] == 1
        assert sigma.hamming(other) == 1

    def test_rejects_non_binary_values(self):
        with pytest.raises(ValueError):
            Assignment([1, 0, -1])


class TestDimacs:
    """
    Pruebas de lectura y escritura DIMACS
    """

    def test_parse_example(self):
        formula = parse_dimacs("p cnf 2 1\n1 -2 0\n")
        assert formula.num_variables == 2
        assert formula.clauses == [Clause(Literal(1, 1), Literal(2, -1))]

    def test_comments_and_multiline_clauses(self):
        text = "c generado a mano\np cnf 3 2\n1\n-2 0 2 3\n0\n"
        formula = parse_dimacs(text)
        assert formula.to_dimacs_pairs().tolist() == [[1, -2], [2, 3]]

    @pytest.mark.parametrize('text', [
        "p cnf 2 1\n1 1 0\n",
        "p cnf 3 1\n1 2 3 0\n",
        "p cnf 3 1\n1 0\n",
        "p cnf 2 1\n1 3 0\n",
        "p cnf 2 2\n1 2 0\n",
        "1 2 0\n",
        "p cnf 2 1\n1 2\n",
        "p cnf x 1\n1 2 0\n",
        "p cnf 2 1\n1 a 0\n",
    ])
    def test_rejects_malformed_input(self, text):
        with pytest.raises(DimacsFormatError):
            parse_dimacs(text)

    def test_error_carries_line_number(self):
        with pytest.raises(DimacsFormatError) as info:
            parse_dimacs("c x\np cnf 2 1\n1 1 0\n")
        assert info.value.line_number == 3

    def test_canonical_round_trip(self):
        text = "p cnf 2 1\n1 -2 0\n"
        assert write_dimacs(parse_dimacs(text)) == text

    def test_empty_clause_section(self):
        text = write_dimacs(generate_random_2cnf(2, 0, 0))
        assert text == "p cnf 2 0\n"
        assert parse_dimacs(text).num_clauses == 0

    @given(formula=formulas())
    @settings(max_examples=50, deadline=None)
    def test_parse_inverts_write(self, formula):
        assert parse_dimacs(write_dimacs(formula, comments=['prueba'])) == formula

    def test_file_helpers(self, tmp_path):
        formula = generate_random_2cnf(30, 40, seed=5)
        path = tmp_path / 'f.cnf'
        write_dimacs_file(formula, str(path))
        assert read_dimacs_file(str(path)) == formula
        write_dimacs_file(formula, str(tmp_path / 'g.cnf'))
        assert path.read_bytes() == (tmp_path / 'g.cnf').read_bytes()
