"""Estrategias de hypothesis compartidas por las pruebas."""

from hypothesis import strategies as st

from modules.cnf_core import Formula


@st.composite
def formulas(draw, min_n: int = 2, max_n: int = 8, max_m: int = 16):
    """2-CNF con variables distintas en cada cláusula, como pares DIMACS."""
    n = draw(st.integers(min_n, max_n))
    m = draw(st.integers(0, max_m))
    clauses = []
    for _ in range(m):
        a = draw(st.integers(1, n))
        b = draw(st.integers(1, n - 1))
        if b >= a:
            b += 1
        sign_a = draw(st.sampled_from((1, -1)))
        sign_b = draw(st.sampled_from((1, -1)))
        clauses.append((sign_a * a, sign_b * b))
    return Formula.from_clauses(n, clauses)


seeds = st.integers(min_value=0, max_value=2 ** 63 - 1)
