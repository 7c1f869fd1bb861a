import itertools

import numpy as np
import pytest

from nlqc import gardenhose as gh
from nlqc.gardenhose import BooleanFunctionTable


def all_functions(n):
    size = 2 ** (2 * n)
    for bits in itertools.product((0, 1), repeat=size):
        yield BooleanFunctionTable(n, np.reshape(bits, (2**n, 2**n)))


def test_builtins():
    eq = gh.builtin("EQ", 2)
    assert eq(3, 3) == 1 and eq(1, 2) == 0
    gt = gh.builtin("GT", 1)
    assert gt(1, 0) == 1 and gt(0, 1) == 0
    disj = gh.builtin("DISJ", 2)
    assert disj(1, 2) == 1 and disj(3, 1) == 0
    ip = gh.builtin("IP", 2)
    assert ip(3, 3) == 0 and ip(1, 3) == 1
    maj = gh.builtin("MAJ3")
    assert maj.n == 2 and maj(3, 0) == 1 and maj(1, 0) == 0 and maj(1, 1) == 1
    with pytest.raises(KeyError):
        gh.builtin("XYZ")


def test_truth_table_validation():
    with pytest.raises(ValueError):
        BooleanFunctionTable(1, [[0, 1, 1], [0, 0, 0]])
    with pytest.raises(ValueError):
        BooleanFunctionTable(1, [[0, 2], [0, 0]])


def test_truth_table_csv(tmp_path):
    path = tmp_path / "f.csv"
    path.write_text("0,1\n1,1\n")
    f = BooleanFunctionTable.from_csv(path)
    assert f.n == 1 and f.table == ((0, 1), (1, 1))


def test_and_or_programs():
    assert gh.computes(gh.and_program(), gh.builtin("AND"))
    assert gh.computes(gh.or_program(), gh.builtin("OR"))
    assert gh.and_program().pipe_count == 2


@pytest.mark.parametrize("n", [1, 2])
def test_universal_every_function(n):
    for f in all_functions(n):
        p = gh.universal_program(f)
        assert p.pipe_count == 2 ** (n + 1)
        assert gh.computes(p, f)


def test_universal_on_named_n3():
    for name in ("EQ", "GT", "DISJ", "IP"):
        f = gh.builtin(name, 3)
        assert gh.computes(gh.universal_program(f), f)


def test_standard_form_preserves_semantics():
    rng = np.random.default_rng(4)
    for _ in range(50):
        p = gh.random_program(1, int(rng.integers(1, 5)), rng)
        s = gh.standard_form(p)
        assert s.pipe_count <= 3 * p.pipe_count
        f = gh.function_of(p)
        assert gh.computes(s, f)


def test_standard_form_twice_rejected():
    s = gh.standard_form(gh.and_program())
    with pytest.raises(ValueError):
        gh.standard_form(s)


def test_xor_compose():
    fs = [gh.builtin("AND"), gh.builtin("OR"), gh.builtin("EQ")]
    progs = [gh.standard_form(gh.universal_program(f)) for f in fs]
    x = gh.xor_compose(progs)
    assert x.pipe_count <= 4 * sum(p.pipe_count for p in progs)
    for a, b in fs[0].inputs():
        assert gh.compute(x, a, b) == (sum(f(a, b) for f in fs) % 2)


def test_program_json_roundtrip():
    p = gh.standard_form(gh.or_program())
    q = gh.GardenHoseProgram.from_json(p.to_json())
    assert q.pipe_count == p.pipe_count
    for x, y in itertools.product(range(2), repeat=2):
        assert gh.compute(q, x, y) == gh.compute(p, x, y)


def test_formula_parse_and_cost():
    node = gh.parse_formula("OR(AND(x0, y0), NOT(AND(x1, y1)))")
    plan = gh.compile_formula(node)
    assert plan.cost == node.leaves() == 4
    for x, y in itertools.product(range(4), repeat=2):
        assert plan.evaluate(x, y) == node.evaluate(x, y)


def test_formula_parse_errors():
    with pytest.raises(ValueError):
        gh.parse_formula("AND(x0,")
    with pytest.raises(ValueError):
        gh.parse_formula("FOO(x0, y0)")


def test_to_quantum_small_programs():
    for f in (gh.builtin("AND"), gh.builtin("OR"), gh.builtin("EQ")):
        p = gh.to_quantum(gh.universal_program(f))
        assert max(gh.routing_residuals(p, f).values()) <= 1e-9


def test_to_quantum_code_routing():
    node = gh.parse_formula("AND(x0, OR(y0, x1))")
    plan = gh.compile_formula(node)
    f = BooleanFunctionTable.from_function(2, node.evaluate)
    p = gh.to_quantum(plan)
    assert max(gh.routing_residuals(p, f).values()) <= 1e-9


def test_to_quantum_rejects_other_types():
    with pytest.raises(TypeError):
        gh.to_quantum("AND")


def test_tdepth_cost_recursion():
    c = gh.tdepth_cost(3, 2, K=10)
    assert c.t == (2, 60, 1800)
    assert c.gh_g == (8, 240, 7200) and c.gh_h == (22, 660, 19800)
    assert c.total == 1800


def test_conditional_s_correction():
    rep = gh.simulate_conditional_s_correction(gh.and_program())
    assert rep["all_verified"] and rep["branches"] > 0
