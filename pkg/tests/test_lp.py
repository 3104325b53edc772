import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize

from qased import lp
from qased.caseio import load_case
from qased.dispatch import compile_case
from qased.lp import FeasibilityCut, Infeasible, LinearProgram, Optimal, OptimalityCut, Unbounded


def random_feasible_lp(rng, m, n):
    """Rows of mixed sense built around a non-negative point, positive costs (bounded)."""
    x0 = rng.uniform(0, 3, n)
    A = rng.normal(size=(m, n))
    senses = list(rng.choice(["<=", ">=", "="], size=m, p=[0.45, 0.45, 0.1]))
    slack = rng.uniform(0, 2, m)
    b = A @ x0 + np.where(np.array(senses) == "<=", slack, np.where(np.array(senses) == ">=", -slack, 0.0))
    c = rng.uniform(0.1, 2.0, n)
    return LinearProgram(c, A, b, senses)


def constructed_unbounded_dual(rng, rows, cols):
    """max g.u s.t. C^T u <= cost, u >= 0 with a planted recession direction r."""
    C = rng.normal(size=(rows, cols))
    r = rng.uniform(0, 1, rows) * (rng.random(rows) < 0.6)
    r[rng.integers(rows)] = 1.0
    for j in range(cols):
        excess = C[:, j] @ r
        if excess > -0.1:
            C[:, j] -= (excess + 0.1 + rng.uniform()) * r / (r @ r)
    g = rng.normal(size=rows)
    g += (abs(g @ r) + 1.0) * r / (r @ r)
    cost = rng.uniform(0.5, 2.0, cols)
    return C, g, cost


# --- oracles -------------------------------------------------------------------------


def test_single_variable_lower_bound():
    out = lp.solve(LinearProgram([1.0], [[1.0]], [1.0], [">="]))
    assert isinstance(out, Optimal)
    assert out.x[0] == pytest.approx(1.0) and out.objective == pytest.approx(1.0)
    assert out.duals[0] == pytest.approx(1.0)


def test_separable_max():
    out = lp.solve(LinearProgram([1.0, 1.0], np.eye(2), [2.0, 3.0], ["<=", "<="], sense="max"))
    assert isinstance(out, Optimal) and out.objective == pytest.approx(5.0)


def test_unbounded_without_rows():
    out = lp.solve(LinearProgram([1.0], np.zeros((0, 1)), [], [], sense="max"))
    assert isinstance(out, Unbounded)
    assert out.ray[0] > 0


def test_infeasible_with_farkas_certificate():
    out = lp.solve(LinearProgram([1.0], [[1.0], [1.0]], [1.0, 2.0], ["<=", ">="]))
    assert isinstance(out, Infeasible)
    assert np.any(out.farkas != 0)


def test_free_and_bounded_variables():
    prog = LinearProgram([1.0, -1.0], [[1.0, 1.0]], [0.0], ["="], lb=[-np.inf, -2.0], ub=[np.inf, 4.0])
    out = lp.solve(prog)
    assert isinstance(out, Optimal)
    assert out.objective == pytest.approx(-8.0)
    assert lp.primal_residual(prog, out.x) < 1e-9


@pytest.mark.parametrize("kwargs", [
    dict(c=[1.0], A=[[1.0]], b=[1.0, 2.0], senses=["<="]),
    dict(c=[1.0], A=[[1.0]], b=[1.0], senses=["<"]),
    dict(c=[np.nan], A=[[1.0]], b=[1.0], senses=["<="]),
    dict(c=[1.0], A=[[1.0]], b=[1.0], senses=["<="], lb=[2.0], ub=[1.0]),
])
def test_malformed_programs_rejected(kwargs):
    with pytest.raises(ValueError):
        LinearProgram(**kwargs)


def test_text_dump():
    text = LinearProgram([1.0, 2.0], [[1.0, 0.0]], [3.0], ["<="]).to_text()
    assert text.splitlines()[0] == "min 1.0 2.0"
    assert "<= 3.0" in text


# --- strong duality and rays ----------------------------------------------------------


@pytest.mark.parametrize("seed", range(40))
def test_strong_duality_against_highs(seed):
    rng = np.random.default_rng(seed)
    m, n = rng.integers(1, 21), rng.integers(1, 21)
    prog = random_feasible_lp(rng, m, n)
    out = lp.solve(prog)
    assert isinstance(out, Optimal)
    tol = 1e-7 * (1 + abs(out.objective))
    assert lp.primal_residual(prog, out.x) < 1e-7
    assert abs(out.objective - prog.b @ out.duals) <= tol
    reduced = prog.c - prog.A.T @ out.duals
    assert reduced.min() >= -1e-7
    ref = optimize.linprog(prog.c, A_ub=np.vstack([prog.A[[s == "<=" for s in prog.senses]],
                                                  -prog.A[[s == ">=" for s in prog.senses]]]),
                           b_ub=np.concatenate([prog.b[[s == "<=" for s in prog.senses]],
                                                -prog.b[[s == ">=" for s in prog.senses]]]),
                           A_eq=prog.A[[s == "=" for s in prog.senses]] if "=" in prog.senses else None,
                           b_eq=prog.b[[s == "=" for s in prog.senses]] if "=" in prog.senses else None,
                           method="highs")
    assert ref.status == 0 and abs(ref.fun - out.objective) <= tol


@pytest.mark.parametrize("seed", range(20))
def test_constructed_unbounded_duals_give_improving_rays(seed):
    rng = np.random.default_rng(1000 + seed)
    C, g, cost = constructed_unbounded_dual(rng, rng.integers(2, 15), rng.integers(1, 15))
    out = lp.solve(lp.dual_subproblem(C, cost, g))
    assert isinstance(out, Unbounded)
    r = out.ray
    assert r.min() >= -1e-9
    assert (C.T @ r).max() <= 1e-9
    assert g @ r > 1e-9


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_duality_property(seed):
    rng = np.random.default_rng(seed)
    prog = random_feasible_lp(rng, rng.integers(1, 10), rng.integers(1, 10))
    if rng.random() < 0.5:  # same program as a maximisation of -c
        prog = LinearProgram(-prog.c, prog.A, prog.b, prog.senses, sense="max")
    out = lp.solve(prog)
    assert isinstance(out, Optimal)
    assert abs(out.objective - prog.b @ out.duals) <= 1e-7 * (1 + abs(out.objective))


# --- subproblems -----------------------------------------------------------------------


def test_feasible_subproblem_cut_is_tight(micro6):
    _, program, sc = micro6
    z0 = np.array([1, 1, 1, 1, 0, 0, 1, 0, 0, 1], dtype=float)
    xi = program.scenario_xi(sc.errors[5])
    cut = lp.solve_subproblem(program, 5, z0, xi)
    assert isinstance(cut, OptimalityCut)
    primal = optimize.linprog(program.cost, A_ub=-program.C, b_ub=-(program.rhs(xi) - program.B @ z0),
                              bounds=(0, None), method="highs")
    assert cut.value == pytest.approx(primal.fun, abs=1e-7)
    assert cut.evaluate(z0) == pytest.approx(cut.value, abs=1e-7)
    assert cut.recourse is not None
    assert program.cost @ cut.recourse == pytest.approx(cut.value, abs=1e-7)


def test_overload_subproblem_gives_violated_feasibility_cut():
    program = compile_case(load_case("overload2"))
    z0 = np.ones(program.m)
    cut = lp.solve_subproblem(program, 0, z0, np.zeros(program.h))
    assert isinstance(cut, FeasibilityCut)
    assert cut.evaluate(z0) > 0
    assert np.abs(cut.ray).max() == pytest.approx(1.0)
