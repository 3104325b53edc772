import itertools
import json
from importlib import resources

import numpy as np
import pytest
from scipy import optimize

from qased import uqae
from qased.caseio import load_case
from qased.dispatch import CaseError, ResUnit, apply_error, compile_case, decode_schedule, extensive_form
from qased.uqae import GridEncoding, Normal, ScenarioSet

from conftest import MICRO6_OPTIMUM


def deterministic(program, errors=None, weights=None):
    R = len(program.case.res_units)
    errs = np.zeros((1, R)) if errors is None else np.asarray(errors, dtype=float)
    w = np.ones(len(errs)) if weights is None else np.asarray(weights, dtype=float)
    return ScenarioSet([np.zeros(1)] * R, errs, w)


def recourse_lp(program, z0, xi, sign=1.0, objective=None):
    c = program.cost if objective is None else objective
    return optimize.linprog(sign * c, A_ub=-program.C, b_ub=-(program.rhs(xi) - program.B @ z0),
                            bounds=(0, None), method="highs")


# --- compilation ----------------------------------------------------------------------


def test_single_bus_balance_forces_output():
    program = compile_case(load_case("tiny1"))
    z0 = np.zeros(program.m)
    z0[[program.var("on[G1,1]"), program.var("on[G1,2]"), program.var("startup[G1,1]")]] = 1
    xi = np.zeros(program.h)
    for t in (1, 2):
        e = np.zeros(program.n)
        e[program.var(f"p[G1,{t}]")] = 1
        lo, hi = recourse_lp(program, z0, xi, 1.0, e), recourse_lp(program, z0, xi, -1.0, e)
        assert lo.status == 0 and hi.status == 0
        assert lo.fun == pytest.approx(10.0) and -hi.fun == pytest.approx(10.0)


def test_overloaded_line_makes_every_scenario_infeasible():
    program = compile_case(load_case("overload2"))
    for z in itertools.product((0, 1), repeat=program.m):
        assert recourse_lp(program, np.array(z, float), np.zeros(program.h)).status == 2


def test_micro6_dimensions_match_hand_count():
    counts = json.loads(resources.files("qased.cases").joinpath("micro6.counts.json").read_text())
    program = compile_case(load_case("micro6"))
    assert (program.m, program.n, program.h, program.B.shape[0]) == (
        counts["first_stage_binaries"], counts["recourse_variables"], counts["uncertain_entries"], counts["rows"])
    assert program.C.shape == (counts["rows"], counts["recourse_variables"])
    assert program.A.shape == (counts["rows"], counts["uncertain_entries"])


def test_first_stage_costs_are_startups():
    program = compile_case(load_case("micro6"))
    assert set(np.nonzero(program.a)[0]) <= {program.var(v) for v in program.first_stage_vars if "startup" in v}


# --- realised output ------------------------------------------------------------------


def _res(forecast, cap=50.0):
    return ResUnit("R", "1", cap, forecast, Normal(0.0, 0.5), GridEncoding(1, 1))


def test_apply_error_examples():
    assert apply_error(_res([20.0]), 0.25)[0] == 32.5
    assert apply_error(_res([20.0]), -1.75)[0] == 0.0
    assert apply_error(_res([45.0]), 0.75)[0] == 50.0


# --- extensive form ---------------------------------------------------------------------


def test_single_scenario_equals_scenario_milp(micro6):
    _, program, _ = micro6
    ef = extensive_form(program, deterministic(program, [[0.25, -0.25, 0.0]])).solve()
    xi = program.scenario_xi([0.25, -0.25, 0.0])
    best = np.inf
    for z in itertools.product((0, 1), repeat=program.m):
        z = np.array(z, float)
        r = recourse_lp(program, z, xi)
        if r.status == 0:
            best = min(best, program.a @ z + r.fun)
    assert ef.objective == pytest.approx(best, abs=1e-7)


def test_two_scenarios_match_weighted_enumeration(micro6):
    _, program, _ = micro6
    errs, w = [[0.25, -0.25, 0.0], [-0.75, 0.25, 0.25]], [0.3, 0.7]
    ef = extensive_form(program, deterministic(program, errs, w)).solve()
    xis = [program.scenario_xi(e) for e in errs]
    best = np.inf
    for z in itertools.product((0, 1), repeat=program.m):
        z = np.array(z, float)
        rs = [recourse_lp(program, z, xi) for xi in xis]
        if all(r.status == 0 for r in rs):
            best = min(best, program.a @ z + sum(p * r.fun for p, r in zip(w, rs)))
    assert ef.objective == pytest.approx(best, abs=1e-7)


def test_degenerate_weights_reduce_to_first_scenario(micro6):
    _, program, _ = micro6
    errs = [[0.25, -0.25, 0.0], [-1.75, -1.75, -1.75]]
    both = extensive_form(program, deterministic(program, errs, [1.0, 0.0])).solve()
    one = extensive_form(program, deterministic(program, errs[:1])).solve()
    assert both.objective == pytest.approx(one.objective, abs=1e-7)


def test_micro6_extensive_optimum(micro6_extensive):
    assert micro6_extensive.objective == pytest.approx(MICRO6_OPTIMUM, abs=1e-7)
    assert "".join(str(int(v)) for v in micro6_extensive.z0) == "1111001001"


def test_enumeration_cap():
    program = compile_case(load_case("ieee6-like"))
    with pytest.raises(CaseError):
        extensive_form(program, deterministic(program))


# --- schedule reports --------------------------------------------------------------------


def test_all_off_zero_schedule(micro6):
    _, program, _ = micro6
    rep = decode_schedule(program, np.zeros(program.m), [np.zeros(program.n)])
    assert rep.total_cost == 0.0
    for table in (rep.generator_mw, rep.storage_mw, rep.flows_mw):
        assert all(np.all(v == 0) for v in table.values())


def test_report_totals_equal_objective(micro6, micro6_extensive):
    _, program, sc = micro6
    ef = micro6_extensive
    rep = decode_schedule(program, ef.z0, ef.recourse, sc.weights)
    assert rep.total_cost == pytest.approx(ef.objective, abs=1e-9)
    assert "total cost" in rep.to_text()
    assert rep.to_csv().splitlines()[0] == "scenario,hour,device,quantity,value"


def test_charging_is_negative(micro6):
    _, program, _ = micro6
    x = np.zeros(program.n)
    x[program.var("charge[ESS,1]")] = 3.0
    rep = decode_schedule(program, np.zeros(program.m), [x])
    assert rep.storage_mw["ESS"][0].tolist() == [-3.0, 0.0]


def test_report_rejects_wrong_shapes(micro6):
    _, program, _ = micro6
    with pytest.raises(CaseError):
        decode_schedule(program, np.zeros(3), [np.zeros(program.n)])
    with pytest.raises(CaseError):
        decode_schedule(program, np.zeros(program.m), [np.zeros(2)])
