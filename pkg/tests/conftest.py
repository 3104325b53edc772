import numpy as np
import pytest

from qased import benders, uqae
from qased.caseio import load_case
from qased.dispatch import compile_case, extensive_form

# optimum of the bundled micro6 case under exact weights, from full
# enumeration of the extensive form (recomputed by test_dispatch)
MICRO6_OPTIMUM = 189.86144601400548


def scenarios_for(case, mode="exact", shots=512, seed=None):
    return uqae.generate_scenarios([r.error for r in case.res_units], [r.encoding for r in case.res_units],
                                   mode=mode, shots=shots, seed=seed)


@pytest.fixture(scope="session")
def micro6():
    case = load_case("micro6")
    return case, compile_case(case), scenarios_for(case)


@pytest.fixture(scope="session")
def micro6_extensive(micro6):
    _, program, sc = micro6
    return extensive_form(program, sc).solve()


@pytest.fixture(scope="session")
def micro6_runs(micro6):
    """Benders on micro6 with the oracle and exact-QUBO masters, shared subproblem cache."""
    _, program, sc = micro6
    cache: dict = {}
    out = {}
    for master in ("ilp-oracle", "qubo-exact"):
        out[master] = benders.run(program, sc, benders.BendersConfig(master=master), cache=cache)
    out["none"] = benders.run(program, sc, benders.BendersConfig(master="ilp-oracle", selection="none"),
                              cache=cache)
    return out


def random_qubo_matrix(rng, n, scale=1.0):
    M = rng.normal(scale=scale, size=(n, n))
    return (M + M.T) / 2, rng.normal(scale=scale, size=n)


def random_cut_system(rng, m, n_opt, n_fea, grid=0.25):
    """Master cuts with coefficients on a dyadic grid; feasibility cuts keep a planted z* feasible."""
    from qased.qubo import CutSystem

    z_star = rng.integers(0, 2, m).astype(float)
    draw = lambda lo, hi, size=None: np.round(rng.uniform(lo, hi, size) / grid) * grid
    opt = [(float(draw(0, 4)), draw(-2, 2, m)) for _ in range(n_opt)]
    fea = []
    for _ in range(n_fea):
        f = draw(-2, 2, m)
        f0 = float(-(f @ z_star) - draw(0, 1.5))
        fea.append((f0, f))
    a = draw(0, 3, m)
    return a, CutSystem(opt, fea), z_star


def random_cover(rng, q, k, density=0.35):
    """q x k 0/1 matrix with every row covered by at least one column."""
    from qased.cutsel import CoverInstance

    N = (rng.random((q, k)) < density).astype(np.int8)
    for r in np.flatnonzero(N.sum(axis=1) == 0):
        N[r, rng.integers(k)] = 1
    return CoverInstance(N, list(range(q)), list(range(k)))


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(mod.RESULTS):
            terminalreporter.write_line(mod.RESULTS[n])
