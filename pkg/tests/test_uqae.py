import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from qased import qsim, uqae
from qased.qsim import QuantumState
from qased.uqae import EncodingError, GaussianMixture, GridEncoding, Normal

ENC = GridEncoding(m1=1, n1=1)  # three value qubits, grid -1.75 .. 1.75 in steps of 0.5
MIXTURE = GaussianMixture(((0.5, -1.0, 0.3), (0.5, 1.0, 0.3)))


def point_mass(enc, index):
    p = np.zeros(enc.size)
    p[index] = 1.0
    return p


def ancilla_one(gates, enc):
    n = enc.num_qubits + 1
    state = qsim.run_circuit(QuantumState.zero(n), gates)
    return qsim.exact_probabilities(state, [n - 1]).get("1", 0.0), state


# --- grid encoding --------------------------------------------------------------


def test_grid_value_examples():
    assert uqae.grid_value([0, 0, 0], ENC) == -1.75
    assert uqae.grid_value([0, 0, 1], ENC) == 0.25  # only the 2^1 weight
    assert uqae.grid_value([1, 1, 1], ENC) == 1.75


def test_grid_value_checks_width():
    with pytest.raises(EncodingError):
        uqae.grid_value([0, 1], ENC)


def test_values_are_basis_indexed():
    for k, v in enumerate(ENC.values()):
        bits = [(k >> q) & 1 for q in range(ENC.num_qubits)]
        assert uqae.grid_value(bits, ENC) == v


def test_unify_examples():
    assert uqae.unify(-ENC.bias, ENC) == 0.0
    assert uqae.unify(ENC.bias, ENC) == 0.875
    for v in ENC.values():
        assert abs(uqae.de_unify(uqae.unify(v, ENC), ENC) - v) < 1e-12
    with pytest.raises(EncodingError):
        uqae.unify(2.0, ENC)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 3), st.integers(0, 3), st.data())
def test_unified_values_lie_in_unit_interval(m1, n1, data):
    enc = GridEncoding(m1, n1)
    k = data.draw(st.integers(0, enc.size - 1))
    v = enc.values()[k]
    u = uqae.unify(v, enc)
    assert 0.0 <= u < 1.0
    assert uqae.de_unify(u, enc) == pytest.approx(v, abs=1e-12)


# --- discretisation -----------------------------------------------------------------


def test_flat_limit_is_near_uniform():
    p = uqae.discretize_distribution(Normal(0.0, 100 * ENC.bias), ENC)
    assert p.max() / p.min() < 1.01


def test_normal_is_symmetric():
    p = uqae.discretize_distribution(Normal(0.0, 0.5), ENC)
    assert np.allclose(p, p[::-1], atol=1e-12)
    assert p.sum() == pytest.approx(1.0, abs=1e-15)


def test_mixture_matches_numerical_integration():
    p = uqae.discretize_distribution(MIXTURE, ENC)
    half = ENC.step / 2
    ref = np.array([integrate.quad(MIXTURE.pdf, c - half, c + half)[0] for c in ENC.values()])
    ref /= ref.sum()
    assert np.allclose(p, ref, atol=1e-9)
    vals = ENC.values()
    # bimodal: the heaviest cell on each side is one of the two cells bordering +-1
    assert abs(abs(vals[np.argmax(p[:4])]) - 1.0) == 0.25
    assert abs(vals[4 + np.argmax(p[4:])] - 1.0) == 0.25
    assert p[1:3].min() > p[3] and p[5:7].min() > p[4]


def test_distribution_validation():
    with pytest.raises(EncodingError):
        Normal(0.0, 0.0)
    with pytest.raises(EncodingError):
        GaussianMixture(((0.5, 0.0, 1.0),))
    with pytest.raises(EncodingError):
        uqae.discretize_distribution(Normal(100.0, 0.01), ENC)


# --- preparation and Grover operator -----------------------------------------------


def test_point_mass_at_zero_leaves_ancilla_clear():
    p1, _ = ancilla_one(uqae.build_preparation(point_mass(ENC, 0), ENC), ENC)
    assert p1 == 0.0


def test_point_mass_at_top_loads_unified_value():
    p1, _ = ancilla_one(uqae.build_preparation(point_mass(ENC, ENC.size - 1), ENC), ENC)
    assert p1 == pytest.approx(0.875, abs=1e-12)


@pytest.mark.parametrize("dist", [Normal(0.0, 0.5), MIXTURE, Normal(0.4, 0.7)])
def test_ancilla_probability_is_the_mean(dist):
    p = uqae.discretize_distribution(dist, ENC)
    p1, _ = ancilla_one(uqae.build_preparation(dist, ENC), ENC)
    ref = sum(pk * (v + ENC.bias) / 4 for pk, v in zip(p, ENC.values()))
    assert p1 == pytest.approx(ref, abs=1e-12)
    assert p1 == pytest.approx(uqae.exact_mean(dist, ENC), abs=1e-12)


def test_grover_fixed_point_at_amplitude_one():
    probs = uqae.discretize_distribution(Normal(0.0, 0.5), ENC)
    prep = uqae.build_preparation(probs, ENC, unified=np.ones(ENC.size))
    n = ENC.num_qubits + 1
    a0 = qsim.run_circuit(QuantumState.zero(n), prep).amplitudes
    a1 = qsim.run_circuit(QuantumState(n, a0), uqae.grover_operator(prep, n)).amplitudes
    assert abs(abs(np.vdot(a0, a1)) - 1) < 1e-10


def test_grover_rotation_identity():
    enc = GridEncoding(m1=1, n1=0)  # two value qubits, three with the ancilla
    rng = np.random.default_rng(11)
    probs = rng.dirichlet(np.ones(enc.size))
    prep = uqae.build_preparation(probs, enc)
    n = enc.num_qubits + 1
    theta = math.asin(math.sqrt(uqae.exact_mean(probs, enc)))
    state = qsim.run_circuit(QuantumState.zero(n), prep)
    q_op = uqae.grover_operator(prep, n)
    for k in range(4):
        p1 = qsim.exact_probabilities(state, [n - 1]).get("1", 0.0)
        assert p1 == pytest.approx(math.sin((2 * k + 1) * theta) ** 2, abs=1e-10)
        state = qsim.run_circuit(state, q_op)


def test_grover_operator_is_unitary():
    prep = uqae.build_preparation(Normal(0.0, 0.5), ENC)
    n = ENC.num_qubits + 1
    q_op = uqae.grover_operator(prep, n)
    rng = np.random.default_rng(5)
    v = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    s = QuantumState(n, v / np.linalg.norm(v))
    back = qsim.run_circuit(qsim.run_circuit(s, q_op), qsim.inverse_circuit(q_op))
    assert np.allclose(back.amplitudes, s.amplitudes, atol=1e-9)


# --- amplitude estimation -----------------------------------------------------------


def test_estimate_unit_amplitude_exact():
    probs = uqae.discretize_distribution(Normal(0.0, 0.5), ENC)
    est = uqae.estimate_mean(probs, ENC, 4, unified=np.ones(ENC.size))
    assert est.estimate == pytest.approx(1.0, abs=1e-12)


def test_estimate_point_mass():
    est = uqae.estimate_mean(point_mass(ENC, ENC.size - 1), ENC, 6)
    assert abs(est.estimate - 0.875) <= math.pi / 2**6


@pytest.mark.parametrize("a", [4, 5, 6])
def test_estimate_normal_within_bound(a):
    dist = Normal(0.0, 0.5)
    p = uqae.discretize_distribution(dist, ENC)
    reference = float(sum(pk * uqae.unify(v, ENC) for pk, v in zip(p, ENC.values())))
    est = uqae.estimate_mean(dist, ENC, a)
    assert abs(est.estimate - reference) <= math.pi / 2**a
    assert est.powers == [2**j for j in range(a)]


def test_sampled_estimate_is_seeded():
    a = uqae.estimate_mean(MIXTURE, ENC, 4, shots=256, seed=3)
    b = uqae.estimate_mean(MIXTURE, ENC, 4, shots=256, seed=3)
    assert a.estimate == b.estimate
    assert abs(a.estimate - uqae.exact_mean(MIXTURE, ENC)) < 0.1


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=8, max_size=8).filter(lambda v: sum(v) > 1e-2))
def test_estimate_bound_holds_for_any_distribution(v):
    p = np.asarray(v) / sum(v)
    est = uqae.estimate_mean(p, ENC, 5)
    assert abs(est.estimate - uqae.exact_mean(p, ENC)) <= math.pi / 2**5


# --- scenarios -------------------------------------------------------------------------


def test_single_point_mass_gives_one_scenario():
    sc = uqae.generate_scenarios([Normal(0.25, 1e-4)], [ENC])
    assert len(sc) == 1 and sc.weights[0] == 1.0
    assert sc.errors[0, 0] == 0.25


def test_three_res_give_512_scenarios():
    sc = uqae.generate_scenarios([Normal(0.0, 0.5), MIXTURE, Normal(0.1, 0.4)], [ENC] * 3)
    assert len(sc) == 512
    assert abs(sc.weights.sum() - 1.0) < 1e-9


def test_exact_weights_are_products():
    d1, d2 = Normal(0.0, 0.5), MIXTURE
    sc = uqae.generate_scenarios([d1, d2], [ENC, ENC])
    p1, p2 = uqae.discretize_distribution(d1, ENC), uqae.discretize_distribution(d2, ENC)
    vals = ENC.values()
    for (e1, e2), w in zip(sc.errors, sc.weights):
        i, j = np.searchsorted(vals, e1), np.searchsorted(vals, e2)
        assert abs(w - p1[i] * p2[j]) < 1e-12


def test_sampled_scenarios_are_seeded_and_need_a_seed():
    dists = [Normal(0.0, 0.5), MIXTURE]
    a = uqae.generate_scenarios(dists, [ENC, ENC], mode="sampled", shots=512, seed=9)
    b = uqae.generate_scenarios(dists, [ENC, ENC], mode="sampled", shots=512, seed=9)
    assert np.array_equal(a.weights, b.weights) and np.array_equal(a.errors, b.errors)
    assert abs(a.weights.sum() - 1) < 1e-12
    for m in a.marginals:
        assert np.allclose(m * 512, np.round(m * 512))
    with pytest.raises(EncodingError):
        uqae.generate_scenarios(dists, [ENC, ENC], mode="sampled")


def test_scenario_cap_and_arguments():
    with pytest.raises(EncodingError):
        uqae.generate_scenarios([Normal(0, 1)] * 3, [ENC] * 3, cap=100)
    with pytest.raises(EncodingError):
        uqae.generate_scenarios([Normal(0, 1)], [ENC, ENC])
    with pytest.raises(EncodingError):
        uqae.generate_scenarios([Normal(0, 1)], [ENC], mode="bogus")


def test_monte_carlo_comparison_runs():
    rows = uqae.compare_with_monte_carlo(Normal(0.0, 0.5), ENC, [3, 4], trials=5, seed=1)
    assert len(rows) == 2
