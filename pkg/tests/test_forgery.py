import inspect
import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qmoney import coin as cn
from qmoney import forgery as fg
from qmoney.errors import ParameterError
from qmoney.qstate import QuantumState, fidelity, haar_random_state, make_rng


def counting_oracle(scheme):
    """Oracle whose underlying reflection is independently instrumented."""
    oracle = scheme.oracle()
    inner = oracle._reflect
    calls = []

    def wrapped(state, control, targets):
        calls.append(1)
        inner(state, control, targets)

    oracle._reflect = wrapped
    return oracle, calls


# --- measure-and-retry -----------------------------------------------------

def test_retry_mean_tries_single_qubit():
    stats = fg.retry_experiment(1, 10_000, 5)
    # geometric with success probability 1/2: mean 2, variance 2
    assert abs(stats.mean - 2) < 3 * math.sqrt(2 / 10_000)
    assert stats.failures == 0


def test_retry_success_is_a_valid_coin():
    s = cn.new_scheme(3, 2)
    attempt = fg.retry_forger(s.oracle(), 3, 4, 10_000)
    assert attempt.succeeded and fidelity(attempt.state, s.psi) > 1 - 1e-12
    for seed in range(50):
        assert cn.verify(s.oracle(), attempt.state, seed).accepted
    rep = fg.judge(s, attempt, seed=4)
    assert rep.achieved_overlap == pytest.approx(1.0) and rep.queries == attempt.tries


def test_retry_exhaustion_reports_failure():
    s = cn.new_scheme(8, 2)
    attempt = fg.retry_forger(s.oracle(), 8, 1, 3)
    assert not attempt.succeeded and attempt.tries == 3 and attempt.state is None
    assert fg.judge(s, attempt).achieved_overlap == 0.0
    with pytest.raises(ParameterError):
        fg.retry_forger(s.oracle(), 8, 1, 0)


def test_retry_counts_every_query():
    s = cn.new_scheme(3, 1)
    oracle, calls = counting_oracle(s)
    attempt = fg.retry_forger(oracle, 3, 9, 1000)
    assert attempt.queries == len(calls) == attempt.tries


def test_geometric_chi_square_accepts_geometric_and_rejects_other():
    rng = make_rng(3)
    good = rng.geometric(1 / 8, size=5000)
    assert fg.geometric_chi_square(good, 1 / 8)[1] > 0.01
    bad = rng.geometric(1 / 4, size=5000)
    assert fg.geometric_chi_square(bad, 1 / 8)[1] < 1e-6
    with pytest.raises(ParameterError):
        fg.geometric_chi_square(np.array([1]), 0.5)


def test_retry_tries_fit_geometric_law():
    stats = fg.retry_experiment(3, 2000, 11)
    assert stats.p_value > 0.05
    assert abs(stats.mean - 8) < 3 * stats.std_error


# --- amplitude amplification ----------------------------------------------

def test_grover_iteration_count_example():
    assert fg.grover_iterations(4, 0.9) == 2
    assert fg.grover_closed_form(4, 2) == pytest.approx(math.sin(5 * math.asin(0.25)) ** 2)
    assert fg.grover_closed_form(4, 2) == pytest.approx(0.9084472656, abs=1e-9)


def test_grover_exact_when_angle_lands_on_quarter_turn():
    # n = 2: theta = pi/6 and 3 theta = pi/2, so one iteration reaches psi
    s = fg.search_instance(2, 3)
    attempt = fg.grover_forger(s.oracle(), 2, 1.0)
    assert attempt.queries == 1
    assert fidelity(attempt.state, s.psi) == pytest.approx(1.0, abs=1e-12)


def test_grover_overshoot_reported():
    # n = 3 cannot hit overlap 1; the chosen t overshoots and reports what it reached
    attempt = fg.grover_forger(fg.search_instance(3, 1).oracle(), 3, 1.0)
    assert attempt.predicted_overlap < 1.0
    assert attempt.predicted_overlap == pytest.approx(fg.grover_closed_form(3, attempt.queries))


@pytest.mark.parametrize("n", range(1, 11))
def test_grover_simulation_matches_closed_form(n):
    s = fg.search_instance(n, 40 + n)
    for p in (0.3, 0.5, 0.9):
        attempt = fg.grover_forger(s.oracle(), n, p)
        assert abs(fidelity(attempt.state, s.psi) - fg.grover_closed_form(n, attempt.queries)) < 1e-9


def test_search_instance_has_typical_start_overlap():
    for n in (1, 4, 9):
        s = fg.search_instance(n, n)
        assert fidelity(s.psi, fg.uniform_superposition(n)) == pytest.approx(2.0**-n, abs=1e-14)


def test_grover_counts_queries():
    s = fg.search_instance(6, 1)
    oracle, calls = counting_oracle(s)
    attempt = fg.grover_forger(oracle, 6, 0.5)
    assert attempt.queries == len(calls) == fg.grover_iterations(6, 0.5)


def test_grover_rejects_bad_target():
    s = cn.new_scheme(2, 1)
    for p in (0.0, 1.5):
        with pytest.raises(ParameterError):
            fg.grover_forger(s.oracle(), 2, p)


def test_forge_with_coins_scores_product_overlap():
    s = fg.search_instance(4, 2)
    s.poly_cap = 10
    rep = fg.forge_with_coins(s, 3, 0.9, 7)
    single = fg.grover_closed_form(4, rep.queries)
    assert rep.k == 3 and rep.achieved_overlap == pytest.approx(single, abs=1e-9)
    assert s.issued_count == 3
    psi = haar_random_state(2, 0)
    assert fg.kcopy_overlap(psi, [psi, QuantumState.basis(2, 0)]) == pytest.approx(
        fidelity(psi, QuantumState.basis(2, 0)))


def test_forger_report_validation():
    with pytest.raises(ParameterError):
        fg.ForgerReport(2, 0, 0.5, -1, 0.5, 1, False, 0)
    with pytest.raises(ParameterError):
        fg.ForgerReport(2, 0, 0.5, 1, 1.5, 1, False, 0)


def test_forgers_take_no_secret():
    for fn in (fg.retry_forger, fg.grover_forger):
        params = inspect.signature(fn).parameters
        assert "scheme" not in params and "psi" not in params
    assert list(inspect.signature(fg.recover_bb84).parameters) == ["coins", "seed", "split"]


# --- lower bound -----------------------------------------------------------

def test_bound_example_value():
    assert fg.theoretical_bound(fg.ForgeBoundParams(10, 2, 1.0)) == pytest.approx(14.0)


def test_bound_small_k_convention():
    assert fg.theoretical_bound(fg.ForgeBoundParams(10, 0, 1.0)) == pytest.approx(32.0)
    assert fg.theoretical_bound(fg.ForgeBoundParams(10, 1, 1.0)) == pytest.approx(31.0)


def test_bound_in_large_k_regime_is_clipped():
    # sqrt(2^64 * 1e-6) ~ 4.3e6 is far below k log k ~ 2e7, so the shape clips to 0
    assert fg.theoretical_bound(fg.ForgeBoundParams(64, 10**6, 1e-6)) == 0.0
    # with one coin the same n and p leave a large positive bound
    assert fg.theoretical_bound(fg.ForgeBoundParams(64, 1, 1e-6)) > 4e6


@given(n=st.integers(1, 63), k=st.integers(0, 2**20 - 1), p=st.floats(1e-9, 1.0))
def test_bound_monotone(n, k, p):
    b = fg.theoretical_bound(fg.ForgeBoundParams(n, k, p))
    assert fg.theoretical_bound(fg.ForgeBoundParams(n, k + 1, p)) <= b
    assert fg.theoretical_bound(fg.ForgeBoundParams(n + 1, k, p)) >= b
    assert fg.theoretical_bound(fg.ForgeBoundParams(n, k, min(1.0, 2 * p))) >= b


def test_bound_params_validation():
    for args in ((0, 1, 0.5), (2, -1, 0.5), (2, 1, 0.0), (2, 1, 1.1)):
        with pytest.raises(ParameterError):
            fg.ForgeBoundParams(*args)


# --- scaling ---------------------------------------------------------------

def test_scaling_includes_smallest_row():
    rows = fg.query_scaling_experiment([1, 2], 0.5, 0)
    assert rows[0].n == 1 and math.isfinite(rows[0].ratio)


def test_two_more_qubits_double_the_queries():
    # the continuous iteration count doubles plus 1/2; rounding each count up
    # moves it by less than 1, so the integer counts satisfy |q(n+2) - 2 q(n)| <= 1
    rows = {r.n: r for r in fg.query_scaling_experiment(range(4, 13), 0.5, 0)}
    for n in range(4, 11):
        assert abs(rows[n + 2].queries - 2 * rows[n].queries) <= 1


# --- BB84 encoding ---------------------------------------------------------

def test_bb84_spec_validation():
    with pytest.raises(ParameterError):
        fg.BB84CoinSpec(2, (0,), (0, 1))
    with pytest.raises(ParameterError):
        fg.BB84CoinSpec(1, (2,), (0,))


def test_bb84_honest_coin_passes():
    spec = fg.random_bb84_spec(8, 1)
    coin = fg.bb84_coin(spec)
    assert all(fg.bb84_verify(spec, coin, s) for s in range(50))


def test_eigenstate_record_is_constant():
    spec = fg.BB84CoinSpec(1, (1,), (fg.COMPUTATIONAL,))
    for seed in range(200):
        coins = [fg.bb84_coin(spec)] * 2
        guess = fg.recover_bb84(coins, seed, "balanced")
        assert guess == spec


def test_split_rules():
    assert fg.bb84_split(16, "skewed") == 15
    assert fg.bb84_split(16, "balanced") == 8
    assert fg.bb84_split(5, "balanced") == 3
    with pytest.raises(ParameterError):
        fg.bb84_split(1, "skewed")
    with pytest.raises(ParameterError):
        fg.bb84_split(4, "other")


def exhaustive_basis_error(copies, split):
    """Per-qubit basis-misidentification probability by full enumeration.

    In the true basis the record is constant; in the wrong basis every
    record of the given length is equally likely. True basis and bit are
    uniform.
    """
    j = fg.bb84_split(copies, split)
    lengths = {fg.COMPUTATIONAL: j, fg.HADAMARD: copies - j}
    err = 0.0
    for true_basis, bit in itertools.product((0, 1), (0, 1)):
        wrong = 1 - true_basis
        for record in itertools.product((0, 1), repeat=lengths[wrong]):
            records = {true_basis: [bit] * lengths[true_basis], wrong: list(record)}
            guess = fg.decide_basis(records[fg.COMPUTATIONAL], records[fg.HADAMARD])
            err += 0.25 * 0.5 ** lengths[wrong] * (guess != true_basis)
    return err


def test_exhaustive_oracle_closed_forms():
    assert exhaustive_basis_error(16, "skewed") == pytest.approx(2.0**-15)
    assert exhaustive_basis_error(16, "balanced") == pytest.approx(2.0**-8)
    assert exhaustive_basis_error(4, "balanced") == pytest.approx(0.25)


@pytest.mark.parametrize("copies,split", [(4, "balanced"), (3, "skewed"), (6, "balanced")])
def test_basis_error_rate_matches_oracle(copies, split):
    n, trials = 8, 800
    errors = 0
    for i in range(trials):
        spec = fg.random_bb84_spec(n, np.random.default_rng([i, 0]))
        errors += fg.bb84_attack(spec, copies, i, forged=1, split=split).basis_errors
    p = exhaustive_basis_error(copies, split)
    total = n * trials
    assert abs(errors / total - p) < 3 * math.sqrt(p * (1 - p) / total)


def test_bb84_attack_recovers_spec():
    results = [fg.bb84_attack(fg.random_bb84_spec(8, np.random.default_rng([s, 0])), 16, s)
               for s in range(50)]
    assert all(r.success and r.forged_pass_rate == 1.0 for r in results)


def test_wrong_basis_guess_fails_verification_often():
    spec = fg.BB84CoinSpec(1, (0,), (fg.HADAMARD,))
    wrong = fg.bb84_coin(fg.BB84CoinSpec(1, (0,), (fg.COMPUTATIONAL,)))
    passes = sum(fg.bb84_verify(spec, wrong, s) for s in range(2000))
    assert abs(passes / 2000 - 0.5) < 3 * math.sqrt(0.25 / 2000)
