"""
Adversaries against quantum coins, plus the query lower-bound calculator.

Forgers only ever receive a VerificationOracle (and, where stated, coins
already issued to them). Scoring a forgery against the secret state is done
separately by :func:`judge`, which runs on the bank's side.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .coin import CoinScheme, VerificationOracle, verify
from .errors import ParameterError
from .qstate import (
    QuantumState,
    _check_n,
    apply_controlled_reflection,
    apply_hadamard,
    derive_seed,
    fidelity,
    haar_random_state,
    make_rng,
    measure_qubit,
)

BOUND_LABEL = "asymptotic shape, constant unnormalized"
BOUND_K_CONVENTION = (
    "denominator k*max(1, log2 k); k=0 reduces to the pure search bound sqrt(2^n p)"
)


@dataclass(eq=False)
class ForgeryAttempt:
    """What a forger hands back: a candidate state and its own bookkeeping."""

    state: QuantumState | None
    queries: int
    tries: int
    succeeded: bool
    predicted_overlap: float | None = None
    provenance: str = field(default="forger", repr=False)


@dataclass
class ForgerReport:
    n: int
    k: int
    p: float | None
    queries: int
    achieved_overlap: float
    trials: int
    succeeded: bool
    seed: int | None = None

    def __post_init__(self):
        if self.queries < 0:
            raise ParameterError("query count cannot be negative")
        if not 0.0 <= self.achieved_overlap <= 1.0:
            raise ParameterError(f"overlap {self.achieved_overlap} outside [0, 1]")


def judge(scheme: CoinScheme, attempt: ForgeryAttempt, k: int = 0, p: float | None = None,
          seed: int | None = None) -> ForgerReport:
    """Score a forgery attempt against the secret coin state."""
    overlap = 0.0 if attempt.state is None else fidelity(attempt.state, scheme.psi)
    succeeded = attempt.succeeded if p is None else overlap >= p - 1e-12
    return ForgerReport(scheme.n, k, p, attempt.queries, overlap, attempt.tries, succeeded, seed)


def retry_forger(oracle: VerificationOracle, n: int, seed, max_tries: int) -> ForgeryAttempt:
    """Sample Haar-random candidates and verify each until one is accepted.

    An accepted candidate has been projected onto the coin state, so it is a
    valid coin from then on.
    """
    if max_tries < 1:
        raise ParameterError("max_tries must be at least 1")
    rng = make_rng(seed)
    start = oracle.queries
    for tries in range(1, max_tries + 1):
        candidate = haar_random_state(n, rng)
        result = verify(oracle, candidate, rng)
        if result.accepted:
            return ForgeryAttempt(result.post_state, oracle.queries - start, tries, True)
    return ForgeryAttempt(None, oracle.queries - start, max_tries, False)


def uniform_superposition(n: int) -> QuantumState:
    state = QuantumState.basis(n, 0)
    for q in range(n):
        apply_hadamard(state, q)
    return state


def grover_iterations(n: int, target_p: float) -> int:
    """Iterations needed from the uniform start for overlap ``target_p``,
    assuming the typical start overlap 2^-n."""
    if not 0.0 < target_p <= 1.0:
        raise ParameterError(f"target overlap must lie in (0, 1], got {target_p}")
    theta = math.asin(2 ** (-n / 2))
    return max(0, math.ceil((math.asin(math.sqrt(target_p)) / theta - 1) / 2))


def grover_closed_form(n: int, t: int) -> float:
    theta = math.asin(2 ** (-n / 2))
    return math.sin((2 * t + 1) * theta) ** 2


def grover_forger(oracle: VerificationOracle, n: int, target_p: float, seed=None) -> ForgeryAttempt:
    """Amplitude amplification from the uniform superposition.

    Each iterate is the oracle reflection followed by the inversion about
    the start state; the forger stops after the number of iterations that
    first reaches ``target_p`` and may overshoot it. ``seed`` is accepted
    for interface uniformity; the procedure is deterministic.
    """
    n = _check_n(n)
    t = grover_iterations(n, target_p)
    start = uniform_superposition(n)
    state = start.copy()
    q0 = oracle.queries
    targets = range(n)
    for _ in range(t):
        oracle.apply(state, None, targets)
        apply_controlled_reflection(state, None, targets, start)
        state.amplitudes *= -1
    predicted = grover_closed_form(n, t)
    return ForgeryAttempt(state, oracle.queries - q0, 1, predicted >= target_p, predicted)


def search_instance(n: int, seed) -> CoinScheme:
    """A coin scheme whose state has the typical overlap 2^-n with the
    uniform superposition exactly; otherwise Haar-random."""
    n = _check_n(n)
    rng = make_rng(seed)
    s = uniform_superposition(n).amplitudes
    v = rng.standard_normal(2**n) + 1j * rng.standard_normal(2**n)
    v -= np.vdot(s, v) * s
    v /= np.linalg.norm(v)
    phase = np.exp(2j * np.pi * rng.random())
    a = 2 ** (-n / 2)
    psi = a * phase * s + math.sqrt(1 - a * a) * v
    return CoinScheme(n, QuantumState(n, psi / np.linalg.norm(psi)))


def kcopy_overlap(psi: QuantumState, registers: list[QuantumState]) -> float:
    """<psi|^{(x)m} rho |psi>^{(x)m} for a product output rho."""
    return float(np.prod([fidelity(psi, r) for r in registers]))


def forge_with_coins(scheme: CoinScheme, k: int, target_p: float, seed: int) -> ForgerReport:
    """Forger holding ``k`` issued coins outputs them plus one amplified
    register; scored by the (k+1)-register overlap."""
    if k < 0:
        raise ParameterError("k must be nonnegative")
    held = [scheme.mint().state for _ in range(k)]
    oracle = scheme.oracle()
    attempt = grover_forger(oracle, scheme.n, target_p, seed)
    overlap = kcopy_overlap(scheme.psi, held + [attempt.state])
    return ForgerReport(scheme.n, k, target_p, attempt.queries, overlap, 1,
                        overlap >= target_p - 1e-12, seed)


@dataclass(frozen=True)
class ForgeBoundParams:
    n: int
    k: int
    p: float

    def __post_init__(self):
        if self.n < 1:
            raise ParameterError("n must be positive")
        if self.k < 0:
            raise ParameterError("k must be nonnegative")
        if not 0.0 < self.p <= 1.0:
            raise ParameterError("p must lie in (0, 1]")


def theoretical_bound(params: ForgeBoundParams) -> float:
    """Shape of the query lower bound sqrt(2^n p)/(k log k) - k, clipped at 0.

    The hidden constant is taken as 1. For k in {0, 1} the denominator is
    k*max(1, log2 k), and k = 0 is the plain search bound sqrt(2^n p).
    """
    root = math.sqrt(2.0**params.n * params.p)
    k = params.k
    if k == 0:
        return root
    return max(0.0, root / (k * max(1.0, math.log2(k))) - k)


@dataclass
class ScalingRow:
    n: int
    queries: int
    sqrt_ref: float
    ratio: float
    predicted_overlap: float
    simulated_overlap: float
    bound: float


def query_scaling_experiment(n_range, p: float, seed: int) -> list[ScalingRow]:
    """Amplitude-amplification forger per n, with queries / sqrt(2^n)."""
    rows = []
    for n in n_range:
        scheme = search_instance(n, derive_seed(seed, n))
        attempt = grover_forger(scheme.oracle(), n, p)
        ref = math.sqrt(2.0**n)
        rows.append(ScalingRow(
            n=n,
            queries=attempt.queries,
            sqrt_ref=ref,
            ratio=attempt.queries / ref,
            predicted_overlap=attempt.predicted_overlap,
            simulated_overlap=fidelity(attempt.state, scheme.psi),
            bound=theoretical_bound(ForgeBoundParams(n, 0, p)),
        ))
    return rows


@dataclass
class RetryStats:
    n: int
    runs: int
    tries: np.ndarray = field(repr=False)
    mean: float
    std_error: float
    chi2: float
    p_value: float
    dof: int
    failures: int


def geometric_chi_square(tries: np.ndarray, p: float, min_expected: float = 5.0):
    """Pearson chi-square of try counts against Geometric(p) on support 1, 2, ...

    Bins are single values while the expected count is at least
    ``min_expected``; everything beyond is pooled into one tail bin.
    Returns ``(statistic, p_value, dof)``.
    """
    tries = np.asarray(tries)
    total = tries.size
    edges = []
    j = 1
    while total * p * (1 - p) ** (j - 1) >= min_expected and total * (1 - p) ** j >= min_expected:
        edges.append(j)
        j += 1
    observed = [int((tries == e).sum()) for e in edges]
    expected = [total * p * (1 - p) ** (e - 1) for e in edges]
    observed.append(int((tries > (edges[-1] if edges else 0)).sum()))
    expected.append(total * (1 - p) ** (edges[-1] if edges else 0))
    if len(observed) < 2:
        raise ParameterError("too few samples for a chi-square test")
    res = stats.chisquare(observed, expected)
    return float(res.statistic), float(res.pvalue), len(observed) - 1


def retry_experiment(n: int, runs: int, seed: int, max_tries: int = 10**6) -> RetryStats:
    """Repeat the retry forger against one scheme and fit the geometric law."""
    if runs < 1:
        raise ParameterError("runs must be at least 1")
    scheme = CoinScheme(n, haar_random_state(n, seed))
    tries = np.empty(runs, dtype=np.int64)
    failures = 0
    for i in range(runs):
        attempt = retry_forger(scheme.oracle(), n, derive_seed(seed, i + 1), max_tries)
        tries[i] = attempt.tries
        failures += not attempt.succeeded
    chi2, pval, dof = geometric_chi_square(tries, 2.0**-n)
    return RetryStats(
        n=n, runs=runs, tries=tries, mean=float(tries.mean()),
        std_error=float(tries.std(ddof=1) / math.sqrt(runs)) if runs > 1 else float("nan"),
        chi2=chi2, p_value=pval, dof=dof, failures=failures,
    )


# --- BB84-style coins ------------------------------------------------------

COMPUTATIONAL, HADAMARD = 0, 1


@dataclass(frozen=True)
class BB84CoinSpec:
    n: int
    bits: tuple
    bases: tuple

    def __post_init__(self):
        if len(self.bits) != self.n or len(self.bases) != self.n:
            raise ParameterError("bits and bases must both have length n")
        if any(b not in (0, 1) for b in self.bits + self.bases):
            raise ParameterError("bits and bases must be 0/1 valued")


def random_bb84_spec(n: int, seed) -> BB84CoinSpec:
    rng = make_rng(seed)
    return BB84CoinSpec(n, tuple(int(b) for b in rng.integers(2, size=n)),
                        tuple(int(b) for b in rng.integers(2, size=n)))


def bb84_coin(spec: BB84CoinSpec) -> QuantumState:
    index = int("".join(map(str, spec.bits)), 2)
    state = QuantumState.basis(spec.n, index)
    for q, basis in enumerate(spec.bases):
        if basis == HADAMARD:
            apply_hadamard(state, q)
    return state


def _measure_in_bases(state: QuantumState, bases, rng) -> list[int]:
    state = state.copy()
    for q, basis in enumerate(bases):
        if basis == HADAMARD:
            apply_hadamard(state, q)
    return [measure_qubit(state, q, rng)[0] for q in range(state.n)]


def bb84_verify(spec: BB84CoinSpec, state: QuantumState, seed) -> bool:
    """Honest verifier: measure every qubit in its secret basis, compare bits."""
    return _measure_in_bases(state, spec.bases, make_rng(seed)) == list(spec.bits)


def bb84_split(copies: int, split: str) -> int:
    """Number of copies measured in the computational basis."""
    if copies < 2:
        raise ParameterError("the attack needs at least 2 copies")
    if split == "skewed":
        return copies - 1
    if split == "balanced":
        return math.ceil(copies / 2)
    raise ParameterError(f"unknown split {split!r}; expected 'skewed' or 'balanced'")


def decide_basis(comp_record, had_record) -> int:
    """Basis guess for one qubit position from its two measurement records.

    A record in the true basis is always constant. If both are constant
    the basis with the longer record wins (the other one being constant by
    chance is then less likely); ties go to the computational basis.
    """
    comp_const = len(set(comp_record)) <= 1
    had_const = len(set(had_record)) <= 1
    if comp_const and not had_const:
        return COMPUTATIONAL
    if had_const and not comp_const:
        return HADAMARD
    return COMPUTATIONAL if len(comp_record) >= len(had_record) else HADAMARD


def recover_bb84(coins: list[QuantumState], seed, split: str = "skewed") -> BB84CoinSpec:
    """Adversary: measure the copies in both bases and read off the spec."""
    k = len(coins)
    j = bb84_split(k, split)
    rng = make_rng(seed)
    n = coins[0].n
    comp = [_measure_in_bases(c, [COMPUTATIONAL] * n, rng) for c in coins[:j]]
    had = [_measure_in_bases(c, [HADAMARD] * n, rng) for c in coins[j:]]
    bits, bases = [], []
    for q in range(n):
        comp_rec = [r[q] for r in comp]
        had_rec = [r[q] for r in had]
        basis = decide_basis(comp_rec, had_rec)
        bases.append(basis)
        bits.append((comp_rec if basis == COMPUTATIONAL else had_rec)[0])
    return BB84CoinSpec(n, tuple(bits), tuple(bases))


@dataclass
class BB84AttackReport:
    recovered: BB84CoinSpec
    success: bool
    forged_pass_rate: float
    basis_errors: int
    bit_errors: int


def bb84_attack(spec: BB84CoinSpec, copies: int, seed: int, forged: int = 32,
                split: str = "skewed") -> BB84AttackReport:
    """Hand ``copies`` coins to the adversary, let it recover the spec, and
    check how its forged coins fare against the honest verifier."""
    rng = make_rng(seed)
    coins = [bb84_coin(spec) for _ in range(copies)]
    guess = recover_bb84(coins, rng, split)
    forged_coin = bb84_coin(guess)
    passes = sum(bb84_verify(spec, forged_coin, rng) for _ in range(forged))
    basis_errors = sum(a != b for a, b in zip(guess.bases, spec.bases))
    bit_errors = sum(a != b for a, b in zip(guess.bits, spec.bits))
    return BB84AttackReport(guess, guess == spec, passes / forged, basis_errors, bit_errors)
