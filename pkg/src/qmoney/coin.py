"""
Quantum coins: every coin of a denomination is the same secret Haar-random
state psi, checked with a one-ancilla phase-kickback circuit around the
reflection oracle U = I - 2|psi><psi|.

Accept convention: ancilla outcome 1 means accept. With the ancilla
prepared as H|0>, the controlled-U and a second H, the ancilla reads 1
exactly on the |psi> component and 0 on its orthogonal complement. (A
generic verifier that outputs 0 for valid tokens is the same circuit with
the ancilla bit relabelled.)
"""
from __future__ import annotations

import struct
import threading
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import IssuanceCapError, ParameterError
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
    perturb,
)


def default_poly_cap(n: int) -> int:
    return n**3


class VerificationOracle:
    """Black-box handle on the controlled reflection about the coin state.

    The coin state lives only inside a closure; the handle exposes the
    reflection and a query counter and nothing else.
    """

    __slots__ = ("_reflect", "n", "queries")

    def __init__(self, psi: QuantumState):
        vec = psi.amplitudes.copy()
        vec.setflags(write=False)

        def reflect(state, control, targets):
            apply_controlled_reflection(state, control, targets, vec)

        self._reflect: Callable = reflect
        self.n = psi.n
        self.queries = 0

    def apply(self, state: QuantumState, control: int | None, targets) -> QuantumState:
        """Controlled (or, with ``control=None``, bare) reflection; one query."""
        self.queries += 1
        self._reflect(state, control, targets)
        return state

    def __repr__(self):
        return f"VerificationOracle(n={self.n}, queries={self.queries})"


@dataclass(eq=False)
class Coin:
    state: QuantumState
    provenance: str = field(default="", repr=False)


@dataclass(eq=False)
class CoinScheme:
    """The bank's secret: qubit count, coin state and issuance counter."""

    n: int
    psi: QuantumState = field(repr=False)
    issued_count: int = 0
    poly_cap: int | None = None

    def __post_init__(self):
        if self.psi.n != self.n:
            raise ParameterError(f"coin state has {self.psi.n} qubits, scheme says {self.n}")
        if self.poly_cap is None:
            self.poly_cap = default_poly_cap(self.n)
        if self.poly_cap < 0 or self.issued_count < 0:
            raise ParameterError("issuance cap and count must be nonnegative")
        self._lock = threading.Lock()

    def oracle(self) -> VerificationOracle:
        """A fresh oracle handle with its own query counter."""
        return VerificationOracle(self.psi)

    def mint(self) -> Coin:
        with self._lock:
            if self.issued_count >= self.poly_cap:
                raise IssuanceCapError(
                    f"issuance cap of {self.poly_cap} coins reached for n={self.n}"
                )
            self.issued_count += 1
            serial = self.issued_count
        return Coin(self.psi.copy(), provenance=f"bank:mint:{serial}")


def new_scheme(n: int, seed, poly_cap: int | None = None) -> CoinScheme:
    n = _check_n(n)
    return CoinScheme(n, haar_random_state(n, seed), poly_cap=poly_cap)


def mint(scheme: CoinScheme) -> Coin:
    return scheme.mint()


@dataclass
class VerifyResult:
    accepted: bool
    post_state: QuantumState
    ancilla_outcome: int


def _kickback(oracle: VerificationOracle, coin_state: QuantumState) -> QuantumState:
    # ancilla (qubit 0) through H, controlled-U, H; measurement left to the caller
    if coin_state.n != oracle.n:
        raise ParameterError(f"coin has {coin_state.n} qubits, oracle expects {oracle.n}")
    reg = QuantumState.basis(1, 0).tensor(coin_state)
    apply_hadamard(reg, 0)
    oracle.apply(reg, 0, range(1, reg.n))
    apply_hadamard(reg, 0)
    return reg


def verify(oracle: VerificationOracle, coin_state: QuantumState, seed) -> VerifyResult:
    """Run the verification circuit once and measure the ancilla."""
    reg = _kickback(oracle, coin_state)
    bit, reg = measure_qubit(reg, 0, seed)
    post = QuantumState(coin_state.n, reg.amplitudes.reshape(2, -1)[bit].copy())
    return VerifyResult(accepted=bit == 1, post_state=post, ancilla_outcome=bit)


def sample_verify(oracle: VerificationOracle, coin_state: QuantumState, shots: int, seed):
    """Many measurement shots of one circuit evaluation.

    Returns ``(accept_count, accept_branch, reject_branch)``; a branch is
    None when it has zero probability.
    """
    if shots < 1:
        raise ParameterError("shots must be positive")
    reg = _kickback(oracle, coin_state)
    halves = reg.amplitudes.reshape(2, -1)
    p_accept = float(np.vdot(halves[1], halves[1]).real)
    accepts = int((make_rng(seed).random(shots) < p_accept).sum())
    branches = []
    for bit in (1, 0):
        norm = np.linalg.norm(halves[bit])
        branches.append(None if norm < 1e-12 else QuantumState(coin_state.n, halves[bit] / norm))
    return accepts, branches[0], branches[1]


def verify_analytic(scheme: CoinScheme, state: QuantumState):
    """Projector cross-check of the circuit.

    Returns ``(accept_probability, post_accept_state, post_reject_state)``
    where a branch of vanishing weight is reported as None.
    """
    if state.n != scheme.n:
        raise ParameterError(f"state has {state.n} qubits, scheme has {scheme.n}")
    psi = scheme.psi.amplitudes
    amp = np.vdot(psi, state.amplitudes)
    p = float(min(1.0, abs(amp) ** 2))
    accept = scheme.psi.copy() if p > 1e-12 else None
    rest = state.amplitudes - amp * psi
    norm = np.linalg.norm(rest)
    reject = QuantumState(state.n, rest / norm) if norm > 1e-6 else None
    return p, accept, reject


@dataclass
class ChainReport:
    accepted: list[bool]
    final_fidelity: float

    @property
    def accept_count(self) -> int:
        return sum(self.accepted)


def transfer_chain(scheme: CoinScheme, coin: Coin, rounds: int, seed) -> ChainReport:
    """Verify the same coin ``rounds`` times, passing the post-state along."""
    if rounds < 1:
        raise ParameterError("rounds must be at least 1")
    oracle = scheme.oracle()
    rng = make_rng(seed)
    state = coin.state
    accepted = []
    for _ in range(rounds):
        result = verify(oracle, state, rng)
        accepted.append(result.accepted)
        state = result.post_state
    coin.state = state
    return ChainReport(accepted, fidelity(state, scheme.psi))


@dataclass
class RobustnessReport:
    epsilon: float
    trials: int
    passes: int
    pass_rate: float
    mean_post_fidelity_given_pass: float | None
    min_post_fidelity_given_pass: float | None = None


def robustness_experiment(scheme: CoinScheme, epsilon: float, trials: int, seed: int) -> RobustnessReport:
    """Perturb a freshly minted coin, verify once, record pass and post-fidelity."""
    if trials < 1:
        raise ParameterError("trials must be at least 1")
    if scheme.issued_count + trials > scheme.poly_cap:
        raise IssuanceCapError(
            f"{trials} trials need {trials} fresh coins; cap allows {scheme.poly_cap - scheme.issued_count}"
        )
    oracle = scheme.oracle()
    passes = 0
    fid_sum = 0.0
    fid_min = None
    for i in range(trials):
        rng = make_rng(derive_seed(seed, i + 1))
        coin = scheme.mint()
        noisy = perturb(coin.state, epsilon, rng)
        result = verify(oracle, noisy, rng)
        if result.accepted:
            passes += 1
            f = fidelity(result.post_state, scheme.psi)
            fid_sum += f
            fid_min = f if fid_min is None else min(fid_min, f)
    return RobustnessReport(
        epsilon=epsilon,
        trials=trials,
        passes=passes,
        pass_rate=passes / trials,
        mean_post_fidelity_given_pass=fid_sum / passes if passes else None,
        min_post_fidelity_given_pass=fid_min,
    )


@dataclass
class AnonymityReport:
    honest: bool
    users: int
    n: int
    trials: int
    correct: int
    strategy: str

    @property
    def accuracy(self) -> float:
        return self.correct / self.trials


def _orthonormal_marks(n: int, users: int, rng) -> np.ndarray:
    g = rng.standard_normal((2**n, users)) + 1j * rng.standard_normal((2**n, users))
    q, _ = np.linalg.qr(g)
    return q.T.copy()


def _mark_basis(marks: np.ndarray):
    """Orthonormal basis for the distinct issued states, with the user groups
    that map to each basis vector. Distinct marks are assumed orthogonal or
    identical, which covers both bank behaviours simulated here."""
    basis, groups = [], []
    for user, mark in enumerate(marks):
        for idx, b in enumerate(basis):
            if abs(abs(np.vdot(b, mark)) - 1.0) < 1e-9:
                groups[idx].append(user)
                break
        else:
            basis.append(mark)
            groups.append([user])
    return np.array(basis), groups


def relaxed_accept_probability(marks: np.ndarray, state: QuantumState) -> float:
    """Acceptance probability of a verifier that projects onto span(marks)."""
    amps = marks.conj() @ state.amplitudes
    return float(min(1.0, np.vdot(amps, amps).real))


def anonymity_experiment(
    honest: bool, users: int, seed: int, n: int = 3, trials: int = 10_000
) -> AnonymityReport:
    """Can the bank tell which user spent a coin?

    Each trial: every user withdraws one coin, a uniformly random user spends
    it, and the bank measures the spent coin in the basis of the distinct
    states it issued, guessing uniformly among users whose issued state
    matches the outcome. An honest bank issues psi to everyone; a cheating
    bank gives each user a distinct orthogonal state, all of which pass a
    verifier relaxed to accept their span.
    """
    n = _check_n(n)
    if users < 2:
        raise ParameterError("anonymity needs at least 2 users")
    if trials < 1:
        raise ParameterError("trials must be at least 1")
    if not honest and users > 2**n:
        raise ParameterError(f"cannot give {users} users orthogonal marks in {n} qubits")
    correct = 0
    for i in range(trials):
        rng = make_rng(derive_seed(seed, i + 1))
        if honest:
            scheme = CoinScheme(n, haar_random_state(n, rng), poly_cap=users)
            marks = np.array([scheme.mint().state.amplitudes for _ in range(users)])
        else:
            marks = _orthonormal_marks(n, users, rng)
        spender = int(rng.integers(users))
        spent = marks[spender]
        basis, groups = _mark_basis(marks)
        probs = np.abs(basis.conj() @ spent) ** 2
        probs = np.append(probs, max(0.0, 1.0 - probs.sum()))
        outcome = int(rng.choice(len(probs), p=probs / probs.sum()))
        candidates = groups[outcome] if outcome < len(groups) else list(range(users))
        guess = candidates[int(rng.integers(len(candidates)))]
        correct += guess == spender
    strategy = (
        "measure in basis of distinct issued states; guess uniformly within the matching group"
    )
    return AnonymityReport(honest, users, n, trials, correct, strategy)


_SCHEME_HEADER = struct.Struct("<4s6sHHQQ")
_SCHEME_MAGIC, _SECRET_MARK, _SCHEME_VERSION = b"QMSC", b"SECRET", 1


def scheme_to_bytes(scheme: CoinScheme) -> bytes:
    """Scheme fixture: header (magic, SECRET marker, version, n, cap, issued) + psi."""
    head = _SCHEME_HEADER.pack(_SCHEME_MAGIC, _SECRET_MARK, _SCHEME_VERSION, scheme.n,
                               scheme.poly_cap, scheme.issued_count)
    return head + scheme.psi.to_bytes()


def scheme_from_bytes(data: bytes) -> CoinScheme:
    if len(data) < _SCHEME_HEADER.size:
        raise ParameterError("truncated scheme fixture")
    magic, mark, version, n, cap, issued = _SCHEME_HEADER.unpack_from(data)
    if magic != _SCHEME_MAGIC or mark != _SECRET_MARK:
        raise ParameterError("not a coin scheme fixture")
    if version != _SCHEME_VERSION:
        raise ParameterError(f"unsupported scheme fixture version {version}")
    psi = QuantumState.from_bytes(data[_SCHEME_HEADER.size:])
    return CoinScheme(n, psi, issued_count=issued, poly_cap=cap)
