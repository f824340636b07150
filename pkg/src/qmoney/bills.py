"""
Quantum bills from eigenstates of a hidden group shift.

The group is Z_M (M = m * cofactor) written additively, with generator
a = cofactor of order m and a base point b. A keyed random injection r
sends group elements to w-qubit basis labels. The published circuit maps
|y>|r(g)> -> |y>|r(g + y*a)>; its eigenstates on the orbit of b are

    |psi_k> = m^-1/2 * sum_x exp(-2 pi i k x / m) |r(b + x*a)>

with eigenvalue exp(2 pi i k / m). The bank mints a bill by phase
estimation started from |r(b)>, which collapses onto a uniformly random
|psi_k> and reveals k; a verifier re-runs the estimation and compares.

The labeling is not a cryptographic primitive. Its key is only withheld
from forger code paths; nothing stops a determined caller from reading it.

Exact mode (the default) needs m | 2^t so every estimate is an integer
multiple of 2^t/m and verification of a genuine bill is deterministic. With
``exact=False`` any m is allowed and a claimed k is accepted when the
estimated phase is within 1/2^(t+1) of k/m (circularly).
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, UndefinedLabelError
from .qstate import QuantumState, apply_hadamard, derive_seed, haar_random_state, make_rng, measure_qubit

_SUPPORT_TOL = 1e-24


@dataclass(eq=False)
class BillScheme:
    m: int
    t: int
    group_order: int
    gen_a: int
    base_b: int
    w: int
    exact: bool = True
    valid_list: list[int] = field(default_factory=list)
    _label_key: int = field(default=0, repr=False)

    def __post_init__(self):
        if self.m < 2:
            raise ParameterError("group order m must be at least 2")
        if self.t < 1:
            raise ParameterError("precision width t must be positive")
        if self.exact and (2**self.t) % self.m:
            raise ParameterError(f"exact mode needs m | 2^t; m={self.m}, t={self.t}")
        if self.group_order % self.m or math.gcd(self.gen_a, self.group_order) * self.m != self.group_order:
            raise ParameterError("generator does not have order m in Z_M")
        if 2**self.w < self.group_order:
            raise ParameterError("label width too small to embed the group injectively")
        perm = np.random.default_rng(self._label_key).permutation(2**self.w)
        self._labels = perm[: self.group_order]
        self._element_of = {int(lab): g for g, lab in enumerate(self._labels)}
        self._lock = threading.Lock()
        shifts = np.empty((self.m, 2**self.w), dtype=np.int64)
        identity = np.arange(2**self.w)
        for y in range(self.m):
            p = identity.copy()
            p[self._labels] = self._labels[(np.arange(self.group_order) + y * self.gen_a) % self.group_order]
            shifts[y] = p
        # shifts[y][label] is the image label; undefined labels map to themselves
        self._shifts = shifts
        self._defined = np.zeros(2**self.w, dtype=bool)
        self._defined[self._labels] = True

    def r(self, g: int) -> int:
        return int(self._labels[g % self.group_order])

    def orbit(self) -> list[int]:
        return [self.r(self.base_b + x * self.gen_a) for x in range(self.m)]

    def publish(self, k: int):
        with self._lock:
            self.valid_list.append(int(k))

    def export_valid_list(self) -> str:
        return "".join(f"{k}\n" for k in sorted(self.valid_list))


def new_bill_scheme(m: int, t: int, seed: int, cofactor: int = 2, slack: int = 2,
                    exact: bool = True) -> BillScheme:
    """Set up G = Z_(m*cofactor), a = cofactor, random b and a keyed labeling."""
    if cofactor < 1:
        raise ParameterError("cofactor must be positive")
    rng = make_rng(seed)
    group_order = m * cofactor
    w = max(math.ceil(math.log2(m)) + slack, math.ceil(math.log2(group_order)))
    base_b = int(rng.integers(group_order))
    key = int(rng.integers(2**63))
    return BillScheme(m=m, t=t, group_order=group_order, gen_a=cofactor, base_b=base_b,
                      w=w, exact=exact, _label_key=key)


@dataclass(eq=False)
class Bill:
    k: int
    state: QuantumState


def eigenstate(scheme: BillScheme, k: int) -> QuantumState:
    """|psi_k> built directly from its defining sum."""
    amps = np.zeros(2**scheme.w, dtype=np.complex128)
    for x, label in enumerate(scheme.orbit()):
        amps[label] = np.exp(-2j * np.pi * k * x / scheme.m)
    return QuantumState(scheme.w, amps / math.sqrt(scheme.m))


def _check_support(scheme: BillScheme, block: np.ndarray):
    weight = (np.abs(block[..., ~scheme._defined]) ** 2).sum()
    if weight > _SUPPORT_TOL:
        raise UndefinedLabelError(f"label register has weight {weight:.3g} outside the group image")


def shift_labels(scheme: BillScheme, label_state: QuantumState, y: int) -> QuantumState:
    """|r(g)> -> |r(g + y*a)> on a label register, for classical y."""
    if label_state.n != scheme.w:
        raise ParameterError(f"label register must have {scheme.w} qubits")
    _check_support(scheme, label_state.amplitudes)
    out = np.empty_like(label_state.amplitudes)
    out[scheme._shifts[y % scheme.m]] = label_state.amplitudes
    return QuantumState(scheme.w, out)


def group_shift(scheme: BillScheme, state: QuantumState, y_width: int) -> QuantumState:
    """Controlled shift |y>|r(g)> -> |y>|r(g + y*a)> on a joint register.

    The leading ``y_width`` qubits hold y; the trailing ``w`` qubits hold
    the label. Acts in place.
    """
    if state.n != y_width + scheme.w:
        raise ParameterError(f"joint register must have {y_width} + {scheme.w} qubits")
    block = state.amplitudes.reshape(2**y_width, 2**scheme.w)
    _check_support(scheme, block)
    out = np.empty_like(block)
    for y in range(2**y_width):
        out[y, scheme._shifts[y % scheme.m]] = block[y]
    block[:] = out
    return state


def _inverse_qft_leading(state: QuantumState, width: int):
    block = state.amplitudes.reshape(2**width, -1)
    block[:] = np.fft.fft(block, axis=0, norm="ortho")


def phase_estimate(scheme: BillScheme, label_state: QuantumState, seed):
    """Phase estimation over the group shift with t precision qubits.

    Returns ``(y, post_label_state)`` where y/2^t estimates the eigenphase.
    """
    rng = make_rng(seed)
    t = scheme.t
    joint = QuantumState.basis(t, 0).tensor(label_state)
    for q in range(t):
        apply_hadamard(joint, q)
    group_shift(scheme, joint, t)
    _inverse_qft_leading(joint, t)
    y = 0
    for q in range(t):
        bit, joint = measure_qubit(joint, q, rng)
        y = (y << 1) | bit
    post = joint.amplitudes.reshape(2**t, -1)[y].copy()
    return y, QuantumState(scheme.w, post / np.linalg.norm(post))


def estimate_to_k(scheme: BillScheme, y: int) -> int:
    return round(y * scheme.m / 2**scheme.t) % scheme.m


def _matches(scheme: BillScheme, y: int, k: int) -> bool:
    if scheme.exact:
        return y * scheme.m == k * 2**scheme.t
    diff = (y / 2**scheme.t - k / scheme.m) % 1.0
    return min(diff, 1.0 - diff) <= 1 / 2 ** (scheme.t + 1)


def mint_bill(scheme: BillScheme, seed) -> Bill:
    """Phase-estimate from |r(b)>, publish the measured k, return the bill."""
    start = QuantumState.basis(scheme.w, scheme.r(scheme.base_b))
    y, post = phase_estimate(scheme, start, seed)
    k = estimate_to_k(scheme, y)
    scheme.publish(k)
    return Bill(k, post)


def _label_validity(scheme: BillScheme, state: QuantumState, rng):
    # projective check that the label register lies in the span of group labels
    amps = state.amplitudes
    inside = np.where(scheme._defined, amps, 0)
    p_in = float(np.vdot(inside, inside).real)
    if rng.random() < p_in:
        return True, QuantumState(state.n, inside / math.sqrt(p_in))
    outside = amps - inside
    return False, QuantumState(state.n, outside / np.linalg.norm(outside))


def verify_bill(scheme: BillScheme, bill: Bill, seed):
    """Re-estimate the eigenphase and compare with the bill's k.

    Accepts iff the estimate matches k and k is on the published list.
    Returns ``(accepted, post_bill)``.
    """
    if not 0 <= bill.k < scheme.m:
        raise ParameterError(f"bill parameter {bill.k} outside [0, {scheme.m})")
    if bill.state.n != scheme.w:
        raise ParameterError(f"bill state must have {scheme.w} qubits")
    rng = make_rng(seed)
    valid, state = _label_validity(scheme, bill.state, rng)
    if not valid:
        return False, Bill(bill.k, state)
    y, post = phase_estimate(scheme, state, rng)
    accepted = _matches(scheme, y, bill.k) and bill.k in scheme.valid_list
    return accepted, Bill(bill.k, post)


class BillVerifier:
    """Public face of a bill scheme: verification and the published list."""

    __slots__ = ("_verify", "m", "t", "w", "exact", "_valid")

    def __init__(self, scheme: BillScheme):
        self._verify = lambda bill, seed: verify_bill(scheme, bill, seed)
        self._valid = scheme.valid_list
        self.m, self.t, self.w, self.exact = scheme.m, scheme.t, scheme.w, scheme.exact

    @property
    def valid_list(self) -> tuple[int, ...]:
        return tuple(self._valid)

    def verify(self, bill: Bill, seed):
        return self._verify(bill, seed)


@dataclass
class BillForgeReport:
    target_k: int
    trials: int
    passes: int

    @property
    def pass_rate(self) -> float:
        return self.passes / self.trials


def forge_bill_attempt(verifier: BillVerifier, target_k: int, trials: int, seed: int,
                       submission=None) -> BillForgeReport:
    """Submit states claiming parameter ``target_k`` and count passes.

    ``submission`` is a fixed QuantumState or a callable ``rng -> QuantumState``;
    by default each trial submits a fresh Haar-random label-register state.
    """
    if trials < 1:
        raise ParameterError("trials must be at least 1")
    passes = 0
    for i in range(trials):
        rng = make_rng(derive_seed(seed, i + 1))
        if submission is None:
            state = haar_random_state(verifier.w, rng)
        elif callable(submission):
            state = submission(rng)
        else:
            state = submission.copy()
        accepted, _ = verifier.verify(Bill(target_k, state), rng)
        passes += accepted
    return BillForgeReport(target_k, trials, passes)


def bill_to_bytes(bill: Bill) -> bytes:
    return int(bill.k).to_bytes(4, "little") + bill.state.to_bytes()


def bill_from_bytes(data: bytes) -> Bill:
    if len(data) < 4:
        raise ParameterError("truncated bill fixture")
    return Bill(int.from_bytes(data[:4], "little"), QuantumState.from_bytes(data[4:]))


def parse_valid_list(text: str) -> list[int]:
    return [int(line) for line in text.splitlines() if line.strip()]
