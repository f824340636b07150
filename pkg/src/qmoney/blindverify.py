"""
Bank/merchant verification protocols over an in-memory channel.

Two flows are simulated:

* online: the merchant ships the coin register to the bank, which runs the
  full verification circuit and ships the register back with the verdict.
  Quantum messages stand in for teleportation; entanglement is not modelled.
* blind-assisted: the merchant hides the coin under a quantum one-time pad
  before it leaves, the verification measurement is evaluated on the padded
  register (conjugated by the pad announced in the classical key-update
  messages), and the bank's own quantum work is a final layer of at most
  one X and one Z per coin qubit. The merchant strips both pads and ends up
  holding the verified coin.

This reproduces the communication and workload contract of delegated
verification (interleaved classical messages, one quantum exchange each
way, per-qubit X/Z final corrections). It is not a measurement-based blind
computation: the hiding it provides is that of the one-time pad on every
quantum payload, which :func:`blindness_check` verifies exactly.
"""
from __future__ import annotations

import hashlib
import itertools
from dataclasses import dataclass, field

import numpy as np

from .coin import Coin, CoinScheme, VerificationOracle, verify
from .errors import BudgetViolationError, ChannelFailure, ParameterError
from .qstate import (
    DensityMatrix,
    QuantumState,
    apply_pauli,
    make_rng,
    state_to_density,
    trace_distance,
)

BANK_TO_MERCHANT = "bank->merchant"
MERCHANT_TO_BANK = "merchant->bank"
CLASSICAL, QUANTUM = "classical", "quantum"


@dataclass(frozen=True)
class PadKeys:
    x_bits: tuple
    z_bits: tuple

    def __post_init__(self):
        if len(self.x_bits) != len(self.z_bits):
            raise ParameterError("x and z key strings differ in length")

    @property
    def n(self) -> int:
        return len(self.x_bits)


def random_pad(n: int, rng) -> PadKeys:
    bits = rng.integers(2, size=(2, n))
    return PadKeys(tuple(int(b) for b in bits[0]), tuple(int(b) for b in bits[1]))


def all_pads(n: int):
    for x in itertools.product((0, 1), repeat=n):
        for z in itertools.product((0, 1), repeat=n):
            yield PadKeys(x, z)


def _check_keys(state: QuantumState, keys: PadKeys):
    if keys.n != state.n:
        raise ParameterError(f"pad has {keys.n} key pairs for a {state.n}-qubit state")


def qotp_encrypt(state: QuantumState, keys: PadKeys) -> QuantumState:
    """X^x Z^z on every qubit (Z first). Returns a new state."""
    _check_keys(state, keys)
    out = state.copy()
    for q, (x, z) in enumerate(zip(keys.x_bits, keys.z_bits)):
        if z:
            apply_pauli(out, q, "Z")
        if x:
            apply_pauli(out, q, "X")
    return out


def qotp_decrypt(state: QuantumState, keys: PadKeys) -> QuantumState:
    _check_keys(state, keys)
    out = state.copy()
    for q, (x, z) in enumerate(zip(keys.x_bits, keys.z_bits)):
        if x:
            apply_pauli(out, q, "X")
        if z:
            apply_pauli(out, q, "Z")
    return out


def verification_gate_count(n: int) -> int:
    """Gate count of the full verification circuit on n coin qubits.

    Counting convention: two ancilla Hadamards, plus the controlled
    reflection written as W^dag . C(zero-reflection) . W, where W prepares the
    coin state with 2^n - 1 rotations (one per node of the amplitude tree),
    and the zero-reflection is one multi-controlled Z conjugated by X on
    each of the n coin qubits.
    """
    return 2 + 2 * (2**n - 1) + 2 * n + 1


@dataclass
class Message:
    direction: str
    kind: str
    payload: object
    step_label: str

    def __post_init__(self):
        if self.kind == QUANTUM and not isinstance(self.payload, QuantumState):
            raise ParameterError("quantum message must carry a QuantumState")

    def digest(self) -> str:
        if self.kind == QUANTUM:
            data = self.payload.to_bytes()
        else:
            data = repr(self.payload).encode()
        return hashlib.sha256(data).hexdigest()[:16]


@dataclass
class GateCount:
    x_gates: int = 0
    z_gates: int = 0
    other_gates: int = 0

    def as_tuple(self):
        return (self.x_gates, self.z_gates, self.other_gates)


@dataclass
class Transcript:
    flow: str
    seed: int
    messages: list[Message] = field(default_factory=list)
    bank_gate_count: GateCount = field(default_factory=GateCount)
    delegated_ops: int = 0
    anonymous: bool = False
    _gate_trace: list[tuple] = field(default_factory=list, repr=False)

    def append(self, message: Message):
        self.messages.append(message)
        self._gate_trace.append(self.bank_gate_count.as_tuple())

    def quantum_messages(self) -> list[Message]:
        return [m for m in self.messages if m.kind == QUANTUM]

    def to_lines(self) -> list[str]:
        lines = [f"# flow={self.flow} seed={self.seed} anonymous={int(self.anonymous)}"]
        for msg, gates in zip(self.messages, self._gate_trace):
            direction = "anon" if self.anonymous and msg.direction == MERCHANT_TO_BANK else msg.direction
            lines.append("\t".join([msg.step_label, direction, msg.kind, msg.digest(),
                                    ",".join(map(str, gates))]))
        g = self.bank_gate_count
        lines.append(f"# bank_gates x={g.x_gates} z={g.z_gates} other={g.other_gates} "
                     f"delegated={self.delegated_ops}")
        return lines

    def serialize(self) -> str:
        return "".join(line + "\n" for line in self.to_lines())


class Channel:
    """Ordered, lossless in-memory channel with optional injected failure."""

    def __init__(self, fail_at: str | None = None):
        self.fail_at = fail_at
        self.transcript: Transcript | None = None

    def open(self, transcript: Transcript):
        self.transcript = transcript

    def send(self, direction: str, kind: str, payload, step_label: str):
        if self.fail_at is not None and step_label == self.fail_at:
            raise ChannelFailure(f"channel failed at step {step_label!r}")
        msg = Message(direction, kind, payload.copy() if kind == QUANTUM else payload, step_label)
        self.transcript.append(msg)
        return msg.payload


class Bank:
    def __init__(self, scheme: CoinScheme):
        self._scheme = scheme
        self._final_step = None
        self._transcript = None

    @property
    def n(self) -> int:
        return self._scheme.n

    def oracle(self) -> VerificationOracle:
        return self._scheme.oracle()

    def padded_oracle(self, keys: PadKeys) -> VerificationOracle:
        """Oracle for the coin state conjugated by the announced pad."""
        return VerificationOracle(qotp_encrypt(self._scheme.psi, keys))

    def begin(self, transcript: Transcript):
        self._transcript = transcript
        self._final_step = [0, 0]

    def apply_final_corrections(self, state: QuantumState, keys: PadKeys) -> QuantumState:
        """The bank's last quantum step: per-qubit X^x Z^z, budget (n, n) per run."""
        xs, zs = sum(keys.x_bits), sum(keys.z_bits)
        if self._final_step[0] + xs > self.n or self._final_step[1] + zs > self.n:
            raise BudgetViolationError(
                f"final-step corrections would reach ({self._final_step[0] + xs}, "
                f"{self._final_step[1] + zs}) gates; budget is ({self.n}, {self.n})"
            )
        self._final_step[0] += xs
        self._final_step[1] += zs
        gates = self._transcript.bank_gate_count
        gates.x_gates += xs
        gates.z_gates += zs
        return qotp_encrypt(state, keys)


class Merchant:
    def __init__(self, coin: Coin):
        self.coin = coin


@dataclass
class ProtocolResult:
    accepted: bool | None
    coin: QuantumState | None
    transcript: Transcript
    aborted: bool = False
    reason: str = ""


def _streams(seed: int):
    measure, pad, correction = np.random.SeedSequence(seed).spawn(3)
    return (np.random.default_rng(measure), np.random.default_rng(pad),
            np.random.default_rng(correction))


def run_online_verification(bank: Bank, merchant: Merchant, channel: Channel, seed: int,
                            anonymous: bool = False) -> ProtocolResult:
    """Ship the coin to the bank, verify there, ship it back."""
    make_rng(seed)  # validates the seed
    transcript = Transcript("online", seed, anonymous=anonymous)
    channel.open(transcript)
    bank.begin(transcript)
    measure_rng, _, _ = _streams(seed)
    try:
        received = channel.send(MERCHANT_TO_BANK, QUANTUM, merchant.coin.state, "upload-coin")
        result = verify(bank.oracle(), received, measure_rng)
        transcript.bank_gate_count.other_gates += verification_gate_count(bank.n)
        returned = channel.send(BANK_TO_MERCHANT, QUANTUM, result.post_state, "return-coin")
        verdict = channel.send(BANK_TO_MERCHANT, CLASSICAL, int(result.accepted), "verdict")
    except ChannelFailure as exc:
        return ProtocolResult(None, merchant.coin.state, transcript, aborted=True, reason=str(exc))
    merchant.coin.state = returned
    return ProtocolResult(bool(verdict), returned, transcript)


def run_blind_verification(bank: Bank, merchant: Merchant, channel: Channel, seed: int,
                           keys: PadKeys | None = None, anonymous: bool = False) -> ProtocolResult:
    """Pad-based assisted verification; the bank only applies final X/Z corrections.

    Steps (labels as they appear in the transcript):
      upload-padded-coin   merchant pads the coin and sends it (quantum)
      key-update[i]        merchant announces pad bits for qubit i (classical)
      delegated-verify     verification measurement on the padded register
      return-padded-coin   bank applies its correction layer and returns (quantum)
      correction-keys      bank announces its correction bits (classical)
      verdict              accept bit (classical)
    ``keys`` forces the merchant's pad, which the blindness check uses to
    enumerate every pad.
    """
    make_rng(seed)  # validates the seed
    transcript = Transcript("blind", seed, anonymous=anonymous)
    channel.open(transcript)
    bank.begin(transcript)
    measure_rng, pad_rng, correction_rng = _streams(seed)
    n = bank.n
    pad = keys if keys is not None else random_pad(n, pad_rng)
    try:
        padded = qotp_encrypt(merchant.coin.state, pad)
        received = channel.send(MERCHANT_TO_BANK, QUANTUM, padded, "upload-padded-coin")
        announced_x, announced_z = [], []
        for i in range(n):
            bits = channel.send(MERCHANT_TO_BANK, CLASSICAL, (pad.x_bits[i], pad.z_bits[i]),
                                f"key-update[{i}]")
            announced_x.append(bits[0])
            announced_z.append(bits[1])
        announced = PadKeys(tuple(announced_x), tuple(announced_z))
        result = verify(bank.padded_oracle(announced), received, measure_rng)
        transcript.delegated_ops += verification_gate_count(n)
        channel.send(BANK_TO_MERCHANT, CLASSICAL, "measurement-done", "delegated-verify")
        correction = random_pad(n, correction_rng)
        corrected = bank.apply_final_corrections(result.post_state, correction)
        returned = channel.send(BANK_TO_MERCHANT, QUANTUM, corrected, "return-padded-coin")
        corr = channel.send(BANK_TO_MERCHANT, CLASSICAL, (correction.x_bits, correction.z_bits),
                            "correction-keys")
        verdict = channel.send(BANK_TO_MERCHANT, CLASSICAL, int(result.accepted), "verdict")
    except ChannelFailure as exc:
        return ProtocolResult(None, merchant.coin.state, transcript, aborted=True, reason=str(exc))
    unpadded = qotp_decrypt(qotp_decrypt(returned, PadKeys(*corr)), pad)
    merchant.coin.state = unpadded
    return ProtocolResult(bool(verdict), unpadded, transcript)


@dataclass
class BlindnessRow:
    step_label: str
    distance_a_to_mixed: float
    distance_b_to_mixed: float
    distance_between: float


@dataclass
class BlindnessReport:
    runs: int
    rows: list[BlindnessRow]

    @property
    def max_distance_between(self) -> float:
        return max((r.distance_between for r in self.rows), default=0.0)

    @property
    def max_distance_to_mixed(self) -> float:
        return max((max(r.distance_a_to_mixed, r.distance_b_to_mixed) for r in self.rows), default=0.0)


def _averaged_views(scheme: CoinScheme, run_seed: int) -> dict[str, DensityMatrix]:
    n = scheme.n
    pads = list(all_pads(n))
    acc: dict[str, np.ndarray] = {}
    bank = Bank(scheme)
    for pad in pads:
        coin = Coin(scheme.psi.copy(), provenance="blindness-probe")
        result = run_blind_verification(bank, Merchant(coin), Channel(), run_seed, keys=pad)
        for msg in result.transcript.quantum_messages():
            rho = state_to_density(msg.payload).entries
            acc[msg.step_label] = acc.get(msg.step_label, 0) + rho / len(pads)
    return {label: DensityMatrix(n, rho) for label, rho in acc.items()}


def blindness_check(scheme_a: CoinScheme, scheme_b: CoinScheme, runs: int, seed: int) -> BlindnessReport:
    """Exact pad-averaged view of each quantum payload, for two coin states.

    Every one of the 4^n merchant pads is enumerated, so n is limited to 3.
    Probe coins are copies of the scheme state and do not count against the
    issuance cap.
    """
    if scheme_a.n != scheme_b.n:
        raise ParameterError("schemes differ in qubit count")
    if scheme_a.n > 3:
        raise ParameterError("exact pad averaging is limited to n <= 3")
    if runs < 0:
        raise ParameterError("runs must be nonnegative")
    mixed = DensityMatrix.maximally_mixed(scheme_a.n)
    rows = []
    for r in range(runs):
        run_seed = int(seed) ^ r
        views_a = _averaged_views(scheme_a, run_seed)
        views_b = _averaged_views(scheme_b, run_seed)
        for label in views_a:
            rows.append(BlindnessRow(
                label,
                trace_distance(views_a[label], mixed),
                trace_distance(views_b[label], mixed),
                trace_distance(views_a[label], views_b[label]),
            ))
    return BlindnessReport(runs, rows)


@dataclass
class WorkloadRow:
    flow: str
    n: int
    runs: int
    bank_x_gates: int
    bank_z_gates: int
    bank_other_gates: int
    quantum_messages: int
    classical_messages: int

    @property
    def bank_total(self) -> int:
        return self.bank_x_gates + self.bank_z_gates + self.bank_other_gates


def compare_bank_workload(online: list[Transcript], blind: list[Transcript], n: int) -> list[WorkloadRow]:
    """Worst-case per-run bank gate counts and per-run message volume for each flow."""
    if len(online) != len(blind):
        raise ParameterError("workload comparison needs matched runs")
    rows = []
    for flow, ts in (("online", online), ("blind", blind)):
        if not ts:
            continue
        quantum = {len(t.quantum_messages()) for t in ts}
        classical = {len(t.messages) - len(t.quantum_messages()) for t in ts}
        rows.append(WorkloadRow(
            flow=flow, n=n, runs=len(ts),
            bank_x_gates=max(t.bank_gate_count.x_gates for t in ts),
            bank_z_gates=max(t.bank_gate_count.z_gates for t in ts),
            bank_other_gates=max(t.bank_gate_count.other_gates for t in ts),
            quantum_messages=max(quantum),
            classical_messages=max(classical),
        ))
    return rows
