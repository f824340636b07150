"""
Dense statevector engine.

Only the primitives the money schemes need: Haar sampling, H/X/Z, a
(controlled) reflection about an arbitrary state, projective single-qubit
measurement, fidelity and a parametric noise channel.

Qubit ordering: qubit 0 is the most significant bit of the amplitude index,
so for n = 2 the amplitude at index 0b10 belongs to |1>|0>.

Gates mutate the state in place and return it, which allows chaining.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ParameterError

MAX_QUBITS = 20
SEED_MAX = 2**64 - 1

NORM_TOL = 1e-9

_MAGIC = b"QMSV"
_VERSION = 1
_HEADER = struct.Struct("<4sHH")


def make_rng(seed) -> np.random.Generator:
    """Generator from an unsigned 64-bit seed, or pass a Generator through."""
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, (bool, np.bool_)) or not isinstance(seed, (int, np.integer)):
        raise ParameterError(f"seed must be an integer, got {type(seed).__name__}")
    if not 0 <= int(seed) <= SEED_MAX:
        raise ParameterError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return np.random.default_rng(int(seed))


def derive_seed(seed: int, index: int) -> int:
    """Per-trial seed ``seed XOR index``, so trials can run in any order.

    Experiments use index 0 for setup (scheme sampling) and 1, 2, ... for trials.
    """
    if isinstance(seed, np.random.Generator):
        raise ParameterError("per-trial seeds need an integer base seed")
    make_rng(seed)
    return int(seed) ^ int(index)


def _check_n(n) -> int:
    if not isinstance(n, (int, np.integer)) or isinstance(n, bool):
        raise ParameterError(f"qubit count must be an integer, got {n!r}")
    if not 1 <= n <= MAX_QUBITS:
        raise ParameterError(f"qubit count must lie in [1, {MAX_QUBITS}], got {n}")
    return int(n)


@dataclass(eq=False)
class QuantumState:
    """Normalized amplitude vector over ``n`` qubits."""

    n: int
    amplitudes: np.ndarray

    def __post_init__(self):
        self.n = _check_n(self.n)
        amps = np.asarray(self.amplitudes, dtype=np.complex128)
        if not (amps.flags.writeable and amps.flags.c_contiguous):
            amps = amps.copy()
        if amps.shape != (2**self.n,):
            raise ParameterError(
                f"expected {2**self.n} amplitudes for n={self.n}, got shape {amps.shape}"
            )
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > NORM_TOL:
            raise ParameterError(f"state is not normalized (norm^2 = {norm!r})")
        self.amplitudes = amps

    @classmethod
    def basis(cls, n: int, index: int = 0) -> "QuantumState":
        n = _check_n(n)
        if not 0 <= index < 2**n:
            raise ParameterError(f"basis index {index} out of range for n={n}")
        amps = np.zeros(2**n, dtype=np.complex128)
        amps[index] = 1.0
        return cls(n, amps)

    @classmethod
    def from_vector(cls, vector, normalize: bool = False) -> "QuantumState":
        """Wrap an amplitude vector. Renormalization happens only on request."""
        vec = np.array(vector, dtype=np.complex128)
        if vec.ndim != 1 or vec.size < 2 or vec.size & (vec.size - 1):
            raise ParameterError("amplitude vector length must be a power of two >= 2")
        if normalize:
            norm = np.linalg.norm(vec)
            if norm == 0:
                raise ParameterError("cannot normalize the zero vector")
            vec = vec / norm
        return cls(int(vec.size).bit_length() - 1, vec)

    def copy(self) -> "QuantumState":
        return QuantumState(self.n, self.amplitudes.copy())

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def renormalize(self) -> "QuantumState":
        self.amplitudes /= np.linalg.norm(self.amplitudes)
        return self

    def tensor(self, other: "QuantumState") -> "QuantumState":
        """``self`` on the leading (more significant) qubits, ``other`` after."""
        return QuantumState(self.n + other.n, np.outer(self.amplitudes, other.amplitudes).ravel())

    def to_bytes(self) -> bytes:
        body = np.empty(2 * self.amplitudes.size, dtype="<f8")
        body[0::2] = self.amplitudes.real
        body[1::2] = self.amplitudes.imag
        return _HEADER.pack(_MAGIC, _VERSION, self.n) + body.tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "QuantumState":
        state, rest = read_state(data)
        if rest:
            raise ParameterError(f"{len(rest)} trailing bytes after state payload")
        return state

    def __repr__(self):
        return f"QuantumState(n={self.n})"


def read_state(data: bytes) -> tuple[QuantumState, bytes]:
    """Parse one serialized state from the head of ``data``; return it and the remainder."""
    if len(data) < _HEADER.size:
        raise ParameterError("truncated state header")
    magic, version, n = _HEADER.unpack_from(data)
    if magic != _MAGIC:
        raise ParameterError(f"bad magic bytes {magic!r}")
    if version != _VERSION:
        raise ParameterError(f"unsupported state format version {version}")
    n = _check_n(n)
    size = 2 ** (n + 1) * 8
    end = _HEADER.size + size
    if len(data) < end:
        raise ParameterError("truncated state payload")
    body = np.frombuffer(data, dtype="<f8", count=2 ** (n + 1), offset=_HEADER.size)
    return QuantumState(n, body[0::2] + 1j * body[1::2]), data[end:]


@dataclass(eq=False)
class DensityMatrix:
    n: int
    entries: np.ndarray

    def __post_init__(self):
        self.n = _check_n(self.n)
        rho = np.asarray(self.entries, dtype=np.complex128)
        dim = 2**self.n
        if rho.shape != (dim, dim):
            raise ParameterError(f"expected a {dim}x{dim} matrix, got {rho.shape}")
        if not np.allclose(rho, rho.conj().T, atol=NORM_TOL, rtol=0):
            raise ParameterError("density matrix is not Hermitian")
        if abs(np.trace(rho).real - 1.0) > NORM_TOL:
            raise ParameterError("density matrix trace differs from 1")
        if np.linalg.eigvalsh(rho).min() < -NORM_TOL:
            raise ParameterError("density matrix has a negative eigenvalue")
        self.entries = rho

    @classmethod
    def maximally_mixed(cls, n: int) -> "DensityMatrix":
        return cls(n, np.eye(2**n, dtype=np.complex128) / 2**n)


def haar_random_state(n: int, seed) -> QuantumState:
    """Haar-distributed pure state: i.i.d. complex Gaussians, normalized.

    ``n`` is capped at ``MAX_QUBITS`` (20).
    """
    n = _check_n(n)
    rng = make_rng(seed)
    vec = rng.standard_normal(2**n) + 1j * rng.standard_normal(2**n)
    return QuantumState(n, vec / np.linalg.norm(vec))


def fidelity(a: QuantumState, b: QuantumState) -> float:
    """|<a|b>|^2, clipped into [0, 1] against rounding."""
    if a.n != b.n:
        raise ParameterError(f"dimension mismatch: {a.n} vs {b.n} qubits")
    return float(min(1.0, abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2))


def overlap(psi: QuantumState, rho: DensityMatrix) -> float:
    """<psi|rho|psi>."""
    if psi.n != rho.n:
        raise ParameterError(f"dimension mismatch: {psi.n} vs {rho.n} qubits")
    v = psi.amplitudes
    return float(min(1.0, max(0.0, np.vdot(v, rho.entries @ v).real)))


def _check_qubit(state: QuantumState, qubit) -> int:
    if not isinstance(qubit, (int, np.integer)) or not 0 <= qubit < state.n:
        raise ParameterError(f"qubit index {qubit!r} out of range for n={state.n}")
    return int(qubit)


def _split(state: QuantumState, qubit: int) -> np.ndarray:
    # view of shape (high, 2, low) with the indexed qubit on axis 1
    return state.amplitudes.reshape(2**qubit, 2, 2 ** (state.n - qubit - 1))


_INV_SQRT2 = 1 / np.sqrt(2)


def apply_hadamard(state: QuantumState, qubit: int) -> QuantumState:
    q = _check_qubit(state, qubit)
    view = _split(state, q)
    zero = view[:, 0, :].copy()
    one = view[:, 1, :]
    view[:, 0, :] = (zero + one) * _INV_SQRT2
    view[:, 1, :] = (zero - one) * _INV_SQRT2
    return state


def apply_pauli(state: QuantumState, qubit: int, which: str) -> QuantumState:
    q = _check_qubit(state, qubit)
    view = _split(state, q)
    if which == "X":
        view[:, [0, 1], :] = view[:, [1, 0], :]
    elif which == "Z":
        view[:, 1, :] *= -1
    else:
        raise ParameterError(f"unsupported Pauli {which!r}; expected 'X' or 'Z'")
    return state


def apply_controlled_reflection(
    state: QuantumState,
    control: int | None,
    targets: Sequence[int] | range,
    psi,
) -> QuantumState:
    """Apply |0><0|_c (x) I + |1><1|_c (x) (I - 2|psi><psi|) to ``state``.

    ``control=None`` applies the bare reflection. ``psi`` may be a
    QuantumState or a raw normalized vector. The full operator is never
    built: the control=1 block gets a rank-one update.
    """
    vec = psi.amplitudes if isinstance(psi, QuantumState) else np.asarray(psi, dtype=np.complex128)
    targets = [_check_qubit(state, t) for t in targets]
    k = len(targets)
    if vec.shape != (2**k,):
        raise ParameterError(
            f"reflection state has {vec.size} amplitudes but target range spans {k} qubits"
        )
    if len(set(targets)) != k:
        raise ParameterError("target qubits repeat")
    lead = list(targets)
    if control is not None:
        control = _check_qubit(state, control)
        if control in targets:
            raise ParameterError("control qubit lies inside the target range")
        lead = [control] + lead
    n = state.n
    rest = [q for q in range(n) if q not in lead]
    perm = lead + rest
    identity_order = perm == list(range(n))

    work = state.amplitudes.reshape((2,) * n).transpose(perm)
    if not identity_order:
        work = np.ascontiguousarray(work)
    if control is None:
        block = work.reshape(2**k, -1)
    else:
        block = work.reshape(2, 2**k, -1)[1]
    block -= 2.0 * np.outer(vec, vec.conj() @ block)
    if not identity_order:
        state.amplitudes[:] = work.transpose(np.argsort(perm)).reshape(-1)
    return state


def measure_qubit(state: QuantumState, qubit: int, seed) -> tuple[int, QuantumState]:
    """Born-rule measurement in the computational basis; collapses in place."""
    q = _check_qubit(state, qubit)
    rng = make_rng(seed)
    view = _split(state, q)
    p1 = float(np.vdot(view[:, 1, :], view[:, 1, :]).real)
    bit = int(rng.random() < p1)
    view[:, 1 - bit, :] = 0.0
    state.amplitudes /= np.linalg.norm(state.amplitudes)
    return bit, state


def probability_one(state: QuantumState, qubit: int) -> float:
    view = _split(state, _check_qubit(state, qubit))
    return float(np.vdot(view[:, 1, :], view[:, 1, :]).real)


def perturb(state: QuantumState, epsilon: float, seed) -> QuantumState:
    """Return (psi + eps*eta)/||psi + eps*eta|| with eta Haar-random; input untouched."""
    if not 0.0 <= epsilon <= 1.0:
        raise ParameterError(f"epsilon must lie in [0, 1], got {epsilon}")
    if epsilon == 0:
        return state.copy()
    eta = haar_random_state(state.n, seed)
    vec = state.amplitudes + epsilon * eta.amplitudes
    return QuantumState(state.n, vec / np.linalg.norm(vec))


def state_to_density(state: QuantumState) -> DensityMatrix:
    v = state.amplitudes
    return DensityMatrix(state.n, np.outer(v, v.conj()))


def mix(states: Iterable[tuple[float, QuantumState]]) -> DensityMatrix:
    """Convex mixture sum_i w_i |psi_i><psi_i|."""
    pairs = list(states)
    if not pairs:
        raise ParameterError("mixture needs at least one state")
    weights = np.array([w for w, _ in pairs], dtype=float)
    if (weights < 0).any() or abs(weights.sum() - 1.0) > NORM_TOL:
        raise ParameterError("mixture weights must be nonnegative and sum to 1")
    n = pairs[0][1].n
    if any(s.n != n for _, s in pairs):
        raise ParameterError("mixture states have different qubit counts")
    vecs = np.stack([s.amplitudes for _, s in pairs])
    rho = (vecs.T * weights) @ vecs.conj()
    return DensityMatrix(n, rho)


def trace_distance(a: DensityMatrix, b: DensityMatrix) -> float:
    """Half the trace norm of a - b."""
    if a.n != b.n:
        raise ParameterError(f"dimension mismatch: {a.n} vs {b.n} qubits")
    return float(0.5 * np.abs(np.linalg.eigvalsh(a.entries - b.entries)).sum())
