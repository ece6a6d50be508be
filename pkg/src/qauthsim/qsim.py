"""Exact simulation of the small qubit registers the protocol touches.

Every quantum object in a session is a register of one to eight qubits held
as a dense vector of complex amplitudes.  A detection slot is a single
qubit, a relayed key slot is at most five, so the arithmetic stays plain
Python complex math; there is no need for an array library at this size.

Index convention: qubit 0 is the leftmost tensor factor, so basis index
``i`` assigns qubit ``q`` the bit ``(i >> (n - 1 - q)) & 1``.  Pair-basis
labels are two bits, kind and phase; composing two labels XORs the bits,
which makes the four labels a Klein four-group with PHI_PLUS as identity.

Alongside the sampling simulator there is :func:`swap_enumerate`, a
non-sampling oracle for the relay step.  It works on integer-scaled
amplitudes (every state here is an integer vector times a power of
1/sqrt(2)), so its probabilities and conditional distributions are exact
:class:`fractions.Fraction` values, suitable for exact comparisons.
"""

from __future__ import annotations

import hashlib
import math
import random
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Sequence

NORM_TOL = 1e-9
_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_MASK64 = (1 << 64) - 1


class MeasBasis(Enum):
    RECTILINEAR = "rectilinear"
    DIAGONAL = "diagonal"


class BellKind(Enum):
    PHI = 0
    PSI = 1


class BellPhase(Enum):
    PLUS = 0
    MINUS = 1


class BellLabel(Enum):
    """Two-bit label of a maximally entangled pair state: (kind, phase)."""

    PHI_PLUS = (0, 0)
    PHI_MINUS = (0, 1)
    PSI_PLUS = (1, 0)
    PSI_MINUS = (1, 1)

    @property
    def kind(self) -> BellKind:
        return BellKind(self.value[0])

    @property
    def phase(self) -> BellPhase:
        return BellPhase(self.value[1])

    @property
    def kind_bit(self) -> int:
        return self.value[0]

    @property
    def phase_bit(self) -> int:
        return self.value[1]

    @classmethod
    def from_bits(cls, kind_bit: int, phase_bit: int) -> "BellLabel":
        return cls((kind_bit & 1, phase_bit & 1))

    def short(self) -> str:
        return ("phi" if self.value[0] == 0 else "psi") + ("+" if self.value[1] == 0 else "-")

    @classmethod
    def from_short(cls, text: str) -> "BellLabel":
        try:
            return _SHORT_TO_LABEL[text.strip().lower()]
        except KeyError:
            raise ValueError(f"unknown pair-state label {text!r}") from None


BELL_ORDER: tuple[BellLabel, ...] = (
    BellLabel.PHI_PLUS,
    BellLabel.PHI_MINUS,
    BellLabel.PSI_PLUS,
    BellLabel.PSI_MINUS,
)

_SHORT_TO_LABEL = {label.short(): label for label in BELL_ORDER}


def bell_compose(a: BellLabel, b: BellLabel) -> BellLabel:
    """Componentwise XOR of the two-bit labels.

    This is the group law of the pair-state algebra: composing the created
    pair's label with the joint-measurement outcome gives the label of the
    far pair, up to global phase (checked against :func:`swap_enumerate`).
    """
    return BellLabel.from_bits(a.kind_bit ^ b.kind_bit, a.phase_bit ^ b.phase_bit)


class RandomSource:
    """Deterministic random stream addressed by (master_seed, stream_id).

    The pair is hashed into the generator seed, so distinct stream ids give
    unrelated sequences and a given pair replays the same draws on any
    platform.  Only ``getrandbits``/``random`` are consumed underneath;
    composite draws (sampling without replacement, bounded integers) are
    implemented here so their draw pattern is pinned by this module rather
    than by stdlib internals.
    """

    __slots__ = ("master_seed", "stream_id", "_rng")

    def __init__(self, master_seed: int, stream_id: int = 0) -> None:
        self.master_seed = master_seed & _MASK64
        self.stream_id = stream_id & _MASK64
        digest = hashlib.sha256(b"qauthsim/%d/%d" % (self.master_seed, self.stream_id)).digest()
        self._rng = random.Random(int.from_bytes(digest, "big"))

    def bit(self) -> int:
        return self._rng.getrandbits(1)

    def bits(self, count: int) -> tuple[int, ...]:
        g = self._rng.getrandbits
        return tuple(g(1) for _ in range(count))

    def bit_block(self, width: int) -> int:
        """``width`` random bits as one integer (bulk draw)."""
        return self._rng.getrandbits(width)

    def uniform(self) -> float:
        return self._rng.random()

    def randbelow(self, bound: int) -> int:
        if bound <= 0:
            raise ValueError("bound must be positive")
        if bound == 1:
            return 0
        width = (bound - 1).bit_length()
        g = self._rng.getrandbits
        while True:
            value = g(width)
            if value < bound:
                return value

    def choice(self, seq: Sequence):
        return seq[self.randbelow(len(seq))]

    def sample_positions(self, universe: int, count: int) -> tuple[int, ...]:
        """``count`` distinct positions drawn from range(universe), sorted."""
        if not 0 <= count <= universe:
            raise ValueError("cannot sample %d of %d positions" % (count, universe))
        pool = list(range(universe))
        for i in range(count):
            j = i + self.randbelow(universe - i)
            pool[i], pool[j] = pool[j], pool[i]
        return tuple(sorted(pool[:count]))

    def key_bytes(self, count: int) -> bytes:
        g = self._rng.getrandbits
        return bytes(g(8) for _ in range(count))

    def bell_label(self) -> BellLabel:
        return BellLabel.from_bits(self.bit(), self.bit())

    def basis(self) -> MeasBasis:
        return MeasBasis.DIAGONAL if self.bit() else MeasBasis.RECTILINEAR


class StateRegister:
    """Dense pure-state vector over 1..8 qubits; mutated in place by measurement."""

    __slots__ = ("num_qubits", "amplitudes")

    def __init__(self, amplitudes: Sequence[complex]) -> None:
        size = len(amplitudes)
        num = size.bit_length() - 1
        if size != (1 << num) or not 1 <= num <= 8:
            raise ValueError("register must hold 1..8 qubits (2..256 amplitudes)")
        amps = [complex(a) for a in amplitudes]
        norm = sum(a.real * a.real + a.imag * a.imag for a in amps)
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"state vector norm {norm!r} is not 1")
        self.num_qubits = num
        self.amplitudes = amps

    def norm_error(self) -> float:
        norm = sum(a.real * a.real + a.imag * a.imag for a in self.amplitudes)
        return abs(norm - 1.0)

    def extend_front(self, front: "StateRegister") -> None:
        """Tensor ``front``'s qubits ahead of this register's, in place.

        In place so every :class:`QubitRef` into this register survives; the
        refs are tail-anchored, so their indices shift automatically.
        """
        if self.num_qubits + front.num_qubits > 8:
            raise ValueError("register would exceed 8 qubits")
        self.amplitudes = [fa * sa for fa in front.amplitudes for sa in self.amplitudes]
        self.num_qubits += front.num_qubits

    def __repr__(self) -> str:
        return f"StateRegister(num_qubits={self.num_qubits})"


class QubitRef:
    """Handle on one qubit of a register, stable across extend_front.

    The index is stored as distance from the register's last qubit: new
    qubits are only ever grafted at the front, so the tail distance of an
    existing qubit never changes.
    """

    __slots__ = ("register", "_tail")

    def __init__(self, register: StateRegister, index: int) -> None:
        if not 0 <= index < register.num_qubits:
            raise ValueError("qubit index out of range")
        self.register = register
        self._tail = register.num_qubits - 1 - index

    @property
    def index(self) -> int:
        return self.register.num_qubits - 1 - self._tail

    def measure(self, basis: MeasBasis, rand: RandomSource) -> int:
        return measure_in_basis(self.register, self.index, basis, rand)

    def __repr__(self) -> str:
        return f"QubitRef(index={self.index} of {self.register!r})"


_BELL_AMPS: dict[BellLabel, tuple[float, float, float, float]] = {
    BellLabel.PHI_PLUS: (_INV_SQRT2, 0.0, 0.0, _INV_SQRT2),
    BellLabel.PHI_MINUS: (_INV_SQRT2, 0.0, 0.0, -_INV_SQRT2),
    BellLabel.PSI_PLUS: (0.0, _INV_SQRT2, _INV_SQRT2, 0.0),
    BellLabel.PSI_MINUS: (0.0, _INV_SQRT2, -_INV_SQRT2, 0.0),
}


def prepare_bell(label: BellLabel) -> StateRegister:
    return StateRegister(_BELL_AMPS[label])


def prepare_ghz() -> StateRegister:
    amps = [0.0] * 8
    amps[0] = _INV_SQRT2
    amps[7] = _INV_SQRT2
    return StateRegister(amps)


def prepare_polarized(value: int, basis: MeasBasis) -> StateRegister:
    """Single qubit carrying ``value`` in ``basis``."""
    if value not in (0, 1):
        raise ValueError("value must be a bit")
    if basis is MeasBasis.RECTILINEAR:
        return StateRegister([1.0, 0.0] if value == 0 else [0.0, 1.0])
    sign = 1.0 if value == 0 else -1.0
    return StateRegister([_INV_SQRT2, sign * _INV_SQRT2])


def tensor(a: StateRegister, b: StateRegister) -> StateRegister:
    """New register with a's qubits indexed first."""
    if a.num_qubits + b.num_qubits > 8:
        raise ValueError("register would exceed 8 qubits")
    return StateRegister([x * y for x in a.amplitudes for y in b.amplitudes])


def _renormalize(amps: list[complex]) -> None:
    norm = sum(a.real * a.real + a.imag * a.imag for a in amps)
    if norm <= 0.0:
        raise ArithmeticError("collapse produced a null vector")
    inv = 1.0 / math.sqrt(norm)
    for i, a in enumerate(amps):
        amps[i] = a * inv


def measure_in_basis(register: StateRegister, qubit: int, basis: MeasBasis,
                     rand: RandomSource) -> int:
    """Born-rule measurement of one qubit; collapses the register in place."""
    n = register.num_qubits
    if not 0 <= qubit < n:
        raise ValueError("qubit index out of range")
    amps = register.amplitudes
    mask = 1 << (n - 1 - qubit)
    size = 1 << n

    if basis is MeasBasis.RECTILINEAR:
        p_zero = 0.0
        for i in range(size):
            if not i & mask:
                a = amps[i]
                p_zero += a.real * a.real + a.imag * a.imag
        outcome = 0 if rand.uniform() < p_zero else 1
        keep_on_set = outcome == 1
        for i in range(size):
            if bool(i & mask) != keep_on_set:
                amps[i] = 0.0
        _renormalize(amps)
        return outcome

    if basis is not MeasBasis.DIAGONAL:
        raise ValueError(f"unknown basis {basis!r}")

    # Pairs (i0, i1) differ only in the measured qubit.  The overlap with
    # the +/- eigenstate of pair (a0, a1) is (a0 +/- a1)/sqrt(2).
    p_zero = 0.0
    for base in range(0, size, mask << 1):
        for off in range(mask):
            i0 = base + off
            s = amps[i0] + amps[i0 + mask]
            p_zero += s.real * s.real + s.imag * s.imag
    p_zero *= 0.5
    outcome = 0 if rand.uniform() < p_zero else 1
    sign = 1.0 if outcome == 0 else -1.0
    for base in range(0, size, mask << 1):
        for off in range(mask):
            i0 = base + off
            i1 = i0 + mask
            half = 0.5 * (amps[i0] + sign * amps[i1])
            amps[i0] = half
            amps[i1] = sign * half
    _renormalize(amps)
    return outcome


def basis_distribution(register: StateRegister, qubit: int,
                       basis: MeasBasis) -> tuple[float, float]:
    """Born probabilities (p0, p1) for one qubit, without collapsing."""
    n = register.num_qubits
    if not 0 <= qubit < n:
        raise ValueError("qubit index out of range")
    amps = register.amplitudes
    mask = 1 << (n - 1 - qubit)
    if basis is MeasBasis.RECTILINEAR:
        p_one = sum(a.real * a.real + a.imag * a.imag
                    for i, a in enumerate(amps) if i & mask)
        return (1.0 - p_one, p_one)
    p_zero = 0.0
    for base in range(0, 1 << n, mask << 1):
        for off in range(mask):
            i0 = base + off
            s = amps[i0] + amps[i0 + mask]
            p_zero += s.real * s.real + s.imag * s.imag
    p_zero *= 0.5
    return (p_zero, 1.0 - p_zero)


def measure_bell(register: StateRegister, first: int, second: int,
                 rand: RandomSource) -> BellLabel:
    """Projective pair-basis measurement of two qubits; collapses in place.

    Outcome order for the sampling draw is BELL_ORDER.  The quad of indices
    sharing all other bits carries the four components (b_first, b_second);
    the four projection overlaps are (a00 +/- a11)/sqrt2 for the phi pair
    and (a01 +/- a10)/sqrt2 for the psi pair.
    """
    n = register.num_qubits
    if first == second:
        raise ValueError("pair measurement needs two distinct qubits")
    if not (0 <= first < n and 0 <= second < n):
        raise ValueError("qubit index out of range")
    amps = register.amplitudes
    m1 = 1 << (n - 1 - first)
    m2 = 1 << (n - 1 - second)
    size = 1 << n

    weights = [0.0, 0.0, 0.0, 0.0]
    for i in range(size):
        if i & m1 or i & m2:
            continue
        a00 = amps[i]
        a01 = amps[i | m2]
        a10 = amps[i | m1]
        a11 = amps[i | m1 | m2]
        sp = a00 + a11
        dp = a00 - a11
        sq = a01 + a10
        dq = a01 - a10
        weights[0] += sp.real * sp.real + sp.imag * sp.imag
        weights[1] += dp.real * dp.real + dp.imag * dp.imag
        weights[2] += sq.real * sq.real + sq.imag * sq.imag
        weights[3] += dq.real * dq.real + dq.imag * dq.imag
    # each weight is 2x the outcome probability; scale cancels below
    total = weights[0] + weights[1] + weights[2] + weights[3]
    target = rand.uniform() * total
    acc = 0.0
    idx = 3
    for j in range(4):
        acc += weights[j]
        if target < acc:
            idx = j
            break
    label = BELL_ORDER[idx]

    kind_bit, phase_bit = label.value
    sign = 1.0 if phase_bit == 0 else -1.0
    for i in range(size):
        if i & m1 or i & m2:
            continue
        if kind_bit == 0:
            overlap = 0.5 * (amps[i] + sign * amps[i | m1 | m2])
            amps[i] = overlap
            amps[i | m1 | m2] = sign * overlap
            amps[i | m2] = 0.0
            amps[i | m1] = 0.0
        else:
            overlap = 0.5 * (amps[i | m2] + sign * amps[i | m1])
            amps[i | m2] = overlap
            amps[i | m1] = sign * overlap
            amps[i] = 0.0
            amps[i | m1 | m2] = 0.0
    _renormalize(amps)
    return label


def states_equal_up_to_phase(a: StateRegister, b: StateRegister,
                             tol: float = NORM_TOL) -> bool:
    if a.num_qubits != b.num_qubits:
        return False
    ref = max(range(len(a.amplitudes)), key=lambda i: abs(a.amplitudes[i]))
    if abs(b.amplitudes[ref]) < tol:
        return False
    phase = b.amplitudes[ref] / a.amplitudes[ref]
    mag = abs(phase)
    if abs(mag - 1.0) > 1e-6:
        return False
    phase /= mag
    return all(abs(phase * x - y) <= tol * 10
               for x, y in zip(a.amplitudes, b.amplitudes))


# ---------------------------------------------------------------------------
# Exact enumeration oracle for the relay step.
#
# All states involved are integer vectors times (1/sqrt2)^scale, so the whole
# table is computed with integer arithmetic and reported as Fractions.


class SourceKind(Enum):
    ENTANGLED_PHI_PLUS = "entangled_phi_plus"
    PRODUCT = "product"
    GHZ = "ghz"


_BELL_INTS: dict[BellLabel, tuple[int, int, int, int]] = {
    BellLabel.PHI_PLUS: (1, 0, 0, 1),
    BellLabel.PHI_MINUS: (1, 0, 0, -1),
    BellLabel.PSI_PLUS: (0, 1, 1, 0),
    BellLabel.PSI_MINUS: (0, 1, -1, 0),
}


@dataclass(frozen=True)
class SwapOutcome:
    """One joint-measurement outcome with its exact conditional behavior.

    ``joint`` maps computational bit patterns of the untouched qubits, in
    order (kept, far[, server]), to conditional probabilities.  Empty when
    the outcome itself has probability zero.
    """

    outcome: BellLabel
    probability: Fraction
    joint: dict[tuple[int, ...], Fraction]
    residual_pair: BellLabel | None

    def marginal(self, axis: int) -> dict[int, Fraction]:
        dist = {0: Fraction(0), 1: Fraction(0)}
        for bits, pr in self.joint.items():
            dist[bits[axis]] += pr
        return dist

    def kept_dist(self) -> dict[int, Fraction]:
        return self.marginal(0)

    def far_dist(self) -> dict[int, Fraction]:
        return self.marginal(1)

    def server_dist(self) -> dict[int, Fraction]:
        return self.marginal(2)

    def kept_value(self) -> int | None:
        """The kept qubit's value when deterministic, else None."""
        dist = self.kept_dist()
        for b in (0, 1):
            if dist[b] == 1:
                return b
        return None


@dataclass(frozen=True)
class SwapTable:
    created: BellLabel
    source: SourceKind
    product_bit: int | None
    outcomes: tuple[SwapOutcome, ...]
    unmeasured_far: dict[int, Fraction]
    unmeasured_server: dict[int, Fraction] | None

    def outcome(self, label: BellLabel) -> SwapOutcome:
        for out in self.outcomes:
            if out.outcome is label:
                return out
        raise KeyError(label)

    def far_mixture(self) -> dict[int, Fraction]:
        """Far qubit's marginal after the joint measurement, averaged over outcomes."""
        mix = {0: Fraction(0), 1: Fraction(0)}
        for out in self.outcomes:
            if out.probability:
                for b, pr in out.far_dist().items():
                    mix[b] += out.probability * pr
        return mix

    def server_mixture(self) -> dict[int, Fraction]:
        mix = {0: Fraction(0), 1: Fraction(0)}
        for out in self.outcomes:
            if out.probability:
                for b, pr in out.server_dist().items():
                    mix[b] += out.probability * pr
        return mix


def _match_pair_pattern(vec: Sequence[int]) -> BellLabel | None:
    for label in BELL_ORDER:
        pat = _BELL_INTS[label]
        j0 = next(j for j in range(4) if pat[j])
        if vec[j0] == 0:
            continue
        if all(vec[j] * pat[j0] == vec[j0] * pat[j] for j in range(4)):
            return label
    return None


def _int_marginal(psi: Sequence[int], n: int, qubit: int) -> dict[int, Fraction]:
    mask = 1 << (n - 1 - qubit)
    one = sum(a * a for i, a in enumerate(psi) if i & mask)
    total = sum(a * a for a in psi)
    return {0: Fraction(total - one, total), 1: Fraction(one, total)}


def swap_enumerate(created: BellLabel, source: SourceKind,
                   product_bit: int = 0) -> SwapTable:
    """Exhaustive table for one relay step, by exact state-vector arithmetic.

    Qubit order is (kept, sacrificed) for the created pair followed by the
    source's qubits (traveler-to-initiator, far[, server-retained]).  The
    joint measurement hits qubits 1 and 2.  No sampling: probabilities,
    conditional joint distributions over the untouched qubits, and the far
    pair's label (entangled source only) all come out exact.
    """
    created_ints = _BELL_INTS[created]
    if source is SourceKind.ENTANGLED_PHI_PLUS:
        src, src_scale, bit = (1, 0, 0, 1), 1, None
    elif source is SourceKind.PRODUCT:
        if product_bit not in (0, 1):
            raise ValueError("product_bit must be a bit")
        vec = [0, 0, 0, 0]
        vec[product_bit * 3] = 1  # |xx> sits at index 0 or 3
        src, src_scale, bit = tuple(vec), 0, product_bit
    elif source is SourceKind.GHZ:
        vec = [0] * 8
        vec[0] = 1
        vec[7] = 1
        src, src_scale, bit = tuple(vec), 1, None
    else:
        raise ValueError(f"unknown source {source!r}")

    psi = [b * s for b in created_ints for s in src]
    scale = 1 + src_scale
    n = len(psi).bit_length() - 1
    rest_axes = [0] + list(range(3, n))

    outcomes = []
    total_prob = Fraction(0)
    for label in BELL_ORDER:
        pattern = _BELL_INTS[label]
        coeff: dict[tuple[int, ...], int] = {}
        for i, amp in enumerate(psi):
            if amp == 0:
                continue
            b1 = (i >> (n - 2)) & 1
            b2 = (i >> (n - 3)) & 1
            p = pattern[(b1 << 1) | b2]
            if p == 0:
                continue
            bits = tuple((i >> (n - 1 - q)) & 1 for q in rest_axes)
            coeff[bits] = coeff.get(bits, 0) + p * amp
        weight = sum(c * c for c in coeff.values())
        prob = Fraction(weight, 1 << (scale + 1))
        joint = {bits: Fraction(c * c, weight)
                 for bits, c in sorted(coeff.items()) if c}
        residual = None
        if n == 4 and weight:
            vec4 = [coeff.get((b0, b1), 0) for b0 in (0, 1) for b1 in (0, 1)]
            residual = _match_pair_pattern(vec4)
        outcomes.append(SwapOutcome(label, prob, joint, residual))
        total_prob += prob
    if total_prob != 1:
        raise AssertionError("outcome probabilities do not sum to 1")

    unmeasured_far = _int_marginal(psi, n, 3)
    unmeasured_server = _int_marginal(psi, n, 4) if n == 5 else None
    return SwapTable(created, source, bit, tuple(outcomes),
                     unmeasured_far, unmeasured_server)
